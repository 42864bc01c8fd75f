pub mod csm_traces;
