pub mod agent;
pub mod csm;
pub mod devices;
pub mod env;
pub mod geometry;
pub mod scenarios;
