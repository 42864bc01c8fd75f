//! Concurrent state machines: the behavior language of the operation layer.

mod ast;
mod diag;
mod parse;
mod print;
mod runtime;
mod validate;

pub use ast::*;
pub use diag::{DiagCode, Diagnostic, Severity};
pub use parse::{is_keyword, parse_csm};
pub use print::{expr_to_string, print_csm};
pub use runtime::{
    evaluate, CsmError, CsmRuntime, Effect, EvalError, EventInstance, Fired, MachineInstance, Memory, Origin, Payload,
    StepResult, Value,
};
pub use validate::validate_csm;

/// Parse and validate; succeeds when no diagnostic is an error, returning the warnings.
pub fn load_csm(text: &str) -> Result<(CsmDocument, Vec<Diagnostic>), Vec<Diagnostic>> {
    let doc = parse_csm(text)?;
    let diags = validate_csm(&doc);
    if diags.iter().any(Diagnostic::is_error) {
        Err(diags)
    } else {
        Ok((doc, diags))
    }
}
