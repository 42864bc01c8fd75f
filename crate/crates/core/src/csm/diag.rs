use std::fmt;

use serde::{Deserialize, Serialize};

use super::ast::Span;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Severity {
    Warning,
    Error,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub enum DiagCode {
    Syntax,
    UnknownState,
    DuplicateState,
    MissingInitial,
    DuplicateMachine,
    DuplicateVariable,
    UnreachableState,
    UnknownTrigger,
    UndeclaredVariable,
    PayloadWithoutEvent,
}

impl DiagCode {
    pub fn as_str(self) -> &'static str {
        match self {
            DiagCode::Syntax => "syntax",
            DiagCode::UnknownState => "unknown-state",
            DiagCode::DuplicateState => "duplicate-state",
            DiagCode::MissingInitial => "missing-initial",
            DiagCode::DuplicateMachine => "duplicate-machine",
            DiagCode::DuplicateVariable => "duplicate-variable",
            DiagCode::UnreachableState => "unreachable-state",
            DiagCode::UnknownTrigger => "unknown-trigger",
            DiagCode::UndeclaredVariable => "undeclared-variable",
            DiagCode::PayloadWithoutEvent => "payload-without-event",
        }
    }
}

impl fmt::Display for DiagCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Diagnostic {
    pub code: DiagCode,
    pub severity: Severity,
    pub line: u32,
    pub col: u32,
    pub message: String,
}

impl Diagnostic {
    pub fn error(code: DiagCode, span: Span, message: impl Into<String>) -> Self {
        Self {
            code,
            severity: Severity::Error,
            line: span.line,
            col: span.col,
            message: message.into(),
        }
    }

    pub fn warning(code: DiagCode, span: Span, message: impl Into<String>) -> Self {
        Self {
            severity: Severity::Warning,
            ..Self::error(code, span, message)
        }
    }

    pub fn is_error(&self) -> bool {
        self.severity == Severity::Error
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let level = match self.severity {
            Severity::Warning => "warning",
            Severity::Error => "error",
        };
        write!(
            f,
            "{}:{}: {level}[{}]: {}",
            self.line, self.col, self.code, self.message
        )
    }
}
