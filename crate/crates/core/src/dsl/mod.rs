//! Protocol refinement language.
//!
//! A spec declares mirrored parameters, refinement rules over inbound
//! messages (optionally split into guarded branches), and bounded iterations
//! such as mission uploads. See [`parser`] for the surface syntax.

mod ast;
mod eval;
mod lexer;
pub mod parser;
mod print;
mod validate;

use std::fmt;

pub use ast::*;
pub use eval::{eval_expr, EvalError, Scope, Value};
pub use parser::parse_expr;
pub use validate::{is_telemetry_field, reads_telemetry, validate_spec, Ty, TELEMETRY_FIELDS};

/// The spec shipped with the gateway.
pub const DEFAULT_SPEC: &str = include_str!("../../../../specs/default.spec");

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Diagnostic {
    pub line: usize,
    pub col: usize,
    pub message: String,
}

impl Diagnostic {
    pub fn new(line: usize, col: usize, message: impl Into<String>) -> Self {
        Self { line, col, message: message.into() }
    }

    pub fn at(span: Span, message: impl Into<String>) -> Self {
        Self::new(span.line, span.col, message)
    }
}

impl fmt::Display for Diagnostic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}:{}: {}", self.line, self.col, self.message)
    }
}

impl std::error::Error for Diagnostic {}

/// Parses and validates a spec document.
pub fn parse_spec(text: &str) -> Result<ProtocolSpec, Vec<Diagnostic>> {
    parse_spec_with(text, std::iter::empty())
}

/// Like [`parse_spec`], overriding named constants before validation.
pub fn parse_spec_with<'a>(
    text: &str,
    defines: impl IntoIterator<Item = (&'a str, f64)>,
) -> Result<ProtocolSpec, Vec<Diagnostic>> {
    let (mut spec, mut diags) = parser::parse_document(text);
    spec.apply_defines(defines);
    diags.extend(validate_spec(&spec));
    if diags.is_empty() {
        Ok(spec)
    } else {
        diags.sort_by_key(|d| (d.line, d.col));
        Err(diags)
    }
}
