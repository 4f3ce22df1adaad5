//! The workflow language: parsing, static checks and expansion into a task graph.

pub mod ast;
mod bindings;
mod check;
mod expand;
mod graph;
mod lexer;
mod parser;
mod print;

use std::fmt;

pub use ast::*;
pub use bindings::{parse_bindings, BindValue, Bindings, BindingsError};
pub use check::{check_semantics, Diagnostic, Rule};
pub use expand::{expand, ExpandError, ExpandOptions};
pub(crate) use expand::normalize;
pub use graph::{GraphError, TaskGraph, TaskNode};
pub use print::{print_expr, print_workflow};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ParseErrorKind {
    Syntax,
    UnknownType,
    DuplicateDeclaration,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("{pos}: {message}")]
pub struct ParseError {
    pub kind: ParseErrorKind,
    pub pos: Pos,
    pub message: String,
}

impl ParseError {
    pub(crate) fn new(kind: ParseErrorKind, pos: Pos, message: impl Into<String>) -> Self {
        ParseError { kind, pos, message: message.into() }
    }

    pub(crate) fn syntax(pos: Pos, message: impl Into<String>) -> Self {
        Self::new(ParseErrorKind::Syntax, pos, message)
    }
}

impl fmt::Display for ParseErrorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ParseErrorKind::Syntax => "syntax error",
            ParseErrorKind::UnknownType => "unknown type",
            ParseErrorKind::DuplicateDeclaration => "duplicate declaration",
        })
    }
}

/// Parse a workflow named `workflow`.
pub fn parse_workflow(source: &str) -> Result<WorkflowSpec, ParseError> {
    parse_workflow_named("workflow", source)
}

pub fn parse_workflow_named(name: &str, source: &str) -> Result<WorkflowSpec, ParseError> {
    parser::Parser::new(source).program(name)
}
