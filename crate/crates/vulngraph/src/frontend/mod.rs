//! Lexer, AST and recursive-descent parser for the supported C subset.
//!
//! The subset covers exactly what the rest of the pipeline consumes:
//! functions over `int`/`char`/`long`/`unsigned` scalars and
//! statically-sized arrays, assignments (including `+=`/`-=`), relational
//! and additive expressions, array indexing, `if`/`else`, `while`,
//! `return`, and calls to a small whitelist of library functions
//! (`malloc`, `memset`, `memcpy`, `printf`, `strcpy`). No pointers beyond
//! arrays, no structs, no casts.

mod ast;
mod parser;
mod token;

pub use ast::{AstNode, NodeType};
pub use parser::parse_function;
pub use token::{lex, Token, TokenKind};

/// Errors produced while lexing or parsing a function body.
#[derive(Debug, thiserror::Error)]
pub enum FrontendError {
    #[error("lex error at {line}:{col}: {message}")]
    Lex { line: u32, col: u32, message: String },
    #[error("parse error at {line}:{col}: {message}")]
    Parse { line: u32, col: u32, message: String },
}

impl FrontendError {
    pub(crate) fn parse(line: u32, col: u32, message: impl Into<String>) -> Self {
        FrontendError::Parse { line, col, message: message.into() }
    }
}

/// Lex and parse a single C function definition.
///
/// Convenience wrapper for [`lex`] followed by [`parse_function`].
pub fn parse_source(code: &str) -> Result<AstNode, FrontendError> {
    parse_function(&lex(code)?)
}
