//! Tokenizer, parser, pragma handling and attribute checks.

pub mod ast;
pub mod check;
pub mod lexer;
pub mod parser;
pub mod pragma;
pub mod pretty;

pub use ast::SourceUnit;
pub use check::frontend_check;
pub use lexer::{tokenize, LexError, Token, TokenKind};
pub use parser::{parse, ParseError, Parsed};
pub use pragma::{apply_pragma_defaults, PragmaStack};
pub use pretty::pretty_print;

use crate::diag::{Code, Diagnostic, Span};

/// Tokenizes and parses `source`, folding lexer and parser failures into
/// diagnostics.
pub fn parse_source(source: &str) -> Result<Parsed, Vec<Diagnostic>> {
    let tokens = tokenize(source).map_err(|e| {
        vec![Diagnostic::error(
            Code::E_LEX,
            Span::new(e.line, e.column),
            e.message,
        )]
    })?;
    parse(&tokens).map_err(|e| vec![e.to_diagnostic()])
}
