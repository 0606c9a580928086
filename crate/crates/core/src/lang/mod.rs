//! Surface language: lexing/parsing, macro expansion, and canonical printing.

pub mod ast;
pub mod macros;
pub mod parser;
pub mod unparse;

pub use ast::*;
pub use macros::{expand_macros, parse_define, ExpandError, MacroBindings, MacroValue};
pub use parser::{parse_program, ParseError};
pub use unparse::unparse_program;
