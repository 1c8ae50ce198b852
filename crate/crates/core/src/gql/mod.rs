//! Embedded chain query language: `MATCH (a {name: "X"}) <-[rel]- (b) RETURN b`.
//!
//! ```text
//! query    := "MATCH" pattern "RETURN" var
//! pattern  := node (edge node)+
//! node     := "(" var [ "{" "name:" STRING "}" ] ")"
//! edge     := "-[" IDENT "]->" | "<-[" IDENT "]-"
//! var      := IDENT
//! IDENT    := [A-Za-z_][A-Za-z0-9_]*
//! STRING   := double-quoted, backslash escapes for `"` and `\`
//! ```

mod ast;
mod compile;
mod exec;
mod parser;

use thiserror::Error;

pub use ast::{Direction, NodePattern, PathStep, QueryAst};
pub use compile::{compile_schema, CompileError};
pub use exec::{execute, BindingRow, QueryResult};
pub use parser::parse_query;

#[derive(Debug, Clone, Error, PartialEq, Eq)]
pub enum QueryError {
    #[error("lexical error at {position}: {message}")]
    Lexical { message: String, position: usize },
    #[error("syntax error at {position}: expected {expected}, found {found}")]
    Syntax { expected: String, found: String, position: usize },
    #[error("unbound variable `{variable}` at {position}")]
    UnboundVariable { variable: String, position: usize },
    #[error("pattern at {position} has no edges")]
    EmptyPattern { position: usize },
    #[error("step {step} does not start where the previous step ended")]
    BrokenChain { step: usize },
    #[error("variable `{variable}` bound to two different names (at {position})")]
    ConflictingBinding { variable: String, position: usize },
    #[error("`{name}` is not a valid identifier")]
    InvalidIdentifier { name: String },
    #[error("expected exactly one returned variable, found {found}")]
    ReturnArity { found: usize },
}
