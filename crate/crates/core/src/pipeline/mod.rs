//! Pipeline strings: `{a,b}rrf%50 >> rerank` and friends.

mod ast;
mod lexer;
mod parser;
mod validate;

pub use ast::{unparse, PipelineAst};
pub use lexer::{tokenize, Token, TokenKind};
pub use parser::parse;
pub use validate::{validate, Plan, PlanNode, ServiceCatalog, StageRef};
