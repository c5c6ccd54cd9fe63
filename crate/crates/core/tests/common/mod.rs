#![allow(dead_code)]

pub mod fixtures;
pub mod grammar_oracle;
pub mod oracles;
