//! Recursive-descent parser for pipeline strings.
//!
//! ```text
//! pipeline := stage (">>" stage)*
//! stage    := unit ("%" INT)?
//! unit     := NAME | parallel
//! parallel := NAME? "{" pipeline ("," pipeline)* "}" NAME
//! ```
//!
//! `%` binds tighter than `>>`, and `{...}name` is atomic. One token of
//! lookahead past a NAME decides between a plain service and a generator.

use super::ast::PipelineAst;
use super::lexer::{tokenize, Token, TokenKind};
use crate::error::{Error, Result};

pub fn parse(input: &str) -> Result<PipelineAst> {
    let tokens = tokenize(input)?;
    let mut parser = Parser {
        tokens: &tokens,
        pos: 0,
        end: input.len(),
        depth: 0,
    };
    let ast = parser.pipeline()?;
    if parser.pos < tokens.len() {
        return Err(parser.error(&[">>", "%", "end of input"]));
    }
    Ok(ast)
}

struct Parser<'a> {
    tokens: &'a [Token],
    pos: usize,
    end: usize,
    depth: usize,
}

impl<'a> Parser<'a> {
    fn peek(&self) -> Option<&'a TokenKind> {
        self.tokens.get(self.pos).map(|t| &t.kind)
    }

    fn peek2(&self) -> Option<&'a TokenKind> {
        self.tokens.get(self.pos + 1).map(|t| &t.kind)
    }

    fn position(&self) -> usize {
        self.tokens.get(self.pos).map_or(self.end, |t| t.position)
    }

    fn error(&self, expected: &[&str]) -> Error {
        Error::Parse {
            position: self.position(),
            expected: expected.iter().map(|s| s.to_string()).collect(),
        }
    }

    fn eat(&mut self, kind: &TokenKind) -> bool {
        if self.peek() == Some(kind) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn pipeline(&mut self) -> Result<PipelineAst> {
        let mut stages = vec![self.stage()?];
        while self.eat(&TokenKind::Pipe) {
            stages.push(self.stage()?);
        }
        Ok(if stages.len() == 1 {
            stages.pop().expect("one stage")
        } else {
            PipelineAst::Sequence(stages)
        })
    }

    fn stage(&mut self) -> Result<PipelineAst> {
        let unit = self.unit()?;
        if !self.eat(&TokenKind::Percent) {
            return Ok(unit);
        }
        let k = match self.peek() {
            Some(TokenKind::Int(digits)) => match digits.parse::<usize>() {
                Ok(k) if k >= 1 => k,
                _ => return Err(self.error(&["positive integer"])),
            },
            _ => return Err(self.error(&["positive integer"])),
        };
        self.pos += 1;
        Ok(PipelineAst::limit(unit, k))
    }

    fn unit(&mut self) -> Result<PipelineAst> {
        match (self.peek(), self.peek2()) {
            (Some(TokenKind::Name(gen)), Some(TokenKind::LBrace)) => {
                self.pos += 1;
                self.parallel(Some(gen.clone()))
            }
            (Some(TokenKind::Name(name)), _) => {
                self.pos += 1;
                Ok(PipelineAst::Service(name.clone()))
            }
            (Some(TokenKind::LBrace), _) => self.parallel(None),
            _ => Err(self.error(&["service name", "{"])),
        }
    }

    fn parallel(&mut self, generator: Option<String>) -> Result<PipelineAst> {
        // nesting is unbounded by the grammar; cap recursion so hostile input
        // cannot overflow the stack
        const MAX_DEPTH: usize = 128;
        if self.depth >= MAX_DEPTH {
            return Err(self.error(&["shallower nesting"]));
        }
        if !self.eat(&TokenKind::LBrace) {
            return Err(self.error(&["{"]));
        }
        self.depth += 1;
        let mut branches = vec![self.pipeline()?];
        loop {
            if self.eat(&TokenKind::Comma) {
                branches.push(self.pipeline()?);
            } else if self.eat(&TokenKind::RBrace) {
                break;
            } else {
                return Err(self.error(&[">>", "%", ",", "}"]));
            }
        }
        self.depth -= 1;
        let fuser = match self.peek() {
            Some(TokenKind::Name(name)) => name.clone(),
            _ => return Err(self.error(&["fusion method name"])),
        };
        self.pos += 1;
        Ok(PipelineAst::Parallel {
            generator,
            branches,
            fuser,
        })
    }
}
