use std::fmt;

use crate::error::{Error, Result};
use crate::model::is_name_char;

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TokenKind {
    Name(String),
    /// Digits directly after `%`. Kept as text so overflow is reported by the
    /// parser with a position.
    Int(String),
    Pipe,
    Percent,
    LBrace,
    RBrace,
    Comma,
}

impl fmt::Display for TokenKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            TokenKind::Name(n) => write!(f, "NAME({n})"),
            TokenKind::Int(i) => write!(f, "INT({i})"),
            TokenKind::Pipe => f.write_str(">>"),
            TokenKind::Percent => f.write_str("%"),
            TokenKind::LBrace => f.write_str("{"),
            TokenKind::RBrace => f.write_str("}"),
            TokenKind::Comma => f.write_str(","),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Token {
    pub kind: TokenKind,
    /// Byte offset of the token's first character.
    pub position: usize,
}

pub fn tokenize(input: &str) -> Result<Vec<Token>> {
    let mut tokens: Vec<Token> = Vec::new();
    let mut chars = input.char_indices().peekable();

    while let Some(&(pos, c)) = chars.peek() {
        if c.is_whitespace() {
            chars.next();
            continue;
        }
        let kind = match c {
            '%' => TokenKind::Percent,
            '{' => TokenKind::LBrace,
            '}' => TokenKind::RBrace,
            ',' => TokenKind::Comma,
            '>' => {
                chars.next();
                match chars.peek() {
                    Some(&(_, '>')) => {}
                    _ => {
                        return Err(Error::Lex {
                            position: pos,
                            fragment: ">".into(),
                        })
                    }
                }
                TokenKind::Pipe
            }
            c if is_name_char(c) => {
                let mut end = pos;
                while let Some(&(i, c)) = chars.peek() {
                    if !is_name_char(c) {
                        break;
                    }
                    end = i + c.len_utf8();
                    chars.next();
                }
                let word = &input[pos..end];
                let after_percent = matches!(tokens.last(), Some(t) if t.kind == TokenKind::Percent);
                let kind = if after_percent && word.bytes().all(|b| b.is_ascii_digit()) {
                    TokenKind::Int(word.to_string())
                } else {
                    TokenKind::Name(word.to_string())
                };
                tokens.push(Token { kind, position: pos });
                continue;
            }
            other => {
                return Err(Error::Lex {
                    position: pos,
                    fragment: other.to_string(),
                })
            }
        };
        chars.next();
        tokens.push(Token { kind, position: pos });
    }
    Ok(tokens)
}
