use std::fmt;

use super::ast::Formula;

/// Maximum syntactic nesting (NOT, parentheses, IMPLIES right operands).
pub const MAX_DEPTH: usize = 64;

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum ParseError {
    #[error("unexpected {found} at byte {offset}, expected {}", .expected.join(" | "))]
    Syntax {
        offset: usize,
        expected: Vec<&'static str>,
        found: String,
    },
    #[error("rule nesting exceeds depth {limit} at byte {offset}")]
    DepthExceeded { offset: usize, limit: usize },
}

impl ParseError {
    pub fn offset(&self) -> usize {
        match self {
            ParseError::Syntax { offset, .. } | ParseError::DepthExceeded { offset, .. } => *offset,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum Tok {
    And,
    Or,
    Not,
    Implies,
    True,
    False,
    LParen,
    RParen,
    Ident(String),
    End,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::And => f.write_str("AND"),
            Tok::Or => f.write_str("OR"),
            Tok::Not => f.write_str("NOT"),
            Tok::Implies => f.write_str("IMPLIES"),
            Tok::True => f.write_str("TRUE"),
            Tok::False => f.write_str("FALSE"),
            Tok::LParen => f.write_str("'('"),
            Tok::RParen => f.write_str("')'"),
            Tok::Ident(name) => write!(f, "identifier `{name}`"),
            Tok::End => f.write_str("end of input"),
        }
    }
}

const OPERAND: &[&str] = &["NOT", "'('", "TRUE", "FALSE", "identifier"];

/// True when `name` is a valid factor identifier: `[a-z][a-z0-9_]*`, not a keyword.
pub fn is_identifier(name: &str) -> bool {
    let mut chars = name.chars();
    matches!(chars.next(), Some('a'..='z'))
        && chars.all(|c| matches!(c, 'a'..='z' | '0'..='9' | '_'))
        && keyword(name).is_none()
}

fn keyword(word: &str) -> Option<Tok> {
    let tok = match word.to_ascii_uppercase().as_str() {
        "AND" => Tok::And,
        "OR" => Tok::Or,
        "NOT" => Tok::Not,
        "IMPLIES" => Tok::Implies,
        "TRUE" => Tok::True,
        "FALSE" => Tok::False,
        _ => return None,
    };
    Some(tok)
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i];
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        match c {
            b'(' => {
                out.push((i, Tok::LParen));
                i += 1;
            }
            b')' => {
                out.push((i, Tok::RParen));
                i += 1;
            }
            c if c.is_ascii_alphanumeric() || c == b'_' => {
                let start = i;
                while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                    i += 1;
                }
                let word = &text[start..i];
                if let Some(tok) = keyword(word) {
                    out.push((start, tok));
                } else if is_identifier(word) {
                    out.push((start, Tok::Ident(word.to_string())));
                } else {
                    return Err(ParseError::Syntax {
                        offset: start,
                        expected: OPERAND.to_vec(),
                        found: format!("malformed identifier `{word}`"),
                    });
                }
            }
            _ => {
                let ch = text[i..].chars().next().unwrap_or('?');
                return Err(ParseError::Syntax {
                    offset: i,
                    expected: OPERAND.to_vec(),
                    found: format!("character {ch:?}"),
                });
            }
        }
    }
    out.push((text.len(), Tok::End));
    Ok(out)
}

struct Parser {
    tokens: Vec<(usize, Tok)>,
    pos: usize,
    depth: usize,
    open_parens: usize,
}

impl Parser {
    fn peek(&self) -> &Tok {
        &self.tokens[self.pos].1
    }

    fn offset(&self) -> usize {
        self.tokens[self.pos].0
    }

    fn bump(&mut self) -> Tok {
        let tok = self.tokens[self.pos].1.clone();
        if tok != Tok::End {
            self.pos += 1;
        }
        tok
    }

    fn error(&self, expected: &[&'static str]) -> ParseError {
        ParseError::Syntax {
            offset: self.offset(),
            expected: expected.to_vec(),
            found: self.peek().to_string(),
        }
    }

    fn descend(&mut self) -> Result<(), ParseError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(ParseError::DepthExceeded {
                offset: self.offset(),
                limit: MAX_DEPTH,
            });
        }
        Ok(())
    }

    fn implies(&mut self) -> Result<Formula, ParseError> {
        let left = self.or()?;
        if *self.peek() == Tok::Implies {
            self.bump();
            self.descend()?;
            let right = self.implies()?;
            self.depth -= 1;
            return Ok(Formula::implies(left, right));
        }
        Ok(left)
    }

    fn or(&mut self) -> Result<Formula, ParseError> {
        let mut left = self.and()?;
        while *self.peek() == Tok::Or {
            self.bump();
            let right = self.and()?;
            left = Formula::or(left, right);
        }
        Ok(left)
    }

    fn and(&mut self) -> Result<Formula, ParseError> {
        let mut left = self.unary()?;
        while *self.peek() == Tok::And {
            self.bump();
            let right = self.unary()?;
            left = Formula::and(left, right);
        }
        Ok(left)
    }

    fn unary(&mut self) -> Result<Formula, ParseError> {
        match self.peek() {
            Tok::Not => {
                self.bump();
                self.descend()?;
                let inner = self.unary()?;
                self.depth -= 1;
                Ok(Formula::not(inner))
            }
            Tok::LParen => {
                self.bump();
                self.descend()?;
                self.open_parens += 1;
                let inner = self.implies()?;
                if *self.peek() != Tok::RParen {
                    return Err(self.error(&["AND", "OR", "IMPLIES", "')'"]));
                }
                self.bump();
                self.open_parens -= 1;
                self.depth -= 1;
                Ok(inner)
            }
            Tok::True => {
                self.bump();
                Ok(Formula::Const(true))
            }
            Tok::False => {
                self.bump();
                Ok(Formula::Const(false))
            }
            Tok::Ident(_) => match self.bump() {
                Tok::Ident(name) => Ok(Formula::Var(name)),
                _ => unreachable!(),
            },
            _ => Err(self.error(OPERAND)),
        }
    }
}

/// Parses rule text into a [`Formula`].
///
/// Precedence, tightest first: NOT, AND, OR, IMPLIES. AND and OR associate
/// to the left, IMPLIES to the right. Keywords are case-insensitive;
/// identifiers are lowercase and case-sensitive.
pub fn parse_formula(text: &str) -> Result<Formula, ParseError> {
    let tokens = lex(text)?;
    let mut parser = Parser {
        tokens,
        pos: 0,
        depth: 0,
        open_parens: 0,
    };
    let formula = parser.implies()?;
    if *parser.peek() != Tok::End {
        let expected: &[&str] = if parser.open_parens > 0 {
            &["AND", "OR", "IMPLIES", "')'"]
        } else {
            &["AND", "OR", "IMPLIES", "end of input"]
        };
        return Err(parser.error(expected));
    }
    Ok(formula)
}
