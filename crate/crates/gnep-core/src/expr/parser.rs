//! Recursive-descent parser for the objective expression language.
//!
//! Grammar, loosest to tightest binding:
//!
//! ```text
//! sum    := product (('+' | '-') product)*
//! product:= unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' exponent)?          (right associative)
//! exponent := '-' exponent | power
//! atom   := NUMBER | IDENT | IDENT '(' sum (',' sum)* ')' | '(' sum ')'
//! ```
//!
//! Identifiers are `x1 .. x{dim}` or one of `abs`, `sqrt`, `exp`, `log`,
//! `min`, `max`. Anything else is rejected with its byte position.

use super::{ExprError, Node, ObjectiveExpr};

pub fn parse(text: &str, dim: usize) -> Result<ObjectiveExpr, ExprError> {
    let tokens = tokenize(text)?;
    let mut p = Parser { tokens, pos: 0, dim };
    let root = p.sum()?;
    match p.peek() {
        Token::End => Ok(ObjectiveExpr::new(root, dim)),
        _ => Err(p.error("trailing input")),
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Plus,
    Minus,
    Star,
    Slash,
    Caret,
    LParen,
    RParen,
    Comma,
    End,
}

fn tokenize(text: &str) -> Result<Vec<(Token, usize)>, ExprError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        let start = i;
        match c {
            ' ' | '\t' | '\n' | '\r' => {
                i += 1;
                continue;
            }
            '+' => out.push((Token::Plus, start)),
            '-' => out.push((Token::Minus, start)),
            '*' => out.push((Token::Star, start)),
            '/' => out.push((Token::Slash, start)),
            '^' => out.push((Token::Caret, start)),
            '(' => out.push((Token::LParen, start)),
            ')' => out.push((Token::RParen, start)),
            ',' => out.push((Token::Comma, start)),
            _ if c.is_ascii_digit() || c == '.' => {
                let mut j = i;
                while j < bytes.len() && (bytes[j] as char).is_ascii_digit() {
                    j += 1;
                }
                if j < bytes.len() && bytes[j] == b'.' {
                    j += 1;
                    while j < bytes.len() && (bytes[j] as char).is_ascii_digit() {
                        j += 1;
                    }
                }
                if j < bytes.len() && (bytes[j] == b'e' || bytes[j] == b'E') {
                    let mut k = j + 1;
                    if k < bytes.len() && (bytes[k] == b'+' || bytes[k] == b'-') {
                        k += 1;
                    }
                    if k < bytes.len() && (bytes[k] as char).is_ascii_digit() {
                        j = k;
                        while j < bytes.len() && (bytes[j] as char).is_ascii_digit() {
                            j += 1;
                        }
                    }
                }
                let lit = &text[i..j];
                let v: f64 = lit.parse().map_err(|_| ExprError::Parse {
                    pos: start,
                    msg: format!("bad number literal '{lit}'"),
                })?;
                out.push((Token::Num(v), start));
                i = j;
                continue;
            }
            _ if c.is_ascii_alphabetic() || c == '_' => {
                let mut j = i;
                while j < bytes.len()
                    && ((bytes[j] as char).is_ascii_alphanumeric() || bytes[j] == b'_')
                {
                    j += 1;
                }
                out.push((Token::Ident(text[i..j].to_string()), start));
                i = j;
                continue;
            }
            _ => {
                return Err(ExprError::Parse {
                    pos: start,
                    msg: format!("unexpected character '{c}'"),
                })
            }
        }
        i += 1;
    }
    out.push((Token::End, bytes.len()));
    Ok(out)
}

struct Parser {
    tokens: Vec<(Token, usize)>,
    pos: usize,
    dim: usize,
}

impl Parser {
    fn peek(&self) -> &Token {
        &self.tokens[self.pos].0
    }

    fn bump(&mut self) -> Token {
        let t = self.tokens[self.pos].0.clone();
        if self.pos + 1 < self.tokens.len() {
            self.pos += 1;
        }
        t
    }

    fn error(&self, msg: &str) -> ExprError {
        ExprError::Parse { pos: self.tokens[self.pos].1, msg: msg.to_string() }
    }

    fn expect(&mut self, t: Token, what: &str) -> Result<(), ExprError> {
        if *self.peek() == t {
            self.bump();
            Ok(())
        } else {
            Err(self.error(what))
        }
    }

    fn sum(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.product()?;
        loop {
            match self.peek() {
                Token::Plus => {
                    self.bump();
                    lhs = Node::Add(Box::new(lhs), Box::new(self.product()?));
                }
                Token::Minus => {
                    self.bump();
                    lhs = Node::Sub(Box::new(lhs), Box::new(self.product()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn product(&mut self) -> Result<Node, ExprError> {
        let mut lhs = self.unary()?;
        loop {
            match self.peek() {
                Token::Star => {
                    self.bump();
                    lhs = Node::Mul(Box::new(lhs), Box::new(self.unary()?));
                }
                Token::Slash => {
                    self.bump();
                    lhs = Node::Div(Box::new(lhs), Box::new(self.unary()?));
                }
                _ => return Ok(lhs),
            }
        }
    }

    fn unary(&mut self) -> Result<Node, ExprError> {
        if *self.peek() == Token::Minus {
            self.bump();
            Ok(Node::Neg(Box::new(self.unary()?)))
        } else {
            self.power()
        }
    }

    fn power(&mut self) -> Result<Node, ExprError> {
        let base = self.atom()?;
        if *self.peek() == Token::Caret {
            self.bump();
            let e = self.exponent()?;
            Ok(Node::Pow(Box::new(base), Box::new(e)))
        } else {
            Ok(base)
        }
    }

    // A leading '-' directly after '^' is accepted as part of the exponent.
    fn exponent(&mut self) -> Result<Node, ExprError> {
        if *self.peek() == Token::Minus {
            self.bump();
            Ok(Node::Neg(Box::new(self.exponent()?)))
        } else {
            self.power()
        }
    }

    fn atom(&mut self) -> Result<Node, ExprError> {
        match self.bump() {
            Token::Num(v) => Ok(Node::Const(v)),
            Token::LParen => {
                let inner = self.sum()?;
                self.expect(Token::RParen, "expected ')'")?;
                Ok(inner)
            }
            Token::Ident(name) => self.ident(name),
            _ => {
                self.pos = self.pos.saturating_sub(1);
                Err(self.error("expected a number, variable, function or '('"))
            }
        }
    }

    fn ident(&mut self, name: String) -> Result<Node, ExprError> {
        match name.as_str() {
            "abs" | "sqrt" | "exp" | "log" => {
                let args = self.args(&name)?;
                if args.len() != 1 {
                    return Err(self.error(&format!(
                        "{name} takes exactly one argument, got {}",
                        args.len()
                    )));
                }
                let a = Box::new(args.into_iter().next().unwrap());
                Ok(match name.as_str() {
                    "abs" => Node::Abs(a),
                    "sqrt" => Node::Sqrt(a),
                    "exp" => Node::Exp(a),
                    _ => Node::Log(a),
                })
            }
            "min" | "max" => {
                let args = self.args(&name)?;
                if args.is_empty() {
                    return Err(self.error(&format!("{name} needs at least one argument")));
                }
                Ok(if name == "min" { Node::Min(args) } else { Node::Max(args) })
            }
            _ => {
                if let Some(rest) = name.strip_prefix('x') {
                    if let Ok(k) = rest.parse::<usize>() {
                        if k >= 1 && k <= self.dim {
                            return Ok(Node::Var(k - 1));
                        }
                        return Err(ExprError::Parse {
                            pos: self.tokens[self.pos.saturating_sub(1)].1,
                            msg: format!("variable {name} out of range 1..={}", self.dim),
                        });
                    }
                }
                Err(ExprError::Parse {
                    pos: self.tokens[self.pos.saturating_sub(1)].1,
                    msg: format!("unknown identifier '{name}'"),
                })
            }
        }
    }

    fn args(&mut self, name: &str) -> Result<Vec<Node>, ExprError> {
        self.expect(Token::LParen, &format!("expected '(' after {name}"))?;
        let mut out = vec![self.sum()?];
        while *self.peek() == Token::Comma {
            self.bump();
            out.push(self.sum()?);
        }
        self.expect(Token::RParen, "expected ')' or ','")?;
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reports_positions() {
        let err = parse("x1 + $", 2).unwrap_err();
        match err {
            ExprError::Parse { pos, .. } => assert_eq!(pos, 5),
            other => panic!("unexpected error {other:?}"),
        }
        let err = parse("min(x1", 2).unwrap_err();
        assert!(matches!(err, ExprError::Parse { .. }));
        assert!(parse("x1 x2", 2).is_err()); // trailing input
        assert!(parse("", 2).is_err());
    }

    #[test]
    fn identifiers_are_checked() {
        assert!(parse("y1", 2).is_err());
        assert!(parse("x0", 2).is_err());
        assert!(parse("abs(x1, x2)", 2).is_err());
        assert!(parse("min()", 2).is_err());
        assert!(parse("sin(x1)", 2).is_err());
    }

    #[test]
    fn scientific_literals() {
        let e = parse("1e-9 + 2.5E+2 + .5", 1).unwrap();
        assert_eq!(e.eval(&[0.0]).unwrap(), 1e-9 + 250.0 + 0.5);
    }
}
