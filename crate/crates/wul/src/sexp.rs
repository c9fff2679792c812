//! Tiny s-expression reader with source positions, shared by the grammar,
//! formula, and benchmark parsers.

use std::fmt;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Pos {
    pub line: u32,
    pub col: u32,
}

impl fmt::Display for Pos {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.line, self.col)
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Sexp {
    Atom(String, Pos),
    List(Vec<Sexp>, Pos),
}

impl Sexp {
    pub fn pos(&self) -> Pos {
        match self {
            Sexp::Atom(_, p) | Sexp::List(_, p) => *p,
        }
    }

    pub fn atom(&self) -> Option<&str> {
        match self {
            Sexp::Atom(s, _) => Some(s),
            Sexp::List(..) => None,
        }
    }

    pub fn list(&self) -> Option<&[Sexp]> {
        match self {
            Sexp::List(items, _) => Some(items),
            Sexp::Atom(..) => None,
        }
    }

    pub fn int(&self) -> Option<i64> {
        self.atom().and_then(|s| s.parse::<i64>().ok())
    }
}

impl fmt::Display for Sexp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Sexp::Atom(s, _) => write!(f, "{s}"),
            Sexp::List(items, _) => {
                write!(f, "(")?;
                for (i, it) in items.iter().enumerate() {
                    if i > 0 {
                        write!(f, " ")?;
                    }
                    write!(f, "{it}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum SexpError {
    #[error("{pos}: unexpected ')'")]
    UnexpectedClose { pos: Pos },
    #[error("{pos}: unclosed '('")]
    UnclosedParen { pos: Pos },
    #[error("{pos}: stray text after expression")]
    TrailingInput { pos: Pos },
}

struct Lexer<'a> {
    src: &'a str,
    bytes: &'a [u8],
    i: usize,
    line: u32,
    col: u32,
}

impl<'a> Lexer<'a> {
    fn new(src: &'a str) -> Self {
        Lexer { src, bytes: src.as_bytes(), i: 0, line: 1, col: 1 }
    }

    fn pos(&self) -> Pos {
        Pos { line: self.line, col: self.col }
    }

    fn bump(&mut self) {
        if self.bytes[self.i] == b'\n' {
            self.line += 1;
            self.col = 1;
        } else {
            self.col += 1;
        }
        self.i += 1;
    }

    fn skip_trivia(&mut self) {
        while self.i < self.bytes.len() {
            match self.bytes[self.i] {
                b';' => {
                    while self.i < self.bytes.len() && self.bytes[self.i] != b'\n' {
                        self.bump();
                    }
                }
                c if c.is_ascii_whitespace() => self.bump(),
                _ => break,
            }
        }
    }

    fn atom(&mut self) -> Sexp {
        let start = self.i;
        let pos = self.pos();
        while self.i < self.bytes.len() {
            let c = self.bytes[self.i];
            if c.is_ascii_whitespace() || c == b'(' || c == b')' || c == b';' {
                break;
            }
            self.bump();
        }
        Sexp::Atom(self.src[start..self.i].to_string(), pos)
    }
}

/// Parse a whole source string into a sequence of top-level forms.
pub fn parse_all(src: &str) -> Result<Vec<Sexp>, SexpError> {
    let mut lx = Lexer::new(src);
    let mut stack: Vec<(Vec<Sexp>, Pos)> = Vec::new();
    let mut top = Vec::new();
    loop {
        lx.skip_trivia();
        if lx.i >= lx.bytes.len() {
            break;
        }
        match lx.bytes[lx.i] {
            b'(' => {
                let pos = lx.pos();
                lx.bump();
                stack.push((Vec::new(), pos));
            }
            b')' => {
                let pos = lx.pos();
                lx.bump();
                let (items, open_pos) =
                    stack.pop().ok_or(SexpError::UnexpectedClose { pos })?;
                let sexp = Sexp::List(items, open_pos);
                match stack.last_mut() {
                    Some((parent, _)) => parent.push(sexp),
                    None => top.push(sexp),
                }
            }
            _ => {
                let atom = lx.atom();
                match stack.last_mut() {
                    Some((parent, _)) => parent.push(atom),
                    None => top.push(atom),
                }
            }
        }
    }
    if let Some((_, pos)) = stack.pop() {
        return Err(SexpError::UnclosedParen { pos });
    }
    Ok(top)
}

/// Parse exactly one form.
pub fn parse_one(src: &str) -> Result<Sexp, SexpError> {
    let forms = parse_all(src)?;
    match forms.len() {
        1 => Ok(forms.into_iter().next().unwrap()),
        0 => Err(SexpError::TrailingInput { pos: Pos { line: 1, col: 1 } }),
        _ => Err(SexpError::TrailingInput { pos: forms[1].pos() }),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn atoms_lists_comments() {
        let forms = parse_all("(a (b 12) c) ; trailing\nx").unwrap();
        assert_eq!(forms.len(), 2);
        assert_eq!(forms[1].atom(), Some("x"));
        let inner = forms[0].list().unwrap();
        assert_eq!(inner[1].list().unwrap()[1].int(), Some(12));
    }

    #[test]
    fn error_positions() {
        let err = parse_all("(a\n(b)").unwrap_err();
        assert_eq!(err, SexpError::UnclosedParen { pos: Pos { line: 1, col: 1 } });
        let err = parse_all("a)").unwrap_err();
        assert_eq!(err, SexpError::UnexpectedClose { pos: Pos { line: 1, col: 2 } });
    }

    #[test]
    fn display_round_trip() {
        let src = "(nonterm N IntExpr 2 (+ 2 N))";
        let form = parse_one(src).unwrap();
        assert_eq!(form.to_string(), src);
    }
}
