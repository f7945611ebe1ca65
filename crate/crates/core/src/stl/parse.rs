use super::ast::{AtomicPredicate, Formula, Interval};
use super::StlError;
use crate::world::RegionTable;

#[derive(Debug, Clone, PartialEq)]
pub enum Tok {
    Ident(String),
    Number(String),
    /// `G`, `F` or `U` immediately followed by an interval.
    Temporal(char),
    LParen,
    RParen,
    LBrace,
    RBrace,
    LBracket,
    RBracket,
    Comma,
    Not,
    And,
    Or,
    Plus,
    Minus,
    Star,
    Ge,
    Le,
}

impl Tok {
    pub fn text(&self) -> String {
        match self {
            Tok::Ident(s) | Tok::Number(s) => s.clone(),
            Tok::Temporal(c) => c.to_string(),
            Tok::LParen => "(".into(),
            Tok::RParen => ")".into(),
            Tok::LBrace => "{".into(),
            Tok::RBrace => "}".into(),
            Tok::LBracket => "[".into(),
            Tok::RBracket => "]".into(),
            Tok::Comma => ",".into(),
            Tok::Not => "!".into(),
            Tok::And => "&".into(),
            Tok::Or => "|".into(),
            Tok::Plus => "+".into(),
            Tok::Minus => "-".into(),
            Tok::Star => "*".into(),
            Tok::Ge => ">=".into(),
            Tok::Le => "<=".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Spanned {
    pub tok: Tok,
    pub pos: usize,
}

fn lex_one(src: &str, i: usize) -> Result<(Tok, usize), usize> {
    let rest = &src[i..];
    let c = rest.chars().next().unwrap();
    let two = |s: &str| rest.starts_with(s);
    let tok = match c {
        '(' => (Tok::LParen, 1),
        ')' => (Tok::RParen, 1),
        '{' => (Tok::LBrace, 1),
        '}' => (Tok::RBrace, 1),
        '[' => (Tok::LBracket, 1),
        ']' => (Tok::RBracket, 1),
        ',' => (Tok::Comma, 1),
        '+' => (Tok::Plus, 1),
        '-' => (Tok::Minus, 1),
        '*' => (Tok::Star, 1),
        '~' => (Tok::Not, 1),
        '¬' => (Tok::Not, c.len_utf8()),
        '∧' => (Tok::And, c.len_utf8()),
        '∨' => (Tok::Or, c.len_utf8()),
        '!' => (Tok::Not, 1),
        '&' if two("&&") => (Tok::And, 2),
        '&' => (Tok::And, 1),
        '|' if two("||") => (Tok::Or, 2),
        '|' => (Tok::Or, 1),
        '>' if two(">=") => (Tok::Ge, 2),
        '<' if two("<=") => (Tok::Le, 2),
        c if c.is_ascii_digit() || c == '.' => {
            let mut end = 0;
            let bytes = rest.as_bytes();
            while end < bytes.len() && (bytes[end].is_ascii_digit() || bytes[end] == b'.') {
                end += 1;
            }
            // optional exponent
            if end < bytes.len() && (bytes[end] == b'e' || bytes[end] == b'E') {
                let mut j = end + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    while j < bytes.len() && bytes[j].is_ascii_digit() {
                        j += 1;
                    }
                    end = j;
                }
            }
            (Tok::Number(rest[..end].to_string()), end)
        }
        c if c.is_alphabetic() || c == '_' => {
            let end = rest
                .char_indices()
                .find(|(_, ch)| !(ch.is_alphanumeric() || *ch == '_'))
                .map(|(j, _)| j)
                .unwrap_or(rest.len());
            let word = &rest[..end];
            let next = rest[end..].trim_start().starts_with('[');
            if next && matches!(word, "G" | "F" | "U") {
                (Tok::Temporal(word.chars().next().unwrap()), end)
            } else {
                (Tok::Ident(word.to_string()), end)
            }
        }
        _ => return Err(i),
    };
    Ok(tok)
}

pub fn lex(src: &str) -> Result<Vec<Spanned>, StlError> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < src.len() {
        let c = src[i..].chars().next().unwrap();
        if c.is_whitespace() {
            i += c.len_utf8();
            continue;
        }
        match lex_one(src, i) {
            Ok((tok, n)) => {
                out.push(Spanned { tok, pos: i });
                i += n;
            }
            Err(pos) => {
                return Err(StlError::Syntax {
                    pos,
                    expected: "a token".into(),
                    found: c.to_string(),
                })
            }
        }
    }
    Ok(out)
}

/// Token strings for n-gram scoring. Unlexable characters become one-char
/// tokens instead of aborting.
pub fn tokenize(src: &str) -> Vec<String> {
    let mut out = Vec::new();
    let mut i = 0;
    while i < src.len() {
        let c = src[i..].chars().next().unwrap();
        if c.is_whitespace() {
            i += c.len_utf8();
            continue;
        }
        match lex_one(src, i) {
            Ok((tok, n)) => {
                out.push(tok.text());
                i += n;
            }
            Err(_) => {
                out.push(c.to_string());
                i += c.len_utf8();
            }
        }
    }
    out
}

fn var_index(name: &str, dims: usize) -> Option<usize> {
    let (kind, axis) = name.split_at(1);
    let axis = match axis {
        "x" => 0,
        "y" => 1,
        "z" => 2,
        _ => return None,
    };
    if axis >= dims {
        return None;
    }
    match kind {
        "p" => Some(axis),
        "v" => Some(dims + axis),
        _ => None,
    }
}

struct Parser<'a> {
    toks: Vec<Spanned>,
    at: usize,
    end: usize,
    table: &'a RegionTable,
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.at).map(|s| &s.tok)
    }

    fn pos(&self) -> usize {
        self.toks.get(self.at).map(|s| s.pos).unwrap_or(self.end)
    }

    fn err(&self, expected: &str) -> StlError {
        StlError::Syntax {
            pos: self.pos(),
            expected: expected.into(),
            found: self.peek().map(|t| t.text()).unwrap_or_else(|| "end of input".into()),
        }
    }

    fn bump(&mut self) -> Option<Tok> {
        let t = self.toks.get(self.at).map(|s| s.tok.clone());
        self.at += 1;
        t
    }

    fn expect(&mut self, tok: Tok) -> Result<(), StlError> {
        if self.peek() == Some(&tok) {
            self.at += 1;
            Ok(())
        } else {
            Err(self.err(&format!("`{}`", tok.text())))
        }
    }

    fn formula(&mut self) -> Result<Formula, StlError> {
        let mut parts = vec![self.and()?];
        while self.peek() == Some(&Tok::Or) {
            self.at += 1;
            parts.push(self.and()?);
        }
        Ok(Formula::or(parts))
    }

    fn and(&mut self) -> Result<Formula, StlError> {
        let mut parts = vec![self.until()?];
        while self.peek() == Some(&Tok::And) {
            self.at += 1;
            parts.push(self.until()?);
        }
        Ok(Formula::and(parts))
    }

    fn until(&mut self) -> Result<Formula, StlError> {
        let lhs = self.prefix()?;
        if self.peek() == Some(&Tok::Temporal('U')) {
            self.at += 1;
            let iv = self.interval()?;
            let rhs = self.until()?;
            return Ok(Formula::until(iv, lhs, rhs));
        }
        Ok(lhs)
    }

    fn prefix(&mut self) -> Result<Formula, StlError> {
        match self.peek() {
            Some(Tok::Not) => {
                self.at += 1;
                Ok(Formula::not(self.prefix()?))
            }
            Some(Tok::Temporal('G')) => {
                self.at += 1;
                let iv = self.interval()?;
                Ok(Formula::globally(iv, self.prefix()?))
            }
            Some(Tok::Temporal('F')) => {
                self.at += 1;
                let iv = self.interval()?;
                Ok(Formula::eventually(iv, self.prefix()?))
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> Result<Formula, StlError> {
        match self.peek().cloned() {
            Some(Tok::LParen) => {
                self.at += 1;
                let f = self.formula()?;
                self.expect(Tok::RParen)?;
                Ok(f)
            }
            Some(Tok::LBrace) => {
                self.at += 1;
                let p = self.affine()?;
                self.expect(Tok::RBrace)?;
                Ok(Formula::predicate(p))
            }
            Some(Tok::Ident(name)) => {
                self.at += 1;
                match self.table.get(&name) {
                    Some(r) => Ok(Formula::region(r.clone())),
                    None if name == "true" => Ok(Formula::tt()),
                    None => Err(StlError::UnknownRegion(name)),
                }
            }
            _ => Err(self.err("formula")),
        }
    }

    fn int_bound(&mut self) -> Result<i64, StlError> {
        match self.peek().cloned() {
            Some(Tok::Minus) => {
                self.at += 1;
                let v = self.int_bound()?;
                Ok(-v)
            }
            Some(Tok::Number(s)) if s.bytes().all(|b| b.is_ascii_digit()) => {
                self.at += 1;
                s.parse::<i64>().map_err(|_| StlError::Syntax {
                    pos: self.pos(),
                    expected: "integer bound".into(),
                    found: s,
                })
            }
            _ => Err(self.err("integer bound")),
        }
    }

    fn interval(&mut self) -> Result<Interval, StlError> {
        self.expect(Tok::LBracket)?;
        let a = self.int_bound()?;
        self.expect(Tok::Comma)?;
        let b = self.int_bound()?;
        self.expect(Tok::RBracket)?;
        if a < 0 || b < 0 || a > b {
            return Err(StlError::BadInterval { a, b });
        }
        Interval::new(a as usize, b as usize)
    }

    fn number(&mut self) -> Result<f64, StlError> {
        let neg = if self.peek() == Some(&Tok::Minus) {
            self.at += 1;
            true
        } else {
            false
        };
        match self.peek().cloned() {
            Some(Tok::Number(s)) => {
                let v: f64 = s.parse().map_err(|_| self.err("number"))?;
                self.at += 1;
                Ok(if neg { -v } else { v })
            }
            _ => Err(self.err("number")),
        }
    }

    /// `[-] term ((+|-) term)* (>=|<=) number`, term := number "*" VAR | VAR.
    fn affine(&mut self) -> Result<AtomicPredicate, StlError> {
        let dims = self.table.dims;
        let mut coeffs = vec![0.0; 2 * dims];
        let mut sign = 1.0;
        if self.peek() == Some(&Tok::Minus) {
            self.at += 1;
            sign = -1.0;
        }
        loop {
            let coef = match self.peek() {
                Some(Tok::Number(_)) => {
                    let c = self.number()?;
                    self.expect(Tok::Star)?;
                    c
                }
                _ => 1.0,
            };
            match self.peek().cloned() {
                Some(Tok::Ident(v)) => match var_index(&v, dims) {
                    Some(idx) => {
                        self.at += 1;
                        coeffs[idx] += sign * coef;
                    }
                    None => return Err(self.err(&format!("state variable of a {dims}-D scenario"))),
                },
                _ => return Err(self.err("state variable")),
            }
            match self.peek() {
                Some(Tok::Plus) => sign = 1.0,
                Some(Tok::Minus) => sign = -1.0,
                _ => break,
            }
            self.at += 1;
        }
        let ge = match self.bump() {
            Some(Tok::Ge) => true,
            Some(Tok::Le) => false,
            _ => {
                self.at -= 1;
                return Err(self.err("`>=` or `<=`"));
            }
        };
        let rhs_pos = self.pos();
        let rhs = self.number()?;
        let p = if ge {
            AtomicPredicate::new(coeffs, -rhs)
        } else {
            AtomicPredicate::new(coeffs.iter().map(|c| -c).collect(), rhs)
        };
        if p.is_constant() {
            return Err(StlError::Syntax {
                pos: rhs_pos,
                expected: "a nonzero coefficient".into(),
                found: "constant predicate".into(),
            });
        }
        Ok(p)
    }
}

/// Parse formula text; region names resolve against `table`. Node ids are
/// assigned in preorder.
pub fn parse_stl(text: &str, table: &RegionTable) -> Result<Formula, StlError> {
    let toks = lex(text)?;
    let mut p = Parser {
        toks,
        at: 0,
        end: text.len(),
        table,
    };
    let f = p.formula()?;
    if p.at < p.toks.len() {
        return Err(p.err("end of input"));
    }
    Ok(f.renumbered())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stl::FormulaKind;

    fn table() -> RegionTable {
        RegionTable::symbolic(2, ["goal", "obs", "a", "b", "d", "k"])
    }

    #[test]
    fn conjunction_of_temporal_prefixes() {
        let f = parse_stl("F[0,20] goal & G[0,40] !obs", &table()).unwrap();
        let FormulaKind::And(cs) = f.kind() else { panic!() };
        assert!(matches!(cs[0].kind(), FormulaKind::Eventually(iv, _) if iv.b == 20));
        let FormulaKind::Globally(_, inner) = cs[1].kind() else { panic!() };
        assert!(matches!(inner.kind(), FormulaKind::Not(_)));
    }

    #[test]
    fn parenthesized_until_lhs() {
        let f = parse_stl("(!d) U[0,40] k", &table()).unwrap();
        let FormulaKind::Until(iv, l, r) = f.kind() else { panic!() };
        assert_eq!((iv.a, iv.b), (0, 40));
        assert!(matches!(l.kind(), FormulaKind::Not(_)));
        assert!(matches!(r.kind(), FormulaKind::Atom(_)));
    }

    #[test]
    fn precedence_not_until_and_or() {
        let f = parse_stl("!a U[0,1] b & a | b", &table()).unwrap();
        let FormulaKind::Or(cs) = f.kind() else { panic!() };
        let FormulaKind::And(ands) = cs[0].kind() else { panic!() };
        assert!(matches!(ands[0].kind(), FormulaKind::Until(..)));
    }

    #[test]
    fn interval_errors() {
        assert!(matches!(parse_stl("G[5,3] a", &table()), Err(StlError::BadInterval { a: 5, b: 3 })));
        assert!(matches!(parse_stl("G[-1,3] a", &table()), Err(StlError::BadInterval { .. })));
        assert!(matches!(parse_stl("G[0.5,3] a", &table()), Err(StlError::Syntax { .. })));
    }

    #[test]
    fn unknown_region() {
        assert_eq!(parse_stl("F[0,5] gool", &table()), Err(StlError::UnknownRegion("gool".into())));
    }

    #[test]
    fn syntax_error_reports_position() {
        match parse_stl("F[0,5", &table()) {
            Err(StlError::Syntax { pos, found, .. }) => {
                assert_eq!(pos, 5);
                assert_eq!(found, "end of input");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn affine_atoms() {
        let f = parse_stl("{2*px - vy >= 1.5}", &table()).unwrap();
        let FormulaKind::Atom(crate::stl::Atom::Predicate(p)) = f.kind() else { panic!() };
        assert_eq!(p.coefficients, vec![2.0, 0.0, 0.0, -1.0]);
        assert_eq!(p.offset, -1.5);
        let f = parse_stl("{-px <= -3}", &table()).unwrap();
        let FormulaKind::Atom(crate::stl::Atom::Predicate(p)) = f.kind() else { panic!() };
        assert_eq!(p.coefficients, vec![1.0, 0.0, 0.0, 0.0]);
        assert_eq!(p.offset, -3.0);
        assert!(parse_stl("{pz >= 0}", &table()).is_err());
        assert!(parse_stl("{0*px >= 1}", &table()).is_err());
    }

    #[test]
    fn alternate_spellings() {
        let a = parse_stl("a && b || ~a", &table()).unwrap();
        let b = parse_stl("a ∧ b ∨ ¬a", &table()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn lossy_tokens() {
        assert_eq!(tokenize("F[0,5] a & $"), vec!["F", "[", "0", ",", "5", "]", "a", "&", "$"]);
    }
}
