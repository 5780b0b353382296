use std::fmt;

use super::{Expr, Func, Node, Rational};

/// Names visible to the expression parser.
#[derive(Clone, Debug, Default)]
pub struct VarScope {
    pub states: Vec<String>,
    pub inputs: Vec<String>,
}

impl VarScope {
    pub fn new(states: &[&str], inputs: &[&str]) -> Self {
        Self {
            states: states.iter().map(|s| s.to_string()).collect(),
            inputs: inputs.iter().map(|s| s.to_string()).collect(),
        }
    }

    /// Scope with the default names `x1..xn` and `u1..um`.
    pub fn numbered(n: usize, m: usize) -> Self {
        Self {
            states: (1..=n).map(|i| format!("x{i}")).collect(),
            inputs: (1..=m).map(|j| format!("u{j}")).collect(),
        }
    }

    fn lookup(&self, name: &str) -> Option<Expr> {
        if let Some(i) = self.states.iter().position(|s| s == name) {
            return Some(Expr::state(i));
        }
        self.inputs.iter().position(|s| s == name).map(Expr::input)
    }
}

#[derive(Clone, Debug, PartialEq, Eq, thiserror::Error)]
#[error("line {line}, column {column}: {message}")]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
}

#[derive(Clone, Debug, PartialEq)]
enum Tok {
    Num(String),
    Ident(String),
    Sym(char),
    End,
}

impl fmt::Display for Tok {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Tok::Num(s) | Tok::Ident(s) => write!(f, "'{s}'"),
            Tok::Sym(c) => write!(f, "'{c}'"),
            Tok::End => f.write_str("end of input"),
        }
    }
}

struct Lexed {
    toks: Vec<(Tok, usize)>,
}

fn lex(text: &str) -> Result<Lexed, (usize, String)> {
    let chars: Vec<(usize, char)> = text.char_indices().collect();
    let mut toks = Vec::new();
    let mut k = 0;
    while k < chars.len() {
        let (pos, c) = chars[k];
        if c.is_whitespace() {
            k += 1;
        } else if c.is_ascii_digit() || (c == '.' && chars.get(k + 1).is_some_and(|d| d.1.is_ascii_digit())) {
            let start = k;
            while k < chars.len() && (chars[k].1.is_ascii_digit() || chars[k].1 == '.') {
                k += 1;
            }
            // optional exponent part
            if k < chars.len() && matches!(chars[k].1, 'e' | 'E') {
                let mut j = k + 1;
                if j < chars.len() && matches!(chars[j].1, '+' | '-') {
                    j += 1;
                }
                if j < chars.len() && chars[j].1.is_ascii_digit() {
                    k = j;
                    while k < chars.len() && chars[k].1.is_ascii_digit() {
                        k += 1;
                    }
                }
            }
            let s: String = chars[start..k].iter().map(|p| p.1).collect();
            toks.push((Tok::Num(s), pos));
        } else if c.is_alphabetic() || c == '_' {
            let start = k;
            while k < chars.len() && (chars[k].1.is_alphanumeric() || chars[k].1 == '_') {
                k += 1;
            }
            let s: String = chars[start..k].iter().map(|p| p.1).collect();
            toks.push((Tok::Ident(s), pos));
        } else if "+-*/^()".contains(c) {
            toks.push((Tok::Sym(c), pos));
            k += 1;
        } else {
            return Err((pos, format!("unexpected character '{c}'")));
        }
    }
    toks.push((Tok::End, text.len()));
    Ok(Lexed { toks })
}

pub(crate) fn line_col(text: &str, pos: usize) -> (usize, usize) {
    let before = &text[..pos.min(text.len())];
    let line = before.matches('\n').count() + 1;
    let col_start = before.rfind('\n').map_or(0, |p| p + 1);
    (line, before[col_start..].chars().count() + 1)
}

struct Parser<'a> {
    toks: Vec<(Tok, usize)>,
    at: usize,
    scope: &'a VarScope,
}

type PResult<T> = Result<T, (usize, String)>;

impl Parser<'_> {
    fn peek(&self) -> &Tok {
        &self.toks[self.at].0
    }

    fn pos(&self) -> usize {
        self.toks[self.at].1
    }

    fn bump(&mut self) -> Tok {
        let t = self.toks[self.at].0.clone();
        if self.at + 1 < self.toks.len() {
            self.at += 1;
        }
        t
    }

    fn eat(&mut self, c: char) -> bool {
        if *self.peek() == Tok::Sym(c) {
            self.bump();
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> PResult<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.unexpected(&format!("expected '{c}'")))
        }
    }

    fn unexpected(&self, what: &str) -> (usize, String) {
        match self.peek() {
            Tok::End => (self.pos(), format!("unexpected end of input ({what})")),
            t => (self.pos(), format!("unexpected {t} ({what})")),
        }
    }

    fn expr(&mut self) -> PResult<Expr> {
        let mut terms = vec![self.term()?];
        loop {
            if self.eat('+') {
                terms.push(self.term()?);
            } else if self.eat('-') {
                let t = self.term()?;
                terms.push(negate(t));
            } else {
                break;
            }
        }
        Ok(Expr::sum(terms))
    }

    fn term(&mut self) -> PResult<Expr> {
        let minus = self.eat('-');
        let mut factors = vec![self.factor()?];
        loop {
            if self.eat('*') {
                factors.push(self.factor()?);
            } else if self.eat('/') {
                let den = self.factor()?;
                let num = Expr::product(std::mem::take(&mut factors));
                factors.push(Expr::div(num, den));
            } else {
                break;
            }
        }
        let t = Expr::product(factors);
        Ok(if minus { negate(t) } else { t })
    }

    fn factor(&mut self) -> PResult<Expr> {
        let base = self.atom()?;
        if self.eat('^') {
            let r = self.rational()?;
            Ok(Expr::pow(base, r))
        } else {
            Ok(base)
        }
    }

    fn integer(&mut self) -> PResult<i64> {
        let neg = self.eat('-');
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Num(s) if s.chars().all(|c| c.is_ascii_digit()) => {
                self.bump();
                let v: i64 = s.parse().map_err(|_| (pos, format!("integer '{s}' out of range")))?;
                Ok(if neg { -v } else { v })
            }
            _ => Err(self.unexpected("expected an integer exponent")),
        }
    }

    fn rational(&mut self) -> PResult<Rational> {
        if self.eat('(') {
            let num = self.integer()?;
            let den = if self.eat('/') {
                let pos = self.pos();
                let d = self.integer()?;
                if d == 0 {
                    return Err((pos, "zero denominator in exponent".into()));
                }
                d
            } else {
                1
            };
            self.expect(')')?;
            Ok(Rational::new(num, den))
        } else {
            Ok(Rational::integer(self.integer()?))
        }
    }

    fn atom(&mut self) -> PResult<Expr> {
        let pos = self.pos();
        match self.peek().clone() {
            Tok::Num(s) => {
                self.bump();
                let v: f64 = s.parse().map_err(|_| (pos, format!("malformed number '{s}'")))?;
                if !v.is_finite() {
                    return Err((pos, format!("number '{s}' is not finite")));
                }
                Ok(Expr::constant(v))
            }
            Tok::Ident(name) => {
                self.bump();
                if let Some(func) = Func::from_name(&name) {
                    if self.eat('(') {
                        let arg = self.expr()?;
                        self.expect(')')?;
                        return Ok(Expr::call(func, arg));
                    }
                }
                self.scope
                    .lookup(&name)
                    .ok_or_else(|| (pos, format!("unknown identifier '{name}'")))
            }
            Tok::Sym('(') => {
                self.bump();
                let e = self.expr()?;
                self.expect(')')?;
                Ok(e)
            }
            _ => Err(self.unexpected("expected a number, variable, function or '('")),
        }
    }
}

/// Negation as the parser builds it, so printed `a - b*c` parses back to the
/// same tree the printer started from.
pub(crate) fn negate(e: Expr) -> Expr {
    match e.node() {
        Node::Const(c) => Expr::constant(-c),
        Node::Mul(fs) => match fs[0].as_const() {
            Some(c) if c == -1.0 => Expr::product(fs[1..].to_vec()),
            Some(c) => {
                let mut v = fs.clone();
                v[0] = Expr::constant(-c);
                Expr::product(v)
            }
            None => {
                let mut v = Vec::with_capacity(fs.len() + 1);
                v.push(Expr::constant(-1.0));
                v.extend(fs.iter().cloned());
                Expr::product(v)
            }
        },
        _ => Expr::product(vec![Expr::constant(-1.0), e]),
    }
}

/// Parses one expression over the variables in `scope`.
pub fn parse_expression(text: &str, scope: &VarScope) -> Result<Expr, ParseError> {
    parse_inner(text, scope).map_err(|(pos, message)| {
        let (line, column) = line_col(text, pos);
        ParseError { line, column, message }
    })
}

/// Parses `text`, reporting errors as a byte offset into `text`.
pub(crate) fn parse_inner(text: &str, scope: &VarScope) -> PResult<Expr> {
    let lexed = lex(text)?;
    let mut p = Parser { toks: lexed.toks, at: 0, scope };
    let e = p.expr()?;
    if *p.peek() != Tok::End {
        return Err(p.unexpected("expected an operator or end of input"));
    }
    Ok(e)
}
