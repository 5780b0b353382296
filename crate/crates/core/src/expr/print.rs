use std::fmt::{self, Write};

use super::{Expr, Node};

/// Position an expression is printed in; decides where parentheses go.
#[derive(Clone, Copy, PartialEq, Eq)]
enum Ctx {
    /// Top level or first term of a sum: a leading minus is fine.
    Sum,
    /// Operand after `+`/`-` in a sum.
    Term,
    /// Operand of `*` or `/`.
    Factor,
    /// Base of `^`.
    Base,
}

/// Printer for an [`Expr`] with optional variable names.
///
/// Without names, states print as `x1, x2, ...` and inputs as `u1, u2, ...`.
pub struct ExprDisplay<'a> {
    expr: &'a Expr,
    states: Option<&'a [String]>,
    inputs: Option<&'a [String]>,
}

impl<'a> ExprDisplay<'a> {
    pub(super) fn new(expr: &'a Expr, states: Option<&'a [String]>, inputs: Option<&'a [String]>) -> Self {
        Self { expr, states, inputs }
    }

    fn var(&self, out: &mut dyn Write, names: Option<&[String]>, prefix: char, i: usize) -> fmt::Result {
        match names.and_then(|n| n.get(i)) {
            Some(name) => out.write_str(name),
            None => write!(out, "{}{}", prefix, i + 1),
        }
    }

    fn write(&self, out: &mut dyn Write, e: &Expr, ctx: Ctx) -> fmt::Result {
        match e.node() {
            Node::Const(c) => {
                if *c < 0.0 && ctx != Ctx::Sum {
                    write!(out, "({})", c)
                } else {
                    write!(out, "{}", c)
                }
            }
            Node::State(i) => self.var(out, self.states, 'x', *i),
            Node::Input(i) => self.var(out, self.inputs, 'u', *i),
            Node::Neg(a) => self.wrap(out, ctx != Ctx::Sum, |s, out| {
                out.write_char('-')?;
                s.write(out, a, Ctx::Factor)
            }),
            Node::Add(terms) => self.wrap(out, ctx != Ctx::Sum, |s, out| {
                for (k, t) in terms.iter().enumerate() {
                    if k == 0 {
                        s.write(out, t, Ctx::Sum)?;
                    } else if let Some(pos) = negated_term(t) {
                        out.write_str(" - ")?;
                        s.write(out, &pos, Ctx::Term)?;
                    } else {
                        out.write_str(" + ")?;
                        s.write(out, t, Ctx::Term)?;
                    }
                }
                Ok(())
            }),
            Node::Mul(factors) => {
                let leading_neg = factors[0].as_const().is_some_and(|c| c < 0.0);
                let paren = matches!(ctx, Ctx::Factor | Ctx::Base) || (leading_neg && ctx != Ctx::Sum);
                self.wrap(out, paren, |s, out| {
                    let mut rest = &factors[..];
                    if factors.len() > 1 && factors[0].as_const() == Some(-1.0) {
                        out.write_char('-')?;
                        rest = &factors[1..];
                    } else if leading_neg {
                        write!(out, "{}", factors[0].as_const().unwrap())?;
                        out.write_char('*')?;
                        rest = &factors[1..];
                    }
                    for (k, f) in rest.iter().enumerate() {
                        if k > 0 {
                            out.write_char('*')?;
                        }
                        s.write(out, f, Ctx::Factor)?;
                    }
                    Ok(())
                })
            }
            Node::Div(a, b) => self.wrap(out, matches!(ctx, Ctx::Factor | Ctx::Base), |s, out| {
                s.write(out, a, Ctx::Factor)?;
                out.write_char('/')?;
                s.write(out, b, Ctx::Factor)
            }),
            Node::Pow(b, r) => self.wrap(out, ctx == Ctx::Base, |s, out| {
                s.write(out, b, Ctx::Base)?;
                if r.is_integer() && r.num() >= 0 {
                    write!(out, "^{}", r.num())
                } else {
                    write!(out, "^({})", r)
                }
            }),
            Node::Call(f, a) => {
                write!(out, "{}(", f.name())?;
                self.write(out, a, Ctx::Sum)?;
                out.write_char(')')
            }
        }
    }

    fn wrap(
        &self,
        out: &mut dyn Write,
        paren: bool,
        body: impl FnOnce(&Self, &mut dyn Write) -> fmt::Result,
    ) -> fmt::Result {
        if paren {
            out.write_char('(')?;
        }
        body(self, out)?;
        if paren {
            out.write_char(')')?;
        }
        Ok(())
    }
}

/// If `t` reads as `-(something)` inside a sum, returns the positive part.
fn negated_term(t: &Expr) -> Option<Expr> {
    match t.node() {
        Node::Const(c) if *c < 0.0 => Some(Expr::constant(-c)),
        Node::Mul(fs) => {
            let c = fs[0].as_const()?;
            if c >= 0.0 {
                return None;
            }
            if c == -1.0 {
                Some(Expr::product(fs[1..].to_vec()))
            } else {
                let mut v = fs.clone();
                v[0] = Expr::constant(-c);
                Some(Expr::product(v))
            }
        }
        _ => None,
    }
}

impl fmt::Display for ExprDisplay<'_> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.write(f, self.expr, Ctx::Sum)
    }
}
