use super::{Expr, Func, Node, Rational};

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum EvalError {
    #[error("even root of negative number {base} (exponent {exp})")]
    EvenRootOfNegative { base: f64, exp: Rational },
    #[error("division by zero")]
    DivisionByZero,
    #[error("log of non-positive number {0}")]
    LogDomain(f64),
    #[error("non-finite result")]
    NonFinite,
    #[error("variable index {0} out of range")]
    MissingVariable(usize),
}

/// `base^(p/q)` with real odd-root semantics when `q` is odd.
pub fn pow_rational(base: f64, exp: Rational) -> Result<f64, EvalError> {
    let (p, q) = (exp.num(), exp.den());
    if q == 1 {
        if p < 0 && base == 0.0 {
            return Err(EvalError::DivisionByZero);
        }
        return Ok(match i32::try_from(p) {
            Ok(pi) => base.powi(pi),
            Err(_) => base.powf(p as f64),
        });
    }
    if base < 0.0 && q % 2 == 0 {
        return Err(EvalError::EvenRootOfNegative { base, exp });
    }
    if base == 0.0 {
        return if p > 0 { Ok(0.0) } else { Err(EvalError::DivisionByZero) };
    }
    let mag = base.abs();
    let root = match q {
        2 => mag.sqrt(),
        3 => mag.cbrt(),
        _ => mag.powf(1.0 / q as f64),
    };
    let val = match i32::try_from(p) {
        Ok(pi) => root.powi(pi),
        Err(_) => root.powf(p as f64),
    };
    // q is odd here whenever the base is negative.
    Ok(if base < 0.0 && p % 2 != 0 { -val } else { val })
}

pub(super) fn apply_func(f: Func, a: f64) -> Result<f64, EvalError> {
    Ok(match f {
        Func::Sin => a.sin(),
        Func::Cos => a.cos(),
        Func::Exp => a.exp(),
        Func::Log => {
            if a <= 0.0 {
                return Err(EvalError::LogDomain(a));
            }
            a.ln()
        }
        Func::Cbrt => a.cbrt(),
        Func::Abs => a.abs(),
    })
}

fn eval(e: &Expr, x: &[f64], u: &[f64]) -> Result<f64, EvalError> {
    Ok(match e.node() {
        Node::Const(c) => *c,
        Node::State(i) => *x.get(*i).ok_or(EvalError::MissingVariable(*i))?,
        Node::Input(j) => *u.get(*j).ok_or(EvalError::MissingVariable(*j))?,
        Node::Neg(a) => -eval(a, x, u)?,
        Node::Add(ts) => {
            let mut s = 0.0;
            for t in ts {
                s += eval(t, x, u)?;
            }
            s
        }
        Node::Mul(fs) => {
            let mut p = 1.0;
            for f in fs {
                p *= eval(f, x, u)?;
            }
            p
        }
        Node::Div(a, b) => {
            let d = eval(b, x, u)?;
            if d == 0.0 {
                return Err(EvalError::DivisionByZero);
            }
            eval(a, x, u)? / d
        }
        Node::Pow(b, r) => pow_rational(eval(b, x, u)?, *r)?,
        Node::Call(f, a) => apply_func(*f, eval(a, x, u)?)?,
    })
}

impl Expr {
    /// Evaluates an input-free expression at state `x`.
    pub fn evaluate(&self, x: &[f64]) -> Result<f64, EvalError> {
        self.evaluate_with_inputs(x, &[])
    }

    /// Evaluates at state `x` and input `u`.
    pub fn evaluate_with_inputs(&self, x: &[f64], u: &[f64]) -> Result<f64, EvalError> {
        let v = eval(self, x, u)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse_expression, VarScope};

    fn ev(s: &str, x: &[f64]) -> Result<f64, EvalError> {
        parse_expression(s, &VarScope::numbered(3, 1)).unwrap().evaluate(x)
    }

    #[test]
    fn cube_at_point() {
        assert_eq!(ev("x3^3", &[0.5, -1.0, 2.0]).unwrap(), 8.0);
    }

    #[test]
    fn odd_root_of_negative_base() {
        let v = ev("x3^(2/3)", &[0.0, 0.0, -8.0]).unwrap();
        assert!((v - 4.0).abs() < 1e-15, "{v}");
        let v = ev("x3^(1/3)", &[0.0, 0.0, -8.0]).unwrap();
        assert!((v + 2.0).abs() < 1e-15, "{v}");
        let v = ev("x3^(-1/3)", &[0.0, 0.0, -8.0]).unwrap();
        assert!((v + 0.5).abs() < 1e-15, "{v}");
    }

    #[test]
    fn even_root_of_negative_base_fails() {
        assert!(matches!(
            ev("x3^(1/2)", &[0.0, 0.0, -1.0]),
            Err(EvalError::EvenRootOfNegative { .. })
        ));
        assert!(matches!(ev("(-8)^(1/2)", &[0.0; 3]), Err(EvalError::EvenRootOfNegative { .. })));
    }

    #[test]
    fn division_by_zero() {
        assert_eq!(ev("x1/x2", &[1.0, 0.0, 0.0]), Err(EvalError::DivisionByZero));
        assert_eq!(ev("x2^(-1)", &[1.0, 0.0, 0.0]), Err(EvalError::DivisionByZero));
        assert_eq!(ev("x2^(-2/3)", &[1.0, 0.0, 0.0]), Err(EvalError::DivisionByZero));
    }

    #[test]
    fn log_domain() {
        assert!(matches!(ev("log(x1)", &[-1.0, 0.0, 0.0]), Err(EvalError::LogDomain(_))));
        assert!((ev("log(exp(x1))", &[0.7, 0.0, 0.0]).unwrap() - 0.7).abs() < 1e-15);
    }
}
