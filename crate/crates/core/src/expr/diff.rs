use super::simplify::simplify;
use super::{Expr, Func, Node, Rational};

/// Exact partial derivative with respect to state `var`, simplified.
pub fn differentiate(e: &Expr, var: usize) -> Expr {
    simplify(&raw(e, var))
}

fn raw(e: &Expr, v: usize) -> Expr {
    if !e.depends_on_state(v) {
        return Expr::zero();
    }
    match e.node() {
        Node::Const(_) | Node::Input(_) => Expr::zero(),
        Node::State(i) => {
            if *i == v {
                Expr::one()
            } else {
                Expr::zero()
            }
        }
        Node::Neg(a) => Expr::neg(raw(a, v)),
        Node::Add(ts) => Expr::sum(ts.iter().filter(|t| t.depends_on_state(v)).map(|t| raw(t, v)).collect()),
        Node::Mul(fs) => {
            let mut terms = Vec::new();
            for (k, f) in fs.iter().enumerate() {
                if !f.depends_on_state(v) {
                    continue;
                }
                let mut g = fs.clone();
                g[k] = raw(f, v);
                terms.push(Expr::product(g));
            }
            Expr::sum(terms)
        }
        Node::Div(a, b) => {
            let num = Expr::product(vec![raw(a, v), b.clone()]) - Expr::product(vec![a.clone(), raw(b, v)]);
            Expr::div(num, Expr::powi(b.clone(), 2))
        }
        Node::Pow(b, r) => {
            let r1 = r.checked_sub(Rational::ONE).expect("exponent overflow");
            Expr::product(vec![Expr::constant(r.to_f64()), Expr::pow(b.clone(), r1), raw(b, v)])
        }
        Node::Call(f, a) => {
            let da = raw(a, v);
            let outer = match f {
                Func::Sin => Expr::call(Func::Cos, a.clone()),
                Func::Cos => Expr::neg(Expr::call(Func::Sin, a.clone())),
                Func::Exp => e.clone(),
                Func::Log => Expr::powi(a.clone(), -1),
                Func::Cbrt => Expr::product(vec![Expr::constant(1.0 / 3.0), Expr::pow(a.clone(), Rational::new(-2, 3))]),
                Func::Abs => Expr::product(vec![a.clone(), Expr::powi(Expr::call(Func::Abs, a.clone()), -1)]),
            };
            Expr::product(vec![outer, da])
        }
    }
}
