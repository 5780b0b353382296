//! Terminating rewrite pass producing a light normal form.
//!
//! Normal form: sums and products are flat, constants are folded (a sum keeps
//! its constant last, a product its coefficient first), like terms and equal
//! power bases are merged, and the remaining operands are sorted by the
//! structural order on [`Expr`]. `Div`, `Neg` and `cbrt` never survive.

use std::collections::BTreeMap;

use super::eval::{apply_func, pow_rational};
use super::{Expr, Func, Node, Rational};

const MAX_PASSES: usize = 8;
/// Products of sums are expanded only while the result stays this small.
const MAX_EXPANSION_TERMS: usize = 64;

/// Simplifies `e`; the result agrees with `e` wherever `e` is defined.
pub fn simplify(e: &Expr) -> Expr {
    let mut cur = e.clone();
    for _ in 0..MAX_PASSES {
        let next = pass(&cur);
        if next == cur {
            return next;
        }
        cur = next;
    }
    cur
}

fn pass(e: &Expr) -> Expr {
    match e.node() {
        Node::Const(_) | Node::State(_) | Node::Input(_) => e.clone(),
        Node::Neg(a) => negate(pass(a)),
        Node::Add(ts) => sum(ts.iter().map(pass).collect()),
        Node::Mul(fs) => product(fs.iter().map(pass).collect()),
        Node::Div(a, b) => product(vec![pass(a), power(pass(b), Rational::integer(-1))]),
        Node::Pow(b, r) => power(pass(b), *r),
        Node::Call(f, a) => call(*f, pass(a)),
    }
}

pub(crate) fn negate(e: Expr) -> Expr {
    product(vec![Expr::constant(-1.0), e])
}

/// Splits a normal-form term into its numeric coefficient and the rest.
fn split_coefficient(t: &Expr) -> (f64, Expr) {
    if let Node::Mul(fs) = t.node() {
        if let Some(c) = fs[0].as_const() {
            return (c, Expr::product(fs[1..].to_vec()));
        }
    }
    (1.0, t.clone())
}

fn with_coefficient(c: f64, rest: Expr) -> Expr {
    if c == 1.0 {
        return rest;
    }
    let mut v = vec![Expr::constant(c)];
    match rest.node() {
        Node::Mul(fs) => v.extend(fs.iter().cloned()),
        _ => v.push(rest),
    }
    Expr::product(v)
}

fn sum(terms: Vec<Expr>) -> Expr {
    let mut flat = Vec::with_capacity(terms.len());
    for t in terms {
        match t.node() {
            Node::Add(inner) => flat.extend(inner.iter().cloned()),
            _ => flat.push(t),
        }
    }
    let mut constant = 0.0;
    let mut groups: BTreeMap<Expr, f64> = BTreeMap::new();
    for t in flat {
        if let Some(c) = t.as_const() {
            constant += c;
            continue;
        }
        let (c, rest) = split_coefficient(&t);
        *groups.entry(rest).or_insert(0.0) += c;
    }
    let mut out: Vec<Expr> = groups
        .into_iter()
        .filter(|(_, c)| *c != 0.0)
        .map(|(rest, c)| with_coefficient(c, rest))
        .collect();
    if constant != 0.0 || out.is_empty() {
        out.push(Expr::constant(constant));
    }
    Expr::sum(out)
}

fn base_and_exponent(f: &Expr) -> (Expr, Rational) {
    match f.node() {
        Node::Pow(b, r) => (b.clone(), *r),
        _ => (f.clone(), Rational::ONE),
    }
}

fn product(factors: Vec<Expr>) -> Expr {
    let mut flat = Vec::with_capacity(factors.len());
    for f in factors {
        match f.node() {
            Node::Mul(inner) => flat.extend(inner.iter().cloned()),
            _ => flat.push(f),
        }
    }
    let mut coef = 1.0;
    // Exponents that would overflow when merged stay as separate factors.
    let mut bases: BTreeMap<Expr, Rational> = BTreeMap::new();
    let mut unmerged: Vec<Expr> = Vec::new();
    for f in flat {
        if let Some(c) = f.as_const() {
            coef *= c;
            continue;
        }
        let (b, r) = base_and_exponent(&f);
        match bases.get_mut(&b) {
            Some(acc) => match acc.checked_add(r) {
                Some(s) => *acc = s,
                None => unmerged.push(f),
            },
            None => {
                bases.insert(b, r);
            }
        }
    }
    if coef == 0.0 {
        return Expr::zero();
    }
    let mut rest: Vec<Expr> = Vec::new();
    for (b, r) in bases {
        if r.is_zero() {
            continue;
        }
        let p = power(b, r);
        match p.as_const() {
            Some(c) => coef *= c,
            None => match p.node() {
                Node::Mul(inner) => {
                    for g in inner {
                        match g.as_const() {
                            Some(c) => coef *= c,
                            None => rest.push(g.clone()),
                        }
                    }
                }
                _ => rest.push(p),
            },
        }
    }
    rest.extend(unmerged);
    if coef == 0.0 {
        return Expr::zero();
    }
    rest.sort();

    if let Some(expanded) = expand(coef, &rest) {
        return expanded;
    }
    if coef != 1.0 || rest.is_empty() {
        rest.insert(0, Expr::constant(coef));
    }
    Expr::product(rest)
}

/// Distributes a product over the sums among its factors when small enough.
fn expand(coef: f64, factors: &[Expr]) -> Option<Expr> {
    let mut count = 1usize;
    let mut any_sum = false;
    for f in factors {
        if let Node::Add(ts) = f.node() {
            any_sum = true;
            count = count.saturating_mul(ts.len());
        }
    }
    if !any_sum || count > MAX_EXPANSION_TERMS {
        return None;
    }
    let mut partials: Vec<Vec<Expr>> = vec![vec![Expr::constant(coef)]];
    for f in factors {
        match f.node() {
            Node::Add(ts) => {
                let mut next = Vec::with_capacity(partials.len() * ts.len());
                for p in &partials {
                    for t in ts {
                        let mut q = p.clone();
                        q.push(t.clone());
                        next.push(q);
                    }
                }
                partials = next;
            }
            _ => {
                for p in &mut partials {
                    p.push(f.clone());
                }
            }
        }
    }
    Some(sum(partials.into_iter().map(product).collect()))
}

fn power(base: Expr, r: Rational) -> Expr {
    if r.is_zero() {
        return Expr::one();
    }
    if r.is_one() {
        return base;
    }
    match base.node() {
        Node::Const(c) => match pow_rational(*c, r) {
            Ok(v) if v.is_finite() => Expr::constant(v),
            _ => Expr::pow(base, r),
        },
        Node::Pow(inner, s) => {
            // (b^s)^r = b^(s r) is safe when b >= 0 is forced (even inner
            // denominator) or both roots are odd.
            let safe = !s.has_odd_den() || r.has_odd_den();
            match s.checked_mul(r) {
                Some(sr) if safe => power(inner.clone(), sr),
                _ => Expr::pow(base, r),
            }
        }
        Node::Mul(fs) if r.has_odd_den() => product(fs.iter().map(|f| power(f.clone(), r)).collect()),
        _ => Expr::pow(base, r),
    }
}

fn call(f: Func, a: Expr) -> Expr {
    if f == Func::Cbrt {
        return power(a, Rational::new(1, 3));
    }
    if let Some(c) = a.as_const() {
        if let Ok(v) = apply_func(f, c) {
            if v.is_finite() {
                return Expr::constant(v);
            }
        }
    }
    Expr::call(f, a)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse_expression, VarScope};

    fn p(s: &str) -> Expr {
        parse_expression(s, &VarScope::numbered(3, 1)).unwrap()
    }

    fn s(text: &str) -> String {
        simplify(&p(text)).to_string()
    }

    #[test]
    fn zero_times_and_power_merge() {
        assert_eq!(s("0*x2 + x3^3"), "x3^3");
        assert_eq!(s("x3^2 * x3^1"), "x3^3");
        assert_eq!(s("1*(x1 + 0)"), "x1");
    }

    #[test]
    fn like_terms_collect() {
        assert_eq!(s("x1 + 2*x1 - 3*x1"), "0");
        assert_eq!(s("x1*x2 + x2*x1"), "2*x1*x2");
        assert_eq!(s("2 + 3 + x1 - 5"), "x1");
    }

    #[test]
    fn division_and_cbrt_normalize_to_powers() {
        assert_eq!(s("x1/x1"), "1");
        assert_eq!(s("cbrt(x1)^2"), "x1^(2/3)");
        assert_eq!(s("(x1^3)^(1/3)"), "x1");
    }

    #[test]
    fn unsafe_power_merges_are_left_alone() {
        // (x^2)^(1/2) = |x|, not x.
        assert_eq!(s("(x1^2)^(1/2)"), "(x1^2)^(1/2)");
    }

    #[test]
    fn small_products_of_sums_expand() {
        assert_eq!(s("(x1 + 1)*(x1 - 1)"), "x1^2 - 1");
    }

    #[test]
    fn constants_fold() {
        assert_eq!(s("2^3 * x1"), "8*x1");
        assert_eq!(s("(-8)^(1/3)"), "-2");
        // even root of a negative constant stays symbolic
        assert_eq!(s("(-8)^(1/2)"), "(-8)^(1/2)");
    }
}
