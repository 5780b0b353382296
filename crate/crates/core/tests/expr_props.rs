use proptest::prelude::*;
use triform::expr::{Func, Node};
use triform::{differentiate, parse_expression, simplify, Expr, Rational, VarScope};

const N: usize = 3;

fn leaf() -> impl Strategy<Value = Expr> {
    prop_oneof![
        (0..N).prop_map(Expr::state),
        (-6i32..=6).prop_map(|k| Expr::constant(f64::from(k) / 2.0)),
    ]
}

fn exponent() -> impl Strategy<Value = Rational> {
    prop_oneof![
        Just(Rational::integer(2)),
        Just(Rational::integer(3)),
        Just(Rational::integer(-1)),
        Just(Rational::new(1, 3)),
        Just(Rational::new(2, 3)),
        Just(Rational::new(1, 2)),
    ]
}

fn func() -> impl Strategy<Value = Func> {
    prop_oneof![Just(Func::Sin), Just(Func::Cos), Just(Func::Exp), Just(Func::Log), Just(Func::Cbrt)]
}

/// Random expressions of depth at most 6.
fn expr() -> impl Strategy<Value = Expr> {
    leaf().prop_recursive(6, 48, 3, |inner| {
        prop_oneof![
            inner.clone().prop_map(Expr::neg),
            prop::collection::vec(inner.clone(), 2..=3).prop_map(Expr::sum),
            prop::collection::vec(inner.clone(), 2..=3).prop_map(Expr::product),
            (inner.clone(), inner.clone()).prop_map(|(a, b)| Expr::div(a, b)),
            (inner.clone(), exponent()).prop_map(|(a, r)| Expr::pow(a, r)),
            (func(), inner).prop_map(|(f, a)| Expr::call(f, a)),
        ]
    })
}

fn point() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0f64..2.0, N)
}

/// True when every power base, denominator and function argument is at
/// least 0.1 away from zero at `x`, so the expression is smooth near `x`.
fn away_from_singularities(e: &Expr, x: &[f64]) -> bool {
    let clear = |a: &Expr| a.evaluate(x).is_ok_and(|v| v.abs() > 0.1);
    let ok = match e.node() {
        Node::Const(_) | Node::State(_) | Node::Input(_) => true,
        Node::Pow(b, r) => r.is_integer() && r.num() > 0 || clear(b),
        Node::Div(_, d) => clear(d),
        Node::Call(Func::Log | Func::Cbrt | Func::Abs, a) => clear(a),
        _ => true,
    };
    ok && children(e).iter().all(|c| away_from_singularities(c, x))
}

fn children(e: &Expr) -> Vec<Expr> {
    match e.node() {
        Node::Const(_) | Node::State(_) | Node::Input(_) => Vec::new(),
        Node::Neg(a) | Node::Pow(a, _) | Node::Call(_, a) => vec![a.clone()],
        Node::Div(a, b) => vec![a.clone(), b.clone()],
        Node::Add(v) | Node::Mul(v) => v.clone(),
    }
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 400, ..ProptestConfig::default() })]

    #[test]
    fn derivative_matches_central_differences(e in expr(), x in point(), j in 0..N) {
        let f0 = e.evaluate(&x);
        prop_assume!(f0.is_ok_and(|v| v.abs() < 1e6));
        prop_assume!(away_from_singularities(&e, &x));
        let h = 1e-5;
        let mut xp = x.clone();
        let mut xm = x.clone();
        xp[j] += h;
        xm[j] -= h;
        let (fp, fm) = (e.evaluate(&xp).unwrap(), e.evaluate(&xm).unwrap());
        let fd = (fp - fm) / (2.0 * h);
        let sym = differentiate(&e, j).evaluate(&x).unwrap();
        prop_assert!(close(sym, fd, 1e-6), "{e}: d/dx{} = {sym} vs fd {fd}", j + 1);
    }

    #[test]
    fn simplify_preserves_values(e in expr(), xs in prop::collection::vec(point(), 100)) {
        let s = simplify(&e);
        for x in &xs {
            let Ok(a) = e.evaluate(x) else { continue };
            if !a.is_finite() || a.abs() > 1e8 {
                continue;
            }
            let b = s.evaluate(x);
            prop_assert!(b.is_ok(), "{e} -> {s} undefined at {x:?}");
            let b = b.unwrap();
            prop_assert!(close(a, b, 1e-12), "{e} -> {s} at {x:?}: {a} vs {b}");
        }
    }

    #[test]
    fn printed_normal_form_parses_back(e in expr()) {
        let s = simplify(&e);
        let text = s.to_string();
        let back = parse_expression(&text, &VarScope::numbered(N, 0)).unwrap();
        prop_assert_eq!(back, s.clone(), "printed as {}", text);
    }
}
