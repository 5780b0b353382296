//! Immutable symbolic expressions over state and input variables.
//!
//! Expressions are reference-counted trees ([`Expr`] wraps an `Arc<Node>`), so
//! cloning is cheap and sub-trees are shared between derived formulas. Powers
//! carry an exact [`Rational`] exponent. For odd denominators negative bases
//! are allowed and follow real odd-root semantics, i.e.
//! `x^(p/q) = sign(x)^p * |x|^(p/q)`.

mod diff;
mod eval;
mod parse;
mod print;
mod simplify;

use std::cmp::Ordering;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::sync::Arc;

pub use diff::differentiate;
pub use eval::{pow_rational, EvalError};
pub use parse::{parse_expression, ParseError, VarScope};
pub(crate) use parse::{line_col, parse_inner};
pub use print::ExprDisplay;
pub use simplify::simplify;

/// Exact exponent `num/den` kept in lowest terms with `den >= 1`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Rational {
    num: i64,
    den: i64,
}

fn gcd(a: i128, b: i128) -> i128 {
    let (mut a, mut b) = (a.abs(), b.abs());
    while b != 0 {
        let t = a % b;
        a = b;
        b = t;
    }
    a
}

impl Rational {
    /// Builds `num/den` in lowest terms.
    ///
    /// Panics when `den == 0`.
    pub fn new(num: i64, den: i64) -> Self {
        Self::from_i128(num as i128, den as i128).expect("rational out of range or zero denominator")
    }

    fn from_i128(num: i128, den: i128) -> Option<Self> {
        if den == 0 {
            return None;
        }
        let g = gcd(num, den).max(1);
        let (mut n, mut d) = (num / g, den / g);
        if d < 0 {
            n = -n;
            d = -d;
        }
        Some(Self {
            num: i64::try_from(n).ok()?,
            den: i64::try_from(d).ok()?,
        })
    }

    pub const fn integer(n: i64) -> Self {
        Self { num: n, den: 1 }
    }

    pub const ZERO: Rational = Rational::integer(0);
    pub const ONE: Rational = Rational::integer(1);

    pub fn num(&self) -> i64 {
        self.num
    }

    pub fn den(&self) -> i64 {
        self.den
    }

    pub fn is_integer(&self) -> bool {
        self.den == 1
    }

    pub fn is_zero(&self) -> bool {
        self.num == 0
    }

    pub fn is_one(&self) -> bool {
        self.num == 1 && self.den == 1
    }

    pub fn has_odd_den(&self) -> bool {
        self.den % 2 != 0
    }

    pub fn to_f64(&self) -> f64 {
        self.num as f64 / self.den as f64
    }

    pub fn checked_add(self, other: Self) -> Option<Self> {
        Self::from_i128(
            self.num as i128 * other.den as i128 + other.num as i128 * self.den as i128,
            self.den as i128 * other.den as i128,
        )
    }

    pub fn checked_sub(self, other: Self) -> Option<Self> {
        self.checked_add(Self { num: -other.num, den: other.den })
    }

    pub fn checked_mul(self, other: Self) -> Option<Self> {
        Self::from_i128(
            self.num as i128 * other.num as i128,
            self.den as i128 * other.den as i128,
        )
    }
}

impl fmt::Display for Rational {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den == 1 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/{}", self.num, self.den)
        }
    }
}

/// Elementary functions accepted by the grammar.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Log,
    Cbrt,
    Abs,
}

impl Func {
    pub fn name(&self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Log => "log",
            Func::Cbrt => "cbrt",
            Func::Abs => "abs",
        }
    }

    pub fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "log" => Func::Log,
            "cbrt" => Func::Cbrt,
            "abs" => Func::Abs,
            _ => return None,
        })
    }
}

/// One node of an expression tree.
#[derive(Debug)]
pub enum Node {
    Const(f64),
    /// Zero-based state index (`x1` is `State(0)`).
    State(usize),
    /// Zero-based input index (`u1` is `Input(0)`).
    Input(usize),
    Neg(Expr),
    Add(Vec<Expr>),
    Mul(Vec<Expr>),
    Div(Expr, Expr),
    Pow(Expr, Rational),
    Call(Func, Expr),
}

impl Node {
    fn rank(&self) -> u8 {
        match self {
            Node::Const(_) => 0,
            Node::State(_) => 1,
            Node::Input(_) => 2,
            Node::Pow(..) => 3,
            Node::Call(..) => 4,
            Node::Mul(_) => 5,
            Node::Add(_) => 6,
            Node::Div(..) => 7,
            Node::Neg(_) => 8,
        }
    }
}

/// Shared, immutable expression handle.
#[derive(Clone)]
pub struct Expr(Arc<Node>);

impl Expr {
    fn from_node(node: Node) -> Self {
        Expr(Arc::new(node))
    }

    pub fn node(&self) -> &Node {
        &self.0
    }

    pub fn constant(value: f64) -> Self {
        // -0.0 and 0.0 must compare equal structurally.
        let value = if value == 0.0 { 0.0 } else { value };
        Self::from_node(Node::Const(value))
    }

    pub fn zero() -> Self {
        Self::constant(0.0)
    }

    pub fn one() -> Self {
        Self::constant(1.0)
    }

    pub fn state(index: usize) -> Self {
        Self::from_node(Node::State(index))
    }

    pub fn input(index: usize) -> Self {
        Self::from_node(Node::Input(index))
    }

    pub fn neg(arg: Expr) -> Self {
        Self::from_node(Node::Neg(arg))
    }

    pub fn sum(terms: Vec<Expr>) -> Self {
        match terms.len() {
            0 => Self::zero(),
            1 => terms.into_iter().next().unwrap(),
            _ => Self::from_node(Node::Add(terms)),
        }
    }

    pub fn product(factors: Vec<Expr>) -> Self {
        match factors.len() {
            0 => Self::one(),
            1 => factors.into_iter().next().unwrap(),
            _ => Self::from_node(Node::Mul(factors)),
        }
    }

    pub fn div(num: Expr, den: Expr) -> Self {
        Self::from_node(Node::Div(num, den))
    }

    pub fn pow(base: Expr, exp: Rational) -> Self {
        Self::from_node(Node::Pow(base, exp))
    }

    pub fn powi(base: Expr, exp: i64) -> Self {
        Self::pow(base, Rational::integer(exp))
    }

    pub fn call(func: Func, arg: Expr) -> Self {
        Self::from_node(Node::Call(func, arg))
    }

    pub fn as_const(&self) -> Option<f64> {
        match self.node() {
            Node::Const(c) => Some(*c),
            _ => None,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.as_const() == Some(0.0)
    }

    pub fn is_one(&self) -> bool {
        self.as_const() == Some(1.0)
    }

    fn children(&self) -> Vec<&Expr> {
        match self.node() {
            Node::Const(_) | Node::State(_) | Node::Input(_) => Vec::new(),
            Node::Neg(a) | Node::Pow(a, _) | Node::Call(_, a) => vec![a],
            Node::Div(a, b) => vec![a, b],
            Node::Add(v) | Node::Mul(v) => v.iter().collect(),
        }
    }

    /// True when the expression mentions state `index`.
    pub fn depends_on_state(&self, index: usize) -> bool {
        match self.node() {
            Node::State(i) => *i == index,
            _ => self.children().into_iter().any(|c| c.depends_on_state(index)),
        }
    }

    pub fn has_inputs(&self) -> bool {
        match self.node() {
            Node::Input(_) => true,
            _ => self.children().into_iter().any(Expr::has_inputs),
        }
    }

    /// Largest state index referenced, if any.
    pub fn max_state_index(&self) -> Option<usize> {
        match self.node() {
            Node::State(i) => Some(*i),
            _ => self.children().into_iter().filter_map(Expr::max_state_index).max(),
        }
    }

    pub fn max_input_index(&self) -> Option<usize> {
        match self.node() {
            Node::Input(i) => Some(*i),
            _ => self.children().into_iter().filter_map(Expr::max_input_index).max(),
        }
    }

    /// Number of nodes in the tree (shared sub-trees counted each time).
    pub fn size(&self) -> usize {
        1 + self.children().into_iter().map(Expr::size).sum::<usize>()
    }

    /// Replaces every input variable by the matching constant from `u`.
    pub fn substitute_inputs(&self, u: &[f64]) -> Expr {
        if !self.has_inputs() {
            return self.clone();
        }
        self.map_children(&|e: &Expr| match e.node() {
            Node::Input(j) => Some(Expr::constant(u[*j])),
            _ => None,
        })
    }

    fn map_children(&self, leaf: &dyn Fn(&Expr) -> Option<Expr>) -> Expr {
        if let Some(r) = leaf(self) {
            return r;
        }
        let m = |e: &Expr| e.map_children(leaf);
        match self.node() {
            Node::Const(_) | Node::State(_) | Node::Input(_) => self.clone(),
            Node::Neg(a) => Expr::neg(m(a)),
            Node::Add(v) => Expr::from_node(Node::Add(v.iter().map(m).collect())),
            Node::Mul(v) => Expr::from_node(Node::Mul(v.iter().map(m).collect())),
            Node::Div(a, b) => Expr::div(m(a), m(b)),
            Node::Pow(a, r) => Expr::pow(m(a), *r),
            Node::Call(f, a) => Expr::call(*f, m(a)),
        }
    }

    /// Printer using the given variable names.
    pub fn display<'a>(&'a self, states: &'a [String], inputs: &'a [String]) -> ExprDisplay<'a> {
        ExprDisplay::new(self, Some(states), Some(inputs))
    }
}

impl PartialEq for Expr {
    fn eq(&self, other: &Self) -> bool {
        if Arc::ptr_eq(&self.0, &other.0) {
            return true;
        }
        match (self.node(), other.node()) {
            (Node::Const(a), Node::Const(b)) => a.to_bits() == b.to_bits(),
            (Node::State(a), Node::State(b)) => a == b,
            (Node::Input(a), Node::Input(b)) => a == b,
            (Node::Neg(a), Node::Neg(b)) => a == b,
            (Node::Add(a), Node::Add(b)) | (Node::Mul(a), Node::Mul(b)) => a == b,
            (Node::Div(a1, b1), Node::Div(a2, b2)) => a1 == a2 && b1 == b2,
            (Node::Pow(a, r), Node::Pow(b, s)) => r == s && a == b,
            (Node::Call(f, a), Node::Call(g, b)) => f == g && a == b,
            _ => false,
        }
    }
}

impl Eq for Expr {}

impl Hash for Expr {
    fn hash<H: Hasher>(&self, state: &mut H) {
        let node = self.node();
        node.rank().hash(state);
        match node {
            Node::Const(c) => c.to_bits().hash(state),
            Node::State(i) | Node::Input(i) => i.hash(state),
            Node::Neg(a) => a.hash(state),
            Node::Add(v) | Node::Mul(v) => v.hash(state),
            Node::Div(a, b) => {
                a.hash(state);
                b.hash(state);
            }
            Node::Pow(a, r) => {
                a.hash(state);
                r.hash(state);
            }
            Node::Call(f, a) => {
                f.hash(state);
                a.hash(state);
            }
        }
    }
}

impl Ord for Expr {
    fn cmp(&self, other: &Self) -> Ordering {
        if Arc::ptr_eq(&self.0, &other.0) {
            return Ordering::Equal;
        }
        let (a, b) = (self.node(), other.node());
        match a.rank().cmp(&b.rank()) {
            Ordering::Equal => {}
            o => return o,
        }
        match (a, b) {
            (Node::Const(x), Node::Const(y)) => x.total_cmp(y),
            (Node::State(x), Node::State(y)) | (Node::Input(x), Node::Input(y)) => x.cmp(y),
            (Node::Neg(x), Node::Neg(y)) => x.cmp(y),
            (Node::Add(x), Node::Add(y)) | (Node::Mul(x), Node::Mul(y)) => x.cmp(y),
            (Node::Div(x1, y1), Node::Div(x2, y2)) => x1.cmp(x2).then_with(|| y1.cmp(y2)),
            (Node::Pow(x, r), Node::Pow(y, s)) => x.cmp(y).then_with(|| r.cmp(s)),
            (Node::Call(f, x), Node::Call(g, y)) => f.cmp(g).then_with(|| x.cmp(y)),
            _ => unreachable!("ranks matched"),
        }
    }
}

impl PartialOrd for Expr {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Debug for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "Expr({})", self)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        ExprDisplay::new(self, None, None).fmt(f)
    }
}

impl std::ops::Add for Expr {
    type Output = Expr;
    fn add(self, rhs: Expr) -> Expr {
        Expr::sum(vec![self, rhs])
    }
}

impl std::ops::Sub for Expr {
    type Output = Expr;
    fn sub(self, rhs: Expr) -> Expr {
        Expr::sum(vec![self, Expr::neg(rhs)])
    }
}

impl std::ops::Mul for Expr {
    type Output = Expr;
    fn mul(self, rhs: Expr) -> Expr {
        Expr::product(vec![self, rhs])
    }
}

impl std::ops::Neg for Expr {
    type Output = Expr;
    fn neg(self) -> Expr {
        Expr::neg(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_lowest_terms() {
        let r = Rational::new(4, -6);
        assert_eq!((r.num(), r.den()), (-2, 3));
        assert_eq!(Rational::new(2, 3).checked_sub(Rational::ONE), Some(Rational::new(-1, 3)));
        assert!(Rational::new(6, 3).is_integer());
    }

    #[test]
    fn structural_equality_ignores_sign_of_zero() {
        assert_eq!(Expr::constant(-0.0), Expr::zero());
        let a = Expr::state(0) + Expr::powi(Expr::state(2), 3);
        let b = Expr::state(0) + Expr::powi(Expr::state(2), 3);
        assert_eq!(a, b);
        assert_ne!(a, Expr::state(0) + Expr::powi(Expr::state(2), 2));
    }

    #[test]
    fn substitute_inputs_replaces_leaves() {
        let e = Expr::state(0) * Expr::input(0);
        let s = e.substitute_inputs(&[2.5]);
        assert!(!s.has_inputs());
        assert_eq!(s.evaluate(&[2.0]).unwrap(), 5.0);
    }
}
