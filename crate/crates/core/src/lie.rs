//! Symbolic Lie derivatives and the observability maps
//! `H_i = (h, L_f h, ..., L_f^{i-1} h)`.

use std::fmt::Write;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::expr::{differentiate, simplify, EvalError, Expr};
use crate::system::ControlAffineSystem;

/// Gradient of `a` with respect to the first `n` states.
pub fn gradient(a: &Expr, n: usize) -> Vec<Expr> {
    (0..n).map(|j| differentiate(a, j)).collect()
}

fn along(grad: &[Expr], field: &[Expr]) -> Expr {
    let terms = grad
        .iter()
        .zip(field)
        .filter(|(d, v)| !d.is_zero() && !v.is_zero())
        .map(|(d, v)| Expr::product(vec![d.clone(), v.clone()]))
        .collect();
    simplify(&Expr::sum(terms))
}

/// Lie derivative of `a` along an arbitrary vector field.
pub fn lie_derivative(field: &[Expr], a: &Expr) -> Expr {
    along(&gradient(a, field.len()), field)
}

/// `L_f a`.
pub fn lie_f(sys: &ControlAffineSystem, a: &Expr) -> Expr {
    lie_derivative(&sys.f, a)
}

/// `(L_{g_1} a, ..., L_{g_m} a)`.
pub fn lie_g(sys: &ControlAffineSystem, a: &Expr) -> Vec<Expr> {
    let grad = gradient(a, sys.n());
    (0..sys.m()).map(|j| along(&grad, &sys.g_column(j))).collect()
}

/// Memoized `L_f^k h`, their gradients, and `L_g L_f^k h`.
#[derive(Clone, Debug)]
pub struct LieTable {
    sys: Arc<ControlAffineSystem>,
    lf: Vec<Expr>,
    grads: Vec<Vec<Expr>>,
    lg: Vec<Vec<Expr>>,
}

impl LieTable {
    pub fn new(sys: Arc<ControlAffineSystem>) -> Self {
        let h = simplify(&sys.h);
        Self { sys, lf: vec![h], grads: Vec::new(), lg: Vec::new() }
    }

    pub fn system(&self) -> &Arc<ControlAffineSystem> {
        &self.sys
    }

    /// Makes `L_f^k h` (with gradient and `L_g L_f^k h`) available for `k <= order`.
    pub fn extend_to(&mut self, order: usize) {
        let n = self.sys.n();
        while self.grads.len() <= order {
            let k = self.grads.len();
            let grad = gradient(&self.lf[k], n);
            let lg = (0..self.sys.m()).map(|j| along(&grad, &self.sys.g_column(j))).collect();
            let next = along(&grad, &self.sys.f);
            self.grads.push(grad);
            self.lg.push(lg);
            self.lf.push(next);
        }
    }

    /// `L_f^k h`.
    pub fn lf(&mut self, k: usize) -> Expr {
        if k > 0 {
            self.extend_to(k - 1);
        }
        self.lf[k].clone()
    }

    /// `(L_{g_j} L_f^k h)_j`.
    pub fn lg(&mut self, k: usize) -> Vec<Expr> {
        self.extend_to(k);
        self.lg[k].clone()
    }

    pub fn grad(&mut self, k: usize) -> Vec<Expr> {
        self.extend_to(k);
        self.grads[k].clone()
    }

    /// Builds `H_order` together with `L_f^order h` and `L_g H_order`.
    pub fn observability_map(&mut self, order: usize) -> ObservabilityMap {
        assert!(order >= 1, "observability map order must be at least 1");
        self.extend_to(order);
        ObservabilityMap {
            order,
            components: self.lf[..order].to_vec(),
            jacobian: self.grads[..order].to_vec(),
            drift_next: self.lf[order].clone(),
            input_rows: self.lg[..order].to_vec(),
            input_rows_grad: self.lg[order - 1].iter().map(|e| gradient(e, self.sys.n())).collect(),
            system: self.sys.clone(),
        }
    }

    /// Text listing of `L_f^k h` and `L_g L_f^{k-1} h` for `k <= max_k`.
    pub fn dump(&mut self, max_k: usize) -> String {
        let sys = self.sys.clone();
        let show = |e: &Expr| e.display(&sys.state_names, &sys.input_names).to_string();
        let mut out = String::new();
        for k in 0..=max_k {
            let lf = self.lf(k);
            writeln!(out, "L_f^{k} h = {}", show(&lf)).unwrap();
            if k >= 1 {
                let lg: Vec<String> = self.lg(k - 1).iter().map(show).collect();
                writeln!(out, "L_g L_f^{} h = [{}]", k - 1, lg.join(", ")).unwrap();
            }
        }
        out
    }
}

/// Symbolic `H_i` with its Jacobian and the quantities the canonical form needs.
#[derive(Clone, Debug)]
pub struct ObservabilityMap {
    pub order: usize,
    /// `h, L_f h, ..., L_f^{i-1} h`.
    pub components: Vec<Expr>,
    /// Row `k` is the gradient of component `k`.
    pub jacobian: Vec<Vec<Expr>>,
    /// `L_f^i h`.
    pub drift_next: Expr,
    /// Row `k` is `(L_{g_j} L_f^k h)_j`, so the last row is `L_g L_f^{i-1} h`.
    pub input_rows: Vec<Vec<Expr>>,
    /// Gradients of each entry of `L_g L_f^{i-1} h`.
    pub input_rows_grad: Vec<Vec<Expr>>,
    pub system: Arc<ControlAffineSystem>,
}

fn eval_all(es: &[Expr], x: &[f64]) -> Result<Vec<f64>, EvalError> {
    es.iter().map(|e| e.evaluate(x)).collect()
}

impl ObservabilityMap {
    pub fn n(&self) -> usize {
        self.system.n()
    }

    pub fn eval(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        eval_all(&self.components, x)
    }

    /// `∂H_i/∂x` at `x` as an `i × n` matrix.
    pub fn jacobian_at(&self, x: &[f64]) -> Result<DMatrix<f64>, EvalError> {
        let n = self.n();
        let mut j = DMatrix::zeros(self.order, n);
        for (r, row) in self.jacobian.iter().enumerate() {
            for (c, e) in row.iter().enumerate() {
                j[(r, c)] = e.evaluate(x)?;
            }
        }
        Ok(j)
    }

    /// `L_g L_f^{i-1} h` at `x`.
    pub fn input_gain(&self, x: &[f64]) -> Result<Vec<f64>, EvalError> {
        eval_all(&self.input_rows[self.order - 1], x)
    }

    /// Jacobian of `L_g L_f^{i-1} h` at `x`, `m × n`.
    pub fn input_gain_jacobian(&self, x: &[f64]) -> Result<DMatrix<f64>, EvalError> {
        let (m, n) = (self.system.m(), self.n());
        let mut j = DMatrix::zeros(m, n);
        for (r, row) in self.input_rows_grad.iter().enumerate() {
            for (c, e) in row.iter().enumerate() {
                j[(r, c)] = e.evaluate(x)?;
            }
        }
        Ok(j)
    }

    /// Restriction to the first `k` components (shares the expressions).
    pub fn truncated(&self, k: usize) -> ObservabilityMap {
        assert!(k >= 1 && k <= self.order);
        let n = self.n();
        ObservabilityMap {
            order: k,
            components: self.components[..k].to_vec(),
            jacobian: self.jacobian[..k].to_vec(),
            drift_next: self.components.get(k).cloned().unwrap_or_else(|| self.drift_next.clone()),
            input_rows: self.input_rows[..k].to_vec(),
            input_rows_grad: self.input_rows[k - 1].iter().map(|e| gradient(e, n)).collect(),
            system: self.system.clone(),
        }
    }
}

/// Convenience wrapper building `H_i` from scratch.
pub fn build_h(sys: &Arc<ControlAffineSystem>, order: usize) -> ObservabilityMap {
    LieTable::new(sys.clone()).observability_map(order)
}

/// Largest gap between `∂H_i/∂x (f + g u)` and the shift structure
/// `(z_2, ..., z_i, L_f^i h) + L_g H_i u` at `x`.
pub fn canonical_rhs_check(map: &ObservabilityMap, x: &[f64], u: &[f64]) -> Result<f64, EvalError> {
    let sys = &map.system;
    let xdot = sys.vector_field(x, u)?;
    let jac = map.jacobian_at(x)?;
    let comps = map.eval(x)?;
    let next = map.drift_next.evaluate(x)?;
    let mut worst: f64 = 0.0;
    for k in 0..map.order {
        let lhs: f64 = (0..sys.n()).map(|c| jac[(k, c)] * xdot[c]).sum();
        let mut rhs = if k + 1 < map.order { comps[k + 1] } else { next };
        for (e, uj) in map.input_rows[k].iter().zip(u) {
            rhs += e.evaluate(x)? * uj;
        }
        worst = worst.max((lhs - rhs).abs());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expression;
    use crate::system::parse_system;

    fn ex(f2: &str) -> Arc<ControlAffineSystem> {
        let text = format!("system t\nstates x1 x2 x3\ninputs u\nf = [x2, {f2}, 1]\ng = [[0],[0],[1]]\nh = x1\n");
        Arc::new(parse_system(&text).unwrap())
    }

    fn p(s: &str) -> Expr {
        simplify(&parse_expression(s, &crate::expr::VarScope::numbered(3, 1)).unwrap())
    }

    #[test]
    fn lie_f_examples() {
        let e1 = ex("x3^3");
        assert_eq!(lie_f(&e1, &p("x1")), p("x2"));
        assert_eq!(lie_f(&e1, &p("x3^3")), p("3*x3^2"));
        let e2 = ex("x3^3*x1");
        assert_eq!(lie_f(&e2, &p("x3^3*x1")), p("3*x3^2*x1 + x3^3*x2"));
    }

    #[test]
    fn lie_g_examples() {
        let e1 = ex("x3^3");
        assert_eq!(lie_g(&e1, &p("x3^3")), vec![p("3*x3^2")]);
        assert_eq!(lie_g(&e1, &p("x1")), vec![Expr::zero()]);
        let e2 = ex("x3^3*x1");
        assert_eq!(lie_g(&e2, &p("x3^3*x1")), vec![p("3*x3^2*x1")]);
    }

    #[test]
    fn observability_maps_of_examples() {
        let h5 = build_h(&ex("x3^3"), 5);
        let want: Vec<Expr> = ["x1", "x2", "x3^3", "3*x3^2", "6*x3"].iter().map(|s| p(s)).collect();
        assert_eq!(h5.components, want);
        let h4 = build_h(&ex("x3^3*x1"), 4);
        let want: Vec<Expr> =
            ["x1", "x2", "x3^3*x1", "3*x3^2*x1 + x3^3*x2"].iter().map(|s| p(s)).collect();
        assert_eq!(h4.components, want);
    }

    #[test]
    fn cache_is_prefix_coherent() {
        let mut t = LieTable::new(ex("x3^3*x1"));
        let h3 = t.observability_map(3);
        let h5 = t.observability_map(5);
        assert_eq!(h3.components[..], h5.components[..3]);
        assert_eq!(h5.truncated(3).components, h3.components);
        assert_eq!(h5.truncated(3).drift_next, h3.drift_next);
    }

    #[test]
    fn rhs_identity_holds() {
        let e1 = build_h(&ex("x3^3"), 3);
        assert!(canonical_rhs_check(&e1, &[0.5, -1.0, 2.0], &[0.3]).unwrap() < 1e-10);
        let e2 = build_h(&ex("x3^3*x1"), 3);
        assert!(canonical_rhs_check(&e2, &[1.0, 2.0, 1.0], &[-1.0]).unwrap() < 1e-10);
        let e2 = build_h(&ex("x3^3*x1"), 1);
        assert!(canonical_rhs_check(&e2, &[1.0, 2.0, 1.0], &[-1.0]).unwrap() < 1e-12);
    }

    #[test]
    fn dump_lists_both_families() {
        let mut t = LieTable::new(ex("x3^3"));
        let text = t.dump(3);
        assert!(text.contains("L_f^2 h = x3^3"), "{text}");
        assert!(text.contains("L_g L_f^2 h = [3*x3^2]"), "{text}");
    }
}
