use super::{FormFunction, TriangularForm};
use crate::analysis::solve_preimage;
use crate::numeric::{dist, LmOptions};

/// Evaluates the functions of a form, keeping one warm start per key order.
///
/// A function returns its symbolic value at the least-squares preimage of
/// the key under `H_k`, which is exact on the image and continuous near it.
/// Keys farther than `projection_radius` from the image use the sampled table.
pub struct FormEvaluator<'a> {
    form: &'a TriangularForm,
    warm: Vec<Option<Vec<f64>>>,
    last: Vec<Option<(Vec<f64>, Option<Vec<f64>>)>>,
    lm: LmOptions,
    /// Evaluations answered by the table extension.
    pub fallbacks: usize,
}

impl<'a> FormEvaluator<'a> {
    pub fn new(form: &'a TriangularForm) -> Self {
        let lm = LmOptions { max_iter: 60, stall_tol: 1e-6, ..LmOptions::default() };
        Self { form, warm: vec![None; form.d_z + 1], last: vec![None; form.d_z + 1], lm, fallbacks: 0 }
    }

    pub fn form(&self) -> &'a TriangularForm {
        self.form
    }

    fn try_solve(&self, order: usize, zk: &[f64], start: &[f64]) -> Option<Vec<f64>> {
        let map = self.form.map(order);
        let (x, res) = solve_preimage(map, zk, start, &self.form.neighbourhood, &self.lm)?;
        (res <= self.form.options.projection_radius.max(self.form.options.inv_tol)).then_some(x)
    }

    /// A state `x` in the neighbourhood with `H_order(x)` nearest `zk`, if one is found.
    pub fn preimage(&mut self, order: usize, zk: &[f64], table: &FormFunction) -> Option<Vec<f64>> {
        if let Some((z, x)) = &self.last[order] {
            if z.as_slice() == zk {
                return x.clone();
            }
        }
        let mut found = None;
        if let Some(w) = self.warm[order].clone() {
            found = self.try_solve(order, zk, &w);
        }
        if found.is_none() {
            let k = table.table.nearest_index(zk);
            let start = table.preimages[k].clone();
            let near = self.warm[order].as_ref().is_some_and(|w| dist(w, &start) == 0.0);
            if !near {
                found = self.try_solve(order, zk, &start);
            }
        }
        if let Some(x) = &found {
            self.warm[order] = Some(x.clone());
        }
        self.last[order] = Some((zk.to_vec(), found.clone()));
        found
    }

    /// `f(z_1..z_k)`; `zk` must hold exactly `f.key_order` components.
    pub fn eval(&mut self, f: &FormFunction, zk: &[f64]) -> Vec<f64> {
        debug_assert_eq!(zk.len(), f.key_order);
        if let Some(c) = &f.constant {
            return c.clone();
        }
        if let Some(x) = self.preimage(f.key_order, zk, f) {
            if let Some(v) = f.value_at(&x) {
                return v;
            }
        }
        self.fallbacks += 1;
        f.table.eval(zk)
    }

    /// `𝔤_i(z)` for `i` in `1..=d_z`.
    pub fn g(&mut self, i: usize, z: &[f64]) -> Vec<f64> {
        let f = &self.form.g[i - 1];
        self.eval(f, &z[..f.key_order])
    }

    pub fn phi(&mut self, z: &[f64]) -> f64 {
        let f = &self.form.phi;
        self.eval(f, &z[..f.key_order])[0]
    }

    /// Right-hand side of the triangular form at `(z, u)`.
    pub fn rhs(&mut self, z: &[f64], u: &[f64]) -> Vec<f64> {
        let d = self.form.d_z;
        let mut out = Vec::with_capacity(d);
        for i in 1..=d {
            let gi = self.g(i, z);
            let gu: f64 = gi.iter().zip(u).map(|(a, b)| a * b).sum();
            let drift = if i < d { z[i] } else { self.phi(z) };
            out.push(drift + gu);
        }
        out
    }
}
