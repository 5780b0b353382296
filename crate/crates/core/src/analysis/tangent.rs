//! The system lifted to the tangent bundle,
//! `x' = f + g u`, `v' = (∂f/∂x + Σ u_k ∂g_k/∂x) v`, `w = ∂h/∂x v`.

use serde::Serialize;

use super::sample::SampleBox;
use crate::expr::{differentiate, simplify, EvalError, Expr};
use crate::lie::{gradient, lie_derivative};
use crate::numeric::{norm, rank_info};
use crate::signal::{InputSignal, SignalError};
use crate::system::ControlAffineSystem;

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum TangentError {
    #[error("initial tangent vector is zero")]
    ZeroTangent,
    #[error("trajectory left the region at t = {t}: x = {x:?}")]
    LeftBox { t: f64, x: Vec<f64> },
    #[error("integration blew up at t = {t}")]
    Blowup { t: f64 },
    #[error("evaluation failed at t = {t}: {source}")]
    Domain { t: f64, source: EvalError },
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error("dt must be positive and no larger than the horizon")]
    Step,
}

#[derive(Clone, Debug, Serialize)]
pub struct TangentState {
    pub t: f64,
    pub x: Vec<f64>,
    pub v: Vec<f64>,
    pub w: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct TangentTrace {
    pub states: Vec<TangentState>,
    pub sup_w: f64,
    pub min_v_norm: f64,
    pub final_v_norm: f64,
}

/// Symbolic Jacobians needed by the lifted dynamics.
pub struct TangentModel<'a> {
    sys: &'a ControlAffineSystem,
    df: Vec<Vec<Expr>>,
    /// `dg[k][i][j] = ∂g_{ik}/∂x_j`.
    dg: Vec<Vec<Vec<Expr>>>,
    dh: Vec<Expr>,
}

impl<'a> TangentModel<'a> {
    pub fn new(sys: &'a ControlAffineSystem) -> Self {
        let n = sys.n();
        let df = sys.f.iter().map(|fi| gradient(fi, n)).collect();
        let dg = (0..sys.m())
            .map(|k| sys.g.iter().map(|row| (0..n).map(|j| differentiate(&row[k], j)).collect()).collect())
            .collect();
        let dh = gradient(&simplify(&sys.h), n);
        Self { sys, df, dg, dh }
    }

    pub fn output(&self, x: &[f64], v: &[f64]) -> Result<f64, EvalError> {
        let mut w = 0.0;
        for (d, vj) in self.dh.iter().zip(v) {
            w += d.evaluate(x)? * vj;
        }
        Ok(w)
    }

    fn rhs(&self, x: &[f64], v: &[f64], u: &[f64]) -> Result<(Vec<f64>, Vec<f64>), EvalError> {
        let n = x.len();
        let xdot = self.sys.vector_field(x, u)?;
        let mut vdot = vec![0.0; n];
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..n {
                let mut a = self.df[i][j].evaluate(x)?;
                for (k, uk) in u.iter().enumerate() {
                    if *uk != 0.0 {
                        a += uk * self.dg[k][i][j].evaluate(x)?;
                    }
                }
                acc += a * v[j];
            }
            vdot[i] = acc;
        }
        Ok((xdot, vdot))
    }
}

/// RK4 integration of the lifted system without preconditions on `v0`.
pub fn integrate_tangent(
    sys: &ControlAffineSystem,
    x0: &[f64],
    v0: &[f64],
    input: &InputSignal,
    horizon: f64,
    dt: f64,
    region: Option<&SampleBox>,
    bound: f64,
) -> Result<TangentTrace, TangentError> {
    if !(dt > 0.0 && horizon >= dt) {
        return Err(TangentError::Step);
    }
    input.validate(sys.m())?;
    let model = TangentModel::new(sys);
    let steps = (horizon / dt).round() as usize;
    let n = sys.n();
    let (mut x, mut v) = (x0.to_vec(), v0.to_vec());
    let mut states = Vec::with_capacity(steps + 1);
    let dom = |t: f64| move |source| TangentError::Domain { t, source };
    for k in 0..=steps {
        let t = k as f64 * dt;
        if let Some(b) = region {
            if !b.in_bounds(&x) {
                return Err(TangentError::LeftBox { t, x });
            }
        }
        if norm(&x) > bound || norm(&v) > bound || x.iter().chain(&v).any(|c| !c.is_finite()) {
            return Err(TangentError::Blowup { t });
        }
        let w = model.output(&x, &v).map_err(dom(t))?;
        states.push(TangentState { t, x: x.clone(), v: v.clone(), w });
        if k == steps {
            break;
        }
        let u0 = input.at(t)?;
        let uh = input.at(t + 0.5 * dt)?;
        let u1 = input.at(t + dt)?;
        let shift = |base: &[f64], d: &[f64], h: f64| -> Vec<f64> { base.iter().zip(d).map(|(a, b)| a + h * b).collect() };
        let (k1x, k1v) = model.rhs(&x, &v, &u0).map_err(dom(t))?;
        let (k2x, k2v) = model.rhs(&shift(&x, &k1x, 0.5 * dt), &shift(&v, &k1v, 0.5 * dt), &uh).map_err(dom(t))?;
        let (k3x, k3v) = model.rhs(&shift(&x, &k2x, 0.5 * dt), &shift(&v, &k2v, 0.5 * dt), &uh).map_err(dom(t))?;
        let (k4x, k4v) = model.rhs(&shift(&x, &k3x, dt), &shift(&v, &k3v, dt), &u1).map_err(dom(t))?;
        for i in 0..n {
            x[i] += dt / 6.0 * (k1x[i] + 2.0 * k2x[i] + 2.0 * k3x[i] + k4x[i]);
            v[i] += dt / 6.0 * (k1v[i] + 2.0 * k2v[i] + 2.0 * k3v[i] + k4v[i]);
        }
    }
    let sup_w = states.iter().map(|s| s.w.abs()).fold(0.0, f64::max);
    let min_v_norm = states.iter().map(|s| norm(&s.v)).fold(f64::INFINITY, f64::min);
    let final_v_norm = norm(&states.last().unwrap().v);
    Ok(TangentTrace { states, sup_w, min_v_norm, final_v_norm })
}

/// Simulates the lifted system from `(x0, v0)`; `v0` must be nonzero.
///
/// A trace with `sup |w| ≈ 0` while `|v|` stays away from zero witnesses a
/// failure of infinitesimal observability along that input.
pub fn tangent_simulate(
    sys: &ControlAffineSystem,
    x0: &[f64],
    v0: &[f64],
    input: &InputSignal,
    horizon: f64,
    dt: f64,
    region: Option<&SampleBox>,
) -> Result<TangentTrace, TangentError> {
    if norm(v0) == 0.0 {
        return Err(TangentError::ZeroTangent);
    }
    integrate_tangent(sys, x0, v0, input, horizon, dt, region, 1e8)
}

#[derive(Clone, Debug, Serialize)]
pub struct InfinitesimalRank {
    /// Row `j` is the coefficient vector of `w^{(j)}` in `v`.
    pub rows: Vec<Vec<f64>>,
    pub rank: usize,
    pub singular_values: Vec<f64>,
    /// A unit `v` annihilating all rows when the rank is below `n`.
    pub witness: Option<Vec<f64>>,
}

/// Rank of the map `v ↦ (w, w', ..., w^{(K-1)})` at `x` for a constant input.
///
/// With `u` constant, `w^{(j)} = ∇(L_{f+gu}^j h) · v`, which is the recursion
/// `w_i' = w_{i+1} + Σ_k u_k ∇(L_{g_k} L_f^{i-1} h) · v` written in closed form.
pub fn infinitesimal_rank_check(
    sys: &ControlAffineSystem,
    x: &[f64],
    u: &[f64],
    order: usize,
    rank_tol: f64,
) -> Result<InfinitesimalRank, EvalError> {
    let n = sys.n();
    let field: Vec<Expr> = sys
        .f
        .iter()
        .zip(&sys.g)
        .map(|(fi, gi)| {
            let mut terms = vec![fi.clone()];
            terms.extend(gi.iter().zip(u).map(|(g, uk)| Expr::product(vec![Expr::constant(*uk), g.clone()])));
            simplify(&Expr::sum(terms))
        })
        .collect();
    let mut psi = simplify(&sys.h);
    let mut rows = Vec::with_capacity(order);
    for j in 0..order {
        let row = gradient(&psi, n).iter().map(|e| e.evaluate(x)).collect::<Result<Vec<_>, _>>()?;
        rows.push(row);
        if j + 1 < order {
            psi = lie_derivative(&field, &psi);
        }
    }
    let m = nalgebra::DMatrix::from_fn(order, n, |r, c| rows[r][c]);
    let info = rank_info(&m, rank_tol);
    // A numerical rank below `n` has a kernel; with fewer rows than states it always does.
    let witness = (info.rank < n).then(|| info.right_vectors[n - 1].clone());
    Ok(InfinitesimalRank { rows, rank: info.rank, singular_values: info.singular_values, witness })
}
