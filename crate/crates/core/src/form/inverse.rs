use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::analysis::{solve_preimage, SampleBox};
use crate::lie::ObservabilityMap;
use crate::numeric::{dist, rank_info, rng, LmOptions};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct InverseOptions {
    /// Random starts drawn from the search box, on top of the given guesses.
    pub starts: usize,
    /// Accept `x` when `|H(x) - z|` is at most this.
    pub inv_tol: f64,
    /// Two accepted solutions further apart than this make `z` ambiguous.
    pub delta_min: f64,
    pub seed: u64,
}

impl Default for InverseOptions {
    fn default() -> Self {
        Self { starts: 16, inv_tol: 1e-9, delta_min: 1e-3, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct InverseResult {
    pub x: Vec<f64>,
    pub residual: f64,
    /// `σ_max / σ_min` of `∂H/∂x` at `x`; infinite when singular.
    pub condition: f64,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum InverseError {
    #[error("no start reached |H(x) - z| <= {tol:e}; best residual {best:e}")]
    NoConvergence { best: f64, tol: f64 },
    #[error("distinct preimages found, {sep:.3e} apart")]
    Ambiguous { a: Vec<f64>, b: Vec<f64>, sep: f64 },
    #[error("target has {got} components, map has {want}")]
    Dimension { got: usize, want: usize },
}

pub fn condition_number(map: &ObservabilityMap, x: &[f64]) -> f64 {
    match map.jacobian_at(x) {
        Ok(j) => {
            let info = rank_info(&j, 0.0);
            let smin = info.sigma_min();
            if smin > 0.0 {
                info.sigma_max() / smin
            } else {
                f64::INFINITY
            }
        }
        Err(_) => f64::INFINITY,
    }
}

/// Multistart solve of `H(x) = z` over `region`; fails on no convergence
/// and on distinct solutions.
pub fn left_inverse(
    map: &ObservabilityMap,
    z: &[f64],
    region: &SampleBox,
    guesses: &[Vec<f64>],
    opts: &InverseOptions,
) -> Result<InverseResult, InverseError> {
    if z.len() != map.order {
        return Err(InverseError::Dimension { got: z.len(), want: map.order });
    }
    let mut starts: Vec<Vec<f64>> = guesses.to_vec();
    let mut r = rng(opts.seed);
    for _ in 0..opts.starts {
        starts.push((0..region.dim()).map(|a| r.gen_range(region.lower[a]..=region.upper[a])).collect());
    }
    let lm = LmOptions::default();
    let mut best = f64::INFINITY;
    let mut accepted: Vec<(Vec<f64>, f64)> = Vec::new();
    for s in &starts {
        let Some((x, res)) = solve_preimage(map, z, s, region, &lm) else { continue };
        best = best.min(res);
        if res <= opts.inv_tol && region.contains(&x) {
            accepted.push((x, res));
        }
    }
    let Some(first) = accepted.first().cloned() else {
        return Err(InverseError::NoConvergence { best, tol: opts.inv_tol });
    };
    for (x, _) in &accepted[1..] {
        let sep = dist(x, &first.0);
        if sep > opts.delta_min {
            return Err(InverseError::Ambiguous { a: first.0.clone(), b: x.clone(), sep });
        }
    }
    let (x, residual) = accepted.into_iter().min_by(|a, b| a.1.total_cmp(&b.1)).expect("non-empty");
    let condition = condition_number(map, &x);
    Ok(InverseResult { x, residual, condition })
}
