use rayon::prelude::*;
use serde::Serialize;

use crate::lie::ObservabilityMap;
use crate::numeric::rank_info;

#[derive(Clone, Debug, Serialize)]
pub struct KernelPoint {
    pub x: Vec<f64>,
    pub rank: usize,
    /// Orthonormal kernel basis of `∂H_i/∂x`.
    pub kernel: Vec<Vec<f64>>,
    /// `max_k max_v |∂(L_{g_k} L_f^{i-1} h)/∂x · v|` over kernel vectors `v`.
    pub violation: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct KernelReport {
    pub order: usize,
    pub kernel_tol: f64,
    /// Points where `∂H_i/∂x` has rank below `n`.
    pub points: Vec<KernelPoint>,
    pub max_violation: f64,
    /// Points whose violation exceeds `kernel_tol`; near them no locally
    /// Lipschitz factorization of the input gain through `H_i` exists.
    pub violations: usize,
}

/// Kernel test at one point; `None` when `∂H_i/∂x` has rank `n` or cannot
/// be evaluated.
pub fn kernel_condition_at(map: &ObservabilityMap, x: &[f64], rank_tol: f64) -> Option<KernelPoint> {
    let j = map.jacobian_at(x).ok()?;
    if !j.iter().all(|v| v.is_finite()) {
        return None;
    }
    let info = rank_info(&j, rank_tol);
    if info.kernel.is_empty() {
        return None;
    }
    let grad = map.input_gain_jacobian(x).ok()?;
    let mut violation: f64 = 0.0;
    for v in &info.kernel {
        for k in 0..grad.nrows() {
            let dot: f64 = (0..grad.ncols()).map(|c| grad[(k, c)] * v[c]).sum();
            violation = violation.max(dot.abs());
        }
    }
    Some(KernelPoint { x: x.to_vec(), rank: info.rank, kernel: info.kernel, violation })
}

pub fn kernel_condition_check(map: &ObservabilityMap, points: &[Vec<f64>], rank_tol: f64, kernel_tol: f64) -> KernelReport {
    let found: Vec<KernelPoint> = points.par_iter().filter_map(|x| kernel_condition_at(map, x, rank_tol)).collect();
    let max_violation = found.iter().map(|p| p.violation).fold(0.0, f64::max);
    let violations = found.iter().filter(|p| p.violation > kernel_tol).count();
    KernelReport { order: map.order, kernel_tol, points: found, max_violation, violations }
}
