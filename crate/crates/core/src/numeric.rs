//! Small numerical building blocks: SVD rank detection and a bounded
//! Levenberg–Marquardt least-squares solver.

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Deterministic per-item seed derived from a base seed.
pub fn sub_seed(seed: u64, stream: u64) -> u64 {
    // splitmix64 finalizer
    let mut z = seed ^ stream.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|a| a * a).sum::<f64>().sqrt()
}

pub fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

/// Singular-value summary of a Jacobian.
#[derive(Clone, Debug)]
pub struct RankInfo {
    /// Descending; `max(rows, cols)`-padded so there are `cols` values.
    pub singular_values: Vec<f64>,
    /// Count of singular values with `σ/σ_max >= tol`.
    pub rank: usize,
    /// Largest possible rank, `min(rows, cols)`.
    pub full: usize,
    /// Orthonormal basis (as rows) of the numerical kernel.
    pub kernel: Vec<Vec<f64>>,
    /// Orthonormal right singular vectors, ordered like `singular_values`.
    pub right_vectors: Vec<Vec<f64>>,
}

impl RankInfo {
    pub fn sigma_max(&self) -> f64 {
        self.singular_values.first().copied().unwrap_or(0.0)
    }

    /// Smallest of the first `full` singular values.
    pub fn sigma_min(&self) -> f64 {
        self.singular_values.get(self.full.saturating_sub(1)).copied().unwrap_or(0.0)
    }

    pub fn relative_sigma_min(&self) -> f64 {
        let s = self.sigma_max();
        if s > 0.0 {
            self.sigma_min() / s
        } else {
            0.0
        }
    }
}

/// Rank of `j` with relative threshold `tol` on `σ/σ_max`.
pub fn rank_info(j: &DMatrix<f64>, tol: f64) -> RankInfo {
    let (rows, cols) = j.shape();
    // Pad with zero rows so the SVD exposes all `cols` right singular vectors.
    let a = if rows < cols {
        let mut p = DMatrix::zeros(cols, cols);
        p.view_mut((0, 0), (rows, cols)).copy_from(j);
        p
    } else {
        j.clone()
    };
    let svd = a.svd(false, true);
    let vt = svd.v_t.expect("requested right vectors");
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&x, &y| svd.singular_values[y].total_cmp(&svd.singular_values[x]));
    let singular_values: Vec<f64> = order.iter().map(|&k| svd.singular_values[k]).collect();
    let right_vectors: Vec<Vec<f64>> = order.iter().map(|&k| vt.row(k).iter().copied().collect()).collect();
    let smax = singular_values.first().copied().unwrap_or(0.0);
    let full = rows.min(cols);
    let rank = if smax > 0.0 {
        singular_values.iter().take(full).filter(|&&s| s / smax >= tol).count()
    } else {
        0
    };
    let kernel = right_vectors[rank..].to_vec();
    RankInfo { singular_values, rank, full, kernel, right_vectors }
}

/// Options for [`levenberg_marquardt`].
#[derive(Clone, Debug)]
pub struct LmOptions {
    pub max_iter: usize,
    /// Stop once the residual norm is at or below this.
    pub residual_tol: f64,
    /// Stop once a step is relatively smaller than this.
    pub step_tol: f64,
    /// Stop once an accepted step lowers the residual norm by less than
    /// this fraction.
    pub stall_tol: f64,
}

impl Default for LmOptions {
    fn default() -> Self {
        Self { max_iter: 200, residual_tol: 1e-14, step_tol: 1e-15, stall_tol: 0.0 }
    }
}

#[derive(Clone, Debug)]
pub struct LmResult {
    pub x: Vec<f64>,
    /// Euclidean norm of the final residual.
    pub residual: f64,
    pub iterations: usize,
}

/// Minimizes `|r(x)|²` starting from `x0`, keeping iterates inside
/// `[lower, upper]` when bounds are given.
///
/// `eval` returns the residual and its Jacobian, or `None` where undefined;
/// undefined trial points are treated as rejected steps.
pub fn levenberg_marquardt<F>(
    mut eval: F,
    x0: &[f64],
    bounds: Option<(&[f64], &[f64])>,
    opts: &LmOptions,
) -> Option<LmResult>
where
    F: FnMut(&[f64]) -> Option<(Vec<f64>, DMatrix<f64>)>,
{
    let clamp = |x: &mut [f64]| {
        if let Some((lo, hi)) = bounds {
            for k in 0..x.len() {
                x[k] = x[k].clamp(lo[k], hi[k]);
            }
        }
    };
    let mut x = x0.to_vec();
    clamp(&mut x);
    let (mut r, mut jac) = eval(&x)?;
    let mut cost = norm(&r);
    let n = x.len();
    let mut lambda = {
        let jtj = jac.transpose() * &jac;
        1e-3 * (0..n).map(|k| jtj[(k, k)]).fold(0.0, f64::max).max(1e-12)
    };
    let mut iterations = 0;
    while iterations < opts.max_iter && cost > opts.residual_tol {
        iterations += 1;
        let jt = jac.transpose();
        let jtj = &jt * &jac;
        let grad = &jt * DVector::from_column_slice(&r);
        let mut improved = false;
        let before = cost;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for k in 0..n {
                a[(k, k)] += lambda * (jtj[(k, k)] + 1e-12);
            }
            let Some(step) = a.cholesky().map(|c| c.solve(&(-&grad))) else {
                lambda *= 4.0;
                continue;
            };
            let mut trial: Vec<f64> = x.iter().zip(step.iter()).map(|(a, b)| a + b).collect();
            clamp(&mut trial);
            let moved = dist(&trial, &x);
            if moved <= opts.step_tol * (1.0 + norm(&x)) {
                break;
            }
            if let Some((rt, jt_new)) = eval(&trial) {
                let ct = norm(&rt);
                if ct < cost {
                    x = trial;
                    r = rt;
                    jac = jt_new;
                    cost = ct;
                    lambda = (lambda / 3.0).max(1e-15);
                    improved = true;
                    break;
                }
            }
            lambda *= 2.0;
        }
        if !improved || before - cost <= opts.stall_tol * before {
            break;
        }
    }
    Some(LmResult { x, residual: cost, iterations })
}
