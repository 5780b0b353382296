use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::expr::Expr;
use crate::numeric::{dist, rng};

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ModulusOptions {
    /// All pairs are used when there are at most this many; otherwise this
    /// many random pairs.
    pub max_pairs: usize,
    pub seed: u64,
}

impl Default for ModulusOptions {
    fn default() -> Self {
        Self { max_pairs: 4_000_000, seed: 0 }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ModulusError {
    #[error("s grid must be positive and strictly increasing")]
    Grid,
    #[error("value and key maps could not be evaluated at any sample point")]
    NoSamples,
}

#[derive(Clone, Debug, Serialize)]
pub struct ModulusReport {
    pub s: Vec<f64>,
    /// `ρ̂₀(s)`: largest `|ΔΦ|` over sampled pairs with `|Δγ| ≤ s`.
    pub rho: Vec<f64>,
    /// Power-law exponent fitted on the smallest decade of `s` with `ρ̂₀ > 0`.
    pub exponent: Option<f64>,
    pub fit_range: Option<(f64, f64)>,
    pub pairs: usize,
    pub samples: usize,
}

fn eval_all(es: &[Expr], x: &[f64]) -> Option<Vec<f64>> {
    es.iter().map(|e| e.evaluate(x).ok()).collect()
}

/// Least-squares slope of `log ρ` against `log s`.
fn log_log_slope(s: &[f64], rho: &[f64]) -> Option<f64> {
    let pts: Vec<(f64, f64)> = s.iter().zip(rho).map(|(a, b)| (a.ln(), b.ln())).collect();
    if pts.len() < 2 {
        return None;
    }
    let k = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / k;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / k;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    (sxx > 0.0).then(|| sxy / sxx)
}

/// Sampled modulus of continuity of `Φ` with respect to `γ`.
pub fn modulus_estimate(
    value: &[Expr],
    key: &[Expr],
    points: &[Vec<f64>],
    s_grid: &[f64],
    opts: &ModulusOptions,
) -> Result<ModulusReport, ModulusError> {
    if s_grid.is_empty() || s_grid[0] <= 0.0 || s_grid.windows(2).any(|w| w[0] >= w[1]) {
        return Err(ModulusError::Grid);
    }
    let samples: Vec<(Vec<f64>, Vec<f64>)> = points
        .par_iter()
        .filter_map(|x| Some((eval_all(value, x)?, eval_all(key, x)?)))
        .collect();
    let n = samples.len();
    if n == 0 {
        return Err(ModulusError::NoSamples);
    }
    let all_pairs = n * (n - 1) / 2;
    // (|Δγ|, |ΔΦ|) per pair
    let mut pairs: Vec<(f64, f64)> = if all_pairs <= opts.max_pairs {
        (0..n)
            .into_par_iter()
            .flat_map_iter(|a| {
                let samples = &samples;
                (a + 1..n).map(move |b| (dist(&samples[a].1, &samples[b].1), dist(&samples[a].0, &samples[b].0)))
            })
            .collect()
    } else {
        let mut r = rng(opts.seed);
        (0..opts.max_pairs)
            .filter_map(|_| {
                let a = r.gen_range(0..n);
                let b = r.gen_range(0..n);
                (a != b).then(|| (dist(&samples[a].1, &samples[b].1), dist(&samples[a].0, &samples[b].0)))
            })
            .collect()
    };
    pairs.par_sort_unstable_by(|x, y| x.0.total_cmp(&y.0));
    let mut prefix = Vec::with_capacity(pairs.len());
    let mut running: f64 = 0.0;
    for p in &pairs {
        running = running.max(p.1);
        prefix.push(running);
    }
    let rho: Vec<f64> = s_grid
        .iter()
        .map(|&s| {
            let k = pairs.partition_point(|p| p.0 <= s);
            if k == 0 {
                0.0
            } else {
                prefix[k - 1]
            }
        })
        .collect();

    let first = rho.iter().position(|&r| r > 0.0);
    let (exponent, fit_range) = match first {
        Some(i0) => {
            let lo = s_grid[i0];
            let hi = 10.0 * lo;
            let idx: Vec<usize> = (i0..s_grid.len()).filter(|&i| s_grid[i] <= hi * (1.0 + 1e-12)).collect();
            let s: Vec<f64> = idx.iter().map(|&i| s_grid[i]).collect();
            let r: Vec<f64> = idx.iter().map(|&i| rho[i]).collect();
            (log_log_slope(&s, &r), Some((lo, s.last().copied().unwrap_or(lo))))
        }
        None => (None, None),
    };
    Ok(ModulusReport { s: s_grid.to_vec(), rho, exponent, fit_range, pairs: pairs.len(), samples: n })
}

/// `count` log-spaced values from `lo` to `hi`.
pub fn log_grid(lo: f64, hi: f64, count: usize) -> Vec<f64> {
    if count == 1 {
        return vec![lo];
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..count).map(|k| (a + (b - a) * k as f64 / (count - 1) as f64).exp()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse_expression, VarScope};

    fn e(s: &str) -> Expr {
        parse_expression(s, &VarScope::numbered(1, 0)).unwrap()
    }

    fn line(count: usize) -> Vec<Vec<f64>> {
        (0..count).map(|k| vec![-1.0 + 2.0 * k as f64 / (count - 1) as f64]).collect()
    }

    #[test]
    fn identity_pairing_is_linear() {
        let r = modulus_estimate(&[e("x1")], &[e("x1")], &line(2001), &log_grid(1e-2, 1.0, 21), &ModulusOptions::default()).unwrap();
        assert!(r.s.iter().zip(&r.rho).all(|(s, rho)| rho <= s));
        assert!((r.exponent.unwrap() - 1.0).abs() < 0.02, "{:?}", r.exponent);
    }

    #[test]
    fn constant_value_has_zero_modulus() {
        let r = modulus_estimate(&[e("2")], &[e("x1")], &line(101), &log_grid(1e-3, 1.0, 7), &ModulusOptions::default()).unwrap();
        assert!(r.rho.iter().all(|&v| v == 0.0));
        assert!(r.exponent.is_none());
    }

    #[test]
    fn cube_root_modulus_exponent() {
        // Φ = 3 x², γ = x³ gives ρ₀(s) = 3 s^(2/3)
        let r = modulus_estimate(&[e("3*x1^2")], &[e("x1^3")], &line(2001), &log_grid(1e-3, 1.0, 31), &ModulusOptions::default()).unwrap();
        assert!((r.exponent.unwrap() - 2.0 / 3.0).abs() < 0.05, "{:?}", r.exponent);
        assert!(r.rho.windows(2).all(|w| w[0] <= w[1]));
    }

    #[test]
    fn rejects_bad_grid() {
        let err = modulus_estimate(&[e("x1")], &[e("x1")], &line(5), &[0.1, 0.1], &ModulusOptions::default()).unwrap_err();
        assert_eq!(err, ModulusError::Grid);
    }
}
