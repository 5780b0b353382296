use std::collections::HashMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::numeric::dist;

/// How a sampled function is evaluated away from its keys.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum Extension {
    /// `f(z) = min_k (v_k + L |z - z_k|)` per output component.
    Mcshane { lipschitz: f64 },
    /// Value at the nearest key; used where no Lipschitz constant exists.
    NearestSample,
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum SampledError {
    #[error("samples {a} and {b} need Lipschitz constant {ratio:.6e} > {lipschitz:.6e}")]
    Inconsistent { a: usize, b: usize, ratio: f64, lipschitz: f64 },
    #[error("keys and values must be non-empty with matching lengths and widths")]
    Shape,
}

/// Function known at finitely many keys, extended to all of key space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SampledFunction {
    pub keys: Vec<Vec<f64>>,
    pub values: Vec<Vec<f64>>,
    pub extension: Extension,
}

/// Absolute slack when validating a Lipschitz constant against the samples.
const CONSISTENCY_SLACK: f64 = 1e-12;

fn check_shape(keys: &[Vec<f64>], values: &[Vec<f64>]) -> Result<(), SampledError> {
    let ok = !keys.is_empty()
        && keys.len() == values.len()
        && keys.iter().all(|k| k.len() == keys[0].len())
        && values.iter().all(|v| v.len() == values[0].len());
    if ok {
        Ok(())
    } else {
        Err(SampledError::Shape)
    }
}

impl SampledFunction {
    /// McShane extension with constant `lipschitz`, rejected when some pair
    /// of samples needs a larger constant.
    pub fn mcshane(keys: Vec<Vec<f64>>, values: Vec<Vec<f64>>, lipschitz: f64) -> Result<Self, SampledError> {
        check_shape(&keys, &values)?;
        let n = keys.len();
        let bad = (0..n).into_par_iter().find_map_first(|a| {
            (a + 1..n).find_map(|b| {
                let dz = dist(&keys[a], &keys[b]);
                let dv = dist(&values[a], &values[b]);
                (dv > lipschitz * dz + CONSISTENCY_SLACK).then(|| (b, dv / dz))
            })
            .map(|(b, ratio)| (a, b, ratio))
        });
        if let Some((a, b, ratio)) = bad {
            return Err(SampledError::Inconsistent { a, b, ratio, lipschitz });
        }
        Ok(Self { keys, values, extension: Extension::Mcshane { lipschitz } })
    }

    pub fn nearest(keys: Vec<Vec<f64>>, values: Vec<Vec<f64>>) -> Result<Self, SampledError> {
        check_shape(&keys, &values)?;
        Ok(Self { keys, values, extension: Extension::NearestSample })
    }

    pub fn key_dim(&self) -> usize {
        self.keys[0].len()
    }

    pub fn value_dim(&self) -> usize {
        self.values[0].len()
    }

    pub fn nearest_index(&self, z: &[f64]) -> usize {
        let mut best = (0, f64::INFINITY);
        for (k, key) in self.keys.iter().enumerate() {
            let d = dist(key, z);
            if d < best.1 {
                best = (k, d);
            }
        }
        best.0
    }

    pub fn eval(&self, z: &[f64]) -> Vec<f64> {
        match self.extension {
            Extension::NearestSample => self.values[self.nearest_index(z)].clone(),
            Extension::Mcshane { lipschitz } => {
                let mut out = vec![f64::INFINITY; self.value_dim()];
                for (key, val) in self.keys.iter().zip(&self.values) {
                    let d = lipschitz * dist(key, z);
                    for (o, v) in out.iter_mut().zip(val) {
                        *o = o.min(v + d);
                    }
                }
                out
            }
        }
    }
}

/// Largest `|Δv| / |Δz|` over sample pairs.
pub fn max_pairwise_ratio(keys: &[Vec<f64>], values: &[Vec<f64>]) -> f64 {
    let n = keys.len();
    (0..n)
        .into_par_iter()
        .map(|a| {
            (a + 1..n)
                .map(|b| {
                    let dz = dist(&keys[a], &keys[b]);
                    if dz > 0.0 {
                        dist(&values[a], &values[b]) / dz
                    } else {
                        0.0
                    }
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

/// Indices of a greedy subset of `keys` whose pairwise distances are all at
/// least `min_sep`, in input order.
pub fn thin_keys(keys: &[Vec<f64>], min_sep: f64) -> Vec<usize> {
    let cell = |k: &[f64]| -> Vec<i64> { k.iter().map(|v| (v / min_sep).floor() as i64).collect() };
    let mut grid: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    let mut kept = Vec::new();
    for (idx, key) in keys.iter().enumerate() {
        let c = cell(key);
        let mut clash = false;
        let d = c.len();
        let total = 3usize.pow(d as u32);
        'outer: for code in 0..total {
            let mut nb = c.clone();
            let mut rest = code;
            for v in nb.iter_mut() {
                *v += (rest % 3) as i64 - 1;
                rest /= 3;
            }
            if let Some(list) = grid.get(&nb) {
                for &j in list {
                    if dist(&keys[j], key) < min_sep {
                        clash = true;
                        break 'outer;
                    }
                }
            }
        }
        if !clash {
            grid.entry(c).or_default().push(idx);
            kept.push(idx);
        }
    }
    kept
}

/// Pairs of samples whose keys agree within `key_tol` (max norm) while the
/// values differ by more than `value_tol`; returns the worst such pair.
pub fn key_collision(keys: &[Vec<f64>], values: &[Vec<f64>], key_tol: f64, value_tol: f64) -> Option<(usize, usize, f64)> {
    let cell = |k: &[f64]| -> Vec<i64> { k.iter().map(|v| (v / key_tol).floor() as i64).collect() };
    let mut grid: HashMap<Vec<i64>, Vec<usize>> = HashMap::new();
    for (idx, key) in keys.iter().enumerate() {
        grid.entry(cell(key)).or_default().push(idx);
    }
    let mut worst: Option<(usize, usize, f64)> = None;
    for (idx, key) in keys.iter().enumerate() {
        let c = cell(key);
        let total = 3usize.pow(c.len() as u32);
        for code in 0..total {
            let mut nb = c.clone();
            let mut rest = code;
            for v in nb.iter_mut() {
                *v += (rest % 3) as i64 - 1;
                rest /= 3;
            }
            let Some(list) = grid.get(&nb) else { continue };
            for &j in list {
                if j <= idx {
                    continue;
                }
                let close = keys[j].iter().zip(key).all(|(a, b)| (a - b).abs() <= key_tol);
                let gap = dist(&values[j], &values[idx]);
                if close && gap > value_tol && worst.map_or(true, |w| gap > w.2) {
                    worst = Some((idx, j, gap));
                }
            }
        }
    }
    worst
}
