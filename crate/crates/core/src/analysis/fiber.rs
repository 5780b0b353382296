use std::collections::BTreeMap;

use nalgebra::DMatrix;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::rank::rank_profile;
use super::sample::SampleBox;
use crate::lie::ObservabilityMap;
use crate::numeric::{dist, levenberg_marquardt, norm, rng, sub_seed, LmOptions};

/// Two states with (numerically) equal `H_i`.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct FiberPair {
    pub xa: Vec<f64>,
    pub xb: Vec<f64>,
    pub order: usize,
    /// `|H_i(x_a) - H_i(x_b)|`.
    pub dh: f64,
    /// `|x_a - x_b|`.
    pub sep: f64,
}

impl FiberPair {
    fn measured(map: &ObservabilityMap, xa: Vec<f64>, xb: Vec<f64>) -> Option<Self> {
        let ha = map.eval(&xa).ok()?;
        let hb = map.eval(&xb).ok()?;
        let dh = dist(&ha, &hb);
        let sep = dist(&xa, &xb);
        Some(Self { xa, xb, order: map.order, dh, sep })
    }
}

/// Solves `H(x) = target` by bounded LM from `start`.
pub(crate) fn solve_preimage(
    map: &ObservabilityMap,
    target: &[f64],
    start: &[f64],
    bounds: &SampleBox,
    opts: &LmOptions,
) -> Option<(Vec<f64>, f64)> {
    let res = levenberg_marquardt(
        |x| {
            let h = map.eval(x).ok()?;
            let j: DMatrix<f64> = map.jacobian_at(x).ok()?;
            let r: Vec<f64> = h.iter().zip(target).map(|(a, b)| a - b).collect();
            if r.iter().chain(j.iter()).all(|v| v.is_finite()) {
                Some((r, j))
            } else {
                None
            }
        },
        start,
        Some((&bounds.lower, &bounds.upper)),
        opts,
    )?;
    Some((res.x, res.residual))
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct InjectivityOptions {
    /// Minimum separation `δ` of a reported collision.
    pub delta: f64,
    pub fiber_tol: f64,
    /// Bucket width relative to each component's sampled range.
    pub bucket: f64,
    /// Near-collisions refined by LM, at most.
    pub max_refine: usize,
    /// Collisions listed in the report, at most (all are counted).
    pub max_report: usize,
}

impl Default for InjectivityOptions {
    fn default() -> Self {
        Self { delta: 0.05, fiber_tol: 1e-9, bucket: 1e-3, max_refine: 2000, max_report: 200 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct InjectivityReport {
    pub order: usize,
    pub delta: f64,
    pub samples: usize,
    pub candidates_refined: usize,
    pub total_collisions: usize,
    /// First `max_report` collisions in sample order.
    pub collisions: Vec<FiberPair>,
}

impl InjectivityReport {
    pub fn injective_on_samples(&self) -> bool {
        self.total_collisions == 0
    }
}

/// Looks for pairs of samples at least `δ` apart with equal `H`.
///
/// Samples are bucketed by value on two staggered grids; pairs already equal
/// within `fiber_tol` count directly, nearly equal ones are refined by moving
/// the second point with LM toward the fiber of the first.
pub fn injectivity_scan(
    map: &ObservabilityMap,
    points: &[Vec<f64>],
    neighbourhood: &SampleBox,
    opts: &InjectivityOptions,
) -> InjectivityReport {
    let values: Vec<Option<Vec<f64>>> = points.par_iter().map(|x| map.eval(x).ok()).collect();
    let defined: Vec<usize> = (0..points.len()).filter(|&k| values[k].is_some()).collect();
    let dim = map.order;
    let mut lo = vec![f64::INFINITY; dim];
    let mut hi = vec![f64::NEG_INFINITY; dim];
    for &k in &defined {
        for (c, v) in values[k].as_ref().unwrap().iter().enumerate() {
            lo[c] = lo[c].min(*v);
            hi[c] = hi[c].max(*v);
        }
    }
    let width: Vec<f64> = (0..dim)
        .map(|c| {
            let r = hi[c] - lo[c];
            opts.bucket * if r > 0.0 { r } else { 1.0 }
        })
        .collect();

    // (a, b) candidate pairs, a < b, deduplicated across the two grids.
    let mut candidates: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    for shift in [0.0, 0.5] {
        let mut cells: BTreeMap<Vec<i64>, Vec<usize>> = BTreeMap::new();
        for &k in &defined {
            let v = values[k].as_ref().unwrap();
            let key: Vec<i64> = (0..dim).map(|c| ((v[c] - lo[c]) / width[c] + shift).floor() as i64).collect();
            cells.entry(key).or_default().push(k);
        }
        for members in cells.values() {
            // Star pairs against the first member keep the count linear.
            let a = members[0];
            for &b in &members[1..] {
                if dist(&points[a], &points[b]) >= opts.delta {
                    let dh = dist(values[a].as_ref().unwrap(), values[b].as_ref().unwrap());
                    candidates.insert((a, b), dh);
                }
            }
        }
    }

    let mut exact: Vec<(usize, usize)> = Vec::new();
    let mut near: Vec<((usize, usize), f64)> = Vec::new();
    for (&pair, &dh) in &candidates {
        if dh <= opts.fiber_tol {
            exact.push(pair);
        } else {
            near.push((pair, dh));
        }
    }
    near.sort_by(|x, y| x.1.total_cmp(&y.1).then(x.0.cmp(&y.0)));
    near.truncate(opts.max_refine);
    let lm = LmOptions::default();
    let refined: Vec<Option<FiberPair>> = near
        .par_iter()
        .map(|&((a, b), _)| {
            let target = values[a].as_ref().unwrap();
            let (xb, res) = solve_preimage(map, target, &points[b], neighbourhood, &lm)?;
            if res > opts.fiber_tol || dist(&xb, &points[a]) < opts.delta || !neighbourhood.contains(&xb) {
                return None;
            }
            FiberPair::measured(map, points[a].clone(), xb).filter(|p| p.dh <= opts.fiber_tol)
        })
        .collect();

    let mut found: Vec<((usize, usize), FiberPair)> = exact
        .iter()
        .filter_map(|&(a, b)| FiberPair::measured(map, points[a].clone(), points[b].clone()).map(|p| ((a, b), p)))
        .collect();
    found.extend(near.iter().zip(refined).filter_map(|((key, _), p)| p.map(|p| (*key, p))));
    found.sort_by(|x, y| x.0.cmp(&y.0));
    let total_collisions = found.len();
    InjectivityReport {
        order: map.order,
        delta: opts.delta,
        samples: defined.len(),
        candidates_refined: near.len(),
        total_collisions,
        collisions: found.into_iter().take(opts.max_report).map(|(_, p)| p).collect(),
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct FiberOptions {
    pub anchors: usize,
    /// LM starts per anchor.
    pub starts: usize,
    pub fiber_tol: f64,
    pub delta_min: f64,
    /// Solutions of one anchor closer than this are merged.
    pub merge_tol: f64,
    pub rank_tol: f64,
    pub seed: u64,
}

impl Default for FiberOptions {
    fn default() -> Self {
        Self { anchors: 64, starts: 16, fiber_tol: 1e-9, delta_min: 1e-3, merge_tol: 1e-6, rank_tol: 1e-8, seed: 0 }
    }
}

/// Picks anchors, preferring rank-deficient grid points of `∂H/∂x`.
fn choose_anchors(map: &ObservabilityMap, sample: &SampleBox, opts: &FiberOptions) -> Vec<Vec<f64>> {
    let grid = sample.grid_points();
    let rank = rank_profile(map, &grid, opts.rank_tol);
    let deficient: Vec<&Vec<f64>> = rank.deficient_points().map(|p| &p.x).collect();
    let from_singular = deficient.len().min(opts.anchors / 2);
    let mut anchors: Vec<Vec<f64>> = (0..from_singular)
        .map(|k| deficient[k * deficient.len() / from_singular.max(1)].clone())
        .collect();
    anchors.extend(sample.random_points_with(opts.anchors - from_singular, sub_seed(opts.seed, 1)));
    anchors
}

/// Multistart LM search for distinct points sharing the value of `H` at
/// anchors drawn from `sample`; starts and solutions live in `neighbourhood`.
pub fn fiber_pair_search(
    map: &ObservabilityMap,
    sample: &SampleBox,
    neighbourhood: &SampleBox,
    opts: &FiberOptions,
) -> Vec<FiberPair> {
    let anchors = choose_anchors(map, sample, opts);
    let lm = LmOptions::default();
    let per_anchor: Vec<Vec<FiberPair>> = anchors
        .par_iter()
        .enumerate()
        .map(|(k, xa)| {
            let Ok(target) = map.eval(xa) else { return Vec::new() };
            let mut r = rng(sub_seed(opts.seed, 1000 + k as u64));
            let mut sols: Vec<Vec<f64>> = Vec::new();
            let mut out = Vec::new();
            for _ in 0..opts.starts {
                let start: Vec<f64> = (0..xa.len())
                    .map(|a| r.gen_range(neighbourhood.lower[a]..=neighbourhood.upper[a]))
                    .collect();
                let Some((xb, res)) = solve_preimage(map, &target, &start, neighbourhood, &lm) else { continue };
                if res > opts.fiber_tol || dist(&xb, xa) < opts.delta_min || !neighbourhood.contains(&xb) {
                    continue;
                }
                if sols.iter().any(|s| dist(s, &xb) <= opts.merge_tol) {
                    continue;
                }
                if let Some(p) = FiberPair::measured(map, xa.clone(), xb.clone()) {
                    if p.dh <= opts.fiber_tol {
                        sols.push(xb);
                        out.push(p);
                    }
                }
            }
            out
        })
        .collect();
    per_anchor.into_iter().flatten().collect()
}

/// Fiber pair annotated with the input-gain discrepancy.
#[derive(Clone, Debug, Serialize)]
pub struct CheckedPair {
    #[serde(flatten)]
    pub pair: FiberPair,
    /// `|L_g L_f^{i-1} h(x_a) - L_g L_f^{i-1} h(x_b)|`.
    pub dlg: f64,
    /// Allowed discrepancy: `a_tol + lipschitz * dh`.
    pub allowed: f64,
    /// Distance to the nearest sampled full-rank point of `∂H_{i-1}/∂x`.
    pub full_rank_distance: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct PropertyAReport {
    pub order: usize,
    pub a_tol: f64,
    pub pairs: Vec<CheckedPair>,
    /// Largest discrepancy over pairs (0 when there are none).
    pub max_discrepancy: f64,
    pub pass: bool,
    /// True when no fiber pair was found, so the check passes vacuously.
    pub vacuous: bool,
    /// Pair with the largest excess over its allowance, when failing.
    pub witness: Option<CheckedPair>,
}

/// Compares `L_g L_f^{i-1} h` across fiber pairs.
///
/// `previous_full_rank` lists sample points where `∂H_{i-1}/∂x` has full rank;
/// distances to it are reported per pair as evidence for the accumulation
/// condition on singular points.
pub fn property_a_check(
    map: &ObservabilityMap,
    pairs: &[FiberPair],
    a_tol: f64,
    previous_full_rank: Option<&[Vec<f64>]>,
) -> PropertyAReport {
    let mut checked = Vec::with_capacity(pairs.len());
    for p in pairs {
        let (Ok(ga), Ok(gb)) = (map.input_gain(&p.xa), map.input_gain(&p.xb)) else { continue };
        let dlg = dist(&ga, &gb);
        let lip = [&p.xa, &p.xb]
            .iter()
            .filter_map(|x| map.input_gain_jacobian(x).ok())
            .map(|j| norm(j.as_slice()))
            .fold(0.0, f64::max);
        let full_rank_distance = previous_full_rank.filter(|pts| !pts.is_empty()).map(|pts| {
            let nearest = |x: &[f64]| pts.iter().map(|q| dist(q, x)).fold(f64::INFINITY, f64::min);
            nearest(&p.xa).max(nearest(&p.xb))
        });
        checked.push(CheckedPair { pair: p.clone(), dlg, allowed: a_tol + lip * p.dh, full_rank_distance });
    }
    let max_discrepancy = checked.iter().map(|c| c.dlg).fold(0.0, f64::max);
    let witness = checked
        .iter()
        .filter(|c| c.dlg > c.allowed)
        .max_by(|a, b| (a.dlg - a.allowed).total_cmp(&(b.dlg - b.allowed)))
        .cloned();
    PropertyAReport {
        order: map.order,
        a_tol,
        vacuous: checked.is_empty(),
        pass: witness.is_none(),
        max_discrepancy,
        witness,
        pairs: checked,
    }
}
