use nalgebra::DMatrix;
use rand::Rng as _;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::sample::SampleBox;
use crate::expr::{differentiate, Expr};
use crate::lie::ObservabilityMap;
use crate::numeric::{dist, rank_info, rng, sub_seed};

/// A value map `Φ` and a key map `γ`, both in the state; the scan measures
/// how well `Φ` factors through `γ` in a Lipschitz way.
#[derive(Clone, Debug)]
pub struct RatioProblem {
    pub value: Vec<Expr>,
    pub key: Vec<Expr>,
    pub key_jacobian: Vec<Vec<Expr>>,
}

fn eval_all(es: &[Expr], x: &[f64]) -> Option<Vec<f64>> {
    es.iter().map(|e| e.evaluate(x).ok()).collect()
}

impl RatioProblem {
    pub fn new(value: Vec<Expr>, key: Vec<Expr>, n: usize) -> Self {
        let key_jacobian = key.iter().map(|k| (0..n).map(|j| differentiate(k, j)).collect()).collect();
        Self { value, key, key_jacobian }
    }

    /// `Φ = L_g L_f^{i-1} h`, `γ = H_i`.
    pub fn input_gain(map: &ObservabilityMap) -> Self {
        Self {
            value: map.input_rows[map.order - 1].clone(),
            key: map.components.clone(),
            key_jacobian: map.jacobian.clone(),
        }
    }

    /// `Φ = L_f^i h`, `γ = H_i`.
    pub fn drift(map: &ObservabilityMap) -> Self {
        Self { value: vec![map.drift_next.clone()], key: map.components.clone(), key_jacobian: map.jacobian.clone() }
    }

    pub fn value_at(&self, x: &[f64]) -> Option<Vec<f64>> {
        eval_all(&self.value, x)
    }

    pub fn key_at(&self, x: &[f64]) -> Option<Vec<f64>> {
        eval_all(&self.key, x)
    }

    fn key_jacobian_at(&self, x: &[f64]) -> Option<DMatrix<f64>> {
        let n = x.len();
        let mut j = DMatrix::zeros(self.key.len(), n);
        for (r, row) in self.key_jacobian.iter().enumerate() {
            for (c, e) in row.iter().enumerate() {
                j[(r, c)] = e.evaluate(x).ok()?;
            }
        }
        Some(j)
    }

    fn ratio(&self, xa: &[f64], xb: &[f64]) -> PairRatio {
        let (Some(va), Some(vb), Some(ka), Some(kb)) = (self.value_at(xa), self.value_at(xb), self.key_at(xa), self.key_at(xb))
        else {
            return PairRatio::Skip;
        };
        let dv = dist(&va, &vb);
        let dk = dist(&ka, &kb);
        let key_scale = 1.0 + ka.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let val_scale = 1.0 + va.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let key_zero = dk <= 1e-14 * key_scale;
        let val_zero = dv <= 1e-14 * val_scale;
        match (key_zero, val_zero) {
            (true, true) => PairRatio::Skip,
            (true, false) => PairRatio::Infinite,
            _ => PairRatio::Finite(dv / dk),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum PairRatio {
    Finite(f64),
    Infinite,
    Skip,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct LipschitzOptions {
    /// Smallest pair distance used for the global estimate.
    pub r0: f64,
    /// Cells per axis for local estimates.
    pub cells: usize,
    /// Anchor grid points per axis.
    pub anchor_grid: usize,
    pub random_anchors: usize,
    /// Extra random pairs for the global estimate.
    pub random_pairs: usize,
    /// Growth factor per halving of the pair distance that counts as blowup.
    pub blowup_threshold: f64,
    pub seed: u64,
}

impl Default for LipschitzOptions {
    fn default() -> Self {
        Self { r0: 0.01, cells: 5, anchor_grid: 9, random_anchors: 200, random_pairs: 2000, blowup_threshold: 1.5, seed: 0 }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct CellEstimate {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
    pub center: Vec<f64>,
    /// Local estimates at pair distances `r0`, `r0/2`, `r0/4`.
    pub local: [f64; 3],
    pub infinite_pairs: usize,
    pub anchors: usize,
    pub flagged: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct LipschitzReport {
    pub r0: f64,
    pub blowup_threshold: f64,
    /// Largest ratio over pairs at distance at least `r0`.
    pub global: f64,
    /// Pair attaining `global`.
    pub argmax: Option<(Vec<f64>, Vec<f64>)>,
    pub pairs_evaluated: usize,
    /// Pairs with both differences numerically zero.
    pub skipped_pairs: usize,
    /// Pairs with equal keys but different values.
    pub infinite_pairs: usize,
    pub cells: Vec<CellEstimate>,
}

impl LipschitzReport {
    pub fn flagged_cells(&self) -> impl Iterator<Item = &CellEstimate> {
        self.cells.iter().filter(|c| c.flagged)
    }

    pub fn any_blowup(&self) -> bool {
        self.cells.iter().any(|c| c.flagged)
    }
}

struct CellGrid<'a> {
    sample: &'a SampleBox,
    cells: usize,
}

impl CellGrid<'_> {
    fn index(&self, x: &[f64]) -> usize {
        let mut idx = 0;
        for a in 0..x.len() {
            let w = self.sample.upper[a] - self.sample.lower[a];
            let c = (((x[a] - self.sample.lower[a]) / w) * self.cells as f64).floor() as i64;
            idx = idx * self.cells + c.clamp(0, self.cells as i64 - 1) as usize;
        }
        idx
    }

    fn bounds(&self, mut idx: usize) -> (Vec<f64>, Vec<f64>) {
        let n = self.sample.dim();
        let mut lo = vec![0.0; n];
        let mut hi = vec![0.0; n];
        for a in (0..n).rev() {
            let c = idx % self.cells;
            idx /= self.cells;
            let w = (self.sample.upper[a] - self.sample.lower[a]) / self.cells as f64;
            lo[a] = self.sample.lower[a] + c as f64 * w;
            hi[a] = if c + 1 == self.cells { self.sample.upper[a] } else { lo[a] + w };
        }
        (lo, hi)
    }
}

/// Compass search inside a cell for the point where `∂γ/∂x` is closest to
/// losing rank.
fn most_singular_point(problem: &RatioProblem, lo: &[f64], hi: &[f64], sample: &SampleBox) -> Option<Vec<f64>> {
    let score = |x: &[f64]| -> f64 {
        if !sample.contains(x) {
            return f64::INFINITY;
        }
        match problem.key_jacobian_at(x) {
            Some(j) if j.iter().all(|v| v.is_finite()) => rank_info(&j, 0.0).relative_sigma_min(),
            _ => f64::INFINITY,
        }
    };
    let n = lo.len();
    let mut x: Vec<f64> = (0..n).map(|a| 0.5 * (lo[a] + hi[a])).collect();
    let mut best = score(&x);
    let mut step: Vec<f64> = (0..n).map(|a| 0.25 * (hi[a] - lo[a])).collect();
    for _ in 0..40 {
        let mut moved = false;
        for a in 0..n {
            for sgn in [-1.0, 1.0] {
                let mut y = x.clone();
                y[a] = (y[a] + sgn * step[a]).clamp(lo[a], hi[a]);
                let s = score(&y);
                if s < best {
                    best = s;
                    x = y;
                    moved = true;
                }
            }
        }
        if !moved {
            step.iter_mut().for_each(|s| *s *= 0.5);
        }
    }
    best.is_finite().then_some(x)
}

struct AnchorResult {
    cell: usize,
    /// Best finite ratio per radius.
    local: [f64; 3],
    infinite: usize,
    skipped: usize,
    evaluated: usize,
    argmax: Option<(Vec<f64>, Vec<f64>)>,
}

fn scan_anchor(problem: &RatioProblem, xa: &[f64], sample: &SampleBox, grid: &CellGrid, r0: f64) -> AnchorResult {
    let n = xa.len();
    let mut dirs: Vec<Vec<f64>> = Vec::with_capacity(4 * n);
    for a in 0..n {
        let mut e = vec![0.0; n];
        e[a] = 1.0;
        dirs.push(e.clone());
        e[a] = -1.0;
        dirs.push(e);
    }
    if let Some(j) = problem.key_jacobian_at(xa).filter(|j| j.iter().all(|v| v.is_finite())) {
        for v in rank_info(&j, 0.0).right_vectors {
            dirs.push(v.iter().map(|c| -c).collect());
            dirs.push(v);
        }
    }
    let mut res = AnchorResult { cell: grid.index(xa), local: [0.0; 3], infinite: 0, skipped: 0, evaluated: 0, argmax: None };
    for (k, r) in [r0, r0 / 2.0, r0 / 4.0].into_iter().enumerate() {
        for d in &dirs {
            let xb: Vec<f64> = xa.iter().zip(d).map(|(a, c)| a + r * c).collect();
            if !sample.contains(&xb) {
                continue;
            }
            res.evaluated += 1;
            match problem.ratio(xa, &xb) {
                PairRatio::Finite(q) => {
                    if q > res.local[k] {
                        res.local[k] = q;
                        if k == 0 {
                            res.argmax = Some((xa.to_vec(), xb));
                        }
                    }
                }
                PairRatio::Infinite => res.infinite += 1,
                PairRatio::Skip => res.skipped += 1,
            }
        }
    }
    res
}

/// Sup of `|ΔΦ| / |Δγ|` over sampled pairs, globally and per cell, with
/// blowup detection by shrinking the pair distance.
pub fn lipschitz_ratio_scan(problem: &RatioProblem, sample: &SampleBox, opts: &LipschitzOptions) -> LipschitzReport {
    let n = sample.dim();
    let grid = CellGrid { sample, cells: opts.cells.max(1) };
    let total_cells = grid.cells.pow(n as u32);

    let mut anchors = sample.grid_with(&vec![opts.anchor_grid.max(1); n]);
    anchors.extend(sample.random_points_with(opts.random_anchors, sub_seed(opts.seed, 2)));
    let refined: Vec<Option<Vec<f64>>> = (0..total_cells)
        .into_par_iter()
        .map(|c| {
            let (lo, hi) = grid.bounds(c);
            most_singular_point(problem, &lo, &hi, sample)
        })
        .collect();
    anchors.extend(refined.into_iter().flatten());

    let results: Vec<AnchorResult> = anchors.par_iter().map(|xa| scan_anchor(problem, xa, sample, &grid, opts.r0)).collect();

    let mut cells: Vec<CellEstimate> = (0..total_cells)
        .map(|c| {
            let (lower, upper) = grid.bounds(c);
            let center = lower.iter().zip(&upper).map(|(l, u)| 0.5 * (l + u)).collect();
            CellEstimate { lower, upper, center, local: [0.0; 3], infinite_pairs: 0, anchors: 0, flagged: false }
        })
        .collect();
    let mut global = 0.0;
    let mut argmax = None;
    let (mut evaluated, mut skipped, mut infinite) = (0, 0, 0);
    for r in results {
        let cell = &mut cells[r.cell];
        cell.anchors += 1;
        cell.infinite_pairs += r.infinite;
        for k in 0..3 {
            cell.local[k] = cell.local[k].max(r.local[k]);
        }
        if r.local[0] > global {
            global = r.local[0];
            argmax = r.argmax;
        }
        evaluated += r.evaluated;
        skipped += r.skipped;
        infinite += r.infinite;
    }

    // Random pairs, generated sequentially so a larger budget extends a smaller one.
    let mut g = rng(sub_seed(opts.seed, 3));
    let draw = |g: &mut crate::numeric::Rng| -> Vec<f64> {
        (0..n).map(|a| g.gen_range(sample.lower[a]..=sample.upper[a])).collect()
    };
    for _ in 0..opts.random_pairs {
        let (xa, xb) = (draw(&mut g), draw(&mut g));
        if !sample.contains(&xa) || !sample.contains(&xb) || dist(&xa, &xb) < opts.r0 {
            continue;
        }
        evaluated += 1;
        match problem.ratio(&xa, &xb) {
            PairRatio::Finite(q) if q > global => {
                global = q;
                argmax = Some((xa, xb));
            }
            PairRatio::Finite(_) => {}
            PairRatio::Infinite => infinite += 1,
            PairRatio::Skip => skipped += 1,
        }
    }

    for c in &mut cells {
        let [l0, l1, l2] = c.local;
        let grows = l0 > 0.0 && l1 > opts.blowup_threshold * l0 && l2 > opts.blowup_threshold * l1;
        c.flagged = grows || c.infinite_pairs > 0;
    }

    LipschitzReport {
        r0: opts.r0,
        blowup_threshold: opts.blowup_threshold,
        global,
        argmax,
        pairs_evaluated: evaluated,
        skipped_pairs: skipped,
        infinite_pairs: infinite,
        cells,
    }
}

#[cfg(test)]
mod tests {
    use std::sync::Arc;

    use super::*;
    use crate::lie::build_h;
    use crate::system::parse_system;

    fn map(f2: &str, order: usize) -> ObservabilityMap {
        let text = format!("states x1 x2 x3\ninputs u\nf = [x2, {f2}, 1]\ng = [[0],[0],[1]]\nh = x1\n");
        build_h(&Arc::new(parse_system(&text).unwrap()), order)
    }

    fn boxed(x3: (f64, f64)) -> SampleBox {
        SampleBox::uniform(vec![-1.0, -1.0, x3.0], vec![1.0, 1.0, x3.1], 9)
    }

    #[test]
    fn bounded_ratio_near_analytic_sup() {
        let r = lipschitz_ratio_scan(&RatioProblem::input_gain(&map("x3^3", 3)), &boxed((0.5, 2.0)), &LipschitzOptions::default());
        assert!(r.global <= 4.0 + 1e-9 && r.global > 3.6, "{}", r.global);
        assert!(!r.any_blowup());
    }

    #[test]
    fn blowup_only_near_singular_plane() {
        let r = lipschitz_ratio_scan(&RatioProblem::input_gain(&map("x3^3", 3)), &boxed((-1.0, 1.0)), &LipschitzOptions::default());
        assert!(r.any_blowup());
        for c in r.flagged_cells() {
            assert!(c.lower[2] <= 0.0 && c.upper[2] >= 0.0, "{c:?}");
        }
    }

    #[test]
    fn example_two_bounded_across_x1_zero() {
        let r = lipschitz_ratio_scan(&RatioProblem::input_gain(&map("x3^3*x1", 3)), &boxed((0.5, 2.0)), &LipschitzOptions::default());
        assert!(!r.any_blowup());
        assert!(r.global.is_finite() && r.global < 10.0, "{}", r.global);
        assert_eq!(r.infinite_pairs, 0);
    }

    #[test]
    fn estimate_grows_with_pair_budget() {
        let p = RatioProblem::input_gain(&map("x3^3", 3));
        let b = boxed((0.5, 2.0));
        let few = LipschitzOptions { anchor_grid: 2, random_anchors: 0, cells: 1, random_pairs: 50, ..Default::default() };
        let many = LipschitzOptions { random_pairs: 500, ..few.clone() };
        assert!(lipschitz_ratio_scan(&p, &b, &many).global >= lipschitz_ratio_scan(&p, &b, &few).global);
    }
}
