//! Triangular canonical form `ż_k = z_{k+1} + 𝔤_k(z) u`, `ż_{d_z} = φ(z) + 𝔤_{d_z}(z) u`
//! in the coordinates `z = H_{d_z}(x)`.
//!
//! Each `𝔤_i` and `φ` is stored as a sampled table over its key space plus
//! the symbolic value it factors. On the image of the key map the value is
//! evaluated exactly through a numerical preimage; elsewhere the table's
//! McShane (or nearest-sample) extension is used.

mod evaluator;
mod inverse;
mod io;
mod residual;
mod sampled;

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

pub use evaluator::FormEvaluator;
pub use inverse::{condition_number, left_inverse, InverseError, InverseOptions, InverseResult};
pub use io::{FormFileError, FORM_FORMAT_VERSION};
pub use residual::{integrate_form, residual_check, ResidualReport};
pub use sampled::{key_collision, max_pairwise_ratio, thin_keys, Extension, SampledError, SampledFunction};

use crate::analysis::{
    fiber_pair_search, lipschitz_ratio_scan, property_a_check, BoxError, CheckedPair, FiberOptions, LipschitzOptions,
    RatioProblem, SampleBox,
};
use crate::expr::Expr;
use crate::lie::{LieTable, ObservabilityMap};
use crate::numeric::sub_seed;
use crate::system::ControlAffineSystem;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct FormOptions {
    /// Relative margin of the neighbourhood box around the region.
    pub margin: f64,
    pub fit_tol: f64,
    pub a_tol: f64,
    pub fiber_tol: f64,
    pub inv_tol: f64,
    /// Off the image of `H_k`, a key at most this far from `H_k(x̂)` is
    /// evaluated at the least-squares preimage `x̂`; farther keys use the table.
    pub projection_radius: f64,
    pub delta_min: f64,
    /// Table constants above this mark the function non-Lipschitz.
    pub l_cap: f64,
    /// Keys closer than this are thinned out of a table.
    pub min_key_sep: f64,
    /// Held-out random points used to measure the fit.
    pub validation_points: usize,
    pub lipschitz: LipschitzOptions,
    pub fiber: FiberOptions,
    pub seed: u64,
}

impl Default for FormOptions {
    fn default() -> Self {
        Self {
            margin: 0.05,
            fit_tol: 1e-4,
            a_tol: 1e-6,
            fiber_tol: 1e-9,
            inv_tol: 1e-9,
            projection_radius: 0.1,
            delta_min: 1e-3,
            l_cap: 1e6,
            min_key_sep: 1e-4,
            validation_points: 200,
            lipschitz: LipschitzOptions::default(),
            fiber: FiberOptions::default(),
            seed: 0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LipschitzStatus {
    /// Largest difference quotient over the table.
    pub table_constant: f64,
    /// Global sup from the ratio scan (0 for constant functions).
    pub scan_constant: f64,
    pub capped: bool,
    pub blowup: bool,
    pub flagged_cells: usize,
}

impl LipschitzStatus {
    pub fn lipschitz(&self) -> bool {
        !self.capped && !self.blowup
    }
}

/// One of `𝔤_1..𝔤_{d_z}` or `φ`.
#[derive(Clone, Debug)]
pub struct FormFunction {
    pub label: String,
    /// The function reads `z_1..z_{key_order}`.
    pub key_order: usize,
    /// Symbolic value in `x` that the function factors through `H_{key_order}`.
    pub value: Vec<Expr>,
    /// Set when the value does not depend on `x`.
    pub constant: Option<Vec<f64>>,
    pub table: SampledFunction,
    /// State samples the table keys were computed from.
    pub preimages: Vec<Vec<f64>>,
    pub lipschitz: LipschitzStatus,
}

impl FormFunction {
    pub fn value_at(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.value.iter().map(|e| e.evaluate(x).ok()).collect()
    }
}

#[derive(Clone, Debug, thiserror::Error)]
pub enum FormError {
    #[error("form needs d_z >= n_t + 1 (got n_t = {n_t}, d_z = {d_z})")]
    Orders { n_t: usize, d_z: usize },
    #[error("region: {0}")]
    Region(#[from] BoxError),
    #[error("input gain of order {order} is not constant on fibers of H_{order}: gap {:.6e} between {:?} and {:?}", .witness.dlg, .witness.pair.xa, .witness.pair.xb)]
    PropertyA { order: usize, witness: CheckedPair },
    #[error("samples with equal H_{order} carry input gains {gap:.6e} apart: {xa:?} and {xb:?}")]
    KeyCollision { order: usize, xa: Vec<f64>, xb: Vec<f64>, gap: f64 },
    #[error("{label}: no sample point could be evaluated")]
    Empty { label: String },
    #[error("trajectory left the region at t = {t}: {x:?}")]
    LeftRegion { t: f64, x: Vec<f64> },
    #[error("simulation failed: {0}")]
    Simulation(String),
}

/// Where the form was built from, for reproducibility checks on reload.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    /// SHA-256 of the canonical system text.
    pub system_hash: String,
    /// SHA-256 of the run configuration, when built from one.
    pub config_hash: Option<String>,
}

/// Fit of each function on held-out samples.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub points: usize,
    /// `(label, max error)` in function order.
    pub max_errors: Vec<(String, f64)>,
    /// Evaluations that used the table extension instead of a preimage.
    pub fallbacks: usize,
}

impl FitReport {
    pub fn worst(&self) -> f64 {
        self.max_errors.iter().map(|e| e.1).fold(0.0, f64::max)
    }
}

#[derive(Clone, Debug)]
pub struct TriangularForm {
    pub system: Arc<ControlAffineSystem>,
    pub n_t: usize,
    pub d_z: usize,
    /// `maps[k]` is `H_{k+1}`.
    pub maps: Vec<ObservabilityMap>,
    /// `𝔤_1..𝔤_{d_z}`.
    pub g: Vec<FormFunction>,
    pub phi: FormFunction,
    pub region: SampleBox,
    pub neighbourhood: SampleBox,
    /// Bounds of `H_{d_z}` over the region samples, widened by the margin.
    pub image_lower: Vec<f64>,
    pub image_upper: Vec<f64>,
    /// Labels of `𝔤_i` with `i > n_t` that depend on `z` beyond `z_1..z_i`.
    pub full_dependence: Vec<String>,
    pub fit: FitReport,
    pub notes: Vec<String>,
    pub options: FormOptions,
    pub provenance: Provenance,
}

impl TriangularForm {
    pub fn map(&self, order: usize) -> &ObservabilityMap {
        &self.maps[order - 1]
    }

    pub fn functions(&self) -> impl Iterator<Item = &FormFunction> {
        self.g.iter().chain(std::iter::once(&self.phi))
    }

    pub fn lift(&self, x: &[f64]) -> Option<Vec<f64>> {
        self.map(self.d_z).eval(x).ok()
    }
}

fn eval_all(es: &[Expr], x: &[f64]) -> Option<Vec<f64>> {
    let v: Option<Vec<f64>> = es.iter().map(|e| e.evaluate(x).ok()).collect();
    v.filter(|v| v.iter().all(|a| a.is_finite()))
}

/// Tabulates `value` against `H_{key_order}` over `points`.
fn tabulate(
    key_map: &ObservabilityMap,
    value: &[Expr],
    points: &[Vec<f64>],
    min_sep: f64,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let rows: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = points
        .par_iter()
        .filter_map(|x| Some((eval_all(&key_map.components, x)?, eval_all(value, x)?, x.clone())))
        .collect();
    let keys: Vec<Vec<f64>> = rows.iter().map(|r| r.0.clone()).collect();
    let kept = thin_keys(&keys, min_sep);
    let mut out = (Vec::new(), Vec::new(), Vec::new());
    for k in kept {
        out.0.push(rows[k].0.clone());
        out.1.push(rows[k].1.clone());
        out.2.push(rows[k].2.clone());
    }
    out
}

fn finish(
    label: String,
    key_map: &ObservabilityMap,
    value: Vec<Expr>,
    region: &SampleBox,
    opts: &FormOptions,
) -> Result<FormFunction, FormError> {
    let points = region.points();
    let (keys, values, preimages) = tabulate(key_map, &value, &points, opts.min_key_sep);
    if keys.is_empty() {
        return Err(FormError::Empty { label });
    }
    let constant: Option<Vec<f64>> = value.iter().map(|e| e.as_const()).collect();
    let (table, lipschitz) = if constant.is_some() {
        let t = SampledFunction::mcshane(keys, values, 0.0).expect("constant table is 0-Lipschitz");
        let status = LipschitzStatus { table_constant: 0.0, scan_constant: 0.0, capped: false, blowup: false, flagged_cells: 0 };
        (t, status)
    } else {
        let table_constant = max_pairwise_ratio(&keys, &values);
        let problem = RatioProblem {
            value: value.clone(),
            key: key_map.components.clone(),
            key_jacobian: key_map.jacobian.clone(),
        };
        let scan = lipschitz_ratio_scan(&problem, region, &opts.lipschitz);
        let status = LipschitzStatus {
            table_constant,
            // JSON has no infinity
            scan_constant: scan.global.min(f64::MAX),
            capped: !(table_constant <= opts.l_cap) || !(scan.global <= opts.l_cap),
            blowup: scan.any_blowup(),
            flagged_cells: scan.flagged_cells().count(),
        };
        let t = if status.lipschitz() {
            SampledFunction::mcshane(keys.clone(), values.clone(), table_constant)
                .or_else(|_| SampledFunction::nearest(keys, values))
        } else {
            SampledFunction::nearest(keys, values)
        }
        .map_err(|_| FormError::Empty { label: label.clone() })?;
        (t, status)
    };
    Ok(FormFunction { label, key_order: key_map.order, value, constant, table, preimages, lipschitz })
}

/// `φ = L_f^{d_z} h` factored through `H_{d_z}`.
pub fn build_phi(table: &mut LieTable, d_z: usize, region: &SampleBox, opts: &FormOptions) -> Result<FormFunction, FormError> {
    region.validate(table.system().n())?;
    let map = table.observability_map(d_z);
    let value = vec![map.drift_next.clone()];
    finish("phi".into(), &map, value, region, opts)
}

/// `𝔤_i = L_g L_f^{i-1} h`, keyed on `H_i` for `i <= n_t` and on `H_{d_z}`
/// otherwise. Refuses when the gain is not constant on sampled fibers of `H_i`.
pub fn build_g(
    table: &mut LieTable,
    i: usize,
    n_t: usize,
    d_z: usize,
    region: &SampleBox,
    opts: &FormOptions,
) -> Result<FormFunction, FormError> {
    region.validate(table.system().n())?;
    let key_order = if i <= n_t { i } else { d_z };
    let key_map = table.observability_map(key_order);
    let value = table.observability_map(i).input_rows[i - 1].clone();
    if i <= n_t {
        let own = table.observability_map(i);
        let neighbourhood = region.inflate(opts.margin);
        let fopts = FiberOptions {
            fiber_tol: opts.fiber_tol,
            delta_min: opts.delta_min,
            seed: sub_seed(opts.seed, 100 + i as u64),
            ..opts.fiber.clone()
        };
        let pairs = fiber_pair_search(&own, region, &neighbourhood, &fopts);
        let report = property_a_check(&own, &pairs, opts.a_tol, None);
        if let Some(witness) = report.witness {
            return Err(FormError::PropertyA { order: i, witness });
        }
        let rows: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)> = region
            .points()
            .into_par_iter()
            .filter_map(|x| Some((eval_all(&own.components, &x)?, eval_all(&value, &x)?, x)))
            .collect();
        let keys: Vec<Vec<f64>> = rows.iter().map(|r| r.0.clone()).collect();
        let vals: Vec<Vec<f64>> = rows.iter().map(|r| r.1.clone()).collect();
        if let Some((a, b, gap)) = key_collision(&keys, &vals, opts.fiber_tol, opts.a_tol) {
            return Err(FormError::KeyCollision { order: i, xa: rows[a].2.clone(), xb: rows[b].2.clone(), gap });
        }
    }
    finish(format!("g{i}"), &key_map, value, region, opts)
}

/// Builds `𝔤_1..𝔤_{d_z}` and `φ` on `region` and measures the fit on
/// held-out samples.
pub fn assemble_triangular_form(
    system: Arc<ControlAffineSystem>,
    n_t: usize,
    d_z: usize,
    region: &SampleBox,
    opts: &FormOptions,
    config_hash: Option<String>,
) -> Result<TriangularForm, FormError> {
    if n_t == 0 || d_z < n_t + 1 {
        return Err(FormError::Orders { n_t, d_z });
    }
    region.validate(system.n())?;
    let system_hash = system.hash();
    let mut table = LieTable::new(system.clone());
    let full = table.observability_map(d_z);
    let maps: Vec<ObservabilityMap> = (1..=d_z).map(|k| full.truncated(k)).collect();
    let mut g = Vec::with_capacity(d_z);
    for i in 1..=d_z {
        g.push(build_g(&mut table, i, n_t, d_z, region, opts)?);
    }
    let phi = build_phi(&mut table, d_z, region, opts)?;

    let neighbourhood = region.inflate(opts.margin);
    let (mut image_lower, mut image_upper) = (vec![f64::INFINITY; d_z], vec![f64::NEG_INFINITY; d_z]);
    for key in &phi.table.keys {
        for k in 0..d_z {
            image_lower[k] = image_lower[k].min(key[k]);
            image_upper[k] = image_upper[k].max(key[k]);
        }
    }
    for k in 0..d_z {
        let w = (image_upper[k] - image_lower[k]).max(1e-12);
        image_lower[k] -= opts.margin * w;
        image_upper[k] += opts.margin * w;
    }

    let full_dependence: Vec<String> =
        g.iter().skip(n_t).filter(|f| f.constant.is_none()).map(|f| f.label.clone()).collect();
    let mut notes = Vec::new();
    for f in g.iter().chain(std::iter::once(&phi)) {
        if !f.lipschitz.lipschitz() {
            notes.push(format!(
                "{} is not Lipschitz on the region (table constant {:.3e}, blowup {}); off-image evaluation uses the nearest sample",
                f.label, f.lipschitz.table_constant, f.lipschitz.blowup
            ));
        }
    }
    if !full_dependence.is_empty() {
        notes.push(format!("functions keyed on all of z: {}", full_dependence.join(", ")));
    }

    let mut form = TriangularForm {
        system,
        n_t,
        d_z,
        maps,
        g,
        phi,
        region: region.clone(),
        neighbourhood,
        image_lower,
        image_upper,
        full_dependence,
        fit: FitReport::default(),
        notes,
        options: opts.clone(),
        provenance: Provenance { system_hash: system_hash.clone(), config_hash },
    };
    form.fit = validate_form(&form, &region.random_points_with(opts.validation_points, sub_seed(opts.seed, 7)));
    if form.fit.worst() > opts.fit_tol {
        form.notes.push(format!("held-out fit error {:.3e} exceeds {:.1e}", form.fit.worst(), opts.fit_tol));
    }
    Ok(form)
}

/// Max error of every function against its symbolic value at `points`.
pub fn validate_form(form: &TriangularForm, points: &[Vec<f64>]) -> FitReport {
    let per_point: Vec<(Vec<f64>, usize)> = points
        .par_iter()
        .filter_map(|x| {
            let z = form.lift(x)?;
            let mut ev = FormEvaluator::new(form);
            let errs: Option<Vec<f64>> = form
                .functions()
                .map(|f| {
                    let want = f.value_at(x)?;
                    let got = ev.eval(f, &z[..f.key_order]);
                    Some(got.iter().zip(&want).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
                })
                .collect();
            Some((errs?, ev.fallbacks))
        })
        .collect();
    let labels: Vec<String> = form.functions().map(|f| f.label.clone()).collect();
    let mut max_errors: Vec<(String, f64)> = labels.into_iter().map(|l| (l, 0.0)).collect();
    let mut fallbacks = 0;
    for (errs, fb) in &per_point {
        for (slot, e) in max_errors.iter_mut().zip(errs) {
            slot.1 = slot.1.max(*e);
        }
        fallbacks += fb;
    }
    FitReport { points: per_point.len(), max_errors, fallbacks }
}
