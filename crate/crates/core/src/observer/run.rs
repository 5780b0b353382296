use serde::{Deserialize, Serialize};

use super::gain::{design_gain, is_hurwitz};
use super::simulate::{check_step, rk4_step, SimError, StopReason};
use crate::analysis::solve_preimage;
use crate::form::{FormEvaluator, InverseError, InverseResult, TriangularForm};
use crate::numeric::{dist, norm, LmOptions};
use crate::form::condition_number;
use crate::signal::InputSignal;

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(default)]
pub struct ObserverConfig {
    /// High-gain parameter `L >= 1`.
    pub gain: f64,
    /// `k_1..k_{d_z}`; binomial when absent.
    pub coefficients: Option<Vec<f64>>,
    /// Saturation box for `ẑ`; the form's image box when absent.
    pub saturation_lower: Option<Vec<f64>>,
    pub saturation_upper: Option<Vec<f64>>,
    /// `|ẑ|` beyond this is clamped and flagged.
    pub blowup_bound: f64,
    /// Degraded when the `z` error over the last tenth of the run exceeds this.
    pub degradation_threshold: f64,
    /// Record every this many steps (the last step is always recorded).
    pub record_every: usize,
    /// Reconstruct `x̂` at recorded instants.
    pub reconstruct: bool,
}

impl Default for ObserverConfig {
    fn default() -> Self {
        Self {
            gain: 10.0,
            coefficients: None,
            saturation_lower: None,
            saturation_upper: None,
            blowup_bound: 1e8,
            degradation_threshold: 1e-3,
            record_every: 10,
            reconstruct: true,
        }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum ObserverError {
    #[error("observer gain must be at least 1, got {0}")]
    Gain(f64),
    #[error("observer coefficients must number {want}, got {got}")]
    Coefficients { got: usize, want: usize },
    #[error("observer coefficients {0:?} are not Hurwitz")]
    NotHurwitz(Vec<f64>),
    #[error("saturation box must have {0} components with lower <= upper")]
    Saturation(usize),
    #[error("saturation box does not contain the image of the region on component {0}")]
    SaturationTooSmall(usize),
    #[error("cannot lift the initial state: H is undefined there")]
    Lift,
    #[error("initial estimate has {got} components, form has {want}")]
    Estimate { got: usize, want: usize },
    #[error(transparent)]
    Sim(#[from] SimError),
}

#[derive(Clone, Debug, Serialize)]
pub struct ObserverRow {
    pub t: f64,
    pub x: Vec<f64>,
    pub z: Vec<f64>,
    pub z_hat: Vec<f64>,
    pub x_hat: Option<Vec<f64>>,
    pub z_error: f64,
    pub x_error: Option<f64>,
    pub saturated: bool,
}

#[derive(Clone, Debug, Serialize)]
pub struct ObserverRun {
    pub gain: f64,
    pub coefficients: Vec<f64>,
    pub rows: Vec<ObserverRow>,
    pub initial_z_error: f64,
    pub peak_z_error: f64,
    pub final_z_error: f64,
    pub final_x_error: Option<f64>,
    pub saturated_steps: usize,
    /// Recorded instants where `x̂` could not be reconstructed.
    pub skipped_reconstructions: usize,
    pub blowup: bool,
    pub degraded: bool,
    /// Function evaluations answered by a table extension.
    pub fallbacks: usize,
    pub stop: Option<StopReason>,
}

/// Resolved gains and saturation box after validation.
#[derive(Clone, Debug)]
struct Resolved {
    k: Vec<f64>,
    lower: Vec<f64>,
    upper: Vec<f64>,
}

fn resolve(form: &TriangularForm, cfg: &ObserverConfig) -> Result<Resolved, ObserverError> {
    let d = form.d_z;
    if !(cfg.gain >= 1.0) || !cfg.gain.is_finite() {
        return Err(ObserverError::Gain(cfg.gain));
    }
    let k = cfg.coefficients.clone().unwrap_or_else(|| design_gain(d));
    if k.len() != d {
        return Err(ObserverError::Coefficients { got: k.len(), want: d });
    }
    if !is_hurwitz(&k) {
        return Err(ObserverError::NotHurwitz(k));
    }
    let lower = cfg.saturation_lower.clone().unwrap_or_else(|| form.image_lower.clone());
    let upper = cfg.saturation_upper.clone().unwrap_or_else(|| form.image_upper.clone());
    if lower.len() != d || upper.len() != d || lower.iter().zip(&upper).any(|(l, u)| !(l <= u)) {
        return Err(ObserverError::Saturation(d));
    }
    for key in &form.phi.table.keys {
        for c in 0..d {
            if key[c] < lower[c] || key[c] > upper[c] {
                return Err(ObserverError::SaturationTooSmall(c));
            }
        }
    }
    Ok(Resolved { k, lower, upper })
}

/// Recovers `x̂` with `H_{d_z}(x̂) = ẑ` from a warm start or the nearest
/// table preimage.
pub fn reconstruct_state(
    form: &TriangularForm,
    z_hat: &[f64],
    warm: Option<&[f64]>,
) -> Result<InverseResult, InverseError> {
    let map = form.map(form.d_z);
    let lm = LmOptions { max_iter: 100, stall_tol: 1e-9, ..LmOptions::default() };
    let nearest = form.phi.preimages[form.phi.table.nearest_index(z_hat)].clone();
    let mut best = f64::INFINITY;
    for start in warm.map(<[f64]>::to_vec).into_iter().chain(std::iter::once(nearest)) {
        let Some((x, res)) = solve_preimage(map, z_hat, &start, &form.neighbourhood, &lm) else { continue };
        if res <= form.options.inv_tol {
            let condition = condition_number(map, &x);
            return Ok(InverseResult { x, residual: res, condition });
        }
        best = best.min(res);
    }
    Err(InverseError::NoConvergence { best, tol: form.options.inv_tol })
}

/// Runs the plant and the high-gain observer
/// `ẑ̇_k = ẑ_{k+1} + 𝔤_k(sat ẑ) u + k_k L^k (y - ẑ_1)`,
/// `ẑ̇_{d_z} = φ(sat ẑ) + 𝔤_{d_z}(sat ẑ) u + k_{d_z} L^{d_z} (y - ẑ_1)`
/// jointly with RK4. `z0` defaults to `H(x0)`.
pub fn run_high_gain_observer(
    form: &TriangularForm,
    cfg: &ObserverConfig,
    x0: &[f64],
    z0: Option<&[f64]>,
    input: &InputSignal,
    horizon: f64,
    dt: f64,
) -> Result<ObserverRun, ObserverError> {
    let steps = check_step(horizon, dt)?;
    let sys = &form.system;
    input.validate(sys.m()).map_err(SimError::from)?;
    let (n, d) = (sys.n(), form.d_z);
    if x0.len() != n {
        return Err(SimError::Dimension { got: x0.len(), want: n }.into());
    }
    let res = resolve(form, cfg)?;
    let z_true0 = form.lift(x0).ok_or(ObserverError::Lift)?;
    let z_hat0 = match z0 {
        Some(z) if z.len() != d => return Err(ObserverError::Estimate { got: z.len(), want: d }),
        Some(z) => z.to_vec(),
        None => z_true0.clone(),
    };
    let gains: Vec<f64> = (0..d).map(|k| res.k[k] * cfg.gain.powi(k as i32 + 1)).collect();
    let sat = |z: &[f64]| -> (Vec<f64>, bool) {
        let mut hit = false;
        let s = z
            .iter()
            .enumerate()
            .map(|(k, &v)| {
                let c = v.clamp(res.lower[k], res.upper[k]);
                hit |= c != v;
                c
            })
            .collect();
        (s, hit)
    };

    let mut ev = FormEvaluator::new(form);
    let mut state: Vec<f64> = x0.iter().copied().chain(z_hat0.iter().copied()).collect();
    let mut run = ObserverRun {
        gain: cfg.gain,
        coefficients: res.k.clone(),
        rows: Vec::new(),
        initial_z_error: dist(&z_true0, &z_hat0),
        peak_z_error: 0.0,
        final_z_error: f64::NAN,
        final_x_error: None,
        saturated_steps: 0,
        skipped_reconstructions: 0,
        blowup: false,
        degraded: false,
        fallbacks: 0,
        stop: None,
    };
    let mut warm_x: Option<Vec<f64>> = None;
    let every = cfg.record_every.max(1);
    let mut errors: Vec<(f64, f64)> = Vec::with_capacity(steps + 1);
    for step in 0..=steps {
        let t = step as f64 * dt;
        let (x, z_hat) = state.split_at(n);
        if norm(x) > cfg.blowup_bound || x.iter().any(|v| !v.is_finite()) {
            run.stop = Some(StopReason::Blowup { t });
            break;
        }
        let Some(z) = form.lift(x) else {
            run.stop = Some(StopReason::Domain { t, message: "H is undefined at the plant state".into() });
            break;
        };
        let z_error = dist(&z, z_hat);
        errors.push((t, z_error));
        run.peak_z_error = run.peak_z_error.max(z_error);
        let saturated = sat(z_hat).1;
        if saturated {
            run.saturated_steps += 1;
        }
        if step % every == 0 || step == steps {
            let x_hat = if cfg.reconstruct {
                match reconstruct_state(form, z_hat, warm_x.as_deref()) {
                    Ok(r) => {
                        warm_x = Some(r.x.clone());
                        Some(r.x)
                    }
                    Err(_) => {
                        run.skipped_reconstructions += 1;
                        None
                    }
                }
            } else {
                None
            };
            let x_error = x_hat.as_ref().map(|xh| dist(xh, x));
            run.rows.push(ObserverRow {
                t,
                x: x.to_vec(),
                z,
                z_hat: z_hat.to_vec(),
                x_hat,
                z_error,
                x_error,
                saturated,
            });
        }
        if step == steps {
            break;
        }
        let next = rk4_step(&state, t, dt, |s, xs| -> Result<Vec<f64>, String> {
            let (x, zh) = xs.split_at(n);
            let u = input.at(s).map_err(|e| e.to_string())?;
            let mut out = sys.vector_field(x, &u).map_err(|e| e.to_string())?;
            let y = sys.h.evaluate(x).map_err(|e| e.to_string())?;
            let (zs, _) = sat(zh);
            let innovation = y - zh[0];
            for k in 0..d {
                let gk = ev.g(k + 1, &zs);
                let gu: f64 = gk.iter().zip(&u).map(|(a, b)| a * b).sum();
                let chain = if k + 1 < d { zh[k + 1] } else { ev.phi(&zs) };
                out.push(chain + gu + gains[k] * innovation);
            }
            Ok(out)
        });
        match next {
            Ok(mut s) => {
                let zh = &mut s[n..];
                if norm(zh) > cfg.blowup_bound || zh.iter().any(|v| !v.is_finite()) {
                    run.blowup = true;
                    for v in zh.iter_mut() {
                        *v = if v.is_finite() { v.clamp(-cfg.blowup_bound, cfg.blowup_bound) } else { 0.0 };
                    }
                }
                state = s;
            }
            Err(message) => {
                run.stop = Some(StopReason::Domain { t, message });
                break;
            }
        }
    }
    run.fallbacks = ev.fallbacks;
    if let Some(&(_, e)) = errors.last() {
        run.final_z_error = e;
    }
    run.final_x_error = run.rows.last().and_then(|r| r.x_error);
    let t_end = errors.last().map_or(0.0, |e| e.0);
    let tail = errors.iter().filter(|e| e.0 >= 0.9 * t_end).map(|e| e.1).fold(0.0, f64::max);
    run.degraded = run.stop.is_some() || run.blowup || tail > cfg.degradation_threshold;
    Ok(run)
}
