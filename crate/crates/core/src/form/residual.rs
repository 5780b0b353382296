use serde::Serialize;

use super::{FormError, FormEvaluator, TriangularForm};
use crate::observer::integrate_system;
use crate::observer::simulate::{check_step, rk4_step};
use crate::signal::InputSignal;

#[derive(Clone, Debug, Serialize)]
pub struct ResidualReport {
    /// `max_t |ż - F(z, u)|` per component.
    pub per_component: Vec<f64>,
    pub max: f64,
    pub samples: usize,
    pub fallbacks: usize,
}

/// Integrates the plant from `x0`, lifts `z = H(x)`, and compares
/// `ż = ∂H/∂x (f + g u)` with the form's right-hand side at every step.
pub fn residual_check(
    form: &TriangularForm,
    x0: &[f64],
    input: &InputSignal,
    horizon: f64,
    dt: f64,
) -> Result<ResidualReport, FormError> {
    let sys = &form.system;
    let traj = integrate_system(sys, x0, input, horizon, dt, Some(&form.region), 1e8)
        .map_err(|e| FormError::Simulation(e.to_string()))?;
    if let Some(stop) = &traj.stop {
        return Err(match stop {
            crate::observer::StopReason::LeftRegion { t, x } => FormError::LeftRegion { t: *t, x: x.clone() },
            other => FormError::Simulation(other.to_string()),
        });
    }
    let map = form.map(form.d_z);
    let mut ev = FormEvaluator::new(form);
    let mut per_component = vec![0.0f64; form.d_z];
    for ((t, x), u) in traj.times.iter().zip(&traj.states).zip(&traj.inputs) {
        if !form.region.contains(x) {
            return Err(FormError::LeftRegion { t: *t, x: x.clone() });
        }
        let fail = |e: crate::expr::EvalError| FormError::Simulation(format!("t = {t}: {e}"));
        let z = map.eval(x).map_err(fail)?;
        let j = map.jacobian_at(x).map_err(fail)?;
        let xdot = sys.vector_field(x, u).map_err(fail)?;
        let zdot: Vec<f64> = (0..form.d_z).map(|r| (0..x.len()).map(|c| j[(r, c)] * xdot[c]).sum()).collect();
        let rhs = ev.rhs(&z, u);
        for k in 0..form.d_z {
            per_component[k] = per_component[k].max((zdot[k] - rhs[k]).abs());
        }
    }
    let max = per_component.iter().copied().fold(0.0, f64::max);
    Ok(ResidualReport { per_component, max, samples: traj.times.len(), fallbacks: ev.fallbacks })
}

/// Fixed-step RK4 of the form itself, `ż = F(z, u(t))`, from `z0`.
///
/// Returns `z` at every step, including `z0`.
pub fn integrate_form(
    form: &TriangularForm,
    z0: &[f64],
    input: &InputSignal,
    horizon: f64,
    dt: f64,
) -> Result<Vec<Vec<f64>>, FormError> {
    let steps = check_step(horizon, dt).map_err(|e| FormError::Simulation(e.to_string()))?;
    if z0.len() != form.d_z {
        return Err(FormError::Simulation(format!("z0 has {} components, form has {}", z0.len(), form.d_z)));
    }
    let mut ev = FormEvaluator::new(form);
    let mut z = z0.to_vec();
    let mut out = Vec::with_capacity(steps + 1);
    out.push(z.clone());
    for k in 0..steps {
        let t = k as f64 * dt;
        z = rk4_step(&z, t, dt, |s, zs| -> Result<Vec<f64>, FormError> {
            let u = input.at(s).map_err(|e| FormError::Simulation(e.to_string()))?;
            Ok(ev.rhs(zs, &u))
        })?;
        out.push(z.clone());
    }
    Ok(out)
}
