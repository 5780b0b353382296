use serde::Serialize;

use crate::analysis::SampleBox;
use crate::numeric::norm;
use crate::signal::{InputSignal, SignalError};
use crate::system::ControlAffineSystem;

/// Why a trajectory ended before the horizon.
#[derive(Clone, Debug, PartialEq, Serialize)]
#[serde(tag = "reason", rename_all = "snake_case")]
pub enum StopReason {
    LeftRegion { t: f64, x: Vec<f64> },
    Domain { t: f64, message: String },
    Blowup { t: f64 },
}

impl std::fmt::Display for StopReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Self::LeftRegion { t, x } => write!(f, "left the region at t = {t}: {x:?}"),
            Self::Domain { t, message } => write!(f, "evaluation failed at t = {t}: {message}"),
            Self::Blowup { t } => write!(f, "state blew up at t = {t}"),
        }
    }
}

#[derive(Clone, Debug, PartialEq, thiserror::Error)]
pub enum SimError {
    #[error("dt must be positive and no larger than the horizon")]
    Step,
    #[error("initial state has {got} components, system has {want}")]
    Dimension { got: usize, want: usize },
    #[error(transparent)]
    Signal(#[from] SignalError),
}

#[derive(Clone, Debug, Serialize)]
pub struct Trajectory {
    pub dt: f64,
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Input at each stored time.
    pub inputs: Vec<Vec<f64>>,
    /// Set when the trajectory was truncated.
    pub stop: Option<StopReason>,
}

pub(crate) fn check_step(horizon: f64, dt: f64) -> Result<usize, SimError> {
    if !(dt > 0.0 && horizon >= dt && horizon.is_finite()) {
        return Err(SimError::Step);
    }
    Ok((horizon / dt).round() as usize)
}

/// One classical RK4 step of `ẋ = F(t, x)`.
pub(crate) fn rk4_step<E>(
    x: &[f64],
    t: f64,
    dt: f64,
    mut rhs: impl FnMut(f64, &[f64]) -> Result<Vec<f64>, E>,
) -> Result<Vec<f64>, E> {
    let shift = |d: &[f64], h: f64| -> Vec<f64> { x.iter().zip(d).map(|(a, b)| a + h * b).collect() };
    let k1 = rhs(t, x)?;
    let k2 = rhs(t + 0.5 * dt, &shift(&k1, 0.5 * dt))?;
    let k3 = rhs(t + 0.5 * dt, &shift(&k2, 0.5 * dt))?;
    let k4 = rhs(t + dt, &shift(&k3, dt))?;
    Ok((0..x.len()).map(|i| x[i] + dt / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i])).collect())
}

/// Fixed-step RK4 of `ẋ = f(x) + g(x) u(t)`, storing every step.
///
/// Leaving `region`, a domain error or `|x| > bound` truncates the
/// trajectory and records why.
pub fn integrate_system(
    sys: &ControlAffineSystem,
    x0: &[f64],
    input: &InputSignal,
    horizon: f64,
    dt: f64,
    region: Option<&SampleBox>,
    bound: f64,
) -> Result<Trajectory, SimError> {
    let steps = check_step(horizon, dt)?;
    input.validate(sys.m())?;
    if x0.len() != sys.n() {
        return Err(SimError::Dimension { got: x0.len(), want: sys.n() });
    }
    let mut traj = Trajectory { dt, times: Vec::new(), states: Vec::new(), inputs: Vec::new(), stop: None };
    let mut x = x0.to_vec();
    for k in 0..=steps {
        let t = k as f64 * dt;
        if region.is_some_and(|b| !b.in_bounds(&x)) {
            traj.stop = Some(StopReason::LeftRegion { t, x });
            break;
        }
        if norm(&x) > bound || x.iter().any(|v| !v.is_finite()) {
            traj.stop = Some(StopReason::Blowup { t });
            break;
        }
        traj.times.push(t);
        traj.states.push(x.clone());
        traj.inputs.push(input.at(t)?);
        if k == steps {
            break;
        }
        let step = rk4_step(&x, t, dt, |s, xs| -> Result<Vec<f64>, String> {
            let u = input.at(s).map_err(|e| e.to_string())?;
            sys.vector_field(xs, &u).map_err(|e| e.to_string())
        });
        match step {
            Ok(next) => x = next,
            Err(message) => {
                traj.stop = Some(StopReason::Domain { t, message });
                break;
            }
        }
    }
    Ok(traj)
}
