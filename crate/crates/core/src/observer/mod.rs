//! Plant simulation and a high-gain observer running on a triangular form.

mod gain;
mod run;
pub(crate) mod simulate;

pub use gain::{design_gain, is_hurwitz};
pub use run::{reconstruct_state, run_high_gain_observer, ObserverConfig, ObserverError, ObserverRow, ObserverRun};
pub use simulate::{integrate_system, SimError, StopReason, Trajectory};
