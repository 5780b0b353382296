//! Sample-based observability diagnostics on a compact box.
//!
//! Every verdict here is evidence from finitely many samples, not a proof.

mod fiber;
mod kernel;
mod lipschitz;
mod modulus;
mod rank;
mod sample;
mod tangent;

pub use fiber::{
    fiber_pair_search, injectivity_scan, property_a_check, CheckedPair, FiberOptions, FiberPair, InjectivityOptions,
    InjectivityReport, PropertyAReport,
};
pub(crate) use fiber::solve_preimage;
pub use kernel::{kernel_condition_at, kernel_condition_check, KernelPoint, KernelReport};
pub use lipschitz::{lipschitz_ratio_scan, CellEstimate, LipschitzOptions, LipschitzReport, RatioProblem};
pub use modulus::{log_grid, modulus_estimate, ModulusError, ModulusOptions, ModulusReport};
pub use rank::{rank_profile, strong_order_search, OrderEvidence, OrderSearch, RankPoint, RankReport, SingularSlice};
pub use sample::{BoxError, Exclusion, SampleBox};
pub use tangent::{
    infinitesimal_rank_check, integrate_tangent, tangent_simulate, InfinitesimalRank, TangentError, TangentModel,
    TangentState, TangentTrace,
};
