//! Observability analysis and triangular canonical forms for control-affine
//! systems `x' = f(x) + g(x) u`, `y = h(x)`.

pub mod analysis;
pub mod expr;
pub mod form;
pub mod lie;
pub mod numeric;
pub mod observer;
pub mod signal;
pub mod system;

pub use expr::{differentiate, parse_expression, simplify, Expr, Rational, VarScope};
pub use system::{parse_system, ControlAffineSystem, SystemError};
