//! Closed-form kernel maps and the one-pass overlap ODE.

pub mod linear;
pub mod one_pass;
pub mod quadrature;
pub mod ridge;
pub mod volterra;

pub use linear::{linear_map, LinearAux};
pub use one_pass::{one_pass_coefficients, one_pass_overlap_ode, OnePassCoefficients, OnePassOptions, OnePassOverlaps};
pub use quadrature::GaussHermite;
pub use ridge::{ridge_drift_kernel, ridge_map};
pub use volterra::{volterra_resolvent, ResolventKernel};
