//! Multi-pass SGD, its stochastic modified equation, gradient flow and
//! one-pass SGD on high-dimensional multi-index models, together with
//! solvers for the discrete-time dynamical mean-field theory (DMFT) that
//! describes them in the proportional limit `n, d → ∞`.

pub mod analytic;
pub mod dmft;
pub mod error;
pub mod fixed_point;
pub mod highdim;
pub mod model;
pub mod seed;
pub mod stats;
pub mod trace;

pub use dmft::{DMFTState, McOptions, ThetaKernels, TimeGrid, TwoTimeKernel, XiKernels};
pub use error::{Error, Result};
pub use model::{
    Activation, CustomLabel, Driver, EtaSchedule, InitLaw, LabelMap, Loss, ModelSpec, NoiseLaw, Regularizer,
};
