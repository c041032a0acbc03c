//! Discrete-time DMFT: grid, kernels, samplers of the effective processes
//! and Monte Carlo estimation of the two kernel maps.

pub mod container;
pub mod driver;
pub mod gp;
pub mod grid;
pub mod kernel;
pub mod mc;
pub mod psd;
pub mod theta;
pub mod xi;

pub use container::{load_state, read_state, save_state, write_state};
pub use driver::{sample_driver, DriverLaw};
pub use gp::{sample_gp, GpDraw, GpSampler};
pub use grid::TimeGrid;
pub use kernel::{kernel_distance, DMFTState, Estimate, KernelKind, ThetaKernels, TwoTimeKernel, XiKernels};
pub use mc::McOptions;
pub use psd::{cholesky_with_jitter, project_psd_matrix, psd_project};
pub use theta::{estimate_theta_kernels, sample_theta_trajectory, theta_response, ThetaSampler, ThetaTrajectory};
pub use xi::{estimate_xi_kernels, sample_xi_trajectory, XiSampler, XiTrajectory};
