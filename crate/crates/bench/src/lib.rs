//! Benchmark fixtures shared by the criterion targets.

use dmft_sgd::dmft::KernelKind;
use dmft_sgd::{InitLaw, ModelSpec, TimeGrid, TwoTimeKernel};

/// The linear ridge model used throughout the benchmarks.
pub fn linear_model() -> ModelSpec {
    ModelSpec::linear(0.8, 0.8, 0.1, InitLaw::independent(1, 1, 1.0, 1.0).expect("valid init"))
}

/// Grid with `steps` steps of size 0.05.
pub fn grid(steps: usize) -> TimeGrid {
    TimeGrid::from_steps(steps, 0.05).expect("valid grid")
}

/// Decaying strictly causal scalar response kernel.
pub fn response_kernel(steps: usize) -> TwoTimeKernel {
    TwoTimeKernel::from_fn(grid(steps), KernelKind::Response, |t, s| {
        if s < t {
            -0.05 * (-0.1 * (t - s) as f64).exp()
        } else {
            0.0
        }
    })
}
