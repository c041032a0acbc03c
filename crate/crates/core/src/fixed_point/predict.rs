use crate::dmft::mc::chunked_reduce;
use crate::dmft::xi::XiWorkspace;
use crate::dmft::{DMFTState, XiSampler};
use crate::error::{Error, Result};
use crate::model::ModelSpec;
use crate::seed::{derive_seed, rng_from_seed, Stream};
use crate::stats::Moments;
use crate::trace::{Observable, ObservableTrace, Series};

/// Predicted observable curves of a converged state.
///
/// Overlaps are read off `C_θ^{t,*}` and the diagonal of `C_θ` (standard error
/// zero). Training loss `E L(σ(ξ^t), y)` and `P(‖ξ^t‖ ≤ c)` are Monte Carlo
/// averages over `n_samples` draws of the ξ-process; their `n_trials` column
/// is the sample count.
pub fn predict_observables(
    state: &DMFTState,
    spec: &ModelSpec,
    thresholds: &[f64],
    n_samples: usize,
    seed: u64,
) -> Result<ObservableTrace> {
    if n_samples < 2 {
        return Err(Error::InvalidInput("prediction needs at least two samples".into()));
    }
    let theta = &state.theta;
    let grid = *theta.grid();
    let p = grid.points();
    let (k, ks) = (spec.k, spec.k_star);
    let sampler = XiSampler::new(spec, theta)?;
    let nc = thresholds.len();
    let width = 1 + nc;
    let make = || (sampler.workspace(), Moments::new(p * width), vec![0.0; p * width]);
    let run = |state: &mut (XiWorkspace, Moments, Vec<f64>), i: usize| {
        let (ws, m, row) = state;
        let mut rng = rng_from_seed(derive_seed(seed, Stream::Prediction, i as u64));
        sampler.run(&mut rng, ws, false);
        let y = spec.label.value(sampler.w_star(ws), ws.eps);
        for t in 0..p {
            let xi = &ws.xi[t * k..(t + 1) * k];
            row[t * width] = spec.loss_value(xi, y);
            let norm = xi.iter().map(|v| v * v).sum::<f64>().sqrt();
            for (c, &thr) in thresholds.iter().enumerate() {
                row[t * width + 1 + c] = if norm <= thr { 1.0 } else { 0.0 };
            }
        }
        m.push(row);
    };
    let merge = |a: &mut (XiWorkspace, Moments, Vec<f64>), b: (XiWorkspace, Moments, Vec<f64>)| {
        a.1.merge(&b.1);
    };
    let (_, moments, _) = chunked_reduce(n_samples, make, run, merge);
    let mean = moments.mean();
    let se = moments.stderr();

    let times = grid.times();
    let exact = |obs, row, col, f: &dyn Fn(usize) -> f64| Series {
        observable: obs,
        row,
        col,
        mean: (0..p).map(f).collect(),
        stderr: vec![0.0; p],
        n_trials: 1,
    };
    let mut series = Vec::new();
    for i in 0..k {
        for j in 0..ks {
            series.push(exact(Observable::Overlap, i, j, &|t| theta.c_star[t][(i, j)]));
        }
    }
    for i in 0..k {
        for j in 0..k {
            series.push(exact(Observable::SelfOverlap, i, j, &|t| theta.c.get(t, t, i, j)));
        }
    }
    let mc = |obs, row, col: usize| Series {
        observable: obs,
        row,
        col: 0,
        mean: (0..p).map(|t| mean[t * width + col]).collect(),
        stderr: (0..p).map(|t| se[t * width + col]).collect(),
        n_trials: n_samples,
    };
    series.push(mc(Observable::TrainLoss, 0, 0));
    for c in 0..nc {
        series.push(mc(Observable::XiCdf, c, 1 + c));
    }
    Ok(ObservableTrace { times, thresholds: thresholds.to_vec(), series, trials: Vec::new() })
}
