//! Pairwise comparison of trace CSVs against the first (reference) trace.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

use dmft_sgd::trace::ObservableTrace;

use crate::error::CliError;

pub const COMPARE_HEADER: &str =
    "trace,time,observable_name,component_row,component_col,reference_mean,other_mean,difference,z_score";

/// `|a − b| / √(se_a² + se_b²)`, with `0/0 = 0` and `x/0 = ∞`.
pub fn z_score(diff: f64, se_a: f64, se_b: f64) -> f64 {
    let s = (se_a * se_a + se_b * se_b).sqrt();
    if s > 0.0 {
        diff / s
    } else if diff == 0.0 {
        0.0
    } else {
        diff.signum() * f64::INFINITY
    }
}

fn nearest(times: &[f64], t: f64) -> usize {
    let i = times.partition_point(|&x| x < t);
    match (i.checked_sub(1), times.get(i)) {
        (Some(j), Some(&hi)) if t - times[j] <= hi - t => j,
        (Some(j), None) => j,
        _ => i,
    }
}

fn load(path: &PathBuf) -> Result<ObservableTrace, CliError> {
    let f = std::fs::File::open(path).map_err(|e| CliError::io(path.display(), e))?;
    ObservableTrace::read_csv(std::io::BufReader::new(f))
        .map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

/// Writes the comparison table; returns the largest |z| per observable.
pub fn compare(paths: &[PathBuf], w: &mut dyn Write) -> Result<BTreeMap<String, f64>, CliError> {
    if paths.len() < 2 {
        return Err(CliError::Config("compare needs a reference trace and at least one other trace".into()));
    }
    let io = |e| CliError::io("writing comparison", e);
    let reference = load(&paths[0])?;
    writeln!(w, "{COMPARE_HEADER}").map_err(io)?;
    let mut overall = BTreeMap::new();
    for path in &paths[1..] {
        let other = load(path)?;
        let label = path.file_stem().map_or_else(|| path.display().to_string(), |s| s.to_string_lossy().into_owned());
        if other.times != reference.times {
            writeln!(w, "{label},,warning: time grids differ; nearest-point resampling,,,,,,").map_err(io)?;
        }
        let idx: Vec<usize> = reference.times.iter().map(|&t| nearest(&other.times, t)).collect();
        let mut max_z: BTreeMap<String, (f64, f64)> = BTreeMap::new();
        for a in &reference.series {
            let Some(b) = other.get(a.observable, a.row, a.col) else { continue };
            let entry = max_z.entry(a.observable.to_string()).or_insert((0.0, 0.0));
            for (i, &t) in reference.times.iter().enumerate() {
                let j = idx[i];
                let diff = b.mean[j] - a.mean[i];
                let z = z_score(diff, a.stderr[i], b.stderr[j]);
                entry.0 = entry.0.max(diff.abs());
                entry.1 = entry.1.max(z.abs());
                writeln!(w, "{label},{t},{},{},{},{},{},{diff},{z}", a.observable, a.row, a.col, a.mean[i], b.mean[j])
                    .map_err(io)?;
            }
        }
        for (obs, (d, z)) in &max_z {
            writeln!(w, "{label},max,{obs},,,,,{d},{z}").map_err(io)?;
            let e = overall.entry(obs.clone()).or_insert(0.0f64);
            *e = e.max(*z);
        }
    }
    Ok(overall)
}
