//! Observable traces recorded along a time grid, per trial and aggregated.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::stats::mean_stderr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Observable {
    /// `d⁻¹ θᵀθ*`, component `(row, col)` in `k × k*`.
    Overlap,
    /// `d⁻¹ θᵀθ`, `k × k`.
    SelfOverlap,
    TrainLoss,
    /// Fraction of samples with `‖xᵢᵀθ‖ ≤ c`; `row` indexes the threshold.
    XiCdf,
}

impl Observable {
    pub const ALL: [Observable; 4] =
        [Observable::Overlap, Observable::SelfOverlap, Observable::TrainLoss, Observable::XiCdf];

    pub fn name(self) -> &'static str {
        match self {
            Observable::Overlap => "overlap",
            Observable::SelfOverlap => "self_overlap",
            Observable::TrainLoss => "train_loss",
            Observable::XiCdf => "xi_cdf",
        }
    }
}

impl fmt::Display for Observable {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Observable {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Observable::ALL
            .into_iter()
            .find(|o| o.name() == s)
            .ok_or_else(|| Error::Format(format!("unknown observable {s:?}")))
    }
}

/// Observables of a single run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialTrace {
    pub times: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub overlap: Vec<DMatrix<f64>>,
    pub self_overlap: Vec<DMatrix<f64>>,
    pub train_loss: Option<Vec<f64>>,
    /// Per time, one value per threshold.
    pub xi_cdf: Option<Vec<Vec<f64>>>,
}

impl TrialTrace {
    pub fn new(thresholds: Vec<f64>, with_data: bool) -> Self {
        Self {
            times: Vec::new(),
            thresholds,
            overlap: Vec::new(),
            self_overlap: Vec::new(),
            train_loss: with_data.then(Vec::new),
            xi_cdf: with_data.then(Vec::new),
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Repeats the last recorded values at `time`.
    pub fn repeat_last(&mut self, time: f64) {
        self.times.push(time);
        let o = self.overlap.last().cloned().expect("nothing recorded yet");
        self.overlap.push(o);
        let s = self.self_overlap.last().cloned().expect("nothing recorded yet");
        self.self_overlap.push(s);
        if let Some(l) = &mut self.train_loss {
            let v = *l.last().expect("nothing recorded yet");
            l.push(v);
        }
        if let Some(c) = &mut self.xi_cdf {
            let v = c.last().cloned().expect("nothing recorded yet");
            c.push(v);
        }
    }

    fn values(&self, obs: Observable, row: usize, col: usize) -> Option<Vec<f64>> {
        match obs {
            Observable::Overlap => Some(self.overlap.iter().map(|m| m[(row, col)]).collect()),
            Observable::SelfOverlap => Some(self.self_overlap.iter().map(|m| m[(row, col)]).collect()),
            Observable::TrainLoss => self.train_loss.clone(),
            Observable::XiCdf => self.xi_cdf.as_ref().map(|c| c.iter().map(|v| v[row]).collect()),
        }
    }
}

/// One scalar component of an observable over time.
#[derive(Debug, Clone, PartialEq)]
pub struct Series {
    pub observable: Observable,
    pub row: usize,
    pub col: usize,
    pub mean: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_trials: usize,
}

/// Across-trial means and standard errors, keeping the individual trials.
#[derive(Debug, Clone, PartialEq)]
pub struct ObservableTrace {
    pub times: Vec<f64>,
    pub thresholds: Vec<f64>,
    pub series: Vec<Series>,
    pub trials: Vec<TrialTrace>,
}

impl ObservableTrace {
    pub fn from_trials(trials: Vec<TrialTrace>) -> Result<Self> {
        let first = trials.first().ok_or_else(|| Error::InvalidInput("no trials to aggregate".into()))?;
        let times = first.times.clone();
        let thresholds = first.thresholds.clone();
        if trials.iter().any(|t| t.times != times) {
            return Err(Error::Structural("trials recorded on different time grids".into()));
        }
        let (k, ks) = first.overlap.first().map_or((0, 0), |m| m.shape());
        let mut components = Vec::new();
        for i in 0..k {
            for j in 0..ks {
                components.push((Observable::Overlap, i, j));
            }
        }
        for i in 0..k {
            for j in 0..k {
                components.push((Observable::SelfOverlap, i, j));
            }
        }
        if first.train_loss.is_some() {
            components.push((Observable::TrainLoss, 0, 0));
        }
        if first.xi_cdf.is_some() {
            components.extend((0..thresholds.len()).map(|c| (Observable::XiCdf, c, 0)));
        }
        let mut series = Vec::with_capacity(components.len());
        for (obs, row, col) in components {
            let per_trial: Vec<Vec<f64>> = trials
                .iter()
                .map(|t| t.values(obs, row, col).ok_or_else(|| Error::Structural(format!("trial lacks {obs}"))))
                .collect::<Result<_>>()?;
            let (mut mean, mut stderr) = (Vec::with_capacity(times.len()), Vec::with_capacity(times.len()));
            for ti in 0..times.len() {
                let column: Vec<f64> = per_trial.iter().map(|v| v[ti]).collect();
                let (m, s) = mean_stderr(&column);
                mean.push(m);
                stderr.push(s);
            }
            series.push(Series { observable: obs, row, col, mean, stderr, n_trials: trials.len() });
        }
        Ok(Self { times, thresholds, series, trials })
    }

    pub fn get(&self, obs: Observable, row: usize, col: usize) -> Option<&Series> {
        self.series.iter().find(|s| s.observable == obs && s.row == row && s.col == col)
    }

    /// Writes the long-format CSV; `header` lines are emitted as `# ` comments.
    pub fn write_csv<W: Write>(&self, w: &mut W, header: &[String]) -> Result<()> {
        for line in header {
            writeln!(w, "# {line}")?;
        }
        if !self.thresholds.is_empty() {
            let t: Vec<String> = self.thresholds.iter().map(|c| c.to_string()).collect();
            writeln!(w, "# xi_cdf thresholds: {}", t.join(","))?;
        }
        writeln!(w, "{CSV_HEADER}")?;
        for s in &self.series {
            for (i, &t) in self.times.iter().enumerate() {
                writeln!(w, "{},{},{},{},{},{},{}", t, s.observable, s.row, s.col, s.mean[i], s.stderr[i], s.n_trials)?;
            }
        }
        Ok(())
    }

    /// Parses the format written by [`ObservableTrace::write_csv`]. Per-trial
    /// data is not stored in the file, so `trials` comes back empty.
    pub fn read_csv<R: Read>(r: R) -> Result<Self> {
        let mut text = String::new();
        let mut r = r;
        r.read_to_string(&mut text)?;
        let mut thresholds = Vec::new();
        let mut times: Vec<f64> = Vec::new();
        let mut series: Vec<Series> = Vec::new();
        let mut seen_header = false;
        for (lineno, line) in text.lines().enumerate() {
            let err = |m: &str| Error::Format(format!("line {}: {m}", lineno + 1));
            if let Some(c) = line.strip_prefix('#') {
                if let Some(list) = c.trim().strip_prefix("xi_cdf thresholds:") {
                    thresholds = list
                        .split(',')
                        .map(|v| v.trim().parse::<f64>().map_err(|e| err(&e.to_string())))
                        .collect::<Result<_>>()?;
                }
                continue;
            }
            if line.trim().is_empty() {
                continue;
            }
            if !seen_header {
                if line.trim() != CSV_HEADER {
                    return Err(err("unexpected column header"));
                }
                seen_header = true;
                continue;
            }
            let f: Vec<&str> = line.split(',').collect();
            if f.len() != 7 {
                return Err(err("expected 7 fields"));
            }
            let num = |s: &str| s.parse::<f64>().map_err(|e| err(&e.to_string()));
            let idx = |s: &str| s.parse::<usize>().map_err(|e| err(&e.to_string()));
            let t = num(f[0])?;
            let obs: Observable = f[1].parse()?;
            let (row, col, n) = (idx(f[2])?, idx(f[3])?, idx(f[6])?);
            let pos = match series.iter().position(|s| s.observable == obs && s.row == row && s.col == col) {
                Some(p) => p,
                None => {
                    series.push(Series { observable: obs, row, col, mean: vec![], stderr: vec![], n_trials: n });
                    series.len() - 1
                }
            };
            let s = &mut series[pos];
            if pos == 0 {
                times.push(t);
            } else if times.get(s.mean.len()) != Some(&t) {
                return Err(err("series times differ from the first series"));
            }
            s.mean.push(num(f[4])?);
            s.stderr.push(num(f[5])?);
        }
        if !seen_header {
            return Err(Error::Format("missing column header".into()));
        }
        if series.iter().any(|s| s.mean.len() != times.len()) {
            return Err(Error::Format("series have unequal lengths".into()));
        }
        Ok(Self { times, thresholds, series, trials: Vec::new() })
    }
}

pub const CSV_HEADER: &str = "time,observable_name,component_row,component_col,mean,stderr,n_trials";

/// `max |a − b| / max |b|` over paired entries.
pub fn relative_sup_distance(a: &[f64], b: &[f64]) -> f64 {
    let num = a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
    let den = b.iter().map(|y| y.abs()).fold(0.0, f64::max);
    if den == 0.0 {
        if num == 0.0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        num / den
    }
}
