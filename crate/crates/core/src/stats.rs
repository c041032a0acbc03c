//! Running sums for Monte Carlo means and standard errors.

/// Entrywise sums and sums of squares of a fixed-length vector statistic.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    count: usize,
    sum: Vec<f64>,
    sumsq: Vec<f64>,
}

impl Moments {
    pub fn new(len: usize) -> Self {
        Self { count: 0, sum: vec![0.0; len], sumsq: vec![0.0; len] }
    }

    pub fn len(&self) -> usize {
        self.sum.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sum.is_empty()
    }

    pub fn count(&self) -> usize {
        self.count
    }

    /// Counts one more observation without touching the sums; entries not
    /// subsequently added are implicitly zero for this observation.
    #[inline]
    pub fn tick(&mut self) {
        self.count += 1;
    }

    #[inline]
    pub fn add_at(&mut self, i: usize, v: f64) {
        self.sum[i] += v;
        self.sumsq[i] += v * v;
    }

    /// Adds a full observation.
    pub fn push(&mut self, x: &[f64]) {
        self.count += 1;
        for (i, &v) in x.iter().enumerate() {
            self.add_at(i, v);
        }
    }

    /// Adds the outer product `x xᵀ` (row-major) as one observation.
    pub fn push_outer(&mut self, x: &[f64]) {
        let m = x.len();
        self.count += 1;
        for i in 0..m {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            let row = i * m;
            for j in 0..m {
                let v = xi * x[j];
                self.sum[row + j] += v;
                self.sumsq[row + j] += v * v;
            }
        }
    }

    pub fn merge(&mut self, other: &Moments) {
        self.count += other.count;
        for (a, b) in self.sum.iter_mut().zip(&other.sum) {
            *a += b;
        }
        for (a, b) in self.sumsq.iter_mut().zip(&other.sumsq) {
            *a += b;
        }
    }

    pub fn mean(&self) -> Vec<f64> {
        let n = self.count.max(1) as f64;
        self.sum.iter().map(|s| s / n).collect()
    }

    /// Standard error of each mean; zero with fewer than two observations.
    pub fn stderr(&self) -> Vec<f64> {
        if self.count < 2 {
            return vec![0.0; self.len()];
        }
        let n = self.count as f64;
        self.sum
            .iter()
            .zip(&self.sumsq)
            .map(|(s, q)| {
                let var = ((q - s * s / n) / (n - 1.0)).max(0.0);
                (var / n).sqrt()
            })
            .collect()
    }
}

/// Mean and standard error of a sample.
pub fn mean_stderr(x: &[f64]) -> (f64, f64) {
    let mut m = Moments::new(1);
    for &v in x {
        m.push(&[v]);
    }
    (m.mean()[0], m.stderr()[0])
}
