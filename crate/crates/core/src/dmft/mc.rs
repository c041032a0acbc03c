use rayon::prelude::*;

/// Samples per work unit. Fixed so that results do not depend on the number
/// of threads.
pub const CHUNK: usize = 256;

/// Monte Carlo controls shared by the kernel estimators.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct McOptions {
    pub n_samples: usize,
    pub seed: u64,
    /// Index of the first trajectory in the seed stream.
    pub index_offset: u64,
    /// When set, `R_f^{t,s}` estimates with `t − s` beyond the window are
    /// shrunk to zero.
    pub rf_window: Option<usize>,
}

impl McOptions {
    pub fn new(n_samples: usize, seed: u64) -> Self {
        Self { n_samples, seed, index_offset: 0, rf_window: None }
    }
}

/// Runs `run(state, i)` for `i in 0..n`, in chunks of [`CHUNK`] processed in
/// parallel, and merges chunk states in index order.
pub(crate) fn chunked_reduce<S, M, F, G>(n: usize, make: M, run: F, merge: G) -> S
where
    S: Send,
    M: Fn() -> S + Sync,
    F: Fn(&mut S, usize) + Sync,
    G: Fn(&mut S, S),
{
    let chunks = n.div_ceil(CHUNK);
    let batch = 2 * rayon::current_num_threads().max(1);
    let mut total = make();
    let mut c = 0;
    while c < chunks {
        let end = (c + batch).min(chunks);
        let parts: Vec<S> = (c..end)
            .into_par_iter()
            .map(|ci| {
                let mut s = make();
                for i in ci * CHUNK..((ci + 1) * CHUNK).min(n) {
                    run(&mut s, i);
                }
                s
            })
            .collect();
        for p in parts {
            merge(&mut total, p);
        }
        c = end;
    }
    total
}

/// `out (m×n) += alpha · a (m×l) · b (l×n)`, all row-major.
#[inline]
pub(crate) fn gemm_acc(alpha: f64, a: &[f64], b: &[f64], out: &mut [f64], m: usize, l: usize, n: usize) {
    if m == 1 && l == 1 && n == 1 {
        out[0] += alpha * a[0] * b[0];
        return;
    }
    for i in 0..m {
        for p in 0..l {
            let aip = alpha * a[i * l + p];
            if aip == 0.0 {
                continue;
            }
            for j in 0..n {
                out[i * n + j] += aip * b[p * n + j];
            }
        }
    }
}
