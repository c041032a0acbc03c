use crate::dmft::{KernelKind, TwoTimeKernel};
use crate::error::{Error, Result};

/// Solution `K` of `K^{t,s} = A^{t,s} + δ Σ_{s<r<t} A^{t,r} K^{r,s}` with the
/// residuals of both resolvent identities.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolventKernel {
    pub kernel: TwoTimeKernel,
    /// `max |K − A − δAK| / max |K|`
    pub left_residual: f64,
    /// `max |K − A − δKA| / max |K|`
    pub right_residual: f64,
}

/// Volterra resolvent of a strictly causal kernel density `A` on its grid
/// (left-endpoint quadrature).
pub fn volterra_resolvent(a: &TwoTimeKernel) -> Result<ResolventKernel> {
    if a.rows() != a.cols() {
        return Err(Error::Structural("resolvent needs square blocks".into()));
    }
    if !a.is_causal() {
        return Err(Error::Structural("resolvent input must vanish for s >= t".into()));
    }
    let k = a.rows();
    let p = a.points();
    let delta = a.grid().delta();
    let am = a.matrix();
    let mut km = nalgebra::DMatrix::<f64>::zeros(p * k, p * k);
    // Row block t of K = A + δ A K only involves rows r < t of K.
    for t in 1..p {
        let w = t * k;
        let a_row = am.view((t * k, 0), (k, w));
        let mut row = a_row.clone_owned();
        row.gemm(delta, &a_row, &km.view((0, 0), (w, w)), 1.0);
        km.view_mut((t * k, 0), (k, w)).copy_from(&row);
    }
    let scale = km.amax().max(f64::MIN_POSITIVE);
    let left = (&km - am - (am * &km) * delta).amax() / scale;
    let right = (&km - am - (&km * am) * delta).amax() / scale;
    let mut kernel = TwoTimeKernel::from_matrix(*a.grid(), k, k, KernelKind::Response, km)?;
    // Rounding cannot create entries above the block diagonal, but diagonal
    // blocks of the products are exactly zero only structurally.
    kernel.enforce_causality();
    Ok(ResolventKernel { kernel, left_residual: left, right_residual: right })
}
