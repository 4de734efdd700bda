//! Stiefel St(n,p) primitives: thin-QR retraction and the sym-projection
//! vector transport P_{X->Y}(z) = z - Y sym(Y'z).

use nalgebra::DMatrix;

use crate::error::{CsdError, Result};

/// Q-factor of the thin QR decomposition, with the sign convention
/// diag(R) > 0 so that qf(X) = X for X already orthonormal.
pub(crate) fn qf(m: DMatrix<f64>) -> Result<DMatrix<f64>> {
    let p = m.ncols();
    let qr = m.qr();
    let mut q = qr.q();
    let r = qr.r();
    let dmax = (0..p).map(|i| r[(i, i)].abs()).fold(0.0_f64, f64::max);
    for i in 0..p {
        let d = r[(i, i)];
        if d.abs() < 1e-12 * dmax.max(1e-300) {
            return Err(CsdError::DegenerateStep {
                detail: format!("QR factor rank deficient (|R_{i}{i}| = {:.3e})", d.abs()),
            });
        }
        if d < 0.0 {
            let mut col = q.column_mut(i);
            col.neg_mut();
        }
    }
    Ok(q)
}

pub(crate) fn sym(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

/// z - Y sym(Y'z); only the destination enters the formula.
pub(crate) fn transport_to(y: &DMatrix<f64>, z: &DMatrix<f64>) -> DMatrix<f64> {
    z - y * sym(&(y.transpose() * z))
}
