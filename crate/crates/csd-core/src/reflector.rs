//! The Householder reflection R = I - 2 sum_i v_i v_i' built from an
//! orthonormal frame of unstable directions, the manifold
//! R_k = { R symmetric : R^2 = I, dim ker(R + I) = k } it lives on, the Euler
//! update R + dt (H - R H R), and the nearest-point projection back onto R_k.
//!
//! Reflectors are stored as their frame V (d x k) rather than as dense
//! operators; k is small in every problem here. The Euler update of a
//! reflector differs from the identity only on span{V, HV}, so the
//! nearest-point projection reduces to an eigensolve of a (<= 2k)-dimensional
//! matrix, which keeps the one-step schemes cheap even for the discretized
//! field problems.

use nalgebra::{DMatrix, DVector};

use crate::error::{CsdError, Result};
use crate::geometry::{
    orthonormalize_columns, tangent_project, transport_comps, Point, TangentVector,
};

/// Threshold below which the gap between the k-th and (k+1)-th eigenvalue is
/// treated as collapsed.
const EIGENGAP_TOL: f64 = 1e-8;

/// A symmetric operator on the tangent space, extended to act as the
/// identity on the normal space. Apply-style consumers (the reflector Euler
/// step) only need the action, not a dense matrix.
pub trait TangentOperator {
    fn base(&self) -> &Point;
    fn apply(&self, w: &DVector<f64>) -> Result<DVector<f64>>;
}

/// R = I - 2 V V' with V a metric-orthonormal tangent frame at `base`.
#[derive(Clone, Debug)]
pub struct Reflector {
    base: Point,
    v: DMatrix<f64>,
}

impl Reflector {
    /// Builds a reflector from a frame, checking orthonormality (in the
    /// manifold metric) and tangency of every column.
    pub fn new(base: Point, v: DMatrix<f64>) -> Result<Self> {
        assert_eq!(v.nrows(), base.manifold().ambient_dim());
        let w = base.manifold().metric_weight();
        let gram = (v.transpose() * &v) * w;
        let k = v.ncols();
        for i in 0..k {
            for j in 0..k {
                let target = if i == j { 1.0 } else { 0.0 };
                if (gram[(i, j)] - target).abs() > 1e-8 {
                    return Err(CsdError::InvalidConfig(format!(
                        "reflector frame not orthonormal: gram[{i},{j}] = {:.3e}",
                        gram[(i, j)]
                    )));
                }
            }
        }
        let a = base.manifold().constraint_jacobian(base.coords());
        for j in 0..k {
            let col = v.column(j);
            let resid = (a.transpose() * col).norm();
            if resid > 1e-8 * (1.0 + col.norm()) {
                return Err(CsdError::InvalidConfig(format!(
                    "reflector column {j} violates tangency by {resid:.3e}"
                )));
            }
        }
        Ok(Self { base, v })
    }

    pub(crate) fn new_unchecked(base: Point, v: DMatrix<f64>) -> Self {
        Self { base, v }
    }

    /// The k = 0 reflector (plain identity; the dynamics degenerate to
    /// gradient descent).
    pub fn identity(base: Point) -> Self {
        let d = base.manifold().ambient_dim();
        Self { base, v: DMatrix::zeros(d, 0) }
    }

    pub fn base(&self) -> &Point {
        &self.base
    }

    pub fn k(&self) -> usize {
        self.v.ncols()
    }

    /// The stored frame of unstable directions.
    pub fn frame(&self) -> &DMatrix<f64> {
        &self.v
    }

    /// (I - 2 V V') w for w tangent at the same base point.
    pub fn apply(&self, w: &TangentVector) -> Result<TangentVector> {
        if w.base() != &self.base {
            return Err(CsdError::BaseMismatch);
        }
        Ok(TangentVector::new_unchecked(
            self.base.clone(),
            self.apply_comps(w.comps()),
        ))
    }

    pub(crate) fn apply_comps(&self, w: &DVector<f64>) -> DVector<f64> {
        if self.k() == 0 {
            return w.clone();
        }
        let weight = self.base.manifold().metric_weight();
        let coeff = (self.v.transpose() * w) * weight;
        w - &self.v * (coeff * 2.0)
    }

    /// Dense ambient representation I - 2 w V V' (used by tests and the
    /// small-dimension orth path).
    pub fn to_dense(&self) -> DMatrix<f64> {
        let d = self.base.manifold().ambient_dim();
        let w = self.base.manifold().metric_weight();
        DMatrix::identity(d, d) - (&self.v * self.v.transpose()) * (2.0 * w)
    }

    pub fn as_sym_operator(&self) -> SymOperator {
        SymOperator {
            base: self.base.clone(),
            repr: SymRepr::Dense(self.to_dense()),
        }
    }

    /// Frobenius distance between the unstable-subspace projectors of two
    /// reflectors: |VV' - UU'|_F = sqrt(2k - 2 |U*V|_F^2).
    pub fn projector_distance(&self, other: &Reflector) -> f64 {
        assert_eq!(self.k(), other.k());
        let w = self.base.manifold().metric_weight();
        let overlap = (other.v.transpose() * &self.v) * w;
        let k = self.k() as f64;
        (2.0 * k - 2.0 * overlap.norm_squared()).max(0.0).sqrt()
    }
}

#[derive(Clone, Debug)]
enum SymRepr {
    /// Full ambient matrix (small problems, tests, arbitrary symmetric
    /// inputs to `orth`).
    Dense(DMatrix<f64>),
    /// I - 2 V V* + V W* + W V* with V the reflector frame; this is exactly
    /// the form the Euler update produces, and it stays O(dk) in memory.
    ReflectorUpdate { v: DMatrix<f64>, w: DMatrix<f64> },
}

/// A symmetric (self-adjoint in the manifold metric) operator in ambient
/// coordinates, acting as the identity on the normal space.
#[derive(Clone, Debug)]
pub struct SymOperator {
    base: Point,
    repr: SymRepr,
}

impl SymOperator {
    /// Wraps a dense symmetric matrix; fails if visibly non-symmetric.
    pub fn dense(base: Point, mat: DMatrix<f64>) -> Result<Self> {
        assert_eq!(mat.nrows(), base.manifold().ambient_dim());
        assert_eq!(mat.ncols(), mat.nrows());
        let asym = (&mat - mat.transpose()).norm();
        if asym > 1e-10 * mat.norm().max(1.0) {
            return Err(CsdError::InvalidConfig(format!(
                "operator not symmetric: |M - M'|_F = {asym:.3e}"
            )));
        }
        Ok(Self { base, repr: SymRepr::Dense(mat) })
    }

    pub fn base(&self) -> &Point {
        &self.base
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        match &self.repr {
            SymRepr::Dense(m) => m.clone(),
            SymRepr::ReflectorUpdate { v, w } => {
                let d = v.nrows();
                let weight = self.base.manifold().metric_weight();
                let vw = v * w.transpose();
                DMatrix::identity(d, d) - (v * v.transpose()) * (2.0 * weight)
                    + (&vw + vw.transpose()) * weight
            }
        }
    }
}

impl TangentOperator for SymOperator {
    fn base(&self) -> &Point {
        &self.base
    }

    fn apply(&self, u: &DVector<f64>) -> Result<DVector<f64>> {
        let out = match &self.repr {
            SymRepr::Dense(m) => m * u,
            SymRepr::ReflectorUpdate { v, w } => {
                let weight = self.base.manifold().metric_weight();
                let vu = (v.transpose() * u) * weight;
                let wu = (w.transpose() * u) * weight;
                u - v * (&vu * 2.0) + v * wu + w * vu
            }
        };
        Ok(out)
    }
}

/// One explicit Euler step of the reflector dynamics,
/// Rbar = R + dt (H - R H R), built in low-rank form from H applied to the
/// frame. `l_estimate`, when supplied, triggers a warning if dt crosses the
/// 1/(2L) stability bound the nearest-point projection relies on.
pub fn euler_reflector_step<H: TangentOperator + ?Sized>(
    r: &Reflector,
    h: &H,
    dt: f64,
    l_estimate: Option<f64>,
) -> Result<SymOperator> {
    if h.base() != r.base() {
        return Err(CsdError::BaseMismatch);
    }
    if let Some(l) = l_estimate {
        if dt >= 0.5 / l {
            log::warn!(
                "reflector Euler step dt = {dt:.3e} >= 1/(2L) = {:.3e}; \
                 eigengap of the orth step is no longer guaranteed",
                0.5 / l
            );
        }
    }
    let weight = r.base().manifold().metric_weight();
    let k = r.k();
    let d = r.base().manifold().ambient_dim();
    let mut hv = DMatrix::zeros(d, k);
    for j in 0..k {
        let col = r.frame().column(j).into_owned();
        hv.set_column(j, &h.apply(&col)?);
    }
    let c = {
        let raw = (r.frame().transpose() * &hv) * weight;
        (&raw + raw.transpose()) * 0.5
    };
    let w_corr = (&hv - r.frame() * c) * (2.0 * dt);
    Ok(SymOperator {
        base: r.base().clone(),
        repr: SymRepr::ReflectorUpdate { v: r.frame().clone(), w: w_corr },
    })
}

/// Nearest-point projection onto the reflector manifold R_k: eigendecompose,
/// send the k smallest eigenvalues to -1 and the rest to +1.
pub fn orth(rbar: &SymOperator, k: usize) -> Result<Reflector> {
    let base = rbar.base().clone();
    if k == 0 {
        return Ok(Reflector::identity(base));
    }
    let weight = base.manifold().metric_weight();
    match &rbar.repr {
        SymRepr::Dense(m) => {
            let eig = m.clone().symmetric_eigen();
            let mut idx: Vec<usize> = (0..eig.eigenvalues.len()).collect();
            idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
            let lam_k = eig.eigenvalues[idx[k - 1]];
            let lam_k1 = eig.eigenvalues[idx[k]];
            let gap = lam_k1 - lam_k;
            if gap < EIGENGAP_TOL {
                return Err(CsdError::EigengapCollapse { k, k1: k + 1, gap });
            }
            let d = m.nrows();
            let mut v = DMatrix::zeros(d, k);
            for (j, &i) in idx.iter().take(k).enumerate() {
                v.set_column(j, &(eig.eigenvectors.column(i) / weight.sqrt()));
            }
            Reflector::new(base, v)
        }
        SymRepr::ReflectorUpdate { v, w } => {
            // Everything orthogonal to span{V, W} is fixed with eigenvalue
            // exactly 1, so the eigenproblem restricts to that span.
            let k0 = v.ncols();
            let mut span = DMatrix::zeros(v.nrows(), 2 * k0);
            span.columns_mut(0, k0).copy_from(v);
            span.columns_mut(k0, k0).copy_from(w);
            let q = mgs_keep_independent(span, weight);
            let qdim = q.ncols();
            if qdim < k {
                return Err(CsdError::InvalidConfig(format!(
                    "reflector update span has rank {qdim} < k = {k}"
                )));
            }
            let cv = (q.transpose() * v) * weight;
            let cw = (q.transpose() * w) * weight;
            let cvw = &cv * cw.transpose();
            let t = DMatrix::identity(qdim, qdim) - (&cv * cv.transpose()) * 2.0
                + &cvw
                + cvw.transpose();
            let t = (&t + t.transpose()) * 0.5;
            let eig = t.symmetric_eigen();
            let mut idx: Vec<usize> = (0..qdim).collect();
            idx.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
            // The tangent spectrum is the subspace spectrum plus exact ones.
            let extra_ones = base.manifold().tangent_dim() - qdim;
            let mut spectrum: Vec<f64> = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
            spectrum.extend(std::iter::repeat(1.0).take(extra_ones));
            spectrum.sort_by(f64::total_cmp);
            let gap = spectrum[k] - spectrum[k - 1];
            if gap < EIGENGAP_TOL {
                return Err(CsdError::EigengapCollapse { k, k1: k + 1, gap });
            }
            if eig.eigenvalues[idx[k - 1]] > spectrum[k - 1] {
                // the k smallest are not all inside the span; cannot happen
                // for an actual Euler update, but guard anyway
                return Err(CsdError::EigengapCollapse { k, k1: k + 1, gap: 0.0 });
            }
            let mut u = DMatrix::zeros(qdim, k);
            for (j, &i) in idx.iter().take(k).enumerate() {
                u.set_column(j, &eig.eigenvectors.column(i));
            }
            Reflector::new(base, q * u)
        }
    }
}

/// Carries a reflector to the tangent space at `x_new` = Ret_{base}(eta):
/// transport the frame columns, re-project onto the new tangent space and
/// re-orthonormalize.
pub fn transport_reflector(
    r: &Reflector,
    x_new: &Point,
    eta: &TangentVector,
) -> Result<Reflector> {
    if eta.base() != r.base() {
        return Err(CsdError::BaseMismatch);
    }
    let k = r.k();
    if k == 0 {
        return Ok(Reflector::identity(x_new.clone()));
    }
    if eta.comps().iter().all(|&c| c == 0.0) {
        return Ok(Reflector::new_unchecked(x_new.clone(), r.frame().clone()));
    }
    let weight = x_new.manifold().metric_weight();
    let d = x_new.manifold().ambient_dim();
    let mut cols = DMatrix::zeros(d, k);
    for j in 0..k {
        let carried = transport_comps(
            r.base(),
            eta.comps(),
            &r.frame().column(j).into_owned(),
            x_new.coords(),
        );
        let projected = tangent_project(x_new, &carried)?;
        cols.set_column(j, projected.comps());
    }
    let gram = (cols.transpose() * &cols) * weight;
    let eig = gram.symmetric_eigen();
    let gmax = eig.eigenvalues.amax();
    let gmin = eig.eigenvalues.min();
    if !(gmin > 0.0) || gmax / gmin > 1e8 {
        return Err(CsdError::TransportDegeneracy {
            cond: if gmin > 0.0 { gmax / gmin } else { f64::INFINITY },
        });
    }
    orthonormalize_columns(&mut cols, weight)
        .map_err(|_| CsdError::TransportDegeneracy { cond: gmax / gmin })?;
    Reflector::new(x_new.clone(), cols)
}

/// Metric-MGS that drops columns falling below a relative tolerance instead
/// of failing; used to build a basis of span{V, W}.
fn mgs_keep_independent(cols: DMatrix<f64>, weight: f64) -> DMatrix<f64> {
    let d = cols.nrows();
    let mut kept: Vec<DVector<f64>> = Vec::with_capacity(cols.ncols());
    for j in 0..cols.ncols() {
        let mut c = cols.column(j).into_owned();
        let orig = weight.sqrt() * c.norm();
        if orig == 0.0 {
            continue;
        }
        for q in &kept {
            let proj = weight * q.dot(&c);
            c.axpy(-proj, q, 1.0);
        }
        // second pass for numerical safety
        for q in &kept {
            let proj = weight * q.dot(&c);
            c.axpy(-proj, q, 1.0);
        }
        let nrm = weight.sqrt() * c.norm();
        if nrm > 1e-10 * orig {
            kept.push(c / nrm);
        }
    }
    let mut out = DMatrix::zeros(d, kept.len());
    for (j, c) in kept.iter().enumerate() {
        out.set_column(j, c);
    }
    out
}
