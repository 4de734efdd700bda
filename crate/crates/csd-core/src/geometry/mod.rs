//! Embedded-manifold geometry: equality constraints, tangent projection,
//! retraction and vector transport for the five concrete manifolds the
//! saddle-search problems live on.
//!
//! Every manifold is a zero set M = { x : c_i(x) = 0, i = 1..m } in R^d with
//! full-rank constraint Jacobian A(x) = (grad c_1, ..., grad c_m). The
//! tangent space at x is the null space of A(x)', and the orthogonal
//! projector is P(x) = I - A (A'A)^{-1} A'. The normalized-field manifold
//! carries a uniform quadrature weight in its inner product; for a scalar
//! weight the projector formula is unchanged, only norms and gradients
//! rescale.

mod sphere;
mod stiefel;

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{CsdError, Result};

pub(crate) use sphere::{sphere_angle, sphere_exp, sphere_transport, sphere_transport_back};
pub(crate) use stiefel::{qf as stiefel_qf, transport_to as stiefel_transport};

/// Condition-number threshold above which A'A is treated as singular.
const RANK_TOL: f64 = 1e12;

#[derive(Clone, Debug, PartialEq)]
pub enum ManifoldKind {
    /// Unconstrained R^d.
    Euclidean { dim: usize },
    /// { x in R^d : |x|^2 = 1 }.
    UnitSphere { dim: usize },
    /// Circle in the first two coordinates, free axes after.
    Cylinder { dim: usize },
    /// Product of `factors` spheres of ambient dimension `factor_dim`, with
    /// individual coordinates pinned to fixed values (symmetry fixing).
    ProductSphere {
        factor_dim: usize,
        factors: usize,
        pinned: Vec<(usize, f64)>,
    },
    /// St(n,p): n x p matrices with orthonormal columns, stored column-major.
    Stiefel { n: usize, p: usize },
    /// Discretized complex field on an `interior_n` x `interior_n` interior
    /// grid (Dirichlet boundary eliminated), stored as interleaved re/im
    /// pairs, normalized in the inner product <u,v> = weight * u'v with
    /// uniform quadrature weight h^2.
    WeightedComplexSphere { interior_n: usize, weight: f64 },
}

#[derive(Clone, Debug, PartialEq)]
pub struct Manifold {
    kind: ManifoldKind,
}

impl Manifold {
    pub fn euclidean(dim: usize) -> Self {
        assert!(dim >= 1);
        Self { kind: ManifoldKind::Euclidean { dim } }
    }

    pub fn unit_sphere(dim: usize) -> Self {
        assert!(dim >= 2);
        Self { kind: ManifoldKind::UnitSphere { dim } }
    }

    pub fn cylinder(dim: usize) -> Self {
        assert!(dim >= 2);
        Self { kind: ManifoldKind::Cylinder { dim } }
    }

    /// Product of `factors` spheres in R^{factor_dim}. `pinned` lists global
    /// coordinate indices held at fixed values; a factor whose coordinates
    /// are all pinned carries no sphere constraint of its own. Partially
    /// pinned factors must pin to zero so the free block stays a unit sphere.
    pub fn product_sphere(factor_dim: usize, factors: usize, pinned: Vec<(usize, f64)>) -> Self {
        assert!(factor_dim >= 2 && factors >= 1);
        let d = factor_dim * factors;
        let mut seen = vec![false; d];
        for &(idx, _) in &pinned {
            assert!(idx < d, "pinned index out of range");
            assert!(!seen[idx], "duplicate pinned index");
            seen[idx] = true;
        }
        for f in 0..factors {
            let range = f * factor_dim..(f + 1) * factor_dim;
            let pins: Vec<_> = pinned.iter().filter(|(i, _)| range.contains(i)).collect();
            if pins.len() < factor_dim {
                assert!(
                    pins.iter().all(|(_, v)| *v == 0.0),
                    "partially pinned factor must pin coordinates to zero"
                );
            }
        }
        Self { kind: ManifoldKind::ProductSphere { factor_dim, factors, pinned } }
    }

    pub fn stiefel(n: usize, p: usize) -> Self {
        assert!(p >= 1 && n > p);
        Self { kind: ManifoldKind::Stiefel { n, p } }
    }

    pub fn weighted_complex_sphere(interior_n: usize, weight: f64) -> Self {
        assert!(interior_n >= 1 && weight > 0.0);
        Self { kind: ManifoldKind::WeightedComplexSphere { interior_n, weight } }
    }

    pub fn kind(&self) -> &ManifoldKind {
        &self.kind
    }

    pub fn ambient_dim(&self) -> usize {
        match self.kind {
            ManifoldKind::Euclidean { dim }
            | ManifoldKind::UnitSphere { dim }
            | ManifoldKind::Cylinder { dim } => dim,
            ManifoldKind::ProductSphere { factor_dim, factors, .. } => factor_dim * factors,
            ManifoldKind::Stiefel { n, p } => n * p,
            ManifoldKind::WeightedComplexSphere { interior_n, .. } => 2 * interior_n * interior_n,
        }
    }

    pub fn constraint_count(&self) -> usize {
        match &self.kind {
            ManifoldKind::Euclidean { .. } => 0,
            ManifoldKind::UnitSphere { .. }
            | ManifoldKind::Cylinder { .. }
            | ManifoldKind::WeightedComplexSphere { .. } => 1,
            ManifoldKind::ProductSphere { factor_dim, factors, pinned } => {
                let free_factors = (0..*factors)
                    .filter(|f| {
                        let range = f * factor_dim..(f + 1) * factor_dim;
                        pinned.iter().filter(|(i, _)| range.contains(i)).count() < *factor_dim
                    })
                    .count();
                free_factors + pinned.len()
            }
            ManifoldKind::Stiefel { p, .. } => p * (p + 1) / 2,
        }
    }

    pub fn tangent_dim(&self) -> usize {
        self.ambient_dim() - self.constraint_count()
    }

    /// Scalar quadrature weight of the inner product (1 except for the
    /// discretized field manifold, where it equals h^2).
    pub fn metric_weight(&self) -> f64 {
        match self.kind {
            ManifoldKind::WeightedComplexSphere { weight, .. } => weight,
            _ => 1.0,
        }
    }

    /// Feasibility tolerance: tighter for algebraic manifolds, looser for the
    /// PDE discretization where inner-product rounding accumulates.
    pub fn feas_tol(&self) -> f64 {
        match self.kind {
            ManifoldKind::WeightedComplexSphere { .. } => 1e-8,
            _ => 1e-10,
        }
    }

    pub fn inner(&self, u: &DVector<f64>, v: &DVector<f64>) -> f64 {
        self.metric_weight() * u.dot(v)
    }

    pub fn norm(&self, u: &DVector<f64>) -> f64 {
        self.inner(u, u).sqrt()
    }

    /// Constraint values c(x).
    pub fn constraint_values(&self, x: &DVector<f64>) -> DVector<f64> {
        let mut c = Vec::with_capacity(self.constraint_count());
        match &self.kind {
            ManifoldKind::Euclidean { .. } => {}
            ManifoldKind::UnitSphere { .. } => c.push(x.dot(x) - 1.0),
            ManifoldKind::Cylinder { .. } => c.push(x[0] * x[0] + x[1] * x[1] - 1.0),
            ManifoldKind::ProductSphere { factor_dim, factors, pinned } => {
                for f in 0..*factors {
                    if self.factor_is_fully_pinned(f) {
                        continue;
                    }
                    let xf = x.rows(f * factor_dim, *factor_dim);
                    c.push(xf.dot(&xf) - 1.0);
                }
                for &(idx, val) in pinned {
                    c.push(x[idx] - val);
                }
            }
            ManifoldKind::Stiefel { n, p } => {
                for i in 0..*p {
                    let xi = x.rows(i * n, *n);
                    for j in i..*p {
                        let xj = x.rows(j * n, *n);
                        let delta = if i == j { 1.0 } else { 0.0 };
                        c.push(xi.dot(&xj) - delta);
                    }
                }
            }
            ManifoldKind::WeightedComplexSphere { weight, .. } => {
                c.push(weight * x.dot(x) - 1.0)
            }
        }
        DVector::from_vec(c)
    }

    /// Euclidean gradients of the constraints, as columns of a d x m matrix.
    pub fn constraint_jacobian(&self, x: &DVector<f64>) -> DMatrix<f64> {
        let d = self.ambient_dim();
        let m = self.constraint_count();
        let mut a = DMatrix::zeros(d, m);
        let mut col = 0;
        match &self.kind {
            ManifoldKind::Euclidean { .. } => {}
            ManifoldKind::UnitSphere { .. } => {
                a.set_column(0, &(x * 2.0));
            }
            ManifoldKind::Cylinder { .. } => {
                a[(0, 0)] = 2.0 * x[0];
                a[(1, 0)] = 2.0 * x[1];
            }
            ManifoldKind::ProductSphere { factor_dim, factors, pinned } => {
                for f in 0..*factors {
                    if self.factor_is_fully_pinned(f) {
                        continue;
                    }
                    for i in 0..*factor_dim {
                        a[(f * factor_dim + i, col)] = 2.0 * x[f * factor_dim + i];
                    }
                    col += 1;
                }
                for &(idx, _) in pinned {
                    a[(idx, col)] = 1.0;
                    col += 1;
                }
            }
            ManifoldKind::Stiefel { n, p } => {
                for i in 0..*p {
                    for j in i..*p {
                        if i == j {
                            for r in 0..*n {
                                a[(i * n + r, col)] = 2.0 * x[i * n + r];
                            }
                        } else {
                            for r in 0..*n {
                                a[(i * n + r, col)] = x[j * n + r];
                                a[(j * n + r, col)] = x[i * n + r];
                            }
                        }
                        col += 1;
                    }
                }
            }
            ManifoldKind::WeightedComplexSphere { weight, .. } => {
                a.set_column(0, &(x * (2.0 * weight)));
            }
        }
        a
    }

    /// Columns hess(c_i)(x) v, needed for the constraint-curvature term of
    /// the Riemannian Hessian. All our constraints are quadratic, so this is
    /// x-independent.
    pub fn constraint_hess_vec(&self, _x: &DVector<f64>, v: &DVector<f64>) -> DMatrix<f64> {
        let d = self.ambient_dim();
        let m = self.constraint_count();
        let mut h = DMatrix::zeros(d, m);
        let mut col = 0;
        match &self.kind {
            ManifoldKind::Euclidean { .. } => {}
            ManifoldKind::UnitSphere { .. } => h.set_column(0, &(v * 2.0)),
            ManifoldKind::Cylinder { .. } => {
                h[(0, 0)] = 2.0 * v[0];
                h[(1, 0)] = 2.0 * v[1];
            }
            ManifoldKind::ProductSphere { factor_dim, factors, pinned } => {
                for f in 0..*factors {
                    if self.factor_is_fully_pinned(f) {
                        continue;
                    }
                    for i in 0..*factor_dim {
                        h[(f * factor_dim + i, col)] = 2.0 * v[f * factor_dim + i];
                    }
                    col += 1;
                }
                // pins are linear: zero curvature
                let _ = pinned;
            }
            ManifoldKind::Stiefel { n, p } => {
                for i in 0..*p {
                    for j in i..*p {
                        if i == j {
                            for r in 0..*n {
                                h[(i * n + r, col)] = 2.0 * v[i * n + r];
                            }
                        } else {
                            for r in 0..*n {
                                h[(i * n + r, col)] = v[j * n + r];
                                h[(j * n + r, col)] = v[i * n + r];
                            }
                        }
                        col += 1;
                    }
                }
            }
            ManifoldKind::WeightedComplexSphere { weight, .. } => {
                h.set_column(0, &(v * (2.0 * weight)));
            }
        }
        h
    }

    pub fn feasibility_violation(&self, x: &DVector<f64>) -> f64 {
        self.constraint_values(x).amax()
    }

    fn factor_is_fully_pinned(&self, f: usize) -> bool {
        match &self.kind {
            ManifoldKind::ProductSphere { factor_dim, pinned, .. } => {
                let range = f * factor_dim..(f + 1) * factor_dim;
                pinned.iter().filter(|(i, _)| range.contains(i)).count() == *factor_dim
            }
            _ => false,
        }
    }

    fn factor_free_indices(&self, f: usize) -> Vec<usize> {
        match &self.kind {
            ManifoldKind::ProductSphere { factor_dim, pinned, .. } => (f * factor_dim
                ..(f + 1) * factor_dim)
                .filter(|i| !pinned.iter().any(|(p, _)| p == i))
                .collect(),
            _ => unreachable!(),
        }
    }
}

/// A feasible point in ambient coordinates.
#[derive(Clone, Debug, PartialEq)]
pub struct Point {
    manifold: Manifold,
    coords: DVector<f64>,
}

impl Point {
    /// Builds a point, checking dimensions and feasibility.
    pub fn new(manifold: Manifold, coords: DVector<f64>) -> Result<Self> {
        assert_eq!(coords.len(), manifold.ambient_dim());
        let viol = manifold.feasibility_violation(&coords);
        if viol > manifold.feas_tol() {
            return Err(CsdError::InvalidConfig(format!(
                "point violates constraints by {viol:.3e} (tol {:.1e})",
                manifold.feas_tol()
            )));
        }
        Ok(Self { manifold, coords })
    }

    /// Builds a point whose feasibility is guaranteed by construction
    /// (retraction outputs and the like).
    pub fn new_unchecked(manifold: Manifold, coords: DVector<f64>) -> Self {
        assert_eq!(coords.len(), manifold.ambient_dim());
        Self { manifold, coords }
    }

    pub fn manifold(&self) -> &Manifold {
        &self.manifold
    }

    pub fn coords(&self) -> &DVector<f64> {
        &self.coords
    }

    pub fn feasibility_violation(&self) -> f64 {
        self.manifold.feasibility_violation(&self.coords)
    }
}

/// Ambient components of a vector in the tangent space at `base`.
#[derive(Clone, Debug, PartialEq)]
pub struct TangentVector {
    base: Point,
    comps: DVector<f64>,
}

impl TangentVector {
    /// Builds a tangent vector, checking |A(base)' v| <= 1e-10 (1 + |v|).
    pub fn new(base: Point, comps: DVector<f64>) -> Result<Self> {
        assert_eq!(comps.len(), base.manifold.ambient_dim());
        let a = base.manifold.constraint_jacobian(&base.coords);
        let resid = (a.transpose() * &comps).norm();
        if resid > 1e-10 * (1.0 + comps.norm()) {
            return Err(CsdError::InvalidConfig(format!(
                "vector violates tangency by {resid:.3e}"
            )));
        }
        Ok(Self { base, comps })
    }

    pub(crate) fn new_unchecked(base: Point, comps: DVector<f64>) -> Self {
        assert_eq!(comps.len(), base.manifold.ambient_dim());
        Self { base, comps }
    }

    pub fn zero(base: Point) -> Self {
        let d = base.manifold.ambient_dim();
        Self { base, comps: DVector::zeros(d) }
    }

    pub fn base(&self) -> &Point {
        &self.base
    }

    pub fn comps(&self) -> &DVector<f64> {
        &self.comps
    }

    pub fn norm(&self) -> f64 {
        self.base.manifold.norm(&self.comps)
    }

    pub fn inner(&self, other: &TangentVector) -> f64 {
        self.base.manifold.inner(&self.comps, &other.comps)
    }

    pub fn scale(&self, s: f64) -> TangentVector {
        Self { base: self.base.clone(), comps: &self.comps * s }
    }

    /// Tangency residual |A(base)' v| (Euclidean), for diagnostics.
    pub fn tangency_residual(&self) -> f64 {
        let a = self.base.manifold.constraint_jacobian(&self.base.coords);
        (a.transpose() * &self.comps).norm()
    }
}

/// Hessian eigenvalue bounds near a strict saddle: 0 < mu <= |lambda| <= l.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SpectralBounds {
    pub mu: f64,
    pub l: f64,
}

impl SpectralBounds {
    pub fn new(mu: f64, l: f64) -> Result<Self> {
        if !(mu > 0.0 && l >= mu) {
            return Err(CsdError::InvalidConfig(format!(
                "spectral bounds need 0 < mu <= L, got mu = {mu}, L = {l}"
            )));
        }
        Ok(Self { mu, l })
    }

    pub fn kappa(&self) -> f64 {
        self.l / self.mu
    }
}

/// Orthogonal projection of an ambient vector onto the tangent space,
/// P(x) w = w - A (A'A)^{-1} A' w.
pub fn tangent_project(x: &Point, w: &DVector<f64>) -> Result<TangentVector> {
    let m = x.manifold().constraint_count();
    if m == 0 {
        return Ok(TangentVector::new_unchecked(x.clone(), w.clone()));
    }
    let a = x.manifold().constraint_jacobian(x.coords());
    let ata = a.transpose() * &a;
    let eig = ata.symmetric_eigen();
    let lmax = eig.eigenvalues.amax();
    let lmin = eig.eigenvalues.min();
    if !(lmin > 0.0) || lmax / lmin > RANK_TOL {
        return Err(CsdError::RankDeficientConstraints {
            cond: if lmin > 0.0 { lmax / lmin } else { f64::INFINITY },
        });
    }
    let rhs = a.transpose() * w;
    let y = eig.eigenvectors.transpose() * rhs;
    let scaled = DVector::from_fn(m, |i, _| y[i] / eig.eigenvalues[i]);
    let u = &eig.eigenvectors * scaled;
    Ok(TangentVector::new_unchecked(x.clone(), w - a * u))
}

/// Orthonormal basis (in the manifold metric) of the tangent space, as the
/// columns of a d x (d-m) matrix. Computed from the QR factorization of A.
pub fn tangent_basis(x: &Point) -> Result<DMatrix<f64>> {
    let d = x.manifold().ambient_dim();
    let m = x.manifold().constraint_count();
    let scale = 1.0 / x.manifold().metric_weight().sqrt();
    if m == 0 {
        return Ok(DMatrix::identity(d, d) * scale);
    }
    let a = x.manifold().constraint_jacobian(x.coords());
    let qr = a.qr();
    let r = qr.r();
    let dmax = (0..m).map(|i| r[(i, i)].abs()).fold(0.0_f64, f64::max);
    let dmin = (0..m).map(|i| r[(i, i)].abs()).fold(f64::INFINITY, f64::min);
    if dmin == 0.0 || dmax / dmin > RANK_TOL.sqrt() {
        return Err(CsdError::RankDeficientConstraints {
            cond: if dmin > 0.0 { (dmax / dmin).powi(2) } else { f64::INFINITY },
        });
    }
    // q_tr_mul(I) leaves Q' in place; the trailing d-m rows of Q' span the
    // orthogonal complement of range(A) = null(A').
    let mut qt = DMatrix::identity(d, d);
    qr.q_tr_mul(&mut qt);
    Ok(qt.rows(m, d - m).transpose() * scale)
}

/// Retraction Ret_x(eta): exponential map on the sphere family, coordinate
/// sum on free axes, Q-factor of the thin QR on Stiefel.
pub fn retract(x: &Point, eta: &TangentVector) -> Result<Point> {
    if eta.base() != x {
        return Err(CsdError::BaseMismatch);
    }
    if eta.comps.iter().all(|&c| c == 0.0) {
        return Ok(x.clone());
    }
    let man = x.manifold().clone();
    let xc = x.coords();
    let t = &eta.comps;
    let coords = match man.kind() {
        ManifoldKind::Euclidean { .. } => xc + t,
        ManifoldKind::UnitSphere { .. } => sphere_exp(xc, t, 1.0),
        ManifoldKind::WeightedComplexSphere { weight, .. } => sphere_exp(xc, t, *weight),
        ManifoldKind::Cylinder { dim } => {
            let mut out = xc + t;
            let xf = xc.rows(0, 2).into_owned();
            let tf = t.rows(0, 2).into_owned();
            let yf = sphere_exp(&xf, &tf, 1.0);
            out[0] = yf[0];
            out[1] = yf[1];
            let _ = dim;
            out
        }
        ManifoldKind::ProductSphere { factors, .. } => {
            let mut out = xc.clone();
            for f in 0..*factors {
                let free = man.factor_free_indices(f);
                if free.is_empty() {
                    continue;
                }
                let xf = DVector::from_fn(free.len(), |i, _| xc[free[i]]);
                let tf = DVector::from_fn(free.len(), |i, _| t[free[i]]);
                let yf = sphere_exp(&xf, &tf, 1.0);
                for (i, &idx) in free.iter().enumerate() {
                    out[idx] = yf[i];
                }
            }
            out
        }
        ManifoldKind::Stiefel { n, p } => {
            let xm = DMatrix::from_column_slice(*n, *p, xc.as_slice());
            let tm = DMatrix::from_column_slice(*n, *p, t.as_slice());
            let q = stiefel_qf(xm + tm)?;
            DVector::from_column_slice(q.as_slice())
        }
    };
    Ok(Point::new_unchecked(man, coords))
}

/// Components of v transported from x to `dest` = Ret_x(eta), without
/// rebuilding the destination point.
pub(crate) fn transport_comps(
    x: &Point,
    eta: &DVector<f64>,
    v: &DVector<f64>,
    dest: &DVector<f64>,
) -> DVector<f64> {
    let man = x.manifold();
    let xc = x.coords();
    match man.kind() {
        ManifoldKind::Euclidean { .. } => v.clone(),
        ManifoldKind::UnitSphere { .. } => sphere_transport(xc, eta, v, 1.0),
        ManifoldKind::WeightedComplexSphere { weight, .. } => {
            sphere_transport(xc, eta, v, *weight)
        }
        ManifoldKind::Cylinder { .. } => {
            let mut out = v.clone();
            let xf = xc.rows(0, 2).into_owned();
            let tf = eta.rows(0, 2).into_owned();
            let vf = v.rows(0, 2).into_owned();
            let pf = sphere_transport(&xf, &tf, &vf, 1.0);
            out[0] = pf[0];
            out[1] = pf[1];
            out
        }
        ManifoldKind::ProductSphere { factors, .. } => {
            let mut out = v.clone();
            for f in 0..*factors {
                let free = man.factor_free_indices(f);
                if free.is_empty() {
                    continue;
                }
                let xf = DVector::from_fn(free.len(), |i, _| xc[free[i]]);
                let tf = DVector::from_fn(free.len(), |i, _| eta[free[i]]);
                let vf = DVector::from_fn(free.len(), |i, _| v[free[i]]);
                let pf = sphere_transport(&xf, &tf, &vf, 1.0);
                for (i, &idx) in free.iter().enumerate() {
                    out[idx] = pf[i];
                }
            }
            out
        }
        ManifoldKind::Stiefel { n, p } => {
            let ym = DMatrix::from_column_slice(*n, *p, dest.as_slice());
            let vm = DMatrix::from_column_slice(*n, *p, v.as_slice());
            let t = stiefel_transport(&ym, &vm);
            DVector::from_column_slice(t.as_slice())
        }
    }
}

/// Components at x of a vector w tangent at `dest` = Ret_x(eta), carried back
/// along the reversed retraction curve.
pub(crate) fn transport_back_comps(
    x: &Point,
    eta: &DVector<f64>,
    w: &DVector<f64>,
    dest: &DVector<f64>,
) -> DVector<f64> {
    let man = x.manifold();
    let xc = x.coords();
    match man.kind() {
        ManifoldKind::Euclidean { .. } => w.clone(),
        ManifoldKind::UnitSphere { .. } => sphere_transport_back(xc, eta, dest, w, 1.0),
        ManifoldKind::WeightedComplexSphere { weight, .. } => {
            sphere_transport_back(xc, eta, dest, w, *weight)
        }
        ManifoldKind::Cylinder { .. } => {
            let mut out = w.clone();
            let xf = xc.rows(0, 2).into_owned();
            let tf = eta.rows(0, 2).into_owned();
            let df = dest.rows(0, 2).into_owned();
            let wf = w.rows(0, 2).into_owned();
            let pf = sphere_transport_back(&xf, &tf, &df, &wf, 1.0);
            out[0] = pf[0];
            out[1] = pf[1];
            out
        }
        ManifoldKind::ProductSphere { factors, .. } => {
            let mut out = w.clone();
            for f in 0..*factors {
                let free = man.factor_free_indices(f);
                if free.is_empty() {
                    continue;
                }
                let xf = DVector::from_fn(free.len(), |i, _| xc[free[i]]);
                let tf = DVector::from_fn(free.len(), |i, _| eta[free[i]]);
                let df = DVector::from_fn(free.len(), |i, _| dest[free[i]]);
                let wf = DVector::from_fn(free.len(), |i, _| w[free[i]]);
                let pf = sphere_transport_back(&xf, &tf, &df, &wf, 1.0);
                for (i, &idx) in free.iter().enumerate() {
                    out[idx] = pf[i];
                }
            }
            out
        }
        ManifoldKind::Stiefel { n, p } => {
            // Sym-projection transport only sees the destination; carrying
            // back is projection onto the tangent space at x.
            let xm = DMatrix::from_column_slice(*n, *p, xc.as_slice());
            let wm = DMatrix::from_column_slice(*n, *p, w.as_slice());
            let t = stiefel_transport(&xm, &wm);
            DVector::from_column_slice(t.as_slice())
        }
    }
}

/// Vector transport of v along eta; the result is tangent at Ret_x(eta).
pub fn transport(x: &Point, eta: &TangentVector, v: &TangentVector) -> Result<TangentVector> {
    if eta.base() != x || v.base() != x {
        return Err(CsdError::BaseMismatch);
    }
    let dest = retract(x, eta)?;
    let comps = transport_comps(x, &eta.comps, &v.comps, dest.coords());
    Ok(TangentVector::new_unchecked(dest, comps))
}

/// Transport of a vector tangent at `dest` = Ret_x(eta) back to x.
pub fn transport_back(
    x: &Point,
    eta: &TangentVector,
    dest: &Point,
    w: &DVector<f64>,
) -> Result<TangentVector> {
    if eta.base() != x {
        return Err(CsdError::BaseMismatch);
    }
    let comps = transport_back_comps(x, &eta.comps, w, dest.coords());
    Ok(TangentVector::new_unchecked(x.clone(), comps))
}

/// Geodesic distance between two points of the same manifold (Frobenius
/// fallback on Stiefel, where targets are compared as subspaces instead).
pub fn distance(x: &Point, y: &Point) -> f64 {
    assert_eq!(x.manifold(), y.manifold());
    let man = x.manifold();
    let (a, b) = (x.coords(), y.coords());
    match man.kind() {
        ManifoldKind::Euclidean { .. } | ManifoldKind::Stiefel { .. } => (a - b).norm(),
        ManifoldKind::UnitSphere { .. } => sphere_angle(a, b, 1.0),
        ManifoldKind::WeightedComplexSphere { weight, .. } => sphere_angle(a, b, *weight),
        ManifoldKind::Cylinder { dim } => {
            let af = a.rows(0, 2).into_owned();
            let bf = b.rows(0, 2).into_owned();
            let ang = sphere_angle(&af, &bf, 1.0);
            let dz2 = (a.rows(2, dim - 2) - b.rows(2, dim - 2)).norm_squared();
            (ang * ang + dz2).sqrt()
        }
        ManifoldKind::ProductSphere { factors, .. } => {
            let mut acc = 0.0;
            for f in 0..*factors {
                let free = man.factor_free_indices(f);
                if free.is_empty() {
                    continue;
                }
                let af = DVector::from_fn(free.len(), |i, _| a[free[i]]);
                let bf = DVector::from_fn(free.len(), |i, _| b[free[i]]);
                let ang = sphere_angle(&af, &bf, 1.0);
                acc += ang * ang;
            }
            acc.sqrt()
        }
    }
}

/// Draws a feasible point (Gaussian ambient data mapped onto the manifold).
pub fn random_point<R: Rng + ?Sized>(manifold: &Manifold, rng: &mut R) -> Point {
    let d = manifold.ambient_dim();
    let gauss = |rng: &mut R, n: usize| DVector::from_fn(n, |_, _| rng.sample::<f64, _>(StandardNormal));
    let coords = match manifold.kind() {
        ManifoldKind::Euclidean { .. } => gauss(rng, d),
        ManifoldKind::UnitSphere { .. } => {
            let v = gauss(rng, d);
            &v / v.norm()
        }
        ManifoldKind::WeightedComplexSphere { weight, .. } => {
            let v = gauss(rng, d);
            &v / (weight * v.dot(&v)).sqrt()
        }
        ManifoldKind::Cylinder { .. } => {
            let mut v = gauss(rng, d);
            let nrm = (v[0] * v[0] + v[1] * v[1]).sqrt();
            v[0] /= nrm;
            v[1] /= nrm;
            v
        }
        ManifoldKind::ProductSphere { factor_dim, factors, pinned } => {
            let mut v = DVector::zeros(d);
            for &(idx, val) in pinned {
                v[idx] = val;
            }
            for f in 0..*factors {
                let free = manifold.factor_free_indices(f);
                if free.is_empty() {
                    continue;
                }
                let g = gauss(rng, free.len());
                let g = &g / g.norm();
                for (i, &idx) in free.iter().enumerate() {
                    v[idx] = g[i];
                }
            }
            let _ = factor_dim;
            v
        }
        ManifoldKind::Stiefel { n, p } => {
            let m = DMatrix::from_fn(*n, *p, |_, _| rng.sample::<f64, _>(StandardNormal));
            let q = stiefel_qf(m).expect("random Gaussian matrix is full rank a.s.");
            DVector::from_column_slice(q.as_slice())
        }
    };
    Point::new_unchecked(manifold.clone(), coords)
}

/// Gaussian ambient vector projected onto the tangent space (not normalized).
pub fn random_tangent<R: Rng + ?Sized>(x: &Point, rng: &mut R) -> TangentVector {
    let d = x.manifold().ambient_dim();
    let w = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
    tangent_project(x, &w).expect("constraint Jacobian full rank at feasible point")
}

/// k random tangent directions, orthonormalized in the manifold metric.
pub fn random_tangent_frame<R: Rng + ?Sized>(x: &Point, k: usize, rng: &mut R) -> DMatrix<f64> {
    let d = x.manifold().ambient_dim();
    let weight = x.manifold().metric_weight();
    let mut frame = DMatrix::zeros(d, k);
    for j in 0..k {
        frame.set_column(j, random_tangent(x, rng).comps());
    }
    orthonormalize_columns(&mut frame, weight).expect("random frame is full rank a.s.");
    frame
}

/// In-place modified Gram-Schmidt in the metric <u,v> = weight u'v.
/// Fails if a column drops below `1e-12` of its original norm.
pub(crate) fn orthonormalize_columns(m: &mut DMatrix<f64>, weight: f64) -> Result<()> {
    let k = m.ncols();
    for j in 0..k {
        let orig = weight.sqrt() * m.column(j).norm();
        for i in 0..j {
            let proj = weight * m.column(i).dot(&m.column(j));
            let vi = m.column(i).into_owned();
            let mut cj = m.column_mut(j);
            cj.axpy(-proj, &vi, 1.0);
        }
        let nrm = weight.sqrt() * m.column(j).norm();
        if nrm < 1e-12 * orig.max(1e-300) {
            return Err(CsdError::TransportDegeneracy { cond: f64::INFINITY });
        }
        let mut cj = m.column_mut(j);
        cj /= nrm;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_PI_2, PI};

    fn v(s: &[f64]) -> DVector<f64> {
        DVector::from_column_slice(s)
    }

    fn sphere_pt(s: &[f64]) -> Point {
        Point::new(Manifold::unit_sphere(s.len()), v(s)).unwrap()
    }

    #[test]
    fn project_on_sphere_kills_normal_component() {
        let x = sphere_pt(&[0.0, 0.0, 1.0]);
        let p = tangent_project(&x, &v(&[1.0, 2.0, 3.0])).unwrap();
        assert_relative_eq!(p.comps(), &v(&[1.0, 2.0, 0.0]), epsilon = 1e-14);
    }

    #[test]
    fn project_on_euclidean_is_identity() {
        let x = Point::new(Manifold::euclidean(4), v(&[1.0, -2.0, 0.5, 3.0])).unwrap();
        let w = v(&[0.3, 0.7, -1.1, 2.0]);
        let p = tangent_project(&x, &w).unwrap();
        assert_eq!(p.comps(), &w);
    }

    #[test]
    fn project_on_cylinder_matches_hand_oracle() {
        // At (1, 0, 5) the constraint normal is (1, 0, 0); P = I - n n'.
        let x = Point::new(Manifold::cylinder(3), v(&[1.0, 0.0, 5.0])).unwrap();
        let p = tangent_project(&x, &v(&[1.0, 1.0, 1.0])).unwrap();
        assert_relative_eq!(p.comps(), &v(&[0.0, 1.0, 1.0]), epsilon = 1e-14);
    }

    #[test]
    fn projection_is_idempotent() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let x = random_point(&Manifold::stiefel(7, 2), &mut rng);
        let w = DVector::from_fn(14, |_, _| rng.sample::<f64, _>(StandardNormal));
        let p1 = tangent_project(&x, &w).unwrap();
        let p2 = tangent_project(&x, p1.comps()).unwrap();
        assert!((p2.comps() - p1.comps()).norm() <= 1e-12 * p1.comps().norm());
    }

    #[test]
    fn retract_sphere_half_turn() {
        let x = sphere_pt(&[1.0, 0.0]);
        let eta = TangentVector::new(x.clone(), v(&[0.0, PI])).unwrap();
        let y = retract(&x, &eta).unwrap();
        assert_relative_eq!(y.coords()[0], -1.0, epsilon = 1e-14);
    }

    #[test]
    fn retract_zero_is_exact_identity() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for man in [
            Manifold::unit_sphere(4),
            Manifold::cylinder(3),
            Manifold::stiefel(5, 2),
            Manifold::euclidean(3),
        ] {
            let x = random_point(&man, &mut rng);
            let y = retract(&x, &TangentVector::zero(x.clone())).unwrap();
            assert_eq!(x.coords(), y.coords());
        }
    }

    #[test]
    fn retract_sphere_quarter_turn() {
        let x = sphere_pt(&[1.0, 0.0, 0.0]);
        let eta = TangentVector::new(x.clone(), v(&[0.0, FRAC_PI_2, 0.0])).unwrap();
        let y = retract(&x, &eta).unwrap();
        assert_relative_eq!(y.coords(), &v(&[0.0, 1.0, 0.0]), epsilon = 1e-14);
    }

    #[test]
    fn transport_zero_eta_returns_v() {
        let x = sphere_pt(&[0.0, 1.0, 0.0]);
        let eta = TangentVector::zero(x.clone());
        let vv = TangentVector::new(x.clone(), v(&[0.5, 0.0, -0.25])).unwrap();
        let t = transport(&x, &eta, &vv).unwrap();
        assert_eq!(t.comps(), vv.comps());
    }

    #[test]
    fn transport_circle_quarter_turn() {
        let x = sphere_pt(&[1.0, 0.0]);
        let eta = TangentVector::new(x.clone(), v(&[0.0, FRAC_PI_2])).unwrap();
        let vv = TangentVector::new(x.clone(), v(&[0.0, 1.0])).unwrap();
        let t = transport(&x, &eta, &vv).unwrap();
        assert_relative_eq!(t.comps(), &v(&[-1.0, 0.0]), epsilon = 1e-14);
        assert_relative_eq!(t.base().coords(), &v(&[0.0, 1.0]), epsilon = 1e-14);
    }

    #[test]
    fn stiefel_transport_fixes_tangent_vectors_at_destination() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let man = Manifold::stiefel(6, 2);
        let x = random_point(&man, &mut rng);
        let eta = random_tangent(&x, &mut rng);
        let y = retract(&x, &eta).unwrap();
        // A vector already tangent at the destination passes through.
        let w = random_tangent(&y, &mut rng);
        let carried = transport_comps(&x, eta.comps(), w.comps(), y.coords());
        assert_relative_eq!(&carried, w.comps(), epsilon = 1e-12);
    }

    #[test]
    fn tangent_basis_spans_expected_plane() {
        let x = sphere_pt(&[0.0, 0.0, 1.0]);
        let b = tangent_basis(&x).unwrap();
        assert_eq!(b.ncols(), 2);
        // span{e1, e2}: last row vanishes
        assert!(b.row(2).norm() < 1e-14);
        let gram = b.transpose() * &b;
        assert_relative_eq!(gram, DMatrix::identity(2, 2), epsilon = 1e-13);
    }

    #[test]
    fn tangent_basis_euclidean_is_identity() {
        let x = Point::new(Manifold::euclidean(2), v(&[0.3, 0.4])).unwrap();
        let b = tangent_basis(&x).unwrap();
        assert_relative_eq!(b, DMatrix::identity(2, 2), epsilon = 1e-15);
    }

    #[test]
    fn tangent_basis_cylinder_at_axis_point() {
        let x = Point::new(Manifold::cylinder(3), v(&[1.0, 0.0, 5.0])).unwrap();
        let b = tangent_basis(&x).unwrap();
        assert_eq!(b.ncols(), 2);
        assert!(b.row(0).norm() < 1e-14); // null space of (2,0,0)'
    }

    #[test]
    fn thomson_manifold_counts() {
        // 5 particles, first pinned at the north pole, second pinned to the
        // yz-plane: 4 sphere constraints + 4 pins in ambient R^15.
        let man = thomson_manifold(5);
        assert_eq!(man.ambient_dim(), 15);
        assert_eq!(man.constraint_count(), 8);
        assert_eq!(man.tangent_dim(), 7);
    }

    pub(crate) fn thomson_manifold(m: usize) -> Manifold {
        Manifold::product_sphere(
            3,
            m,
            vec![(0, 0.0), (1, 0.0), (2, 1.0), (3, 0.0)],
        )
    }

    #[test]
    fn product_sphere_retract_keeps_pins() {
        let man = thomson_manifold(4);
        let mut rng = ChaCha8Rng::seed_from_u64(19);
        let x = random_point(&man, &mut rng);
        assert_eq!(x.coords()[2], 1.0);
        assert_eq!(x.coords()[3], 0.0);
        let eta = random_tangent(&x, &mut rng);
        let y = retract(&x, &eta.scale(0.3)).unwrap();
        assert_eq!(y.coords()[0], 0.0);
        assert_eq!(y.coords()[2], 1.0);
        assert_eq!(y.coords()[3], 0.0);
        assert!(y.feasibility_violation() < 1e-12);
    }

    #[test]
    fn weighted_sphere_basics() {
        let h2 = 0.04;
        let man = Manifold::weighted_complex_sphere(3, h2);
        assert_eq!(man.ambient_dim(), 18);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = random_point(&man, &mut rng);
        assert!(x.feasibility_violation() < 1e-12);
        let eta = random_tangent(&x, &mut rng);
        let y = retract(&x, &eta).unwrap();
        assert!(y.feasibility_violation() < 1e-12);
        let b = tangent_basis(&x).unwrap();
        let gram = (b.transpose() * &b) * h2;
        assert_relative_eq!(gram, DMatrix::identity(17, 17), epsilon = 1e-12);
    }

    #[test]
    fn distance_on_circle_and_cylinder() {
        let x = sphere_pt(&[1.0, 0.0]);
        let y = sphere_pt(&[0.0, 1.0]);
        assert_relative_eq!(distance(&x, &y), FRAC_PI_2, epsilon = 1e-14);
        let man = Manifold::cylinder(3);
        let a = Point::new(man.clone(), v(&[1.0, 0.0, 0.0])).unwrap();
        let b = Point::new(man, v(&[0.0, 1.0, 2.0])).unwrap();
        assert_relative_eq!(
            distance(&a, &b),
            (FRAC_PI_2 * FRAC_PI_2 + 4.0).sqrt(),
            epsilon = 1e-14
        );
    }

    #[test]
    fn spectral_bounds_validate() {
        assert!(SpectralBounds::new(1.0, 4.0).is_ok());
        assert!(SpectralBounds::new(0.0, 1.0).is_err());
        assert!(SpectralBounds::new(2.0, 1.0).is_err());
        assert_relative_eq!(SpectralBounds::new(2.0, 8.0).unwrap().kappa(), 4.0);
    }

    fn arb_manifold() -> impl Strategy<Value = Manifold> {
        prop_oneof![
            Just(Manifold::euclidean(3)),
            Just(Manifold::unit_sphere(4)),
            Just(Manifold::cylinder(4)),
            Just(thomson_manifold(3)),
            Just(Manifold::stiefel(5, 2)),
            Just(Manifold::weighted_complex_sphere(2, 0.09)),
        ]
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn projection_lands_in_tangent_space(man in arb_manifold(), seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_point(&man, &mut rng);
            let w = DVector::from_fn(man.ambient_dim(), |_, _| rng.sample::<f64, _>(StandardNormal));
            let p = tangent_project(&x, &w).unwrap();
            prop_assert!(p.tangency_residual() <= 1e-10 * (1.0 + p.comps().norm()));
        }

        #[test]
        fn projection_is_self_adjoint(man in arb_manifold(), seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_point(&man, &mut rng);
            let d = man.ambient_dim();
            let w1 = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let w2 = DVector::from_fn(d, |_, _| rng.sample::<f64, _>(StandardNormal));
            let p1 = tangent_project(&x, &w1).unwrap();
            let p2 = tangent_project(&x, &w2).unwrap();
            let lhs = p1.comps().dot(&w2);
            let rhs = w1.dot(p2.comps());
            prop_assert!((lhs - rhs).abs() <= 1e-12 * (1.0 + lhs.abs().max(rhs.abs())));
        }

        #[test]
        fn retraction_stays_feasible(man in arb_manifold(), seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_point(&man, &mut rng);
            let t = random_tangent(&x, &mut rng);
            let t = if t.norm() > 1.0 { t.scale(1.0 / t.norm()) } else { t };
            let y = retract(&x, &t).unwrap();
            prop_assert!(y.feasibility_violation() <= man.feas_tol());
        }

        #[test]
        fn retraction_agrees_to_first_order(man in arb_manifold(), seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_point(&man, &mut rng);
            let mut t = random_tangent(&x, &mut rng);
            let nrm = t.norm();
            prop_assume!(nrm > 1e-6);
            t = t.scale(1.0 / nrm);
            let s = 1e-4;
            let y = retract(&x, &t.scale(s)).unwrap();
            let lin = x.coords() + t.comps() * s;
            let dev = man.norm(&(y.coords() - lin)) / s;
            prop_assert!(dev < 1e-3);
        }

        #[test]
        fn transport_preserves_tangency(man in arb_manifold(), seed in 0u64..1000) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let x = random_point(&man, &mut rng);
            let eta = random_tangent(&x, &mut rng);
            let vv = random_tangent(&x, &mut rng);
            let t = transport(&x, &eta, &vv).unwrap();
            prop_assert!(t.tangency_residual() <= 1e-9 * (1.0 + t.comps().norm()));
        }
    }
}
