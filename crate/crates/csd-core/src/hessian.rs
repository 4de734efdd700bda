//! Riemannian gradient and Hessian evaluation.
//!
//! The gradient is the tangent projection of the (metric-rescaled) Euclidean
//! gradient. The Hessian-vector product is assembled either from analytic
//! ambient second derivatives plus the constraint-curvature correction,
//!
//!   hess f(x)[v] = P(x) (hess_e f(x) v - hess_e C(x)[v] (A'A)^{-1} A' grad_e f(x)),
//!
//! or, when no analytic Hessian is available, by central differences of the
//! Riemannian gradient along retraction curves, transported back to the base
//! point before projecting.

use nalgebra::{DMatrix, DVector};

use crate::error::{CsdError, Result};
use crate::geometry::{
    retract, tangent_basis, tangent_project, transport_back, Point, SpectralBounds, TangentVector,
};
use crate::problems::SaddleProblem;
use crate::reflector::TangentOperator;

/// How Hessian-vector products are evaluated.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum HessMode {
    Analytic,
    FiniteDifference { epsilon: f64 },
}

/// Default relative step for finite-difference products.
pub const DEFAULT_FD_EPSILON: f64 = 1e-6;

/// Evaluates Riemannian Hessian-vector products for one problem.
pub struct HessianOracle<'a> {
    problem: &'a SaddleProblem,
    mode: HessMode,
}

impl<'a> HessianOracle<'a> {
    /// Analytic mode; fails if the problem has no closed-form Hessian.
    pub fn analytic(problem: &'a SaddleProblem) -> Result<Self> {
        if !problem.has_analytic_hess() {
            return Err(CsdError::InvalidConfig(format!(
                "problem {} has no analytic Hessian",
                problem.name()
            )));
        }
        Ok(Self { problem, mode: HessMode::Analytic })
    }

    /// Central-difference mode with relative step `epsilon`.
    pub fn finite_difference(problem: &'a SaddleProblem, epsilon: f64) -> Result<Self> {
        if !(1e-8..=1e-4).contains(&epsilon) {
            return Err(CsdError::InvalidConfig(format!(
                "finite-difference epsilon {epsilon:.3e} outside [1e-8, 1e-4]"
            )));
        }
        Ok(Self { problem, mode: HessMode::FiniteDifference { epsilon } })
    }

    /// Analytic when the problem provides one, otherwise central differences
    /// with the default step.
    pub fn for_problem(problem: &'a SaddleProblem) -> Self {
        if problem.has_analytic_hess() {
            Self { problem, mode: HessMode::Analytic }
        } else {
            Self {
                problem,
                mode: HessMode::FiniteDifference { epsilon: DEFAULT_FD_EPSILON },
            }
        }
    }

    pub fn mode(&self) -> HessMode {
        self.mode
    }

    pub fn problem(&self) -> &SaddleProblem {
        self.problem
    }

    /// hess f(x)[v]; linear in v, tangent at x.
    pub fn hess_vec(&self, x: &Point, v: &TangentVector) -> Result<TangentVector> {
        if v.base() != x {
            return Err(CsdError::BaseMismatch);
        }
        let out = self.hess_vec_comps(x, v.comps())?;
        Ok(TangentVector::new_unchecked(x.clone(), out))
    }

    /// Operator handle at a fixed point, for the reflector Euler step.
    pub fn at<'b>(&'b self, x: &'b Point) -> HessianAt<'b> {
        HessianAt { oracle: self, x }
    }

    pub(crate) fn hess_vec_comps(&self, x: &Point, v: &DVector<f64>) -> Result<DVector<f64>> {
        let man = x.manifold();
        let nrm = man.norm(v);
        if nrm == 0.0 {
            return Ok(DVector::zeros(v.len()));
        }
        if nrm < 1e-14 {
            return Err(CsdError::ZeroDirection);
        }
        match self.mode {
            HessMode::Analytic => {
                let weight = man.metric_weight();
                let grad_e = self.problem.euclid_grad(x.coords());
                let mut raw = self
                    .problem
                    .euclid_hess_vec(x.coords(), v)
                    .expect("analytic mode requires a Hessian");
                let m = man.constraint_count();
                if m > 0 {
                    let a = man.constraint_jacobian(x.coords());
                    let ata = a.transpose() * &a;
                    let rhs = a.transpose() * &grad_e;
                    let mult = ata
                        .cholesky()
                        .ok_or(CsdError::RankDeficientConstraints { cond: f64::INFINITY })?
                        .solve(&rhs);
                    raw -= man.constraint_hess_vec(x.coords(), v) * mult;
                }
                Ok(tangent_project(x, &(raw / weight))?.comps().clone())
            }
            HessMode::FiniteDifference { epsilon } => {
                let u = v / nrm;
                let s = epsilon * (1.0 + man.norm(x.coords()));
                let step = TangentVector::new_unchecked(x.clone(), &u * s);
                let back = TangentVector::new_unchecked(x.clone(), &u * (-s));
                let xp = retract(x, &step)?;
                let xm = retract(x, &back)?;
                let gp = riemannian_grad(self.problem, &xp)?;
                let gm = riemannian_grad(self.problem, &xm)?;
                let gbp = transport_back(x, &step, &xp, gp.comps())?;
                let gbm = transport_back(x, &back, &xm, gm.comps())?;
                let diff = (gbp.comps() - gbm.comps()) / (2.0 * s);
                Ok(tangent_project(x, &diff)?.comps() * nrm)
            }
        }
    }
}

/// Hessian action bound to one evaluation point.
pub struct HessianAt<'a> {
    oracle: &'a HessianOracle<'a>,
    x: &'a Point,
}

impl TangentOperator for HessianAt<'_> {
    fn base(&self) -> &Point {
        self.x
    }

    fn apply(&self, w: &DVector<f64>) -> Result<DVector<f64>> {
        self.oracle.hess_vec_comps(self.x, w)
    }
}

/// grad f(x) = P(x) grad_e f(x) (with the metric rescaling for weighted
/// manifolds).
pub fn riemannian_grad(problem: &SaddleProblem, x: &Point) -> Result<TangentVector> {
    let g = problem.euclid_grad(x.coords()) / x.manifold().metric_weight();
    tangent_project(x, &g)
}

/// Eigenvalues of the Riemannian Hessian restricted to the tangent space
/// (all d-m of them, ascending) and the frame of the k requested smallest
/// eigenvectors lifted to ambient coordinates.
#[derive(Clone, Debug)]
pub struct EigenResult {
    pub values: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

impl EigenResult {
    /// mu/L bounds of the absolute spectrum, ignoring eigenvalues inside
    /// `zero_band` (symmetry modes).
    pub fn spectral_bounds(&self, zero_band: f64) -> Result<SpectralBounds> {
        let mut mu = f64::INFINITY;
        let mut l = 0.0_f64;
        for &v in &self.values {
            let a = v.abs();
            if a <= zero_band {
                continue;
            }
            mu = mu.min(a);
            l = l.max(a);
        }
        SpectralBounds::new(mu, l)
    }
}

struct TangentSpectrum {
    values: Vec<f64>,
    basis: DMatrix<f64>,
    vecs: DMatrix<f64>,
}

fn tangent_spectrum(oracle: &HessianOracle, x: &Point) -> Result<TangentSpectrum> {
    let weight = x.manifold().metric_weight();
    let b = tangent_basis(x)?;
    let tdim = b.ncols();
    let d = b.nrows();
    let mut hb = DMatrix::zeros(d, tdim);
    for j in 0..tdim {
        let col = b.column(j).into_owned();
        hb.set_column(j, &oracle.hess_vec_comps(x, &col)?);
    }
    let mat = {
        let raw = (b.transpose() * hb) * weight;
        (&raw + raw.transpose()) * 0.5
    };
    let eig = mat.symmetric_eigen();
    let mut idx: Vec<usize> = (0..tdim).collect();
    idx.sort_by(|&a, &c| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[c]));
    let values: Vec<f64> = idx.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vecs = DMatrix::zeros(tdim, tdim);
    for (j, &i) in idx.iter().enumerate() {
        vecs.set_column(j, &eig.eigenvectors.column(i));
    }
    Ok(TangentSpectrum { values, basis: b, vecs })
}

/// Dense eigensolve of the tangent-restricted Hessian; returns all
/// eigenvalues ascending and the k most unstable directions.
pub fn exact_unstable_eigs(oracle: &HessianOracle, x: &Point, k: usize) -> Result<EigenResult> {
    let tdim = x.manifold().tangent_dim();
    if k + 1 > tdim {
        return Err(CsdError::InvalidConfig(format!(
            "saddle index k = {k} needs tangent dimension >= k + 1 = {}, have {tdim}",
            k + 1
        )));
    }
    let spec = tangent_spectrum(oracle, x)?;
    if k >= 1 {
        let gap = spec.values[k] - spec.values[k - 1];
        if gap < 1e-10 {
            return Err(CsdError::EigengapCollapse { k, k1: k + 1, gap });
        }
    }
    let vectors = &spec.basis * spec.vecs.columns(0, k);
    Ok(EigenResult { values: spec.values, vectors })
}

/// Morse-index report: negative eigenvalues, with a band around zero
/// reported separately (symmetry modes such as a global phase).
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SaddleIndexReport {
    pub index: usize,
    pub near_zero: usize,
}

/// Counts eigenvalues below -zero_band with zero_band = 1e-8 (1 + |H|).
/// Advisory unless the gradient norm is small; warns otherwise.
pub fn saddle_index(oracle: &HessianOracle, x: &Point) -> Result<SaddleIndexReport> {
    saddle_index_with_band(oracle, x, None)
}

/// Same with an explicit zero band (useful when symmetry modes are only
/// resolved to the convergence tolerance of the run).
pub fn saddle_index_with_band(
    oracle: &HessianOracle,
    x: &Point,
    zero_band: Option<f64>,
) -> Result<SaddleIndexReport> {
    let gn = riemannian_grad(oracle.problem(), x)?.norm();
    if gn > 1e-6 {
        log::warn!(
            "saddle_index at a point with |grad| = {gn:.3e} > 1e-6; result is advisory"
        );
    }
    let spec = tangent_spectrum(oracle, x)?;
    let l_hat = spec.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let band = zero_band.unwrap_or(1e-8 * (1.0 + l_hat));
    let index = spec.values.iter().filter(|&&v| v < -band).count();
    let near_zero = spec.values.iter().filter(|&&v| v.abs() <= band).count();
    Ok(SaddleIndexReport { index, near_zero })
}
