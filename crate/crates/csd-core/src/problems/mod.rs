//! Benchmark objectives: polynomials on the sphere and cylinder, the Thomson
//! particle energy, the Rayleigh quotient on the Stiefel manifold, the
//! Gross-Pitaevskii functional of a trapped condensate, and a diagonal
//! quadratic used as a rate-theory fixture.

mod bec;
mod polynomials;
mod rayleigh;
mod thomson;

pub use bec::{bec, phase_mode, write_field_dump};
pub use polynomials::{cylinder_poly, sphere_poly};
pub use rayleigh::{max_principal_angle, rayleigh_stiefel};
pub use thomson::{check_separation, coplanarity_defect, ring_configuration, thomson, thomson_with_exponent};

use nalgebra::{DMatrix, DVector};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{CsdError, Result};
use crate::geometry::{
    random_tangent, random_tangent_frame, retract, Manifold, ManifoldKind, Point, TangentVector,
};

type EnergyFn = Box<dyn Fn(&DVector<f64>) -> f64 + Send + Sync>;
type GradFn = Box<dyn Fn(&DVector<f64>) -> DVector<f64> + Send + Sync>;
type HessVecFn = Box<dyn Fn(&DVector<f64>, &DVector<f64>) -> DVector<f64> + Send + Sync>;

/// Which benchmark family a problem instance belongs to; drives
/// initial-condition descriptors and CLI defaults.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ProblemFamily {
    SpherePoly,
    CylinderPoly,
    Thomson,
    Rayleigh,
    Bec,
    Quadratic,
}

/// The known saddle a run is compared against, when one exists in closed
/// form. Stiefel targets are subspaces: any orthonormal basis of the span is
/// the same critical point.
#[derive(Clone, Debug)]
pub enum KnownTarget {
    Point(DVector<f64>),
    Subspace(DMatrix<f64>),
}

/// Objective + geometry bundle: everything a saddle run needs.
pub struct SaddleProblem {
    name: String,
    family: ProblemFamily,
    manifold: Manifold,
    energy: EnergyFn,
    euclid_grad: GradFn,
    euclid_hess_vec: Option<HessVecFn>,
    known_saddle: Option<KnownTarget>,
    target_index: usize,
    params: Vec<(&'static str, f64)>,
}

impl SaddleProblem {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn family(&self) -> ProblemFamily {
        self.family
    }

    pub fn manifold(&self) -> &Manifold {
        &self.manifold
    }

    /// Index of the saddle the benchmark targets (the run's k).
    pub fn target_index(&self) -> usize {
        self.target_index
    }

    pub fn energy(&self, x: &Point) -> f64 {
        (self.energy)(x.coords())
    }

    /// Energy as a function of raw ambient coordinates; defined off the
    /// manifold too, which the finite-difference gradient checks rely on.
    pub fn energy_raw(&self, coords: &DVector<f64>) -> f64 {
        (self.energy)(coords)
    }

    /// Gradient of the energy with respect to raw ambient coordinates.
    pub fn euclid_grad(&self, coords: &DVector<f64>) -> DVector<f64> {
        (self.euclid_grad)(coords)
    }

    pub fn has_analytic_hess(&self) -> bool {
        self.euclid_hess_vec.is_some()
    }

    /// Ambient Hessian-vector product hess f(x) v, when available in closed
    /// form.
    pub fn euclid_hess_vec(&self, coords: &DVector<f64>, v: &DVector<f64>) -> Option<DVector<f64>> {
        self.euclid_hess_vec.as_ref().map(|h| h(coords, v))
    }

    pub fn known_saddle(&self) -> Option<&KnownTarget> {
        self.known_saddle.as_ref()
    }

    /// Named numeric parameters the problem was built with (grid size,
    /// coupling strengths, seeds); recorded into run metadata.
    pub fn params(&self) -> &[(&'static str, f64)] {
        &self.params
    }

    pub fn param(&self, name: &str) -> Option<f64> {
        self.params.iter().find(|(n, _)| *n == name).map(|(_, v)| *v)
    }

    pub fn known_saddle_point(&self) -> Option<Point> {
        match &self.known_saddle {
            Some(KnownTarget::Point(c)) => {
                Some(Point::new_unchecked(self.manifold.clone(), c.clone()))
            }
            Some(KnownTarget::Subspace(q)) => Some(Point::new_unchecked(
                self.manifold.clone(),
                DVector::from_column_slice(q.as_slice()),
            )),
            None => None,
        }
    }

    /// Distance of x to the known saddle: geodesic distance for point
    /// targets, largest principal angle for subspace targets.
    pub fn error_to_known(&self, x: &Point) -> Option<f64> {
        match &self.known_saddle {
            Some(KnownTarget::Point(c)) => {
                let target = Point::new_unchecked(self.manifold.clone(), c.clone());
                Some(crate::geometry::distance(x, &target))
            }
            Some(KnownTarget::Subspace(q)) => {
                let (n, p) = match self.manifold.kind() {
                    ManifoldKind::Stiefel { n, p } => (*n, *p),
                    _ => return None,
                };
                let xm = DMatrix::from_column_slice(n, p, x.coords().as_slice());
                Some(max_principal_angle(&xm, q))
            }
            None => None,
        }
    }
}

/// Quadratic saddle f(x) = x' D x / 2 on Euclidean space; the test bed for
/// the discrete rate theory with the spectrum under full control.
pub fn euclidean_quadratic(diag: &[f64]) -> SaddleProblem {
    let d = diag.len();
    assert!(d >= 1);
    let diag_e: DVector<f64> = DVector::from_column_slice(diag);
    let diag_g = diag_e.clone();
    let diag_h = diag_e.clone();
    let index = diag.iter().filter(|&&v| v < 0.0).count();
    SaddleProblem {
        name: format!("quadratic(d={d})"),
        family: ProblemFamily::Quadratic,
        manifold: Manifold::euclidean(d),
        energy: Box::new(move |x| 0.5 * x.dot(&x.component_mul(&diag_e))),
        euclid_grad: Box::new(move |x| x.component_mul(&diag_g)),
        euclid_hess_vec: Some(Box::new(move |_, v| v.component_mul(&diag_h))),
        known_saddle: Some(KnownTarget::Point(DVector::zeros(d))),
        target_index: index,
        params: vec![("dim", d as f64)],
    }
}

pub(crate) struct ProblemBuilder {
    inner: SaddleProblem,
}

impl ProblemBuilder {
    pub(crate) fn hess(mut self, h: HessVecFn) -> Self {
        self.inner.euclid_hess_vec = Some(h);
        self
    }

    pub(crate) fn target(mut self, t: KnownTarget) -> Self {
        self.inner.known_saddle = Some(t);
        self
    }

    pub(crate) fn index(mut self, k: usize) -> Self {
        self.inner.target_index = k;
        self
    }

    pub(crate) fn param(mut self, name: &'static str, value: f64) -> Self {
        self.inner.params.push((name, value));
        self
    }

    pub(crate) fn build(self) -> SaddleProblem {
        self.inner
    }
}

pub(crate) fn builder(
    name: String,
    family: ProblemFamily,
    manifold: Manifold,
    energy: EnergyFn,
    euclid_grad: GradFn,
) -> ProblemBuilder {
    ProblemBuilder {
        inner: SaddleProblem {
            name,
            family,
            manifold,
            energy,
            euclid_grad,
            euclid_hess_vec: None,
            known_saddle: None,
            target_index: 0,
            params: Vec::new(),
        },
    }
}

/// Deterministic starting data for a run: a feasible point and, for problems
/// where the eigensolve-based default would be wasteful, an initial frame of
/// unstable directions.
pub fn initial_condition(
    problem: &SaddleProblem,
    descriptor: &str,
    seed: u64,
) -> Result<(Point, Option<DMatrix<f64>>)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match (problem.family(), descriptor) {
        (_, "random") => Ok((crate::geometry::random_point(problem.manifold(), &mut rng), None)),
        (ProblemFamily::SpherePoly, "near-saddle") => {
            let target = problem.known_saddle_point().expect("sphere saddle is known");
            let t = unit_tangent(&target, &mut rng);
            let coords = target.coords() + t.comps() * 0.1;
            let coords = &coords / coords.norm();
            Ok((Point::new(problem.manifold().clone(), coords)?, None))
        }
        (
            ProblemFamily::CylinderPoly | ProblemFamily::Rayleigh | ProblemFamily::Quadratic,
            "near-saddle",
        ) => {
            let target = problem.known_saddle_point().expect("saddle is known");
            let t = unit_tangent(&target, &mut rng);
            let x = retract(&target, &t.scale(0.1))?;
            Ok((x, None))
        }
        (ProblemFamily::Thomson, "upper-half") => {
            thomson::upper_half_start(problem, &mut rng).map(|x| (x, None))
        }
        (ProblemFamily::Bec, "two-boundary-vortices") => {
            let x = bec::two_boundary_vortices(problem)?;
            let frame = random_tangent_frame(&x, problem.target_index(), &mut rng);
            Ok((x, Some(frame)))
        }
        _ => Err(CsdError::UnknownDescriptor(descriptor.to_string())),
    }
}

/// Default initial-condition descriptor for each problem family.
pub fn default_descriptor(family: ProblemFamily) -> &'static str {
    match family {
        ProblemFamily::SpherePoly
        | ProblemFamily::CylinderPoly
        | ProblemFamily::Rayleigh
        | ProblemFamily::Quadratic => "near-saddle",
        ProblemFamily::Thomson => "upper-half",
        ProblemFamily::Bec => "two-boundary-vortices",
    }
}

fn unit_tangent<R: rand::Rng + ?Sized>(x: &Point, rng: &mut R) -> TangentVector {
    let t = random_tangent(x, rng);
    let n = t.norm();
    t.scale(1.0 / n)
}


#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::tangent_project;
    use approx::assert_relative_eq;

    /// Central-difference gradient check against the raw energy.
    pub(crate) fn grad_matches_fd(problem: &SaddleProblem, x: &Point, tol: f64) {
        let coords = x.coords();
        let g = problem.euclid_grad(coords);
        let mut rng = ChaCha8Rng::seed_from_u64(99);
        let d = coords.len();
        // probe a handful of random directions rather than all coordinates
        for _ in 0..8 {
            let dir = DVector::<f64>::from_fn(d, |_, _| {
                rand::Rng::sample::<f64, _>(&mut rng, rand_distr::StandardNormal)
            });
            let dir = &dir / dir.norm();
            let h = 1e-6 * (1.0 + coords.norm());
            let ep = problem.energy_raw(&(coords + &dir * h));
            let em = problem.energy_raw(&(coords - &dir * h));
            let fd = (ep - em) / (2.0 * h);
            let an = g.dot(&dir);
            let scale = an.abs().max(fd.abs()).max(1e-8);
            assert!(
                (fd - an).abs() <= tol * scale,
                "gradient mismatch: fd = {fd:.9e}, analytic = {an:.9e}"
            );
        }
    }

    #[test]
    fn quadratic_energy_and_grad() {
        let p = euclidean_quadratic(&[-1.0, 2.0]);
        let x = Point::new(p.manifold().clone(), DVector::from_column_slice(&[3.0, 1.0])).unwrap();
        assert_relative_eq!(p.energy(&x), 0.5 * (-9.0 + 2.0), epsilon = 1e-14);
        assert_eq!(p.target_index(), 1);
        grad_matches_fd(&p, &x, 1e-5);
    }

    #[test]
    fn unknown_descriptor_is_rejected() {
        let p = sphere_poly(2.0);
        assert!(matches!(
            initial_condition(&p, "no-such-thing", 0),
            Err(CsdError::UnknownDescriptor(_))
        ));
    }

    #[test]
    fn near_saddle_start_is_feasible_and_deterministic() {
        let p = sphere_poly(0.1);
        let (x1, _) = initial_condition(&p, "near-saddle", 42).unwrap();
        let (x2, _) = initial_condition(&p, "near-saddle", 42).unwrap();
        assert_eq!(x1.coords(), x2.coords());
        assert!(x1.feasibility_violation() <= p.manifold().feas_tol());
        let target = p.known_saddle_point().unwrap();
        assert!(crate::geometry::distance(&x1, &target) < 0.2);
    }

    #[test]
    fn projection_of_grad_vanishes_nowhere_generic() {
        let p = cylinder_poly();
        let (x, _) = initial_condition(&p, "near-saddle", 3).unwrap();
        let g = p.euclid_grad(x.coords());
        let t = tangent_project(&x, &g).unwrap();
        assert!(t.norm() > 0.0);
    }
}
