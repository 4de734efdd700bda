//! The four discrete schemes and their rate theory.
//!
//! One iteration moves the point along the reflected gradient (plus momentum)
//! and then refreshes the unstable directions:
//!
//!   rbar   = -dt (I - 2VV') grad f(x) + gamma r
//!   x_new  = Ret_x(rbar)
//!   r_new  = P_{x -> x_new} rbar                  (momentum runs only)
//!   V_new  = exact eigensolve at x_new             (Exact mode)
//!        or  orth(R + dt (H - RHR)) carried to x_new (EulerReflector mode)
//!
//! gamma = 0 degenerates to plain CSD; both methods share the code path, so
//! the gamma = 0 trajectories coincide bitwise.
//!
//! The heavy-ball parameter theory lives here too: the optimal step/momentum
//! pair, the eigenvalues of the 2x2 per-mode iteration blocks, the predicted
//! spectral rates, and the least-squares rate estimator used to compare
//! experiment against prediction.

use std::time::Instant;

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{CsdError, Result};
use crate::geometry::{retract, transport_comps, Point, SpectralBounds, TangentVector};
use crate::hessian::{exact_unstable_eigs, riemannian_grad, HessianOracle};
use crate::problems::SaddleProblem;
use crate::reflector::{euler_reflector_step, orth, transport_reflector, Reflector};

/// Energy magnitude beyond which a run is declared divergent.
const DIVERGENCE_ENERGY: f64 = 1e12;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    Csd,
    Mcsd,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EigMode {
    /// Dense eigensolve of the tangent Hessian at every iterate.
    Exact,
    /// One Euler step of the reflector dynamics plus nearest-point
    /// projection; no eigensolve after initialization.
    EulerReflector,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ErrorMetric {
    /// Geodesic distance (or largest principal angle) to the known saddle.
    GeodesicToKnown,
    /// Riemannian gradient norm; the fallback when no saddle is known.
    GradNorm,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub method: Method,
    pub eig_mode: EigMode,
    pub dt: f64,
    pub gamma: f64,
    pub k: usize,
    pub max_iters: usize,
    pub grad_tol: f64,
    pub error_metric: ErrorMetric,
    pub seed: u64,
    /// Track |P_n - P*_n| against the exact unstable projector each step
    /// (one eigensolve per iteration; diagnostics only).
    pub record_projector_error: bool,
}

impl RunConfig {
    pub fn new(method: Method, dt: f64, gamma: f64, k: usize) -> Self {
        Self {
            method,
            eig_mode: EigMode::Exact,
            dt,
            gamma,
            k,
            max_iters: 10_000,
            grad_tol: 1e-8,
            error_metric: ErrorMetric::GradNorm,
            seed: 0,
            record_projector_error: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0) {
            return Err(CsdError::InvalidConfig(format!("dt must be positive, got {}", self.dt)));
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(CsdError::InvalidConfig(format!(
                "gamma must lie in [0, 1), got {}",
                self.gamma
            )));
        }
        match self.method {
            Method::Csd if self.gamma != 0.0 => Err(CsdError::InvalidConfig(
                "CSD requires gamma = 0 (use MCSD for momentum)".into(),
            )),
            Method::Mcsd if self.gamma == 0.0 => Err(CsdError::InvalidConfig(
                "MCSD requires gamma > 0 (gamma = 0 is CSD)".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// Full state of one iterate.
#[derive(Clone, Debug)]
pub struct IterateState {
    pub x: Point,
    pub r: TangentVector,
    pub reflector: Reflector,
    pub n: usize,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Status {
    Converged,
    MaxIters,
    Diverged,
    EigengapCollapse,
}

impl Status {
    pub fn as_str(&self) -> &'static str {
        match self {
            Status::Converged => "converged",
            Status::MaxIters => "max-iters",
            Status::Diverged => "diverged",
            Status::EigengapCollapse => "eigengap-collapse",
        }
    }
}

#[derive(Clone, Copy, Debug)]
pub struct RunRow {
    pub n: usize,
    pub error: f64,
    pub grad_norm: f64,
    pub energy: f64,
    pub constraint_violation: f64,
    pub wall_time_s: f64,
}

/// Per-iteration trace of a run.
#[derive(Clone, Debug)]
pub struct RunRecord {
    pub rows: Vec<RunRow>,
    pub status: Status,
    /// |P_n - P*_n| per recorded row, when requested.
    pub projector_errors: Option<Vec<f64>>,
}

impl RunRecord {
    /// First iteration at which the error column drops to `threshold`.
    pub fn iterations_to_error(&self, threshold: f64) -> Option<usize> {
        self.rows.iter().find(|r| r.error <= threshold).map(|r| r.n)
    }

    pub fn final_grad_norm(&self) -> f64 {
        self.rows.last().map(|r| r.grad_norm).unwrap_or(f64::NAN)
    }
}

pub struct RunOutput {
    pub record: RunRecord,
    pub state: IterateState,
}

/// Shared x/r update of all four schemes.
fn reflected_update(
    problem: &SaddleProblem,
    state: &IterateState,
    config: &RunConfig,
) -> Result<(TangentVector, Point, TangentVector)> {
    let g = riemannian_grad(problem, &state.x)?;
    let rg = state.reflector.apply(&g)?;
    let rbar_comps = rg.comps() * (-config.dt) + state.r.comps() * config.gamma;
    let rbar = TangentVector::new_unchecked(state.x.clone(), rbar_comps);
    let x_new = retract(&state.x, &rbar)?;
    let r_new = match config.method {
        Method::Csd => TangentVector::zero(x_new.clone()),
        Method::Mcsd => TangentVector::new_unchecked(
            x_new.clone(),
            transport_comps(&state.x, rbar.comps(), rbar.comps(), x_new.coords()),
        ),
    };
    Ok((rbar, x_new, r_new))
}

fn step_exact(
    problem: &SaddleProblem,
    oracle: &HessianOracle,
    state: &IterateState,
    config: &RunConfig,
) -> Result<IterateState> {
    let (_, x_new, r_new) = reflected_update(problem, state, config)?;
    let eig = exact_unstable_eigs(oracle, &x_new, config.k)?;
    let reflector = Reflector::new(x_new.clone(), eig.vectors)?;
    Ok(IterateState { x: x_new, r: r_new, reflector, n: state.n + 1 })
}

fn step_euler(
    problem: &SaddleProblem,
    oracle: &HessianOracle,
    state: &IterateState,
    config: &RunConfig,
    l_estimate: Option<f64>,
) -> Result<IterateState> {
    let (rbar, x_new, r_new) = reflected_update(problem, state, config)?;
    let h = oracle.at(&state.x);
    let rbar_op = euler_reflector_step(&state.reflector, &h, config.dt, l_estimate)?;
    let rhat = orth(&rbar_op, config.k)?;
    let reflector = transport_reflector(&rhat, &x_new, &rbar)?;
    Ok(IterateState { x: x_new, r: r_new, reflector, n: state.n + 1 })
}

fn expect_mode(config: &RunConfig, method: Method, eig: EigMode) -> Result<()> {
    if config.method != method || config.eig_mode != eig {
        return Err(CsdError::InvalidConfig(format!(
            "step called with mismatched config (method {:?}, eig {:?})",
            config.method, config.eig_mode
        )));
    }
    Ok(())
}

pub fn step_csd_exact(
    problem: &SaddleProblem,
    oracle: &HessianOracle,
    state: &IterateState,
    config: &RunConfig,
) -> Result<IterateState> {
    expect_mode(config, Method::Csd, EigMode::Exact)?;
    step_exact(problem, oracle, state, config)
}

pub fn step_mcsd_exact(
    problem: &SaddleProblem,
    oracle: &HessianOracle,
    state: &IterateState,
    config: &RunConfig,
) -> Result<IterateState> {
    expect_mode(config, Method::Mcsd, EigMode::Exact)?;
    step_exact(problem, oracle, state, config)
}

pub fn step_csd_euler(
    problem: &SaddleProblem,
    oracle: &HessianOracle,
    state: &IterateState,
    config: &RunConfig,
) -> Result<IterateState> {
    expect_mode(config, Method::Csd, EigMode::EulerReflector)?;
    step_euler(problem, oracle, state, config, None)
}

pub fn step_mcsd_euler(
    problem: &SaddleProblem,
    oracle: &HessianOracle,
    state: &IterateState,
    config: &RunConfig,
) -> Result<IterateState> {
    expect_mode(config, Method::Mcsd, EigMode::EulerReflector)?;
    step_euler(problem, oracle, state, config, None)
}

/// Heavy-ball parameters minimizing the spectral radius of the momentum
/// iteration over |lambda| in [mu, L]:
/// dt* = 4 / (sqrt(L) + sqrt(mu))^2, gamma* = ((sqrt(L)-sqrt(mu))/(sqrt(L)+sqrt(mu)))^2.
pub fn optimal_heavy_ball(bounds: &SpectralBounds) -> (f64, f64) {
    let (sl, sm) = (bounds.l.sqrt(), bounds.mu.sqrt());
    let dt = 4.0 / ((sl + sm) * (sl + sm));
    let gamma = ((sl - sm) / (sl + sm)).powi(2);
    (dt, gamma)
}

/// Eigenvalues of the per-mode 2x2 block [[1 - dt|l|, g], [-dt|l|, g]]:
/// the roots of z^2 - (1 + g - dt|l|) z + g.
pub fn hb_block_eigenvalues(abs_lambda: f64, dt: f64, gamma: f64) -> (Complex64, Complex64) {
    let b = 1.0 + gamma - dt * abs_lambda;
    let mut disc = b * b - 4.0 * gamma;
    // a discriminant that vanishes up to rounding is a double root; taking
    // sqrt of the noise would inflate the modulus by ~1e-8
    if disc.abs() <= 1e-14 * (b * b + 4.0 * gamma) {
        disc = 0.0;
    }
    if disc >= 0.0 {
        let sq = disc.sqrt();
        (
            Complex64::new(0.5 * (b + sq), 0.0),
            Complex64::new(0.5 * (b - sq), 0.0),
        )
    } else {
        let sq = (-disc).sqrt();
        (
            Complex64::new(0.5 * b, 0.5 * sq),
            Complex64::new(0.5 * b, -0.5 * sq),
        )
    }
}

fn hb_radius(abs_lambda: f64, dt: f64, gamma: f64) -> f64 {
    let (a, b) = hb_block_eigenvalues(abs_lambda, dt, gamma);
    a.norm().max(b.norm())
}

/// Sharp spectral prediction of the linear tail rate. For CSD this is
/// max |1 - dt |lambda|| over the spectrum endpoints; for MCSD the largest
/// block-eigenvalue modulus at the endpoints (the maximum over [mu, L] is
/// attained there).
pub fn predicted_rate(method: Method, bounds: &SpectralBounds, dt: f64, gamma: f64) -> f64 {
    match method {
        Method::Csd => {
            if dt > 1.0 / bounds.l {
                log::warn!(
                    "CSD rate prediction with dt = {dt:.3e} > 1/L = {:.3e}",
                    1.0 / bounds.l
                );
            }
            let lo = (1.0 - dt * bounds.mu).abs();
            let hi = (1.0 - dt * bounds.l).abs();
            lo.max(hi)
        }
        Method::Mcsd => hb_radius(bounds.mu, dt, gamma).max(hb_radius(bounds.l, dt, gamma)),
    }
}

/// Least-squares fit of log(error) against iteration number.
#[derive(Clone, Copy, Debug)]
pub struct RateFit {
    pub rate: f64,
    pub r_squared: f64,
    pub rows_used: usize,
}

/// Fits the tail of the error trace: the last `tail_fraction` of the rows
/// whose error exceeds the 1e-13 rounding floor (at least 20 of them).
pub fn fit_tail_rate(record: &RunRecord, tail_fraction: f64) -> Result<RateFit> {
    let pts: Vec<(f64, f64)> = record
        .rows
        .iter()
        .filter(|r| r.error > 1e-13)
        .map(|r| (r.n as f64, r.error.ln()))
        .collect();
    if pts.len() < 20 {
        return Err(CsdError::InsufficientData { rows: pts.len() });
    }
    let window = ((tail_fraction * pts.len() as f64).ceil() as usize)
        .max(20)
        .min(pts.len());
    let tail = &pts[pts.len() - window..];
    let n = tail.len() as f64;
    let mean_x = tail.iter().map(|p| p.0).sum::<f64>() / n;
    let mean_y = tail.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = tail.iter().map(|p| (p.0 - mean_x) * (p.0 - mean_x)).sum();
    let sxy: f64 = tail.iter().map(|p| (p.0 - mean_x) * (p.1 - mean_y)).sum();
    let syy: f64 = tail.iter().map(|p| (p.1 - mean_y) * (p.1 - mean_y)).sum();
    if sxx == 0.0 {
        return Err(CsdError::InsufficientData { rows: tail.len() });
    }
    let slope = sxy / sxx;
    let r_squared = if syy == 0.0 { 1.0 } else { (sxy * sxy) / (sxx * syy) };
    Ok(RateFit { rate: slope.exp(), r_squared, rows_used: tail.len() })
}

/// Tail convergence factor exp(slope of log-error); deterministic.
pub fn estimate_rate(record: &RunRecord, tail_fraction: f64) -> Result<f64> {
    fit_tail_rate(record, tail_fraction).map(|f| f.rate)
}

/// Drives a full run with the problem's natural Hessian oracle.
pub fn run(
    problem: &SaddleProblem,
    config: &RunConfig,
    x0: Point,
    v0: Option<DMatrix<f64>>,
) -> Result<RunOutput> {
    let oracle = HessianOracle::for_problem(problem);
    run_with_oracle(problem, &oracle, config, x0, v0)
}

/// Drives a full run: records one row per iterate, stops on gradient
/// tolerance, iteration budget, divergence, or eigengap collapse.
pub fn run_with_oracle(
    problem: &SaddleProblem,
    oracle: &HessianOracle,
    config: &RunConfig,
    x0: Point,
    v0: Option<DMatrix<f64>>,
) -> Result<RunOutput> {
    config.validate()?;
    let man = problem.manifold();
    if x0.manifold() != man {
        return Err(CsdError::InvalidConfig("x0 lives on a different manifold".into()));
    }
    let viol = x0.feasibility_violation();
    if viol > man.feas_tol() {
        return Err(CsdError::InvalidConfig(format!(
            "x0 violates constraints by {viol:.3e}"
        )));
    }
    if config.k + 1 > man.tangent_dim() {
        return Err(CsdError::InvalidConfig(format!(
            "k = {} too large for tangent dimension {}",
            config.k,
            man.tangent_dim()
        )));
    }
    if config.error_metric == ErrorMetric::GeodesicToKnown && problem.known_saddle().is_none() {
        return Err(CsdError::InvalidConfig(
            "GeodesicToKnown error metric needs a known saddle".into(),
        ));
    }

    // initial unstable directions: caller-supplied frame, or one eigensolve
    let (frame, l_estimate) = match v0 {
        Some(f) => (f, None),
        None => {
            let eig = exact_unstable_eigs(oracle, &x0, config.k)?;
            let l_hat = eig.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
            (eig.vectors, Some(l_hat))
        }
    };
    if let Some(l) = l_estimate {
        if config.dt > 1.0 / l {
            log::warn!("dt = {:.3e} exceeds 1/L = {:.3e} at x0", config.dt, 1.0 / l);
        }
    }
    let reflector = Reflector::new(x0.clone(), frame)?;
    let mut state = IterateState {
        r: TangentVector::zero(x0.clone()),
        x: x0,
        reflector,
        n: 0,
    };

    let start = Instant::now();
    let mut rows = Vec::new();
    let mut projector_errors = config.record_projector_error.then(Vec::new);
    let status = loop {
        let grad = riemannian_grad(problem, &state.x)?;
        let grad_norm = grad.norm();
        let energy = problem.energy(&state.x);
        let error = match config.error_metric {
            ErrorMetric::GradNorm => grad_norm,
            ErrorMetric::GeodesicToKnown => problem
                .error_to_known(&state.x)
                .expect("validated above"),
        };
        rows.push(RunRow {
            n: state.n,
            error,
            grad_norm,
            energy,
            constraint_violation: state.x.feasibility_violation(),
            wall_time_s: start.elapsed().as_secs_f64(),
        });
        if let Some(pe) = projector_errors.as_mut() {
            let exact = exact_unstable_eigs(oracle, &state.x, config.k)?;
            let exact_refl = Reflector::new(state.x.clone(), exact.vectors)?;
            pe.push(state.reflector.projector_distance(&exact_refl));
        }

        if grad_norm <= config.grad_tol {
            break Status::Converged;
        }
        if !energy.is_finite()
            || energy.abs() > DIVERGENCE_ENERGY
            || state.x.coords().iter().any(|c| !c.is_finite())
        {
            break Status::Diverged;
        }
        if state.n >= config.max_iters {
            break Status::MaxIters;
        }

        let next = match config.eig_mode {
            EigMode::Exact => step_exact(problem, oracle, &state, config),
            EigMode::EulerReflector => step_euler(problem, oracle, &state, config, l_estimate),
        };
        state = match next {
            Ok(s) => s,
            Err(CsdError::EigengapCollapse { .. }) => break Status::EigengapCollapse,
            Err(e) => return Err(e),
        };
    };

    Ok(RunOutput {
        record: RunRecord { rows, status, projector_errors },
        state,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Manifold;
    use crate::hessian::saddle_index;
    use crate::problems::{
        cylinder_poly, euclidean_quadratic, initial_condition, sphere_poly,
    };
    use approx::assert_relative_eq;
    use nalgebra::DVector;

    fn quadratic_state(problem: &SaddleProblem, coords: &[f64]) -> IterateState {
        let x = Point::new(problem.manifold().clone(), DVector::from_column_slice(coords))
            .unwrap();
        let d = coords.len();
        let mut frame = DMatrix::zeros(d, 1);
        frame[(0, 0)] = 1.0;
        IterateState {
            r: TangentVector::zero(x.clone()),
            reflector: Reflector::new(x.clone(), frame).unwrap(),
            x,
            n: 0,
        }
    }

    #[test]
    fn optimal_heavy_ball_closed_forms() {
        let (dt, g) = optimal_heavy_ball(&SpectralBounds::new(1.0, 4.0).unwrap());
        assert_relative_eq!(dt, 4.0 / 9.0, epsilon = 1e-15);
        assert_relative_eq!(g, 1.0 / 9.0, epsilon = 1e-15);

        let (dt, g) = optimal_heavy_ball(&SpectralBounds::new(3.0, 3.0).unwrap());
        assert_relative_eq!(dt, 1.0 / 3.0, epsilon = 1e-15);
        assert_eq!(g, 0.0);

        let (dt, g) = optimal_heavy_ball(&SpectralBounds::new(1.0, 100.0).unwrap());
        assert_relative_eq!(dt, 4.0 / 121.0, epsilon = 1e-15);
        assert_relative_eq!(g, 81.0 / 121.0, epsilon = 1e-12);
    }

    #[test]
    fn hb_block_eigenvalues_examples() {
        // gamma = 0 reduces to the gradient-descent multiplier and 0
        let (a, b) = hb_block_eigenvalues(0.3, 1.0, 0.0);
        assert_relative_eq!(a.re, 0.7, epsilon = 1e-15);
        assert_eq!(b.norm(), 0.0);

        // optimal parameters at an interior eigenvalue: conjugate pair on
        // the circle of radius sqrt(gamma*)
        let bounds = SpectralBounds::new(1.0, 4.0).unwrap();
        let (dt, g) = optimal_heavy_ball(&bounds);
        let (a, b) = hb_block_eigenvalues(2.0, dt, g);
        assert!(a.im != 0.0);
        assert_relative_eq!(a.norm(), g.sqrt(), epsilon = 1e-12);
        assert_relative_eq!(b.norm(), g.sqrt(), epsilon = 1e-12);

        // gamma -> 1 with dt|lambda| -> 0 pins a root at the unit circle
        let (a, _) = hb_block_eigenvalues(1e-12, 1e-3, 1.0 - 1e-12);
        assert_relative_eq!(a.norm(), 1.0, epsilon = 1e-9);
    }

    #[test]
    fn hb_roots_multiply_to_gamma() {
        for (lam, dt, gamma) in [
            (0.5, 0.1, 0.3),
            (7.0, 0.05, 0.9),
            (2.0, 4.0 / 9.0, 1.0 / 9.0),
            (100.0, 0.013, 0.99),
        ] {
            let (a, b) = hb_block_eigenvalues(lam, dt, gamma);
            assert_relative_eq!((a * b).re, gamma, epsilon = 1e-14);
            assert!((a * b).im.abs() <= 1e-14);
        }
    }

    #[test]
    fn optimal_radius_bound_holds_on_grid() {
        let bounds = SpectralBounds::new(0.7, 23.0).unwrap();
        let (dt, g) = optimal_heavy_ball(&bounds);
        let bound = g.sqrt() + 1e-12;
        for i in 0..=100 {
            let lam = bounds.mu + (bounds.l - bounds.mu) * i as f64 / 100.0;
            assert!(hb_radius(lam, dt, g) <= bound);
        }
    }

    #[test]
    fn predicted_rates() {
        let b14 = SpectralBounds::new(1.0, 4.0).unwrap();
        assert_relative_eq!(predicted_rate(Method::Csd, &b14, 0.25, 0.0), 0.75, epsilon = 1e-15);

        let b3 = SpectralBounds::new(1.0, 3.0).unwrap();
        let (dt, g) = optimal_heavy_ball(&b3);
        let rate = predicted_rate(Method::Mcsd, &b3, dt, g);
        let expect = (3.0_f64.sqrt() - 1.0) / (3.0_f64.sqrt() + 1.0);
        assert_relative_eq!(rate, expect, epsilon = 1e-12);

        let b1 = SpectralBounds::new(2.0, 2.0).unwrap();
        let (dt, g) = optimal_heavy_ball(&b1);
        assert!(predicted_rate(Method::Mcsd, &b1, dt, g) < 1e-12);
    }

    fn synthetic_record(errors: &[f64]) -> RunRecord {
        RunRecord {
            rows: errors
                .iter()
                .enumerate()
                .map(|(n, &e)| RunRow {
                    n,
                    error: e,
                    grad_norm: e,
                    energy: 0.0,
                    constraint_violation: 0.0,
                    wall_time_s: 0.0,
                })
                .collect(),
            status: Status::Converged,
            projector_errors: None,
        }
    }

    #[test]
    fn estimate_rate_on_synthetic_series() {
        let geo: Vec<f64> = (0..200).map(|n| 0.5_f64.powi(n)).collect();
        let rec = synthetic_record(&geo);
        assert_relative_eq!(estimate_rate(&rec, 0.5).unwrap(), 0.5, epsilon = 1e-9);

        let wobbly: Vec<f64> = (0..300)
            .map(|n| 3.0 * 0.9_f64.powi(n) * (1.0 + 0.01 * if n % 2 == 0 { 1.0 } else { -1.0 }))
            .collect();
        let rec = synthetic_record(&wobbly);
        let rate = estimate_rate(&rec, 0.5).unwrap();
        assert!((rate - 0.9).abs() < 0.01, "rate = {rate}");

        let flat = vec![0.25; 100];
        let rec = synthetic_record(&flat);
        assert_relative_eq!(estimate_rate(&rec, 0.5).unwrap(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn estimate_rate_needs_enough_rows() {
        let short: Vec<f64> = (0..10).map(|n| 0.5_f64.powi(n)).collect();
        let rec = synthetic_record(&short);
        assert!(matches!(
            estimate_rate(&rec, 0.5),
            Err(CsdError::InsufficientData { .. })
        ));
    }

    #[test]
    fn reflected_step_on_quadratic_matches_hand_map() {
        // f = (-mu a^2 + L b^2)/2 with V = e1: one CSD step scales the
        // coordinates by (1 - dt mu) and (1 - dt L).
        let (mu, l, dt) = (0.5, 3.0, 0.1);
        let p = euclidean_quadratic(&[-mu, l]);
        let o = HessianOracle::analytic(&p).unwrap();
        let state = quadratic_state(&p, &[0.8, -0.6]);
        let config = RunConfig::new(Method::Csd, dt, 0.0, 1);
        let next = step_csd_exact(&p, &o, &state, &config).unwrap();
        assert_relative_eq!(next.x.coords()[0], (1.0 - dt * mu) * 0.8, epsilon = 1e-14);
        assert_relative_eq!(next.x.coords()[1], (1.0 - dt * l) * (-0.6), epsilon = 1e-14);
    }

    #[test]
    fn momentum_block_matches_matrix_power_oracle() {
        // Along a single eigen-direction the (zeta, rho) pair evolves by
        // [[1 - dt|l|, g], [-dt|l|, g]].
        let (lam, dt, gamma) = (0.8, 0.2, 0.6);
        let p = euclidean_quadratic(&[-lam, 2.0]);
        let o = HessianOracle::analytic(&p).unwrap();
        let mut config = RunConfig::new(Method::Mcsd, dt, gamma, 1);
        config.eig_mode = EigMode::Exact;
        let mut state = quadratic_state(&p, &[0.3, 0.0]);
        let block = DMatrix::from_column_slice(2, 2, &[1.0 - dt * lam, -dt * lam, gamma, gamma]);
        let mut zr = DVector::from_column_slice(&[0.3, 0.0]);
        for _ in 0..25 {
            state = step_mcsd_exact(&p, &o, &state, &config).unwrap();
            zr = &block * zr;
            assert_relative_eq!(state.x.coords()[0], zr[0], epsilon = 1e-12);
            assert_relative_eq!(state.r.comps()[0], zr[1], epsilon = 1e-12);
        }
    }

    #[test]
    fn gamma_zero_momentum_is_bitwise_csd() {
        let p = sphere_poly(0.1);
        let o = HessianOracle::analytic(&p).unwrap();
        let (x0, _) = initial_condition(&p, "near-saddle", 7).unwrap();
        let eig = exact_unstable_eigs(&o, &x0, 1).unwrap();
        let make_state = || IterateState {
            r: TangentVector::zero(x0.clone()),
            reflector: Reflector::new(x0.clone(), eig.vectors.clone()).unwrap(),
            x: x0.clone(),
            n: 0,
        };
        let csd_cfg = RunConfig::new(Method::Csd, 0.01, 0.0, 1);
        let mut mcsd_cfg = RunConfig::new(Method::Mcsd, 0.01, 0.0, 1);
        mcsd_cfg.method = Method::Mcsd; // bypass validate: the map itself is tested
        let mut s1 = make_state();
        let mut s2 = make_state();
        for _ in 0..50 {
            s1 = step_exact(&p, &o, &s1, &csd_cfg).unwrap();
            s2 = step_exact(&p, &o, &s2, &mcsd_cfg).unwrap();
            assert_eq!(s1.x.coords(), s2.x.coords());
        }
    }

    #[test]
    fn saddle_with_exact_frame_is_fixed_point() {
        for (p, k) in [(sphere_poly(2.0), 1usize), (cylinder_poly(), 1usize)] {
            let o = HessianOracle::analytic(&p).unwrap();
            let x = p.known_saddle_point().unwrap();
            let eig = exact_unstable_eigs(&o, &x, k).unwrap();
            let state = IterateState {
                r: TangentVector::zero(x.clone()),
                reflector: Reflector::new(x.clone(), eig.vectors).unwrap(),
                x: x.clone(),
                n: 0,
            };
            // exact mode
            let cfg = RunConfig::new(Method::Csd, 0.01, 0.0, k);
            let next = step_csd_exact(&p, &o, &state, &cfg).unwrap();
            assert!((next.x.coords() - x.coords()).norm() <= 1e-12);
            assert!(next.reflector.projector_distance(&state.reflector) <= 1e-12);
            // euler-reflector mode
            let mut cfg = RunConfig::new(Method::Csd, 0.01, 0.0, k);
            cfg.eig_mode = EigMode::EulerReflector;
            let next = step_csd_euler(&p, &o, &state, &cfg).unwrap();
            assert!((next.x.coords() - x.coords()).norm() <= 1e-12);
            assert!(next.reflector.projector_distance(&state.reflector) <= 1e-12);
        }
    }

    #[test]
    fn euler_reflector_converges_on_quadratic() {
        // d = 2, H = diag(-1, 2); start the reflector off-axis and watch it
        // contract to diag(-1, 1).
        let p = euclidean_quadratic(&[-1.0, 2.0]);
        let o = HessianOracle::analytic(&p).unwrap();
        let theta: f64 = 0.4;
        let frame = DMatrix::from_column_slice(2, 1, &[theta.cos(), theta.sin()]);
        let x = Point::new(p.manifold().clone(), DVector::from_column_slice(&[0.05, 0.03]))
            .unwrap();
        let mut state = IterateState {
            r: TangentVector::zero(x.clone()),
            reflector: Reflector::new(x.clone(), frame).unwrap(),
            x,
            n: 0,
        };
        let mut cfg = RunConfig::new(Method::Csd, 0.1, 0.0, 1);
        cfg.eig_mode = EigMode::EulerReflector;
        let target = DMatrix::from_column_slice(2, 2, &[-1.0, 0.0, 0.0, 1.0]);
        let mut prev = (state.reflector.to_dense() - &target).norm();
        for _ in 0..60 {
            state = step_csd_euler(&p, &o, &state, &cfg).unwrap();
            let dist = (state.reflector.to_dense() - &target).norm();
            assert!(dist <= prev + 1e-12);
            prev = dist;
        }
        assert!(prev < 1e-6, "reflector distance {prev:.3e}");
    }

    #[test]
    fn run_from_saddle_converges_immediately() {
        let p = sphere_poly(2.0);
        let x = p.known_saddle_point().unwrap();
        let mut cfg = RunConfig::new(Method::Csd, 0.01, 0.0, 1);
        cfg.grad_tol = 1e-10;
        cfg.error_metric = ErrorMetric::GeodesicToKnown;
        let out = run(&p, &cfg, x, None).unwrap();
        assert_eq!(out.record.status, Status::Converged);
        assert_eq!(out.record.rows.len(), 1);
        assert_eq!(out.record.rows[0].n, 0);
    }

    #[test]
    fn run_reports_max_iters() {
        let p = sphere_poly(0.1);
        let (x0, _) = initial_condition(&p, "near-saddle", 1).unwrap();
        let mut cfg = RunConfig::new(Method::Csd, 0.001, 0.0, 1);
        cfg.max_iters = 5;
        cfg.grad_tol = 1e-14;
        let out = run(&p, &cfg, x0, None).unwrap();
        assert_eq!(out.record.status, Status::MaxIters);
        assert_eq!(out.record.rows.len(), 6);
    }

    #[test]
    fn run_flags_divergence() {
        let p = euclidean_quadratic(&[-1.0, 2.0]);
        let x0 = Point::new(p.manifold().clone(), DVector::from_column_slice(&[1.0, 0.5]))
            .unwrap();
        // absurd step size blows the iteration up
        let mut cfg = RunConfig::new(Method::Csd, 50.0, 0.0, 1);
        cfg.max_iters = 200;
        let out = run(&p, &cfg, x0, None).unwrap();
        assert_eq!(out.record.status, Status::Diverged);
    }

    #[test]
    fn trajectory_stays_feasible_with_tangent_momentum() {
        let p = cylinder_poly();
        let (x0, _) = initial_condition(&p, "near-saddle", 3).unwrap();
        let mut cfg = RunConfig::new(Method::Mcsd, 0.01, 0.9, 1);
        cfg.max_iters = 400;
        cfg.grad_tol = 1e-12;
        let out = run(&p, &cfg, x0, None).unwrap();
        for row in &out.record.rows {
            assert!(row.constraint_violation <= p.manifold().feas_tol());
        }
        assert!(out.state.r.tangency_residual() <= 1e-9);
    }

    #[test]
    fn config_validation() {
        assert!(RunConfig::new(Method::Csd, 0.1, 0.0, 1).validate().is_ok());
        assert!(RunConfig::new(Method::Csd, 0.1, 0.5, 1).validate().is_err());
        assert!(RunConfig::new(Method::Mcsd, 0.1, 0.0, 1).validate().is_err());
        assert!(RunConfig::new(Method::Mcsd, 0.1, 1.0, 1).validate().is_err());
        assert!(RunConfig::new(Method::Mcsd, -0.1, 0.5, 1).validate().is_err());
    }

    #[test]
    fn momentum_beats_plain_descent_on_ill_conditioned_quadratic() {
        // kappa = 100: the spectral theory predicts rates 0.99 (CSD at
        // dt = 1/L) vs 9/11 (optimal heavy ball); the estimated rates must
        // preserve that strict ordering.
        let spectrum = [-1.0, 5.0, 20.0, 60.0, 100.0];
        let p = euclidean_quadratic(&spectrum);
        let (x0, _) = initial_condition(&p, "near-saddle", 5).unwrap();

        let mut csd = RunConfig::new(Method::Csd, 0.01, 0.0, 1);
        csd.max_iters = 3000;
        csd.grad_tol = 1e-13;
        csd.error_metric = ErrorMetric::GeodesicToKnown;
        let csd_out = run(&p, &csd, x0.clone(), None).unwrap();
        let csd_rate = estimate_rate(&csd_out.record, 0.5).unwrap();

        let bounds = SpectralBounds::new(1.0, 100.0).unwrap();
        let (dt, gamma) = optimal_heavy_ball(&bounds);
        let mut mcsd = RunConfig::new(Method::Mcsd, dt, gamma, 1);
        mcsd.max_iters = 3000;
        mcsd.grad_tol = 1e-13;
        mcsd.error_metric = ErrorMetric::GeodesicToKnown;
        let mcsd_out = run(&p, &mcsd, x0, None).unwrap();
        let mcsd_rate = estimate_rate(&mcsd_out.record, 0.5).unwrap();

        assert!(
            mcsd_rate < csd_rate,
            "momentum rate {mcsd_rate:.4} should beat descent rate {csd_rate:.4}"
        );
    }

    #[test]
    fn converged_state_has_expected_index() {
        let p = sphere_poly(2.0);
        let (x0, _) = initial_condition(&p, "near-saddle", 2).unwrap();
        let mut cfg = RunConfig::new(Method::Csd, 0.05, 0.0, 1);
        cfg.grad_tol = 1e-11;
        cfg.max_iters = 2000;
        let out = run(&p, &cfg, x0, None).unwrap();
        assert_eq!(out.record.status, Status::Converged);
        let o = HessianOracle::analytic(&p).unwrap();
        assert_eq!(saddle_index(&o, &out.state.x).unwrap().index, 1);
    }
}
