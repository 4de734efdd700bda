//! Thomson-type particle energy on the sphere: M mutually repelling charges
//! with pair energy 1/|x_i - x_j|^2, the first particle fixed at the north
//! pole and the second restricted to the yz-plane to remove the rotational
//! symmetry.

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;

use super::{builder, ProblemFamily, SaddleProblem};
use crate::error::{CsdError, Result};
use crate::geometry::{Manifold, Point};

/// Pair energy |xi - xj|^{-s} for one particle pair.
pub(crate) fn pair_energy(xi: &[f64], xj: &[f64], s: f64) -> f64 {
    let d2: f64 = xi.iter().zip(xj).map(|(a, b)| (a - b) * (a - b)).sum();
    if d2 < 1e-16 {
        return f64::INFINITY;
    }
    d2.powf(-s / 2.0)
}

/// The benchmark configuration: pair exponent 2 (energy 1/r^2).
pub fn thomson(m: usize) -> SaddleProblem {
    thomson_with_exponent(m, 2.0)
}

/// Same model with a configurable pair exponent s (s = 1 is the plain
/// Coulomb potential, useful for cross-checks).
pub fn thomson_with_exponent(m: usize, s: f64) -> SaddleProblem {
    assert!(m >= 3, "need at least three particles");
    assert!(s > 0.0);
    let manifold = Manifold::product_sphere(
        3,
        m,
        vec![(0, 0.0), (1, 0.0), (2, 1.0), (3, 0.0)],
    );
    let energy = Box::new(move |x: &DVector<f64>| {
        // summed in sorted order so the total is exactly invariant under
        // relabeling identical particles
        let mut pairs = Vec::with_capacity(m * (m - 1) / 2);
        for i in 0..m {
            for j in (i + 1)..m {
                pairs.push(pair_energy(
                    &x.as_slice()[3 * i..3 * i + 3],
                    &x.as_slice()[3 * j..3 * j + 3],
                    s,
                ));
            }
        }
        pairs.sort_by(f64::total_cmp);
        pairs.iter().sum()
    });
    let grad = Box::new(move |x: &DVector<f64>| {
        let mut g = DVector::zeros(3 * m);
        for i in 0..m {
            for j in (i + 1)..m {
                let mut d2 = 0.0;
                let mut delta = [0.0; 3];
                for c in 0..3 {
                    delta[c] = x[3 * i + c] - x[3 * j + c];
                    d2 += delta[c] * delta[c];
                }
                // grad of |delta|^{-s} wrt delta is -s |delta|^{-s-2} delta
                let coeff = -s * d2.powf(-(s + 2.0) / 2.0);
                for c in 0..3 {
                    g[3 * i + c] += coeff * delta[c];
                    g[3 * j + c] -= coeff * delta[c];
                }
            }
        }
        g
    });
    let hess = Box::new(move |x: &DVector<f64>, v: &DVector<f64>| {
        let mut h = DVector::zeros(3 * m);
        for i in 0..m {
            for j in (i + 1)..m {
                let mut d2 = 0.0;
                let mut delta = [0.0; 3];
                let mut dv = [0.0; 3];
                for c in 0..3 {
                    delta[c] = x[3 * i + c] - x[3 * j + c];
                    dv[c] = v[3 * i + c] - v[3 * j + c];
                    d2 += delta[c] * delta[c];
                }
                // hess of |delta|^{-s}: -s|d|^{-s-2} I + s(s+2)|d|^{-s-4} dd'
                let c1 = -s * d2.powf(-(s + 2.0) / 2.0);
                let c2 = s * (s + 2.0) * d2.powf(-(s + 4.0) / 2.0);
                let ddv: f64 = delta.iter().zip(&dv).map(|(a, b)| a * b).sum();
                for c in 0..3 {
                    let hv = c1 * dv[c] + c2 * ddv * delta[c];
                    h[3 * i + c] += hv;
                    h[3 * j + c] -= hv;
                }
            }
        }
        h
    });
    builder(
        format!("thomson(M={m})"),
        ProblemFamily::Thomson,
        manifold,
        energy,
        grad,
    )
    .hess(hess)
    .index(2)
    .param("particles", m as f64)
    .param("exponent", s)
    .build()
}

/// Fails with `CoincidentParticles` if any pair sits closer than `min_dist`.
pub fn check_separation(x: &Point, min_dist: f64) -> Result<()> {
    let c = x.coords();
    let m = c.len() / 3;
    for i in 0..m {
        for j in (i + 1)..m {
            let d2: f64 = (0..3)
                .map(|k| (c[3 * i + k] - c[3 * j + k]).powi(2))
                .sum();
            if d2.sqrt() < min_dist {
                return Err(CsdError::CoincidentParticles { i, j, dist: d2.sqrt() });
            }
        }
    }
    Ok(())
}

/// Upper-half-sphere start: every free particle drawn uniformly with z > 0,
/// resampled until pairwise separations are comfortable.
pub(crate) fn upper_half_start<R: Rng + ?Sized>(
    problem: &SaddleProblem,
    rng: &mut R,
) -> Result<Point> {
    let man = problem.manifold().clone();
    let d = man.ambient_dim();
    let m = d / 3;
    'outer: for _ in 0..1000 {
        let mut coords = DVector::zeros(d);
        coords[2] = 1.0; // first particle at the north pole
        {
            // second particle on the upper half of the yz-circle
            let mut yz = [0.0; 2];
            loop {
                yz[0] = rng.sample::<f64, _>(StandardNormal);
                yz[1] = rng.sample::<f64, _>(StandardNormal);
                let n = (yz[0] * yz[0] + yz[1] * yz[1]).sqrt();
                if n > 1e-3 {
                    coords[4] = yz[0] / n;
                    coords[5] = (yz[1] / n).abs();
                    break;
                }
            }
        }
        for i in 2..m {
            loop {
                let g = [
                    rng.sample::<f64, _>(StandardNormal),
                    rng.sample::<f64, _>(StandardNormal),
                    rng.sample::<f64, _>(StandardNormal),
                ];
                let n = (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt();
                if n > 1e-3 {
                    coords[3 * i] = g[0] / n;
                    coords[3 * i + 1] = g[1] / n;
                    coords[3 * i + 2] = (g[2] / n).abs();
                    break;
                }
            }
        }
        let x = Point::new(man.clone(), coords)?;
        if check_separation(&x, 0.3).is_err() {
            continue 'outer;
        }
        return Ok(x);
    }
    Err(CsdError::InvalidConfig(
        "failed to draw a separated upper-half configuration".into(),
    ))
}

/// The uniformly spaced ring on the great circle through the north pole in
/// the yz-plane; for M = 5 this is the classic index-2 configuration.
pub fn ring_configuration(problem: &SaddleProblem, m: usize) -> Point {
    let mut coords = DVector::zeros(3 * m);
    for i in 0..m {
        let theta = 2.0 * std::f64::consts::PI * i as f64 / m as f64;
        coords[3 * i] = 0.0;
        coords[3 * i + 1] = theta.sin();
        coords[3 * i + 2] = theta.cos();
    }
    Point::new(problem.manifold().clone(), coords).expect("ring is feasible")
}

/// Smallest singular value of the M x 3 coordinate matrix; zero exactly when
/// all particles lie in a common plane through the origin.
pub fn coplanarity_defect(x: &Point) -> f64 {
    let c = x.coords();
    let m = c.len() / 3;
    let mat = DMatrix::from_fn(m, 3, |i, j| c[3 * i + j]);
    let svd = mat.svd(false, false);
    svd.singular_values.min()
}
