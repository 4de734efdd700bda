//! Gross-Pitaevskii energy of a 2-D trapped condensate, discretized with
//! second-order finite differences on [-M, M]^2 under homogeneous Dirichlet
//! boundary conditions. The complex field is stored as interleaved re/im
//! pairs on the interior nodes; the normalization constraint and all inner
//! products carry the uniform quadrature weight h^2.

use std::io::{self, Write};

use nalgebra::DVector;

use super::{ProblemFamily, SaddleProblem};
use crate::error::Result;
use crate::geometry::{Manifold, ManifoldKind, Point};

#[derive(Clone, Copy)]
struct Grid {
    interior: usize,
    h: f64,
    half_width: f64,
}

impl Grid {
    fn new(grid_n: usize, half_width: f64) -> Self {
        let h = 2.0 * half_width / (grid_n - 1) as f64;
        Self { interior: grid_n - 2, h, half_width }
    }

    fn coord(&self, i: usize) -> f64 {
        -self.half_width + (i + 1) as f64 * self.h
    }

    fn potential(&self, i: usize, j: usize) -> f64 {
        let x = self.coord(i);
        let y = self.coord(j);
        0.5 * (x * x + y * y)
    }
}

#[inline]
fn lap_component(u: &DVector<f64>, n: usize, h2: f64, i: usize, j: usize, part: usize) -> f64 {
    let at = |i: usize, j: usize| u[2 * (i * n + j) + part];
    let mut acc = 4.0 * at(i, j);
    if i > 0 {
        acc -= at(i - 1, j);
    }
    if i + 1 < n {
        acc -= at(i + 1, j);
    }
    if j > 0 {
        acc -= at(i, j - 1);
    }
    if j + 1 < n {
        acc -= at(i, j + 1);
    }
    acc / h2
}

/// E(phi) = integral of |grad phi|^2 / 2 + V |phi|^2 + (beta/2) |phi|^4 with
/// V(x) = |x|^2 / 2, subject to the normalization h^2 sum |phi|^2 = 1.
/// The Euclidean gradient of the nonlinear eigenproblem is
/// -lap phi + 2 V phi + 2 beta |phi|^2 phi in the weighted inner product.
pub fn bec(grid_n: usize, half_width: f64, beta: f64) -> SaddleProblem {
    assert!(grid_n >= 16, "grid too coarse for the vortex phenomenology");
    assert!(half_width > 0.0 && beta >= 0.0);
    let grid = Grid::new(grid_n, half_width);
    let n = grid.interior;
    let h2 = grid.h * grid.h;
    let manifold = Manifold::weighted_complex_sphere(n, h2);

    let g_e = grid;
    let energy = move |u: &DVector<f64>| {
        let mut e = 0.0;
        for i in 0..n {
            for j in 0..n {
                let idx = 2 * (i * n + j);
                let (re, im) = (u[idx], u[idx + 1]);
                let rho = re * re + im * im;
                let lap_re = lap_component(u, n, h2, i, j, 0);
                let lap_im = lap_component(u, n, h2, i, j, 1);
                e += 0.5 * (lap_re * re + lap_im * im)
                    + g_e.potential(i, j) * rho
                    + 0.5 * beta * rho * rho;
            }
        }
        e * h2
    };

    let g_g = grid;
    let grad = move |u: &DVector<f64>| {
        let mut g = DVector::zeros(2 * n * n);
        for i in 0..n {
            for j in 0..n {
                let idx = 2 * (i * n + j);
                let (re, im) = (u[idx], u[idx + 1]);
                let rho = re * re + im * im;
                let coeff = 2.0 * g_g.potential(i, j) + 2.0 * beta * rho;
                g[idx] = h2 * (lap_component(u, n, h2, i, j, 0) + coeff * re);
                g[idx + 1] = h2 * (lap_component(u, n, h2, i, j, 1) + coeff * im);
            }
        }
        g
    };

    super::builder(
        format!("bec(n={grid_n},beta={beta})"),
        ProblemFamily::Bec,
        manifold,
        Box::new(energy),
        Box::new(grad),
    )
    .index(2)
    .param("grid_n", grid_n as f64)
    .param("half_width", half_width)
    .param("beta", beta)
    .build()
}

/// Thomas-Fermi amplitude with a phase winding +1 around each of two
/// vortices seeded near the top boundary at (-3M/4, 3M/4) and (3M/4, 3M/4),
/// normalized to the constraint sphere.
pub(crate) fn two_boundary_vortices(problem: &SaddleProblem) -> Result<Point> {
    let (n, h2) = match problem.manifold().kind() {
        ManifoldKind::WeightedComplexSphere { interior_n, weight } => (*interior_n, *weight),
        _ => unreachable!("bec problem on non-field manifold"),
    };
    let half_width = problem.param("half_width").expect("bec records half_width");
    let beta = problem.param("beta").expect("bec records beta");
    let grid = Grid { interior: n, h: h2.sqrt(), half_width };
    let mu_tf = (beta / std::f64::consts::PI).sqrt();
    let (vx, vy) = (0.75 * half_width, 0.75 * half_width);
    let mut u = DVector::zeros(2 * n * n);
    for i in 0..n {
        for j in 0..n {
            let x = grid.coord(i);
            let y = grid.coord(j);
            let amp = ((mu_tf - grid.potential(i, j)).max(0.0) / beta).sqrt();
            let phase = (y - vy).atan2(x - vx) + (y - vy).atan2(x + vx);
            let idx = 2 * (i * n + j);
            u[idx] = amp * phase.cos();
            u[idx + 1] = amp * phase.sin();
        }
    }
    let nrm = (h2 * u.dot(&u)).sqrt();
    u /= nrm;
    Point::new(problem.manifold().clone(), u)
}

/// Binary dump of the field on the full grid (boundary rows included as
/// zeros): three little-endian i64 header words (grid_n, grid_n, 2) followed
/// by row-major interleaved re/im f64 values.
pub fn write_field_dump<W: Write>(problem: &SaddleProblem, x: &Point, out: &mut W) -> io::Result<()> {
    let n = match problem.manifold().kind() {
        ManifoldKind::WeightedComplexSphere { interior_n, .. } => *interior_n,
        _ => {
            return Err(io::Error::new(
                io::ErrorKind::InvalidInput,
                "field dump only defined for discretized-field problems",
            ))
        }
    };
    let grid_n = n + 2;
    for word in [grid_n as i64, grid_n as i64, 2i64] {
        out.write_all(&word.to_le_bytes())?;
    }
    let u = x.coords();
    for gi in 0..grid_n {
        for gj in 0..grid_n {
            let (re, im) = if gi == 0 || gj == 0 || gi == grid_n - 1 || gj == grid_n - 1 {
                (0.0, 0.0)
            } else {
                let idx = 2 * ((gi - 1) * n + (gj - 1));
                (u[idx], u[idx + 1])
            };
            out.write_all(&re.to_le_bytes())?;
            out.write_all(&im.to_le_bytes())?;
        }
    }
    Ok(())
}

/// The global-phase direction i*phi at x, tangent by construction; the
/// Hessian annihilates it at any critical point.
pub fn phase_mode(x: &Point) -> DVector<f64> {
    let u = x.coords();
    let mut v = DVector::zeros(u.len());
    for k in 0..u.len() / 2 {
        v[2 * k] = -u[2 * k + 1];
        v[2 * k + 1] = u[2 * k];
    }
    v
}
