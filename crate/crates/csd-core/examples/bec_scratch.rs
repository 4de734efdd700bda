// Scratch harness for tuning the condensate benchmark; not part of the
// public surface.

use csd_core::dynamics::{run, EigMode, ErrorMetric, Method, RunConfig};
use csd_core::geometry::{random_tangent_frame, Point};
use csd_core::hessian::{exact_unstable_eigs, riemannian_grad, HessianOracle};
use csd_core::problems::{bec, SaddleProblem};
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn vortex_start(problem: &SaddleProblem, v1: (f64, f64), v2: (f64, f64)) -> Point {
    let man = problem.manifold();
    let (n, h2) = match man.kind() {
        csd_core::ManifoldKind::WeightedComplexSphere { interior_n, weight } => {
            (*interior_n, *weight)
        }
        _ => unreachable!(),
    };
    let h = h2.sqrt();
    let half = problem.param("half_width").unwrap();
    let beta = problem.param("beta").unwrap();
    let mu = (beta / std::f64::consts::PI).sqrt();
    let mut u = DVector::zeros(2 * n * n);
    for i in 0..n {
        for j in 0..n {
            let x = -half + (i + 1) as f64 * h;
            let y = -half + (j + 1) as f64 * h;
            let amp = ((mu - 0.5 * (x * x + y * y)).max(0.0) / beta).sqrt();
            let phase = (y - v1.1).atan2(x - v1.0) + (y - v2.1).atan2(x - v2.0);
            u[2 * (i * n + j)] = amp * phase.cos();
            u[2 * (i * n + j) + 1] = amp * phase.sin();
        }
    }
    let nrm = (h2 * u.dot(&u)).sqrt();
    u /= nrm;
    Point::new(man.clone(), u).unwrap()
}

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let v1x: f64 = args.get(1).map(|s| s.parse().unwrap()).unwrap_or(-6.0);
    let v1y: f64 = args.get(2).map(|s| s.parse().unwrap()).unwrap_or(6.0);
    let v2x: f64 = args.get(3).map(|s| s.parse().unwrap()).unwrap_or(6.0);
    let v2y: f64 = args.get(4).map(|s| s.parse().unwrap()).unwrap_or(6.0);
    let gamma: f64 = args.get(5).map(|s| s.parse().unwrap()).unwrap_or(0.99);
    let dt: f64 = args.get(6).map(|s| s.parse().unwrap()).unwrap_or(0.001);
    let init: &str = args.get(7).map(|s| s.as_str()).unwrap_or("rand");
    let iters: usize = args.get(8).map(|s| s.parse().unwrap()).unwrap_or(3000);

    let p = bec(32, 8.0, 300.0);
    let x0 = vortex_start(&p, (v1x, v1y), (v2x, v2y));
    let o = HessianOracle::for_problem(&p);
    println!("initial grad = {:.4e}", riemannian_grad(&p, &x0).unwrap().norm());

    let v0 = if init == "eig" {
        let t = std::time::Instant::now();
        let eig = exact_unstable_eigs(&o, &x0, 2).unwrap();
        println!(
            "eigensolve: {:.1?}s, smallest eigenvalues {:?}, largest {:.2}",
            t.elapsed(),
            &eig.values[..5.min(eig.values.len())],
            eig.values.last().unwrap()
        );
        Some(eig.vectors)
    } else {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        Some(random_tangent_frame(&x0, 2, &mut rng))
    };

    let method = if gamma == 0.0 { Method::Csd } else { Method::Mcsd };
    let mut cfg = RunConfig::new(method, dt, gamma, 2);
    cfg.eig_mode = EigMode::EulerReflector;
    cfg.max_iters = iters;
    cfg.grad_tol = 1e-9;
    cfg.error_metric = ErrorMetric::GradNorm;
    let out = run(&p, &cfg, x0, v0).unwrap();
    for row in out.record.rows.iter().step_by(500) {
        println!(
            "n={:5} grad={:.4e} energy={:.6} feas={:.2e}",
            row.n, row.grad_norm, row.energy, row.constraint_violation
        );
    }
    let last = out.record.rows.last().unwrap();
    println!("final: n={} grad={:.4e} energy={:.6}", last.n, last.grad_norm, last.energy);

    if std::env::var("BEC_DIAG").is_ok() {
        let xf = &out.state.x;
        let t = std::time::Instant::now();
        let eig = exact_unstable_eigs(&o, xf, 2).unwrap();
        println!(
            "final spectrum head {:?} (eigensolve {:.1?})",
            &eig.values[..6.min(eig.values.len())],
            t.elapsed()
        );
        println!("winding at center = {}", center_winding(&p, xf));
    }
}

/// Winding number of the phase along the ring of grid cells around the
/// domain center.
fn center_winding(problem: &SaddleProblem, x: &Point) -> i64 {
    let n = match problem.manifold().kind() {
        csd_core::ManifoldKind::WeightedComplexSphere { interior_n, .. } => *interior_n,
        _ => unreachable!(),
    };
    let u = x.coords();
    let phase = |i: usize, j: usize| -> f64 {
        let idx = 2 * (i * n + j);
        u[idx + 1].atan2(u[idx])
    };
    // square loop of half-width `rad` cells around the center
    let c = n / 2;
    let rad = n / 6;
    let mut path = Vec::new();
    for j in (c - rad)..=(c + rad) {
        path.push((c - rad, j));
    }
    for i in (c - rad)..=(c + rad) {
        path.push((i, c + rad));
    }
    for j in ((c - rad)..=(c + rad)).rev() {
        path.push((c + rad, j));
    }
    for i in ((c - rad)..=(c + rad)).rev() {
        path.push((i, c - rad));
    }
    let mut total = 0.0;
    for w in path.windows(2) {
        let d = phase(w[1].0, w[1].1) - phase(w[0].0, w[0].1);
        let d = (d + std::f64::consts::PI).rem_euclid(2.0 * std::f64::consts::PI)
            - std::f64::consts::PI;
        total += d;
    }
    (total / (2.0 * std::f64::consts::PI)).round() as i64
}
