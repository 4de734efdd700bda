// Cross-checks of the condensate machinery on a small grid: hand-rolled
// analytic Hessian vs finite differences, and exact-eigensolve dynamics vs
// the one-step reflector dynamics.

use csd_core::dynamics::{run, EigMode, ErrorMetric, Method, RunConfig};
use csd_core::geometry::{random_tangent, Point};
use csd_core::hessian::{exact_unstable_eigs, HessianOracle};
use csd_core::problems::{bec, initial_condition};
use csd_core::ManifoldKind;
use nalgebra::DVector;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn analytic_hess_vec(
    u: &DVector<f64>,
    v: &DVector<f64>,
    n: usize,
    h2: f64,
    half: f64,
    beta: f64,
) -> DVector<f64> {
    let h = h2.sqrt();
    let at = |w: &DVector<f64>, i: i64, j: i64, part: usize| -> f64 {
        if i < 0 || j < 0 || i >= n as i64 || j >= n as i64 {
            0.0
        } else {
            w[2 * (i as usize * n + j as usize) + part]
        }
    };
    let mut out = DVector::zeros(2 * n * n);
    for i in 0..n as i64 {
        for j in 0..n as i64 {
            let x = -half + (i + 1) as f64 * h;
            let y = -half + (j + 1) as f64 * h;
            let vpot = 0.5 * (x * x + y * y);
            let idx = 2 * (i as usize * n + j as usize);
            let (re, im) = (u[idx], u[idx + 1]);
            let rho = re * re + im * im;
            for part in 0..2 {
                let lap = (4.0 * at(v, i, j, part)
                    - at(v, i - 1, j, part)
                    - at(v, i + 1, j, part)
                    - at(v, i, j - 1, part)
                    - at(v, i, j + 1, part))
                    / h2;
                let field = if part == 0 { re } else { im };
                let dot = re * v[idx] + im * v[idx + 1];
                out[idx + part] = h2
                    * (lap
                        + 2.0 * vpot * at(v, i, j, part)
                        + 2.0 * beta * (rho * at(v, i, j, part) + 2.0 * dot * field));
            }
        }
    }
    out
}

fn main() {
    // 1. FD Hessian vs hand-derived analytic Hessian of the discrete energy
    let p = bec(16, 8.0, 300.0);
    let (n, h2) = match p.manifold().kind() {
        ManifoldKind::WeightedComplexSphere { interior_n, weight } => (*interior_n, *weight),
        _ => unreachable!(),
    };
    let (x, _) = initial_condition(&p, "two-boundary-vortices", 3).unwrap();
    let o = HessianOracle::for_problem(&p);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..3 {
        let v = random_tangent(&x, &mut rng);
        let fd = o.hess_vec(&x, &v).unwrap();
        // analytic euclidean hessian, then multiplier correction + projection
        let grad_e = p.euclid_grad(x.coords());
        let lam = {
            let a = p.manifold().constraint_jacobian(x.coords());
            let ata = (a.transpose() * &a)[(0, 0)];
            (a.transpose() * &grad_e)[0] / ata
        };
        let raw = analytic_hess_vec(x.coords(), v.comps(), n, h2, 8.0, 300.0)
            - p.manifold().constraint_hess_vec(x.coords(), v.comps()) * lam;
        let an = csd_core::tangent_project(&x, &(raw / h2)).unwrap();
        let rel = (fd.comps() - an.comps()).norm() / an.comps().norm();
        println!("hess fd-vs-analytic rel diff = {rel:.3e}");
    }

    // 2. exact vs one-step reflector trajectories over 200 CSD steps
    let (x0, _) = initial_condition(&p, "two-boundary-vortices", 3).unwrap();
    let eig = exact_unstable_eigs(&o, &x0, 2).unwrap();
    println!("grid16 spectrum head: {:?}", &eig.values[..4]);
    let mut cfg = RunConfig::new(Method::Csd, 0.001, 0.0, 2);
    cfg.max_iters = 200;
    cfg.grad_tol = 1e-12;
    cfg.error_metric = ErrorMetric::GradNorm;
    cfg.eig_mode = EigMode::Exact;
    let exact_out = run(&p, &cfg, x0.clone(), Some(eig.vectors.clone())).unwrap();
    cfg.eig_mode = EigMode::EulerReflector;
    let euler_out = run(&p, &cfg, x0, Some(eig.vectors)).unwrap();
    let xe: &Point = &exact_out.state.x;
    let xu: &Point = &euler_out.state.x;
    println!(
        "after 200 steps: |x_exact - x_euler| = {:.3e}, grads {:.4e} vs {:.4e}",
        (xe.coords() - xu.coords()).norm(),
        exact_out.record.rows.last().unwrap().grad_norm,
        euler_out.record.rows.last().unwrap().grad_norm,
    );
}
