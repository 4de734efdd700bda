//! Batch harness around the saddle-dynamics library: configures problems
//! from flags, executes runs and gamma sweeps, and writes per-iteration CSV
//! records with a JSON metadata sidecar next to each one.
//!
//! Exit codes: 0 converged, 1 configuration error, 2 iteration budget
//! exhausted, 3 diverged or eigengap collapse.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use csd_core::dynamics::{
    estimate_rate, optimal_heavy_ball, predicted_rate, run, ErrorMetric, Method, RunConfig,
    RunRecord, RunRow, Status,
};
use csd_core::hessian::{exact_unstable_eigs, HessianOracle};
use csd_core::problems::{
    bec, cylinder_poly, default_descriptor, initial_condition, rayleigh_stiefel, sphere_poly,
    thomson, SaddleProblem,
};
use csd_core::EigMode;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 1;
pub const EXIT_MAX_ITERS: i32 = 2;
pub const EXIT_FAILED: i32 = 3;

/// Everything needed to reproduce a run or sweep; serialized into the
/// metadata sidecar verbatim.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ExperimentSpec {
    pub problem: String,
    pub a: f64,
    pub particles: usize,
    pub n: usize,
    pub p: usize,
    pub grid_n: usize,
    pub beta: f64,
    pub method: String,
    pub eig: String,
    pub dt: f64,
    pub gamma: Vec<f64>,
    pub k: Option<usize>,
    pub max_iters: usize,
    pub grad_tol: Option<f64>,
    pub seed: u64,
    pub init: Option<String>,
    pub out: PathBuf,
    pub auto_hb: bool,
}

impl Default for ExperimentSpec {
    fn default() -> Self {
        Self {
            problem: "sphere".into(),
            a: 2.0,
            particles: 5,
            n: 100,
            p: 2,
            grid_n: 32,
            beta: 300.0,
            method: "csd".into(),
            eig: "exact".into(),
            dt: 0.01,
            gamma: Vec::new(),
            k: None,
            max_iters: 20_000,
            grad_tol: None,
            seed: 0,
            init: None,
            out: PathBuf::from("runs"),
            auto_hb: false,
        }
    }
}

/// Sidecar written next to every CSV.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Sidecar {
    pub spec: ExperimentSpec,
    pub gamma: f64,
    pub method: String,
    pub effective_dt: f64,
    pub effective_gamma: f64,
    pub init: String,
    pub status: String,
    pub iterations: usize,
    pub final_grad_norm: f64,
    pub estimated_rate: Option<f64>,
    pub predicted_rate: Option<f64>,
    pub problem_params: BTreeMap<String, f64>,
}

pub fn build_problem(spec: &ExperimentSpec) -> Result<SaddleProblem, String> {
    match spec.problem.as_str() {
        "sphere" => {
            if spec.a <= 0.0 {
                return Err(format!("sphere parameter a must be positive, got {}", spec.a));
            }
            Ok(sphere_poly(spec.a))
        }
        "cylinder" => Ok(cylinder_poly()),
        "thomson" => {
            if spec.particles < 3 {
                return Err("thomson needs at least 3 particles (--M)".into());
            }
            Ok(thomson(spec.particles))
        }
        "rayleigh" => {
            if spec.p >= spec.n {
                return Err(format!("rayleigh needs p < n, got p={} n={}", spec.p, spec.n));
            }
            let spectrum: Vec<f64> = (1..=spec.n).map(|i| i as f64).collect();
            Ok(rayleigh_stiefel(spec.n, spec.p, &spectrum, spec.seed))
        }
        "bec" => {
            if spec.grid_n < 16 {
                return Err("bec needs --grid-n >= 16".into());
            }
            // domain [-8, 8]^2, harmonic trap
            Ok(bec(spec.grid_n, 8.0, spec.beta))
        }
        other => Err(format!(
            "unknown problem {other:?} (expected sphere|cylinder|thomson|rayleigh|bec)"
        )),
    }
}

fn parse_eig(s: &str) -> Result<EigMode, String> {
    match s {
        "exact" => Ok(EigMode::Exact),
        "euler" => Ok(EigMode::EulerReflector),
        other => Err(format!("unknown eig mode {other:?} (expected exact|euler)")),
    }
}

fn default_grad_tol(problem: &SaddleProblem) -> f64 {
    match problem.family() {
        csd_core::problems::ProblemFamily::Bec => 1e-6,
        _ => 1e-8,
    }
}

fn gamma_tag(gamma: f64) -> String {
    format!("{gamma}").replace('.', "p")
}

pub fn csv_path(spec: &ExperimentSpec, method: Method, gamma: f64) -> PathBuf {
    let method = match method {
        Method::Csd => "csd",
        Method::Mcsd => "mcsd",
    };
    spec.out
        .join(format!("{}_{method}_g{}.csv", spec.problem, gamma_tag(gamma)))
}

pub fn write_csv(path: &Path, record: &RunRecord) -> std::io::Result<()> {
    let mut f = fs::File::create(path)?;
    writeln!(f, "iter,error,grad_norm,energy,constraint_violation,wall_time_s")?;
    for row in &record.rows {
        writeln!(
            f,
            "{},{:.17e},{:.17e},{:.17e},{:.17e},{:.6}",
            row.n, row.error, row.grad_norm, row.energy, row.constraint_violation, row.wall_time_s
        )?;
    }
    Ok(())
}

pub fn read_csv(path: &Path) -> Result<RunRecord, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read {path:?}: {e}"))?;
    let mut rows = Vec::new();
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| format!("{path:?} is empty"))?;
    if !header.starts_with("iter,error,grad_norm") {
        return Err(format!("{path:?}: unexpected header {header:?}"));
    }
    for (lineno, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 6 {
            return Err(format!("{path:?}:{}: expected 6 fields", lineno + 2));
        }
        let parse = |s: &str| -> Result<f64, String> {
            s.parse::<f64>().map_err(|e| format!("{path:?}:{}: {e}", lineno + 2))
        };
        rows.push(RunRow {
            n: fields[0]
                .parse::<usize>()
                .map_err(|e| format!("{path:?}:{}: {e}", lineno + 2))?,
            error: parse(fields[1])?,
            grad_norm: parse(fields[2])?,
            energy: parse(fields[3])?,
            constraint_violation: parse(fields[4])?,
            wall_time_s: parse(fields[5])?,
        });
    }
    if rows.is_empty() {
        return Err(format!("{path:?} contains no data rows"));
    }
    Ok(RunRecord { rows, status: Status::MaxIters, projector_errors: None })
}

pub struct GammaOutcome {
    pub gamma: f64,
    pub method: Method,
    pub status: Status,
    pub iterations: usize,
    pub converged_at: Option<usize>,
    pub estimated_rate: Option<f64>,
    pub csv: PathBuf,
}

/// Executes one (method, gamma) member and writes its CSV + sidecar.
pub fn run_one(
    spec: &ExperimentSpec,
    problem: &SaddleProblem,
    gamma: f64,
) -> Result<GammaOutcome, String> {
    let eig_mode = parse_eig(&spec.eig)?;
    let k = spec.k.unwrap_or_else(|| problem.target_index());
    let descriptor = spec
        .init
        .clone()
        .unwrap_or_else(|| default_descriptor(problem.family()).to_string());
    let (x0, v0) =
        initial_condition(problem, &descriptor, spec.seed).map_err(|e| e.to_string())?;

    // spectrum-based parameters and predictions when the saddle is known
    let oracle = HessianOracle::for_problem(problem);
    let known_bounds = problem.known_saddle_point().and_then(|xs| {
        let eig = exact_unstable_eigs(&oracle, &xs, k).ok()?;
        let l_hat = eig.values.iter().fold(0.0_f64, |m, v| m.max(v.abs()));
        eig.spectral_bounds(1e-8 * (1.0 + l_hat)).ok()
    });

    let (dt, gamma) = if spec.auto_hb {
        let bounds = known_bounds
            .ok_or("--auto-hb needs a problem with a known saddle to read the spectrum from")?;
        optimal_heavy_ball(&bounds)
    } else {
        (spec.dt, gamma)
    };
    let method = if gamma == 0.0 { Method::Csd } else { Method::Mcsd };

    let mut config = RunConfig::new(method, dt, gamma, k);
    config.eig_mode = eig_mode;
    config.max_iters = spec.max_iters;
    config.grad_tol = spec.grad_tol.unwrap_or_else(|| default_grad_tol(problem));
    config.seed = spec.seed;
    config.error_metric = if problem.known_saddle().is_some() {
        ErrorMetric::GeodesicToKnown
    } else {
        ErrorMetric::GradNorm
    };

    let out = run(problem, &config, x0, v0).map_err(|e| e.to_string())?;

    fs::create_dir_all(&spec.out).map_err(|e| format!("cannot create {:?}: {e}", spec.out))?;
    let csv = csv_path(spec, method, gamma);
    write_csv(&csv, &out.record).map_err(|e| format!("cannot write {csv:?}: {e}"))?;

    let estimated = estimate_rate(&out.record, 0.4).ok();
    let predicted = known_bounds.map(|b| predicted_rate(method, &b, dt, gamma));
    let sidecar = Sidecar {
        spec: ExperimentSpec { gamma: vec![gamma], ..spec.clone() },
        gamma,
        method: match method {
            Method::Csd => "csd".into(),
            Method::Mcsd => "mcsd".into(),
        },
        effective_dt: dt,
        effective_gamma: gamma,
        init: descriptor,
        status: out.record.status.as_str().into(),
        iterations: out.record.rows.last().map(|r| r.n).unwrap_or(0),
        final_grad_norm: out.record.final_grad_norm(),
        estimated_rate: estimated,
        predicted_rate: predicted,
        problem_params: problem
            .params()
            .iter()
            .map(|(k, v)| (k.to_string(), *v))
            .collect(),
    };
    let meta_path = csv.with_extension("meta.json");
    fs::write(
        &meta_path,
        serde_json::to_string_pretty(&sidecar).expect("sidecar serializes"),
    )
    .map_err(|e| format!("cannot write {meta_path:?}: {e}"))?;

    let converged_at = match out.record.status {
        Status::Converged => out.record.rows.last().map(|r| r.n),
        _ => None,
    };
    Ok(GammaOutcome {
        gamma,
        method,
        status: out.record.status,
        iterations: sidecar_iterations(&out.record),
        converged_at,
        estimated_rate: estimated,
        csv,
    })
}

fn sidecar_iterations(record: &RunRecord) -> usize {
    record.rows.last().map(|r| r.n).unwrap_or(0)
}

fn status_exit(status: Status) -> i32 {
    match status {
        Status::Converged => EXIT_OK,
        Status::MaxIters => EXIT_MAX_ITERS,
        Status::Diverged | Status::EigengapCollapse => EXIT_FAILED,
    }
}

/// `run`: exactly one gamma (default 0), one CSV + sidecar.
pub fn cmd_run(spec: &ExperimentSpec) -> i32 {
    let gammas = if spec.gamma.is_empty() { vec![0.0] } else { spec.gamma.clone() };
    if gammas.len() != 1 {
        eprintln!("error: `run` takes exactly one --gamma (use `sweep` for several)");
        return EXIT_CONFIG;
    }
    let gamma = gammas[0];
    match (spec.method.as_str(), gamma) {
        ("csd", g) if g != 0.0 && !spec.auto_hb => {
            eprintln!("error: --method csd requires gamma = 0");
            return EXIT_CONFIG;
        }
        ("mcsd", g) if g == 0.0 && !spec.auto_hb => {
            eprintln!("error: --method mcsd requires gamma > 0");
            return EXIT_CONFIG;
        }
        ("csd", _) | ("mcsd", _) => {}
        (other, _) => {
            eprintln!("error: unknown method {other:?} (expected csd|mcsd)");
            return EXIT_CONFIG;
        }
    }
    let problem = match build_problem(spec) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    match run_one(spec, &problem, gamma) {
        Ok(outcome) => {
            println!(
                "{}: {} after {} iterations (rate {}), record at {}",
                problem.name(),
                outcome.status.as_str(),
                outcome.iterations,
                outcome
                    .estimated_rate
                    .map(|r| format!("{r:.6}"))
                    .unwrap_or_else(|| "n/a".into()),
                outcome.csv.display()
            );
            status_exit(outcome.status)
        }
        Err(e) => {
            eprintln!("error: {e}");
            EXIT_CONFIG
        }
    }
}

/// `sweep`: two or more gammas, run concurrently, plus a summary table.
pub fn cmd_sweep(spec: &ExperimentSpec) -> i32 {
    if spec.gamma.len() < 2 {
        eprintln!("error: `sweep` needs at least two --gamma values");
        return EXIT_CONFIG;
    }
    let problem = match build_problem(spec) {
        Ok(p) => p,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let results: Vec<Result<GammaOutcome, String>> = std::thread::scope(|scope| {
        let handles: Vec<_> = spec
            .gamma
            .iter()
            .map(|&g| {
                let problem = &problem;
                scope.spawn(move || run_one(spec, problem, g))
            })
            .collect();
        handles.into_iter().map(|h| h.join().expect("sweep member panicked")).collect()
    });

    let mut worst = EXIT_OK;
    let summary_path = spec.out.join(format!("{}_sweep_summary.csv", spec.problem));
    let mut summary = String::from("gamma,method,status,iterations_to_threshold,estimated_rate\n");
    for (g, res) in spec.gamma.iter().zip(&results) {
        match res {
            Ok(o) => {
                summary.push_str(&format!(
                    "{},{},{},{},{}\n",
                    o.gamma,
                    match o.method {
                        Method::Csd => "csd",
                        Method::Mcsd => "mcsd",
                    },
                    o.status.as_str(),
                    o.converged_at.map(|n| n.to_string()).unwrap_or_default(),
                    o.estimated_rate.map(|r| format!("{r:.9}")).unwrap_or_default(),
                ));
                println!(
                    "gamma = {:<6} {:<18} iterations {:>8}  rate {}",
                    o.gamma,
                    o.status.as_str(),
                    o.converged_at.map(|n| n.to_string()).unwrap_or_else(|| "-".into()),
                    o.estimated_rate.map(|r| format!("{r:.6}")).unwrap_or_else(|| "-".into()),
                );
                worst = worst.max(status_exit(o.status));
            }
            Err(e) => {
                eprintln!("gamma = {g}: error: {e}");
                worst = worst.max(EXIT_FAILED);
            }
        }
    }
    if let Err(e) = fs::write(&summary_path, summary) {
        eprintln!("error: cannot write {summary_path:?}: {e}");
        return EXIT_FAILED.max(worst);
    }
    println!("summary at {}", summary_path.display());
    worst
}

/// `rate`: fit the tail of a CSV record; report the prediction from the
/// sidecar when one sits next to the file.
pub fn cmd_rate(csv: &Path, tail_fraction: f64) -> i32 {
    let record = match read_csv(csv) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let rate = match estimate_rate(&record, tail_fraction) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    println!("estimated rate: {rate:.6}");
    let meta_path = csv.with_extension("meta.json");
    if let Ok(text) = fs::read_to_string(&meta_path) {
        if let Ok(sidecar) = serde_json::from_str::<Sidecar>(&text) {
            if let Some(pred) = sidecar.predicted_rate {
                println!("predicted rate: {pred:.6}");
                println!("estimated/predicted: {:.4}", rate / pred);
            }
        }
    }
    EXIT_OK
}
