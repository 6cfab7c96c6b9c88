//! The four subcommands, callable without going through argument parsing.

use std::path::{Path, PathBuf};

use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rbocp::oracle::{check_condensing, check_derivatives, check_riccati, check_scalar_riccati};
use rbocp::presets::{chain_q_ref, reaching_problem};
use rbocp::{
    chain, ilqr_solve, Error, IlqrOptions, IlqrRecord, IlqrStatus, NewtonSolver, SolveStatus, SolverIterate,
    SolverOptions, SolverTrace,
};

use crate::config::ExperimentConfig;
use crate::output::{num, write_ilqr_trace, write_rows, write_trace, write_trajectory};
use crate::CliError;

/// Settings shared by the file-writing commands.
#[derive(Debug, Clone)]
pub struct RunSettings {
    pub out: PathBuf,
    pub threads: usize,
    pub timing: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Converged,
    MaxIterations,
}

pub fn solve(cfg: &ExperimentConfig, run: &RunSettings) -> Result<Outcome, CliError> {
    let problem = cfg.problem()?;
    let (q0, v0) = cfg.initial_state(problem.nv())?;
    let solver = NewtonSolver::new(&problem, cfg.solver_options(run.threads))?;
    let res = solver.solve(&q0, &v0, None)?;
    write_trajectory(&run.out.join("trajectory.csv"), &problem, &res.iterate)?;
    write_trace(&run.out.join("trace.csv"), &res.trace, run.timing)?;
    Ok(match res.status {
        SolveStatus::Converged => Outcome::Converged,
        SolveStatus::MaxIterations => Outcome::MaxIterations,
    })
}

/// `q̄ ∼ U[−1, 1]ⁿ` then `v̄ ∼ U[−10, 10]ⁿ` from a ChaCha8 stream seeded with `seed`.
pub fn random_initial_state(seed: u64, n: usize) -> (DVector<f64>, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = DVector::from_fn(n, |_, _| rng.gen_range(-1.0..=1.0));
    let v = DVector::from_fn(n, |_, _| rng.gen_range(-10.0..=10.0));
    (q, v)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrialOutcome {
    pub method: &'static str,
    pub trial: usize,
    pub seed: u64,
    pub converged: bool,
    pub iterations: usize,
    pub final_kkt_error: f64,
    /// KKT error never increases after the first step.
    pub monotone: bool,
    pub status: String,
}

fn non_increasing_after_first(errors: &[f64]) -> bool {
    errors.get(1..).unwrap_or(&[]).windows(2).all(|w| w[1] <= w[0])
}

pub fn invdyn_trial(
    solver: &NewtonSolver<'_>,
    trial: usize,
    seed: u64,
    n: usize,
) -> (TrialOutcome, SolverTrace) {
    let (q0, v0) = random_initial_state(seed, n);
    let mut out = TrialOutcome {
        method: "invdyn",
        trial,
        seed,
        converged: false,
        iterations: 0,
        final_kkt_error: f64::NAN,
        monotone: false,
        status: String::new(),
    };
    match solver.solve(&q0, &v0, None) {
        Ok(res) => {
            let errors: Vec<f64> = res.trace.records.iter().map(|r| r.kkt_error).collect();
            out.converged = res.status == SolveStatus::Converged;
            out.iterations = res.trace.steps();
            out.final_kkt_error = res.trace.final_error().unwrap_or(f64::NAN);
            out.monotone = non_increasing_after_first(&errors);
            out.status = format!("{:?}", res.status);
            (out, res.trace)
        }
        Err(e) => {
            out.status = e.to_string();
            (out, SolverTrace::default())
        }
    }
}

pub fn ilqr_trial(
    problem: &rbocp::OcpProblem,
    options: &IlqrOptions,
    trial: usize,
    seed: u64,
) -> (TrialOutcome, Vec<IlqrRecord>) {
    let (q0, v0) = random_initial_state(seed, problem.nv());
    let mut out = TrialOutcome {
        method: "ilqr",
        trial,
        seed,
        converged: false,
        iterations: 0,
        final_kkt_error: f64::NAN,
        monotone: false,
        status: String::new(),
    };
    match ilqr_solve(problem, &q0, &v0, None, options) {
        Ok(res) => {
            let errors: Vec<f64> = res.trace.iter().map(|r| r.kkt_error).collect();
            out.converged = res.status == IlqrStatus::Converged;
            out.iterations = res.trace.iter().filter(|r| r.alpha > 0.0).count();
            out.final_kkt_error = errors.last().copied().unwrap_or(f64::NAN);
            out.monotone = non_increasing_after_first(&errors);
            out.status = format!("{:?}", res.status);
            (out, res.trace)
        }
        Err(Error::Diverged { iteration }) => {
            out.status = format!("Diverged at iteration {iteration}");
            (out, Vec::new())
        }
        Err(e) => {
            out.status = e.to_string();
            (out, Vec::new())
        }
    }
}

/// Runs `trials` random initial states (trial `k` uses seed `seed + k`)
/// through both solvers, writing per-trial traces and `summary.csv`.
pub fn robustness(cfg: &ExperimentConfig, trials: usize, run: &RunSettings) -> Result<Vec<TrialOutcome>, CliError> {
    let problem = cfg.problem()?;
    let n = problem.nv();
    let solver = NewtonSolver::new(&problem, cfg.solver_options(run.threads))?;
    let ilqr_opts = cfg.ilqr_options();
    let mut outcomes = Vec::with_capacity(2 * trials);
    for k in 0..trials {
        let seed = cfg.seed.wrapping_add(k as u64);
        let (o, trace) = invdyn_trial(&solver, k, seed, n);
        write_trace(&run.out.join("invdyn").join(format!("trace_{k:03}.csv")), &trace, run.timing)?;
        outcomes.push(o);
        let (o, trace) = if problem.mg() == 0 && problem.mc() == 0 {
            ilqr_trial(&problem, &ilqr_opts, k, seed)
        } else {
            let skipped = TrialOutcome {
                method: "ilqr",
                trial: k,
                seed,
                converged: false,
                iterations: 0,
                final_kkt_error: f64::NAN,
                monotone: false,
                status: "unsupported: constraints".into(),
            };
            (skipped, Vec::new())
        };
        write_ilqr_trace(&run.out.join("ilqr").join(format!("trace_{k:03}.csv")), &trace, run.timing)?;
        outcomes.push(o);
    }
    write_summary(&run.out.join("summary.csv"), &outcomes)?;
    Ok(outcomes)
}

fn write_summary(path: &Path, outcomes: &[TrialOutcome]) -> Result<(), CliError> {
    let header: Vec<String> =
        ["method", "trial", "seed", "converged", "iterations", "final_kkt_error", "monotone", "status"]
            .map(String::from)
            .to_vec();
    let rows: Vec<Vec<String>> = outcomes
        .iter()
        .map(|o| {
            vec![
                o.method.to_string(),
                o.trial.to_string(),
                o.seed.to_string(),
                o.converged.to_string(),
                o.iterations.to_string(),
                num(o.final_kkt_error),
                o.monotone.to_string(),
                o.status.clone(),
            ]
        })
        .collect();
    write_rows(path, &header, &rows)
}

/// One line of the timing table. For `invdyn` the phases are stage
/// evaluation, Riccati recursion and expansion; for `ilqr` they are
/// dynamics with derivatives, backward pass and line-search rollouts.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub method: &'static str,
    pub dof: usize,
    pub stages: usize,
    pub threads: usize,
    pub trials: usize,
    pub mean_ms: f64,
    pub stddev_ms: f64,
    pub stage_ms: f64,
    pub factor_ms: f64,
    pub other_ms: f64,
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = if xs.len() > 1 { xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    (mean, var.sqrt())
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let v: Vec<f64> = xs.collect();
    mean_std(&v).0
}

/// Benchmark start: `q̄ = q_ref + 0.1·U[−1, 1]ⁿ`, `v̄ = 0`. Starting at rest
/// near the target keeps the explicit-Euler rollouts of the baseline finite.
pub fn benchmark_initial_state(seed: u64, dof: usize) -> (DVector<f64>, DVector<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = chain_q_ref(dof) + DVector::from_fn(dof, |_, _| 0.1 * rng.gen_range(-1.0..=1.0));
    (q, DVector::zeros(dof))
}

/// Times single Newton iterations from [`benchmark_initial_state`].
pub fn bench_invdyn(
    dof: usize,
    stages: usize,
    threads: usize,
    length: f64,
    warmup: usize,
    trials: usize,
    seed: u64,
    options: &SolverOptions,
) -> Result<BenchRow, CliError> {
    let problem = reaching_problem(chain(dof), length, stages)?;
    let (q0, v0) = benchmark_initial_state(seed, dof);
    let opts = SolverOptions { thread_count: threads, ..options.clone() };
    let solver = NewtonSolver::new(&problem, opts.clone())?;
    let start = SolverIterate::initial_guess(&problem, &q0, &v0, opts.barrier_init)?;
    let mut recs = Vec::with_capacity(trials);
    for k in 0..warmup + trials {
        let mut it = start.clone();
        let r = solver.newton_iteration(&mut it, &q0, &v0, 0)?;
        if k >= warmup {
            recs.push(r);
        }
    }
    let totals: Vec<f64> = recs.iter().map(|r| r.total_ms).collect();
    let (mean_ms, stddev_ms) = mean_std(&totals);
    Ok(BenchRow {
        method: "invdyn",
        dof,
        stages,
        threads,
        trials,
        mean_ms,
        stddev_ms,
        stage_ms: mean(recs.iter().map(|r| r.eval_ms)),
        factor_ms: mean(recs.iter().map(|r| r.riccati_ms)),
        other_ms: mean(recs.iter().map(|r| r.total_ms - r.eval_ms - r.riccati_ms)),
    })
}

/// Times single iLQR iterations (linearization, backward pass, line search)
/// from [`benchmark_initial_state`].
pub fn bench_ilqr(
    dof: usize,
    stages: usize,
    length: f64,
    warmup: usize,
    trials: usize,
    seed: u64,
) -> Result<BenchRow, CliError> {
    let problem = reaching_problem(chain(dof), length, stages)?;
    let (q0, v0) = benchmark_initial_state(seed, dof);
    let opts = IlqrOptions { max_iters: 1, ..IlqrOptions::default() };
    let mut recs = Vec::with_capacity(trials);
    for k in 0..warmup + trials {
        let res = ilqr_solve(&problem, &q0, &v0, None, &opts)?;
        if k >= warmup {
            recs.push(res.trace[0].clone());
        }
    }
    let totals: Vec<f64> = recs.iter().map(|r| r.total_ms).collect();
    let (mean_ms, stddev_ms) = mean_std(&totals);
    Ok(BenchRow {
        method: "ilqr",
        dof,
        stages,
        threads: 1,
        trials,
        mean_ms,
        stddev_ms,
        stage_ms: mean(recs.iter().map(|r| r.dynamics_ms)),
        factor_ms: mean(recs.iter().map(|r| r.backward_ms)),
        other_ms: mean(recs.iter().map(|r| r.total_ms - r.dynamics_ms - r.backward_ms)),
    })
}

/// Timing table over every `(dof, N, threads)` combination of the config's
/// benchmark section; iLQR is serial and gets one row per `(dof, N)`.
pub fn benchmark(cfg: &ExperimentConfig, trials: usize, run: &RunSettings) -> Result<Vec<BenchRow>, CliError> {
    let b = &cfg.benchmark;
    let opts = cfg.solver_options(1);
    let mut rows = Vec::new();
    for &dof in &b.dofs {
        for &stages in &b.stages {
            for &threads in &b.threads {
                rows.push(bench_invdyn(dof, stages, threads, b.length, b.warmup, trials, cfg.seed, &opts)?);
            }
            rows.push(bench_ilqr(dof, stages, b.length, b.warmup, trials, cfg.seed)?);
        }
    }
    let header: Vec<String> = [
        "method", "dof", "N", "threads", "trials", "mean_ms", "stddev_ms", "stage_ms", "factor_ms", "other_ms",
    ]
    .map(String::from)
    .to_vec();
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.method.to_string(),
                r.dof.to_string(),
                r.stages.to_string(),
                r.threads.to_string(),
                r.trials.to_string(),
                num(r.mean_ms),
                num(r.stddev_ms),
                num(r.stage_ms),
                num(r.factor_ms),
                num(r.other_ms),
            ]
        })
        .collect();
    write_rows(&run.out.join("benchmark.csv"), &header, &table)?;
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq)]
pub struct CheckLine {
    pub name: &'static str,
    pub value: f64,
    pub tolerance: f64,
}

impl CheckLine {
    pub fn passed(&self) -> bool {
        self.value <= self.tolerance
    }
}

impl std::fmt::Display for CheckLine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let tag = if self.passed() { "PASS" } else { "FAIL" };
        write!(f, "{tag} {}: {:.3e} (tol {:.0e})", self.name, self.value, self.tolerance)
    }
}

/// Oracle suites: condensing and Riccati on `instances` random problems,
/// the scalar Riccati recursion, and derivatives on `instances` random states.
pub fn check(instances: usize, seed: u64) -> Result<Vec<CheckLine>, CliError> {
    let cond = check_condensing(instances, seed)?;
    let ric = check_riccati(instances, seed)?;
    let scalar = check_scalar_riccati()?;
    let der = check_derivatives(instances, seed, 1e-6)?;
    Ok(vec![
        CheckLine { name: "condensed vs uncondensed step", value: cond.max_error, tolerance: 1e-8 },
        CheckLine { name: "riccati vs dense solve", value: ric.max_error, tolerance: 1e-8 },
        CheckLine { name: "riccati vs scalar recursion", value: scalar, tolerance: 1e-10 },
        CheckLine { name: "rnea derivatives vs finite differences", value: der.rnea_fd, tolerance: 1e-5 },
        CheckLine { name: "contact derivatives vs finite differences", value: der.contact_fd, tolerance: 1e-5 },
        CheckLine { name: "ID_a vs crba", value: der.crba, tolerance: 1e-10 },
        CheckLine { name: "ID_f vs -J^T", value: der.jacobian_transpose, tolerance: 1e-10 },
    ])
}
