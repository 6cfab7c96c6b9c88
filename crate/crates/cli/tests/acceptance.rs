//! Acceptance report: one PASS/FAIL line per criterion.
//!
//! Runs as a plain binary (`harness = false`). The process exits 0 even when
//! a criterion fails so the rest of the workspace suite still runs; set
//! `RBOCP_STRICT_ACCEPTANCE=1` to turn any FAIL into a non-zero exit.

use std::path::{Path, PathBuf};
use std::time::Instant;

use rbocp::oracle::{check_condensing, check_derivatives, check_riccati, check_scalar_riccati};
use rbocp::{contact_constraint, NewtonSolver, SolveStatus, SolverOptions};
use rbocp_cli::commands::{self, bench_ilqr, bench_invdyn, ilqr_trial, invdyn_trial, RunSettings};
use rbocp_cli::config::{ExperimentConfig, CHAIN7_ROBUSTNESS};

struct Report {
    passed: usize,
    total: usize,
}

impl Report {
    fn line(&mut self, id: u32, name: &str, pass: bool, detail: String) {
        self.total += 1;
        self.passed += usize::from(pass);
        let tag = if pass { "PASS" } else { "FAIL" };
        println!("{tag} criterion {id} ({name}): {detail}");
    }
}

fn info(text: String) {
    println!("     info: {text}");
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn condensing(r: &mut Report) {
    let t = Instant::now();
    let rep = check_condensing(100, 100).expect("condensing suite");
    let secs = t.elapsed().as_secs_f64();
    r.line(
        1,
        "condensing equivalence",
        rep.max_error <= 1e-8 && secs < 30.0,
        format!("{} instances, max rel err {:.2e} (tol 1e-8), {secs:.1}s (limit 30s)", rep.instances, rep.max_error),
    );
}

fn riccati(r: &mut Report) {
    let rep = check_riccati(100, 500).expect("riccati suite");
    let scalar = check_scalar_riccati().expect("scalar riccati");
    r.line(
        2,
        "riccati/dense equivalence",
        rep.max_error <= 1e-8 && scalar <= 1e-10,
        format!(
            "{} instances, max rel err {:.2e} (tol 1e-8); scalar P_i err {scalar:.2e} (tol 1e-10)",
            rep.instances, rep.max_error
        ),
    );
}

fn derivatives(r: &mut Report) {
    let rep = check_derivatives(100, 3, 1e-6).expect("derivative suite");
    let pass = rep.rnea_fd <= 1e-5 && rep.contact_fd <= 1e-5 && rep.crba <= 1e-10 && rep.jacobian_transpose <= 1e-10;
    r.line(
        3,
        "derivative correctness",
        pass,
        format!(
            "{} states; rnea fd {:.2e}, contact fd {:.2e} (tol 1e-5); ID_a-crba {:.2e}, ID_f+J^T {:.2e} (tol 1e-10)",
            rep.states, rep.rnea_fd, rep.contact_fd, rep.crba, rep.jacobian_transpose
        ),
    );
}

fn robustness(r: &mut Report) {
    let t = Instant::now();
    let cfg = ExperimentConfig::from_json(CHAIN7_ROBUSTNESS).expect("builtin config");
    let problem = cfg.problem().expect("chain7 problem");
    let n = problem.nv();
    let solver = NewtonSolver::new(&problem, SolverOptions::default()).expect("solver");
    let trials: Vec<_> = (0..20).map(|k| invdyn_trial(&solver, k, k as u64, n).0).collect();
    let converged = trials.iter().filter(|o| o.converged && o.iterations <= 100 && o.final_kkt_error < 1e-8).count();
    let failed: Vec<String> =
        trials.iter().filter(|o| !o.converged).map(|o| format!("seed {} {} at {:.2e}", o.seed, o.status, o.final_kkt_error)).collect();

    let ilqr_opts = cfg.ilqr_options();
    let sweep: Vec<_> = (0..100).map(|k| ilqr_trial(&problem, &ilqr_opts, k, k as u64).0).collect();
    // zero step: backtracking gave up; otherwise the KKT error rose at some accepted step
    let zero_step = sweep.iter().filter(|o| o.status == "LineSearchFailed").count();
    let rising = sweep.iter().filter(|o| !o.converged && o.status != "LineSearchFailed" && o.iterations > 0 && !o.monotone).count();
    let strict = zero_step + rising;
    let not_converged = sweep.iter().filter(|o| !o.converged).count();
    let secs = t.elapsed().as_secs_f64();
    r.line(
        4,
        "robustness reproduction",
        converged == 20 && strict >= 1 && secs < 120.0,
        format!(
            "invdyn {converged}/20 converged; ilqr zero-step or rising-KKT failures {strict}/100 \
             ({zero_step} zero step, {rising} rising); {secs:.1}s (limit 120s)"
        ),
    );
    let mut statuses: Vec<&str> = sweep.iter().filter(|o| !o.converged).map(|o| o.status.as_str()).collect();
    statuses.sort_unstable();
    statuses.dedup();
    info(format!("ilqr did not converge in {not_converged}/100 seeds; statuses seen: {}", statuses.join(", ")));
    if !failed.is_empty() {
        info(format!("invdyn failures with default options: {}", failed.join("; ")));
        let guarded = SolverOptions { line_search: true, ..SolverOptions::default() };
        let gs = NewtonSolver::new(&problem, guarded).expect("solver");
        let rescued: Vec<String> = trials
            .iter()
            .filter(|o| !o.converged)
            .map(|o| {
                let g = invdyn_trial(&gs, o.trial, o.seed, n).0;
                format!("seed {} {} in {} iterations", g.seed, g.status, g.iterations)
            })
            .collect();
        info(format!("same seeds with the backtracking guard enabled: {}", rescued.join("; ")));
    }
    let monotone = trials.iter().filter(|o| o.converged && o.monotone).count();
    info(format!("invdyn KKT error non-increasing after the first step in {monotone}/{converged} converged trials"));
}

fn timing(r: &mut Report) {
    let opts = SolverOptions::default();
    let (warmup, trials) = (100, 300);
    // each measurement runs twice, interleaved, so warm-up and frequency drift hit both sides alike
    let inv_run = || bench_invdyn(7, 50, 1, 1.0, warmup, trials, 0, &opts).expect("invdyn bench");
    let fwd_run = || bench_ilqr(7, 50, 1.0, warmup, trials, 0).expect("ilqr bench");
    let (inv_a, fwd_a) = (inv_run(), fwd_run());
    let (fwd_b, inv_b) = (fwd_run(), inv_run());
    let avg = |x: f64, y: f64| 0.5 * (x + y);
    let inv_stage = avg(inv_a.stage_ms, inv_b.stage_ms);
    let baseline = avg(fwd_a.stage_ms + fwd_a.other_ms, fwd_b.stage_ms + fwd_b.other_ms);
    let ratio = baseline / inv_stage;

    let stage = |threads| bench_invdyn(7, 100, threads, 1.0, warmup, trials, 0, &opts).expect("invdyn bench").stage_ms;
    // interleaved so warm-up and frequency drift hit both thread counts alike
    let (mut one, mut four) = (0.0, 0.0);
    for order in [[1, 4], [4, 1]] {
        for t in order {
            let ms = stage(t);
            if t == 1 { one += ms } else { four += ms }
        }
    }
    let speedup = one / four;
    let cpus = std::thread::available_parallelism().map_or(1, |n| n.get());
    r.line(
        5,
        "relative timing",
        ratio > 1.0 && speedup > 1.3,
        format!(
            "ilqr dynamics+derivatives / invdyn stage evaluation = {ratio:.2} (need > 1.0); \
             4-thread speedup on N=100 = {speedup:.2} (need > 1.3, {cpus} CPU available)"
        ),
    );
    info(format!(
        "chain7 N=50 ms/iter: invdyn stage {inv_stage:.3}, riccati {:.3}, total {:.3}; \
         ilqr linearize {:.3}, rollouts {:.3}, backward {:.3}, total {:.3}",
        avg(inv_a.factor_ms, inv_b.factor_ms),
        avg(inv_a.mean_ms, inv_b.mean_ms),
        avg(fwd_a.stage_ms, fwd_b.stage_ms),
        avg(fwd_a.other_ms, fwd_b.other_ms),
        avg(fwd_a.factor_ms, fwd_b.factor_ms),
        avg(fwd_a.mean_ms, fwd_b.mean_ms),
    ));
    info(format!(
        "linearize-only ratio {:.2}; whole-iteration ratio ilqr/invdyn {:.2}",
        avg(fwd_a.stage_ms, fwd_b.stage_ms) / inv_stage,
        avg(fwd_a.mean_ms, fwd_b.mean_ms) / avg(inv_a.mean_ms, inv_b.mean_ms)
    ));
}

fn contact(r: &mut Report) {
    let cfg = ExperimentConfig::from_path(&configs().join("foot_contact.json")).expect("contact config");
    let problem = cfg.problem().expect("contact problem");
    let (q0, v0) = cfg.initial_state(problem.nv()).expect("initial state");
    let solver = NewtonSolver::new(&problem, cfg.solver_options(1)).expect("solver");
    let res = solver.solve(&q0, &v0, None).expect("contact solve");
    let err = res.trace.final_error().unwrap_or(f64::NAN);
    let mut baumgarte: f64 = 0.0;
    let mut min_slack = f64::INFINITY;
    let mut bounds_ok = true;
    let limit = cfg.bounds.u_upper.as_ref().expect("torque bounds");
    for st in &res.iterate.stages {
        let c = contact_constraint(&problem.tree, &st.q, &st.v, &st.a, &problem.contacts[0]).expect("contact");
        baumgarte = baumgarte.max(c.residual.amax());
        min_slack = min_slack.min(st.s.min());
        for (u, lim) in st.u.iter().zip(limit) {
            if let Some(l) = lim {
                bounds_ok &= u.abs() <= *l;
            }
        }
    }
    let pass = res.status == SolveStatus::Converged && err < 1e-6 && baumgarte < 1e-6 && min_slack > 0.0 && bounds_ok;
    r.line(
        6,
        "contact constraint",
        pass,
        format!(
            "KKT {err:.2e} (tol 1e-6) in {} iterations; max Baumgarte residual {baumgarte:.2e} (tol 1e-6); \
             min slack {min_slack:.2e}; bounds hold: {bounds_ok}",
            res.trace.steps()
        ),
    );
}

fn read_all(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in std::fs::read_dir(&d).expect("read dir") {
            let p = e.expect("dir entry").path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let bytes = std::fs::read(&p).expect("read csv");
                out.push((p.strip_prefix(dir).expect("prefix").to_path_buf(), bytes));
            }
        }
    }
    out.sort();
    out
}

fn determinism(r: &mut Report) {
    let tmp = tempfile::tempdir().expect("tempdir");
    let run = |tag: &str| {
        let out = tmp.path().join(tag);
        let settings = RunSettings { out: out.clone(), threads: 1, timing: false };
        let solve_cfg = ExperimentConfig::from_path(&configs().join("pendulum_swing.json")).expect("config");
        commands::solve(&solve_cfg, &RunSettings { out: out.join("solve"), ..settings.clone() }).expect("solve");
        let robust_cfg = ExperimentConfig::from_json(CHAIN7_ROBUSTNESS).expect("config");
        commands::robustness(&robust_cfg, 3, &RunSettings { out: out.join("robustness"), ..settings })
            .expect("robustness");
        read_all(&out)
    };
    let (a, b) = (run("a"), run("b"));
    let identical = a == b && !a.is_empty();
    r.line(
        7,
        "determinism",
        identical,
        format!("{} CSV files from two runs (threads = 1, seed 0) byte-identical: {identical}", a.len()),
    );
}

fn main() {
    let mut r = Report { passed: 0, total: 0 };
    condensing(&mut r);
    riccati(&mut r);
    derivatives(&mut r);
    robustness(&mut r);
    timing(&mut r);
    contact(&mut r);
    determinism(&mut r);
    println!("acceptance: {}/{} criteria passed", r.passed, r.total);
    if r.passed < r.total && std::env::var_os("RBOCP_STRICT_ACCEPTANCE").is_some() {
        std::process::exit(1);
    }
}
