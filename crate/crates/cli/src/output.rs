//! CSV writers. Floats use 17 significant digits so files round-trip exactly.

use std::path::Path;

use rbocp::{IlqrRecord, OcpProblem, SolverIterate, SolverTrace};

use crate::CliError;

pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

pub fn write_rows(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<(), CliError> {
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.flush()?;
    Ok(())
}

fn names(prefix: &str, k: usize) -> impl Iterator<Item = String> + '_ {
    (0..k).map(move |i| format!("{prefix}{i}"))
}

/// `stage, t, q…, v…, a…, u…, f…`; the terminal row leaves `a`, `u`, `f` empty.
pub fn write_trajectory(path: &Path, problem: &OcpProblem, it: &SolverIterate) -> Result<(), CliError> {
    let (n, nf) = (problem.nv(), problem.nf());
    let header: Vec<String> = ["stage".to_string(), "t".to_string()]
        .into_iter()
        .chain(names("q", n))
        .chain(names("v", n))
        .chain(names("a", n))
        .chain(names("u", n))
        .chain(names("f", nf))
        .collect();
    let dt = problem.dt();
    let mut rows = Vec::with_capacity(it.num_stages() + 1);
    for i in 0..=it.num_stages() {
        let mut row = vec![i.to_string(), num(i as f64 * dt)];
        row.extend(it.q(i).iter().chain(it.v(i).iter()).copied().map(num));
        match it.stages.get(i) {
            Some(st) => row.extend(st.a.iter().chain(st.u.iter()).chain(st.f.iter()).copied().map(num)),
            None => row.extend(std::iter::repeat(String::new()).take(2 * n + nf)),
        }
        rows.push(row);
    }
    write_rows(path, &header, &rows)
}

fn ms(x: f64, timing: bool) -> String {
    num(if timing { x } else { 0.0 })
}

/// `iter, kkt_error, cost, alpha, eps, t_stage_ms, t_riccati_ms, t_expand_ms`.
/// With `timing == false` the timing columns are zero.
pub fn write_trace(path: &Path, trace: &SolverTrace, timing: bool) -> Result<(), CliError> {
    let header: Vec<String> =
        ["iter", "kkt_error", "cost", "alpha", "eps", "t_stage_ms", "t_riccati_ms", "t_expand_ms"]
            .map(String::from)
            .to_vec();
    let rows: Vec<Vec<String>> = trace
        .records
        .iter()
        .map(|r| {
            vec![
                r.iteration.to_string(),
                num(r.kkt_error),
                num(r.cost),
                num(r.alpha_primal),
                num(r.barrier),
                ms(r.eval_ms, timing),
                ms(r.riccati_ms, timing),
                ms(r.expand_ms, timing),
            ]
        })
        .collect();
    write_rows(path, &header, &rows)
}

/// `iter, kkt_error, cost, alpha, t_dynamics_ms, t_backward_ms, t_total_ms`.
pub fn write_ilqr_trace(path: &Path, trace: &[IlqrRecord], timing: bool) -> Result<(), CliError> {
    let header: Vec<String> =
        ["iter", "kkt_error", "cost", "alpha", "t_dynamics_ms", "t_backward_ms", "t_total_ms"]
            .map(String::from)
            .to_vec();
    let rows: Vec<Vec<String>> = trace
        .iter()
        .map(|r| {
            vec![
                r.iteration.to_string(),
                num(r.kkt_error),
                num(r.cost),
                num(r.alpha),
                ms(r.dynamics_ms, timing),
                ms(r.backward_ms, timing),
                ms(r.total_ms, timing),
            ]
        })
        .collect();
    write_rows(path, &header, &rows)
}
