//! Primal-dual interior-point Newton driver.
//!
//! Each iteration linearizes every stage, condenses it, solves the condensed
//! system with [`riccati_solve`], expands the eliminated directions and takes
//! a fraction-to-boundary step. Stage work runs on a private rayon pool of
//! `thread_count` threads; every reduction is serial so the result does not
//! depend on the thread count.

use std::time::Instant;

use nalgebra::DVector;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::kkt::{
    condense, eval_kkt, eval_terminal, expand, initial_residual, CondensedStage, SolverIterate, StageExpansion,
    StageKkt, TerminalKkt,
};
use crate::ocp::OcpProblem;
use crate::riccati::{riccati_solve, Directions, Regularization};

#[derive(Debug, Clone, PartialEq)]
pub struct SolverOptions {
    pub kkt_tol: f64,
    pub max_iters: usize,
    /// Fraction-to-boundary margin `τ`.
    pub ftb_margin: f64,
    pub barrier_init: f64,
    /// Multiplier applied to the barrier once the KKT error drops below `10ε`.
    pub barrier_decay: f64,
    pub barrier_min: f64,
    pub thread_count: usize,
    /// Halve the step until the KKT error decreases.
    pub line_search: bool,
    pub regularization: Option<Regularization>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            kkt_tol: 1e-8,
            max_iters: 100,
            ftb_margin: 0.995,
            barrier_init: 1e-2,
            barrier_decay: 0.2,
            barrier_min: 1e-10,
            thread_count: 1,
            line_search: false,
            regularization: None,
        }
    }
}

/// One row of the iteration log. `kkt_error` and `cost` are measured before
/// the step; timings are wall-clock milliseconds.
#[derive(Debug, Clone, PartialEq)]
pub struct TraceRecord {
    pub iteration: usize,
    pub kkt_error: f64,
    pub cost: f64,
    pub alpha_primal: f64,
    pub alpha_dual: f64,
    pub barrier: f64,
    pub eval_ms: f64,
    pub riccati_ms: f64,
    pub expand_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SolverTrace {
    pub records: Vec<TraceRecord>,
}

impl SolverTrace {
    pub fn final_error(&self) -> Option<f64> {
        self.records.last().map(|r| r.kkt_error)
    }

    /// Number of Newton steps taken.
    pub fn steps(&self) -> usize {
        self.records.iter().filter(|r| r.alpha_primal > 0.0 || r.alpha_dual > 0.0).count()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SolveStatus {
    Converged,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct SolveResult {
    pub iterate: SolverIterate,
    pub trace: SolverTrace,
    pub status: SolveStatus,
}

/// Linearization of the whole horizon at one iterate.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub stages: Vec<StageKkt>,
    pub condensed: Vec<CondensedStage>,
    pub terminal: TerminalKkt,
    pub initial: DVector<f64>,
    pub kkt_error: f64,
    pub cost: f64,
}

/// Largest `α ∈ (0, 1]` keeping `x + α·dx ≥ (1 − τ)·x` componentwise.
pub fn fraction_to_boundary(x: &DVector<f64>, dx: &DVector<f64>, tau: f64) -> f64 {
    x.iter()
        .zip(dx.iter())
        .filter(|(_, &d)| d < 0.0)
        .map(|(&xi, &d)| -tau * xi / d)
        .fold(1.0, f64::min)
}

pub struct NewtonSolver<'p> {
    problem: &'p OcpProblem,
    options: SolverOptions,
    pool: rayon::ThreadPool,
}

impl<'p> NewtonSolver<'p> {
    pub fn new(problem: &'p OcpProblem, options: SolverOptions) -> Result<Self> {
        if options.thread_count == 0 {
            return Err(Error::InvalidProblem("thread_count must be at least 1".into()));
        }
        if !(options.ftb_margin > 0.0 && options.ftb_margin < 1.0) {
            return Err(Error::InvalidProblem("fraction-to-boundary margin must lie in (0, 1)".into()));
        }
        if !(options.barrier_decay > 0.0 && options.barrier_decay < 1.0) {
            return Err(Error::InvalidProblem("barrier decay must lie in (0, 1)".into()));
        }
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(options.thread_count)
            .build()
            .map_err(|e| Error::InvalidProblem(format!("cannot start thread pool: {e}")))?;
        Ok(Self { problem, options, pool })
    }

    pub fn options(&self) -> &SolverOptions {
        &self.options
    }

    pub fn evaluate(&self, iterate: &SolverIterate, q0: &DVector<f64>, v0: &DVector<f64>) -> Result<Evaluation> {
        let problem = self.problem;
        let pairs: Vec<(StageKkt, CondensedStage)> = self.pool.install(|| {
            (0..problem.stages())
                .into_par_iter()
                .map(|i| {
                    let kkt = eval_kkt(problem, iterate, i)?;
                    let cond = condense(&kkt);
                    Ok((kkt, cond))
                })
                .collect::<Result<Vec<_>>>()
        })?;
        let (stages, condensed): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
        let terminal = eval_terminal(problem, iterate)?;
        let initial = initial_residual(iterate, q0, v0)?;
        let mut sq = terminal.error_sq() + initial.norm_squared();
        let mut cost = terminal.cost;
        for st in &stages {
            sq += st.error_sq();
            cost += st.cost;
        }
        Ok(Evaluation { stages, condensed, terminal, initial, kkt_error: sq.sqrt(), cost })
    }

    fn expand_all(&self, eval: &Evaluation, dirs: &Directions) -> Vec<StageExpansion> {
        self.pool.install(|| {
            eval.stages
                .par_iter()
                .enumerate()
                .map(|(i, kkt)| expand(kkt, &dirs.reduced(i), &dirs.dmu[i]))
                .collect()
        })
    }

    fn step_lengths(&self, iterate: &SolverIterate, exps: &[StageExpansion]) -> (f64, f64) {
        let tau = self.options.ftb_margin;
        iterate.stages.iter().zip(exps).fold((1.0, 1.0), |(ap, ad), (st, ex)| {
            (ap.min(fraction_to_boundary(&st.s, &ex.ds, tau)), ad.min(fraction_to_boundary(&st.nu, &ex.dnu, tau)))
        })
    }

    fn apply(
        &self,
        iterate: &SolverIterate,
        dirs: &Directions,
        exps: &[StageExpansion],
        alpha_p: f64,
        alpha_d: f64,
    ) -> SolverIterate {
        let mut next = iterate.clone();
        self.pool.install(|| {
            next.stages.par_iter_mut().zip(exps.par_iter()).enumerate().for_each(|(i, (st, ex))| {
                st.q.axpy(alpha_p, &dirs.dq[i], 1.0);
                st.v.axpy(alpha_p, &dirs.dv[i], 1.0);
                st.a.axpy(alpha_p, &dirs.da[i], 1.0);
                st.f.axpy(alpha_p, &dirs.df[i], 1.0);
                st.u.axpy(alpha_p, &ex.du, 1.0);
                st.beta.axpy(alpha_p, &ex.dbeta, 1.0);
                st.mu.axpy(alpha_p, &dirs.dmu[i], 1.0);
                st.s.axpy(alpha_p, &ex.ds, 1.0);
                st.nu.axpy(alpha_d, &ex.dnu, 1.0);
                st.lambda.axpy(alpha_p, &dirs.dlambda[i], 1.0);
                st.gamma.axpy(alpha_p, &dirs.dgamma[i], 1.0);
            });
        });
        let nst = iterate.num_stages();
        next.terminal.q.axpy(alpha_p, &dirs.dq[nst], 1.0);
        next.terminal.v.axpy(alpha_p, &dirs.dv[nst], 1.0);
        next.terminal.lambda.axpy(alpha_p, &dirs.dlambda[nst], 1.0);
        next.terminal.gamma.axpy(alpha_p, &dirs.dgamma[nst], 1.0);
        next
    }

    /// Takes one Newton step from an already evaluated iterate.
    pub fn step(
        &self,
        iterate: &mut SolverIterate,
        eval: &Evaluation,
        q0: &DVector<f64>,
        v0: &DVector<f64>,
        iteration: usize,
        eval_ms: f64,
    ) -> Result<TraceRecord> {
        let start = Instant::now();
        let sol = riccati_solve(&eval.condensed, &eval.terminal, &eval.initial, self.options.regularization)?;
        let riccati_ms = start.elapsed().as_secs_f64() * 1e3;
        let t = Instant::now();
        let exps = self.expand_all(eval, &sol.directions);
        let (mut ap, mut ad) = if self.problem.mg() > 0 { self.step_lengths(iterate, &exps) } else { (1.0, 1.0) };
        let expand_ms = t.elapsed().as_secs_f64() * 1e3;
        let mut next = self.apply(iterate, &sol.directions, &exps, ap, ad);
        if self.options.line_search {
            for _ in 0..10 {
                let trial = self.evaluate(&next, q0, v0).map(|e| e.kkt_error).unwrap_or(f64::INFINITY);
                if trial < eval.kkt_error {
                    break;
                }
                ap *= 0.5;
                ad *= 0.5;
                next = self.apply(iterate, &sol.directions, &exps, ap, ad);
            }
        }
        if !next.is_finite() {
            return Err(Error::Diverged { iteration });
        }
        *iterate = next;
        Ok(TraceRecord {
            iteration,
            kkt_error: eval.kkt_error,
            cost: eval.cost,
            alpha_primal: ap,
            alpha_dual: ad,
            barrier: iterate.barrier,
            eval_ms,
            riccati_ms,
            expand_ms,
            total_ms: eval_ms + start.elapsed().as_secs_f64() * 1e3,
        })
    }

    /// Evaluates and steps once at the current barrier.
    pub fn newton_iteration(
        &self,
        iterate: &mut SolverIterate,
        q0: &DVector<f64>,
        v0: &DVector<f64>,
        iteration: usize,
    ) -> Result<TraceRecord> {
        let t = Instant::now();
        let eval = self.evaluate(iterate, q0, v0)?;
        let eval_ms = t.elapsed().as_secs_f64() * 1e3;
        self.step(iterate, &eval, q0, v0, iteration, eval_ms)
    }

    /// Runs Newton iterations from `guess` (or the default initial guess)
    /// until the KKT error is below `kkt_tol` with the barrier at its floor.
    pub fn solve(&self, q0: &DVector<f64>, v0: &DVector<f64>, guess: Option<SolverIterate>) -> Result<SolveResult> {
        let opts = &self.options;
        let mut it = match guess {
            Some(g) => g,
            None => SolverIterate::initial_guess(self.problem, q0, v0, opts.barrier_init)?,
        };
        if it.num_stages() != self.problem.stages() {
            return Err(Error::DimensionMismatch {
                what: "initial guess stages",
                expected: self.problem.stages(),
                got: it.num_stages(),
            });
        }
        let inequalities = self.problem.mg() > 0;
        if inequalities {
            if let Some(stage) = it.first_non_interior() {
                return Err(Error::NonInterior { stage });
            }
        } else {
            it.barrier = 0.0;
        }
        let mut trace = SolverTrace::default();
        for iteration in 0..=opts.max_iters {
            let t = Instant::now();
            let mut eval = self.evaluate(&it, q0, v0)?;
            let barrier_done = !inequalities || it.barrier <= opts.barrier_min;
            if eval.kkt_error < opts.kkt_tol && barrier_done {
                let ms = t.elapsed().as_secs_f64() * 1e3;
                trace.records.push(final_record(iteration, &eval, it.barrier, ms));
                return Ok(SolveResult { iterate: it, trace, status: SolveStatus::Converged });
            }
            if inequalities && !barrier_done && eval.kkt_error < 10.0 * it.barrier {
                it.barrier = (it.barrier * opts.barrier_decay).max(opts.barrier_min);
                eval = self.evaluate(&it, q0, v0)?;
            }
            if iteration == opts.max_iters {
                let ms = t.elapsed().as_secs_f64() * 1e3;
                trace.records.push(final_record(iteration, &eval, it.barrier, ms));
                break;
            }
            let eval_ms = t.elapsed().as_secs_f64() * 1e3;
            let rec = self.step(&mut it, &eval, q0, v0, iteration, eval_ms)?;
            trace.records.push(rec);
        }
        Ok(SolveResult { iterate: it, trace, status: SolveStatus::MaxIterations })
    }
}

fn final_record(iteration: usize, eval: &Evaluation, barrier: f64, ms: f64) -> TraceRecord {
    TraceRecord {
        iteration,
        kkt_error: eval.kkt_error,
        cost: eval.cost,
        alpha_primal: 0.0,
        alpha_dual: 0.0,
        barrier,
        eval_ms: ms,
        riccati_ms: 0.0,
        expand_ms: 0.0,
        total_ms: ms,
    }
}

/// Root-sum-square KKT residual at `iterate`.
pub fn kkt_error(problem: &OcpProblem, iterate: &SolverIterate, q0: &DVector<f64>, v0: &DVector<f64>) -> Result<f64> {
    let solver = NewtonSolver::new(problem, SolverOptions::default())?;
    Ok(solver.evaluate(iterate, q0, v0)?.kkt_error)
}

/// Convenience wrapper: default initial guess, fresh thread pool.
pub fn solve(problem: &OcpProblem, q0: &DVector<f64>, v0: &DVector<f64>, options: SolverOptions) -> Result<SolveResult> {
    NewtonSolver::new(problem, options)?.solve(q0, v0, None)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fraction_to_boundary_cases() {
        let x = DVector::from_vec(vec![1.0, 2.0]);
        assert_eq!(fraction_to_boundary(&x, &DVector::from_vec(vec![1.0, 0.0]), 0.995), 1.0);
        let a = fraction_to_boundary(&x, &DVector::from_vec(vec![-2.0, 0.0]), 0.995);
        assert!((a - 0.4975).abs() < 1e-15);
        assert!(1.0 + a * -2.0 > 0.0);
    }
}
