//! Single-shooting iLQR baseline with Gauss-Newton Hessians.
//!
//! States come from rolling out the controls through [`aba`] and forward
//! Euler, so the state equation holds exactly along every trajectory the
//! solver produces. Forward-dynamics Jacobians are obtained from the
//! inverse-dynamics ones as `a_x = −M⁻¹ ID_x`, `a_u = M⁻¹`.

use std::time::Instant;

use nalgebra::{DMatrix, DVector};

use crate::derivatives::rnea_derivatives;
use crate::dynamics::aba;
use crate::error::{Error, Result};
use crate::kkt::stack;
use crate::ocp::{eval_cost, OcpProblem};

#[derive(Debug, Clone, PartialEq)]
pub struct IlqrOptions {
    pub max_iters: usize,
    /// Tolerance on the reduced-gradient norm.
    pub tol: f64,
    pub backtrack_factor: f64,
    pub armijo: f64,
    /// Step sizes below this count as a zero step.
    pub min_step: f64,
}

impl Default for IlqrOptions {
    fn default() -> Self {
        Self { max_iters: 100, tol: 1e-8, backtrack_factor: 0.5, armijo: 1e-4, min_step: 1e-9 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IlqrRecord {
    pub iteration: usize,
    pub cost: f64,
    /// Norm of the gradient of the single-shooting cost in the controls.
    pub kkt_error: f64,
    pub alpha: f64,
    pub dynamics_ms: f64,
    pub backward_ms: f64,
    pub total_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IlqrStatus {
    Converged,
    /// Backtracking shrank the step below `min_step`.
    LineSearchFailed,
    MaxIterations,
}

#[derive(Debug, Clone)]
pub struct IlqrResult {
    pub q: Vec<DVector<f64>>,
    pub v: Vec<DVector<f64>>,
    pub a: Vec<DVector<f64>>,
    pub u: Vec<DVector<f64>>,
    pub trace: Vec<IlqrRecord>,
    pub status: IlqrStatus,
}

/// Forward dynamics and its Jacobians at `(q, v, u)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ForwardDerivatives {
    pub a: DVector<f64>,
    pub da_dq: DMatrix<f64>,
    pub da_dv: DMatrix<f64>,
    pub da_du: DMatrix<f64>,
}

pub fn forward_dynamics_derivatives(
    problem: &OcpProblem,
    q: &DVector<f64>,
    v: &DVector<f64>,
    u: &DVector<f64>,
) -> Result<ForwardDerivatives> {
    let a = aba(&problem.tree, q, v, u, &[])?;
    derivatives_at(problem, q, v, a)
}

/// Jacobians at a point whose acceleration `a = FD(q, v, u)` is already known.
fn derivatives_at(problem: &OcpProblem, q: &DVector<f64>, v: &DVector<f64>, a: DVector<f64>) -> Result<ForwardDerivatives> {
    let d = rnea_derivatives(&problem.tree, q, v, &a, &[])?;
    let chol = d.da.clone().cholesky().ok_or(Error::SingularSystem)?;
    let minv = chol.inverse();
    Ok(ForwardDerivatives { da_dq: -&minv * &d.dq, da_dv: -&minv * &d.dv, da_du: minv, a })
}

struct Trajectory {
    q: Vec<DVector<f64>>,
    v: Vec<DVector<f64>>,
    a: Vec<DVector<f64>>,
    u: Vec<DVector<f64>>,
    cost: f64,
}

fn stage_vector(t: &Trajectory, i: usize) -> DVector<f64> {
    stack(&[&t.q[i], &t.v[i], &t.a[i], &t.u[i]])
}

fn total_cost(problem: &OcpProblem, t: &Trajectory) -> Result<f64> {
    let nst = problem.stages();
    let mut c = 0.0;
    for i in 0..nst {
        c += eval_cost(problem, i, &stage_vector(t, i))?.value;
    }
    Ok(c + eval_cost(problem, nst, &stack(&[&t.q[nst], &t.v[nst]]))?.value)
}

/// Rolls out `u_i = ū_i + α k_i + K_i (x_i − x̄_i)`; `None` when the state
/// becomes non-finite.
fn rollout(
    problem: &OcpProblem,
    q0: &DVector<f64>,
    v0: &DVector<f64>,
    nominal: Option<(&Trajectory, &[DMatrix<f64>], &[DVector<f64>], f64)>,
    controls: &[DVector<f64>],
) -> Result<Option<Trajectory>> {
    let nst = problem.stages();
    let dt = problem.dt();
    let mut t = Trajectory {
        q: vec![q0.clone()],
        v: vec![v0.clone()],
        a: Vec::with_capacity(nst),
        u: Vec::with_capacity(nst),
        cost: 0.0,
    };
    for i in 0..nst {
        let u = match nominal {
            Some((nom, gains, ff, alpha)) => {
                let dx = stack(&[&(&t.q[i] - &nom.q[i]), &(&t.v[i] - &nom.v[i])]);
                &nom.u[i] + &ff[i] * alpha + &gains[i] * dx
            }
            None => controls[i].clone(),
        };
        let a = match aba(&problem.tree, &t.q[i], &t.v[i], &u, &[]) {
            Ok(a) => a,
            Err(Error::SingularInertia { .. }) => return Ok(None),
            Err(e) => return Err(e),
        };
        let qn = &t.q[i] + &t.v[i] * dt;
        let vn = &t.v[i] + &a * dt;
        if qn.iter().chain(vn.iter()).chain(a.iter()).any(|x| !x.is_finite()) {
            return Ok(None);
        }
        t.a.push(a);
        t.u.push(u);
        t.q.push(qn);
        t.v.push(vn);
    }
    t.cost = total_cost(problem, &t)?;
    Ok(t.cost.is_finite().then_some(t))
}

struct Linearization {
    fx: Vec<DMatrix<f64>>,
    fu: Vec<DMatrix<f64>>,
    lx: Vec<DVector<f64>>,
    lu: Vec<DVector<f64>>,
    lxx: Vec<DMatrix<f64>>,
    luu: Vec<DMatrix<f64>>,
    lux: Vec<DMatrix<f64>>,
    phi_x: DVector<f64>,
    phi_xx: DMatrix<f64>,
}

fn linearize(problem: &OcpProblem, t: &Trajectory) -> Result<Linearization> {
    let nst = problem.stages();
    let n = problem.nv();
    let dt = problem.dt();
    let l = problem.layout();
    let mut lin = Linearization {
        fx: Vec::with_capacity(nst),
        fu: Vec::with_capacity(nst),
        lx: Vec::with_capacity(nst),
        lu: Vec::with_capacity(nst),
        lxx: Vec::with_capacity(nst),
        luu: Vec::with_capacity(nst),
        lux: Vec::with_capacity(nst),
        phi_x: DVector::zeros(0),
        phi_xx: DMatrix::zeros(0, 0),
    };
    for i in 0..nst {
        let fd = derivatives_at(problem, &t.q[i], &t.v[i], t.a[i].clone())?;
        let mut ax = DMatrix::zeros(n, 2 * n);
        ax.view_mut((0, 0), (n, n)).copy_from(&fd.da_dq);
        ax.view_mut((0, n), (n, n)).copy_from(&fd.da_dv);
        let au = fd.da_du;
        let mut fx = DMatrix::identity(2 * n, 2 * n);
        for k in 0..n {
            fx[(k, n + k)] = dt;
        }
        {
            let mut bottom = fx.view_mut((n, 0), (n, 2 * n));
            bottom += &ax * dt;
        }
        let mut fu = DMatrix::zeros(2 * n, n);
        fu.view_mut((n, 0), (n, n)).copy_from(&(&au * dt));

        let c = eval_cost(problem, i, &stage_vector(t, i))?;
        let g_x = c.gradient.rows(0, 2 * n).into_owned();
        let g_a = c.gradient.rows(l.a().start, n).into_owned();
        let g_u = c.gradient.rows(l.u().start, n).into_owned();
        let h_xx = c.hessian.view((0, 0), (2 * n, 2 * n)).into_owned();
        let h_aa = c.hessian.view((l.a().start, l.a().start), (n, n)).into_owned();
        let h_uu = c.hessian.view((l.u().start, l.u().start), (n, n)).into_owned();
        lin.lx.push(g_x + ax.transpose() * &g_a);
        lin.lu.push(g_u + au.transpose() * &g_a);
        lin.lxx.push(h_xx + ax.transpose() * &h_aa * &ax);
        lin.luu.push(h_uu + au.transpose() * &h_aa * &au);
        lin.lux.push(au.transpose() * &h_aa * &ax);
        lin.fx.push(fx);
        lin.fu.push(fu);
    }
    let term = eval_cost(problem, nst, &stack(&[&t.q[nst], &t.v[nst]]))?;
    lin.phi_x = term.gradient;
    lin.phi_xx = term.hessian;
    Ok(lin)
}

/// Exact gradient of the rolled-out cost with respect to every `u_i`.
fn reduced_gradient_norm(lin: &Linearization) -> f64 {
    let mut lam = lin.phi_x.clone();
    let mut sq = 0.0;
    for i in (0..lin.fx.len()).rev() {
        sq += (&lin.lu[i] + lin.fu[i].transpose() * &lam).norm_squared();
        lam = &lin.lx[i] + lin.fx[i].transpose() * &lam;
    }
    sq.sqrt()
}

struct BackwardPass {
    gains: Vec<DMatrix<f64>>,
    ff: Vec<DVector<f64>>,
    /// `Σ kᵀQ_u`, the model's directional derivative along the step.
    slope: f64,
}

fn backward(lin: &Linearization) -> Result<BackwardPass> {
    let nst = lin.fx.len();
    let mut vx = lin.phi_x.clone();
    let mut vxx = lin.phi_xx.clone();
    let mut gains = vec![DMatrix::zeros(0, 0); nst];
    let mut ff = vec![DVector::zeros(0); nst];
    let mut slope = 0.0;
    for i in (0..nst).rev() {
        let (fx, fu) = (&lin.fx[i], &lin.fu[i]);
        let qx = &lin.lx[i] + fx.transpose() * &vx;
        let qu = &lin.lu[i] + fu.transpose() * &vx;
        let vfx = &vxx * fx;
        let qxx = &lin.lxx[i] + fx.transpose() * &vfx;
        let quu = &lin.luu[i] + fu.transpose() * &vxx * fu;
        let qux = &lin.lux[i] + fu.transpose() * &vfx;
        let quu = (&quu + quu.transpose()) * 0.5;
        let chol = quu.clone().cholesky().ok_or(Error::SingularSystem)?;
        let k = -chol.solve(&qu);
        let kk = -chol.solve(&qux);
        slope += k.dot(&qu);
        vx = &qx + kk.transpose() * (&quu * &k) + kk.transpose() * &qu + qux.transpose() * &k;
        let v = &qxx + kk.transpose() * &quu * &kk + kk.transpose() * &qux + qux.transpose() * &kk;
        vxx = (&v + v.transpose()) * 0.5;
        gains[i] = kk;
        ff[i] = k;
    }
    Ok(BackwardPass { gains, ff, slope })
}

/// Classic iLQR from zero-velocity gravity-compensating controls at `q0`
/// (or the given initial controls).
pub fn ilqr_solve(
    problem: &OcpProblem,
    q0: &DVector<f64>,
    v0: &DVector<f64>,
    initial_controls: Option<Vec<DVector<f64>>>,
    options: &IlqrOptions,
) -> Result<IlqrResult> {
    if problem.mg() > 0 || problem.mc() > 0 {
        return Err(Error::InvalidProblem("the iLQR baseline supports neither constraints nor contacts".into()));
    }
    let n = problem.nv();
    let nst = problem.stages();
    let controls = match initial_controls {
        Some(u) => {
            if u.len() != nst || u.iter().any(|x| x.len() != n) {
                return Err(Error::InvalidProblem("initial controls must be N vectors of length nv".into()));
            }
            u
        }
        None => {
            let g = crate::dynamics::rnea(&problem.tree, q0, &DVector::zeros(n), &DVector::zeros(n), &[])?;
            vec![g; nst]
        }
    };
    let mut traj = rollout(problem, q0, v0, None, &controls)?.ok_or(Error::Diverged { iteration: 0 })?;
    let mut trace = Vec::new();
    for iteration in 0..=options.max_iters {
        let start = Instant::now();
        let lin = linearize(problem, &traj)?;
        let err = reduced_gradient_norm(&lin);
        let dynamics_ms = start.elapsed().as_secs_f64() * 1e3;
        let mut rec = IlqrRecord {
            iteration,
            cost: traj.cost,
            kkt_error: err,
            alpha: 0.0,
            dynamics_ms,
            backward_ms: 0.0,
            total_ms: dynamics_ms,
        };
        if err < options.tol {
            trace.push(rec);
            return Ok(finish(traj, trace, IlqrStatus::Converged));
        }
        if iteration == options.max_iters {
            trace.push(rec);
            break;
        }
        let tb = Instant::now();
        let bp = backward(&lin)?;
        rec.backward_ms = tb.elapsed().as_secs_f64() * 1e3;
        let mut alpha = 1.0;
        let accepted = loop {
            let trial = rollout(problem, q0, v0, Some((&traj, &bp.gains, &bp.ff, alpha)), &[])?;
            if let Some(t) = trial {
                if t.cost < traj.cost && t.cost <= traj.cost + options.armijo * alpha * bp.slope {
                    break Some(t);
                }
            }
            alpha *= options.backtrack_factor;
            if alpha < options.min_step {
                break None;
            }
        };
        rec.total_ms = start.elapsed().as_secs_f64() * 1e3;
        match accepted {
            Some(t) => {
                rec.alpha = alpha;
                trace.push(rec);
                traj = t;
            }
            None => {
                trace.push(rec);
                return Ok(finish(traj, trace, IlqrStatus::LineSearchFailed));
            }
        }
    }
    Ok(finish(traj, trace, IlqrStatus::MaxIterations))
}

fn finish(t: Trajectory, trace: Vec<IlqrRecord>, status: IlqrStatus) -> IlqrResult {
    IlqrResult { q: t.q, v: t.v, a: t.a, u: t.u, trace, status }
}
