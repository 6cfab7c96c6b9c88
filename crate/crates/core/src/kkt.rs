//! Stage-wise KKT evaluation, barrier elimination, condensing of `(Δu, Δβ)`
//! and the matching expansion.

use std::ops::Range;

use nalgebra::{DMatrix, DVector};

use crate::derivatives::rnea_derivatives;
use crate::dynamics::{rnea, ExternalForce};
use crate::error::{check_dim, Error, Result};
use crate::ocp::{eval_constraints, eval_cost, OcpProblem, StageLayout};
use crate::tree::config_diff;

/// Primal and dual variables of an intermediate stage `i < N`.
#[derive(Debug, Clone, PartialEq)]
pub struct StageIterate {
    pub q: DVector<f64>,
    pub v: DVector<f64>,
    pub a: DVector<f64>,
    pub f: DVector<f64>,
    pub u: DVector<f64>,
    /// Inverse-dynamics multiplier.
    pub beta: DVector<f64>,
    /// Equality multiplier.
    pub mu: DVector<f64>,
    /// Inequality slack.
    pub s: DVector<f64>,
    /// Inequality multiplier.
    pub nu: DVector<f64>,
    /// Multiplier of the `q` state equation ending at this stage (initial condition for `i = 0`).
    pub lambda: DVector<f64>,
    /// Multiplier of the `v` state equation ending at this stage.
    pub gamma: DVector<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TerminalIterate {
    pub q: DVector<f64>,
    pub v: DVector<f64>,
    pub lambda: DVector<f64>,
    pub gamma: DVector<f64>,
}

/// Full primal-dual iterate over the horizon plus the barrier parameter.
#[derive(Debug, Clone, PartialEq)]
pub struct SolverIterate {
    pub stages: Vec<StageIterate>,
    pub terminal: TerminalIterate,
    pub barrier: f64,
}

impl SolverIterate {
    /// Every variable zero except slacks and inequality multipliers, which are one.
    pub fn zeros(problem: &OcpProblem) -> Self {
        let n = problem.nv();
        let z = |k: usize| DVector::zeros(k);
        let stage = StageIterate {
            q: z(n),
            v: z(n),
            a: z(n),
            f: z(problem.nf()),
            u: z(n),
            beta: z(n),
            mu: z(problem.mc()),
            s: DVector::from_element(problem.mg(), 1.0),
            nu: DVector::from_element(problem.mg(), 1.0),
            lambda: z(n),
            gamma: z(n),
        };
        Self {
            stages: vec![stage; problem.stages()],
            terminal: TerminalIterate { q: z(n), v: z(n), lambda: z(n), gamma: z(n) },
            barrier: 0.0,
        }
    }

    /// Constant initial state, zero acceleration and force, gravity
    /// compensating torques, zero equality multipliers and centred slacks.
    pub fn initial_guess(problem: &OcpProblem, q0: &DVector<f64>, v0: &DVector<f64>, barrier: f64) -> Result<Self> {
        let n = problem.nv();
        check_dim("q0", n, q0.len())?;
        check_dim("v0", n, v0.len())?;
        let mut it = Self::zeros(problem);
        it.barrier = barrier;
        let u0 = rnea(&problem.tree, q0, v0, &DVector::zeros(n), &[])?;
        for (i, st) in it.stages.iter_mut().enumerate() {
            st.q = q0.clone();
            st.v = v0.clone();
            st.u = u0.clone();
            let y = stack(&[&st.q, &st.v, &st.a, &st.f, &st.u]);
            let g = eval_constraints(problem, i, &y)?.g;
            st.s = g.map(|gj| (-gj).max(1e-4));
            st.nu = st.s.map(|sj| barrier.max(1e-12) / sj);
        }
        it.terminal.q = q0.clone();
        it.terminal.v = v0.clone();
        Ok(it)
    }

    pub fn num_stages(&self) -> usize {
        self.stages.len()
    }

    /// `q_i` for `0 ≤ i ≤ N`.
    pub fn q(&self, i: usize) -> &DVector<f64> {
        if i < self.stages.len() {
            &self.stages[i].q
        } else {
            &self.terminal.q
        }
    }
    pub fn v(&self, i: usize) -> &DVector<f64> {
        if i < self.stages.len() {
            &self.stages[i].v
        } else {
            &self.terminal.v
        }
    }
    pub fn lambda(&self, i: usize) -> &DVector<f64> {
        if i < self.stages.len() {
            &self.stages[i].lambda
        } else {
            &self.terminal.lambda
        }
    }
    pub fn gamma(&self, i: usize) -> &DVector<f64> {
        if i < self.stages.len() {
            &self.stages[i].gamma
        } else {
            &self.terminal.gamma
        }
    }

    /// Stage stack `y = (q, v, a, f, u)` for `i < N`, `(q, v)` for `i = N`.
    pub fn stage_vector(&self, i: usize) -> DVector<f64> {
        match self.stages.get(i) {
            Some(st) => stack(&[&st.q, &st.v, &st.a, &st.f, &st.u]),
            None => stack(&[&self.terminal.q, &self.terminal.v]),
        }
    }

    /// Index of the first stage with a non-positive slack or multiplier.
    pub fn first_non_interior(&self) -> Option<usize> {
        self.stages.iter().position(|st| st.s.iter().chain(st.nu.iter()).any(|&x| !(x > 0.0)))
    }

    pub fn is_finite(&self) -> bool {
        let fin = |v: &DVector<f64>| v.iter().all(|x| x.is_finite());
        self.stages.iter().all(|st| {
            [&st.q, &st.v, &st.a, &st.f, &st.u, &st.beta, &st.mu, &st.s, &st.nu, &st.lambda, &st.gamma]
                .into_iter()
                .all(fin)
        }) && [&self.terminal.q, &self.terminal.v, &self.terminal.lambda, &self.terminal.gamma].into_iter().all(fin)
    }
}

pub(crate) fn stack(parts: &[&DVector<f64>]) -> DVector<f64> {
    let len = parts.iter().map(|p| p.len()).sum();
    let mut out = DVector::zeros(len);
    let mut at = 0;
    for p in parts {
        out.rows_mut(at, p.len()).copy_from(*p);
        at += p.len();
    }
    out
}

fn block(m: &DMatrix<f64>, rows: Range<usize>, cols: Range<usize>) -> DMatrix<f64> {
    m.view((rows.start, cols.start), (rows.len(), cols.len())).into_owned()
}

fn segment(v: &DVector<f64>, r: Range<usize>) -> DVector<f64> {
    v.rows(r.start, r.len()).into_owned()
}

/// Residuals and linearization of stage `i < N`.
#[derive(Debug, Clone, PartialEq)]
pub struct StageKkt {
    pub stage: usize,
    pub dt: f64,
    pub layout: StageLayout,
    pub barrier: f64,
    /// `l(y)·Δτ`.
    pub cost: f64,
    /// Lagrangian gradient in `y`.
    pub grad: DVector<f64>,
    /// Gauss-Newton Lagrangian Hessian in `y` (the cost Hessian).
    pub hess: DMatrix<f64>,
    /// Gradient after eliminating `(Δs, Δν)`.
    pub grad_bar: DVector<f64>,
    /// Hessian after eliminating `(Δs, Δν)`.
    pub hess_bar: DMatrix<f64>,
    /// `(q_i − q_{i+1} + Δτ v_i, v_i − v_{i+1} + Δτ a_i)`.
    pub dyn_residual: DVector<f64>,
    /// `ID(q, v, a, f) − u`.
    pub id_residual: DVector<f64>,
    /// `∂ID/∂(q, v, a, f)`.
    pub id_jac: DMatrix<f64>,
    pub c: DVector<f64>,
    pub c_jac: DMatrix<f64>,
    pub g: DVector<f64>,
    pub g_jac: DMatrix<f64>,
    pub s: DVector<f64>,
    pub nu: DVector<f64>,
}

impl StageKkt {
    /// `g + s`.
    pub fn slack_residual(&self) -> DVector<f64> {
        &self.g + &self.s
    }

    /// `s∘ν − ε`.
    pub fn complementarity(&self) -> DVector<f64> {
        self.s.component_mul(&self.nu).add_scalar(-self.barrier)
    }

    /// Squared contribution of this stage to the KKT error.
    pub fn error_sq(&self) -> f64 {
        self.grad.norm_squared()
            + self.dyn_residual.norm_squared()
            + self.id_residual.norm_squared()
            + (self.dt * self.dt) * (self.c.norm_squared() + self.slack_residual().norm_squared())
            + self.complementarity().norm_squared()
    }
}

/// Terminal cost linearization with the `(λ_N, γ_N)` terms folded in.
#[derive(Debug, Clone, PartialEq)]
pub struct TerminalKkt {
    pub cost: f64,
    /// `φ_x − π_N`.
    pub grad: DVector<f64>,
    pub hess: DMatrix<f64>,
}

impl TerminalKkt {
    pub fn error_sq(&self) -> f64 {
        self.grad.norm_squared()
    }
}

/// Linearizes stage `stage < N` at `iterate`.
pub fn eval_kkt(problem: &OcpProblem, iterate: &SolverIterate, stage: usize) -> Result<StageKkt> {
    let nst = problem.stages();
    if iterate.num_stages() != nst {
        return Err(Error::DimensionMismatch { what: "iterate stages", expected: nst, got: iterate.num_stages() });
    }
    if stage >= nst {
        return Err(Error::InvalidProblem(format!("stage {stage} is not an intermediate stage")));
    }
    let layout = problem.layout();
    let (n, nf) = (layout.n, layout.nf);
    let (ny, nyr) = (layout.ny(), layout.ny_reduced());
    let dt = problem.dt();
    let st = &iterate.stages[stage];
    check_dim("f", nf, st.f.len())?;
    check_dim("mu", problem.mc(), st.mu.len())?;
    check_dim("s", problem.mg(), st.s.len())?;
    check_dim("nu", problem.mg(), st.nu.len())?;
    let y = iterate.stage_vector(stage);
    check_dim("stage vector", ny, y.len())?;

    let cost = eval_cost(problem, stage, &y)?;
    let cons = eval_constraints(problem, stage, &y)?;
    let fext: Vec<ExternalForce> = problem.external_forces(&st.f);
    let d = rnea_derivatives(&problem.tree, &st.q, &st.v, &st.a, &fext)?;

    let mut id_jac = DMatrix::zeros(n, nyr);
    id_jac.view_mut((0, 0), (n, n)).copy_from(&d.dq);
    id_jac.view_mut((0, n), (n, n)).copy_from(&d.dv);
    id_jac.view_mut((0, 2 * n), (n, n)).copy_from(&d.da);
    id_jac.view_mut((0, 3 * n), (n, nf)).copy_from(&d.df);
    let mut grad = cost.gradient.clone();
    grad += (cons.c_jac.transpose() * &st.mu + cons.g_jac.transpose() * &st.nu) * dt;
    {
        let mut gr = grad.rows_mut(0, nyr);
        gr.gemv_tr(dt, &id_jac, &st.beta, 1.0);
    }
    {
        let mut gu = grad.rows_mut(nyr, n);
        gu.axpy(-dt, &st.beta, 1.0);
    }
    let (lam1, gam1) = (iterate.lambda(stage + 1), iterate.gamma(stage + 1));
    {
        let mut gq = grad.rows_mut(layout.q().start, n);
        gq += lam1 - &st.lambda;
    }
    {
        let mut gv = grad.rows_mut(layout.v().start, n);
        gv += lam1 * dt + gam1 - &st.gamma;
    }
    {
        let mut ga = grad.rows_mut(layout.a().start, n);
        ga += gam1 * dt;
    }

    let (q1, v1) = (iterate.q(stage + 1), iterate.v(stage + 1));
    let dyn_residual = stack(&[&(config_diff(&st.q, q1)? + &st.v * dt), &(&st.v - v1 + &st.a * dt)]);

    let mut hess_bar = cost.hessian.clone();
    let mut grad_bar = grad.clone();
    if problem.mg() > 0 {
        let r_g = &cons.g + &st.s;
        let comp = st.s.component_mul(&st.nu).add_scalar(-iterate.barrier);
        let w = st.nu.component_div(&st.s);
        let rhs = (st.nu.component_mul(&r_g) - comp).component_div(&st.s);
        let mut wg = cons.g_jac.clone();
        for (r, mut row) in wg.row_iter_mut().enumerate() {
            row *= w[r];
        }
        hess_bar += cons.g_jac.transpose() * wg * dt;
        grad_bar += cons.g_jac.transpose() * rhs * dt;
    }

    Ok(StageKkt {
        stage,
        dt,
        layout,
        barrier: iterate.barrier,
        cost: cost.value,
        grad,
        hess: cost.hessian,
        grad_bar,
        hess_bar,
        dyn_residual,
        id_residual: &d.tau - &st.u,
        id_jac,
        c: cons.c,
        c_jac: cons.c_jac,
        g: cons.g,
        g_jac: cons.g_jac,
        s: st.s.clone(),
        nu: st.nu.clone(),
    })
}

/// Terminal linearization.
pub fn eval_terminal(problem: &OcpProblem, iterate: &SolverIterate) -> Result<TerminalKkt> {
    let nst = problem.stages();
    let y = iterate.stage_vector(nst);
    let cost = eval_cost(problem, nst, &y)?;
    let pi = stack(&[&iterate.terminal.lambda, &iterate.terminal.gamma]);
    Ok(TerminalKkt { cost: cost.value, grad: cost.gradient - pi, hess: cost.hessian })
}

/// `(q̄ − q_0, v̄ − v_0)`.
pub fn initial_residual(iterate: &SolverIterate, q0: &DVector<f64>, v0: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim("q0", iterate.q(0).len(), q0.len())?;
    check_dim("v0", iterate.v(0).len(), v0.len())?;
    Ok(stack(&[&config_diff(q0, iterate.q(0))?, &(v0 - iterate.v(0))]))
}

/// Stage problem in `ỹ = (q, v, a, f)` after eliminating `Δu` and `Δβ`.
#[derive(Debug, Clone, PartialEq)]
pub struct CondensedStage {
    pub stage: usize,
    pub dt: f64,
    pub layout: StageLayout,
    pub hess: DMatrix<f64>,
    pub grad: DVector<f64>,
    pub c_jac: DMatrix<f64>,
    pub c: DVector<f64>,
    pub dyn_residual: DVector<f64>,
}

/// Eliminates `Δu = ID_ỹ Δỹ + r_id` and `Δβ` from the barrier-reduced stage system.
pub fn condense(kkt: &StageKkt) -> CondensedStage {
    let l = kkt.layout;
    let (nyr, ny) = (l.ny_reduced(), l.ny());
    let (r, u) = (0..nyr, nyr..ny);
    let j = &kkt.id_jac;
    let h_rr = block(&kkt.hess_bar, r.clone(), r.clone());
    let h_ru = block(&kkt.hess_bar, r.clone(), u.clone());
    let h_uu = block(&kkt.hess_bar, u.clone(), u.clone());
    let jt = j.transpose();
    let cross = &h_ru + &jt * &h_uu;
    let mut hess = &h_rr + &cross * j + &jt * h_ru.transpose();
    hess = (&hess + hess.transpose()) * 0.5;
    let grad = segment(&kkt.grad_bar, r.clone()) + &jt * segment(&kkt.grad_bar, u.clone()) + cross * &kkt.id_residual;
    let c_u = block(&kkt.c_jac, 0..kkt.c.len(), u);
    let c_jac = block(&kkt.c_jac, 0..kkt.c.len(), r) + &c_u * j;
    let c = &kkt.c + c_u * &kkt.id_residual;
    CondensedStage { stage: kkt.stage, dt: kkt.dt, layout: l, hess, grad, c_jac, c, dyn_residual: kkt.dyn_residual.clone() }
}

/// Eliminated directions recovered from `(Δỹ, Δμ)`.
#[derive(Debug, Clone, PartialEq)]
pub struct StageExpansion {
    pub du: DVector<f64>,
    pub dbeta: DVector<f64>,
    pub ds: DVector<f64>,
    pub dnu: DVector<f64>,
}

pub fn expand(kkt: &StageKkt, dy_reduced: &DVector<f64>, dmu: &DVector<f64>) -> StageExpansion {
    let l = kkt.layout;
    let (nyr, ny) = (l.ny_reduced(), l.ny());
    let u = nyr..ny;
    let du = &kkt.id_jac * dy_reduced + &kkt.id_residual;
    let dy = stack(&[dy_reduced, &du]);
    let h_u = block(&kkt.hess_bar, u.clone(), 0..ny);
    let c_u = block(&kkt.c_jac, 0..kkt.c.len(), u.clone());
    let dbeta = (segment(&kkt.grad_bar, u) + h_u * &dy) / kkt.dt + c_u.transpose() * dmu;
    let ds = -kkt.slack_residual() - &kkt.g_jac * &dy;
    let dnu = -(kkt.complementarity() + kkt.nu.component_mul(&ds)).component_div(&kkt.s);
    StageExpansion { du, dbeta, ds, dnu }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model_io::builtin;
    use crate::ocp::{BoundsSpec, ContactSpec, Horizon, QuadraticCost};
    use nalgebra::Vector3;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn foot_problem() -> OcpProblem {
        let tree = builtin("planar_2link_foot").unwrap();
        let mut cost = QuadraticCost::zeros(4, 3);
        cost.q_weight = DMatrix::identity(4, 4);
        cost.v_weight = DMatrix::identity(4, 4) * 0.1;
        cost.a_weight = DMatrix::identity(4, 4) * 1e-3;
        cost.u_weight = DMatrix::identity(4, 4) * 1e-2;
        cost.f_weight = DMatrix::identity(3, 3) * 1e-4;
        cost.terminal_q_weight = DMatrix::identity(4, 4) * 10.0;
        let bounds = BoundsSpec {
            u_lower: Some(DVector::from_element(4, -50.0)),
            u_upper: Some(DVector::from_element(4, 50.0)),
            q_upper: Some(DVector::from_element(4, 2.0)),
            ..Default::default()
        };
        let contact = ContactSpec::new("foot", Vector3::new(0.0, 0.0, 0.05));
        OcpProblem::new(tree, Horizon::new(0.4, 4).unwrap(), cost, vec![contact], bounds, vec![0]).unwrap()
    }

    fn random_iterate(p: &OcpProblem, rng: &mut ChaCha8Rng) -> SolverIterate {
        let mut it = SolverIterate::zeros(p);
        let mut r = |v: &mut DVector<f64>, scale: f64| v.iter_mut().for_each(|x| *x = scale * rng.gen_range(-1.0..1.0));
        for st in &mut it.stages {
            for v in [&mut st.q, &mut st.v, &mut st.a, &mut st.f, &mut st.u, &mut st.beta, &mut st.mu, &mut st.lambda, &mut st.gamma] {
                r(v, 0.5);
            }
            st.s.iter_mut().for_each(|x| *x = 0.5 + x.abs());
        }
        for st in &mut it.stages {
            for (k, x) in st.nu.iter_mut().enumerate() {
                *x = 0.2 + 0.1 * (k as f64);
            }
        }
        it.barrier = 1e-2;
        it
    }

    #[test]
    fn condensed_rows_match_full_rows() {
        let p = foot_problem();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let it = random_iterate(&p, &mut rng);
        let l = p.layout();
        let kkt = eval_kkt(&p, &it, 1).unwrap();
        let cond = condense(&kkt);
        let dyr = DVector::from_fn(l.ny_reduced(), |_, _| rng.gen_range(-1.0..1.0));
        let dmu = DVector::from_fn(p.mc(), |_, _| rng.gen_range(-1.0..1.0));
        let ex = expand(&kkt, &dyr, &dmu);
        let dy = stack(&[&dyr, &ex.du]);
        let nyr = l.ny_reduced();
        let mut id_full = DMatrix::zeros(l.n, l.ny());
        id_full.view_mut((0, 0), (l.n, nyr)).copy_from(&kkt.id_jac);
        for k in 0..l.n {
            id_full[(k, nyr + k)] = -1.0;
        }
        let full = &kkt.grad_bar + &kkt.hess_bar * &dy + (id_full.transpose() * &ex.dbeta + kkt.c_jac.transpose() * &dmu) * kkt.dt;
        // u rows vanish by construction of Δβ
        assert!(full.rows(nyr, l.n).amax() < 1e-10, "{}", full.rows(nyr, l.n).amax());
        let reduced = &cond.grad + &cond.hess * &dyr + cond.c_jac.transpose() * &dmu * kkt.dt;
        assert!((full.rows(0, nyr) - reduced).amax() < 1e-9);
        let lin_c = &kkt.c + &kkt.c_jac * &dy;
        assert!((lin_c - (&cond.c + &cond.c_jac * &dyr)).amax() < 1e-10);
        let lin_id = &kkt.id_residual + &id_full * &dy;
        assert!(lin_id.amax() < 1e-10);
    }

    #[test]
    fn barrier_elimination_matches_explicit_directions() {
        let p = foot_problem();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let it = random_iterate(&p, &mut rng);
        let kkt = eval_kkt(&p, &it, 2).unwrap();
        let dyr = DVector::from_fn(p.layout().ny_reduced(), |_, _| rng.gen_range(-1.0..1.0));
        let dmu = DVector::zeros(p.mc());
        let ex = expand(&kkt, &dyr, &dmu);
        let dy = stack(&[&dyr, &ex.du]);
        // linearized slack and complementarity equations
        let lin_g = kkt.slack_residual() + &kkt.g_jac * &dy + &ex.ds;
        let lin_comp = kkt.complementarity() + kkt.nu.component_mul(&ex.ds) + kkt.s.component_mul(&ex.dnu);
        assert!(lin_g.amax() < 1e-12 && lin_comp.amax() < 1e-12);
        let with_dnu = &kkt.grad + &kkt.hess * &dy + kkt.g_jac.transpose() * &ex.dnu * kkt.dt;
        let eliminated = &kkt.grad_bar + &kkt.hess_bar * &dy;
        assert!((with_dnu - eliminated).amax() < 1e-10);
    }

    #[test]
    fn gradient_matches_lagrangian_fd() {
        let p = foot_problem();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let it = random_iterate(&p, &mut rng);
        let i = 1;
        let kkt = eval_kkt(&p, &it, i).unwrap();
        let st = &it.stages[i];
        let dt = p.dt();
        let lagrangian = |y: &DVector<f64>| -> f64 {
            let l = p.layout();
            let part = |r: Range<usize>| segment(y, r);
            let (q, v, a, f, u) = (part(l.q()), part(l.v()), part(l.a()), part(l.f()), part(l.u()));
            let c = eval_constraints(&p, i, y).unwrap();
            let tau = rnea(&p.tree, &q, &v, &a, &p.external_forces(&f)).unwrap();
            eval_cost(&p, i, y).unwrap().value
                + dt * (st.beta.dot(&(tau - &u)) + st.mu.dot(&c.c) + st.nu.dot(&(&c.g + &st.s)))
                + it.lambda(i + 1).dot(&(&q - it.q(i + 1) + &v * dt))
                + it.gamma(i + 1).dot(&(&v - it.v(i + 1) + &a * dt))
                - st.lambda.dot(&q)
                - st.gamma.dot(&v)
        };
        let y = it.stage_vector(i);
        let fd = crate::derivatives::fd_jacobian(|x| DVector::from_element(1, lagrangian(x)), &y, 1e-6);
        assert!((fd.transpose() - &kkt.grad).amax() < 1e-6);
    }

    #[test]
    fn initial_guess_is_interior() {
        let p = foot_problem();
        let q0 = DVector::from_vec(vec![0.0, 0.1, 0.4, -0.8]);
        let it = SolverIterate::initial_guess(&p, &q0, &DVector::zeros(4), 1e-2).unwrap();
        assert_eq!(it.first_non_interior(), None);
        assert!(eval_kkt(&p, &it, 0).unwrap().id_residual.amax() < 1e-12);
    }
}
