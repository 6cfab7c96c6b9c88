//! Reference implementations used to cross-check the structured solver on
//! small problems: the full uncondensed Newton system solved by dense LU, and
//! a KKT error built from a finite-difference Lagrangian gradient.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::derivatives::{contact_constraint, fd_jacobian, rnea_derivatives};
use crate::dynamics::{crba, frame_kinematics, rnea};
use crate::error::{Error, Result};
use crate::kkt::{condense, eval_kkt, eval_terminal, expand, initial_residual, stack, SolverIterate, StageExpansion};
use crate::model_io::{builtin, BUILTIN_NAMES};
use crate::ocp::{eval_constraints, eval_cost, BoundsSpec, ContactSpec, Horizon, OcpProblem, QuadraticCost};
use crate::riccati::{dense_solve, riccati_solve, Directions, Regularization};
use crate::spatial::{SpatialInertia, SpatialTransform};
use crate::tree::{Joint, KinematicTree};

/// Directions of every variable from the uncondensed system.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub directions: Directions,
    pub expansions: Vec<StageExpansion>,
}

struct StageIndex {
    y: usize,
    beta: usize,
    mu: usize,
    s: usize,
    nu: usize,
    pi: usize,
}

/// Newton step on the full primal-dual system
/// `(y, β, μ, s, ν, π)` without condensing, barrier elimination or Riccati.
pub fn full_newton_step(
    problem: &OcpProblem,
    iterate: &SolverIterate,
    q0: &DVector<f64>,
    v0: &DVector<f64>,
) -> Result<OracleSolution> {
    let l = problem.layout();
    let (n, nf, ny, nyr) = (l.n, l.nf, l.ny(), l.ny_reduced());
    let (mc, mg) = (problem.mc(), problem.mg());
    let nst = problem.stages();
    let dt = problem.dt();

    let mut idx = Vec::with_capacity(nst);
    let mut at = 0;
    for _ in 0..nst {
        let pi = at;
        let y = pi + 2 * n;
        let beta = y + ny;
        let mu = beta + n;
        let s = mu + mc;
        let nu = s + mg;
        at = nu + mg;
        idx.push(StageIndex { y, beta, mu, s, nu, pi });
    }
    let pi_n = at;
    let x_n = pi_n + 2 * n;
    let dim = x_n + 2 * n;
    let pi_of = |i: usize| if i < nst { idx[i].pi } else { pi_n };
    let x_of = |i: usize| if i < nst { idx[i].y } else { x_n };

    let mut k = DMatrix::zeros(dim, dim);
    let mut r = DVector::zeros(dim);
    let r0 = initial_residual(iterate, q0, v0)?;
    for j in 0..2 * n {
        k[(j, idx[0].y + j)] = -1.0;
        r[j] = -r0[j];
    }
    for (i, ix) in idx.iter().enumerate() {
        let kkt = eval_kkt(problem, iterate, i)?;
        let mut id_full = DMatrix::zeros(n, ny);
        id_full.view_mut((0, 0), (n, nyr)).copy_from(&kkt.id_jac);
        for j in 0..n {
            id_full[(j, nyr + j)] = -1.0;
        }
        // stationarity in y
        k.view_mut((ix.y, ix.y), (ny, ny)).copy_from(&kkt.hess);
        k.view_mut((ix.y, ix.beta), (ny, n)).copy_from(&(id_full.transpose() * dt));
        k.view_mut((ix.y, ix.mu), (ny, mc)).copy_from(&(kkt.c_jac.transpose() * dt));
        k.view_mut((ix.y, ix.nu), (ny, mg)).copy_from(&(kkt.g_jac.transpose() * dt));
        let next = pi_of(i + 1);
        for j in 0..n {
            k[(ix.y + j, ix.pi + j)] -= 1.0;
            k[(ix.y + n + j, ix.pi + n + j)] -= 1.0;
            k[(ix.y + j, next + j)] += 1.0;
            k[(ix.y + n + j, next + j)] += dt;
            k[(ix.y + n + j, next + n + j)] += 1.0;
            k[(ix.y + 2 * n + j, next + n + j)] += dt;
        }
        r.rows_mut(ix.y, ny).copy_from(&(-&kkt.grad));
        // inverse dynamics, equalities, slacks, complementarity
        k.view_mut((ix.beta, ix.y), (n, ny)).copy_from(&id_full);
        r.rows_mut(ix.beta, n).copy_from(&(-&kkt.id_residual));
        k.view_mut((ix.mu, ix.y), (mc, ny)).copy_from(&kkt.c_jac);
        r.rows_mut(ix.mu, mc).copy_from(&(-&kkt.c));
        k.view_mut((ix.s, ix.y), (mg, ny)).copy_from(&kkt.g_jac);
        for j in 0..mg {
            k[(ix.s + j, ix.s + j)] = 1.0;
            k[(ix.nu + j, ix.s + j)] = kkt.nu[j];
            k[(ix.nu + j, ix.nu + j)] = kkt.s[j];
        }
        r.rows_mut(ix.s, mg).copy_from(&(-kkt.slack_residual()));
        r.rows_mut(ix.nu, mg).copy_from(&(-kkt.complementarity()));
        // transition to stage i + 1, in the π_{i+1} rows
        let xn = x_of(i + 1);
        for j in 0..2 * n {
            k[(next + j, ix.y + j)] = 1.0;
            k[(next + j, xn + j)] = -1.0;
        }
        for j in 0..n {
            k[(next + j, ix.y + n + j)] = dt;
            k[(next + n + j, ix.y + 2 * n + j)] = dt;
        }
        r.rows_mut(next, 2 * n).copy_from(&(-&kkt.dyn_residual));
    }
    let term = eval_terminal(problem, iterate)?;
    k.view_mut((x_n, x_n), (2 * n, 2 * n)).copy_from(&term.hess);
    for j in 0..2 * n {
        k[(x_n + j, pi_n + j)] = -1.0;
    }
    r.rows_mut(x_n, 2 * n).copy_from(&(-&term.grad));

    let sol = k.full_piv_lu().solve(&r).ok_or(Error::SingularSystem)?;
    if sol.iter().any(|x| !x.is_finite()) {
        return Err(Error::SingularSystem);
    }
    let seg = |a: usize, len: usize| sol.rows(a, len).into_owned();
    let mut dirs = Directions {
        dq: vec![],
        dv: vec![],
        da: vec![],
        df: vec![],
        dmu: vec![],
        dlambda: vec![],
        dgamma: vec![],
    };
    let mut expansions = Vec::with_capacity(nst);
    for ix in &idx {
        dirs.dlambda.push(seg(ix.pi, n));
        dirs.dgamma.push(seg(ix.pi + n, n));
        dirs.dq.push(seg(ix.y, n));
        dirs.dv.push(seg(ix.y + n, n));
        dirs.da.push(seg(ix.y + 2 * n, n));
        dirs.df.push(seg(ix.y + 3 * n, nf));
        dirs.dmu.push(seg(ix.mu, mc));
        expansions.push(StageExpansion {
            du: seg(ix.y + nyr, n),
            dbeta: seg(ix.beta, n),
            ds: seg(ix.s, mg),
            dnu: seg(ix.nu, mg),
        });
    }
    dirs.dlambda.push(seg(pi_n, n));
    dirs.dgamma.push(seg(pi_n + n, n));
    dirs.dq.push(seg(x_n, n));
    dirs.dv.push(seg(x_n + n, n));
    Ok(OracleSolution { directions: dirs, expansions })
}

/// Lagrangian of the whole problem as a function of the primal trajectory,
/// with all multipliers and slacks taken from `iterate`.
fn lagrangian(
    problem: &OcpProblem,
    iterate: &SolverIterate,
    q0: &DVector<f64>,
    v0: &DVector<f64>,
    primal: &[DVector<f64>],
) -> Result<f64> {
    let l = problem.layout();
    let n = l.n;
    let nst = problem.stages();
    let dt = problem.dt();
    let state = |i: usize| (primal[i].rows(0, n).into_owned(), primal[i].rows(n, n).into_owned());
    let (qa, va) = state(0);
    let mut total = iterate.lambda(0).dot(&(q0 - qa)) + iterate.gamma(0).dot(&(v0 - va));
    for i in 0..nst {
        let y = &primal[i];
        let st = &iterate.stages[i];
        let seg = |r: std::ops::Range<usize>| y.rows(r.start, r.len()).into_owned();
        let (q, v, a, f, u) = (seg(l.q()), seg(l.v()), seg(l.a()), seg(l.f()), seg(l.u()));
        let tau = rnea(&problem.tree, &q, &v, &a, &problem.external_forces(&f))?;
        let cons = eval_constraints(problem, i, y)?;
        let (q1, v1) = state(i + 1);
        total += eval_cost(problem, i, y)?.value
            + dt * (st.beta.dot(&(tau - u)) + st.mu.dot(&cons.c) + st.nu.dot(&(cons.g + &st.s)))
            + iterate.lambda(i + 1).dot(&(&q - q1 + &v * dt))
            + iterate.gamma(i + 1).dot(&(&v - v1 + &a * dt));
    }
    Ok(total + eval_cost(problem, nst, &primal[nst])?.value)
}

/// KKT error with the stationarity part taken from a central-difference
/// gradient of the total Lagrangian and every other residual evaluated
/// directly from the problem functions.
pub fn fd_kkt_error(problem: &OcpProblem, iterate: &SolverIterate, q0: &DVector<f64>, v0: &DVector<f64>) -> Result<f64> {
    let nst = problem.stages();
    let primal: Vec<DVector<f64>> = (0..=nst).map(|i| iterate.stage_vector(i)).collect();
    let sizes: Vec<usize> = primal.iter().map(|p| p.len()).collect();
    let flat = stack(&primal.iter().collect::<Vec<_>>());
    let unflatten = |x: &DVector<f64>| {
        let mut at = 0;
        sizes
            .iter()
            .map(|&len| {
                let v = x.rows(at, len).into_owned();
                at += len;
                v
            })
            .collect::<Vec<_>>()
    };
    lagrangian(problem, iterate, q0, v0, &primal)?;
    let grad = fd_jacobian(
        |x| DVector::from_element(1, lagrangian(problem, iterate, q0, v0, &unflatten(x)).unwrap_or(f64::NAN)),
        &flat,
        1e-6,
    );
    let mut sq = grad.norm_squared();
    let l = problem.layout();
    let n = l.n;
    let dt = problem.dt();
    for i in 0..nst {
        let y = &primal[i];
        let st = &iterate.stages[i];
        let seg = |r: std::ops::Range<usize>| y.rows(r.start, r.len()).into_owned();
        let (q, v, a, f, u) = (seg(l.q()), seg(l.v()), seg(l.a()), seg(l.f()), seg(l.u()));
        let tau = rnea(&problem.tree, &q, &v, &a, &problem.external_forces(&f))?;
        let cons = eval_constraints(problem, i, y)?;
        let next = &primal[i + 1];
        sq += (tau - u).norm_squared()
            + (&q - next.rows(0, n) + &v * dt).norm_squared()
            + (&v - next.rows(n, n) + &a * dt).norm_squared()
            + dt * dt * (cons.c.norm_squared() + (cons.g + &st.s).norm_squared())
            + st.s.component_mul(&st.nu).add_scalar(-iterate.barrier).norm_squared();
    }
    sq += (q0 - iterate.q(0)).norm_squared() + (v0 - iterate.v(0)).norm_squared();
    Ok(sq.sqrt())
}

/// Largest `|x − y|` relative to `max(1, |y|_∞)` over every direction block.
pub fn relative_difference(dirs: &Directions, exps: &[StageExpansion], oracle: &OracleSolution) -> f64 {
    let scale = oracle
        .expansions
        .iter()
        .flat_map(|e| [&e.du, &e.dbeta, &e.ds, &e.dnu])
        .map(|v| v.amax())
        .fold(oracle.directions.amax(), f64::max)
        .max(1.0);
    let exp_diff = exps
        .iter()
        .zip(&oracle.expansions)
        .flat_map(|(a, b)| {
            [(&a.du, &b.du), (&a.dbeta, &b.dbeta), (&a.ds, &b.ds), (&a.dnu, &b.dnu)].map(|(x, y)| (x - y).amax())
        })
        .fold(0.0, f64::max);
    dirs.max_difference(&oracle.directions).max(exp_diff) / scale
}

/// Prismatic unit-axis point mass without gravity: `u = m·a`.
pub fn double_integrator(mass: f64) -> KinematicTree {
    let mut tree = KinematicTree::with_gravity(Vector3::zeros());
    let link = tree
        .add_link(
            "mass",
            Joint::prismatic("slide", None, Vector3::x(), SpatialTransform::identity()),
            SpatialInertia::point_mass(mass, Vector3::zeros()),
        )
        .expect("valid model");
    tree.add_frame("point", link, SpatialTransform::identity()).expect("valid model");
    tree
}

/// Fixed-base three-joint leg (roll, pitch, knee pitch) whose `foot` frame
/// has a full-rank point Jacobian away from the straight-knee posture.
pub fn three_link_leg() -> KinematicTree {
    let mut tree = KinematicTree::new();
    let seg = 0.35;
    let hip = tree
        .add_link(
            "hip",
            Joint::revolute("hip_roll", None, Vector3::x(), SpatialTransform::identity()),
            SpatialInertia::new(0.3, Vector3::zeros(), Matrix3::identity() * 1e-3),
        )
        .expect("valid model");
    let thigh = tree
        .add_link(
            "thigh",
            Joint::revolute("hip_pitch", Some(hip), Vector3::y(), SpatialTransform::identity()),
            SpatialInertia::rod(1.0, -Vector3::z(), seg),
        )
        .expect("valid model");
    let shank = tree
        .add_link(
            "shank",
            Joint::revolute("knee", Some(thigh), Vector3::y(), SpatialTransform::from_translation(-Vector3::z() * seg)),
            SpatialInertia::rod(0.6, -Vector3::z(), seg),
        )
        .expect("valid model");
    tree.add_frame("foot", shank, SpatialTransform::from_translation(-Vector3::z() * seg)).expect("valid model");
    tree
}

/// A randomized problem together with a random interior iterate.
#[derive(Debug, Clone)]
pub struct Instance {
    pub problem: OcpProblem,
    pub iterate: SolverIterate,
    pub q0: DVector<f64>,
    pub v0: DVector<f64>,
}

fn random_vec(rng: &mut ChaCha8Rng, len: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(len, |_, _| scale * rng.gen_range(-1.0..1.0))
}

fn random_psd(rng: &mut ChaCha8Rng, k: usize, floor: f64) -> DMatrix<f64> {
    let m = DMatrix::from_fn(k, k, |_, _| rng.gen_range(-1.0..1.0));
    let s = &m * m.transpose() * 0.5 + DMatrix::identity(k, k) * floor;
    (&s + s.transpose()) * 0.5
}

/// Random instance with `n ∈ {1, 2, 3}`, `n_f ∈ {0, 3}` (contacts only on
/// the three-joint leg), optional passive joint, optional bounds and
/// `N ∈ 1..=8`.
pub fn random_instance(seed: u64) -> Result<Instance> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (tree, contact) = match rng.gen_range(0..4) {
        0 => (builtin("pendulum")?, false),
        1 => (builtin("double_pendulum")?, false),
        2 => (three_link_leg(), false),
        _ => (three_link_leg(), true),
    };
    let n = tree.nv();
    let nf = if contact { 3 } else { 0 };
    let stages = rng.gen_range(1..=8);
    let horizon = Horizon::new(0.05 * stages as f64 * rng.gen_range(0.5..2.0), stages)?;
    let mut cost = QuadraticCost::zeros(n, nf);
    cost.q_weight = random_psd(&mut rng, n, 0.1);
    cost.v_weight = random_psd(&mut rng, n, 0.01);
    cost.a_weight = random_psd(&mut rng, n, 1e-3);
    cost.u_weight = random_psd(&mut rng, n, 1e-3);
    cost.f_weight = random_psd(&mut rng, nf, 1e-3);
    cost.terminal_q_weight = random_psd(&mut rng, n, 0.0);
    cost.terminal_v_weight = random_psd(&mut rng, n, 0.0);
    cost.q_ref = random_vec(&mut rng, n, 1.0);
    cost.v_ref = random_vec(&mut rng, n, 1.0);
    cost.u_ref = random_vec(&mut rng, n, 1.0);
    cost.f_ref = random_vec(&mut rng, nf, 1.0);
    let contacts = if contact {
        vec![ContactSpec {
            omega: rng.gen_range(5.0..20.0),
            zeta: rng.gen_range(0.5..1.5),
            ..ContactSpec::new("foot", Vector3::new(0.1, 0.0, -0.5))
        }]
    } else {
        Vec::new()
    };
    let passive = if n > 1 && rng.gen_bool(0.5) { vec![rng.gen_range(0..n)] } else { Vec::new() };
    let bounds = if rng.gen_bool(0.5) {
        BoundsSpec {
            u_lower: Some(DVector::from_element(n, -50.0)),
            u_upper: Some(DVector::from_element(n, 50.0)),
            q_upper: Some(DVector::from_element(n, 3.0)),
            ..Default::default()
        }
    } else {
        BoundsSpec::default()
    };
    let problem = OcpProblem::new(tree, horizon, cost, contacts, bounds, passive)?;

    let mut iterate = SolverIterate::zeros(&problem);
    for st in &mut iterate.stages {
        st.q = random_vec(&mut rng, n, 1.0);
        // keep the knee away from the straight, rank-deficient posture
        if contact {
            st.q[2] = rng.gen_range(0.4..1.4);
        }
        st.v = random_vec(&mut rng, n, 1.0);
        st.a = random_vec(&mut rng, n, 1.0);
        st.f = random_vec(&mut rng, nf, 5.0);
        st.u = random_vec(&mut rng, n, 2.0);
        st.beta = random_vec(&mut rng, n, 1.0);
        st.mu = random_vec(&mut rng, problem.mc(), 1.0);
        st.lambda = random_vec(&mut rng, n, 1.0);
        st.gamma = random_vec(&mut rng, n, 1.0);
        st.s = DVector::from_fn(problem.mg(), |_, _| rng.gen_range(0.1..2.0));
        st.nu = DVector::from_fn(problem.mg(), |_, _| rng.gen_range(0.1..2.0));
    }
    iterate.terminal.q = random_vec(&mut rng, n, 1.0);
    iterate.terminal.v = random_vec(&mut rng, n, 1.0);
    iterate.terminal.lambda = random_vec(&mut rng, n, 1.0);
    iterate.terminal.gamma = random_vec(&mut rng, n, 1.0);
    iterate.barrier = rng.gen_range(1e-4..1e-1);
    let q0 = random_vec(&mut rng, n, 1.0);
    let v0 = random_vec(&mut rng, n, 1.0);
    Ok(Instance { problem, iterate, q0, v0 })
}

/// Structured directions (Riccati + expansion) for an instance.
pub fn structured_step(inst: &Instance, reg: Option<Regularization>) -> Result<(Directions, Vec<StageExpansion>)> {
    let p = &inst.problem;
    let kkts: Vec<_> = (0..p.stages()).map(|i| eval_kkt(p, &inst.iterate, i)).collect::<Result<_>>()?;
    let cond: Vec<_> = kkts.iter().map(condense).collect();
    let term = eval_terminal(p, &inst.iterate)?;
    let init = initial_residual(&inst.iterate, &inst.q0, &inst.v0)?;
    let sol = riccati_solve(&cond, &term, &init, reg)?;
    let exps = kkts.iter().enumerate().map(|(i, k)| expand(k, &sol.directions.reduced(i), &sol.directions.dmu[i])).collect();
    Ok((sol.directions, exps))
}

/// Outcome of one randomized comparison suite.
#[derive(Debug, Clone, PartialEq)]
pub struct SuiteReport {
    pub instances: usize,
    pub max_error: f64,
}

/// Condensed + Riccati + expansion against the full uncondensed solve.
pub fn check_condensing(instances: usize, seed: u64) -> Result<SuiteReport> {
    let mut worst: f64 = 0.0;
    for k in 0..instances {
        let inst = random_instance(seed.wrapping_add(k as u64))?;
        let (dirs, exps) = structured_step(&inst, None)?;
        let full = full_newton_step(&inst.problem, &inst.iterate, &inst.q0, &inst.v0)?;
        worst = worst.max(relative_difference(&dirs, &exps, &full));
    }
    Ok(SuiteReport { instances, max_error: worst })
}

/// Riccati against the dense LU solve of the same condensed system.
pub fn check_riccati(instances: usize, seed: u64) -> Result<SuiteReport> {
    let mut worst: f64 = 0.0;
    for k in 0..instances {
        let inst = random_instance(seed.wrapping_add(k as u64))?;
        let p = &inst.problem;
        let cond: Vec<_> =
            (0..p.stages()).map(|i| eval_kkt(p, &inst.iterate, i).map(|k| condense(&k))).collect::<Result<_>>()?;
        let term = eval_terminal(p, &inst.iterate)?;
        let init = initial_residual(&inst.iterate, &inst.q0, &inst.v0)?;
        let r = riccati_solve(&cond, &term, &init, None)?;
        let d = dense_solve(&cond, &term, &init)?;
        worst = worst.max(r.directions.max_difference(&d) / d.amax().max(1.0));
    }
    Ok(SuiteReport { instances, max_error: worst })
}

/// Plain-arithmetic discrete Riccati recursion for the double integrator
/// `x = (q, v)`, scalar input `a`, stage weights `(wq, wv, r)` and terminal
/// weights `(tq, tv)`. Returns `P_0 … P_N` as `[p11, p12, p22]`.
pub fn scalar_riccati(dt: f64, wq: f64, wv: f64, r: f64, tq: f64, tv: f64, stages: usize) -> Vec<[f64; 3]> {
    let mut out = vec![[0.0; 3]; stages + 1];
    let (mut p11, mut p12, mut p22) = (tq, 0.0, tv);
    out[stages] = [p11, p12, p22];
    for i in (0..stages).rev() {
        // AᵀPA with A = [[1, dt], [0, 1]]
        let a11 = p11;
        let a12 = dt * p11 + p12;
        let a22 = dt * dt * p11 + 2.0 * dt * p12 + p22;
        // BᵀPA and BᵀPB with B = [0, dt]ᵀ
        let b1 = dt * p12;
        let b2 = dt * (dt * p12 + p22);
        let bb = dt * dt * p22 + r;
        p11 = wq + a11 - b1 * b1 / bb;
        p12 = a12 - b1 * b2 / bb;
        p22 = wv + a22 - b2 * b2 / bb;
        out[i] = [p11, p12, p22];
    }
    out
}

/// Largest entry gap between the solver's `P_i` on a double-integrator
/// problem and [`scalar_riccati`].
pub fn check_scalar_riccati() -> Result<f64> {
    let mass = 2.0;
    let (wq, wv, wa, wu, tq, tv) = (1.5, 0.3, 0.05, 0.2, 4.0, 1.0);
    let stages = 12;
    let mut cost = QuadraticCost::zeros(1, 0);
    cost.q_weight[(0, 0)] = wq;
    cost.v_weight[(0, 0)] = wv;
    cost.a_weight[(0, 0)] = wa;
    cost.u_weight[(0, 0)] = wu;
    cost.terminal_q_weight[(0, 0)] = tq;
    cost.terminal_v_weight[(0, 0)] = tv;
    let problem = OcpProblem::unconstrained(double_integrator(mass), Horizon::new(0.6, stages)?, cost)?;
    let dt = problem.dt();
    let q0 = DVector::from_element(1, 1.0);
    let v0 = DVector::zeros(1);
    let it = SolverIterate::initial_guess(&problem, &q0, &v0, 0.0)?;
    let cond: Vec<_> =
        (0..stages).map(|i| eval_kkt(&problem, &it, i).map(|k| condense(&k))).collect::<Result<_>>()?;
    let term = eval_terminal(&problem, &it)?;
    let init = initial_residual(&it, &q0, &v0)?;
    let sol = riccati_solve(&cond, &term, &init, None)?;
    let oracle = scalar_riccati(dt, wq * dt, wv * dt, (wa + mass * mass * wu) * dt, tq, tv, stages);
    let mut worst: f64 = 0.0;
    for (f, o) in sol.factors.iter().zip(&oracle) {
        let p = &f.p_mat;
        worst = worst.max((p[(0, 0)] - o[0]).abs()).max((p[(0, 1)] - o[1]).abs()).max((p[(1, 1)] - o[2]).abs());
    }
    Ok(worst)
}

/// Worst errors of the analytic derivatives over random states.
#[derive(Debug, Clone, PartialEq)]
pub struct DerivativeReport {
    pub states: usize,
    /// `ID_q, ID_v, ID_a, ID_f` against central differences.
    pub rnea_fd: f64,
    /// Contact Jacobians against central differences.
    pub contact_fd: f64,
    /// [`crba`] against unit-acceleration differences of [`rnea`], which are
    /// exact because inverse dynamics is affine in `a`.
    pub crba: f64,
    /// `ID_f` against `−Jᵀ`.
    pub jacobian_transpose: f64,
}

/// Runs every built-in model through `states` random `(q, v, a, f)` points.
pub fn check_derivatives(states: usize, seed: u64, h: f64) -> Result<DerivativeReport> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut rep = DerivativeReport { states: 0, rnea_fd: 0.0, contact_fd: 0.0, crba: 0.0, jacobian_transpose: 0.0 };
    for name in BUILTIN_NAMES {
        let tree = builtin(name)?;
        let n = tree.nv();
        let frame_name = tree.frames().last().map(|f| f.name.clone()).unwrap_or_default();
        let frame = tree.frame_index(&frame_name)?;
        let spec = ContactSpec { omega: 12.0, zeta: 0.8, ..ContactSpec::new(&frame_name, Vector3::new(0.1, -0.2, 0.3)) };
        for _ in 0..states {
            let q = random_vec(&mut rng, n, std::f64::consts::PI);
            let v = random_vec(&mut rng, n, 2.0);
            let a = random_vec(&mut rng, n, 2.0);
            let f = random_vec(&mut rng, 3, 10.0);
            let fext = [crate::dynamics::ExternalForce::new(frame, Vector3::new(f[0], f[1], f[2]))];
            let d = rnea_derivatives(&tree, &q, &v, &a, &fext)?;
            let ext = |f: &DVector<f64>| [crate::dynamics::ExternalForce::new(frame, Vector3::new(f[0], f[1], f[2]))];
            let rn = |q: &DVector<f64>, v: &DVector<f64>, a: &DVector<f64>, f: &DVector<f64>| {
                rnea(&tree, q, v, a, &ext(f)).unwrap_or_else(|_| DVector::from_element(n, f64::NAN))
            };
            let fd_q = fd_jacobian(|x| rn(x, &v, &a, &f), &q, h);
            let fd_v = fd_jacobian(|x| rn(&q, x, &a, &f), &v, h);
            let fd_a = fd_jacobian(|x| rn(&q, &v, x, &f), &a, h);
            let fd_f = fd_jacobian(|x| rn(&q, &v, &a, x), &f, h);
            rep.rnea_fd = [(&fd_q - &d.dq).amax(), (&fd_v - &d.dv).amax(), (&fd_a - &d.da).amax(), (&fd_f - &d.df).amax()]
                .into_iter()
                .fold(rep.rnea_fd, f64::max);
            let m = crba(&tree, &q)?;
            let base = rn(&q, &v, &DVector::zeros(n), &f);
            for j in 0..n {
                let col = rn(&q, &v, &DVector::from_fn(n, |i, _| f64::from(u8::from(i == j))), &f) - &base;
                rep.crba = rep.crba.max((&col - m.column(j)).amax());
            }
            rep.crba = rep.crba.max((&m - &d.da).amax());
            let jac = frame_kinematics(&tree, &q, &v, &a, &frame_name)?.jacobian;
            let jt = -jac.transpose();
            let jt_err = (0..n).flat_map(|r| (0..3).map(move |c| (r, c))).map(|(r, c)| (jt[(r, c)] - d.df[(r, c)]).abs());
            rep.jacobian_transpose = jt_err.fold(rep.jacobian_transpose, f64::max);

            let c = contact_constraint(&tree, &q, &v, &a, &spec)?;
            let res = |q: &DVector<f64>, v: &DVector<f64>, a: &DVector<f64>| {
                contact_constraint(&tree, q, v, a, &spec)
                    .map(|c| DVector::from_column_slice(c.residual.as_slice()))
                    .unwrap_or_else(|_| DVector::from_element(3, f64::NAN))
            };
            let pairs = [
                (fd_jacobian(|x| res(x, &v, &a), &q, h), &c.dq),
                (fd_jacobian(|x| res(&q, x, &a), &v, h), &c.dv),
                (fd_jacobian(|x| res(&q, &v, x), &a, h), &c.da),
            ];
            for (fd, an) in pairs {
                let err = (0..3).flat_map(|r| (0..n).map(move |k| (r, k))).map(|(r, k)| (fd[(r, k)] - an[(r, k)]).abs());
                rep.contact_fd = err.fold(rep.contact_fd, f64::max);
            }
            rep.states += 1;
        }
    }
    Ok(rep)
}
