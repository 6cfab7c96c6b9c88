//! Optimal-control problem description and stage-wise evaluation of its
//! cost and constraints.
//!
//! Each intermediate stage `i < N` carries the primal stack
//! `y = (q, v, a, f, u)`; see [`StageLayout`] for the ordering. The terminal
//! stage only carries `(q, v)`.

use std::ops::Range;

use nalgebra::{DMatrix, DVector, Vector3};

use crate::derivatives::contact_constraint_at;
use crate::dynamics::ExternalForce;
use crate::error::{check_dim, Error, Result};
use crate::tree::KinematicTree;

/// Horizon length `T` split into `N` equal stages.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Horizon {
    length: f64,
    stages: usize,
}

impl Horizon {
    pub fn new(length: f64, stages: usize) -> Result<Self> {
        if !(length > 0.0) || !length.is_finite() {
            return Err(Error::InvalidProblem(format!("horizon length must be positive, got {length}")));
        }
        if stages < 1 {
            return Err(Error::InvalidProblem("horizon needs at least one stage".into()));
        }
        Ok(Self { length, stages })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn stages(&self) -> usize {
        self.stages
    }

    pub fn dt(&self) -> f64 {
        self.length / self.stages as f64
    }
}

/// Index ranges of the stage primal stack `y = (q, v, a, f, u)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StageLayout {
    pub n: usize,
    pub nf: usize,
}

impl StageLayout {
    pub fn q(&self) -> Range<usize> {
        0..self.n
    }
    pub fn v(&self) -> Range<usize> {
        self.n..2 * self.n
    }
    pub fn a(&self) -> Range<usize> {
        2 * self.n..3 * self.n
    }
    pub fn f(&self) -> Range<usize> {
        3 * self.n..3 * self.n + self.nf
    }
    pub fn u(&self) -> Range<usize> {
        3 * self.n + self.nf..4 * self.n + self.nf
    }
    /// Size of `y`.
    pub fn ny(&self) -> usize {
        4 * self.n + self.nf
    }
    /// Size of `ỹ = (q, v, a, f)`.
    pub fn ny_reduced(&self) -> usize {
        3 * self.n + self.nf
    }
    /// Size of the Riccati control `(a, f)`.
    pub fn nw(&self) -> usize {
        self.n + self.nf
    }
}

/// Quadratic tracking cost. Stage terms are multiplied by `Δτ`; terminal terms are not.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadraticCost {
    pub q_weight: DMatrix<f64>,
    pub v_weight: DMatrix<f64>,
    pub a_weight: DMatrix<f64>,
    pub u_weight: DMatrix<f64>,
    pub f_weight: DMatrix<f64>,
    pub terminal_q_weight: DMatrix<f64>,
    pub terminal_v_weight: DMatrix<f64>,
    pub q_ref: DVector<f64>,
    pub v_ref: DVector<f64>,
    pub a_ref: DVector<f64>,
    pub u_ref: DVector<f64>,
    pub f_ref: DVector<f64>,
}

impl QuadraticCost {
    /// All weights and references zero.
    pub fn zeros(n: usize, nf: usize) -> Self {
        Self {
            q_weight: DMatrix::zeros(n, n),
            v_weight: DMatrix::zeros(n, n),
            a_weight: DMatrix::zeros(n, n),
            u_weight: DMatrix::zeros(n, n),
            f_weight: DMatrix::zeros(nf, nf),
            terminal_q_weight: DMatrix::zeros(n, n),
            terminal_v_weight: DMatrix::zeros(n, n),
            q_ref: DVector::zeros(n),
            v_ref: DVector::zeros(n),
            a_ref: DVector::zeros(n),
            u_ref: DVector::zeros(n),
            f_ref: DVector::zeros(nf),
        }
    }

    fn validate(&self, n: usize, nf: usize) -> Result<()> {
        let square = |name: &str, m: &DMatrix<f64>, k: usize| -> Result<()> {
            if m.nrows() != k || m.ncols() != k {
                return Err(Error::InvalidProblem(format!("{name} must be {k}×{k}, got {}×{}", m.nrows(), m.ncols())));
            }
            if (m - m.transpose()).amax() > 1e-12 {
                return Err(Error::InvalidProblem(format!("{name} is not symmetric")));
            }
            if k > 0 && m.clone().symmetric_eigenvalues().min() < -1e-12 {
                return Err(Error::InvalidProblem(format!("{name} is not positive semidefinite")));
            }
            Ok(())
        };
        square("q_weight", &self.q_weight, n)?;
        square("v_weight", &self.v_weight, n)?;
        square("a_weight", &self.a_weight, n)?;
        square("u_weight", &self.u_weight, n)?;
        square("f_weight", &self.f_weight, nf)?;
        square("terminal_q_weight", &self.terminal_q_weight, n)?;
        square("terminal_v_weight", &self.terminal_v_weight, n)?;
        check_dim("q_ref", n, self.q_ref.len())?;
        check_dim("v_ref", n, self.v_ref.len())?;
        check_dim("a_ref", n, self.a_ref.len())?;
        check_dim("u_ref", n, self.u_ref.len())?;
        check_dim("f_ref", nf, self.f_ref.len())
    }
}

/// A point contact held over the whole horizon through a Baumgarte-stabilized
/// acceleration constraint.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactSpec {
    pub frame: String,
    pub p_ref: Vector3<f64>,
    pub omega: f64,
    pub zeta: f64,
}

impl ContactSpec {
    pub const DEFAULT_OMEGA: f64 = 10.0;
    pub const DEFAULT_ZETA: f64 = 1.0;

    pub fn new(frame: &str, p_ref: Vector3<f64>) -> Self {
        Self { frame: frame.to_string(), p_ref, omega: Self::DEFAULT_OMEGA, zeta: Self::DEFAULT_ZETA }
    }
}

/// Per-coordinate box bounds; infinite entries are dropped.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct BoundsSpec {
    pub q_lower: Option<DVector<f64>>,
    pub q_upper: Option<DVector<f64>>,
    pub v_lower: Option<DVector<f64>>,
    pub v_upper: Option<DVector<f64>>,
    pub u_lower: Option<DVector<f64>>,
    pub u_upper: Option<DVector<f64>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundedVar {
    Q,
    V,
    U,
}

/// One row of `g(y) ≤ 0`: `x − upper` or `lower − x`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundRow {
    pub var: BoundedVar,
    pub index: usize,
    pub upper: bool,
    pub value: f64,
}

#[derive(Debug, Clone)]
pub struct OcpProblem {
    pub tree: KinematicTree,
    pub horizon: Horizon,
    pub cost: QuadraticCost,
    pub contacts: Vec<ContactSpec>,
    pub bounds: BoundsSpec,
    pub passive_joints: Vec<usize>,
    contact_frames: Vec<usize>,
    bound_rows: Vec<BoundRow>,
}

impl OcpProblem {
    pub fn new(
        tree: KinematicTree,
        horizon: Horizon,
        cost: QuadraticCost,
        contacts: Vec<ContactSpec>,
        bounds: BoundsSpec,
        passive_joints: Vec<usize>,
    ) -> Result<Self> {
        let n = tree.nv();
        let nf = 3 * contacts.len();
        cost.validate(n, nf)?;
        let mut contact_frames = Vec::with_capacity(contacts.len());
        for c in &contacts {
            contact_frames.push(tree.frame_index(&c.frame)?);
            if !(c.omega > 0.0 && c.zeta > 0.0) {
                return Err(Error::InvalidProblem(format!("contact `{}` needs positive Baumgarte gains", c.frame)));
            }
        }
        let mut passive = passive_joints.clone();
        passive.sort_unstable();
        passive.dedup();
        if passive.len() != passive_joints.len() || passive.iter().any(|&j| j >= n) {
            return Err(Error::InvalidProblem("passive joint indices must be distinct and < nv".into()));
        }

        let mut bound_rows = Vec::new();
        let sides = [
            (BoundedVar::Q, &bounds.q_lower, &bounds.q_upper),
            (BoundedVar::V, &bounds.v_lower, &bounds.v_upper),
            (BoundedVar::U, &bounds.u_lower, &bounds.u_upper),
        ];
        for (var, lower, upper) in sides {
            if let Some(l) = lower {
                check_dim("lower bound", n, l.len())?;
            }
            if let Some(u) = upper {
                check_dim("upper bound", n, u.len())?;
            }
            for idx in 0..n {
                let lo = lower.as_ref().map_or(f64::NEG_INFINITY, |l| l[idx]);
                let hi = upper.as_ref().map_or(f64::INFINITY, |u| u[idx]);
                if lo.is_nan() || hi.is_nan() || (lo.is_finite() && hi.is_finite() && lo > hi) {
                    return Err(Error::InvalidProblem(format!("inconsistent bounds on {var:?}[{idx}]")));
                }
                if hi.is_finite() {
                    bound_rows.push(BoundRow { var, index: idx, upper: true, value: hi });
                }
                if lo.is_finite() {
                    bound_rows.push(BoundRow { var, index: idx, upper: false, value: lo });
                }
            }
        }
        Ok(Self { tree, horizon, cost, contacts, bounds, passive_joints, contact_frames, bound_rows })
    }

    /// Unconstrained problem with the given cost.
    pub fn unconstrained(tree: KinematicTree, horizon: Horizon, cost: QuadraticCost) -> Result<Self> {
        Self::new(tree, horizon, cost, Vec::new(), BoundsSpec::default(), Vec::new())
    }

    pub fn nv(&self) -> usize {
        self.tree.nv()
    }
    /// Stacked contact-force dimension `n_f`.
    pub fn nf(&self) -> usize {
        3 * self.contacts.len()
    }
    /// Equality-constraint dimension `m_c`.
    pub fn mc(&self) -> usize {
        self.nf() + self.passive_joints.len()
    }
    /// Inequality-constraint dimension `m_g`.
    pub fn mg(&self) -> usize {
        self.bound_rows.len()
    }
    pub fn layout(&self) -> StageLayout {
        StageLayout { n: self.nv(), nf: self.nf() }
    }
    pub fn stages(&self) -> usize {
        self.horizon.stages()
    }
    pub fn dt(&self) -> f64 {
        self.horizon.dt()
    }
    pub fn bound_rows(&self) -> &[BoundRow] {
        &self.bound_rows
    }
    pub fn contact_frames(&self) -> &[usize] {
        &self.contact_frames
    }

    /// Contact forces of a stacked force vector, in contact order.
    pub fn external_forces(&self, f: &DVector<f64>) -> Vec<ExternalForce> {
        self.contact_frames
            .iter()
            .enumerate()
            .map(|(k, &frame)| ExternalForce::new(frame, Vector3::new(f[3 * k], f[3 * k + 1], f[3 * k + 2])))
            .collect()
    }
}

/// Cost value with exact gradient and (Gauss-Newton) Hessian.
#[derive(Debug, Clone, PartialEq)]
pub struct CostEval {
    pub value: f64,
    pub gradient: DVector<f64>,
    pub hessian: DMatrix<f64>,
}

fn add_quadratic(
    out: &mut CostEval,
    range: Range<usize>,
    x: &DVector<f64>,
    reference: &DVector<f64>,
    weight: &DMatrix<f64>,
    scale: f64,
) {
    if range.is_empty() {
        return;
    }
    let e = x - reference;
    let we = weight * &e;
    out.value += 0.5 * e.dot(&we) * scale;
    out.gradient.rows_mut(range.start, range.len()).axpy(scale, &we, 1.0);
    let mut block = out.hessian.view_mut((range.start, range.start), (range.len(), range.len()));
    block += weight * scale;
}

/// Stage cost `l(y)·Δτ` for `i < N` (with `y` the full stage stack) or the
/// terminal cost for `i = N` (with `y = (q, v)`).
pub fn eval_cost(problem: &OcpProblem, stage: usize, y: &DVector<f64>) -> Result<CostEval> {
    let layout = problem.layout();
    let c = &problem.cost;
    let n = layout.n;
    if stage == problem.stages() {
        check_dim("terminal stage vector", 2 * n, y.len())?;
        let mut out = CostEval { value: 0.0, gradient: DVector::zeros(2 * n), hessian: DMatrix::zeros(2 * n, 2 * n) };
        add_quadratic(&mut out, 0..n, &y.rows(0, n).into_owned(), &c.q_ref, &c.terminal_q_weight, 1.0);
        add_quadratic(&mut out, n..2 * n, &y.rows(n, n).into_owned(), &c.v_ref, &c.terminal_v_weight, 1.0);
        return Ok(out);
    }
    if stage > problem.stages() {
        return Err(Error::InvalidProblem(format!("stage {stage} beyond horizon")));
    }
    check_dim("stage vector", layout.ny(), y.len())?;
    let dt = problem.dt();
    let ny = layout.ny();
    let mut out = CostEval { value: 0.0, gradient: DVector::zeros(ny), hessian: DMatrix::zeros(ny, ny) };
    let part = |r: Range<usize>| y.rows(r.start, r.len()).into_owned();
    add_quadratic(&mut out, layout.q(), &part(layout.q()), &c.q_ref, &c.q_weight, dt);
    add_quadratic(&mut out, layout.v(), &part(layout.v()), &c.v_ref, &c.v_weight, dt);
    add_quadratic(&mut out, layout.a(), &part(layout.a()), &c.a_ref, &c.a_weight, dt);
    add_quadratic(&mut out, layout.f(), &part(layout.f()), &c.f_ref, &c.f_weight, dt);
    add_quadratic(&mut out, layout.u(), &part(layout.u()), &c.u_ref, &c.u_weight, dt);
    Ok(out)
}

/// Equality residual `C(y)`, inequality residual `g(y)` and their Jacobians
/// with respect to the full stage stack. Values are not scaled by `Δτ`.
#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintEval {
    pub c: DVector<f64>,
    pub c_jac: DMatrix<f64>,
    pub g: DVector<f64>,
    pub g_jac: DMatrix<f64>,
}

/// Constraint rows for stage `i < N`: contact rows first (three per contact),
/// then one row per passive joint; bounds as one-sided rows. The terminal
/// stage has no constraints.
pub fn eval_constraints(problem: &OcpProblem, stage: usize, y: &DVector<f64>) -> Result<ConstraintEval> {
    let layout = problem.layout();
    let ny = layout.ny();
    if stage >= problem.stages() {
        return Ok(ConstraintEval {
            c: DVector::zeros(0),
            c_jac: DMatrix::zeros(0, 2 * layout.n),
            g: DVector::zeros(0),
            g_jac: DMatrix::zeros(0, 2 * layout.n),
        });
    }
    check_dim("stage vector", ny, y.len())?;
    let (mc, mg) = (problem.mc(), problem.mg());
    let mut out = ConstraintEval {
        c: DVector::zeros(mc),
        c_jac: DMatrix::zeros(mc, ny),
        g: DVector::zeros(mg),
        g_jac: DMatrix::zeros(mg, ny),
    };
    let n = layout.n;
    let q = y.rows(0, n).into_owned();
    let v = y.rows(n, n).into_owned();
    let a = y.rows(2 * n, n).into_owned();
    for (k, (spec, &frame)) in problem.contacts.iter().zip(problem.contact_frames()).enumerate() {
        let cc = contact_constraint_at(&problem.tree, &q, &v, &a, frame, spec)?;
        out.c.rows_mut(3 * k, 3).copy_from(&cc.residual);
        out.c_jac.view_mut((3 * k, 0), (3, n)).copy_from(&cc.dq);
        out.c_jac.view_mut((3 * k, n), (3, n)).copy_from(&cc.dv);
        out.c_jac.view_mut((3 * k, 2 * n), (3, n)).copy_from(&cc.da);
    }
    let u0 = layout.u().start;
    for (r, &j) in problem.passive_joints.iter().enumerate() {
        let row = problem.nf() + r;
        out.c[row] = y[u0 + j];
        out.c_jac[(row, u0 + j)] = 1.0;
    }
    for (r, b) in problem.bound_rows().iter().enumerate() {
        let col = match b.var {
            BoundedVar::Q => layout.q().start,
            BoundedVar::V => layout.v().start,
            BoundedVar::U => layout.u().start,
        } + b.index;
        if b.upper {
            out.g[r] = y[col] - b.value;
            out.g_jac[(r, col)] = 1.0;
        } else {
            out.g[r] = b.value - y[col];
            out.g_jac[(r, col)] = -1.0;
        }
    }
    Ok(out)
}
