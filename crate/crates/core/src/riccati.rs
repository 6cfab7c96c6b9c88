//! Backward Riccati recursion on the condensed KKT system and a dense
//! reference solve of the same system.
//!
//! The state is `x = (q, v)` and the stage control `w = (a, f)`. The
//! linearized transition is `Δx' = AΔx + BΔw + b` with
//! `A = [[I, ΔτI], [0, I]]` and `B = [[0, 0], [ΔτI, 0]]`; only their block
//! structure is used by the recursion.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::kkt::{CondensedStage, TerminalKkt};

/// Block structure of the Euler transition.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StageTransition {
    pub n: usize,
    pub nf: usize,
    pub dt: f64,
}

impl StageTransition {
    pub fn a_matrix(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut a = DMatrix::identity(2 * n, 2 * n);
        for k in 0..n {
            a[(k, n + k)] = self.dt;
        }
        a
    }

    pub fn b_matrix(&self) -> DMatrix<f64> {
        let n = self.n;
        let mut b = DMatrix::zeros(2 * n, n + self.nf);
        for k in 0..n {
            b[(n + k, k)] = self.dt;
        }
        b
    }

    /// `AᵀPA`.
    pub fn at_p_a(&self, p: &DMatrix<f64>) -> DMatrix<f64> {
        let (n, dt) = (self.n, self.dt);
        let p11 = p.view((0, 0), (n, n));
        let p12 = p.view((0, n), (n, n));
        let p21 = p.view((n, 0), (n, n));
        let p22 = p.view((n, n), (n, n));
        let mut out = DMatrix::zeros(2 * n, 2 * n);
        out.view_mut((0, 0), (n, n)).copy_from(&p11);
        out.view_mut((0, n), (n, n)).copy_from(&(p11 * dt + p12));
        out.view_mut((n, 0), (n, n)).copy_from(&(p11 * dt + p21));
        out.view_mut((n, n), (n, n)).copy_from(&(p11 * (dt * dt) + (p12 + p21) * dt + p22));
        out
    }

    /// `BᵀPB`; only the `aa` block is non-zero.
    pub fn bt_p_b(&self, p: &DMatrix<f64>) -> DMatrix<f64> {
        let n = self.n;
        let mut out = DMatrix::zeros(n + self.nf, n + self.nf);
        out.view_mut((0, 0), (n, n)).copy_from(&(p.view((n, n), (n, n)) * (self.dt * self.dt)));
        out
    }

    /// `BᵀPA`; only the `a` rows are non-zero.
    pub fn bt_p_a(&self, p: &DMatrix<f64>) -> DMatrix<f64> {
        let (n, dt) = (self.n, self.dt);
        let p21 = p.view((n, 0), (n, n));
        let p22 = p.view((n, n), (n, n));
        let mut out = DMatrix::zeros(n + self.nf, 2 * n);
        out.view_mut((0, 0), (n, n)).copy_from(&(p21 * dt));
        out.view_mut((0, n), (n, n)).copy_from(&((p21 * dt + p22) * dt));
        out
    }

    /// `Aᵀx`.
    pub fn at_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        let mut out = x.clone();
        let top = x.rows(0, n) * self.dt;
        let mut bottom = out.rows_mut(n, n);
        bottom += top;
        out
    }

    /// `Bᵀx`.
    pub fn bt_vec(&self, x: &DVector<f64>) -> DVector<f64> {
        let n = self.n;
        let mut out = DVector::zeros(n + self.nf);
        out.rows_mut(0, n).copy_from(&(x.rows(n, n) * self.dt));
        out
    }

    /// `AΔx + BΔw + b`.
    pub fn step(&self, dx: &DVector<f64>, dw: &DVector<f64>, b: &DVector<f64>) -> DVector<f64> {
        let (n, dt) = (self.n, self.dt);
        let mut out = dx + b;
        {
            let mut top = out.rows_mut(0, n);
            top.axpy(dt, &dx.rows(n, n), 1.0);
        }
        {
            let mut bottom = out.rows_mut(n, n);
            bottom.axpy(dt, &dw.rows(0, n), 1.0);
        }
        out
    }
}

/// Optional diagonal regularization `diag(δI, −δI)` of the stage subproblem,
/// increased by `factor` after each failed factorization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Regularization {
    pub initial: f64,
    pub factor: f64,
    pub max: f64,
}

impl Default for Regularization {
    fn default() -> Self {
        Self { initial: 1e-9, factor: 10.0, max: 1e-3 }
    }
}

/// Value function and feedback law of one stage.
#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiFactor {
    /// `Δπ_i = P Δx_i + p`.
    pub p_mat: DMatrix<f64>,
    pub p_vec: DVector<f64>,
    /// `(Δw, Δμ) = K Δx + k`.
    pub gain: DMatrix<f64>,
    pub feedforward: DVector<f64>,
    /// Largest entry of `P − Pᵀ` before symmetrization.
    pub asymmetry: f64,
    /// Regularization used to factor this stage (0 when none).
    pub regularization: f64,
}

/// Newton directions of the condensed variables. All vectors are indexed by
/// stage; `dq, dv, dlambda, dgamma` have `N + 1` entries, the rest `N`.
#[derive(Debug, Clone, PartialEq)]
pub struct Directions {
    pub dq: Vec<DVector<f64>>,
    pub dv: Vec<DVector<f64>>,
    pub da: Vec<DVector<f64>>,
    pub df: Vec<DVector<f64>>,
    pub dmu: Vec<DVector<f64>>,
    pub dlambda: Vec<DVector<f64>>,
    pub dgamma: Vec<DVector<f64>>,
}

impl Directions {
    /// `Δỹ_i = (Δq, Δv, Δa, Δf)` for `i < N`.
    pub fn reduced(&self, i: usize) -> DVector<f64> {
        crate::kkt::stack(&[&self.dq[i], &self.dv[i], &self.da[i], &self.df[i]])
    }

    /// Largest absolute difference to `other` over all components.
    pub fn max_difference(&self, other: &Directions) -> f64 {
        let groups = [
            (&self.dq, &other.dq),
            (&self.dv, &other.dv),
            (&self.da, &other.da),
            (&self.df, &other.df),
            (&self.dmu, &other.dmu),
            (&self.dlambda, &other.dlambda),
            (&self.dgamma, &other.dgamma),
        ];
        groups
            .iter()
            .flat_map(|(a, b)| a.iter().zip(b.iter()).map(|(x, y)| (x - y).amax()))
            .fold(0.0, f64::max)
    }

    /// Largest absolute component.
    pub fn amax(&self) -> f64 {
        [&self.dq, &self.dv, &self.da, &self.df, &self.dmu, &self.dlambda, &self.dgamma]
            .iter()
            .flat_map(|g| g.iter().map(|x| x.amax()))
            .fold(0.0, f64::max)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RiccatiSolution {
    pub directions: Directions,
    pub factors: Vec<RiccatiFactor>,
}

fn transition(st: &CondensedStage) -> StageTransition {
    StageTransition { n: st.layout.n, nf: st.layout.nf, dt: st.dt }
}

fn check_stages(stages: &[CondensedStage], terminal: &TerminalKkt, initial: &DVector<f64>) -> Result<usize> {
    if stages.is_empty() {
        return Err(Error::InvalidProblem("no stages to solve".into()));
    }
    let n = stages[0].layout.n;
    if terminal.grad.len() != 2 * n || initial.len() != 2 * n {
        return Err(Error::DimensionMismatch { what: "terminal/initial", expected: 2 * n, got: terminal.grad.len() });
    }
    Ok(n)
}

/// Solves `[[G + δI, Dᵀ], [D, −δI]] z = rhs` and flags near-singular pivots.
fn solve_stage_kkt(
    g: &DMatrix<f64>,
    d: &DMatrix<f64>,
    rhs: &DMatrix<f64>,
    delta: f64,
) -> Option<DMatrix<f64>> {
    let (nw, mc) = (g.nrows(), d.nrows());
    let mut s = DMatrix::zeros(nw + mc, nw + mc);
    s.view_mut((0, 0), (nw, nw)).copy_from(g);
    s.view_mut((nw, 0), (mc, nw)).copy_from(d);
    s.view_mut((0, nw), (nw, mc)).copy_from(&d.transpose());
    for k in 0..nw {
        s[(k, k)] += delta;
    }
    for k in 0..mc {
        s[(nw + k, nw + k)] -= delta;
    }
    let scale = s.amax().max(1.0);
    let lu = s.full_piv_lu();
    let u = lu.u();
    let min_pivot = u.diagonal().iter().fold(f64::INFINITY, |m, x| m.min(x.abs()));
    if !(min_pivot > 1e-13 * scale) {
        return None;
    }
    let z = lu.solve(rhs)?;
    z.iter().all(|x| x.is_finite()).then_some(z)
}

/// Backward Riccati recursion followed by the forward rollout of the
/// directions. `initial` is `(q̄ − q_0, v̄ − v_0)`.
pub fn riccati_solve(
    stages: &[CondensedStage],
    terminal: &TerminalKkt,
    initial: &DVector<f64>,
    regularization: Option<Regularization>,
) -> Result<RiccatiSolution> {
    let n = check_stages(stages, terminal, initial)?;
    let nst = stages.len();
    let mut factors: Vec<RiccatiFactor> = Vec::with_capacity(nst);
    let mut p_next = terminal.hess.clone();
    let mut pv_next = terminal.grad.clone();

    for st in stages.iter().rev() {
        let tr = transition(st);
        let nw = st.layout.nw();
        let mc = st.c.len();
        let h = &st.hess;
        let h_xx = h.view((0, 0), (2 * n, 2 * n));
        let h_wx = h.view((2 * n, 0), (nw, 2 * n));
        let h_ww = h.view((2 * n, 2 * n), (nw, nw));
        let g_x = st.grad.rows(0, 2 * n);
        let g_w = st.grad.rows(2 * n, nw);

        let pb = &p_next * &st.dyn_residual + &pv_next;
        let gmat = h_ww + tr.bt_p_b(&p_next);
        let hx = h_wx + tr.bt_p_a(&p_next);
        let gw = g_w + tr.bt_vec(&pb);
        let d = st.c_jac.columns(2 * n, nw) * st.dt;
        let e = st.c_jac.columns(0, 2 * n) * st.dt;
        let ev = &st.c * st.dt;

        // F = [Hx; E]ᵀ, rhs = −[[Hx, g], [E, e]]
        let mut rhs = DMatrix::zeros(nw + mc, 2 * n + 1);
        rhs.view_mut((0, 0), (nw, 2 * n)).copy_from(&hx);
        rhs.view_mut((nw, 0), (mc, 2 * n)).copy_from(&e);
        rhs.view_mut((0, 2 * n), (nw, 1)).copy_from(&gw);
        rhs.view_mut((nw, 2 * n), (mc, 1)).copy_from(&ev);
        let f = rhs.columns(0, 2 * n).transpose();
        rhs.neg_mut();

        let mut delta = 0.0;
        let sol = loop {
            if let Some(z) = solve_stage_kkt(&gmat, &d.clone_owned(), &rhs, delta) {
                break z;
            }
            match regularization {
                Some(r) if delta == 0.0 => delta = r.initial,
                Some(r) if delta * r.factor <= r.max * (1.0 + 1e-12) => delta *= r.factor,
                _ => return Err(Error::SingularStage { stage: st.stage, regularization: delta }),
            }
        };
        let gain = sol.columns(0, 2 * n).into_owned();
        let feedforward = sol.column(2 * n).into_owned();

        let mut p_mat = h_xx + tr.at_p_a(&p_next) + &f * &gain;
        let asymmetry = (&p_mat - p_mat.transpose()).amax();
        p_mat = (&p_mat + p_mat.transpose()) * 0.5;
        let p_vec = g_x + tr.at_vec(&pb) + &f * &feedforward;
        factors.push(RiccatiFactor {
            p_mat: p_mat.clone(),
            p_vec: p_vec.clone(),
            gain,
            feedforward,
            asymmetry,
            regularization: delta,
        });
        p_next = p_mat;
        pv_next = p_vec;
    }
    factors.reverse();

    let mut dirs = Directions {
        dq: Vec::with_capacity(nst + 1),
        dv: Vec::with_capacity(nst + 1),
        da: Vec::with_capacity(nst),
        df: Vec::with_capacity(nst),
        dmu: Vec::with_capacity(nst),
        dlambda: Vec::with_capacity(nst + 1),
        dgamma: Vec::with_capacity(nst + 1),
    };
    let mut dx = initial.clone();
    for (st, fac) in stages.iter().zip(&factors) {
        let nw = st.layout.nw();
        let z = &fac.gain * &dx + &fac.feedforward;
        let dw = z.rows(0, nw).into_owned();
        let dpi = &fac.p_mat * &dx + &fac.p_vec;
        push_state(&mut dirs, &dx, &dpi, n);
        dirs.da.push(dw.rows(0, n).into_owned());
        dirs.df.push(dw.rows(n, st.layout.nf).into_owned());
        dirs.dmu.push(z.rows(nw, st.c.len()).into_owned());
        dx = transition(st).step(&dx, &dw, &st.dyn_residual);
    }
    let dpi = &terminal.hess * &dx + &terminal.grad;
    push_state(&mut dirs, &dx, &dpi, n);
    Ok(RiccatiSolution { directions: dirs, factors })
}

fn push_state(dirs: &mut Directions, dx: &DVector<f64>, dpi: &DVector<f64>, n: usize) {
    dirs.dq.push(dx.rows(0, n).into_owned());
    dirs.dv.push(dx.rows(n, n).into_owned());
    dirs.dlambda.push(dpi.rows(0, n).into_owned());
    dirs.dgamma.push(dpi.rows(n, n).into_owned());
}

/// Block offsets of the dense condensed system: stage `i` holds
/// `(Δλ_i, Δγ_i, Δq_i, Δv_i, Δa_i, Δf_i, Δμ_i)`, the terminal block `(Δλ_N, Δγ_N, Δq_N, Δv_N)`.
fn dense_offsets(stages: &[CondensedStage], n: usize) -> (Vec<usize>, usize) {
    let mut offsets = Vec::with_capacity(stages.len() + 1);
    let mut at = 0;
    for st in stages {
        offsets.push(at);
        at += 5 * n + st.layout.nf + st.c.len();
    }
    offsets.push(at);
    (offsets, at + 4 * n)
}

/// Assembles the symmetric condensed KKT matrix and right-hand side.
pub fn dense_system(
    stages: &[CondensedStage],
    terminal: &TerminalKkt,
    initial: &DVector<f64>,
) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let n = check_stages(stages, terminal, initial)?;
    let (offsets, dim) = dense_offsets(stages, n);
    let mut k = DMatrix::zeros(dim, dim);
    let mut r = DVector::zeros(dim);
    let eye = DMatrix::<f64>::identity(2 * n, 2 * n);

    // initial condition row: −Δx_0 + r_init = 0
    k.view_mut((0, 2 * n), (2 * n, 2 * n)).copy_from(&(-&eye));
    k.view_mut((2 * n, 0), (2 * n, 2 * n)).copy_from(&(-&eye));
    r.rows_mut(0, 2 * n).copy_from(&(-initial));

    for (i, st) in stages.iter().enumerate() {
        let tr = transition(st);
        let o = offsets[i];
        let x = o + 2 * n;
        let nyr = st.layout.ny_reduced();
        let mu = x + nyr;
        let mc = st.c.len();
        let next = offsets[i + 1];
        k.view_mut((x, x), (nyr, nyr)).copy_from(&st.hess);
        r.rows_mut(x, nyr).copy_from(&(-&st.grad));
        let cj = &st.c_jac * st.dt;
        k.view_mut((mu, x), (mc, nyr)).copy_from(&cj);
        k.view_mut((x, mu), (nyr, mc)).copy_from(&cj.transpose());
        r.rows_mut(mu, mc).copy_from(&(-&st.c * st.dt));
        // transition rows live in the π block of stage i+1
        let mut ab = DMatrix::zeros(2 * n, nyr);
        ab.view_mut((0, 0), (2 * n, 2 * n)).copy_from(&tr.a_matrix());
        ab.view_mut((0, 2 * n), (2 * n, st.layout.nw())).copy_from(&tr.b_matrix());
        k.view_mut((next, x), (2 * n, nyr)).copy_from(&ab);
        k.view_mut((x, next), (nyr, 2 * n)).copy_from(&ab.transpose());
        k.view_mut((next, next + 2 * n), (2 * n, 2 * n)).copy_from(&(-&eye));
        k.view_mut((next + 2 * n, next), (2 * n, 2 * n)).copy_from(&(-&eye));
        r.rows_mut(next, 2 * n).copy_from(&(-&st.dyn_residual));
    }
    let xn = offsets[stages.len()] + 2 * n;
    k.view_mut((xn, xn), (2 * n, 2 * n)).copy_from(&terminal.hess);
    r.rows_mut(xn, 2 * n).copy_from(&(-&terminal.grad));
    Ok((k, r))
}

/// Solves the condensed system by a dense LU factorization.
pub fn dense_solve(stages: &[CondensedStage], terminal: &TerminalKkt, initial: &DVector<f64>) -> Result<Directions> {
    let n = check_stages(stages, terminal, initial)?;
    let (k, r) = dense_system(stages, terminal, initial)?;
    let sol = k.full_piv_lu().solve(&r).ok_or(Error::SingularSystem)?;
    if sol.iter().any(|x| !x.is_finite()) {
        return Err(Error::SingularSystem);
    }
    let (offsets, _) = dense_offsets(stages, n);
    let nst = stages.len();
    let seg = |at: usize, len: usize| sol.rows(at, len).into_owned();
    let mut dirs = Directions {
        dq: Vec::with_capacity(nst + 1),
        dv: Vec::with_capacity(nst + 1),
        da: Vec::with_capacity(nst),
        df: Vec::with_capacity(nst),
        dmu: Vec::with_capacity(nst),
        dlambda: Vec::with_capacity(nst + 1),
        dgamma: Vec::with_capacity(nst + 1),
    };
    for (i, st) in stages.iter().enumerate() {
        let o = offsets[i];
        dirs.dlambda.push(seg(o, n));
        dirs.dgamma.push(seg(o + n, n));
        dirs.dq.push(seg(o + 2 * n, n));
        dirs.dv.push(seg(o + 3 * n, n));
        dirs.da.push(seg(o + 4 * n, n));
        dirs.df.push(seg(o + 5 * n, st.layout.nf));
        dirs.dmu.push(seg(o + 5 * n + st.layout.nf, st.c.len()));
    }
    let o = offsets[nst];
    dirs.dlambda.push(seg(o, n));
    dirs.dgamma.push(seg(o + n, n));
    dirs.dq.push(seg(o + 2 * n, n));
    dirs.dv.push(seg(o + 3 * n, n));
    Ok(dirs)
}
