//! JSON experiment configuration.
//!
//! Every struct rejects unknown keys. Deserialization goes through
//! `serde_path_to_error`, so a bad value is reported with its JSON path
//! (`horizon.N`, `cost.q_weight`, ...).

use std::num::NonZeroUsize;
use std::path::{Path, PathBuf};

use nalgebra::{DMatrix, DVector, Vector3};
use rbocp::{
    chain, rnea, BoundsSpec, ContactSpec, Horizon, IlqrOptions, KinematicTree, ModelSource, OcpProblem,
    QuadraticCost, Regularization, SolverOptions,
};
use serde::Deserialize;

use crate::CliError;

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub model: ModelConfig,
    pub horizon: HorizonConfig,
    #[serde(default)]
    pub cost: CostConfig,
    #[serde(default)]
    pub bounds: BoundsConfig,
    #[serde(default)]
    pub contacts: Vec<ContactConfig>,
    #[serde(default)]
    pub passive_joints: Vec<usize>,
    #[serde(default)]
    pub initial_state: Option<InitialState>,
    #[serde(default)]
    pub solver: SolverConfig,
    #[serde(default)]
    pub ilqr: IlqrConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_trials")]
    pub trials: NonZeroUsize,
    #[serde(default = "default_threads")]
    pub threads: NonZeroUsize,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    #[serde(default)]
    pub benchmark: BenchmarkConfig,
}

fn default_trials() -> NonZeroUsize {
    NonZeroUsize::new(20).unwrap()
}

fn default_threads() -> NonZeroUsize {
    NonZeroUsize::MIN
}

/// `{"builtin": "chain7"}`, `{"chain": 14}` or `{"urdf": "robot.urdf"}`.
#[derive(Debug, Clone, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum ModelConfig {
    Builtin(String),
    Chain(NonZeroUsize),
    Urdf(PathBuf),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonConfig {
    #[serde(rename = "T")]
    pub length: f64,
    #[serde(rename = "N")]
    pub stages: NonZeroUsize,
}

/// A weight matrix given as a scalar multiple of identity, a diagonal or a
/// dense row-major matrix.
#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Weight {
    Scalar(f64),
    Diagonal(Vec<f64>),
    Dense(Vec<Vec<f64>>),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NamedReference {
    GravityCompensation,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
pub enum Reference {
    Vector(Vec<f64>),
    Named(NamedReference),
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CostConfig {
    pub q_weight: Option<Weight>,
    pub v_weight: Option<Weight>,
    pub a_weight: Option<Weight>,
    pub u_weight: Option<Weight>,
    pub f_weight: Option<Weight>,
    pub terminal_q_weight: Option<Weight>,
    pub terminal_v_weight: Option<Weight>,
    pub q_ref: Option<Vec<f64>>,
    pub v_ref: Option<Vec<f64>>,
    pub a_ref: Option<Vec<f64>>,
    /// A vector, or `"gravity_compensation"` for `rnea(q_ref, 0, 0)`.
    pub u_ref: Option<Reference>,
    pub f_ref: Option<Vec<f64>>,
}

/// Per-coordinate bounds; `null` entries are unbounded.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BoundsConfig {
    pub q_lower: Option<Vec<Option<f64>>>,
    pub q_upper: Option<Vec<Option<f64>>>,
    pub v_lower: Option<Vec<Option<f64>>>,
    pub v_upper: Option<Vec<Option<f64>>>,
    pub u_lower: Option<Vec<Option<f64>>>,
    pub u_upper: Option<Vec<Option<f64>>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ContactConfig {
    pub frame: String,
    pub p_ref: [f64; 3],
    #[serde(default = "default_omega")]
    pub omega: f64,
    #[serde(default = "default_zeta")]
    pub zeta: f64,
}

fn default_omega() -> f64 {
    ContactSpec::DEFAULT_OMEGA
}

fn default_zeta() -> f64 {
    ContactSpec::DEFAULT_ZETA
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    pub q: Vec<f64>,
    pub v: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverConfig {
    pub kkt_tol: f64,
    pub max_iters: usize,
    pub ftb_margin: f64,
    pub barrier_init: f64,
    pub barrier_decay: f64,
    pub barrier_min: f64,
    pub line_search: bool,
    /// Enables the default diagonal regularization schedule.
    pub regularization: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        let o = SolverOptions::default();
        Self {
            kkt_tol: o.kkt_tol,
            max_iters: o.max_iters,
            ftb_margin: o.ftb_margin,
            barrier_init: o.barrier_init,
            barrier_decay: o.barrier_decay,
            barrier_min: o.barrier_min,
            line_search: o.line_search,
            regularization: o.regularization.is_some(),
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IlqrConfig {
    pub max_iters: usize,
    pub tol: f64,
}

impl Default for IlqrConfig {
    fn default() -> Self {
        let o = IlqrOptions::default();
        Self { max_iters: o.max_iters, tol: o.tol }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchmarkConfig {
    /// Timed iterations per row, after the warm-up.
    pub trials: usize,
    pub warmup: usize,
    pub dofs: Vec<usize>,
    pub stages: Vec<usize>,
    pub threads: Vec<usize>,
    #[serde(rename = "T")]
    pub length: f64,
}

impl Default for BenchmarkConfig {
    fn default() -> Self {
        Self { trials: 1000, warmup: 10, dofs: vec![7, 14], stages: vec![50, 100], threads: vec![1, 4], length: 1.0 }
    }
}

/// Configuration used by `robustness` when no `--config` is given.
pub const CHAIN7_ROBUSTNESS: &str = include_str!("../../../configs/chain7_robustness.json");

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let cfg: Self = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            CliError::Config(format!("{path}: {}", e.into_inner()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn from_path(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |path: &str, msg: &str| Err(CliError::Config(format!("{path}: {msg}")));
        if !(self.horizon.length.is_finite() && self.horizon.length > 0.0) {
            return bad("horizon.T", "must be positive and finite");
        }
        if !(self.solver.kkt_tol > 0.0) {
            return bad("solver.kkt_tol", "must be positive");
        }
        if !(self.benchmark.length > 0.0) {
            return bad("benchmark.T", "must be positive");
        }
        for (name, list) in
            [("benchmark.dofs", &self.benchmark.dofs), ("benchmark.stages", &self.benchmark.stages), ("benchmark.threads", &self.benchmark.threads)]
        {
            if list.is_empty() || list.contains(&0) {
                return bad(name, "must be a non-empty list of positive integers");
            }
        }
        Ok(())
    }

    pub fn tree(&self) -> Result<KinematicTree, CliError> {
        let source = match &self.model {
            ModelConfig::Builtin(name) => ModelSource::Builtin(name.clone()),
            ModelConfig::Urdf(path) => ModelSource::Urdf(path.clone()),
            ModelConfig::Chain(dof) => return Ok(chain(dof.get())),
        };
        source.load().map_err(|e| CliError::Config(format!("model: {e}")))
    }

    pub fn problem(&self) -> Result<OcpProblem, CliError> {
        self.problem_for(self.tree()?, self.horizon.length, self.horizon.stages.get())
    }

    /// Builds the problem on `tree` with this config's cost, bounds and contacts.
    pub fn problem_for(&self, tree: KinematicTree, length: f64, stages: usize) -> Result<OcpProblem, CliError> {
        let n = tree.nv();
        let nf = 3 * self.contacts.len();
        let cost = self.cost.build(&tree, nf)?;
        let bounds = self.bounds.build(n)?;
        let contacts = self
            .contacts
            .iter()
            .map(|c| ContactSpec {
                frame: c.frame.clone(),
                p_ref: Vector3::from(c.p_ref),
                omega: c.omega,
                zeta: c.zeta,
            })
            .collect();
        let horizon = Horizon::new(length, stages).map_err(|e| CliError::Config(format!("horizon: {e}")))?;
        OcpProblem::new(tree, horizon, cost, contacts, bounds, self.passive_joints.clone())
            .map_err(|e| CliError::Config(e.to_string()))
    }

    pub fn initial_state(&self, n: usize) -> Result<(DVector<f64>, DVector<f64>), CliError> {
        match &self.initial_state {
            None => Ok((DVector::zeros(n), DVector::zeros(n))),
            Some(s) => Ok((
                vector("initial_state.q", &s.q, n)?,
                vector("initial_state.v", &s.v, n)?,
            )),
        }
    }

    pub fn solver_options(&self, threads: usize) -> SolverOptions {
        let s = &self.solver;
        SolverOptions {
            kkt_tol: s.kkt_tol,
            max_iters: s.max_iters,
            ftb_margin: s.ftb_margin,
            barrier_init: s.barrier_init,
            barrier_decay: s.barrier_decay,
            barrier_min: s.barrier_min,
            thread_count: threads,
            line_search: s.line_search,
            regularization: s.regularization.then(Regularization::default),
        }
    }

    pub fn ilqr_options(&self) -> IlqrOptions {
        IlqrOptions { max_iters: self.ilqr.max_iters, tol: self.ilqr.tol, ..IlqrOptions::default() }
    }
}

fn vector(path: &str, v: &[f64], n: usize) -> Result<DVector<f64>, CliError> {
    if v.len() != n {
        return Err(CliError::Config(format!("{path}: expected {n} entries, got {}", v.len())));
    }
    Ok(DVector::from_column_slice(v))
}

fn weight(path: &str, w: &Option<Weight>, n: usize) -> Result<DMatrix<f64>, CliError> {
    match w {
        None => Ok(DMatrix::zeros(n, n)),
        Some(Weight::Scalar(s)) => Ok(DMatrix::identity(n, n) * *s),
        Some(Weight::Diagonal(d)) => Ok(DMatrix::from_diagonal(&vector(path, d, n)?)),
        Some(Weight::Dense(rows)) => {
            if rows.len() != n || rows.iter().any(|r| r.len() != n) {
                return Err(CliError::Config(format!("{path}: expected a {n}×{n} matrix")));
            }
            Ok(DMatrix::from_fn(n, n, |i, j| rows[i][j]))
        }
    }
}

fn reference(path: &str, r: &Option<Vec<f64>>, n: usize) -> Result<DVector<f64>, CliError> {
    r.as_ref().map_or(Ok(DVector::zeros(n)), |v| vector(path, v, n))
}

impl CostConfig {
    fn build(&self, tree: &KinematicTree, nf: usize) -> Result<QuadraticCost, CliError> {
        let n = tree.nv();
        let q_ref = reference("cost.q_ref", &self.q_ref, n)?;
        let u_ref = match &self.u_ref {
            None => DVector::zeros(n),
            Some(Reference::Vector(v)) => vector("cost.u_ref", v, n)?,
            Some(Reference::Named(NamedReference::GravityCompensation)) => {
                rnea(tree, &q_ref, &DVector::zeros(n), &DVector::zeros(n), &[])
                    .map_err(|e| CliError::Config(format!("cost.u_ref: {e}")))?
            }
        };
        Ok(QuadraticCost {
            q_weight: weight("cost.q_weight", &self.q_weight, n)?,
            v_weight: weight("cost.v_weight", &self.v_weight, n)?,
            a_weight: weight("cost.a_weight", &self.a_weight, n)?,
            u_weight: weight("cost.u_weight", &self.u_weight, n)?,
            f_weight: weight("cost.f_weight", &self.f_weight, nf)?,
            terminal_q_weight: weight("cost.terminal_q_weight", &self.terminal_q_weight, n)?,
            terminal_v_weight: weight("cost.terminal_v_weight", &self.terminal_v_weight, n)?,
            v_ref: reference("cost.v_ref", &self.v_ref, n)?,
            a_ref: reference("cost.a_ref", &self.a_ref, n)?,
            f_ref: reference("cost.f_ref", &self.f_ref, nf)?,
            q_ref,
            u_ref,
        })
    }
}

impl BoundsConfig {
    fn build(&self, n: usize) -> Result<BoundsSpec, CliError> {
        let side = |path: &str, v: &Option<Vec<Option<f64>>>, inf: f64| -> Result<Option<DVector<f64>>, CliError> {
            v.as_ref()
                .map(|entries| {
                    let filled: Vec<f64> = entries.iter().map(|e| e.unwrap_or(inf)).collect();
                    vector(path, &filled, n)
                })
                .transpose()
        };
        Ok(BoundsSpec {
            q_lower: side("bounds.q_lower", &self.q_lower, f64::NEG_INFINITY)?,
            q_upper: side("bounds.q_upper", &self.q_upper, f64::INFINITY)?,
            v_lower: side("bounds.v_lower", &self.v_lower, f64::NEG_INFINITY)?,
            v_upper: side("bounds.v_upper", &self.v_upper, f64::INFINITY)?,
            u_lower: side("bounds.u_lower", &self.u_lower, f64::NEG_INFINITY)?,
            u_upper: side("bounds.u_upper", &self.u_upper, f64::INFINITY)?,
        })
    }
}
