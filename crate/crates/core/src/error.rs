use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch in {what}: expected {expected}, got {got}")]
    DimensionMismatch { what: &'static str, expected: usize, got: usize },

    #[error("unknown frame `{0}`")]
    UnknownFrame(String),

    #[error("unknown builtin model `{0}`")]
    UnknownModel(String),

    #[error("invalid model: {0}")]
    InvalidModel(String),

    #[error("URDF error at {line}:{column}: {message}")]
    Urdf { line: u32, column: u32, message: String },

    #[error("singular articulated inertia at link `{link}`")]
    SingularInertia { link: String },

    #[error("invalid problem: {0}")]
    InvalidProblem(String),

    #[error("iterate is not strictly interior at stage {stage}")]
    NonInterior { stage: usize },

    #[error("singular stage subproblem at stage {stage} (regularization {regularization:e})")]
    SingularStage { stage: usize, regularization: f64 },

    #[error("singular KKT system")]
    SingularSystem,

    #[error("rollout diverged at iteration {iteration}")]
    Diverged { iteration: usize },
}

pub(crate) fn check_dim(what: &'static str, expected: usize, got: usize) -> Result<()> {
    if expected == got {
        Ok(())
    } else {
        Err(Error::DimensionMismatch { what, expected, got })
    }
}
