//! Robot model ingestion: built-in models and a URDF subset.

mod builtin;
mod urdf;

use std::path::PathBuf;

pub use builtin::{
    builtin, chain, BUILTIN_NAMES, CHAIN7_COM_Z, CHAIN7_MASSES, CHAIN7_OFFSETS, PENDULUM_LENGTH, PENDULUM_MASS,
};
pub use urdf::{parse_urdf, to_urdf};

use crate::error::{Error, Result};
use crate::tree::KinematicTree;

/// Where a model comes from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum ModelSource {
    Builtin(String),
    Urdf(PathBuf),
}

impl ModelSource {
    pub fn load(&self) -> Result<KinematicTree> {
        match self {
            ModelSource::Builtin(name) => builtin(name),
            ModelSource::Urdf(path) => {
                let text = std::fs::read_to_string(path).map_err(|e| Error::Urdf {
                    line: 0,
                    column: 0,
                    message: format!("cannot read {}: {e}", path.display()),
                })?;
                parse_urdf(&text)
            }
        }
    }
}
