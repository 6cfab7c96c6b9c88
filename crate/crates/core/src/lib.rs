//! Multiple-shooting optimal control for rigid-body systems, with inverse
//! dynamics kept as an equality constraint and a Riccati-based interior-point
//! Newton solver.
//!
//! ```
//! use rbocp::{builtin, rnea};
//! use nalgebra::DVector;
//!
//! let tree = builtin("pendulum").unwrap();
//! let zero = DVector::zeros(1);
//! let tau = rnea(&tree, &zero, &zero, &zero, &[]).unwrap();
//! assert!(tau[0].abs() < 1e-12);
//! ```

pub mod derivatives;
pub mod dynamics;
pub mod error;
pub mod ilqr;
pub mod kkt;
pub mod model_io;
pub mod ocp;
pub mod oracle;
pub mod presets;
pub mod riccati;
pub mod solver;
pub mod spatial;
pub mod tree;

pub use derivatives::{contact_constraint, fd_jacobian, rnea_derivatives, ContactConstraint, IdDerivatives};
pub use dynamics::{aba, crba, frame_kinematics, rnea, ExternalForce, FrameKinematics};
pub use error::{Error, Result};
pub use ilqr::{ilqr_solve, IlqrOptions, IlqrRecord, IlqrResult, IlqrStatus};
pub use kkt::{condense, eval_kkt, eval_terminal, expand, CondensedStage, SolverIterate, StageKkt, TerminalKkt};
pub use model_io::{builtin, chain, parse_urdf, to_urdf, ModelSource};
pub use ocp::{
    eval_constraints, eval_cost, BoundsSpec, ContactSpec, CostEval, ConstraintEval, Horizon, OcpProblem,
    QuadraticCost, StageLayout,
};
pub use riccati::{dense_solve, riccati_solve, Directions, Regularization, RiccatiFactor};
pub use solver::{
    fraction_to_boundary, kkt_error, solve, NewtonSolver, SolveResult, SolveStatus, SolverOptions, SolverTrace,
    TraceRecord,
};
pub use spatial::{SpatialInertia, SpatialTransform, SpatialVector};
pub use tree::{config_diff, config_diff_jacobians, config_integrate, Frame, Joint, JointKind, KinematicTree, Link};
