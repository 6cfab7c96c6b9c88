//! Ready-made problems used by the experiment harness.

use std::f64::consts::FRAC_PI_2;

use nalgebra::{DMatrix, DVector};

use crate::dynamics::{frame_kinematics, rnea};
use crate::model_io::builtin;
use crate::error::Result;
use crate::ocp::{BoundsSpec, ContactSpec, Horizon, OcpProblem, QuadraticCost};
use crate::tree::KinematicTree;

/// Target posture of the `chain7` reaching task.
pub const CHAIN7_Q_REF: [f64; 7] = [0.0, FRAC_PI_2, 0.0, FRAC_PI_2, 0.0, FRAC_PI_2, 0.0];

/// Reference posture for a chain of any length: `CHAIN7_Q_REF` repeated.
pub fn chain_q_ref(dof: usize) -> DVector<f64> {
    DVector::from_fn(dof, |i, _| CHAIN7_Q_REF[i % 7])
}

/// `Q_q = Q_v = I`, `Q_u = 0.001·I` on stage and `Q_q = Q_v = I` at the
/// terminal stage, `v_ref = 0`, `u_ref` the gravity-compensation torque at `q_ref`.
pub fn reaching_cost(tree: &KinematicTree, q_ref: &DVector<f64>) -> Result<QuadraticCost> {
    let n = tree.nv();
    let mut cost = QuadraticCost::zeros(n, 0);
    let eye = DMatrix::<f64>::identity(n, n);
    cost.q_weight = eye.clone();
    cost.v_weight = eye.clone();
    cost.u_weight = &eye * 1e-3;
    cost.terminal_q_weight = eye.clone();
    cost.terminal_v_weight = eye;
    cost.q_ref = q_ref.clone();
    cost.u_ref = rnea(tree, q_ref, &DVector::zeros(n), &DVector::zeros(n), &[])?;
    Ok(cost)
}

/// Unconstrained reaching problem on `tree` towards `chain_q_ref`.
pub fn reaching_problem(tree: KinematicTree, length: f64, stages: usize) -> Result<OcpProblem> {
    let q_ref = chain_q_ref(tree.nv());
    let cost = reaching_cost(&tree, &q_ref)?;
    OcpProblem::unconstrained(tree, Horizon::new(length, stages)?, cost)
}

/// Posture around which [`foot_contact_problem`] is built
/// (`base_z`, `hip_roll`, `hip_pitch`, `knee`).
pub const FOOT_Q_NOMINAL: [f64; 4] = [0.0, 0.0, 0.5, -1.0];

/// Torque limit on every joint of [`foot_contact_problem`].
pub const FOOT_TORQUE_LIMIT: f64 = 10.0;

/// `planar_2link_foot` standing on its foot: passive vertical base, one
/// Baumgarte contact pinned where the foot sits at [`FOOT_Q_NOMINAL`],
/// symmetric torque bounds on the actuated joints, and a cost pulling the base 5 cm up.
pub fn foot_contact_problem(length: f64, stages: usize) -> Result<OcpProblem> {
    let tree = builtin("planar_2link_foot")?;
    let n = tree.nv();
    let q_nom = DVector::from_column_slice(&FOOT_Q_NOMINAL);
    let zero = DVector::zeros(n);
    let foot = frame_kinematics(&tree, &q_nom, &zero, &zero, "foot")?;
    let mass: f64 = tree.links().iter().map(|l| l.inertia.mass).sum();

    let mut cost = QuadraticCost::zeros(n, 3);
    cost.q_weight = DMatrix::identity(n, n) * 10.0;
    cost.v_weight = DMatrix::identity(n, n);
    cost.a_weight = DMatrix::identity(n, n) * 1e-3;
    cost.u_weight = DMatrix::identity(n, n) * 1e-3;
    cost.f_weight = DMatrix::identity(3, 3) * 1e-4;
    cost.terminal_q_weight = DMatrix::identity(n, n) * 10.0;
    cost.terminal_v_weight = DMatrix::identity(n, n);
    cost.q_ref = DVector::from_column_slice(&[0.05, 0.0, 0.35, -0.7]);
    cost.f_ref = DVector::from_column_slice(&[0.0, 0.0, mass * -tree.gravity().z]);

    let mut limit = DVector::from_element(n, FOOT_TORQUE_LIMIT);
    limit[0] = f64::INFINITY;
    let bounds = BoundsSpec { u_lower: Some(-&limit), u_upper: Some(limit), ..BoundsSpec::default() };
    OcpProblem::new(
        tree,
        Horizon::new(length, stages)?,
        cost,
        vec![ContactSpec::new("foot", foot.position)],
        bounds,
        vec![0],
    )
}
