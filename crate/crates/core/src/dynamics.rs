//! Rigid-body dynamics algorithms over a [`KinematicTree`].
//!
//! Every quantity is expressed in world coordinates about the world origin.
//! In that representation the motion subspace of each joint changes with the
//! configuration, but no coordinate transforms appear in the recursions and
//! the configuration derivatives have a compact closed form
//! (`∂S_k/∂q_j = S_j × S_k` for every joint `j` supporting link `k`).

use nalgebra::{DMatrix, DVector, Matrix3xX, Matrix6, Vector3, Vector6};

use crate::error::{Error, Result};
use crate::spatial::{SpatialInertia, SpatialTransform, SpatialVector};
use crate::tree::{JointKind, KinematicTree};

/// A 3-D point force (world frame) applied at the origin of a named frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExternalForce {
    pub frame: usize,
    pub force: Vector3<f64>,
}

impl ExternalForce {
    pub fn new(frame: usize, force: Vector3<f64>) -> Self {
        Self { frame, force }
    }
}

/// World-frame kinematic quantities of every link.
#[derive(Debug, Clone)]
pub(crate) struct TreeState {
    pub pose: Vec<SpatialTransform>,
    pub subspace: Vec<SpatialVector>,
    pub vel: Vec<SpatialVector>,
    pub acc: Vec<SpatialVector>,
    pub inertia: Vec<SpatialInertia>,
    pub qd: Vec<f64>,
    pub qdd: Vec<f64>,
}

pub(crate) fn tree_state(
    tree: &KinematicTree,
    q: &DVector<f64>,
    v: &DVector<f64>,
    a: &DVector<f64>,
    with_gravity: bool,
) -> TreeState {
    let nb = tree.links().len();
    let mut st = TreeState {
        pose: Vec::with_capacity(nb),
        subspace: Vec::with_capacity(nb),
        vel: Vec::with_capacity(nb),
        acc: Vec::with_capacity(nb),
        inertia: Vec::with_capacity(nb),
        qd: Vec::with_capacity(nb),
        qdd: Vec::with_capacity(nb),
    };
    let root_acc = if with_gravity {
        SpatialVector::new(Vector3::zeros(), -tree.gravity())
    } else {
        SpatialVector::zero()
    };
    for (k, link) in tree.links().iter().enumerate() {
        let joint = &link.joint;
        let (parent_pose, parent_vel, parent_acc) = match joint.parent {
            Some(p) => (st.pose[p], st.vel[p], st.acc[p]),
            None => (SpatialTransform::identity(), SpatialVector::zero(), root_acc),
        };
        let joint_frame = parent_pose.compose(&joint.frame_offset);
        let (qk, qdk, qddk) = match tree.dof_of_link(k) {
            Some(i) => (q[i], v[i], a[i]),
            None => (0.0, 0.0, 0.0),
        };
        let pose = joint_frame.compose(&joint.motion(qk));
        let s = match joint.kind {
            JointKind::Revolute => {
                let w = joint_frame.rotation * joint.axis;
                SpatialVector::new(w, pose.translation.cross(&w))
            }
            JointKind::Prismatic => SpatialVector::new(Vector3::zeros(), joint_frame.rotation * joint.axis),
            JointKind::Fixed => SpatialVector::zero(),
        };
        let vel = parent_vel + s * qdk;
        let acc = parent_acc + s * qddk + vel.cross_motion(&s) * qdk;
        st.inertia.push(link.inertia.transformed(&pose));
        st.pose.push(pose);
        st.subspace.push(s);
        st.vel.push(vel);
        st.acc.push(acc);
        st.qd.push(qdk);
        st.qdd.push(qddk);
    }
    st
}

pub(crate) fn frame_point(tree: &KinematicTree, st: &TreeState, frame: usize) -> Vector3<f64> {
    let fr = &tree.frames()[frame];
    st.pose[fr.link].transform_point(&fr.offset.translation)
}

fn check_inputs(tree: &KinematicTree, q: &DVector<f64>, v: &DVector<f64>, a: &DVector<f64>) -> Result<()> {
    tree.check_config("q", q)?;
    tree.check_config("v", v)?;
    tree.check_config("a", a)
}

fn check_forces(tree: &KinematicTree, fext: &[ExternalForce]) -> Result<()> {
    for f in fext {
        if f.frame >= tree.frames().len() {
            return Err(Error::UnknownFrame(format!("#{}", f.frame)));
        }
    }
    Ok(())
}

/// Subtree-accumulated spatial forces, external forces subtracted.
pub(crate) fn accumulated_forces(tree: &KinematicTree, st: &TreeState, fext: &[ExternalForce]) -> Vec<SpatialVector> {
    let nb = tree.links().len();
    let mut forces: Vec<SpatialVector> = (0..nb)
        .map(|k| {
            let i = &st.inertia[k];
            i.apply(&st.acc[k]) + st.vel[k].cross_force(&i.apply(&st.vel[k]))
        })
        .collect();
    for f in fext {
        let p = frame_point(tree, st, f.frame);
        let link = tree.frames()[f.frame].link;
        forces[link] -= SpatialVector::new(p.cross(&f.force), f.force);
    }
    for k in (0..nb).rev() {
        if let Some(p) = tree.links()[k].joint.parent {
            let fk = forces[k];
            forces[p] += fk;
        }
    }
    forces
}

/// Inverse dynamics `ID(q, v, a, f) = M(q)a + h(q, v) − Jᵀ(q)f`.
pub fn rnea(
    tree: &KinematicTree,
    q: &DVector<f64>,
    v: &DVector<f64>,
    a: &DVector<f64>,
    fext: &[ExternalForce],
) -> Result<DVector<f64>> {
    check_inputs(tree, q, v, a)?;
    check_forces(tree, fext)?;
    let st = tree_state(tree, q, v, a, true);
    let forces = accumulated_forces(tree, &st, fext);
    Ok(joint_torques(tree, &st, &forces))
}

pub(crate) fn joint_torques(tree: &KinematicTree, st: &TreeState, forces: &[SpatialVector]) -> DVector<f64> {
    let mut tau = DVector::zeros(tree.nv());
    for (k, f) in forces.iter().enumerate() {
        if let Some(i) = tree.dof_of_link(k) {
            tau[i] = st.subspace[k].dot(f);
        }
    }
    tau
}

/// Forward dynamics by the articulated-body algorithm.
pub fn aba(
    tree: &KinematicTree,
    q: &DVector<f64>,
    v: &DVector<f64>,
    u: &DVector<f64>,
    fext: &[ExternalForce],
) -> Result<DVector<f64>> {
    let zeros = DVector::zeros(tree.nv());
    check_inputs(tree, q, v, u)?;
    check_forces(tree, fext)?;
    let st = tree_state(tree, q, v, &zeros, false);
    let nb = tree.links().len();

    let mut art_inertia: Vec<Matrix6<f64>> = st.inertia.iter().map(|i| i.to_matrix()).collect();
    let mut bias: Vec<Vector6<f64>> = (0..nb)
        .map(|k| {
            let i = &st.inertia[k];
            st.vel[k].cross_force(&i.apply(&st.vel[k])).to_vector6()
        })
        .collect();
    for f in fext {
        let p = frame_point(tree, &st, f.frame);
        let link = tree.frames()[f.frame].link;
        bias[link] -= SpatialVector::new(p.cross(&f.force), f.force).to_vector6();
    }
    let coriolis: Vec<Vector6<f64>> =
        (0..nb).map(|k| (st.vel[k].cross_motion(&st.subspace[k]) * st.qd[k]).to_vector6()).collect();

    let mut u_col = vec![Vector6::zeros(); nb];
    let mut d = vec![0.0; nb];
    let mut u_eff = vec![0.0; nb];
    for k in (0..nb).rev() {
        let s = st.subspace[k].to_vector6();
        let ia = art_inertia[k];
        let pa = bias[k];
        let (child_inertia, child_bias) = if let Some(i) = tree.dof_of_link(k) {
            let uk = ia * s;
            let dk = s.dot(&uk);
            if !(dk > 1e-14) {
                return Err(Error::SingularInertia { link: tree.links()[k].name.clone() });
            }
            let ek = u[i] - s.dot(&pa);
            u_col[k] = uk;
            d[k] = dk;
            u_eff[k] = ek;
            let ia_red = ia - uk * uk.transpose() / dk;
            (ia_red, pa + ia_red * coriolis[k] + uk * (ek / dk))
        } else {
            (ia, pa + ia * coriolis[k])
        };
        if let Some(p) = tree.links()[k].joint.parent {
            art_inertia[p] += child_inertia;
            bias[p] += child_bias;
        }
    }

    let root_acc = SpatialVector::new(Vector3::zeros(), -tree.gravity()).to_vector6();
    let mut acc = vec![Vector6::zeros(); nb];
    let mut qdd = DVector::zeros(tree.nv());
    for k in 0..nb {
        let parent_acc = match tree.links()[k].joint.parent {
            Some(p) => acc[p],
            None => root_acc,
        };
        let mut ak = parent_acc + coriolis[k];
        if let Some(i) = tree.dof_of_link(k) {
            let x = (u_eff[k] - u_col[k].dot(&ak)) / d[k];
            qdd[i] = x;
            ak += st.subspace[k].to_vector6() * x;
        }
        acc[k] = ak;
    }
    Ok(qdd)
}

/// Joint-space inertia matrix by the composite-rigid-body algorithm.
pub fn crba(tree: &KinematicTree, q: &DVector<f64>) -> Result<DMatrix<f64>> {
    tree.check_config("q", q)?;
    let n = tree.nv();
    let zeros = DVector::zeros(n);
    let st = tree_state(tree, q, &zeros, &zeros, false);
    Ok(mass_matrix(tree, &st))
}

/// Composite-rigid-body pass over world-frame inertias and subspaces.
pub(crate) fn mass_matrix(tree: &KinematicTree, st: &TreeState) -> DMatrix<f64> {
    let n = tree.nv();
    let nb = tree.links().len();
    let mut composite: Vec<Matrix6<f64>> = st.inertia.iter().map(|i| i.to_matrix()).collect();
    for k in (0..nb).rev() {
        if let Some(p) = tree.links()[k].joint.parent {
            let ck = composite[k];
            composite[p] += ck;
        }
    }
    let mut m = DMatrix::zeros(n, n);
    for j in 0..nb {
        let Some(dj) = tree.dof_of_link(j) else { continue };
        let f = composite[j] * st.subspace[j].to_vector6();
        let mut cur = Some(j);
        while let Some(k) = cur {
            if let Some(dk) = tree.dof_of_link(k) {
                let val = st.subspace[k].to_vector6().dot(&f);
                m[(dk, dj)] = val;
                m[(dj, dk)] = val;
            }
            cur = tree.links()[k].joint.parent;
        }
    }
    m
}

/// Kinematics of a frame origin: world position, velocity, acceleration and
/// translational Jacobian.
#[derive(Debug, Clone, PartialEq)]
pub struct FrameKinematics {
    pub position: Vector3<f64>,
    pub velocity: Vector3<f64>,
    pub acceleration: Vector3<f64>,
    pub jacobian: Matrix3xX<f64>,
}

pub fn frame_kinematics(
    tree: &KinematicTree,
    q: &DVector<f64>,
    v: &DVector<f64>,
    a: &DVector<f64>,
    frame: &str,
) -> Result<FrameKinematics> {
    let id = tree.frame_index(frame)?;
    check_inputs(tree, q, v, a)?;
    let st = tree_state(tree, q, v, a, false);
    Ok(frame_kinematics_from_state(tree, &st, id))
}

pub(crate) fn frame_kinematics_from_state(tree: &KinematicTree, st: &TreeState, frame: usize) -> FrameKinematics {
    let link = tree.frames()[frame].link;
    let p = frame_point(tree, st, frame);
    let vel = st.vel[link];
    let acc = st.acc[link];
    let pd = vel.point_velocity(&p);
    let pdd = acc.point_velocity(&p) + vel.angular.cross(&pd);
    FrameKinematics { position: p, velocity: pd, acceleration: pdd, jacobian: point_jacobian(tree, st, link, &p) }
}

pub(crate) fn point_jacobian(tree: &KinematicTree, st: &TreeState, link: usize, p: &Vector3<f64>) -> Matrix3xX<f64> {
    let mut jac = Matrix3xX::zeros(tree.nv());
    let mut cur = Some(link);
    while let Some(k) = cur {
        if let Some(i) = tree.dof_of_link(k) {
            jac.set_column(i, &st.subspace[k].point_velocity(p));
        }
        cur = tree.links()[k].joint.parent;
    }
    jac
}
