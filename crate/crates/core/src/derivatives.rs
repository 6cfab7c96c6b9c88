//! First-order sensitivities of inverse dynamics and of contact constraints.
//!
//! The configuration and velocity derivatives are obtained by pushing a
//! tangent through the same world-frame recursion that [`rnea`](crate::rnea)
//! uses, one joint direction at a time. `ID_a` is the joint-space inertia
//! matrix and comes from a composite-rigid-body pass. The only configuration dependence in
//! that recursion enters through the motion subspaces, the world inertias and
//! the contact points, whose derivatives along joint `j` are all generated by
//! the motion `S_j`.

use nalgebra::{DMatrix, DVector, Matrix3xX, Vector3};

use crate::dynamics::{
    accumulated_forces, frame_point, joint_torques, mass_matrix, point_jacobian, tree_state, ExternalForce, TreeState,
};
use crate::error::{Error, Result};
use crate::ocp::ContactSpec;
use crate::spatial::SpatialVector;
use crate::tree::KinematicTree;

/// Jacobians of `ID(q, v, a, f)`.
#[derive(Debug, Clone, PartialEq)]
pub struct IdDerivatives {
    /// `ID(q, v, a, f)` itself.
    pub tau: DVector<f64>,
    pub dq: DMatrix<f64>,
    pub dv: DMatrix<f64>,
    pub da: DMatrix<f64>,
    /// `n × 3·n_contacts`, equal to `−Jᵀ`.
    pub df: DMatrix<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Direction {
    Q(usize),
    V(usize),
    A(usize),
}

struct Tangent {
    /// Derivative of each motion subspace (non-zero only for `Q`).
    ds: Vec<SpatialVector>,
    dv: Vec<SpatialVector>,
    da: Vec<SpatialVector>,
    /// Links moved by the perturbed joint (`Q` only).
    moved: Vec<bool>,
    /// Motion subspace of the perturbed joint.
    seed: SpatialVector,
}

fn tangent(tree: &KinematicTree, st: &TreeState, dir: Direction) -> Tangent {
    let nb = tree.links().len();
    let (dof, is_q) = match dir {
        Direction::Q(j) => (j, true),
        Direction::V(j) | Direction::A(j) => (j, false),
    };
    let seed_link = tree.link_of_dof(dof);
    let seed = st.subspace[seed_link];
    let mut t = Tangent {
        ds: vec![SpatialVector::zero(); nb],
        dv: vec![SpatialVector::zero(); nb],
        da: vec![SpatialVector::zero(); nb],
        moved: vec![false; nb],
        seed,
    };
    for k in 0..nb {
        let parent = tree.links()[k].joint.parent;
        if is_q {
            t.moved[k] = k == seed_link || parent.is_some_and(|p| t.moved[p]);
        }
        let (pdv, pda) = match parent {
            Some(p) => (t.dv[p], t.da[p]),
            None => (SpatialVector::zero(), SpatialVector::zero()),
        };
        let s = st.subspace[k];
        let ds = if t.moved[k] { seed.cross_motion(&s) } else { SpatialVector::zero() };
        let (qd, qdd) = (st.qd[k], st.qdd[k]);
        let own = tree.dof_of_link(k) == Some(dof);
        let mut dv = pdv + ds * qd;
        if own && matches!(dir, Direction::V(_)) {
            dv += s;
        }
        let mut da = pda + ds * qdd + (dv.cross_motion(&s) + st.vel[k].cross_motion(&ds)) * qd;
        if own {
            match dir {
                Direction::V(_) => da += st.vel[k].cross_motion(&s),
                Direction::A(_) => da += s,
                Direction::Q(_) => {}
            }
        }
        t.ds[k] = ds;
        t.dv[k] = dv;
        t.da[k] = da;
    }
    t
}

fn id_tangent(
    tree: &KinematicTree,
    st: &TreeState,
    forces: &[SpatialVector],
    fext: &[ExternalForce],
    points: &[Vector3<f64>],
    dir: Direction,
    out: &mut [f64],
) {
    let t = tangent(tree, st, dir);
    let nb = tree.links().len();
    let mut df: Vec<SpatialVector> = (0..nb)
        .map(|k| {
            let i = &st.inertia[k];
            let (v, a) = (st.vel[k], st.acc[k]);
            let (dv, da) = (t.dv[k], t.da[k]);
            let iv = i.apply(&v);
            let mut f = i.apply(&da) + dv.cross_force(&iv) + v.cross_force(&i.apply(&dv));
            if t.moved[k] {
                f += i.apply_derivative(&t.seed, &a) + v.cross_force(&i.apply_derivative(&t.seed, &v));
            }
            f
        })
        .collect();
    if matches!(dir, Direction::Q(_)) {
        for (f, p) in fext.iter().zip(points) {
            let link = tree.frames()[f.frame].link;
            if t.moved[link] {
                let dp = t.seed.point_velocity(p);
                df[link] -= SpatialVector::new(dp.cross(&f.force), Vector3::zeros());
            }
        }
    }
    for k in (0..nb).rev() {
        if let Some(p) = tree.links()[k].joint.parent {
            let dk = df[k];
            df[p] += dk;
        }
    }
    for k in 0..nb {
        if let Some(i) = tree.dof_of_link(k) {
            out[i] = t.ds[k].dot(&forces[k]) + st.subspace[k].dot(&df[k]);
        }
    }
}

/// Value and analytic Jacobians of [`rnea`](crate::rnea) at `(q, v, a, f)`.
pub fn rnea_derivatives(
    tree: &KinematicTree,
    q: &DVector<f64>,
    v: &DVector<f64>,
    a: &DVector<f64>,
    fext: &[ExternalForce],
) -> Result<IdDerivatives> {
    tree.check_config("q", q)?;
    tree.check_config("v", v)?;
    tree.check_config("a", a)?;
    for f in fext {
        if f.frame >= tree.frames().len() {
            return Err(Error::UnknownFrame(format!("#{}", f.frame)));
        }
    }
    let n = tree.nv();
    let st = tree_state(tree, q, v, a, true);
    let forces = accumulated_forces(tree, &st, fext);
    let points: Vec<Vector3<f64>> = fext.iter().map(|f| frame_point(tree, &st, f.frame)).collect();

    let mut dq = DMatrix::zeros(n, n);
    let mut dv = DMatrix::zeros(n, n);
    let mut col = vec![0.0; n];
    for j in 0..n {
        id_tangent(tree, &st, &forces, fext, &points, Direction::Q(j), &mut col);
        dq.column_mut(j).copy_from_slice(&col);
        id_tangent(tree, &st, &forces, fext, &points, Direction::V(j), &mut col);
        dv.column_mut(j).copy_from_slice(&col);
    }
    let da = mass_matrix(tree, &st);
    let mut df = DMatrix::zeros(n, 3 * fext.len());
    for (k, (f, p)) in fext.iter().zip(&points).enumerate() {
        let jac = point_jacobian(tree, &st, tree.frames()[f.frame].link, p);
        df.view_mut((0, 3 * k), (n, 3)).copy_from(&(-jac.transpose()));
    }
    Ok(IdDerivatives { tau: joint_torques(tree, &st, &forces), dq, dv, da, df })
}

/// Baumgarte-stabilized contact residual and its Jacobians.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactConstraint {
    pub residual: Vector3<f64>,
    pub dq: Matrix3xX<f64>,
    pub dv: Matrix3xX<f64>,
    pub da: Matrix3xX<f64>,
}

/// `p̈ + 2ζω·ṗ + ω²·(p − p_ref)` for the contact frame origin, with its
/// derivatives in `q`, `v` and `a` (the force and torque Jacobians are zero).
pub fn contact_constraint(
    tree: &KinematicTree,
    q: &DVector<f64>,
    v: &DVector<f64>,
    a: &DVector<f64>,
    spec: &ContactSpec,
) -> Result<ContactConstraint> {
    let frame = tree.frame_index(&spec.frame)?;
    contact_constraint_at(tree, q, v, a, frame, spec)
}

pub(crate) fn contact_constraint_at(
    tree: &KinematicTree,
    q: &DVector<f64>,
    v: &DVector<f64>,
    a: &DVector<f64>,
    frame: usize,
    spec: &ContactSpec,
) -> Result<ContactConstraint> {
    tree.check_config("q", q)?;
    tree.check_config("v", v)?;
    tree.check_config("a", a)?;
    let n = tree.nv();
    let st = tree_state(tree, q, v, a, false);
    let link = tree.frames()[frame].link;
    let p = frame_point(tree, &st, frame);
    let (vel, acc) = (st.vel[link], st.acc[link]);
    let pd = vel.point_velocity(&p);
    let pdd = acc.point_velocity(&p) + vel.angular.cross(&pd);
    let kv = 2.0 * spec.zeta * spec.omega;
    let kp = spec.omega * spec.omega;
    let residual = pdd + pd * kv + (p - spec.p_ref) * kp;

    let mut out = ContactConstraint {
        residual,
        dq: Matrix3xX::zeros(n),
        dv: Matrix3xX::zeros(n),
        da: Matrix3xX::zeros(n),
    };
    for j in 0..n {
        for dir in [Direction::Q(j), Direction::V(j), Direction::A(j)] {
            let t = tangent(tree, &st, dir);
            let dp = if t.moved[link] { t.seed.point_velocity(&p) } else { Vector3::zeros() };
            let (dvel, dacc) = (t.dv[link], t.da[link]);
            let dpd = dvel.point_velocity(&p) + vel.angular.cross(&dp);
            let dpdd = dacc.point_velocity(&p)
                + acc.angular.cross(&dp)
                + dvel.angular.cross(&pd)
                + vel.angular.cross(&dpd);
            let col = dpdd + dpd * kv + dp * kp;
            match dir {
                Direction::Q(_) => out.dq.set_column(j, &col),
                Direction::V(_) => out.dv.set_column(j, &col),
                Direction::A(_) => out.da.set_column(j, &col),
            }
        }
    }
    Ok(out)
}

/// Central-difference Jacobian, column `j` = `(f(x + h e_j) − f(x − h e_j)) / 2h`.
pub fn fd_jacobian<F>(func: F, point: &DVector<f64>, h: f64) -> DMatrix<f64>
where
    F: Fn(&DVector<f64>) -> DVector<f64>,
{
    assert!(h > 0.0, "finite-difference step must be positive");
    let f0 = func(point);
    let mut jac = DMatrix::zeros(f0.len(), point.len());
    let mut x = point.clone();
    for j in 0..point.len() {
        let xj = x[j];
        x[j] = xj + h;
        let fp = func(&x);
        x[j] = xj - h;
        let fm = func(&x);
        x[j] = xj;
        jac.set_column(j, &((fp - fm) / (2.0 * h)));
    }
    jac
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{crba, frame_kinematics, rnea};
    use crate::model_io::builtin;
    use approx::assert_relative_eq;

    #[test]
    fn fd_of_linear_map_is_exact() {
        let a = DMatrix::from_row_slice(2, 3, &[1.0, -2.0, 0.5, 3.0, 0.25, -1.0]);
        let jac = fd_jacobian(|x| &a * x, &DVector::from_vec(vec![0.3, -0.7, 2.0]), 1e-3);
        assert_relative_eq!(jac, a, epsilon = 1e-12);
    }

    #[test]
    fn fd_of_square() {
        let jac = fd_jacobian(|x| DVector::from_element(1, x[0] * x[0]), &DVector::from_element(1, 3.0), 1e-6);
        assert!((jac[(0, 0)] - 6.0).abs() < 1e-6);
    }

    #[test]
    fn pendulum_derivatives_closed_form() {
        let tree = builtin("pendulum").unwrap();
        let (m, l, g) = (crate::model_io::PENDULUM_MASS, crate::model_io::PENDULUM_LENGTH, 9.81);
        let th = 0.8;
        let d = rnea_derivatives(&tree, &DVector::from_element(1, th), &DVector::from_element(1, 2.0), &DVector::from_element(1, 0.3), &[])
            .unwrap();
        assert_relative_eq!(d.dq[(0, 0)], m * g * l * th.cos(), epsilon = 1e-12);
        assert_relative_eq!(d.dv[(0, 0)], 0.0, epsilon = 1e-12);
        assert_relative_eq!(d.da[(0, 0)], m * l * l, epsilon = 1e-12);
    }

    #[test]
    fn force_jacobian_is_minus_contact_jacobian_transpose() {
        let tree = builtin("planar_2link_foot").unwrap();
        let q = DVector::from_vec(vec![0.1, 0.2, 0.5, -1.0]);
        let v = DVector::from_vec(vec![0.3, -0.2, 1.0, 0.5]);
        let a = DVector::from_vec(vec![-1.0, 0.4, 0.2, 2.0]);
        let foot = tree.frame_index("foot").unwrap();
        let f = [ExternalForce::new(foot, Vector3::new(1.0, -2.0, 30.0))];
        let d = rnea_derivatives(&tree, &q, &v, &a, &f).unwrap();
        let fk = frame_kinematics(&tree, &q, &v, &a, "foot").unwrap();
        assert_relative_eq!(d.df, DMatrix::from_iterator(d.df.nrows(), 3, (-fk.jacobian.transpose()).iter().copied()), epsilon = 1e-12);
        assert_relative_eq!(d.da, crba(&tree, &q).unwrap(), epsilon = 1e-10);
        let fd = fd_jacobian(|x| rnea(&tree, x, &v, &a, &f).unwrap(), &q, 1e-6);
        assert!((fd - &d.dq).amax() < 1e-5);
    }

    #[test]
    fn contact_residual_cases() {
        let tree = builtin("planar_2link_foot").unwrap();
        let q = DVector::from_vec(vec![0.0, 0.1, 0.5, -1.0]);
        let z = DVector::zeros(4);
        let fk = frame_kinematics(&tree, &q, &z, &z, "foot").unwrap();
        let spec = ContactSpec::new("foot", fk.position);
        let c = contact_constraint(&tree, &q, &z, &z, &spec).unwrap();
        assert!(c.residual.amax() < 1e-14);

        let v = DVector::from_vec(vec![0.3, -0.2, 1.0, 0.5]);
        let a = DVector::from_vec(vec![-1.0, 0.4, 0.2, 2.0]);
        let spec0 = ContactSpec { omega: 0.0, zeta: 3.0, ..ContactSpec::new("foot", Vector3::new(1.0, 2.0, 3.0)) };
        let c = contact_constraint(&tree, &q, &v, &a, &spec0).unwrap();
        let fk = frame_kinematics(&tree, &q, &v, &a, "foot").unwrap();
        assert_relative_eq!(c.residual, fk.acceleration, epsilon = 1e-13);

        let missing = ContactSpec::new("hand", Vector3::zeros());
        assert!(matches!(contact_constraint(&tree, &q, &v, &a, &missing), Err(Error::UnknownFrame(_))));
    }
}
