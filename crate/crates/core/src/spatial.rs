//! Spatial (6-D) vector algebra.
//!
//! Motion and force vectors share one representation, [`SpatialVector`],
//! with the angular part first. All algorithms in this crate express spatial
//! quantities in world coordinates about the world origin, so the cross
//! operators below are the only place where the motion/force distinction
//! shows up.

use std::ops::{Add, AddAssign, Mul, Neg, Sub, SubAssign};

use nalgebra::{Matrix3, Matrix6, Rotation3, Unit, Vector3, Vector6};

/// A 6-D motion or force vector `(angular, linear)`.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SpatialVector {
    pub angular: Vector3<f64>,
    pub linear: Vector3<f64>,
}

impl SpatialVector {
    pub fn new(angular: Vector3<f64>, linear: Vector3<f64>) -> Self {
        Self { angular, linear }
    }

    pub fn zero() -> Self {
        Self::default()
    }

    /// Motion cross product `self ×ₘ other`.
    pub fn cross_motion(&self, other: &SpatialVector) -> SpatialVector {
        SpatialVector {
            angular: self.angular.cross(&other.angular),
            linear: self.angular.cross(&other.linear) + self.linear.cross(&other.angular),
        }
    }

    /// Force cross product `self ×* force`, where `self` is a motion.
    pub fn cross_force(&self, force: &SpatialVector) -> SpatialVector {
        SpatialVector {
            angular: self.angular.cross(&force.angular) + self.linear.cross(&force.linear),
            linear: self.angular.cross(&force.linear),
        }
    }

    /// Power pairing between a motion and a force.
    pub fn dot(&self, other: &SpatialVector) -> f64 {
        self.angular.dot(&other.angular) + self.linear.dot(&other.linear)
    }

    pub fn to_vector6(&self) -> Vector6<f64> {
        Vector6::new(
            self.angular.x,
            self.angular.y,
            self.angular.z,
            self.linear.x,
            self.linear.y,
            self.linear.z,
        )
    }

    pub fn from_vector6(v: &Vector6<f64>) -> Self {
        Self {
            angular: Vector3::new(v[0], v[1], v[2]),
            linear: Vector3::new(v[3], v[4], v[5]),
        }
    }

    /// Linear velocity of the world point `p` for a motion expressed about the origin.
    pub fn point_velocity(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.linear + self.angular.cross(p)
    }

    pub fn is_finite(&self) -> bool {
        self.angular.iter().chain(self.linear.iter()).all(|x| x.is_finite())
    }
}

impl Add for SpatialVector {
    type Output = SpatialVector;
    fn add(self, rhs: SpatialVector) -> SpatialVector {
        SpatialVector::new(self.angular + rhs.angular, self.linear + rhs.linear)
    }
}

impl Sub for SpatialVector {
    type Output = SpatialVector;
    fn sub(self, rhs: SpatialVector) -> SpatialVector {
        SpatialVector::new(self.angular - rhs.angular, self.linear - rhs.linear)
    }
}

impl Neg for SpatialVector {
    type Output = SpatialVector;
    fn neg(self) -> SpatialVector {
        SpatialVector::new(-self.angular, -self.linear)
    }
}

impl Mul<f64> for SpatialVector {
    type Output = SpatialVector;
    fn mul(self, rhs: f64) -> SpatialVector {
        SpatialVector::new(self.angular * rhs, self.linear * rhs)
    }
}

impl AddAssign for SpatialVector {
    fn add_assign(&mut self, rhs: SpatialVector) {
        self.angular += rhs.angular;
        self.linear += rhs.linear;
    }
}

impl SubAssign for SpatialVector {
    fn sub_assign(&mut self, rhs: SpatialVector) {
        self.angular -= rhs.angular;
        self.linear -= rhs.linear;
    }
}

/// Rigid placement: maps child coordinates to parent coordinates,
/// `x_parent = rotation · x_child + translation`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialTransform {
    pub rotation: Matrix3<f64>,
    pub translation: Vector3<f64>,
}

impl Default for SpatialTransform {
    fn default() -> Self {
        Self::identity()
    }
}

impl SpatialTransform {
    pub fn identity() -> Self {
        Self { rotation: Matrix3::identity(), translation: Vector3::zeros() }
    }

    pub fn new(rotation: Matrix3<f64>, translation: Vector3<f64>) -> Self {
        Self { rotation, translation }
    }

    pub fn from_translation(translation: Vector3<f64>) -> Self {
        Self { rotation: Matrix3::identity(), translation }
    }

    /// Placement from a translation and URDF-style fixed-axis roll/pitch/yaw.
    pub fn from_xyz_rpy(xyz: Vector3<f64>, rpy: Vector3<f64>) -> Self {
        let rotation = Rotation3::from_euler_angles(rpy.x, rpy.y, rpy.z).into_inner();
        Self { rotation, translation: xyz }
    }

    /// Rotation by `angle` about the unit `axis`.
    pub fn rotation_about(axis: &Vector3<f64>, angle: f64) -> Self {
        let rotation = Rotation3::from_axis_angle(&Unit::new_unchecked(*axis), angle).into_inner();
        Self { rotation, translation: Vector3::zeros() }
    }

    /// `self ∘ other`: first apply `other`, then `self`.
    pub fn compose(&self, other: &SpatialTransform) -> SpatialTransform {
        SpatialTransform {
            rotation: self.rotation * other.rotation,
            translation: self.rotation * other.translation + self.translation,
        }
    }

    pub fn inverse(&self) -> SpatialTransform {
        let rt = self.rotation.transpose();
        SpatialTransform { rotation: rt, translation: -(rt * self.translation) }
    }

    pub fn transform_point(&self, p: &Vector3<f64>) -> Vector3<f64> {
        self.rotation * p + self.translation
    }

    /// Maps a motion expressed about the child origin (child axes) into the
    /// parent frame, about the parent origin.
    pub fn act_motion(&self, m: &SpatialVector) -> SpatialVector {
        let angular = self.rotation * m.angular;
        SpatialVector { angular, linear: self.rotation * m.linear + self.translation.cross(&angular) }
    }

    /// Same as [`act_motion`](Self::act_motion) for force vectors.
    pub fn act_force(&self, f: &SpatialVector) -> SpatialVector {
        let linear = self.rotation * f.linear;
        SpatialVector { angular: self.rotation * f.angular + self.translation.cross(&linear), linear }
    }

    /// Orthonormality defect `‖RᵀR − I‖∞`.
    pub fn orthonormality_error(&self) -> f64 {
        (self.rotation.transpose() * self.rotation - Matrix3::identity()).amax()
    }
}

/// Rigid-body inertia: mass, centre of mass and rotational inertia about the
/// centre of mass, both expressed in the link frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SpatialInertia {
    pub mass: f64,
    pub com: Vector3<f64>,
    pub inertia: Matrix3<f64>,
}

impl Default for SpatialInertia {
    fn default() -> Self {
        Self { mass: 0.0, com: Vector3::zeros(), inertia: Matrix3::zeros() }
    }
}

impl SpatialInertia {
    pub fn new(mass: f64, com: Vector3<f64>, inertia: Matrix3<f64>) -> Self {
        Self { mass, com, inertia }
    }

    pub fn point_mass(mass: f64, com: Vector3<f64>) -> Self {
        Self { mass, com, inertia: Matrix3::zeros() }
    }

    /// Uniform slender rod of length `length` along `direction` starting at the link origin.
    pub fn rod(mass: f64, direction: Vector3<f64>, length: f64) -> Self {
        let d = direction.normalize();
        let i = mass * length * length / 12.0;
        let inertia = i * (Matrix3::identity() - d * d.transpose());
        Self { mass, com: d * (0.5 * length), inertia }
    }

    /// Re-expresses the inertia through a placement (link frame → world frame).
    pub fn transformed(&self, x: &SpatialTransform) -> SpatialInertia {
        SpatialInertia {
            mass: self.mass,
            com: x.transform_point(&self.com),
            inertia: x.rotation * self.inertia * x.rotation.transpose(),
        }
    }

    /// Momentum `I·m` of a motion `m` taken about the same origin as `com`.
    pub fn apply(&self, m: &SpatialVector) -> SpatialVector {
        let com_vel = m.linear + m.angular.cross(&self.com);
        let linear = com_vel * self.mass;
        SpatialVector { angular: self.inertia * m.angular + self.com.cross(&linear), linear }
    }

    /// Time derivative `(S ×*) I − I (S ×)` of the inertia when its body moves with
    /// motion `s`, applied to `m`.
    pub fn apply_derivative(&self, s: &SpatialVector, m: &SpatialVector) -> SpatialVector {
        s.cross_force(&self.apply(m)) - self.apply(&s.cross_motion(m))
    }

    /// Dense 6×6 matrix in `(angular, linear)` ordering.
    pub fn to_matrix(&self) -> Matrix6<f64> {
        let cx = skew(&self.com);
        let m = self.mass;
        let mut out = Matrix6::zeros();
        out.fixed_view_mut::<3, 3>(0, 0).copy_from(&(self.inertia + cx * cx.transpose() * m));
        out.fixed_view_mut::<3, 3>(0, 3).copy_from(&(cx * m));
        out.fixed_view_mut::<3, 3>(3, 0).copy_from(&(cx.transpose() * m));
        out.fixed_view_mut::<3, 3>(3, 3).copy_from(&(Matrix3::identity() * m));
        out
    }

    pub fn add(&self, other: &SpatialInertia) -> SpatialInertia {
        let mass = self.mass + other.mass;
        if mass <= 0.0 {
            return SpatialInertia { mass: 0.0, com: Vector3::zeros(), inertia: self.inertia + other.inertia };
        }
        let com = (self.com * self.mass + other.com * other.mass) / mass;
        let shift = |i: &SpatialInertia| {
            let d = skew(&(i.com - com));
            i.inertia + d * d.transpose() * i.mass
        };
        SpatialInertia { mass, com, inertia: shift(self) + shift(other) }
    }
}

pub fn skew(v: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -v.z, v.y, v.z, 0.0, -v.x, -v.y, v.x, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn sv(a: [f64; 6]) -> SpatialVector {
        SpatialVector::new(Vector3::new(a[0], a[1], a[2]), Vector3::new(a[3], a[4], a[5]))
    }

    #[test]
    fn motion_cross_is_antisymmetric() {
        let a = sv([0.1, -0.4, 0.3, 1.0, 2.0, -0.5]);
        let b = sv([0.7, 0.2, -0.9, -0.3, 0.4, 1.1]);
        let ab = a.cross_motion(&b);
        let ba = b.cross_motion(&a);
        assert_relative_eq!(ab.to_vector6(), -ba.to_vector6(), epsilon = 1e-15);
        assert_eq!(a.cross_motion(&a).to_vector6(), Vector6::zeros());
    }

    #[test]
    fn force_cross_is_dual_of_motion_cross() {
        // (v ×* f) · m = -f · (v × m)
        let v = sv([0.1, -0.4, 0.3, 1.0, 2.0, -0.5]);
        let f = sv([0.7, 0.2, -0.9, -0.3, 0.4, 1.1]);
        let m = sv([-1.2, 0.5, 0.8, 0.6, -0.2, 0.9]);
        assert_relative_eq!(v.cross_force(&f).dot(&m), -f.dot(&v.cross_motion(&m)), epsilon = 1e-14);
    }

    #[test]
    fn transform_compose_and_inverse() {
        let a = SpatialTransform::from_xyz_rpy(Vector3::new(0.1, 0.2, 0.3), Vector3::new(0.3, -0.2, 1.1));
        let b = SpatialTransform::from_xyz_rpy(Vector3::new(-0.5, 0.0, 0.7), Vector3::new(-0.8, 0.4, 0.2));
        let c = SpatialTransform::rotation_about(&Vector3::new(0.0, 0.6, 0.8), 0.9);
        let left = a.compose(&b).compose(&c);
        let right = a.compose(&b.compose(&c));
        assert_relative_eq!(left.rotation, right.rotation, epsilon = 1e-14);
        assert_relative_eq!(left.translation, right.translation, epsilon = 1e-14);
        let id = a.compose(&a.inverse());
        assert_relative_eq!(id.rotation, Matrix3::identity(), epsilon = 1e-14);
        assert!(left.orthonormality_error() < 1e-12);
    }

    #[test]
    fn inertia_matrix_matches_apply() {
        let i = SpatialInertia::new(
            2.5,
            Vector3::new(0.1, -0.2, 0.3),
            Matrix3::new(0.3, 0.01, 0.02, 0.01, 0.4, 0.03, 0.02, 0.03, 0.5),
        );
        let m = sv([0.3, -0.1, 0.7, 1.0, -2.0, 0.4]);
        assert_relative_eq!(i.to_matrix() * m.to_vector6(), i.apply(&m).to_vector6(), epsilon = 1e-13);
        let mat = i.to_matrix();
        assert_relative_eq!(mat, mat.transpose(), epsilon = 1e-15);
    }

    #[test]
    fn transformed_inertia_is_consistent_with_force_transform() {
        let i = SpatialInertia::rod(1.5, Vector3::new(0.0, 0.0, -1.0), 0.8);
        let x = SpatialTransform::from_xyz_rpy(Vector3::new(0.2, 0.1, -0.3), Vector3::new(0.4, 0.1, -0.6));
        let m_local = sv([0.2, 0.5, -0.3, 0.1, 0.9, -0.4]);
        let world = i.transformed(&x).apply(&x.act_motion(&m_local));
        let expected = x.act_force(&i.apply(&m_local));
        assert_relative_eq!(world.to_vector6(), expected.to_vector6(), epsilon = 1e-13);
    }
}
