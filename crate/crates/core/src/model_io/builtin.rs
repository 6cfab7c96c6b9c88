//! Hard-coded models used by the tests and the experiment harness.
//!
//! The inertial parameters are made-up round numbers, not measurements of
//! any real robot.
//!
//! | name                | nv | description |
//! |---------------------|----|-------------|
//! | `pendulum`          | 1  | point mass [`PENDULUM_MASS`] on a massless rod of length [`PENDULUM_LENGTH`], pitching about `y`; frame `tip` |
//! | `double_pendulum`   | 2  | two such point-mass links in series; frame `tip` |
//! | `planar_2link_foot` | 4  | vertical base slider (`base_z`), hip roll about `x`, hip and knee pitch about `y`; frame `foot` at the shank tip |
//! | `chain7`            | 7  | serial revolute arm with axes alternating `z, y, z, y, z, y, z`; frame `ee` |

use nalgebra::{Matrix3, Vector3};

use crate::error::{Error, Result};
use crate::spatial::{SpatialInertia, SpatialTransform};
use crate::tree::{Joint, KinematicTree};

pub const PENDULUM_MASS: f64 = 1.0;
pub const PENDULUM_LENGTH: f64 = 0.5;

/// Names accepted by [`builtin`].
pub const BUILTIN_NAMES: [&str; 4] = ["pendulum", "double_pendulum", "planar_2link_foot", "chain7"];

/// Joint offsets along the parent `z` axis for `chain7`.
pub const CHAIN7_OFFSETS: [f64; 7] = [0.1575, 0.2025, 0.2045, 0.2155, 0.1845, 0.2155, 0.081];
/// Link masses for `chain7`.
pub const CHAIN7_MASSES: [f64; 7] = [4.0, 4.0, 3.0, 2.7, 1.7, 1.8, 0.3];
/// Centre-of-mass heights (link `z`) for `chain7`.
pub const CHAIN7_COM_Z: [f64; 7] = [0.1, 0.1, 0.1, 0.1, 0.09, 0.05, 0.03];

pub fn builtin(name: &str) -> Result<KinematicTree> {
    match name {
        "pendulum" => Ok(pendulum()),
        "double_pendulum" => Ok(double_pendulum()),
        "planar_2link_foot" => Ok(planar_2link_foot()),
        "chain7" => Ok(chain(7)),
        other => Err(Error::UnknownModel(other.to_string())),
    }
}

fn pendulum() -> KinematicTree {
    let mut tree = KinematicTree::new();
    let l = PENDULUM_LENGTH;
    let link = tree
        .add_link(
            "link1",
            Joint::revolute("joint1", None, Vector3::y(), SpatialTransform::identity()),
            SpatialInertia::point_mass(PENDULUM_MASS, Vector3::new(0.0, 0.0, -l)),
        )
        .expect("valid builtin");
    tree.add_frame("tip", link, SpatialTransform::from_translation(Vector3::new(0.0, 0.0, -l)))
        .expect("valid builtin");
    tree
}

fn double_pendulum() -> KinematicTree {
    let mut tree = KinematicTree::new();
    let l = PENDULUM_LENGTH;
    let down = Vector3::new(0.0, 0.0, -l);
    let l1 = tree
        .add_link(
            "link1",
            Joint::revolute("joint1", None, Vector3::y(), SpatialTransform::identity()),
            SpatialInertia::point_mass(PENDULUM_MASS, down),
        )
        .expect("valid builtin");
    let l2 = tree
        .add_link(
            "link2",
            Joint::revolute("joint2", Some(l1), Vector3::y(), SpatialTransform::from_translation(down)),
            SpatialInertia::point_mass(PENDULUM_MASS, down),
        )
        .expect("valid builtin");
    tree.add_frame("tip", l2, SpatialTransform::from_translation(down)).expect("valid builtin");
    tree
}

fn planar_2link_foot() -> KinematicTree {
    let mut tree = KinematicTree::new();
    let seg = 0.4;
    let base = tree
        .add_link(
            "base",
            Joint::prismatic("base_z", None, Vector3::z(), SpatialTransform::from_translation(Vector3::new(0.0, 0.0, 0.8))),
            SpatialInertia::new(5.0, Vector3::zeros(), Matrix3::from_diagonal(&Vector3::new(0.05, 0.05, 0.05))),
        )
        .expect("valid builtin");
    let hip = tree
        .add_link(
            "hip",
            Joint::revolute("hip_roll", Some(base), Vector3::x(), SpatialTransform::identity()),
            SpatialInertia::new(0.2, Vector3::zeros(), Matrix3::from_diagonal(&Vector3::new(1e-3, 1e-3, 1e-3))),
        )
        .expect("valid builtin");
    let thigh = tree
        .add_link(
            "thigh",
            Joint::revolute("hip_pitch", Some(hip), Vector3::y(), SpatialTransform::identity()),
            SpatialInertia::rod(1.0, -Vector3::z(), seg),
        )
        .expect("valid builtin");
    let shank = tree
        .add_link(
            "shank",
            Joint::revolute("knee", Some(thigh), Vector3::y(), SpatialTransform::from_translation(Vector3::new(0.0, 0.0, -seg))),
            SpatialInertia::rod(0.5, -Vector3::z(), seg),
        )
        .expect("valid builtin");
    tree.add_frame("foot", shank, SpatialTransform::from_translation(Vector3::new(0.0, 0.0, -seg)))
        .expect("valid builtin");
    tree
}

/// Serial revolute chain of `dof` links built by repeating the `chain7` link
/// parameters (`chain(7)` is the `chain7` builtin, `chain(14)` two of them end to end).
pub fn chain(dof: usize) -> KinematicTree {
    let mut tree = KinematicTree::new();
    let mut parent = None;
    for k in 0..dof {
        let p = k % 7;
        let axis = if k % 2 == 0 { Vector3::z() } else { Vector3::y() };
        let m = CHAIN7_MASSES[p];
        let inertia = Matrix3::from_diagonal(&Vector3::new(0.03, 0.03, 0.01)) * (m / 4.0);
        let offset = if k == 0 { CHAIN7_OFFSETS[0] } else { CHAIN7_OFFSETS[p] };
        let link = tree
            .add_link(
                &format!("link{}", k + 1),
                Joint::revolute(
                    &format!("joint{}", k + 1),
                    parent,
                    axis,
                    SpatialTransform::from_translation(Vector3::new(0.0, 0.0, offset)),
                ),
                SpatialInertia::new(m, Vector3::new(0.0, 0.0, CHAIN7_COM_Z[p]), inertia),
            )
            .expect("valid builtin");
        parent = Some(link);
    }
    if let Some(last) = parent {
        tree.add_frame("ee", last, SpatialTransform::from_translation(Vector3::new(0.0, 0.0, 0.126)))
            .expect("valid builtin");
    }
    tree
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn builtin_dimensions() {
        assert_eq!(builtin("pendulum").unwrap().nv(), 1);
        assert_eq!(builtin("double_pendulum").unwrap().nv(), 2);
        assert_eq!(builtin("chain7").unwrap().nv(), 7);
        assert_eq!(chain(14).nv(), 14);
        let foot = builtin("planar_2link_foot").unwrap();
        assert!(foot.frame_index("foot").is_ok());
        assert!(matches!(builtin("hexapod"), Err(Error::UnknownModel(_))));
    }
}
