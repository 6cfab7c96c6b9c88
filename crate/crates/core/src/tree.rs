//! Kinematic-tree robot model and Euclidean configuration space.

use nalgebra::{DMatrix, DVector, Vector3};

use crate::error::{check_dim, Error, Result};
use crate::spatial::{SpatialInertia, SpatialTransform};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum JointKind {
    Revolute,
    Prismatic,
    Fixed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Joint {
    pub name: String,
    pub kind: JointKind,
    /// Unit axis in the link frame. Ignored for fixed joints.
    pub axis: Vector3<f64>,
    /// Parent link index, `None` for a link attached to the world.
    pub parent: Option<usize>,
    /// Placement of the joint (and link) frame in the parent link frame at zero configuration.
    pub frame_offset: SpatialTransform,
}

impl Joint {
    pub fn revolute(name: &str, parent: Option<usize>, axis: Vector3<f64>, offset: SpatialTransform) -> Self {
        Self { name: name.to_string(), kind: JointKind::Revolute, axis, parent, frame_offset: offset }
    }

    pub fn prismatic(name: &str, parent: Option<usize>, axis: Vector3<f64>, offset: SpatialTransform) -> Self {
        Self { name: name.to_string(), kind: JointKind::Prismatic, axis, parent, frame_offset: offset }
    }

    pub fn fixed(name: &str, parent: Option<usize>, offset: SpatialTransform) -> Self {
        Self { name: name.to_string(), kind: JointKind::Fixed, axis: Vector3::zeros(), parent, frame_offset: offset }
    }

    /// Joint displacement `X_J(q)` for this joint's own coordinate.
    pub fn motion(&self, q: f64) -> SpatialTransform {
        match self.kind {
            JointKind::Revolute => SpatialTransform::rotation_about(&self.axis, q),
            JointKind::Prismatic => SpatialTransform::from_translation(self.axis * q),
            JointKind::Fixed => SpatialTransform::identity(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Link {
    pub name: String,
    pub inertia: SpatialInertia,
    pub joint: Joint,
}

/// A named point rigidly attached to a link.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub name: String,
    pub link: usize,
    pub offset: SpatialTransform,
}

#[derive(Debug, Clone, PartialEq)]
pub struct KinematicTree {
    links: Vec<Link>,
    frames: Vec<Frame>,
    gravity: Vector3<f64>,
    dof: Vec<Option<usize>>,
    dof_link: Vec<usize>,
    nv: usize,
}

impl Default for KinematicTree {
    fn default() -> Self {
        Self::new()
    }
}

impl KinematicTree {
    pub const DEFAULT_GRAVITY: Vector3<f64> = Vector3::new(0.0, 0.0, -9.81);

    pub fn new() -> Self {
        Self::with_gravity(Self::DEFAULT_GRAVITY)
    }

    pub fn with_gravity(gravity: Vector3<f64>) -> Self {
        Self { links: Vec::new(), frames: Vec::new(), gravity, dof: Vec::new(), dof_link: Vec::new(), nv: 0 }
    }

    /// Appends a link. Links must be added in topological order and every
    /// link receives a frame carrying its own name.
    pub fn add_link(&mut self, name: &str, joint: Joint, inertia: SpatialInertia) -> Result<usize> {
        let index = self.links.len();
        if let Some(p) = joint.parent {
            if p >= index {
                return Err(Error::InvalidModel(format!(
                    "link `{name}` has parent index {p} which does not precede it"
                )));
            }
        }
        if joint.kind != JointKind::Fixed && (joint.axis.norm() - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidModel(format!("joint `{}` axis is not a unit vector", joint.name)));
        }
        if !(inertia.mass >= 0.0) || !inertia.mass.is_finite() {
            return Err(Error::InvalidModel(format!("link `{name}` has invalid mass {}", inertia.mass)));
        }
        if (inertia.inertia - inertia.inertia.transpose()).amax() > 1e-9 {
            return Err(Error::InvalidModel(format!("link `{name}` inertia is not symmetric")));
        }
        if self.frames.iter().any(|f| f.name == name) {
            return Err(Error::InvalidModel(format!("duplicate frame name `{name}`")));
        }
        if joint.kind == JointKind::Fixed {
            self.dof.push(None);
        } else {
            self.dof.push(Some(self.nv));
            self.dof_link.push(index);
            self.nv += 1;
        }
        self.links.push(Link { name: name.to_string(), inertia, joint });
        self.frames.push(Frame { name: name.to_string(), link: index, offset: SpatialTransform::identity() });
        Ok(index)
    }

    pub fn add_frame(&mut self, name: &str, link: usize, offset: SpatialTransform) -> Result<usize> {
        if link >= self.links.len() {
            return Err(Error::InvalidModel(format!("frame `{name}` attached to missing link {link}")));
        }
        if self.frames.iter().any(|f| f.name == name) {
            return Err(Error::InvalidModel(format!("duplicate frame name `{name}`")));
        }
        self.frames.push(Frame { name: name.to_string(), link, offset });
        Ok(self.frames.len() - 1)
    }

    pub fn nv(&self) -> usize {
        self.nv
    }

    pub fn links(&self) -> &[Link] {
        &self.links
    }

    pub fn frames(&self) -> &[Frame] {
        &self.frames
    }

    pub fn gravity(&self) -> Vector3<f64> {
        self.gravity
    }

    pub fn set_gravity(&mut self, gravity: Vector3<f64>) {
        self.gravity = gravity;
    }

    /// Velocity index of the link's joint, `None` for fixed joints.
    pub fn dof_of_link(&self, link: usize) -> Option<usize> {
        self.dof[link]
    }

    /// Link moved by the given degree of freedom.
    pub fn link_of_dof(&self, dof: usize) -> usize {
        self.dof_link[dof]
    }

    pub fn frame_index(&self, name: &str) -> Result<usize> {
        self.frames.iter().position(|f| f.name == name).ok_or_else(|| Error::UnknownFrame(name.to_string()))
    }

    pub fn link_index(&self, name: &str) -> Option<usize> {
        self.links.iter().position(|l| l.name == name)
    }

    /// True when `ancestor` lies on the path from the root to `link` (inclusive).
    pub fn supports(&self, ancestor: usize, link: usize) -> bool {
        let mut cur = Some(link);
        while let Some(k) = cur {
            if k == ancestor {
                return true;
            }
            if k < ancestor {
                return false;
            }
            cur = self.links[k].joint.parent;
        }
        false
    }

    pub(crate) fn check_config(&self, what: &'static str, x: &DVector<f64>) -> Result<()> {
        check_dim(what, self.nv, x.len())
    }

    /// Appends a copy of `other` whose root links hang from `attach` (or the world)
    /// through `offset`. Names are prefixed to stay unique.
    pub fn append(&mut self, other: &KinematicTree, attach: Option<usize>, offset: SpatialTransform, prefix: &str) -> Result<()> {
        let base = self.links.len();
        for link in &other.links {
            let mut joint = link.joint.clone();
            joint.name = format!("{prefix}{}", joint.name);
            match joint.parent {
                Some(p) => joint.parent = Some(p + base),
                None => {
                    joint.parent = attach;
                    joint.frame_offset = offset.compose(&joint.frame_offset);
                }
            }
            self.add_link(&format!("{prefix}{}", link.name), joint, link.inertia)?;
        }
        for frame in &other.frames {
            if frame.offset == SpatialTransform::identity() && other.links[frame.link].name == frame.name {
                continue;
            }
            self.add_frame(&format!("{prefix}{}", frame.name), frame.link + base, frame.offset)?;
        }
        Ok(())
    }
}

/// Configuration difference `δ(q1, q2) = q1 − q2` on the Euclidean configuration space.
pub fn config_diff(q1: &DVector<f64>, q2: &DVector<f64>) -> Result<DVector<f64>> {
    check_dim("config_diff", q1.len(), q2.len())?;
    Ok(q1 - q2)
}

/// Jacobians `(∂δ/∂q1, ∂δ/∂q2) = (I, −I)` of [`config_diff`].
pub fn config_diff_jacobians(n: usize) -> (DMatrix<f64>, DMatrix<f64>) {
    (DMatrix::identity(n, n), -DMatrix::identity(n, n))
}

/// `q + v` on the configuration space (the retraction paired with [`config_diff`]).
pub fn config_integrate(q: &DVector<f64>, v: &DVector<f64>) -> DVector<f64> {
    q + v
}
