//! URDF subset reader and writer.
//!
//! Supported elements: `robot`, `link` with optional `inertial`
//! (`origin`, `mass`, `inertia`), and `joint` with `parent`, `child`,
//! `origin`, `axis`. Joint types `revolute`, `continuous` (read as revolute),
//! `prismatic` and `fixed` are accepted; `floating` and `planar` are rejected.
//! `visual`, `collision`, `limit`, `dynamics` and any other element are ignored.

use std::collections::{HashMap, VecDeque};
use std::fmt::Write as _;

use nalgebra::{Matrix3, Rotation3, Vector3};
use roxmltree::{Document, Node};

use crate::error::{Error, Result};
use crate::spatial::{SpatialInertia, SpatialTransform};
use crate::tree::{Joint, JointKind, KinematicTree};

fn located(doc: &Document, node: Node, message: String) -> Error {
    let pos = doc.text_pos_at(node.range().start);
    Error::Urdf { line: pos.row, column: pos.col, message }
}

fn parse_vec3(doc: &Document, node: Node, attr: &str, default: Vector3<f64>) -> Result<Vector3<f64>> {
    let Some(text) = node.attribute(attr) else { return Ok(default) };
    let parts: Vec<&str> = text.split_whitespace().collect();
    if parts.len() != 3 {
        return Err(located(doc, node, format!("attribute `{attr}` must hold 3 numbers, got `{text}`")));
    }
    let mut out = Vector3::zeros();
    for (i, p) in parts.iter().enumerate() {
        out[i] = p
            .parse::<f64>()
            .ok()
            .filter(|x| x.is_finite())
            .ok_or_else(|| located(doc, node, format!("attribute `{attr}`: `{p}` is not a finite number")))?;
    }
    Ok(out)
}

fn parse_f64(doc: &Document, node: Node, attr: &str) -> Result<f64> {
    let text = node.attribute(attr).ok_or_else(|| located(doc, node, format!("missing attribute `{attr}`")))?;
    text.trim()
        .parse::<f64>()
        .ok()
        .filter(|x| x.is_finite())
        .ok_or_else(|| located(doc, node, format!("attribute `{attr}`: `{text}` is not a finite number")))
}

fn child<'a, 'input>(node: Node<'a, 'input>, name: &str) -> Option<Node<'a, 'input>> {
    node.children().find(|c| c.is_element() && c.has_tag_name(name))
}

fn parse_origin(doc: &Document, node: Node) -> Result<SpatialTransform> {
    match child(node, "origin") {
        Some(o) => Ok(SpatialTransform::from_xyz_rpy(
            parse_vec3(doc, o, "xyz", Vector3::zeros())?,
            parse_vec3(doc, o, "rpy", Vector3::zeros())?,
        )),
        None => Ok(SpatialTransform::identity()),
    }
}

fn parse_inertial(doc: &Document, link: Node) -> Result<SpatialInertia> {
    let Some(inertial) = child(link, "inertial") else { return Ok(SpatialInertia::default()) };
    let origin = parse_origin(doc, inertial)?;
    let mass = match child(inertial, "mass") {
        Some(m) => parse_f64(doc, m, "value")?,
        None => 0.0,
    };
    if mass < 0.0 {
        return Err(located(doc, inertial, format!("negative mass {mass}")));
    }
    let inertia = match child(inertial, "inertia") {
        Some(i) => {
            let g = |a: &str| -> Result<f64> {
                if i.attribute(a).is_some() {
                    parse_f64(doc, i, a)
                } else {
                    Ok(0.0)
                }
            };
            let (ixx, ixy, ixz, iyy, iyz, izz) = (g("ixx")?, g("ixy")?, g("ixz")?, g("iyy")?, g("iyz")?, g("izz")?);
            Matrix3::new(ixx, ixy, ixz, ixy, iyy, iyz, ixz, iyz, izz)
        }
        None => Matrix3::zeros(),
    };
    let r = origin.rotation;
    Ok(SpatialInertia::new(mass, origin.translation, r * inertia * r.transpose()))
}

struct JointDecl<'a, 'input> {
    node: Node<'a, 'input>,
    name: String,
    kind: JointKind,
    parent: String,
    child: String,
}

/// Parses a URDF document into a [`KinematicTree`] (default gravity).
pub fn parse_urdf(text: &str) -> Result<KinematicTree> {
    let doc = Document::parse(text).map_err(|e| {
        let pos = e.pos();
        Error::Urdf { line: pos.row, column: pos.col, message: format!("malformed XML: {e}") }
    })?;
    let robot = doc.root_element();
    if !robot.has_tag_name("robot") {
        return Err(located(&doc, robot, format!("root element must be <robot>, found <{}>", robot.tag_name().name())));
    }

    let mut links: Vec<(String, Node)> = Vec::new();
    let mut link_index: HashMap<String, usize> = HashMap::new();
    let mut joints: Vec<JointDecl> = Vec::new();
    for node in robot.children().filter(|n| n.is_element()) {
        match node.tag_name().name() {
            "link" => {
                let name = node
                    .attribute("name")
                    .ok_or_else(|| located(&doc, node, "link without name".to_string()))?
                    .to_string();
                if link_index.insert(name.clone(), links.len()).is_some() {
                    return Err(located(&doc, node, format!("duplicate link `{name}`")));
                }
                links.push((name, node));
            }
            "joint" => {
                let name = node
                    .attribute("name")
                    .ok_or_else(|| located(&doc, node, "joint without name".to_string()))?
                    .to_string();
                let ty = node.attribute("type").unwrap_or("");
                let kind = match ty {
                    "revolute" | "continuous" => JointKind::Revolute,
                    "prismatic" => JointKind::Prismatic,
                    "fixed" => JointKind::Fixed,
                    other => {
                        return Err(located(&doc, node, format!("unsupported joint type `{other}` for joint `{name}`")))
                    }
                };
                let link_attr = |tag: &str| -> Result<String> {
                    child(node, tag)
                        .and_then(|c| c.attribute("link"))
                        .map(str::to_string)
                        .ok_or_else(|| located(&doc, node, format!("joint `{name}` has no <{tag} link=...>")))
                };
                joints.push(JointDecl { node, name: name.clone(), kind, parent: link_attr("parent")?, child: link_attr("child")? });
            }
            _ => {}
        }
    }
    if links.is_empty() {
        return Err(located(&doc, robot, "robot has no links".to_string()));
    }

    let mut parent_joint: Vec<Option<usize>> = vec![None; links.len()];
    let mut children: Vec<Vec<usize>> = vec![Vec::new(); links.len()];
    for (ji, j) in joints.iter().enumerate() {
        let p = *link_index
            .get(&j.parent)
            .ok_or_else(|| located(&doc, j.node, format!("joint `{}` references missing parent link `{}`", j.name, j.parent)))?;
        let c = *link_index
            .get(&j.child)
            .ok_or_else(|| located(&doc, j.node, format!("joint `{}` references missing child link `{}`", j.name, j.child)))?;
        if parent_joint[c].is_some() {
            return Err(located(&doc, j.node, format!("link `{}` has two parent joints (kinematic loop)", j.child)));
        }
        parent_joint[c] = Some(ji);
        children[p].push(ji);
    }
    let roots: Vec<usize> = (0..links.len()).filter(|&i| parent_joint[i].is_none()).collect();
    let root = match roots.as_slice() {
        [r] => *r,
        [] => return Err(located(&doc, robot, "no root link (kinematic loop)".to_string())),
        _ => {
            let names: Vec<&str> = roots.iter().map(|&r| links[r].0.as_str()).collect();
            return Err(located(&doc, robot, format!("multiple root links: {}", names.join(", "))));
        }
    };

    let mut tree = KinematicTree::new();
    let mut tree_index: Vec<Option<usize>> = vec![None; links.len()];
    let root_inertia = parse_inertial(&doc, links[root].1)?;
    tree_index[root] = Some(tree.add_link(
        &links[root].0,
        Joint::fixed(&format!("{}_anchor", links[root].0), None, SpatialTransform::identity()),
        root_inertia,
    )?);
    let mut queue = VecDeque::from([root]);
    while let Some(l) = queue.pop_front() {
        for &ji in &children[l] {
            let j = &joints[ji];
            let c = link_index[&j.child];
            if tree_index[c].is_some() {
                return Err(located(&doc, j.node, format!("link `{}` visited twice (kinematic loop)", j.child)));
            }
            let offset = parse_origin(&doc, j.node)?;
            let axis = match child(j.node, "axis") {
                Some(a) => parse_vec3(&doc, a, "xyz", Vector3::x())?,
                None => Vector3::x(),
            };
            let joint = match j.kind {
                JointKind::Fixed => Joint::fixed(&j.name, tree_index[l], offset),
                kind => {
                    let norm = axis.norm();
                    if norm < 1e-12 {
                        return Err(located(&doc, j.node, format!("joint `{}` has a zero axis", j.name)));
                    }
                    Joint { name: j.name.clone(), kind, axis: axis / norm, parent: tree_index[l], frame_offset: offset }
                }
            };
            let inertia = parse_inertial(&doc, links[c].1)?;
            let idx = tree
                .add_link(&links[c].0, joint, inertia)
                .map_err(|e| located(&doc, j.node, e.to_string()))?;
            tree_index[c] = Some(idx);
            queue.push_back(c);
        }
    }
    if let Some(orphan) = tree_index.iter().position(|t| t.is_none()) {
        return Err(located(&doc, links[orphan].1, format!("link `{}` is not reachable from the root (kinematic loop)", links[orphan].0)));
    }
    Ok(tree)
}

fn fmt_vec(v: &Vector3<f64>) -> String {
    format!("{:?} {:?} {:?}", v.x, v.y, v.z)
}

fn fmt_origin(x: &SpatialTransform) -> String {
    let (r, p, y) = Rotation3::from_matrix_unchecked(x.rotation).euler_angles();
    format!("<origin xyz=\"{}\" rpy=\"{}\"/>", fmt_vec(&x.translation), fmt_vec(&Vector3::new(r, p, y)))
}

/// Writes the tree as URDF. World-attached links hang from a massless `world`
/// link; extra frames become massless links on fixed joints.
pub fn to_urdf(tree: &KinematicTree, robot_name: &str) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "<?xml version=\"1.0\"?>");
    let _ = writeln!(out, "<robot name=\"{robot_name}\">");
    let _ = writeln!(out, "  <link name=\"world\"/>");
    for link in tree.links() {
        let i = &link.inertia;
        let _ = writeln!(out, "  <link name=\"{}\">", link.name);
        let _ = writeln!(out, "    <inertial>");
        let _ = writeln!(out, "      <origin xyz=\"{}\" rpy=\"0 0 0\"/>", fmt_vec(&i.com));
        let _ = writeln!(out, "      <mass value=\"{:?}\"/>", i.mass);
        let m = &i.inertia;
        let _ = writeln!(
            out,
            "      <inertia ixx=\"{:?}\" ixy=\"{:?}\" ixz=\"{:?}\" iyy=\"{:?}\" iyz=\"{:?}\" izz=\"{:?}\"/>",
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 2)]
        );
        let _ = writeln!(out, "    </inertial>");
        let _ = writeln!(out, "  </link>");
    }
    for link in tree.links() {
        let j = &link.joint;
        let ty = match j.kind {
            JointKind::Revolute => "revolute",
            JointKind::Prismatic => "prismatic",
            JointKind::Fixed => "fixed",
        };
        let parent = j.parent.map(|p| tree.links()[p].name.as_str()).unwrap_or("world");
        let _ = writeln!(out, "  <joint name=\"{}\" type=\"{ty}\">", j.name);
        let _ = writeln!(out, "    <parent link=\"{parent}\"/>");
        let _ = writeln!(out, "    <child link=\"{}\"/>", link.name);
        let _ = writeln!(out, "    {}", fmt_origin(&j.frame_offset));
        if j.kind != JointKind::Fixed {
            let _ = writeln!(out, "    <axis xyz=\"{}\"/>", fmt_vec(&j.axis));
        }
        let _ = writeln!(out, "  </joint>");
    }
    for frame in tree.frames() {
        if tree.links()[frame.link].name == frame.name {
            continue;
        }
        let _ = writeln!(out, "  <link name=\"{}\"/>", frame.name);
        let _ = writeln!(out, "  <joint name=\"{}_fixed\" type=\"fixed\">", frame.name);
        let _ = writeln!(out, "    <parent link=\"{}\"/>", tree.links()[frame.link].name);
        let _ = writeln!(out, "    <child link=\"{}\"/>", frame.name);
        let _ = writeln!(out, "    {}", fmt_origin(&frame.offset));
        let _ = writeln!(out, "  </joint>");
    }
    let _ = writeln!(out, "</robot>");
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const ONE_LINK: &str = r#"<?xml version="1.0"?>
<robot name="one">
  <link name="base"/>
  <link name="arm">
    <inertial>
      <origin xyz="0 0 -0.5"/>
      <mass value="1.0"/>
      <inertia ixx="0.01" iyy="0.01" izz="0.001"/>
    </inertial>
    <visual><geometry><box size="1 1 1"/></geometry></visual>
  </link>
  <joint name="shoulder" type="continuous">
    <parent link="base"/>
    <child link="arm"/>
    <axis xyz="0 1 0"/>
  </joint>
</robot>"#;

    #[test]
    fn single_revolute() {
        let tree = parse_urdf(ONE_LINK).unwrap();
        assert_eq!(tree.nv(), 1);
        assert_eq!(tree.links().len(), 2);
        assert!(tree.frame_index("arm").is_ok());
        assert_eq!(tree.links()[1].inertia.mass, 1.0);
    }

    #[test]
    fn floating_joint_is_rejected_by_name() {
        let doc = ONE_LINK.replace("continuous", "floating");
        match parse_urdf(&doc) {
            Err(Error::Urdf { message, line, .. }) => {
                assert!(message.contains("shoulder"), "{message}");
                assert!(message.contains("floating"));
                assert_eq!(line, 12);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn structural_errors() {
        let missing_parent = ONE_LINK.replace(r#"<parent link="base"/>"#, r#"<parent link="ghost"/>"#);
        assert!(matches!(parse_urdf(&missing_parent), Err(Error::Urdf { .. })));
        assert!(matches!(parse_urdf("<robot><link name=\"a\">"), Err(Error::Urdf { .. })));
        let loop_doc = r#"<robot name="r">
  <link name="a"/><link name="b"/>
  <joint name="ab" type="fixed"><parent link="a"/><child link="b"/></joint>
  <joint name="ba" type="fixed"><parent link="b"/><child link="a"/></joint>
</robot>"#;
        assert!(matches!(parse_urdf(loop_doc), Err(Error::Urdf { .. })));
        let planar = ONE_LINK.replace("continuous", "planar");
        assert!(matches!(parse_urdf(&planar), Err(Error::Urdf { .. })));
    }
}
