//! JSON model format.
//!
//! Units are kg, m and rad. Body and cluster references are 1-based with
//! parent 0 standing for the world.
//!
//! ```json
//! {
//!   "name": "pendulum",
//!   "gravity": [0, 0, 0, 0, 0, -9.81],
//!   "bodies": [
//!     { "name": "rod", "parent": 0,
//!       "joint": { "kind": "revolute", "axis": [0, 1, 0], "offset": { "xyz": [0, 0, 0], "rpy": [0, 0, 0] } },
//!       "inertia": { "theta": [1, 0, 0, -0.5, 0.3333, 0.3333, 0, 0, 0, 0] } }
//!   ],
//!   "clusters": []
//! }
//! ```

use std::path::Path;

use nalgebra::{DMatrix, Vector3, Vector6};
use serde::{Deserialize, Serialize};

use super::{Body, ClusterSpec, JointKind, JointModel, Model, Offset, DEFAULT_GRAVITY};
use crate::error::{Error, Result};
use crate::spatial::InertialParams;

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct JointDoc {
    kind: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    axis: Option<[f64; 3]>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pitch: Option<f64>,
    #[serde(default)]
    offset: Offset,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct InertiaDoc {
    theta: [f64; 10],
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct BodyDoc {
    name: String,
    parent: usize,
    joint: JointDoc,
    inertia: InertiaDoc,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ClusterDoc {
    name: String,
    bodies: Vec<usize>,
    transmission: Vec<Vec<f64>>,
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelDoc {
    name: String,
    #[serde(default = "default_gravity")]
    gravity: [f64; 6],
    bodies: Vec<BodyDoc>,
    #[serde(default)]
    clusters: Vec<ClusterDoc>,
}

fn default_gravity() -> [f64; 6] {
    DEFAULT_GRAVITY
}

fn unit_axis(body: &str, axis: Option<[f64; 3]>) -> Result<Vector3<f64>> {
    let a = axis.ok_or_else(|| Error::Schema(format!("body '{body}': joint needs an axis")))?;
    let v = Vector3::from(a);
    if (v.norm() - 1.0).abs() > 1e-12 {
        return Err(Error::Schema(format!("body '{body}': joint axis must have unit length")));
    }
    Ok(v)
}

fn joint_from_doc(body: &str, doc: &JointDoc) -> Result<JointModel> {
    let kind = match doc.kind.as_str() {
        "revolute" => JointKind::Revolute { axis: unit_axis(body, doc.axis)? },
        "prismatic" => JointKind::Prismatic { axis: unit_axis(body, doc.axis)? },
        "helical" => JointKind::Helical {
            axis: unit_axis(body, doc.axis)?,
            pitch: doc.pitch.ok_or_else(|| Error::Schema(format!("body '{body}': helical joint needs a pitch")))?,
        },
        "spherical" => JointKind::Spherical,
        "translation" => JointKind::Translation,
        "free" => JointKind::Free,
        other => return Err(Error::Schema(format!("body '{body}': unknown joint kind '{other}'"))),
    };
    if doc.pitch.is_some() && !matches!(kind, JointKind::Helical { .. }) {
        return Err(Error::Schema(format!("body '{body}': pitch only applies to helical joints")));
    }
    if doc.axis.is_some() && matches!(kind, JointKind::Spherical | JointKind::Translation | JointKind::Free) {
        return Err(Error::Schema(format!("body '{body}': {} joints take no axis", kind.name())));
    }
    if doc.offset.xyz.iter().chain(&doc.offset.rpy).any(|x| !x.is_finite()) {
        return Err(Error::Schema(format!("body '{body}': non-finite offset")));
    }
    Ok(JointModel { kind, offset: doc.offset })
}

fn joint_to_doc(j: &JointModel) -> JointDoc {
    let (axis, pitch) = match j.kind {
        JointKind::Revolute { axis } | JointKind::Prismatic { axis } => (Some(axis.into()), None),
        JointKind::Helical { axis, pitch } => (Some(axis.into()), Some(pitch)),
        _ => (None, None),
    };
    JointDoc { kind: j.kind.name().to_string(), axis, pitch, offset: j.offset }
}

fn check_inertia(body: &str, theta: &[f64; 10]) -> Result<()> {
    if theta.iter().any(|x| !x.is_finite()) {
        return Err(Error::Schema(format!("body '{body}': non-finite inertial parameter")));
    }
    if theta[0] < 0.0 {
        return Err(Error::Validation(format!("body '{body}': negative mass")));
    }
    Ok(())
}

fn model_from_doc(doc: ModelDoc) -> Result<Model> {
    let mut bodies = Vec::with_capacity(doc.bodies.len());
    for (i, b) in doc.bodies.iter().enumerate() {
        if b.parent > i {
            return Err(Error::Validation(format!("body {} ('{}') has parent {} which does not precede it", i + 1, b.name, b.parent)));
        }
        check_inertia(&b.name, &b.inertia.theta)?;
        bodies.push(Body {
            name: b.name.clone(),
            parent: b.parent.checked_sub(1),
            joint: joint_from_doc(&b.name, &b.joint)?,
            inertia: InertialParams(b.inertia.theta),
        });
    }
    let mut specs = Vec::with_capacity(doc.clusters.len());
    for c in &doc.clusters {
        let nrows = c.transmission.len();
        let ncols = c.transmission.first().map_or(0, Vec::len);
        if nrows == 0 || ncols == 0 || c.transmission.iter().any(|r| r.len() != ncols) {
            return Err(Error::Schema(format!("cluster '{}': transmission must be a non-empty rectangular array", c.name)));
        }
        if c.bodies.iter().any(|&b| b == 0 || b > bodies.len()) {
            return Err(Error::Schema(format!("cluster '{}': body index out of range", c.name)));
        }
        specs.push(ClusterSpec {
            name: c.name.clone(),
            bodies: c.bodies.iter().map(|b| b - 1).collect(),
            transmission: DMatrix::from_fn(nrows, ncols, |r, k| c.transmission[r][k]),
        });
    }
    Model::new(doc.name, bodies, specs, Vector6::from(doc.gravity))
}

fn model_to_doc(model: &Model) -> ModelDoc {
    ModelDoc {
        name: model.name.clone(),
        gravity: (*model.gravity()).into(),
        bodies: model
            .bodies()
            .iter()
            .map(|b| BodyDoc {
                name: b.name.clone(),
                parent: b.parent.map_or(0, |p| p + 1),
                joint: joint_to_doc(&b.joint),
                inertia: InertiaDoc { theta: b.inertia.0 },
            })
            .collect(),
        clusters: model
            .cluster_specs()
            .iter()
            .map(|c| ClusterDoc {
                name: c.name.clone(),
                bodies: c.bodies.iter().map(|b| b + 1).collect(),
                transmission: c.transmission.row_iter().map(|r| r.iter().copied().collect()).collect(),
            })
            .collect(),
    }
}

/// Parses and validates a model document.
pub fn model_from_json(text: &str) -> Result<Model> {
    let doc: ModelDoc = serde_json::from_str(text).map_err(|e| Error::Schema(e.to_string()))?;
    model_from_doc(doc)
}

pub fn model_to_json(model: &Model) -> Result<String> {
    Ok(serde_json::to_string_pretty(&model_to_doc(model))?)
}

pub fn load_model(path: impl AsRef<Path>) -> Result<Model> {
    model_from_json(&std::fs::read_to_string(path)?)
}

pub fn save_model(model: &Model, path: impl AsRef<Path>) -> Result<()> {
    std::fs::write(path, model_to_json(model)?)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unknown_fields_and_kinds() {
        let bad = r#"{"name":"x","bodies":[{"name":"a","parent":0,"joint":{"kind":"weld"},"inertia":{"theta":[1,0,0,0,1,1,1,0,0,0]}}]}"#;
        assert!(matches!(model_from_json(bad), Err(Error::Schema(_))));
        let extra = r#"{"name":"x","colour":1,"bodies":[]}"#;
        assert!(matches!(model_from_json(extra), Err(Error::Schema(_))));
    }

    #[test]
    fn rejects_non_unit_axis_and_forward_parent() {
        let axis = r#"{"name":"x","bodies":[{"name":"a","parent":0,"joint":{"kind":"revolute","axis":[0,0,2]},"inertia":{"theta":[1,0,0,0,1,1,1,0,0,0]}}]}"#;
        assert!(model_from_json(axis).is_err());
        let fwd = r#"{"name":"x","bodies":[{"name":"a","parent":1,"joint":{"kind":"spherical"},"inertia":{"theta":[1,0,0,0,1,1,1,0,0,0]}}]}"#;
        assert!(matches!(model_from_json(fwd), Err(Error::Validation(_))));
    }

    #[test]
    fn empty_model_rejected() {
        assert!(model_from_json(r#"{"name":"x","bodies":[]}"#).is_err());
    }
}
