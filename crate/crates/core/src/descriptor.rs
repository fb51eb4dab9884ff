//! The task descriptor: object, grasp, bounding box, constraint model and
//! reference-frame rule, plus where they came from.

use nalgebra::{Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::artmodel::{
    FitError, ModelClass, ModelParams, PrismaticParams, RevoluteParams, Trajectory3,
};
use crate::camera::{deproject, PixelDepth};
use crate::mlesac::MlesacConfig;
use crate::refframe::{classify_axis_edge, BBox, FrameError, RefFrameRule};
use crate::scene::SceneAnnotation;
use crate::schema::{parse_versioned, to_document, SchemaError};
use crate::selection::{select_model, SelectionReport};

pub const DESCRIPTOR_VERSION: u64 = 1;

#[derive(thiserror::Error, Debug, Clone, PartialEq)]
pub enum DescriptorError {
    #[error("winning model `{0}` cannot be executed")]
    NonExecutableModel(ModelClass),
    #[error("winning model has no inliers")]
    NoInliers,
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Schema(#[from] SchemaError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObjectInfo {
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GraspInfo {
    pub pixel: PixelDepth,
    pub position: Point3<f64>,
    /// Quaternion (w, x, y, z); carried along for grasp planners.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub orientation: Option<[f64; 4]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ClassSummary {
    pub class: ModelClass,
    pub bic: Option<f64>,
    pub posterior_weight: f64,
    pub inliers: Option<usize>,
    pub failure: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Provenance {
    pub recording_id: String,
    pub sample_count: usize,
    pub duration_s: f64,
    pub winner: ModelClass,
    pub executable: bool,
    pub stationary: bool,
    pub selection: Vec<ClassSummary>,
    /// Signed sweep in radians; positive turns the grasp towards the camera.
    pub swept_angle: Option<f64>,
    /// Signed travel in meters along the model direction.
    pub travel_distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskDescriptor {
    pub version: u64,
    pub object: ObjectInfo,
    pub grasp: GraspInfo,
    pub bbox: BBox,
    pub model: ModelParams,
    pub ref_rule: RefFrameRule,
    pub provenance: Provenance,
}

impl TaskDescriptor {
    pub fn class(&self) -> ModelClass {
        self.model.class()
    }

    pub fn is_executable(&self) -> bool {
        self.provenance.executable
    }

    /// Demonstrated sweep or travel, whichever applies.
    pub fn extent(&self) -> Option<f64> {
        self.provenance
            .swept_angle
            .or(self.provenance.travel_distance)
    }

    pub fn to_json(&self) -> String {
        to_document(self)
    }

    pub fn from_json(text: &str) -> Result<Self, SchemaError> {
        let d: TaskDescriptor = parse_versioned(text, DESCRIPTOR_VERSION)?;
        d.bbox
            .validate()
            .map_err(|e| SchemaError::SchemaViolation {
                path: "bbox".into(),
                msg: e.to_string(),
            })?;
        let expected = match d.model.class() {
            ModelClass::Revolute | ModelClass::Prismatic => Some(d.model.class()),
            _ => None,
        };
        if d.ref_rule.model_class() != expected {
            return Err(SchemaError::SchemaViolation {
                path: "ref_rule".into(),
                msg: format!("rule does not fit a {} model", d.model.class()),
            });
        }
        if d.provenance.executable != d.model.class().is_executable() {
            return Err(SchemaError::SchemaViolation {
                path: "provenance.executable".into(),
                msg: "inconsistent with the model class".into(),
            });
        }
        Ok(d)
    }
}

/// Motion direction expressed against the box: (longer side, shorter side,
/// optical axis). Horizontal counts as longer for square boxes.
pub fn prismatic_rule(direction: &Vector3<f64>, bbox: &BBox) -> [f64; 3] {
    if bbox.width() >= bbox.height() {
        [direction.x, direction.y, direction.z]
    } else {
        [direction.y, direction.x, direction.z]
    }
}

pub fn prismatic_direction(direction_bbox: &[f64; 3], bbox: &BBox) -> Vector3<f64> {
    let [l, s, z] = *direction_bbox;
    let d = if bbox.width() >= bbox.height() {
        Vector3::new(l, s, z)
    } else {
        Vector3::new(s, l, z)
    };
    d.normalize()
}

/// Frame rule for the winning model, learned on the demonstration scene.
pub fn learn_rule(
    model: &ModelParams,
    scene: &SceneAnnotation,
) -> Result<RefFrameRule, FrameError> {
    match model {
        ModelParams::Revolute(r) => {
            classify_axis_edge(r, &scene.bbox, &scene.grasp, &scene.intrinsics)
        }
        ModelParams::Prismatic(p) => Ok(RefFrameRule::Prismatic {
            direction_bbox: prismatic_rule(&p.direction, &scene.bbox),
        }),
        _ => Ok(RefFrameRule::None),
    }
}

/// Sign that makes positive rotation about `axis` move a point at `p`
/// towards the camera.
pub fn viewer_sign(axis: &Vector3<f64>, center: &Point3<f64>, p: &Point3<f64>) -> f64 {
    if axis.cross(&(p - center)).dot(&-p.coords) < 0.0 {
        -1.0
    } else {
        1.0
    }
}

/// Unwrapped right-handed angle about the axis from the first to the last
/// point, summed over consecutive steps.
pub fn swept_angle(model: &RevoluteParams, pts: &[Point3<f64>]) -> f64 {
    let a = model.axis.normalize();
    let angle_of = |p: &Point3<f64>| {
        let d = p - model.center;
        d - a * a.dot(&d)
    };
    let mut total = 0.0;
    for w in pts.windows(2) {
        let (u, v) = (angle_of(&w[0]), angle_of(&w[1]));
        total += a.dot(&u.cross(&v)).atan2(u.dot(&v));
    }
    total
}

pub fn travel_distance(model: &PrismaticParams, pts: &[Point3<f64>]) -> f64 {
    match (pts.first(), pts.last()) {
        (Some(a), Some(b)) => (b - a).dot(&model.direction),
        _ => 0.0,
    }
}

fn finite(x: Option<f64>) -> Option<f64> {
    x.filter(|v| v.is_finite())
}

pub fn assemble(
    scene: &SceneAnnotation,
    traj: &Trajectory3,
    selection: &SelectionReport,
    rule: RefFrameRule,
    recording_id: &str,
    require_executable: bool,
) -> Result<TaskDescriptor, DescriptorError> {
    let winner = selection.winner;
    if require_executable && !winner.is_executable() {
        return Err(DescriptorError::NonExecutableModel(winner));
    }
    let fit = selection.winning_fit();
    let inliers: Vec<Point3<f64>> = traj
        .points()
        .zip(&fit.inlier_mask)
        .filter(|(_, &m)| m)
        .map(|(p, _)| *p)
        .collect();
    let (mut swept, mut travel) = (None, None);
    match &fit.params {
        ModelParams::Revolute(r) => {
            let first = inliers.first().ok_or(DescriptorError::NoInliers)?;
            swept = Some(viewer_sign(&r.axis, &r.center, first) * swept_angle(r, &inliers));
        }
        ModelParams::Prismatic(p) => {
            if inliers.is_empty() {
                return Err(DescriptorError::NoInliers);
            }
            travel = Some(travel_distance(p, &inliers));
        }
        _ => {}
    }
    let position = deproject(&scene.grasp, &scene.intrinsics).unwrap_or(*traj.point(0));
    let selection_summary = selection
        .records
        .iter()
        .map(|r| ClassSummary {
            class: r.class,
            bic: finite(r.bic),
            posterior_weight: r.posterior_weight,
            inliers: r.fit.as_ref().map(|f| f.inlier_count()),
            failure: r.failure.clone(),
        })
        .collect();
    Ok(TaskDescriptor {
        version: DESCRIPTOR_VERSION,
        object: ObjectInfo {
            label: scene.label.clone(),
        },
        grasp: GraspInfo {
            pixel: scene.grasp,
            position,
            orientation: scene.grasp_orientation,
        },
        bbox: scene.bbox,
        model: fit.params,
        ref_rule: rule,
        provenance: Provenance {
            recording_id: recording_id.to_string(),
            sample_count: traj.len(),
            duration_s: traj.duration(),
            winner,
            executable: winner.is_executable(),
            stationary: selection.stationary,
            selection: selection_summary,
            swept_angle: swept,
            travel_distance: travel,
        },
    })
}

/// Selection, frame rule and assembly in one go. Non-executable winners
/// still produce a descriptor (flagged in its provenance).
pub fn learn(
    traj: &Trajectory3,
    scene: &SceneAnnotation,
    cfg: &MlesacConfig,
    recording_id: &str,
) -> Result<(TaskDescriptor, SelectionReport), DescriptorError> {
    let selection = select_model(traj, cfg)?;
    let rule = learn_rule(&selection.winning_fit().params, scene)?;
    let d = assemble(scene, traj, &selection, rule, recording_id, false)?;
    Ok((d, selection))
}
