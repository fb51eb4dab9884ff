//! Applies a descriptor to a new scene and produces end-effector waypoints.

use nalgebra::{Isometry3, Point2, Point3, Vector3};
use serde::{Deserialize, Serialize};

use crate::artmodel::ModelClass;
use crate::camera::{deproject, project, CameraError, PixelDepth};
use crate::descriptor::{prismatic_direction, viewer_sign, TaskDescriptor};
use crate::refframe::{
    build_frame, edge_depth, estimate_surface_normal, predict_axis, predict_center_px, BBox,
    FrameError, RefFrameRule, ReferenceFrame, Segment,
};
use crate::scene::SceneAnnotation;

/// Minimum distance of the grasp from the rotation axis, meters.
const MIN_GRASP_RADIUS: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Request,
    Grasp,
    PredictAxis,
    EdgeDepth,
    SurfaceNormal,
    BuildFrame,
    Waypoints,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Request => "request",
            Stage::Grasp => "grasp",
            Stage::PredictAxis => "predict_axis",
            Stage::EdgeDepth => "edge_depth",
            Stage::SurfaceNormal => "surface_normal",
            Stage::BuildFrame => "build_frame",
            Stage::Waypoints => "waypoints",
        }
    }
}

#[derive(thiserror::Error, Debug, Clone, PartialEq)]
pub enum TrajectoryError {
    #[error("grasp lies on the rotation axis (radius {0} m)")]
    GraspOnAxis(f64),
    #[error("need at least 2 waypoints, got {0}")]
    TooFewWaypoints(usize),
    #[error("duration must be finite and non-negative")]
    InvalidDuration,
}

#[derive(thiserror::Error, Debug, Clone, PartialEq)]
pub enum GeneralizeErrorKind {
    #[error("descriptor model `{0}` is not executable")]
    NonExecutable(ModelClass),
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("no valid depth near the predicted axis edge")]
    MissingEdgeDepth,
    #[error(transparent)]
    Camera(#[from] CameraError),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Trajectory(#[from] TrajectoryError),
}

#[derive(thiserror::Error, Debug, Clone, PartialEq)]
#[error("{} stage failed: {kind}", stage.name())]
pub struct GeneralizeError {
    pub stage: Stage,
    pub kind: GeneralizeErrorKind,
}

fn at<E: Into<GeneralizeErrorKind>>(stage: Stage) -> impl FnOnce(E) -> GeneralizeError {
    move |e| GeneralizeError {
        stage,
        kind: e.into(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Waypoint {
    pub t: f64,
    pub position: Point3<f64>,
    /// Rotation angle (radians) or offset along the motion axis (meters).
    pub param: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneralizationRequest {
    pub descriptor: TaskDescriptor,
    pub scene: SceneAnnotation,
    pub n_waypoints: usize,
    /// Overrides the demonstrated sweep (radians) or travel (meters).
    pub sweep: Option<f64>,
    /// Overrides the demonstrated duration.
    pub duration: Option<f64>,
    pub world_from_camera: Isometry3<f64>,
}

impl GeneralizationRequest {
    pub fn new(descriptor: TaskDescriptor, scene: SceneAnnotation) -> Self {
        Self {
            descriptor,
            scene,
            n_waypoints: 50,
            sweep: None,
            duration: None,
            world_from_camera: Isometry3::identity(),
        }
    }
}

/// Pixel-space and metric by-products, for plotting and checking.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneralizationReport {
    pub class: ModelClass,
    /// Distance from grasp to axis (revolute).
    pub radius: Option<f64>,
    /// Sweep (radians) or travel (meters) actually executed.
    pub extent: f64,
    pub duration: f64,
    pub bbox: BBox,
    pub grasp_px: Point2<f64>,
    pub axis_px: Option<Segment>,
    pub center_px: Option<Point2<f64>>,
    pub edge_depth: Option<f64>,
    pub surface_normal: Vector3<f64>,
    /// Waypoints projected into the image (camera frame, before the world
    /// transform).
    pub path_px: Vec<Point2<f64>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Generalization {
    pub frame: ReferenceFrame,
    pub waypoints: Vec<Waypoint>,
    pub report: GeneralizationReport,
}

fn times(n: usize, duration: f64) -> Result<Vec<f64>, TrajectoryError> {
    if n < 2 {
        return Err(TrajectoryError::TooFewWaypoints(n));
    }
    if !(duration >= 0.0 && duration.is_finite()) {
        return Err(TrajectoryError::InvalidDuration);
    }
    Ok((0..n)
        .map(|j| j as f64 * duration / (n - 1) as f64)
        .collect())
}

/// Rotation of the grasp about the frame's Y axis in `n` equal steps.
pub fn revolute_waypoints(
    frame: &ReferenceFrame,
    grasp3: &Point3<f64>,
    sweep: f64,
    n: usize,
    duration: f64,
) -> Result<Vec<Waypoint>, TrajectoryError> {
    let ts = times(n, duration)?;
    let g = frame.to_local(grasp3);
    let r = g.x.hypot(g.z);
    if !(r > MIN_GRASP_RADIUS) {
        return Err(TrajectoryError::GraspOnAxis(r));
    }
    Ok(ts
        .into_iter()
        .enumerate()
        .map(|(j, t)| {
            let th = j as f64 * sweep / (n - 1) as f64;
            let position = if j == 0 {
                *grasp3
            } else {
                let (s, c) = th.sin_cos();
                frame.from_local(&Vector3::new(g.x * c + g.z * s, g.y, -g.x * s + g.z * c))
            };
            Waypoint {
                t,
                position,
                param: th,
            }
        })
        .collect())
}

/// Straight line from the grasp along the frame's Y axis.
pub fn prismatic_waypoints(
    frame: &ReferenceFrame,
    grasp3: &Point3<f64>,
    travel: f64,
    n: usize,
    duration: f64,
) -> Result<Vec<Waypoint>, TrajectoryError> {
    let ts = times(n, duration)?;
    let y = frame.y();
    Ok(ts
        .into_iter()
        .enumerate()
        .map(|(j, t)| {
            let s = j as f64 * travel / (n - 1) as f64;
            Waypoint {
                t,
                position: if j == 0 { *grasp3 } else { grasp3 + y * s },
                param: s,
            }
        })
        .collect())
}

pub fn generalize(req: &GeneralizationRequest) -> Result<Generalization, GeneralizeError> {
    let d = &req.descriptor;
    let scene = &req.scene;
    let class = d.class();
    if !d.is_executable() || !class.is_executable() {
        return Err(at(Stage::Request)(GeneralizeErrorKind::NonExecutable(
            class,
        )));
    }
    let invalid = |m: &str| at(Stage::Request)(GeneralizeErrorKind::InvalidRequest(m.into()));
    let extent = req
        .sweep
        .or(d.extent())
        .ok_or_else(|| invalid("descriptor carries no sweep or travel"))?;
    if extent == 0.0 || !extent.is_finite() {
        return Err(invalid("sweep must be finite and non-zero"));
    }
    let duration = req.duration.unwrap_or(d.provenance.duration_s);
    scene.bbox.validate().map_err(at(Stage::Request))?;
    let k = &scene.intrinsics;
    k.validate().map_err(at(Stage::Request))?;

    let grasp3 = deproject(&scene.grasp, k).map_err(at(Stage::Grasp))?;
    let grasp_px = Point2::new(scene.grasp.u, scene.grasp.v);
    let normal =
        estimate_surface_normal(&scene.depth_patch, k).map_err(at(Stage::SurfaceNormal))?;

    let (frame, waypoints, radius, axis_px, center_px, depth) = match &d.ref_rule {
        RefFrameRule::Revolute { .. } => {
            let seg = predict_axis(&d.ref_rule, &scene.bbox, &scene.grasp)
                .map_err(at(Stage::PredictAxis))?;
            let c_px = predict_center_px(&seg, &grasp_px);
            let z = edge_depth(&scene.depth_patch, &seg)
                .ok_or_else(|| at(Stage::EdgeDepth)(GeneralizeErrorKind::MissingEdgeDepth))?;
            let lift = |p: &Point2<f64>| {
                deproject(&PixelDepth::new(p.x, p.y, z), k).map_err(at(Stage::EdgeDepth))
            };
            let center3 = lift(&c_px)?;
            let mut axis = (lift(&seg.b)? - lift(&seg.a)?).normalize();
            axis *= viewer_sign(&axis, &center3, &grasp3);
            let frame = build_frame(ModelClass::Revolute, &center3, &axis, &normal, &grasp3)
                .map_err(at(Stage::BuildFrame))?;
            let wps = revolute_waypoints(&frame, &grasp3, extent, req.n_waypoints, duration)
                .map_err(at(Stage::Waypoints))?;
            let g = frame.to_local(&grasp3);
            (
                frame,
                wps,
                Some(g.x.hypot(g.z)),
                Some(seg),
                Some(c_px),
                Some(z),
            )
        }
        RefFrameRule::Prismatic { direction_bbox } => {
            let dir = prismatic_direction(direction_bbox, &scene.bbox);
            let frame = build_frame(ModelClass::Prismatic, &grasp3, &dir, &normal, &grasp3)
                .map_err(at(Stage::BuildFrame))?;
            let wps = prismatic_waypoints(&frame, &grasp3, extent, req.n_waypoints, duration)
                .map_err(at(Stage::Waypoints))?;
            (frame, wps, None, None, None, None)
        }
        RefFrameRule::None => {
            return Err(at(Stage::Request)(GeneralizeErrorKind::NonExecutable(
                class,
            )))
        }
    };

    let path_px = waypoints
        .iter()
        .filter_map(|w| project(&w.position, k).ok())
        .map(|p| Point2::new(p.u, p.v))
        .collect();
    let iso = &req.world_from_camera;
    let waypoints = waypoints
        .into_iter()
        .map(|w| Waypoint {
            position: iso * w.position,
            ..w
        })
        .collect();
    Ok(Generalization {
        frame: frame.transformed(iso),
        waypoints,
        report: GeneralizationReport {
            class,
            radius,
            extent,
            duration,
            bbox: scene.bbox,
            grasp_px,
            axis_px,
            center_px,
            edge_depth: depth,
            surface_normal: normal,
            path_px,
        },
    })
}
