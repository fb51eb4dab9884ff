//! Reference-frame model: which bounding-box edge carries the rotation axis,
//! where the rotation center sits, and how the executable frame is oriented.
//!
//! At demonstration time the fitted axis is projected into the image and
//! matched to a bounding-box edge; the rule stored in the descriptor is "the
//! edge of the same length class (longer/shorter) that is furthest from the
//! grasp point". On a new object the rule picks an edge, the rotation center
//! is the perpendicular foot of the grasp pixel on that edge, and the frame
//! puts Y on the axis and Z on the object's surface normal.

use nalgebra::{Matrix3, Point2, Point3, Vector2, Vector3};
use serde::{Deserialize, Serialize};

use crate::artmodel::{ModelClass, RevoluteParams};
use crate::camera::{deproject, project, CameraError, Intrinsics, PixelDepth};
use crate::geom::{centroid, Scatter};

/// Bounding boxes whose sides differ by less than this (pixels) have no
/// meaningful longer/shorter distinction.
pub const SQUARE_TOL_PX: f64 = 1.0;
/// Minimum projected length of the axis, pixels.
const MIN_AXIS_PX: f64 = 1.0;
const ANGLE_TIE_RAD: f64 = 1e-9;
const PARALLEL_TOL: f64 = 1e-6;

#[derive(thiserror::Error, Debug, Clone, PartialEq)]
pub enum FrameError {
    #[error("rotation axis is viewed end-on and has no image direction")]
    ProjectionDegenerate,
    #[error("axis and surface normal are parallel")]
    ParallelNormal,
    #[error("depth patch does not determine a plane")]
    DegeneratePatch,
    #[error("reference-frame rule does not match the model class: {0}")]
    RuleMismatch(String),
    #[error("axis must have unit length (norm {0})")]
    NonUnitAxis(f64),
    #[error("invalid bounding box: {0}")]
    InvalidBBox(String),
    #[error(transparent)]
    Camera(#[from] CameraError),
}

/// Axis-aligned pixel box, `u0 < u1`, `v0 < v1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BBox {
    pub u0: f64,
    pub v0: f64,
    pub u1: f64,
    pub v1: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Top,
    Bottom,
    Left,
    Right,
}

impl Side {
    pub const ALL: [Side; 4] = [Side::Top, Side::Bottom, Side::Left, Side::Right];

    pub fn is_horizontal(self) -> bool {
        matches!(self, Side::Top | Side::Bottom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeClass {
    Longer,
    Shorter,
}

/// Image segment between two pixel points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Segment {
    pub a: Point2<f64>,
    pub b: Point2<f64>,
}

impl Segment {
    pub fn new(a: Point2<f64>, b: Point2<f64>) -> Self {
        Self { a, b }
    }

    pub fn midpoint(&self) -> Point2<f64> {
        nalgebra::center(&self.a, &self.b)
    }

    pub fn length(&self) -> f64 {
        (self.b - self.a).norm()
    }

    /// Distance from `p` to the segment's supporting line.
    pub fn line_distance(&self, p: &Point2<f64>) -> f64 {
        let d = (self.b - self.a).normalize();
        let w = p - self.a;
        (w.x * d.y - w.y * d.x).abs()
    }

    /// Distance from `p` to the closest point of the segment.
    pub fn distance(&self, p: &Point2<f64>) -> f64 {
        (predict_center_px(self, p) - p).norm()
    }
}

impl BBox {
    pub fn new(u0: f64, v0: f64, u1: f64, v1: f64) -> Result<Self, FrameError> {
        let b = Self { u0, v0, u1, v1 };
        b.validate()?;
        Ok(b)
    }

    pub fn validate(&self) -> Result<(), FrameError> {
        if ![self.u0, self.v0, self.u1, self.v1]
            .iter()
            .all(|x| x.is_finite())
        {
            return Err(FrameError::InvalidBBox("non-finite corner".into()));
        }
        if !(self.u0 < self.u1 && self.v0 < self.v1) {
            return Err(FrameError::InvalidBBox(
                "corners must satisfy u0 < u1 and v0 < v1".into(),
            ));
        }
        Ok(())
    }

    pub fn width(&self) -> f64 {
        self.u1 - self.u0
    }

    pub fn height(&self) -> f64 {
        self.v1 - self.v0
    }

    pub fn is_square(&self) -> bool {
        (self.width() - self.height()).abs() < SQUARE_TOL_PX
    }

    pub fn contains(&self, u: f64, v: f64) -> bool {
        (self.u0..=self.u1).contains(&u) && (self.v0..=self.v1).contains(&v)
    }

    pub fn edge(&self, side: Side) -> Segment {
        let (a, b) = match side {
            Side::Top => ((self.u0, self.v0), (self.u1, self.v0)),
            Side::Bottom => ((self.u0, self.v1), (self.u1, self.v1)),
            Side::Left => ((self.u0, self.v0), (self.u0, self.v1)),
            Side::Right => ((self.u1, self.v0), (self.u1, self.v1)),
        };
        Segment::new(Point2::new(a.0, a.1), Point2::new(b.0, b.1))
    }

    /// Length class of `side`. Horizontal edges count as the longer pair
    /// when the box is square.
    pub fn class_of(&self, side: Side) -> EdgeClass {
        let horizontal_longer = self.width() >= self.height();
        if side.is_horizontal() == horizontal_longer {
            EdgeClass::Longer
        } else {
            EdgeClass::Shorter
        }
    }

    /// Extent of the box perpendicular to `side`.
    pub fn depth_across(&self, side: Side) -> f64 {
        if side.is_horizontal() {
            self.height()
        } else {
            self.width()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SideRule {
    FurthestFromGrasp,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RefFrameRule {
    Revolute {
        edge_class: EdgeClass,
        side: SideRule,
        /// Pixel distance from the grasp to the matched edge's line.
        grasp_axis_distance_px: f64,
        /// The same distance divided by the box extent across that edge.
        grasp_axis_distance_ratio: f64,
    },
    Prismatic {
        /// Unit motion direction as (along the longer box side, along the
        /// shorter box side, along the optical axis).
        direction_bbox: [f64; 3],
    },
    /// Rigid and free models carry no frame rule.
    None,
}

impl RefFrameRule {
    pub fn model_class(&self) -> Option<ModelClass> {
        match self {
            RefFrameRule::Revolute { .. } => Some(ModelClass::Revolute),
            RefFrameRule::Prismatic { .. } => Some(ModelClass::Prismatic),
            RefFrameRule::None => None,
        }
    }
}

/// Origin plus a right-handed orthonormal basis with columns X, Y, Z.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReferenceFrame {
    pub origin: Point3<f64>,
    pub basis: Matrix3<f64>,
}

impl ReferenceFrame {
    pub fn x(&self) -> Vector3<f64> {
        self.basis.column(0).into_owned()
    }

    pub fn y(&self) -> Vector3<f64> {
        self.basis.column(1).into_owned()
    }

    pub fn z(&self) -> Vector3<f64> {
        self.basis.column(2).into_owned()
    }

    pub fn to_local(&self, p: &Point3<f64>) -> Vector3<f64> {
        self.basis.transpose() * (p - self.origin)
    }

    pub fn from_local(&self, v: &Vector3<f64>) -> Point3<f64> {
        self.origin + self.basis * v
    }

    pub fn transformed(&self, iso: &nalgebra::Isometry3<f64>) -> ReferenceFrame {
        ReferenceFrame {
            origin: iso * self.origin,
            basis: iso.rotation.to_rotation_matrix().matrix() * self.basis,
        }
    }
}

/// Bounding-box side whose direction best matches the projected axis, ties
/// going to the side whose midpoint is furthest from the grasp.
pub fn match_axis_edge(
    model: &RevoluteParams,
    bbox: &BBox,
    grasp_px: &PixelDepth,
    k: &Intrinsics,
) -> Result<(Side, Segment), FrameError> {
    let q0 = project(&model.center, k).map_err(|_| FrameError::ProjectionDegenerate)?;
    let q1 = project(&(model.center + model.axis * model.radius), k)
        .map_err(|_| FrameError::ProjectionDegenerate)?;
    let d = Vector2::new(q1.u - q0.u, q1.v - q0.v);
    if d.norm() < MIN_AXIS_PX {
        return Err(FrameError::ProjectionDegenerate);
    }
    let angle = |side: Side| {
        if side.is_horizontal() {
            d.y.abs().atan2(d.x.abs())
        } else {
            d.x.abs().atan2(d.y.abs())
        }
    };
    let best = Side::ALL
        .iter()
        .map(|&s| angle(s))
        .fold(f64::INFINITY, f64::min);
    let g = Point2::new(grasp_px.u, grasp_px.v);
    let side = furthest_side(
        bbox,
        &g,
        Side::ALL
            .iter()
            .copied()
            .filter(|&s| angle(s) <= best + ANGLE_TIE_RAD),
    );
    Ok((
        side,
        Segment::new(Point2::new(q0.u, q0.v), Point2::new(q1.u, q1.v)),
    ))
}

fn furthest_side(bbox: &BBox, g: &Point2<f64>, sides: impl Iterator<Item = Side>) -> Side {
    let mut best: Option<(Side, f64)> = None;
    for s in sides {
        let dist = (bbox.edge(s).midpoint() - g).norm();
        if best.is_none_or(|(_, d)| dist > d) {
            best = Some((s, dist));
        }
    }
    best.expect("at least one candidate side").0
}

pub fn classify_axis_edge(
    model: &RevoluteParams,
    bbox: &BBox,
    grasp_px: &PixelDepth,
    k: &Intrinsics,
) -> Result<RefFrameRule, FrameError> {
    bbox.validate()?;
    let (side, _) = match_axis_edge(model, bbox, grasp_px, k)?;
    let dist = bbox
        .edge(side)
        .line_distance(&Point2::new(grasp_px.u, grasp_px.v));
    Ok(RefFrameRule::Revolute {
        edge_class: bbox.class_of(side),
        side: SideRule::FurthestFromGrasp,
        grasp_axis_distance_px: dist,
        grasp_axis_distance_ratio: dist / bbox.depth_across(side),
    })
}

/// Side of `bbox` selected by a revolute rule.
pub fn predict_axis_side(
    rule: &RefFrameRule,
    bbox: &BBox,
    grasp_px: &PixelDepth,
) -> Result<Side, FrameError> {
    let RefFrameRule::Revolute { edge_class, .. } = rule else {
        return Err(FrameError::RuleMismatch(
            "axis prediction needs a revolute rule".into(),
        ));
    };
    let g = Point2::new(grasp_px.u, grasp_px.v);
    let side = if bbox.is_square() {
        furthest_side(bbox, &g, Side::ALL.into_iter())
    } else {
        furthest_side(
            bbox,
            &g,
            Side::ALL
                .into_iter()
                .filter(|&s| bbox.class_of(s) == *edge_class),
        )
    };
    Ok(side)
}

pub fn predict_axis(
    rule: &RefFrameRule,
    bbox: &BBox,
    grasp_px: &PixelDepth,
) -> Result<Segment, FrameError> {
    Ok(bbox.edge(predict_axis_side(rule, bbox, grasp_px)?))
}

/// Perpendicular foot of `grasp` on the segment's line, clamped to the
/// segment.
pub fn predict_center_px(seg: &Segment, grasp: &Point2<f64>) -> Point2<f64> {
    let d = seg.b - seg.a;
    let len2 = d.norm_squared();
    if len2 == 0.0 {
        return seg.a;
    }
    let t = ((grasp - seg.a).dot(&d) / len2).clamp(0.0, 1.0);
    seg.a + d * t
}

pub fn build_frame(
    class: ModelClass,
    center3: &Point3<f64>,
    axis3: &Vector3<f64>,
    surface_normal: &Vector3<f64>,
    grasp3: &Point3<f64>,
) -> Result<ReferenceFrame, FrameError> {
    let origin = match class {
        ModelClass::Revolute => *center3,
        ModelClass::Prismatic => *grasp3,
        other => {
            return Err(FrameError::RuleMismatch(format!(
                "{other} model has no reference frame"
            )))
        }
    };
    let norm = axis3.norm();
    if (norm - 1.0).abs() > 1e-9 {
        return Err(FrameError::NonUnitAxis(norm));
    }
    let n = surface_normal.normalize();
    let y = *axis3;
    if !(n.dot(&y).abs() < 1.0 - PARALLEL_TOL) {
        return Err(FrameError::ParallelNormal);
    }
    let z = (n - y * n.dot(&y)).normalize();
    let x = y.cross(&z);
    Ok(ReferenceFrame {
        origin,
        basis: Matrix3::from_columns(&[x, y, z]),
    })
}

/// Least-squares plane through the deprojected patch; the normal returned
/// faces the camera.
pub fn estimate_surface_normal(
    patch: &[PixelDepth],
    k: &Intrinsics,
) -> Result<Vector3<f64>, FrameError> {
    let pts: Vec<Point3<f64>> = patch
        .iter()
        .filter(|p| p.has_depth())
        .filter_map(|p| deproject(p, k).ok())
        .collect();
    if pts.len() < 3 {
        return Err(FrameError::DegeneratePatch);
    }
    let c = centroid(pts.iter()).unwrap();
    let s = Scatter::of(pts.iter(), &c);
    if !(s.values[2] > 0.0) || !(s.values[1] > 1e-14 * s.values[2]) {
        return Err(FrameError::DegeneratePatch);
    }
    let n = s.smallest();
    let facing = n.dot(&c.coords);
    let flip = if facing.abs() > 1e-12 {
        facing > 0.0
    } else {
        n.z > 0.0
    };
    Ok(if flip { -n } else { n })
}

/// Median valid depth of the patch samples near `seg`. The search band
/// starts at 1.5 px and doubles (up to 24 px) until something is found.
pub fn edge_depth(patch: &[PixelDepth], seg: &Segment) -> Option<f64> {
    let mut band = 1.5;
    while band <= 24.0 {
        let mut ds: Vec<f64> = patch
            .iter()
            .filter(|p| p.has_depth() && seg.distance(&Point2::new(p.u, p.v)) <= band)
            .map(|p| p.d)
            .collect();
        if !ds.is_empty() {
            ds.sort_by(f64::total_cmp);
            let m = ds.len() / 2;
            return Some(if ds.len() % 2 == 1 {
                ds[m]
            } else {
                0.5 * (ds[m - 1] + ds[m])
            });
        }
        band *= 2.0;
    }
    None
}
