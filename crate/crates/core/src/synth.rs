//! Synthetic demonstrations and scenes with known ground truth.

use nalgebra::{Point2, Point3, Vector3};
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::artmodel::{
    ModelParams, PrismaticParams, RevoluteParams, RigidParams, Sample, Trajectory3,
};
use crate::camera::{project, Intrinsics, PixelDepth};
use crate::refframe::{BBox, EdgeClass, Side};
use crate::scene::SceneAnnotation;

#[derive(thiserror::Error, Debug, Clone, PartialEq)]
pub enum SynthError {
    #[error("invalid synthesis spec: {0}")]
    InvalidSpec(String),
}

fn invalid(msg: impl Into<String>) -> SynthError {
    SynthError::InvalidSpec(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "class", rename_all = "snake_case", deny_unknown_fields)]
pub enum Geometry {
    /// The grasp starts at `center + radius * start_dir` and turns
    /// right-handedly about `axis` by `sweep` radians.
    Revolute {
        center: Point3<f64>,
        axis: Vector3<f64>,
        radius: f64,
        start_dir: Vector3<f64>,
        sweep: f64,
    },
    /// The grasp moves from `origin` to `origin + travel * direction`.
    Prismatic {
        origin: Point3<f64>,
        direction: Vector3<f64>,
        travel: f64,
    },
    Rigid {
        anchor: Point3<f64>,
    },
}

/// A flat rectangular cover seen by a pinhole camera. `right` and `down`
/// span the cover; `hinge` names the cover side carrying the spine and the
/// grasp sits on the opposite side.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BookLayout {
    pub intrinsics: Intrinsics,
    pub center: Point3<f64>,
    pub right: Vector3<f64>,
    pub down: Vector3<f64>,
    pub width: f64,
    pub height: f64,
    pub hinge: Side,
    /// Grasp position along the free side, 0 at its start and 1 at its end.
    pub grasp_fraction: f64,
    /// Distance of the grasp from the free side, towards the spine.
    pub grasp_inset: f64,
    pub patch_stride_px: f64,
    pub label: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub geometry: Geometry,
    pub n_samples: usize,
    #[serde(default = "default_rate")]
    pub rate_hz: f64,
    pub noise_sigma: f64,
    pub outlier_fraction: f64,
    pub outlier_span: f64,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scene: Option<BookLayout>,
}

fn default_rate() -> f64 {
    20.0
}

#[derive(Debug, Clone, PartialEq)]
pub struct Demo {
    pub traj: Trajectory3,
    pub truth: ModelParams,
    /// Signed sweep (radians) or travel (meters); 0 for rigid.
    pub extent: f64,
    /// True for samples replaced by outliers.
    pub outliers: Vec<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneTruth {
    pub scene: SceneAnnotation,
    /// Bounding-box side the spine projects onto.
    pub hinge_side: Side,
    pub hinge_class: EdgeClass,
    pub surface_normal: Vector3<f64>,
    pub grasp3: Point3<f64>,
}

impl BookLayout {
    /// A cover facing the camera squarely, centered on the optical axis.
    pub fn frontal(center_z: f64, width: f64, height: f64, hinge: Side) -> Self {
        Self {
            intrinsics: Intrinsics::default(),
            center: Point3::new(0.0, 0.0, center_z),
            right: Vector3::x(),
            down: Vector3::y(),
            width,
            height,
            hinge,
            grasp_fraction: 0.5,
            grasp_inset: 0.01,
            patch_stride_px: 8.0,
            label: "book".into(),
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        self.intrinsics
            .validate()
            .map_err(|e| invalid(e.to_string()))?;
        if !((self.right.norm() - 1.0).abs() < 1e-9 && (self.down.norm() - 1.0).abs() < 1e-9) {
            return Err(invalid("layout right/down must be unit vectors"));
        }
        if self.right.dot(&self.down).abs() > 1e-9 {
            return Err(invalid("layout right/down must be orthogonal"));
        }
        if !(self.width > 0.0 && self.height > 0.0) {
            return Err(invalid("layout width and height must be positive"));
        }
        if !(0.0..=1.0).contains(&self.grasp_fraction) {
            return Err(invalid("grasp_fraction must lie in [0, 1]"));
        }
        let (_, _, across, _) = self.hinge_frame();
        if !(self.grasp_inset >= 0.0 && self.grasp_inset < 2.0 * across) {
            return Err(invalid("grasp_inset must lie inside the cover"));
        }
        if !(self.patch_stride_px > 0.0) {
            return Err(invalid("patch_stride_px must be positive"));
        }
        if !(self.center.z > 0.0) {
            return Err(invalid("cover must be in front of the camera"));
        }
        Ok(())
    }

    /// Unit normal of the cover pointing towards the camera.
    pub fn normal(&self) -> Vector3<f64> {
        let n = self.right.cross(&self.down);
        if n.dot(&self.center.coords) > 0.0 {
            -n
        } else {
            n
        }
    }

    pub fn corners(&self) -> [Point3<f64>; 4] {
        let (r, d) = (self.right * self.width / 2.0, self.down * self.height / 2.0);
        [
            self.center - r - d,
            self.center + r - d,
            self.center + r + d,
            self.center - r + d,
        ]
    }

    /// (outward normal of the hinge side, direction along it, half extent
    /// across, half extent along).
    fn hinge_frame(&self) -> (Vector3<f64>, Vector3<f64>, f64, f64) {
        let (w, h) = (self.width / 2.0, self.height / 2.0);
        match self.hinge {
            Side::Left => (-self.right, self.down, w, h),
            Side::Right => (self.right, self.down, w, h),
            Side::Top => (-self.down, self.right, h, w),
            Side::Bottom => (self.down, self.right, h, w),
        }
    }

    pub fn grasp_point(&self) -> Point3<f64> {
        let (out, along, across, half) = self.hinge_frame();
        self.center - out * (across - self.grasp_inset)
            + along * (2.0 * self.grasp_fraction - 1.0) * half
    }

    /// Hinge geometry of the cover: foot of the grasp on the spine, axis
    /// oriented so positive rotation lifts the cover towards the camera,
    /// radius and start direction.
    pub fn revolute(&self, sweep: f64) -> Geometry {
        let (out, along, across, half) = self.hinge_frame();
        let center = self.center + out * across + along * (2.0 * self.grasp_fraction - 1.0) * half;
        let start_dir = -out;
        Geometry::Revolute {
            center,
            axis: start_dir.cross(&self.normal()),
            radius: 2.0 * across - self.grasp_inset,
            start_dir,
            sweep,
        }
    }

    /// Sliding the cover along `direction` (in its own plane) by `travel`.
    pub fn slide(&self, direction: Vector3<f64>, travel: f64) -> Geometry {
        Geometry::Prismatic {
            origin: self.grasp_point(),
            direction: direction.normalize(),
            travel,
        }
    }
}

impl SynthSpec {
    /// The default demonstration: a book opened by 90 degrees, 100 frames at
    /// 20 Hz with 2 mm noise.
    pub fn book_demo(seed: u64) -> Self {
        let layout = BookLayout::frontal(1.0, 0.16, 0.24, Side::Left);
        Self {
            geometry: layout.revolute(std::f64::consts::FRAC_PI_2),
            n_samples: 100,
            rate_hz: 20.0,
            noise_sigma: 0.002,
            outlier_fraction: 0.0,
            outlier_span: 1.0,
            seed,
            scene: Some(layout),
        }
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        if self.n_samples < 3 {
            return Err(invalid("n_samples must be at least 3"));
        }
        if !(self.rate_hz > 0.0 && self.rate_hz.is_finite()) {
            return Err(invalid("rate_hz must be positive"));
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return Err(invalid("noise_sigma must be non-negative"));
        }
        if !(0.0..1.0).contains(&self.outlier_fraction) {
            return Err(invalid("outlier_fraction must lie in [0, 1)"));
        }
        if self.outlier_fraction > 0.0 && !(self.outlier_span > 0.0) {
            return Err(invalid("outlier_span must be positive"));
        }
        match self.geometry {
            Geometry::Revolute {
                axis,
                radius,
                start_dir,
                sweep,
                ..
            } => {
                if !(radius > 0.0) || !sweep.is_finite() {
                    return Err(invalid("revolute radius must be positive and sweep finite"));
                }
                if (axis.norm() - 1.0).abs() > 1e-9 || (start_dir.norm() - 1.0).abs() > 1e-9 {
                    return Err(invalid("revolute axis and start_dir must be unit vectors"));
                }
                if axis.dot(&start_dir).abs() > 1e-9 {
                    return Err(invalid("start_dir must be perpendicular to the axis"));
                }
            }
            Geometry::Prismatic {
                direction, travel, ..
            } => {
                if (direction.norm() - 1.0).abs() > 1e-9 || !travel.is_finite() {
                    return Err(invalid("prismatic direction must be a unit vector"));
                }
            }
            Geometry::Rigid { .. } => {}
        }
        if let Some(layout) = &self.scene {
            layout.validate()?;
        }
        Ok(())
    }

    pub fn truth(&self) -> ModelParams {
        match self.geometry {
            Geometry::Revolute {
                center,
                axis,
                radius,
                ..
            } => ModelParams::Revolute(RevoluteParams {
                center,
                axis,
                radius,
            }),
            Geometry::Prismatic {
                origin, direction, ..
            } => ModelParams::Prismatic(PrismaticParams { origin, direction }),
            Geometry::Rigid { anchor } => ModelParams::Rigid(RigidParams { anchor }),
        }
    }

    /// Noiseless position of sample `i`.
    pub fn ideal_point(&self, i: usize) -> Point3<f64> {
        let s = i as f64 / (self.n_samples - 1) as f64;
        match self.geometry {
            Geometry::Revolute {
                center,
                axis,
                radius,
                start_dir,
                sweep,
            } => {
                let th = sweep * s;
                center + (start_dir * th.cos() + axis.cross(&start_dir) * th.sin()) * radius
            }
            Geometry::Prismatic {
                origin,
                direction,
                travel,
            } => origin + direction * (travel * s),
            Geometry::Rigid { anchor } => anchor,
        }
    }
}

pub fn gen_demo(spec: &SynthSpec) -> Result<Demo, SynthError> {
    spec.validate()?;
    let n = spec.n_samples;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let ideal: Vec<Point3<f64>> = (0..n).map(|i| spec.ideal_point(i)).collect();
    let mut pts = ideal.clone();
    if spec.noise_sigma > 0.0 {
        let normal = Normal::new(0.0, spec.noise_sigma).expect("valid sigma");
        for p in &mut pts {
            *p += Vector3::from_fn(|_, _| normal.sample(&mut rng));
        }
    }
    let n_out = (spec.outlier_fraction * n as f64).round() as usize;
    let mut outliers = vec![false; n];
    if n_out > 0 {
        let center = ideal.iter().fold(Vector3::zeros(), |a, p| a + p.coords) / n as f64;
        let half = spec.outlier_span / 2.0;
        let mut idx = sample(&mut rng, n, n_out).into_vec();
        idx.sort_unstable();
        for i in idx {
            outliers[i] = true;
            pts[i] = Point3::from(center + Vector3::from_fn(|_, _| rng.random_range(-half..=half)));
        }
    }
    let samples = pts
        .iter()
        .enumerate()
        .map(|(i, p)| Sample {
            t: i as f64 / spec.rate_hz,
            p: *p,
        })
        .collect();
    let traj = Trajectory3::new(samples).map_err(|e| invalid(e.to_string()))?;
    let extent = match spec.geometry {
        Geometry::Revolute { sweep, .. } => sweep,
        Geometry::Prismatic { travel, .. } => travel,
        Geometry::Rigid { .. } => 0.0,
    };
    Ok(Demo {
        traj,
        truth: spec.truth(),
        extent,
        outliers,
    })
}

pub fn gen_scene(spec: &SynthSpec) -> Result<SceneTruth, SynthError> {
    spec.validate()?;
    let layout = spec
        .scene
        .as_ref()
        .ok_or_else(|| invalid("spec has no scene layout"))?;
    let k = &layout.intrinsics;
    let proj = |p: &Point3<f64>| project(p, k).map_err(|e| invalid(e.to_string()));

    let mut px = vec![];
    for c in layout.corners() {
        px.push(proj(&c)?);
    }
    let bbox = BBox {
        u0: px.iter().map(|p| p.u).fold(f64::INFINITY, f64::min),
        v0: px.iter().map(|p| p.v).fold(f64::INFINITY, f64::min),
        u1: px.iter().map(|p| p.u).fold(f64::NEG_INFINITY, f64::max),
        v1: px.iter().map(|p| p.v).fold(f64::NEG_INFINITY, f64::max),
    };
    bbox.validate().map_err(|e| invalid(e.to_string()))?;

    let grasp3 = spec.ideal_point(0);
    let grasp = proj(&grasp3)?;
    let normal = layout.normal();
    let depth_patch = plane_patch(layout, &bbox);

    let Geometry::Revolute { center, .. } = layout.revolute(0.0) else {
        unreachable!()
    };
    let hinge_px = proj(&center)?;
    let hinge_px = Point2::new(hinge_px.u, hinge_px.v);
    let hinge_side = Side::ALL
        .into_iter()
        .min_by(|a, b| {
            bbox.edge(*a)
                .line_distance(&hinge_px)
                .total_cmp(&bbox.edge(*b).line_distance(&hinge_px))
        })
        .unwrap();

    Ok(SceneTruth {
        scene: SceneAnnotation {
            label: layout.label.clone(),
            bbox,
            grasp,
            intrinsics: *k,
            depth_patch,
            grasp_orientation: None,
        },
        hinge_side,
        hinge_class: bbox.class_of(hinge_side),
        surface_normal: normal,
        grasp3,
    })
}

/// Pixel grid over the box, edges included, with depths from intersecting
/// each pixel ray with the cover plane. Rays missing the cover are dropped.
fn plane_patch(layout: &BookLayout, bbox: &BBox) -> Vec<PixelDepth> {
    let k = &layout.intrinsics;
    let n = layout.normal();
    let steps = |a: f64, b: f64| {
        let m = ((b - a) / layout.patch_stride_px).ceil().max(1.0) as usize;
        (0..=m).map(move |i| a + (b - a) * i as f64 / m as f64)
    };
    let mut out = vec![];
    for v in steps(bbox.v0, bbox.v1) {
        for u in steps(bbox.u0, bbox.u1) {
            let ray = Vector3::new((u - k.cx) / k.fx, (v - k.cy) / k.fy, 1.0);
            let denom = n.dot(&ray);
            if denom.abs() < 1e-12 {
                continue;
            }
            let z = n.dot(&layout.center.coords) / denom;
            let p = Point3::from(ray * z);
            let rel = p - layout.center;
            let inside = rel.dot(&layout.right).abs() <= layout.width / 2.0 + 1e-9
                && rel.dot(&layout.down).abs() <= layout.height / 2.0 + 1e-9;
            if z > 0.0 && inside {
                out.push(PixelDepth::new(u, v, z));
            }
        }
    }
    out
}
