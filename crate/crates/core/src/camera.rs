//! Pinhole camera model mapping pixel+depth observations to camera-frame
//! points and back.
//!
//! Depth is z-depth along the optical axis (the usual aligned depth-image
//! convention), not ray length. No lens distortion is modelled; recordings
//! are assumed rectified.

use nalgebra::Point3;
use serde::{Deserialize, Serialize};

#[derive(thiserror::Error, Debug, Clone, PartialEq)]
pub enum CameraError {
    #[error("pixel has no valid depth (d = {0})")]
    ZeroDepth(f64),
    #[error("point is behind the camera (z = {0})")]
    BehindCamera(f64),
    #[error("invalid intrinsics: {0}")]
    InvalidIntrinsics(String),
}

/// Pinhole intrinsics in pixels.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Intrinsics {
    pub fx: f64,
    pub fy: f64,
    pub cx: f64,
    pub cy: f64,
    pub width: f64,
    pub height: f64,
}

impl Intrinsics {
    pub fn new(
        fx: f64,
        fy: f64,
        cx: f64,
        cy: f64,
        width: f64,
        height: f64,
    ) -> Result<Self, CameraError> {
        let k = Self {
            fx,
            fy,
            cx,
            cy,
            width,
            height,
        };
        k.validate()?;
        Ok(k)
    }

    pub fn validate(&self) -> Result<(), CameraError> {
        let all_finite = [self.fx, self.fy, self.cx, self.cy, self.width, self.height]
            .iter()
            .all(|x| x.is_finite());
        if !all_finite {
            return Err(CameraError::InvalidIntrinsics("non-finite value".into()));
        }
        if self.fx <= 0.0 || self.fy <= 0.0 {
            return Err(CameraError::InvalidIntrinsics(
                "focal lengths must be positive".into(),
            ));
        }
        if !(self.cx > 0.0 && self.cx < self.width) || !(self.cy > 0.0 && self.cy < self.height) {
            return Err(CameraError::InvalidIntrinsics(
                "principal point must lie strictly inside the image".into(),
            ));
        }
        Ok(())
    }
}

impl Default for Intrinsics {
    /// A 640x480 camera with a 600 px focal length.
    fn default() -> Self {
        Self {
            fx: 600.0,
            fy: 600.0,
            cx: 320.0,
            cy: 240.0,
            width: 640.0,
            height: 480.0,
        }
    }
}

/// A (sub-)pixel location with metric z-depth. `d == 0` means "no depth".
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PixelDepth {
    pub u: f64,
    pub v: f64,
    pub d: f64,
}

impl PixelDepth {
    pub fn new(u: f64, v: f64, d: f64) -> Self {
        Self { u, v, d }
    }

    pub fn has_depth(&self) -> bool {
        self.d > 0.0 && self.d.is_finite()
    }
}

pub fn deproject(p: &PixelDepth, k: &Intrinsics) -> Result<Point3<f64>, CameraError> {
    if !p.has_depth() {
        return Err(CameraError::ZeroDepth(p.d));
    }
    Ok(Point3::new(
        (p.u - k.cx) * p.d / k.fx,
        (p.v - k.cy) * p.d / k.fy,
        p.d,
    ))
}

pub fn project(p: &Point3<f64>, k: &Intrinsics) -> Result<PixelDepth, CameraError> {
    if !(p.z > 0.0) {
        return Err(CameraError::BehindCamera(p.z));
    }
    Ok(PixelDepth {
        u: k.fx * p.x / p.z + k.cx,
        v: k.fy * p.y / p.z + k.cy,
        d: p.z,
    })
}
