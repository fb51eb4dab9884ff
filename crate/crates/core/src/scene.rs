//! What the perception stack reports about one object in one image.

use serde::{Deserialize, Serialize};

use crate::camera::{Intrinsics, PixelDepth};
use crate::refframe::BBox;
use crate::schema::{parse_versioned, to_document, SchemaError};

pub const SCENE_VERSION: u64 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneAnnotation {
    pub label: String,
    pub bbox: BBox,
    pub grasp: PixelDepth,
    pub intrinsics: Intrinsics,
    /// Depth samples inside the bounding box, used for the surface normal
    /// and for edge depths.
    pub depth_patch: Vec<PixelDepth>,
    /// Grasp orientation quaternion (w, x, y, z), passed through untouched.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grasp_orientation: Option<[f64; 4]>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneFile {
    pub version: u64,
    pub scene: SceneAnnotation,
}

impl SceneAnnotation {
    pub fn to_json(&self) -> String {
        to_document(&SceneFile {
            version: SCENE_VERSION,
            scene: self.clone(),
        })
    }

    pub fn from_json(text: &str) -> Result<Self, SchemaError> {
        let file: SceneFile = parse_versioned(text, SCENE_VERSION)?;
        let s = file.scene;
        s.intrinsics
            .validate()
            .map_err(|e| SchemaError::SchemaViolation {
                path: "scene.intrinsics".into(),
                msg: e.to_string(),
            })?;
        s.bbox
            .validate()
            .map_err(|e| SchemaError::SchemaViolation {
                path: "scene.bbox".into(),
                msg: e.to_string(),
            })?;
        Ok(s)
    }
}
