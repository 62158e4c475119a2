//! Labeled scenes and their JSON interchange form.

use std::collections::HashSet;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geometry::{BoundingBox, SceneExtent};

#[derive(Debug, Error)]
pub enum SceneError {
    #[error("duplicate annotation id {0}")]
    DuplicateId(u64),
    #[error("annotation {0} lies entirely outside the scene")]
    OutsideScene(u64),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("malformed scene json: {0}")]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Annotation {
    pub id: u64,
    pub bbox: BoundingBox,
    #[serde(default)]
    pub category: u32,
}

/// A scene extent together with its ground-truth annotations.
///
/// Construction through [`Scene::new`] clips every box to the extent and
/// rejects duplicate ids, so downstream code can rely on both.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Scene {
    pub scene: SceneExtent,
    pub annotations: Vec<Annotation>,
}

#[derive(Deserialize)]
struct RawScene {
    scene: SceneExtent,
    #[serde(default)]
    annotations: Vec<Annotation>,
}

impl Scene {
    pub fn new(extent: SceneExtent, annotations: Vec<Annotation>) -> Result<Self, SceneError> {
        let mut seen = HashSet::with_capacity(annotations.len());
        let mut clipped = Vec::with_capacity(annotations.len());
        for mut a in annotations {
            if !seen.insert(a.id) {
                return Err(SceneError::DuplicateId(a.id));
            }
            a.bbox = a
                .bbox
                .clip_to(extent)
                .ok_or(SceneError::OutsideScene(a.id))?;
            clipped.push(a);
        }
        Ok(Self {
            scene: extent,
            annotations: clipped,
        })
    }

    pub fn extent(&self) -> SceneExtent {
        self.scene
    }

    pub fn from_json(text: &str) -> Result<Self, SceneError> {
        let raw: RawScene = serde_json::from_str(text)?;
        Self::new(raw.scene, raw.annotations)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("scene serialization is infallible")
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, SceneError> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|source| SceneError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), SceneError> {
        let path = path.as_ref();
        fs::write(path, self.to_json() + "\n").map_err(|source| SceneError::Io {
            path: path.display().to_string(),
            source,
        })
    }
}
