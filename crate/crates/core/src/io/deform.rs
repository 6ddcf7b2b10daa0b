//! Per-anchor affine edits loaded from JSON.
//!
//! ```json
//! {"transforms": [
//!     {"selection": "all", "rotation": [1, 0, 0, 0], "translation": [0, 0, 1], "scale": 1.0},
//!     {"selection": {"range": [0, 10]}, "translation": [0.5, 0, 0]}
//! ]}
//! ```
//!
//! Rotations are `w x y z`. Missing fields default to the identity.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::math::{quat_compose, quat_normalize, quat_to_mat, Quat, Vec3};
use crate::scene::Scene;

const UNIT_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selection {
    All,
    /// Half-open anchor index range.
    Range([usize; 2]),
}

fn identity_rotation() -> [f64; 4] {
    [1.0, 0.0, 0.0, 0.0]
}

fn unit_scale() -> f64 {
    1.0
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AnchorTransform {
    pub selection: Selection,
    #[serde(default = "identity_rotation")]
    pub rotation: [f64; 4],
    #[serde(default)]
    pub translation: [f64; 3],
    #[serde(default = "unit_scale")]
    pub scale: f64,
}

impl AnchorTransform {
    pub fn identity(selection: Selection) -> Self {
        Self {
            selection,
            rotation: identity_rotation(),
            translation: [0.0; 3],
            scale: 1.0,
        }
    }

    fn quat(&self) -> Quat {
        let r = self.rotation;
        Quat::new(r[0], r[1], r[2], r[3])
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.quat().norm();
        if (n - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::Config(format!("rotation quaternion has norm {n}")));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) {
            return Err(Error::Config(format!("scale {} must be positive", self.scale)));
        }
        if self.translation.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("non-finite translation".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct DeformationFile {
    pub transforms: Vec<AnchorTransform>,
}

impl DeformationFile {
    pub fn from_json(text: &str) -> Result<Self> {
        let d: Self = serde_json::from_str(text)?;
        for t in &d.transforms {
            t.validate()?;
        }
        Ok(d)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("deformation serialises")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }
}

/// Applies each transform in order to its selection:
/// `μ' = s Q μ + t`, `q' = Q ∘ q`, `S' = s S`, `R_def' = Q ∘ R_def`.
/// Features are untouched, so the scene must be baked.
pub fn apply_deformation(scene: &mut Scene, deformation: &DeformationFile) -> Result<()> {
    if !scene.baked {
        return Err(Error::NotBaked);
    }
    let n = scene.len();
    for t in &deformation.transforms {
        t.validate()?;
        let (start, end) = match t.selection {
            Selection::All => (0, n),
            Selection::Range([s, e]) => (s, e),
        };
        if start > end || end > n {
            return Err(Error::SelectionOutOfRange { start, end, count: n });
        }
    }
    for t in &deformation.transforms {
        let (start, end) = match t.selection {
            Selection::All => (0, n),
            Selection::Range([s, e]) => (s, e),
        };
        let q = quat_normalize(&t.quat());
        let r = quat_to_mat(&q);
        let tr = Vec3::from(t.translation);
        for a in &mut scene.anchors[start..end] {
            a.mean = t.scale * (r * a.mean) + tr;
            a.rotation = quat_compose(&q, &a.rotation);
            a.scale *= t.scale;
            a.deform_rotation = quat_compose(&q, &a.deform_rotation);
        }
    }
    scene.bvh_stale = true;
    Ok(())
}
