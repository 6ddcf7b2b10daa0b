//! NeRF-synthetic style `transforms.json` manifests.

use std::path::{Path, PathBuf};

use nalgebra::Matrix4;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::render::Camera;

const ORTHONORMAL_TOLERANCE: f64 = 1e-4;

#[derive(Clone, Debug, PartialEq)]
pub struct CameraFrame {
    pub camera: Camera,
    /// Path as written in the manifest, usually without an extension.
    pub file_path: String,
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct CameraSet {
    pub frames: Vec<CameraFrame>,
}

#[derive(Serialize, Deserialize)]
struct RawManifest {
    camera_angle_x: f64,
    frames: Vec<RawFrame>,
}

#[derive(Serialize, Deserialize)]
struct RawFrame {
    file_path: String,
    transform_matrix: [[f64; 4]; 4],
}

fn check_pose(m: &Matrix4<f64>, frame: usize) -> Result<()> {
    let r = m.fixed_view::<3, 3>(0, 0);
    let err = (r.transpose() * r - nalgebra::Matrix3::identity()).abs().max();
    if err > ORTHONORMAL_TOLERANCE || !err.is_finite() {
        return Err(Error::InvalidCamera(format!(
            "frame {frame}: rotation block not orthonormal (error {err:.2e})"
        )));
    }
    Ok(())
}

impl CameraSet {
    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawManifest = serde_json::from_str(text)?;
        if !(raw.camera_angle_x > 0.0 && raw.camera_angle_x < std::f64::consts::PI) {
            return Err(Error::InvalidCamera(format!(
                "camera_angle_x {} outside (0, π)",
                raw.camera_angle_x
            )));
        }
        let frames = raw
            .frames
            .into_iter()
            .enumerate()
            .map(|(i, f)| {
                let t = f.transform_matrix;
                let c2w = Matrix4::from_fn(|r, c| t[r][c]);
                check_pose(&c2w, i)?;
                Ok(CameraFrame {
                    camera: Camera::new(c2w, raw.camera_angle_x),
                    file_path: f.file_path,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self { frames })
    }

    /// Serialises with the field of view of the first frame.
    pub fn to_json(&self) -> String {
        let raw = RawManifest {
            camera_angle_x: self.frames.first().map_or(0.8, |f| f.camera.fov_x),
            frames: self
                .frames
                .iter()
                .map(|f| RawFrame {
                    file_path: f.file_path.clone(),
                    transform_matrix: std::array::from_fn(|r| std::array::from_fn(|c| f.camera.c2w[(r, c)])),
                })
                .collect(),
        };
        serde_json::to_string_pretty(&raw).expect("manifest serialises")
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    /// Image for each frame inside `dir`: the file name of the manifest
    /// path, with `.ppm` appended when it has no extension.
    pub fn image_paths(&self, dir: &Path) -> Vec<PathBuf> {
        self.frames
            .iter()
            .map(|f| {
                let p = Path::new(&f.file_path);
                let mut name = p.file_name().map(PathBuf::from).unwrap_or_default();
                if name.extension().is_none() {
                    name.set_extension("ppm");
                }
                dir.join(name)
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MANIFEST: &str = r#"{
        "camera_angle_x": 0.6911,
        "frames": [
            {"file_path": "./train/r_0", "rotation": 0.1,
             "transform_matrix": [[-1,0,0,0],[0,1,0,0],[0,0,-1,0],[0,0,0,1]]},
            {"file_path": "./train/r_1.ppm",
             "transform_matrix": [[1,0,0,0],[0,0,-1,4],[0,1,0,0.5],[0,0,0,1]]}
        ]
    }"#;

    #[test]
    fn parses_manifest() {
        let set = CameraSet::from_json(MANIFEST).unwrap();
        assert_eq!(set.len(), 2);
        assert_eq!(set.frames[1].camera.origin().y, 4.0);
        let paths = set.image_paths(Path::new("imgs"));
        assert_eq!(paths[0], Path::new("imgs/r_0.ppm"));
        assert_eq!(paths[1], Path::new("imgs/r_1.ppm"));
        let again = CameraSet::from_json(&set.to_json()).unwrap();
        assert_eq!(again, set);
    }

    #[test]
    fn rejects_skewed_rotation() {
        let bad = MANIFEST.replace("[[-1,0,0,0]", "[[-1,0.01,0,0]");
        assert!(matches!(CameraSet::from_json(&bad), Err(Error::InvalidCamera(_))));
    }
}
