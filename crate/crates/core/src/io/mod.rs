//! File formats: scenes, models, camera manifests, deformations, PPM
//! images, and synthetic fixtures.

mod bytes;
pub mod cameras;
pub mod deform;
pub mod model_file;
pub mod ppm;
pub mod scene_file;
pub mod synthetic;

pub use cameras::{CameraFrame, CameraSet};
pub use deform::{apply_deformation, AnchorTransform, DeformationFile, Selection};
pub use model_file::{decode_model, encode_model, load_model, save_model};
pub use ppm::{decode_ppm, encode_ppm, read_image, read_ppm, write_image, write_ppm};
pub use scene_file::{decode_scene, encode_scene, load_scene, save_scene, scene_to_json};
pub use synthetic::{generate_synthetic_scene, SyntheticLayout, SyntheticSpec};
