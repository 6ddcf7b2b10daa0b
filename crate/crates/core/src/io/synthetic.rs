//! Deterministic fixture scenes with matching cameras.

use std::f64::consts::PI;

use nalgebra::Matrix4;
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::cameras::{CameraFrame, CameraSet};
use crate::error::{Error, Result};
use crate::math::{round_f32, NeuralAnchor, Quat, Vec3};
use crate::render::Camera;
use crate::scene::Scene;

pub const DEFAULT_FOV_X: f64 = 0.8;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SyntheticLayout {
    /// Isotropic anchors on the `+z` axis at `z = 2, 5, 9, 14, …`, seen by a
    /// camera at the origin looking down `+z`.
    Collinear,
    /// Two clusters on the `x` axis separated by more than ten times the
    /// largest anchor scale, seen by a camera on the `x` axis.
    TwoCluster,
    /// Randomly oriented anchors with means in `[−1, 1]³`, seen by a ring of
    /// eight cameras.
    RandomBox,
}

impl std::str::FromStr for SyntheticLayout {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "collinear" => Ok(Self::Collinear),
            "two-cluster" => Ok(Self::TwoCluster),
            "random-box" => Ok(Self::RandomBox),
            _ => Err(Error::Config(format!("unknown layout `{s}`"))),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SyntheticSpec {
    pub seed: u64,
    pub count: usize,
    pub layout: SyntheticLayout,
}

/// `z = 2 + 3k + k(k − 1)/2`
pub fn collinear_depth(k: usize) -> f64 {
    (2 + 3 * k + k * k.saturating_sub(1) / 2) as f64
}

fn uniform(rng: &mut ChaCha8Rng, lo: f64, hi: f64) -> f64 {
    round_f32(rng.gen_range(lo..hi))
}

/// Uniformly distributed unit quaternion (Shoemake).
fn random_rotation(rng: &mut ChaCha8Rng) -> Quat {
    let (u1, u2, u3): (f64, f64, f64) = (rng.gen(), rng.gen(), rng.gen());
    let (a, b) = ((1.0 - u1).sqrt(), u1.sqrt());
    let q = Quat::new(
        b * (2.0 * PI * u3).cos(),
        a * (2.0 * PI * u2).sin(),
        a * (2.0 * PI * u2).cos(),
        b * (2.0 * PI * u3).sin(),
    );
    Quat::new(round_f32(q.w), round_f32(q.i), round_f32(q.j), round_f32(q.k))
}

fn decorate(rng: &mut ChaCha8Rng, mut a: NeuralAnchor) -> NeuralAnchor {
    a.opacity_logit = uniform(rng, 0.5, 3.0);
    a.feature = std::array::from_fn(|_| uniform(rng, -1.0, 1.0));
    a
}

/// Builds a baked scene and its cameras. Same spec, same output.
pub fn generate_synthetic_scene(spec: &SyntheticSpec) -> Result<(Scene, CameraSet)> {
    if spec.count == 0 {
        return Err(Error::Config("synthetic scene needs at least one anchor".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let (anchors, cameras) = match spec.layout {
        SyntheticLayout::Collinear => {
            let anchors = (0..spec.count)
                .map(|k| {
                    decorate(
                        &mut rng,
                        NeuralAnchor::isotropic(Vec3::new(0.0, 0.0, collinear_depth(k)), 0.5),
                    )
                })
                .collect();
            let c2w = Matrix4::from_diagonal(&nalgebra::Vector4::new(-1.0, 1.0, -1.0, 1.0));
            (anchors, vec![Camera::new(c2w, DEFAULT_FOV_X)])
        }
        SyntheticLayout::TwoCluster => {
            let centre = 2.0;
            let anchors = (0..spec.count)
                .map(|i| {
                    let side = if i % 2 == 0 { -centre } else { centre };
                    let mean = Vec3::new(
                        side + uniform(&mut rng, -0.3, 0.3),
                        uniform(&mut rng, -0.3, 0.3),
                        uniform(&mut rng, -0.3, 0.3),
                    );
                    let mut a = NeuralAnchor::isotropic(mean, 0.0);
                    a.scale = Vec3::from_fn(|_, _| uniform(&mut rng, 0.05, 0.1));
                    a.rotation = random_rotation(&mut rng);
                    decorate(&mut rng, a)
                })
                .collect();
            let cam = Camera::look_at(Vec3::new(-6.0, 0.0, 0.0), Vec3::zeros(), Vec3::y(), DEFAULT_FOV_X);
            (anchors, vec![cam])
        }
        SyntheticLayout::RandomBox => {
            let base = 0.5 / (spec.count as f64).cbrt();
            let anchors = (0..spec.count)
                .map(|_| {
                    let mean = Vec3::from_fn(|_, _| uniform(&mut rng, -1.0, 1.0));
                    let mut a = NeuralAnchor::isotropic(mean, 0.0);
                    a.scale = Vec3::from_fn(|_, _| uniform(&mut rng, 0.5 * base, 1.5 * base));
                    a.rotation = random_rotation(&mut rng);
                    decorate(&mut rng, a)
                })
                .collect();
            let cams = (0..8)
                .map(|i| {
                    let phi = 2.0 * PI * i as f64 / 8.0;
                    let eye = Vec3::new(4.0 * phi.cos(), 1.2, 4.0 * phi.sin());
                    Camera::look_at(eye, Vec3::zeros(), Vec3::y(), DEFAULT_FOV_X)
                })
                .collect();
            (anchors, cams)
        }
    };
    let mut scene = Scene::new(anchors);
    scene.baked = true;
    let frames = cameras
        .into_iter()
        .enumerate()
        .map(|(i, camera)| CameraFrame {
            camera,
            file_path: format!("./r_{i}"),
        })
        .collect();
    Ok((scene, CameraSet { frames }))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::FEATURE_DIM;

    #[test]
    fn collinear_fixture() {
        let spec = SyntheticSpec {
            seed: 7,
            count: 3,
            layout: SyntheticLayout::Collinear,
        };
        let (scene, cams) = generate_synthetic_scene(&spec).unwrap();
        let z: Vec<f64> = scene.anchors.iter().map(|a| a.mean.z).collect();
        assert_eq!(z, vec![2.0, 5.0, 9.0]);
        assert!(scene.anchors.iter().all(|a| a.mean.x == 0.0 && a.mean.y == 0.0));
        let ray = cams.frames[0].camera.rays(1, 1)[0];
        assert!((ray.direction - Vec3::z()).norm() < 1e-12);
        assert_eq!(collinear_depth(3), 14.0);
        assert_eq!(generate_synthetic_scene(&spec).unwrap().0, scene);
    }

    #[test]
    fn features_fill_the_vector() {
        let spec = SyntheticSpec {
            seed: 1,
            count: 4,
            layout: SyntheticLayout::RandomBox,
        };
        let (scene, cams) = generate_synthetic_scene(&spec).unwrap();
        assert_eq!(cams.len(), 8);
        assert!(scene.anchors.iter().all(|a| a.feature[FEATURE_DIM - 1] != 0.0));
        assert!(generate_synthetic_scene(&SyntheticSpec { count: 0, ..spec }).is_err());
    }
}
