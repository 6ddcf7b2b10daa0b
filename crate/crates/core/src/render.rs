//! End-to-end ray rendering: sample, aggregate, decode, composite.

use nalgebra::Matrix4;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{anchor_features, composite, decode, FieldModel};
use crate::image::Image;
use crate::math::{Quat, Ray, Vec3};
use crate::rca::{aggregate_ray, check_tau, AnchorTable, RcaConfig};
use crate::ris::{IntersectionSample, RayIntersectionSelector, SamplerConfig};
use crate::scene::Scene;

/// Pinhole camera in the NeRF-synthetic convention: camera space looks down
/// `−z` with `+y` up; `c2w` maps camera to world.
#[derive(Clone, Debug, PartialEq)]
pub struct Camera {
    pub c2w: Matrix4<f64>,
    /// Horizontal field of view in radians.
    pub fov_x: f64,
}

impl Camera {
    pub fn new(c2w: Matrix4<f64>, fov_x: f64) -> Self {
        Self { c2w, fov_x }
    }

    /// Camera at `eye` looking at `target` with world up `up`.
    pub fn look_at(eye: Vec3, target: Vec3, up: Vec3, fov_x: f64) -> Self {
        let back = (eye - target).normalize();
        let right = up.cross(&back).normalize();
        let true_up = back.cross(&right);
        #[rustfmt::skip]
        let c2w = Matrix4::new(
            right.x, true_up.x, back.x, eye.x,
            right.y, true_up.y, back.y, eye.y,
            right.z, true_up.z, back.z, eye.z,
            0.0, 0.0, 0.0, 1.0,
        );
        Self { c2w, fov_x }
    }

    pub fn origin(&self) -> Vec3 {
        Vec3::new(self.c2w[(0, 3)], self.c2w[(1, 3)], self.c2w[(2, 3)])
    }

    /// Left-multiplies the pose by a world transform.
    pub fn transformed(&self, world: &Matrix4<f64>) -> Self {
        Self {
            c2w: world * self.c2w,
            fov_x: self.fov_x,
        }
    }

    /// One ray per pixel centre, row-major from the top-left pixel.
    pub fn rays(&self, width: usize, height: usize) -> Vec<Ray> {
        let focal = 0.5 * width as f64 / (0.5 * self.fov_x).tan();
        let rot = self.c2w.fixed_view::<3, 3>(0, 0).into_owned();
        let origin = self.origin();
        let mut out = Vec::with_capacity(width * height);
        for j in 0..height {
            for i in 0..width {
                let dir = Vec3::new(
                    (i as f64 + 0.5 - 0.5 * width as f64) / focal,
                    -(j as f64 + 0.5 - 0.5 * height as f64) / focal,
                    -1.0,
                );
                out.push(Ray::new(origin, rot * dir, j * width + i));
            }
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RenderConfig {
    pub width: usize,
    pub height: usize,
    pub background: [f64; 3],
    pub sampler: SamplerConfig,
    pub rca: RcaConfig,
    /// Worker count; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl Default for RenderConfig {
    fn default() -> Self {
        Self {
            width: 64,
            height: 64,
            background: [1.0; 3],
            sampler: SamplerConfig::bounded(),
            rca: RcaConfig::default(),
            threads: None,
        }
    }
}

/// Runs `f` on a pool of `threads` workers, or on the global pool.
pub fn with_threads<R: Send>(threads: Option<usize>, f: impl FnOnce() -> R + Send) -> Result<R> {
    match threads {
        None => Ok(f()),
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n.max(1))
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

/// Everything needed to shade rays against one scene snapshot.
pub struct Renderer<'a> {
    pub selector: RayIntersectionSelector,
    pub table: AnchorTable,
    pub deform: Vec<Quat>,
    pub model: &'a FieldModel,
    pub tau_dist: f64,
    pub cfg: RenderConfig,
}

impl<'a> Renderer<'a> {
    pub fn new(scene: &Scene, model: &'a FieldModel, cfg: RenderConfig) -> Result<Self> {
        let features = anchor_features(scene, model)?;
        let tau_dist = cfg.rca.resolve_tau(&scene.anchors);
        if !scene.is_empty() {
            check_tau(&scene.anchors, cfg.sampler.lambda, tau_dist);
        }
        Ok(Self {
            selector: RayIntersectionSelector::new(&scene.anchors, cfg.sampler)?,
            table: AnchorTable::with_features(&scene.anchors, features),
            deform: scene.anchors.iter().map(|a| a.deform_rotation).collect(),
            model,
            tau_dist,
            cfg,
        })
    }

    /// Shades a ray from an explicit sample list.
    pub fn shade_samples(&self, ray: &Ray, samples: &[IntersectionSample]) -> [f64; 3] {
        let decoded: Vec<_> = aggregate_ray(samples, &self.table, &self.cfg.rca, self.tau_dist)
            .iter()
            .filter(|a| a.valid)
            .map(|a| {
                decode(
                    &a.feature_hat,
                    a.alpha_hat,
                    &ray.direction,
                    &self.deform[a.anchor_index],
                    self.model,
                )
            })
            .collect();
        composite(&decoded, self.cfg.background)
    }

    pub fn shade(&self, ray: &Ray) -> Result<[f64; 3]> {
        let samples = self.selector.sample(ray)?;
        Ok(self.shade_samples(ray, &samples))
    }

    pub fn render_rays(&self, rays: &[Ray]) -> Result<Vec<[f64; 3]>> {
        with_threads(self.cfg.threads, || {
            rays.par_iter().map(|r| self.shade(r)).collect::<Result<Vec<_>>>()
        })?
    }

    pub fn render(&self, camera: &Camera) -> Result<Image> {
        let rays = camera.rays(self.cfg.width, self.cfg.height);
        Ok(Image {
            width: self.cfg.width,
            height: self.cfg.height,
            pixels: self.render_rays(&rays)?,
        })
    }
}

/// Renders one view of `scene`.
pub fn render_image(scene: &Scene, model: &FieldModel, camera: &Camera, cfg: &RenderConfig) -> Result<Image> {
    Renderer::new(scene, model, *cfg)?.render(camera)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn look_at_centre_ray_points_at_target() {
        let cam = Camera::look_at(Vec3::new(0.0, 0.0, 5.0), Vec3::zeros(), Vec3::y(), 0.8);
        let rays = cam.rays(1, 1);
        assert!((rays[0].direction - Vec3::new(0.0, 0.0, -1.0)).norm() < 1e-12);
        let rays = cam.rays(4, 4);
        // Top-left pixel looks up and left.
        assert!(rays[0].direction.x < 0.0 && rays[0].direction.y > 0.0);
    }
}
