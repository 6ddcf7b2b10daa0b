//! Reverse-mode gradients of the photometric loss through compositing,
//! decoding and ray-coherent aggregation.
//!
//! Sample positions and the selector's hit set are constants: geometry is
//! reached only through the Mahalanobis logits and the raw alphas. In an
//! unbaked scene the feature gradient is scattered onto hash-grid entries;
//! the grid lookup position itself is not differentiated.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::field::{
    anchor_features, composite, decode_trace, DecodeTrace, FieldModel, HashGridGrad, MlpGrad, TRUNC_EXP_LIMIT,
};
use crate::math::{quat_to_mat_backward, Mat3, Ray, Vec3, FEATURE_DIM};
use crate::rca::{aggregate_sample, AnchorTable, NeighborWeight, RcaConfig};
use crate::ris::{IntersectionSample, SampleStream};
use crate::scene::Scene;

use super::loss;

/// Rays per partial gradient; partials are summed in chunk order so the
/// result does not depend on the worker count.
const CHUNK_RAYS: usize = 32;

#[derive(Clone, Copy, Debug, Default, PartialEq)]
pub struct AnchorGrad {
    pub mean: Vec3,
    /// Raw quaternion components `(w, x, y, z)`.
    pub rotation: [f64; 4],
    pub scale: Vec3,
    pub opacity_logit: f64,
    pub feature: [f64; FEATURE_DIM],
}

impl AnchorGrad {
    fn add(&mut self, o: &AnchorGrad) {
        self.mean += o.mean;
        self.scale += o.scale;
        self.opacity_logit += o.opacity_logit;
        for i in 0..4 {
            self.rotation[i] += o.rotation[i];
        }
        for i in 0..FEATURE_DIM {
            self.feature[i] += o.feature[i];
        }
    }

    fn geometry_finite(&self) -> bool {
        self.mean.iter().chain(self.scale.iter()).all(|v| v.is_finite()) && self.rotation.iter().all(|v| v.is_finite())
    }
}

/// Gradients for every trainable parameter group.
#[derive(Clone, Debug, PartialEq)]
pub struct GradientBundle {
    pub geometry_mlp: MlpGrad,
    pub color_mlp: MlpGrad,
    /// Populated for unbaked scenes only.
    pub hash: HashGridGrad,
    /// `feature` always holds `dL/df_j`; it trains the stored features of
    /// baked scenes.
    pub anchors: Vec<AnchorGrad>,
}

impl GradientBundle {
    pub fn zeros(scene: &Scene, model: &FieldModel) -> Self {
        Self {
            geometry_mlp: MlpGrad::zeros_like(&model.geometry),
            color_mlp: MlpGrad::zeros_like(&model.color),
            hash: HashGridGrad::default(),
            anchors: vec![AnchorGrad::default(); scene.anchors.len()],
        }
    }

    fn add(&mut self, other: &GradientBundle) {
        self.geometry_mlp.add(&other.geometry_mlp);
        self.color_mlp.add(&other.color_mlp);
        self.hash.merge(&other.hash);
        for (a, b) in self.anchors.iter_mut().zip(&other.anchors) {
            a.add(b);
        }
    }

    /// Names the first parameter group holding a non-finite value.
    pub fn check_finite(&self) -> Result<()> {
        if !self.geometry_mlp.is_finite() {
            return Err(Error::NonFiniteGradient("geometry_mlp"));
        }
        if !self.color_mlp.is_finite() {
            return Err(Error::NonFiniteGradient("color_mlp"));
        }
        if !self.hash.is_finite() {
            return Err(Error::NonFiniteGradient("hash_grid"));
        }
        if !self.anchors.iter().all(|a| a.feature.iter().all(|v| v.is_finite())) {
            return Err(Error::NonFiniteGradient("features"));
        }
        if !self.anchors.iter().all(|a| a.opacity_logit.is_finite()) {
            return Err(Error::NonFiniteGradient("opacity"));
        }
        if !self.anchors.iter().all(AnchorGrad::geometry_finite) {
            return Err(Error::NonFiniteGradient("anchor_geometry"));
        }
        Ok(())
    }
}

/// Scene snapshot prepared for forward/backward evaluation over fixed
/// sample lists.
pub struct ForwardContext<'a> {
    pub scene: &'a Scene,
    pub model: &'a FieldModel,
    pub table: AnchorTable,
    pub rotations: Vec<Mat3>,
    pub rca: RcaConfig,
    pub tau_dist: f64,
    pub background: [f64; 3],
}

struct SampleTrace {
    position: Vec3,
    neighbors: Vec<NeighborWeight>,
    decode: DecodeTrace,
}

impl<'a> ForwardContext<'a> {
    pub fn new(scene: &'a Scene, model: &'a FieldModel, rca: RcaConfig, background: [f64; 3]) -> Result<Self> {
        let features = anchor_features(scene, model)?;
        Ok(Self {
            scene,
            model,
            table: AnchorTable::with_features(&scene.anchors, features),
            rotations: scene.anchors.iter().map(|a| a.rotation_matrix()).collect(),
            rca,
            tau_dist: rca.resolve_tau(&scene.anchors),
            background,
        })
    }

    fn trace_ray(&self, ray: &Ray, group: &[IntersectionSample]) -> Vec<SampleTrace> {
        (0..group.len())
            .filter_map(|k| {
                let (agg, neighbors) = aggregate_sample(k, group, &self.table, &self.rca, self.tau_dist);
                if !agg.valid {
                    return None;
                }
                let decode = decode_trace(
                    &agg.feature_hat,
                    agg.alpha_hat,
                    &ray.direction,
                    &self.scene.anchors[agg.anchor_index].deform_rotation,
                    self.model,
                );
                Some(SampleTrace {
                    position: agg.position,
                    neighbors,
                    decode,
                })
            })
            .collect()
    }

    pub fn ray_color(&self, ray: &Ray, group: &[IntersectionSample]) -> [f64; 3] {
        let decoded: Vec<_> = self
            .trace_ray(ray, group)
            .into_iter()
            .map(|t| t.decode.decoded)
            .collect();
        composite(&decoded, self.background)
    }

    pub fn render(&self, rays: &[Ray], stream: &SampleStream) -> Vec<[f64; 3]> {
        rays.par_iter()
            .enumerate()
            .map(|(i, r)| self.ray_color(r, stream.ray(i)))
            .collect()
    }

    pub fn forward_loss(&self, rays: &[Ray], stream: &SampleStream, targets: &[[f64; 3]]) -> Result<f64> {
        loss(&self.render(rays, stream), targets)
    }

    /// Loss, rendered colours and exact gradients for a ray batch.
    pub fn backward(
        &self,
        rays: &[Ray],
        stream: &SampleStream,
        targets: &[[f64; 3]],
    ) -> Result<(f64, Vec<[f64; 3]>, GradientBundle)> {
        if rays.len() != targets.len() || rays.len() != stream.num_rays() {
            return Err(Error::ShapeMismatch(format!(
                "{} rays, {} sample groups, {} targets",
                rays.len(),
                stream.num_rays(),
                targets.len()
            )));
        }
        let scale = 2.0 / (3.0 * rays.len().max(1) as f64);
        let indices: Vec<usize> = (0..rays.len()).collect();
        let partials: Vec<(GradientBundle, Vec<[f64; 3]>)> = indices
            .par_chunks(CHUNK_RAYS)
            .map(|chunk| {
                let mut g = GradientBundle::zeros(self.scene, self.model);
                let colors = chunk
                    .iter()
                    .map(|&i| self.ray_backward(&rays[i], stream.ray(i), &targets[i], scale, &mut g))
                    .collect();
                (g, colors)
            })
            .collect();

        let mut grad = GradientBundle::zeros(self.scene, self.model);
        let mut colors = Vec::with_capacity(rays.len());
        for (g, c) in &partials {
            grad.add(g);
            colors.extend_from_slice(c);
        }
        if !self.scene.baked {
            let grid = self.model.hash_grid.as_ref().ok_or(Error::MissingHashGrid)?;
            for (a, ag) in self.scene.anchors.iter().zip(&grad.anchors) {
                if ag.feature.iter().any(|&v| v != 0.0) {
                    let p = self.scene.normalization.apply(&a.mean);
                    grad.hash.accumulate(grid, &p, &ag.feature);
                }
            }
        }
        grad.check_finite()?;
        Ok((loss(&colors, targets)?, colors, grad))
    }

    fn ray_backward(
        &self,
        ray: &Ray,
        group: &[IntersectionSample],
        target: &[f64; 3],
        scale: f64,
        grad: &mut GradientBundle,
    ) -> [f64; 3] {
        let traces = self.trace_ray(ray, group);
        let n = traces.len();
        let color = composite(
            &traces.iter().map(|t| t.decode.decoded).collect::<Vec<_>>(),
            self.background,
        );
        let g_c: [f64; 3] = std::array::from_fn(|ch| scale * (color[ch] - target[ch]));
        if g_c.iter().all(|&g| g == 0.0) {
            return color;
        }

        // Transmittance in front of each sample and the colour composited
        // behind it: R_K = background, R_k = α_k c_k + (1 − α_k) R_{k+1}.
        let mut trans = Vec::with_capacity(n);
        let mut t = 1.0;
        for tr in &traces {
            trans.push(t);
            t *= 1.0 - tr.decode.decoded.alpha;
        }
        let mut behind = vec![self.background; n + 1];
        for k in (0..n).rev() {
            let d = &traces[k].decode.decoded;
            behind[k] = std::array::from_fn(|ch| d.alpha * d.color[ch] + (1.0 - d.alpha) * behind[k + 1][ch]);
        }

        for (k, tr) in traces.iter().enumerate() {
            let d = &tr.decode.decoded;
            let g_alpha: f64 = (0..3)
                .map(|ch| g_c[ch] * trans[k] * (d.color[ch] - behind[k + 1][ch]))
                .sum();
            let g_color: Vec<f64> = (0..3).map(|ch| g_c[ch] * trans[k] * d.alpha).collect();

            let g_sigma_eff = g_alpha * (1.0 - d.alpha);
            let g_alpha_hat = g_sigma_eff * tr.decode.sigma_act;
            let g_sigma_act = g_sigma_eff * tr.decode.alpha_hat;
            let arg = tr.decode.sigma_mlp - 1.0;
            let g_sigma_mlp = if arg.abs() < TRUNC_EXP_LIMIT {
                g_sigma_act * tr.decode.sigma_act
            } else {
                0.0
            };

            let g_color_in = self
                .model
                .color
                .backward(&tr.decode.color, &g_color, &mut grad.color_mlp);
            let mut g_geo_out = Vec::with_capacity(self.model.geometry.out_dim());
            g_geo_out.push(g_sigma_mlp);
            g_geo_out.extend_from_slice(&g_color_in[..self.model.geometry.out_dim() - 1]);
            let g_fhat = self
                .model
                .geometry
                .backward(&tr.decode.geometry, &g_geo_out, &mut grad.geometry_mlp);

            self.aggregate_backward(&tr.position, &tr.neighbors, &g_fhat, g_alpha_hat, grad);
        }
        color
    }

    fn aggregate_backward(
        &self,
        x: &Vec3,
        neighbors: &[NeighborWeight],
        g_fhat: &[f64],
        g_alpha_hat: f64,
        grad: &mut GradientBundle,
    ) {
        let dw: Vec<f64> = neighbors
            .iter()
            .map(|nb| {
                if !nb.valid {
                    return 0.0;
                }
                let f = &self.table.features[nb.anchor_index];
                let dot: f64 = g_fhat.iter().zip(f).map(|(a, b)| a * b).sum();
                dot + g_alpha_hat * nb.alpha_raw
            })
            .collect();
        let mean_dw: f64 = neighbors.iter().zip(&dw).map(|(nb, d)| nb.weight * d).sum();

        for (nb, &dwj) in neighbors.iter().zip(&dw) {
            if !nb.valid {
                continue;
            }
            let j = nb.anchor_index;
            let ag = &mut grad.anchors[j];
            for (gf, g) in ag.feature.iter_mut().zip(g_fhat) {
                *gf += nb.weight * g;
            }
            let sig = self.table.opacity[j];
            ag.opacity_logit += g_alpha_hat * nb.weight * nb.falloff * sig * (1.0 - sig);

            let g_logit = nb.weight * (dwj - mean_dw) + g_alpha_hat * nb.weight * nb.alpha_raw;
            let g_delta = -self.rca.logit_scale * g_logit;
            if g_delta == 0.0 {
                continue;
            }
            let anchor = &self.scene.anchors[j];
            let r = &self.rotations[j];
            let u = x - anchor.mean;
            let y = r.transpose() * u;
            let s2 = anchor.scale.component_mul(&anchor.scale);
            // Δ² = Σ (y_i / s_i)²
            let g_y = Vec3::from_fn(|i, _| 2.0 * y[i] / s2[i] * g_delta);
            ag.mean -= r * g_y;
            for i in 0..3 {
                ag.scale[i] += -2.0 * y[i] * y[i] / (s2[i] * anchor.scale[i]) * g_delta;
            }
            let g_r = u * g_y.transpose();
            let gq = quat_to_mat_backward(&anchor.rotation, &g_r);
            for i in 0..4 {
                ag.rotation[i] += gq[i];
            }
        }
    }
}
