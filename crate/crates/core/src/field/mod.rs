//! Implicit appearance model: hash-grid features, geometry and colour heads,
//! density gating by the aggregated Gaussian opacity, and front-to-back
//! compositing.

pub mod encoding;
pub mod hash_grid;
pub mod mlp;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::math::{quat_to_mat, Quat, Vec3, FEATURE_DIM};
use crate::scene::Scene;

pub use encoding::{sh_encode, ViewEncoding};
pub use hash_grid::{HashGrid, HashGridConfig, HashGridGrad};
pub use mlp::{Activation, Dense, Mlp, MlpGrad, MlpTrace};

pub const HIDDEN_WIDTH: usize = 64;
/// Geometry head output: raw density plus a 15-wide colour latent.
pub const GEOMETRY_OUT: usize = 16;
pub const LATENT_DIM: usize = GEOMETRY_OUT - 1;
pub const TRUNC_EXP_LIMIT: f64 = 15.0;

/// `exp(clamp(x, −15, 15))`
#[inline]
pub fn trunc_exp(x: f64) -> f64 {
    x.clamp(-TRUNC_EXP_LIMIT, TRUNC_EXP_LIMIT).exp()
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct FieldConfig {
    pub view_encoding: ViewEncoding,
    /// `None` builds a model without a hash grid (baked scenes only).
    pub hash_grid: Option<HashGridConfig>,
}

impl Default for FieldConfig {
    fn default() -> Self {
        Self {
            view_encoding: ViewEncoding::default(),
            hash_grid: Some(HashGridConfig::default()),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FieldModel {
    pub geometry: Mlp,
    pub color: Mlp,
    pub view_encoding: ViewEncoding,
    pub hash_grid: Option<HashGrid>,
    pub seed: u64,
}

impl FieldModel {
    /// Geometry head 32 → 64 → 64 → 16, colour head (15 + V) → 64 → 64 → 3.
    pub fn new(cfg: &FieldConfig, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let geometry = Mlp::glorot(
            &[FEATURE_DIM, HIDDEN_WIDTH, HIDDEN_WIDTH, GEOMETRY_OUT],
            Activation::Relu,
            Activation::Linear,
            &mut rng,
        );
        let color = Mlp::glorot(
            &[LATENT_DIM + cfg.view_encoding.width(), HIDDEN_WIDTH, HIDDEN_WIDTH, 3],
            Activation::Relu,
            Activation::Sigmoid,
            &mut rng,
        );
        let hash_grid = cfg
            .hash_grid
            .map(|g| HashGrid::new(g, seed ^ 0x4841_5348))
            .transpose()?;
        Ok(Self {
            geometry,
            color,
            view_encoding: cfg.view_encoding,
            hash_grid,
            seed,
        })
    }

    /// Same architecture with every weight and bias set to zero.
    pub fn zeroed(cfg: &FieldConfig, seed: u64) -> Result<Self> {
        let mut m = Self::new(cfg, seed)?;
        for l in m.geometry.layers.iter_mut().chain(m.color.layers.iter_mut()) {
            l.weights.iter_mut().for_each(|w| *w = 0.0);
            l.bias.iter_mut().for_each(|b| *b = 0.0);
        }
        Ok(m)
    }

    pub fn validate(&self) -> Result<()> {
        let g = &self.geometry;
        let c = &self.color;
        if g.in_dim() != FEATURE_DIM || g.out_dim() != GEOMETRY_OUT {
            return Err(Error::ShapeMismatch(format!(
                "geometry head {}→{}, expected {FEATURE_DIM}→{GEOMETRY_OUT}",
                g.in_dim(),
                g.out_dim()
            )));
        }
        if c.in_dim() != LATENT_DIM + self.view_encoding.width() || c.out_dim() != 3 {
            return Err(Error::ShapeMismatch(format!(
                "colour head {}→{}, expected {}→3",
                c.in_dim(),
                c.out_dim(),
                LATENT_DIM + self.view_encoding.width()
            )));
        }
        for mlp in [g, c] {
            for w in mlp.layers.windows(2) {
                if w[0].out_dim != w[1].in_dim {
                    return Err(Error::ShapeMismatch("inconsistent layer widths".into()));
                }
            }
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DecodedSample {
    pub sigma_eff: f64,
    pub alpha: f64,
    pub color: [f64; 3],
}

/// Activations of one [`decode`] call kept for the backward pass.
#[derive(Clone, Debug)]
pub struct DecodeTrace {
    pub geometry: MlpTrace,
    pub color: MlpTrace,
    pub sigma_mlp: f64,
    /// `trunc_exp(σ_mlp − 1)`
    pub sigma_act: f64,
    pub alpha_hat: f64,
    pub decoded: DecodedSample,
}

/// Decodes one aggregated sample. The view direction is first rotated into
/// the anchor's deformed frame, `d' = R_defᵀ d`.
pub fn decode(
    f_hat: &[f64; FEATURE_DIM],
    alpha_hat: f64,
    direction: &Vec3,
    deform_rotation: &Quat,
    model: &FieldModel,
) -> DecodedSample {
    decode_trace(f_hat, alpha_hat, direction, deform_rotation, model).decoded
}

pub fn decode_trace(
    f_hat: &[f64; FEATURE_DIM],
    alpha_hat: f64,
    direction: &Vec3,
    deform_rotation: &Quat,
    model: &FieldModel,
) -> DecodeTrace {
    let local_dir = quat_to_mat(deform_rotation).transpose() * direction;
    let geometry = model.geometry.forward_trace(f_hat);
    let sigma_mlp = geometry.output[0];
    let mut color_in = Vec::with_capacity(model.color.in_dim());
    color_in.extend_from_slice(&geometry.output[1..]);
    color_in.extend(model.view_encoding.encode(&local_dir));
    let color = model.color.forward_trace(&color_in);
    let sigma_act = trunc_exp(sigma_mlp - 1.0);
    let sigma_eff = sigma_act * alpha_hat;
    let decoded = DecodedSample {
        sigma_eff,
        alpha: 1.0 - (-sigma_eff).exp(),
        color: [color.output[0], color.output[1], color.output[2]],
    };
    DecodeTrace {
        geometry,
        color,
        sigma_mlp,
        sigma_act,
        alpha_hat,
        decoded,
    }
}

/// `C = Σ T_k α_k c_k + T_{K+1} · background`, clamped to `[0, 1]`.
pub fn composite(decoded: &[DecodedSample], background: [f64; 3]) -> [f64; 3] {
    let mut c = [0.0; 3];
    let mut transmittance = 1.0;
    for s in decoded {
        let w = transmittance * s.alpha;
        for ch in 0..3 {
            c[ch] += w * s.color[ch];
        }
        transmittance *= 1.0 - s.alpha;
    }
    for ch in 0..3 {
        c[ch] = (c[ch] + transmittance * background[ch]).clamp(0.0, 1.0);
    }
    c
}

/// Per-sample compositing weights `T_k α_k` and the residual transmittance.
pub fn composite_weights(decoded: &[DecodedSample]) -> (Vec<f64>, f64) {
    let mut t = 1.0;
    let w = decoded
        .iter()
        .map(|s| {
            let w = t * s.alpha;
            t *= 1.0 - s.alpha;
            w
        })
        .collect();
    (w, t)
}

/// Features each anchor presents to the aggregator: stored features for a
/// baked scene, hash-grid queries at the normalised means otherwise.
pub fn anchor_features(scene: &Scene, model: &FieldModel) -> Result<Vec<[f64; FEATURE_DIM]>> {
    if scene.baked || scene.is_empty() {
        return Ok(scene.anchors.iter().map(|a| a.feature).collect());
    }
    let grid = model.hash_grid.as_ref().ok_or(Error::MissingHashGrid)?;
    Ok(scene
        .anchors
        .iter()
        .map(|a| grid.query(&scene.normalization.apply(&a.mean)))
        .collect())
}

/// Stores the hash-grid features on the anchors and marks the scene baked.
/// A baked scene is left untouched.
pub fn bake(scene: &mut Scene, model: &FieldModel) -> Result<()> {
    if scene.baked {
        return Ok(());
    }
    let features = anchor_features(scene, model)?;
    for (a, f) in scene.anchors.iter_mut().zip(features) {
        a.feature = f;
    }
    scene.baked = true;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::math::{NeuralAnchor, Quat};

    #[test]
    fn trunc_exp_clamps() {
        assert_eq!(trunc_exp(100.0), 15f64.exp());
        assert_eq!(trunc_exp(-100.0), (-15f64).exp());
        assert_eq!(trunc_exp(0.5), 0.5f64.exp());
    }

    #[test]
    fn zero_alpha_hat_gates_density() {
        let model = FieldModel::new(&FieldConfig::default(), 3).unwrap();
        let d = decode(&[0.3; FEATURE_DIM], 0.0, &Vec3::z(), &Quat::identity(), &model);
        assert_eq!(d.sigma_eff, 0.0);
        assert_eq!(d.alpha, 0.0);
    }

    #[test]
    fn zero_weights_decode_through_negative_bias() {
        let model = FieldModel::zeroed(&FieldConfig::default(), 3).unwrap();
        let d = decode(&[0.9; FEATURE_DIM], 1.0, &Vec3::x(), &Quat::identity(), &model);
        assert!((d.sigma_eff - 0.367_879_441).abs() < 1e-9);
        assert!((d.alpha - 0.307_799_372).abs() < 1e-5);
        assert_eq!(d.color, [0.5; 3]);
    }

    #[test]
    fn alpha_from_ln2_density() {
        let s = 2f64.ln();
        assert!((1.0 - (-s).exp() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn composite_cases() {
        assert_eq!(composite(&[], [1.0; 3]), [1.0; 3]);

        let opaque = DecodedSample {
            sigma_eff: 40.0,
            alpha: 1.0 - (-40f64).exp(),
            color: [0.2, 0.4, 0.6],
        };
        let c = composite(&[opaque], [0.0; 3]);
        for (a, b) in c.iter().zip([0.2, 0.4, 0.6]) {
            assert!((a - b).abs() < 1e-9);
        }

        let half = |color| DecodedSample {
            sigma_eff: 2f64.ln(),
            alpha: 0.5,
            color,
        };
        let c = composite(&[half([1.0, 0.0, 0.0]), half([0.0, 0.0, 1.0])], [0.0; 3]);
        assert!((c[0] - 0.5).abs() < 1e-12 && c[1].abs() < 1e-12 && (c[2] - 0.25).abs() < 1e-12);
    }

    #[test]
    fn bake_is_idempotent_and_requires_grid() {
        let mut scene = Scene::new(vec![
            NeuralAnchor::isotropic(Vec3::zeros(), 0.1),
            NeuralAnchor::isotropic(Vec3::new(1.0, 0.5, 0.0), 0.1),
        ]);
        let model = FieldModel::new(&FieldConfig::default(), 5).unwrap();
        let before = anchor_features(&scene, &model).unwrap();
        bake(&mut scene, &model).unwrap();
        assert!(scene.baked);
        assert_eq!(anchor_features(&scene, &model).unwrap(), before);
        let once = scene.clone();
        bake(&mut scene, &model).unwrap();
        assert_eq!(scene, once);

        let no_grid = FieldModel::new(
            &FieldConfig {
                hash_grid: None,
                ..Default::default()
            },
            5,
        )
        .unwrap();
        let mut fresh = Scene::new(vec![NeuralAnchor::isotropic(Vec3::zeros(), 0.1)]);
        assert!(matches!(bake(&mut fresh, &no_grid), Err(Error::MissingHashGrid)));
    }
}
