use std::collections::HashMap;

use crate::field::{hash_grid::split_key, FieldModel, Mlp, MlpGrad};
use crate::math::{quat_normalize, Quat, FEATURE_DIM};
use crate::scene::Scene;

use super::backward::GradientBundle;

/// Smallest scale component kept after an update.
pub const MIN_SCALE: f64 = 1e-6;

const ANCHOR_PARAMS: usize = 3 + 4 + 3 + 1 + FEATURE_DIM;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-15,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LearningRates {
    pub hash_grid: f64,
    pub mlp: f64,
    pub features: f64,
    /// Means, rotations and scales.
    pub geometry: f64,
    pub opacity: f64,
}

impl Default for LearningRates {
    fn default() -> Self {
        Self {
            hash_grid: 1e-2,
            mlp: 1e-3,
            features: 1e-2,
            geometry: 1e-4,
            opacity: 5e-2,
        }
    }
}

impl LearningRates {
    pub fn all_positive(&self) -> bool {
        [self.hash_grid, self.mlp, self.features, self.geometry, self.opacity]
            .iter()
            .all(|&lr| lr > 0.0)
    }
}

#[derive(Clone, Debug, Default)]
struct Moments {
    m: Vec<f64>,
    v: Vec<f64>,
}

impl Moments {
    fn zeros(n: usize) -> Self {
        Self {
            m: vec![0.0; n],
            v: vec![0.0; n],
        }
    }
}

/// Adam state for every parameter group of a scene and model.
#[derive(Clone, Debug)]
pub struct Adam {
    pub cfg: AdamConfig,
    step: u64,
    geometry_mlp: Vec<Moments>,
    color_mlp: Vec<Moments>,
    hash: HashMap<u64, ([f64; 2], [f64; 2])>,
    anchors: Vec<([f64; ANCHOR_PARAMS], [f64; ANCHOR_PARAMS])>,
}

struct Update {
    beta1: f64,
    beta2: f64,
    eps: f64,
    bc1: f64,
    bc2: f64,
}

impl Update {
    #[inline]
    fn apply(&self, p: &mut f64, g: f64, m: &mut f64, v: &mut f64, lr: f64) {
        *m = self.beta1 * *m + (1.0 - self.beta1) * g;
        *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
        let m_hat = *m / self.bc1;
        let v_hat = *v / self.bc2;
        *p -= lr * m_hat / (v_hat.sqrt() + self.eps);
    }
}

fn mlp_moments(mlp: &Mlp) -> Vec<Moments> {
    mlp.layers
        .iter()
        .flat_map(|l| [Moments::zeros(l.weights.len()), Moments::zeros(l.bias.len())])
        .collect()
}

fn anchor_flat(g: &super::backward::AnchorGrad) -> [f64; ANCHOR_PARAMS] {
    let mut out = [0.0; ANCHOR_PARAMS];
    out[0..3].copy_from_slice(g.mean.as_slice());
    out[3..7].copy_from_slice(&g.rotation);
    out[7..10].copy_from_slice(g.scale.as_slice());
    out[10] = g.opacity_logit;
    out[11..].copy_from_slice(&g.feature);
    out
}

impl Adam {
    pub fn new(cfg: AdamConfig, scene: &Scene, model: &FieldModel) -> Self {
        Self {
            cfg,
            step: 0,
            geometry_mlp: mlp_moments(&model.geometry),
            color_mlp: mlp_moments(&model.color),
            hash: HashMap::new(),
            anchors: vec![([0.0; ANCHOR_PARAMS], [0.0; ANCHOR_PARAMS]); scene.anchors.len()],
        }
    }

    pub fn timestep(&self) -> u64 {
        self.step
    }

    /// Drops the state of anchors whose `keep` flag is false.
    pub fn retain_anchors(&mut self, keep: &[bool]) {
        let mut it = keep.iter();
        self.anchors.retain(|_| *it.next().unwrap_or(&true));
    }

    /// One Adam update of every group. Stored anchor features train in baked
    /// scenes; hash-grid entries train otherwise. Quaternions are
    /// renormalised and scales clamped to [`MIN_SCALE`] afterwards.
    pub fn step(&mut self, scene: &mut Scene, model: &mut FieldModel, grad: &GradientBundle, lr: &LearningRates) {
        self.step += 1;
        let t = self.step as i32;
        let u = Update {
            beta1: self.cfg.beta1,
            beta2: self.cfg.beta2,
            eps: self.cfg.eps,
            bc1: 1.0 - self.cfg.beta1.powi(t),
            bc2: 1.0 - self.cfg.beta2.powi(t),
        };

        step_mlp(
            &u,
            &mut model.geometry,
            &grad.geometry_mlp,
            &mut self.geometry_mlp,
            lr.mlp,
        );
        step_mlp(&u, &mut model.color, &grad.color_mlp, &mut self.color_mlp, lr.mlp);

        if !scene.baked {
            if let Some(grid) = model.hash_grid.as_mut() {
                for &k in grad.hash.entries.keys() {
                    self.hash.entry(k).or_insert(([0.0; 2], [0.0; 2]));
                }
                let mut keys: Vec<u64> = self.hash.keys().copied().collect();
                keys.sort_unstable();
                for k in keys {
                    let (level, index) = split_key(k);
                    let g = grad.hash.get(level, index);
                    let (m, v) = self.hash.get_mut(&k).expect("key collected above");
                    let mut e = grid.entry(level, index);
                    for c in 0..2 {
                        u.apply(&mut e[c], g[c], &mut m[c], &mut v[c], lr.hash_grid);
                    }
                    grid.set_entry(level, index, e);
                }
            }
        }

        for ((a, g), (m, v)) in scene.anchors.iter_mut().zip(&grad.anchors).zip(self.anchors.iter_mut()) {
            let g = anchor_flat(g);
            for i in 0..3 {
                u.apply(&mut a.mean[i], g[i], &mut m[i], &mut v[i], lr.geometry);
            }
            let mut q = [a.rotation.w, a.rotation.i, a.rotation.j, a.rotation.k];
            for i in 0..4 {
                u.apply(&mut q[i], g[3 + i], &mut m[3 + i], &mut v[3 + i], lr.geometry);
            }
            a.rotation = quat_normalize(&Quat::new(q[0], q[1], q[2], q[3]));
            for i in 0..3 {
                u.apply(&mut a.scale[i], g[7 + i], &mut m[7 + i], &mut v[7 + i], lr.geometry);
                a.scale[i] = a.scale[i].max(MIN_SCALE);
            }
            u.apply(&mut a.opacity_logit, g[10], &mut m[10], &mut v[10], lr.opacity);
            if scene.baked {
                for i in 0..FEATURE_DIM {
                    u.apply(
                        &mut a.feature[i],
                        g[11 + i],
                        &mut m[11 + i],
                        &mut v[11 + i],
                        lr.features,
                    );
                }
            }
        }
        scene.bvh_stale = true;
    }
}

fn step_mlp(u: &Update, mlp: &mut Mlp, grad: &MlpGrad, state: &mut [Moments], lr: f64) {
    for ((p, g), s) in mlp.params_mut().into_iter().zip(grad.params()).zip(state.iter_mut()) {
        for i in 0..p.len() {
            u.apply(&mut p[i], g[i], &mut s.m[i], &mut s.v[i], lr);
        }
    }
}

/// Adam on a single scalar, used to check the closed-form first step.
pub fn adam_scalar_steps(x0: f64, grads: &[f64], lr: f64, cfg: &AdamConfig) -> f64 {
    let mut x = x0;
    let (mut m, mut v) = (0.0, 0.0);
    for (i, &g) in grads.iter().enumerate() {
        let t = (i + 1) as i32;
        let u = Update {
            beta1: cfg.beta1,
            beta2: cfg.beta2,
            eps: cfg.eps,
            bc1: 1.0 - cfg.beta1.powi(t),
            bc2: 1.0 - cfg.beta2.powi(t),
        };
        u.apply(&mut x, g, &mut m, &mut v, lr);
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::field::FieldConfig;
    use crate::math::{NeuralAnchor, Vec3};

    #[test]
    fn first_step_is_lr_times_sign() {
        let x = adam_scalar_steps(1.0, &[1.0], 0.1, &AdamConfig::default());
        assert!((x - 0.9).abs() < 1e-12);
        let x = adam_scalar_steps(1.0, &[-250.0], 0.1, &AdamConfig::default());
        assert!((x - 1.1).abs() < 1e-12);
    }

    #[test]
    fn zero_gradients_leave_parameters() {
        let mut scene = Scene::new(vec![NeuralAnchor::isotropic(Vec3::new(0.1, 0.2, 0.3), 0.5)]);
        scene.baked = true;
        let mut model = FieldModel::new(&FieldConfig::default(), 1).unwrap();
        let grad = GradientBundle::zeros(&scene, &model);
        let mut adam = Adam::new(AdamConfig::default(), &scene, &model);
        let (s0, m0) = (scene.anchors.clone(), model.clone());
        adam.step(&mut scene, &mut model, &grad, &LearningRates::default());
        assert_eq!(adam.timestep(), 1);
        assert_eq!(scene.anchors, s0);
        assert_eq!(model, m0);
    }

    #[test]
    fn feature_step_on_baked_scene() {
        let mut scene = Scene::new(vec![NeuralAnchor::isotropic(Vec3::zeros(), 0.5)]);
        scene.baked = true;
        let mut model = FieldModel::new(&FieldConfig::default(), 1).unwrap();
        let mut grad = GradientBundle::zeros(&scene, &model);
        grad.anchors[0].feature[3] = 1.0;
        let mut adam = Adam::new(AdamConfig::default(), &scene, &model);
        let lr = LearningRates {
            features: 0.1,
            ..Default::default()
        };
        adam.step(&mut scene, &mut model, &grad, &lr);
        assert!((scene.anchors[0].feature[3] + 0.1).abs() < 1e-12);
        assert_eq!(scene.anchors[0].feature[4], 0.0);
    }
}
