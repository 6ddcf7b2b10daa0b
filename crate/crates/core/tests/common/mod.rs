#![allow(dead_code)]

use iris::field::{anchor_features, decode_trace, FieldConfig, FieldModel, HashGridConfig};
use iris::math::{quat_normalize, NeuralAnchor, Quat, Ray, Vec3, FEATURE_DIM};
use iris::rca::{aggregate_sample, AnchorTable, RcaConfig};
use iris::ris::{RayIntersectionSelector, SampleStream, SamplerConfig};
use iris::train::{ForwardContext, GradientBundle};
use iris::Scene;
use rand::Rng;
use rand_chacha::ChaCha8Rng;

pub fn random_quat(rng: &mut ChaCha8Rng) -> Quat {
    quat_normalize(&Quat::new(
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
        rng.gen_range(-1.0..1.0),
    ))
}

pub fn random_anchor(rng: &mut ChaCha8Rng, mean: Vec3, scale: (f64, f64)) -> NeuralAnchor {
    let mut a = NeuralAnchor::isotropic(mean, 1.0);
    a.scale = Vec3::from_fn(|_, _| rng.gen_range(scale.0..scale.1));
    a.rotation = random_quat(rng);
    a.opacity_logit = rng.gen_range(-1.0..2.0);
    a.feature = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
    a
}

/// A small scene, rays through it, their fixed sample lists and targets.
pub struct Toy {
    pub scene: Scene,
    pub model: FieldModel,
    pub rays: Vec<Ray>,
    pub stream: SampleStream,
    pub targets: Vec<[f64; 3]>,
    pub rca: RcaConfig,
    pub background: [f64; 3],
}

impl Toy {
    pub fn context(&self) -> ForwardContext<'_> {
        ForwardContext::new(&self.scene, &self.model, self.rca, self.background).unwrap()
    }

    pub fn loss_with(&self, scene: &Scene, model: &FieldModel) -> f64 {
        ForwardContext::new(scene, model, self.rca, self.background)
            .unwrap()
            .forward_loss(&self.rays, &self.stream, &self.targets)
            .unwrap()
    }

    /// Sign of every ReLU pre-activation and every validity flag met by the
    /// forward pass. A finite-difference stencil is only meaningful when the
    /// signature is the same at both ends.
    pub fn signature(&self, scene: &Scene, model: &FieldModel) -> Vec<bool> {
        let table = AnchorTable::with_features(&scene.anchors, anchor_features(scene, model).unwrap());
        let tau = self.rca.resolve_tau(&scene.anchors);
        let mut sig = Vec::new();
        for (i, ray) in self.rays.iter().enumerate() {
            let group = self.stream.ray(i);
            for k in 0..group.len() {
                let (agg, nbs) = aggregate_sample(k, group, &table, &self.rca, tau);
                sig.extend(nbs.iter().map(|n| n.valid));
                if !agg.valid {
                    continue;
                }
                let tr = decode_trace(
                    &agg.feature_hat,
                    agg.alpha_hat,
                    &ray.direction,
                    &scene.anchors[agg.anchor_index].deform_rotation,
                    model,
                );
                for pre in [&tr.geometry.pre, &tr.color.pre] {
                    for layer in &pre[..pre.len() - 1] {
                        sig.extend(layer.iter().map(|&v| v > 0.0));
                    }
                }
            }
        }
        sig
    }

    pub fn gradients(&self) -> GradientBundle {
        self.context()
            .backward(&self.rays, &self.stream, &self.targets)
            .unwrap()
            .2
    }
}

/// Up to 8 anchors strung along `+z`, up to 16 rays from the origin.
pub fn toy(rng: &mut ChaCha8Rng, anchors: usize, rays: usize, baked: bool) -> Toy {
    let list: Vec<NeuralAnchor> = (0..anchors)
        .map(|i| {
            let mean = Vec3::new(
                rng.gen_range(-0.2..0.2),
                rng.gen_range(-0.2..0.2),
                2.0 + 0.6 * i as f64 + rng.gen_range(0.0..0.3),
            );
            random_anchor(rng, mean, (0.25, 0.5))
        })
        .collect();
    let mut scene = Scene::new(list);
    scene.baked = baked;
    let grid = HashGridConfig {
        init_scale: 0.5,
        ..Default::default()
    };
    let model = FieldModel::new(
        &FieldConfig {
            hash_grid: Some(grid),
            ..Default::default()
        },
        rng.gen(),
    )
    .unwrap();
    let rays: Vec<Ray> = (0..rays)
        .map(|i| {
            let d = Vec3::new(rng.gen_range(-0.06..0.06), rng.gen_range(-0.06..0.06), 1.0);
            Ray::new(Vec3::zeros(), d, i)
        })
        .collect();
    let sel = RayIntersectionSelector::new(&scene.anchors, SamplerConfig::bounded()).unwrap();
    let stream = sel.sample_batch(&rays).unwrap();
    let targets = (0..rays.len())
        .map(|_| std::array::from_fn(|_| rng.gen_range(0.0..1.0)))
        .collect();
    Toy {
        scene,
        model,
        rays,
        stream,
        targets,
        rca: RcaConfig {
            tau_dist: Some(3.0),
            ..Default::default()
        },
        background: [
            rng.gen_range(0.0..1.0),
            rng.gen_range(0.0..1.0),
            rng.gen_range(0.0..1.0),
        ],
    }
}

pub const FD_STEP: f64 = 1e-4;

/// Relative error with a floor so near-zero components compare absolutely.
pub fn rel_err(analytic: f64, numeric: f64, floor: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(floor)
}

/// Central difference of `f` at the parameter reached through `get`, or
/// `None` when the stencil straddles a kink (`sig` differs at its ends).
pub fn central_diff<S: Clone>(
    state: &S,
    get: impl Fn(&mut S) -> &mut f64,
    f: impl Fn(&S) -> f64,
    sig: impl Fn(&S) -> Vec<bool>,
) -> Option<f64> {
    let mut p = state.clone();
    *get(&mut p) += FD_STEP;
    let mut m = state.clone();
    *get(&mut m) -= FD_STEP;
    if sig(&p) != sig(&m) {
        return None;
    }
    Some((f(&p) - f(&m)) / (2.0 * FD_STEP))
}

/// Largest relative error per parameter group over one toy instance.
#[derive(Debug, Default, Clone, Copy)]
pub struct GroupErrors {
    pub geometry_mlp: f64,
    pub color_mlp: f64,
    pub hash_grid: f64,
    pub features: f64,
    pub opacity: f64,
    pub means: f64,
    pub scales: f64,
    pub rotations: f64,
}

impl GroupErrors {
    pub fn non_geometry_max(&self) -> f64 {
        [
            self.geometry_mlp,
            self.color_mlp,
            self.hash_grid,
            self.features,
            self.opacity,
        ]
        .into_iter()
        .fold(0.0, f64::max)
    }

    pub fn geometry_max(&self) -> f64 {
        [self.means, self.scales, self.rotations]
            .into_iter()
            .fold(0.0, f64::max)
    }

    pub fn merge(&mut self, o: &GroupErrors) {
        self.geometry_mlp = self.geometry_mlp.max(o.geometry_mlp);
        self.color_mlp = self.color_mlp.max(o.color_mlp);
        self.hash_grid = self.hash_grid.max(o.hash_grid);
        self.features = self.features.max(o.features);
        self.opacity = self.opacity.max(o.opacity);
        self.means = self.means.max(o.means);
        self.scales = self.scales.max(o.scales);
        self.rotations = self.rotations.max(o.rotations);
    }
}

/// Compares gradients of a baked toy (MLPs, features, opacity, geometry)
/// against central differences. `per_layer` MLP parameters are sampled per
/// layer.
pub fn check_baked(toy: &Toy, rng: &mut ChaCha8Rng, per_layer: usize) -> GroupErrors {
    assert!(toy.scene.baked);
    let g = toy.gradients();
    let scene_loss = |s: &Scene| toy.loss_with(s, &toy.model);
    let model_loss = |m: &FieldModel| toy.loss_with(&toy.scene, m);
    let scene_sig = |s: &Scene| toy.signature(s, &toy.model);
    let model_sig = |m: &FieldModel| toy.signature(&toy.scene, m);
    let floor = grad_floor(&g);
    let mut e = GroupErrors::default();

    for (head, grads, out) in [
        (0usize, &g.geometry_mlp, &mut e.geometry_mlp),
        (1, &g.color_mlp, &mut e.color_mlp),
    ] {
        let layers = if head == 0 {
            &toy.model.geometry.layers
        } else {
            &toy.model.color.layers
        };
        for (li, layer) in layers.iter().enumerate() {
            for _ in 0..per_layer {
                let (is_bias, idx) = if rng.gen_bool(0.2) {
                    (true, rng.gen_range(0..layer.bias.len()))
                } else {
                    (false, rng.gen_range(0..layer.weights.len()))
                };
                let analytic = if is_bias {
                    grads.bias[li][idx]
                } else {
                    grads.weights[li][idx]
                };
                let numeric = central_diff(
                    &toy.model,
                    |m| {
                        let mlp = if head == 0 { &mut m.geometry } else { &mut m.color };
                        let l = &mut mlp.layers[li];
                        if is_bias {
                            &mut l.bias[idx]
                        } else {
                            &mut l.weights[idx]
                        }
                    },
                    model_loss,
                    model_sig,
                );
                if let Some(n) = numeric {
                    *out = out.max(rel_err(analytic, n, floor));
                }
            }
        }
    }

    for j in 0..toy.scene.len() {
        let ag = &g.anchors[j];
        for _ in 0..4 {
            let c = rng.gen_range(0..FEATURE_DIM);
            if let Some(n) = central_diff(&toy.scene, |s| &mut s.anchors[j].feature[c], scene_loss, scene_sig) {
                e.features = e.features.max(rel_err(ag.feature[c], n, floor));
            }
        }
        if let Some(n) = central_diff(&toy.scene, |s| &mut s.anchors[j].opacity_logit, scene_loss, scene_sig) {
            e.opacity = e.opacity.max(rel_err(ag.opacity_logit, n, floor));
        }
        for i in 0..3 {
            if let Some(n) = central_diff(&toy.scene, |s| &mut s.anchors[j].mean[i], scene_loss, scene_sig) {
                e.means = e.means.max(rel_err(ag.mean[i], n, floor));
            }
            if let Some(n) = central_diff(&toy.scene, |s| &mut s.anchors[j].scale[i], scene_loss, scene_sig) {
                e.scales = e.scales.max(rel_err(ag.scale[i], n, floor));
            }
        }
        for i in 0..4 {
            let n = central_diff(
                &toy.scene,
                |s| {
                    let q = &mut s.anchors[j].rotation;
                    match i {
                        0 => &mut q.w,
                        1 => &mut q.i,
                        2 => &mut q.j,
                        _ => &mut q.k,
                    }
                },
                scene_loss,
                scene_sig,
            );
            if let Some(n) = n {
                e.rotations = e.rotations.max(rel_err(ag.rotation[i], n, floor));
            }
        }
    }
    e
}

/// Compares hash-table entry gradients of an unbaked toy.
pub fn check_hash(toy: &Toy, rng: &mut ChaCha8Rng, entries: usize) -> f64 {
    assert!(!toy.scene.baked);
    let g = toy.gradients();
    let floor = grad_floor(&g);
    let touched = g.hash.sorted();
    let mut worst: f64 = 0.0;
    for _ in 0..entries.min(touched.len()) {
        let (level, index, analytic) = touched[rng.gen_range(0..touched.len())];
        for c in 0..2 {
            let shifted = |delta: f64| {
                let mut m = toy.model.clone();
                let grid = m.hash_grid.as_mut().unwrap();
                let mut v = grid.entry(level, index);
                v[c] += delta;
                grid.set_entry(level, index, v);
                m
            };
            let (up, down) = (shifted(FD_STEP), shifted(-FD_STEP));
            if toy.signature(&toy.scene, &up) != toy.signature(&toy.scene, &down) {
                continue;
            }
            let numeric = (toy.loss_with(&toy.scene, &up) - toy.loss_with(&toy.scene, &down)) / (2.0 * FD_STEP);
            worst = worst.max(rel_err(analytic[c], numeric, floor));
        }
    }
    worst
}

/// Components below this are compared absolutely: a millionth of the
/// largest gradient magnitude in the bundle, at least `1e-9`.
pub fn grad_floor(g: &GradientBundle) -> f64 {
    let mut m: f64 = 0.0;
    for w in g.geometry_mlp.weights.iter().chain(&g.color_mlp.weights) {
        m = w.iter().fold(m, |a, v| a.max(v.abs()));
    }
    for a in &g.anchors {
        m = a.feature.iter().fold(m, |x, v| x.max(v.abs()));
        m = m.max(a.opacity_logit.abs());
    }
    (1e-6 * m).max(1e-9)
}

/// Teacher scene of three anchors rendered into one 8×8 view, and a student
/// with the same anchor layout but fresh features, opacities and networks.
pub struct Overfit {
    pub student: Scene,
    pub model: FieldModel,
    pub data: iris::train::Dataset,
    pub target: iris::image::Image,
}

pub fn overfit_fixture(seed: u64) -> Overfit {
    use iris::render::{render_image, Camera, RenderConfig};
    use rand::SeedableRng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means = [
        Vec3::new(-0.5, 0.2, 3.0),
        Vec3::new(0.1, -0.2, 3.4),
        Vec3::new(0.5, 0.3, 3.8),
    ];
    let teacher_anchors: Vec<NeuralAnchor> = means
        .iter()
        .map(|&m| {
            let mut a = random_anchor(&mut rng, m, (0.3, 0.5));
            a.opacity_logit = rng.gen_range(1.0..3.0);
            a
        })
        .collect();
    let mut teacher = Scene::new(teacher_anchors);
    teacher.baked = true;
    let cfg = FieldConfig {
        hash_grid: None,
        ..Default::default()
    };
    let mut teacher_model = FieldModel::new(&cfg, rng.gen()).unwrap();
    // Denser than a fresh network so the anchors read as nearly opaque.
    teacher_model.geometry.layers.last_mut().unwrap().bias[0] = 2.5;
    let camera = Camera::new(
        nalgebra::Matrix4::from_diagonal(&nalgebra::Vector4::new(-1.0, 1.0, -1.0, 1.0)),
        0.8,
    );
    let rcfg = RenderConfig {
        width: 8,
        height: 8,
        background: [0.0; 3],
        ..Default::default()
    };
    let target = render_image(&teacher, &teacher_model, &camera, &rcfg).unwrap();

    let mut student = teacher.clone();
    for a in &mut student.anchors {
        a.feature = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        a.opacity_logit = 0.0;
        a.mean += Vec3::new(0.05, -0.05, 0.1);
        a.scale *= 1.2;
    }
    let model = FieldModel::new(&cfg, rng.gen()).unwrap();
    let data = iris::train::Dataset::from_views(&[(camera, target.clone())]);
    Overfit {
        student,
        model,
        data,
        target,
    }
}
