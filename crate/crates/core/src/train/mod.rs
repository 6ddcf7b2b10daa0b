//! Photometric training with Adam and visibility-aware pruning.

pub mod adam;
pub mod backward;
pub mod prune;

use std::fmt::Write as _;
use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::field::FieldModel;
use crate::image::{psnr, Image};
use crate::math::Ray;
use crate::rca::RcaConfig;
use crate::render::Camera;
use crate::ris::{RayIntersectionSelector, SamplerConfig};
use crate::scene::Scene;

pub use adam::{Adam, AdamConfig, LearningRates};
pub use backward::{AnchorGrad, ForwardContext, GradientBundle};
pub use prune::{prune_update, BoostPolicy, PruneConfig, PruneOutcome};

/// Mean over rays and channels of the squared error.
pub fn loss(rendered: &[[f64; 3]], target: &[[f64; 3]]) -> Result<f64> {
    if rendered.len() != target.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} rendered rays vs {} targets",
            rendered.len(),
            target.len()
        )));
    }
    if rendered.is_empty() {
        return Ok(0.0);
    }
    let sum: f64 = rendered
        .iter()
        .zip(target)
        .flat_map(|(r, t)| (0..3).map(move |c| (r[c] - t[c]).powi(2)))
        .sum();
    Ok(sum / (3 * rendered.len()) as f64)
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TrainConfig {
    pub lr: LearningRates,
    pub adam: AdamConfig,
    /// Rays per step; a batch at least as large as the dataset uses every
    /// ray in order.
    pub batch_size: usize,
    pub iterations: usize,
    /// Learning rates decay exponentially to this fraction of their initial
    /// values at the last iteration; 1 keeps them constant.
    pub lr_final_ratio: f64,
    pub seed: u64,
    /// `None` disables pruning.
    pub prune: Option<PruneConfig>,
    pub sampler: SamplerConfig,
    pub rca: RcaConfig,
    pub background: [f64; 3],
    pub threads: Option<usize>,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: LearningRates::default(),
            adam: AdamConfig::default(),
            batch_size: 4096,
            iterations: 2000,
            lr_final_ratio: 1.0,
            seed: 0,
            prune: Some(PruneConfig::default()),
            sampler: SamplerConfig::bounded(),
            rca: RcaConfig::default(),
            background: [1.0; 3],
            threads: None,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !self.lr.all_positive() {
            return Err(Error::Config("learning rates must be positive".into()));
        }
        if !(self.lr_final_ratio > 0.0 && self.lr_final_ratio <= 1.0) {
            return Err(Error::Config("lr_final_ratio must lie in (0, 1]".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if let Some(p) = &self.prune {
            p.validate()?;
        }
        self.sampler.validate()
    }
}

/// Every training ray with its target colour.
#[derive(Clone, Debug, Default)]
pub struct Dataset {
    pub rays: Vec<Ray>,
    pub targets: Vec<[f64; 3]>,
}

impl Dataset {
    pub fn from_views(views: &[(Camera, Image)]) -> Self {
        let mut rays = Vec::new();
        let mut targets = Vec::new();
        for (cam, img) in views {
            for mut r in cam.rays(img.width, img.height) {
                targets.push(img.pixels[r.ray_index]);
                r.ray_index = rays.len();
                rays.push(r);
            }
        }
        Self { rays, targets }
    }

    pub fn len(&self) -> usize {
        self.rays.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rays.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRow {
    pub iter: usize,
    pub loss: f64,
    pub psnr: f64,
    pub num_anchors: usize,
    pub rays_per_second: f64,
}

pub const LOG_HEADER: &str = "iter,loss,psnr,num_anchors,rays_per_second";

impl LogRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{:.9e},{:.4},{},{:.1}",
            self.iter, self.loss, self.psnr, self.num_anchors, self.rays_per_second
        )
    }
}

pub fn log_csv(rows: &[LogRow]) -> String {
    let mut s = String::from(LOG_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{}", r.csv());
    }
    s
}

pub struct Trainer {
    pub scene: Scene,
    pub model: FieldModel,
    pub adam: Adam,
    pub cfg: TrainConfig,
    pub log: Vec<LogRow>,
    rng: ChaCha8Rng,
    pool: Option<rayon::ThreadPool>,
}

impl Trainer {
    pub fn new(scene: Scene, model: FieldModel, cfg: TrainConfig) -> Result<Self> {
        cfg.validate()?;
        model.validate()?;
        if !scene.baked && model.hash_grid.is_none() {
            return Err(Error::MissingHashGrid);
        }
        let pool = cfg
            .threads
            .map(|n| {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n.max(1))
                    .build()
                    .map_err(|e| Error::Config(format!("thread pool: {e}")))
            })
            .transpose()?;
        Ok(Self {
            adam: Adam::new(cfg.adam, &scene, &model),
            rng: ChaCha8Rng::seed_from_u64(cfg.seed),
            scene,
            model,
            cfg,
            log: Vec::new(),
            pool,
        })
    }

    fn batch(&mut self, data: &Dataset) -> (Vec<Ray>, Vec<[f64; 3]>) {
        if self.cfg.batch_size >= data.len() {
            return (data.rays.clone(), data.targets.clone());
        }
        let mut idx = rand::seq::index::sample(&mut self.rng, data.len(), self.cfg.batch_size).into_vec();
        idx.sort_unstable();
        (
            idx.iter().map(|&i| data.rays[i]).collect(),
            idx.iter().map(|&i| data.targets[i]).collect(),
        )
    }

    /// One optimisation step; the logged loss is that of the parameters
    /// before the update.
    pub fn step(&mut self, data: &Dataset) -> Result<LogRow> {
        let start = Instant::now();
        let (rays, targets) = self.batch(data);
        let (loss, grad, selected) = match self.pool.take() {
            Some(pool) => {
                let r = pool.install(|| self.evaluate(&rays, &targets));
                self.pool = Some(pool);
                r?
            }
            None => self.evaluate(&rays, &targets)?,
        };
        let lr = self.learning_rates();
        self.adam.step(&mut self.scene, &mut self.model, &grad, &lr);
        if let Some(p) = self.cfg.prune {
            let out = prune_update(&mut self.scene, &selected, &p)?;
            if !out.removed.is_empty() {
                log::info!("pruned {} anchors", out.removed.len());
                self.adam.retain_anchors(&out.keep);
            }
        }
        let secs = start.elapsed().as_secs_f64().max(1e-9);
        let row = LogRow {
            iter: self.adam.timestep() as usize,
            loss,
            psnr: psnr(loss),
            num_anchors: self.scene.len(),
            rays_per_second: rays.len() as f64 / secs,
        };
        self.log.push(row);
        Ok(row)
    }

    /// Rates for the upcoming step under the exponential schedule.
    pub fn learning_rates(&self) -> LearningRates {
        let span = self.cfg.iterations.max(1) as f64;
        let progress = (self.adam.timestep() as f64 / span).min(1.0);
        let f = self.cfg.lr_final_ratio.powf(progress);
        let l = self.cfg.lr;
        LearningRates {
            hash_grid: l.hash_grid * f,
            mlp: l.mlp * f,
            features: l.features * f,
            geometry: l.geometry * f,
            opacity: l.opacity * f,
        }
    }

    fn evaluate(&self, rays: &[Ray], targets: &[[f64; 3]]) -> Result<(f64, GradientBundle, Vec<usize>)> {
        let selector = RayIntersectionSelector::new(&self.scene.anchors, self.cfg.sampler)?;
        let stream = selector.sample_batch(rays)?;
        let ctx = ForwardContext::new(&self.scene, &self.model, self.cfg.rca, self.cfg.background)?;
        let (loss, _, grad) = ctx.backward(rays, &stream, targets)?;
        Ok((loss, grad, stream.selected_anchors()))
    }

    /// Runs the configured number of iterations.
    pub fn run(&mut self, data: &Dataset) -> Result<&[LogRow]> {
        for _ in 0..self.cfg.iterations {
            self.step(data)?;
        }
        Ok(&self.log)
    }
}
