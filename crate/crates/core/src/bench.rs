//! Sampler throughput benchmark with two baselines: a stratified
//! fixed-count sampler that evaluates every anchor at every sample, and an
//! occupancy-grid marcher.

use std::fmt::Write as _;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::math::{GaussianFrame, NeuralAnchor, Ray, Vec3};
use crate::render::Camera;
use crate::ris::{bvh::slab, RayIntersectionSelector, SamplerConfig};
use crate::scene::Scene;

pub const GRID_RESOLUTION: usize = 128;
pub const UNIFORM_SAMPLES: usize = 16;
/// Density above which the grid marcher emits a sample.
pub const GRID_DENSITY_THRESHOLD: f64 = 1e-2;

pub const CSV_HEADER: &str =
    "batch_size,rays_per_second,mean_samples_per_ray,wall_ms,sampler,per_ray_latency_us,memory_bytes";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SamplerKind {
    Ris,
    Uniform,
    Grid,
}

impl SamplerKind {
    pub fn name(self) -> &'static str {
        match self {
            SamplerKind::Ris => "ris",
            SamplerKind::Uniform => "uniform",
            SamplerKind::Grid => "grid",
        }
    }
}

impl std::str::FromStr for SamplerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ris" => Ok(SamplerKind::Ris),
            "uniform" => Ok(SamplerKind::Uniform),
            "grid" => Ok(SamplerKind::Grid),
            _ => Err(Error::Config(format!("unknown sampler `{s}`"))),
        }
    }
}

/// Axis-aligned box of all λ-ellipsoid bounds.
fn scene_box(anchors: &[NeuralAnchor], lambda: f64) -> (Vec3, Vec3) {
    let mut lo = Vec3::repeat(f64::INFINITY);
    let mut hi = Vec3::repeat(f64::NEG_INFINITY);
    for a in anchors {
        let (l, h) = ellipsoid_aabb(a, lambda);
        lo = lo.inf(&l);
        hi = hi.sup(&h);
    }
    (lo, hi)
}

fn ellipsoid_aabb(a: &NeuralAnchor, lambda: f64) -> (Vec3, Vec3) {
    let cov = a.covariance();
    let half = Vec3::from_fn(|i, _| (lambda * cov[(i, i)]).sqrt());
    (a.mean - half, a.mean + half)
}

fn ray_box(ray: &Ray, lo: &Vec3, hi: &Vec3) -> Option<(f64, f64)> {
    let inv = ray.direction.map(|d| 1.0 / d);
    slab(lo, hi, ray, &inv)
}

/// Stratified sampler with a fixed number of samples per ray across the
/// scene box, summing the density of every anchor at every sample.
pub struct UniformSampler {
    frames: Vec<GaussianFrame>,
    opacity: Vec<f64>,
    lo: Vec3,
    hi: Vec3,
    pub samples_per_ray: usize,
}

impl UniformSampler {
    pub fn new(anchors: &[NeuralAnchor], lambda: f64, samples_per_ray: usize) -> Self {
        let (lo, hi) = scene_box(anchors, lambda);
        Self {
            frames: anchors.iter().map(GaussianFrame::new).collect(),
            opacity: anchors.iter().map(NeuralAnchor::opacity).collect(),
            lo,
            hi,
            samples_per_ray,
        }
    }

    /// Positions and densities of the samples along `ray`.
    pub fn sample(&self, ray: &Ray) -> Vec<(f64, f64)> {
        let Some((t0, t1)) = ray_box(ray, &self.lo, &self.hi) else {
            return Vec::new();
        };
        let n = self.samples_per_ray;
        (0..n)
            .map(|i| {
                let t = t0 + (i as f64 + 0.5) / n as f64 * (t1 - t0);
                let x = ray.at(t);
                let density: f64 = self
                    .frames
                    .iter()
                    .zip(&self.opacity)
                    .map(|(f, o)| o * (-0.5 * f.mahalanobis_sq(&x)).exp())
                    .sum();
                (t, density)
            })
            .collect()
    }

    pub fn memory_bytes(&self) -> usize {
        self.frames.len() * (std::mem::size_of::<GaussianFrame>() + 8)
    }
}

/// Occupancy grid of `128³` bits over the scene box, with the anchors
/// touching each occupied voxel. Rays march voxel by voxel and evaluate
/// the listed anchors in occupied voxels.
pub struct GridSampler {
    frames: Vec<GaussianFrame>,
    opacity: Vec<f64>,
    lo: Vec3,
    cell: Vec3,
    hi: Vec3,
    bits: Vec<u64>,
    offsets: Vec<u32>,
    lists: Vec<u32>,
}

impl GridSampler {
    pub fn new(anchors: &[NeuralAnchor], lambda: f64) -> Self {
        const N: usize = GRID_RESOLUTION;
        let (lo, hi) = scene_box(anchors, lambda);
        let cell = (hi - lo).map(|e| e.max(1e-12) / N as f64);
        let voxel = |p: &Vec3| -> [usize; 3] {
            std::array::from_fn(|i| (((p[i] - lo[i]) / cell[i]).floor().max(0.0) as usize).min(N - 1))
        };
        let mut counts = vec![0u32; N * N * N];
        let ranges: Vec<([usize; 3], [usize; 3])> = anchors
            .iter()
            .map(|a| {
                let (l, h) = ellipsoid_aabb(a, lambda);
                (voxel(&l), voxel(&h))
            })
            .collect();
        let each = |r: &([usize; 3], [usize; 3]), f: &mut dyn FnMut(usize)| {
            for z in r.0[2]..=r.1[2] {
                for y in r.0[1]..=r.1[1] {
                    for x in r.0[0]..=r.1[0] {
                        f(x + N * (y + N * z));
                    }
                }
            }
        };
        for r in &ranges {
            each(r, &mut |v| counts[v] += 1);
        }
        let mut offsets = Vec::with_capacity(N * N * N + 1);
        offsets.push(0u32);
        for c in &counts {
            offsets.push(offsets.last().unwrap() + c);
        }
        let mut fill = offsets[..N * N * N].to_vec();
        let mut lists = vec![0u32; *offsets.last().unwrap() as usize];
        for (i, r) in ranges.iter().enumerate() {
            each(r, &mut |v| {
                lists[fill[v] as usize] = i as u32;
                fill[v] += 1;
            });
        }
        let mut bits = vec![0u64; N * N * N / 64];
        for (v, &c) in counts.iter().enumerate() {
            if c > 0 {
                bits[v / 64] |= 1 << (v % 64);
            }
        }
        Self {
            frames: anchors.iter().map(GaussianFrame::new).collect(),
            opacity: anchors.iter().map(NeuralAnchor::opacity).collect(),
            lo,
            cell,
            hi,
            bits,
            offsets,
            lists,
        }
    }

    fn occupied(&self, v: usize) -> bool {
        self.bits[v / 64] >> (v % 64) & 1 == 1
    }

    pub fn occupied_count(&self) -> usize {
        self.bits.iter().map(|b| b.count_ones() as usize).sum()
    }

    /// Bitmask plus per-voxel anchor lists.
    pub fn memory_bytes(&self) -> usize {
        self.bits.len() * 8 + (self.offsets.len() + self.lists.len()) * 4
    }

    pub fn bitmask_bytes(&self) -> usize {
        self.bits.len() * 8
    }

    /// Marches at half-voxel steps through the box; emits `(t, density)`
    /// wherever the density of the voxel's anchors exceeds the threshold.
    pub fn sample(&self, ray: &Ray) -> Vec<(f64, f64)> {
        const N: usize = GRID_RESOLUTION;
        let Some((t0, t1)) = ray_box(ray, &self.lo, &self.hi) else {
            return Vec::new();
        };
        let step = 0.5 * self.cell.min();
        let mut out = Vec::new();
        let mut t = t0 + 0.5 * step;
        while t < t1 {
            let p = ray.at(t);
            let v: [usize; 3] =
                std::array::from_fn(|i| (((p[i] - self.lo[i]) / self.cell[i]).floor().max(0.0) as usize).min(N - 1));
            let idx = v[0] + N * (v[1] + N * v[2]);
            if self.occupied(idx) {
                let list = &self.lists[self.offsets[idx] as usize..self.offsets[idx + 1] as usize];
                let density: f64 = list
                    .iter()
                    .map(|&j| {
                        let j = j as usize;
                        self.opacity[j] * (-0.5 * self.frames[j].mahalanobis_sq(&p)).exp()
                    })
                    .sum();
                if density > GRID_DENSITY_THRESHOLD {
                    out.push((t, density));
                }
            }
            t += step;
        }
        out
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BenchRow {
    pub sampler: SamplerKind,
    pub batch_size: usize,
    pub rays_per_second: f64,
    pub mean_samples_per_ray: f64,
    pub wall_ms: f64,
    pub per_ray_latency_us: f64,
    pub memory_bytes: usize,
}

impl BenchRow {
    pub fn csv(&self) -> String {
        format!(
            "{},{:.3},{:.4},{:.6},{},{:.6},{}",
            self.batch_size,
            self.rays_per_second,
            self.mean_samples_per_ray,
            self.wall_ms,
            self.sampler.name(),
            self.per_ray_latency_us,
            self.memory_bytes
        )
    }
}

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in rows {
        let _ = writeln!(s, "{}", r.csv());
    }
    s
}

#[derive(Clone, Debug, PartialEq)]
pub struct BenchConfig {
    pub batch_sizes: Vec<usize>,
    pub samplers: Vec<SamplerKind>,
    /// Timed runs per row; the fastest is reported.
    pub repeats: usize,
    pub sampler: SamplerConfig,
    /// Largest batch given to the uniform baseline, whose cost grows with
    /// the anchor count.
    pub uniform_max_batch: usize,
    pub seed: u64,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            batch_sizes: (6..=16).map(|e| 1usize << e).collect(),
            samplers: vec![SamplerKind::Ris, SamplerKind::Uniform, SamplerKind::Grid],
            repeats: 3,
            sampler: SamplerConfig::bounded(),
            uniform_max_batch: 1 << 10,
            seed: 0,
        }
    }
}

/// Shuffled pool of rays from a camera framing the scene, so every batch
/// prefix covers the whole view.
pub fn bench_rays(scene: &Scene, count: usize, seed: u64) -> Vec<Ray> {
    let (lo, hi) = scene.bounds().unwrap_or((Vec3::zeros(), Vec3::zeros()));
    let centre = 0.5 * (lo + hi);
    let radius = 0.5 * (hi - lo).norm() + 1e-3;
    let eye = centre + Vec3::new(0.3, 0.4, 1.0).normalize() * (3.0 * radius);
    let cam = Camera::look_at(eye, centre, Vec3::y(), 0.8);
    let side = (count as f64).sqrt().ceil() as usize;
    let mut rays = cam.rays(side, side);
    rays.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    rays.truncate(count);
    for (i, r) in rays.iter_mut().enumerate() {
        r.ray_index = i;
    }
    rays
}

fn time_best<T>(repeats: usize, mut f: impl FnMut() -> Result<T>) -> Result<(f64, T)> {
    let mut best = f64::INFINITY;
    let mut last = None;
    for _ in 0..repeats.max(1) {
        let start = Instant::now();
        let out = f()?;
        best = best.min(start.elapsed().as_secs_f64());
        last = Some(out);
    }
    Ok((best, last.expect("at least one repeat")))
}

fn row(sampler: SamplerKind, batch: usize, secs: f64, samples: usize, memory: usize) -> BenchRow {
    let secs = secs.max(1e-12);
    BenchRow {
        sampler,
        batch_size: batch,
        rays_per_second: batch as f64 / secs,
        mean_samples_per_ray: samples as f64 / batch.max(1) as f64,
        wall_ms: secs * 1e3,
        per_ray_latency_us: secs * 1e6 / batch.max(1) as f64,
        memory_bytes: memory,
    }
}

/// Times every sampler at every batch size. Acceleration structures are
/// built once per sampler and excluded from the timings.
pub fn run_benchmark(scene: &Scene, cfg: &BenchConfig) -> Result<Vec<BenchRow>> {
    if scene.is_empty() {
        return Err(Error::EmptyScene);
    }
    let max = cfg.batch_sizes.iter().copied().max().unwrap_or(0);
    let pool = bench_rays(scene, max, cfg.seed);
    let mut rows = Vec::new();
    for &kind in &cfg.samplers {
        match kind {
            SamplerKind::Ris => {
                let sel = RayIntersectionSelector::new(&scene.anchors, cfg.sampler)?;
                let memory = sel
                    .bvh()
                    .map_or(0, |b| std::mem::size_of_val(b.nodes()) + b.items().len() * 4);
                for &b in &cfg.batch_sizes {
                    let rays = &pool[..b];
                    let (secs, stream) = time_best(cfg.repeats, || sel.sample_batch(rays))?;
                    let samples = stream.groups().map(|g| g.len()).sum();
                    rows.push(row(kind, b, secs, samples, memory));
                }
            }
            SamplerKind::Uniform => {
                let s = UniformSampler::new(&scene.anchors, cfg.sampler.lambda, UNIFORM_SAMPLES);
                for &b in cfg.batch_sizes.iter().filter(|&&b| b <= cfg.uniform_max_batch) {
                    let rays = &pool[..b];
                    let (secs, n) = time_best(cfg.repeats, || {
                        Ok(rays.par_iter().map(|r| s.sample(r).len()).sum::<usize>())
                    })?;
                    rows.push(row(kind, b, secs, n, s.memory_bytes()));
                }
            }
            SamplerKind::Grid => {
                let g = GridSampler::new(&scene.anchors, cfg.sampler.lambda);
                for &b in &cfg.batch_sizes {
                    let rays = &pool[..b];
                    let (secs, n) = time_best(cfg.repeats, || {
                        Ok(rays.par_iter().map(|r| g.sample(r).len()).sum::<usize>())
                    })?;
                    rows.push(row(kind, b, secs, n, g.memory_bytes()));
                }
            }
        }
    }
    Ok(rows)
}
