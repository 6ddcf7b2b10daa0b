//! Ray Intersection Selector: gathers, per ray, the maximum-response points
//! of every anchor whose λ-ellipsoid the ray crosses, sorted by depth.
//!
//! Traversal emulates a fixed-size any-hit buffer. Each pass over the BVH
//! keeps the nearest `hit_buffer_capacity` hits beyond the resume key. If
//! the pass overflowed, only the nearest `flush_count` entries are emitted
//! and the next pass resumes after the last emitted key; otherwise the whole
//! buffer is emitted and the ray is exhausted. Passes repeat until the quota
//! is met.

pub mod bvh;
pub mod hit_buffer;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::math::{GaussianFrame, NeuralAnchor, Ray, Vec3, LAMBDA_BOUNDED, LAMBDA_UNBOUNDED};

pub use bvh::{build_proxy_bounds, proxy_bound, Bvh, BvhNode, NodeKind, ProxyBound};
pub use hit_buffer::{HitBuffer, HitKey, HIT_BUFFER_CAPACITY};

use bvh::slab;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SamplerConfig {
    /// Squared Mahalanobis radius of the proxy ellipsoid.
    pub lambda: f64,
    /// Maximum samples emitted per ray.
    pub quota: usize,
    pub hit_buffer_capacity: usize,
    /// Entries emitted from an overflowed buffer before the next pass.
    pub flush_count: usize,
}

impl SamplerConfig {
    pub fn bounded() -> Self {
        Self {
            lambda: LAMBDA_BOUNDED,
            quota: 128,
            hit_buffer_capacity: HIT_BUFFER_CAPACITY,
            flush_count: HIT_BUFFER_CAPACITY / 2,
        }
    }

    pub fn unbounded() -> Self {
        Self {
            lambda: LAMBDA_UNBOUNDED,
            quota: 256,
            ..Self::bounded()
        }
    }

    pub fn with_quota(mut self, quota: usize) -> Self {
        self.quota = quota;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.quota == 0 {
            return Err(Error::Config("quota must be at least 1".into()));
        }
        if !(self.lambda > 0.0) {
            return Err(Error::Config("lambda must be positive".into()));
        }
        if self.hit_buffer_capacity == 0 || self.flush_count == 0 || self.flush_count > self.hit_buffer_capacity {
            return Err(Error::Config("flush count must lie in 1..=hit buffer capacity".into()));
        }
        Ok(())
    }
}

impl Default for SamplerConfig {
    fn default() -> Self {
        Self::bounded()
    }
}

/// One maximum-response sample `x_k = O + t·v` on a ray.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct IntersectionSample {
    pub ray_index: usize,
    pub anchor_index: usize,
    pub t: f64,
    pub position: Vec3,
}

/// Samples of a ray batch, grouped by ray in batch order.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SampleStream {
    pub samples: Vec<IntersectionSample>,
    /// `offsets[i]..offsets[i + 1]` is the group of the `i`-th ray.
    pub offsets: Vec<usize>,
}

impl SampleStream {
    pub fn from_groups(groups: Vec<Vec<IntersectionSample>>) -> Self {
        let mut offsets = Vec::with_capacity(groups.len() + 1);
        offsets.push(0);
        let total = groups.iter().map(Vec::len).sum();
        let mut samples = Vec::with_capacity(total);
        for g in groups {
            samples.extend(g);
            offsets.push(samples.len());
        }
        Self { samples, offsets }
    }

    pub fn num_rays(&self) -> usize {
        self.offsets.len().saturating_sub(1)
    }

    pub fn ray(&self, i: usize) -> &[IntersectionSample] {
        &self.samples[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn groups(&self) -> impl Iterator<Item = &[IntersectionSample]> + '_ {
        (0..self.num_rays()).map(move |i| self.ray(i))
    }

    /// Distinct anchors that received at least one sample, ascending.
    pub fn selected_anchors(&self) -> Vec<usize> {
        let mut v: Vec<usize> = self.samples.iter().map(|s| s.anchor_index).collect();
        v.sort_unstable();
        v.dedup();
        v
    }
}

/// BVH plus whitening frames for one anchor set.
#[derive(Clone, Debug)]
pub struct RayIntersectionSelector {
    bvh: Option<Bvh>,
    frames: Vec<GaussianFrame>,
    cfg: SamplerConfig,
}

impl RayIntersectionSelector {
    /// Builds the acceleration structure. An empty anchor set is accepted
    /// and yields no samples.
    pub fn new(anchors: &[NeuralAnchor], cfg: SamplerConfig) -> Result<Self> {
        cfg.validate()?;
        let frames: Vec<GaussianFrame> = anchors.iter().map(GaussianFrame::new).collect();
        let bvh = if anchors.is_empty() {
            None
        } else {
            Some(Bvh::build(&build_proxy_bounds(anchors, cfg.lambda))?)
        };
        Ok(Self { bvh, frames, cfg })
    }

    pub fn config(&self) -> &SamplerConfig {
        &self.cfg
    }

    pub fn frames(&self) -> &[GaussianFrame] {
        &self.frames
    }

    pub fn bvh(&self) -> Option<&Bvh> {
        self.bvh.as_ref()
    }

    pub fn sample(&self, ray: &Ray) -> Result<Vec<IntersectionSample>> {
        match &self.bvh {
            Some(bvh) => ris_sample(ray, bvh, &self.frames, &self.cfg),
            None => Ok(Vec::new()),
        }
    }

    pub fn sample_batch(&self, rays: &[Ray]) -> Result<SampleStream> {
        match &self.bvh {
            Some(bvh) => ris_sample_batch(rays, bvh, &self.frames, &self.cfg),
            None => Ok(SampleStream::from_groups(vec![Vec::new(); rays.len()])),
        }
    }
}

/// Samples one ray. `frames` must be the anchor set `bvh` was built over.
pub fn ris_sample(
    ray: &Ray,
    bvh: &Bvh,
    frames: &[GaussianFrame],
    cfg: &SamplerConfig,
) -> Result<Vec<IntersectionSample>> {
    let inv = ray.direction.map(|d| 1.0 / d);
    let mut buffer = HitBuffer::new(cfg.hit_buffer_capacity);
    let mut stack = Vec::with_capacity(64);
    let mut out = Vec::new();
    let mut resume: Option<HitKey> = None;

    while out.len() < cfg.quota {
        buffer.clear();
        gather_pass(ray, &inv, bvh, frames, cfg.lambda, resume, &mut buffer, &mut stack)?;
        let exhausted = !buffer.overflowed();
        let take = if exhausted { buffer.len() } else { cfg.flush_count }.min(cfg.quota - out.len());
        out.extend(buffer.entries()[..take].iter().map(|k| IntersectionSample {
            ray_index: ray.ray_index,
            anchor_index: k.anchor_index as usize,
            t: k.t,
            position: ray.at(k.t),
        }));
        if exhausted || take == 0 {
            break;
        }
        resume = Some(buffer.entries()[take - 1]);
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn gather_pass(
    ray: &Ray,
    inv: &Vec3,
    bvh: &Bvh,
    frames: &[GaussianFrame],
    lambda: f64,
    resume: Option<HitKey>,
    buffer: &mut HitBuffer,
    stack: &mut Vec<(u32, f64, f64)>,
) -> Result<()> {
    let nodes = bvh.nodes();
    stack.clear();
    if let Some((lo, hi)) = slab(&nodes[0].min, &nodes[0].max, ray, inv) {
        stack.push((0, lo, hi));
    }
    while let Some((n, lo, hi)) = stack.pop() {
        if resume.is_some_and(|r| hi < r.t) {
            continue;
        }
        if buffer.cutoff().is_some_and(|c| lo > c.t) {
            buffer.mark_overflowed();
            continue;
        }
        match nodes[n as usize].kind {
            NodeKind::Leaf { start, count } => {
                for &i in bvh.leaf_items(start, count) {
                    let Some(t) = frames[i as usize].ellipsoid_hit(ray, lambda)? else {
                        continue;
                    };
                    let key = HitKey { t, anchor_index: i };
                    if resume.is_none_or(|r| key > r) {
                        buffer.insert(key);
                    }
                }
            }
            NodeKind::Inner { left, right } => {
                let l = &nodes[left as usize];
                let r = &nodes[right as usize];
                let ls = slab(&l.min, &l.max, ray, inv);
                let rs = slab(&r.min, &r.max, ray, inv);
                match (ls, rs) {
                    (Some(a), Some(b)) => {
                        // Nearer child on top of the stack.
                        if a.0 <= b.0 {
                            stack.push((right, b.0, b.1));
                            stack.push((left, a.0, a.1));
                        } else {
                            stack.push((left, a.0, a.1));
                            stack.push((right, b.0, b.1));
                        }
                    }
                    (Some(a), None) => stack.push((left, a.0, a.1)),
                    (None, Some(b)) => stack.push((right, b.0, b.1)),
                    (None, None) => {}
                }
            }
        }
    }
    Ok(())
}

/// Samples a batch of rays in parallel; the result is grouped in ray order
/// and identical to per-ray [`ris_sample`] calls.
pub fn ris_sample_batch(
    rays: &[Ray],
    bvh: &Bvh,
    frames: &[GaussianFrame],
    cfg: &SamplerConfig,
) -> Result<SampleStream> {
    let groups = rays
        .par_iter()
        .map(|r| ris_sample(r, bvh, frames, cfg))
        .collect::<Result<Vec<_>>>()?;
    Ok(SampleStream::from_groups(groups))
}
