//! Ray-coherent aggregation: each sample blends the features and opacities
//! of the anchors within a symmetric window of its ray's sorted sample list,
//! weighted by a softmax over Mahalanobis logits. Neighbours farther than
//! `tau_dist` from the sample are masked out entirely.

use std::ops::Range;

use rayon::prelude::*;

use crate::math::{sigmoid, GaussianFrame, NeuralAnchor, Vec3, FEATURE_DIM};
use crate::ris::{IntersectionSample, SampleStream};

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RcaConfig {
    /// `N`; the window holds `2N + 1` samples.
    pub half_window: usize,
    /// Validity radius in world units. `None` selects
    /// [`default_tau_dist`] for the anchor set at hand.
    pub tau_dist: Option<f64>,
    /// `l_kj = −logit_scale · Δ²`.
    pub logit_scale: f64,
}

impl Default for RcaConfig {
    fn default() -> Self {
        Self {
            half_window: 2,
            tau_dist: None,
            logit_scale: 0.5,
        }
    }
}

impl RcaConfig {
    pub fn resolve_tau(&self, anchors: &[NeuralAnchor]) -> f64 {
        self.tau_dist.unwrap_or_else(|| default_tau_dist(anchors))
    }
}

/// Four times the mean over anchors of the largest scale component.
pub fn default_tau_dist(anchors: &[NeuralAnchor]) -> f64 {
    if anchors.is_empty() {
        return 1.0;
    }
    let sum: f64 = anchors.iter().map(|a| a.scale.max()).sum();
    4.0 * sum / anchors.len() as f64
}

/// Warns when a sample on its own anchor's ellipsoid could fall outside
/// `tau_dist` and mask itself out.
pub fn check_tau(anchors: &[NeuralAnchor], lambda: f64, tau_dist: f64) {
    let max_scale = anchors.iter().map(|a| a.scale.max()).fold(0.0, f64::max);
    let needed = lambda.sqrt() * max_scale;
    if tau_dist < needed {
        log::warn!(
            "tau_dist {tau_dist} is below sqrt(lambda) * max scale = {needed}; \
             samples may be masked from their own anchor"
        );
    }
}

/// Per-anchor quantities read by the aggregator.
#[derive(Clone, Debug)]
pub struct AnchorTable {
    pub frames: Vec<GaussianFrame>,
    pub features: Vec<[f64; FEATURE_DIM]>,
    /// `sigmoid(ω)`
    pub opacity: Vec<f64>,
}

impl AnchorTable {
    /// Uses the features stored on the anchors.
    pub fn from_anchors(anchors: &[NeuralAnchor]) -> Self {
        Self::with_features(anchors, anchors.iter().map(|a| a.feature).collect())
    }

    pub fn with_features(anchors: &[NeuralAnchor], features: Vec<[f64; FEATURE_DIM]>) -> Self {
        assert_eq!(anchors.len(), features.len());
        Self {
            frames: anchors.iter().map(GaussianFrame::new).collect(),
            features,
            opacity: anchors.iter().map(|a| sigmoid(a.opacity_logit)).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct AggregatedSample {
    pub ray_index: usize,
    /// Anchor that produced the centre sample.
    pub anchor_index: usize,
    pub t: f64,
    pub position: Vec3,
    pub feature_hat: [f64; FEATURE_DIM],
    pub alpha_hat: f64,
    /// `false` when no neighbour in the window passed the mask.
    pub valid: bool,
}

/// Contribution of one window neighbour to an aggregated sample.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct NeighborWeight {
    pub anchor_index: usize,
    pub valid: bool,
    /// `Δ²(x_k, μ_j, Σ_j)`
    pub delta_sq: f64,
    /// Softmax weight; exactly zero when masked.
    pub weight: f64,
    /// `exp(l_kj)`
    pub falloff: f64,
    /// `exp(l_kj) · sigmoid(ω_j)`
    pub alpha_raw: f64,
}

/// `{k−N, …, k+N}` clipped to `0..group_len`.
pub fn window_neighbors(k: usize, group_len: usize, half_window: usize) -> Range<usize> {
    debug_assert!(k < group_len);
    k.saturating_sub(half_window)..(k + half_window + 1).min(group_len)
}

/// Aggregates sample `k` of one ray's sorted group.
pub fn aggregate_sample(
    k: usize,
    group: &[IntersectionSample],
    table: &AnchorTable,
    cfg: &RcaConfig,
    tau_dist: f64,
) -> (AggregatedSample, Vec<NeighborWeight>) {
    let center = &group[k];
    let x = center.position;
    let mut neighbors: Vec<NeighborWeight> = window_neighbors(k, group.len(), cfg.half_window)
        .map(|j| {
            let s = &group[j];
            let a = s.anchor_index;
            let frame = &table.frames[a];
            let valid = s.ray_index == center.ray_index && (x - frame.mean).norm() < tau_dist;
            let delta_sq = frame.mahalanobis_sq(&x);
            let falloff = (-cfg.logit_scale * delta_sq).exp();
            NeighborWeight {
                anchor_index: a,
                valid,
                delta_sq,
                weight: 0.0,
                falloff,
                alpha_raw: falloff * table.opacity[a],
            }
        })
        .collect();

    let max_logit = neighbors
        .iter()
        .filter(|n| n.valid)
        .map(|n| -cfg.logit_scale * n.delta_sq)
        .fold(f64::NEG_INFINITY, f64::max);

    let mut out = AggregatedSample {
        ray_index: center.ray_index,
        anchor_index: center.anchor_index,
        t: center.t,
        position: x,
        feature_hat: [0.0; FEATURE_DIM],
        alpha_hat: 0.0,
        valid: max_logit.is_finite(),
    };
    if !out.valid {
        return (out, neighbors);
    }

    let mut denom = 0.0;
    for n in neighbors.iter_mut().filter(|n| n.valid) {
        n.weight = (-cfg.logit_scale * n.delta_sq - max_logit).exp();
        denom += n.weight;
    }
    for n in neighbors.iter_mut().filter(|n| n.valid) {
        n.weight /= denom;
        let f = &table.features[n.anchor_index];
        for (o, v) in out.feature_hat.iter_mut().zip(f) {
            *o += n.weight * v;
        }
        out.alpha_hat += n.weight * n.alpha_raw;
    }
    out.alpha_hat = out.alpha_hat.clamp(0.0, 1.0);
    (out, neighbors)
}

/// Aggregates every sample of one ray.
pub fn aggregate_ray(
    group: &[IntersectionSample],
    table: &AnchorTable,
    cfg: &RcaConfig,
    tau_dist: f64,
) -> Vec<AggregatedSample> {
    (0..group.len())
        .map(|k| aggregate_sample(k, group, table, cfg, tau_dist).0)
        .collect()
}

/// Aggregates a whole stream, rays in parallel, preserving stream order.
pub fn aggregate_stream(
    stream: &SampleStream,
    table: &AnchorTable,
    cfg: &RcaConfig,
    tau_dist: f64,
) -> Vec<AggregatedSample> {
    (0..stream.num_rays())
        .into_par_iter()
        .map(|i| aggregate_ray(stream.ray(i), table, cfg, tau_dist))
        .collect::<Vec<_>>()
        .into_iter()
        .flatten()
        .collect()
}

/// Convenience entry point reading features stored on the anchors.
pub fn rca_aggregate(stream: &SampleStream, anchors: &[NeuralAnchor], cfg: &RcaConfig) -> Vec<AggregatedSample> {
    let tau = cfg.resolve_tau(anchors);
    aggregate_stream(stream, &AnchorTable::from_anchors(anchors), cfg, tau)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(ray: usize, anchor: usize, t: f64, position: Vec3) -> IntersectionSample {
        IntersectionSample {
            ray_index: ray,
            anchor_index: anchor,
            t,
            position,
        }
    }

    #[test]
    fn window_clipping() {
        assert_eq!(window_neighbors(0, 1, 2), 0..1);
        assert_eq!(window_neighbors(0, 10, 2), 0..3);
        assert_eq!(window_neighbors(5, 10, 2), 3..8);
        assert_eq!(window_neighbors(9, 10, 2), 7..10);
        assert_eq!(window_neighbors(4, 10, 0), 4..5);
    }

    #[test]
    fn single_sample_on_its_anchor() {
        let mut a = NeuralAnchor::isotropic(Vec3::new(0.0, 0.0, 3.0), 1.0);
        a.feature[0] = 0.7;
        a.feature[31] = -2.0;
        let group = [sample(0, 0, 3.0, a.mean)];
        let table = AnchorTable::from_anchors(std::slice::from_ref(&a));
        let (agg, w) = aggregate_sample(0, &group, &table, &RcaConfig::default(), 10.0);
        assert!(agg.valid);
        assert_eq!(w[0].weight, 1.0);
        assert_eq!(agg.feature_hat, a.feature);
        assert_eq!(agg.alpha_hat, 0.5);
    }

    #[test]
    fn symmetric_neighbors_average() {
        let mut a = NeuralAnchor::isotropic(Vec3::new(-0.5, 0.0, 3.0), 1.0);
        let mut b = NeuralAnchor::isotropic(Vec3::new(0.5, 0.0, 3.0), 1.0);
        a.feature = [1.0; FEATURE_DIM];
        b.feature = [3.0; FEATURE_DIM];
        let x = Vec3::new(0.0, 0.0, 3.0);
        let group = [sample(0, 0, 3.0, x), sample(0, 1, 3.0, x)];
        let table = AnchorTable::from_anchors(&[a, b]);
        let (agg, w) = aggregate_sample(0, &group, &table, &RcaConfig::default(), 10.0);
        assert!((w[0].weight - 0.5).abs() < 1e-15 && (w[1].weight - 0.5).abs() < 1e-15);
        assert!(agg.feature_hat.iter().all(|&f| (f - 2.0).abs() < 1e-12));
    }

    #[test]
    fn all_invalid_window() {
        let a = NeuralAnchor::isotropic(Vec3::new(0.0, 0.0, 3.0), 1.0);
        let group = [sample(0, 0, 3.0, Vec3::new(0.0, 0.0, 10.0))];
        let table = AnchorTable::from_anchors(&[a]);
        let (agg, w) = aggregate_sample(0, &group, &table, &RcaConfig::default(), 1.0);
        assert!(!agg.valid);
        assert_eq!(agg.alpha_hat, 0.0);
        assert_eq!(agg.feature_hat, [0.0; FEATURE_DIM]);
        assert_eq!(w[0].weight, 0.0);
    }

    #[test]
    fn default_tau_is_four_mean_max_scales() {
        let mut a = NeuralAnchor::isotropic(Vec3::zeros(), 1.0);
        a.scale = Vec3::new(0.5, 2.0, 1.0);
        let b = NeuralAnchor::isotropic(Vec3::zeros(), 1.0);
        assert_eq!(default_tau_dist(&[a, b]), 6.0);
    }
}
