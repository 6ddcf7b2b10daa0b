//! Bounding volume hierarchy over the anchors' λ-ellipsoid boxes.

use crate::error::{Error, Result};
use crate::math::{NeuralAnchor, Ray, Vec3};

/// Largest number of anchors stored in one leaf.
pub const MAX_LEAF_SIZE: usize = 4;

/// Axis-aligned box enclosing one anchor's λ-ellipsoid.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProxyBound {
    pub anchor_index: usize,
    pub aabb_min: Vec3,
    pub aabb_max: Vec3,
}

impl ProxyBound {
    pub fn centroid(&self) -> Vec3 {
        (self.aabb_min + self.aabb_max) * 0.5
    }
}

/// Tight box of `{x : Δ²(x) ≤ λ}`: the half-width along world axis `k` is
/// `sqrt(λ Σ_kk)`.
pub fn proxy_bound(anchor_index: usize, anchor: &NeuralAnchor, lambda: f64) -> ProxyBound {
    let r = anchor.rotation_matrix();
    let s2 = anchor.scale.component_mul(&anchor.scale);
    let half = Vec3::from_fn(|k, _| {
        let sigma_kk: f64 = (0..3).map(|j| r[(k, j)] * r[(k, j)] * s2[j]).sum();
        (lambda * sigma_kk).sqrt()
    });
    ProxyBound {
        anchor_index,
        aabb_min: anchor.mean - half,
        aabb_max: anchor.mean + half,
    }
}

pub fn build_proxy_bounds(anchors: &[NeuralAnchor], lambda: f64) -> Vec<ProxyBound> {
    anchors
        .iter()
        .enumerate()
        .map(|(i, a)| proxy_bound(i, a, lambda))
        .collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum NodeKind {
    Leaf { start: u32, count: u32 },
    Inner { left: u32, right: u32 },
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct BvhNode {
    pub min: Vec3,
    pub max: Vec3,
    pub kind: NodeKind,
}

#[derive(Clone, Debug)]
pub struct Bvh {
    nodes: Vec<BvhNode>,
    /// Anchor indices referenced by leaf ranges.
    items: Vec<u32>,
}

impl Bvh {
    /// Median split along the longest axis of the centroid box, leaves of
    /// at most [`MAX_LEAF_SIZE`] anchors. Deterministic for a fixed input
    /// order.
    pub fn build(bounds: &[ProxyBound]) -> Result<Self> {
        if bounds.is_empty() {
            return Err(Error::EmptyScene);
        }
        // Pad by a relative epsilon so points exactly on the ellipsoid
        // surface survive slab-test rounding.
        let padded: Vec<ProxyBound> = bounds
            .iter()
            .map(|b| {
                let pad = (b.aabb_max - b.aabb_min).map(|w| w * 1e-9 + 1e-12);
                ProxyBound {
                    aabb_min: b.aabb_min - pad,
                    aabb_max: b.aabb_max + pad,
                    ..*b
                }
            })
            .collect();
        let mut order: Vec<usize> = (0..padded.len()).collect();
        let mut bvh = Bvh {
            nodes: Vec::with_capacity(2 * padded.len() / MAX_LEAF_SIZE + 1),
            items: Vec::with_capacity(padded.len()),
        };
        bvh.build_node(&padded, &mut order);
        Ok(bvh)
    }

    fn build_node(&mut self, bounds: &[ProxyBound], order: &mut [usize]) -> u32 {
        let (min, max) = order.iter().fold(
            (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY)),
            |(lo, hi), &i| (lo.inf(&bounds[i].aabb_min), hi.sup(&bounds[i].aabb_max)),
        );
        let id = self.nodes.len() as u32;
        if order.len() <= MAX_LEAF_SIZE {
            let start = self.items.len() as u32;
            self.items.extend(order.iter().map(|&i| bounds[i].anchor_index as u32));
            self.nodes.push(BvhNode {
                min,
                max,
                kind: NodeKind::Leaf {
                    start,
                    count: order.len() as u32,
                },
            });
            return id;
        }

        let (cmin, cmax) = order.iter().fold(
            (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY)),
            |(lo, hi), &i| {
                let c = bounds[i].centroid();
                (lo.inf(&c), hi.sup(&c))
            },
        );
        let axis = (cmax - cmin).imax();
        order.sort_by(|&a, &b| {
            bounds[a].centroid()[axis]
                .total_cmp(&bounds[b].centroid()[axis])
                .then(a.cmp(&b))
        });
        let mid = order.len() / 2;

        // Reserve this node's slot; children are appended after it.
        self.nodes.push(BvhNode {
            min,
            max,
            kind: NodeKind::Inner { left: 0, right: 0 },
        });
        let (lo, hi) = order.split_at_mut(mid);
        let left = self.build_node(bounds, lo);
        let right = self.build_node(bounds, hi);
        self.nodes[id as usize].kind = NodeKind::Inner { left, right };
        id
    }

    pub fn nodes(&self) -> &[BvhNode] {
        &self.nodes
    }

    pub fn root(&self) -> &BvhNode {
        &self.nodes[0]
    }

    pub fn leaf_items(&self, start: u32, count: u32) -> &[u32] {
        &self.items[start as usize..(start + count) as usize]
    }

    pub fn depth(&self) -> usize {
        fn rec(bvh: &Bvh, n: u32) -> usize {
            match bvh.nodes[n as usize].kind {
                NodeKind::Leaf { .. } => 0,
                NodeKind::Inner { left, right } => 1 + rec(bvh, left).max(rec(bvh, right)),
            }
        }
        rec(self, 0)
    }

    /// All anchor indices stored in leaves, in leaf order.
    pub fn items(&self) -> &[u32] {
        &self.items
    }

    /// Anchors whose boxes the ray segment `[t_min, t_max]` overlaps.
    pub fn candidates(&self, ray: &Ray) -> Vec<usize> {
        let inv = ray.direction.map(|d| 1.0 / d);
        let mut out = Vec::new();
        let mut stack = vec![0u32];
        while let Some(n) = stack.pop() {
            let node = &self.nodes[n as usize];
            if slab(&node.min, &node.max, ray, &inv).is_none() {
                continue;
            }
            match node.kind {
                NodeKind::Leaf { start, count } => {
                    out.extend(self.leaf_items(start, count).iter().map(|&i| i as usize))
                }
                NodeKind::Inner { left, right } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
        out
    }
}

/// Ray/box overlap interval clipped to the ray's range.
#[inline]
pub(crate) fn slab(min: &Vec3, max: &Vec3, ray: &Ray, inv_dir: &Vec3) -> Option<(f64, f64)> {
    let mut lo = ray.t_min;
    let mut hi = ray.t_max;
    for k in 0..3 {
        let a = (min[k] - ray.origin[k]) * inv_dir[k];
        let b = (max[k] - ray.origin[k]) * inv_dir[k];
        let (near, far) = if a <= b { (a, b) } else { (b, a) };
        // NaN (origin on a slab plane with zero direction) leaves the bound
        // untouched.
        lo = lo.max(near);
        hi = hi.min(far);
    }
    (lo <= hi).then_some((lo, hi))
}
