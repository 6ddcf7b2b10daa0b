//! The persisted anchor set and the frozen mapping into hash-grid space.

use crate::math::{NeuralAnchor, Vec3};

/// Affine map `p = A x + b` from world space into the hash grid's unit
/// cube, stored row-major as `[A | b]` (3×4).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Normalization {
    pub matrix: [f64; 12],
}

impl Default for Normalization {
    fn default() -> Self {
        Self::identity()
    }
}

impl Normalization {
    pub fn identity() -> Self {
        Self {
            matrix: [1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0],
        }
    }

    /// Maps the bounding box of the anchor means, grown by 5% of its
    /// largest extent on each side, into `[0, 1]³` with a uniform scale.
    pub fn fit(anchors: &[NeuralAnchor]) -> Self {
        if anchors.is_empty() {
            return Self::identity();
        }
        let (lo, hi) = anchors.iter().fold(
            (Vec3::repeat(f64::INFINITY), Vec3::repeat(f64::NEG_INFINITY)),
            |(lo, hi), a| (lo.inf(&a.mean), hi.sup(&a.mean)),
        );
        let max_scale = anchors.iter().map(|a| a.scale.max()).fold(0.0, f64::max);
        let extent = (hi - lo).max().max(2.0 * max_scale).max(1e-6);
        let s = 1.0 / (1.1 * extent);
        let c = (lo + hi) * 0.5;
        Self {
            matrix: [
                s,
                0.0,
                0.0,
                0.5 - s * c.x,
                0.0,
                s,
                0.0,
                0.5 - s * c.y,
                0.0,
                0.0,
                s,
                0.5 - s * c.z,
            ],
        }
    }

    pub fn apply(&self, x: &Vec3) -> Vec3 {
        let m = &self.matrix;
        Vec3::new(
            m[0] * x.x + m[1] * x.y + m[2] * x.z + m[3],
            m[4] * x.x + m[5] * x.y + m[6] * x.z + m[7],
            m[8] * x.x + m[9] * x.y + m[10] * x.z + m[11],
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Scene {
    pub anchors: Vec<NeuralAnchor>,
    pub normalization: Normalization,
    /// Features live on the anchors rather than in the hash grid.
    pub baked: bool,
    /// Geometry changed since the last acceleration-structure build.
    pub bvh_stale: bool,
}

impl Scene {
    /// New unbaked scene with the normalisation fitted to `anchors`.
    pub fn new(anchors: Vec<NeuralAnchor>) -> Self {
        let normalization = Normalization::fit(&anchors);
        Self {
            anchors,
            normalization,
            baked: false,
            bvh_stale: true,
        }
    }

    pub fn len(&self) -> usize {
        self.anchors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.anchors.is_empty()
    }

    /// World-space box of the anchor means, if any.
    pub fn bounds(&self) -> Option<(Vec3, Vec3)> {
        let first = self.anchors.first()?.mean;
        Some(
            self.anchors
                .iter()
                .fold((first, first), |(lo, hi), a| (lo.inf(&a.mean), hi.sup(&a.mean))),
        )
    }
}
