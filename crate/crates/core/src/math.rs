//! Gaussian anchor math: whitening transforms, Mahalanobis distances and the
//! closed-form maximum-response point of a Gaussian along a ray.

use nalgebra::{Matrix3, Quaternion, Vector3};

use crate::error::{Error, Result};

pub type Vec3 = Vector3<f64>;
pub type Mat3 = Matrix3<f64>;
pub type Quat = Quaternion<f64>;

/// Width of the per-anchor latent feature.
pub const FEATURE_DIM: usize = 32;

/// Squared Mahalanobis radius covering ~90% of a 3D Gaussian's mass.
pub const LAMBDA_BOUNDED: f64 = 6.25;
/// Squared Mahalanobis radius covering ~99% of a 3D Gaussian's mass.
pub const LAMBDA_UNBOUNDED: f64 = 11.3449;

/// `|v_obj|²` below this is treated as a degenerate direction.
pub const DEGENERATE_DIR_SQ: f64 = 1e-24;

/// An explicit Gaussian primitive carrying a latent feature.
#[derive(Clone, Debug, PartialEq)]
pub struct NeuralAnchor {
    pub mean: Vec3,
    /// Orientation, `(w, x, y, z)`. Normalised before use.
    pub rotation: Quat,
    /// Per-axis standard deviations in world units.
    pub scale: Vec3,
    pub opacity_logit: f64,
    pub feature: [f64; FEATURE_DIM],
    pub confidence: f64,
    /// Accumulated edit rotation used to rotate view directions into the
    /// anchor's deformed frame.
    pub deform_rotation: Quat,
}

impl NeuralAnchor {
    /// Isotropic anchor with identity orientation and a zero feature.
    pub fn isotropic(mean: Vec3, sigma: f64) -> Self {
        Self {
            mean,
            rotation: Quat::identity(),
            scale: Vec3::repeat(sigma),
            opacity_logit: 0.0,
            feature: [0.0; FEATURE_DIM],
            confidence: 1.0,
            deform_rotation: Quat::identity(),
        }
    }

    pub fn rotation_matrix(&self) -> Mat3 {
        quat_to_mat(&self.rotation)
    }

    /// `Σ = R diag(S)² Rᵀ`.
    pub fn covariance(&self) -> Mat3 {
        let r = self.rotation_matrix();
        let s2 = Mat3::from_diagonal(&self.scale.component_mul(&self.scale));
        r * s2 * r.transpose()
    }

    pub fn opacity(&self) -> f64 {
        sigmoid(self.opacity_logit)
    }

    pub fn frame(&self) -> GaussianFrame {
        GaussianFrame::new(self)
    }

    /// Checks the type invariants, returning a description of the first
    /// violation.
    pub fn validate(&self) -> std::result::Result<(), String> {
        let qn = self.rotation.norm();
        if (qn - 1.0).abs() > 1e-6 {
            return Err(format!("rotation quaternion norm {qn} is not 1"));
        }
        let dn = self.deform_rotation.norm();
        if (dn - 1.0).abs() > 1e-6 {
            return Err(format!("deform quaternion norm {dn} is not 1"));
        }
        if self.scale.iter().any(|&s| !(s > 0.0)) {
            return Err(format!("non-positive scale {:?}", self.scale.as_slice()));
        }
        if !(0.0..=1.0).contains(&self.confidence) {
            return Err(format!("confidence {} outside [0,1]", self.confidence));
        }
        Ok(())
    }
}

/// Precomputed whitening transform of one anchor: `x ↦ S⁻¹ Rᵀ (x − μ)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GaussianFrame {
    pub mean: Vec3,
    /// `S⁻¹ Rᵀ`
    pub whiten: Mat3,
}

impl GaussianFrame {
    pub fn new(anchor: &NeuralAnchor) -> Self {
        let inv_s = Mat3::from_diagonal(&anchor.scale.map(|s| 1.0 / s));
        Self {
            mean: anchor.mean,
            whiten: inv_s * anchor.rotation_matrix().transpose(),
        }
    }

    #[inline]
    pub fn to_object(&self, x: &Vec3) -> Vec3 {
        self.whiten * (x - self.mean)
    }

    #[inline]
    pub fn mahalanobis_sq(&self, x: &Vec3) -> f64 {
        self.to_object(x).norm_squared()
    }

    #[inline]
    pub fn object_ray(&self, ray: &Ray) -> ObjectFrameRay {
        ObjectFrameRay {
            origin_obj: self.to_object(&ray.origin),
            dir_obj: self.whiten * ray.direction,
        }
    }

    pub fn t_sample(&self, ray: &Ray) -> Result<f64> {
        self.object_ray(ray).t_sample()
    }

    /// See [`ellipsoid_hit`].
    pub fn ellipsoid_hit(&self, ray: &Ray, lambda: f64) -> Result<Option<f64>> {
        let obj = self.object_ray(ray);
        let t_star = obj.t_sample()?;
        let t = t_star.clamp(ray.t_min, ray.t_max);
        let m = obj.at(t).norm_squared();
        Ok((m <= lambda).then_some(t))
    }
}

/// A ray `O + t·v` restricted to `[t_min, t_max]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Ray {
    pub origin: Vec3,
    pub direction: Vec3,
    pub ray_index: usize,
    pub t_min: f64,
    pub t_max: f64,
}

impl Ray {
    /// Builds a ray over `[0, ∞)`, normalising `direction`.
    pub fn new(origin: Vec3, direction: Vec3, ray_index: usize) -> Self {
        Self {
            origin,
            direction: direction.normalize(),
            ray_index,
            t_min: 0.0,
            t_max: f64::INFINITY,
        }
    }

    pub fn with_range(mut self, t_min: f64, t_max: f64) -> Self {
        self.t_min = t_min;
        self.t_max = t_max;
        self
    }

    #[inline]
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin + self.direction * t
    }
}

/// A ray expressed in the whitened frame of a Gaussian, where the Gaussian
/// is the standard isotropic unit Gaussian.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ObjectFrameRay {
    pub origin_obj: Vec3,
    pub dir_obj: Vec3,
}

impl ObjectFrameRay {
    #[inline]
    pub fn at(&self, t: f64) -> Vec3 {
        self.origin_obj + self.dir_obj * t
    }

    /// Foot of the perpendicular from the Gaussian centre in whitened space.
    #[inline]
    pub fn t_sample(&self) -> Result<f64> {
        let vv = self.dir_obj.norm_squared();
        if !(vv >= DEGENERATE_DIR_SQ) {
            return Err(Error::DegenerateRay);
        }
        Ok(-self.origin_obj.dot(&self.dir_obj) / vv)
    }
}

pub fn to_object_frame(ray: &Ray, anchor: &NeuralAnchor) -> ObjectFrameRay {
    anchor.frame().object_ray(ray)
}

/// `(x−μ)ᵀ Σ⁻¹ (x−μ)`.
pub fn mahalanobis_sq(x: &Vec3, anchor: &NeuralAnchor) -> f64 {
    anchor.frame().mahalanobis_sq(x)
}

/// Ray parameter of the Gaussian's maximum density along the ray.
pub fn t_sample(ray: &Ray, anchor: &NeuralAnchor) -> Result<f64> {
    anchor.frame().t_sample(ray)
}

/// Returns the ray parameter at which the ray meets the anchor's
/// `λ`-ellipsoid, if it does within `[t_min, t_max]`.
///
/// The density along the ray is unimodal, so the closest approach within the
/// range is `t*` clamped to `[t_min, t_max]`. A camera inside the ellipsoid
/// with the peak behind it therefore hits at `t_min`.
pub fn ellipsoid_hit(ray: &Ray, anchor: &NeuralAnchor, lambda: f64) -> Result<Option<f64>> {
    anchor.frame().ellipsoid_hit(ray, lambda)
}

#[inline]
pub fn gaussian_falloff(delta_sq: f64) -> f64 {
    (-0.5 * delta_sq).exp()
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Rotation matrix of `q / |q|`.
pub fn quat_to_mat(q: &Quat) -> Mat3 {
    let n = q.norm();
    let (w, x, y, z) = (q.w / n, q.i / n, q.j / n, q.k / n);
    Mat3::new(
        1.0 - 2.0 * (y * y + z * z),
        2.0 * (x * y - w * z),
        2.0 * (x * z + w * y),
        2.0 * (x * y + w * z),
        1.0 - 2.0 * (x * x + z * z),
        2.0 * (y * z - w * x),
        2.0 * (x * z - w * y),
        2.0 * (y * z + w * x),
        1.0 - 2.0 * (x * x + y * y),
    )
}

/// Back-propagates `dL/dR` (for `R = quat_to_mat(q)`) to the raw,
/// unnormalised quaternion components `(w, x, y, z)`.
pub fn quat_to_mat_backward(q: &Quat, grad_r: &Mat3) -> [f64; 4] {
    let n = q.norm();
    let u = [q.w / n, q.i / n, q.j / n, q.k / n];
    let (w, x, y, z) = (u[0], u[1], u[2], u[3]);
    let g = |r: usize, c: usize| grad_r[(r, c)];

    // Partial derivatives of the matrix formula w.r.t. the unit components.
    let dw = 2.0 * (-z * g(0, 1) + y * g(0, 2) + z * g(1, 0) - x * g(1, 2) - y * g(2, 0) + x * g(2, 1));
    let dx = 2.0
        * (y * g(0, 1) + z * g(0, 2) + y * g(1, 0) - 2.0 * x * g(1, 1) - w * g(1, 2) + z * g(2, 0) + w * g(2, 1)
            - 2.0 * x * g(2, 2));
    let dy = 2.0
        * (-2.0 * y * g(0, 0) + x * g(0, 1) + w * g(0, 2) + x * g(1, 0) + z * g(1, 2) - w * g(2, 0) + z * g(2, 1)
            - 2.0 * y * g(2, 2));
    let dz = 2.0
        * (-2.0 * z * g(0, 0) - w * g(0, 1) + x * g(0, 2) + w * g(1, 0) - 2.0 * z * g(1, 1)
            + y * g(1, 2)
            + x * g(2, 0)
            + y * g(2, 1));
    let du = [dw, dx, dy, dz];

    // Normalisation Jacobian (I − u uᵀ) / |q|.
    let dot: f64 = du.iter().zip(&u).map(|(a, b)| a * b).sum();
    let mut out = [0.0; 4];
    for i in 0..4 {
        out[i] = (du[i] - u[i] * dot) / n;
    }
    out
}

/// Hamilton product `a ∘ b` (apply `b`, then `a`).
pub fn quat_compose(a: &Quat, b: &Quat) -> Quat {
    a * b
}

pub fn quat_normalize(q: &Quat) -> Quat {
    q / q.norm()
}

/// Unit quaternion for a rotation of `angle` radians about `axis`.
pub fn quat_from_axis_angle(axis: &Vec3, angle: f64) -> Quat {
    let a = axis.normalize();
    let (s, c) = (0.5 * angle).sin_cos();
    Quat::new(c, a.x * s, a.y * s, a.z * s)
}

/// Rounds every component through `f32` so the value survives the on-disk
/// single-precision encoding unchanged.
#[inline]
pub fn round_f32(x: f64) -> f64 {
    x as f32 as f64
}
