//! Closed-form maximum-response point of a ray through one anisotropic
//! Gaussian, and the λ-ellipsoid hit test built on it.

use iris::math::{ellipsoid_hit, mahalanobis_sq, quat_from_axis_angle, t_sample, LAMBDA_BOUNDED, LAMBDA_UNBOUNDED};
use iris::{NeuralAnchor, Ray};
use nalgebra::Vector3;

fn main() -> iris::Result<()> {
    let mut anchor = NeuralAnchor::isotropic(Vector3::new(0.3, 0.0, 4.0), 1.0);
    anchor.scale = Vector3::new(0.8, 0.2, 0.4);
    anchor.rotation = quat_from_axis_angle(&Vector3::new(0.0, 1.0, 1.0), 0.6);

    for dx in [0.0, 0.1, 0.25, 0.4] {
        let ray = Ray::new(Vector3::zeros(), Vector3::new(dx, 0.0, 1.0), 0);
        let t = t_sample(&ray, &anchor)?;
        let m = mahalanobis_sq(&ray.at(t), &anchor);
        let bounded = ellipsoid_hit(&ray, &anchor, LAMBDA_BOUNDED)?;
        let unbounded = ellipsoid_hit(&ray, &anchor, LAMBDA_UNBOUNDED)?;
        println!(
            "dx {dx:>4}: t* = {t:.4}, Δ² = {m:.3}, hit(6.25) = {}, hit(11.34) = {}",
            bounded.is_some(),
            unbounded.is_some()
        );
    }
    Ok(())
}
