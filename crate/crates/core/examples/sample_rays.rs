//! Per-ray intersection samples from the BVH-backed selector, sorted by
//! depth and cut at the quota.

use iris::io::{generate_synthetic_scene, SyntheticLayout, SyntheticSpec};
use iris::ris::{RayIntersectionSelector, SamplerConfig};
use iris::Ray;
use nalgebra::Vector3;

fn main() -> iris::Result<()> {
    let (scene, _) = generate_synthetic_scene(&SyntheticSpec {
        seed: 7,
        count: 3,
        layout: SyntheticLayout::Collinear,
    })?;
    let ray = Ray::new(Vector3::zeros(), Vector3::z(), 0);
    for quota in [128, 2, 1] {
        let sel = RayIntersectionSelector::new(&scene.anchors, SamplerConfig::bounded().with_quota(quota))?;
        let samples = sel.sample(&ray)?;
        let ts: Vec<String> = samples
            .iter()
            .map(|s| format!("{}@{:.1}", s.anchor_index, s.t))
            .collect();
        println!("quota {quota:>3}: {}", ts.join(" "));
    }

    let (dense, cams) = generate_synthetic_scene(&SyntheticSpec {
        seed: 1,
        count: 5000,
        layout: SyntheticLayout::RandomBox,
    })?;
    let sel = RayIntersectionSelector::new(&dense.anchors, SamplerConfig::bounded())?;
    let rays = cams.frames[0].camera.rays(32, 32);
    let stream = sel.sample_batch(&rays)?;
    let counts: Vec<usize> = stream.groups().map(|g| g.len()).collect();
    println!(
        "5000 anchors, 1024 rays: {} samples, at most {} on one ray, BVH depth {}",
        stream.samples.len(),
        counts.iter().max().unwrap_or(&0),
        sel.bvh().map_or(0, |b| b.depth())
    );
    Ok(())
}
