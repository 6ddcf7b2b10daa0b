//! Ray-coherent aggregation weights along one ray: the window slides over
//! the sorted samples and neighbours beyond `tau_dist` drop out.

use iris::io::{generate_synthetic_scene, SyntheticLayout, SyntheticSpec};
use iris::rca::{aggregate_sample, default_tau_dist, AnchorTable, RcaConfig};
use iris::ris::{RayIntersectionSelector, SamplerConfig};
use iris::Ray;
use nalgebra::Vector3;

fn main() -> iris::Result<()> {
    let (scene, _) = generate_synthetic_scene(&SyntheticSpec {
        seed: 3,
        count: 12,
        layout: SyntheticLayout::TwoCluster,
    })?;
    let sel = RayIntersectionSelector::new(&scene.anchors, SamplerConfig::bounded())?;
    let ray = Ray::new(Vector3::new(-6.0, 0.0, 0.0), Vector3::x(), 0);
    let group = sel.sample(&ray)?;
    let table = AnchorTable::from_anchors(&scene.anchors);
    let cfg = RcaConfig::default();
    let tau = default_tau_dist(&scene.anchors);
    println!("{} samples, tau_dist {tau:.3}", group.len());
    for k in 0..group.len() {
        let (agg, nbs) = aggregate_sample(k, &group, &table, &cfg, tau);
        let w: Vec<String> = nbs
            .iter()
            .map(|n| {
                if n.valid {
                    format!("{}:{:.2}", n.anchor_index, n.weight)
                } else {
                    format!("{}:--", n.anchor_index)
                }
            })
            .collect();
        println!("t {:6.3}  alpha_hat {:.3}  [{}]", agg.t, agg.alpha_hat, w.join(" "));
    }
    Ok(())
}
