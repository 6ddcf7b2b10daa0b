//! Renders three overlapping anchors at different depths; nearer anchors
//! hide the ones behind them.
//!
//! `cargo run --example render_fixture -- out.ppm`

use iris::field::{FieldConfig, FieldModel};
use iris::io::write_image;
use iris::math::quat_from_axis_angle;
use iris::render::{Camera, RenderConfig, Renderer};
use iris::{NeuralAnchor, Scene};
use nalgebra::Vector3;

fn main() -> iris::Result<()> {
    let out = std::env::args().nth(1).unwrap_or_else(|| "three_anchors.ppm".into());
    let anchors = [(-0.5, 3.0, 0.9), (0.0, 4.5, -0.4), (0.6, 6.0, 0.2)]
        .iter()
        .enumerate()
        .map(|(i, &(x, z, f))| {
            let mut a = NeuralAnchor::isotropic(Vector3::new(x, 0.0, z), 0.25);
            a.scale.y = 0.35;
            a.rotation = quat_from_axis_angle(&Vector3::z(), 0.3 * i as f64);
            a.opacity_logit = 3.0;
            a.feature = std::array::from_fn(|c| f * ((c + i) as f64 * 0.7).sin());
            a
        })
        .collect();
    let mut scene = Scene::new(anchors);
    scene.baked = true;

    let mut model = FieldModel::new(
        &FieldConfig {
            hash_grid: None,
            ..Default::default()
        },
        0,
    )?;
    // Raise the density bias so the anchors read as solid.
    model.geometry.layers.last_mut().unwrap().bias[0] = 4.0;

    let camera = Camera::look_at(Vector3::zeros(), Vector3::z(), Vector3::y(), 0.8);
    let cfg = RenderConfig {
        width: 96,
        height: 64,
        ..Default::default()
    };
    let renderer = Renderer::new(&scene, &model, cfg)?;
    let img = renderer.render(&camera)?;
    write_image(std::path::Path::new(&out), &img)?;
    let covered = img.pixels.iter().filter(|p| p.iter().any(|&c| c < 0.999)).count();
    println!("wrote {out}: {covered} of {} pixels covered", img.pixels.len());
    Ok(())
}
