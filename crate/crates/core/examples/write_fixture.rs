//! Writes a synthetic scene, a fresh model, its camera manifest and
//! reference renders, ready for the `iris` binary.
//!
//! `cargo run --example write_fixture -- DIR [collinear|two-cluster|random-box] [COUNT]`

use std::path::PathBuf;

use iris::field::{FieldConfig, FieldModel};
use iris::io::{generate_synthetic_scene, save_model, save_scene, write_image, SyntheticLayout, SyntheticSpec};
use iris::render::{render_image, RenderConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let dir = PathBuf::from(args.next().unwrap_or_else(|| "fixture".into()));
    let layout: SyntheticLayout = args.next().as_deref().unwrap_or("random-box").parse()?;
    let count = args.next().map(|c| c.parse()).transpose()?.unwrap_or(200);

    let (scene, cameras) = generate_synthetic_scene(&SyntheticSpec { seed: 0, count, layout })?;
    let model = FieldModel::new(&FieldConfig::default(), 0)?;
    std::fs::create_dir_all(dir.join("images"))?;
    save_scene(&scene, &dir.join("scene.iris"))?;
    save_model(&model, &dir.join("model.irmd"))?;
    cameras.save(&dir.join("cameras.json"))?;
    let cfg = RenderConfig {
        width: 32,
        height: 32,
        ..Default::default()
    };
    for (f, path) in cameras.frames.iter().zip(cameras.image_paths(&dir.join("images"))) {
        write_image(&path, &render_image(&scene, &model, &f.camera, &cfg)?)?;
    }
    println!(
        "{} anchors, {} views written to {}",
        scene.len(),
        cameras.len(),
        dir.display()
    );
    Ok(())
}
