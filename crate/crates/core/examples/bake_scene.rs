//! Freezes hash-grid features onto the anchors. The baked scene renders the
//! same, then keeps its appearance when moved outside the grid's volume.

use iris::field::{bake, FieldConfig, FieldModel, HashGridConfig};
use iris::io::{apply_deformation, AnchorTransform, DeformationFile, Selection};
use iris::render::{render_image, Camera, RenderConfig};
use iris::{NeuralAnchor, Scene};
use nalgebra::{Matrix4, Vector3};

fn main() -> iris::Result<()> {
    let anchors = (0..40)
        .map(|i| {
            let a = i as f64 * 0.157;
            let mut n = NeuralAnchor::isotropic(Vector3::new(a.cos(), a.sin(), 0.3 * (3.0 * a).sin()), 0.12);
            n.opacity_logit = 2.0;
            n
        })
        .collect();
    let scene = Scene::new(anchors);
    let model = FieldModel::new(
        &FieldConfig {
            hash_grid: Some(HashGridConfig {
                init_scale: 1.0,
                ..Default::default()
            }),
            ..Default::default()
        },
        4,
    )?;
    let camera = Camera::look_at(Vector3::new(0.0, -1.0, 4.0), Vector3::zeros(), Vector3::y(), 0.8);
    let cfg = RenderConfig {
        width: 32,
        height: 32,
        ..Default::default()
    };
    let live = render_image(&scene, &model, &camera, &cfg)?;

    let mut baked = scene.clone();
    bake(&mut baked, &model)?;
    let frozen = render_image(&baked, &model, &camera, &cfg)?;
    println!("baked vs live render: {:.2e}", live.max_abs_diff(&frozen));

    let shift = Vector3::new(30.0, 0.0, 0.0);
    let far_cam = camera.transformed(&Matrix4::new_translation(&shift));
    let edit = DeformationFile {
        transforms: vec![AnchorTransform {
            translation: [shift.x, shift.y, shift.z],
            ..AnchorTransform::identity(Selection::All)
        }],
    };
    let mut moved = baked.clone();
    apply_deformation(&mut moved, &edit)?;
    println!(
        "moved 30 units, baked: {:.2e}",
        frozen.max_abs_diff(&render_image(&moved, &model, &far_cam, &cfg)?)
    );

    // Without baking, the moved anchors would query the grid outside its cube.
    let mut unbaked = scene.clone();
    for a in &mut unbaked.anchors {
        a.mean += shift;
    }
    println!(
        "moved 30 units, unbaked: {:.2e}",
        live.max_abs_diff(&render_image(&unbaked, &model, &far_cam, &cfg)?)
    );
    Ok(())
}
