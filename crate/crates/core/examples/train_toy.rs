//! Fits a perturbed copy of a three-anchor scene to a single 8×8 view of
//! the original.

use iris::field::{FieldConfig, FieldModel};
use iris::render::{render_image, Camera, RenderConfig};
use iris::train::{Dataset, TrainConfig, Trainer};
use iris::{NeuralAnchor, Scene};
use nalgebra::Vector3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn main() -> iris::Result<()> {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let means = [(-0.5, 0.2, 3.0), (0.1, -0.2, 3.4), (0.5, 0.3, 3.8)];
    let anchors = means
        .iter()
        .map(|&(x, y, z)| {
            let mut a = NeuralAnchor::isotropic(Vector3::new(x, y, z), 0.4);
            a.opacity_logit = rng.gen_range(1.0..3.0);
            a.feature = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
            a
        })
        .collect();
    let mut teacher = Scene::new(anchors);
    teacher.baked = true;
    let cfg = FieldConfig {
        hash_grid: None,
        ..Default::default()
    };
    let mut teacher_model = FieldModel::new(&cfg, 1)?;
    teacher_model.geometry.layers.last_mut().unwrap().bias[0] = 2.5;

    let camera = Camera::look_at(Vector3::zeros(), Vector3::z(), Vector3::y(), 0.8);
    let view = render_image(
        &teacher,
        &teacher_model,
        &camera,
        &RenderConfig {
            width: 8,
            height: 8,
            background: [0.0; 3],
            ..Default::default()
        },
    )?;
    let data = Dataset::from_views(&[(camera, view)]);

    let mut student = teacher.clone();
    for a in &mut student.anchors {
        a.feature = std::array::from_fn(|_| rng.gen_range(-1.0..1.0));
        a.opacity_logit = 0.0;
        a.mean += Vector3::new(0.05, -0.05, 0.1);
    }
    let train_cfg = TrainConfig {
        iterations: 400,
        prune: None,
        background: [0.0; 3],
        ..Default::default()
    };
    let mut trainer = Trainer::new(student, FieldModel::new(&cfg, 2)?, train_cfg)?;
    for row in trainer.run(&data)?.iter().filter(|r| r.iter == 1 || r.iter % 50 == 0) {
        println!("iter {:>4}  loss {:.3e}  psnr {:6.2}", row.iter, row.loss, row.psnr);
    }
    Ok(())
}
