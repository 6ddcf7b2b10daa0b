mod common;

use iris::error::Error;
use iris::field::{FieldConfig, FieldModel};
use iris::image::Image;
use iris::math::Vec3;
use iris::render::Camera;
use iris::train::{Dataset, LearningRates, PruneConfig, TrainConfig, Trainer};
use iris::{NeuralAnchor, Scene};
use nalgebra::{Matrix4, Vector4};

fn forward_camera() -> Camera {
    Camera::new(Matrix4::from_diagonal(&Vector4::new(-1.0, 1.0, -1.0, 1.0)), 0.8)
}

fn quick_cfg() -> TrainConfig {
    TrainConfig {
        prune: None,
        background: [0.0; 3],
        iterations: 10,
        ..Default::default()
    }
}

#[test]
fn same_seed_gives_identical_runs_at_any_thread_count() {
    let runs: Vec<_> = [Some(1), Some(1), Some(3), None]
        .into_iter()
        .map(|threads| {
            let fx = common::overfit_fixture(5);
            let cfg = TrainConfig {
                batch_size: 40,
                threads,
                seed: 9,
                ..quick_cfg()
            };
            let mut t = Trainer::new(fx.student, fx.model, cfg).unwrap();
            t.run(&fx.data).unwrap();
            let losses: Vec<u64> = t.log.iter().map(|r| r.loss.to_bits()).collect();
            (losses, t.scene, t.model)
        })
        .collect();
    for r in &runs[1..] {
        assert_eq!(r.0, runs[0].0);
        assert_eq!(r.1, runs[0].1);
        assert_eq!(r.2, runs[0].2);
    }
}

#[test]
fn loss_drops_on_the_toy_view() {
    let fx = common::overfit_fixture(2);
    let mut t = Trainer::new(
        fx.student,
        fx.model,
        TrainConfig {
            iterations: 60,
            ..quick_cfg()
        },
    )
    .unwrap();
    let log = t.run(&fx.data).unwrap();
    assert_eq!(log.len(), 60);
    assert_eq!(log[59].iter, 60);
    assert!(log[59].loss < 0.25 * log[0].loss, "{} → {}", log[0].loss, log[59].loss);
}

#[test]
fn baked_training_leaves_the_hash_grid_alone() {
    let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(3);
    let toy = common::toy(&mut rng, 4, 9, true);
    let data = Dataset {
        rays: toy.rays.clone(),
        targets: toy.targets.clone(),
    };
    let cfg = TrainConfig {
        iterations: 3,
        ..quick_cfg()
    };
    let mut t = Trainer::new(toy.scene.clone(), toy.model.clone(), cfg).unwrap();
    t.run(&data).unwrap();
    assert!(t.model.hash_grid.as_ref().unwrap().written_entries().is_empty());
    assert_ne!(t.scene.anchors[0].feature, toy.scene.anchors[0].feature);

    let mut unbaked = toy.scene.clone();
    unbaked.baked = false;
    let mut t = Trainer::new(unbaked.clone(), toy.model.clone(), cfg).unwrap();
    t.run(&data).unwrap();
    assert!(!t.model.hash_grid.as_ref().unwrap().written_entries().is_empty());
    for (a, b) in t.scene.anchors.iter().zip(&unbaked.anchors) {
        assert_eq!(a.feature, b.feature);
    }
}

#[test]
fn unseen_anchors_are_pruned_on_schedule() {
    // One anchor in view, one behind the camera.
    let mut front = NeuralAnchor::isotropic(Vec3::new(0.0, 0.0, 3.0), 0.5);
    front.opacity_logit = 2.0;
    let hidden = NeuralAnchor::isotropic(Vec3::new(0.0, 0.0, -3.0), 0.5);
    let mut scene = Scene::new(vec![front, hidden]);
    scene.baked = true;
    let model = FieldModel::new(
        &FieldConfig {
            hash_grid: None,
            ..Default::default()
        },
        1,
    )
    .unwrap();
    let view = Image::filled(4, 4, [0.3, 0.6, 0.2]);
    let data = Dataset::from_views(&[(forward_camera(), view)]);
    let prune = PruneConfig::default();
    let cfg = TrainConfig {
        prune: Some(prune),
        iterations: 930,
        lr: LearningRates {
            geometry: 1e-6,
            ..Default::default()
        },
        ..quick_cfg()
    };
    let mut t = Trainer::new(scene, model, cfg).unwrap();
    let log = t.run(&data).unwrap();
    let first_drop = log.iter().find(|r| r.num_anchors == 1).map(|r| r.iter);
    assert_eq!(first_drop, Some(prune.survival_iterations() as usize));
    assert!(log.iter().all(|r| r.num_anchors >= 1));
    assert_eq!(t.scene.anchors.len(), 1);
    assert!(t.scene.anchors[0].mean.z > 0.0);
    assert!(t.scene.bvh_stale);
}

#[test]
fn constructor_rejects_bad_setups() {
    let fx = common::overfit_fixture(1);
    let mut unbaked = fx.student.clone();
    unbaked.baked = false;
    assert!(matches!(
        Trainer::new(unbaked, fx.model.clone(), quick_cfg()),
        Err(Error::MissingHashGrid)
    ));
    let bad = TrainConfig {
        lr: LearningRates {
            mlp: 0.0,
            ..Default::default()
        },
        ..quick_cfg()
    };
    assert!(matches!(
        Trainer::new(fx.student.clone(), fx.model.clone(), bad),
        Err(Error::Config(_))
    ));
    let bad = TrainConfig {
        batch_size: 0,
        ..quick_cfg()
    };
    assert!(matches!(Trainer::new(fx.student, fx.model, bad), Err(Error::Config(_))));
}

#[test]
fn learning_rates_decay_to_the_final_ratio() {
    let fx = common::overfit_fixture(1);
    let cfg = TrainConfig {
        iterations: 4,
        lr_final_ratio: 0.01,
        ..quick_cfg()
    };
    let mut t = Trainer::new(fx.student, fx.model, cfg).unwrap();
    let base = cfg.lr;
    assert_eq!(t.learning_rates(), base);
    t.step(&fx.data).unwrap();
    t.step(&fx.data).unwrap();
    let mid = t.learning_rates();
    assert!((mid.mlp - base.mlp * 0.1).abs() < 1e-15);
    t.run(&fx.data).unwrap();
    let end = t.learning_rates();
    assert!((end.opacity - base.opacity * 0.01).abs() < 1e-15);
}
