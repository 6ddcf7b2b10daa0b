mod common;

use common::{check_baked, check_hash, toy};
use iris::train::GradientBundle;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn baked_groups_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for inst in 0..6 {
        let n = rng.gen_range(1..=8);
        let r = rng.gen_range(1..=16);
        let t = toy(&mut rng, n, r, true);
        let e = check_baked(&t, &mut rng, 6);
        println!("instance {inst}: {e:?}");
        assert!(e.non_geometry_max() < 1e-3, "{e:?}");
        assert!(e.geometry_max() < 1e-2, "{e:?}");
    }
}

#[test]
fn hash_entries_match_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(12);
    for _ in 0..4 {
        let n = rng.gen_range(1..=8);
        let r = rng.gen_range(1..=16);
        let t = toy(&mut rng, n, r, false);
        let e = check_hash(&t, &mut rng, 12);
        println!("hash: {e:.3e}");
        assert!(e < 1e-3, "{e}");
    }
}

#[test]
fn single_anchor_single_ray() {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let t = toy(&mut rng, 1, 1, true);
    assert_eq!(t.stream.ray(0).len(), 1);
    let e = check_baked(&t, &mut rng, 20);
    assert!(e.non_geometry_max() < 1e-3, "{e:?}");
    assert!(e.geometry_max() < 1e-2, "{e:?}");
}

#[test]
fn zero_signal_gives_zero_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut t = toy(&mut rng, 5, 12, true);
    t.targets = t.context().render(&t.rays, &t.stream);
    let g = t.gradients();
    let zero = GradientBundle::zeros(&t.scene, &t.model);
    let max_abs = |a: &GradientBundle| {
        let mut m: f64 = 0.0;
        for w in a.geometry_mlp.params().into_iter().chain(a.color_mlp.params()) {
            m = w.iter().fold(m, |x, v| x.max(v.abs()));
        }
        for ag in &a.anchors {
            m = ag.feature.iter().fold(m, |x, v| x.max(v.abs()));
            m = ag.mean.iter().chain(ag.scale.iter()).fold(m, |x, v| x.max(v.abs()));
            m = ag
                .rotation
                .iter()
                .fold(m.max(ag.opacity_logit.abs()), |x, v| x.max(v.abs()));
        }
        m
    };
    assert!(max_abs(&g) <= 1e-12);
    assert_eq!(max_abs(&zero), 0.0);
}
