use iris::error::Error;
use iris::field::{FieldConfig, FieldModel, ViewEncoding};
use iris::image::Rgb8Image;
use iris::io::{
    apply_deformation, decode_model, decode_ppm, decode_scene, encode_model, encode_ppm, encode_scene,
    generate_synthetic_scene, load_scene, save_scene, AnchorTransform, CameraSet, DeformationFile, Selection,
    SyntheticLayout, SyntheticSpec,
};
use iris::math::{quat_compose, quat_from_axis_angle, quat_to_mat, Quat, Vec3};
use iris::Scene;
use proptest::prelude::*;

fn fixture(count: usize) -> Scene {
    generate_synthetic_scene(&SyntheticSpec {
        seed: 4,
        count,
        layout: SyntheticLayout::RandomBox,
    })
    .unwrap()
    .0
}

fn arr(q: &Quat) -> [f64; 4] {
    [q.w, q.i, q.j, q.k]
}

fn max_gap(a: &Scene, b: &Scene) -> f64 {
    let mut m: f64 = 0.0;
    for (x, y) in a.anchors.iter().zip(&b.anchors) {
        m = m.max((x.mean - y.mean).abs().max());
        m = m.max((x.scale - y.scale).abs().max());
        m = m.max((quat_to_mat(&x.rotation) - quat_to_mat(&y.rotation)).abs().max());
        m = m.max(
            (quat_to_mat(&x.deform_rotation) - quat_to_mat(&y.deform_rotation))
                .abs()
                .max(),
        );
    }
    m
}

fn one(t: AnchorTransform) -> DeformationFile {
    DeformationFile { transforms: vec![t] }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn ppm_round_trip(w in 1usize..20, h in 1usize..20, seed in any::<u64>()) {
        let data: Vec<u8> = (0..w * h * 3).map(|i| (seed.wrapping_mul(2654435761).wrapping_add(i as u64 * 40503) >> 7) as u8).collect();
        let img = Rgb8Image { width: w, height: h, data };
        prop_assert_eq!(decode_ppm(&encode_ppm(&img)).unwrap(), img);
    }

    #[test]
    fn camera_manifest_round_trip(angle in 0.1..3.0f64, axis in (-1.0..1.0f64, -1.0..1.0f64, 0.1..1.0f64), t in (-5.0..5.0f64, -5.0..5.0f64, -5.0..5.0f64), fov in 0.2..2.0f64) {
        let q = quat_from_axis_angle(&Vec3::new(axis.0, axis.1, axis.2), angle);
        let mut c2w = quat_to_mat(&q).to_homogeneous();
        c2w[(0, 3)] = t.0;
        c2w[(1, 3)] = t.1;
        c2w[(2, 3)] = t.2;
        let set = CameraSet {
            frames: vec![iris::io::CameraFrame {
                camera: iris::render::Camera::new(c2w, fov),
                file_path: "./train/r_0".into(),
            }],
        };
        let back = CameraSet::from_json(&set.to_json()).unwrap();
        prop_assert_eq!(back, set);
    }

    #[test]
    fn translations_add(a in (-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64), b in (-3.0..3.0f64, -3.0..3.0f64, -3.0..3.0f64)) {
        let base = fixture(20);
        let tr = |v: (f64, f64, f64)| AnchorTransform { translation: [v.0, v.1, v.2], ..AnchorTransform::identity(Selection::All) };
        let mut two = base.clone();
        apply_deformation(&mut two, &DeformationFile { transforms: vec![tr(a), tr(b)] }).unwrap();
        let mut once = base.clone();
        apply_deformation(&mut once, &one(tr((a.0 + b.0, a.1 + b.1, a.2 + b.2)))).unwrap();
        prop_assert!(max_gap(&two, &once) <= 1e-12);
    }

    #[test]
    fn rotations_compose(a1 in 0.0..3.0f64, a2 in 0.0..3.0f64, s1 in 0.5..2.0f64, s2 in 0.5..2.0f64) {
        let base = fixture(20);
        let q1 = quat_from_axis_angle(&Vec3::new(1.0, 2.0, -0.5), a1);
        let q2 = quat_from_axis_angle(&Vec3::new(-0.3, 0.2, 1.0), a2);
        let rs = |q: &Quat, s: f64| AnchorTransform { rotation: arr(q), scale: s, ..AnchorTransform::identity(Selection::All) };
        let mut two = base.clone();
        apply_deformation(&mut two, &DeformationFile { transforms: vec![rs(&q1, s1), rs(&q2, s2)] }).unwrap();
        let mut once = base.clone();
        apply_deformation(&mut once, &one(rs(&quat_compose(&q2, &q1), s1 * s2))).unwrap();
        prop_assert!(max_gap(&two, &once) <= 1e-12);
    }
}

#[test]
fn rigid_edit_then_inverse_restores_the_scene() {
    let base = fixture(50);
    let q = quat_from_axis_angle(&Vec3::new(0.2, -1.0, 0.4), 1.1);
    let t = Vec3::new(0.5, -2.0, 3.0);
    let mut s = base.clone();
    apply_deformation(
        &mut s,
        &one(AnchorTransform {
            rotation: arr(&q),
            translation: [t.x, t.y, t.z],
            scale: 2.0,
            ..AnchorTransform::identity(Selection::All)
        }),
    )
    .unwrap();
    let qi = q.conjugate();
    let back_t = -(quat_to_mat(&qi) * t) / 2.0;
    apply_deformation(
        &mut s,
        &one(AnchorTransform {
            rotation: arr(&qi),
            translation: [back_t.x, back_t.y, back_t.z],
            scale: 0.5,
            ..AnchorTransform::identity(Selection::All)
        }),
    )
    .unwrap();
    assert!(max_gap(&s, &base) <= 1e-12);
    assert!(s.bvh_stale);
    for (a, b) in s.anchors.iter().zip(&base.anchors) {
        assert_eq!(a.feature, b.feature);
        assert_eq!(a.opacity_logit, b.opacity_logit);
    }
}

#[test]
fn ranged_edits_leave_other_anchors_alone() {
    let base = fixture(10);
    let mut s = base.clone();
    apply_deformation(
        &mut s,
        &one(AnchorTransform {
            translation: [1.0, 0.0, 0.0],
            ..AnchorTransform::identity(Selection::Range([3, 6]))
        }),
    )
    .unwrap();
    for (i, (a, b)) in s.anchors.iter().zip(&base.anchors).enumerate() {
        let moved = (3..6).contains(&i);
        assert_eq!(a.mean != b.mean, moved, "anchor {i}");
    }
}

#[test]
fn deformation_json_defaults() {
    let d = DeformationFile::from_json(
        r#"{"transforms": [{"selection": "all"}, {"selection": {"range": [0, 2]}, "translation": [1, 2, 3], "scale": 2}]}"#,
    )
    .unwrap();
    assert_eq!(d.transforms[0], AnchorTransform::identity(Selection::All));
    assert_eq!(d.transforms[1].selection, Selection::Range([0, 2]));
    assert_eq!(d.transforms[1].rotation, [1.0, 0.0, 0.0, 0.0]);
    assert_eq!(DeformationFile::from_json(&d.to_json()).unwrap(), d);
    for bad in [
        r#"{"transforms": [{"selection": "all", "rotation": [2, 0, 0, 0]}]}"#,
        r#"{"transforms": [{"selection": "all", "scale": 0}]}"#,
        r#"{"transforms": [{"selection": "some"}]}"#,
    ] {
        assert!(DeformationFile::from_json(bad).is_err(), "{bad}");
    }
}

#[test]
fn camera_manifest_validation() {
    let good = r#"{"camera_angle_x": 0.69, "frames": [{"file_path": "./train/r_0",
        "transform_matrix": [[1,0,0,0],[0,1,0,0],[0,0,1,4],[0,0,0,1]]}]}"#;
    let set = CameraSet::from_json(good).unwrap();
    assert_eq!(set.len(), 1);
    assert_eq!(set.frames[0].camera.origin(), Vec3::new(0.0, 0.0, 4.0));
    assert_eq!(
        set.image_paths(std::path::Path::new("imgs")),
        vec![std::path::PathBuf::from("imgs/r_0.ppm")]
    );
    let skewed = good.replace("[1,0,0,0],[0,1,0,0]", "[1,0.2,0,0],[0,1,0,0]");
    assert!(matches!(CameraSet::from_json(&skewed), Err(Error::InvalidCamera(_))));
    let wide = good.replace("0.69", "3.5");
    assert!(matches!(CameraSet::from_json(&wide), Err(Error::InvalidCamera(_))));
    assert!(matches!(CameraSet::from_json("{"), Err(Error::Json(_))));
}

#[test]
fn ppm_header_variants() {
    let img = decode_ppm(b"P6\n# made by hand\n2 1\n255\n\x00\x01\x02\x03\x04\x05").unwrap();
    assert_eq!((img.width, img.height), (2, 1));
    assert_eq!(img.data, vec![0, 1, 2, 3, 4, 5]);
    assert!(matches!(
        decode_ppm(b"P6 1 1 65535\n\0\0\0\0\0\0"),
        Err(Error::UnsupportedMaxval(65535))
    ));
    assert!(matches!(
        decode_ppm(b"P3 1 1 255\n0 0 0"),
        Err(Error::Format { offset: 0, .. })
    ));
    assert!(matches!(decode_ppm(b"P6 2 2 255\n\0\0\0"), Err(Error::Format { .. })));
}

#[test]
fn scene_files_on_disk() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("s.iris");
    let s = fixture(7);
    save_scene(&s, &path).unwrap();
    assert_eq!(load_scene(&path).unwrap(), s);
    let err = load_scene(&dir.path().join("nope.iris")).unwrap_err();
    assert!(matches!(err, Error::Io { .. }));
    assert!(err.to_string().contains("nope.iris"));

    let empty = Scene::new(Vec::new());
    assert_eq!(decode_scene(&encode_scene(&empty)).unwrap(), empty);
}

#[test]
fn unit_quaternions_are_restored_on_load() {
    let mut s = fixture(3);
    s.anchors[1].rotation = Quat::new(2.0, 0.0, 0.0, 0.0);
    let back = decode_scene(&encode_scene(&s)).unwrap();
    assert_eq!(back.anchors[1].rotation, Quat::identity());
    assert_eq!(back.anchors[0], s.anchors[0]);
}

#[test]
fn model_variants_round_trip() {
    for enc in [ViewEncoding::Sh { degree: 4 }, ViewEncoding::Sh { degree: 2 }] {
        for grid in [true, false] {
            let cfg = FieldConfig {
                view_encoding: enc,
                hash_grid: grid.then(Default::default),
            };
            let m = FieldModel::new(&cfg, 8).unwrap();
            let bytes = encode_model(&m);
            let back = decode_model(&bytes).unwrap();
            assert_eq!(encode_model(&back), bytes);
            assert_eq!(back.hash_grid.is_some(), grid);
            assert_eq!(back.view_encoding, enc);
        }
    }
    let m = FieldModel::new(&FieldConfig::default(), 8).unwrap();
    let mut bytes = encode_model(&m);
    bytes[4] = 7;
    assert!(matches!(decode_model(&bytes), Err(Error::Format { offset: 4, .. })));
    assert!(matches!(decode_model(b"IRIS"), Err(Error::NotModelFile)));
}
