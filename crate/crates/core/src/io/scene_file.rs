//! Binary scene files.
//!
//! Layout, little-endian throughout:
//!
//! | bytes | field |
//! |---|---|
//! | 4 | magic `IRIS` |
//! | 4 | version `u32` |
//! | 4 | flags `u32`: bit 0 baked, bit 1 BVH stale |
//! | 8 | anchor count `u64` |
//! | 4 | feature dim `u32` (always 32) |
//! | 96 | normalisation, 12 × `f64`, row-major 3×4 |
//!
//! followed by one record per anchor of 48 × `f32`: mean (3), rotation
//! `w x y z` (4), scale (3), opacity logit, confidence, deform rotation
//! `w x y z` (4), feature (32).
//!
//! Values are stored as `f32`, so a scene whose parameters are already
//! `f32`-representable round-trips exactly.

use std::path::Path;

use serde_json::json;

use super::bytes::{Reader, Writer};
use crate::error::{Error, Result};
use crate::math::{NeuralAnchor, Quat, Vec3, FEATURE_DIM};
use crate::scene::{Normalization, Scene};

pub const SCENE_MAGIC: &[u8; 4] = b"IRIS";
pub const SCENE_VERSION: u32 = 1;
pub const SCENE_HEADER_BYTES: usize = 4 + 4 + 4 + 8 + 4 + 12 * 8;
pub const ANCHOR_RECORD_FLOATS: usize = 3 + 4 + 3 + 1 + 1 + 4 + FEATURE_DIM;
pub const ANCHOR_RECORD_BYTES: usize = ANCHOR_RECORD_FLOATS * 4;

const FLAG_BAKED: u32 = 1;
const FLAG_BVH_STALE: u32 = 2;
const QUAT_TOLERANCE: f64 = 1e-4;

pub fn encode_scene(scene: &Scene) -> Vec<u8> {
    let mut w = Writer::default();
    w.buf.reserve(SCENE_HEADER_BYTES + scene.len() * ANCHOR_RECORD_BYTES);
    w.bytes(SCENE_MAGIC);
    w.u32(SCENE_VERSION);
    let mut flags = 0;
    if scene.baked {
        flags |= FLAG_BAKED;
    }
    if scene.bvh_stale {
        flags |= FLAG_BVH_STALE;
    }
    w.u32(flags);
    w.u64(scene.len() as u64);
    w.u32(FEATURE_DIM as u32);
    for v in scene.normalization.matrix {
        w.f64(v);
    }
    for a in &scene.anchors {
        for v in a.mean.iter() {
            w.f32(*v);
        }
        for v in quat_wxyz(&a.rotation) {
            w.f32(v);
        }
        for v in a.scale.iter() {
            w.f32(*v);
        }
        w.f32(a.opacity_logit);
        w.f32(a.confidence);
        for v in quat_wxyz(&a.deform_rotation) {
            w.f32(v);
        }
        for v in a.feature {
            w.f32(v);
        }
    }
    w.buf
}

fn quat_wxyz(q: &Quat) -> [f64; 4] {
    [q.w, q.i, q.j, q.k]
}

fn load_quat(v: &[f64], record: usize, what: &str) -> Quat {
    let q = Quat::new(v[0], v[1], v[2], v[3]);
    let n = q.norm();
    if (n - 1.0).abs() > QUAT_TOLERANCE && n > 0.0 {
        log::warn!("anchor {record}: {what} quaternion has norm {n:.6}, re-normalising");
        return q / n;
    }
    q
}

pub fn decode_scene(bytes: &[u8]) -> Result<Scene> {
    if bytes.len() < 4 || &bytes[..4] != SCENE_MAGIC {
        return Err(Error::NotSceneFile);
    }
    let mut r = Reader::starting_at(bytes, 4);
    let version = r.u32("header")?;
    if version != SCENE_VERSION {
        return Err(Error::format(4, format!("unsupported scene version {version}")));
    }
    let flags = r.u32("header")?;
    if flags & !(FLAG_BAKED | FLAG_BVH_STALE) != 0 {
        return Err(Error::format(8, format!("unknown scene flags {flags:#x}")));
    }
    let count = r.u64("header")?;
    let dim_at = r.pos();
    let dim = r.u32("header")?;
    if dim as usize != FEATURE_DIM {
        return Err(Error::format(
            dim_at,
            format!("feature dim {dim}, expected {FEATURE_DIM}"),
        ));
    }
    let mut matrix = [0.0; 12];
    for m in &mut matrix {
        *m = r.f64("header")?;
    }

    let body = r.remaining();
    let expected = (count as u128) * ANCHOR_RECORD_BYTES as u128;
    if (body as u128) < expected {
        let complete = body / ANCHOR_RECORD_BYTES;
        return Err(Error::format(
            SCENE_HEADER_BYTES + complete * ANCHOR_RECORD_BYTES,
            format!("truncated anchor record {complete} of {count}"),
        ));
    }
    if (body as u128) > expected {
        return Err(Error::format(
            SCENE_HEADER_BYTES + expected as usize,
            format!(
                "{} trailing bytes after {count} anchor records",
                body as u128 - expected
            ),
        ));
    }

    let mut anchors = Vec::with_capacity(count as usize);
    for i in 0..count as usize {
        let v = r.f32_vec(ANCHOR_RECORD_FLOATS, "anchor record")?;
        let mut feature = [0.0; FEATURE_DIM];
        feature.copy_from_slice(&v[16..]);
        anchors.push(NeuralAnchor {
            mean: Vec3::new(v[0], v[1], v[2]),
            rotation: load_quat(&v[3..7], i, "rotation"),
            scale: Vec3::new(v[7], v[8], v[9]),
            opacity_logit: v[10],
            confidence: v[11],
            deform_rotation: load_quat(&v[12..16], i, "deform"),
            feature,
        });
    }
    r.finish()?;
    Ok(Scene {
        anchors,
        normalization: Normalization { matrix },
        baked: flags & FLAG_BAKED != 0,
        bvh_stale: flags & FLAG_BVH_STALE != 0,
    })
}

pub fn save_scene(scene: &Scene, path: &Path) -> Result<()> {
    std::fs::write(path, encode_scene(scene)).map_err(|e| Error::io(path, e))
}

pub fn load_scene(path: &Path) -> Result<Scene> {
    decode_scene(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}

/// Human-readable dump for debugging. Not meant to be read back.
pub fn scene_to_json(scene: &Scene) -> serde_json::Value {
    let anchors: Vec<_> = scene
        .anchors
        .iter()
        .map(|a| {
            json!({
                "mean": a.mean.as_slice(),
                "rotation": quat_wxyz(&a.rotation),
                "scale": a.scale.as_slice(),
                "opacity": a.opacity(),
                "confidence": a.confidence,
                "deform_rotation": quat_wxyz(&a.deform_rotation),
                "feature": a.feature.as_slice(),
            })
        })
        .collect();
    json!({
        "baked": scene.baked,
        "bvh_stale": scene.bvh_stale,
        "normalization": scene.normalization.matrix.as_slice(),
        "anchors": anchors,
    })
}
