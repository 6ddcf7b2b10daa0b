//! Binary model files.
//!
//! Layout, little-endian throughout:
//!
//! ```text
//! magic "IRMD" | version u32 | seed u64
//! view encoding id u32 | view encoding parameter u32
//! for the geometry head, then the colour head:
//!     layer count u32, then per layer: in u32 | out u32 | activation id u32
//! has hash grid u32 (0 or 1)
//! if present: levels u32 | n_min u32 | n_max u32 | features/level u32
//!             | table size u32 | init scale f64 | grid seed u64
//!             | written entry count u64
//!             | per entry: level u32 | index u32 | 2 × f32
//! weights: per layer of each head, row-major weights then biases, f32
//! ```
//!
//! Hash-grid entries that were never written are regenerated from the grid
//! seed, so only written entries are stored.

use std::path::Path;

use super::bytes::{Reader, Writer};
use crate::error::{Error, Result};
use crate::field::{Activation, Dense, FieldModel, HashGrid, HashGridConfig, Mlp, ViewEncoding};

pub const MODEL_MAGIC: &[u8; 4] = b"IRMD";
pub const MODEL_VERSION: u32 = 1;

pub fn encode_model(model: &FieldModel) -> Vec<u8> {
    let mut w = Writer::default();
    w.bytes(MODEL_MAGIC);
    w.u32(MODEL_VERSION);
    w.u64(model.seed);
    let (id, param) = model.view_encoding.to_ids();
    w.u32(id);
    w.u32(param);
    for mlp in [&model.geometry, &model.color] {
        w.u32(mlp.layers.len() as u32);
        for l in &mlp.layers {
            w.u32(l.in_dim as u32);
            w.u32(l.out_dim as u32);
            w.u32(l.activation.id());
        }
    }
    match &model.hash_grid {
        None => w.u32(0),
        Some(g) => {
            w.u32(1);
            let c = g.config();
            for v in [c.levels, c.n_min, c.n_max, c.features_per_level, c.table_size] {
                w.u32(v);
            }
            w.f64(c.init_scale);
            w.u64(g.seed());
            let entries = g.written_entries();
            w.u64(entries.len() as u64);
            for (level, index, e) in entries {
                w.u32(level);
                w.u32(index);
                w.f32(e[0]);
                w.f32(e[1]);
            }
        }
    }
    for mlp in [&model.geometry, &model.color] {
        for l in &mlp.layers {
            for &v in l.weights.iter().chain(&l.bias) {
                w.f32(v);
            }
        }
    }
    w.buf
}

fn read_shapes(r: &mut Reader) -> Result<Vec<(usize, usize, Activation)>> {
    let at = r.pos();
    let n = r.u32("layer table")?;
    if n == 0 || n > 64 {
        return Err(Error::format(at, format!("implausible layer count {n}")));
    }
    (0..n)
        .map(|_| {
            let at = r.pos();
            let i = r.u32("layer table")? as usize;
            let o = r.u32("layer table")? as usize;
            let id = r.u32("layer table")?;
            let act =
                Activation::from_id(id).ok_or_else(|| Error::format(at + 8, format!("unknown activation id {id}")))?;
            if i == 0 || o == 0 || i > 1 << 16 || o > 1 << 16 {
                return Err(Error::format(at, format!("implausible layer shape {i}x{o}")));
            }
            Ok((i, o, act))
        })
        .collect()
}

pub fn decode_model(bytes: &[u8]) -> Result<FieldModel> {
    if bytes.len() < 4 || &bytes[..4] != MODEL_MAGIC {
        return Err(Error::NotModelFile);
    }
    let mut r = Reader::starting_at(bytes, 4);
    let version = r.u32("header")?;
    if version != MODEL_VERSION {
        return Err(Error::format(4, format!("unsupported model version {version}")));
    }
    let seed = r.u64("header")?;
    let id = r.u32("header")?;
    let param = r.u32("header")?;
    let view_encoding = ViewEncoding::from_ids(id, param)
        .ok_or_else(|| Error::format(16, format!("unknown view encoding {id}/{param}")))?;
    let geo_shapes = read_shapes(&mut r)?;
    let color_shapes = read_shapes(&mut r)?;

    let flag_at = r.pos();
    let hash_grid = match r.u32("header")? {
        0 => None,
        1 => {
            let cfg_at = r.pos();
            let mut v = [0u32; 5];
            for x in &mut v {
                *x = r.u32("hash grid header")?;
            }
            let config = HashGridConfig {
                levels: v[0],
                n_min: v[1],
                n_max: v[2],
                features_per_level: v[3],
                table_size: v[4],
                init_scale: r.f64("hash grid header")?,
            };
            let grid_seed = r.u64("hash grid header")?;
            let mut grid = HashGrid::new(config, grid_seed).map_err(|e| Error::format(cfg_at, e.to_string()))?;
            let count_at = r.pos();
            let count = r.u64("hash grid header")?;
            if count as u128 * 16 > r.remaining() as u128 {
                return Err(Error::format(
                    count_at,
                    format!("{count} hash entries exceed the file length"),
                ));
            }
            for _ in 0..count {
                let at = r.pos();
                let level = r.u32("hash entry")?;
                let index = r.u32("hash entry")?;
                if level >= config.levels || index >= config.table_size {
                    return Err(Error::format(at, format!("hash entry ({level}, {index}) out of range")));
                }
                let e = [r.f32("hash entry")?, r.f32("hash entry")?];
                grid.set_entry(level, index, e);
            }
            Some(grid)
        }
        f => return Err(Error::format(flag_at, format!("invalid hash grid flag {f}"))),
    };

    let weights_at = r.pos();
    let total: usize = geo_shapes.iter().chain(&color_shapes).map(|&(i, o, _)| i * o + o).sum();
    if r.remaining() != total * 4 {
        return Err(Error::format(
            weights_at + r.remaining().min(total * 4),
            format!(
                "weight block holds {} bytes, header declares {}",
                r.remaining(),
                total * 4
            ),
        ));
    }
    let mut build = |shapes: &[(usize, usize, Activation)]| -> Result<Mlp> {
        let layers = shapes
            .iter()
            .map(|&(i, o, act)| {
                Ok(Dense {
                    in_dim: i,
                    out_dim: o,
                    weights: r.f32_vec(i * o, "weights")?,
                    bias: r.f32_vec(o, "weights")?,
                    activation: act,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Mlp { layers })
    };
    let geometry = build(&geo_shapes)?;
    let color = build(&color_shapes)?;
    r.finish()?;

    let model = FieldModel {
        geometry,
        color,
        view_encoding,
        hash_grid,
        seed,
    };
    model.validate().map_err(|e| Error::format(20, e.to_string()))?;
    Ok(model)
}

pub fn save_model(model: &FieldModel, path: &Path) -> Result<()> {
    std::fs::write(path, encode_model(model)).map_err(|e| Error::io(path, e))
}

pub fn load_model(path: &Path) -> Result<FieldModel> {
    decode_model(&std::fs::read(path).map_err(|e| Error::io(path, e))?)
}
