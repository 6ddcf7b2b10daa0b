//! Multi-resolution hash grid used to initialise and train anchor features.
//!
//! Tables are materialised lazily: an entry that was never written reads
//! its deterministic initial value, derived from the grid seed. This keeps
//! the logical `2^21`-entry tables without allocating them.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::math::{Vec3, FEATURE_DIM};

pub const HASH_PRIMES: [u32; 3] = [1, 2_654_435_761, 805_459_861];

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct HashGridConfig {
    pub levels: u32,
    pub n_min: u32,
    pub n_max: u32,
    pub features_per_level: u32,
    pub table_size: u32,
    /// Initial entries are uniform in `±init_scale`.
    pub init_scale: f64,
}

impl Default for HashGridConfig {
    fn default() -> Self {
        Self {
            levels: 16,
            n_min: 16,
            n_max: 8192,
            features_per_level: 2,
            table_size: 1 << 21,
            init_scale: 1e-4,
        }
    }
}

impl HashGridConfig {
    pub fn validate(&self) -> Result<()> {
        if self.features_per_level != 2 {
            return Err(Error::Config("hash grid stores 2 features per level".into()));
        }
        if (self.levels * self.features_per_level) as usize != FEATURE_DIM {
            return Err(Error::Config(format!(
                "hash grid output width {} differs from feature width {FEATURE_DIM}",
                self.levels * self.features_per_level
            )));
        }
        if self.n_min == 0 || self.n_max < self.n_min || self.table_size == 0 {
            return Err(Error::Config("invalid hash grid resolutions".into()));
        }
        Ok(())
    }

    /// `b = exp(ln(n_max / n_min) / (levels − 1))`
    pub fn growth_factor(&self) -> f64 {
        if self.levels <= 1 {
            return 1.0;
        }
        ((self.n_max as f64 / self.n_min as f64).ln() / (self.levels - 1) as f64).exp()
    }

    /// `N_l = floor(n_min · b^l)`
    pub fn resolution(&self, level: u32) -> u32 {
        // The guard keeps the top level at exactly `n_max` despite rounding.
        (self.n_min as f64 * self.growth_factor().powi(level as i32) + 1e-6).floor() as u32
    }
}

/// Trilinear footprint of a query at one level.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LevelCorners {
    pub index: [u32; 8],
    pub weight: [f64; 8],
}

#[derive(Clone, Debug, PartialEq)]
pub struct HashGrid {
    config: HashGridConfig,
    seed: u64,
    resolutions: Vec<u32>,
    written: HashMap<u64, [f64; 2]>,
}

#[inline]
fn entry_key(level: u32, index: u32) -> u64 {
    ((level as u64) << 32) | index as u64
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

impl HashGrid {
    pub fn new(config: HashGridConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let resolutions = (0..config.levels).map(|l| config.resolution(l)).collect();
        Ok(Self {
            config,
            seed,
            resolutions,
            written: HashMap::new(),
        })
    }

    pub fn config(&self) -> &HashGridConfig {
        &self.config
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn resolutions(&self) -> &[u32] {
        &self.resolutions
    }

    /// Table slot of integer vertex `(x, y, z)` at a level: dense row-major
    /// while the level's vertices fit the table, spatial hash otherwise.
    pub fn vertex_index(&self, level: u32, v: [u32; 3]) -> u32 {
        let side = self.resolutions[level as usize] as u64 + 1;
        let table = self.config.table_size as u64;
        if side * side * side <= table {
            (v[0] as u64 + side * (v[1] as u64 + side * v[2] as u64)) as u32
        } else {
            let h = v[0].wrapping_mul(HASH_PRIMES[0])
                ^ v[1].wrapping_mul(HASH_PRIMES[1])
                ^ v[2].wrapping_mul(HASH_PRIMES[2]);
            h % self.config.table_size
        }
    }

    /// Deterministic initial value of a table entry.
    pub fn initial_entry(&self, level: u32, index: u32) -> [f64; 2] {
        let h = splitmix64(self.seed ^ splitmix64(entry_key(level, index)));
        let unit = |bits: u64| (bits >> 40) as f64 / (1u64 << 24) as f64;
        let s = self.config.init_scale;
        [
            ((2.0 * unit(h) - 1.0) * s) as f32 as f64,
            ((2.0 * unit(splitmix64(h)) - 1.0) * s) as f32 as f64,
        ]
    }

    pub fn entry(&self, level: u32, index: u32) -> [f64; 2] {
        self.written
            .get(&entry_key(level, index))
            .copied()
            .unwrap_or_else(|| self.initial_entry(level, index))
    }

    pub fn set_entry(&mut self, level: u32, index: u32, value: [f64; 2]) {
        self.written.insert(entry_key(level, index), value);
    }

    /// Entries written since construction, sorted by `(level, index)`.
    pub fn written_entries(&self) -> Vec<(u32, u32, [f64; 2])> {
        let mut v: Vec<_> = self
            .written
            .iter()
            .map(|(&k, &e)| ((k >> 32) as u32, k as u32, e))
            .collect();
        v.sort_by_key(|&(l, i, _)| (l, i));
        v
    }

    /// Trilinear corners of a normalised position at one level. Positions
    /// outside the unit cube are clamped onto it.
    pub fn corners(&self, level: u32, position: &Vec3) -> LevelCorners {
        let n = self.resolutions[level as usize];
        let mut cell = [0u32; 3];
        let mut frac = [0.0; 3];
        for k in 0..3 {
            let scaled = position[k].clamp(0.0, 1.0) * n as f64;
            let c = (scaled.floor() as u32).min(n - 1);
            cell[k] = c;
            frac[k] = scaled - c as f64;
        }
        let mut out = LevelCorners {
            index: [0; 8],
            weight: [0.0; 8],
        };
        for corner in 0..8 {
            let d = [corner & 1, (corner >> 1) & 1, (corner >> 2) & 1];
            let mut w = 1.0;
            let mut v = [0u32; 3];
            for k in 0..3 {
                v[k] = cell[k] + d[k] as u32;
                w *= if d[k] == 1 { frac[k] } else { 1.0 - frac[k] };
            }
            out.index[corner] = self.vertex_index(level, v);
            out.weight[corner] = w;
        }
        out
    }

    /// Concatenated per-level interpolated features.
    pub fn query(&self, position: &Vec3) -> [f64; FEATURE_DIM] {
        let mut out = [0.0; FEATURE_DIM];
        for level in 0..self.config.levels {
            let c = self.corners(level, position);
            let base = 2 * level as usize;
            for i in 0..8 {
                let e = self.entry(level, c.index[i]);
                out[base] += c.weight[i] * e[0];
                out[base + 1] += c.weight[i] * e[1];
            }
        }
        out
    }
}

/// Sparse gradient over hash-table entries.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct HashGridGrad {
    pub entries: HashMap<u64, [f64; 2]>,
}

impl HashGridGrad {
    /// Scatters `dL/d(query output)` onto the corner entries.
    pub fn accumulate(&mut self, grid: &HashGrid, position: &Vec3, grad: &[f64; FEATURE_DIM]) {
        for level in 0..grid.config.levels {
            let c = grid.corners(level, position);
            let base = 2 * level as usize;
            for i in 0..8 {
                let e = self.entries.entry(entry_key(level, c.index[i])).or_insert([0.0; 2]);
                e[0] += c.weight[i] * grad[base];
                e[1] += c.weight[i] * grad[base + 1];
            }
        }
    }

    pub fn get(&self, level: u32, index: u32) -> [f64; 2] {
        self.entries.get(&entry_key(level, index)).copied().unwrap_or([0.0; 2])
    }

    /// `(level, index, grad)` sorted by key.
    pub fn sorted(&self) -> Vec<(u32, u32, [f64; 2])> {
        let mut v: Vec<_> = self
            .entries
            .iter()
            .map(|(&k, &e)| ((k >> 32) as u32, k as u32, e))
            .collect();
        v.sort_by_key(|&(l, i, _)| (l, i));
        v
    }

    /// Adds `other` in sorted key order so the sum is reproducible.
    pub fn merge(&mut self, other: &HashGridGrad) {
        for (l, i, g) in other.sorted() {
            let e = self.entries.entry(entry_key(l, i)).or_insert([0.0; 2]);
            e[0] += g[0];
            e[1] += g[1];
        }
    }

    pub fn is_finite(&self) -> bool {
        self.entries.values().all(|e| e[0].is_finite() && e[1].is_finite())
    }
}

pub(crate) fn split_key(k: u64) -> (u32, u32) {
    ((k >> 32) as u32, k as u32)
}
