//! View-direction encodings fed to the colour head.

use std::sync::atomic::{AtomicBool, Ordering};

use crate::math::Vec3;

const SH_C0: f64 = 0.282_094_791_773_878_14;
const SH_C1: f64 = 0.488_602_511_902_919_9;
const SH_C2: [f64; 5] = [
    1.092_548_430_592_079_2,
    -1.092_548_430_592_079_2,
    0.315_391_565_252_520_05,
    -1.092_548_430_592_079_2,
    0.546_274_215_296_039_6,
];
const SH_C3: [f64; 7] = [
    -0.590_043_589_926_643_5,
    2.890_611_442_640_554,
    -0.457_045_799_464_465_8,
    0.373_176_332_590_115_4,
    -0.457_045_799_464_465_8,
    1.445_305_721_320_277,
    -0.590_043_589_926_643_5,
];

static WARNED_NON_UNIT: AtomicBool = AtomicBool::new(false);

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ViewEncoding {
    /// Real spherical harmonics with `degree` bands (`degree²` values).
    Sh { degree: u32 },
    /// `d` followed by `sin(2^i π d), cos(2^i π d)` for each frequency.
    Frequency { frequencies: u32 },
}

impl Default for ViewEncoding {
    fn default() -> Self {
        ViewEncoding::Sh { degree: 4 }
    }
}

impl ViewEncoding {
    pub fn width(&self) -> usize {
        match *self {
            ViewEncoding::Sh { degree } => (degree * degree) as usize,
            ViewEncoding::Frequency { frequencies } => 3 + 6 * frequencies as usize,
        }
    }

    /// `(id, parameter)` pair used by the model file.
    pub fn to_ids(&self) -> (u32, u32) {
        match *self {
            ViewEncoding::Sh { degree } => (0, degree),
            ViewEncoding::Frequency { frequencies } => (1, frequencies),
        }
    }

    pub fn from_ids(id: u32, param: u32) -> Option<Self> {
        match (id, param) {
            (0, 1..=4) => Some(ViewEncoding::Sh { degree: param }),
            (1, _) => Some(ViewEncoding::Frequency { frequencies: param }),
            _ => None,
        }
    }

    pub fn encode(&self, direction: &Vec3) -> Vec<f64> {
        match *self {
            ViewEncoding::Sh { degree } => {
                let all = sh_encode(direction);
                all[..(degree * degree) as usize].to_vec()
            }
            ViewEncoding::Frequency { frequencies } => {
                let d = unit(direction);
                let mut out = Vec::with_capacity(self.width());
                out.extend(d.iter());
                for i in 0..frequencies {
                    let f = std::f64::consts::PI * (1u64 << i) as f64;
                    for k in 0..3 {
                        out.push((f * d[k]).sin());
                        out.push((f * d[k]).cos());
                    }
                }
                out
            }
        }
    }
}

fn unit(direction: &Vec3) -> Vec3 {
    let n = direction.norm();
    if (n - 1.0).abs() > 1e-6 {
        if !WARNED_NON_UNIT.swap(true, Ordering::Relaxed) {
            log::warn!("view direction with norm {n} normalised before encoding");
        }
        direction / n
    } else {
        *direction
    }
}

/// Real spherical harmonics of bands 0–3 (16 values).
pub fn sh_encode(direction: &Vec3) -> [f64; 16] {
    let d = unit(direction);
    let (x, y, z) = (d.x, d.y, d.z);
    let (xx, yy, zz) = (x * x, y * y, z * z);
    [
        SH_C0,
        -SH_C1 * y,
        SH_C1 * z,
        -SH_C1 * x,
        SH_C2[0] * x * y,
        SH_C2[1] * y * z,
        SH_C2[2] * (2.0 * zz - xx - yy),
        SH_C2[3] * x * z,
        SH_C2[4] * (xx - yy),
        SH_C3[0] * y * (3.0 * xx - yy),
        SH_C3[1] * x * y * z,
        SH_C3[2] * y * (4.0 * zz - xx - yy),
        SH_C3[3] * z * (2.0 * zz - 3.0 * xx - 3.0 * yy),
        SH_C3[4] * x * (4.0 * zz - xx - yy),
        SH_C3[5] * z * (xx - yy),
        SH_C3[6] * x * (xx - 3.0 * yy),
    ]
}
