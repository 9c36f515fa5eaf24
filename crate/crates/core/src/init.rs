//! Weight initialization schemes.
//!
//! All schemes draw a `(fan_out, fan_in)` weight matrix; biases are always
//! zero and are created by the caller.
//!
//! | scheme     | distribution                                         |
//! |------------|------------------------------------------------------|
//! | LeCun      | `U[-sqrt(1/fan_in), +sqrt(1/fan_in)]`                |
//! | Xavier     | `U[-sqrt(6/(fan_in+fan_out)), +sqrt(6/(fan_in+fan_out))]` |
//! | Kaiming    | `N(0, 2/fan_in)`                                     |
//! | Orthogonal | `gain * Q`, `Q` from a sign-corrected QR of a Gaussian |

use alloc::vec;
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{qr_thin_q, transpose};
use crate::math;
use crate::rng::SeededRng;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum InitKind {
    Lecun,
    Xavier,
    Kaiming,
    Orthogonal,
}

impl InitKind {
    pub const ALL: [InitKind; 4] = [
        InitKind::Lecun,
        InitKind::Xavier,
        InitKind::Kaiming,
        InitKind::Orthogonal,
    ];

    pub fn name(self) -> &'static str {
        match self {
            InitKind::Lecun => "lecun",
            InitKind::Xavier => "xavier",
            InitKind::Kaiming => "kaiming",
            InitKind::Orthogonal => "orthogonal",
        }
    }
}

impl fmt::Display for InitKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InitKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        InitKind::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::Config(alloc::format!("unknown init scheme `{s}`")))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct InitScheme {
    pub kind: InitKind,
    /// Only used by the orthogonal scheme.
    #[serde(default = "default_gain")]
    pub gain: f64,
}

fn default_gain() -> f64 {
    1.0
}

impl InitScheme {
    pub fn new(kind: InitKind) -> Self {
        Self { kind, gain: 1.0 }
    }

    pub fn orthogonal(gain: f64) -> Self {
        Self {
            kind: InitKind::Orthogonal,
            gain,
        }
    }

    /// Draws a `(fan_out, fan_in)` weight matrix.
    pub fn init_layer(&self, fan_in: usize, fan_out: usize, rng: &mut SeededRng) -> Result<Tensor> {
        if fan_in == 0 || fan_out == 0 {
            return Err(Error::Contract("layer fans must be positive"));
        }
        let n = fan_in * fan_out;
        let data: Vec<f64> = match self.kind {
            InitKind::Lecun => {
                let bound = math::sqrt(1.0 / fan_in as f64);
                (0..n).map(|_| rng.uniform_range(-bound, bound)).collect()
            }
            InitKind::Xavier => {
                let bound = math::sqrt(6.0 / (fan_in + fan_out) as f64);
                (0..n).map(|_| rng.uniform_range(-bound, bound)).collect()
            }
            InitKind::Kaiming => {
                let std = math::sqrt(2.0 / fan_in as f64);
                (0..n).map(|_| std * rng.normal()).collect()
            }
            InitKind::Orthogonal => loop {
                let mut g = vec![0.0; n];
                rng.fill_normal(&mut g);
                match orthogonalize(fan_out, fan_in, &g) {
                    Ok(mut q) => {
                        q.iter_mut().for_each(|v| *v *= self.gain);
                        break q;
                    }
                    Err(Error::RankDeficient) => continue,
                    Err(e) => return Err(e),
                }
            },
        };
        Tensor::matrix(fan_out, fan_in, data)
    }
}

impl Default for InitScheme {
    fn default() -> Self {
        Self::new(InitKind::Orthogonal)
    }
}

/// Maps a `rows x cols` Gaussian matrix to one with orthonormal rows
/// (`rows <= cols`) or orthonormal columns (`rows > cols`).
///
/// The QR factor is sign-corrected by the diagonal of `R`, which makes the
/// result Haar-distributed when the input is i.i.d. standard normal.
pub fn orthogonalize(rows: usize, cols: usize, matrix: &[f64]) -> Result<Vec<f64>> {
    if matrix.len() != rows * cols {
        return Err(Error::dim("orthogonalize input", rows * cols, matrix.len()));
    }
    if rows >= cols {
        qr_thin_q(rows, cols, matrix)
    } else {
        let t = transpose(rows, cols, matrix);
        let q = qr_thin_q(cols, rows, &t)?;
        Ok(transpose(cols, rows, &q))
    }
}
