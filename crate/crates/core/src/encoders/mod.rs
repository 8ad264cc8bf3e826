//! Coordinate encoders: hash grid (NGP), Fourier features (NeRF) and a
//! sinusoidal first layer (SIREN).

mod fourier;
mod grid;
mod hash;
mod sine;

use rand::Rng;
use serde::{Deserialize, Serialize};

pub use fourier::fourier_encode;
pub use grid::{make_grid, CoordinateGrid};
pub use hash::{HashEncoding, HashEncodingConfig, Level};
pub use sine::SineLayer;

use crate::diffcore::{Tape, Tensor, Var};
use crate::Result;

/// Which coordinate encoding fronts an encoder.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Backbone {
    Ngp,
    Nerf,
    Siren,
}

/// A concrete front-end with its parameter layout.
#[derive(Clone, Debug, PartialEq)]
pub enum Encoding {
    Hash(HashEncoding),
    Fourier { dims: usize, num_freqs: usize },
    Sine(SineLayer),
}

impl Encoding {
    pub fn output_dim(&self) -> usize {
        match self {
            Encoding::Hash(h) => h.output_dim(),
            Encoding::Fourier { dims, num_freqs } => 2 * dims * num_freqs,
            Encoding::Sine(s) => s.output_dim(),
        }
    }

    pub fn param_count(&self) -> usize {
        match self {
            Encoding::Hash(h) => h.param_count(),
            Encoding::Fourier { .. } => 0,
            Encoding::Sine(s) => s.param_count(),
        }
    }

    pub fn num_tensors(&self) -> usize {
        match self {
            Encoding::Hash(_) => 1,
            Encoding::Fourier { .. } => 0,
            Encoding::Sine(_) => 2,
        }
    }

    pub fn init(&self, rng: &mut impl Rng, hash_init_scale: f64) -> Vec<Tensor> {
        match self {
            Encoding::Hash(h) => vec![h.init_table(rng, hash_init_scale)],
            Encoding::Fourier { .. } => Vec::new(),
            Encoding::Sine(s) => s.init(rng),
        }
    }

    /// Encodes `coords` using the first [`Self::num_tensors`] entries of `params`.
    pub fn forward(&self, tape: &mut Tape, params: &[Var], coords: &Tensor) -> Result<Var> {
        match self {
            Encoding::Hash(h) => h.encode(tape, params[0], coords),
            Encoding::Fourier { num_freqs, .. } => {
                let feats = fourier_encode(coords, *num_freqs)?;
                Ok(tape.constant(feats))
            }
            Encoding::Sine(s) => {
                let c = tape.constant(coords.clone());
                s.forward(tape, params, c)
            }
        }
    }
}
