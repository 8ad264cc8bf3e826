use rand::Rng;

use crate::diffcore::{Tape, Tensor, Var};
use crate::{Real, Result};

/// First layer of a sinusoidal network: `sin(ω₀ (c·W + b))`.
#[derive(Clone, Debug, PartialEq)]
pub struct SineLayer {
    pub in_dim: usize,
    pub width: usize,
    pub omega: f64,
}

impl SineLayer {
    pub fn output_dim(&self) -> usize {
        self.width
    }

    pub fn param_count(&self) -> usize {
        self.in_dim * self.width + self.width
    }

    /// Weights and bias uniform in `±1/in_dim` (first-layer sine init).
    pub fn init(&self, rng: &mut impl Rng) -> Vec<Tensor> {
        let bound = 1.0 / self.in_dim as f64;
        let mut draw = |n: usize| -> Vec<Real> {
            (0..n).map(|_| rng.random_range(-bound..=bound) as Real).collect()
        };
        vec![
            Tensor::new(vec![self.in_dim, self.width], draw(self.in_dim * self.width)).unwrap(),
            Tensor::new(vec![self.width], draw(self.width)).unwrap(),
        ]
    }

    pub fn forward(&self, tape: &mut Tape, params: &[Var], coords: Var) -> Result<Var> {
        let h = tape.linear(coords, params[0], params[1])?;
        let h = tape.scale(h, self.omega as Real);
        Ok(tape.sin(h))
    }
}
