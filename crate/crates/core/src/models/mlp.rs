use rand::Rng;

use crate::diffcore::{Tape, Tensor, Var};
use crate::{Real, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Identity,
}

/// Stack of fully connected layers; each layer owns a weight `[in, out]`
/// and a bias `[out]`.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    widths: Vec<usize>,
    activations: Vec<Activation>,
}

impl Mlp {
    /// `widths = [in, h1, ..., out]`, one activation per layer.
    pub fn new(widths: Vec<usize>, activations: Vec<Activation>) -> Self {
        assert_eq!(widths.len(), activations.len() + 1, "one activation per layer");
        Self {
            widths,
            activations,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.widths[0]
    }

    pub fn output_dim(&self) -> usize {
        *self.widths.last().unwrap()
    }

    pub fn widths(&self) -> &[usize] {
        &self.widths
    }

    pub fn num_tensors(&self) -> usize {
        2 * self.activations.len()
    }

    pub fn param_count(&self) -> usize {
        self.widths.windows(2).map(|w| w[0] * w[1] + w[1]).sum()
    }

    /// He-uniform weights for ReLU layers, `±1/√fan_in` for the linear
    /// output layer; zero biases.
    pub fn init(&self, rng: &mut impl Rng) -> Vec<Tensor> {
        let mut out = Vec::with_capacity(self.num_tensors());
        for (w, act) in self.widths.windows(2).zip(&self.activations) {
            let (fan_in, fan_out) = (w[0], w[1]);
            let bound = match act {
                Activation::Relu => (6.0 / fan_in as f64).sqrt(),
                Activation::Identity => (1.0 / fan_in as f64).sqrt(),
            };
            let data = (0..fan_in * fan_out)
                .map(|_| rng.random_range(-bound..=bound) as Real)
                .collect();
            out.push(Tensor::new(vec![fan_in, fan_out], data).unwrap());
            out.push(Tensor::zeros(&[fan_out]));
        }
        out
    }

    pub fn forward(&self, tape: &mut Tape, params: &[Var], x: Var) -> Result<Var> {
        let mut h = x;
        for (l, act) in self.activations.iter().enumerate() {
            h = tape.linear(h, params[2 * l], params[2 * l + 1])?;
            if *act == Activation::Relu {
                h = tape.relu(h);
            }
        }
        Ok(h)
    }
}
