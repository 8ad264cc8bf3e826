//! Minimal reverse-mode differentiation over dense tensors.
//!
//! Graphs are recorded on a [`Tape`] as they are evaluated; [`Tape::backward`]
//! sweeps it once in reverse. Ops that live elsewhere (hash encoding, forward
//! operators) plug in through [`BackwardRule`].

mod gradcheck;
mod kernels;
mod tape;
mod tensor;

pub use gradcheck::{grad_check, GradCheck, GradCheckReport};
pub use tape::{BackwardRule, Elementwise, Gradients, LinearOperator, Tape, Var};
pub use tensor::Tensor;

/// Relative mismatch of the dot-product adjoint test `⟨Ax, y⟩` vs `⟨x, Aᵀy⟩`.
pub fn adjoint_mismatch(op: &dyn LinearOperator, x: &Tensor, y: &Tensor) -> crate::Result<f64> {
    let ax = op.apply(x)?;
    let aty = op.apply_adjoint(y)?;
    let lhs = ax.dot(y);
    let rhs = x.dot(&aty);
    let scale = lhs.abs().max(rhs.abs()).max(f64::MIN_POSITIVE);
    Ok((lhs - rhs).abs() / scale)
}

/// Identity map over a fixed shape.
#[derive(Clone, Debug)]
pub struct IdentityOperator {
    shape: Vec<usize>,
}

impl IdentityOperator {
    pub fn new(shape: &[usize]) -> Self {
        Self {
            shape: shape.to_vec(),
        }
    }
}

impl LinearOperator for IdentityOperator {
    fn image_shape(&self) -> &[usize] {
        &self.shape
    }

    fn measurement_shape(&self) -> &[usize] {
        &self.shape
    }

    fn forward(&self, x: &[crate::Real]) -> Vec<crate::Real> {
        x.to_vec()
    }

    fn adjoint(&self, y: &[crate::Real]) -> Vec<crate::Real> {
        y.to_vec()
    }
}
