//! Linear forward models `y = A x + ε`, their adjoints, analytic baselines
//! and sampling-mask generators.

mod fanbeam;
mod fbp;
mod fourier;
mod masks;

use std::sync::Arc;

use rand_distr::{Distribution, Normal};

pub use fanbeam::{fanbeam_adjoint, fanbeam_forward, full_scan_angles, FanBeamGeometry, FanBeamProjector};
pub use fbp::fbp_reconstruct;
pub use fourier::{
    fourier_adjoint, fourier_forward, magnitude, make_coil_maps, to_complex, zero_filled, CoilMaps,
    FourierOperator,
};
pub use masks::{make_mask, realized_acceleration, MaskPattern, SamplingMaskConfig};

use crate::diffcore::{IdentityOperator, LinearOperator, Tensor};
use crate::{rng, Error, Real, Result};

/// Serializable description of a forward model.
#[derive(Clone, Debug, PartialEq)]
pub enum OperatorDesc {
    Identity { shape: Vec<usize> },
    FanBeam(FanBeamGeometry),
    FourierMask { mask: Tensor, coil_maps: CoilMaps },
}

impl OperatorDesc {
    pub fn kind(&self) -> &'static str {
        match self {
            OperatorDesc::Identity { .. } => "identity",
            OperatorDesc::FanBeam(_) => "fan_beam",
            OperatorDesc::FourierMask { .. } => "fourier_mask",
        }
    }

    /// Spatial grid the model is evaluated on.
    pub fn spatial_extents(&self) -> Vec<usize> {
        match self {
            OperatorDesc::Identity { shape } => shape.clone(),
            OperatorDesc::FanBeam(g) => g.image.to_vec(),
            OperatorDesc::FourierMask { coil_maps, .. } => coil_maps.extents().to_vec(),
        }
    }

    /// Image channels: 2 (real, imaginary) for MRI, otherwise 1.
    pub fn channels(&self) -> usize {
        match self {
            OperatorDesc::FourierMask { .. } => 2,
            _ => 1,
        }
    }

    /// Shape of the operator's input image.
    pub fn image_shape(&self) -> Vec<usize> {
        let mut s = self.spatial_extents();
        if self.channels() > 1 {
            s.push(self.channels());
        }
        s
    }

    pub fn build(&self) -> Result<ForwardOperator> {
        Ok(match self {
            OperatorDesc::Identity { shape } => ForwardOperator::Identity(IdentityOperator::new(shape)),
            OperatorDesc::FanBeam(g) => ForwardOperator::FanBeam(FanBeamProjector::new(g.clone())?),
            OperatorDesc::FourierMask { mask, coil_maps } => {
                ForwardOperator::FourierMask(FourierOperator::new(mask.clone(), coil_maps.clone())?)
            }
        })
    }
}

/// Any of the supported forward models.
pub enum ForwardOperator {
    Identity(IdentityOperator),
    FanBeam(FanBeamProjector),
    FourierMask(FourierOperator),
}

impl ForwardOperator {
    fn inner(&self) -> &dyn LinearOperator {
        match self {
            ForwardOperator::Identity(op) => op,
            ForwardOperator::FanBeam(op) => op,
            ForwardOperator::FourierMask(op) => op,
        }
    }

    pub fn into_shared(self) -> Arc<dyn LinearOperator> {
        Arc::new(self)
    }
}

impl LinearOperator for ForwardOperator {
    fn image_shape(&self) -> &[usize] {
        self.inner().image_shape()
    }

    fn measurement_shape(&self) -> &[usize] {
        self.inner().measurement_shape()
    }

    fn forward(&self, x: &[Real]) -> Vec<Real> {
        self.inner().forward(x)
    }

    fn adjoint(&self, y: &[Real]) -> Vec<Real> {
        self.inner().adjoint(y)
    }
}

/// Adds white Gaussian noise with standard deviation `sigma` in place.
pub fn add_gaussian_noise(y: &mut Tensor, sigma: f64, seed: u64) -> Result<()> {
    if sigma == 0.0 {
        return Ok(());
    }
    let normal = Normal::new(0.0, sigma)
        .map_err(|e| Error::Config(format!("invalid noise level {sigma}: {e}")))?;
    let mut r = rng::stream(seed, "measurement_noise");
    for v in y.data_mut() {
        *v += normal.sample(&mut r) as Real;
    }
    Ok(())
}
