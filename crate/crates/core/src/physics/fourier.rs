//! Masked multi-coil Fourier operator.
//!
//! Images are complex `[H, W, 2]` (real, imaginary) and k-space is
//! `[C, H, W, 2]`. The 2-D FFT is unitary and centered: DC sits at
//! `(H/2, W/2)`.

use std::sync::Arc;

use rand::Rng as _;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::diffcore::{LinearOperator, Tensor};
use crate::{rng, Error, Real, Result};

/// `C` complex sensitivity maps over an `H × W` grid, normalized so that
/// `Σ_c |S_c|² = 1` at every pixel.
#[derive(Clone, Debug, PartialEq)]
pub struct CoilMaps {
    tensor: Tensor,
}

impl CoilMaps {
    /// Wraps a `[C, H, W, 2]` tensor and normalizes it pixelwise.
    pub fn from_tensor(tensor: Tensor) -> Result<Self> {
        let s = tensor.shape();
        if s.len() != 4 || s[3] != 2 || s[0] == 0 {
            return Err(Error::dim(format!("coil maps must be [C, H, W, 2], got {s:?}")));
        }
        let mut maps = Self { tensor };
        maps.normalize()?;
        Ok(maps)
    }

    /// Wraps maps that are already normalized, keeping their values
    /// bit-for-bit. Fails if any pixel's sum of squares is off by more than
    /// the storage precision allows.
    pub fn from_normalized(tensor: Tensor) -> Result<Self> {
        let maps = Self::from_tensor(tensor.clone())?;
        let tol = if crate::IS_F64 { 1e-9 } else { 1e-5 };
        let off = tensor
            .data()
            .iter()
            .zip(maps.tensor.data())
            .any(|(a, b)| (*a as f64 - *b as f64).abs() > tol);
        if off {
            return Err(Error::Format("stored coil maps are not normalized".into()));
        }
        Ok(Self { tensor })
    }

    /// A single coil with unit sensitivity.
    pub fn unit(extents: [usize; 2]) -> Self {
        let [h, w] = extents;
        let mut data = vec![0.0; h * w * 2];
        data.iter_mut().step_by(2).for_each(|v| *v = 1.0);
        Self {
            tensor: Tensor::new(vec![1, h, w, 2], data).expect("shape matches"),
        }
    }

    fn normalize(&mut self) -> Result<()> {
        let [c, h, w] = [self.coils(), self.extents()[0], self.extents()[1]];
        let data = self.tensor.data_mut();
        for p in 0..h * w {
            let sos: f64 = (0..c)
                .map(|k| {
                    let i = 2 * (k * h * w + p);
                    (data[i] as f64).powi(2) + (data[i + 1] as f64).powi(2)
                })
                .sum();
            if !(sos > 0.0) || !sos.is_finite() {
                return Err(Error::Numerical(format!("coil maps vanish at pixel {p}")));
            }
            let inv = 1.0 / sos.sqrt();
            for k in 0..c {
                let i = 2 * (k * h * w + p);
                data[i] = (data[i] as f64 * inv) as Real;
                data[i + 1] = (data[i + 1] as f64 * inv) as Real;
            }
        }
        Ok(())
    }

    pub fn coils(&self) -> usize {
        self.tensor.shape()[0]
    }

    pub fn extents(&self) -> [usize; 2] {
        [self.tensor.shape()[1], self.tensor.shape()[2]]
    }

    pub fn tensor(&self) -> &Tensor {
        &self.tensor
    }

    fn complex(&self) -> Vec<Complex<f64>> {
        self.tensor
            .data()
            .chunks_exact(2)
            .map(|p| Complex::new(p[0] as f64, p[1] as f64))
            .collect()
    }
}

/// Smooth Gaussian-lobe sensitivities placed around the field of view.
///
/// Lobe `c` sits near angle `2πc/C` on a ring of radius 0.7 (normalized
/// coordinates in `[-1, 1]`) with a seeded jitter; coil 0 carries zero
/// phase and the others a constant phase `2πc/C` plus a gentle seeded ramp.
pub fn make_coil_maps(extents: [usize; 2], coils: usize, seed: u64) -> Result<CoilMaps> {
    let [h, w] = extents;
    if coils == 0 || h == 0 || w == 0 {
        return Err(Error::Config("coil maps need at least one coil and a non-empty grid".into()));
    }
    let mut r = rng::stream(seed, "coil_maps");
    let sigma = 0.6f64;
    let mut data = vec![0.0; coils * h * w * 2];
    for c in 0..coils {
        let base = 2.0 * std::f64::consts::PI * c as f64 / coils as f64;
        let angle = base + r.random_range(-0.2..0.2);
        let center = [0.7 * angle.cos(), 0.7 * angle.sin()];
        let ramp = if c == 0 {
            [0.0, 0.0]
        } else {
            [r.random_range(-0.5..0.5), r.random_range(-0.5..0.5)]
        };
        for i in 0..h {
            let y = 2.0 * (i as f64 + 0.5) / h as f64 - 1.0;
            for j in 0..w {
                let x = 2.0 * (j as f64 + 0.5) / w as f64 - 1.0;
                let d2 = (x - center[0]).powi(2) + (y - center[1]).powi(2);
                let mag = (-d2 / (2.0 * sigma * sigma)).exp();
                let phase = base + ramp[0] * x + ramp[1] * y;
                let k = 2 * ((c * h + i) * w + j);
                data[k] = (mag * phase.cos()) as Real;
                data[k + 1] = (mag * phase.sin()) as Real;
            }
        }
    }
    CoilMaps::from_tensor(Tensor::new(vec![coils, h, w, 2], data)?)
}

/// `A x = [M ⊙ F(S_c ⊙ x)]_c` with a unitary centered FFT `F`.
///
/// Transforms run in 64-bit regardless of [`Real`] so the adjoint stays
/// exact to well within single-precision tolerances.
pub struct FourierOperator {
    mask: Tensor,
    maps: CoilMaps,
    s: Vec<Complex<f64>>,
    image_shape: Vec<usize>,
    meas_shape: Vec<usize>,
    row_fwd: Arc<dyn Fft<f64>>,
    row_inv: Arc<dyn Fft<f64>>,
    col_fwd: Arc<dyn Fft<f64>>,
    col_inv: Arc<dyn Fft<f64>>,
}

impl FourierOperator {
    pub fn new(mask: Tensor, maps: CoilMaps) -> Result<Self> {
        let [h, w] = maps.extents();
        if mask.shape() != [h, w] {
            return Err(Error::dim(format!(
                "mask shape {:?} does not match coil maps [{h}, {w}]",
                mask.shape()
            )));
        }
        if mask.data().iter().any(|&m| m != 0.0 && m != 1.0) {
            return Err(Error::Domain("sampling mask must be binary".into()));
        }
        let mut planner = FftPlanner::<f64>::new();
        Ok(Self {
            s: maps.complex(),
            image_shape: vec![h, w, 2],
            meas_shape: vec![maps.coils(), h, w, 2],
            row_fwd: planner.plan_fft_forward(w),
            row_inv: planner.plan_fft_inverse(w),
            col_fwd: planner.plan_fft_forward(h),
            col_inv: planner.plan_fft_inverse(h),
            mask,
            maps,
        })
    }

    pub fn mask(&self) -> &Tensor {
        &self.mask
    }

    pub fn coil_maps(&self) -> &CoilMaps {
        &self.maps
    }

    /// Unitary centered 2-D transform in place (`inverse` selects the sign).
    fn fft2(&self, buf: &mut [Complex<f64>], inverse: bool) {
        let [h, w] = self.maps.extents();
        circshift(buf, h, w, h - h / 2, w - w / 2);
        let (row, col) = if inverse {
            (&self.row_inv, &self.col_inv)
        } else {
            (&self.row_fwd, &self.col_fwd)
        };
        for r in buf.chunks_exact_mut(w) {
            row.process(r);
        }
        let mut column = vec![Complex::new(0.0, 0.0); h];
        for j in 0..w {
            for i in 0..h {
                column[i] = buf[i * w + j];
            }
            col.process(&mut column);
            for i in 0..h {
                buf[i * w + j] = column[i];
            }
        }
        let scale = 1.0 / ((h * w) as f64).sqrt();
        for v in buf.iter_mut() {
            *v *= scale;
        }
        circshift(buf, h, w, h / 2, w / 2);
    }
}

/// `out[(i + di) % h][(j + dj) % w] = in[i][j]`.
fn circshift(buf: &mut [Complex<f64>], h: usize, w: usize, di: usize, dj: usize) {
    let src = buf.to_vec();
    for i in 0..h {
        let ti = (i + di) % h;
        for j in 0..w {
            buf[ti * w + (j + dj) % w] = src[i * w + j];
        }
    }
}

impl LinearOperator for FourierOperator {
    fn image_shape(&self) -> &[usize] {
        &self.image_shape
    }

    fn measurement_shape(&self) -> &[usize] {
        &self.meas_shape
    }

    fn forward(&self, x: &[Real]) -> Vec<Real> {
        let [h, w] = self.maps.extents();
        let n = h * w;
        let mask = self.mask.data();
        let mut out = Vec::with_capacity(self.maps.coils() * n * 2);
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        for c in 0..self.maps.coils() {
            for p in 0..n {
                buf[p] = self.s[c * n + p] * Complex::new(x[2 * p] as f64, x[2 * p + 1] as f64);
            }
            self.fft2(&mut buf, false);
            for p in 0..n {
                let v = buf[p] * mask[p] as f64;
                out.push(v.re as Real);
                out.push(v.im as Real);
            }
        }
        out
    }

    fn adjoint(&self, y: &[Real]) -> Vec<Real> {
        let [h, w] = self.maps.extents();
        let n = h * w;
        let mask = self.mask.data();
        let mut acc = vec![Complex::new(0.0f64, 0.0); n];
        let mut buf = vec![Complex::new(0.0, 0.0); n];
        for c in 0..self.maps.coils() {
            for p in 0..n {
                let k = 2 * (c * n + p);
                buf[p] = Complex::new(y[k] as f64, y[k + 1] as f64) * mask[p] as f64;
            }
            self.fft2(&mut buf, true);
            for p in 0..n {
                acc[p] += self.s[c * n + p].conj() * buf[p];
            }
        }
        acc.into_iter()
            .flat_map(|v| [v.re as Real, v.im as Real])
            .collect()
    }
}

/// Forward model on a complex `[H, W, 2]` image.
pub fn fourier_forward(op: &FourierOperator, image: &Tensor) -> Result<Tensor> {
    op.apply(image)
}

/// `Σ_c conj(S_c) ⊙ F⁻¹(M ⊙ k_c)`.
pub fn fourier_adjoint(op: &FourierOperator, kspace: &Tensor) -> Result<Tensor> {
    op.apply_adjoint(kspace)
}

/// Zero-filled reconstruction, the adjoint applied to the measurements.
pub fn zero_filled(op: &FourierOperator, kspace: &Tensor) -> Result<Tensor> {
    op.apply_adjoint(kspace)
}

/// Pixel magnitudes of a complex `[H, W, 2]` image as `[H, W]`.
pub fn magnitude(image: &Tensor) -> Result<Tensor> {
    let s = image.shape();
    if s.len() != 3 || s[2] != 2 {
        return Err(Error::dim(format!("expected a complex [H, W, 2] image, got {s:?}")));
    }
    let data = image
        .data()
        .chunks_exact(2)
        .map(|p| p[0].hypot(p[1]))
        .collect();
    Tensor::new(vec![s[0], s[1]], data)
}

/// Real `[H, W]` image embedded as complex `[H, W, 2]`.
pub fn to_complex(image: &Tensor) -> Result<Tensor> {
    let (h, w) = image.dims2()?;
    let data = image.data().iter().flat_map(|&v| [v, 0.0]).collect();
    Tensor::new(vec![h, w, 2], data)
}
