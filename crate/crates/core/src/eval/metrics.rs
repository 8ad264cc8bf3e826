use crate::diffcore::Tensor;
use crate::{Error, Result};

/// A single-channel image (or a stack of 2-D slices) for metric computation.
///
/// Complex reconstructions enter only through [`Image::magnitude`], so every
/// metric sees real-valued amplitude maps.
#[derive(Clone, Debug, PartialEq)]
pub struct Image {
    /// `[H, W]` or `[D, H, W]`.
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Image {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if !(2..=3).contains(&shape.len()) || shape.contains(&0) {
            return Err(Error::dim(format!("metric images are 2-D or 3-D, got {shape:?}")));
        }
        if shape.iter().product::<usize>() != data.len() {
            return Err(Error::dim(format!("{} values for shape {shape:?}", data.len())));
        }
        Ok(Self { shape, data })
    }

    /// Real image `[H, W]`, `[D, H, W]` or `[.., 1]`.
    pub fn from_tensor(t: &Tensor) -> Result<Self> {
        let mut shape = t.shape().to_vec();
        if shape.len() > 2 && shape.last() == Some(&1) {
            shape.pop();
        }
        Self::new(shape, t.data().iter().map(|&v| v as f64).collect())
    }

    /// Magnitude of a complex `[.., 2]` tensor divided by `normalizer`.
    pub fn magnitude(t: &Tensor, normalizer: f64) -> Result<Self> {
        let shape = t.shape();
        if shape.last() != Some(&2) {
            return Err(Error::dim(format!("complex tensors end in a 2-axis, got {shape:?}")));
        }
        if !(normalizer > 0.0) {
            return Err(Error::Domain("magnitude normalizer must be positive".into()));
        }
        let data = t
            .data()
            .chunks_exact(2)
            .map(|p| (p[0] as f64).hypot(p[1] as f64) / normalizer)
            .collect();
        Self::new(shape[..shape.len() - 1].to_vec(), data)
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn max(&self) -> f64 {
        self.data.iter().cloned().fold(f64::NEG_INFINITY, f64::max)
    }

    fn slices(&self) -> impl Iterator<Item = &[f64]> {
        let n = self.shape[self.shape.len() - 2] * self.shape[self.shape.len() - 1];
        self.data.chunks_exact(n)
    }
}

/// Metric-ready pair `(reconstruction, ground truth)`.
///
/// Real images pass through unchanged. Complex images become magnitude maps
/// scaled by the ground truth's peak magnitude.
pub fn metric_pair(recon: &Tensor, truth: &Tensor) -> Result<(Image, Image)> {
    if recon.shape() != truth.shape() {
        return Err(Error::dim(format!(
            "reconstruction {:?} vs ground truth {:?}",
            recon.shape(),
            truth.shape()
        )));
    }
    let complex = truth.ndim() >= 3 && truth.shape().last() == Some(&2);
    if complex {
        let peak = Image::magnitude(truth, 1.0)?.max();
        let peak = if peak > 0.0 { peak } else { 1.0 };
        Ok((Image::magnitude(recon, peak)?, Image::magnitude(truth, peak)?))
    } else {
        Ok((Image::from_tensor(recon)?, Image::from_tensor(truth)?))
    }
}

fn same_shape(a: &Image, b: &Image) -> Result<()> {
    if a.shape != b.shape {
        return Err(Error::dim(format!("image shapes {:?} and {:?} differ", a.shape, b.shape)));
    }
    Ok(())
}

/// `10·log10(range² / MSE)`; identical images give `+∞`.
pub fn psnr(a: &Image, b: &Image, data_range: f64) -> Result<f64> {
    same_shape(a, b)?;
    if !(data_range > 0.0) {
        return Err(Error::Domain("data range must be positive".into()));
    }
    let mse = a
        .data
        .iter()
        .zip(&b.data)
        .map(|(x, y)| (x - y) * (x - y))
        .sum::<f64>()
        / a.data.len() as f64;
    if mse == 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (data_range * data_range / mse).log10())
}

pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
pub const SSIM_K1: f64 = 0.01;
pub const SSIM_K2: f64 = 0.03;

/// Normalized 1-D Gaussian taps of the SSIM window.
pub fn gaussian_window() -> [f64; SSIM_WINDOW] {
    let mut w = [0.0; SSIM_WINDOW];
    let c = (SSIM_WINDOW / 2) as f64;
    for (i, v) in w.iter_mut().enumerate() {
        *v = (-((i as f64 - c).powi(2)) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let s: f64 = w.iter().sum();
    w.iter_mut().for_each(|v| *v /= s);
    w
}

/// Valid-mode separable filtering of an `h × w` slice.
fn filter(x: &[f64], h: usize, w: usize, g: &[f64; SSIM_WINDOW]) -> Vec<f64> {
    let (oh, ow) = (h - SSIM_WINDOW + 1, w - SSIM_WINDOW + 1);
    let mut rows = vec![0.0; h * ow];
    for i in 0..h {
        for j in 0..ow {
            rows[i * ow + j] = (0..SSIM_WINDOW).map(|k| g[k] * x[i * w + j + k]).sum();
        }
    }
    let mut out = vec![0.0; oh * ow];
    for i in 0..oh {
        for j in 0..ow {
            out[i * ow + j] = (0..SSIM_WINDOW).map(|k| g[k] * rows[(i + k) * ow + j]).sum();
        }
    }
    out
}

/// Mean SSIM over all fully contained 11×11 Gaussian windows (σ = 1.5).
/// Volumes report the mean over their slices.
pub fn ssim(a: &Image, b: &Image, data_range: f64) -> Result<f64> {
    same_shape(a, b)?;
    let n = a.shape.len();
    let (h, w) = (a.shape[n - 2], a.shape[n - 1]);
    if h < SSIM_WINDOW || w < SSIM_WINDOW {
        return Err(Error::Domain(format!("SSIM needs at least {SSIM_WINDOW}×{SSIM_WINDOW} pixels, got {h}×{w}")));
    }
    if !(data_range > 0.0) {
        return Err(Error::Domain("data range must be positive".into()));
    }
    let g = gaussian_window();
    let c1 = (SSIM_K1 * data_range).powi(2);
    let c2 = (SSIM_K2 * data_range).powi(2);
    let mut total = 0.0;
    let mut slices = 0usize;
    for (x, y) in a.slices().zip(b.slices()) {
        let xx: Vec<f64> = x.iter().map(|v| v * v).collect();
        let yy: Vec<f64> = y.iter().map(|v| v * v).collect();
        let xy: Vec<f64> = x.iter().zip(y).map(|(p, q)| p * q).collect();
        let (mx, my) = (filter(x, h, w, &g), filter(y, h, w, &g));
        let (sxx, syy, sxy) = (filter(&xx, h, w, &g), filter(&yy, h, w, &g), filter(&xy, h, w, &g));
        let mut acc = 0.0;
        for i in 0..mx.len() {
            let (ux, uy) = (mx[i], my[i]);
            let vx = sxx[i] - ux * ux;
            let vy = syy[i] - uy * uy;
            let cov = sxy[i] - ux * uy;
            acc += ((2.0 * ux * uy + c1) * (2.0 * cov + c2))
                / ((ux * ux + uy * uy + c1) * (vx + vy + c2));
        }
        total += acc / mx.len() as f64;
        slices += 1;
    }
    Ok(total / slices as f64)
}
