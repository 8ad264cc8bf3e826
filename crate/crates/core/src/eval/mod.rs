//! Image-quality metrics, result tables, convergence curves and PCA of
//! encoder features.

mod metrics;
mod pca;
mod report;

pub use metrics::{gaussian_window, metric_pair, psnr, ssim, Image, SSIM_K1, SSIM_K2, SSIM_SIGMA, SSIM_WINDOW};
pub use pca::{pca_features, Pca};
pub use report::{curve_report, mean_std, write_curves_csv, Curve, CurveMetric, MetricReport, MetricRow, Summary};

use crate::diffcore::Tensor;
use crate::Result;

/// PSNR and SSIM (data range 1) of a reconstruction against ground truth,
/// via [`metric_pair`].
pub fn evaluate(recon: &Tensor, truth: &Tensor) -> Result<(f64, f64)> {
    let (a, b) = metric_pair(recon, truth)?;
    Ok((psnr(&a, &b, 1.0)?, ssim(&a, &b, 1.0)?))
}
