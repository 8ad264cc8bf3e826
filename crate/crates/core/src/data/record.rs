use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::diffcore::{LinearOperator, Tensor};
use crate::physics::{add_gaussian_noise, to_complex, OperatorDesc};
use crate::{rng, Error, Result};

/// One acquisition: measurements, the operator that produced them and,
/// for synthetic data, the ground truth.
#[derive(Clone, Debug, PartialEq)]
pub struct MeasurementRecord {
    pub id: String,
    pub measurement: Tensor,
    pub operator: OperatorDesc,
    pub noise_sigma: f64,
    /// Shaped like the operator input (complex `[H, W, 2]` for MRI).
    pub ground_truth: Option<Tensor>,
}

impl MeasurementRecord {
    pub fn validate(&self) -> Result<()> {
        if !(self.noise_sigma >= 0.0) {
            return Err(Error::Config(format!("record {}: noise sigma must be ≥ 0", self.id)));
        }
        let op = self.operator.build()?;
        if self.measurement.shape() != op.measurement_shape() {
            return Err(Error::dim(format!(
                "record {}: measurement {:?} does not match operator {:?}",
                self.id,
                self.measurement.shape(),
                op.measurement_shape()
            )));
        }
        if let Some(gt) = &self.ground_truth {
            if gt.shape() != op.image_shape() {
                return Err(Error::dim(format!(
                    "record {}: ground truth {:?} does not match operator input {:?}",
                    self.id,
                    gt.shape(),
                    op.image_shape()
                )));
            }
        }
        Ok(())
    }
}

/// `y = A x + σ ε` for each image. Real images feeding a complex operator
/// are embedded with zero imaginary part. Record ids are `{prefix}{index}`.
pub fn simulate_measurements(
    images: &[Tensor],
    operator: &OperatorDesc,
    noise_sigma: f64,
    seed: u64,
    prefix: &str,
) -> Result<Vec<MeasurementRecord>> {
    if !(noise_sigma >= 0.0) {
        return Err(Error::Config("noise sigma must be non-negative".into()));
    }
    let op = operator.build()?;
    images
        .iter()
        .enumerate()
        .map(|(i, img)| {
            let x = if operator.channels() == 2 && img.ndim() == 2 {
                to_complex(img)?
            } else {
                img.clone()
            };
            let mut y = op.apply(&x)?;
            let id = format!("{prefix}{i:03}");
            add_gaussian_noise(&mut y, noise_sigma, rng::sub_seed(seed, &format!("noise/{id}")))?;
            Ok(MeasurementRecord {
                id,
                measurement: y,
                operator: operator.clone(),
                noise_sigma,
                ground_truth: Some(x),
            })
        })
        .collect()
}

/// Record indices of the three evaluation roles.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Split {
    pub pretrain: Vec<usize>,
    pub test_in: Vec<usize>,
    pub test_out: Vec<usize>,
}

/// Seeded shuffle of `0..n` cut by `fractions` (pre-train, in-domain test,
/// out-of-domain test). Counts are rounded; the last set takes the remainder.
pub fn split(n: usize, fractions: [f64; 3], seed: u64) -> Result<Split> {
    let total: f64 = fractions.iter().sum();
    if fractions.iter().any(|f| !(*f >= 0.0)) || !(total > 0.0) {
        return Err(Error::Config("split fractions must be non-negative with a positive sum".into()));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng::stream(seed, "split"));
    let a = ((fractions[0] / total * n as f64).round() as usize).min(n);
    let b = ((fractions[1] / total * n as f64).round() as usize).min(n - a);
    let c = if fractions[2] > 0.0 { n - a - b } else { 0 };
    let b = if fractions[2] > 0.0 { b } else { n - a };
    let take = |r: std::ops::Range<usize>| {
        let mut v = idx[r].to_vec();
        v.sort_unstable();
        v
    };
    Ok(Split {
        pretrain: take(0..a),
        test_in: take(a..a + b),
        test_out: take(a + b..a + b + c),
    })
}
