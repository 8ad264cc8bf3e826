//! k-space sampling patterns.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::diffcore::Tensor;
use crate::{rng, Error, Real, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaskPattern {
    /// Full phase-encode rows (axis 0): centered ACS block plus evenly spaced outer rows.
    Cartesian1d,
    /// Golden-angle spokes through the k-space center.
    Radial,
    /// Variable-density Poisson-disc points with a fully sampled center.
    Poisson,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SamplingMaskConfig {
    pub pattern: MaskPattern,
    pub acceleration: f64,
    /// Fully sampled center rows (Cartesian only).
    #[serde(default)]
    pub acs: usize,
    #[serde(default)]
    pub seed: u64,
}

impl SamplingMaskConfig {
    pub fn cartesian(acceleration: f64, acs: usize) -> Self {
        Self {
            pattern: MaskPattern::Cartesian1d,
            acceleration,
            acs,
            seed: 0,
        }
    }

    pub fn radial(acceleration: f64) -> Self {
        Self {
            pattern: MaskPattern::Radial,
            acceleration,
            acs: 0,
            seed: 0,
        }
    }

    pub fn poisson(acceleration: f64, seed: u64) -> Self {
        Self {
            pattern: MaskPattern::Poisson,
            acceleration,
            acs: 0,
            seed,
        }
    }
}

/// Total sample count over sampled count (`∞` for an empty mask).
pub fn realized_acceleration(mask: &Tensor) -> f64 {
    let on = mask.data().iter().filter(|&&m| m != 0.0).count();
    mask.numel() as f64 / on as f64
}

pub fn make_mask(cfg: &SamplingMaskConfig, extents: [usize; 2]) -> Result<Tensor> {
    let [h, w] = extents;
    if h == 0 || w == 0 {
        return Err(Error::dim("mask grid must be non-empty"));
    }
    if !(cfg.acceleration >= 1.0) || !cfg.acceleration.is_finite() {
        return Err(Error::Config(format!(
            "acceleration factor must be finite and at least 1, got {}",
            cfg.acceleration
        )));
    }
    if cfg.acceleration == 1.0 {
        return Tensor::new(vec![h, w], vec![1.0; h * w]);
    }
    let data = match cfg.pattern {
        MaskPattern::Cartesian1d => cartesian(h, w, cfg.acceleration, cfg.acs)?,
        MaskPattern::Radial => radial(h, w, cfg.acceleration),
        MaskPattern::Poisson => poisson(h, w, cfg.acceleration, cfg.seed),
    };
    Tensor::new(vec![h, w], data)
}

fn cartesian(h: usize, w: usize, af: f64, acs: usize) -> Result<Vec<Real>> {
    let budget = ((h as f64 / af).round() as usize).max(1);
    if acs > budget || acs > h {
        return Err(Error::Config(format!(
            "ACS width {acs} exceeds the {budget} lines allowed at AF {af} on {h} lines"
        )));
    }
    let start = h / 2 - acs / 2;
    let mut rows = vec![false; h];
    rows[start..start + acs].iter_mut().for_each(|r| *r = true);
    let outer: Vec<usize> = (0..h).filter(|&i| !rows[i]).collect();
    let extra = budget - acs;
    for j in 0..extra {
        let idx = ((j as f64 + 0.5) * outer.len() as f64 / extra as f64) as usize;
        rows[outer[idx.min(outer.len() - 1)]] = true;
    }
    let mut data = vec![0.0; h * w];
    for (i, _) in rows.iter().enumerate().filter(|(_, &on)| on) {
        data[i * w..(i + 1) * w].iter_mut().for_each(|v| *v = 1.0);
    }
    Ok(data)
}

fn radial(h: usize, w: usize, af: f64) -> Vec<Real> {
    let target = (h * w) as f64 / af;
    let golden = std::f64::consts::PI * 2.0 / (1.0 + 5f64.sqrt());
    let (cy, cx) = ((h / 2) as f64, (w / 2) as f64);
    let reach = 0.5 * (h.max(w) as f64) * std::f64::consts::SQRT_2;
    let mut mask = vec![0.0; h * w];
    let mut count = 0usize;
    for k in 0.. {
        let (s, c) = (k as f64 * golden).sin_cos();
        let mut next = mask.clone();
        let mut next_count = count;
        let steps = (2.0 * reach / 0.5).ceil() as i64;
        for t in 0..=steps {
            let r = -reach + 0.5 * t as f64;
            let (y, x) = ((cy + r * s).round(), (cx + r * c).round());
            if y < 0.0 || x < 0.0 || y >= h as f64 || x >= w as f64 {
                continue;
            }
            let p = y as usize * w + x as usize;
            if next[p] == 0.0 {
                next[p] = 1.0;
                next_count += 1;
            }
        }
        if next_count as f64 >= target {
            // Keep whichever side of the budget lands closer.
            if count > 0 && target - count as f64 <= next_count as f64 - target {
                return mask;
            }
            return next;
        }
        if next_count == h * w {
            return next;
        }
        mask = next;
        count = next_count;
    }
    unreachable!()
}

/// Accepted points for minimum distance `r0 · (1 + 2ρ)`, where `ρ` is the
/// normalized distance to the center. The central disc is always sampled.
fn poisson_pass(h: usize, w: usize, order: &[usize], r0: f64) -> Vec<Real> {
    let (cy, cx) = ((h / 2) as f64, (w / 2) as f64);
    let rmax = (cy * cy + cx * cx).sqrt().max(1.0);
    let calib = (h.min(w) as f64 / 24.0).max(1.5);
    let radius = |i: usize, j: usize| {
        let rho = ((i as f64 - cy).powi(2) + (j as f64 - cx).powi(2)).sqrt() / rmax;
        r0 * (1.0 + 2.0 * rho)
    };
    let mut mask = vec![0.0; h * w];
    for i in 0..h {
        for j in 0..w {
            if (i as f64 - cy).hypot(j as f64 - cx) <= calib {
                mask[i * w + j] = 1.0;
            }
        }
    }
    let window = (3.0 * r0).ceil() as i64;
    for &p in order {
        let (i, j) = (p / w, p % w);
        if mask[p] != 0.0 {
            continue;
        }
        let rp = radius(i, j);
        let mut free = true;
        'scan: for di in -window..=window {
            let y = i as i64 + di;
            if y < 0 || y >= h as i64 {
                continue;
            }
            for dj in -window..=window {
                let x = j as i64 + dj;
                if x < 0 || x >= w as i64 || mask[y as usize * w + x as usize] == 0.0 {
                    continue;
                }
                if ((di * di + dj * dj) as f64).sqrt() < rp {
                    free = false;
                    break 'scan;
                }
            }
        }
        if free {
            mask[p] = 1.0;
        }
    }
    mask
}

fn poisson(h: usize, w: usize, af: f64, seed: u64) -> Vec<Real> {
    let mut order: Vec<usize> = (0..h * w).collect();
    order.shuffle(&mut rng::stream(seed, "poisson_mask"));
    let target = (h * w) as f64 / af;
    let count = |m: &[Real]| m.iter().filter(|&&v| v != 0.0).count() as f64;
    let (mut lo, mut hi) = (0.5f64, (h.max(w) as f64) / 2.0);
    let mut best = poisson_pass(h, w, &order, lo);
    let mut best_err = (count(&best) - target).abs();
    for _ in 0..30 {
        let mid = 0.5 * (lo + hi);
        let m = poisson_pass(h, w, &order, mid);
        let n = count(&m);
        let err = (n - target).abs();
        if err < best_err {
            best = m;
            best_err = err;
        }
        if best_err <= 0.01 * target {
            break;
        }
        if n > target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    best
}
