//! Ellipse phantom families.
//!
//! Coordinates are normalized to `[-1, 1]` with `x` to the right and `y`
//! up. Ellipse intensities add; the sum is clipped to `[0, 1]`.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::diffcore::Tensor;
use crate::{rng, Error, Real, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Ellipse {
    /// Additive intensity.
    pub intensity: f64,
    pub center: [f64; 2],
    /// Semi-axes along the rotated x and y directions.
    pub axes: [f64; 2],
    /// Counter-clockwise rotation in degrees.
    pub angle_deg: f64,
}

impl Ellipse {
    const fn new(intensity: f64, axes: [f64; 2], center: [f64; 2], angle_deg: f64) -> Self {
        Self {
            intensity,
            center,
            axes,
            angle_deg,
        }
    }

    pub fn contains(&self, x: f64, y: f64) -> bool {
        let (s, c) = self.angle_deg.to_radians().sin_cos();
        let (dx, dy) = (x - self.center[0], y - self.center[1]);
        let u = (dx * c + dy * s) / self.axes[0];
        let v = (-dx * s + dy * c) / self.axes[1];
        u * u + v * v <= 1.0
    }
}

/// Modified (higher-contrast) Shepp-Logan head.
pub const SHEPP_LOGAN: [Ellipse; 10] = [
    Ellipse::new(1.0, [0.69, 0.92], [0.0, 0.0], 0.0),
    Ellipse::new(-0.8, [0.6624, 0.874], [0.0, -0.0184], 0.0),
    Ellipse::new(-0.2, [0.11, 0.31], [0.22, 0.0], -18.0),
    Ellipse::new(-0.2, [0.16, 0.41], [-0.22, 0.0], 18.0),
    Ellipse::new(0.1, [0.21, 0.25], [0.0, 0.35], 0.0),
    Ellipse::new(0.1, [0.046, 0.046], [0.0, 0.1], 0.0),
    Ellipse::new(0.1, [0.046, 0.046], [0.0, -0.1], 0.0),
    Ellipse::new(0.1, [0.046, 0.023], [-0.08, -0.605], 0.0),
    Ellipse::new(0.1, [0.023, 0.023], [0.0, -0.606], 0.0),
    Ellipse::new(0.1, [0.023, 0.046], [0.06, -0.605], 0.0),
];

/// Smoother, brighter layout with two dark ventricle-like lobes.
pub const ELLIPSE_FAMILY: [Ellipse; 7] = [
    Ellipse::new(0.6, [0.78, 0.88], [0.0, 0.0], 0.0),
    Ellipse::new(0.15, [0.62, 0.74], [0.0, 0.02], 0.0),
    Ellipse::new(-0.35, [0.12, 0.28], [-0.22, 0.05], 15.0),
    Ellipse::new(-0.35, [0.12, 0.28], [0.22, 0.05], -15.0),
    Ellipse::new(0.2, [0.25, 0.12], [0.0, -0.45], 0.0),
    Ellipse::new(0.15, [0.18, 0.1], [0.0, 0.45], 30.0),
    Ellipse::new(-0.2, [0.08, 0.08], [0.35, -0.3], 0.0),
];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    SheppLogan,
    EllipseFamily,
}

impl Family {
    pub fn base(self) -> Vec<Ellipse> {
        match self {
            Family::SheppLogan => SHEPP_LOGAN.to_vec(),
            Family::EllipseFamily => ELLIPSE_FAMILY.to_vec(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PhantomFamilyConfig {
    pub family: Family,
    /// `[rows, cols]`.
    pub extents: [usize; 2],
    pub population: usize,
    /// Replaces the family's base layout when set.
    pub ellipses: Option<Vec<Ellipse>>,
    /// Per-ellipse center shift, uniform in `±center_jitter` per axis.
    pub center_jitter: f64,
    /// Relative semi-axis scaling, uniform in `1 ± axis_jitter`.
    pub axis_jitter: f64,
    /// Additive intensity change, uniform in `±intensity_jitter`.
    pub intensity_jitter: f64,
    pub lesion_probability: f64,
    /// Lesion radius range (normalized units).
    pub lesion_radius: [f64; 2],
    pub lesion_intensity: f64,
    pub seed: u64,
}

impl Default for PhantomFamilyConfig {
    fn default() -> Self {
        Self {
            family: Family::EllipseFamily,
            extents: [64, 64],
            population: 10,
            ellipses: None,
            center_jitter: 0.03,
            axis_jitter: 0.08,
            intensity_jitter: 0.05,
            lesion_probability: 0.5,
            lesion_radius: [0.04, 0.1],
            lesion_intensity: 0.35,
            seed: 0,
        }
    }
}

impl PhantomFamilyConfig {
    pub fn base(&self) -> Vec<Ellipse> {
        self.ellipses.clone().unwrap_or_else(|| self.family.base())
    }

    pub fn validate(&self) -> Result<()> {
        if self.population == 0 {
            return Err(Error::Config("phantom population must be at least 1".into()));
        }
        if self.extents.contains(&0) {
            return Err(Error::Config("phantom extents must be positive".into()));
        }
        let base = self.base();
        if base.is_empty() || base.iter().any(|e| !(e.axes[0] > 0.0 && e.axes[1] > 0.0)) {
            return Err(Error::Config("every ellipse needs positive semi-axes".into()));
        }
        if !(0.0..1.0).contains(&self.axis_jitter) {
            return Err(Error::Config("axis jitter must lie in [0, 1) to keep axes positive".into()));
        }
        if [self.center_jitter, self.intensity_jitter].iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Config("jitter ranges must be non-negative".into()));
        }
        if !(0.0..=1.0).contains(&self.lesion_probability) {
            return Err(Error::Config("lesion probability must lie in [0, 1]".into()));
        }
        let [lo, hi] = self.lesion_radius;
        if self.lesion_probability > 0.0 && !(lo > 0.0 && hi >= lo) {
            return Err(Error::Config("lesion radius range must be positive and ordered".into()));
        }
        Ok(())
    }
}

/// Ellipses of subject `index`: the perturbed base plus an optional lesion.
pub fn subject_ellipses(cfg: &PhantomFamilyConfig, index: usize) -> Vec<Ellipse> {
    let mut r = rng::stream(cfg.seed, &format!("phantom/{index}"));
    let sym = |r: &mut rng::Rng, a: f64| if a > 0.0 { r.random_range(-a..=a) } else { 0.0 };
    let mut out: Vec<Ellipse> = cfg
        .base()
        .into_iter()
        .map(|e| {
            let dc = [sym(&mut r, cfg.center_jitter), sym(&mut r, cfg.center_jitter)];
            let da = [sym(&mut r, cfg.axis_jitter), sym(&mut r, cfg.axis_jitter)];
            let di = sym(&mut r, cfg.intensity_jitter);
            Ellipse {
                intensity: e.intensity + di,
                center: [e.center[0] + dc[0], e.center[1] + dc[1]],
                axes: [e.axes[0] * (1.0 + da[0]), e.axes[1] * (1.0 + da[1])],
                angle_deg: e.angle_deg,
            }
        })
        .collect();
    if cfg.lesion_probability > 0.0 && r.random::<f64>() < cfg.lesion_probability {
        let [lo, hi] = cfg.lesion_radius;
        let radius = if hi > lo { r.random_range(lo..hi) } else { lo };
        let (rho, theta) = (0.45 * r.random::<f64>().sqrt(), r.random_range(0.0..std::f64::consts::TAU));
        out.push(Ellipse {
            intensity: cfg.lesion_intensity,
            center: [rho * theta.cos(), rho * theta.sin()],
            axes: [radius, radius * r.random_range(0.7..1.0)],
            angle_deg: r.random_range(0.0..180.0),
        });
    }
    out
}

/// Rasterizes ellipses with 2×2 supersampling, clipped to `[0, 1]`.
pub fn rasterize(ellipses: &[Ellipse], extents: [usize; 2]) -> Tensor {
    let [h, w] = extents;
    let mut data = vec![0.0 as Real; h * w];
    for i in 0..h {
        for j in 0..w {
            let mut acc = 0.0;
            for (oy, ox) in [(0.25, 0.25), (0.25, 0.75), (0.75, 0.25), (0.75, 0.75)] {
                let x = 2.0 * (j as f64 + ox) / w as f64 - 1.0;
                let y = 1.0 - 2.0 * (i as f64 + oy) / h as f64;
                let v: f64 = ellipses.iter().filter(|e| e.contains(x, y)).map(|e| e.intensity).sum();
                acc += v.clamp(0.0, 1.0);
            }
            data[i * w + j] = (acc / 4.0) as Real;
        }
    }
    Tensor::new(vec![h, w], data).expect("shape matches")
}

/// The unperturbed base phantom.
pub fn base_phantom(cfg: &PhantomFamilyConfig) -> Result<Tensor> {
    cfg.validate()?;
    Ok(rasterize(&cfg.base(), cfg.extents))
}

/// `population` subjects sharing the base layout. Pure in `cfg`.
pub fn gen_family(cfg: &PhantomFamilyConfig) -> Result<Vec<Tensor>> {
    cfg.validate()?;
    Ok((0..cfg.population)
        .map(|i| rasterize(&subject_ellipses(cfg, i), cfg.extents))
        .collect())
}
