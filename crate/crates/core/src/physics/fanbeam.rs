//! 2-D fan-beam projector with a flat detector.
//!
//! Each (view, detector) ray runs from the source point to the detector cell
//! center. Its line integral is a midpoint sum over fixed steps of half a
//! voxel, reading the image by bilinear interpolation between pixel centers
//! (zero outside the image). The discretization is assembled once into a
//! sparse matrix so the adjoint is its exact transpose.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::diffcore::LinearOperator;
use crate::{Error, Real, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FanBeamGeometry {
    /// Image extents `[rows, cols]` in pixels.
    pub image: [usize; 2],
    /// Pixel pitch in mm.
    pub voxel_size: f64,
    pub source_to_center: f64,
    pub center_to_detector: f64,
    pub detectors: usize,
    /// Detector cell pitch in mm.
    pub detector_spacing: f64,
    /// Source angles in radians.
    pub angles: Vec<f64>,
}

/// `views` angles evenly spaced over `[0, 2π)`.
pub fn full_scan_angles(views: usize) -> Vec<f64> {
    (0..views)
        .map(|k| 2.0 * std::f64::consts::PI * k as f64 / views as f64)
        .collect()
}

impl FanBeamGeometry {
    /// 256², 1 mm voxels, 500 detectors at 2 mm, 300 mm source/detector distances.
    pub fn paper(views: usize) -> Self {
        Self {
            image: [256, 256],
            voxel_size: 1.0,
            source_to_center: 300.0,
            center_to_detector: 300.0,
            detectors: 500,
            detector_spacing: 2.0,
            angles: full_scan_angles(views),
        }
    }

    /// 128², 180 detectors, distances halved relative to [`Self::paper`].
    pub fn desk(views: usize) -> Self {
        Self::desk_sized(128, views)
    }

    /// Desk geometry scaled to an `size × size` image.
    pub fn desk_sized(size: usize, views: usize) -> Self {
        let s = size as f64 / 128.0;
        Self {
            image: [size, size],
            voxel_size: 1.0,
            source_to_center: 150.0 * s,
            center_to_detector: 150.0 * s,
            detectors: ((180.0 * s).round() as usize).max(8),
            detector_spacing: 2.0,
            angles: full_scan_angles(views),
        }
    }

    pub fn views(&self) -> usize {
        self.angles.len()
    }

    pub fn sinogram_shape(&self) -> [usize; 2] {
        [self.views(), self.detectors]
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            self.voxel_size,
            self.source_to_center,
            self.center_to_detector,
            self.detector_spacing,
        ];
        if positive.iter().any(|v| !(*v > 0.0)) {
            return Err(Error::Config("fan-beam distances and spacings must be positive".into()));
        }
        if self.image.contains(&0) || self.detectors == 0 || self.angles.is_empty() {
            return Err(Error::Config("fan-beam geometry has an empty axis".into()));
        }
        let two_pi = 2.0 * std::f64::consts::PI;
        if self.angles.iter().any(|a| !(0.0..two_pi).contains(a))
            || self.angles.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(Error::Config("view angles must increase strictly within [0, 2π)".into()));
        }
        let half_diag = 0.5
            * self.voxel_size
            * ((self.image[0] as f64).powi(2) + (self.image[1] as f64).powi(2)).sqrt();
        if self.source_to_center <= half_diag {
            return Err(Error::Config("source lies inside the image field of view".into()));
        }
        Ok(())
    }

    /// Detector coordinate (mm, along the detector axis) of cell `k`.
    pub fn detector_offset(&self, k: usize) -> f64 {
        (k as f64 + 0.5 - self.detectors as f64 / 2.0) * self.detector_spacing
    }

    /// World position (mm) of pixel center `(row, col)`.
    pub fn pixel_center(&self, row: usize, col: usize) -> [f64; 2] {
        let v = self.voxel_size;
        [
            (col as f64 + 0.5 - self.image[1] as f64 / 2.0) * v,
            (row as f64 + 0.5 - self.image[0] as f64 / 2.0) * v,
        ]
    }

    /// Source point and detector-cell center of ray `(view, det)`.
    pub fn ray(&self, view: usize, det: usize) -> ([f64; 2], [f64; 2]) {
        let (s, c) = self.angles[view].sin_cos();
        let src = [self.source_to_center * c, self.source_to_center * s];
        let u = self.detector_offset(det);
        let dst = [
            -self.center_to_detector * c - u * s,
            -self.center_to_detector * s + u * c,
        ];
        (src, dst)
    }

    /// Interpolation samples `(pixel index, weight)` along one ray, before
    /// merging duplicates. Weights include the step length in mm.
    pub fn ray_samples(&self, view: usize, det: usize) -> Vec<(u32, f64)> {
        let (src, dst) = self.ray(view, det);
        let (rows, cols) = (self.image[0], self.image[1]);
        let v = self.voxel_size;
        let d = [dst[0] - src[0], dst[1] - src[1]];
        let len = (d[0] * d[0] + d[1] * d[1]).sqrt();
        let dir = [d[0] / len, d[1] / len];
        // Bilinear support reaches half a voxel past the outer pixel centers.
        let half = [(cols as f64 / 2.0 + 0.5) * v, (rows as f64 / 2.0 + 0.5) * v];
        let (mut t0, mut t1) = (0.0f64, len);
        for k in 0..2 {
            if dir[k].abs() < 1e-12 {
                if src[k].abs() >= half[k] {
                    return Vec::new();
                }
                continue;
            }
            let a = (-half[k] - src[k]) / dir[k];
            let b = (half[k] - src[k]) / dir[k];
            t0 = t0.max(a.min(b));
            t1 = t1.min(a.max(b));
        }
        if t1 <= t0 {
            return Vec::new();
        }
        let n = ((t1 - t0) / (0.5 * v)).ceil().max(1.0) as usize;
        let step = (t1 - t0) / n as f64;
        let mut out = Vec::with_capacity(4 * n);
        for i in 0..n {
            let t = t0 + (i as f64 + 0.5) * step;
            let fx = (src[0] + t * dir[0]) / v + cols as f64 / 2.0 - 0.5;
            let fy = (src[1] + t * dir[1]) / v + rows as f64 / 2.0 - 0.5;
            let (x0, y0) = (fx.floor(), fy.floor());
            let (wx, wy) = (fx - x0, fy - y0);
            for (dy, wyy) in [(0i64, 1.0 - wy), (1, wy)] {
                let y = y0 as i64 + dy;
                if y < 0 || y >= rows as i64 {
                    continue;
                }
                for (dx, wxx) in [(0i64, 1.0 - wx), (1, wx)] {
                    let x = x0 as i64 + dx;
                    if x < 0 || x >= cols as i64 {
                        continue;
                    }
                    let w = wxx * wyy * step;
                    if w != 0.0 {
                        out.push(((y as usize * cols + x as usize) as u32, w));
                    }
                }
            }
        }
        out
    }
}

/// Assembled fan-beam system matrix (CSR by ray, plus its transpose).
pub struct FanBeamProjector {
    geom: FanBeamGeometry,
    image_shape: Vec<usize>,
    meas_shape: Vec<usize>,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    vals: Vec<Real>,
    t_ptr: Vec<usize>,
    t_rows: Vec<u32>,
    t_vals: Vec<Real>,
}

impl FanBeamProjector {
    pub fn new(geom: FanBeamGeometry) -> Result<Self> {
        geom.validate()?;
        let [views, dets] = geom.sinogram_shape();
        let per_ray: Vec<Vec<(u32, Real)>> = (0..views * dets)
            .into_par_iter()
            .map(|r| {
                let mut s = geom.ray_samples(r / dets, r % dets);
                s.sort_unstable_by_key(|e| e.0);
                let mut merged: Vec<(u32, f64)> = Vec::with_capacity(s.len() / 2);
                for (p, w) in s {
                    match merged.last_mut() {
                        Some(last) if last.0 == p => last.1 += w,
                        _ => merged.push((p, w)),
                    }
                }
                merged.into_iter().map(|(p, w)| (p, w as Real)).collect()
            })
            .collect();

        let npix = geom.image[0] * geom.image[1];
        let nnz: usize = per_ray.iter().map(Vec::len).sum();
        let mut row_ptr = Vec::with_capacity(per_ray.len() + 1);
        let mut cols = Vec::with_capacity(nnz);
        let mut vals = Vec::with_capacity(nnz);
        row_ptr.push(0);
        for ray in &per_ray {
            for &(p, w) in ray {
                cols.push(p);
                vals.push(w);
            }
            row_ptr.push(cols.len());
        }

        let mut counts = vec![0usize; npix + 1];
        for &c in &cols {
            counts[c as usize + 1] += 1;
        }
        for i in 0..npix {
            counts[i + 1] += counts[i];
        }
        let t_ptr = counts.clone();
        let mut fill = counts;
        let mut t_rows = vec![0u32; nnz];
        let mut t_vals = vec![0.0; nnz];
        for r in 0..per_ray.len() {
            for e in row_ptr[r]..row_ptr[r + 1] {
                let c = cols[e] as usize;
                t_rows[fill[c]] = r as u32;
                t_vals[fill[c]] = vals[e];
                fill[c] += 1;
            }
        }
        Ok(Self {
            image_shape: geom.image.to_vec(),
            meas_shape: vec![views, dets],
            geom,
            row_ptr,
            cols,
            vals,
            t_ptr,
            t_rows,
            t_vals,
        })
    }

    pub fn geometry(&self) -> &FanBeamGeometry {
        &self.geom
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    /// Pixels with nonzero weight on ray `(view, det)`.
    pub fn ray_support(&self, view: usize, det: usize) -> Vec<usize> {
        let r = view * self.geom.detectors + det;
        self.cols[self.row_ptr[r]..self.row_ptr[r + 1]]
            .iter()
            .map(|&c| c as usize)
            .collect()
    }
}

impl LinearOperator for FanBeamProjector {
    fn image_shape(&self) -> &[usize] {
        &self.image_shape
    }

    fn measurement_shape(&self) -> &[usize] {
        &self.meas_shape
    }

    fn forward(&self, x: &[Real]) -> Vec<Real> {
        let mut y = vec![0.0; self.row_ptr.len() - 1];
        y.par_iter_mut().enumerate().for_each(|(r, out)| {
            let mut acc = 0.0f64;
            for e in self.row_ptr[r]..self.row_ptr[r + 1] {
                acc += self.vals[e] as f64 * x[self.cols[e] as usize] as f64;
            }
            *out = acc as Real;
        });
        y
    }

    fn adjoint(&self, y: &[Real]) -> Vec<Real> {
        let mut x = vec![0.0; self.t_ptr.len() - 1];
        x.par_iter_mut().enumerate().for_each(|(p, out)| {
            let mut acc = 0.0f64;
            for e in self.t_ptr[p]..self.t_ptr[p + 1] {
                acc += self.t_vals[e] as f64 * y[self.t_rows[e] as usize] as f64;
            }
            *out = acc as Real;
        });
        x
    }
}

/// Forward projection of a `rows × cols` image.
pub fn fanbeam_forward(proj: &FanBeamProjector, image: &crate::diffcore::Tensor) -> Result<crate::diffcore::Tensor> {
    proj.apply(image)
}

/// Exact transpose of [`fanbeam_forward`].
pub fn fanbeam_adjoint(proj: &FanBeamProjector, sinogram: &crate::diffcore::Tensor) -> Result<crate::diffcore::Tensor> {
    proj.apply_adjoint(sinogram)
}
