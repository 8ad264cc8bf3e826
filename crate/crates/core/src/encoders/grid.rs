use crate::diffcore::Tensor;
use crate::{Error, Real, Result};

/// Normalized pixel-center coordinates of a lattice.
///
/// Rows enumerate lattice points in row-major order (last axis fastest); the
/// coordinate of index `i` along axis `k` is `(i + 0.5) / extents[k]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CoordinateGrid {
    extents: Vec<usize>,
    coords: Tensor,
}

impl CoordinateGrid {
    pub fn extents(&self) -> &[usize] {
        &self.extents
    }

    pub fn dims(&self) -> usize {
        self.extents.len()
    }

    pub fn len(&self) -> usize {
        self.extents.iter().product()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// `len() × dims()` coordinate matrix.
    pub fn coords(&self) -> &Tensor {
        &self.coords
    }
}

pub fn make_grid(extents: &[usize]) -> Result<CoordinateGrid> {
    if extents.is_empty() || extents.contains(&0) {
        return Err(Error::Domain(format!("grid extents {extents:?}")));
    }
    let d = extents.len();
    let n: usize = extents.iter().product();
    let mut data = Vec::with_capacity(n * d);
    let mut idx = vec![0usize; d];
    for _ in 0..n {
        for (k, &i) in idx.iter().enumerate() {
            data.push(((i as f64 + 0.5) / extents[k] as f64) as Real);
        }
        for k in (0..d).rev() {
            idx[k] += 1;
            if idx[k] < extents[k] {
                break;
            }
            idx[k] = 0;
        }
    }
    Ok(CoordinateGrid {
        extents: extents.to_vec(),
        coords: Tensor::new(vec![n, d], data)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pixel_centers() {
        let g = make_grid(&[2]).unwrap();
        assert_eq!(g.coords().data(), &[0.25, 0.75]);
        let g = make_grid(&[1, 1]).unwrap();
        assert_eq!(g.coords().data(), &[0.5, 0.5]);
        let g = make_grid(&[256, 256]).unwrap();
        assert_eq!(g.coords().shape(), &[65536, 2]);
        assert_eq!(&g.coords().data()[..2], &[0.5 / 256.0, 0.5 / 256.0]);
        // row-major: second row advances the last axis
        assert_eq!(&g.coords().data()[2..4], &[0.5 / 256.0, 1.5 / 256.0]);
        assert!(make_grid(&[4, 0]).is_err());
    }
}
