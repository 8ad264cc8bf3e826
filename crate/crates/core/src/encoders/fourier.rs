use crate::diffcore::Tensor;
use crate::{Error, Real, Result};

/// Positional encoding `[sin(2^k π c), cos(2^k π c)]`, k = 0..num_freqs, per axis.
///
/// Column layout: axis-major, then frequency, then (sin, cos).
pub fn fourier_encode(coords: &Tensor, num_freqs: usize) -> Result<Tensor> {
    if num_freqs == 0 {
        return Err(Error::Domain("num_freqs must be at least 1".into()));
    }
    let (rows, d) = coords.dims2()?;
    let width = 2 * d * num_freqs;
    let mut out = Vec::with_capacity(rows * width);
    for c in coords.data().chunks_exact(d) {
        for &x in c {
            for k in 0..num_freqs {
                let arg = (1u64 << k) as f64 * std::f64::consts::PI * x as f64;
                out.push(arg.sin() as Real);
                out.push(arg.cos() as Real);
            }
        }
    }
    Tensor::new(vec![rows, width], out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn known_values() {
        let c = Tensor::new(vec![1, 1], vec![0.0]).unwrap();
        let e = fourier_encode(&c, 3).unwrap();
        assert_eq!(e.data(), &[0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);

        let c = Tensor::new(vec![1, 1], vec![1.0]).unwrap();
        let e = fourier_encode(&c, 1).unwrap();
        assert!(e.data()[0].abs() < 1e-6);
        assert_eq!(e.data()[1], -1.0);

        let c = Tensor::zeros(&[5, 2]);
        assert_eq!(fourier_encode(&c, 6).unwrap().shape(), &[5, 24]);
        assert!(fourier_encode(&c, 0).is_err());
    }
}
