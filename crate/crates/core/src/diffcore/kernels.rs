//! Dense matrix kernels.
//!
//! Work is split into fixed-size row blocks so the summation order, and with
//! it every rounding, is independent of how many threads execute the blocks.

use rayon::prelude::*;

use crate::Real;

const ROW_BLOCK: usize = 512;

#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[Real],
    rsa: isize,
    csa: isize,
    b: &[Real],
    rsb: isize,
    csb: isize,
    c: &mut [Real],
    accumulate: bool,
) {
    if m == 0 || n == 0 {
        return;
    }
    let beta = if accumulate { 1.0 } else { 0.0 };
    // SAFETY: callers pass slices whose extents cover every (row, col) addressed
    // by the given dimensions and strides; `c` is dense row-major m×n.
    unsafe {
        #[cfg(not(feature = "f64"))]
        matrixmultiply::sgemm(
            m, k, n, 1.0, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta,
            c.as_mut_ptr(), n as isize, 1,
        );
        #[cfg(feature = "f64")]
        matrixmultiply::dgemm(
            m, k, n, 1.0, a.as_ptr(), rsa, csa, b.as_ptr(), rsb, csb, beta,
            c.as_mut_ptr(), n as isize, 1,
        );
    }
}

/// `A (m×k) · B (k×n)`.
pub(crate) fn matmul(a: &[Real], b: &[Real], m: usize, k: usize, n: usize) -> Vec<Real> {
    let mut c = vec![0.0; m * n];
    c.par_chunks_mut(ROW_BLOCK * n)
        .enumerate()
        .for_each(|(blk, out)| {
            let rows = out.len() / n;
            let a_blk = &a[blk * ROW_BLOCK * k..(blk * ROW_BLOCK + rows) * k];
            gemm(rows, k, n, a_blk, k as isize, 1, b, n as isize, 1, out, false);
        });
    c
}

/// `G (m×n) · Bᵀ` where `B` is k×n; result m×k.
pub(crate) fn matmul_bt(g: &[Real], b: &[Real], m: usize, k: usize, n: usize) -> Vec<Real> {
    let mut c = vec![0.0; m * k];
    c.par_chunks_mut(ROW_BLOCK * k)
        .enumerate()
        .for_each(|(blk, out)| {
            let rows = out.len() / k;
            let g_blk = &g[blk * ROW_BLOCK * n..(blk * ROW_BLOCK + rows) * n];
            gemm(rows, n, k, g_blk, n as isize, 1, b, 1, n as isize, out, false);
        });
    c
}

/// `Aᵀ · G` where `A` is m×k and `G` is m×n; result k×n.
///
/// Partial products over row blocks are reduced in block order.
pub(crate) fn matmul_at(a: &[Real], g: &[Real], m: usize, k: usize, n: usize) -> Vec<Real> {
    let blocks = m.div_ceil(ROW_BLOCK);
    let partials: Vec<Vec<Real>> = (0..blocks)
        .into_par_iter()
        .map(|blk| {
            let r0 = blk * ROW_BLOCK;
            let rows = (m - r0).min(ROW_BLOCK);
            let mut part = vec![0.0; k * n];
            let a_blk = &a[r0 * k..(r0 + rows) * k];
            let g_blk = &g[r0 * n..(r0 + rows) * n];
            gemm(k, rows, n, a_blk, 1, k as isize, g_blk, n as isize, 1, &mut part, false);
            part
        })
        .collect();
    let mut iter = partials.into_iter();
    let mut acc = iter.next().unwrap_or_else(|| vec![0.0; k * n]);
    for part in iter {
        for (x, y) in acc.iter_mut().zip(part) {
            *x += y;
        }
    }
    acc
}

#[cfg(test)]
mod tests {
    use super::*;

    fn naive(a: &[Real], b: &[Real], m: usize, k: usize, n: usize) -> Vec<f64> {
        let mut c = vec![0.0; m * n];
        for i in 0..m {
            for j in 0..n {
                for p in 0..k {
                    c[i * n + j] += a[i * k + p] as f64 * b[p * n + j] as f64;
                }
            }
        }
        c
    }

    fn transpose(x: &[Real], r: usize, c: usize) -> Vec<Real> {
        let mut t = vec![0.0; r * c];
        for i in 0..r {
            for j in 0..c {
                t[j * r + i] = x[i * c + j];
            }
        }
        t
    }

    fn seq(n: usize, s: f64) -> Vec<Real> {
        (0..n).map(|i| ((i as f64 * s).sin()) as Real).collect()
    }

    #[test]
    fn kernels_agree_with_triple_loop() {
        let (m, k, n) = (1100, 7, 5);
        let a = seq(m * k, 0.37);
        let b = seq(k * n, 1.3);
        let g = seq(m * n, 0.71);
        let close = |x: &[Real], y: &[f64]| {
            x.iter().zip(y).all(|(&p, &q)| (p as f64 - q).abs() < 1e-4 * (1.0 + q.abs()))
        };
        assert!(close(&matmul(&a, &b, m, k, n), &naive(&a, &b, m, k, n)));
        let bt = transpose(&b, k, n);
        assert!(close(&matmul_bt(&g, &b, m, k, n), &naive(&g, &bt, m, n, k)));
        let at = transpose(&a, m, k);
        let expect = naive(&at, &g, k, m, n);
        let got = matmul_at(&a, &g, m, k, n);
        assert!(got
            .iter()
            .zip(&expect)
            .all(|(&p, &q)| (p as f64 - q).abs() < 1e-3 * (1.0 + q.abs())));
    }
}
