use std::collections::HashSet;

use disinr_core::diffcore::{grad_check, GradCheck, Tape, Tensor};
use disinr_core::encoders::{make_grid, HashEncoding, HashEncodingConfig};
use disinr_core::{Real, IS_F64};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn small_cfg() -> HashEncodingConfig {
    HashEncodingConfig {
        levels: 4,
        table_size: 1 << 6,
        features_per_entry: 2,
        base_resolution: 2,
        per_level_scale: 2.0,
    }
}

fn table(enc: &HashEncoding, seed: u64, scale: f64) -> Tensor {
    enc.init_table(&mut ChaCha8Rng::seed_from_u64(seed), scale)
}

#[test]
fn vertex_coordinate_reads_single_entry() {
    let enc = HashEncoding::new(small_cfg(), 2).unwrap();
    let t = table(&enc, 1, 1.0);
    // (0.5, 1.0) is a vertex at every level (res 2, 4, 8, 16).
    let coords = Tensor::new(vec![1, 2], vec![0.5, 1.0]).unwrap();
    let out = enc.encode_values(&t, &coords).unwrap();
    let f = 2;
    for (l, lv) in enc.levels().iter().enumerate() {
        let v = [
            (0.5 * lv.resolution as f64) as u32,
            lv.resolution as u32,
        ];
        let e = lv.offset + enc.vertex_index(l, &v);
        assert_eq!(&out.data()[l * f..(l + 1) * f], &t.data()[e * f..(e + 1) * f]);
    }
}

#[test]
fn zero_table_gives_zero_features() {
    let enc = HashEncoding::new(HashEncodingConfig::desk(), 2).unwrap();
    let t = Tensor::zeros(&enc.table_shape());
    let coords = make_grid(&[7, 5]).unwrap();
    let out = enc.encode_values(&t, coords.coords()).unwrap();
    assert_eq!(out.shape(), &[35, 32]);
    assert!(out.data().iter().all(|&v| v == 0.0));
}

#[test]
fn coordinates_outside_unit_box_are_rejected() {
    let enc = HashEncoding::new(small_cfg(), 2).unwrap();
    let t = table(&enc, 1, 1e-4);
    let bad = Tensor::new(vec![1, 2], vec![0.5, 1.01]).unwrap();
    assert!(matches!(
        enc.encode_values(&t, &bad),
        Err(disinr_core::Error::Domain(_))
    ));
    // both unit-box corners are legal
    let ok = Tensor::new(vec![2, 2], vec![0.0, 0.0, 1.0, 1.0]).unwrap();
    assert!(enc.encode_values(&t, &ok).is_ok());
}

#[test]
fn table_gradient_matches_finite_differences() {
    let enc = HashEncoding::new(small_cfg(), 2).unwrap();
    let t = table(&enc, 3, 0.5);
    let coords = make_grid(&[4, 4]).unwrap().coords().clone();
    let weights = {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        enc.init_table(&mut rng, 1.0);
        let n = 16 * enc.output_dim();
        Tensor::new(
            vec![16, enc.output_dim()],
            (0..n).map(|i| ((i as f64 * 0.37).sin()) as Real).collect(),
        )
        .unwrap()
    };
    let report = grad_check(
        &[t],
        |tape, v| {
            let feats = enc.encode(tape, v[0], &coords)?;
            let w = tape.constant(weights.clone());
            let p = tape.mul(feats, w)?;
            let p = tape.sin(p);
            Ok(tape.sum(p))
        },
        &GradCheck {
            samples: 40,
            step: if IS_F64 { 1e-6 } else { 1e-3 },
            seed: 9,
        },
    )
    .unwrap();
    let tol = if IS_F64 { 1e-5 } else { 1e-2 };
    assert!(report.checked == 40 && report.max_rel_error < tol, "{report:?}");
}

#[test]
fn piecewise_multilinear_within_a_cell() {
    let enc = HashEncoding::new(HashEncodingConfig::desk(), 2).unwrap();
    let t = table(&enc, 5, 1.0);
    // Three collinear points on an axis-parallel segment inside one
    // finest-level cell (res 256) share a cell at every level, where the
    // d-linear interpolant is affine along each axis.
    let (x0, x1, y) = (0.30078125, 0.30078125 + 1.0 / 512.0, 0.6015625 + 1.0 / 2048.0);
    let xm = (x0 + x1) / 2.0;
    let coords = Tensor::new(
        vec![3, 2],
        [x0, y, xm, y, x1, y].into_iter().map(|v| v as Real).collect(),
    )
    .unwrap();
    let out = enc.encode_values(&t, &coords).unwrap();
    let w = enc.output_dim();
    let tol = 1e-5;
    for j in 0..w {
        let (fa, fm, fb) = (
            out.data()[j] as f64,
            out.data()[w + j] as f64,
            out.data()[2 * w + j] as f64,
        );
        let scale = fa.abs().max(fb.abs()).max(1e-3);
        assert!((fm - (fa + fb) / 2.0).abs() / scale < tol, "feature {j}");
    }
}

#[test]
fn dense_levels_are_collision_free() {
    for dims in [2usize, 3] {
        let cfg = HashEncodingConfig {
            levels: 4,
            table_size: 1 << 10,
            features_per_entry: 1,
            base_resolution: 2,
            per_level_scale: 2.0,
        };
        let enc = HashEncoding::new(cfg, dims).unwrap();
        for (l, lv) in enc.levels().iter().enumerate() {
            let side = lv.resolution as u32 + 1;
            let count = (side as usize).pow(dims as u32);
            if !lv.dense {
                assert!(count > 1 << 10);
                continue;
            }
            let mut seen = HashSet::new();
            for flat in 0..count {
                let mut v = [0u32; 3];
                let mut rem = flat;
                for slot in v.iter_mut().take(dims) {
                    *slot = (rem % side as usize) as u32;
                    rem /= side as usize;
                }
                let idx = enc.vertex_index(l, &v[..dims]);
                assert!(idx < lv.entries);
                assert!(seen.insert(idx), "collision at level {l}");
            }
            assert_eq!(seen.len(), lv.entries);
        }
    }
}

#[test]
fn entry_counts_follow_dense_rule() {
    let enc = HashEncoding::new(HashEncodingConfig::paper(), 3).unwrap();
    for lv in enc.levels() {
        let dense = (lv.resolution + 1).pow(3);
        assert_eq!(lv.entries, dense.min(1 << 18));
    }
    let res: Vec<usize> = enc.levels().iter().map(|l| l.resolution).collect();
    assert!(res.windows(2).all(|w| w[0] <= w[1]));
    assert_eq!(enc.output_dim(), 80);
}

#[test]
fn encoding_is_deterministic() {
    let enc = HashEncoding::new(HashEncodingConfig::desk(), 2).unwrap();
    let t = table(&enc, 8, 1e-4);
    let c = make_grid(&[33, 17]).unwrap();
    let a = enc.encode_values(&t, c.coords()).unwrap();
    let mut tape = Tape::new();
    let tv = tape.param(t.clone());
    let b = enc.encode(&mut tape, tv, c.coords()).unwrap();
    assert!(a
        .data()
        .iter()
        .zip(tape.value(b).data())
        .all(|(x, y)| x.to_bits() == y.to_bits()));
}

#[test]
fn init_is_small_and_uniform() {
    let enc = HashEncoding::new(HashEncodingConfig::desk(), 2).unwrap();
    let t = table(&enc, 2, 1e-4);
    assert!(t.data().iter().all(|v| v.abs() <= 1e-4));
    let mean = t.sum() / t.numel() as f64;
    assert!(mean.abs() < 1e-6);
}
