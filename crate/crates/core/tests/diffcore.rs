use std::sync::Arc;

use disinr_core::diffcore::{
    adjoint_mismatch, grad_check, Elementwise, GradCheck, IdentityOperator, LinearOperator, Tape,
    Tensor, Var,
};
use disinr_core::{Real, IS_F64};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random(shape: &[usize], seed: u64) -> Tensor {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = shape.iter().product();
    let data = (0..n).map(|_| rng.random_range(-1.0..1.0) as Real).collect();
    Tensor::new(shape.to_vec(), data).unwrap()
}

fn op_tolerance() -> f64 {
    if IS_F64 {
        1e-5
    } else {
        1e-2
    }
}

fn step() -> Real {
    if IS_F64 {
        1e-6
    } else {
        1e-3
    }
}

#[test]
fn matmul_identity_and_hand_computed() {
    let mut tape = Tape::new();
    let eye = tape.constant(Tensor::from_rows(&[&[1.0, 0.0], &[0.0, 1.0]]).unwrap());
    let col = tape.constant(Tensor::from_rows(&[&[3.0], &[4.0]]).unwrap());
    let out = tape.matmul(eye, col).unwrap();
    assert_eq!(tape.value(out).data(), &[3.0, 4.0]);

    let row = tape.constant(Tensor::from_rows(&[&[1.0, 2.0]]).unwrap());
    let out = tape.matmul(row, col).unwrap();
    assert_eq!(tape.value(out).shape(), &[1, 1]);
    assert_eq!(tape.value(out).data(), &[11.0]);
}

#[test]
fn matmul_shape_mismatch_is_dimension_error() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::zeros(&[2, 3]));
    let b = tape.constant(Tensor::zeros(&[2, 3]));
    assert!(matches!(
        tape.matmul(a, b),
        Err(disinr_core::Error::Dimension(_))
    ));
}

#[test]
fn matmul_gradient_of_sum_is_ones_times_bt() {
    let a = random(&[5, 7], 1);
    let b = random(&[7, 3], 2);
    let f = |a: &Tensor| -> f64 {
        let mut tape = Tape::new();
        let va = tape.constant(a.clone());
        let vb = tape.constant(b.clone());
        let out = tape.matmul(va, vb).unwrap();
        tape.value(out).sum()
    };
    // Central differences, independent of the backward rules.
    let h = step();
    let mut numeric = vec![0.0f64; 35];
    for (i, slot) in numeric.iter_mut().enumerate() {
        let mut p = a.clone();
        p.data_mut()[i] += h;
        let fp = f(&p);
        let mut m = a.clone();
        m.data_mut()[i] -= h;
        let fm = f(&m);
        *slot = (fp - fm) / (2.0 * h as f64);
    }
    let mut tape = Tape::new();
    let va = tape.param(a.clone());
    let vb = tape.constant(b.clone());
    let out = tape.matmul(va, vb).unwrap();
    let s = tape.sum(out);
    let grads = tape.backward(s).unwrap();
    let ga = grads.get(va).unwrap();
    for i in 0..5 {
        for k in 0..7 {
            let row_sum_b: f64 = (0..3).map(|j| b.data()[k * 3 + j] as f64).sum();
            let analytic = ga.data()[i * 7 + k] as f64;
            assert!((analytic - row_sum_b).abs() < 1e-5);
            assert!((analytic - numeric[i * 7 + k]).abs() < op_tolerance());
        }
    }
}

#[test]
fn elementwise_values() {
    let mut tape = Tape::new();
    let x = tape.constant(Tensor::new(vec![3], vec![-1.0, 0.0, 2.0]).unwrap());
    let r = tape.elementwise(Elementwise::Relu, &[x]).unwrap();
    assert_eq!(tape.value(r).data(), &[0.0, 0.0, 2.0]);
    let z = tape.constant(Tensor::new(vec![1], vec![0.0]).unwrap());
    let s = tape.elementwise(Elementwise::Sin, &[z]).unwrap();
    assert_eq!(tape.value(s).data(), &[0.0]);
    let a = tape.constant(Tensor::zeros(&[2, 2]));
    let b = tape.constant(Tensor::zeros(&[3]));
    assert!(tape.elementwise(Elementwise::Add, &[a, b]).is_err());
}

#[test]
fn relu_subgradient_is_zero_at_zero() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::new(vec![3], vec![-1.0, 0.0, 2.0]).unwrap());
    let r = tape.relu(x);
    let s = tape.sum(r);
    let g = tape.backward(s).unwrap();
    assert_eq!(g.get(x).unwrap().data(), &[0.0, 0.0, 1.0]);
}

#[test]
fn elementwise_ops_pass_gradient_check() {
    let cfg = GradCheck {
        samples: 16,
        step: step(),
        seed: 3,
    };
    let a = random(&[4, 4], 11);
    let b = random(&[4, 4], 12);
    let s = Tensor::scalar(0.7);
    for kind in [
        Elementwise::Add,
        Elementwise::Sub,
        Elementwise::Mul,
        Elementwise::Sin,
        Elementwise::Scale(-1.5),
    ] {
        let report = grad_check(
            &[a.clone(), b.clone()],
            |tape, v| {
                let out = match kind {
                    Elementwise::Add | Elementwise::Sub | Elementwise::Mul => {
                        tape.elementwise(kind, &[v[0], v[1]])?
                    }
                    _ => tape.elementwise(kind, &[v[0]])?,
                };
                // Weighted sum so the check is not symmetric in the entries.
                let w = tape.mul(out, v[1])?;
                Ok(tape.sum(w))
            },
            &cfg,
        )
        .unwrap();
        assert!(report.max_rel_error < op_tolerance(), "{kind:?}: {report:?}");
    }
    // scalar-vs-tensor broadcasting
    let report = grad_check(
        &[a.clone(), s],
        |tape, v| {
            let m = tape.mul(v[0], v[1])?;
            let m = tape.sub(m, v[1])?;
            let m = tape.mul(m, m)?;
            Ok(tape.sum(m))
        },
        &cfg,
    )
    .unwrap();
    assert!(report.max_rel_error < op_tolerance(), "{report:?}");
}

#[test]
fn relu_gradient_check_away_from_kink() {
    let x = random(&[4, 4], 5).map(|v| if v.abs() < 0.05 { 0.3 } else { v });
    let report = grad_check(
        &[x],
        |tape, v| {
            let r = tape.relu(v[0]);
            let sq = tape.mul(r, r)?;
            Ok(tape.sum(sq))
        },
        &GradCheck {
            samples: 16,
            step: step(),
            seed: 1,
        },
    )
    .unwrap();
    assert!(report.max_rel_error < op_tolerance());
}

#[test]
fn concat_values_and_gradient_split() {
    let mut tape = Tape::new();
    let a = tape.param(Tensor::from_rows(&[&[1.0]]).unwrap());
    let b = tape.param(Tensor::from_rows(&[&[2.0]]).unwrap());
    let c = tape.concat(a, b).unwrap();
    assert_eq!(tape.value(c).data(), &[1.0, 2.0]);

    // concat then slice: the gradient of each slice lands exactly on its source
    let a = random(&[3, 2], 7);
    let b = random(&[3, 5], 8);
    let wa = random(&[3, 2], 9);
    let wb = random(&[3, 5], 10);
    let mut tape = Tape::new();
    let va = tape.param(a.clone());
    let vb = tape.param(b.clone());
    let cat = tape.concat(va, vb).unwrap();
    let sa = tape.slice_cols(cat, 0, 2).unwrap();
    let sb = tape.slice_cols(cat, 2, 7).unwrap();
    let cwa = tape.constant(wa.clone());
    let cwb = tape.constant(wb.clone());
    let pa = tape.mul(sa, cwa).unwrap();
    let pb = tape.mul(sb, cwb).unwrap();
    let ta = tape.sum(pa);
    let tb = tape.sum(pb);
    let total = tape.add(ta, tb).unwrap();
    let g = tape.backward(total).unwrap();
    assert_eq!(g.get(va).unwrap(), &wa);
    assert_eq!(g.get(vb).unwrap(), &wb);

    let report = grad_check(
        &[a, b, random(&[3, 7], 12)],
        |tape, v| {
            let c = tape.concat(v[0], v[1])?;
            let w = tape.mul(c, v[2])?;
            let w = tape.sin(w);
            Ok(tape.sum(w))
        },
        &GradCheck {
            samples: 32,
            step: step(),
            seed: 2,
        },
    )
    .unwrap();
    assert!(report.max_rel_error < op_tolerance());
}

#[test]
fn concat_row_mismatch_fails() {
    let mut tape = Tape::new();
    let a = tape.constant(Tensor::zeros(&[2, 1]));
    let b = tape.constant(Tensor::zeros(&[3, 1]));
    assert!(tape.concat(a, b).is_err());
}

#[test]
fn l1_loss_values_and_gradient() {
    let mut tape = Tape::new();
    let p = tape.param(Tensor::new(vec![2], vec![0.5, -1.0]).unwrap());
    let t = tape.constant(Tensor::new(vec![2], vec![0.5, -1.0]).unwrap());
    let l = tape.l1_loss(p, t).unwrap();
    assert_eq!(tape.value(l).item(), 0.0);
    // sign(0) = 0 at zero residual
    let g = tape.backward(l).unwrap();
    assert_eq!(g.get(p).unwrap().data(), &[0.0, 0.0]);

    let mut tape = Tape::new();
    let p = tape.constant(Tensor::new(vec![1], vec![2.0]).unwrap());
    let t = tape.constant(Tensor::new(vec![1], vec![0.0]).unwrap());
    let l = tape.l1_loss(p, t).unwrap();
    assert_eq!(tape.value(l).item(), 2.0);

    let bad = tape.constant(Tensor::zeros(&[2]));
    assert!(tape.l1_loss(p, bad).is_err());

    // away from zero residual
    let pred = random(&[6, 3], 20);
    let target = pred.map(|v| v + if v > 0.0 { 0.3 } else { -0.4 });
    let report = grad_check(
        &[pred],
        |tape, v| {
            let t = tape.constant(target.clone());
            let s = tape.scale(v[0], 1.0);
            tape.l1_loss(s, t)
        },
        &GradCheck {
            samples: 18,
            step: step(),
            seed: 4,
        },
    )
    .unwrap();
    assert!(report.max_rel_error < op_tolerance());
}

#[test]
fn identity_operator_is_transparent() {
    let op: Arc<dyn LinearOperator> = Arc::new(IdentityOperator::new(&[4, 3]));
    let x = random(&[4, 3], 30);
    let mut tape = Tape::new();
    let vx = tape.param(x.clone());
    let y = tape.apply_operator(op.clone(), vx).unwrap();
    assert_eq!(tape.value(y), &x);
    let zero = Tensor::zeros(&[4, 3]);
    assert_eq!(op.apply(&zero).unwrap(), zero);
    assert!(adjoint_mismatch(op.as_ref(), &x, &random(&[4, 3], 31)).unwrap() < 1e-4);
    let wrong = tape.constant(Tensor::zeros(&[3, 4]));
    assert!(tape.apply_operator(op, wrong).is_err());
}

#[test]
fn grad_check_trivial_functions() {
    // f(w) = w², w = 3
    let report = grad_check(
        &[Tensor::scalar(3.0)],
        |tape, v| tape.mul(v[0], v[0]),
        &GradCheck {
            samples: 1,
            step: step(),
            seed: 0,
        },
    )
    .unwrap();
    let (_, _, analytic, numeric) = report.worst.unwrap();
    assert_eq!(analytic, 6.0);
    assert!((numeric - 6.0).abs() < 1e-2);
    assert!(report.max_rel_error < 1e-2);

    // linear f: exact for any step
    let w = random(&[5], 40);
    for h in [1e-3 as Real, 0.25, 2.0] {
        let report = grad_check(
            &[w.clone()],
            |tape, v| {
                let s = tape.scale(v[0], 2.0);
                Ok(tape.sum(s))
            },
            &GradCheck {
                samples: 5,
                step: h,
                seed: 0,
            },
        )
        .unwrap();
        let eps = if IS_F64 { 1e-9 } else { 1e-3 / h as f64 };
        assert!(report.max_rel_error <= eps, "h={h}: {report:?}");
    }
}

#[test]
fn grad_check_rejects_non_finite_functions() {
    let out = grad_check(
        &[Tensor::scalar(0.0)],
        |tape, v| {
            let c = tape.constant(Tensor::scalar(Real::INFINITY));
            tape.mul(v[0], c)
        },
        &GradCheck::default(),
    );
    assert!(out.is_err());
}

fn mlp_grads(x: &Tensor, w: &Tensor) -> Vec<Real> {
    let mut tape = Tape::new();
    let vx = tape.constant(x.clone());
    let vw = tape.param(w.clone());
    let h = tape.matmul(vx, vw).unwrap();
    let h = tape.relu(h);
    let zero = tape.constant(Tensor::zeros(h_shape(&tape, h)));
    let l = tape.l1_loss(h, zero).unwrap();
    tape.backward(l).unwrap().get(vw).unwrap().data().to_vec()
}

fn h_shape(tape: &Tape, v: Var) -> &[usize] {
    tape.value(v).shape()
}

#[test]
fn replay_is_bitwise_deterministic() {
    let x = random(&[1500, 16], 50);
    let w = random(&[16, 8], 51);
    let g1 = mlp_grads(&x, &w);
    let g2 = mlp_grads(&x, &w);
    assert!(g1.iter().zip(&g2).all(|(a, b)| a.to_bits() == b.to_bits()));
}

#[test]
fn backward_requires_scalar_root() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::zeros(&[2]));
    assert!(tape.backward(x).is_err());
}

#[test]
fn non_finite_values_surface_as_errors() {
    let mut tape = Tape::new();
    let x = tape.param(Tensor::scalar(1.0));
    let c = tape.constant(Tensor::scalar(Real::NAN));
    let y = tape.mul(x, c).unwrap();
    assert!(tape.check_finite().is_err());
    assert!(tape.backward(y).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn matmul_and_bias_gradients_match_finite_differences(
        m in 1usize..6, k in 1usize..6, n in 1usize..6, seed in 0u64..1000
    ) {
        let params = [random(&[m, k], seed), random(&[k, n], seed + 1), random(&[n], seed + 2)];
        let report = grad_check(
            &params,
            |tape, v| {
                let h = tape.linear(v[0], v[1], v[2])?;
                let s = tape.sin(h);
                Ok(tape.sum(s))
            },
            &GradCheck { samples: 12, step: step(), seed },
        ).unwrap();
        prop_assert!(report.max_rel_error < op_tolerance());
    }
}
