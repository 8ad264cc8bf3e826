use disinr_core::data::{
    base_phantom, export_pgm, gen_family, load_image, load_record, rasterize, read_pgm, save_image,
    save_record, simulate_measurements, split, window_sidecar, Container, Dataset, Ellipse,
    PhantomFamilyConfig, SectionKind, SplitRole, CONTAINER_MAGIC, SHEPP_LOGAN,
};
use disinr_core::diffcore::{adjoint_mismatch, LinearOperator, Tensor};
use disinr_core::eval::Image;
use disinr_core::physics::{
    make_coil_maps, make_mask, FanBeamGeometry, OperatorDesc, SamplingMaskConfig,
};
use disinr_core::{Error, IS_F64};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::json;

fn quiet(population: usize) -> PhantomFamilyConfig {
    PhantomFamilyConfig {
        population,
        center_jitter: 0.0,
        axis_jitter: 0.0,
        intensity_jitter: 0.0,
        lesion_probability: 0.0,
        ..Default::default()
    }
}

fn bits(t: &Tensor) -> Vec<u64> {
    t.data().iter().map(|v| (*v as f64).to_bits()).collect()
}

fn pearson(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let (ma, mb) = (a.iter().sum::<f64>() / n, b.iter().sum::<f64>() / n);
    let mut sab = 0.0;
    let mut saa = 0.0;
    let mut sbb = 0.0;
    for (x, y) in a.iter().zip(b) {
        sab += (x - ma) * (y - mb);
        saa += (x - ma) * (x - ma);
        sbb += (y - mb) * (y - mb);
    }
    sab / (saa * sbb).sqrt()
}

fn operators(n: usize) -> Vec<OperatorDesc> {
    let mask = make_mask(&SamplingMaskConfig::cartesian(4.0, 4), [n, n]).unwrap();
    vec![
        OperatorDesc::Identity { shape: vec![n, n] },
        OperatorDesc::FanBeam(FanBeamGeometry::desk_sized(n, 12)),
        OperatorDesc::FourierMask {
            mask,
            coil_maps: make_coil_maps([n, n], 3, 7).unwrap(),
        },
    ]
}

#[test]
fn zero_perturbation_gives_identical_subjects() {
    let imgs = gen_family(&quiet(4)).unwrap();
    let base = base_phantom(&quiet(4)).unwrap();
    for img in &imgs {
        assert_eq!(bits(img), bits(&base));
    }
}

#[test]
fn families_are_seeded() {
    let cfg = PhantomFamilyConfig {
        population: 4,
        seed: 11,
        ..Default::default()
    };
    let a = gen_family(&cfg).unwrap();
    let b = gen_family(&cfg).unwrap();
    assert!(a.iter().zip(&b).all(|(x, y)| bits(x) == bits(y)));
    let c = gen_family(&PhantomFamilyConfig { seed: 12, ..cfg.clone() }).unwrap();
    assert!(a.iter().zip(&c).any(|(x, y)| bits(x) != bits(y)));
    // subjects differ from one another
    assert_ne!(bits(&a[0]), bits(&a[1]));
    for img in &a {
        assert_eq!(img.shape(), &[64, 64]);
        assert!(img.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }
}

#[test]
fn population_mean_correlates_with_base() {
    let cfg = PhantomFamilyConfig {
        population: 50,
        seed: 3,
        ..Default::default()
    };
    let imgs = gen_family(&cfg).unwrap();
    let mut mean = vec![0.0; 64 * 64];
    for img in &imgs {
        for (m, v) in mean.iter_mut().zip(img.data()) {
            *m += *v as f64 / 50.0;
        }
    }
    let base: Vec<f64> = base_phantom(&cfg).unwrap().data().iter().map(|v| *v as f64).collect();
    let r = pearson(&mean, &base);
    assert!(r > 0.9, "r = {r}");
}

#[test]
fn degenerate_configs_are_rejected() {
    let flat = PhantomFamilyConfig {
        ellipses: Some(vec![Ellipse {
            intensity: 1.0,
            center: [0.0, 0.0],
            axes: [0.5, 0.0],
            angle_deg: 0.0,
        }]),
        ..Default::default()
    };
    assert!(matches!(gen_family(&flat), Err(Error::Config(_))));
    assert!(matches!(gen_family(&quiet(0)), Err(Error::Config(_))));
    let bad_extent = PhantomFamilyConfig {
        extents: [0, 8],
        ..Default::default()
    };
    assert!(matches!(gen_family(&bad_extent), Err(Error::Config(_))));
}

#[test]
fn shepp_logan_rasterizes_with_expected_levels() {
    let img = rasterize(&SHEPP_LOGAN, [128, 128]);
    // Center of the modified phantom sits in the brain matter at 0.2,
    // the corner is background.
    let at = |r: usize, c: usize| img.data()[r * 128 + c] as f64;
    assert!((at(64, 64) - 0.2).abs() < 0.05, "{}", at(64, 64));
    assert_eq!(at(0, 0), 0.0);
    assert!(img.data().iter().all(|v| *v <= 1.0));
}

#[test]
fn noiseless_measurements_equal_forward_model() {
    let imgs = gen_family(&PhantomFamilyConfig {
        population: 2,
        extents: [32, 32],
        ..Default::default()
    })
    .unwrap();
    for desc in operators(32) {
        let recs = simulate_measurements(&imgs, &desc, 0.0, 5, "s").unwrap();
        let op = desc.build().unwrap();
        for (rec, img) in recs.iter().zip(&imgs) {
            let x = rec.ground_truth.as_ref().unwrap();
            assert_eq!(x.shape(), desc.image_shape().as_slice());
            assert_eq!(bits(&rec.measurement), bits(&op.apply(x).unwrap()));
            if desc.kind() == "identity" {
                assert_eq!(bits(&rec.measurement), bits(img));
            }
            rec.validate().unwrap();
        }
        assert_eq!(recs[1].id, "s001");
    }
}

#[test]
fn noise_has_requested_std() {
    let img = Tensor::filled(&[128, 128], 0.5);
    let desc = OperatorDesc::Identity { shape: vec![128, 128] };
    let sigma = 0.1;
    let rec = &simulate_measurements(&[img.clone()], &desc, sigma, 9, "n").unwrap()[0];
    let r: Vec<f64> = rec
        .measurement
        .data()
        .iter()
        .map(|v| *v as f64 - 0.5)
        .collect();
    let n = r.len() as f64;
    let mean = r.iter().sum::<f64>() / n;
    let std = (r.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
    assert!((std - sigma).abs() / sigma < 0.05, "{std}");
    // distinct records get distinct noise
    let two = simulate_measurements(&[img.clone(), img], &desc, sigma, 9, "n").unwrap();
    assert_ne!(bits(&two[0].measurement), bits(&two[1].measurement));
    assert!(matches!(
        simulate_measurements(&[Tensor::zeros(&[8, 8])], &desc, sigma, 9, "n"),
        Err(Error::Dimension(_))
    ));
}

#[test]
fn splits_partition_indices() {
    let s = split(10, [0.6, 0.2, 0.2], 1).unwrap();
    assert_eq!((s.pretrain.len(), s.test_in.len(), s.test_out.len()), (6, 2, 2));
    let mut all: Vec<usize> = [s.pretrain.clone(), s.test_in.clone(), s.test_out.clone()].concat();
    all.sort_unstable();
    assert_eq!(all, (0..10).collect::<Vec<_>>());
    assert_eq!(split(10, [0.6, 0.2, 0.2], 1).unwrap(), s);
    let all_pre = split(5, [1.0, 0.0, 0.0], 1).unwrap();
    assert_eq!(all_pre.pretrain, vec![0, 1, 2, 3, 4]);
    assert!(all_pre.test_in.is_empty() && all_pre.test_out.is_empty());
    assert!(matches!(split(5, [0.0, 0.0, 0.0], 1), Err(Error::Config(_))));
}

#[test]
fn container_round_trip_is_bitwise() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut c = Container::new(json!({"note": "x", "n": 3}));
    for (kind, shape) in [
        (SectionKind::Image, vec![5, 7]),
        (SectionKind::Kspace, vec![2, 3, 4, 2]),
        (SectionKind::Sinogram, vec![6]),
    ] {
        let n: usize = shape.iter().product();
        let t = Tensor::new(shape, (0..n).map(|_| rng.random_range(-3.0..3.0)).collect()).unwrap();
        c.push(kind, &format!("{kind:?}"), t);
    }
    let mut buf = Vec::new();
    c.write_to(&mut buf).unwrap();
    assert_eq!(&buf[..8], CONTAINER_MAGIC);
    let back = Container::read_from(buf.as_slice()).unwrap();
    assert_eq!(back.meta, c.meta);
    assert_eq!(back.sections.len(), 3);
    for (a, b) in back.sections.iter().zip(&c.sections) {
        assert_eq!((a.kind, &a.name, a.tensor.shape()), (b.kind, &b.name, b.tensor.shape()));
        assert_eq!(bits(&a.tensor), bits(&b.tensor));
    }
    // truncation and bad magic are format errors
    assert!(matches!(Container::read_from(&buf[..buf.len() - 3]), Err(Error::Format(_))));
    let mut bad = buf.clone();
    bad[0] = b'X';
    assert!(matches!(Container::read_from(bad.as_slice()), Err(Error::Format(_))));
}

#[test]
fn records_round_trip_and_rebuild_operators() {
    let dir = tempfile::tempdir().unwrap();
    let imgs = gen_family(&PhantomFamilyConfig {
        population: 1,
        extents: [24, 24],
        ..Default::default()
    })
    .unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    for desc in operators(24) {
        let rec = simulate_measurements(&imgs, &desc, 0.01, 1, "r").unwrap().remove(0);
        let path = dir.path().join(format!("{}.dinr", desc.kind()));
        save_record(&rec, &path).unwrap();
        let back = load_record(&path).unwrap();
        assert_eq!(back.id, rec.id);
        assert_eq!(back.noise_sigma, rec.noise_sigma);
        assert_eq!(back.operator, rec.operator);
        assert_eq!(bits(&back.measurement), bits(&rec.measurement));
        assert_eq!(bits(back.ground_truth.as_ref().unwrap()), bits(rec.ground_truth.as_ref().unwrap()));
        // the stored descriptor re-instantiates a consistent operator
        let op = back.operator.build().unwrap();
        let rand = |shape: &[usize], rng: &mut ChaCha8Rng| {
            let n = shape.iter().product();
            Tensor::new(shape.to_vec(), (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
        };
        let x = rand(op.image_shape(), &mut rng);
        let y = rand(op.measurement_shape(), &mut rng);
        let tol = if IS_F64 { 1e-10 } else { 1e-4 };
        assert!(adjoint_mismatch(&op, &x, &y).unwrap() <= tol);
    }
}

#[test]
fn dataset_round_trip_keeps_roles() {
    let dir = tempfile::tempdir().unwrap();
    let imgs = gen_family(&PhantomFamilyConfig {
        population: 3,
        extents: [16, 16],
        ..Default::default()
    })
    .unwrap();
    let desc = OperatorDesc::Identity { shape: vec![16, 16] };
    let recs = simulate_measurements(&imgs, &desc, 0.0, 0, "d").unwrap();
    let roles = [SplitRole::Pretrain, SplitRole::Pretrain, SplitRole::TestOut];
    let ds = Dataset {
        records: recs.into_iter().zip(roles).collect(),
        info: json!({"family": "ellipse_family"}),
    };
    ds.save(dir.path()).unwrap();
    let back = Dataset::load(dir.path()).unwrap();
    assert_eq!(back, ds);
    assert_eq!(back.with_role(SplitRole::Pretrain).len(), 2);
    assert_eq!(back.role("d002"), Some(SplitRole::TestOut));
    assert!(matches!(back.get("zzz"), Err(Error::Lookup(_))));

    let t = Tensor::new(vec![2, 3], vec![1.0, -2.0, 3.5, 0.0, 1e-3, 7.0]).unwrap();
    let p = dir.path().join("img.dinr");
    save_image(&t, &p).unwrap();
    assert_eq!(load_image(&p).unwrap(), t);
}

#[test]
fn pgm_export_round_trips_with_window() {
    let dir = tempfile::tempdir().unwrap();
    let data: Vec<f64> = (0..6 * 4).map(|i| i as f64 / 23.0 * 2.0 - 0.5).collect();
    let img = Image::new(vec![6, 4], data.clone()).unwrap();
    let path = dir.path().join("a.pgm");
    let (lo, hi) = export_pgm(&img, &path, None).unwrap();
    assert_eq!((lo, hi), (-0.5, 1.5));
    let side = std::fs::read_to_string(window_sidecar(&path)).unwrap();
    assert_eq!(side.trim(), "-0.5 1.5");
    let back = read_pgm(&path).unwrap();
    assert_eq!(back.shape(), &[6, 4]);
    for (g, v) in back.data().iter().zip(&data) {
        let restored = lo + g / 255.0 * (hi - lo);
        assert!((restored - v).abs() <= (hi - lo) / 510.0 + 1e-12);
    }
    // explicit window clips
    export_pgm(&img, &path, Some((0.0, 1.0))).unwrap();
    let clipped = read_pgm(&path).unwrap();
    assert_eq!(clipped.data()[0], 0.0);
    assert_eq!(clipped.data()[23], 255.0);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]
    #[test]
    fn phantoms_stay_in_unit_range(seed in 0u64..1000, idx in 0usize..4) {
        let cfg = PhantomFamilyConfig { population: 4, extents: [24, 24], seed, ..Default::default() };
        let img = &gen_family(&cfg).unwrap()[idx];
        prop_assert!(img.data().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn split_counts_cover_everything(n in 1usize..60, seed in 0u64..100) {
        let s = split(n, [0.6, 0.2, 0.2], seed).unwrap();
        prop_assert_eq!(s.pretrain.len() + s.test_in.len() + s.test_out.len(), n);
    }
}
