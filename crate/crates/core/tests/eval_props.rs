mod common;

use ocsc::coding::CodingConfig;
use ocsc::eval::{
    evaluate, export_mosaic, filter_variance, mean_std, psnr, psnr_db, render_mosaic,
    sort_filters_by_variance, test_objective,
};
use ocsc::pipeline::{init_spatial_dictionary, synth_generate, SynthSpec};
use ocsc::{Error, Sample, SpatialDictionary, TrainConfig};

fn tight(beta: f64) -> CodingConfig {
    CodingConfig {
        beta,
        rho: 1.0,
        max_iters: 20_000,
        rel_tol: 1e-10,
    }
}

#[test]
fn constant_filters_keep_their_order() {
    let d = SpatialDictionary::new(vec![2, 2], 3, vec![1.0; 12]).unwrap();
    assert_eq!(sort_filters_by_variance(&d).unwrap(), vec![0, 1, 2]);
}

#[test]
fn hand_computed_variance_order() {
    let d = SpatialDictionary::new(vec![2], 2, vec![1.0, -1.0, 0.0, 0.0]).unwrap();
    assert_eq!(filter_variance(d.filter(0)).unwrap(), 2.0);
    assert_eq!(sort_filters_by_variance(&d).unwrap(), vec![1, 0]);
    let d = SpatialDictionary::new(vec![2], 2, vec![0.0, 0.0, 1.0, -1.0]).unwrap();
    assert_eq!(sort_filters_by_variance(&d).unwrap(), vec![0, 1]);
}

#[test]
fn variance_order_matches_two_pass_oracle() {
    for seed in 0..20u64 {
        let filters = common::normal_vec(&mut common::rng(seed), 5 * 9);
        let d = SpatialDictionary::new(vec![3, 3], 5, filters.clone()).unwrap();
        let var = |f: &[f64]| {
            let mean = f.iter().sum::<f64>() / f.len() as f64;
            f.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (f.len() - 1) as f64
        };
        let mut expected: Vec<usize> = (0..5).collect();
        expected.sort_by(|&a, &b| {
            var(&filters[a * 9..a * 9 + 9])
                .partial_cmp(&var(&filters[b * 9..b * 9 + 9]))
                .unwrap()
        });
        assert_eq!(sort_filters_by_variance(&d).unwrap(), expected);
    }
}

#[test]
fn single_element_variance_is_undefined() {
    assert!(matches!(
        filter_variance(&[3.0]),
        Err(Error::UndefinedVariance)
    ));
}

#[test]
fn mosaic_geometry() {
    let cfg = TrainConfig {
        num_filters: 100,
        filter_dims: vec![11, 11],
        ..TrainConfig::default()
    };
    let img = render_mosaic(&init_spatial_dictionary(&cfg).unwrap()).unwrap();
    assert_eq!(img.dimensions(), (119, 119));
    // separators are black
    for i in 0..119 {
        assert_eq!(img.get_pixel(11, i)[0], 0);
        assert_eq!(img.get_pixel(i, 107)[0], 0);
    }
}

#[test]
fn single_tile_is_normalized_filter() {
    let filter = vec![-2.0, 0.0, 2.0, 1.0];
    let d = SpatialDictionary::new(vec![2, 2], 1, filter.clone()).unwrap();
    let img = render_mosaic(&d).unwrap();
    assert_eq!(img.dimensions(), (2, 2));
    let pixels: Vec<u8> = img.pixels().map(|p| p[0]).collect();
    assert_eq!(pixels, vec![0, 128, 255, 191]);
}

#[test]
fn mosaic_export_is_byte_identical() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = TrainConfig {
        num_filters: 7,
        filter_dims: vec![5, 4],
        seed: 9,
        ..TrainConfig::default()
    };
    let d = init_spatial_dictionary(&cfg).unwrap();
    let (a, b) = (dir.path().join("a.png"), dir.path().join("b.png"));
    export_mosaic(&d, &a).unwrap();
    export_mosaic(&d, &b).unwrap();
    assert_eq!(std::fs::read(a).unwrap(), std::fs::read(b).unwrap());
    let one_d = SpatialDictionary::new(vec![4], 2, vec![0.0; 8]).unwrap();
    assert!(matches!(render_mosaic(&one_d), Err(Error::Shape(_))));
}

#[test]
fn test_objective_matches_lasso_oracle() {
    let (p, m, k, beta) = (10, 3, 2, 0.2);
    let mut rng = common::rng(3);
    let filters = common::unit_filters(&mut rng, k, m);
    let d = SpatialDictionary::new(vec![m], k, filters.clone()).unwrap();
    let cols = common::circulant_design(&filters, m, p);
    let mut samples = Vec::new();
    let mut reference = 0.0;
    for _ in 0..3 {
        let x = common::normal_vec(&mut rng, p);
        let z = common::cd_lasso(&cols, &x, beta, 200_000);
        reference += common::lasso_objective(&cols, &x, &z, beta) / 3.0;
        samples.push(Sample::new(vec![p], x).unwrap());
    }
    let ours = test_objective(&d, &samples, &tight(beta)).unwrap();
    assert!(
        (ours - reference).abs() <= 1e-4 * reference.max(1.0),
        "{ours} vs {reference}"
    );
}

#[test]
fn evaluation_is_reproducible() {
    let data = synth_generate(&SynthSpec::new(vec![20, 20], vec![4, 4], 3, 3, 4)).unwrap();
    let cfg = CodingConfig::default();
    let a = psnr(&data.dictionary, &data.consistent, &cfg).unwrap();
    let b = psnr(&data.dictionary, &data.consistent, &cfg).unwrap();
    assert_eq!(a, b);
    let reordered: Vec<Sample> = data.consistent.iter().rev().cloned().collect();
    let c = evaluate(&data.dictionary, &reordered, &cfg, false).unwrap();
    assert!((c.test_objective - a.test_objective).abs() < 1e-3 * a.test_objective);
    assert_eq!(a.reconstructions.as_ref().unwrap().len(), 3);
}

#[test]
fn generating_filters_beat_random_by_three_db() {
    let mut spec = SynthSpec::new(vec![32, 32], vec![5, 5], 4, 5, 5);
    spec.noise_sigma = 0.0;
    spec.code_density = 0.01;
    let data = synth_generate(&spec).unwrap();
    let cfg = CodingConfig {
        beta: 0.1,
        ..CodingConfig::default()
    };
    let random = init_spatial_dictionary(&TrainConfig {
        num_filters: 4,
        filter_dims: vec![5, 5],
        seed: 1,
        ..TrainConfig::default()
    })
    .unwrap();
    let truth = psnr(&data.dictionary, &data.consistent, &cfg).unwrap().psnr;
    let baseline = psnr(&random, &data.consistent, &cfg).unwrap().psnr;
    assert!(truth >= baseline + 3.0, "{truth} vs {baseline}");
}

#[test]
fn psnr_edge_cases() {
    assert_eq!(psnr_db(&[1.0, 2.0], &[1.0, 2.0], 1.0), f64::INFINITY);
    // error of one pixel unit everywhere gives 20 log10(255)
    let v = psnr_db(&[0.0; 4], &[1.0; 4], 1.0);
    assert!((v - 20.0 * 255f64.log10()).abs() < 1e-12);
    assert!((psnr_db(&[0.0; 4], &[0.5; 4], 2.0) - v).abs() < 1e-12);

    let zero = Sample::new(vec![6], vec![0.0; 6]).unwrap();
    let noisy = Sample::new(vec![6], vec![1.0, -1.0, 0.5, 0.0, 2.0, -0.5]).unwrap();
    let d = SpatialDictionary::new(vec![2], 1, vec![0.6, 0.8]).unwrap();
    let r = evaluate(&d, &[zero, noisy], &CodingConfig::default(), false).unwrap();
    assert_eq!(r.perfect_reconstructions, 1);
    assert!(r.psnr.is_finite());
    assert_eq!(r.psnr, r.per_image_psnr[1]);
    assert!(matches!(
        evaluate(&d, &[], &CodingConfig::default(), false),
        Err(Error::InvalidConfig(_))
    ));
}

#[test]
fn mean_and_sample_deviation() {
    let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
    assert_eq!(m, 2.5);
    assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-15);
    assert_eq!(mean_std(&[7.0]), (7.0, 0.0));
    assert!(mean_std(&[]).0.is_nan());
}

#[test]
fn evaluation_handles_mixed_shapes() {
    let d = SpatialDictionary::new(vec![2, 2], 1, vec![0.5; 4]).unwrap();
    let a = Sample::new(vec![6, 6], common::normal_vec(&mut common::rng(1), 36)).unwrap();
    let b = Sample::new(vec![5, 7], common::normal_vec(&mut common::rng(2), 35)).unwrap();
    let r = evaluate(&d, &[a, b], &CodingConfig::default(), false).unwrap();
    assert_eq!(r.per_image_psnr.len(), 2);
}
