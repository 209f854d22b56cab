mod common;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crl_core::bounds::{bound_thm1, bound_thm4, rbar, ActivationProfile, BoundMode, BoundSettings, NormProfile, RbarMode};
use crl_core::data::{build_dataset, model_from_idx, sample_tuple, LatentClassModel};
use crl_core::linalg::DenseVector;
use crl_core::loss::{empirical_risk, scores, LossKind};
use crl_core::net::{init, Activation, InitScheme, ReferenceMode};
use crl_core::Error;

fn small_profile() -> NormProfile {
    NormProfile {
        spectral: vec![2.0, 0.5],
        displacement: vec![1.0, 0.25],
        frobenius: vec![3.0, 1.0],
        lipschitz: vec![1.0, 1.0],
        widths: vec![3, 4, 2],
        input_bound: 1.5,
    }
}

#[test]
fn scores_match_loop_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for seed in 0..10 {
        let net = init(&[5, 6, 4], Activation::LeakyRelu { slope: 0.2 }, InitScheme::UniformScaled, ReferenceMode::Zero, seed).unwrap();
        let model = LatentClassModel::uniform(
            vec![0, 1, 2],
            (0..3)
                .map(|_| (0..4).map(|_| DenseVector::from((0..5).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>())).collect())
                .collect(),
        )
        .unwrap();
        let t = sample_tuple(&model, 4, &mut rng).unwrap();
        let got = scores(&net, &t).unwrap();
        let want = common::scores_oracle(&net, &t);
        for (g, w) in got.iter().zip(&want) {
            assert!((g - w).abs() <= 1e-12 * (1.0 + w.abs()), "{g} vs {w}");
        }
    }
}

#[test]
fn empirical_risk_matches_loop() {
    let model = crl_core::data::gaussian_blobs(&Default::default(), 3).unwrap();
    let ds = build_dataset(&model, 40, 3, 4).unwrap();
    let net = init(&[16, 8, 8], Activation::Relu, InitScheme::UniformScaled, ReferenceMode::Zero, 5).unwrap();
    for loss in [LossKind::Hinge, LossKind::Logistic, LossKind::InfoNce { tau: 0.3 }] {
        let mut total = 0.0;
        for t in ds.tuples() {
            total += loss.value(&common::scores_oracle(&net, t)).unwrap();
        }
        let want = total / ds.n() as f64;
        let got = empirical_risk(&net, &ds, &loss).unwrap();
        assert!((got - want).abs() <= 1e-12 * (1.0 + want), "{} {got} vs {want}", loss.name());
    }
}

#[test]
fn negative_classes_follow_restricted_weights() {
    let rho = vec![0.5, 0.3, 0.2];
    let pools = (0..3).map(|c| vec![DenseVector::from(vec![c as f64])]).collect();
    let model = LatentClassModel::new(vec![0, 1, 2], rho.clone(), pools).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(99);
    let mut counts = [[0usize; 3]; 3];
    let mut anchors = [0usize; 3];
    for _ in 0..20_000 {
        let t = sample_tuple(&model, 4, &mut rng).unwrap();
        let a = t.anchor[0] as usize;
        anchors[a] += 1;
        for neg in &t.negatives {
            counts[a][neg[0] as usize] += 1;
        }
    }
    let mut chi = 0.0;
    for a in 0..3 {
        assert_eq!(counts[a][a], 0);
        let rest: f64 = (0..3).filter(|z| *z != a).map(|z| rho[z]).sum();
        let total: usize = counts[a].iter().sum();
        for z in (0..3).filter(|z| *z != a) {
            let expected = total as f64 * rho[z] / rest;
            chi += (counts[a][z] as f64 - expected).powi(2) / expected;
        }
    }
    let anchor_total: usize = anchors.iter().sum();
    for (a, p) in rho.iter().enumerate() {
        let expected = anchor_total as f64 * p;
        chi += (anchors[a] as f64 - expected).powi(2) / expected;
    }
    // 5 degrees of freedom; 20.5 is the 0.999 quantile.
    assert!(chi < 20.5, "chi-square {chi}");
}

fn idx_images(count: u32, rows: u32, cols: u32, pixels: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    for v in [0x0803, count, rows, cols] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    out
}

fn idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::new();
    for v in [0x0801, labels.len() as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(labels);
    out
}

#[test]
fn idx_fixture_groups_by_label() {
    let pixels: Vec<u8> = (0..12).map(|i| (i * 20) as u8).collect();
    let images = idx_images(3, 2, 2, &pixels);
    let labels = idx_labels(&[7, 2, 7]);
    let model = model_from_idx(&images, &labels).unwrap();
    assert_eq!(model.classes(), &[2, 7]);
    assert_eq!(model.dim(), 4);
    let seven = model.pool(7).unwrap();
    assert_eq!(seven.len(), 2);
    assert_eq!(&seven[1][..], &[160.0 / 255.0, 180.0 / 255.0, 200.0 / 255.0, 220.0 / 255.0]);
    assert_eq!(&model.pool(2).unwrap()[0][..], &[80.0 / 255.0, 100.0 / 255.0, 120.0 / 255.0, 140.0 / 255.0]);

    match model_from_idx(&images[..20], &labels) {
        Err(Error::Format { offset, .. }) => assert_eq!(offset, 20),
        other => panic!("expected a format error, got {other:?}"),
    }
    let mut bad = images.clone();
    bad[3] = 0x01;
    assert!(matches!(model_from_idx(&bad, &labels), Err(Error::Format { offset: 0, .. })));
}

#[test]
fn bound_formulas_by_hand() {
    let np = small_profile();
    let ap = ActivationProfile { level_max: vec![1.5, 3.0, 1.5] };
    let (n, k, eta, m, delta) = (500usize, 3usize, 2.0, 4.0, 0.05);
    let s = BoundSettings {
        n,
        k,
        eta,
        loss_bound: m,
        delta,
        chain: RbarMode::PopulationChain,
    };
    let nf = n as f64;

    let ratio_sum = (1.0f64 / 2.0).powf(2.0 / 3.0) + (0.25f64 / 0.5).powf(2.0 / 3.0);
    let trunc1 = 1.5 * 1.5 / nf.sqrt() * (2.0f64 * 0.5).powi(2) * ratio_sum.powf(1.5);
    let got = bound_thm1(&np, &ap, &s, BoundMode::Truncated).unwrap();
    assert!((got - trunc1).abs() <= 1e-12 * trunc1);

    // chain levels: B0 = 1.5, B1 = 3, B2 = 1.5
    let r = ((1.0f64 * 1.5 * 0.5).powf(2.0 / 3.0) + (0.25f64 * 3.0).powf(2.0 / 3.0)).powf(1.5);
    assert!((rbar(&np, &ap, RbarMode::PopulationChain).unwrap() - r).abs() <= 1e-12 * r);
    let c = eta * 1.5 * r;
    let conf = 3.0 * m * ((2.0f64 / delta).ln() / (2.0 * nf)).sqrt();
    let count = nf * (k + 2) as f64 * 4.0;
    let full1 = 8.0 / nf
        + 768.0 * c / nf.sqrt() * ((44.0 * c * nf + 7.0) * count).ln().sqrt() * (4.0 * nf * eta * 1.5 * 1.5).ln()
        + conf;
    let got = bound_thm1(&np, &ap, &s, BoundMode::Full).unwrap();
    assert!((got - full1).abs() <= 1e-12 * full1, "{got} vs {full1}");

    let inner = 2.0 * nf * 1.5 * 1.5 * 1.0;
    let trunc4 = (6.0 / nf).sqrt() * (1.0 + inner).ln();
    assert!((bound_thm4(&np, &s, BoundMode::Truncated).unwrap() - trunc4).abs() <= 1e-12 * trunc4);
    let full4 = conf + 8.0 / nf + 24.0 * m * (6.0 / nf).sqrt() * (1.0 + 24.0 * eta * inner).ln().sqrt();
    assert!((bound_thm4(&np, &s, BoundMode::Full).unwrap() - full4).abs() <= 1e-12 * full4);
}
