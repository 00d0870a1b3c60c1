use super::*;
use crate::data::{gen_blobs, split};
use crate::net::{backward, forward, init_parameters, loss, sample_losses, train, InitScheme};
use crate::rng::Rng;
use proptest::prelude::*;
use serde_json::json;

fn pool_from(v: Value) -> PerturbationPool {
    serde_json::from_value(v).unwrap()
}

fn standard_pool() -> PerturbationPool {
    pool_from(json!([
        {"factor": "F1", "levels": [0.0, 0.003, 0.05]},
        {"factor": "F3", "levels": [0.0, 0.1, 0.2]},
        {"factor": "F5", "levels": [0.0, 0.25, 0.5]},
    ]))
}

struct Fixture {
    split: SplitDataset,
    mc: ModelConfig,
    tc: TrainConfig,
    model: Parameters,
}

fn fixture() -> Fixture {
    let d = gen_blobs(3, 60, 2, 0.5, 3).unwrap();
    let split = split(&d, 0.25, 1).unwrap();
    let mc = ModelConfig::new(2, vec![8], 3)
        .unwrap()
        .with_init(InitScheme::Kaiming, 4);
    let tc = TrainConfig::new(40, 16, 0.1, 4).unwrap();
    let model = train(split.train.features(), split.train.labels(), &mc, &tc).unwrap();
    Fixture { split, mc, tc, model }
}

#[test]
fn pool_size_examples() {
    assert_eq!(standard_pool().size(), 27);
    assert_eq!(pool_from(json!([{"factor": "F4", "levels": [0.0]}])).size(), 1);
    let mixed = pool_from(json!([
        {"factor": "F5", "levels": [0.0, 1.0]},
        {"factor": "F6", "levels": [0.0, 1.0, 2.0]},
        {"factor": "F10", "levels": [null, 1, 2, 3, 4]},
    ]));
    assert_eq!(mixed.size(), 30);
}

#[test]
fn pool_validation() {
    let bad = |v: Value| serde_json::from_value::<PerturbationPool>(v).is_err();
    assert!(bad(json!([{"factor": "F1", "levels": [0.1, 0.0]}])));
    assert!(bad(json!([{"factor": "F1", "levels": [0.0, 0.1, 0.0]}])));
    assert!(bad(json!([{"factor": "F1", "levels": []}])));
    assert!(bad(
        json!([{"factor": "F1", "levels": [0.0]}, {"factor": "adversarial_attack", "levels": [0.0]}])
    ));
    assert!(bad(json!([{"factor": "F3", "levels": [0.0, 1.5]}])));
    assert!(bad(json!([{"factor": "F3", "levels": [[[1.0, 0.0], [0.5, 0.6]]]}])));
    assert!(bad(json!([{"factor": "F10", "levels": [null, -3]}])));
    assert!(bad(json!([{"factor": "F7", "levels": [0]}])));
    assert!(bad(json!([{"factor": "F1", "levels": [0.0], "extra": 1}])));
    assert!(bad(json!([])));

    let tau_pool = pool_from(json!([{"factor": "F3", "levels": [[[1.0, 0.0], [0.0, 1.0]], [[0.0, 1.0], [1.0, 0.0]]]}]));
    let mc = ModelConfig::new(2, vec![8], 2).unwrap();
    assert!(tau_pool.validate_for(&mc, 2).is_ok());
    assert!(tau_pool.validate_for(&mc, 3).is_err());

    let fc = pool_from(json!([{"factor": "F8", "levels": [0, 4, -8]}]));
    assert!(fc.validate_for(&mc, 2).is_err());
    let fc = pool_from(json!([{"factor": "F8", "levels": [0, 4, -7]}]));
    assert!(fc.validate_for(&mc, 2).is_ok());
}

#[test]
fn pool_serde_round_trip() {
    let p = standard_pool();
    let back: PerturbationPool = serde_json::from_str(&serde_json::to_string(&p).unwrap()).unwrap();
    assert_eq!(p, back);
}

#[test]
fn enumeration_and_encoding() {
    let p = standard_pool();
    let all: Vec<_> = p.iter().collect();
    assert_eq!(all.len(), 27);
    assert!(all.windows(2).all(|w| w[0] < w[1]), "enumeration is canonical order");
    let mut encodings: Vec<String> = all.iter().map(PerturbationStrategy::encoding).collect();
    encodings.sort();
    encodings.dedup();
    assert_eq!(encodings.len(), 27);
    for (i, ps) in all.iter().enumerate() {
        assert_eq!(p.index_of(ps), i as u64);
        assert_eq!(&p.parse_strategy(&ps.encoding()).unwrap(), ps);
    }
    assert_eq!(all[0], p.all_off());
    assert!(p.parse_strategy("3-0-0").is_err());
    assert!(p.parse_strategy("0-0").is_err());
    assert!(p.parse_strategy("a-b-c").is_err());
}

proptest! {
    #[test]
    fn encoding_injective(a in proptest::collection::vec(0usize..20, 1..5),
                          b in proptest::collection::vec(0usize..20, 1..5)) {
        let pa = PerturbationStrategy::from_indices(a.clone());
        let pb = PerturbationStrategy::from_indices(b.clone());
        prop_assert_eq!(a == b, pa.encoding() == pb.encoding());
        prop_assert_eq!(pa.encoding().parse::<PerturbationStrategy>().unwrap(), pa);
    }

    #[test]
    fn label_flip_stays_in_range(seed in any::<u64>(), rate in 0.0f64..=1.0, m in 2usize..6) {
        let y: Vec<usize> = (0..100).map(|i| i % m).collect();
        let tau = TauMatrix::uniform(m, rate).unwrap();
        for r in 0..m {
            prop_assert!((tau.row(r).iter().sum::<f64>() - 1.0).abs() <= 1e-12);
        }
        let out = apply_label_flip(&y, &tau, seed).unwrap();
        prop_assert!(out.iter().all(|&l| l < m));
    }
}

#[test]
fn fgsm_zero_sigma_is_identity() {
    let f = fixture();
    let x = f.split.test.features();
    let out = apply_fgsm(
        &f.model,
        x,
        f.split.test.labels(),
        0.0,
        Some(f.split.test.feature_ranges()),
    )
    .unwrap();
    assert_eq!(&out, x);
}

#[test]
fn fgsm_respects_sigma_bound() {
    let f = fixture();
    let x = f.split.test.features();
    for sigma in [0.003, 0.05, 0.4] {
        let out = apply_fgsm(
            &f.model,
            x,
            f.split.test.labels(),
            sigma,
            Some(f.split.test.feature_ranges()),
        )
        .unwrap();
        for (a, b) in out.iter_rows().zip(x.iter_rows()) {
            let d = a.iter().zip(b).map(|(p, q)| (p - q).abs()).fold(0.0, f64::max);
            assert!(d <= sigma, "sigma {sigma}: {d}");
        }
        // Without clamping every coordinate with a gradient moves by exactly sigma.
        let free = apply_fgsm(&f.model, x, f.split.test.labels(), sigma, None).unwrap();
        let grads = backward(&f.model, x, f.split.test.labels()).unwrap();
        for ((a, b), g) in free.data().iter().zip(x.data()).zip(grads.inputs.data()) {
            if *g == 0.0 {
                assert_eq!(a, b);
            } else {
                assert!(((a - b).abs() - sigma).abs() < 1e-12);
            }
        }
    }
}

#[test]
fn fgsm_increases_loss() {
    let f = fixture();
    let x = f.split.test.features();
    let y = f.split.test.labels();
    let adv = apply_fgsm(&f.model, x, y, 0.05, None).unwrap();
    let before = sample_losses(&forward(&f.model, x).unwrap(), y).unwrap();
    let after = sample_losses(&forward(&f.model, &adv).unwrap(), y).unwrap();
    let up = before.iter().zip(&after).filter(|(b, a)| a >= b).count();
    assert!(up as f64 >= 0.9 * before.len() as f64, "{up}/{}", before.len());
    assert!(loss(&forward(&f.model, &adv).unwrap(), y).unwrap() > loss(&forward(&f.model, x).unwrap(), y).unwrap());
}

#[test]
fn fgsm_clamps_to_range_but_keeps_outliers_within_sigma() {
    let p = init_parameters(
        &ModelConfig::new(1, vec![], 2)
            .unwrap()
            .with_init(InitScheme::Kaiming, 1),
    )
    .unwrap();
    let x = Matrix::from_rows(&[[0.0], [1.0], [5.0]]).unwrap();
    let ranges = [(0.0, 1.0)];
    let out = apply_fgsm(&p, &x, &[0, 1, 0], 0.5, Some(&ranges)).unwrap();
    for (a, b) in out.data().iter().zip(x.data()) {
        assert!((a - b).abs() <= 0.5);
        assert!(*a >= 0.0 && (*a <= 1.0 || a <= b));
    }
}

#[test]
fn ood_shift_properties() {
    let x = gen_blobs(2, 20, 3, 1.0, 2).unwrap().features().clone();
    assert_eq!(apply_ood_shift(&x, 0.0, 1).unwrap(), x);
    assert_eq!(
        apply_ood_shift(&x, 0.7, 1).unwrap(),
        apply_ood_shift(&x, 0.7, 1).unwrap()
    );
    assert_ne!(
        apply_ood_shift(&x, 0.7, 1).unwrap(),
        apply_ood_shift(&x, 0.7, 2).unwrap()
    );

    let shifted = apply_ood(&x, &OodShift { shift: 0.7, scale: 0.0 }, 5).unwrap();
    let mean = |m: &Matrix, c: usize| m.iter_rows().map(|r| r[c]).sum::<f64>() / m.rows() as f64;
    let norm = (0..3)
        .map(|c| (mean(&shifted, c) - mean(&x, c)).powi(2))
        .sum::<f64>()
        .sqrt();
    assert!((norm - 0.7).abs() < 1e-9, "{norm}");
}

#[test]
fn label_flip_examples() {
    let y: Vec<usize> = (0..30).map(|i| i % 3).collect();
    assert_eq!(apply_label_flip(&y, &TauMatrix::identity(3), 1).unwrap(), y);
    let swap = TauMatrix::new(vec![vec![0.0, 1.0], vec![1.0, 0.0]]).unwrap();
    let y2 = vec![0, 1, 1, 0, 0];
    assert_eq!(apply_label_flip(&y2, &swap, 9).unwrap(), vec![1, 0, 0, 1, 1]);
    assert!(apply_label_flip(&[3], &TauMatrix::identity(3), 0).is_err());
    assert!(TauMatrix::new(vec![vec![0.5, 0.6], vec![0.5, 0.5]]).is_err());
}

#[test]
fn label_flip_replay_oracle() {
    let m = 4;
    let rate = 0.2;
    let y: Vec<usize> = (0..1000).map(|i| i % m).collect();
    let tau = TauMatrix::uniform(m, rate).unwrap();
    let out = apply_label_flip(&y, &tau, 3).unwrap();

    // Replay: class y keeps its label iff u lands in the diagonal interval
    // [y·r/(m−1), y·r/(m−1) + 1 − r) of the cumulative row.
    let mut rng = Rng::new(3);
    let off = rate / (m - 1) as f64;
    let expected_flips = y
        .iter()
        .filter(|&&label| {
            let u = rng.uniform();
            let lo = label as f64 * off;
            !(u >= lo && u < lo + (1.0 - rate))
        })
        .count();
    let flips = y.iter().zip(&out).filter(|(a, b)| a != b).count();
    assert_eq!(flips, expected_flips);
    let sd = (1000.0f64 * rate * (1.0 - rate)).sqrt();
    assert!((flips as f64 - 200.0).abs() <= 3.0 * sd, "{flips}");
}

#[test]
fn label_noise_examples() {
    let y: Vec<usize> = (0..2000).map(|i| i % 2).collect();
    assert_eq!(apply_label_noise(&y, 2, 0.0, 1).unwrap(), y);
    let flipped = apply_label_noise(&y, 2, 1.0, 1).unwrap();
    assert!(y.iter().zip(&flipped).all(|(a, b)| a + b == 1));
    let half = apply_label_noise(&y, 2, 0.5, 7).unwrap();
    let frac = y.iter().zip(&half).filter(|(a, b)| a != b).count() as f64 / 2000.0;
    assert!((0.45..=0.55).contains(&frac), "{frac}");
    let y5: Vec<usize> = (0..500).map(|i| i % 5).collect();
    let noisy = apply_label_noise(&y5, 5, 1.0, 2).unwrap();
    assert!(y5.iter().zip(&noisy).all(|(a, b)| a != b && *b < 5));
}

fn changed_layers(a: &Parameters, b: &Parameters) -> (Vec<usize>, Vec<usize>) {
    let w = (0..a.layers.len())
        .filter(|&l| a.layers[l].weight != b.layers[l].weight)
        .collect();
    let bias = (0..a.layers.len())
        .filter(|&l| a.layers[l].bias != b.layers[l].bias)
        .collect();
    (w, bias)
}

#[test]
fn weight_mod_properties() {
    let f = fixture();
    assert_eq!(apply_weight_mod(&f.model, 0.0, 3).unwrap(), f.model);

    let single = init_parameters(&ModelConfig::new(3, vec![], 2).unwrap()).unwrap();
    for seed in 0..5 {
        let m = apply_weight_mod(&single, 0.5, seed).unwrap();
        assert_eq!(changed_layers(&single, &m).0, vec![0]);
    }

    let big = init_parameters(
        &ModelConfig::new(40, vec![30], 3)
            .unwrap()
            .with_init(InitScheme::Xavier, 2),
    )
    .unwrap();
    for seed in 0..10 {
        let m = apply_weight_mod(&big, 0.5, seed).unwrap();
        let (w, b) = changed_layers(&big, &m);
        assert_eq!(w.len(), 1);
        assert!(b.is_empty());
        let l = w[0];
        let orig = big.layers[l].weight.data();
        let n = orig.len() as f64;
        let mean = orig.iter().sum::<f64>() / n;
        let std = (orig.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        let s = 0.5 * std;
        let delta: f64 = orig
            .iter()
            .zip(m.layers[l].weight.data())
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        // ‖Δ‖ / s is chi-distributed with n degrees of freedom.
        let expected = s * (n - 0.5).sqrt();
        assert!(
            (delta - expected).abs() <= 3.0 * s / 2f64.sqrt(),
            "layer {l}: {delta} vs {expected}"
        );
    }
}

#[test]
fn bias_mod_properties() {
    let f = fixture();
    assert_eq!(apply_bias_mod(&f.model, 0.0, 3).unwrap(), f.model);
    let mut p = init_parameters(&ModelConfig::new(5, vec![200], 3).unwrap()).unwrap();
    for (i, b) in p.layers[0].bias.iter_mut().enumerate() {
        *b = (i as f64).sin();
    }
    for seed in 0..10 {
        let m = apply_bias_mod(&p, 0.5, seed).unwrap();
        let (w, b) = changed_layers(&p, &m);
        assert!(w.is_empty());
        assert_eq!(b.len(), 1);
        let l = b[0];
        let orig = &p.layers[l].bias;
        let n = orig.len() as f64;
        let mean = orig.iter().sum::<f64>() / n;
        let std = (orig.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
        // Zero biases fall back to unit std.
        let s = 0.5 * if std > 0.0 { std } else { 1.0 };
        let delta = orig
            .iter()
            .zip(&m.layers[l].bias)
            .map(|(a, b)| (a - b).powi(2))
            .sum::<f64>()
            .sqrt();
        let expected = s * (n - 0.5).sqrt();
        assert!(
            (delta - expected).abs() <= 3.0 * s / 2f64.sqrt(),
            "layer {l}: {delta} vs {expected}"
        );
    }
}

#[test]
fn fc_layer_mod_examples() {
    let mc = ModelConfig::new(2, vec![8], 3).unwrap();
    assert_eq!(apply_fc_layer_mod(&mc, 0).unwrap(), mc);
    assert_eq!(apply_fc_layer_mod(&mc, 4).unwrap().hidden_layers, vec![12]);
    assert!(apply_fc_layer_mod(&mc, -8).is_err());
    let flat = ModelConfig::new(2, vec![], 3).unwrap();
    assert_eq!(apply_fc_layer_mod(&flat, 5).unwrap(), flat);
}

#[test]
fn seed_override_examples() {
    let f = fixture();
    let mc = f.mc.clone().with_init(InitScheme::Kaiming, 4);
    let (m2, t2) = apply_seed_override(&mc, &f.tc, 4);
    assert_eq!((m2, t2), (mc.clone(), f.tc.clone()));

    let (m3, t3) = apply_seed_override(&mc, &f.tc, 99);
    assert_eq!((m3.init_seed, t3.shuffle_seed), (99, 99));
    let x = f.split.train.features();
    let y = f.split.train.labels();
    let a = train(x, y, &m3, &t3).unwrap();
    assert_eq!(a, train(x, y, &m3, &t3).unwrap());
    assert_ne!(a, train(x, y, &mc, &f.tc).unwrap());
}

#[test]
fn perturb_all_off_is_identity() {
    let f = fixture();
    let pool = standard_pool();
    let b = perturb(&pool, &pool.all_off(), &f.split, &f.mc, &f.tc, 42).unwrap();
    assert_eq!(&b.test_x, f.split.test.features());
    assert_eq!(b.train_y, f.split.train.labels());
    assert_eq!(b.model_config, f.mc);
    assert_eq!(b.train_config, f.tc);
    assert!(b.post_hoc.is_empty());
    assert_eq!(b.modify_model(&f.model).unwrap(), f.model);
}

#[test]
fn perturb_label_factor_touches_only_labels() {
    let f = fixture();
    let pool = standard_pool();
    let ps = pool.parse_strategy("0-2-0").unwrap();
    let b = perturb(&pool, &ps, &f.split, &f.mc, &f.tc, 42).unwrap();
    assert_eq!(&b.test_x, f.split.test.features());
    assert_ne!(b.train_y, f.split.train.labels());
    assert_eq!(b.model_config, f.mc);
    assert_eq!(b.train_config, f.tc);
    assert!(b.post_hoc.is_empty());
    assert_eq!(b, perturb(&pool, &ps, &f.split, &f.mc, &f.tc, 42).unwrap());
    assert_ne!(
        b.train_y,
        perturb(&pool, &ps, &f.split, &f.mc, &f.tc, 43).unwrap().train_y
    );
}

#[test]
fn perturb_configuration_factors() {
    let f = fixture();
    let pool = pool_from(json!([
        {"factor": "F2", "levels": [0.0, 0.5]},
        {"factor": "F4", "levels": [0.0, 0.3]},
        {"factor": "F6", "levels": [0.0, 0.3]},
        {"factor": "F8", "levels": [0, 4]},
        {"factor": "F10", "levels": [null, 123]},
    ]));
    let b = perturb(
        &pool,
        &pool.parse_strategy("0-0-0-1-1").unwrap(),
        &f.split,
        &f.mc,
        &f.tc,
        1,
    )
    .unwrap();
    assert_eq!(b.model_config.hidden_layers, vec![12]);
    assert_eq!((b.model_config.init_seed, b.train_config.shuffle_seed), (123, 123));
    assert_eq!(&b.test_x, f.split.test.features());
    assert_eq!(b.train_y, f.split.train.labels());

    let b = perturb(
        &pool,
        &pool.parse_strategy("1-1-1-0-0").unwrap(),
        &f.split,
        &f.mc,
        &f.tc,
        1,
    )
    .unwrap();
    assert_ne!(&b.test_x, f.split.test.features());
    assert_ne!(b.train_y, f.split.train.labels());
    assert_eq!(b.post_hoc.len(), 1);
    let modified = b.modify_model(&f.model).unwrap();
    let (w, bias) = changed_layers(&f.model, &modified);
    assert!(w.is_empty());
    assert_eq!(bias.len(), 1);
}

#[test]
fn perturb_fgsm_and_weights_compose() {
    let f = fixture();
    let pool = standard_pool();
    let ps = pool.parse_strategy("1-0-2").unwrap();
    let b = perturb(&pool, &ps, &f.split, &f.mc, &f.tc, 42).unwrap();
    assert!(matches!(b.post_hoc.as_slice(), [PostHoc::WeightNoise { .. }, PostHoc::Fgsm { sigma }] if *sigma == 0.003));
    let theta_hat = b.modify_model(&f.model).unwrap();
    let (w, bias) = changed_layers(&f.model, &theta_hat);
    assert_eq!(w.len(), 1);
    assert!(bias.is_empty());
    let x = f.split.test.features();
    let adv = b
        .attack_inputs(&theta_hat, f.split.test.labels(), f.split.test.feature_ranges())
        .unwrap();
    for (a, c) in adv.iter_rows().zip(x.iter_rows()) {
        assert!(a.iter().zip(c).all(|(p, q)| (p - q).abs() <= 0.003));
    }
}

#[test]
fn robustness_conditions_identity_cases() {
    let f = fixture();
    let x = f.split.test.features();
    let v = check_robustness_conditions(&RobustnessQuery {
        base: &f.model,
        perturbed: &f.model,
        inputs: x,
        perturbed_inputs: x,
        sigma: 0.003,
        eta: 0.1,
        norm: PNorm::Inf,
        output: None,
    })
    .unwrap();
    assert_eq!(v.max_input_distance, 0.0);
    assert!(v.input_robust);
    assert_eq!(v.config_distance, Some(0.0));
    assert!(v.config_premise && v.config_robust);
    assert_eq!(v.config_agreement, 1.0);
}

#[test]
fn robustness_conditions_flag_fragile_model() {
    // Boundary at x0 = 0; every sample sits 0.001 away from it.
    let mut model = init_parameters(&ModelConfig::new(2, vec![], 2).unwrap()).unwrap();
    model.layers[0].weight = Matrix::from_rows(&[[1.0, 0.0], [-1.0, 0.0]]).unwrap();
    model.layers[0].bias = vec![0.0, 0.0];
    let x = Matrix::from_rows(&[[0.001, 0.3], [-0.001, -0.2], [0.5, 0.0]]).unwrap();
    let y = [0, 1, 0];
    let adv = apply_fgsm(&model, &x, &y, 0.003, None).unwrap();
    let noisy = [1, 0, 1];
    let v = check_robustness_conditions(&RobustnessQuery {
        base: &model,
        perturbed: &model,
        inputs: &x,
        perturbed_inputs: &adv,
        // The premise is strict and FGSM moves by exactly sigma.
        sigma: 0.0031,
        eta: 0.0,
        norm: PNorm::Inf,
        output: Some(OutputCheck {
            true_labels: &y,
            noisy_labels: &noisy,
            delta: 10.0,
        }),
    })
    .unwrap();
    assert!(v.samples.iter().all(|s| s.input_premise));
    assert!(!v.input_robust);
    assert_eq!(v.input_violations, 2);
    assert!(!v.samples[0].prediction_stable && !v.samples[1].prediction_stable);
    assert!(v.samples[2].prediction_stable);
    assert!(v.output_robust.is_some());
    assert!(v.max_input_distance <= 0.003);
}

#[test]
fn pnorm_distances() {
    let a = [0.0, 0.0];
    let b = [3.0, -4.0];
    assert_eq!(PNorm::Inf.distance(&a, &b), 4.0);
    assert_eq!(PNorm::P(1.0).distance(&a, &b), 7.0);
    assert_eq!(PNorm::P(2.0).distance(&a, &b), 5.0);
    assert!(PNorm::new(0.5).is_err());
    assert_eq!("inf".parse::<PNorm>().unwrap(), PNorm::Inf);
    assert_eq!("2".parse::<PNorm>().unwrap(), PNorm::P(2.0));
}

#[test]
fn factor_kind_parsing() {
    assert_eq!("F5".parse::<FactorKind>().unwrap(), FactorKind::WeightModification);
    assert_eq!("f10".parse::<FactorKind>().unwrap(), FactorKind::SeedOverride);
    assert_eq!("label_noise".parse::<FactorKind>().unwrap(), FactorKind::LabelNoise);
    assert!("F7".parse::<FactorKind>().is_err());
    for k in FactorKind::ALL {
        let expected = match k {
            FactorKind::AdversarialAttack | FactorKind::OutOfDistribution => Surface::Inputs,
            FactorKind::LabelFlipping | FactorKind::LabelNoise => Surface::Labels,
            _ => Surface::Configuration,
        };
        assert_eq!(k.surface(), expected);
    }
}
