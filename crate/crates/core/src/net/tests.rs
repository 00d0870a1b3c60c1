use super::*;
use crate::rng::Rng;
use proptest::prelude::*;

fn single_layer(weight: &[&[f64]], bias: &[f64]) -> Parameters {
    let arch = ModelConfig::new(weight[0].len(), vec![], weight.len()).unwrap();
    Parameters {
        layers: vec![Layer {
            weight: Matrix::from_rows(weight).unwrap(),
            bias: bias.to_vec(),
        }],
        arch,
    }
}

fn random_matrix(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut rng = Rng::new(seed);
    Matrix::new(rows, cols, (0..rows * cols).map(|_| rng.normal()).collect()).unwrap()
}

/// Central finite difference of the mean loss w.r.t. every parameter and input.
/// Returns `(param_grads_flat, input_grads_flat)`.
fn numeric_gradients(params: &Parameters, x: &Matrix, y: &[usize], h: f64) -> (Vec<f64>, Vec<f64>) {
    let eval = |p: &Parameters, x: &Matrix| loss(&forward(p, x).unwrap(), y).unwrap();
    let mut pg = Vec::new();
    for l in 0..params.layers.len() {
        for i in 0..params.layers[l].weight.data().len() {
            let mut plus = params.clone();
            plus.layers[l].weight.data_mut()[i] += h;
            let mut minus = params.clone();
            minus.layers[l].weight.data_mut()[i] -= h;
            pg.push((eval(&plus, x) - eval(&minus, x)) / (2.0 * h));
        }
        for i in 0..params.layers[l].bias.len() {
            let mut plus = params.clone();
            plus.layers[l].bias[i] += h;
            let mut minus = params.clone();
            minus.layers[l].bias[i] -= h;
            pg.push((eval(&plus, x) - eval(&minus, x)) / (2.0 * h));
        }
    }
    let mut xg = Vec::new();
    for i in 0..x.data().len() {
        let mut plus = x.clone();
        plus.data_mut()[i] += h;
        let mut minus = x.clone();
        minus.data_mut()[i] -= h;
        xg.push((eval(params, &plus) - eval(params, &minus)) / (2.0 * h));
    }
    (pg, xg)
}

fn max_rel_error(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(a, b)| (a - b).abs() / a.abs().max(b.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

#[test]
fn init_is_deterministic() {
    let cfg = ModelConfig::new(3, vec![5, 4], 2)
        .unwrap()
        .with_init(InitScheme::Kaiming, 7);
    assert_eq!(init_parameters(&cfg).unwrap(), init_parameters(&cfg).unwrap());
}

#[test]
fn init_degenerate_architecture() {
    let cfg = ModelConfig::new(2, vec![], 2).unwrap();
    let p = init_parameters(&cfg).unwrap();
    assert_eq!(p.layers.len(), 1);
    assert_eq!(p.layers[0].weight.shape(), (2, 2));
    assert_eq!(p.layers[0].bias, vec![0.0, 0.0]);
}

#[test]
fn kaiming_sample_std() {
    // 50 x 200 = 10,000 weights with fan_in 200.
    let cfg = ModelConfig::new(200, vec![], 50)
        .unwrap()
        .with_init(InitScheme::Kaiming, 11);
    let p = init_parameters(&cfg).unwrap();
    let w = p.layers[0].weight.data();
    assert_eq!(w.len(), 10_000);
    let mean = w.iter().sum::<f64>() / w.len() as f64;
    let std = (w.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / w.len() as f64).sqrt();
    let target = (2.0f64 / 200.0).sqrt();
    assert!((std - target).abs() / target < 0.05, "std {std} vs {target}");
}

#[test]
fn xavier_within_limit() {
    let cfg = ModelConfig::new(30, vec![], 10)
        .unwrap()
        .with_init(InitScheme::Xavier, 2);
    let p = init_parameters(&cfg).unwrap();
    let limit = (6.0f64 / 40.0).sqrt();
    assert!(p.layers[0].weight.data().iter().all(|w| w.abs() <= limit));
}

#[test]
fn invalid_config_rejected() {
    assert!(ModelConfig::new(0, vec![], 2).is_err());
    assert!(ModelConfig::new(2, vec![], 1).is_err());
    assert!(ModelConfig::new(2, vec![3, 0], 2).is_err());
    let json = r#"{"input_dim": 2, "hidden_layers": [0], "output_dim": 2}"#;
    assert!(serde_json::from_str::<ModelConfig>(json).is_err());
    let json = r#"{"input_dim": 2, "output_dim": 2, "bogus": 1}"#;
    assert!(serde_json::from_str::<ModelConfig>(json).is_err());
}

#[test]
fn zero_net_gives_uniform() {
    let cfg = ModelConfig::new(3, vec![4], 4).unwrap();
    let p = init_parameters(&cfg).unwrap().zeros_like();
    let probs = forward(&p, &random_matrix(3, 3, 1)).unwrap();
    assert!(probs.data().iter().all(|&v| v == 0.25));
}

#[test]
fn identity_net_zero_input() {
    let p = single_layer(&[&[1.0, 0.0], &[0.0, 1.0]], &[0.0, 0.0]);
    let probs = forward(&p, &Matrix::from_rows(&[[0.0, 0.0]]).unwrap()).unwrap();
    assert_eq!(probs.row(0), &[0.5, 0.5]);
}

#[test]
fn forward_shape_mismatch() {
    let p = single_layer(&[&[1.0, 0.0], &[0.0, 1.0]], &[0.0, 0.0]);
    let err = forward(&p, &Matrix::zeros(1, 3)).unwrap_err();
    assert!(matches!(err, Error::Shape(_)));
}

#[test]
fn loss_examples() {
    let p = Matrix::from_rows(&[[1.0 - 1e-15, 1e-15]]).unwrap();
    assert!(loss(&p, &[0]).unwrap().abs() < 1e-14);

    let u = Matrix::from_rows(&[[0.25; 4], [0.25; 4]]).unwrap();
    assert!((loss(&u, &[0, 3]).unwrap() - 4f64.ln()).abs() < 1e-15);

    // Hand-summed: -(ln 0.7 + ln 0.5 + ln 0.1) / 3
    let mixed = Matrix::from_rows(&[[0.7, 0.2, 0.1], [0.25, 0.5, 0.25], [0.1, 0.8, 0.1]]).unwrap();
    let expected = -(0.7f64.ln() + 0.5f64.ln() + 0.1f64.ln()) / 3.0;
    assert!((loss(&mixed, &[0, 1, 2]).unwrap() - expected).abs() < 1e-15);

    assert!(matches!(loss(&mixed, &[0, 1, 3]), Err(Error::Data(_))));
}

#[test]
fn backward_matches_finite_differences() {
    for (seed, hidden, act) in [
        (1, vec![5], Activation::Tanh),
        (2, vec![6, 4], Activation::Tanh),
        (3, vec![7], Activation::Relu),
        (4, vec![], Activation::Relu),
    ] {
        let cfg = ModelConfig::new(3, hidden, 3)
            .unwrap()
            .with_activation(act)
            .with_init(InitScheme::Xavier, seed);
        let mut p = init_parameters(&cfg).unwrap();
        for l in &mut p.layers {
            for (i, b) in l.bias.iter_mut().enumerate() {
                *b = 0.1 * (i as f64 + 1.0);
            }
        }
        let x = random_matrix(4, 3, seed + 100);
        let y = [0, 2, 1, 2];
        let g = backward(&p, &x, &y).unwrap();
        let (np, nx) = numeric_gradients(&p, &x, &y, 1e-5);
        let err_p = max_rel_error(&g.params.flatten(), &np);
        let err_x = max_rel_error(g.inputs.data(), &nx);
        assert!(err_p < 1e-4, "seed {seed}: param rel err {err_p}");
        assert!(err_x < 1e-4, "seed {seed}: input rel err {err_x}");
    }
}

#[test]
fn duplicated_sample_gives_identical_input_grads() {
    let cfg = ModelConfig::new(2, vec![4], 2)
        .unwrap()
        .with_init(InitScheme::Kaiming, 3);
    let p = init_parameters(&cfg).unwrap();
    let x = Matrix::from_rows(&[[0.3, -0.2], [0.3, -0.2]]).unwrap();
    let g = backward(&p, &x, &[1, 1]).unwrap();
    assert_eq!(g.inputs.row(0), g.inputs.row(1));
}

#[test]
fn confident_correct_has_no_signal() {
    let p = single_layer(&[&[40.0, 0.0], &[0.0, 40.0]], &[0.0, 0.0]);
    let x = Matrix::from_rows(&[[1.0, 0.0], [0.0, 1.0]]).unwrap();
    let g = backward(&p, &x, &[0, 1]).unwrap();
    let norm = g.params.flatten().iter().map(|v| v * v).sum::<f64>().sqrt();
    assert!(norm < 1e-12, "norm {norm}");
}

#[test]
fn predict_tie_breaks_low() {
    assert_eq!(argmax(&[0.5, 0.5]), 0);
    assert_eq!(argmax(&[0.1, 0.2, 0.7]), 2);
    assert_eq!(argmax(&[0.2, 0.4, 0.4]), 1);
}

#[test]
fn predict_is_forward_then_argmax() {
    let cfg = ModelConfig::new(3, vec![6], 4)
        .unwrap()
        .with_init(InitScheme::Kaiming, 9);
    let p = init_parameters(&cfg).unwrap();
    let x = random_matrix(12, 3, 4);
    let probs = forward(&p, &x).unwrap();
    let expected: Vec<usize> = (0..12)
        .map(|r| {
            let row = probs.row(r);
            (0..row.len()).fold(0, |b, i| if row[i] > row[b] { i } else { b })
        })
        .collect();
    assert_eq!(predict(&p, &x).unwrap(), expected);
}

fn blobs_2class() -> (Matrix, Vec<usize>) {
    let mut rng = Rng::new(21);
    let mut rows = Vec::new();
    let mut y = Vec::new();
    for i in 0..40 {
        let c = i % 2;
        let center = if c == 0 { -2.0 } else { 2.0 };
        rows.push([center + 0.3 * rng.normal(), center + 0.3 * rng.normal()]);
        y.push(c);
    }
    (Matrix::from_rows(&rows).unwrap(), y)
}

#[test]
fn train_is_deterministic_and_fits_separable_blobs() {
    let (x, y) = blobs_2class();
    let mc = ModelConfig::new(2, vec![8], 2)
        .unwrap()
        .with_init(InitScheme::Kaiming, 1);
    let tc = TrainConfig::new(200, 8, 0.1, 5).unwrap();
    let a = train(&x, &y, &mc, &tc).unwrap();
    let b = train(&x, &y, &mc, &tc).unwrap();
    assert_eq!(a, b);
    let pred = predict(&a, &x).unwrap();
    assert_eq!(pred, y);
}

#[test]
fn train_config_invariants() {
    assert!(TrainConfig::new(0, 8, 0.1, 0).is_err());
    assert!(TrainConfig::new(1, 0, 0.1, 0).is_err());
    assert!(TrainConfig::new(1, 8, 0.0, 0).is_err());
    assert!(TrainConfig::new(1, 8, f64::NAN, 0).is_err());
    let (x, y) = blobs_2class();
    let mc = ModelConfig::new(2, vec![], 2).unwrap();
    let tc = TrainConfig::new(1, 41, 0.1, 0).unwrap();
    assert!(matches!(train(&x, &y, &mc, &tc), Err(Error::Config(_))));
}

#[test]
fn huge_learning_rate_diverges() {
    let (x, y) = blobs_2class();
    let mc = ModelConfig::new(2, vec![8], 2)
        .unwrap()
        .with_init(InitScheme::Kaiming, 1);
    let tc = TrainConfig::new(5, 4, 1e300, 0).unwrap();
    let r = train(&x, &y, &mc, &tc);
    assert!(matches!(r, Err(Error::Divergence { .. })), "{r:?}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn softmax_rows_normalized(seed in 0u64..10_000, n in 1usize..6, hidden in 1usize..10) {
        let cfg = ModelConfig::new(3, vec![hidden], 4).unwrap().with_init(InitScheme::Kaiming, seed);
        let p = init_parameters(&cfg).unwrap();
        p.validate().unwrap();
        let probs = forward(&p, &random_matrix(n, 3, seed ^ 0xabc)).unwrap();
        for row in probs.iter_rows() {
            prop_assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-12);
            prop_assert!(row.iter().all(|&v| v > 0.0 && v <= 1.0));
        }
        let labels: Vec<usize> = (0..n).map(|i| i % 4).collect();
        prop_assert!(loss(&probs, &labels).unwrap() >= 0.0);
    }

    #[test]
    fn init_shapes_chain(input in 1usize..6, hidden in proptest::collection::vec(1usize..8, 0..4),
                         output in 2usize..6, seed in any::<u64>(), xavier in any::<bool>()) {
        let scheme = if xavier { InitScheme::Xavier } else { InitScheme::Kaiming };
        let cfg = ModelConfig::new(input, hidden, output).unwrap().with_init(scheme, seed);
        prop_assert!(init_parameters(&cfg).unwrap().validate().is_ok());
    }
}
