//! Model checks against independent oracles: a straight-line reference
//! forward pass, central finite differences and a scalar Adam recurrence.

mod common;

use common::rng;
use gaitlens_core::model::*;
use gaitlens_core::GaitClass;
use rand::Rng;

fn tiny_config() -> ModelConfig {
    ModelConfig {
        conv_layers: 3,
        feature_maps: 2,
        fc_width: 5,
        input_length: 20,
        ..ModelConfig::default()
    }
}

fn grad_config() -> ModelConfig {
    ModelConfig {
        feature_maps: 8,
        fc_width: 16,
        input_length: 40,
        ..ModelConfig::default()
    }
}

fn random_params(cfg: &ModelConfig, seed: u64, scale: f64) -> ModelParams {
    let mut r = rng(seed);
    let mut p = ModelParams::zeros(cfg).unwrap();
    for t in p.tensors_mut() {
        t.iter_mut().for_each(|v| *v = r.random_range(-scale..scale));
    }
    p
}

fn random_input(len: usize, seed: u64) -> Vec<f64> {
    let mut r = rng(seed);
    (0..len).map(|_| r.random_range(0.0..1.0)).collect()
}

/// Reference forward pass written without any of the library's helpers.
fn reference_logits(p: &ModelParams, x: &[f64]) -> Vec<f64> {
    let lambda = 1.0507009873554804934;
    let alpha = 1.6732632423543772848;
    let act = |v: f64| if v > 0.0 { lambda * v } else { lambda * alpha * (v.exp() - 1.0) };
    let mut maps: Vec<Vec<f64>> = vec![x.to_vec()];
    for layer in &p.conv {
        let len = maps[0].len();
        let out_len = (len - 3) / 2 + 1;
        let mut next = vec![vec![0.0; out_len]; layer.out_maps];
        for m in 0..layer.out_maps {
            for t in 0..out_len {
                let mut s = layer.biases[m];
                for (c, map) in maps.iter().enumerate() {
                    for j in 0..3 {
                        s += layer.weights[(m * layer.in_maps + c) * 3 + j] * map[2 * t + j];
                    }
                }
                next[m][t] = act(s);
            }
        }
        maps = next;
    }
    let flat: Vec<f64> = maps.concat();
    let mut hidden = vec![0.0; p.fc1.outputs];
    for (o, h) in hidden.iter_mut().enumerate() {
        let mut s = p.fc1.biases[o];
        for (i, v) in flat.iter().enumerate() {
            s += p.fc1.weights[o * flat.len() + i] * v;
        }
        *h = act(s);
    }
    (0..p.out.outputs)
        .map(|o| {
            let mut s = p.out.biases[o];
            for (i, v) in hidden.iter().enumerate() {
                s += p.out.weights[o * hidden.len() + i] * v;
            }
            s
        })
        .collect()
}

#[test]
fn forward_matches_reference_on_tiny_config() {
    let cfg = tiny_config();
    assert_eq!(cfg.conv_lengths().unwrap(), vec![9, 4, 1]);
    for seed in 0..5 {
        let p = random_params(&cfg, seed, 0.8);
        let x = random_input(20, 100 + seed);
        let cache = forward(&p, &x, DropoutMode::Inference).unwrap();
        let expected = reference_logits(&p, &x);
        for (a, b) in cache.logits.iter().zip(&expected) {
            assert!((a - b).abs() < 1e-10, "{a} vs {b}");
        }
    }
}

#[test]
fn zero_params_give_uniform_output() {
    let cfg = ModelConfig::default();
    let p = ModelParams::zeros(&cfg).unwrap();
    let x = random_input(cfg.input_length, 1);
    let pred = predict(&p, &x).unwrap();
    assert_eq!(pred.class, GaitClass::TrueEquinus);
    assert!(pred.probabilities.iter().all(|&q| q == 0.25));
    let (loss, _) = loss_and_gradients(&p, &[(x, GaitClass::CrouchGait)], DropoutMode::Inference).unwrap();
    assert!((loss - 4f64.ln()).abs() < 1e-12);
}

#[test]
fn probabilities_are_normalized_and_shift_invariant() {
    let cfg = grad_config();
    let p = random_params(&cfg, 4, 1.5);
    let mut shifted = p.clone();
    shifted.out.biases.iter_mut().for_each(|b| *b += 7.25);
    for seed in 0..20 {
        let x = random_input(cfg.input_length, seed);
        let a = forward(&p, &x, DropoutMode::Inference).unwrap();
        let b = forward(&shifted, &x, DropoutMode::Inference).unwrap();
        assert!((a.probabilities.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert!(a.probabilities.iter().all(|&q| q >= 0.0));
        for (u, v) in a.probabilities.iter().zip(&b.probabilities) {
            assert!((u - v).abs() < 1e-9);
        }
    }
}

#[test]
fn inference_is_pure() {
    let cfg = grad_config();
    let p = random_params(&cfg, 8, 1.0);
    let x = random_input(cfg.input_length, 9);
    let a = predict(&p, &x).unwrap();
    let b = predict(&p, &x).unwrap();
    assert_eq!(a, b);
    // A training-mode pass draws masks; inference ignores them entirely.
    let mut r = rng(1);
    let train = forward(&p, &x, DropoutMode::Sample(&mut r)).unwrap();
    assert!(train.flat_mask.is_some());
    assert_eq!(predict(&p, &x).unwrap(), a);
}

/// Per-tensor relative error `‖a − n‖ / max(‖a‖, ‖n‖)` between analytic and
/// central-difference gradients.
fn finite_difference_errors(
    params: &ModelParams,
    batch: &[(Vec<f64>, GaitClass)],
    masks: Option<(&DropoutMask, &DropoutMask)>,
) -> Vec<(String, f64)> {
    let mode = || match masks {
        Some((a, b)) => DropoutMode::Fixed(a, b),
        None => DropoutMode::Inference,
    };
    let (_, analytic) = loss_and_gradients(params, batch, mode()).unwrap();
    let h = 1e-4;
    let names: Vec<String> = params.tensors().into_iter().map(|(n, _)| n).collect();
    let mut out = Vec::new();
    for (ti, name) in names.iter().enumerate() {
        let len = params.tensors()[ti].1.len();
        let mut numeric = vec![0.0; len];
        for (i, slot) in numeric.iter_mut().enumerate() {
            let mut plus = params.clone();
            plus.tensors_mut()[ti][i] += h;
            let mut minus = params.clone();
            minus.tensors_mut()[ti][i] -= h;
            let lp = loss_and_gradients(&plus, batch, mode()).unwrap().0;
            let lm = loss_and_gradients(&minus, batch, mode()).unwrap().0;
            *slot = (lp - lm) / (2.0 * h);
        }
        let a = analytic.tensors()[ti].1;
        let diff: f64 = a.iter().zip(&numeric).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
        let na: f64 = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nn: f64 = numeric.iter().map(|x| x * x).sum::<f64>().sqrt();
        let rel = if na.max(nn) == 0.0 { 0.0 } else { diff / na.max(nn) };
        out.push((name.clone(), rel));
    }
    out
}

fn grad_batch(cfg: &ModelConfig) -> Vec<(Vec<f64>, GaitClass)> {
    (0..3)
        .map(|i| (random_input(cfg.input_length, 50 + i), GaitClass::ALL[(i as usize * 3) % 4]))
        .collect()
}

#[test]
fn gradients_match_finite_differences() {
    let cfg = grad_config();
    let mut r = rng(77);
    let p = init_params(&cfg, &mut r).unwrap();
    for (name, rel) in finite_difference_errors(&p, &grad_batch(&cfg), None) {
        assert!(rel < 1e-4, "{name}: relative error {rel}");
    }
}

#[test]
fn gradients_match_finite_differences_through_fixed_dropout() {
    let cfg = ModelConfig {
        dropout_rate: 0.2,
        ..grad_config()
    };
    let mut r = rng(78);
    let p = init_params(&cfg, &mut r).unwrap();
    let m1 = DropoutMask::sample(cfg.flatten_len().unwrap(), cfg.dropout_rate, &mut r);
    let m2 = DropoutMask::sample(cfg.fc_width, cfg.dropout_rate, &mut r);
    assert!(m1.keep.iter().any(|k| !k) || m2.keep.iter().any(|k| !k));
    for (name, rel) in finite_difference_errors(&p, &grad_batch(&cfg), Some((&m1, &m2))) {
        assert!(rel < 1e-4, "{name}: relative error {rel}");
    }
}

#[test]
fn batch_gradient_is_mean_of_items() {
    let cfg = grad_config();
    let p = random_params(&cfg, 12, 0.5);
    let x = random_input(cfg.input_length, 13);
    let y = random_input(cfg.input_length, 14);
    let single = loss_and_gradients(&p, &[(x.clone(), GaitClass::JumpGait)], DropoutMode::Inference).unwrap();
    let doubled = loss_and_gradients(
        &p,
        &[(x.clone(), GaitClass::JumpGait), (x.clone(), GaitClass::JumpGait)],
        DropoutMode::Inference,
    )
    .unwrap();
    assert!((single.0 - doubled.0).abs() < 1e-14);
    for ((_, a), (_, b)) in single.1.tensors().iter().zip(doubled.1.tensors()) {
        for (u, v) in a.iter().zip(b) {
            assert!((u - v).abs() <= 1e-14 * (1.0 + u.abs()));
        }
    }
    let other = loss_and_gradients(&p, &[(y.clone(), GaitClass::ApparentEquinus)], DropoutMode::Inference).unwrap();
    let pair = loss_and_gradients(
        &p,
        &[(x, GaitClass::JumpGait), (y, GaitClass::ApparentEquinus)],
        DropoutMode::Inference,
    )
    .unwrap();
    assert!((pair.0 - (single.0 + other.0) / 2.0).abs() < 1e-12);
    for (((_, a), (_, b)), (_, c)) in single.1.tensors().iter().zip(other.1.tensors()).zip(pair.1.tensors()) {
        for ((u, v), w) in a.iter().zip(b).zip(c) {
            assert!(((u + v) / 2.0 - w).abs() < 1e-12);
        }
    }
}

#[test]
fn empty_batch_and_bad_shapes_are_rejected() {
    let cfg = grad_config();
    let p = random_params(&cfg, 1, 0.5);
    let empty: Vec<(Vec<f64>, GaitClass)> = Vec::new();
    assert!(loss_and_gradients(&p, &empty, DropoutMode::Inference).is_err());
    assert!(forward(&p, &[0.0; 39], DropoutMode::Inference).is_err());
    assert!(predict(&p, &[0.0; 41]).is_err());
}

#[test]
fn adam_minimizes_a_parabola_like_a_scalar_oracle() {
    // Every parameter of a tiny model follows f(w) = w², gradient 2w.
    let cfg = ModelConfig {
        conv_layers: 1,
        feature_maps: 1,
        fc_width: 1,
        input_length: 3,
        ..ModelConfig::default()
    };
    let train = TrainConfig {
        learning_rate: 0.01,
        ..TrainConfig::default()
    };
    let mut params = ModelParams::zeros(&cfg).unwrap();
    for t in params.tensors_mut() {
        t.iter_mut().for_each(|v| *v = 1.0);
    }
    let mut state = AdamState::new(&params);
    // Scalar oracle.
    let (mut w, mut m, mut v) = (1.0f64, 0.0f64, 0.0f64);
    let mut previous = 1.0f64;
    for step in 1..=100 {
        let mut grads = params.zeros_like();
        for (g, (_, p)) in grads.tensors_mut().into_iter().zip(params.tensors()) {
            for (gi, pi) in g.iter_mut().zip(p) {
                *gi = 2.0 * pi;
            }
        }
        adam_step(&mut params, &grads, &mut state, &train);
        let g = 2.0 * w;
        m = 0.9 * m + 0.1 * g;
        v = 0.999 * v + 0.001 * g * g;
        let m_hat = m / (1.0 - 0.9f64.powi(step));
        let v_hat = v / (1.0 - 0.999f64.powi(step));
        w -= 0.01 * m_hat / (v_hat.sqrt() + 1e-8);
        let current = params.conv[0].weights[0];
        assert!((current - w).abs() < 1e-12);
        assert!(current.abs() < previous, "step {step}: {current} vs {previous}");
        previous = current.abs();
    }
    assert!(previous < 0.5, "final |w| = {previous}");
}
