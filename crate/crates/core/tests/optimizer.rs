//! Surrogate gradients against central finite differences, and the algebraic
//! properties of advantages, k3 and softmax.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rewardsmith_core::grpo::{clip_grad_norm, compute_advantages, k3_kl, surrogate_with_advantages};
use rewardsmith_core::policy::{log_softmax, softmax, SlotSchema};
use rewardsmith_core::{PolicyParams, Rollout};

const EPS: f64 = 0.2;
const BETA: f64 = 0.04;

fn random_params(rng: &mut ChaCha8Rng, scale: f64) -> PolicyParams {
    let mut p = PolicyParams::zeros(&SlotSchema::default());
    let flat: Vec<f64> = (0..p.num_params()).map(|_| rng.random_range(-scale..scale)).collect();
    p.set_flat(&flat);
    p
}

/// A group with old log-probs offset from the current ones, so ratios land
/// on both sides of the clip range.
fn random_state(rng: &mut ChaCha8Rng) -> Option<(PolicyParams, PolicyParams, Vec<Rollout>, Vec<f64>)> {
    let params = random_params(rng, 1.5);
    let reference = random_params(rng, 1.5);
    let arities = SlotSchema::default().arities();
    let mut group = Vec::new();
    for _ in 0..4 {
        let choices: Vec<usize> = arities.iter().map(|&a| rng.random_range(0..a)).collect();
        let lps: Vec<f64> = params
            .slots
            .iter()
            .zip(&choices)
            .map(|(s, &c)| log_softmax(&s.logits)[c])
            .collect();
        let old: Vec<f64> = lps.iter().map(|l| l + rng.random_range(-0.4..0.4)).collect();
        // stay away from the kinks of the clipped objective
        for (l, o) in lps.iter().zip(&old) {
            let r = (l - o).exp();
            if (r - (1.0 - EPS)).abs() < 1e-3 || (r - (1.0 + EPS)).abs() < 1e-3 {
                return None;
            }
        }
        group.push(Rollout { task_id: "t".into(), slot_choices: choices, logprobs_old: old, text: String::new() });
    }
    let rewards: Vec<f64> = (0..4).map(|_| rng.random_range(-5.0..8.0)).collect();
    Some((params, reference, group, compute_advantages(&rewards)))
}

#[test]
fn surrogate_gradient_matches_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let mut states = 0;
    let mut worst: f64 = 0.0;
    while states < 50 {
        let Some((params, reference, group, adv)) = random_state(&mut rng) else { continue };
        let s = surrogate_with_advantages(&params, &reference, &group, &adv, EPS, BETA);
        let analytic = s.grad.flatten();
        let flat = params.flatten();
        let h = 1e-6;
        let fd: Vec<f64> = (0..flat.len())
            .map(|i| {
                let eval = |delta: f64| {
                    let mut x = flat.clone();
                    x[i] += delta;
                    let mut p = params.clone();
                    p.set_flat(&x);
                    surrogate_with_advantages(&p, &reference, &group, &adv, EPS, BETA).value
                };
                (eval(h) - eval(-h)) / (2.0 * h)
            })
            .collect();
        let diff: f64 = analytic.iter().zip(&fd).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
        let norm: f64 = fd.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-8);
        let rel = diff / norm;
        worst = worst.max(rel);
        assert!(rel <= 1e-5, "state {states}: relative error {rel}");
        states += 1;
    }
    eprintln!("worst relative error over 50 states: {worst:e}");
}

#[test]
fn k3_is_nonnegative_on_many_pairs() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..1000 {
        let a: f64 = rng.random_range(-12.0..0.0);
        let b: f64 = rng.random_range(-12.0..0.0);
        let v = k3_kl(a, b);
        assert!(v >= 0.0, "k3({a}, {b}) = {v}");
        // direct formula, written out independently
        let d = a - b;
        let direct = d.exp() - d - 1.0;
        assert!((v - direct.max(0.0)).abs() <= 1e-12 * (1.0 + direct.abs()));
    }
}

#[test]
fn clipping_caps_global_norm() {
    let mut g: Vec<f64> = vec![3.0, 4.0];
    let pre = clip_grad_norm(&mut g, 1.0);
    assert_eq!(pre, 5.0);
    assert!(((g[0] * g[0] + g[1] * g[1]).sqrt() - 1.0).abs() < 1e-9);
    let mut small = vec![0.3, 0.4];
    clip_grad_norm(&mut small, 1.0);
    assert_eq!(small, vec![0.3, 0.4]);
}

proptest! {
    #[test]
    fn advantages_have_zero_mean(rewards in prop::collection::vec(-10.0f64..10.0, 2..12)) {
        let a = compute_advantages(&rewards);
        let mean = a.iter().sum::<f64>() / a.len() as f64;
        prop_assert!(mean.abs() < 1e-12, "mean {}", mean);
    }

    #[test]
    fn advantages_are_shift_invariant(rewards in prop::collection::vec(-10.0f64..10.0, 2..12), c in -100.0f64..100.0) {
        let a = compute_advantages(&rewards);
        let shifted: Vec<f64> = rewards.iter().map(|r| r + c).collect();
        let b = compute_advantages(&shifted);
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-9, "{} vs {}", x, y);
        }
    }

    #[test]
    fn k3_nonnegative(a in -30.0f64..5.0, b in -30.0f64..5.0) {
        prop_assert!(k3_kl(a, b) >= 0.0);
    }

    #[test]
    fn softmax_is_shift_invariant_and_normalized(logits in prop::collection::vec(-20.0f64..20.0, 1..6), c in -50.0f64..50.0) {
        let p = softmax(&logits);
        let q = softmax(&logits.iter().map(|l| l + c).collect::<Vec<_>>());
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        for (x, y) in p.iter().zip(&q) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }
}
