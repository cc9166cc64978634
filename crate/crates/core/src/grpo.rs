//! Group-relative policy optimization for the slot policy.
//!
//! Advantages are group-normalized rewards; the objective is the clipped
//! surrogate with a per-slot k3 KL penalty against a frozen reference.

use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::decimal::Decimal;
use crate::policy::{logprob_and_grad, sample_rollout, PolicyParams, Rollout};
use crate::rewards::{RewardBatch, RewardFault, RewardFn, PROTECTED_NAMES};
use crate::scalar::Real;
use crate::tasks::Dataset;

/// Stabilizer added to the group standard deviation.
pub const ADVANTAGE_EPS: f64 = 1e-4;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GrpoConfig {
    pub group_size: usize,
    pub steps: usize,
    /// Peak learning rate. 1e-2 for the ~16-parameter slot policy; the
    /// 3B-parameter LoRA setting this mirrors used 5e-6.
    pub lr: f64,
    pub clip_eps: f64,
    pub kl_beta: f64,
    pub warmup_ratio: f64,
    pub weight_decay: f64,
    pub max_grad_norm: f64,
    /// Optimizer passes over each sampled group; 1 means the ratio is
    /// always 1 at the update point.
    pub num_iterations: usize,
    pub seed: u64,
}

impl Default for GrpoConfig {
    fn default() -> Self {
        GrpoConfig {
            group_size: 4,
            steps: 500,
            lr: 1e-2,
            clip_eps: 0.2,
            kl_beta: 0.04,
            warmup_ratio: 0.1,
            weight_decay: 0.1,
            max_grad_norm: 1.0,
            num_iterations: 1,
            seed: 3407,
        }
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ConfigError {
    #[error("group_size must be at least 2, got {0}")]
    GroupSize(usize),
    #[error("clip_eps must lie in (0, 1), got {0}")]
    ClipEps(f64),
    #[error("kl_beta must be nonnegative, got {0}")]
    KlBeta(f64),
    #[error("warmup_ratio must lie in [0, 1), got {0}")]
    Warmup(f64),
    #[error("{0} must be positive and finite")]
    NotPositive(&'static str),
}

impl GrpoConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.group_size < 2 {
            return Err(ConfigError::GroupSize(self.group_size));
        }
        if !(self.clip_eps > 0.0 && self.clip_eps < 1.0) {
            return Err(ConfigError::ClipEps(self.clip_eps));
        }
        if !(self.kl_beta >= 0.0) || !self.kl_beta.is_finite() {
            return Err(ConfigError::KlBeta(self.kl_beta));
        }
        if !(self.warmup_ratio >= 0.0 && self.warmup_ratio < 1.0) {
            return Err(ConfigError::Warmup(self.warmup_ratio));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(ConfigError::NotPositive("lr"));
        }
        if !(self.max_grad_norm > 0.0 && self.max_grad_norm.is_finite()) {
            return Err(ConfigError::NotPositive("max_grad_norm"));
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return Err(ConfigError::NotPositive("weight_decay"));
        }
        if self.num_iterations == 0 {
            return Err(ConfigError::NotPositive("num_iterations"));
        }
        Ok(())
    }

    pub fn warmup_steps(&self) -> usize {
        (self.warmup_ratio * self.steps as f64).ceil() as usize
    }
}

/// Group-normalized advantages: `(r - mean) / (std + 1e-4)` with the
/// population standard deviation.
pub fn compute_advantages<F: Real>(rewards: &[F]) -> Vec<F> {
    let n = F::of(rewards.len() as f64);
    let mean = rewards.iter().copied().sum::<F>() / n;
    let var = rewards.iter().map(|&r| (r - mean) * (r - mean)).sum::<F>() / n;
    let denom = var.sqrt() + F::of(ADVANTAGE_EPS);
    rewards.iter().map(|&r| (r - mean) / denom).collect()
}

/// k3 estimate `exp(ref - cur) - (ref - cur) - 1`; never negative.
pub fn k3_kl<F: Real>(logp_ref: F, logp_cur: F) -> F {
    let d = logp_ref - logp_cur;
    (d.exp_m1() - d).max(F::zero())
}

/// Cosine schedule with linear warmup; `lr_at(0) = 0`, `lr_at(steps) = 0`.
pub fn lr_at(cfg: &GrpoConfig, step: usize) -> f64 {
    let warm = cfg.warmup_steps();
    if step < warm {
        return cfg.lr * step as f64 / warm as f64;
    }
    let span = cfg.steps.saturating_sub(warm);
    if span == 0 {
        return cfg.lr;
    }
    let progress = ((step - warm) as f64 / span as f64).min(1.0);
    cfg.lr * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos())
}

#[derive(Debug, Clone)]
pub struct TrainState<F> {
    pub params: PolicyParams<F>,
    ref_params: PolicyParams<F>,
    pub step: usize,
    moment1: Vec<F>,
    moment2: Vec<F>,
    adam_t: i32,
}

impl<F: Real> TrainState<F> {
    /// Fresh state; the reference policy is a frozen copy of `init`.
    pub fn new(init: PolicyParams<F>) -> Self {
        let n = init.num_params();
        TrainState {
            ref_params: init.clone(),
            params: init,
            step: 0,
            moment1: vec![F::zero(); n],
            moment2: vec![F::zero(); n],
            adam_t: 0,
        }
    }

    /// State with separate current and reference parameters.
    pub fn with_reference(params: PolicyParams<F>, ref_params: PolicyParams<F>) -> Self {
        let mut s = TrainState::new(params);
        s.ref_params = ref_params;
        s
    }

    pub fn ref_params(&self) -> &PolicyParams<F> {
        &self.ref_params
    }

    /// One AdamW ascent step along `grad` (bias-corrected, decoupled decay).
    pub fn adam_ascend(&mut self, grad: &[F], lr: f64, weight_decay: f64) {
        self.adam_t += 1;
        let (b1, b2) = (F::of(ADAM_BETA1), F::of(ADAM_BETA2));
        let bc1 = F::one() - b1.powi(self.adam_t);
        let bc2 = F::one() - b2.powi(self.adam_t);
        let lr = F::of(lr);
        let decay = F::one() - lr * F::of(weight_decay);
        let mut flat = self.params.flatten();
        for (i, p) in flat.iter_mut().enumerate() {
            let g = grad[i];
            self.moment1[i] = b1 * self.moment1[i] + (F::one() - b1) * g;
            self.moment2[i] = b2 * self.moment2[i] + (F::one() - b2) * g * g;
            let m_hat = self.moment1[i] / bc1;
            let v_hat = self.moment2[i] / bc2;
            *p = *p * decay + lr * m_hat / (v_hat.sqrt() + F::of(ADAM_EPS));
        }
        self.params.set_flat(&flat);
    }
}

/// Objective value, its gradient, and diagnostics for one group.
#[derive(Debug, Clone)]
pub struct Surrogate<F> {
    pub value: F,
    pub grad: PolicyParams<F>,
    pub mean_kl: F,
    pub clip_fraction: F,
}

/// Clipped surrogate with per-slot k3 KL, given precomputed advantages.
///
/// Gradient is exact away from the clip boundaries; where the clipped
/// branch is selected and the ratio lies outside `[1-eps, 1+eps]` the
/// term contributes nothing.
pub fn surrogate_with_advantages<F: Real>(
    params: &PolicyParams<F>,
    ref_params: &PolicyParams<F>,
    group: &[Rollout<F>],
    advantages: &[F],
    clip_eps: f64,
    kl_beta: f64,
) -> Surrogate<F> {
    let g_inv = F::one() / F::of(group.len() as f64);
    let (lo, hi) = (F::of(1.0 - clip_eps), F::of(1.0 + clip_eps));
    let beta = F::of(kl_beta);
    let mut value = F::zero();
    let mut grad = params.zeros_like();
    let mut kl_sum = F::zero();
    let mut clipped = 0usize;
    let mut terms = 0usize;
    for (rollout, &adv) in group.iter().zip(advantages) {
        let (lps, grads) = logprob_and_grad(params, &rollout.slot_choices);
        let (ref_lps, _) = logprob_and_grad(ref_params, &rollout.slot_choices);
        let len_inv = F::one() / F::of(lps.len() as f64);
        for t in 0..lps.len() {
            let ratio = (lps[t] - rollout.logprobs_old[t]).exp();
            let unclipped = ratio * adv;
            let clipped_val = ratio.max(lo).min(hi) * adv;
            let (term, dterm) = if unclipped <= clipped_val {
                (unclipped, ratio * adv)
            } else {
                clipped += 1;
                (clipped_val, F::zero())
            };
            let kl = k3_kl(ref_lps[t], lps[t]);
            let dkl = F::one() - (ref_lps[t] - lps[t]).exp();
            value += g_inv * len_inv * (term - beta * kl);
            let coeff = g_inv * len_inv * (dterm - beta * dkl);
            for (gv, &d) in grad.logits_mut(t).iter_mut().zip(&grads[t]) {
                *gv += coeff * d;
            }
            kl_sum += kl;
            terms += 1;
        }
    }
    let n = F::of(terms.max(1) as f64);
    Surrogate {
        value,
        grad,
        mean_kl: kl_sum / n,
        clip_fraction: F::of(clipped as f64) / n,
    }
}

/// Surrogate for a scored group: advantages come from `rewards`.
pub fn surrogate_objective<F: Real>(
    state: &TrainState<F>,
    group: &[Rollout<F>],
    rewards: &[F],
    cfg: &GrpoConfig,
) -> Surrogate<F> {
    let adv = compute_advantages(rewards);
    surrogate_with_advantages(&state.params, &state.ref_params, group, &adv, cfg.clip_eps, cfg.kl_beta)
}

/// Per-rollout objective term: `(1/|o|) sum_t [min(...) - beta k3]`.
pub fn rollout_objective<F: Real>(
    params: &PolicyParams<F>,
    ref_params: &PolicyParams<F>,
    rollout: &Rollout<F>,
    advantage: F,
    clip_eps: f64,
    kl_beta: f64,
) -> F {
    surrogate_with_advantages(params, ref_params, std::slice::from_ref(rollout), &[advantage], clip_eps, kl_beta)
        .value
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StepLog {
    pub step: usize,
    pub mean_reward: f64,
    #[serde(rename = "surrogate")]
    pub surrogate_value: f64,
    #[serde(rename = "kl")]
    pub mean_kl: f64,
    #[serde(rename = "clip_frac")]
    pub clip_fraction: f64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TrialError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("reward bundle lacks base reward {0}")]
    MissingBaseReward(&'static str),
    #[error("training split is empty")]
    EmptyDataset,
    #[error(transparent)]
    Reward(#[from] RewardFault),
}

/// Clips `grad` in place to the given global L2 norm; returns the pre-clip norm.
pub fn clip_grad_norm<F: Real>(grad: &mut [F], max_norm: f64) -> F {
    let norm = grad.iter().map(|&g| g * g).sum::<F>().sqrt();
    let max = F::of(max_norm);
    if norm > max {
        let scale = max / (norm + F::of(1e-12));
        for g in grad.iter_mut() {
            *g *= scale;
        }
    }
    norm
}

fn check_bundle(bundle: &[Arc<dyn RewardFn>]) -> Result<(), TrialError> {
    let names: Vec<String> = bundle.iter().flat_map(|r| r.component_names()).collect();
    for base in PROTECTED_NAMES {
        if !names.iter().any(|n| n == base) {
            return Err(TrialError::MissingBaseReward(base));
        }
    }
    Ok(())
}

/// Scores a batch with the element-wise sum of every reward in `bundle`.
pub fn score_bundle(bundle: &[Arc<dyn RewardFn>], batch: &RewardBatch<'_>) -> Result<Vec<f64>, RewardFault> {
    let mut total = vec![0.0; batch.len()];
    for r in bundle {
        let s = r.score(batch)?;
        if s.len() != total.len() || s.iter().any(|v| !v.is_finite()) {
            return Err(RewardFault {
                reward: r.name().to_string(),
                reason: "returned a malformed score batch".to_string(),
            });
        }
        for (t, v) in total.iter_mut().zip(s) {
            *t += v;
        }
    }
    Ok(total)
}

/// Runs one GRPO training trial from `init`.
pub fn train_trial<F: Real>(
    bundle: &[Arc<dyn RewardFn>],
    cfg: &GrpoConfig,
    data: &Dataset,
    init: PolicyParams<F>,
) -> Result<(PolicyParams<F>, Vec<StepLog>), TrialError> {
    cfg.validate()?;
    check_bundle(bundle)?;
    if cfg.steps == 0 {
        return Ok((init, Vec::new()));
    }
    if data.is_empty() {
        return Err(TrialError::EmptyDataset);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut state = TrainState::new(init);
    let mut logs = Vec::with_capacity(cfg.steps);
    for step in 0..cfg.steps {
        let task = &data.tasks[rng.random_range(0..data.len())];
        let group: Vec<Rollout<F>> = (0..cfg.group_size)
            .map(|_| sample_rollout(&state.params, task, &mut rng))
            .collect();
        let prompts = vec![task.question.clone(); group.len()];
        let completions: Vec<String> = group.iter().map(|r| r.text.clone()).collect();
        let answers: Vec<Decimal> = vec![task.answer; group.len()];
        let rewards = score_bundle(bundle, &RewardBatch::new(&prompts, &completions, &answers))?;
        let rewards_f: Vec<F> = rewards.iter().map(|&r| F::of(r)).collect();
        let adv = compute_advantages(&rewards_f);

        let lr = lr_at(cfg, step);
        let (mut value, mut kl, mut clip) = (0.0, 0.0, 0.0);
        for _ in 0..cfg.num_iterations {
            let s = surrogate_with_advantages(
                &state.params,
                &state.ref_params,
                &group,
                &adv,
                cfg.clip_eps,
                cfg.kl_beta,
            );
            value += s.value.to_f64_lossy();
            kl += s.mean_kl.to_f64_lossy();
            clip += s.clip_fraction.to_f64_lossy();
            let mut g = s.grad.flatten();
            clip_grad_norm(&mut g, cfg.max_grad_norm);
            state.adam_ascend(&g, lr, cfg.weight_decay);
        }
        state.step = step + 1;
        let k = cfg.num_iterations as f64;
        logs.push(StepLog {
            step,
            mean_reward: rewards.iter().sum::<f64>() / rewards.len() as f64,
            surrogate_value: value / k,
            mean_kl: kl / k,
            clip_fraction: clip / k,
        });
    }
    Ok((state.params, logs))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::policy::SlotSchema;
    use crate::rewards::base_rewards;
    use crate::tasks::generate_dataset;

    #[test]
    fn advantages_of_one_to_four() {
        let a = compute_advantages(&[1.0f64, 2.0, 3.0, 4.0]);
        let want = [-1.3416, -0.4472, 0.4472, 1.3416];
        for (x, w) in a.iter().zip(want) {
            assert!((x - w).abs() < 1e-3, "{x} vs {w}");
        }
        assert_eq!(compute_advantages(&[5.0f64; 4]), vec![0.0; 4]);
    }

    #[test]
    fn k3_values() {
        assert_eq!(k3_kl(-1.3f64, -1.3), 0.0);
        let v = k3_kl(2f64.ln(), 0.0);
        assert!((v - (2.0 - 2f64.ln() - 1.0)).abs() < 1e-12);
        assert!((v - 0.3069).abs() < 1e-4);
    }

    #[test]
    fn schedule_boundaries() {
        let cfg = GrpoConfig::default();
        assert_eq!(lr_at(&cfg, 0), 0.0);
        assert_eq!(cfg.warmup_steps(), 50);
        assert!((lr_at(&cfg, 50) - cfg.lr).abs() < 1e-15);
        assert!(lr_at(&cfg, 500) <= 1e-8 * cfg.lr);
        assert!(lr_at(&cfg, 25) > 0.0 && lr_at(&cfg, 25) < cfg.lr);
    }

    #[test]
    fn config_validation() {
        let mut c = GrpoConfig::default();
        assert!(c.validate().is_ok());
        c.group_size = 1;
        assert_eq!(c.validate(), Err(ConfigError::GroupSize(1)));
        let c = GrpoConfig { clip_eps: 1.0, ..Default::default() };
        assert!(c.validate().is_err());
        let c = GrpoConfig { warmup_ratio: 1.0, ..Default::default() };
        assert!(c.validate().is_err());
    }

    #[test]
    fn zero_steps_leaves_params() {
        let (train, _) = generate_dataset(1, 10, 1);
        let init = PolicyParams::<f64>::zeros(&SlotSchema::default());
        let cfg = GrpoConfig { steps: 0, ..Default::default() };
        let (p, logs) = train_trial(&base_rewards(), &cfg, &train, init.clone()).unwrap();
        assert_eq!(p, init);
        assert!(logs.is_empty());
    }

    #[test]
    fn bundle_must_carry_base_rewards() {
        let (train, _) = generate_dataset(1, 10, 1);
        let init = PolicyParams::<f64>::zeros(&SlotSchema::default());
        let cfg = GrpoConfig { steps: 3, ..Default::default() };
        let partial = base_rewards()[..2].to_vec();
        assert_eq!(
            train_trial(&partial, &cfg, &train, init).unwrap_err(),
            TrialError::MissingBaseReward("check_answer")
        );
    }

    #[test]
    fn fresh_policy_identity() {
        let (train, _) = generate_dataset(3, 5, 1);
        let params = PolicyParams::<f64>::zeros(&SlotSchema::default());
        let state = TrainState::new(params.clone());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let group: Vec<_> = (0..4).map(|_| sample_rollout(&params, &train.tasks[0], &mut rng)).collect();
        let s = surrogate_objective(&state, &group, &[1.0, -2.0, 0.5, 3.0], &GrpoConfig::default());
        assert!(s.value.abs() < 1e-12);
        assert_eq!(s.mean_kl, 0.0);
        assert_eq!(s.clip_fraction, 0.0);
    }
}
