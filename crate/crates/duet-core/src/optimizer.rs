//! Reward shaping and the GRPO training loop.
//!
//! Rewards are continuous fractions of the rating gap: 1 - |y - y_hat| / M,
//! clamped to [0, 1], so near-miss predictions earn partial credit instead
//! of the all-or-nothing signal integer ratings would give. Each iteration
//! samples one state, draws a group of G actions, scores them against the
//! frozen environment, normalizes rewards into group-relative advantages
//! A_i = (r_i - mean) / (std + eps), and ascends the clipped surrogate
//!
//! ```text
//! J = mean_i[ min(rho_i A_i, clip(rho_i, 1-eps, 1+eps) A_i) ] - beta KL(new || old)
//! rho_i = exp(logprob_new(a_i) - logprob_old(a_i))
//! ```
//!
//! With beta = 0 and no clipping this reduces exactly to REINFORCE with a
//! group baseline. The environment is never mutated.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::HistoryPair;
use crate::math;
use crate::pipeline::policy::{log_softmax, softmax};
use crate::pipeline::{
    render_single_pass_output, ActionTrace, Policy, PolicyError, PolicyParams, ProfileBundle,
    SoftmaxStrategyPolicy,
};
use crate::recommender::{EnvError, Environment};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OptimError {
    #[error("maximum rating gap must be positive and finite, got {0}")]
    BadGap(f64),
    #[error("group needs at least 2 samples, got {0}")]
    GroupTooSmall(usize),
    #[error("{0}")]
    BadConfig(String),
    #[error("trace version {got} does not match the old params snapshot {expected}")]
    StaleTrace { expected: u64, got: u64 },
    #[error("group contains a trace from an incompatible policy family")]
    IncompatibleTrace,
    #[error("non-finite gradient; diagnostics: {dump}")]
    NonFiniteGradient { dump: String },
    #[error("no training states available")]
    NoStates,
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error("environment error: {0}")]
    Environment(EnvError),
}

/// clamp(1 - |y - y_hat| / m, 0, 1): dense reward in [0, 1], monotone
/// decreasing in the prediction error.
pub fn fractional_reward(y: f64, y_hat: f64, m: f64) -> Result<f64, OptimError> {
    if m.is_nan() || m <= 0.0 || !m.is_finite() {
        return Err(OptimError::BadGap(m));
    }
    Ok((1.0 - math::abs(y - y_hat) / m).clamp(0.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AdvantageMode {
    /// (r - mean) / (population std + eps_std)
    Normalized,
    /// r - mean
    MeanBaseline,
}

/// Group-relative advantages. Zero-mean by construction; a zero-variance
/// group yields all-zero advantages.
pub fn group_advantages(
    rewards: &[f64],
    eps_std: f64,
    mode: AdvantageMode,
) -> Result<Vec<f64>, OptimError> {
    if rewards.len() < 2 {
        return Err(OptimError::GroupTooSmall(rewards.len()));
    }
    if matches!(mode, AdvantageMode::Normalized) && eps_std.partial_cmp(&0.0) != Some(core::cmp::Ordering::Greater) {
        return Err(OptimError::BadConfig(format!(
            "eps_std must be positive, got {eps_std}"
        )));
    }
    let mean = math::mean(rewards);
    Ok(match mode {
        AdvantageMode::Normalized => {
            let std = math::population_std(rewards);
            rewards.iter().map(|r| (r - mean) / (std + eps_std)).collect()
        }
        AdvantageMode::MeanBaseline => rewards.iter().map(|r| r - mean).collect(),
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub group_size: usize,
    pub learning_rate: f64,
    pub clip_epsilon: f64,
    pub kl_coefficient: f64,
    pub iterations: usize,
    pub epochs_per_batch: usize,
    pub eps_std: f64,
    pub seed: u64,
    pub advantage_mode: AdvantageMode,
    /// Retries per sample before the sample is dropped from its group.
    pub retry_budget: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            group_size: 8,
            learning_rate: 0.5,
            clip_epsilon: 0.2,
            kl_coefficient: 0.0,
            iterations: 200,
            epochs_per_batch: 1,
            eps_std: 1e-8,
            seed: 7,
            advantage_mode: AdvantageMode::Normalized,
            retry_budget: 3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<(), OptimError> {
        let fail = |msg: String| Err(OptimError::BadConfig(msg));
        if self.group_size < 2 {
            return fail(format!("group_size must be >= 2, got {}", self.group_size));
        }
        if self.learning_rate.is_nan() || self.learning_rate <= 0.0 || !self.learning_rate.is_finite() {
            return fail(format!("learning_rate must be positive, got {}", self.learning_rate));
        }
        if !(self.clip_epsilon > 0.0 && self.clip_epsilon < 1.0) {
            return fail(format!(
                "clip_epsilon must lie in (0, 1), got {}",
                self.clip_epsilon
            ));
        }
        if self.kl_coefficient < 0.0 || !self.kl_coefficient.is_finite() {
            return fail(format!(
                "kl_coefficient must be >= 0, got {}",
                self.kl_coefficient
            ));
        }
        if self.epochs_per_batch == 0 {
            return fail("epochs_per_batch must be >= 1".into());
        }
        if self.eps_std.partial_cmp(&0.0) != Some(core::cmp::Ordering::Greater) {
            return fail(format!("eps_std must be positive, got {}", self.eps_std));
        }
        Ok(())
    }
}

/// One scored action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardSample {
    pub y: i32,
    /// Absent when the environment's output failed to parse.
    pub y_hat: Option<f64>,
    pub reward: f64,
    pub bundle: ProfileBundle,
    pub trace: ActionTrace,
}

/// G scored actions for one state plus their group-relative advantages.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupBatch {
    pub user_id: String,
    pub item_id: String,
    pub samples: Vec<RewardSample>,
    pub advantages: Vec<f64>,
}

impl GroupBatch {
    pub fn new(
        user_id: String,
        item_id: String,
        samples: Vec<RewardSample>,
        cfg: &TrainConfig,
    ) -> Result<Self, OptimError> {
        if samples.len() < 2 {
            return Err(OptimError::GroupTooSmall(samples.len()));
        }
        let rewards: Vec<f64> = samples.iter().map(|s| s.reward).collect();
        let advantages = group_advantages(&rewards, cfg.eps_std, cfg.advantage_mode)?;
        Ok(GroupBatch {
            user_id,
            item_id,
            samples,
            advantages,
        })
    }
}

/// KL(p || q) for two softmax distributions given by logits.
fn kl_divergence(p: &[f64], log_p: &[f64], log_q: &[f64]) -> f64 {
    let terms: Vec<f64> = p
        .iter()
        .zip(log_p.iter().zip(log_q))
        .map(|(pi, (lp, lq))| pi * (lp - lq))
        .collect();
    math::pairwise_sum(&terms)
}

/// Value of the clipped surrogate (gradient-ascent objective). Exposed so
/// the finite-difference oracle can probe the exact function the gradient
/// claims to differentiate. `clip_epsilon` may be infinite (no clipping).
pub fn surrogate_objective(
    logits: &[f64],
    old_logits: &[f64],
    strategy_ids: &[usize],
    advantages: &[f64],
    clip_epsilon: f64,
    kl_coefficient: f64,
) -> f64 {
    let log_p = log_softmax(logits);
    let log_q = log_softmax(old_logits);
    let terms: Vec<f64> = strategy_ids
        .iter()
        .zip(advantages)
        .map(|(&k, &a)| {
            let rho = math::exp(log_p[k] - log_q[k]);
            let unclipped = rho * a;
            let clipped = rho.clamp(1.0 - clip_epsilon, 1.0 + clip_epsilon) * a;
            unclipped.min(clipped)
        })
        .collect();
    let mut j = math::pairwise_sum(&terms) / strategy_ids.len() as f64;
    if kl_coefficient != 0.0 {
        let p = softmax(logits);
        j -= kl_coefficient * kl_divergence(&p, &log_p, &log_q);
    }
    j
}

/// Exact gradient of [`surrogate_objective`] with respect to the logits.
///
/// d log p(k) / d theta_j = delta_jk - p_j, so the active min-branch
/// contributes A rho (delta - p); a sample clipped flat contributes zero.
/// The KL term's gradient is p_j ((log p_j - log q_j) - KL).
pub fn surrogate_gradient(
    logits: &[f64],
    old_logits: &[f64],
    strategy_ids: &[usize],
    advantages: &[f64],
    clip_epsilon: f64,
    kl_coefficient: f64,
) -> Vec<f64> {
    let k_arms = logits.len();
    let p = softmax(logits);
    let log_p = log_softmax(logits);
    let log_q = log_softmax(old_logits);
    let g = strategy_ids.len() as f64;
    let mut grad = alloc::vec![0.0f64; k_arms];
    for (&k, &a) in strategy_ids.iter().zip(advantages) {
        let rho = math::exp(log_p[k] - log_q[k]);
        let unclipped = rho * a;
        let clipped = rho.clamp(1.0 - clip_epsilon, 1.0 + clip_epsilon) * a;
        if unclipped <= clipped {
            // unclipped branch active: d(rho A)/d theta = A rho (delta - p)
            for j in 0..k_arms {
                let delta = if j == k { 1.0 } else { 0.0 };
                grad[j] += a * rho * (delta - p[j]) / g;
            }
        }
        // else: clip is flat outside (1-eps, 1+eps); zero contribution
    }
    if kl_coefficient != 0.0 {
        let kl = kl_divergence(&p, &log_p, &log_q);
        for j in 0..k_arms {
            grad[j] -= kl_coefficient * p[j] * ((log_p[j] - log_q[j]) - kl);
        }
    }
    grad
}

/// One gradient-ascent update of the policy from a group batch. Traces must
/// have been sampled under `old_params`; the returned params carry an
/// incremented version and are installed into the policy.
pub fn grpo_update(
    policy: &mut SoftmaxStrategyPolicy,
    batch: &GroupBatch,
    old_params: &PolicyParams,
    cfg: &TrainConfig,
) -> Result<PolicyParams, OptimError> {
    cfg.validate()?;
    let mut ids = Vec::with_capacity(batch.samples.len());
    for sample in &batch.samples {
        match &sample.trace {
            ActionTrace::Strategy {
                strategy_id,
                params_version,
                ..
            } => {
                if *params_version != old_params.version {
                    return Err(OptimError::StaleTrace {
                        expected: old_params.version,
                        got: *params_version,
                    });
                }
                ids.push(*strategy_id);
            }
            ActionTrace::FreeText { .. } => return Err(OptimError::IncompatibleTrace),
        }
    }

    let mut logits = policy.params().logits.clone();
    for _ in 0..cfg.epochs_per_batch {
        let grad = surrogate_gradient(
            &logits,
            &old_params.logits,
            &ids,
            &batch.advantages,
            cfg.clip_epsilon,
            cfg.kl_coefficient,
        );
        if grad.iter().any(|g| !g.is_finite()) {
            return Err(OptimError::NonFiniteGradient {
                dump: format!(
                    "logits={logits:?} old={:?} ids={ids:?} advantages={:?} grad={grad:?}",
                    old_params.logits, batch.advantages
                ),
            });
        }
        for (l, g) in logits.iter_mut().zip(&grad) {
            *l += cfg.learning_rate * g;
        }
    }

    let updated = PolicyParams {
        logits,
        version: policy.params().version + 1,
    };
    policy.install_params(updated.clone())?;
    Ok(updated)
}

/// Per-sample audit record handed to a [`SampleSink`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub iteration: usize,
    pub seed: u64,
    pub user_id: String,
    pub item_id: String,
    pub raw: String,
    pub parse_ok: bool,
    pub reward: f64,
}

/// Receives every sampled generation, e.g. for JSON-lines audit archives.
pub trait SampleSink {
    fn record(&mut self, record: &SampleRecord);
}

/// Discards records.
pub struct NoopSink;

impl SampleSink for NoopSink {
    fn record(&mut self, _record: &SampleRecord) {}
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationStats {
    pub iteration: usize,
    pub mean_reward: f64,
    pub min_reward: f64,
    pub max_reward: f64,
    pub advantage_mean: f64,
    pub advantage_std: f64,
    pub entropy: f64,
    pub strategy_counts: BTreeMap<usize, u32>,
    pub group_size: usize,
    pub dropped: usize,
    pub skipped: bool,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct TrainingLog {
    pub iterations: Vec<IterationStats>,
}

impl TrainingLog {
    pub fn mean_reward_of_first(&self, n: usize) -> f64 {
        let rewards: Vec<f64> = self
            .iterations
            .iter()
            .filter(|s| !s.skipped)
            .take(n)
            .map(|s| s.mean_reward)
            .collect();
        if rewards.is_empty() {
            0.0
        } else {
            math::mean(&rewards)
        }
    }

    pub fn mean_reward_of_last(&self, n: usize) -> f64 {
        let rewards: Vec<f64> = self
            .iterations
            .iter()
            .filter(|s| !s.skipped)
            .map(|s| s.mean_reward)
            .collect();
        if rewards.is_empty() {
            return 0.0;
        }
        let start = rewards.len().saturating_sub(n);
        math::mean(&rewards[start..])
    }
}

/// On-policy training: per iteration, sample a state, draw G actions,
/// score them against the frozen environment (predictor parse failures earn
/// reward 0; transport errors are retried up to the budget and then the
/// sample is dropped), normalize group advantages, and apply one GRPO
/// update. Fully deterministic given `cfg.seed`. Groups that shrink below 2
/// skip their iteration and are logged as skipped.
pub fn train_loop(
    env: &dyn Environment,
    states: &[HistoryPair],
    policy: &mut SoftmaxStrategyPolicy,
    cfg: &TrainConfig,
    sink: &mut dyn SampleSink,
) -> Result<(PolicyParams, TrainingLog), OptimError> {
    cfg.validate()?;
    if cfg.iterations > 0 && states.is_empty() {
        return Err(OptimError::NoStates);
    }
    let m = env.scale().gap();
    let mut rng = ChaCha20Rng::seed_from_u64(cfg.seed);
    let mut log = TrainingLog::default();

    for iteration in 0..cfg.iterations {
        let state = &states[rng.gen_range(0..states.len())];
        let old_params = policy.params().clone();
        let y = state.target.rating;
        let mut samples: Vec<RewardSample> = Vec::with_capacity(cfg.group_size);
        let mut dropped = 0usize;

        for _ in 0..cfg.group_size {
            let seed = rng.next_u64();
            let (bundle, trace) = policy.sample(state, seed)?;
            let mut attempts = 0usize;
            let prediction = loop {
                match env.predict(&bundle.user_profile, &bundle.item_profile) {
                    Ok(p) => break Some(p),
                    Err(EnvError::Transport { retryable: true, .. }) if attempts < cfg.retry_budget => {
                        attempts += 1;
                    }
                    Err(_) => break None,
                }
            };
            let Some(prediction) = prediction else {
                dropped += 1;
                continue;
            };
            let (reward, y_hat) = match prediction.score() {
                Some(score) if prediction.parse_ok => {
                    (fractional_reward(f64::from(y), score, m)?, Some(score))
                }
                _ => (0.0, None),
            };
            sink.record(&SampleRecord {
                iteration,
                seed,
                user_id: state.target.user_id.clone(),
                item_id: state.target.item_id.clone(),
                raw: render_single_pass_output(&bundle),
                parse_ok: prediction.parse_ok,
                reward,
            });
            samples.push(RewardSample {
                y,
                y_hat,
                reward,
                bundle,
                trace,
            });
        }

        if samples.len() < 2 {
            log.iterations.push(IterationStats {
                iteration,
                mean_reward: 0.0,
                min_reward: 0.0,
                max_reward: 0.0,
                advantage_mean: 0.0,
                advantage_std: 0.0,
                entropy: policy.entropy(),
                strategy_counts: BTreeMap::new(),
                group_size: samples.len(),
                dropped,
                skipped: true,
            });
            continue;
        }

        let batch = GroupBatch::new(
            state.target.user_id.clone(),
            state.target.item_id.clone(),
            samples,
            cfg,
        )?;
        grpo_update(policy, &batch, &old_params, cfg)?;

        let rewards: Vec<f64> = batch.samples.iter().map(|s| s.reward).collect();
        let mut strategy_counts = BTreeMap::new();
        for sample in &batch.samples {
            if let ActionTrace::Strategy { strategy_id, .. } = sample.trace {
                *strategy_counts.entry(strategy_id).or_insert(0u32) += 1;
            }
        }
        log.iterations.push(IterationStats {
            iteration,
            mean_reward: math::mean(&rewards),
            min_reward: rewards.iter().copied().fold(f64::INFINITY, f64::min),
            max_reward: rewards.iter().copied().fold(f64::NEG_INFINITY, f64::max),
            advantage_mean: math::mean(&batch.advantages),
            advantage_std: math::population_std(&batch.advantages),
            entropy: policy.entropy(),
            strategy_counts,
            group_size: batch.samples.len(),
            dropped,
            skipped: false,
        });
    }

    Ok((policy.params().clone(), log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Interaction, RatingScale};
    use crate::pipeline::{CueConfig, Focus, StrategyEntry, StrategyVocabulary};
    use crate::recommender::Prediction;
    use alloc::string::ToString;
    use alloc::vec;

    #[test]
    fn fractional_reward_forced_cases() {
        assert_eq!(fractional_reward(5.0, 5.0, 4.0).unwrap(), 1.0);
        assert_eq!(fractional_reward(5.0, 4.0, 4.0).unwrap(), 0.75);
        assert_eq!(fractional_reward(5.0, 1.0, 4.0).unwrap(), 0.0);
        // overshoot clamps to the floor
        assert_eq!(fractional_reward(1.0, 6.0, 4.0).unwrap(), 0.0);
    }

    #[test]
    fn fractional_reward_rejects_bad_gap() {
        assert!(matches!(fractional_reward(5.0, 5.0, 0.0), Err(OptimError::BadGap(_))));
        assert!(matches!(fractional_reward(5.0, 5.0, -1.0), Err(OptimError::BadGap(_))));
    }

    #[test]
    fn advantages_zero_variance() {
        let adv = group_advantages(&[0.75, 0.75, 0.75], 1e-8, AdvantageMode::Normalized).unwrap();
        assert_eq!(adv, vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn advantages_two_point_case() {
        // mean 0.5, population std 0.5 -> exactly +-0.5/(0.5+eps)
        let eps = 1e-8;
        let adv = group_advantages(&[1.0, 0.0], eps, AdvantageMode::Normalized).unwrap();
        let expected = 0.5 / (0.5 + eps);
        assert!((adv[0] - expected).abs() < 1e-12);
        assert!((adv[1] + expected).abs() < 1e-12);
    }

    #[test]
    fn advantages_three_point_hand_case() {
        // rewards [1, .5, 0]: mean .5, population std sqrt(1/6)
        let eps = 1e-8;
        let adv = group_advantages(&[1.0, 0.5, 0.0], eps, AdvantageMode::Normalized).unwrap();
        let std = (1.0f64 / 6.0).sqrt();
        assert!((adv[0] - 0.5 / (std + eps)).abs() < 1e-12);
        assert!(adv[1].abs() < 1e-12);
        assert!((adv[2] + 0.5 / (std + eps)).abs() < 1e-12);
        let mean: f64 = adv.iter().sum::<f64>() / 3.0;
        assert!(mean.abs() < 1e-9, "advantages must be zero-mean");
    }

    #[test]
    fn advantages_reject_small_groups() {
        assert!(matches!(
            group_advantages(&[1.0], 1e-8, AdvantageMode::Normalized),
            Err(OptimError::GroupTooSmall(1))
        ));
    }

    #[test]
    fn advantages_shift_invariant_and_scale_sign_stable() {
        let rewards = [0.9, 0.1, 0.4, 0.4, 0.7];
        let eps = 1e-8;
        let base = group_advantages(&rewards, eps, AdvantageMode::Normalized).unwrap();
        let shifted: Vec<f64> = rewards.iter().map(|r| r + 10.0).collect();
        let shifted_adv = group_advantages(&shifted, eps, AdvantageMode::Normalized).unwrap();
        for (a, b) in base.iter().zip(&shifted_adv) {
            assert!((a - b).abs() < 1e-9, "shift invariance");
        }
        let c = 3.0;
        let scaled: Vec<f64> = rewards.iter().map(|r| r * c).collect();
        let scaled_adv = group_advantages(&scaled, eps, AdvantageMode::Normalized).unwrap();
        let mean = rewards.iter().sum::<f64>() / rewards.len() as f64;
        let var = rewards.iter().map(|r| (r - mean) * (r - mean)).sum::<f64>() / rewards.len() as f64;
        let std = var.sqrt();
        for (i, (a, s)) in base.iter().zip(&scaled_adv).enumerate() {
            assert_eq!(
                a.signum() * f64::from((a.abs() > 1e-12) as i32),
                s.signum() * f64::from((s.abs() > 1e-12) as i32),
                "sign pattern at {i}"
            );
            let expected = (rewards[i] - mean) * c / (c * std + eps);
            assert!((s - expected).abs() < 1e-9);
        }
    }

    fn rec(user: &str, item: &str, rating: i32, ts: i64, text: &str) -> Interaction {
        Interaction {
            user_id: user.to_string(),
            item_id: item.to_string(),
            rating,
            timestamp: ts,
            text: text.to_string(),
            summary: None,
        }
    }

    fn test_state() -> HistoryPair {
        HistoryPair {
            user_history: vec![
                rec("u", "a", 5, 3, "funk groove funk"),
                rec("u", "b", 4, 2, "funk bassline"),
            ],
            item_history: vec![
                rec("v", "t", 5, 4, "funk groove"),
                rec("w", "t", 4, 1, "deep funk"),
            ],
            target: rec("u", "t", 5, 10, ""),
        }
    }

    fn two_arm_policy() -> SoftmaxStrategyPolicy {
        let vocab = StrategyVocabulary::new(vec![
            StrategyEntry {
                id: 0,
                user_template: "neutral user {cue}".into(),
                item_template: "neutral item {cue}".into(),
                focus: Focus::Neutral,
            },
            StrategyEntry {
                id: 1,
                user_template: "genre keywords user {cue}".into(),
                item_template: "genre keywords item {cue}".into(),
                focus: Focus::Genre,
            },
        ])
        .unwrap();
        SoftmaxStrategyPolicy::new(vocab, CueConfig::default())
    }

    struct KeywordEnv;

    impl Environment for KeywordEnv {
        fn predict(&self, user: &crate::pipeline::Profile, item: &crate::pipeline::Profile) -> Result<Prediction, EnvError> {
            let hit = user.text().contains("funk") && item.text().contains("funk");
            Ok(Prediction::parsed(if hit { 5.0 } else { 1.0 }, None))
        }

        fn scale(&self) -> RatingScale {
            RatingScale::one_to_five()
        }

        fn fingerprint(&self) -> u64 {
            42
        }
    }

    fn sample_batch(policy: &SoftmaxStrategyPolicy, cfg: &TrainConfig, seeds: &[u64]) -> GroupBatch {
        let env = KeywordEnv;
        let state = test_state();
        let mut samples = Vec::new();
        for &seed in seeds {
            let (bundle, trace) = policy.sample(&state, seed).unwrap();
            let p = env.predict(&bundle.user_profile, &bundle.item_profile).unwrap();
            let reward = fractional_reward(5.0, p.score().unwrap(), 4.0).unwrap();
            samples.push(RewardSample { y: 5, y_hat: p.score(), reward, bundle, trace });
        }
        GroupBatch::new("u".into(), "t".into(), samples, cfg).unwrap()
    }

    #[test]
    fn zero_advantages_leave_logits_unchanged() {
        let mut policy = two_arm_policy();
        let cfg = TrainConfig { kl_coefficient: 0.0, ..TrainConfig::default() };
        let old = policy.params().clone();
        // force identical rewards so advantages vanish
        let mut batch = sample_batch(&policy, &cfg, &[1, 2, 3, 4]);
        for s in &mut batch.samples {
            s.reward = 0.75;
        }
        let rewards: Vec<f64> = batch.samples.iter().map(|s| s.reward).collect();
        batch.advantages = group_advantages(&rewards, cfg.eps_std, cfg.advantage_mode).unwrap();
        let before = policy.params().logits.clone();
        let updated = grpo_update(&mut policy, &batch, &old, &cfg).unwrap();
        assert_eq!(updated.logits, before, "beta=0 and zero advantages: exactly unchanged");
        assert_eq!(updated.version, old.version + 1);
    }

    #[test]
    fn signed_advantages_move_logits_in_the_right_direction() {
        let mut policy = two_arm_policy();
        let cfg = TrainConfig::default();
        let old = policy.params().clone();
        // construct a two-sample group: strategy 1 wins, strategy 0 loses
        let state = test_state();
        let mut samples = Vec::new();
        for (seed_hunt, want) in [(0u64..500, 0usize), (0u64..500, 1usize)] {
            for seed in seed_hunt {
                let (bundle, trace) = policy.sample(&state, seed).unwrap();
                if matches!(trace, ActionTrace::Strategy { strategy_id, .. } if strategy_id == want) {
                    let reward = if want == 1 { 1.0 } else { 0.0 };
                    samples.push(RewardSample { y: 5, y_hat: Some(5.0), reward, bundle, trace });
                    break;
                }
            }
        }
        assert_eq!(samples.len(), 2);
        let batch = GroupBatch::new("u".into(), "t".into(), samples, &cfg).unwrap();
        let updated = grpo_update(&mut policy, &batch, &old, &cfg).unwrap();
        assert!(updated.logits[1] > old.logits[1], "winner's logit must rise");
        assert!(updated.logits[0] < old.logits[0], "loser's logit must fall");
    }

    #[test]
    fn stale_traces_are_rejected() {
        let mut policy = two_arm_policy();
        let cfg = TrainConfig::default();
        let batch = sample_batch(&policy, &cfg, &[1, 2]);
        let wrong_old = PolicyParams { logits: vec![0.0, 0.0], version: 99 };
        assert!(matches!(
            grpo_update(&mut policy, &batch, &wrong_old, &cfg),
            Err(OptimError::StaleTrace { expected: 99, .. })
        ));
    }

    /// REINFORCE with a group baseline: mean_i A_i (delta_j,k_i - p_j).
    fn reinforce_gradient(logits: &[f64], ids: &[usize], advantages: &[f64]) -> Vec<f64> {
        let p = softmax(logits);
        let g = ids.len() as f64;
        let mut grad = vec![0.0; logits.len()];
        for (&k, &a) in ids.iter().zip(advantages) {
            for j in 0..logits.len() {
                let delta = if j == k { 1.0 } else { 0.0 };
                grad[j] += a * (delta - p[j]) / g;
            }
        }
        grad
    }

    #[test]
    fn reduces_to_reinforce_on_policy() {
        // beta = 0, eps = infinity, current params equal to old params
        let mut rng = ChaCha20Rng::seed_from_u64(11);
        for _ in 0..100 {
            let k = rng.gen_range(2..=8);
            let g = rng.gen_range(2..=8);
            let logits: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let ids: Vec<usize> = (0..g).map(|_| rng.gen_range(0..k)).collect();
            let adv: Vec<f64> = (0..g).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let grpo = surrogate_gradient(&logits, &logits, &ids, &adv, f64::INFINITY, 0.0);
            let reinforce = reinforce_gradient(&logits, &ids, &adv);
            for (a, b) in grpo.iter().zip(&reinforce) {
                assert!((a - b).abs() < 1e-10, "{a} vs {b}");
            }
        }
    }

    fn numerical_gradient(
        logits: &[f64],
        old: &[f64],
        ids: &[usize],
        adv: &[f64],
        eps: f64,
        beta: f64,
    ) -> Vec<f64> {
        let h = 1e-5;
        let mut grad = vec![0.0; logits.len()];
        for j in 0..logits.len() {
            let mut plus = logits.to_vec();
            plus[j] += h;
            let mut minus = logits.to_vec();
            minus[j] -= h;
            grad[j] = (surrogate_objective(&plus, old, ids, adv, eps, beta)
                - surrogate_objective(&minus, old, ids, adv, eps, beta))
                / (2.0 * h);
        }
        grad
    }

    #[test]
    fn gradient_matches_central_finite_differences() {
        let mut rng = ChaCha20Rng::seed_from_u64(23);
        let eps = 0.2;
        let mut checked = 0;
        while checked < 100 {
            let k = rng.gen_range(2..=8);
            let g = rng.gen_range(2..=8);
            let old: Vec<f64> = (0..k).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let logits: Vec<f64> = old.iter().map(|l| l + rng.gen_range(-0.15..0.15)).collect();
            let ids: Vec<usize> = (0..g).map(|_| rng.gen_range(0..k)).collect();
            let adv: Vec<f64> = (0..g).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let beta = if checked % 2 == 0 { 0.0 } else { 0.1 };

            // skip instances where a ratio sits at a clip kink: the
            // objective is non-differentiable there
            let log_p = log_softmax(&logits);
            let log_q = log_softmax(&old);
            let near_kink = ids.iter().any(|&kk| {
                let rho = (log_p[kk] - log_q[kk]).exp();
                (rho - (1.0 - eps)).abs() < 1e-4 || (rho - (1.0 + eps)).abs() < 1e-4
            });
            if near_kink {
                continue;
            }

            let analytic = surrogate_gradient(&logits, &old, &ids, &adv, eps, beta);
            let numeric = numerical_gradient(&logits, &old, &ids, &adv, eps, beta);
            for (a, n) in analytic.iter().zip(&numeric) {
                let rel = (a - n).abs() / a.abs().max(n.abs()).max(1e-3);
                assert!(rel < 1e-5, "analytic {a} numeric {n} rel {rel}");
            }
            checked += 1;
        }
    }

    #[test]
    fn zero_iterations_is_a_no_op() {
        let mut policy = two_arm_policy();
        let before = policy.params().clone();
        let cfg = TrainConfig { iterations: 0, ..TrainConfig::default() };
        let (params, log) = train_loop(&KeywordEnv, &[test_state()], &mut policy, &cfg, &mut NoopSink).unwrap();
        assert_eq!(params, before);
        assert!(log.iterations.is_empty());
    }

    #[test]
    fn train_loop_is_deterministic() {
        let cfg = TrainConfig { iterations: 20, ..TrainConfig::default() };
        let run = || {
            let mut policy = two_arm_policy();
            train_loop(&KeywordEnv, &[test_state()], &mut policy, &cfg, &mut NoopSink).unwrap()
        };
        let (params_a, log_a) = run();
        let (params_b, log_b) = run();
        assert_eq!(params_a, params_b);
        assert_eq!(log_a, log_b);
    }

    #[test]
    fn train_loop_learns_the_dominant_arm() {
        let mut policy = two_arm_policy();
        let cfg = TrainConfig { iterations: 120, ..TrainConfig::default() };
        let (params, log) = train_loop(&KeywordEnv, &[test_state()], &mut policy, &cfg, &mut NoopSink).unwrap();
        let probs = softmax(&params.logits);
        assert!(probs[1] > 0.9, "genre arm should dominate, got {probs:?}");
        assert!(log.mean_reward_of_last(10) > log.mean_reward_of_first(10));
    }

    #[test]
    fn environment_is_never_mutated() {
        let env = KeywordEnv;
        let before = env.fingerprint();
        let mut policy = two_arm_policy();
        let cfg = TrainConfig { iterations: 10, ..TrainConfig::default() };
        train_loop(&env, &[test_state()], &mut policy, &cfg, &mut NoopSink).unwrap();
        assert_eq!(env.fingerprint(), before);
    }

    struct FlakyEnv {
        fail_until: core::cell::Cell<usize>,
    }

    impl Environment for FlakyEnv {
        fn predict(&self, _u: &crate::pipeline::Profile, _i: &crate::pipeline::Profile) -> Result<Prediction, EnvError> {
            let left = self.fail_until.get();
            if left > 0 {
                self.fail_until.set(left - 1);
                return Err(EnvError::Transport { retryable: true, message: "busy".into() });
            }
            Ok(Prediction::parsed(3.0, None))
        }

        fn scale(&self) -> RatingScale {
            RatingScale::one_to_five()
        }

        fn fingerprint(&self) -> u64 {
            0
        }
    }

    #[test]
    fn retryable_failures_consume_budget_then_succeed() {
        let env = FlakyEnv { fail_until: core::cell::Cell::new(2) };
        let mut policy = two_arm_policy();
        let cfg = TrainConfig { iterations: 1, retry_budget: 3, ..TrainConfig::default() };
        let (_, log) = train_loop(&env, &[test_state()], &mut policy, &cfg, &mut NoopSink).unwrap();
        assert!(!log.iterations[0].skipped);
        assert_eq!(log.iterations[0].dropped, 0);
    }

    struct DeadEnv;

    impl Environment for DeadEnv {
        fn predict(&self, _u: &crate::pipeline::Profile, _i: &crate::pipeline::Profile) -> Result<Prediction, EnvError> {
            Err(EnvError::Transport { retryable: false, message: "down".into() })
        }

        fn scale(&self) -> RatingScale {
            RatingScale::one_to_five()
        }

        fn fingerprint(&self) -> u64 {
            0
        }
    }

    #[test]
    fn dead_environment_skips_iterations() {
        let mut policy = two_arm_policy();
        let cfg = TrainConfig { iterations: 2, ..TrainConfig::default() };
        let (params, log) = train_loop(&DeadEnv, &[test_state()], &mut policy, &cfg, &mut NoopSink).unwrap();
        assert!(log.iterations.iter().all(|s| s.skipped && s.dropped == cfg.group_size));
        assert_eq!(params.version, 0, "no update ever ran");
    }

    #[test]
    fn parse_failures_earn_zero_reward() {
        struct Mute;
        impl Environment for Mute {
            fn predict(&self, _u: &crate::pipeline::Profile, _i: &crate::pipeline::Profile) -> Result<Prediction, EnvError> {
                Ok(Prediction::failed(Some("no numbers here".into())))
            }
            fn scale(&self) -> RatingScale {
                RatingScale::one_to_five()
            }
            fn fingerprint(&self) -> u64 {
                0
            }
        }
        let mut policy = two_arm_policy();
        let cfg = TrainConfig { iterations: 1, ..TrainConfig::default() };
        let (_, log) = train_loop(&Mute, &[test_state()], &mut policy, &cfg, &mut NoopSink).unwrap();
        let stats = &log.iterations[0];
        assert!(!stats.skipped);
        assert_eq!(stats.mean_reward, 0.0);
        assert_eq!(stats.max_reward, 0.0);
    }
}
