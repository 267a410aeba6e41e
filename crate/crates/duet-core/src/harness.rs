//! The evaluation protocol: for every test interaction, rebuild its
//! histories, produce profiles (learned policy, raw history, or TextRank),
//! ask the frozen environment for a rating, and accumulate rating metrics,
//! NDCG over sampled candidate sets (random or EASE-hard negatives), and
//! alignment/coverage diagnostics with per-variance-group breakdowns.
//!
//! Deterministic end to end: targets are visited in timestamp order,
//! negative sampling derives per-target seeds from the run seed, and all
//! aggregation uses fixed-order pairwise summation.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::{
    build_history_pair, item_history_for, CorpusError, HistoryPair, Interaction, SplitDataset,
};
use crate::ease::{fit_ease, hard_negatives, EaseConfig, EaseError, RatingMatrix};
use crate::embed::{EmbedError, Embedder};
use crate::fnv::Fnv1a;
use crate::math;
use crate::metrics::{
    alignment, coverage, ndcg_at_k, random_negatives, rating_metrics, variance_groups,
    CandidateSet, EvalReport, GroupReport, MetricsError, RatingEval, RatingPair,
};
use crate::pipeline::{Policy, PolicyError, Profile, Side};
use crate::recommender::{EnvError, Environment, Prediction};
use crate::textrank::{textrank_summary, TextRankError, DEFAULT_DAMPING, DEFAULT_MAX_ITER, DEFAULT_TOLERANCE};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum HarnessError {
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Policy(#[from] PolicyError),
    #[error(transparent)]
    Metrics(#[from] MetricsError),
    #[error(transparent)]
    Ease(#[from] EaseError),
    #[error(transparent)]
    TextRank(#[from] TextRankError),
    #[error(transparent)]
    Embed(#[from] EmbedError),
    #[error("environment exhausted: {0}")]
    Environment(EnvError),
    #[error("no evaluable test interactions")]
    NoTestData,
    #[error("invalid eval options: {0}")]
    BadOptions(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NegativeMode {
    Random,
    Ease,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalOptions {
    pub l_u: usize,
    pub l_i: usize,
    /// NDCG cutoffs; empty disables the ranking pass.
    pub k_list: Vec<u32>,
    pub negative_mode: NegativeMode,
    pub n_negatives: usize,
    pub seed: u64,
    pub ease: EaseConfig,
    pub retry_budget: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        EvalOptions {
            l_u: 30,
            l_i: 30,
            k_list: alloc::vec![1, 5, 10],
            negative_mode: NegativeMode::Random,
            n_negatives: 9,
            seed: 17,
            ease: EaseConfig::default(),
            retry_budget: 3,
        }
    }
}

impl EvalOptions {
    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.l_u == 0 || self.l_i == 0 {
            return Err(HarnessError::BadOptions("history lengths must be >= 1".into()));
        }
        for &k in &self.k_list {
            if k == 0 || k as usize > self.n_negatives + 1 {
                return Err(HarnessError::BadOptions(alloc::format!(
                    "K={k} outside 1..={}",
                    self.n_negatives + 1
                )));
            }
        }
        Ok(())
    }
}

/// Where profiles come from.
pub enum ProfileSource<'a> {
    /// Greedy execution of a learned policy.
    Policy(&'a dyn Policy),
    /// The 10H baseline: the raw recent history text stands in for each
    /// profile.
    RawHistory,
    /// Extractive summaries of each side's history.
    TextRank { n_sentences: usize },
}

fn join_texts(texts: &[&str]) -> String {
    texts.join("\n")
}

/// Profile pair for one target, or None when this source cannot represent
/// the state (no usable text on one side).
fn make_profiles(
    source: &ProfileSource<'_>,
    state: &HistoryPair,
) -> Result<Option<(Profile, Profile)>, HarnessError> {
    match source {
        ProfileSource::Policy(policy) => match policy.greedy(state) {
            Ok(bundle) => Ok(Some((bundle.user_profile, bundle.item_profile))),
            Err(PolicyError::EmptyHistory { .. }) => Ok(None),
            Err(e) => Err(e.into()),
        },
        ProfileSource::RawHistory => {
            let user = Profile::new(join_texts(&state.user_texts()), Side::User);
            let item = Profile::new(join_texts(&state.item_texts()), Side::Item);
            match (user, item) {
                (Ok(u), Ok(i)) => Ok(Some((u, i))),
                _ => Ok(None),
            }
        }
        ProfileSource::TextRank { n_sentences } => {
            let user = textrank_summary(
                &state.user_texts(),
                *n_sentences,
                DEFAULT_DAMPING,
                DEFAULT_TOLERANCE,
                DEFAULT_MAX_ITER,
            );
            let item = textrank_summary(
                &state.item_texts(),
                *n_sentences,
                DEFAULT_DAMPING,
                DEFAULT_TOLERANCE,
                DEFAULT_MAX_ITER,
            );
            match (user, item) {
                (Ok(u), Ok(i)) => Ok(Some((
                    Profile::new(u, Side::User).expect("summary is non-empty"),
                    Profile::new(i, Side::Item).expect("summary is non-empty"),
                ))),
                (Err(TextRankError::EmptySummary), _) | (_, Err(TextRankError::EmptySummary)) => Ok(None),
                (Err(e), _) | (_, Err(e)) => Err(e.into()),
            }
        }
    }
}

/// Item-side profile for a ranking candidate, built from that item's prior
/// reviews by other users. None when the source cannot produce one.
fn candidate_profile(
    source: &ProfileSource<'_>,
    state: &HistoryPair,
    candidate_history: Vec<Interaction>,
    candidate_id: &str,
) -> Result<Option<Profile>, HarnessError> {
    if candidate_history.is_empty() {
        return Ok(None);
    }
    let pseudo = HistoryPair {
        user_history: state.user_history.clone(),
        item_history: candidate_history,
        target: Interaction {
            user_id: state.target.user_id.clone(),
            item_id: candidate_id.to_string(),
            rating: state.target.rating,
            timestamp: state.target.timestamp,
            text: String::new(),
            summary: None,
        },
    };
    match make_profiles(source, &pseudo)? {
        Some((_, item_profile)) => Ok(Some(item_profile)),
        None => Ok(None),
    }
}

fn predict_with_retry(
    env: &dyn Environment,
    user: &Profile,
    item: &Profile,
    budget: usize,
) -> Result<Prediction, HarnessError> {
    let mut attempts = 0usize;
    loop {
        match env.predict(user, item) {
            Ok(p) => return Ok(p),
            Err(EnvError::Transport { retryable: true, message }) if attempts < budget => {
                attempts += 1;
                let _ = message;
            }
            Err(e) => return Err(HarnessError::Environment(e)),
        }
    }
}

fn target_seed(run_seed: u64, user: &str, item: &str) -> u64 {
    let mut h = Fnv1a::new();
    h.write_u64(run_seed);
    h.write_str(user);
    h.write_str(item);
    h.finish()
}

/// Runs the full protocol over the test split.
pub fn evaluate(
    split: &SplitDataset,
    source: &ProfileSource<'_>,
    env: &dyn Environment,
    embedder: &dyn Embedder,
    opts: &EvalOptions,
) -> Result<EvalReport, HarnessError> {
    opts.validate()?;
    let scale = split.scale();
    let floor_score = f64::from(scale.min);

    // variance groups from train-split ratings
    let mut train_ratings: BTreeMap<String, Vec<i32>> = BTreeMap::new();
    for it in &split.train.interactions {
        train_ratings.entry(it.user_id.clone()).or_default().push(it.rating);
    }
    let (groups, _short_history_users) = variance_groups(&train_ratings);

    // ranking backend
    let ranking = !opts.k_list.is_empty();
    let ease_backend = if ranking && matches!(opts.negative_mode, NegativeMode::Ease) {
        let matrix = RatingMatrix::from_dataset(&split.train);
        let model = fit_ease(&matrix, &opts.ease)?;
        Some((matrix, model))
    } else {
        None
    };
    let mut interacted_by_user: BTreeMap<&str, BTreeSet<&str>> = BTreeMap::new();
    for it in split
        .train
        .interactions
        .iter()
        .chain(split.valid.interactions.iter())
        .chain(split.test.interactions.iter())
    {
        interacted_by_user
            .entry(it.user_id.as_str())
            .or_default()
            .insert(it.item_id.as_str());
    }

    let mut targets: Vec<&Interaction> = split.test.interactions.iter().collect();
    targets.sort_by(|a, b| {
        a.timestamp
            .cmp(&b.timestamp)
            .then_with(|| (a.user_id.as_str(), a.item_id.as_str()).cmp(&(b.user_id.as_str(), b.item_id.as_str())))
    });

    let mut pairs: Vec<RatingPair> = Vec::new();
    let mut group_pairs: BTreeMap<&'static str, Vec<RatingPair>> = BTreeMap::new();
    let mut alignments: Vec<f64> = Vec::new();
    let mut user_coverages: Vec<f64> = Vec::new();
    let mut item_coverages: Vec<f64> = Vec::new();
    let mut ndcg_sums: BTreeMap<u32, Vec<f64>> = opts.k_list.iter().map(|k| (*k, Vec::new())).collect();
    let mut n_skipped = 0usize;
    let mut parse_failures = 0usize;

    for target in targets {
        let state = build_history_pair(split, target, opts.l_u, opts.l_i)?;
        if state.user_history.is_empty() || state.item_history.is_empty() {
            n_skipped += 1;
            continue;
        }
        let Some((user_profile, item_profile)) = make_profiles(source, &state)? else {
            n_skipped += 1;
            continue;
        };

        // diagnostics first: a degenerate (token-free) profile skips the
        // target before anything is recorded
        let embeddings = embedder.embed(&[user_profile.text(), item_profile.text()])?;
        let align = match alignment(&embeddings[0], &embeddings[1]) {
            Ok(v) => v,
            Err(MetricsError::ZeroVector) => {
                n_skipped += 1;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let user_cov = match coverage(user_profile.text(), &state.user_texts()) {
            Ok(v) => v,
            Err(MetricsError::EmptyProfile) => {
                n_skipped += 1;
                continue;
            }
            Err(e) => return Err(e.into()),
        };
        let item_cov = match coverage(item_profile.text(), &state.item_texts()) {
            Ok(v) => v,
            Err(MetricsError::EmptyProfile) => {
                n_skipped += 1;
                continue;
            }
            Err(e) => return Err(e.into()),
        };

        let prediction = predict_with_retry(env, &user_profile, &item_profile, opts.retry_budget)?;
        let pred_score = if prediction.parse_ok { prediction.score() } else { None };
        if pred_score.is_none() {
            parse_failures += 1;
        }
        let pair = RatingPair {
            y: target.rating,
            pred: pred_score,
        };
        pairs.push(pair);
        if let Some(group) = groups.get(&target.user_id) {
            group_pairs.entry(group.name()).or_default().push(pair);
        }
        alignments.push(align);
        user_coverages.push(user_cov);
        item_coverages.push(item_cov);

        if ranking {
            let negatives: Vec<String> = match opts.negative_mode {
                NegativeMode::Random => random_negatives(
                    split,
                    &target.user_id,
                    opts.n_negatives,
                    target_seed(opts.seed, &target.user_id, &target.item_id),
                )?,
                NegativeMode::Ease => {
                    let (matrix, model) = ease_backend.as_ref().expect("built above");
                    let user_index = matrix
                        .user_index(&target.user_id)
                        .expect("cold-start pruning keeps test users in train");
                    let mut exclude: BTreeSet<usize> = BTreeSet::new();
                    if let Some(items) = interacted_by_user.get(target.user_id.as_str()) {
                        for item in items {
                            if let Some(idx) = matrix.item_index(item) {
                                exclude.insert(idx);
                            }
                        }
                    }
                    let found = hard_negatives(model, matrix, user_index, opts.n_negatives, &exclude)?;
                    if found.len() < opts.n_negatives {
                        return Err(MetricsError::PoolExhausted {
                            need: opts.n_negatives,
                            have: found.len(),
                        }
                        .into());
                    }
                    found
                        .into_iter()
                        .map(|i| matrix.item_ids()[i].clone())
                        .collect()
                }
            };

            let mut scores: BTreeMap<String, f64> = BTreeMap::new();
            scores.insert(
                target.item_id.clone(),
                pred_score.unwrap_or(floor_score),
            );
            for negative in &negatives {
                let hist = item_history_for(split, negative, &target.user_id, target.timestamp, opts.l_i);
                let score = match candidate_profile(source, &state, hist, negative)? {
                    Some(profile) => {
                        let p = predict_with_retry(env, &user_profile, &profile, opts.retry_budget)?;
                        if p.parse_ok {
                            p.score().unwrap_or(floor_score)
                        } else {
                            floor_score
                        }
                    }
                    None => floor_score,
                };
                scores.insert(negative.clone(), score);
            }
            let candidates = CandidateSet::new(target.item_id.clone(), negatives, scores)?;
            for (&k, sums) in ndcg_sums.iter_mut() {
                sums.push(ndcg_at_k(&candidates, k as usize)?);
            }
        }
    }

    if pairs.is_empty() {
        return Err(HarnessError::NoTestData);
    }

    let overall = rating_metrics(&RatingEval { pairs: pairs.clone() }, scale)?;
    let mut group_reports = BTreeMap::new();
    for (name, pairs) in group_pairs {
        if pairs.is_empty() {
            continue;
        }
        let m = rating_metrics(&RatingEval { pairs: pairs.clone() }, scale)?;
        group_reports.insert(
            name.to_string(),
            GroupReport {
                n: pairs.len(),
                mae: m.mae,
                rmse: m.rmse,
                accuracy: m.accuracy,
                f1: m.f1,
            },
        );
    }

    Ok(EvalReport {
        n: pairs.len(),
        n_skipped,
        parse_failures,
        mae: overall.mae,
        rmse: overall.rmse,
        accuracy: overall.accuracy,
        f1: overall.f1,
        ndcg: ndcg_sums
            .into_iter()
            .map(|(k, values)| (k, math::mean(&values)))
            .collect(),
        alignment_mean: math::mean(&alignments),
        user_coverage_mean: math::mean(&user_coverages),
        item_coverage_mean: math::mean(&item_coverages),
        groups: group_reports,
    })
}
