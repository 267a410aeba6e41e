//! The generation policy abstraction and its desk-scale instantiation: a
//! softmax distribution over a discrete vocabulary of profile strategies.
//!
//! The open-ended strategy space is discretized into K templates so that
//! policy learning is exactly verifiable without an LLM: sampling picks one
//! strategy id for the pair, the strategy's deterministic writer turns each
//! side's history into profile text, and the trace records the id and its
//! log-probability for gradient computation. Free-text LLM policies
//! implement the same trait remotely and produce [`ActionTrace::FreeText`]
//! traces instead.

use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{HistoryPair, Interaction};
use crate::math;

use super::cue::{ranked_content_tokens, rounded_mean_rating, synth_cue, CueConfig};
use super::grammar::ParseError;
use super::{BundleError, Profile, ProfileBundle, ProfilePrompt, Side};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum PolicyError {
    #[error("history for side {side:?} is empty")]
    EmptyHistory { side: Side },
    #[error(transparent)]
    Bundle(#[from] BundleError),
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error("trace was produced by an incompatible policy family")]
    IncompatibleTrace,
    #[error("unknown strategy id {id} (vocabulary size {k})")]
    UnknownStrategy { id: usize, k: usize },
    #[error("vocabulary needs at least 2 strategies, got {0}")]
    VocabularyTooSmall(usize),
    #[error("vocabulary ids must be dense 0..K-1 and in order")]
    BadVocabularyIds,
    #[error("strategy {id} has an empty template")]
    EmptyTemplate { id: usize },
    #[error("params must be finite")]
    NonFiniteParams,
    #[error("params have {got} logits, vocabulary has {expected}")]
    WrongArity { expected: usize, got: usize },
    #[error("params version {proposed} is older than installed version {current}")]
    VersionRegression { current: u64, proposed: u64 },
    #[error("generation backend failure (retryable={retryable}): {message}")]
    Generation { retryable: bool, message: String },
}

/// What a strategy's deterministic writer emphasizes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Focus {
    Neutral,
    Sentiment,
    RatingStats,
    Complexity,
    Recency,
    Genre,
}

impl Focus {
    /// Infers a focus from directive words in a template, for vocabulary
    /// files that omit the explicit tag.
    pub fn infer(template: &str) -> Focus {
        let lower = template.to_lowercase();
        let has = |words: &[&str]| words.iter().any(|w| lower.contains(w));
        if has(&["genre", "keyword"]) {
            Focus::Genre
        } else if has(&["sentiment", "tone"]) {
            Focus::Sentiment
        } else if has(&["rating", "numbers"]) {
            Focus::RatingStats
        } else if has(&["detail", "length", "complex"]) {
            Focus::Complexity
        } else if has(&["recent", "latest"]) {
            Focus::Recency
        } else {
            Focus::Neutral
        }
    }
}

/// One strategy: paired user/item prompt templates (may reference `{cue}`)
/// plus the focus tag driving the deterministic writer.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyEntry {
    pub id: usize,
    pub user_template: String,
    pub item_template: String,
    pub focus: Focus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StrategyVocabulary {
    entries: Vec<StrategyEntry>,
}

impl StrategyVocabulary {
    pub fn new(entries: Vec<StrategyEntry>) -> Result<Self, PolicyError> {
        if entries.len() < 2 {
            return Err(PolicyError::VocabularyTooSmall(entries.len()));
        }
        for (i, e) in entries.iter().enumerate() {
            if e.id != i {
                return Err(PolicyError::BadVocabularyIds);
            }
            if e.user_template.trim().is_empty() || e.item_template.trim().is_empty() {
                return Err(PolicyError::EmptyTemplate { id: e.id });
            }
        }
        Ok(StrategyVocabulary { entries })
    }

    /// The six shipped strategies. Neutral sits at id 0 so an untrained
    /// uniform policy greedily picks it; the keyword-surfacing strategy is
    /// last.
    pub fn default_six() -> Self {
        let mk = |id, user: &str, item: &str, focus| StrategyEntry {
            id,
            user_template: user.to_string(),
            item_template: item.to_string(),
            focus,
        };
        StrategyVocabulary::new(alloc::vec![
            mk(
                0,
                "Give a short, plain summary of this user without leaning on any particular angle. Cue: {cue}",
                "Give a short, plain summary of this item without leaning on any particular angle. Cue: {cue}",
                Focus::Neutral,
            ),
            mk(
                1,
                "Describe the tone and sentiment of the user's reviews, how warmly or critically they write. Cue: {cue}",
                "Describe the tone and sentiment of the reviews this item receives. Cue: {cue}",
                Focus::Sentiment,
            ),
            mk(
                2,
                "Describe the user's rating behavior in plain numbers: how often, how high, how spread out. Cue: {cue}",
                "Describe this item's rating pattern in plain numbers. Cue: {cue}",
                Focus::RatingStats,
            ),
            mk(
                3,
                "Describe the length and detail of the user's reviews, brief or expansive. Cue: {cue}",
                "Describe the length and detail of the reviews this item attracts. Cue: {cue}",
                Focus::Complexity,
            ),
            mk(
                4,
                "Describe what the user engaged with most recently and what it suggests. Cue: {cue}",
                "Describe the most recent reception of this item. Cue: {cue}",
                Focus::Recency,
            ),
            mk(
                5,
                "List the genre keywords that dominate the user's history and frame the profile around them. Cue: {cue}",
                "List the genre keywords that dominate this item's reviews and frame the profile around them. Cue: {cue}",
                Focus::Genre,
            ),
        ])
        .expect("default vocabulary is valid")
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, id: usize) -> Result<&StrategyEntry, PolicyError> {
        self.entries.get(id).ok_or(PolicyError::UnknownStrategy {
            id,
            k: self.entries.len(),
        })
    }

    pub fn entries(&self) -> &[StrategyEntry] {
        &self.entries
    }
}

/// Policy parameters: softmax weights over the strategy vocabulary plus a
/// monotone update counter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PolicyParams {
    pub logits: Vec<f64>,
    pub version: u64,
}

impl PolicyParams {
    pub fn uniform(k: usize) -> Self {
        PolicyParams {
            logits: alloc::vec![0.0; k],
            version: 0,
        }
    }

    pub fn validate(&self) -> Result<(), PolicyError> {
        if self.logits.iter().any(|l| !l.is_finite()) {
            return Err(PolicyError::NonFiniteParams);
        }
        Ok(())
    }
}

/// What the policy records about one sampled action, sufficient for
/// gradient computation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ActionTrace {
    /// Desk-scale softmax policy: the sampled strategy and its
    /// log-probability under the params that sampled it.
    Strategy {
        strategy_id: usize,
        logprob: f64,
        params_version: u64,
    },
    /// Remote free-text policy: the raw generation.
    FreeText { raw: String },
}

pub trait Policy {
    /// One sampled action plus its trace. Deterministic given the installed
    /// params, the state, and the seed.
    fn sample(&self, state: &HistoryPair, seed: u64) -> Result<(ProfileBundle, ActionTrace), PolicyError>;

    /// Natural-log probability of a recorded action under the CURRENT
    /// params (the ratio numerator/denominator in clipped-surrogate
    /// updates).
    fn logprob(&self, trace: &ActionTrace) -> Result<f64, PolicyError>;

    /// Collapses the distribution and executes the best action
    /// deterministically (evaluation time).
    fn greedy(&self, state: &HistoryPair) -> Result<ProfileBundle, PolicyError>;
}

/// Numerically stable softmax (max-shifted).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| math::exp(l - max)).collect();
    let total = math::pairwise_sum(&exps);
    exps.into_iter().map(|e| e / total).collect()
}

/// Numerically stable log-softmax (max-shifted).
pub fn log_softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|l| math::exp(l - max)).collect();
    let lse = math::ln(math::pairwise_sum(&exps));
    logits.iter().map(|l| l - max - lse).collect()
}

/// Softmax distribution over profile strategies with deterministic cue and
/// profile writers. Immutable snapshots: sampling never mutates; updates
/// install a new params snapshot with a higher version.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SoftmaxStrategyPolicy {
    vocabulary: StrategyVocabulary,
    params: PolicyParams,
    cue_config: CueConfig,
    /// Profiles are truncated to this many words.
    pub max_profile_words: usize,
}

impl SoftmaxStrategyPolicy {
    pub fn new(vocabulary: StrategyVocabulary, cue_config: CueConfig) -> Self {
        let params = PolicyParams::uniform(vocabulary.len());
        SoftmaxStrategyPolicy {
            vocabulary,
            params,
            cue_config,
            max_profile_words: 120,
        }
    }

    pub fn with_params(
        vocabulary: StrategyVocabulary,
        cue_config: CueConfig,
        params: PolicyParams,
    ) -> Result<Self, PolicyError> {
        params.validate()?;
        if params.logits.len() != vocabulary.len() {
            return Err(PolicyError::WrongArity {
                expected: vocabulary.len(),
                got: params.logits.len(),
            });
        }
        Ok(SoftmaxStrategyPolicy {
            vocabulary,
            params,
            cue_config,
            max_profile_words: 120,
        })
    }

    pub fn vocabulary(&self) -> &StrategyVocabulary {
        &self.vocabulary
    }

    pub fn params(&self) -> &PolicyParams {
        &self.params
    }

    pub fn cue_config(&self) -> &CueConfig {
        &self.cue_config
    }

    /// Installs a new params snapshot. Versions never move backwards.
    pub fn install_params(&mut self, params: PolicyParams) -> Result<(), PolicyError> {
        params.validate()?;
        if params.logits.len() != self.vocabulary.len() {
            return Err(PolicyError::WrongArity {
                expected: self.vocabulary.len(),
                got: params.logits.len(),
            });
        }
        if params.version < self.params.version {
            return Err(PolicyError::VersionRegression {
                current: self.params.version,
                proposed: params.version,
            });
        }
        self.params = params;
        Ok(())
    }

    pub fn probs(&self) -> Vec<f64> {
        softmax(&self.params.logits)
    }

    /// Shannon entropy of the strategy distribution, in nats.
    pub fn entropy(&self) -> f64 {
        let probs = self.probs();
        let terms: Vec<f64> = probs
            .iter()
            .filter(|p| **p > 0.0)
            .map(|p| -p * math::ln(*p))
            .collect();
        math::pairwise_sum(&terms)
    }

    /// The deterministic action for one specific strategy. Exposed so tests
    /// can exhaustively score every strategy against an oracle.
    pub fn bundle_for_strategy(
        &self,
        state: &HistoryPair,
        strategy_id: usize,
    ) -> Result<ProfileBundle, PolicyError> {
        let entry = self.vocabulary.get(strategy_id)?.clone();
        let user_cue = synth_cue(state, Side::User, &self.cue_config)?;
        let item_cue = synth_cue(state, Side::Item, &self.cue_config)?;
        let user_prompt = ProfilePrompt::new(
            entry.user_template.replace("{cue}", user_cue.text()),
            Side::User,
            Some(strategy_id),
        )?;
        let item_prompt = ProfilePrompt::new(
            entry.item_template.replace("{cue}", item_cue.text()),
            Side::Item,
            Some(strategy_id),
        )?;
        let user_profile = Profile::new(
            truncate_words(&write_profile(entry.focus, Side::User, state), self.max_profile_words),
            Side::User,
        )?;
        let item_profile = Profile::new(
            truncate_words(&write_profile(entry.focus, Side::Item, state), self.max_profile_words),
            Side::Item,
        )?;
        Ok(ProfileBundle::new(
            user_cue,
            user_prompt,
            user_profile,
            item_cue,
            item_prompt,
            item_profile,
        )?)
    }

    fn argmax_strategy(&self) -> usize {
        let mut best = 0;
        for (i, l) in self.params.logits.iter().enumerate() {
            if *l > self.params.logits[best] {
                best = i;
            }
        }
        best
    }
}

impl Policy for SoftmaxStrategyPolicy {
    fn sample(&self, state: &HistoryPair, seed: u64) -> Result<(ProfileBundle, ActionTrace), PolicyError> {
        let probs = self.probs();
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let draw: f64 = rng.gen();
        let mut cumulative = 0.0;
        let mut chosen = probs.len() - 1;
        for (i, p) in probs.iter().enumerate() {
            cumulative += p;
            if draw < cumulative {
                chosen = i;
                break;
            }
        }
        let bundle = self.bundle_for_strategy(state, chosen)?;
        let trace = ActionTrace::Strategy {
            strategy_id: chosen,
            logprob: log_softmax(&self.params.logits)[chosen],
            params_version: self.params.version,
        };
        Ok((bundle, trace))
    }

    fn logprob(&self, trace: &ActionTrace) -> Result<f64, PolicyError> {
        match trace {
            ActionTrace::Strategy { strategy_id, .. } => {
                if *strategy_id >= self.vocabulary.len() {
                    return Err(PolicyError::UnknownStrategy {
                        id: *strategy_id,
                        k: self.vocabulary.len(),
                    });
                }
                Ok(log_softmax(&self.params.logits)[*strategy_id])
            }
            ActionTrace::FreeText { .. } => Err(PolicyError::IncompatibleTrace),
        }
    }

    fn greedy(&self, state: &HistoryPair) -> Result<ProfileBundle, PolicyError> {
        self.bundle_for_strategy(state, self.argmax_strategy())
    }
}

fn truncate_words(text: &str, max_words: usize) -> String {
    let words: Vec<&str> = text.split_whitespace().collect();
    if words.len() <= max_words {
        text.to_string()
    } else {
        words[..max_words].join(" ")
    }
}

fn side_history(state: &HistoryPair, side: Side) -> &[Interaction] {
    match side {
        Side::User => &state.user_history,
        Side::Item => &state.item_history,
    }
}

/// Deterministic profile writer: turns one side's history into profile text
/// according to the strategy focus. Only the genre and recency writers echo
/// history tokens; the others speak in fixed phrasing and numbers, which is
/// what makes strategies distinguishable to a keyword-matching environment.
fn write_profile(focus: Focus, side: Side, state: &HistoryPair) -> String {
    let history = side_history(state, side);
    debug_assert!(!history.is_empty(), "cue synthesis already required non-empty history");
    let texts: Vec<&str> = history.iter().map(|i| i.text.as_str()).collect();
    match focus {
        Focus::Neutral => match side {
            Side::User => "A general listener with a mixed history and no single defining thread.".to_string(),
            Side::Item => "A catalog entry with a broad, unremarkable reception history.".to_string(),
        },
        Focus::Sentiment => {
            let ratings: Vec<f64> = history.iter().map(|i| f64::from(i.rating)).collect();
            let mean = math::mean(&ratings);
            let tone = if mean >= 4.0 {
                "warm and enthusiastic"
            } else if mean >= 3.0 {
                "measured"
            } else {
                "critical"
            };
            match side {
                Side::User => format!(
                    "Review tone is {tone}; write-ups praise or pan without dwelling on specifics (average sentiment score {mean:.1})."
                ),
                Side::Item => format!(
                    "Reception tone is {tone}; reviewers react to feel more than to specifics (average sentiment score {mean:.1})."
                ),
            }
        }
        Focus::RatingStats => {
            let ratings: Vec<f64> = history.iter().map(|i| f64::from(i.rating)).collect();
            let mean = math::mean(&ratings);
            let spread = math::population_std(&ratings);
            let n = history.len();
            match side {
                Side::User => format!(
                    "Rates {n} times with mean {mean:.1} and spread {spread:.1}; the numbers carry the story."
                ),
                Side::Item => format!(
                    "Collected {n} ratings at mean {mean:.1} with spread {spread:.1}."
                ),
            }
        }
        Focus::Complexity => {
            let lens: Vec<f64> = texts
                .iter()
                .map(|t| t.split_whitespace().count() as f64)
                .collect();
            let avg = math::round(math::mean(&lens)) as i64;
            let style = if avg < 12 { "brief" } else { "expansive" };
            match side {
                Side::User => format!("Typical review runs {avg} words; prefers {style} takes."),
                Side::Item => format!("Reviews of it run {avg} words on average; {style} responses dominate."),
            }
        }
        Focus::Recency => {
            // history is most recent first
            let latest = &history[0];
            let ranked = ranked_content_tokens(&[latest.text.as_str()]);
            let top: Vec<&str> = ranked.iter().take(3).map(|(t, _)| t.as_str()).collect();
            if top.is_empty() {
                format!(
                    "Latest activity left no written trace; it was rated {}.",
                    latest.rating
                )
            } else {
                match side {
                    Side::User => format!("Latest listening centers on {} territory.", top.join(", ")),
                    Side::Item => format!("The freshest reactions center on {}.", top.join(", ")),
                }
            }
        }
        Focus::Genre => {
            let ranked = ranked_content_tokens(&texts);
            let top: Vec<&str> = ranked.iter().take(4).map(|(t, _)| t.as_str()).collect();
            if top.is_empty() {
                format!(
                    "Few written words to go on; rates around {} overall.",
                    rounded_mean_rating(history)
                )
            } else {
                match side {
                    Side::User => format!(
                        "Strong affinity for {}; returns to these sounds across the whole history.",
                        top.join(", ")
                    ),
                    Side::Item => format!(
                        "Built for fans of {}; its reception centers on exactly that territory.",
                        top.join(", ")
                    ),
                }
            }
        }
    }
}
