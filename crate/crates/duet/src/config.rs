//! The run configuration: one TOML document validated up front with
//! precise error messages. All randomness in a run flows from the seeds
//! declared here.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use duet_core::corpus::{RatingScale, SplitPolicy};
use duet_core::ease::EaseConfig;
use duet_core::harness::{EvalOptions, NegativeMode};
use duet_core::optimizer::TrainConfig;
use duet_core::pipeline::{CueConfig, Focus, StrategyEntry, StrategyVocabulary};
use duet_core::simworld::SimConfig;

use crate::io::{FieldMap, TimestampFormat};

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {message}")]
    Parse { path: String, message: String },
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("referenced file does not exist: {0}")]
    MissingFile(String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    pub name: String,
    pub r_min: i32,
    pub r_max: i32,
}

impl Default for DatasetSection {
    fn default() -> Self {
        DatasetSection {
            name: "simworld".into(),
            r_min: 1,
            r_max: 5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IngestSection {
    /// Raw review file; defaults to the simgen artifact in the out dir.
    pub input: Option<PathBuf>,
    /// "canonical", "amazon", "yelp", or "custom" (with [ingest.fields]).
    pub format: String,
    pub fields: Option<FieldMapSection>,
    pub k_core: usize,
    pub valid_frac: f64,
    pub test_frac: f64,
    /// Absolute boundary mode overrides the fractions when both are set.
    pub valid_start_ts: Option<i64>,
    pub test_start_ts: Option<i64>,
}

impl Default for IngestSection {
    fn default() -> Self {
        IngestSection {
            input: None,
            format: "canonical".into(),
            fields: None,
            k_core: 5,
            valid_frac: 0.1,
            test_frac: 0.1,
            valid_start_ts: None,
            test_start_ts: None,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FieldMapSection {
    pub user: String,
    pub item: String,
    pub rating: String,
    pub timestamp: String,
    pub text: Option<String>,
    pub summary: Option<String>,
    /// chrono format string; absent means epoch seconds.
    pub datetime_format: Option<String>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HistorySection {
    pub l_u: usize,
    pub l_i: usize,
}

impl Default for HistorySection {
    fn default() -> Self {
        HistorySection { l_u: 30, l_i: 30 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct StrategySection {
    /// Vocabulary TOML; the built-in six strategies when absent.
    pub vocabulary: Option<PathBuf>,
    pub max_profile_words: usize,
    pub cue_top_n: usize,
    pub cue_max_chars: usize,
}

impl Default for StrategySection {
    fn default() -> Self {
        StrategySection {
            vocabulary: None,
            max_profile_words: 120,
            cue_top_n: 5,
            cue_max_chars: 200,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalSection {
    pub k_list: Vec<u32>,
    /// "random" or "ease".
    pub negative_mode: String,
    pub n_negatives: usize,
    pub seed: u64,
    pub retry_budget: usize,
    /// TextRank summary length for the baseline command.
    pub textrank_sentences: usize,
}

impl Default for EvalSection {
    fn default() -> Self {
        EvalSection {
            k_list: vec![1, 5, 10],
            negative_mode: "random".into(),
            n_negatives: 9,
            seed: 17,
            retry_budget: 3,
            textrank_sentences: 5,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EaseSection {
    pub lambda: f64,
    pub max_items: usize,
}

impl Default for EaseSection {
    fn default() -> Self {
        let d = EaseConfig::default();
        EaseSection {
            lambda: d.lambda,
            max_items: d.max_items,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimSection {
    pub n_users: usize,
    pub n_items: usize,
    pub n_genres: usize,
    pub reviews_per_user: usize,
    pub seed: u64,
}

impl Default for SimSection {
    fn default() -> Self {
        let d = SimConfig::default();
        SimSection {
            n_users: d.n_users,
            n_items: d.n_items,
            n_genres: d.n_genres,
            reviews_per_user: d.reviews_per_user,
            seed: d.seed,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BackendSection {
    /// "synth" (offline oracle) or "remote" (LLM endpoints from env vars).
    pub mode: String,
    pub model: String,
    pub max_tokens: u32,
    pub concurrency: usize,
    pub max_retries: usize,
    pub backoff_base_ms: u64,
    pub backoff_cap_ms: u64,
    pub timeout_ms: u64,
    /// Sampling temperature for remote single-pass generation.
    pub temperature: f64,
    /// "hashed" (offline bag-of-words) or "remote".
    pub embedder: String,
    /// Write the raw-sample audit archive during training.
    pub archive_samples: bool,
    /// Directory of prompt-template overrides (front-matter files).
    pub prompt_dir: Option<PathBuf>,
}

impl Default for BackendSection {
    fn default() -> Self {
        BackendSection {
            mode: "synth".into(),
            model: "default-model".into(),
            max_tokens: 768,
            concurrency: 4,
            max_retries: 3,
            backoff_base_ms: 250,
            backoff_cap_ms: 4_000,
            timeout_ms: 30_000,
            temperature: 0.8,
            embedder: "hashed".into(),
            archive_samples: false,
            prompt_dir: None,
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSection,
    pub ingest: IngestSection,
    pub history: HistorySection,
    pub strategy: StrategySection,
    pub train: TrainConfig,
    pub eval: EvalSection,
    pub ease: EaseSection,
    pub sim: SimSection,
    pub backend: BackendSection,
}

impl RunConfig {
    pub fn scale(&self) -> Result<RatingScale, ConfigError> {
        RatingScale::new(self.dataset.r_min, self.dataset.r_max)
            .map_err(|e| ConfigError::Invalid(e.to_string()))
    }

    pub fn split_policy(&self) -> Result<SplitPolicy, ConfigError> {
        match (self.ingest.valid_start_ts, self.ingest.test_start_ts) {
            (Some(valid_start), Some(test_start)) => Ok(SplitPolicy::Boundaries {
                valid_start,
                test_start,
            }),
            (None, None) => Ok(SplitPolicy::QuantileFractions {
                valid: self.ingest.valid_frac,
                test: self.ingest.test_frac,
            }),
            _ => Err(ConfigError::Invalid(
                "boundary mode needs both ingest.valid_start_ts and ingest.test_start_ts".into(),
            )),
        }
    }

    pub fn field_map(&self) -> Result<FieldMap, ConfigError> {
        match self.ingest.format.as_str() {
            "canonical" => Ok(FieldMap::canonical()),
            "amazon" => Ok(FieldMap::amazon()),
            "yelp" => Ok(FieldMap::yelp()),
            "custom" => {
                let f = self.ingest.fields.as_ref().ok_or_else(|| {
                    ConfigError::Invalid("format = \"custom\" needs an [ingest.fields] table".into())
                })?;
                Ok(FieldMap {
                    user: f.user.clone(),
                    item: f.item.clone(),
                    rating: f.rating.clone(),
                    timestamp: f.timestamp.clone(),
                    text: f.text.clone(),
                    summary: f.summary.clone(),
                    timestamp_format: match &f.datetime_format {
                        Some(fmt) => TimestampFormat::DateTime(fmt.clone()),
                        None => TimestampFormat::EpochSeconds,
                    },
                })
            }
            other => Err(ConfigError::Invalid(format!(
                "unknown ingest format {other:?} (canonical|amazon|yelp|custom)"
            ))),
        }
    }

    pub fn cue_config(&self) -> CueConfig {
        CueConfig {
            top_n: self.strategy.cue_top_n,
            max_chars: self.strategy.cue_max_chars,
        }
    }

    pub fn sim_config(&self) -> Result<SimConfig, ConfigError> {
        Ok(SimConfig {
            n_users: self.sim.n_users,
            n_items: self.sim.n_items,
            n_genres: self.sim.n_genres,
            reviews_per_user: self.sim.reviews_per_user,
            seed: self.sim.seed,
            scale: self.scale()?,
            genre_keywords: None,
        })
    }

    pub fn negative_mode(&self) -> Result<NegativeMode, ConfigError> {
        match self.eval.negative_mode.as_str() {
            "random" => Ok(NegativeMode::Random),
            "ease" => Ok(NegativeMode::Ease),
            other => Err(ConfigError::Invalid(format!(
                "unknown negative mode {other:?} (random|ease)"
            ))),
        }
    }

    pub fn eval_options(&self) -> Result<EvalOptions, ConfigError> {
        Ok(EvalOptions {
            l_u: self.history.l_u,
            l_i: self.history.l_i,
            k_list: self.eval.k_list.clone(),
            negative_mode: self.negative_mode()?,
            n_negatives: self.eval.n_negatives,
            seed: self.eval.seed,
            ease: EaseConfig {
                lambda: self.ease.lambda,
                max_items: self.ease.max_items,
            },
            retry_budget: self.eval.retry_budget,
        })
    }

    /// Full structural validation; file existence is checked per command,
    /// since artifacts of earlier commands may not exist yet.
    pub fn validate(&self) -> Result<(), ConfigError> {
        self.scale()?;
        self.split_policy()?;
        self.field_map()?;
        self.negative_mode()?;
        if self.ingest.k_core == 0 {
            return Err(ConfigError::Invalid("ingest.k_core must be >= 1".into()));
        }
        if self.history.l_u == 0 || self.history.l_i == 0 {
            return Err(ConfigError::Invalid("history lengths must be >= 1".into()));
        }
        for &k in &self.eval.k_list {
            if k == 0 || k as usize > self.eval.n_negatives + 1 {
                return Err(ConfigError::Invalid(format!(
                    "eval.k_list entry {k} outside 1..={}",
                    self.eval.n_negatives + 1
                )));
            }
        }
        self.train
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("[train] {e}")))?;
        self.sim_config()?
            .validate()
            .map_err(|e| ConfigError::Invalid(format!("[sim] {e}")))?;
        if !matches!(self.backend.mode.as_str(), "synth" | "remote") {
            return Err(ConfigError::Invalid(format!(
                "unknown backend mode {:?} (synth|remote)",
                self.backend.mode
            )));
        }
        if !matches!(self.backend.embedder.as_str(), "hashed" | "remote") {
            return Err(ConfigError::Invalid(format!(
                "unknown embedder {:?} (hashed|remote)",
                self.backend.embedder
            )));
        }
        if self.strategy.max_profile_words == 0 || self.strategy.cue_top_n == 0 || self.strategy.cue_max_chars == 0 {
            return Err(ConfigError::Invalid("[strategy] values must be >= 1".into()));
        }
        if let Some(path) = &self.strategy.vocabulary {
            if !path.exists() {
                return Err(ConfigError::MissingFile(path.display().to_string()));
            }
        }
        Ok(())
    }
}

pub fn load_config(path: &Path) -> Result<RunConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.display().to_string(),
        source,
    })?;
    let config: RunConfig = toml::from_str(&text).map_err(|e| ConfigError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    config.validate()?;
    Ok(config)
}

#[derive(Debug, Deserialize)]
struct VocabularyFile {
    strategy: Vec<VocabularyEntry>,
}

#[derive(Debug, Deserialize)]
struct VocabularyEntry {
    id: usize,
    user_template: String,
    item_template: String,
    focus: Option<Focus>,
}

/// Loads a strategy vocabulary from TOML; entries without an explicit
/// focus get one inferred from directive words in their templates.
pub fn load_vocabulary(path: &Path) -> Result<StrategyVocabulary, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read {
        path: path.display().to_string(),
        source,
    })?;
    let file: VocabularyFile = toml::from_str(&text).map_err(|e| ConfigError::Parse {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let entries: Vec<StrategyEntry> = file
        .strategy
        .into_iter()
        .map(|e| {
            let focus = e
                .focus
                .unwrap_or_else(|| Focus::infer(&format!("{} {}", e.user_template, e.item_template)));
            StrategyEntry {
                id: e.id,
                user_template: e.user_template,
                item_template: e.item_template,
                focus,
            }
        })
        .collect();
    StrategyVocabulary::new(entries).map_err(|e| ConfigError::Invalid(e.to_string()))
}
