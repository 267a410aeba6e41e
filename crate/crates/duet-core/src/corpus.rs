//! Review corpora and their curation: k-core filtering, leakage-free
//! temporal splits with cold-start exclusion, and history construction for
//! evaluation targets.
//!
//! Datasets are immutable after construction and safe to share across
//! threads; every operation here is a pure function of its inputs.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum CorpusError {
    #[error("invalid rating scale [{min}, {max}]")]
    InvalidScale { min: i32, max: i32 },
    #[error("rating {rating} outside scale [{min}, {max}]")]
    RatingOutOfScale { rating: i32, min: i32, max: i32 },
    #[error("negative timestamp {0}")]
    NegativeTimestamp(i64),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("split fractions out of range: valid={valid}, test={test}")]
    BadFractions { valid: f64, test: f64 },
    #[error("split boundaries out of order: valid_start={valid_start}, test_start={test_start}")]
    BadBoundaries { valid_start: i64, test_start: i64 },
    #[error("history lengths must be >= 1")]
    BadHistoryLength,
    #[error("target ({user}, {item}) not found in valid or test split")]
    TargetNotInEvalSplit { user: String, item: String },
    #[error("cold-start target: user {user} or item {item} absent from train")]
    ColdStartTarget { user: String, item: String },
    #[error("k-core order must be >= 1")]
    BadCoreOrder,
}

/// Inclusive integer rating bounds, e.g. 1-5 stars.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RatingScale {
    pub min: i32,
    pub max: i32,
}

impl RatingScale {
    pub fn new(min: i32, max: i32) -> Result<Self, CorpusError> {
        if min >= max {
            return Err(CorpusError::InvalidScale { min, max });
        }
        Ok(RatingScale { min, max })
    }

    pub fn one_to_five() -> Self {
        RatingScale { min: 1, max: 5 }
    }

    /// Maximum rating gap M.
    pub fn gap(&self) -> f64 {
        f64::from(self.max - self.min)
    }

    pub fn contains(&self, rating: i32) -> bool {
        rating >= self.min && rating <= self.max
    }

    pub fn clamp_f64(&self, x: f64) -> f64 {
        x.clamp(f64::from(self.min), f64::from(self.max))
    }

    /// Round half up, then clamp into the scale.
    pub fn discretize(&self, x: f64) -> i32 {
        let r = crate::math::round(x);
        (r as i64).clamp(i64::from(self.min), i64::from(self.max)) as i32
    }
}

/// One (user, item, rating, timestamp, review text) record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Interaction {
    pub user_id: String,
    pub item_id: String,
    pub rating: i32,
    pub timestamp: i64,
    pub text: String,
    pub summary: Option<String>,
}

impl Interaction {
    pub fn validate(&self, scale: RatingScale) -> Result<(), CorpusError> {
        if !scale.contains(self.rating) {
            return Err(CorpusError::RatingOutOfScale {
                rating: self.rating,
                min: scale.min,
                max: scale.max,
            });
        }
        if self.timestamp < 0 {
            return Err(CorpusError::NegativeTimestamp(self.timestamp));
        }
        Ok(())
    }

    /// Canonical ordering key for equal-timestamp ties.
    fn tie_key(&self) -> (&str, &str) {
        (self.user_id.as_str(), self.item_id.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dataset {
    pub name: String,
    pub scale: RatingScale,
    pub interactions: Vec<Interaction>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        scale: RatingScale,
        interactions: Vec<Interaction>,
    ) -> Result<Self, CorpusError> {
        for it in &interactions {
            it.validate(scale)?;
        }
        Ok(Dataset {
            name: name.into(),
            scale,
            interactions,
        })
    }

    pub fn len(&self) -> usize {
        self.interactions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.interactions.is_empty()
    }

    pub fn users(&self) -> BTreeSet<&str> {
        self.interactions.iter().map(|i| i.user_id.as_str()).collect()
    }

    pub fn items(&self) -> BTreeSet<&str> {
        self.interactions.iter().map(|i| i.item_id.as_str()).collect()
    }
}

/// How a temporal split was produced. Quantile mode cuts at index
/// boundaries of the timestamp-sorted corpus; boundary mode uses absolute
/// timestamps (train < valid_start <= valid < test_start <= test).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum SplitPolicy {
    QuantileFractions { valid: f64, test: f64 },
    Boundaries { valid_start: i64, test_start: i64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitDataset {
    pub train: Dataset,
    pub valid: Dataset,
    pub test: Dataset,
    pub policy: SplitPolicy,
}

impl SplitDataset {
    pub fn scale(&self) -> RatingScale {
        self.train.scale
    }

    pub fn name(&self) -> &str {
        &self.train.name
    }

    fn all_interactions(&self) -> impl Iterator<Item = &Interaction> {
        self.train
            .interactions
            .iter()
            .chain(self.valid.interactions.iter())
            .chain(self.test.interactions.iter())
    }
}

/// Histories for one evaluation target: the user's own prior interactions
/// and other users' prior reviews of the target item, both most recent
/// first.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryPair {
    pub user_history: Vec<Interaction>,
    pub item_history: Vec<Interaction>,
    pub target: Interaction,
}

impl HistoryPair {
    pub fn user_texts(&self) -> Vec<&str> {
        self.user_history.iter().map(|i| i.text.as_str()).collect()
    }

    pub fn item_texts(&self) -> Vec<&str> {
        self.item_history.iter().map(|i| i.text.as_str()).collect()
    }
}

/// Iteratively removes interactions of any user or item with fewer than k
/// interactions until a fixed point. The result is the unique maximal
/// subset in which every remaining user and item has at least k
/// interactions (possibly empty).
pub fn k_core_filter(d: &Dataset, k: usize) -> Result<Dataset, CorpusError> {
    if k == 0 {
        return Err(CorpusError::BadCoreOrder);
    }
    let mut kept: Vec<Interaction> = d.interactions.clone();
    loop {
        let mut user_counts: BTreeMap<String, usize> = BTreeMap::new();
        let mut item_counts: BTreeMap<String, usize> = BTreeMap::new();
        for it in &kept {
            *user_counts.entry(it.user_id.clone()).or_insert(0) += 1;
            *item_counts.entry(it.item_id.clone()).or_insert(0) += 1;
        }
        let before = kept.len();
        kept.retain(|it| user_counts[&it.user_id] >= k && item_counts[&it.item_id] >= k);
        if kept.len() == before {
            break;
        }
    }
    Dataset::new(d.name.clone(), d.scale, kept)
}

/// Sorts by timestamp (ties broken by (user_id, item_id)), cuts train /
/// valid / test per the policy, then drops valid/test interactions whose
/// user or item does not appear in train.
pub fn timestamp_split(d: &Dataset, policy: &SplitPolicy) -> Result<SplitDataset, CorpusError> {
    if d.is_empty() {
        return Err(CorpusError::EmptyDataset);
    }
    let mut sorted = d.interactions.clone();
    sorted.sort_by(|a, b| {
        a.timestamp
            .cmp(&b.timestamp)
            .then_with(|| a.tie_key().cmp(&b.tie_key()))
    });

    let (train, valid, test): (Vec<Interaction>, Vec<Interaction>, Vec<Interaction>) =
        match *policy {
            SplitPolicy::QuantileFractions { valid, test } => {
                if !(valid >= 0.0 && test >= 0.0 && valid + test > 0.0 && valid + test < 1.0) {
                    return Err(CorpusError::BadFractions { valid, test });
                }
                let n = sorted.len();
                let n_test = (n as f64 * test) as usize;
                let n_valid = (n as f64 * valid) as usize;
                let n_train = n - n_valid - n_test;
                let mut it = sorted.into_iter();
                let train: Vec<_> = it.by_ref().take(n_train).collect();
                let valid: Vec<_> = it.by_ref().take(n_valid).collect();
                let test: Vec<_> = it.collect();
                (train, valid, test)
            }
            SplitPolicy::Boundaries {
                valid_start,
                test_start,
            } => {
                if valid_start > test_start {
                    return Err(CorpusError::BadBoundaries {
                        valid_start,
                        test_start,
                    });
                }
                let mut train = Vec::new();
                let mut valid = Vec::new();
                let mut test = Vec::new();
                for it in sorted {
                    if it.timestamp < valid_start {
                        train.push(it);
                    } else if it.timestamp < test_start {
                        valid.push(it);
                    } else {
                        test.push(it);
                    }
                }
                (train, valid, test)
            }
        };

    let train_users: BTreeSet<String> = train.iter().map(|i| i.user_id.clone()).collect();
    let train_items: BTreeSet<String> = train.iter().map(|i| i.item_id.clone()).collect();
    let keep_known = |v: Vec<Interaction>| -> Vec<Interaction> {
        v.into_iter()
            .filter(|i| train_users.contains(&i.user_id) && train_items.contains(&i.item_id))
            .collect()
    };
    let valid = keep_known(valid);
    let test = keep_known(test);

    Ok(SplitDataset {
        train: Dataset::new(d.name.clone(), d.scale, train)?,
        valid: Dataset::new(d.name.clone(), d.scale, valid)?,
        test: Dataset::new(d.name.clone(), d.scale, test)?,
        policy: policy.clone(),
    })
}

/// Most-recent-first ordering: descending timestamp, equal timestamps by
/// ascending (user_id, item_id).
fn sort_most_recent_first(v: &mut [Interaction]) {
    v.sort_by(|a, b| {
        b.timestamp
            .cmp(&a.timestamp)
            .then_with(|| a.tie_key().cmp(&b.tie_key()))
    });
}

fn histories_from<'a>(
    pool: impl Iterator<Item = &'a Interaction>,
    target: &Interaction,
    l_u: usize,
    l_i: usize,
) -> HistoryPair {
    let mut user_history = Vec::new();
    let mut item_history = Vec::new();
    for it in pool {
        if it.timestamp >= target.timestamp {
            continue;
        }
        if it.user_id == target.user_id {
            user_history.push(it.clone());
        }
        if it.item_id == target.item_id && it.user_id != target.user_id {
            item_history.push(it.clone());
        }
    }
    sort_most_recent_first(&mut user_history);
    sort_most_recent_first(&mut item_history);
    user_history.truncate(l_u);
    item_history.truncate(l_i);
    HistoryPair {
        user_history,
        item_history,
        target: target.clone(),
    }
}

/// Builds the evaluation state for a valid/test target: the l_u most recent
/// prior interactions of the user and the l_i most recent prior reviews of
/// the item by other users. Fewer are returned when fewer exist.
pub fn build_history_pair(
    split: &SplitDataset,
    target: &Interaction,
    l_u: usize,
    l_i: usize,
) -> Result<HistoryPair, CorpusError> {
    if l_u == 0 || l_i == 0 {
        return Err(CorpusError::BadHistoryLength);
    }
    let in_eval = split
        .valid
        .interactions
        .iter()
        .chain(split.test.interactions.iter())
        .any(|i| i == target);
    if !in_eval {
        return Err(CorpusError::TargetNotInEvalSplit {
            user: target.user_id.clone(),
            item: target.item_id.clone(),
        });
    }
    let known_user = split.train.interactions.iter().any(|i| i.user_id == target.user_id);
    let known_item = split.train.interactions.iter().any(|i| i.item_id == target.item_id);
    if !known_user || !known_item {
        return Err(CorpusError::ColdStartTarget {
            user: target.user_id.clone(),
            item: target.item_id.clone(),
        });
    }
    Ok(histories_from(split.all_interactions(), target, l_u, l_i))
}

/// Prior reviews of one item by users other than `exclude_user`, strictly
/// before `before_ts`, most recent first, truncated to `l_i`. Used when
/// scoring ranking candidates the target user never interacted with.
pub fn item_history_for(
    split: &SplitDataset,
    item_id: &str,
    exclude_user: &str,
    before_ts: i64,
    l_i: usize,
) -> Vec<Interaction> {
    let mut hist: Vec<Interaction> = split
        .all_interactions()
        .filter(|i| i.item_id == item_id && i.user_id != exclude_user && i.timestamp < before_ts)
        .cloned()
        .collect();
    sort_most_recent_first(&mut hist);
    hist.truncate(l_i);
    hist
}

/// Training states: one history pair per train interaction, with both
/// histories drawn from strictly earlier train data only. Targets whose
/// user or item history would be empty are omitted (there is nothing to
/// build a profile from).
pub fn training_states(split: &SplitDataset, l_u: usize, l_i: usize) -> Vec<HistoryPair> {
    let mut states = Vec::new();
    for target in &split.train.interactions {
        let hp = histories_from(split.train.interactions.iter(), target, l_u, l_i);
        if !hp.user_history.is_empty() && !hp.item_history.is_empty() {
            states.push(hp);
        }
    }
    states.sort_by(|a, b| {
        a.target
            .timestamp
            .cmp(&b.target.timestamp)
            .then_with(|| a.target.tie_key().cmp(&b.target.tie_key()))
    });
    states
}
