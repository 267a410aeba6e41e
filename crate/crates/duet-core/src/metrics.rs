//! Evaluation computations: rating-prediction metrics, NDCG over sampled
//! candidate sets, embedding alignment, token coverage, rating-variance
//! robustness groups, and the random negative sampler.
//!
//! All operations are pure; aggregates use pairwise summation in fixed
//! index order so parallel callers can reproduce them bit-for-bit.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{RatingScale, SplitDataset};
use crate::math;
use crate::text::{token_set, tokenize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum MetricsError {
    #[error("rating evaluation needs at least one pair")]
    EmptyEval,
    #[error("candidate set invalid: {0}")]
    BadCandidateSet(String),
    #[error("k must satisfy 1 <= k <= {n_candidates}, got {k}")]
    BadCutoff { k: usize, n_candidates: usize },
    #[error("alignment is undefined for a zero vector")]
    ZeroVector,
    #[error("embedding dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("profile tokenizes to the empty set")]
    EmptyProfile,
    #[error("negative pool exhausted: need {need}, have {have}")]
    PoolExhausted { need: usize, have: usize },
}

/// One prediction against ground truth; `pred` is absent when the
/// backend's output failed to parse.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatingPair {
    pub y: i32,
    pub pred: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RatingEval {
    pub pairs: Vec<RatingPair>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RatingMetrics {
    pub mae: f64,
    pub rmse: f64,
    pub accuracy: f64,
    pub f1: f64,
}

/// MAE, RMSE, accuracy and macro-F1 in one pass. Parse failures count as
/// maximal-error predictions (|y - y_hat| = M) and as a missed class.
/// Accuracy discretizes predictions by round-half-up then clamps into the
/// scale; macro-F1 averages over the classes present in truth or valid
/// predictions, so perfect predictions score 1.0 even when some scale
/// classes never occur.
pub fn rating_metrics(eval: &RatingEval, scale: RatingScale) -> Result<RatingMetrics, MetricsError> {
    if eval.pairs.is_empty() {
        return Err(MetricsError::EmptyEval);
    }
    let m = scale.gap();
    let abs_errors: Vec<f64> = eval
        .pairs
        .iter()
        .map(|p| match p.pred {
            Some(pred) => math::abs(f64::from(p.y) - pred),
            None => m,
        })
        .collect();
    let mae = math::mean(&abs_errors);
    let squared: Vec<f64> = abs_errors.iter().map(|e| e * e).collect();
    let rmse = math::sqrt(math::mean(&squared));

    let mut hits = 0usize;
    let mut tp: BTreeMap<i32, usize> = BTreeMap::new();
    let mut fp: BTreeMap<i32, usize> = BTreeMap::new();
    let mut fn_: BTreeMap<i32, usize> = BTreeMap::new();
    let mut classes: BTreeSet<i32> = BTreeSet::new();
    for pair in &eval.pairs {
        classes.insert(pair.y);
        match pair.pred {
            Some(pred) => {
                let rounded = scale.discretize(pred);
                classes.insert(rounded);
                if rounded == pair.y {
                    hits += 1;
                    *tp.entry(pair.y).or_insert(0) += 1;
                } else {
                    *fp.entry(rounded).or_insert(0) += 1;
                    *fn_.entry(pair.y).or_insert(0) += 1;
                }
            }
            None => {
                // wrong class with no predicted class at all
                *fn_.entry(pair.y).or_insert(0) += 1;
            }
        }
    }
    let accuracy = hits as f64 / eval.pairs.len() as f64;

    let f1_terms: Vec<f64> = classes
        .iter()
        .map(|c| {
            let tp = *tp.get(c).unwrap_or(&0) as f64;
            let fp = *fp.get(c).unwrap_or(&0) as f64;
            let fn_ = *fn_.get(c).unwrap_or(&0) as f64;
            let precision = if tp + fp > 0.0 { tp / (tp + fp) } else { 0.0 };
            let recall = if tp + fn_ > 0.0 { tp / (tp + fn_) } else { 0.0 };
            if precision + recall > 0.0 {
                2.0 * precision * recall / (precision + recall)
            } else {
                0.0
            }
        })
        .collect();
    let f1 = math::mean(&f1_terms);

    Ok(RatingMetrics {
        mae,
        rmse,
        accuracy,
        f1,
    })
}

/// One ranking instance: a single positive item, sampled negatives, and a
/// score per candidate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateSet {
    positive: String,
    negatives: Vec<String>,
    scores: BTreeMap<String, f64>,
}

impl CandidateSet {
    pub fn new(
        positive: impl Into<String>,
        negatives: Vec<String>,
        scores: BTreeMap<String, f64>,
    ) -> Result<Self, MetricsError> {
        let positive = positive.into();
        if negatives.contains(&positive) {
            return Err(MetricsError::BadCandidateSet(
                "positive appears among negatives".into(),
            ));
        }
        let unique: BTreeSet<&String> = negatives.iter().collect();
        if unique.len() != negatives.len() {
            return Err(MetricsError::BadCandidateSet("duplicate negatives".into()));
        }
        if !scores.contains_key(&positive) {
            return Err(MetricsError::BadCandidateSet("positive unscored".into()));
        }
        for negative in &negatives {
            if !scores.contains_key(negative) {
                return Err(MetricsError::BadCandidateSet(alloc::format!(
                    "negative {negative} unscored"
                )));
            }
        }
        Ok(CandidateSet {
            positive,
            negatives,
            scores,
        })
    }

    pub fn len(&self) -> usize {
        self.negatives.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }
}

/// Binary-relevance NDCG@k with pessimistic tie handling: among equal
/// scores the positive ranks last. With a single positive the ideal DCG is
/// 1, so NDCG@k = 1/log2(rank+1) when the positive makes the cutoff and 0
/// otherwise.
pub fn ndcg_at_k(candidates: &CandidateSet, k: usize) -> Result<f64, MetricsError> {
    let n = candidates.len();
    if k == 0 || k > n {
        return Err(MetricsError::BadCutoff { k, n_candidates: n });
    }
    let pos_score = candidates.scores[&candidates.positive];
    let mut rank = 1usize;
    for negative in &candidates.negatives {
        let s = candidates.scores[negative];
        if s >= pos_score {
            rank += 1;
        }
    }
    Ok(if rank <= k {
        1.0 / math::log2(rank as f64 + 1.0)
    } else {
        0.0
    })
}

/// Cosine similarity of two embedding vectors.
pub fn alignment(e_u: &[f64], e_i: &[f64]) -> Result<f64, MetricsError> {
    if e_u.len() != e_i.len() {
        return Err(MetricsError::DimensionMismatch(e_u.len(), e_i.len()));
    }
    let dot: Vec<f64> = e_u.iter().zip(e_i).map(|(a, b)| a * b).collect();
    let nu = math::sqrt(math::pairwise_sum(&e_u.iter().map(|x| x * x).collect::<Vec<_>>()));
    let ni = math::sqrt(math::pairwise_sum(&e_i.iter().map(|x| x * x).collect::<Vec<_>>()));
    if nu == 0.0 || ni == 0.0 {
        return Err(MetricsError::ZeroVector);
    }
    Ok(math::pairwise_sum(&dot) / (nu * ni))
}

/// Fraction of unique profile tokens grounded in the concatenated history
/// text.
pub fn coverage(profile: &str, history_texts: &[&str]) -> Result<f64, MetricsError> {
    let profile_tokens = token_set(profile);
    if profile_tokens.is_empty() {
        return Err(MetricsError::EmptyProfile);
    }
    let mut history_tokens: BTreeSet<String> = BTreeSet::new();
    for text in history_texts {
        history_tokens.extend(tokenize(text));
    }
    let grounded = profile_tokens.intersection(&history_tokens).count();
    Ok(grounded as f64 / profile_tokens.len() as f64)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum VarianceGroup {
    Stable,
    Moderate,
    Diverse,
}

impl VarianceGroup {
    pub fn name(&self) -> &'static str {
        match self {
            VarianceGroup::Stable => "stable",
            VarianceGroup::Moderate => "moderate",
            VarianceGroup::Diverse => "diverse",
        }
    }
}

/// Assigns users to stable/moderate/diverse thirds by population variance
/// of their historical ratings; thresholds sit at the 33.3/66.7 percentile
/// values and ties go to the lower group. Users with fewer than 2 ratings
/// are excluded and reported separately.
pub fn variance_groups(
    users: &BTreeMap<String, Vec<i32>>,
) -> (BTreeMap<String, VarianceGroup>, Vec<String>) {
    let mut variances: BTreeMap<&String, f64> = BTreeMap::new();
    let mut excluded = Vec::new();
    for (user, ratings) in users {
        if ratings.len() < 2 {
            excluded.push(user.clone());
            continue;
        }
        let xs: Vec<f64> = ratings.iter().map(|r| f64::from(*r)).collect();
        variances.insert(user, math::population_variance(&xs));
    }
    if variances.is_empty() {
        return (BTreeMap::new(), excluded);
    }
    let mut sorted: Vec<f64> = variances.values().copied().collect();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("variances are finite"));
    let n = sorted.len();
    let t1 = sorted[n.div_ceil(3) - 1];
    let t2 = sorted[(2 * n).div_ceil(3) - 1];
    let groups = variances
        .into_iter()
        .map(|(user, v)| {
            let group = if v <= t1 {
                VarianceGroup::Stable
            } else if v <= t2 {
                VarianceGroup::Moderate
            } else {
                VarianceGroup::Diverse
            };
            (user.clone(), group)
        })
        .collect();
    (groups, excluded)
}

/// Uniform sample (without replacement) of items the user never interacted
/// with, drawn from train-known items. Deterministic per seed.
pub fn random_negatives(
    split: &SplitDataset,
    user_id: &str,
    n: usize,
    seed: u64,
) -> Result<Vec<String>, MetricsError> {
    let interacted: BTreeSet<&str> = split
        .train
        .interactions
        .iter()
        .chain(split.valid.interactions.iter())
        .chain(split.test.interactions.iter())
        .filter(|i| i.user_id == user_id)
        .map(|i| i.item_id.as_str())
        .collect();
    let mut eligible: Vec<&str> = split
        .train
        .items()
        .into_iter()
        .filter(|i| !interacted.contains(i))
        .collect();
    if eligible.len() < n {
        return Err(MetricsError::PoolExhausted {
            need: n,
            have: eligible.len(),
        });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    for i in 0..n {
        let j = rng.gen_range(i..eligible.len());
        eligible.swap(i, j);
    }
    Ok(eligible[..n].iter().map(|s| String::from(*s)).collect())
}

/// Per-group rating metrics inside an [`EvalReport`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GroupReport {
    pub n: usize,
    pub mae: f64,
    pub rmse: f64,
    pub accuracy: f64,
    pub f1: f64,
}

/// Aggregated evaluation outcome.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    /// Evaluated test interactions.
    pub n: usize,
    /// Targets skipped for empty histories.
    pub n_skipped: usize,
    pub parse_failures: usize,
    pub mae: f64,
    pub rmse: f64,
    pub accuracy: f64,
    pub f1: f64,
    /// NDCG@K per cutoff; empty when ranking was not requested.
    pub ndcg: BTreeMap<u32, f64>,
    pub alignment_mean: f64,
    pub user_coverage_mean: f64,
    pub item_coverage_mean: f64,
    pub groups: BTreeMap<String, GroupReport>,
}

impl EvalReport {
    pub fn csv_header(k_list: &[u32]) -> String {
        let mut cols = alloc::vec![
            String::from("n"),
            String::from("mae"),
            String::from("rmse"),
            String::from("accuracy"),
            String::from("f1"),
        ];
        for k in k_list {
            cols.push(alloc::format!("ndcg@{k}"));
        }
        cols.push(String::from("alignment"));
        cols.push(String::from("user_coverage"));
        cols.push(String::from("item_coverage"));
        cols.join(",")
    }

    pub fn csv_row(&self, k_list: &[u32]) -> String {
        let mut cols = alloc::vec![
            alloc::format!("{}", self.n),
            alloc::format!("{:.6}", self.mae),
            alloc::format!("{:.6}", self.rmse),
            alloc::format!("{:.6}", self.accuracy),
            alloc::format!("{:.6}", self.f1),
        ];
        for k in k_list {
            match self.ndcg.get(k) {
                Some(v) => cols.push(alloc::format!("{v:.6}")),
                None => cols.push(String::new()),
            }
        }
        cols.push(alloc::format!("{:.6}", self.alignment_mean));
        cols.push(alloc::format!("{:.6}", self.user_coverage_mean));
        cols.push(alloc::format!("{:.6}", self.item_coverage_mean));
        cols.join(",")
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Dataset, Interaction, SplitPolicy};
    use alloc::string::ToString;
    use alloc::vec;

    fn eval(pairs: &[(i32, Option<f64>)]) -> RatingEval {
        RatingEval {
            pairs: pairs.iter().map(|(y, pred)| RatingPair { y: *y, pred: *pred }).collect(),
        }
    }

    #[test]
    fn perfect_predictions() {
        let m = rating_metrics(
            &eval(&[(5, Some(5.0)), (3, Some(3.0)), (4, Some(4.0))]),
            RatingScale::one_to_five(),
        )
        .unwrap();
        assert_eq!(m.mae, 0.0);
        assert_eq!(m.rmse, 0.0);
        assert_eq!(m.accuracy, 1.0);
        assert_eq!(m.f1, 1.0);
    }

    #[test]
    fn simple_arithmetic_case() {
        let m = rating_metrics(&eval(&[(5, Some(5.0)), (5, Some(4.0))]), RatingScale::one_to_five()).unwrap();
        assert!((m.mae - 0.5).abs() < 1e-12);
        assert!((m.rmse - (0.5f64).sqrt()).abs() < 1e-12);
        assert!((m.accuracy - 0.5).abs() < 1e-12);
    }

    #[test]
    fn macro_f1_three_class_confusion() {
        // truth:      1 1 2 2 3 3
        // prediction: 1 2 2 3 3 1
        // every class: tp=1, fp=1, fn=1 -> P = R = F1 = 0.5; macro = 0.5
        let m = rating_metrics(
            &eval(&[
                (1, Some(1.0)),
                (1, Some(2.0)),
                (2, Some(2.0)),
                (2, Some(3.0)),
                (3, Some(3.0)),
                (3, Some(1.0)),
            ]),
            RatingScale::one_to_five(),
        )
        .unwrap();
        assert!((m.f1 - 0.5).abs() < 1e-12);
        assert!((m.mae - 4.0 / 6.0).abs() < 1e-12);
    }

    #[test]
    fn parse_failures_count_as_maximal_error() {
        let m = rating_metrics(&eval(&[(5, None), (5, Some(5.0))]), RatingScale::one_to_five()).unwrap();
        assert!((m.mae - 2.0).abs() < 1e-12, "one failure contributes M=4");
        assert!((m.accuracy - 0.5).abs() < 1e-12);
    }

    #[test]
    fn rounding_is_half_up_then_clamped() {
        let m = rating_metrics(
            &eval(&[(4, Some(3.5)), (5, Some(7.2)), (1, Some(-2.0))]),
            RatingScale::one_to_five(),
        )
        .unwrap();
        // 3.5 -> 4 hit; 7.2 -> 5 hit; -2.0 -> 1 hit
        assert_eq!(m.accuracy, 1.0);
    }

    #[test]
    fn empty_eval_is_an_error() {
        assert!(matches!(
            rating_metrics(&RatingEval::default(), RatingScale::one_to_five()),
            Err(MetricsError::EmptyEval)
        ));
    }

    #[test]
    fn mae_never_exceeds_rmse() {
        let m = rating_metrics(
            &eval(&[(5, Some(1.0)), (4, Some(4.5)), (2, None), (3, Some(3.2))]),
            RatingScale::one_to_five(),
        )
        .unwrap();
        assert!(m.mae <= m.rmse + 1e-12);
    }

    fn candidates(pos_score: f64, neg_scores: &[f64]) -> CandidateSet {
        let mut scores = BTreeMap::new();
        scores.insert("pos".to_string(), pos_score);
        let mut negatives = Vec::new();
        for (i, s) in neg_scores.iter().enumerate() {
            let id = alloc::format!("n{i}");
            scores.insert(id.clone(), *s);
            negatives.push(id);
        }
        CandidateSet::new("pos", negatives, scores).unwrap()
    }

    #[test]
    fn ndcg_top_ranked_positive() {
        let c = candidates(5.0, &[1.0, 2.0, 3.0]);
        assert_eq!(ndcg_at_k(&c, 1).unwrap(), 1.0);
    }

    #[test]
    fn ndcg_rank_three_of_ten() {
        let negs = [9.0, 8.0, 4.0, 3.5, 3.0, 2.5, 2.0, 1.5, 1.0];
        let c = candidates(5.0, &negs);
        assert_eq!(ndcg_at_k(&c, 5).unwrap(), 0.5, "1/log2(4) exactly");
        assert_eq!(ndcg_at_k(&c, 1).unwrap(), 0.0);
    }

    #[test]
    fn ndcg_pessimistic_ties_rank_positive_last() {
        let c = candidates(2.0, &[2.0; 9]);
        let expected = 1.0 / (11.0f64).log2();
        assert!((ndcg_at_k(&c, 10).unwrap() - expected).abs() < 1e-12);
        assert_eq!(ndcg_at_k(&c, 9).unwrap(), 0.0);
    }

    #[test]
    fn ndcg_monotone_in_k() {
        let c = candidates(3.0, &[5.0, 4.0, 2.0, 1.0]);
        let mut prev = 0.0;
        for k in 1..=5 {
            let v = ndcg_at_k(&c, k).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn ndcg_rejects_bad_cutoffs() {
        let c = candidates(3.0, &[1.0]);
        assert!(matches!(ndcg_at_k(&c, 0), Err(MetricsError::BadCutoff { .. })));
        assert!(matches!(ndcg_at_k(&c, 3), Err(MetricsError::BadCutoff { .. })));
    }

    #[test]
    fn candidate_set_validation() {
        let mut scores = BTreeMap::new();
        scores.insert("p".to_string(), 1.0);
        assert!(CandidateSet::new("p", vec!["p".to_string()], scores.clone()).is_err());
        assert!(CandidateSet::new("p", vec!["q".to_string()], scores).is_err(), "q unscored");
    }

    #[test]
    fn alignment_forced_cases() {
        assert!((alignment(&[1.0, 2.0], &[1.0, 2.0]).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(alignment(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 0.0);
        let v = alignment(&[1.0, 1.0, 0.0], &[1.0, 0.0, 0.0]).unwrap();
        assert!((v - 1.0 / (2.0f64).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn alignment_scale_invariant_and_zero_rejected() {
        let a = alignment(&[1.0, 2.0, 3.0], &[0.5, 0.1, 0.9]).unwrap();
        let b = alignment(&[10.0, 20.0, 30.0], &[0.05, 0.01, 0.09]).unwrap();
        assert!((a - b).abs() < 1e-12);
        assert!(matches!(alignment(&[0.0, 0.0], &[1.0, 0.0]), Err(MetricsError::ZeroVector)));
    }

    #[test]
    fn coverage_forced_cases() {
        assert_eq!(coverage("funk rock", &["funk rock fan club"]).unwrap(), 1.0);
        assert_eq!(coverage("opera arias", &["funk rock"]).unwrap(), 0.0);
        let v = coverage("funk rock fan", &["funk fan"]).unwrap();
        assert!((v - 2.0 / 3.0).abs() < 1e-12);
        assert!(matches!(coverage("!!!", &["x"]), Err(MetricsError::EmptyProfile)));
    }

    #[test]
    fn coverage_monotone_in_history() {
        let profile = "funk rock fan";
        let small = coverage(profile, &["funk"]).unwrap();
        let large = coverage(profile, &["funk", "rock"]).unwrap();
        assert!(large >= small);
    }

    #[test]
    fn variance_groups_identical_all_stable() {
        let mut users = BTreeMap::new();
        for u in ["a", "b", "c"] {
            users.insert(u.to_string(), vec![3, 5]);
        }
        let (groups, excluded) = variance_groups(&users);
        assert!(excluded.is_empty());
        assert!(groups.values().all(|g| *g == VarianceGroup::Stable));
    }

    #[test]
    fn variance_groups_three_distinct() {
        let mut users = BTreeMap::new();
        users.insert("low".to_string(), vec![3, 3]);
        users.insert("mid".to_string(), vec![3, 4]);
        users.insert("high".to_string(), vec![1, 5]);
        let (groups, _) = variance_groups(&users);
        assert_eq!(groups["low"], VarianceGroup::Stable);
        assert_eq!(groups["mid"], VarianceGroup::Moderate);
        assert_eq!(groups["high"], VarianceGroup::Diverse);
    }

    #[test]
    fn variance_groups_nine_users_split_evenly() {
        // ratings [1, 1+i, 1, 1+i] give variance i^2/4: nine strictly
        // increasing values, so sorting and cutting by hand puts exactly
        // three users in each group
        let mut users = BTreeMap::new();
        for i in 1..=9 {
            users.insert(alloc::format!("u{i}"), vec![1, 1 + i, 1, 1 + i]);
        }
        let (groups, _) = variance_groups(&users);
        let count = |g: VarianceGroup| groups.values().filter(|x| **x == g).count();
        assert_eq!(count(VarianceGroup::Stable), 3);
        assert_eq!(count(VarianceGroup::Moderate), 3);
        assert_eq!(count(VarianceGroup::Diverse), 3);
        assert_eq!(groups["u1"], VarianceGroup::Stable);
        assert_eq!(groups["u9"], VarianceGroup::Diverse);
    }

    #[test]
    fn variance_groups_exclude_short_histories() {
        let mut users = BTreeMap::new();
        users.insert("ok".to_string(), vec![1, 5]);
        users.insert("short".to_string(), vec![3]);
        let (groups, excluded) = variance_groups(&users);
        assert!(!groups.contains_key("short"));
        assert_eq!(excluded, vec!["short".to_string()]);
    }

    fn split_for_negatives() -> SplitDataset {
        let mut recs = Vec::new();
        for (t, item) in ["a", "b", "c", "d", "e"].iter().enumerate() {
            recs.push(Interaction {
                user_id: "filler".into(),
                item_id: item.to_string(),
                rating: 3,
                timestamp: t as i64,
                text: String::new(),
                summary: None,
            });
        }
        recs.push(Interaction {
            user_id: "u".into(),
            item_id: "a".into(),
            rating: 4,
            timestamp: 10,
            text: String::new(),
            summary: None,
        });
        let d = Dataset::new("t", RatingScale::one_to_five(), recs).unwrap();
        crate::corpus::timestamp_split(&d, &SplitPolicy::QuantileFractions { valid: 0.15, test: 0.15 }).unwrap()
    }

    #[test]
    fn random_negatives_never_touch_interactions() {
        let split = split_for_negatives();
        let negs = random_negatives(&split, "u", 3, 99).unwrap();
        assert_eq!(negs.len(), 3);
        assert!(!negs.contains(&"a".to_string()));
    }

    #[test]
    fn random_negatives_deterministic_and_exhaustive() {
        let split = split_for_negatives();
        let a = random_negatives(&split, "u", 3, 7).unwrap();
        let b = random_negatives(&split, "u", 3, 7).unwrap();
        assert_eq!(a, b);
        // taking the whole eligible pool returns it entirely
        let train_items = split.train.items().len();
        let all = random_negatives(&split, "u", train_items - 1, 7).unwrap();
        let unique: BTreeSet<&String> = all.iter().collect();
        assert_eq!(unique.len(), all.len());
        assert!(matches!(
            random_negatives(&split, "u", train_items, 7),
            Err(MetricsError::PoolExhausted { .. })
        ));
    }
}
