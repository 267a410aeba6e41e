//! The frozen downstream environment: maps a (user profile, item profile)
//! pair to a predicted rating. The synthetic oracle scores genre-keyword
//! alignment between the two profiles, so the strategy that surfaces genre
//! terms on both sides is provably the best action; a remote LLM-backed
//! predictor implements the same trait in the companion crate.
//!
//! Nothing in this module mutates state during optimization; the
//! environment's fingerprint is checkable before and after training.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::RatingScale;
use crate::fnv::Fnv1a;
use crate::math;
use crate::pipeline::Profile;
use crate::text::tokenize;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum EnvError {
    #[error("unknown entity {0}")]
    UnknownEntity(String),
    #[error("environment transport failure (retryable={retryable}): {message}")]
    Transport { retryable: bool, message: String },
    #[error("environment protocol violation: {0}")]
    Protocol(String),
}

/// One rating prediction. `score` is absent exactly when the backend's
/// output could not be parsed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    score: Option<f64>,
    pub raw: Option<String>,
    pub parse_ok: bool,
}

impl Prediction {
    pub fn parsed(score: f64, raw: Option<String>) -> Self {
        Prediction {
            score: Some(score),
            raw,
            parse_ok: true,
        }
    }

    pub fn failed(raw: Option<String>) -> Self {
        Prediction {
            score: None,
            raw,
            parse_ok: false,
        }
    }

    pub fn score(&self) -> Option<f64> {
        self.score
    }
}

/// The frozen recommender f. Implementations must not mutate any state in
/// `predict`; `fingerprint` hashes whatever state they hold so freezing is
/// checkable.
pub trait Environment {
    fn predict(&self, user: &Profile, item: &Profile) -> Result<Prediction, EnvError>;
    fn scale(&self) -> RatingScale;
    fn fingerprint(&self) -> u64;
}

/// The synthetic world: unit latent genre mixtures per entity plus disjoint
/// keyword lists per genre. Ground truth comes from latent dot products;
/// predictions come from keyword hits in profile text.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthWorldSpec {
    pub scale: RatingScale,
    pub n_genres: usize,
    pub user_latents: BTreeMap<String, Vec<f64>>,
    pub item_latents: BTreeMap<String, Vec<f64>>,
    pub genre_keywords: Vec<Vec<String>>,
    pub noise_seed: u64,
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum WorldError {
    #[error("latent vector for {0} is not unit norm")]
    NotUnitNorm(String),
    #[error("genre keyword lists overlap on {0}")]
    OverlappingKeywords(String),
    #[error("expected {expected} genre keyword lists, got {got}")]
    WrongGenreCount { expected: usize, got: usize },
}

impl SynthWorldSpec {
    pub fn validate(&self) -> Result<(), WorldError> {
        if self.genre_keywords.len() != self.n_genres {
            return Err(WorldError::WrongGenreCount {
                expected: self.n_genres,
                got: self.genre_keywords.len(),
            });
        }
        let mut seen: BTreeMap<&str, usize> = BTreeMap::new();
        for (g, list) in self.genre_keywords.iter().enumerate() {
            for kw in list {
                if seen.insert(kw.as_str(), g).is_some() {
                    return Err(WorldError::OverlappingKeywords(kw.clone()));
                }
            }
        }
        for (id, v) in self.user_latents.iter().chain(self.item_latents.iter()) {
            let norm = math::sqrt(v.iter().map(|x| x * x).sum());
            if (norm - 1.0).abs() > 1e-9 {
                return Err(WorldError::NotUnitNorm(id.clone()));
            }
        }
        Ok(())
    }

    /// Counts each genre's keyword hits in the text, L2-normalized (the
    /// zero vector stays zero when nothing matches).
    fn genre_hits(&self, text: &str) -> Vec<f64> {
        let tokens = tokenize(text);
        let mut hits = alloc::vec![0.0f64; self.n_genres];
        for token in &tokens {
            for (g, list) in self.genre_keywords.iter().enumerate() {
                if list.iter().any(|kw| kw == token) {
                    hits[g] += 1.0;
                }
            }
        }
        let norm = math::sqrt(hits.iter().map(|x| x * x).sum());
        if norm > 0.0 {
            for h in &mut hits {
                *h /= norm;
            }
        }
        hits
    }

    fn score_from_dot(&self, dot: f64) -> f64 {
        f64::from(self.scale.min) + self.scale.gap() * dot.clamp(0.0, 1.0)
    }

    /// Deterministic prediction from keyword alignment between the two
    /// profiles.
    pub fn synth_predict(&self, user: &Profile, item: &Profile) -> Prediction {
        let gu = self.genre_hits(user.text());
        let gi = self.genre_hits(item.text());
        let dot: f64 = gu.iter().zip(&gi).map(|(a, b)| a * b).sum();
        Prediction::parsed(self.score_from_dot(dot), None)
    }

    /// Ground-truth rating from the latent vectors.
    pub fn synth_truth(&self, user_id: &str, item_id: &str) -> Result<i32, EnvError> {
        let zu = self
            .user_latents
            .get(user_id)
            .ok_or_else(|| EnvError::UnknownEntity(user_id.into()))?;
        let zi = self
            .item_latents
            .get(item_id)
            .ok_or_else(|| EnvError::UnknownEntity(item_id.into()))?;
        let dot: f64 = zu.iter().zip(zi).map(|(a, b)| a * b).sum();
        Ok(math::round(self.score_from_dot(dot)) as i32)
    }
}

impl Environment for SynthWorldSpec {
    fn predict(&self, user: &Profile, item: &Profile) -> Result<Prediction, EnvError> {
        Ok(self.synth_predict(user, item))
    }

    fn scale(&self) -> RatingScale {
        self.scale
    }

    fn fingerprint(&self) -> u64 {
        let mut h = Fnv1a::new();
        h.write_u64(self.n_genres as u64);
        h.write_u64(self.noise_seed);
        h.write_u64(self.scale.min as u64).write_u64(self.scale.max as u64);
        for (id, v) in &self.user_latents {
            h.write_str(id);
            for x in v {
                h.write_f64(*x);
            }
        }
        for (id, v) in &self.item_latents {
            h.write_str(id);
            for x in v {
                h.write_f64(*x);
            }
        }
        for list in &self.genre_keywords {
            for kw in list {
                h.write_str(kw);
            }
        }
        h.finish()
    }
}

/// First numeric token of a text ("I'd say 4.5 stars" -> 4.5). Used to read
/// ratings out of free-form backend replies.
pub fn parse_first_number(raw: &str) -> Option<f64> {
    let bytes = raw.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        if bytes[i].is_ascii_digit() {
            let mut start = i;
            if start > 0 && bytes[start - 1] == b'-' {
                start -= 1;
            }
            let mut end = i;
            while end < bytes.len() && bytes[end].is_ascii_digit() {
                end += 1;
            }
            if end < bytes.len() && bytes[end] == b'.' && end + 1 < bytes.len() && bytes[end + 1].is_ascii_digit() {
                end += 1;
                while end < bytes.len() && bytes[end].is_ascii_digit() {
                    end += 1;
                }
            }
            return raw[start..end].parse().ok();
        }
        i += 1;
    }
    None
}
