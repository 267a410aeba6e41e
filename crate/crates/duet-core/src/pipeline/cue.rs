//! Deterministic cue synthesis: the most frequent content tokens of one
//! side's history plus the rounded mean rating, rendered as a short
//! comma-separated phrase. Stands in for LLM cue extraction so the rest of
//! the loop is verifiable offline.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use crate::corpus::{HistoryPair, Interaction};
use crate::text::tokenize;

use super::policy::PolicyError;
use super::{Cue, Side};

/// Function words excluded from cue/profile token ranking.
pub(crate) const STOPWORDS: &[&str] = &[
    "a", "an", "and", "are", "as", "at", "be", "but", "by", "for", "i", "in", "is", "it", "its",
    "my", "of", "on", "or", "so", "that", "the", "this", "to", "was", "with",
];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CueConfig {
    /// How many ranked tokens a cue carries.
    pub top_n: usize,
    /// Hard cap on cue length in characters.
    pub max_chars: usize,
}

impl Default for CueConfig {
    fn default() -> Self {
        CueConfig {
            top_n: 5,
            max_chars: 200,
        }
    }
}

/// Content tokens of `texts` ranked by descending count, ties by ascending
/// token. Stopwords are dropped.
pub(crate) fn ranked_content_tokens(texts: &[&str]) -> Vec<(String, usize)> {
    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for text in texts {
        for token in tokenize(text) {
            if STOPWORDS.contains(&token.as_str()) {
                continue;
            }
            *counts.entry(token).or_insert(0) += 1;
        }
    }
    let mut ranked: Vec<(String, usize)> = counts.into_iter().collect();
    ranked.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked
}

fn side_history(state: &HistoryPair, side: Side) -> &[Interaction] {
    match side {
        Side::User => &state.user_history,
        Side::Item => &state.item_history,
    }
}

pub(crate) fn rounded_mean_rating(history: &[Interaction]) -> i64 {
    let ratings: Vec<f64> = history.iter().map(|i| f64::from(i.rating)).collect();
    crate::math::round(crate::math::mean(&ratings)) as i64
}

/// Deterministic cue for one side: top-n ranked content tokens followed by
/// the rounded mean rating ("funk, jazz, avg rating 4"). Histories whose
/// texts carry no tokens degrade to the rating phrase alone.
pub fn synth_cue(state: &HistoryPair, side: Side, cfg: &CueConfig) -> Result<Cue, PolicyError> {
    let history = side_history(state, side);
    if history.is_empty() {
        return Err(PolicyError::EmptyHistory { side });
    }
    let texts: Vec<&str> = history.iter().map(|i| i.text.as_str()).collect();
    let ranked = ranked_content_tokens(&texts);
    let rating_phrase = format!("avg rating {}", rounded_mean_rating(history));

    let mut tokens: Vec<&str> = ranked.iter().take(cfg.top_n).map(|(t, _)| t.as_str()).collect();
    // drop trailing tokens until the phrase fits the cap
    loop {
        let mut parts: Vec<&str> = tokens.clone();
        parts.push(rating_phrase.as_str());
        let phrase = parts.join(", ");
        if phrase.chars().count() <= cfg.max_chars || tokens.is_empty() {
            return Cue::new(phrase, side).map_err(PolicyError::Bundle);
        }
        tokens.pop();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::string::ToString;
    use alloc::vec;

    fn history(texts_ratings: &[(&str, i32)]) -> Vec<Interaction> {
        texts_ratings
            .iter()
            .enumerate()
            .map(|(n, (text, rating))| Interaction {
                user_id: "u".to_string(),
                item_id: format!("i{n}"),
                rating: *rating,
                timestamp: n as i64,
                text: text.to_string(),
                summary: None,
            })
            .collect()
    }

    fn state(user: Vec<Interaction>) -> HistoryPair {
        HistoryPair {
            user_history: user,
            item_history: vec![],
            target: Interaction {
                user_id: "u".to_string(),
                item_id: "t".to_string(),
                rating: 5,
                timestamp: 100,
                text: String::new(),
                summary: None,
            },
        }
    }

    #[test]
    fn token_ranking_with_lexicographic_ties() {
        // counts: funk=3, jazz=1, rock=1; the count-1 tie breaks to "jazz"
        let s = state(history(&[("funk funk rock", 4), ("funk jazz", 4)]));
        let cue = synth_cue(&s, Side::User, &CueConfig { top_n: 2, max_chars: 200 }).unwrap();
        assert_eq!(cue.text(), "funk, jazz, avg rating 4");
    }

    #[test]
    fn empty_text_falls_back_to_rating_phrase() {
        let s = state(history(&[("", 5)]));
        let cue = synth_cue(&s, Side::User, &CueConfig::default()).unwrap();
        assert_eq!(cue.text(), "avg rating 5");
    }

    #[test]
    fn deterministic_for_identical_histories() {
        let s = state(history(&[("funk soul", 3), ("soul", 2)]));
        let a = synth_cue(&s, Side::User, &CueConfig::default()).unwrap();
        let b = synth_cue(&s, Side::User, &CueConfig::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn empty_history_errors() {
        let s = state(vec![]);
        assert!(matches!(
            synth_cue(&s, Side::User, &CueConfig::default()),
            Err(PolicyError::EmptyHistory { side: Side::User })
        ));
        assert!(matches!(
            synth_cue(&s, Side::Item, &CueConfig::default()),
            Err(PolicyError::EmptyHistory { side: Side::Item })
        ));
    }

    #[test]
    fn cue_respects_length_cap() {
        let long = "verylongtokennumberone verylongtokennumbertwo verylongtokennumberthree";
        let s = state(history(&[(long, 4)]));
        let cue = synth_cue(&s, Side::User, &CueConfig { top_n: 5, max_chars: 40 }).unwrap();
        assert!(cue.text().chars().count() <= 40);
        assert!(cue.text().ends_with("avg rating 4"));
    }

    #[test]
    fn stopwords_are_excluded() {
        let s = state(history(&[("the the the funk", 4)]));
        let cue = synth_cue(&s, Side::User, &CueConfig { top_n: 1, max_chars: 200 }).unwrap();
        assert_eq!(cue.text(), "funk, avg rating 4");
    }
}
