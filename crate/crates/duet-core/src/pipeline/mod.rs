//! The action space of the profile generator: cues, profile prompts
//! (strategies), profiles, the tagged single-pass output grammar, and the
//! policy abstraction with its desk-scale softmax instantiation.

pub mod cue;
pub mod grammar;
pub mod policy;

pub use cue::{synth_cue, CueConfig};
pub use grammar::{parse_single_pass_output, render_single_pass_output, ParseError};
pub use policy::{
    ActionTrace, Focus, Policy, PolicyError, PolicyParams, SoftmaxStrategyPolicy, StrategyEntry,
    StrategyVocabulary,
};

use alloc::string::String;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum BundleError {
    #[error("{0} text is empty after trimming")]
    EmptyText(&'static str),
    #[error("{field} has side {got:?}, expected {expected:?}")]
    SideMismatch {
        field: &'static str,
        got: Side,
        expected: Side,
    },
    #[error("profile prompt contains grammar tag {tag}")]
    TagInPrompt { tag: &'static str },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    User,
    Item,
}

/// A minimal textual hypothesis distilled from one side's history; the seed
/// for profile construction.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cue {
    text: String,
    side: Side,
}

impl Cue {
    pub fn new(text: impl Into<String>, side: Side) -> Result<Self, BundleError> {
        let text: String = text.into().trim().into();
        if text.is_empty() {
            return Err(BundleError::EmptyText("cue"));
        }
        Ok(Cue { text, side })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn side(&self) -> Side {
        self.side
    }
}

/// A natural-language instruction describing how a profile should be
/// written. For the desk-scale policy it carries the index of the sampled
/// strategy; free-text policies leave that unset. Prompt text must not
/// contain grammar tags, otherwise the single-pass output would be
/// ambiguous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfilePrompt {
    text: String,
    side: Side,
    strategy_id: Option<usize>,
}

impl ProfilePrompt {
    pub fn new(
        text: impl Into<String>,
        side: Side,
        strategy_id: Option<usize>,
    ) -> Result<Self, BundleError> {
        let text: String = text.into().trim().into();
        if text.is_empty() {
            return Err(BundleError::EmptyText("profile prompt"));
        }
        for tag in grammar::TAGS {
            if text.contains(tag) {
                return Err(BundleError::TagInPrompt { tag });
            }
        }
        Ok(ProfilePrompt {
            text,
            side,
            strategy_id,
        })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn side(&self) -> Side {
        self.side
    }

    pub fn strategy_id(&self) -> Option<usize> {
        self.strategy_id
    }
}

/// Final textual description of a user's preferences or an item's
/// characteristics, consumed by the downstream recommender.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Profile {
    text: String,
    side: Side,
}

impl Profile {
    pub fn new(text: impl Into<String>, side: Side) -> Result<Self, BundleError> {
        let text: String = text.into().trim().into();
        if text.is_empty() {
            return Err(BundleError::EmptyText("profile"));
        }
        Ok(Profile { text, side })
    }

    pub fn text(&self) -> &str {
        &self.text
    }

    pub fn side(&self) -> Side {
        self.side
    }
}

/// The full action for one user-item pair: cues, prompts and profiles for
/// both sides, produced in a single generation pass.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfileBundle {
    pub user_cue: Cue,
    pub user_prompt: ProfilePrompt,
    pub user_profile: Profile,
    pub item_cue: Cue,
    pub item_prompt: ProfilePrompt,
    pub item_profile: Profile,
}

impl ProfileBundle {
    pub fn new(
        user_cue: Cue,
        user_prompt: ProfilePrompt,
        user_profile: Profile,
        item_cue: Cue,
        item_prompt: ProfilePrompt,
        item_profile: Profile,
    ) -> Result<Self, BundleError> {
        fn check(field: &'static str, got: Side, expected: Side) -> Result<(), BundleError> {
            if got == expected {
                Ok(())
            } else {
                Err(BundleError::SideMismatch {
                    field,
                    got,
                    expected,
                })
            }
        }
        check("user_cue", user_cue.side(), Side::User)?;
        check("user_prompt", user_prompt.side(), Side::User)?;
        check("user_profile", user_profile.side(), Side::User)?;
        check("item_cue", item_cue.side(), Side::Item)?;
        check("item_prompt", item_prompt.side(), Side::Item)?;
        check("item_profile", item_profile.side(), Side::Item)?;
        Ok(ProfileBundle {
            user_cue,
            user_prompt,
            user_profile,
            item_cue,
            item_prompt,
            item_profile,
        })
    }
}
