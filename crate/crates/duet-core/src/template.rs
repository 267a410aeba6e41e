//! Prompt templates: `{name}` placeholder substitution with `{{`/`}}`
//! brace escapes, plus the shipped template set (cue extraction, the
//! single-pass generation instruction, rating prediction, and the five
//! stored baseline prompts). Loading templates from files lives in the
//! companion crate; rendering is pure and usable anywhere.

use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum TemplateError {
    #[error("unbound placeholder {{{0}}}")]
    UnboundPlaceholder(String),
    #[error("unbalanced braces at byte {0}")]
    UnbalancedBraces(usize),
    #[error("placeholder names must be [A-Za-z0-9_]+, found {0:?}")]
    BadPlaceholderName(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TemplateRole {
    Cue,
    SinglePass,
    Predict,
    BaselineKar,
    BaselinePalr,
    BaselineRlmrec,
    BaselineLg,
    BaselineR4rec,
}

impl TemplateRole {
    pub fn parse(s: &str) -> Option<TemplateRole> {
        Some(match s {
            "cue" => TemplateRole::Cue,
            "single_pass" => TemplateRole::SinglePass,
            "predict" => TemplateRole::Predict,
            "baseline_kar" => TemplateRole::BaselineKar,
            "baseline_palr" => TemplateRole::BaselinePalr,
            "baseline_rlmrec" => TemplateRole::BaselineRlmrec,
            "baseline_lg" => TemplateRole::BaselineLg,
            "baseline_r4rec" => TemplateRole::BaselineR4rec,
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PromptTemplate {
    pub id: String,
    pub role: TemplateRole,
    pub body: String,
}

impl PromptTemplate {
    /// Validates brace balance and placeholder syntax up front.
    pub fn new(
        id: impl Into<String>,
        role: TemplateRole,
        body: impl Into<String>,
    ) -> Result<Self, TemplateError> {
        let body = body.into();
        scan(&body, |_| Ok(()))?;
        Ok(PromptTemplate {
            id: id.into(),
            role,
            body,
        })
    }

    pub fn placeholders(&self) -> Vec<String> {
        let mut names = Vec::new();
        scan(&self.body, |name| {
            if !names.iter().any(|n| n == name) {
                names.push(name.to_string());
            }
            Ok(())
        })
        .expect("validated at construction");
        names
    }
}

/// Walks the template, calling `on_placeholder` for each `{name}`.
fn scan(body: &str, mut on_placeholder: impl FnMut(&str) -> Result<(), TemplateError>) -> Result<(), TemplateError> {
    let bytes = body.as_bytes();
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'{' => {
                if bytes.get(i + 1) == Some(&b'{') {
                    i += 2;
                    continue;
                }
                let Some(end) = body[i + 1..].find('}').map(|off| i + 1 + off) else {
                    return Err(TemplateError::UnbalancedBraces(i));
                };
                let name = &body[i + 1..end];
                if name.is_empty() || !name.bytes().all(|b| b.is_ascii_alphanumeric() || b == b'_') {
                    return Err(TemplateError::BadPlaceholderName(name.to_string()));
                }
                on_placeholder(name)?;
                i = end + 1;
            }
            b'}' => {
                if bytes.get(i + 1) == Some(&b'}') {
                    i += 2;
                    continue;
                }
                return Err(TemplateError::UnbalancedBraces(i));
            }
            _ => i += 1,
        }
    }
    Ok(())
}

/// Pure substitution: every `{name}` must be bound, extra variables are
/// ignored, `{{`/`}}` render as literal braces.
pub fn render_template(
    template: &PromptTemplate,
    vars: &BTreeMap<String, String>,
) -> Result<String, TemplateError> {
    let body = &template.body;
    let bytes = body.as_bytes();
    let mut out = String::with_capacity(body.len());
    let mut i = 0;
    while i < bytes.len() {
        match bytes[i] {
            b'{' => {
                if bytes.get(i + 1) == Some(&b'{') {
                    out.push('{');
                    i += 2;
                    continue;
                }
                let end = body[i + 1..]
                    .find('}')
                    .map(|off| i + 1 + off)
                    .ok_or(TemplateError::UnbalancedBraces(i))?;
                let name = &body[i + 1..end];
                let value = vars
                    .get(name)
                    .ok_or_else(|| TemplateError::UnboundPlaceholder(name.to_string()))?;
                out.push_str(value);
                i = end + 1;
            }
            b'}' => {
                if bytes.get(i + 1) == Some(&b'}') {
                    out.push('}');
                    i += 2;
                    continue;
                }
                return Err(TemplateError::UnbalancedBraces(i));
            }
            _ => {
                // copy the full UTF-8 character
                let ch = body[i..].chars().next().expect("in bounds");
                out.push(ch);
                i += ch.len_utf8();
            }
        }
    }
    Ok(out)
}

const CUE_BODY: &str = "From the history below, analyze the user's historical interactions to understand preferences, rating behavior, review sentiment or any other dimension. Keep the description concise and avoid full sentences.\n\nHISTORY:\n{history}";

const SINGLE_PASS_BODY: &str = "Task: Generate structured profiles for the user and item from historical data.\n\nCombined Context:\nUSER HISTORY:\n{user_history}\n\nITEM HISTORY:\n{item_history}\n\nAVG RATINGS: {avg_ratings}\n\nFirst, extract a concise Cue for both user and item. Second, based on the cues, construct a Profile Prompt that defines the description logic. Finally, generate the Profile guided by the constructed Profile Prompt.\n\nEmit exactly six sections, each tag alone on its own line, in this order:\n[USER_CUE]\n[USER_PROMPT]\n[USER_PROFILE]\n[ITEM_CUE]\n[ITEM_PROMPT]\n[ITEM_PROFILE]";

const PREDICT_BODY: &str = "You are the downstream recommender. Given the user profile and the item profile below, predict the rating this user would give this item on an integer scale from {min} to {max}. Respond with a single number and nothing else.\n\nUSER PROFILE:\n{user_profile}\n\nITEM PROFILE:\n{item_profile}\n\nRATING:";

const KAR_BODY: &str = "Task: Analyze user preferences based on business reviewing history\nInput: {user_history} - User's business reviewing history with sentiments over time\nInstructions:\n1. Analyze the user's preferences considering business names and categories\n2. Take into account sentiment patterns over time\n3. Provide clear explanations based on reviewing history details\n4. Consider other pertinent factors that may influence preferences";

const PALR_BODY: &str = "Task: Summarize user preferences using keywords.\nInput: {user_history} - historical businesses with user sentiments.\nOutput Format: An itemized list ranked by importance.\nTemplate:\n- KEY_WORD_1: \"HISTORY_BUSINESS_1\", \"HISTORY_BUSINESS_2\"\n- KEY_WORD_2: \"HISTORY_BUSINESS_3\"\nInstructions:\n1. Extract key preference indicators from user interaction history.\n2. Rank keywords by importance.";

const RLMREC_BODY: &str = "Role: Business recommendation assistant\nTask: Determine business types a user is likely to enjoy\nInput Format:\n- Title: Business name\n- Categories: Business categories\n- Sentiment: User sentiment toward business\n\nOutput Requirements:\n1. JSON format only\n2. Structure:\n{{\n  \"summarization\": \"Types of businesses user likely enjoys\" (<=100 words),\n  \"reasoning\": \"Brief explanation for summarization\" (no word limit)\n}}\n3. No additional text outside JSON\n\nInput: INTERACTION ITEMS: {user_history}";

const LG_BODY: &str = "You will serve as an assistant to help me generate a user profile based on this user's sentiments history to better understand this users' interest and thus predict his/her sentiment about a target item. I will provide you with some behavior history of the user in this format: [item attributes and sentiment]. The user profile you generate should contain as much useful content as possible to help predict the user's sentiment towards a new business.\nUSER HISTORY: {user_history}.\nPROFILE YOU GENERATE:";

const R4REC_BODY: &str = "User Review History\n{user_history}\n1. Title of Item 1\nPositive Aspects: [Aspect 1], [Aspect 2], ...\nNegative Aspects: [Aspect 1], [Aspect 2], ...\nUser Preference Elements: [Preference 1], [Preference 2], ...\n2. Title of Item 2\nPositive Aspects: [Aspect 1], [Aspect 2], ...\nNegative Aspects: [Aspect 1], [Aspect 2], ...\nUser Preference Elements: [Preference 1], [Preference 2], ...\n...\nItem Review History by Other Users\n{item_history}\nTask: Analyze whether the user will like the new item based on the user's preferences and the item's features. Provide your rationale in one concise paragraph.";

/// The shipped template set.
pub fn builtin_templates() -> Vec<PromptTemplate> {
    let mk = |id: &str, role, body: &str| {
        PromptTemplate::new(id, role, body).expect("builtin templates are valid")
    };
    alloc::vec![
        mk("cue_extraction", TemplateRole::Cue, CUE_BODY),
        mk("single_pass", TemplateRole::SinglePass, SINGLE_PASS_BODY),
        mk("rating_predict", TemplateRole::Predict, PREDICT_BODY),
        mk("baseline_kar", TemplateRole::BaselineKar, KAR_BODY),
        mk("baseline_palr", TemplateRole::BaselinePalr, PALR_BODY),
        mk("baseline_rlmrec", TemplateRole::BaselineRlmrec, RLMREC_BODY),
        mk("baseline_lg", TemplateRole::BaselineLg, LG_BODY),
        mk("baseline_r4rec", TemplateRole::BaselineR4rec, R4REC_BODY),
    ]
}
