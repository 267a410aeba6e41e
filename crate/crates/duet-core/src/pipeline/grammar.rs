//! The tagged single-pass output format. One generation pass carries six
//! sections; each tag sits alone on its own line, followed by that section's
//! body:
//!
//! ```text
//! [USER_CUE]
//! funk, jazz, avg rating 4
//! [USER_PROMPT]
//! ...
//! ```
//!
//! Rendering is canonical (fixed section order); parsing is
//! order-insensitive and tolerates prose before the first tag, since real
//! generator output drifts. A literal tag inside a body is escaped with a
//! backslash before its opening bracket, which is the minimal reversible
//! scheme: parsing never mistakes an escaped tag line for a section header.
//! The text format carries no strategy ids, so prompts parsed from text have
//! `strategy_id` unset.

use alloc::borrow::ToOwned;
use alloc::string::String;
use alloc::vec::Vec;

use super::{BundleError, Cue, Profile, ProfileBundle, ProfilePrompt, Side};

pub const USER_CUE_TAG: &str = "[USER_CUE]";
pub const USER_PROMPT_TAG: &str = "[USER_PROMPT]";
pub const USER_PROFILE_TAG: &str = "[USER_PROFILE]";
pub const ITEM_CUE_TAG: &str = "[ITEM_CUE]";
pub const ITEM_PROMPT_TAG: &str = "[ITEM_PROMPT]";
pub const ITEM_PROFILE_TAG: &str = "[ITEM_PROFILE]";

/// Canonical section order.
pub const TAGS: [&str; 6] = [
    USER_CUE_TAG,
    USER_PROMPT_TAG,
    USER_PROFILE_TAG,
    ITEM_CUE_TAG,
    ITEM_PROMPT_TAG,
    ITEM_PROFILE_TAG,
];

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum ParseError {
    #[error("missing section {tag}")]
    MissingSection { tag: &'static str },
    #[error("duplicate section {tag}")]
    DuplicateSection { tag: &'static str },
    #[error("empty section {tag}")]
    EmptySection { tag: &'static str },
    #[error("invalid section {tag}: {source}")]
    InvalidSection {
        tag: &'static str,
        source: BundleError,
    },
}

fn escape(body: &str) -> String {
    let mut out = body.to_owned();
    for tag in TAGS {
        let mut escaped = String::with_capacity(tag.len() + 1);
        escaped.push('\\');
        escaped.push_str(tag);
        out = out.replace(tag, &escaped);
    }
    out
}

fn unescape(body: &str) -> String {
    let mut out = body.to_owned();
    for tag in TAGS {
        let mut escaped = String::with_capacity(tag.len() + 1);
        escaped.push('\\');
        escaped.push_str(tag);
        out = out.replace(&escaped, tag);
    }
    out
}

/// Emits the canonical tagged layout. Inverse of
/// [`parse_single_pass_output`] on the textual fields.
pub fn render_single_pass_output(bundle: &ProfileBundle) -> String {
    let sections: [(&str, &str); 6] = [
        (USER_CUE_TAG, bundle.user_cue.text()),
        (USER_PROMPT_TAG, bundle.user_prompt.text()),
        (USER_PROFILE_TAG, bundle.user_profile.text()),
        (ITEM_CUE_TAG, bundle.item_cue.text()),
        (ITEM_PROMPT_TAG, bundle.item_prompt.text()),
        (ITEM_PROFILE_TAG, bundle.item_profile.text()),
    ];
    let mut out = String::new();
    for (i, (tag, body)) in sections.iter().enumerate() {
        if i > 0 {
            out.push('\n');
        }
        out.push_str(tag);
        out.push('\n');
        out.push_str(&escape(body));
    }
    out
}

/// Extracts the six sections from raw generator output. Section order is
/// irrelevant; text before the first tag is ignored; text after the last
/// tag belongs to that section. Missing or repeated sections fail with the
/// offending tag (the optimizer maps such failures to zero reward).
pub fn parse_single_pass_output(raw: &str) -> Result<ProfileBundle, ParseError> {
    let mut bodies: [Option<Vec<&str>>; 6] = Default::default();
    let mut current: Option<usize> = None;
    for line in raw.lines() {
        let trimmed = line.trim();
        if let Some(idx) = TAGS.iter().position(|t| *t == trimmed) {
            if bodies[idx].is_some() {
                return Err(ParseError::DuplicateSection { tag: TAGS[idx] });
            }
            bodies[idx] = Some(Vec::new());
            current = Some(idx);
        } else if let Some(section) = current {
            bodies[section]
                .as_mut()
                .expect("current section was initialized")
                .push(line);
        }
        // lines before the first tag: leading prose, ignored
    }

    let mut texts: [String; 6] = Default::default();
    for (idx, body) in bodies.into_iter().enumerate() {
        let lines = body.ok_or(ParseError::MissingSection { tag: TAGS[idx] })?;
        let joined = lines.join("\n");
        let text = unescape(joined.trim());
        if text.is_empty() {
            return Err(ParseError::EmptySection { tag: TAGS[idx] });
        }
        texts[idx] = text;
    }
    let [uc, up, upr, ic, ip, ipr] = texts;

    let wrap = |tag: &'static str| move |e: BundleError| ParseError::InvalidSection { tag, source: e };
    let bundle = ProfileBundle::new(
        Cue::new(uc, Side::User).map_err(wrap(USER_CUE_TAG))?,
        ProfilePrompt::new(up, Side::User, None).map_err(wrap(USER_PROMPT_TAG))?,
        Profile::new(upr, Side::User).map_err(wrap(USER_PROFILE_TAG))?,
        Cue::new(ic, Side::Item).map_err(wrap(ITEM_CUE_TAG))?,
        ProfilePrompt::new(ip, Side::Item, None).map_err(wrap(ITEM_PROMPT_TAG))?,
        Profile::new(ipr, Side::Item).map_err(wrap(ITEM_PROFILE_TAG))?,
    )
    .expect("sides are fixed per tag");
    Ok(bundle)
}
