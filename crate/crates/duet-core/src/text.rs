//! Shared tokenizer. Every text-facing computation (cues, coverage, the
//! bag-of-words embedder, the synthetic oracle) must agree on what a token
//! is, so the rule lives in one place: lowercase, split on runs of
//! non-alphanumeric characters.

use alloc::collections::BTreeSet;
use alloc::string::String;
use alloc::vec::Vec;

pub fn tokenize(s: &str) -> Vec<String> {
    let mut tokens = Vec::new();
    let mut current = String::new();
    for ch in s.chars() {
        if ch.is_alphanumeric() {
            for lc in ch.to_lowercase() {
                current.push(lc);
            }
        } else if !current.is_empty() {
            tokens.push(core::mem::take(&mut current));
        }
    }
    if !current.is_empty() {
        tokens.push(current);
    }
    tokens
}

pub fn token_set(s: &str) -> BTreeSet<String> {
    tokenize(s).into_iter().collect()
}
