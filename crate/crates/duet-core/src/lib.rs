//! Core algorithms for closed-loop user-item textual profile optimization.
//!
//! The crate covers corpus curation (k-core filtering, temporal splits,
//! history construction), the tagged single-pass profile grammar, a softmax
//! strategy policy trained with group-relative policy optimization against a
//! frozen recommender, an EASE item-item model for hard negatives, rating and
//! ranking metrics with alignment/coverage diagnostics, a TextRank extractive
//! baseline, and a deterministic synthetic world on which the whole loop is
//! verifiable offline.
//!
//! `no_std`-compatible (requires `alloc`). Float transcendentals go through
//! `libm` in all configurations, so results are bit-identical with and
//! without `std`. IO, file formats, the CLI and HTTP clients live in the
//! companion `duet` crate.

#![cfg_attr(not(feature = "std"), no_std)]
#![deny(unsafe_code)]

extern crate alloc;

pub mod corpus;
pub mod ease;
pub mod embed;
pub mod harness;
pub mod metrics;
pub mod optimizer;
pub mod pipeline;
pub mod recommender;
pub mod simworld;
pub mod template;
pub mod text;
pub mod textrank;

mod fnv;
mod math;
