//! IO, file formats, remote backends, and the operator CLI around the
//! `duet-core` algorithms: canonical JSON-lines corpora, run configuration,
//! the prompt-template registry, chat-completion and embedding clients,
//! artifact manifests, and the subcommand implementations.

pub mod commands;
pub mod config;
pub mod gateway;
pub mod io;
pub mod manifest;
pub mod registry;
