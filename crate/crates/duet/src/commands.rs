//! Command implementations behind the CLI: each one locks the output
//! directory, produces its artifacts under fixed names, and records their
//! hashes in the manifest. Exit-code mapping: 2 usage/config, 3 numerical,
//! 4 environment/backend.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use duet_core::corpus::{k_core_filter, timestamp_split, training_states, SplitDataset};
use duet_core::ease::{fit_ease, EaseConfig, RatingMatrix};
use duet_core::embed::{Embedder, HashedBowEmbedder};
use duet_core::harness::{evaluate, EvalOptions, HarnessError, ProfileSource};
use duet_core::metrics::EvalReport;
use duet_core::optimizer::{train_loop, NoopSink, OptimError, TrainingLog};
use duet_core::pipeline::{SoftmaxStrategyPolicy, StrategyVocabulary};
use duet_core::recommender::{Environment, SynthWorldSpec};
use duet_core::simworld::build_world;

use crate::config::{load_vocabulary, ConfigError, RunConfig};
use crate::gateway::{GatewayConfig, LlmClient, RemoteEmbedder, RemoteEnvironment};
use crate::io::{self, Checkpoint, IoError, JsonlSampleSink};
use crate::manifest::{record_artifacts, ManifestError, OutDirLock};
use crate::registry::PromptRegistry;

pub const SIM_DATASET_FILE: &str = "sim_dataset.jsonl";
pub const WORLD_FILE: &str = "world.json";
pub const SPLIT_FILE: &str = "split.jsonl";
pub const CHECKPOINT_FILE: &str = "checkpoint.json";
pub const TRAIN_LOG_FILE: &str = "train_log.jsonl";
pub const SAMPLES_FILE: &str = "samples.jsonl";
pub const REPORT_FILE: &str = "report.json";
pub const EASE_MODEL_FILE: &str = "ease_model.bin";

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("environment failure: {0}")]
    Environment(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Environment(_) => 4,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e.to_string())
    }
}

impl From<ManifestError> for CliError {
    fn from(e: ManifestError) -> Self {
        match e {
            ManifestError::Locked(_) => CliError::Config(e.to_string()),
            other => CliError::Environment(other.to_string()),
        }
    }
}

impl From<OptimError> for CliError {
    fn from(e: OptimError) -> Self {
        match e {
            OptimError::NonFiniteGradient { .. } => CliError::Numerical(e.to_string()),
            OptimError::Environment(_) => CliError::Environment(e.to_string()),
            other => CliError::Config(other.to_string()),
        }
    }
}

impl From<HarnessError> for CliError {
    fn from(e: HarnessError) -> Self {
        match e {
            HarnessError::Environment(_) | HarnessError::Embed(_) => {
                CliError::Environment(e.to_string())
            }
            HarnessError::Ease(duet_core::ease::EaseError::NotPositiveDefinite { .. }) => {
                CliError::Numerical(e.to_string())
            }
            other => CliError::Config(other.to_string()),
        }
    }
}

fn read_err(e: IoError) -> CliError {
    CliError::Config(e.to_string())
}

fn write_err(e: IoError) -> CliError {
    CliError::Environment(e.to_string())
}

/// Generates the synthetic world: canonical dataset dump plus the world
/// spec the frozen oracle runs on.
pub fn cmd_simgen(config: &RunConfig, out_dir: &Path) -> Result<(), CliError> {
    let _lock = OutDirLock::acquire(out_dir)?;
    let sim = config.sim_config()?;
    let (world, dataset) = build_world(&sim).map_err(|e| CliError::Config(e.to_string()))?;
    io::save_dataset(&dataset, &out_dir.join(SIM_DATASET_FILE)).map_err(write_err)?;
    let world_json = serde_json::to_string_pretty(&world)
        .map_err(|e| CliError::Environment(e.to_string()))?;
    std::fs::write(out_dir.join(WORLD_FILE), world_json + "\n")
        .map_err(|e| CliError::Environment(e.to_string()))?;
    record_artifacts(out_dir, &[SIM_DATASET_FILE, WORLD_FILE])?;
    println!(
        "generated {} interactions across {} users x {} items",
        dataset.len(),
        sim.n_users,
        sim.n_items
    );
    Ok(())
}

fn ingest_input_path(config: &RunConfig, out_dir: &Path) -> PathBuf {
    config
        .ingest
        .input
        .clone()
        .unwrap_or_else(|| out_dir.join(SIM_DATASET_FILE))
}

/// Ingest, k-core filter, temporal split with cold-start pruning, persist.
pub fn cmd_ingest(config: &RunConfig, out_dir: &Path) -> Result<(), CliError> {
    let _lock = OutDirLock::acquire(out_dir)?;
    let input = ingest_input_path(config, out_dir);
    if !input.exists() {
        return Err(CliError::Config(format!(
            "input file {} does not exist (run simgen first or set ingest.input)",
            input.display()
        )));
    }
    let scale = config.scale()?;
    let map = config.field_map()?;
    let (raw, stats) =
        io::ingest(&input, &map, scale, &config.dataset.name).map_err(read_err)?;
    if stats.malformed > 0 {
        eprintln!("warning: {} of {} lines malformed", stats.malformed, stats.total);
    }
    let cored = k_core_filter(&raw, config.ingest.k_core)
        .map_err(|e| CliError::Config(e.to_string()))?;
    let split = timestamp_split(&cored, &config.split_policy()?)
        .map_err(|e| CliError::Config(e.to_string()))?;
    io::save_split(&split, &out_dir.join(SPLIT_FILE)).map_err(write_err)?;
    record_artifacts(out_dir, &[SPLIT_FILE])?;

    let users: BTreeSet<&str> = split.train.users().into_iter().collect();
    let items: BTreeSet<&str> = split.train.items().into_iter().collect();
    println!("dataset statistics ({})", config.dataset.name);
    println!("  interactions {}", raw.len());
    println!("  train        {}", split.train.len());
    println!("  valid        {}", split.valid.len());
    println!("  test         {}", split.test.len());
    println!("  users        {}", users.len());
    println!("  items        {}", items.len());
    Ok(())
}

fn load_split_file(out_dir: &Path) -> Result<SplitDataset, CliError> {
    let path = out_dir.join(SPLIT_FILE);
    if !path.exists() {
        return Err(CliError::Config(format!(
            "{} not found (run ingest first)",
            path.display()
        )));
    }
    io::load_split(&path).map_err(read_err)
}

fn load_world_file(out_dir: &Path) -> Result<SynthWorldSpec, CliError> {
    let path = out_dir.join(WORLD_FILE);
    if !path.exists() {
        return Err(CliError::Config(format!(
            "{} not found (run simgen first or switch backend.mode)",
            path.display()
        )));
    }
    let text = std::fs::read_to_string(&path).map_err(|e| CliError::Config(e.to_string()))?;
    serde_json::from_str(&text).map_err(|e| CliError::Config(format!("bad world file: {e}")))
}

fn make_environment(config: &RunConfig, out_dir: &Path) -> Result<Box<dyn Environment>, CliError> {
    match config.backend.mode.as_str() {
        "synth" => Ok(Box::new(load_world_file(out_dir)?)),
        "remote" => {
            let registry = make_registry(config)?;
            let gateway = GatewayConfig {
                max_retries: config.backend.max_retries,
                backoff_base_ms: config.backend.backoff_base_ms,
                backoff_cap_ms: config.backend.backoff_cap_ms,
                timeout_ms: config.backend.timeout_ms,
                concurrency: config.backend.concurrency,
                ..GatewayConfig::from_env(config.backend.model.clone())
                    .map_err(|e| CliError::Config(e.to_string()))?
            };
            let client = LlmClient::new(gateway).map_err(|e| CliError::Config(e.to_string()))?;
            Ok(Box::new(RemoteEnvironment::new(client, registry, config.scale()?)))
        }
        other => Err(CliError::Config(format!("unknown backend mode {other:?}"))),
    }
}

fn make_registry(config: &RunConfig) -> Result<PromptRegistry, CliError> {
    match &config.backend.prompt_dir {
        Some(dir) => PromptRegistry::with_dir(dir).map_err(|e| CliError::Config(e.to_string())),
        None => Ok(PromptRegistry::builtin()),
    }
}

fn make_embedder(config: &RunConfig) -> Result<Box<dyn Embedder>, CliError> {
    match config.backend.embedder.as_str() {
        "hashed" => Ok(Box::new(HashedBowEmbedder::default())),
        "remote" => Ok(Box::new(
            RemoteEmbedder::from_env(config.backend.model.clone(), 0)
                .map_err(|e| CliError::Config(e.to_string()))?,
        )),
        other => Err(CliError::Config(format!("unknown embedder {other:?}"))),
    }
}

fn fresh_policy(config: &RunConfig) -> Result<SoftmaxStrategyPolicy, CliError> {
    let vocabulary = match &config.strategy.vocabulary {
        Some(path) => load_vocabulary(path)?,
        None => StrategyVocabulary::default_six(),
    };
    let mut policy = SoftmaxStrategyPolicy::new(vocabulary, config.cue_config());
    policy.max_profile_words = config.strategy.max_profile_words;
    Ok(policy)
}

/// GRPO training on the curated split against the configured environment.
pub fn cmd_train(config: &RunConfig, out_dir: &Path) -> Result<(), CliError> {
    let _lock = OutDirLock::acquire(out_dir)?;
    let split = load_split_file(out_dir)?;
    let env = make_environment(config, out_dir)?;
    let states = training_states(&split, config.history.l_u, config.history.l_i);
    if states.is_empty() && config.train.iterations > 0 {
        return Err(CliError::Config(
            "no usable training states (every train interaction lacks prior history)".into(),
        ));
    }
    let mut policy = fresh_policy(config)?;

    let result: Result<(TrainingLog, Option<JsonlSampleSink>), OptimError> =
        if config.backend.archive_samples {
            let mut sink = JsonlSampleSink::create(&out_dir.join(SAMPLES_FILE))
                .map_err(write_err)?;
            train_loop(env.as_ref(), &states, &mut policy, &config.train, &mut sink)
                .map(|(_, log)| (log, Some(sink)))
        } else {
            train_loop(env.as_ref(), &states, &mut policy, &config.train, &mut NoopSink)
                .map(|(_, log)| (log, None))
        };
    let (log, sink) = match result {
        Ok(v) => v,
        Err(e @ OptimError::NonFiniteGradient { .. }) => {
            let diagnostics = out_dir.join("diagnostics.txt");
            let _ = std::fs::write(&diagnostics, format!("{e}\n"));
            eprintln!("diagnostics written to {}", diagnostics.display());
            return Err(e.into());
        }
        Err(e) => return Err(e.into()),
    };
    if let Some(sink) = sink {
        sink.finish().map_err(write_err)?;
    }

    io::save_checkpoint(&Checkpoint::new(&policy, &config.train), &out_dir.join(CHECKPOINT_FILE))
        .map_err(write_err)?;
    io::save_training_log(&log, &out_dir.join(TRAIN_LOG_FILE)).map_err(write_err)?;
    let mut artifacts = vec![CHECKPOINT_FILE, TRAIN_LOG_FILE];
    if config.backend.archive_samples {
        artifacts.push(SAMPLES_FILE);
    }
    record_artifacts(out_dir, &artifacts)?;

    println!("final mean reward (last 10 iterations): {:.4}", log.mean_reward_of_last(10));
    println!("strategy distribution:");
    for (id, p) in policy.probs().iter().enumerate() {
        println!("  strategy {id}: {p:.4}");
    }
    Ok(())
}

fn eval_with_source(
    config: &RunConfig,
    out_dir: &Path,
    source: &ProfileSource<'_>,
    opts: &EvalOptions,
) -> Result<EvalReport, CliError> {
    let split = load_split_file(out_dir)?;
    let env = make_environment(config, out_dir)?;
    let embedder = make_embedder(config)?;
    Ok(evaluate(&split, source, env.as_ref(), embedder.as_ref(), opts)?)
}

/// Greedy evaluation of a trained checkpoint over the test split.
pub fn cmd_eval(
    config: &RunConfig,
    out_dir: &Path,
    checkpoint_path: Option<&Path>,
    report_name: &str,
) -> Result<(), CliError> {
    let _lock = OutDirLock::acquire(out_dir)?;
    let default_path = out_dir.join(CHECKPOINT_FILE);
    let path = checkpoint_path.unwrap_or(&default_path);
    if !path.exists() {
        return Err(CliError::Config(format!(
            "checkpoint {} not found (run train first or pass --checkpoint)",
            path.display()
        )));
    }
    let policy = io::load_checkpoint(path).map_err(read_err)?.into_policy().map_err(read_err)?;
    let opts = config.eval_options()?;
    let report = eval_with_source(config, out_dir, &ProfileSource::Policy(&policy), &opts)?;
    io::save_report(&report, &out_dir.join(report_name)).map_err(write_err)?;
    record_artifacts(out_dir, &[report_name])?;
    print_report(&report);
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BaselineKind {
    RawHistory,
    TextRank,
}

impl BaselineKind {
    pub fn report_name(&self) -> &'static str {
        match self {
            BaselineKind::RawHistory => "baseline_10h.json",
            BaselineKind::TextRank => "baseline_textrank.json",
        }
    }
}

/// Profile-free baselines evaluated through the identical protocol.
pub fn cmd_baseline(config: &RunConfig, out_dir: &Path, which: BaselineKind) -> Result<(), CliError> {
    let _lock = OutDirLock::acquire(out_dir)?;
    let opts = config.eval_options()?;
    let source = match which {
        BaselineKind::RawHistory => ProfileSource::RawHistory,
        BaselineKind::TextRank => ProfileSource::TextRank {
            n_sentences: config.eval.textrank_sentences,
        },
    };
    let report = eval_with_source(config, out_dir, &source, &opts)?;
    io::save_report(&report, &out_dir.join(which.report_name())).map_err(write_err)?;
    record_artifacts(out_dir, &[which.report_name()])?;
    print_report(&report);
    Ok(())
}

/// Fits the item-item model on the train split and persists it.
pub fn cmd_ease_fit(config: &RunConfig, out_dir: &Path) -> Result<(), CliError> {
    let _lock = OutDirLock::acquire(out_dir)?;
    let split = load_split_file(out_dir)?;
    let matrix = RatingMatrix::from_dataset(&split.train);
    let ease_config = EaseConfig {
        lambda: config.ease.lambda,
        max_items: config.ease.max_items,
    };
    let model = fit_ease(&matrix, &ease_config).map_err(|e| match e {
        duet_core::ease::EaseError::NotPositiveDefinite { .. } => CliError::Numerical(e.to_string()),
        other => CliError::Config(other.to_string()),
    })?;
    io::save_ease_model(&model, matrix.item_ids(), &out_dir.join(EASE_MODEL_FILE))
        .map_err(write_err)?;
    record_artifacts(out_dir, &[EASE_MODEL_FILE])?;
    println!(
        "fitted EASE over {} items (lambda {})",
        model.n_items(),
        model.lambda()
    );
    Ok(())
}

/// Pretty-prints a stored report; optionally appends a CSV row.
pub fn cmd_report(report_path: &Path, csv_path: Option<&Path>) -> Result<(), CliError> {
    if !report_path.exists() {
        return Err(CliError::Config(format!(
            "report {} does not exist",
            report_path.display()
        )));
    }
    let report = io::load_report(report_path).map_err(read_err)?;
    print_report(&report);
    if let Some(csv) = csv_path {
        let k_list: Vec<u32> = report.ndcg.keys().copied().collect();
        let mut lines = String::new();
        if !csv.exists() {
            lines.push_str(&EvalReport::csv_header(&k_list));
            lines.push('\n');
        }
        lines.push_str(&report.csv_row(&k_list));
        lines.push('\n');
        use std::io::Write;
        let mut file = std::fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(csv)
            .map_err(|e| CliError::Environment(e.to_string()))?;
        file.write_all(lines.as_bytes())
            .map_err(|e| CliError::Environment(e.to_string()))?;
    }
    Ok(())
}

fn print_report(report: &EvalReport) {
    println!("evaluated {} targets ({} skipped, {} parse failures)", report.n, report.n_skipped, report.parse_failures);
    println!("  MAE       {:.4}", report.mae);
    println!("  RMSE      {:.4}", report.rmse);
    println!("  Accuracy  {:.4}", report.accuracy);
    println!("  F1        {:.4}", report.f1);
    for (k, v) in &report.ndcg {
        println!("  NDCG@{k:<4} {v:.4}");
    }
    println!("  Align     {:.4}", report.alignment_mean);
    println!("  User Cov  {:.4}", report.user_coverage_mean);
    println!("  Item Cov  {:.4}", report.item_coverage_mean);
    for (name, group) in &report.groups {
        println!(
            "  [{name}] n={} MAE {:.4} RMSE {:.4} Acc {:.4} F1 {:.4}",
            group.n, group.mae, group.rmse, group.accuracy, group.f1
        );
    }
}
