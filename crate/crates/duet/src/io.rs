//! File formats: canonical JSON-lines datasets and splits (one-line JSON
//! header carrying schema version and rating scale, then one record per
//! line), source-schema ingestion with per-source field maps, checkpoints,
//! training logs, sample archives, evaluation reports, and the binary EASE
//! model format.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use serde::{Deserialize, Serialize};

use duet_core::corpus::{CorpusError, Dataset, Interaction, RatingScale, SplitDataset, SplitPolicy};
use duet_core::ease::EaseModel;
use duet_core::metrics::EvalReport;
use duet_core::optimizer::{SampleRecord, SampleSink, TrainConfig, TrainingLog};
use duet_core::pipeline::{CueConfig, PolicyParams, SoftmaxStrategyPolicy, StrategyVocabulary};

pub const SCHEMA_VERSION: u32 = 1;
const DATASET_SCHEMA: &str = "duet.dataset";
const SPLIT_SCHEMA: &str = "duet.split";
const CHECKPOINT_SCHEMA: &str = "duet.checkpoint";
const EASE_MAGIC: &[u8; 8] = b"DUETEASE";

#[derive(Debug, thiserror::Error)]
pub enum IoError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("format: {0}")]
    Format(String),
    #[error("file was written by schema version {found}, this build supports up to {supported}")]
    Version { found: u32, supported: u32 },
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error("too many malformed lines: {malformed} of {total} (wrong schema mapping?)")]
    MostlyMalformed { malformed: usize, total: usize },
}

#[derive(Debug, Serialize, Deserialize)]
struct DatasetHeader {
    schema: String,
    version: u32,
    name: String,
    scale: (i32, i32),
}

#[derive(Debug, Serialize, Deserialize)]
struct SplitHeader {
    schema: String,
    version: u32,
    name: String,
    scale: (i32, i32),
    policy: SplitPolicy,
}

#[derive(Debug, Serialize, Deserialize)]
struct Record {
    user: String,
    item: String,
    rating: i32,
    ts: i64,
    #[serde(default)]
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    summary: Option<String>,
}

impl Record {
    fn from_interaction(it: &Interaction) -> Self {
        Record {
            user: it.user_id.clone(),
            item: it.item_id.clone(),
            rating: it.rating,
            ts: it.timestamp,
            text: it.text.clone(),
            summary: it.summary.clone(),
        }
    }

    fn into_interaction(self) -> Interaction {
        Interaction {
            user_id: self.user,
            item_id: self.item,
            rating: self.rating,
            timestamp: self.ts,
            text: self.text,
            summary: self.summary,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
struct SplitRecord {
    split: String,
    #[serde(flatten)]
    record: Record,
}

fn check_version(found: u32) -> Result<(), IoError> {
    if found > SCHEMA_VERSION {
        return Err(IoError::Version {
            found,
            supported: SCHEMA_VERSION,
        });
    }
    Ok(())
}

pub fn save_dataset(d: &Dataset, path: &Path) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path)?);
    let header = DatasetHeader {
        schema: DATASET_SCHEMA.into(),
        version: SCHEMA_VERSION,
        name: d.name.clone(),
        scale: (d.scale.min, d.scale.max),
    };
    writeln!(w, "{}", serde_json::to_string(&header)?)?;
    for it in &d.interactions {
        writeln!(w, "{}", serde_json::to_string(&Record::from_interaction(it))?)?;
    }
    w.flush()?;
    Ok(())
}

pub fn load_dataset(path: &Path) -> Result<Dataset, IoError> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| IoError::Format("empty file, expected a header line".into()))??;
    let header: DatasetHeader = serde_json::from_str(&header_line)
        .map_err(|e| IoError::Format(format!("bad dataset header: {e}")))?;
    if header.schema != DATASET_SCHEMA {
        return Err(IoError::Format(format!("expected {DATASET_SCHEMA}, found {}", header.schema)));
    }
    check_version(header.version)?;
    let scale = RatingScale::new(header.scale.0, header.scale.1)?;
    let mut interactions = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: Record = serde_json::from_str(&line)?;
        interactions.push(record.into_interaction());
    }
    Ok(Dataset::new(header.name, scale, interactions)?)
}

pub fn save_split(s: &SplitDataset, path: &Path) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path)?);
    let header = SplitHeader {
        schema: SPLIT_SCHEMA.into(),
        version: SCHEMA_VERSION,
        name: s.name().to_string(),
        scale: (s.scale().min, s.scale().max),
        policy: s.policy.clone(),
    };
    writeln!(w, "{}", serde_json::to_string(&header)?)?;
    for (label, ds) in [("train", &s.train), ("valid", &s.valid), ("test", &s.test)] {
        for it in &ds.interactions {
            let record = SplitRecord {
                split: label.into(),
                record: Record::from_interaction(it),
            };
            writeln!(w, "{}", serde_json::to_string(&record)?)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn load_split(path: &Path) -> Result<SplitDataset, IoError> {
    let mut lines = BufReader::new(File::open(path)?).lines();
    let header_line = lines
        .next()
        .ok_or_else(|| IoError::Format("empty file, expected a header line".into()))??;
    let header: SplitHeader = serde_json::from_str(&header_line)
        .map_err(|e| IoError::Format(format!("bad split header: {e}")))?;
    if header.schema != SPLIT_SCHEMA {
        return Err(IoError::Format(format!("expected {SPLIT_SCHEMA}, found {}", header.schema)));
    }
    check_version(header.version)?;
    let scale = RatingScale::new(header.scale.0, header.scale.1)?;
    let mut train = Vec::new();
    let mut valid = Vec::new();
    let mut test = Vec::new();
    for line in lines {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let record: SplitRecord = serde_json::from_str(&line)?;
        let it = record.record.into_interaction();
        match record.split.as_str() {
            "train" => train.push(it),
            "valid" => valid.push(it),
            "test" => test.push(it),
            other => return Err(IoError::Format(format!("unknown split label {other:?}"))),
        }
    }
    Ok(SplitDataset {
        train: Dataset::new(header.name.clone(), scale, train)?,
        valid: Dataset::new(header.name.clone(), scale, valid)?,
        test: Dataset::new(header.name, scale, test)?,
        policy: header.policy,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind", content = "format")]
pub enum TimestampFormat {
    EpochSeconds,
    /// chrono `NaiveDateTime` format string, e.g. "%Y-%m-%d %H:%M:%S".
    DateTime(String),
}

/// Maps one source schema's field names onto the canonical record fields.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldMap {
    pub user: String,
    pub item: String,
    pub rating: String,
    pub timestamp: String,
    pub text: Option<String>,
    pub summary: Option<String>,
    pub timestamp_format: TimestampFormat,
}

impl FieldMap {
    pub fn canonical() -> Self {
        FieldMap {
            user: "user".into(),
            item: "item".into(),
            rating: "rating".into(),
            timestamp: "ts".into(),
            text: Some("text".into()),
            summary: Some("summary".into()),
            timestamp_format: TimestampFormat::EpochSeconds,
        }
    }

    pub fn amazon() -> Self {
        FieldMap {
            user: "reviewerID".into(),
            item: "asin".into(),
            rating: "overall".into(),
            timestamp: "unixReviewTime".into(),
            text: Some("reviewText".into()),
            summary: Some("summary".into()),
            timestamp_format: TimestampFormat::EpochSeconds,
        }
    }

    pub fn yelp() -> Self {
        FieldMap {
            user: "user_id".into(),
            item: "business_id".into(),
            rating: "stars".into(),
            timestamp: "date".into(),
            text: Some("text".into()),
            summary: None,
            timestamp_format: TimestampFormat::DateTime("%Y-%m-%d %H:%M:%S".into()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct IngestStats {
    pub total: usize,
    pub malformed: usize,
}

fn string_field(value: &serde_json::Value, key: &str) -> Option<String> {
    let v = value.get(key)?;
    match v {
        serde_json::Value::String(s) => Some(s.clone()),
        serde_json::Value::Number(n) => Some(n.to_string()),
        _ => None,
    }
}

fn parse_timestamp(value: &serde_json::Value, map: &FieldMap) -> Option<i64> {
    let v = value.get(&map.timestamp)?;
    match &map.timestamp_format {
        TimestampFormat::EpochSeconds => match v {
            serde_json::Value::Number(n) => n.as_i64().or_else(|| n.as_f64().map(|f| f as i64)),
            serde_json::Value::String(s) => s.trim().parse().ok(),
            _ => None,
        },
        TimestampFormat::DateTime(format) => {
            let s = v.as_str()?;
            chrono::NaiveDateTime::parse_from_str(s, format)
                .map(|dt| dt.and_utc().timestamp())
                .ok()
        }
    }
}

fn parse_line(value: &serde_json::Value, map: &FieldMap, scale: RatingScale) -> Option<Interaction> {
    let user_id = string_field(value, &map.user)?;
    let item_id = string_field(value, &map.item)?;
    let rating = value.get(&map.rating)?.as_f64()?;
    let rating = rating.round() as i64;
    if rating < i64::from(scale.min) || rating > i64::from(scale.max) {
        return None;
    }
    let timestamp = parse_timestamp(value, map)?;
    if timestamp < 0 {
        return None;
    }
    let text = map
        .text
        .as_ref()
        .and_then(|k| value.get(k))
        .and_then(|v| v.as_str())
        .unwrap_or("")
        .to_string();
    let summary = map
        .summary
        .as_ref()
        .and_then(|k| value.get(k))
        .and_then(|v| v.as_str())
        .map(String::from);
    Some(Interaction {
        user_id,
        item_id,
        rating: rating as i32,
        timestamp,
        text,
        summary,
    })
}

/// Reads a JSON-lines review file under a field map. Malformed lines are
/// counted and skipped; if more than half the lines are malformed the whole
/// ingest fails, which almost always means the wrong schema mapping.
/// Canonical header lines (objects carrying a "schema" key) are ignored.
pub fn ingest(
    path: &Path,
    map: &FieldMap,
    scale: RatingScale,
    name: &str,
) -> Result<(Dataset, IngestStats), IoError> {
    let reader = BufReader::new(File::open(path)?);
    let mut interactions = Vec::new();
    let mut stats = IngestStats { total: 0, malformed: 0 };
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Option<serde_json::Value> = serde_json::from_str(&line).ok();
        if let Some(value) = &value {
            if value.get("schema").is_some() {
                continue;
            }
        }
        stats.total += 1;
        match value.as_ref().and_then(|v| parse_line(v, map, scale)) {
            Some(it) => interactions.push(it),
            None => stats.malformed += 1,
        }
    }
    if stats.total > 0 && stats.malformed * 2 > stats.total {
        return Err(IoError::MostlyMalformed {
            malformed: stats.malformed,
            total: stats.total,
        });
    }
    Ok((Dataset::new(name, scale, interactions)?, stats))
}

/// Trained-policy checkpoint: params, the config that produced them, and
/// the vocabulary they index into.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema: String,
    pub version: u32,
    pub params: PolicyParams,
    pub train_config: TrainConfig,
    pub vocabulary: StrategyVocabulary,
    pub cue_config: CueConfig,
    pub max_profile_words: usize,
}

impl Checkpoint {
    pub fn new(policy: &SoftmaxStrategyPolicy, train_config: &TrainConfig) -> Self {
        Checkpoint {
            schema: CHECKPOINT_SCHEMA.into(),
            version: SCHEMA_VERSION,
            params: policy.params().clone(),
            train_config: train_config.clone(),
            vocabulary: policy.vocabulary().clone(),
            cue_config: *policy.cue_config(),
            max_profile_words: policy.max_profile_words,
        }
    }

    pub fn into_policy(self) -> Result<SoftmaxStrategyPolicy, IoError> {
        let mut policy =
            SoftmaxStrategyPolicy::with_params(self.vocabulary, self.cue_config, self.params)
                .map_err(|e| IoError::Format(format!("checkpoint rejected: {e}")))?;
        policy.max_profile_words = self.max_profile_words;
        Ok(policy)
    }
}

pub fn save_checkpoint(c: &Checkpoint, path: &Path) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", serde_json::to_string_pretty(c)?)?;
    w.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, IoError> {
    let c: Checkpoint = serde_json::from_reader(BufReader::new(File::open(path)?))?;
    if c.schema != CHECKPOINT_SCHEMA {
        return Err(IoError::Format(format!("expected {CHECKPOINT_SCHEMA}, found {}", c.schema)));
    }
    check_version(c.version)?;
    Ok(c)
}

pub fn save_training_log(log: &TrainingLog, path: &Path) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path)?);
    for stats in &log.iterations {
        writeln!(w, "{}", serde_json::to_string(stats)?)?;
    }
    w.flush()?;
    Ok(())
}

pub fn save_report(report: &EvalReport, path: &Path) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "{}", serde_json::to_string_pretty(report)?)?;
    w.flush()?;
    Ok(())
}

pub fn load_report(path: &Path) -> Result<EvalReport, IoError> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

/// JSON-lines audit archive of raw sampled generations.
pub struct JsonlSampleSink {
    writer: BufWriter<File>,
    error: Option<std::io::Error>,
}

impl JsonlSampleSink {
    pub fn create(path: &Path) -> Result<Self, IoError> {
        Ok(JsonlSampleSink {
            writer: BufWriter::new(File::create(path)?),
            error: None,
        })
    }

    /// Surfaces any write error swallowed during recording.
    pub fn finish(mut self) -> Result<(), IoError> {
        if let Some(e) = self.error.take() {
            return Err(e.into());
        }
        self.writer.flush()?;
        Ok(())
    }
}

impl SampleSink for JsonlSampleSink {
    fn record(&mut self, record: &SampleRecord) {
        if self.error.is_some() {
            return;
        }
        let result = serde_json::to_string(record)
            .map_err(std::io::Error::other)
            .and_then(|line| writeln!(self.writer, "{line}"));
        if let Err(e) = result {
            self.error = Some(e);
        }
    }
}

/// Binary EASE model: magic, schema version, item count, lambda, then the
/// row-major weights as little-endian f64. Item ids ride in an adjacent
/// JSON file.
pub fn save_ease_model(model: &EaseModel, item_ids: &[String], path: &Path) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(EASE_MAGIC)?;
    w.write_u32::<LittleEndian>(SCHEMA_VERSION)?;
    w.write_u64::<LittleEndian>(model.n_items() as u64)?;
    w.write_f64::<LittleEndian>(model.lambda())?;
    for value in model.weights() {
        w.write_f64::<LittleEndian>(*value)?;
    }
    w.flush()?;
    let ids_path = ease_ids_path(path);
    let mut w = BufWriter::new(File::create(ids_path)?);
    writeln!(w, "{}", serde_json::to_string_pretty(&item_ids)?)?;
    w.flush()?;
    Ok(())
}

pub fn load_ease_model(path: &Path) -> Result<(EaseModel, Vec<String>), IoError> {
    let mut r = BufReader::new(File::open(path)?);
    let mut magic = [0u8; 8];
    std::io::Read::read_exact(&mut r, &mut magic)?;
    if &magic != EASE_MAGIC {
        return Err(IoError::Format("not an EASE model file".into()));
    }
    let version = r.read_u32::<LittleEndian>()?;
    check_version(version)?;
    let n_items = r.read_u64::<LittleEndian>()? as usize;
    let lambda = r.read_f64::<LittleEndian>()?;
    let mut weights = vec![0.0f64; n_items * n_items];
    for w in &mut weights {
        *w = r.read_f64::<LittleEndian>()?;
    }
    let model = EaseModel::from_parts(n_items, lambda, weights)
        .map_err(|e| IoError::Format(format!("model rejected: {e}")))?;
    let ids: Vec<String> = serde_json::from_reader(BufReader::new(File::open(ease_ids_path(path))?))?;
    if ids.len() != n_items {
        return Err(IoError::Format(format!(
            "id file lists {} items, model has {n_items}",
            ids.len()
        )));
    }
    Ok((model, ids))
}

fn ease_ids_path(model_path: &Path) -> std::path::PathBuf {
    let mut p = model_path.as_os_str().to_owned();
    p.push(".items.json");
    std::path::PathBuf::from(p)
}
