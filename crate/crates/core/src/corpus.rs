//! Normalized relevance-annotated dialogue corpora.
//!
//! Every dataset is reduced to one row per (context, candidate response) with
//! the annotator ratings averaged into `mean_rating`. Raw layouts differ per
//! source, so [`ingest`] is driven by an [`AdapterConfig`] field map rather
//! than hard-coded parsers.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::jsonl;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Dataset {
    #[serde(rename = "HUMOD")]
    Humod,
    #[serde(rename = "USR_TC")]
    UsrTc,
    #[serde(rename = "P_DD")]
    PDd,
    #[serde(rename = "FED_REL")]
    FedRel,
    #[serde(rename = "FED_COR")]
    FedCor,
}

impl Dataset {
    /// Column order of result tables.
    pub const TABLE_ORDER: [Dataset; 5] = [
        Dataset::Humod,
        Dataset::UsrTc,
        Dataset::PDd,
        Dataset::FedCor,
        Dataset::FedRel,
    ];

    pub fn code(self) -> &'static str {
        match self {
            Dataset::Humod => "HUMOD",
            Dataset::UsrTc => "USR_TC",
            Dataset::PDd => "P_DD",
            Dataset::FedRel => "FED_REL",
            Dataset::FedCor => "FED_COR",
        }
    }

    /// Human-readable column heading.
    pub fn title(self) -> &'static str {
        match self {
            Dataset::Humod => "HUMOD",
            Dataset::UsrTc => "USR-TC",
            Dataset::PDd => "P-DD",
            Dataset::FedRel => "FED-Relevance",
            Dataset::FedCor => "FED-Correctness",
        }
    }

    /// Declared Likert range of a single annotator rating.
    pub fn likert_range(self) -> (f64, f64) {
        match self {
            Dataset::Humod | Dataset::PDd => (1.0, 5.0),
            Dataset::UsrTc | Dataset::FedRel | Dataset::FedCor => (1.0, 3.0),
        }
    }

    /// Documented turns-per-context range.
    pub fn turn_range(self) -> (usize, usize) {
        match self {
            Dataset::Humod => (2, 7),
            Dataset::UsrTc => (1, 19),
            Dataset::PDd => (1, 1),
            Dataset::FedRel | Dataset::FedCor => (1, 33),
        }
    }

    /// Documented number of distinct contexts.
    pub fn documented_contexts(self) -> usize {
        match self {
            Dataset::Humod => 4_750,
            Dataset::UsrTc => 60,
            Dataset::PDd => 200,
            Dataset::FedRel | Dataset::FedCor => 375,
        }
    }

    pub fn test_only(self) -> bool {
        matches!(self, Dataset::PDd | Dataset::FedRel | Dataset::FedCor)
    }
}

impl fmt::Display for Dataset {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for Dataset {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let norm: String = s
            .trim()
            .chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_uppercase();
        match norm.as_str() {
            "HUMOD" | "H" => Ok(Dataset::Humod),
            "USRTC" | "TC" => Ok(Dataset::UsrTc),
            "PDD" => Ok(Dataset::PDd),
            "FEDREL" | "FEDRELEVANCE" | "FEDRELEVANT" => Ok(Dataset::FedRel),
            "FEDCOR" | "FEDCORRECTNESS" | "FEDCORRECT" => Ok(Dataset::FedCor),
            _ => Err(Error::UnknownDataset(s.to_string())),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl Split {
    pub fn as_str(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        }
    }
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "train" => Ok(Split::Train),
            "valid" | "validation" | "dev" => Ok(Split::Valid),
            "test" => Ok(Split::Test),
            other => Err(Error::InvalidArgument(format!("unknown split `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResponseSource {
    Human,
    RandomHuman,
    Model,
    Unknown,
}

impl FromStr for ResponseSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s
            .trim()
            .to_ascii_lowercase()
            .replace(['-', ' '], "_")
            .as_str()
        {
            "human" | "gold" | "original" => Ok(ResponseSource::Human),
            "random_human" | "random" | "distractor" => Ok(ResponseSource::RandomHuman),
            "model" | "system" | "generated" => Ok(ResponseSource::Model),
            "unknown" | "" => Ok(ResponseSource::Unknown),
            other => Err(Error::InvalidArgument(format!(
                "unknown response source `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub speaker: u8,
    pub text: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DialogueContext {
    pub turns: Vec<Turn>,
}

impl DialogueContext {
    /// Builds a context from raw turn texts, alternating speakers from `first_speaker`.
    pub fn from_texts<S: AsRef<str>>(texts: &[S], first_speaker: u8) -> Self {
        let turns = texts
            .iter()
            .enumerate()
            .map(|(i, t)| Turn {
                speaker: ((first_speaker as usize + i) % 2) as u8,
                text: t.as_ref().to_string(),
            })
            .collect();
        DialogueContext { turns }
    }

    pub fn texts(&self) -> Vec<String> {
        self.turns.iter().map(|t| t.text.clone()).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidateResponse {
    pub text: String,
    pub source: ResponseSource,
    pub ratings: Vec<f64>,
    pub mean_rating: f64,
}

impl CandidateResponse {
    pub fn new(text: impl Into<String>, source: ResponseSource, ratings: Vec<f64>) -> Self {
        let mean_rating = mean_rating(&ratings).unwrap_or(f64::NAN);
        CandidateResponse {
            text: text.into(),
            source,
            ratings,
            mean_rating,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalExample {
    pub id: String,
    pub dataset: Dataset,
    pub split: Split,
    pub context: DialogueContext,
    pub response: CandidateResponse,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub dataset: Dataset,
    pub examples: Vec<EvalExample>,
    pub provenance: String,
}

/// A run of consecutive examples sharing one dialogue context.
#[derive(Debug, Clone, PartialEq)]
pub struct ContextGroup {
    /// Id of the first example in the run; stable across split filtering.
    pub id: String,
    pub members: Vec<usize>,
}

/// Unweighted arithmetic mean. Ratings are summed in sorted order so the
/// result does not depend on annotator order.
pub fn mean_rating(ratings: &[f64]) -> Option<f64> {
    if ratings.is_empty() {
        return None;
    }
    let mut sorted = ratings.to_vec();
    sorted.sort_by(f64::total_cmp);
    Some(sorted.iter().sum::<f64>() / sorted.len() as f64)
}

impl Corpus {
    pub fn new(
        dataset: Dataset,
        examples: Vec<EvalExample>,
        provenance: impl Into<String>,
    ) -> Self {
        Corpus {
            dataset,
            examples,
            provenance: provenance.into(),
        }
    }

    pub fn len(&self) -> usize {
        self.examples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.examples.is_empty()
    }

    /// Groups consecutive examples with identical contexts, in record order.
    pub fn context_groups(&self) -> Vec<ContextGroup> {
        let mut groups: Vec<ContextGroup> = Vec::new();
        for (i, ex) in self.examples.iter().enumerate() {
            match groups.last_mut() {
                Some(g) if self.examples[g.members[0]].context == ex.context => g.members.push(i),
                _ => groups.push(ContextGroup {
                    id: ex.id.clone(),
                    members: vec![i],
                }),
            }
        }
        groups
    }

    /// Context id of each example, aligned with `examples`.
    pub fn context_ids(&self) -> Vec<String> {
        let mut ids = vec![String::new(); self.examples.len()];
        for g in self.context_groups() {
            for &m in &g.members {
                ids[m] = g.id.clone();
            }
        }
        ids
    }

    pub fn filter_split(&self, split: Split) -> Corpus {
        Corpus {
            dataset: self.dataset,
            examples: self
                .examples
                .iter()
                .filter(|e| e.split == split)
                .cloned()
                .collect(),
            provenance: format!("{} | split={split}", self.provenance),
        }
    }

    /// Keeps only gold (original human) responses.
    pub fn gold_only(&self) -> Corpus {
        Corpus {
            dataset: self.dataset,
            examples: self
                .examples
                .iter()
                .filter(|e| e.response.source == ResponseSource::Human)
                .cloned()
                .collect(),
            provenance: format!("{} | gold-only", self.provenance),
        }
    }

    pub fn split_counts(&self) -> BTreeMap<Split, (usize, usize)> {
        let mut out: BTreeMap<Split, (usize, usize)> = BTreeMap::new();
        for g in self.context_groups() {
            let split = self.examples[g.members[0]].split;
            let entry = out.entry(split).or_default();
            entry.0 += 1;
            entry.1 += g.members.len();
        }
        out
    }

    /// Checks the schema invariants; returns warnings for non-fatal issues.
    pub fn validate(&self) -> Result<Vec<String>> {
        let mut warnings = Vec::new();
        let mut seen = HashSet::new();
        let (lo, hi) = self.dataset.likert_range();
        let (tmin, tmax) = self.dataset.turn_range();
        for (i, ex) in self.examples.iter().enumerate() {
            let rec = i + 1;
            if !seen.insert(ex.id.as_str()) {
                return Err(Error::DuplicateKey(format!("example id `{}`", ex.id)));
            }
            if ex.dataset != self.dataset {
                return Err(Error::Inconsistent(format!(
                    "example `{}` belongs to {} in a {} corpus",
                    ex.id, ex.dataset, self.dataset
                )));
            }
            if self.dataset.test_only() && ex.split != Split::Test {
                return Err(Error::Inconsistent(format!(
                    "{} is test-only but example `{}` is in split {}",
                    self.dataset, ex.id, ex.split
                )));
            }
            if ex.context.turns.is_empty() {
                return Err(malformed_record(
                    rec,
                    format!("example `{}` has no turns", ex.id),
                ));
            }
            if let Some(t) = ex.context.turns.iter().find(|t| t.text.trim().is_empty()) {
                return Err(malformed_record(
                    rec,
                    format!(
                        "example `{}` has an empty turn (speaker {})",
                        ex.id, t.speaker
                    ),
                ));
            }
            if ex.response.text.trim().is_empty() {
                return Err(malformed_record(
                    rec,
                    format!("example `{}` has an empty response", ex.id),
                ));
            }
            for &r in &ex.response.ratings {
                if !(r.is_finite() && (lo..=hi).contains(&r)) {
                    return Err(Error::RatingOutOfRange {
                        record: rec,
                        rating: r,
                        lo,
                        hi,
                    });
                }
            }
            match mean_rating(&ex.response.ratings) {
                Some(m) if (m - ex.response.mean_rating).abs() > 1e-9 => {
                    return Err(malformed_record(
                        rec,
                        format!(
                            "example `{}`: mean_rating {} is not the mean of its ratings ({m})",
                            ex.id, ex.response.mean_rating
                        ),
                    ))
                }
                None if !ex.response.mean_rating.is_finite() => {
                    return Err(malformed_record(
                        rec,
                        format!("example `{}` has no rating", ex.id),
                    ))
                }
                _ => {}
            }
            let n = ex.context.turns.len();
            if n < tmin || n > tmax {
                warnings.push(format!(
                    "example `{}` has {n} turns, outside the documented {tmin}-{tmax}",
                    ex.id
                ));
            }
        }
        Ok(warnings)
    }
}

fn malformed_record(record: usize, detail: String) -> Error {
    Error::Malformed {
        context: "corpus".into(),
        line: record,
        detail,
    }
}

fn meta_path(path: &Path) -> PathBuf {
    path.with_extension("meta.json")
}

#[derive(Serialize, Deserialize)]
struct CorpusMeta {
    dataset: Dataset,
    provenance: String,
}

/// Writes the normalized JSON-lines file plus a `.meta.json` sidecar carrying
/// the provenance string.
pub fn write_corpus(path: &Path, corpus: &Corpus) -> Result<()> {
    jsonl::write(path, &corpus.examples)?;
    jsonl::write_json(
        &meta_path(path),
        &CorpusMeta {
            dataset: corpus.dataset,
            provenance: corpus.provenance.clone(),
        },
    )
}

pub fn read_corpus(path: &Path) -> Result<Corpus> {
    let examples: Vec<EvalExample> = jsonl::read(path)?;
    let meta = meta_path(path);
    let (dataset, provenance) = if meta.exists() {
        let m: CorpusMeta = jsonl::read_json(&meta)?;
        (Some(m.dataset), m.provenance)
    } else {
        (None, format!("read from {}", path.display()))
    };
    let dataset = match (dataset, examples.first()) {
        (Some(d), _) => d,
        (None, Some(e)) => e.dataset,
        (None, None) => return Err(Error::NoRecords(path.display().to_string())),
    };
    let corpus = Corpus {
        dataset,
        examples,
        provenance,
    };
    corpus.validate()?;
    Ok(corpus)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RawFormat {
    Jsonl,
    Csv,
    Tsv,
}

/// Field map describing one raw layout.
///
/// A raw row may carry several responses for one context ("wide" layout):
/// `response`, `ratings` and `source` then list one field per response slot.
#[derive(Debug, Clone)]
pub struct AdapterConfig {
    pub format: Option<RawFormat>,
    pub id_field: Option<String>,
    pub context_field: String,
    pub turn_separator: String,
    pub first_speaker: u8,
    pub response_fields: Vec<String>,
    pub rating_fields: Vec<String>,
    pub rating_separator: String,
    pub source_fields: Vec<String>,
    pub source_values: Vec<ResponseSource>,
    pub likert: Option<(f64, f64)>,
}

impl AdapterConfig {
    /// Builds a config from a flat key-value map.
    ///
    /// Recognized keys: `format`, `id`, `context`, `turn_separator`,
    /// `first_speaker`, `response`, `ratings`, `ratings_relevance`,
    /// `ratings_correctness`, `rating_separator`, `source`, `source_values`,
    /// `likert_min`, `likert_max`.
    pub fn from_map(dataset: Dataset, map: &BTreeMap<String, String>) -> Result<Self> {
        let list = |key: &str| -> Vec<String> {
            map.get(key)
                .map(|v| {
                    v.split(',')
                        .map(|s| s.trim().to_string())
                        .filter(|s| !s.is_empty())
                        .collect()
                })
                .unwrap_or_default()
        };
        let required = |key: &str| -> Result<String> {
            map.get(key)
                .cloned()
                .ok_or_else(|| Error::InvalidArgument(format!("adapter config lacks `{key}`")))
        };
        let known = [
            "format",
            "id",
            "context",
            "turn_separator",
            "first_speaker",
            "response",
            "ratings",
            "ratings_relevance",
            "ratings_correctness",
            "rating_separator",
            "source",
            "source_values",
            "likert_min",
            "likert_max",
        ];
        if let Some(k) = map.keys().find(|k| !known.contains(&k.as_str())) {
            return Err(Error::InvalidArgument(format!("unknown adapter key `{k}`")));
        }

        let format = match map.get("format").map(|s| s.to_ascii_lowercase()) {
            None => None,
            Some(f) if f == "jsonl" || f == "json" => Some(RawFormat::Jsonl),
            Some(f) if f == "csv" => Some(RawFormat::Csv),
            Some(f) if f == "tsv" => Some(RawFormat::Tsv),
            Some(f) => return Err(Error::InvalidArgument(format!("unknown raw format `{f}`"))),
        };
        let rating_key = match dataset {
            Dataset::FedRel if map.contains_key("ratings_relevance") => "ratings_relevance",
            Dataset::FedCor if map.contains_key("ratings_correctness") => "ratings_correctness",
            _ => "ratings",
        };
        let response_fields = list("response");
        let rating_fields = list(rating_key);
        if response_fields.is_empty() {
            return Err(Error::InvalidArgument(
                "adapter config lacks `response`".into(),
            ));
        }
        if rating_fields.len() != response_fields.len() {
            return Err(Error::InvalidArgument(format!(
                "`{rating_key}` lists {} field(s) for {} response field(s)",
                rating_fields.len(),
                response_fields.len()
            )));
        }
        let source_fields = list("source");
        let source_values = list("source_values")
            .iter()
            .map(|s| s.parse())
            .collect::<Result<Vec<ResponseSource>>>()?;
        for (name, n) in [
            ("source", source_fields.len()),
            ("source_values", source_values.len()),
        ] {
            if n != 0 && n != response_fields.len() {
                return Err(Error::InvalidArgument(format!(
                    "`{name}` must list one entry per response field"
                )));
            }
        }
        let parse_f = |key: &str| -> Result<Option<f64>> {
            map.get(key)
                .map(|v| {
                    v.trim()
                        .parse::<f64>()
                        .map_err(|_| Error::InvalidArgument(format!("`{key}` is not a number")))
                })
                .transpose()
        };
        let likert = match (parse_f("likert_min")?, parse_f("likert_max")?) {
            (None, None) => None,
            (lo, hi) => {
                let (dlo, dhi) = dataset.likert_range();
                Some((lo.unwrap_or(dlo), hi.unwrap_or(dhi)))
            }
        };
        let first_speaker = match map.get("first_speaker").map(|s| s.trim()) {
            None | Some("0") => 0,
            Some("1") => 1,
            Some(other) => {
                return Err(Error::InvalidArgument(format!(
                    "first_speaker must be 0 or 1, got `{other}`"
                )))
            }
        };
        Ok(AdapterConfig {
            format,
            id_field: map.get("id").cloned(),
            context_field: required("context")?,
            turn_separator: map
                .get("turn_separator")
                .map(|s| unescape(s))
                .unwrap_or_else(|| "\n".to_string()),
            first_speaker,
            response_fields,
            rating_fields,
            rating_separator: map
                .get("rating_separator")
                .cloned()
                .unwrap_or_else(|| ";".to_string()),
            source_fields,
            source_values,
            likert,
        })
    }
}

fn unescape(s: &str) -> String {
    s.replace("\\n", "\n").replace("\\t", "\t")
}

fn read_raw_rows(path: &Path, format: RawFormat) -> Result<Vec<serde_json::Map<String, Value>>> {
    let context = path.display().to_string();
    match format {
        RawFormat::Jsonl => {
            let file = File::open(path).map_err(|e| Error::io(path, e))?;
            let mut rows = Vec::new();
            for (i, line) in BufReader::new(file).lines().enumerate() {
                let line = line.map_err(|e| Error::io(path, e))?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<Value>(&line) {
                    Ok(Value::Object(obj)) => rows.push(obj),
                    Ok(_) => {
                        return Err(Error::Malformed {
                            context,
                            line: i + 1,
                            detail: "expected a JSON object".into(),
                        })
                    }
                    Err(e) => {
                        return Err(Error::Malformed {
                            context,
                            line: i + 1,
                            detail: e.to_string(),
                        })
                    }
                }
            }
            Ok(rows)
        }
        RawFormat::Csv | RawFormat::Tsv => {
            let delim = if format == RawFormat::Csv {
                b','
            } else {
                b'\t'
            };
            let mut reader = csv::ReaderBuilder::new()
                .delimiter(delim)
                .from_path(path)
                .map_err(|e| Error::io(path, std::io::Error::other(e)))?;
            let headers = match reader.headers() {
                Ok(h) => h.clone(),
                Err(_) => return Ok(Vec::new()),
            };
            let mut rows = Vec::new();
            for (i, rec) in reader.records().enumerate() {
                let rec = rec.map_err(|e| Error::Malformed {
                    context: context.clone(),
                    line: i + 2,
                    detail: e.to_string(),
                })?;
                let obj = headers
                    .iter()
                    .zip(rec.iter())
                    .map(|(h, v)| (h.to_string(), Value::String(v.to_string())))
                    .collect();
                rows.push(obj);
            }
            Ok(rows)
        }
    }
}

fn guess_format(path: &Path) -> RawFormat {
    match path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
    {
        Some(e) if e == "csv" => RawFormat::Csv,
        Some(e) if e == "tsv" => RawFormat::Tsv,
        _ => RawFormat::Jsonl,
    }
}

fn value_to_texts(v: &Value, sep: &str) -> Option<Vec<String>> {
    match v {
        Value::String(s) => Some(
            s.split(sep)
                .map(|t| t.trim().to_string())
                .filter(|t| !t.is_empty())
                .collect(),
        ),
        Value::Array(items) => items
            .iter()
            .map(|it| match it {
                Value::String(s) => Some(s.trim().to_string()),
                Value::Object(o) => o
                    .get("text")
                    .and_then(Value::as_str)
                    .map(|s| s.trim().to_string()),
                _ => None,
            })
            .collect(),
        _ => None,
    }
}

fn value_to_ratings(v: &Value, sep: &str) -> Option<Vec<f64>> {
    match v {
        Value::Number(n) => n.as_f64().map(|x| vec![x]),
        Value::String(s) => s
            .split(sep)
            .map(str::trim)
            .filter(|t| !t.is_empty())
            .map(|t| t.parse::<f64>().ok())
            .collect(),
        Value::Array(items) => items
            .iter()
            .map(|it| match it {
                Value::Number(n) => n.as_f64(),
                Value::String(s) => s.trim().parse().ok(),
                _ => None,
            })
            .collect(),
        _ => None,
    }
}

/// Reads a raw dataset file into the normalized schema. Splits are left as
/// `test`; apply [`make_splits`] afterwards.
pub fn ingest(dataset: Dataset, raw_path: &Path, adapter: &AdapterConfig) -> Result<Corpus> {
    if !raw_path.exists() {
        return Err(Error::io(
            raw_path,
            std::io::Error::new(std::io::ErrorKind::NotFound, "raw file not found"),
        ));
    }
    let format = adapter.format.unwrap_or_else(|| guess_format(raw_path));
    let rows = read_raw_rows(raw_path, format)?;
    if rows.is_empty() {
        return Err(Error::NoRecords(raw_path.display().to_string()));
    }
    let (lo, hi) = adapter.likert.unwrap_or_else(|| dataset.likert_range());
    let ctx_name = raw_path.display().to_string();
    let bad = |record: usize, detail: String| Error::Malformed {
        context: ctx_name.clone(),
        line: record,
        detail,
    };

    let mut examples = Vec::with_capacity(rows.len() * adapter.response_fields.len());
    for (ri, row) in rows.iter().enumerate() {
        let record = ri + 1;
        let ctx_value = row
            .get(&adapter.context_field)
            .ok_or_else(|| bad(record, format!("missing field `{}`", adapter.context_field)))?;
        let turns = value_to_texts(ctx_value, &adapter.turn_separator).ok_or_else(|| {
            bad(
                record,
                "context is neither a string nor a list of strings".into(),
            )
        })?;
        if turns.is_empty() || turns.iter().any(|t| t.is_empty()) {
            return Err(bad(record, "context has an empty turn".into()));
        }
        let context = DialogueContext::from_texts(&turns, adapter.first_speaker);
        let base_id = match &adapter.id_field {
            Some(f) => match row.get(f) {
                Some(Value::String(s)) => s.clone(),
                Some(Value::Number(n)) => n.to_string(),
                _ => return Err(bad(record, format!("missing id field `{f}`"))),
            },
            None => format!("{}-{:05}", dataset.code(), ri),
        };

        for (slot, resp_field) in adapter.response_fields.iter().enumerate() {
            let text = row
                .get(resp_field)
                .and_then(Value::as_str)
                .map(|s| s.trim().to_string())
                .ok_or_else(|| bad(record, format!("missing response field `{resp_field}`")))?;
            if text.is_empty() {
                return Err(bad(record, format!("empty response in `{resp_field}`")));
            }
            let rating_field = &adapter.rating_fields[slot];
            let ratings = row
                .get(rating_field)
                .and_then(|v| value_to_ratings(v, &adapter.rating_separator))
                .ok_or_else(|| bad(record, format!("unreadable ratings in `{rating_field}`")))?;
            if ratings.is_empty() {
                return Err(bad(record, format!("no ratings in `{rating_field}`")));
            }
            if let Some(&r) = ratings
                .iter()
                .find(|r| !(r.is_finite() && (lo..=hi).contains(*r)))
            {
                return Err(Error::RatingOutOfRange {
                    record,
                    rating: r,
                    lo,
                    hi,
                });
            }
            let source = if let Some(f) = adapter.source_fields.get(slot) {
                match row.get(f).and_then(Value::as_str) {
                    Some(s) => s.parse().map_err(|e: Error| bad(record, e.to_string()))?,
                    None => ResponseSource::Unknown,
                }
            } else {
                adapter
                    .source_values
                    .get(slot)
                    .copied()
                    .unwrap_or(ResponseSource::Unknown)
            };
            let id = if adapter.response_fields.len() == 1 {
                base_id.clone()
            } else {
                format!("{base_id}/{slot}")
            };
            examples.push(EvalExample {
                id,
                dataset,
                split: Split::Test,
                context: context.clone(),
                response: CandidateResponse::new(text, source, ratings),
            });
        }
    }

    let mut corpus = Corpus {
        dataset,
        examples,
        provenance: format!(
            "ingested {} ({:?}, {} records)",
            raw_path.display(),
            format,
            rows.len()
        ),
    };
    // Custom Likert overrides are checked above; validate() would reject them
    // against the dataset default, so only run it for the declared range.
    if adapter.likert.is_none() {
        let warnings = corpus.validate()?;
        append_warnings(&mut corpus, &warnings);
    }
    Ok(corpus)
}

fn append_warnings(corpus: &mut Corpus, warnings: &[String]) {
    const SHOWN: usize = 5;
    if warnings.is_empty() {
        return;
    }
    for w in warnings.iter().take(SHOWN) {
        log::warn!("{w}");
        corpus.provenance.push_str(&format!(" | warning: {w}"));
    }
    if warnings.len() > SHOWN {
        corpus
            .provenance
            .push_str(&format!(" | {} more warning(s)", warnings.len() - SHOWN));
    }
}

/// Assigns splits by context position.
///
/// HUMOD: first 3,750 contexts train, next 500 valid, remainder test.
/// USR-TC: first half of the contexts valid, second half test.
/// P-DD and FED: everything test.
pub fn make_splits(corpus: Corpus) -> Corpus {
    const HUMOD_TRAIN: usize = 3_750;
    const HUMOD_VALID: usize = 500;

    let mut corpus = corpus;
    let groups = corpus.context_groups();
    let n = groups.len();
    let documented = corpus.dataset.documented_contexts();
    if n != documented {
        let w = format!(
            "{} has {n} contexts, documented size is {documented}; splits applied by position",
            corpus.dataset
        );
        append_warnings(&mut corpus, &[w]);
    }
    let split_of = |ci: usize| -> Split {
        match corpus.dataset {
            Dataset::Humod => {
                if ci < HUMOD_TRAIN.min(n) {
                    Split::Train
                } else if ci < (HUMOD_TRAIN + HUMOD_VALID).min(n) {
                    Split::Valid
                } else {
                    Split::Test
                }
            }
            Dataset::UsrTc => {
                if ci < n / 2 {
                    Split::Valid
                } else {
                    Split::Test
                }
            }
            Dataset::PDd | Dataset::FedRel | Dataset::FedCor => Split::Test,
        }
    };
    let assignments: Vec<(usize, Split)> = groups
        .iter()
        .enumerate()
        .flat_map(|(ci, g)| {
            let s = split_of(ci);
            g.members.iter().map(move |&m| (m, s))
        })
        .collect();
    for (m, s) in assignments {
        corpus.examples[m].split = s;
    }
    corpus
}

/// One training context paired with a response borrowed from another context.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShuffledNegative {
    pub context_id: String,
    pub negative_text: String,
}

/// Draws one negative response per training context from the gold responses
/// of the `window` contexts that follow the training range.
///
/// When the corpus runs out of contexts the pool wraps around to the start
/// (if `wrap` is set). A context that would receive its own gold response is
/// swapped with the next permutation slot.
pub fn shuffle_negatives(
    corpus: &Corpus,
    window: usize,
    seed: u64,
    wrap: bool,
) -> Result<Vec<ShuffledNegative>> {
    let groups = corpus.context_groups();
    let train: Vec<usize> = groups
        .iter()
        .enumerate()
        .filter(|(_, g)| corpus.examples[g.members[0]].split == Split::Train)
        .map(|(i, _)| i)
        .collect();
    let Some(&last_train) = train.last() else {
        return Err(Error::Empty("corpus has no training contexts".into()));
    };
    if window < train.len() {
        return Err(Error::InvalidArgument(format!(
            "negative pool window {window} is smaller than the {} training contexts",
            train.len()
        )));
    }
    let total = groups.len();
    let start = last_train + 1;
    if !wrap && start + window > total {
        return Err(Error::InvalidArgument(format!(
            "window {window} exceeds the {} contexts after the training range and wrapping is disabled",
            total - start
        )));
    }
    let pool: Vec<usize> = (0..window).map(|k| (start + k) % total).collect();
    let gold_text = |gi: usize| -> &str {
        let g = &groups[gi];
        g.members
            .iter()
            .map(|&m| &corpus.examples[m])
            .find(|e| e.response.source == ResponseSource::Human)
            .unwrap_or(&corpus.examples[g.members[0]])
            .response
            .text
            .as_str()
    };

    let mut perm: Vec<usize> = (0..window).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    perm.shuffle(&mut rng);

    // Fix-up passes: swap self-pairings with the following slot.
    let mut clean = false;
    for _ in 0..=window {
        clean = true;
        for (slot, &ctx) in train.iter().enumerate() {
            if pool[perm[slot]] == ctx {
                clean = false;
                perm.swap(slot, (slot + 1) % window);
            }
        }
        if clean {
            break;
        }
    }
    if !clean {
        return Err(Error::Degenerate(
            "negative pool cannot avoid pairing a context with its own response".into(),
        ));
    }

    Ok(train
        .iter()
        .enumerate()
        .map(|(slot, &ctx)| ShuffledNegative {
            context_id: groups[ctx].id.clone(),
            negative_text: gold_text(pool[perm[slot]]).to_string(),
        })
        .collect())
}
