//! Exchange format for model-derived artifacts.
//!
//! The extractor (a separate program with access to the pretrained models)
//! reads a [`Manifest`] of requests and answers with one [`FeatureRecord`] per
//! request. Records are keyed by `(example_id, kind)`. Keys for features that
//! do not belong to a single example are built with [`context_key`],
//! [`response_key`], [`negative_key`] and [`shuffled_key`].
//!
//! Two on-disk encodings exist. The canonical one is JSON lines; vectors are
//! 32-bit floats printed in shortest round-trip form. The `DRFV1` binary
//! container stores the same records little-endian:
//!
//! ```text
//! header : "DRFV1" | version u32 | dim u32 | count u64
//! record : id_len u16 | id bytes | kind u8 |
//!          tag_len u16 | tag bytes | flags u8 (bit 0 = truncated) | payload
//! payload: vector kinds      -> dim x f32
//!          COND_LOGPROB      -> logprob_sum f64 | token_count u32
//!          FOLLOWUP_LOGPROBS -> n u32 | n x (id_len u16 | id bytes | logprob_sum f64)
//! ```

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::{Corpus, EvalExample, ResponseSource, ShuffledNegative};
use crate::error::{Error, Result};
use crate::jsonl;

pub const BINARY_MAGIC: &[u8; 5] = b"DRFV1";
pub const BINARY_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum FeatureKind {
    /// Pooled NSP feature of the (context, response) pair.
    PairNsp,
    /// Pooled NSP feature of (context, negative text).
    PairNspNeg,
    /// Pooled NSP feature of a single text.
    SoloNsp,
    /// Max-pooled contextual token embeddings of a single text.
    Maxpool,
    /// Averaged static subword embeddings of a single text.
    #[serde(rename = "AVGSTATIC")]
    AvgStatic,
    /// Summed log-probability of the response given the context.
    CondLogprob,
    /// Log-probabilities of canned follow-up utterances.
    FollowupLogprobs,
}

impl FeatureKind {
    pub const ALL: [FeatureKind; 7] = [
        FeatureKind::PairNsp,
        FeatureKind::PairNspNeg,
        FeatureKind::SoloNsp,
        FeatureKind::Maxpool,
        FeatureKind::AvgStatic,
        FeatureKind::CondLogprob,
        FeatureKind::FollowupLogprobs,
    ];

    pub fn is_vector(self) -> bool {
        !matches!(
            self,
            FeatureKind::CondLogprob | FeatureKind::FollowupLogprobs
        )
    }

    pub fn code(self) -> &'static str {
        match self {
            FeatureKind::PairNsp => "PAIR_NSP",
            FeatureKind::PairNspNeg => "PAIR_NSP_NEG",
            FeatureKind::SoloNsp => "SOLO_NSP",
            FeatureKind::Maxpool => "MAXPOOL",
            FeatureKind::AvgStatic => "AVGSTATIC",
            FeatureKind::CondLogprob => "COND_LOGPROB",
            FeatureKind::FollowupLogprobs => "FOLLOWUP_LOGPROBS",
        }
    }

    fn tag(self) -> u8 {
        self as u8
    }

    fn from_tag(tag: u8) -> Option<Self> {
        FeatureKind::ALL.get(tag as usize).copied()
    }
}

impl fmt::Display for FeatureKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.code())
    }
}

impl FromStr for FeatureKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let up = s.trim().to_ascii_uppercase().replace('-', "_");
        FeatureKind::ALL
            .into_iter()
            .find(|k| k.code() == up)
            .ok_or_else(|| Error::InvalidArgument(format!("unknown feature kind `{s}`")))
    }
}

pub fn context_key(context_id: &str) -> String {
    format!("{context_id}::ctx")
}

pub fn response_key(example_id: &str) -> String {
    format!("{example_id}::resp")
}

/// Key of the pair (context, `j`-th fixed negative text).
pub fn negative_key(context_id: &str, j: usize) -> String {
    format!("{context_id}::neg{j}")
}

/// Key of the pair (context, shuffled negative drawn with `seed`).
pub fn shuffled_key(context_id: &str, seed: u64) -> String {
    format!("{context_id}::shuf{seed}")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Followup {
    pub utterance_id: String,
    pub logprob_sum: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Payload {
    Vector(Vec<f32>),
    LogProb { logprob_sum: f64, token_count: u32 },
    Followups(Vec<Followup>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RecordWire", into = "RecordWire")]
pub struct FeatureRecord {
    pub example_id: String,
    pub kind: FeatureKind,
    pub payload: Payload,
    pub extractor_tag: String,
    /// Set by the extractor when an input had to be truncated.
    pub truncated: bool,
}

#[derive(Serialize, Deserialize)]
struct RecordWire {
    example_id: String,
    kind: FeatureKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dim: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    values: Option<Vec<f32>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    logprob_sum: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    token_count: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    followups: Option<Vec<Followup>>,
    #[serde(default)]
    extractor_tag: String,
    #[serde(default, skip_serializing_if = "std::ops::Not::not")]
    truncated: bool,
}

impl TryFrom<RecordWire> for FeatureRecord {
    type Error = String;

    fn try_from(w: RecordWire) -> std::result::Result<Self, String> {
        let payload = match w.kind {
            k if k.is_vector() => {
                let values = w.values.ok_or("vector record lacks `values`")?;
                let dim = w.dim.ok_or("vector record lacks `dim`")?;
                if values.len() != dim {
                    return Err(format!(
                        "record `{}`: values length {} != dim {dim}",
                        w.example_id,
                        values.len()
                    ));
                }
                Payload::Vector(values)
            }
            FeatureKind::CondLogprob => Payload::LogProb {
                logprob_sum: w
                    .logprob_sum
                    .ok_or("COND_LOGPROB record lacks `logprob_sum`")?,
                token_count: w
                    .token_count
                    .ok_or("COND_LOGPROB record lacks `token_count`")?,
            },
            _ => Payload::Followups(
                w.followups
                    .ok_or("FOLLOWUP_LOGPROBS record lacks `followups`")?,
            ),
        };
        Ok(FeatureRecord {
            example_id: w.example_id,
            kind: w.kind,
            payload,
            extractor_tag: w.extractor_tag,
            truncated: w.truncated,
        })
    }
}

impl From<FeatureRecord> for RecordWire {
    fn from(r: FeatureRecord) -> Self {
        let mut w = RecordWire {
            example_id: r.example_id,
            kind: r.kind,
            dim: None,
            values: None,
            logprob_sum: None,
            token_count: None,
            followups: None,
            extractor_tag: r.extractor_tag,
            truncated: r.truncated,
        };
        match r.payload {
            Payload::Vector(v) => {
                w.dim = Some(v.len());
                w.values = Some(v);
            }
            Payload::LogProb {
                logprob_sum,
                token_count,
            } => {
                w.logprob_sum = Some(logprob_sum);
                w.token_count = Some(token_count);
            }
            Payload::Followups(f) => w.followups = Some(f),
        }
        w
    }
}

impl FeatureRecord {
    pub fn vector(
        example_id: impl Into<String>,
        kind: FeatureKind,
        values: Vec<f32>,
        tag: &str,
    ) -> Self {
        FeatureRecord {
            example_id: example_id.into(),
            kind,
            payload: Payload::Vector(values),
            extractor_tag: tag.to_string(),
            truncated: false,
        }
    }

    pub fn logprob(
        example_id: impl Into<String>,
        logprob_sum: f64,
        token_count: u32,
        tag: &str,
    ) -> Self {
        FeatureRecord {
            example_id: example_id.into(),
            kind: FeatureKind::CondLogprob,
            payload: Payload::LogProb {
                logprob_sum,
                token_count,
            },
            extractor_tag: tag.to_string(),
            truncated: false,
        }
    }

    pub fn followups(example_id: impl Into<String>, followups: Vec<Followup>, tag: &str) -> Self {
        FeatureRecord {
            example_id: example_id.into(),
            kind: FeatureKind::FollowupLogprobs,
            payload: Payload::Followups(followups),
            extractor_tag: tag.to_string(),
            truncated: false,
        }
    }

    pub fn values(&self) -> Option<&[f32]> {
        match &self.payload {
            Payload::Vector(v) => Some(v),
            _ => None,
        }
    }

    /// Vector payload widened to f64.
    pub fn values_f64(&self) -> Option<Vec<f64>> {
        self.values().map(|v| v.iter().map(|&x| x as f64).collect())
    }

    pub fn dim(&self) -> Option<usize> {
        self.values().map(<[f32]>::len)
    }

    fn key_string(&self) -> String {
        format!("{} / {}", self.example_id, self.kind)
    }

    fn check(&self) -> Result<()> {
        let ok_kind = match (&self.payload, self.kind) {
            (Payload::Vector(_), k) => k.is_vector(),
            (Payload::LogProb { .. }, FeatureKind::CondLogprob) => true,
            (Payload::Followups(_), FeatureKind::FollowupLogprobs) => true,
            _ => false,
        };
        if !ok_kind {
            return Err(Error::Inconsistent(format!(
                "record {} carries a payload of the wrong shape",
                self.key_string()
            )));
        }
        let finite = match &self.payload {
            Payload::Vector(v) => v.iter().all(|x| x.is_finite()),
            Payload::LogProb {
                logprob_sum,
                token_count,
            } => {
                if *token_count == 0 {
                    return Err(Error::Inconsistent(format!(
                        "record {} has token_count 0",
                        self.key_string()
                    )));
                }
                logprob_sum.is_finite()
            }
            Payload::Followups(f) => f.iter().all(|x| x.logprob_sum.is_finite()),
        };
        if !finite {
            return Err(Error::NonFinite(format!("record {}", self.key_string())));
        }
        Ok(())
    }
}

/// An immutable-after-build collection of records with a per-kind dimension.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FeatureStore {
    records: Vec<FeatureRecord>,
    index: HashMap<(String, FeatureKind), usize>,
    dims: BTreeMap<FeatureKind, usize>,
}

impl FeatureStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_records(records: impl IntoIterator<Item = FeatureRecord>) -> Result<Self> {
        let mut store = Self::new();
        for r in records {
            store.insert(r)?;
        }
        Ok(store)
    }

    /// Adds a record. The first vector record of a kind fixes that kind's dimension.
    pub fn insert(&mut self, record: FeatureRecord) -> Result<()> {
        record.check()?;
        if let Some(d) = record.dim() {
            let declared = *self.dims.entry(record.kind).or_insert(d);
            if declared != d {
                return Err(Error::DimMismatch {
                    context: format!("record {}", record.key_string()),
                    expected: declared,
                    found: d,
                });
            }
        }
        let key = (record.example_id.clone(), record.kind);
        if self.index.contains_key(&key) {
            return Err(Error::DuplicateKey(record.key_string()));
        }
        self.index.insert(key, self.records.len());
        self.records.push(record);
        Ok(())
    }

    pub fn merge(&mut self, other: FeatureStore) -> Result<()> {
        for r in other.records {
            self.insert(r)?;
        }
        Ok(())
    }

    pub fn get(&self, example_id: &str, kind: FeatureKind) -> Option<&FeatureRecord> {
        // HashMap lookup needs an owned key; the allocation is cheap next to I/O.
        self.index
            .get(&(example_id.to_string(), kind))
            .map(|&i| &self.records[i])
    }

    pub fn vector(&self, example_id: &str, kind: FeatureKind) -> Option<&[f32]> {
        self.get(example_id, kind).and_then(FeatureRecord::values)
    }

    /// Declared dimension of a vector kind, if any record of it exists.
    pub fn dim(&self, kind: FeatureKind) -> Option<usize> {
        self.dims.get(&kind).copied()
    }

    pub fn records(&self) -> &[FeatureRecord] {
        &self.records
    }

    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }
}

pub fn read_store(path: &Path) -> Result<FeatureStore> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut head = [0u8; 5];
    let n = file.read(&mut head).map_err(|e| Error::io(path, e))?;
    drop(file);
    if n == 5 && &head == BINARY_MAGIC {
        read_store_binary(path)
    } else {
        let wires: Vec<FeatureRecord> = jsonl::read(path)?;
        FeatureStore::from_records(wires).map_err(|e| annotate(path, e))
    }
}

fn annotate(path: &Path, e: Error) -> Error {
    match e {
        Error::DimMismatch {
            context,
            expected,
            found,
        } => Error::DimMismatch {
            context: format!("{}: {context}", path.display()),
            expected,
            found,
        },
        other => other,
    }
}

pub fn write_store(path: &Path, store: &FeatureStore) -> Result<()> {
    jsonl::write(path, store.records())
}

/// Writes the `DRFV1` container. All vector kinds in the store must share one dimension.
pub fn write_store_binary(path: &Path, store: &FeatureStore) -> Result<()> {
    let dims: BTreeSet<usize> = store.dims.values().copied().collect();
    if dims.len() > 1 {
        return Err(Error::Inconsistent(format!(
            "binary container holds one vector dimension, store has {dims:?}"
        )));
    }
    let dim = dims.into_iter().next().unwrap_or(0);
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    encode_binary(&mut w, store, dim).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

fn put_str(w: &mut impl Write, s: &str) -> std::io::Result<()> {
    let len = u16::try_from(s.len()).map_err(|_| {
        std::io::Error::new(
            std::io::ErrorKind::InvalidInput,
            "string longer than 65535 bytes",
        )
    })?;
    w.write_all(&len.to_le_bytes())?;
    w.write_all(s.as_bytes())
}

fn encode_binary(w: &mut impl Write, store: &FeatureStore, dim: usize) -> std::io::Result<()> {
    w.write_all(BINARY_MAGIC)?;
    w.write_all(&BINARY_VERSION.to_le_bytes())?;
    w.write_all(&(dim as u32).to_le_bytes())?;
    w.write_all(&(store.records.len() as u64).to_le_bytes())?;
    for r in &store.records {
        put_str(w, &r.example_id)?;
        w.write_all(&[r.kind.tag()])?;
        put_str(w, &r.extractor_tag)?;
        w.write_all(&[u8::from(r.truncated)])?;
        match &r.payload {
            Payload::Vector(v) => {
                for x in v {
                    w.write_all(&x.to_le_bytes())?;
                }
            }
            Payload::LogProb {
                logprob_sum,
                token_count,
            } => {
                w.write_all(&logprob_sum.to_le_bytes())?;
                w.write_all(&token_count.to_le_bytes())?;
            }
            Payload::Followups(f) => {
                w.write_all(&(f.len() as u32).to_le_bytes())?;
                for fu in f {
                    put_str(w, &fu.utterance_id)?;
                    w.write_all(&fu.logprob_sum.to_le_bytes())?;
                }
            }
        }
    }
    Ok(())
}

struct ByteReader<R> {
    inner: R,
    offset: usize,
}

impl<R: Read> ByteReader<R> {
    fn take<const N: usize>(&mut self) -> std::io::Result<[u8; N]> {
        let mut buf = [0u8; N];
        self.inner.read_exact(&mut buf)?;
        self.offset += N;
        Ok(buf)
    }

    fn string(&mut self) -> std::io::Result<String> {
        let len = u16::from_le_bytes(self.take()?) as usize;
        let mut buf = vec![0u8; len];
        self.inner.read_exact(&mut buf)?;
        self.offset += len;
        String::from_utf8(buf).map_err(|e| std::io::Error::new(std::io::ErrorKind::InvalidData, e))
    }
}

pub fn read_store_binary(path: &Path) -> Result<FeatureStore> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut r = ByteReader {
        inner: BufReader::new(file),
        offset: 0,
    };
    let ctx = path.display().to_string();
    let bad = |offset: usize, detail: String| Error::Malformed {
        context: format!("{ctx} (byte offset)"),
        line: offset,
        detail,
    };
    let io_bad = |offset: usize, e: std::io::Error| bad(offset, e.to_string());

    let magic: [u8; 5] = r.take().map_err(|e| io_bad(0, e))?;
    if &magic != BINARY_MAGIC {
        return Err(bad(0, "bad magic".into()));
    }
    let version = u32::from_le_bytes(r.take().map_err(|e| io_bad(r.offset, e))?);
    if version != BINARY_VERSION {
        return Err(bad(5, format!("unsupported version {version}")));
    }
    let dim = u32::from_le_bytes(r.take().map_err(|e| io_bad(r.offset, e))?) as usize;
    let count = u64::from_le_bytes(r.take().map_err(|e| io_bad(r.offset, e))?);

    let mut store = FeatureStore::new();
    for _ in 0..count {
        let at = r.offset;
        let example_id = r.string().map_err(|e| io_bad(at, e))?;
        let [tag] = r.take::<1>().map_err(|e| io_bad(at, e))?;
        let kind =
            FeatureKind::from_tag(tag).ok_or_else(|| bad(at, format!("unknown kind tag {tag}")))?;
        let extractor_tag = r.string().map_err(|e| io_bad(at, e))?;
        let [flags] = r.take::<1>().map_err(|e| io_bad(at, e))?;
        let payload = if kind.is_vector() {
            let mut v = Vec::with_capacity(dim);
            for _ in 0..dim {
                v.push(f32::from_le_bytes(r.take().map_err(|e| io_bad(at, e))?));
            }
            Payload::Vector(v)
        } else if kind == FeatureKind::CondLogprob {
            Payload::LogProb {
                logprob_sum: f64::from_le_bytes(r.take().map_err(|e| io_bad(at, e))?),
                token_count: u32::from_le_bytes(r.take().map_err(|e| io_bad(at, e))?),
            }
        } else {
            let n = u32::from_le_bytes(r.take().map_err(|e| io_bad(at, e))?);
            let mut f = Vec::with_capacity(n as usize);
            for _ in 0..n {
                let utterance_id = r.string().map_err(|e| io_bad(at, e))?;
                let logprob_sum = f64::from_le_bytes(r.take().map_err(|e| io_bad(at, e))?);
                f.push(Followup {
                    utterance_id,
                    logprob_sum,
                });
            }
            Payload::Followups(f)
        };
        store
            .insert(FeatureRecord {
                example_id,
                kind,
                payload,
                extractor_tag,
                truncated: flags & 1 == 1,
            })
            .map_err(|e| annotate(path, e))?;
    }
    let mut trailing = [0u8; 1];
    if r.inner
        .read(&mut trailing)
        .map_err(|e| io_bad(r.offset, e))?
        != 0
    {
        return Err(bad(
            r.offset,
            "trailing bytes after the declared record count".into(),
        ));
    }
    Ok(store)
}

/// One unit of work for the extractor. Texts are exactly what gets scored.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractionRequest {
    pub example_id: String,
    pub kind: FeatureKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub context_turns: Option<Vec<String>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub response_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub negative_text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub followup_utterances: Option<Vec<String>>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Manifest {
    pub requests: Vec<ExtractionRequest>,
}

impl Manifest {
    pub fn len(&self) -> usize {
        self.requests.len()
    }

    pub fn is_empty(&self) -> bool {
        self.requests.is_empty()
    }

    pub fn count(&self, kind: FeatureKind) -> usize {
        self.requests.iter().filter(|r| r.kind == kind).count()
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        jsonl::write(path, &self.requests)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Ok(Manifest {
            requests: jsonl::read(path)?,
        })
    }
}

/// Which responses of a corpus receive per-example requests.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ResponseFilter {
    #[default]
    All,
    /// Only original human responses, as used for training positives.
    Gold,
}

impl ResponseFilter {
    fn keeps(self, ex: &EvalExample) -> bool {
        match self {
            ResponseFilter::All => true,
            ResponseFilter::Gold => ex.response.source == ResponseSource::Human,
        }
    }
}

/// Builds the extraction requests for `kinds` over a corpus.
///
/// Pair and log-prob kinds get one request per kept example. Negative pairs
/// are requested once per (context, negative text). Single-text kinds get one
/// request per context and one per kept response.
pub fn emit_manifest(
    corpus: &Corpus,
    kinds: &BTreeSet<FeatureKind>,
    negative_texts: &[String],
    followups: &[String],
    filter: ResponseFilter,
) -> Result<Manifest> {
    if kinds.is_empty() {
        return Err(Error::Empty("no feature kinds requested".into()));
    }
    if kinds.contains(&FeatureKind::FollowupLogprobs) && followups.is_empty() {
        return Err(Error::InvalidArgument(
            "FOLLOWUP_LOGPROBS requested without follow-up utterances".into(),
        ));
    }
    if kinds.contains(&FeatureKind::PairNspNeg) && negative_texts.is_empty() {
        return Err(Error::InvalidArgument(
            "PAIR_NSP_NEG requested without negative texts".into(),
        ));
    }
    let groups = corpus.context_groups();
    let mut requests = Vec::new();
    let kept = |g: &crate::corpus::ContextGroup| {
        g.members
            .iter()
            .map(|&m| &corpus.examples[m])
            .filter(|e| filter.keeps(e))
            .collect::<Vec<_>>()
    };

    for &kind in kinds {
        for g in &groups {
            let members = kept(g);
            if members.is_empty() {
                continue;
            }
            let turns = members[0].context.texts();
            match kind {
                FeatureKind::PairNsp | FeatureKind::CondLogprob | FeatureKind::FollowupLogprobs => {
                    for ex in members {
                        requests.push(ExtractionRequest {
                            example_id: ex.id.clone(),
                            kind,
                            context_turns: Some(turns.clone()),
                            response_text: Some(ex.response.text.clone()),
                            negative_text: None,
                            followup_utterances: (kind == FeatureKind::FollowupLogprobs)
                                .then(|| followups.to_vec()),
                        });
                    }
                }
                FeatureKind::PairNspNeg => {
                    for (j, neg) in negative_texts.iter().enumerate() {
                        requests.push(ExtractionRequest {
                            example_id: negative_key(&g.id, j),
                            kind,
                            context_turns: Some(turns.clone()),
                            response_text: None,
                            negative_text: Some(neg.clone()),
                            followup_utterances: None,
                        });
                    }
                }
                FeatureKind::SoloNsp | FeatureKind::Maxpool | FeatureKind::AvgStatic => {
                    requests.push(ExtractionRequest {
                        example_id: context_key(&g.id),
                        kind,
                        context_turns: Some(turns.clone()),
                        response_text: None,
                        negative_text: None,
                        followup_utterances: None,
                    });
                    for ex in members {
                        requests.push(ExtractionRequest {
                            example_id: response_key(&ex.id),
                            kind,
                            context_turns: None,
                            response_text: Some(ex.response.text.clone()),
                            negative_text: None,
                            followup_utterances: None,
                        });
                    }
                }
            }
        }
    }
    Ok(Manifest { requests })
}

/// Requests for (context, shuffled negative) pairs produced by
/// [`crate::corpus::shuffle_negatives`] with `seed`.
pub fn emit_shuffled_requests(
    corpus: &Corpus,
    negatives: &[ShuffledNegative],
    seed: u64,
) -> Result<Manifest> {
    let turns_by_ctx: HashMap<String, Vec<String>> = corpus
        .context_groups()
        .into_iter()
        .map(|g| (g.id, corpus.examples[g.members[0]].context.texts()))
        .collect();
    let requests = negatives
        .iter()
        .map(|n| {
            let turns = turns_by_ctx.get(&n.context_id).ok_or_else(|| {
                Error::Inconsistent(format!("unknown context `{}`", n.context_id))
            })?;
            Ok(ExtractionRequest {
                example_id: shuffled_key(&n.context_id, seed),
                kind: FeatureKind::PairNspNeg,
                context_turns: Some(turns.clone()),
                response_text: None,
                negative_text: Some(n.negative_text.clone()),
                followup_utterances: None,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Manifest { requests })
}

/// Examples aligned with their features, plus ids that had none.
#[derive(Debug)]
pub struct Joined<'a> {
    pub pairs: Vec<(&'a EvalExample, &'a FeatureRecord)>,
    pub missing: Vec<String>,
}

/// Pairs each example with its `kind` record keyed by example id, in corpus order.
pub fn join<'a>(
    corpus: &'a Corpus,
    store: &'a FeatureStore,
    kind: FeatureKind,
    strict: bool,
) -> Result<Joined<'a>> {
    let mut pairs = Vec::with_capacity(corpus.len());
    let mut missing = Vec::new();
    for ex in &corpus.examples {
        match store.get(&ex.id, kind) {
            Some(rec) => pairs.push((ex, rec)),
            None => missing.push(ex.id.clone()),
        }
    }
    if strict && !missing.is_empty() {
        return Err(Error::MissingFeatures(missing));
    }
    Ok(Joined { pairs, missing })
}

/// The exported 2xD next-sentence-prediction classifier.
///
/// Row 0 scores "is next", row 1 scores "not next".
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NspHead {
    #[serde(rename = "D")]
    pub dim: usize,
    pub weights: Vec<Vec<f64>>,
    pub bias: Vec<f64>,
}

impl NspHead {
    pub fn validate(&self) -> Result<()> {
        if self.weights.len() != 2 || self.bias.len() != 2 {
            return Err(Error::Inconsistent(format!(
                "NSP head must have 2 weight rows and 2 biases, found {} and {}",
                self.weights.len(),
                self.bias.len()
            )));
        }
        for row in &self.weights {
            if row.len() != self.dim {
                return Err(Error::DimMismatch {
                    context: "NSP head weight row".into(),
                    expected: self.dim,
                    found: row.len(),
                });
            }
        }
        if !self
            .weights
            .iter()
            .flatten()
            .chain(&self.bias)
            .all(|x| x.is_finite())
        {
            return Err(Error::NonFinite("NSP head".into()));
        }
        Ok(())
    }

    pub fn read(path: &Path) -> Result<Self> {
        let head: NspHead = jsonl::read_json(path)?;
        head.validate()?;
        Ok(head)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        self.validate()?;
        jsonl::write_json(path, self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{make_splits, CandidateResponse, Dataset, DialogueContext, Split};

    fn humod_like(contexts: usize) -> Corpus {
        let mut examples = Vec::new();
        for c in 0..contexts {
            let ctx = DialogueContext::from_texts(&[format!("a{c}"), format!("b{c}")], 0);
            for (r, src) in [ResponseSource::Human, ResponseSource::RandomHuman]
                .into_iter()
                .enumerate()
            {
                examples.push(EvalExample {
                    id: format!("h{c}/{r}"),
                    dataset: Dataset::Humod,
                    split: Split::Test,
                    context: ctx.clone(),
                    response: CandidateResponse::new(format!("r{c}.{r}"), src, vec![3.0]),
                });
            }
        }
        make_splits(Corpus::new(Dataset::Humod, examples, "test"))
    }

    #[test]
    fn manifest_counts_for_training() {
        let corpus = humod_like(4_750).filter_split(Split::Train);
        let kinds: BTreeSet<_> = [FeatureKind::PairNsp, FeatureKind::PairNspNeg].into();
        let idk = vec!["i don't know.".to_string()];
        let m = emit_manifest(&corpus, &kinds, &idk, &[], ResponseFilter::Gold).unwrap();
        assert_eq!(m.count(FeatureKind::PairNsp), 3_750);
        assert_eq!(m.count(FeatureKind::PairNspNeg), 3_750);

        let two = vec!["i don't know.".to_string(), "i'm ok.".to_string()];
        let m = emit_manifest(&corpus, &kinds, &two, &[], ResponseFilter::Gold).unwrap();
        assert_eq!(m.count(FeatureKind::PairNspNeg), 2 * 3_750);
    }

    #[test]
    fn manifest_rejects_empty_requests() {
        let corpus = humod_like(3);
        assert!(emit_manifest(&corpus, &BTreeSet::new(), &[], &[], ResponseFilter::All).is_err());
        let kinds: BTreeSet<_> = [FeatureKind::FollowupLogprobs].into();
        assert!(emit_manifest(&corpus, &kinds, &[], &[], ResponseFilter::All).is_err());
    }

    #[test]
    fn solo_kinds_split_context_and_response() {
        let corpus = humod_like(3);
        let kinds: BTreeSet<_> = [FeatureKind::SoloNsp].into();
        let m = emit_manifest(&corpus, &kinds, &[], &[], ResponseFilter::All).unwrap();
        assert_eq!(m.len(), 3 + 6);
        assert_eq!(m.requests[0].example_id, "h0/0::ctx");
        assert_eq!(m.requests[1].example_id, "h0/0::resp");
    }

    #[test]
    fn join_reports_missing() {
        let corpus = Corpus::new(Dataset::PDd, humod_like(2).examples[..3].to_vec(), "x");
        let store = FeatureStore::from_records(vec![
            FeatureRecord::vector("h0/0", FeatureKind::PairNsp, vec![1.0, 2.0], "t"),
            FeatureRecord::vector("h1/0", FeatureKind::PairNsp, vec![1.0, 2.0], "t"),
        ])
        .unwrap();
        let j = join(&corpus, &store, FeatureKind::PairNsp, false).unwrap();
        assert_eq!(j.pairs.len(), 2);
        assert_eq!(j.missing, vec!["h0/1".to_string()]);

        let empty = FeatureStore::new();
        let j = join(&corpus, &empty, FeatureKind::PairNsp, false).unwrap();
        assert_eq!((j.pairs.len(), j.missing.len()), (0, 3));

        match join(&corpus, &store, FeatureKind::PairNsp, true) {
            Err(Error::MissingFeatures(ids)) => assert_eq!(ids, vec!["h0/1".to_string()]),
            other => panic!("expected missing-features error, got {other:?}"),
        }
    }

    #[test]
    fn store_rejects_contract_violations() {
        let mut s = FeatureStore::new();
        s.insert(FeatureRecord::vector(
            "a",
            FeatureKind::PairNsp,
            vec![0.0; 4],
            "t",
        ))
        .unwrap();
        let err = s
            .insert(FeatureRecord::vector(
                "b",
                FeatureKind::PairNsp,
                vec![0.0; 3],
                "t",
            ))
            .unwrap_err();
        assert!(matches!(
            err,
            Error::DimMismatch {
                expected: 4,
                found: 3,
                ..
            }
        ));
        let err = s
            .insert(FeatureRecord::vector(
                "a",
                FeatureKind::PairNsp,
                vec![0.0; 4],
                "t",
            ))
            .unwrap_err();
        assert!(err.to_string().contains("a / PAIR_NSP"), "{err}");
        let err = s
            .insert(FeatureRecord::vector(
                "c",
                FeatureKind::PairNsp,
                vec![f32::NAN; 4],
                "t",
            ))
            .unwrap_err();
        assert!(matches!(err, Error::NonFinite(_)));
        assert!(s.insert(FeatureRecord::logprob("a", -3.0, 0, "t")).is_err());
    }

    #[test]
    fn jsonl_values_length_must_match_dim() {
        let line = r#"{"example_id":"x","kind":"PAIR_NSP","dim":3,"values":[1.0,2.0],"extractor_tag":"t"}"#;
        let parsed: std::result::Result<FeatureRecord, _> = serde_json::from_str(line);
        assert!(parsed
            .unwrap_err()
            .to_string()
            .contains("values length 2 != dim 3"));
    }

    #[test]
    fn head_validation() {
        let head = NspHead {
            dim: 2,
            weights: vec![vec![1.0, 0.0], vec![0.0]],
            bias: vec![0.0, 0.0],
        };
        assert!(head.validate().is_err());
    }
}
