//! Raw documents, text preprocessing and coupled text pair construction.
//!
//! A document is split into a former part `f` and a latter part `b`; the two
//! sides of one document form a coupled pair. The split is either at a named
//! part seam (e.g. title|abstract) or at a token-level percentage of the
//! concatenated parts.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::sync::OnceLock;

use log::warn;
use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::exec::Execution;

pub const CORPUS_FORMAT: &str = "ctpe-corpus/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Candidate,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::Candidate => f.write_str("candidate"),
            Split::Test => f.write_str("test"),
        }
    }
}

/// A document as it appears in a raw corpus file.
#[derive(Debug, Clone, PartialEq)]
pub struct RawDocument {
    pub id: String,
    /// Named text fields in declared part order.
    pub parts: Vec<(String, String)>,
    pub groundtruth: Option<BTreeSet<String>>,
    pub split: Split,
}

impl RawDocument {
    /// Serializes to one corpus line. Parts are written in their stored order.
    pub fn to_json_line(&self) -> String {
        let mut parts = serde_json::Map::new();
        for (name, text) in &self.parts {
            parts.insert(name.clone(), Value::String(text.clone()));
        }
        let mut obj = serde_json::Map::new();
        obj.insert("id".into(), Value::String(self.id.clone()));
        obj.insert("parts".into(), Value::Object(parts));
        if let Some(gt) = &self.groundtruth {
            obj.insert(
                "groundtruth".into(),
                Value::Array(gt.iter().cloned().map(Value::String).collect()),
            );
        }
        obj.insert("split".into(), Value::String(self.split.to_string()));
        Value::Object(obj).to_string()
    }
}

/// A preprocessed document: the concatenated token list of all parts plus
/// the offsets where each part begins.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenizedDocument {
    pub id: String,
    pub tokens: Vec<String>,
    pub boundaries: Vec<usize>,
    pub split: Split,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub groundtruth: Option<BTreeSet<String>>,
}

impl TokenizedDocument {
    pub fn from_raw(raw: &RawDocument) -> Self {
        let mut tokens = Vec::new();
        let mut boundaries = Vec::with_capacity(raw.parts.len());
        for (_, text) in &raw.parts {
            boundaries.push(tokens.len());
            tokens.extend(preprocess_text(text));
        }
        TokenizedDocument {
            id: raw.id.clone(),
            tokens,
            boundaries,
            split: raw.split,
            groundtruth: raw.groundtruth.clone(),
        }
    }

    pub fn part_count(&self) -> usize {
        self.boundaries.len()
    }

    /// Tokens of part `index`.
    pub fn part(&self, index: usize) -> &[String] {
        let start = self.boundaries[index];
        let end = self
            .boundaries
            .get(index + 1)
            .copied()
            .unwrap_or(self.tokens.len());
        &self.tokens[start..end]
    }
}

/// Where to cut a document into its former and latter parts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase")]
pub enum SegmentationSpec {
    /// Cut at the seam before part `boundary` (1-based seam index: the
    /// latter side starts with part number `boundary`, counting from 0).
    Meaningful { boundary: usize },
    /// Cut after `floor(percent * n)` tokens of the concatenated parts.
    Percent { percent: f64 },
}

impl Default for SegmentationSpec {
    fn default() -> Self {
        SegmentationSpec::Meaningful { boundary: 1 }
    }
}

impl SegmentationSpec {
    pub fn percent(percent: f64) -> Result<Self> {
        if !(percent > 0.0 && percent < 1.0) {
            return Err(Error::Config(format!(
                "segmentation percent must lie in (0, 1), got {percent}"
            )));
        }
        Ok(SegmentationSpec::Percent { percent })
    }

    /// Parses `meaningful`, `meaningful:<part name>`, `0.4` or `40%`.
    ///
    /// Part names are resolved against `part_order`.
    pub fn parse(text: &str, part_order: &[String]) -> Result<Self> {
        let text = text.trim();
        if text == "meaningful" || text == "m" {
            return Ok(SegmentationSpec::Meaningful { boundary: 1 });
        }
        if let Some(name) = text.strip_prefix("meaningful:") {
            return match part_order.iter().position(|p| p == name) {
                Some(i) if i > 0 => Ok(SegmentationSpec::Meaningful { boundary: i }),
                _ => Err(Error::UnknownBoundary(name.to_string())),
            };
        }
        let value = match text.strip_suffix('%') {
            Some(p) => p.trim().parse::<f64>().map(|v| v / 100.0),
            None => text.parse::<f64>(),
        }
        .map_err(|_| Error::Config(format!("unrecognized segmentation `{text}`")))?;
        SegmentationSpec::percent(value)
    }

    /// Short label used in reports (`m`, `20%`, ...).
    pub fn label(&self) -> String {
        match self {
            SegmentationSpec::Meaningful { .. } => "m".to_string(),
            SegmentationSpec::Percent { percent } => format!("{}%", (percent * 100.0).round()),
        }
    }
}

/// Former/latter token sequences of one document.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CoupledPair {
    pub doc_id: String,
    pub f: Vec<String>,
    pub b: Vec<String>,
}

impl CoupledPair {
    /// All tokens of the pair, former side first.
    pub fn full_tokens(&self) -> impl Iterator<Item = &String> {
        self.f.iter().chain(self.b.iter())
    }
}

fn tag_pattern() -> &'static Regex {
    static TAG: OnceLock<Regex> = OnceLock::new();
    TAG.get_or_init(|| Regex::new(r"<[^<>]*>").expect("valid tag pattern"))
}

/// Lowercase, strip HTML tags, restore HTML escapes, split on punctuation
/// and whitespace, and drop tokens that contain no letter.
pub fn preprocess_text(raw: &str) -> Vec<String> {
    let lowered = raw.to_lowercase();
    let untagged = tag_pattern().replace_all(&lowered, " ");
    // Restored escapes may spell uppercase letters (`&#65;`).
    let restored = html_escape::decode_html_entities(&untagged).to_lowercase();
    restored
        .split(|c: char| !c.is_alphanumeric())
        .filter(|t| t.chars().any(char::is_alphabetic))
        .map(str::to_string)
        .collect()
}

/// Splits raw text into sentences on terminal punctuation (`.`, `!`, `?`).
pub fn split_sentences(raw: &str) -> Vec<String> {
    raw.split(['.', '!', '?'])
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(str::to_string)
        .collect()
}

/// Cuts `doc` into a coupled pair and truncates each side to its first
/// `l_max` tokens.
pub fn segment(doc: &TokenizedDocument, spec: SegmentationSpec, l_max: usize) -> Result<CoupledPair> {
    let cut = match spec {
        SegmentationSpec::Meaningful { boundary } => {
            if boundary == 0 || boundary >= doc.part_count() {
                return Err(Error::UnknownBoundary(format!(
                    "seam {boundary} of a {}-part document",
                    doc.part_count()
                )));
            }
            doc.boundaries[boundary]
        }
        SegmentationSpec::Percent { percent } => {
            if !(percent > 0.0 && percent < 1.0) {
                return Err(Error::Config(format!(
                    "segmentation percent must lie in (0, 1), got {percent}"
                )));
            }
            // Tolerate representation error such as 0.29 * 100 = 28.999...
            (percent * doc.tokens.len() as f64 + 1e-9).floor() as usize
        }
    };
    let (f, b) = doc.tokens.split_at(cut.min(doc.tokens.len()));
    if f.is_empty() || b.is_empty() {
        return Err(Error::EmptySide {
            doc_id: doc.id.clone(),
        });
    }
    Ok(CoupledPair {
        doc_id: doc.id.clone(),
        f: f.iter().take(l_max).cloned().collect(),
        b: b.iter().take(l_max).cloned().collect(),
    })
}

/// Preprocessed, segmented corpus keyed by document id.
#[derive(Debug, Clone, PartialEq)]
pub struct CorpusStore {
    pub part_order: Vec<String>,
    pub segmentation: SegmentationSpec,
    pub l_max: usize,
    pub documents: BTreeMap<String, TokenizedDocument>,
    /// Documents whose segmentation produced an empty side have no pair.
    pub pairs: BTreeMap<String, CoupledPair>,
}

impl CorpusStore {
    pub fn from_documents(
        part_order: Vec<String>,
        documents: Vec<TokenizedDocument>,
        segmentation: SegmentationSpec,
        l_max: usize,
    ) -> Result<Self> {
        if l_max == 0 {
            return Err(Error::Config("l_max must be at least 1".into()));
        }
        let mut map = BTreeMap::new();
        for doc in documents {
            if map.contains_key(&doc.id) {
                return Err(Error::DuplicateId(doc.id));
            }
            map.insert(doc.id.clone(), doc);
        }
        let mut store = CorpusStore {
            part_order,
            segmentation,
            l_max,
            documents: map,
            pairs: BTreeMap::new(),
        };
        store.build_pairs()?;
        Ok(store)
    }

    fn build_pairs(&mut self) -> Result<()> {
        self.pairs.clear();
        for doc in self.documents.values() {
            match segment(doc, self.segmentation, self.l_max) {
                Ok(pair) => {
                    self.pairs.insert(doc.id.clone(), pair);
                }
                Err(Error::EmptySide { doc_id }) => {
                    warn!("dropping document `{doc_id}`: empty side after segmentation");
                }
                Err(e) => return Err(e),
            }
        }
        Ok(())
    }

    /// The same documents cut at a different position.
    pub fn resegment(&self, segmentation: SegmentationSpec, l_max: usize) -> Result<Self> {
        let mut store = CorpusStore {
            part_order: self.part_order.clone(),
            segmentation,
            l_max,
            documents: self.documents.clone(),
            pairs: BTreeMap::new(),
        };
        store.build_pairs()?;
        Ok(store)
    }

    pub fn dropped(&self) -> usize {
        self.documents.len() - self.pairs.len()
    }

    pub fn count(&self, split: Split) -> usize {
        self.documents.values().filter(|d| d.split == split).count()
    }

    /// Ids of paired documents in the given split, ascending.
    pub fn pair_ids(&self, split: Split) -> Vec<&str> {
        self.pairs
            .keys()
            .filter(|id| self.documents[id.as_str()].split == split)
            .map(String::as_str)
            .collect()
    }

    /// Groundtruth of every test document that declares one.
    pub fn groundtruth(&self) -> BTreeMap<String, BTreeSet<String>> {
        self.documents
            .values()
            .filter(|d| d.split == Split::Test)
            .filter_map(|d| d.groundtruth.clone().map(|g| (d.id.clone(), g)))
            .collect()
    }

    /// Writes the preprocessed corpus as JSON lines: a header followed by one
    /// record per document (ascending id).
    pub fn save(&self, path: &Path) -> Result<()> {
        let file = File::create(path).map_err(|e| Error::io(path, e))?;
        let mut out = BufWriter::new(file);
        self.write_to(&mut out).map_err(|e| Error::io(path, e))?;
        out.flush().map_err(|e| Error::io(path, e))
    }

    pub fn write_to(&self, out: &mut impl Write) -> std::io::Result<()> {
        let header = StoreHeader {
            format: CORPUS_FORMAT.to_string(),
            part_order: self.part_order.clone(),
            segmentation: self.segmentation,
            l_max: self.l_max,
            documents: self.documents.len(),
            dropped: self.dropped(),
        };
        writeln!(out, "{}", serde_json::to_string(&header)?)?;
        for doc in self.documents.values() {
            let record = StoreRecord {
                doc: doc.clone(),
                pair: self.pairs.get(&doc.id).map(|p| (p.f.clone(), p.b.clone())),
            };
            writeln!(out, "{}", serde_json::to_string(&record)?)?;
        }
        Ok(())
    }

    /// Reads a file written by [`CorpusStore::save`].
    pub fn load(path: &Path) -> Result<Self> {
        let file = File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let header_line = lines
            .next()
            .ok_or_else(|| Error::parse(1, "empty corpus file"))?
            .map_err(|e| Error::io(path, e))?;
        let header: StoreHeader =
            serde_json::from_str(&header_line).map_err(|e| Error::parse(1, e.to_string()))?;
        if header.format != CORPUS_FORMAT {
            return Err(Error::Format(format!(
                "expected corpus format `{CORPUS_FORMAT}`, found `{}`",
                header.format
            )));
        }
        let mut documents = BTreeMap::new();
        let mut pairs = BTreeMap::new();
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: StoreRecord =
                serde_json::from_str(&line).map_err(|e| Error::parse(i + 2, e.to_string()))?;
            let id = record.doc.id.clone();
            if let Some((f, b)) = record.pair {
                pairs.insert(id.clone(), CoupledPair { doc_id: id.clone(), f, b });
            }
            if documents.insert(id.clone(), record.doc).is_some() {
                return Err(Error::DuplicateId(id));
            }
        }
        Ok(CorpusStore {
            part_order: header.part_order,
            segmentation: header.segmentation,
            l_max: header.l_max,
            documents,
            pairs,
        })
    }
}

#[derive(Serialize, Deserialize)]
struct StoreHeader {
    format: String,
    part_order: Vec<String>,
    segmentation: SegmentationSpec,
    l_max: usize,
    documents: usize,
    dropped: usize,
}

#[derive(Serialize, Deserialize)]
struct StoreRecord {
    #[serde(flatten)]
    doc: TokenizedDocument,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pair: Option<(Vec<String>, Vec<String>)>,
}

/// Parses a raw corpus: an optional header line `{"part_order": [...]}`
/// followed by one JSON document per line.
///
/// Part order comes from `part_order` if given, else the header, else the
/// key order of the first document.
pub fn parse_raw_corpus(
    reader: impl BufRead,
    part_order: Option<&[String]>,
) -> Result<(Vec<String>, Vec<RawDocument>)> {
    let mut lines = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::parse(i + 1, e.to_string()))?;
        if !line.trim().is_empty() {
            lines.push((i + 1, line));
        }
    }

    let mut order: Option<Vec<String>> = part_order.map(<[String]>::to_vec);
    let mut body = &lines[..];
    if let Some((lineno, first)) = lines.first() {
        let value: Value =
            serde_json::from_str(first).map_err(|e| Error::parse(*lineno, e.to_string()))?;
        if let Some(declared) = value.get("part_order") {
            let declared: Vec<String> = serde_json::from_value(declared.clone())
                .map_err(|e| Error::parse(*lineno, format!("part_order: {e}")))?;
            order.get_or_insert(declared);
            body = &lines[1..];
        }
    }

    let parsed = Execution::Parallel.map(body, |(lineno, line)| parse_raw_line(*lineno, line));
    let mut docs = Vec::with_capacity(parsed.len());
    for doc in parsed {
        docs.push(doc?);
    }

    let order = match order {
        Some(o) => o,
        None => docs
            .first()
            .map(|d| d.parts.iter().map(|(n, _)| n.clone()).collect())
            .unwrap_or_default(),
    };
    if order.is_empty() {
        return Err(Error::Config("corpus declares no parts".into()));
    }

    let mut seen = BTreeSet::new();
    for (doc, (lineno, _)) in docs.iter_mut().zip(body) {
        if !seen.insert(doc.id.clone()) {
            return Err(Error::DuplicateId(doc.id.clone()));
        }
        let mut named: BTreeMap<String, String> = doc.parts.drain(..).collect();
        for name in order.iter() {
            let text = named.remove(name).unwrap_or_default();
            doc.parts.push((name.clone(), text));
        }
        if let Some(extra) = named.keys().next() {
            return Err(Error::parse(
                *lineno,
                format!("part `{extra}` is not in the declared part order"),
            ));
        }
        if doc.parts.iter().all(|(_, t)| t.trim().is_empty()) {
            return Err(Error::parse(*lineno, "document has no nonempty part"));
        }
    }
    Ok((order, docs))
}

fn parse_raw_line(lineno: usize, line: &str) -> Result<RawDocument> {
    #[derive(Deserialize)]
    struct Line {
        id: String,
        parts: serde_json::Map<String, Value>,
        #[serde(default)]
        groundtruth: Option<Vec<String>>,
        #[serde(default)]
        split: Option<Split>,
    }
    let parsed: Line = serde_json::from_str(line).map_err(|e| Error::parse(lineno, e.to_string()))?;
    if parsed.id.is_empty() {
        return Err(Error::parse(lineno, "empty document id"));
    }
    let mut parts = Vec::with_capacity(parsed.parts.len());
    for (name, value) in parsed.parts {
        match value {
            Value::String(s) => parts.push((name, s)),
            Value::Null => parts.push((name, String::new())),
            _ => return Err(Error::parse(lineno, format!("part `{name}` is not a string"))),
        }
    }
    Ok(RawDocument {
        id: parsed.id,
        parts,
        groundtruth: parsed.groundtruth.map(|g| g.into_iter().collect()),
        split: parsed.split.unwrap_or(Split::Candidate),
    })
}

/// Loads, preprocesses and segments a raw corpus file.
pub fn load_corpus(
    path: &Path,
    spec: SegmentationSpec,
    l_max: usize,
    part_order: Option<&[String]>,
) -> Result<CorpusStore> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    let (order, raw) = parse_raw_corpus(BufReader::new(file), part_order)?;
    corpus_from_raw(order, &raw, spec, l_max)
}

pub fn corpus_from_raw(
    part_order: Vec<String>,
    raw: &[RawDocument],
    spec: SegmentationSpec,
    l_max: usize,
) -> Result<CorpusStore> {
    let docs = Execution::Parallel.map(raw, TokenizedDocument::from_raw);
    let store = CorpusStore::from_documents(part_order, docs, spec, l_max)?;
    if store.dropped() > 0 {
        warn!("{} document(s) dropped for an empty side", store.dropped());
    }
    Ok(store)
}
