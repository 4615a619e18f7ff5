//! Semantic metadata extraction.
//!
//! Turns ad text into [`SemanticMetadata`]: scored categories, brand /
//! product / contextual attributes, phrases and tokens. Two extractors share
//! the output type: a deterministic keyword extractor ([`extract_rule_based`])
//! and an HTTP client for an instruction-tuned model endpoint
//! ([`llm::extract_llm`]).

pub mod llm;
mod rules;
mod taxonomy;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::sync::OnceLock;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use unicode_normalization::UnicodeNormalization;

use crate::catalog::{split_sentences, Ad};

pub use rules::{extract_rule_based, RuleExtractor, DEFAULT_MAX_CATEGORIES};
pub use taxonomy::{CategoryDef, Taxonomy};

/// Longest phrase, in tokens, produced by default.
pub const DEFAULT_PHRASE_MAX: usize = 3;

const STOPWORDS: &str = include_str!("../../data/stopwords.txt");

#[derive(Debug, thiserror::Error)]
pub enum ExtractError {
    #[error("taxonomy is empty")]
    EmptyTaxonomy,
    #[error("invalid taxonomy: {0}")]
    InvalidTaxonomy(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("metadata cache line {line}: {reason}")]
    Cache { line: usize, reason: String },
    #[error("invalid extractor config: {0}")]
    InvalidConfig(String),
    #[error("LLM endpoint {url} unreachable: {reason}")]
    EndpointUnreachable { url: String, reason: String },
    #[error("LLM endpoint {url} timed out after {timeout:?}")]
    Timeout { url: String, timeout: Duration },
    #[error("LLM endpoint {url} answered HTTP {status}")]
    EndpointStatus { url: String, status: u16 },
}

/// Output of either extractor for one ad.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SemanticMetadata {
    pub ad_id: String,
    /// Category label to score in (0, 1].
    pub categories: BTreeMap<String, f64>,
    pub brand_attrs: BTreeSet<String>,
    pub product_attrs: BTreeSet<String>,
    pub contextual_attrs: BTreeSet<String>,
    pub phrases: BTreeSet<String>,
    pub tokens: BTreeSet<String>,
    #[serde(default)]
    pub caption: Option<String>,
    /// Set when no category matched the ad.
    #[serde(default)]
    pub low_coverage: bool,
}

impl SemanticMetadata {
    /// Multi-token contextual attributes, used as the phrase side of the
    /// contextual fuzzy match.
    pub fn contextual_phrases(&self) -> BTreeSet<String> {
        self.contextual_attrs.iter().map(|a| token_sequence(a).join(" ")).filter(|p| p.contains(' ')).collect()
    }

    /// Normalized tokens of all contextual attributes.
    pub fn contextual_tokens(&self) -> BTreeSet<String> {
        self.contextual_attrs.iter().flat_map(|a| tokenize(a)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum ExtractorMode {
    RuleBased,
    LlmEndpoint,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtractorConfig {
    pub mode: ExtractorMode,
    pub endpoint_url: Option<String>,
    pub prompt_template_path: Option<PathBuf>,
    pub max_categories: usize,
    pub batch_size: usize,
    #[serde(with = "duration_ms")]
    pub timeout: Duration,
    pub max_in_flight: usize,
}

impl Default for ExtractorConfig {
    fn default() -> Self {
        Self {
            mode: ExtractorMode::RuleBased,
            endpoint_url: None,
            prompt_template_path: None,
            max_categories: DEFAULT_MAX_CATEGORIES,
            batch_size: 16,
            timeout: Duration::from_secs(30),
            max_in_flight: 4,
        }
    }
}

impl ExtractorConfig {
    pub fn validate(&self) -> Result<(), ExtractError> {
        let bad = |m: &str| Err(ExtractError::InvalidConfig(m.to_string()));
        if self.max_categories == 0 {
            return bad("max_categories must be >= 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if self.max_in_flight == 0 {
            return bad("max_in_flight must be >= 1");
        }
        if self.mode == ExtractorMode::LlmEndpoint && self.endpoint_url.is_none() {
            return bad("LLM mode requires endpoint_url");
        }
        Ok(())
    }
}

mod duration_ms {
    use std::time::Duration;

    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

fn normalized_pieces(text: &str) -> Vec<String> {
    let normalized = text.nfkc().collect::<String>().to_lowercase();
    normalized.split(|c: char| !c.is_alphanumeric()).filter(|t| t.chars().count() >= 2).map(str::to_string).collect()
}

/// Ordered normalized tokens: NFKC, lowercase, split on non-alphanumeric
/// runs, tokens shorter than two characters dropped. Duplicates kept.
pub fn token_sequence(text: &str) -> Vec<String> {
    normalized_pieces(text)
}

/// Normalized token set of `text`.
pub fn tokenize(text: &str) -> BTreeSet<String> {
    normalized_pieces(text).into_iter().collect()
}

pub fn stopwords() -> &'static BTreeSet<String> {
    static SET: OnceLock<BTreeSet<String>> = OnceLock::new();
    SET.get_or_init(|| {
        STOPWORDS.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')).map(str::to_string).collect()
    })
}

/// Contiguous n-grams, 2 <= n <= `n_max`, of the normalized token sequence.
///
/// Stopwords end a run rather than being skipped, so every phrase is also a
/// contiguous n-gram of the original token sequence.
pub fn extract_phrases(text: &str, n_max: usize) -> BTreeSet<String> {
    let stop = stopwords();
    let tokens = token_sequence(text);
    let mut out = BTreeSet::new();
    for run in tokens.split(|t| stop.contains(t)) {
        for n in 2..=n_max.min(run.len()) {
            for gram in run.windows(n) {
                out.insert(gram.join(" "));
            }
        }
    }
    out
}

/// Phrases of every text field, taken sentence by sentence.
pub(crate) fn ad_phrases(ad: &Ad, n_max: usize) -> BTreeSet<String> {
    ad.text_fields().flat_map(split_sentences).flat_map(|s| extract_phrases(s, n_max)).collect()
}

pub(crate) fn ad_tokens(ad: &Ad) -> BTreeSet<String> {
    ad.text_fields().flat_map(tokenize).collect()
}

/// Writes one metadata record per line.
pub fn write_metadata(path: impl AsRef<Path>, records: &[SemanticMetadata]) -> Result<(), ExtractError> {
    let path = path.as_ref();
    let io = |source| ExtractError::Io { path: path.to_path_buf(), source };
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    for r in records {
        serde_json::to_writer(&mut out, r).map_err(|e| io(e.into()))?;
        out.write_all(b"\n").map_err(io)?;
    }
    out.flush().map_err(io)
}

pub fn read_metadata(path: impl AsRef<Path>) -> Result<Vec<SemanticMetadata>, ExtractError> {
    let path = path.as_ref();
    let io = |source| ExtractError::Io { path: path.to_path_buf(), source };
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut out = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(io)?;
        if line.trim().is_empty() {
            continue;
        }
        let rec =
            serde_json::from_str(&line).map_err(|e| ExtractError::Cache { line: i + 1, reason: e.to_string() })?;
        out.push(rec);
    }
    Ok(out)
}
