//! Ad catalog: records, shadow copies and the (primary, shadow) pair registry.
//!
//! A catalog is read from line-delimited JSON, one ad per line. Shadow ads
//! carry three extra keys (`shadow_of`, `perturbation`, `shadow_seed`) so the
//! pair registry survives a save/load cycle without a sidecar file.

mod synthetic;

use std::collections::{BTreeSet, HashMap};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

pub use synthetic::{generate_synthetic_catalog, SynthConfig};

use crate::util::fnv1a64;

/// Errors raised while loading, validating or mutating a catalog.
#[derive(Debug, thiserror::Error)]
pub enum CatalogError {
    #[error("catalog file {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: field `{field}`: {reason}")]
    Malformed { line: usize, field: String, reason: String },
    #[error("line {line}: duplicate ad_id `{ad_id}`")]
    DuplicateAdId { line: usize, ad_id: String },
    #[error("duplicate ad_id `{0}`")]
    DuplicateId(String),
    #[error("unknown ad `{0}`")]
    UnknownAd(String),
    #[error("unknown perturbation tag `{0}`")]
    UnknownPerturbation(String),
    #[error("ad `{0}` is already registered as a shadow")]
    AlreadyShadow(String),
    #[error("invalid ad `{ad_id}`: {reason}")]
    InvalidAd { ad_id: String, reason: String },
    #[error("invalid shadow pair ({primary_id}, {shadow_id}): {reason}")]
    InvalidPair { primary_id: String, shadow_id: String, reason: String },
    #[error("invalid generation config: {0}")]
    InvalidConfig(String),
}

/// One ad creative.
///
/// `latent_topics`, `true_conversion_rate` and `base_revenue_per_conversion`
/// drive the delivery simulator and relevance labels; retrievers never read
/// them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ad {
    pub ad_id: String,
    pub title: String,
    pub description: String,
    pub landing_page_text: Option<String>,
    pub advertiser_id: String,
    pub latent_topics: BTreeSet<String>,
    pub true_conversion_rate: f64,
    pub base_revenue_per_conversion: f64,
}

impl Ad {
    pub fn validate(&self) -> Result<(), CatalogError> {
        let invalid = |reason: &str| CatalogError::InvalidAd { ad_id: self.ad_id.clone(), reason: reason.to_string() };
        if self.ad_id.is_empty() {
            return Err(invalid("ad_id is empty"));
        }
        if self.title.trim().is_empty() {
            return Err(invalid("title is empty"));
        }
        if !(0.0..=1.0).contains(&self.true_conversion_rate) {
            return Err(invalid("true_conversion_rate outside [0, 1]"));
        }
        if !(self.base_revenue_per_conversion >= 0.0 && self.base_revenue_per_conversion.is_finite()) {
            return Err(invalid("base_revenue_per_conversion must be finite and >= 0"));
        }
        Ok(())
    }

    /// Title, description and landing page text, in that order.
    pub fn text_fields(&self) -> impl Iterator<Item = &str> {
        [Some(self.title.as_str()), Some(self.description.as_str()), self.landing_page_text.as_deref()]
            .into_iter()
            .flatten()
    }
}

/// How a shadow ad differs from its primary.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum Perturbation {
    /// New ad_id, byte-identical text.
    IdOnly,
    /// A neutral campaign code appended to the title.
    TokenAppend,
    /// Description sentences rotated left by one.
    SentenceReorder,
}

impl Perturbation {
    pub const ALL: [Perturbation; 3] = [Perturbation::IdOnly, Perturbation::TokenAppend, Perturbation::SentenceReorder];

    pub fn as_str(self) -> &'static str {
        match self {
            Perturbation::IdOnly => "ID_ONLY",
            Perturbation::TokenAppend => "TOKEN_APPEND",
            Perturbation::SentenceReorder => "SENTENCE_REORDER",
        }
    }
}

impl fmt::Display for Perturbation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Perturbation {
    type Err = CatalogError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Perturbation::ALL
            .into_iter()
            .find(|p| p.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| CatalogError::UnknownPerturbation(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShadowPair {
    pub primary_id: String,
    pub shadow_id: String,
    pub perturbation: Perturbation,
    pub created_seed: u64,
}

impl ShadowPair {
    pub fn pair_id(&self) -> String {
        format!("{}:{}", self.primary_id, self.shadow_id)
    }
}

/// Shadow id: primary id, the `__shadow_` marker, then the perturbation tag.
pub fn shadow_id_for(primary_id: &str, perturbation: Perturbation) -> String {
    format!("{primary_id}__shadow_{perturbation}")
}

/// Splits text into sentences at '.', '!' or '?' followed by whitespace.
///
/// Terminal punctuation stays with its sentence; surrounding whitespace is
/// trimmed and empty pieces are dropped.
pub fn split_sentences(text: &str) -> Vec<&str> {
    let mut out = Vec::new();
    let mut start = 0;
    let mut chars = text.char_indices().peekable();
    while let Some((i, c)) = chars.next() {
        if matches!(c, '.' | '!' | '?') {
            if let Some(&(_, next)) = chars.peek() {
                if next.is_whitespace() {
                    let end = i + c.len_utf8();
                    let piece = text[start..end].trim();
                    if !piece.is_empty() {
                        out.push(piece);
                    }
                    start = end;
                }
            }
        }
    }
    let tail = text[start..].trim();
    if !tail.is_empty() {
        out.push(tail);
    }
    out
}

fn rotate_sentences(text: &str) -> String {
    let mut sentences = split_sentences(text);
    if sentences.len() > 1 {
        sentences.rotate_left(1);
    }
    sentences.join(" ")
}

fn campaign_code(ad_id: &str, seed: u64) -> String {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ fnv1a64(ad_id.as_bytes()));
    format!("CMP{:05}", rng.random_range(0..100_000u32))
}

/// Builds the shadow copy of `ad` without registering it anywhere.
///
/// Deterministic in `(ad, perturbation, seed)`. Simulation-only fields are
/// copied verbatim.
pub fn perturb(ad: &Ad, perturbation: Perturbation, seed: u64) -> Ad {
    let mut shadow = ad.clone();
    shadow.ad_id = shadow_id_for(&ad.ad_id, perturbation);
    match perturbation {
        Perturbation::IdOnly => {}
        Perturbation::TokenAppend => {
            shadow.title = format!("{} {}", ad.title, campaign_code(&ad.ad_id, seed));
        }
        Perturbation::SentenceReorder => {
            shadow.description = rotate_sentences(&ad.description);
        }
    }
    shadow
}

/// The ad collection plus its pair registry.
///
/// Insertion order is preserved for deterministic iteration.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct AdCatalog {
    ads: Vec<Ad>,
    by_id: HashMap<String, usize>,
    pairs: Vec<ShadowPair>,
    shadow_index: HashMap<String, usize>,
}

impl AdCatalog {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.ads.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ads.is_empty()
    }

    pub fn ads(&self) -> &[Ad] {
        &self.ads
    }

    pub fn pairs(&self) -> &[ShadowPair] {
        &self.pairs
    }

    pub fn get(&self, ad_id: &str) -> Option<&Ad> {
        self.by_id.get(ad_id).map(|&i| &self.ads[i])
    }

    pub fn position(&self, ad_id: &str) -> Option<usize> {
        self.by_id.get(ad_id).copied()
    }

    pub fn contains(&self, ad_id: &str) -> bool {
        self.by_id.contains_key(ad_id)
    }

    /// The pair in which `ad_id` is the shadow, if any.
    pub fn pair_for_shadow(&self, ad_id: &str) -> Option<&ShadowPair> {
        self.shadow_index.get(ad_id).map(|&i| &self.pairs[i])
    }

    pub fn is_shadow(&self, ad_id: &str) -> bool {
        self.shadow_index.contains_key(ad_id)
    }

    /// Ads that are not the shadow half of any pair.
    pub fn primaries(&self) -> impl Iterator<Item = &Ad> {
        self.ads.iter().filter(|ad| !self.is_shadow(&ad.ad_id))
    }

    pub fn insert(&mut self, ad: Ad) -> Result<(), CatalogError> {
        ad.validate()?;
        if self.by_id.contains_key(&ad.ad_id) {
            return Err(CatalogError::DuplicateId(ad.ad_id));
        }
        self.by_id.insert(ad.ad_id.clone(), self.ads.len());
        self.ads.push(ad);
        Ok(())
    }

    fn register_pair(&mut self, pair: ShadowPair) -> Result<(), CatalogError> {
        let bad = |reason: &str| CatalogError::InvalidPair {
            primary_id: pair.primary_id.clone(),
            shadow_id: pair.shadow_id.clone(),
            reason: reason.to_string(),
        };
        if pair.primary_id == pair.shadow_id {
            return Err(bad("primary and shadow ids are equal"));
        }
        let primary = self.get(&pair.primary_id).ok_or_else(|| bad("primary ad missing"))?;
        let shadow = self.get(&pair.shadow_id).ok_or_else(|| bad("shadow ad missing"))?;
        if primary.latent_topics != shadow.latent_topics
            || primary.true_conversion_rate.to_bits() != shadow.true_conversion_rate.to_bits()
            || primary.base_revenue_per_conversion.to_bits() != shadow.base_revenue_per_conversion.to_bits()
        {
            return Err(bad("simulation fields differ between primary and shadow"));
        }
        if self.shadow_index.contains_key(&pair.shadow_id) {
            return Err(CatalogError::AlreadyShadow(pair.shadow_id));
        }
        self.shadow_index.insert(pair.shadow_id.clone(), self.pairs.len());
        self.pairs.push(pair);
        Ok(())
    }

    /// Creates, inserts and registers a shadow of `primary_id`.
    pub fn make_shadow(
        &mut self,
        primary_id: &str,
        perturbation: Perturbation,
        seed: u64,
    ) -> Result<(Ad, ShadowPair), CatalogError> {
        let primary = self.get(primary_id).ok_or_else(|| CatalogError::UnknownAd(primary_id.to_string()))?;
        if self.is_shadow(primary_id) {
            return Err(CatalogError::InvalidPair {
                primary_id: primary_id.to_string(),
                shadow_id: shadow_id_for(primary_id, perturbation),
                reason: "primary is itself a shadow".into(),
            });
        }
        let shadow = perturb(primary, perturbation, seed);
        let pair = ShadowPair {
            primary_id: primary_id.to_string(),
            shadow_id: shadow.ad_id.clone(),
            perturbation,
            created_seed: seed,
        };
        self.insert(shadow.clone())?;
        self.register_pair(pair.clone())?;
        Ok((shadow, pair))
    }

    /// Writes the catalog as line-delimited JSON.
    pub fn save(&self, path: impl AsRef<Path>) -> Result<(), CatalogError> {
        let path = path.as_ref();
        let io = |source| CatalogError::Io { path: path.to_path_buf(), source };
        let mut out = BufWriter::new(File::create(path).map_err(io)?);
        for ad in &self.ads {
            let mut record = match serde_json::to_value(ad).expect("Ad serializes") {
                Value::Object(map) => map,
                _ => unreachable!(),
            };
            if let Some(pair) = self.pair_for_shadow(&ad.ad_id) {
                record.insert("shadow_of".into(), Value::from(pair.primary_id.clone()));
                record.insert("perturbation".into(), Value::from(pair.perturbation.as_str()));
                record.insert("shadow_seed".into(), Value::from(pair.created_seed));
            }
            serde_json::to_writer(&mut out, &record).map_err(|e| io(e.into()))?;
            out.write_all(b"\n").map_err(io)?;
        }
        out.flush().map_err(io)
    }
}

const AD_KEYS: [&str; 8] = [
    "ad_id",
    "title",
    "description",
    "landing_page_text",
    "advertiser_id",
    "latent_topics",
    "true_conversion_rate",
    "base_revenue_per_conversion",
];
const SHADOW_KEYS: [&str; 3] = ["shadow_of", "perturbation", "shadow_seed"];

fn take_field<T: DeserializeOwned>(
    record: &mut Map<String, Value>,
    field: &str,
    line: usize,
) -> Result<T, CatalogError> {
    let value = record.remove(field).unwrap_or(Value::Null);
    serde_json::from_value(value).map_err(|e| CatalogError::Malformed {
        line,
        field: field.to_string(),
        reason: e.to_string(),
    })
}

/// Primary id, perturbation and shadow seed of a shadow line.
type ShadowKeys = (String, Perturbation, u64);

fn parse_record(text: &str, line: usize) -> Result<(Ad, Option<ShadowKeys>), CatalogError> {
    let mut record = match serde_json::from_str::<Value>(text) {
        Ok(Value::Object(map)) => map,
        Ok(_) => {
            return Err(CatalogError::Malformed {
                line,
                field: "<record>".into(),
                reason: "expected a JSON object".into(),
            })
        }
        Err(e) => return Err(CatalogError::Malformed { line, field: "<record>".into(), reason: e.to_string() }),
    };
    for key in record.keys() {
        if !AD_KEYS.contains(&key.as_str()) && !SHADOW_KEYS.contains(&key.as_str()) {
            log::warn!("line {line}: ignoring unknown key `{key}`");
        }
    }
    let ad = Ad {
        ad_id: take_field(&mut record, "ad_id", line)?,
        title: take_field(&mut record, "title", line)?,
        description: take_field(&mut record, "description", line)?,
        landing_page_text: take_field(&mut record, "landing_page_text", line)?,
        advertiser_id: take_field(&mut record, "advertiser_id", line)?,
        latent_topics: take_field(&mut record, "latent_topics", line)?,
        true_conversion_rate: take_field(&mut record, "true_conversion_rate", line)?,
        base_revenue_per_conversion: take_field(&mut record, "base_revenue_per_conversion", line)?,
    };
    let malformed = |field: &str, reason: &str| CatalogError::Malformed {
        line,
        field: field.to_string(),
        reason: reason.to_string(),
    };
    if ad.title.trim().is_empty() {
        return Err(malformed("title", "empty after trimming"));
    }
    if !(0.0..=1.0).contains(&ad.true_conversion_rate) {
        return Err(malformed("true_conversion_rate", "outside [0, 1]"));
    }
    if !(ad.base_revenue_per_conversion >= 0.0 && ad.base_revenue_per_conversion.is_finite()) {
        return Err(malformed("base_revenue_per_conversion", "must be finite and >= 0"));
    }
    if ad.ad_id.is_empty() {
        return Err(malformed("ad_id", "empty"));
    }
    let shadow_of: Option<String> = take_field(&mut record, "shadow_of", line)?;
    let shadow = match shadow_of {
        None => None,
        Some(primary) => {
            let tag: String = take_field(&mut record, "perturbation", line)?;
            let perturbation = tag.parse().map_err(|_| malformed("perturbation", &format!("unknown tag `{tag}`")))?;
            let seed: Option<u64> = take_field(&mut record, "shadow_seed", line)?;
            Some((primary, perturbation, seed.unwrap_or(0)))
        }
    };
    Ok((ad, shadow))
}

/// Reads a line-delimited JSON catalog. Blank lines are skipped.
pub fn load_catalog(path: impl AsRef<Path>) -> Result<AdCatalog, CatalogError> {
    let path = path.as_ref();
    let io = |source| CatalogError::Io { path: path.to_path_buf(), source };
    let reader = BufReader::new(File::open(path).map_err(io)?);
    let mut catalog = AdCatalog::new();
    let mut pending = Vec::new();
    for (i, text) in reader.lines().enumerate() {
        let line = i + 1;
        let text = text.map_err(io)?;
        if text.trim().is_empty() {
            continue;
        }
        let (ad, shadow) = parse_record(&text, line)?;
        if catalog.contains(&ad.ad_id) {
            return Err(CatalogError::DuplicateAdId { line, ad_id: ad.ad_id });
        }
        if let Some((primary_id, perturbation, created_seed)) = shadow {
            pending.push(ShadowPair { primary_id, shadow_id: ad.ad_id.clone(), perturbation, created_seed });
        }
        catalog.insert(ad)?;
    }
    for pair in pending {
        catalog.register_pair(pair)?;
    }
    Ok(catalog)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ad(id: &str) -> Ad {
        Ad {
            ad_id: id.into(),
            title: "Trail Running Shoes".into(),
            description: "Light sneakers for the trail. Grippy outsole! Try them today?".into(),
            landing_page_text: Some("Free returns.".into()),
            advertiser_id: "adv-7".into(),
            latent_topics: ["apparel/footwear".to_string()].into_iter().collect(),
            true_conversion_rate: 0.05,
            base_revenue_per_conversion: 12.5,
        }
    }

    fn write_lines(lines: &[String]) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        for l in lines {
            writeln!(f, "{l}").unwrap();
        }
        f
    }

    fn record(id: &str) -> String {
        serde_json::to_string(&ad(id)).unwrap()
    }

    #[test]
    fn loads_three_records_in_order() {
        let f = write_lines(&[record("a"), record("b"), record("c")]);
        let cat = load_catalog(f.path()).unwrap();
        assert_eq!(cat.len(), 3);
        let ids: Vec<_> = cat.ads().iter().map(|a| a.ad_id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
    }

    #[test]
    fn duplicate_id_names_the_line() {
        let lines: Vec<String> = ["a", "b", "c", "d", "e", "f", "b"].iter().map(|i| record(i)).collect();
        let f = write_lines(&lines);
        match load_catalog(f.path()) {
            Err(CatalogError::DuplicateAdId { line, ad_id }) => {
                assert_eq!(line, 7);
                assert_eq!(ad_id, "b");
            }
            other => panic!("expected duplicate error, got {other:?}"),
        }
    }

    #[test]
    fn empty_file_is_empty_catalog() {
        let f = write_lines(&[]);
        let cat = load_catalog(f.path()).unwrap();
        assert!(cat.is_empty());
        assert!(cat.pairs().is_empty());
    }

    #[test]
    fn missing_file_is_io_error() {
        assert!(matches!(load_catalog("/nonexistent/catalog.jsonl"), Err(CatalogError::Io { .. })));
    }

    #[test]
    fn malformed_record_names_line_and_field() {
        let mut bad: Value = serde_json::from_str(&record("b")).unwrap();
        bad["true_conversion_rate"] = Value::from("high");
        let f = write_lines(&[record("a"), bad.to_string()]);
        match load_catalog(f.path()) {
            Err(CatalogError::Malformed { line, field, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(field, "true_conversion_rate");
            }
            other => panic!("{other:?}"),
        }
        let f = write_lines(&["{not json".to_string()]);
        assert!(matches!(load_catalog(f.path()), Err(CatalogError::Malformed { line: 1, .. })));
    }

    #[test]
    fn out_of_range_rate_is_rejected() {
        let mut bad: Value = serde_json::from_str(&record("a")).unwrap();
        bad["true_conversion_rate"] = Value::from(1.5);
        let f = write_lines(&[bad.to_string()]);
        assert!(matches!(
            load_catalog(f.path()),
            Err(CatalogError::Malformed { field, .. }) if field == "true_conversion_rate"
        ));
    }

    #[test]
    fn unknown_keys_are_ignored() {
        let mut rec: Value = serde_json::from_str(&record("a")).unwrap();
        rec["campaign_budget"] = Value::from(100);
        let f = write_lines(&[rec.to_string()]);
        assert_eq!(load_catalog(f.path()).unwrap().len(), 1);
    }

    #[test]
    fn shadow_is_deterministic() {
        let a = ad("ad-1");
        let s1 = perturb(&a, Perturbation::TokenAppend, 42);
        let s2 = perturb(&a, Perturbation::TokenAppend, 42);
        assert_eq!(serde_json::to_vec(&s1).unwrap(), serde_json::to_vec(&s2).unwrap());
        assert_eq!(s1.ad_id, "ad-1__shadow_TOKEN_APPEND");
        assert!(s1.title.starts_with("Trail Running Shoes CMP"));
    }

    #[test]
    fn id_only_keeps_text() {
        let a = ad("ad-1");
        for seed in [0, 1, 99] {
            let s = perturb(&a, Perturbation::IdOnly, seed);
            assert_ne!(s.ad_id, a.ad_id);
            assert_eq!(s.title, a.title);
            assert_eq!(s.description, a.description);
            assert_eq!(s.landing_page_text, a.landing_page_text);
            assert_eq!(s.advertiser_id, a.advertiser_id);
        }
    }

    #[test]
    fn sentence_reorder_preserves_sentence_multiset() {
        let a = ad("ad-1");
        let s = perturb(&a, Perturbation::SentenceReorder, 7);
        assert_ne!(s.description, a.description);
        // Independent split: scan for terminators followed by a space.
        fn naive_split(t: &str) -> Vec<String> {
            let mut out = Vec::new();
            let mut cur = String::new();
            let chars: Vec<char> = t.chars().collect();
            for (i, &c) in chars.iter().enumerate() {
                cur.push(c);
                let boundary = matches!(c, '.' | '!' | '?') && chars.get(i + 1).is_some_and(|n| n.is_whitespace());
                if boundary {
                    out.push(cur.trim().to_string());
                    cur.clear();
                }
            }
            if !cur.trim().is_empty() {
                out.push(cur.trim().to_string());
            }
            out.sort();
            out
        }
        assert_eq!(naive_split(&s.description), naive_split(&a.description));
        assert_eq!(s.description, "Grippy outsole! Try them today? Light sneakers for the trail.");
    }

    #[test]
    fn sentence_split_rules() {
        assert_eq!(split_sentences("One. Two!  Three?"), ["One.", "Two!", "Three?"]);
        assert_eq!(split_sentences("v1.2 is out. Yes"), ["v1.2 is out.", "Yes"]);
        assert!(split_sentences("   ").is_empty());
        assert_eq!(split_sentences("Only one"), ["Only one"]);
    }

    #[test]
    fn perturbation_tags_parse() {
        assert_eq!("token_append".parse::<Perturbation>().unwrap(), Perturbation::TokenAppend);
        assert!(matches!("CHANGE_IMAGE".parse::<Perturbation>(), Err(CatalogError::UnknownPerturbation(_))));
    }

    #[test]
    fn make_shadow_registers_pair_and_round_trips() {
        let mut cat = AdCatalog::new();
        cat.insert(ad("ad-1")).unwrap();
        cat.insert(ad("ad-2")).unwrap();
        let (shadow, pair) = cat.make_shadow("ad-1", Perturbation::SentenceReorder, 3).unwrap();
        assert_eq!(pair.shadow_id, shadow.ad_id);
        assert!(cat.is_shadow(&shadow.ad_id));
        assert_eq!(cat.primaries().count(), 2);
        assert!(cat.make_shadow("ad-1", Perturbation::SentenceReorder, 4).is_err());
        assert!(matches!(cat.make_shadow("nope", Perturbation::IdOnly, 1), Err(CatalogError::UnknownAd(_))));

        let f = tempfile::NamedTempFile::new().unwrap();
        cat.save(f.path()).unwrap();
        let back = load_catalog(f.path()).unwrap();
        assert_eq!(back, cat);
    }

    #[test]
    fn shadow_sim_params_must_match() {
        let mut tampered = perturb(&ad("ad-1"), Perturbation::IdOnly, 0);
        tampered.true_conversion_rate = 0.9;
        let mut rec: Value = serde_json::to_value(&tampered).unwrap();
        rec["shadow_of"] = Value::from("ad-1");
        rec["perturbation"] = Value::from("ID_ONLY");
        let f = write_lines(&[record("ad-1"), rec.to_string()]);
        assert!(matches!(load_catalog(f.path()), Err(CatalogError::InvalidPair { .. })));
    }
}
