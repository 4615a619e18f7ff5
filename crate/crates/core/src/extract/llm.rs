//! Client for an external model endpoint that returns structured ad metadata.
//!
//! Wire protocol (JSON over HTTP POST to `endpoint_url`):
//!
//! ```text
//! request:  {"requests":  [{"ad_id": "...", "prompt": "..."}, ...]}
//! response: {"responses": [{"ad_id": "...", "output": <object or JSON text>}, ...]}
//! output:   {"categories": [{"label": "...", "score": 0.7}],
//!            "brand": [...], "product": [...], "contextual": [...], "caption": "..."}
//! ```
//!
//! One request is sent per `batch_size` slice with at most `max_in_flight`
//! requests outstanding. Results come back in input order. Outputs that fail
//! schema validation are retried once, then reported per ad.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::time::Duration;

use futures::stream::{self, StreamExt};
use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::{
    ad_phrases, ad_tokens, tokenize, ExtractError, ExtractorConfig, ExtractorMode, SemanticMetadata, DEFAULT_PHRASE_MAX,
};
use crate::catalog::Ad;

const DEFAULT_TEMPLATE: &str = include_str!("../../data/prompt_template.txt");

/// A per-ad failure that did not abort the batch.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
#[error("ad `{ad_id}`: {reason}")]
pub struct AdExtractError {
    pub ad_id: String,
    pub reason: String,
}

#[derive(Debug)]
pub struct LlmOutcome {
    /// One entry per input ad, in input order.
    pub results: Vec<Result<SemanticMetadata, AdExtractError>>,
    /// Non-fatal repairs such as clamped scores.
    pub warnings: Vec<String>,
}

#[derive(Serialize)]
struct PromptItem<'a> {
    ad_id: &'a str,
    prompt: String,
}

#[derive(Serialize)]
struct EndpointRequest<'a> {
    requests: Vec<PromptItem<'a>>,
}

#[derive(Deserialize)]
struct EndpointResponse {
    responses: Vec<ResponseItem>,
}

#[derive(Deserialize)]
struct ResponseItem {
    #[serde(default)]
    ad_id: Option<String>,
    output: Value,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct ModelOutput {
    categories: Vec<ModelCategory>,
    #[serde(default)]
    brand: Vec<String>,
    #[serde(default)]
    product: Vec<String>,
    #[serde(default)]
    contextual: Vec<String>,
    #[serde(default)]
    caption: Option<String>,
}

#[derive(Deserialize)]
struct ModelCategory {
    label: String,
    score: f64,
}

/// Fills `{{title}}`, `{{description}}`, `{{landing_page_text}}` and `{{ad_id}}`.
pub fn render_prompt(template: &str, ad: &Ad) -> String {
    template
        .replace("{{title}}", &ad.title)
        .replace("{{description}}", &ad.description)
        .replace("{{landing_page_text}}", ad.landing_page_text.as_deref().unwrap_or(""))
        .replace("{{ad_id}}", &ad.ad_id)
}

fn strip_code_fence(text: &str) -> &str {
    let t = text.trim();
    let Some(body) = t.strip_prefix("```") else {
        return t;
    };
    let body = body.strip_prefix("json").unwrap_or(body);
    body.strip_suffix("```").unwrap_or(body).trim()
}

fn normalize_attrs(values: Vec<String>) -> BTreeSet<String> {
    values.into_iter().map(|v| v.trim().to_lowercase()).filter(|v| !v.is_empty()).collect()
}

/// Validates one model output and converts it to metadata for `ad`.
fn parse_output(
    ad: &Ad,
    output: Value,
    max_categories: usize,
    warnings: &mut Vec<String>,
) -> Result<SemanticMetadata, String> {
    let output = match output {
        Value::String(text) => {
            serde_json::from_str(strip_code_fence(&text)).map_err(|e| format!("output is not valid JSON: {e}"))?
        }
        other => other,
    };
    let parsed: ModelOutput = serde_json::from_value(output).map_err(|e| format!("schema violation: {e}"))?;

    let mut scores: BTreeMap<String, f64> = BTreeMap::new();
    for cat in parsed.categories {
        let label = cat.label.trim().to_string();
        if label.is_empty() {
            return Err("category with empty label".into());
        }
        let score = if cat.score > 1.0 {
            warnings.push(format!("ad `{}`: score {} for `{label}` clamped to 1.0", ad.ad_id, cat.score));
            1.0
        } else if cat.score > 0.0 {
            cat.score
        } else {
            warnings.push(format!("ad `{}`: non-positive score {} for `{label}` dropped", ad.ad_id, cat.score));
            continue;
        };
        let slot = scores.entry(label).or_insert(score);
        *slot = slot.max(score);
    }
    let mut ranked: Vec<(String, f64)> = scores.into_iter().collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(max_categories);
    let categories: BTreeMap<String, f64> = ranked.into_iter().collect();

    let brand_attrs = normalize_attrs(parsed.brand);
    let product_attrs = normalize_attrs(parsed.product);
    let contextual_attrs = normalize_attrs(parsed.contextual);
    let mut tokens = ad_tokens(ad);
    for attr in brand_attrs.iter().chain(&product_attrs).chain(&contextual_attrs) {
        tokens.extend(tokenize(attr));
    }
    Ok(SemanticMetadata {
        ad_id: ad.ad_id.clone(),
        low_coverage: categories.is_empty(),
        categories,
        brand_attrs,
        product_attrs,
        contextual_attrs,
        phrases: ad_phrases(ad, DEFAULT_PHRASE_MAX),
        tokens,
        caption: parsed.caption.map(|c| c.trim().to_string()).filter(|c| !c.is_empty()),
    })
}

struct Client<'a> {
    http: reqwest::Client,
    url: &'a str,
    template: &'a str,
    timeout: Duration,
    max_categories: usize,
}

impl Client<'_> {
    /// Sends one slice. `Ok(None)` means the envelope itself was unusable.
    async fn send(&self, ads: &[&Ad]) -> Result<Option<Vec<Option<Value>>>, ExtractError> {
        let body = EndpointRequest {
            requests: ads
                .iter()
                .map(|ad| PromptItem { ad_id: &ad.ad_id, prompt: render_prompt(self.template, ad) })
                .collect(),
        };
        let transport = |e: reqwest::Error| {
            if e.is_timeout() {
                ExtractError::Timeout { url: self.url.to_string(), timeout: self.timeout }
            } else {
                ExtractError::EndpointUnreachable { url: self.url.to_string(), reason: e.to_string() }
            }
        };
        let resp = self.http.post(self.url).json(&body).send().await.map_err(transport)?;
        let status = resp.status();
        if !status.is_success() {
            return Err(ExtractError::EndpointStatus { url: self.url.to_string(), status: status.as_u16() });
        }
        let bytes = resp.bytes().await.map_err(transport)?;
        let Ok(envelope) = serde_json::from_slice::<EndpointResponse>(&bytes) else {
            return Ok(None);
        };

        let keyed = envelope.responses.iter().all(|r| r.ad_id.is_some());
        if keyed {
            let mut by_id: HashMap<String, Value> =
                envelope.responses.into_iter().map(|r| (r.ad_id.unwrap_or_default(), r.output)).collect();
            Ok(Some(ads.iter().map(|ad| by_id.remove(&ad.ad_id)).collect()))
        } else if envelope.responses.len() == ads.len() {
            Ok(Some(envelope.responses.into_iter().map(|r| Some(r.output)).collect()))
        } else {
            Ok(None)
        }
    }

    async fn attempt(
        &self,
        ads: &[&Ad],
        warnings: &mut Vec<String>,
    ) -> Result<Vec<Result<SemanticMetadata, String>>, ExtractError> {
        let outputs = self.send(ads).await?;
        Ok(match outputs {
            None => ads.iter().map(|_| Err("response envelope failed validation".to_string())).collect(),
            Some(outputs) => ads
                .iter()
                .zip(outputs)
                .map(|(ad, out)| match out {
                    Some(value) => parse_output(ad, value, self.max_categories, warnings),
                    None => Err("no output returned for ad".to_string()),
                })
                .collect(),
        })
    }

    async fn slice(
        &self,
        ads: &[Ad],
    ) -> Result<(Vec<Result<SemanticMetadata, AdExtractError>>, Vec<String>), ExtractError> {
        let mut warnings = Vec::new();
        let refs: Vec<&Ad> = ads.iter().collect();
        let mut results = self.attempt(&refs, &mut warnings).await?;

        let failed: Vec<usize> = (0..results.len()).filter(|&i| results[i].is_err()).collect();
        if !failed.is_empty() {
            let retry: Vec<&Ad> = failed.iter().map(|&i| &ads[i]).collect();
            let second = self.attempt(&retry, &mut warnings).await?;
            for (i, r) in failed.into_iter().zip(second) {
                results[i] = r;
            }
        }
        let results = results
            .into_iter()
            .zip(ads)
            .map(|(r, ad)| r.map_err(|reason| AdExtractError { ad_id: ad.ad_id.clone(), reason }))
            .collect();
        Ok((results, warnings))
    }
}

/// Extracts metadata for `batch` through the configured endpoint.
///
/// Transport failures (unreachable endpoint, timeout, non-2xx status) fail
/// the whole call; schema failures surface per ad after one retry.
pub async fn extract_llm(batch: &[Ad], config: &ExtractorConfig) -> Result<LlmOutcome, ExtractError> {
    config.validate()?;
    if config.mode != ExtractorMode::LlmEndpoint {
        return Err(ExtractError::InvalidConfig("extract_llm requires LLM_ENDPOINT mode".into()));
    }
    let url = config.endpoint_url.as_deref().unwrap_or_default();
    let template = match &config.prompt_template_path {
        Some(path) => {
            std::fs::read_to_string(path).map_err(|source| ExtractError::Io { path: path.clone(), source })?
        }
        None => DEFAULT_TEMPLATE.to_string(),
    };
    let http = reqwest::Client::builder()
        .timeout(config.timeout)
        .build()
        .map_err(|e| ExtractError::InvalidConfig(e.to_string()))?;
    let client =
        Client { http, url, template: &template, timeout: config.timeout, max_categories: config.max_categories };

    let slices: Vec<_> = stream::iter(batch.chunks(config.batch_size))
        .map(|chunk| client.slice(chunk))
        .buffered(config.max_in_flight)
        .collect()
        .await;

    let mut results = Vec::with_capacity(batch.len());
    let mut warnings = Vec::new();
    for slice in slices {
        let (r, w) = slice?;
        results.extend(r);
        warnings.extend(w);
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(LlmOutcome { results, warnings })
}

/// Runs [`extract_llm`] on a private runtime.
pub fn extract_llm_blocking(batch: &[Ad], config: &ExtractorConfig) -> Result<LlmOutcome, ExtractError> {
    let rt = tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| ExtractError::InvalidConfig(format!("cannot start runtime: {e}")))?;
    rt.block_on(extract_llm(batch, config))
}
