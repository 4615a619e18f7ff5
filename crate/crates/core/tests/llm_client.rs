//! LLM client against an in-process mock endpoint.

use std::collections::{BTreeSet, HashMap};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use axum::extract::State;
use axum::http::StatusCode;
use axum::routing::post;
use axum::{Json, Router};
use serde_json::{json, Value};

use semcand::extract::llm::extract_llm;
use semcand::extract::{ExtractError, ExtractorConfig, ExtractorMode};
use semcand::Ad;

#[derive(Default)]
struct Mock {
    in_flight: AtomicUsize,
    peak: AtomicUsize,
    calls: Mutex<HashMap<String, usize>>,
}

fn good_output(ad_id: &str) -> Value {
    json!({
        "categories": [{"label": "sports/footwear", "score": 0.8}, {"label": format!("tag/{ad_id}"), "score": 0.4}],
        "brand": ["Acme"],
        "product": ["boots"],
        "contextual": ["trail running"],
        "caption": "boots"
    })
}

/// `bad*` ids always violate the schema, `flaky*` ids fail on the first
/// call only, `hot*` ids carry an out-of-range score. Responses come back
/// in reverse order, keyed by ad_id.
async fn extract(State(mock): State<Arc<Mock>>, Json(body): Json<Value>) -> Json<Value> {
    let now = mock.in_flight.fetch_add(1, Ordering::SeqCst) + 1;
    mock.peak.fetch_max(now, Ordering::SeqCst);
    tokio::time::sleep(Duration::from_millis(40)).await;

    let mut out = Vec::new();
    for req in body["requests"].as_array().unwrap() {
        let id = req["ad_id"].as_str().unwrap().to_string();
        assert!(req["prompt"].as_str().unwrap().contains("Title for"));
        let n = {
            let mut calls = mock.calls.lock().unwrap();
            let c = calls.entry(id.clone()).or_default();
            *c += 1;
            *c
        };
        let output = if id.starts_with("bad") || (id.starts_with("flaky") && n == 1) {
            json!({"categories": "not a list"})
        } else if id.starts_with("hot") {
            json!({"categories": [{"label": "sports/footwear", "score": 1.7}, {"label": "x/y", "score": -0.2}]})
        } else {
            good_output(&id)
        };
        out.push(json!({"ad_id": id, "output": output}));
    }
    out.reverse();
    mock.in_flight.fetch_sub(1, Ordering::SeqCst);
    Json(json!({ "responses": out }))
}

async fn slow() -> Json<Value> {
    tokio::time::sleep(Duration::from_secs(3)).await;
    Json(json!({"responses": []}))
}

async fn broken() -> StatusCode {
    StatusCode::INTERNAL_SERVER_ERROR
}

async fn start() -> (String, Arc<Mock>) {
    let mock = Arc::new(Mock::default());
    let app = Router::new()
        .route("/extract", post(extract))
        .route("/slow", post(slow))
        .route("/broken", post(broken))
        .with_state(mock.clone());
    let listener = tokio::net::TcpListener::bind("127.0.0.1:0").await.unwrap();
    let base = format!("http://{}", listener.local_addr().unwrap());
    tokio::spawn(async move { axum::serve(listener, app).await.unwrap() });
    (base, mock)
}

fn ad(id: &str) -> Ad {
    Ad {
        ad_id: id.into(),
        title: format!("Title for {id}"),
        description: "Trail boots for rough ground.".into(),
        landing_page_text: None,
        advertiser_id: "acme".into(),
        latent_topics: BTreeSet::new(),
        true_conversion_rate: 0.05,
        base_revenue_per_conversion: 10.0,
    }
}

fn config(url: String) -> ExtractorConfig {
    ExtractorConfig {
        mode: ExtractorMode::LlmEndpoint,
        endpoint_url: Some(url),
        batch_size: 2,
        max_in_flight: 3,
        timeout: Duration::from_secs(5),
        ..Default::default()
    }
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn results_follow_input_order_with_bounded_concurrency() {
    let (base, mock) = start().await;
    let ads: Vec<Ad> = (0..20).map(|i| ad(&format!("ad-{i:02}"))).collect();
    let outcome = extract_llm(&ads, &config(format!("{base}/extract"))).await.unwrap();
    let ids: Vec<String> = outcome.results.iter().map(|r| r.as_ref().unwrap().ad_id.clone()).collect();
    let expected: Vec<String> = ads.iter().map(|a| a.ad_id.clone()).collect();
    assert_eq!(ids, expected);
    let first = outcome.results[0].as_ref().unwrap();
    assert_eq!(first.categories["sports/footwear"], 0.8);
    assert!(first.product_attrs.contains("boots"));
    assert!(first.brand_attrs.contains("acme"));
    assert!(first.tokens.contains("running"));
    let peak = mock.peak.load(Ordering::SeqCst);
    assert!((1..=3).contains(&peak), "peak in-flight {peak}");
}

#[tokio::test(flavor = "multi_thread")]
async fn schema_failures_retry_once_then_report_per_ad() {
    let (base, mock) = start().await;
    let ads = vec![ad("ok-1"), ad("flaky-1"), ad("bad-1"), ad("ok-2")];
    let outcome = extract_llm(&ads, &config(format!("{base}/extract"))).await.unwrap();
    assert!(outcome.results[0].is_ok());
    assert!(outcome.results[1].is_ok(), "flaky ad recovers on retry");
    let err = outcome.results[2].as_ref().unwrap_err();
    assert_eq!(err.ad_id, "bad-1");
    assert!(err.reason.contains("schema"), "{}", err.reason);
    assert!(outcome.results[3].is_ok());
    let calls = mock.calls.lock().unwrap();
    assert_eq!(calls["bad-1"], 2);
    assert_eq!(calls["flaky-1"], 2);
    assert_eq!(calls["ok-1"], 1);
}

#[tokio::test(flavor = "multi_thread")]
async fn out_of_range_scores_are_clamped_or_dropped() {
    let (base, _) = start().await;
    let outcome = extract_llm(&[ad("hot-1")], &config(format!("{base}/extract"))).await.unwrap();
    let meta = outcome.results[0].as_ref().unwrap();
    assert_eq!(meta.categories.len(), 1);
    assert_eq!(meta.categories["sports/footwear"], 1.0);
    assert_eq!(outcome.warnings.len(), 2, "{:?}", outcome.warnings);
}

#[tokio::test(flavor = "multi_thread")]
async fn unreachable_endpoint_names_the_url() {
    let listener = std::net::TcpListener::bind("127.0.0.1:0").unwrap();
    let url = format!("http://{}/extract", listener.local_addr().unwrap());
    drop(listener);
    let err = extract_llm(&[ad("a")], &config(url.clone())).await.unwrap_err();
    assert!(matches!(err, ExtractError::EndpointUnreachable { .. }), "{err:?}");
    assert!(err.to_string().contains(&url), "{err}");
}

#[tokio::test(flavor = "multi_thread")]
async fn slow_endpoint_times_out() {
    let (base, _) = start().await;
    let cfg = ExtractorConfig { timeout: Duration::from_millis(200), ..config(format!("{base}/slow")) };
    let err = extract_llm(&[ad("a")], &cfg).await.unwrap_err();
    assert!(matches!(err, ExtractError::Timeout { .. }), "{err:?}");
    assert!(err.to_string().contains("/slow"));
}

#[tokio::test(flavor = "multi_thread")]
async fn server_errors_fail_the_call() {
    let (base, _) = start().await;
    let err = extract_llm(&[ad("a")], &config(format!("{base}/broken"))).await.unwrap_err();
    assert!(matches!(err, ExtractError::EndpointStatus { status: 500, .. }), "{err:?}");
}

#[tokio::test]
async fn missing_endpoint_is_a_config_error() {
    let cfg = ExtractorConfig { mode: ExtractorMode::LlmEndpoint, ..Default::default() };
    assert!(matches!(extract_llm(&[ad("a")], &cfg).await, Err(ExtractError::InvalidConfig(_))));
}

#[tokio::test(flavor = "multi_thread", worker_threads = 4)]
async fn single_in_flight_serializes_requests() {
    let (base, mock) = start().await;
    let ads: Vec<Ad> = (0..6).map(|i| ad(&format!("ad-{i}"))).collect();
    let cfg = ExtractorConfig { max_in_flight: 1, batch_size: 1, ..config(format!("{base}/extract")) };
    let outcome = extract_llm(&ads, &cfg).await.unwrap();
    assert!(outcome.results.iter().all(Result::is_ok));
    assert_eq!(mock.peak.load(Ordering::SeqCst), 1);
}
