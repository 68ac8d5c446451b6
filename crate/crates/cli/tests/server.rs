use std::path::PathBuf;

use axum::body::Body;
use axum::http::{Request, StatusCode};
use axum::Router;
use http_body_util::BodyExt;
use serde_json::{json, Value};
use tempfile::TempDir;
use tower::ServiceExt;

use pepper::corpus::{generate_synthetic_corpus, load_corpus_str, Format, LoadOptions, Record, SyntheticConfig};
use pepper::ensemble::PredictionRecord;
use pepper_cli::server::{router, AppState};

fn corpus() -> Vec<Record> {
    let labeled = generate_synthetic_corpus(&SyntheticConfig {
        n_reviews: 12,
        seed: 11,
        ..SyntheticConfig::default()
    })
    .unwrap();
    labeled
        .into_iter()
        .enumerate()
        .map(|(i, l)| {
            if i % 2 == 0 {
                Record::Unlabeled(l.review)
            } else {
                Record::Labeled(l)
            }
        })
        .collect()
}

fn predictions(records: &[Record]) -> Vec<PredictionRecord> {
    records
        .iter()
        .enumerate()
        .map(|(i, r)| PredictionRecord::new(r.review().review_id.clone(), i % 3 == 0, i % 4 == 0))
        .collect()
}

struct Fixture {
    _dir: TempDir,
    journal: PathBuf,
    records: Vec<Record>,
    app: Router,
}

fn fixture() -> Fixture {
    let dir = TempDir::new().unwrap();
    let journal = dir.path().join("journal.jsonl");
    let records = corpus();
    let state = AppState::new(records.clone(), predictions(&records), journal.clone()).unwrap();
    Fixture {
        _dir: dir,
        journal,
        records,
        app: router(state),
    }
}

impl Fixture {
    fn id(&self, i: usize) -> String {
        self.records[i].review().review_id.clone()
    }

    fn first_token(&self, i: usize) -> (usize, usize) {
        let t = &self.records[i].review().tokens()[0];
        (t.char_start, t.char_end)
    }

    fn reload(&self) -> Router {
        let state = AppState::new(self.records.clone(), predictions(&self.records), self.journal.clone()).unwrap();
        router(state)
    }
}

async fn call(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, String) {
    let mut req = Request::builder().method(method).uri(uri);
    let body = match body {
        Some(v) => {
            req = req.header("content-type", "application/json");
            Body::from(v.to_string())
        }
        None => Body::empty(),
    };
    let resp = app.clone().oneshot(req.body(body).unwrap()).await.unwrap();
    let status = resp.status();
    let bytes = resp.into_body().collect().await.unwrap().to_bytes();
    (status, String::from_utf8(bytes.to_vec()).unwrap())
}

async fn call_json(app: &Router, method: &str, uri: &str, body: Option<Value>) -> (StatusCode, Value) {
    let (s, text) = call(app, method, uri, body).await;
    (s, serde_json::from_str(&text).unwrap_or(Value::String(text)))
}

#[tokio::test]
async fn queue_modes() {
    let f = fixture();
    let (s, v) = call_json(&f.app, "GET", "/api/v1/queue", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["mode"], "disagreement");
    let preds = predictions(&f.records);
    let expected = preds.iter().filter(|p| p.chunker_label != p.doc_label).count();
    assert_eq!(v["total"], expected);
    let items = v["items"].as_array().unwrap();
    for w in items.windows(2) {
        let (a, b) = (w[0]["date"].as_str().unwrap(), w[1]["date"].as_str().unwrap());
        assert!(a > b || (a == b && w[0]["review_id"].as_str() < w[1]["review_id"].as_str()));
    }
    assert!(items.iter().all(|i| i["chunker"] != i["doc"]));

    let (_, all) = call_json(&f.app, "GET", "/api/v1/queue?mode=all&limit=3", None).await;
    assert_eq!(all["total"], 12);
    assert_eq!(all["items"].as_array().unwrap().len(), 3);

    let (s, _) = call_json(&f.app, "GET", "/api/v1/queue?mode=bogus", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}

#[tokio::test]
async fn api_alias_matches_versioned_path() {
    let f = fixture();
    let a = call(&f.app, "GET", "/api/v1/queue?mode=all", None).await;
    let b = call(&f.app, "GET", "/api/queue?mode=all", None).await;
    assert_eq!(a, b);
    assert_eq!(a.0, StatusCode::OK);
}

#[tokio::test]
async fn review_detail() {
    let f = fixture();
    let id = f.id(1);
    let (s, v) = call_json(&f.app, "GET", &format!("/api/v1/review/{id}"), None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["review"]["review_id"], id);
    let text = f.records[1].review().text.clone();
    for t in v["tokens"].as_array().unwrap() {
        let (a, b) = (
            t["start"].as_u64().unwrap() as usize,
            t["end"].as_u64().unwrap() as usize,
        );
        let slice: String = text.chars().skip(a).take(b - a).collect();
        assert_eq!(slice, t["text"].as_str().unwrap());
    }
    assert!(v["gold"]["doc_label"].is_boolean());
    let (s, _) = call_json(&f.app, "GET", "/api/v1/review/nope", None).await;
    assert_eq!(s, StatusCode::NOT_FOUND);
}

#[tokio::test]
async fn label_validation() {
    let f = fixture();
    let id = f.id(0);
    let n = f.records[0].review().text.chars().count();
    let cases = [
        json!({"review_id": id, "annotator": "a", "spans": [[0, n + 1]]}),
        json!({"review_id": id, "annotator": "a", "spans": [[0, 4], [2, 6]]}),
        json!({"review_id": id, "annotator": "a", "spans": [[3, 3]]}),
        json!({"review_id": id, "annotator": " ", "spans": []}),
        json!({"review_id": id, "annotator": "a", "spans": [[0, 4]], "doc_label": false}),
    ];
    for body in cases {
        let (s, v) = call_json(&f.app, "POST", "/api/v1/label", Some(body.clone())).await;
        assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY, "{body} -> {v}");
        assert!(v["error"].is_string());
    }
    let (s, _) = call_json(
        &f.app,
        "POST",
        "/api/v1/label",
        Some(json!({"review_id": "missing", "annotator": "a"})),
    )
    .await;
    assert_eq!(s, StatusCode::NOT_FOUND);
    assert!(!f.journal.exists(), "rejected writes must not reach the journal");
}

#[tokio::test]
async fn label_is_idempotent_and_journaled() {
    let f = fixture();
    let id = f.id(0);
    let (a, b) = f.first_token(0);
    let body = json!({"review_id": id, "annotator": "ann1", "spans": [[a, b]]});
    let (s, v) = call_json(&f.app, "POST", "/api/v1/label", Some(body.clone())).await;
    assert_eq!(s, StatusCode::CREATED, "{v}");
    assert_eq!(v["event"]["seq"], 1);
    let (s, v) = call_json(&f.app, "POST", "/api/v1/label", Some(body)).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(v["status"], "unchanged");
    assert_eq!(std::fs::read_to_string(&f.journal).unwrap().lines().count(), 1);

    let (s, _) = call_json(
        &f.app,
        "POST",
        "/api/v1/label",
        Some(json!({"review_id": id, "annotator": "ann1", "spans": [], "doc_label": false})),
    )
    .await;
    assert_eq!(s, StatusCode::CREATED);

    // Replay restores the latest label.
    let app = f.reload();
    let (_, v) = call_json(&app, "GET", &format!("/api/v1/review/{id}"), None).await;
    assert_eq!(v["labels"]["ann1"]["doc_label"], false);
    assert_eq!(v["labels"]["ann1"]["seq"], 2);
    let (_, v) = call_json(
        &app,
        "POST",
        "/api/v1/label",
        Some(json!({"review_id": id, "annotator": "ann2", "spans": []})),
    )
    .await;
    assert_eq!(v["event"]["seq"], 3);
}

#[tokio::test]
async fn adjudication_conflicts() {
    let f = fixture();
    let id = f.id(2);
    let pos = json!({"review_id": id, "verdict": "positive", "annotator": "lead"});
    let (s, _) = call_json(&f.app, "POST", "/api/v1/adjudicate", Some(pos.clone())).await;
    assert_eq!(s, StatusCode::CREATED);
    let (s, v) = call_json(&f.app, "POST", "/api/v1/adjudicate", Some(pos)).await;
    assert_eq!((s, v["status"].as_str()), (StatusCode::OK, Some("unchanged")));
    let neg = json!({"review_id": id, "verdict": "negative"});
    let (s, _) = call_json(&f.app, "POST", "/api/v1/adjudicate", Some(neg)).await;
    assert_eq!(s, StatusCode::CONFLICT);
    let abstain = json!({"review_id": f.id(3), "verdict": "abstain"});
    let (s, _) = call_json(&f.app, "POST", "/api/v1/adjudicate", Some(abstain)).await;
    assert_eq!(s, StatusCode::UNPROCESSABLE_ENTITY);

    // Adjudicated reviews leave the disagreement queue.
    let (_, q) = call_json(&f.app, "GET", "/api/v1/queue?mode=all", None).await;
    assert_eq!(q["total"], 12);
    let (_, q) = call_json(&f.app, "GET", "/api/v1/queue?limit=100", None).await;
    assert!(q["items"].as_array().unwrap().iter().all(|i| i["review_id"] != id));
}

#[tokio::test]
async fn journal_failure_is_503_without_state_change() {
    let dir = TempDir::new().unwrap();
    let journal = dir.path().join("sub").join("journal.jsonl");
    std::fs::create_dir(dir.path().join("sub")).unwrap();
    let records = corpus();
    let app = router(AppState::new(records.clone(), Vec::new(), journal.clone()).unwrap());
    let id = records[0].review().review_id.clone();
    std::fs::remove_dir(dir.path().join("sub")).unwrap();
    let body = json!({"review_id": id, "annotator": "a", "spans": []});
    let (s, _) = call_json(&app, "POST", "/api/v1/label", Some(body.clone())).await;
    assert_eq!(s, StatusCode::SERVICE_UNAVAILABLE);
    let (_, v) = call_json(&app, "GET", &format!("/api/v1/review/{id}"), None).await;
    assert_eq!(v["labels"], json!({}));

    std::fs::create_dir(dir.path().join("sub")).unwrap();
    let (s, v) = call_json(&app, "POST", "/api/v1/label", Some(body)).await;
    assert_eq!(s, StatusCode::CREATED);
    assert_eq!(v["event"]["seq"], 1);
}

#[tokio::test]
async fn agreement_between_annotators() {
    let f = fixture();
    let (_, v) = call_json(&f.app, "GET", "/api/v1/agreement", None).await;
    assert_eq!(v, json!({"annotators": [], "pairs": []}));
    for i in 0..4 {
        let id = f.id(i);
        for (ann, label) in [("a", i % 2 == 0), ("b", i < 2)] {
            let body = json!({"review_id": id, "annotator": ann, "spans": [], "doc_label": label});
            let (s, _) = call_json(&f.app, "POST", "/api/v1/label", Some(body)).await;
            assert_eq!(s, StatusCode::CREATED);
        }
    }
    let (s, text) = call(&f.app, "GET", "/api/v1/agreement", None).await;
    assert_eq!(s, StatusCode::OK);
    assert_eq!(text, call(&f.app, "GET", "/api/v1/agreement", None).await.1);
    let v: Value = serde_json::from_str(&text).unwrap();
    assert_eq!(v["annotators"], json!(["a", "b"]));
    let pair = &v["pairs"][0];
    assert_eq!(pair["n_reviews"], 4);
    // a = [T, F, T, F], b = [T, T, F, F]: p_o = 0.5, p_e = 0.5.
    assert_eq!(pair["report"]["doc_kappa"]["kappa"], 0.0);
}

#[tokio::test]
async fn export_merges_labels_and_adjudications() {
    let f = fixture();
    let (u, l) = (f.id(0), f.id(1));
    let tok = f.first_token(0);
    call_json(
        &f.app,
        "POST",
        "/api/v1/label",
        Some(json!({"review_id": u, "annotator": "a", "spans": [[tok.0, tok.1]]})),
    )
    .await;
    call_json(
        &f.app,
        "POST",
        "/api/v1/adjudicate",
        Some(json!({"review_id": l, "verdict": "negative"})),
    )
    .await;

    for fmt in ["jsonl", "csv"] {
        let (s, body) = call(&f.app, "GET", &format!("/api/v1/export?fmt={fmt}"), None).await;
        assert_eq!(s, StatusCode::OK);
        let format = if fmt == "csv" { Format::Csv } else { Format::Jsonl };
        let report = load_corpus_str(
            &body,
            &LoadOptions {
                format,
                ..LoadOptions::default()
            },
        )
        .unwrap();
        assert!(report.errors.is_empty());
        assert_eq!(report.records.len(), 12);
        let get = |id: &str| {
            report
                .records
                .iter()
                .find(|r| r.review().review_id == id)
                .unwrap()
                .clone()
        };
        let lu = get(&u);
        let labeled = lu.labeled().expect("span label exported");
        assert_eq!(labeled.spans, vec![tok]);
        assert_eq!(get(&l).doc_label(), Some(false));
        // Untouched records pass through unchanged.
        assert_eq!(get(&f.id(3)), f.records[3]);
        assert_eq!(get(&f.id(4)), f.records[4]);
    }
    let (s, _) = call(&f.app, "GET", "/api/v1/export?fmt=xml", None).await;
    assert_eq!(s, StatusCode::BAD_REQUEST);
}
