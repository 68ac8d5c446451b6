//! Annotation HTTP API. Every accepted write is appended to a JSONL journal
//! before it touches memory; the journal is replayed at startup.

use std::collections::{BTreeMap, HashMap};
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::PathBuf;
use std::sync::{Arc, RwLock};

use anyhow::{bail, Context};
use axum::extract::{Path, Query, State};
use axum::http::{header, StatusCode};
use axum::response::{IntoResponse, Response};
use axum::routing::{get, post};
use axum::{Json, Router};
use chrono::{SecondsFormat, Utc};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use pepper::corpus::{write_corpus_string, Format, LabeledReview, Record, Review};
use pepper::ensemble::{PredictionRecord, Verdict};
use pepper::eval::agreement_report;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventBody {
    Label {
        annotator: String,
        /// Character offsets, sorted.
        spans: Vec<(usize, usize)>,
        doc_label: bool,
    },
    Adjudicate {
        verdict: Verdict,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        annotator: Option<String>,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub seq: u64,
    pub timestamp: String,
    pub review_id: String,
    #[serde(flatten)]
    pub body: EventBody,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
struct Label {
    spans: Vec<(usize, usize)>,
    doc_label: bool,
    seq: u64,
    timestamp: String,
}

#[derive(Debug, Clone, Serialize)]
struct Adjudication {
    verdict: Verdict,
    annotator: Option<String>,
    seq: u64,
    timestamp: String,
}

struct Inner {
    records: Vec<Record>,
    index: HashMap<String, usize>,
    predictions: HashMap<String, PredictionRecord>,
    /// review id → annotator → latest label.
    labels: HashMap<String, BTreeMap<String, Label>>,
    adjudications: HashMap<String, Adjudication>,
    journal: PathBuf,
    next_seq: u64,
}

#[derive(Clone)]
pub struct AppState(Arc<RwLock<Inner>>);

impl AppState {
    /// Replays `journal` if it exists. A journal entry naming an unknown
    /// review, or an unreadable line, is a startup error.
    pub fn new(records: Vec<Record>, predictions: Vec<PredictionRecord>, journal: PathBuf) -> anyhow::Result<Self> {
        let index = records
            .iter()
            .enumerate()
            .map(|(i, r)| (r.review().review_id.clone(), i))
            .collect();
        let mut inner = Inner {
            records,
            index,
            predictions: predictions.into_iter().map(|p| (p.review_id.clone(), p)).collect(),
            labels: HashMap::new(),
            adjudications: HashMap::new(),
            journal,
            next_seq: 1,
        };
        if inner.journal.exists() {
            let text =
                fs::read_to_string(&inner.journal).with_context(|| format!("reading {}", inner.journal.display()))?;
            for (i, line) in text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
                let ev: Event = serde_json::from_str(line)
                    .with_context(|| format!("{} line {}", inner.journal.display(), i + 1))?;
                if !inner.index.contains_key(&ev.review_id) {
                    bail!(
                        "{} line {}: unknown review {}",
                        inner.journal.display(),
                        i + 1,
                        ev.review_id
                    );
                }
                inner.next_seq = inner.next_seq.max(ev.seq + 1);
                inner.apply(ev);
            }
        }
        Ok(AppState(Arc::new(RwLock::new(inner))))
    }
}

impl Inner {
    fn review(&self, id: &str) -> Option<&Review> {
        self.index.get(id).map(|&i| self.records[i].review())
    }

    fn apply(&mut self, ev: Event) {
        match ev.body {
            EventBody::Label {
                annotator,
                spans,
                doc_label,
            } => {
                self.labels.entry(ev.review_id).or_default().insert(
                    annotator,
                    Label {
                        spans,
                        doc_label,
                        seq: ev.seq,
                        timestamp: ev.timestamp,
                    },
                );
            }
            EventBody::Adjudicate { verdict, annotator } => {
                self.adjudications.insert(
                    ev.review_id,
                    Adjudication {
                        verdict,
                        annotator,
                        seq: ev.seq,
                        timestamp: ev.timestamp,
                    },
                );
            }
        }
    }

    /// Journal first, memory second: a failed append leaves state untouched.
    fn commit(&mut self, review_id: &str, body: EventBody) -> Result<Event, ApiError> {
        let ev = Event {
            seq: self.next_seq,
            timestamp: Utc::now().to_rfc3339_opts(SecondsFormat::Millis, true),
            review_id: review_id.to_string(),
            body,
        };
        let line = serde_json::to_string(&ev).map_err(|e| ApiError::unavailable(e.to_string()))? + "\n";
        let mut f = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.journal)
            .map_err(|e| ApiError::unavailable(format!("journal: {e}")))?;
        f.write_all(line.as_bytes())
            .and_then(|()| f.sync_data())
            .map_err(|e| ApiError::unavailable(format!("journal: {e}")))?;
        self.next_seq += 1;
        self.apply(ev.clone());
        Ok(ev)
    }

    /// The adjudicated label wins; otherwise the most recent label by any
    /// annotator; otherwise the corpus record as loaded.
    fn merged(&self, i: usize) -> Record {
        let base = &self.records[i];
        let review = base.review().clone();
        let latest = self
            .labels
            .get(&review.review_id)
            .and_then(|m| m.values().max_by_key(|l| l.seq));
        let adjudicated = self
            .adjudications
            .get(&review.review_id)
            .and_then(|a| a.verdict.as_bool());
        let from_label = |l: &Label| match (l.spans.is_empty(), l.doc_label) {
            (true, true) => Record::DocLabeled(review.clone(), true),
            _ => LabeledReview::from_spans(review.clone(), l.spans.clone())
                .map(Record::Labeled)
                .unwrap_or_else(|_| Record::DocLabeled(review.clone(), l.doc_label)),
        };
        match (adjudicated, latest) {
            (Some(v), _) => {
                // Keep spans from the latest label that agrees with the verdict.
                let agreeing = self
                    .labels
                    .get(&review.review_id)
                    .and_then(|m| m.values().filter(|l| l.doc_label == v).max_by_key(|l| l.seq));
                match agreeing {
                    Some(l) => from_label(l),
                    None if !v => from_label(&Label {
                        spans: Vec::new(),
                        doc_label: false,
                        seq: 0,
                        timestamp: String::new(),
                    }),
                    None => Record::DocLabeled(review, true),
                }
            }
            (None, Some(l)) => from_label(l),
            (None, None) => base.clone(),
        }
    }
}

#[derive(Debug)]
pub struct ApiError {
    status: StatusCode,
    message: String,
}

impl ApiError {
    fn new(status: StatusCode, message: impl Into<String>) -> Self {
        ApiError {
            status,
            message: message.into(),
        }
    }
    fn unprocessable(m: impl Into<String>) -> Self {
        Self::new(StatusCode::UNPROCESSABLE_ENTITY, m)
    }
    fn unavailable(m: impl Into<String>) -> Self {
        Self::new(StatusCode::SERVICE_UNAVAILABLE, m)
    }
    fn not_found(id: &str) -> Self {
        Self::new(StatusCode::NOT_FOUND, format!("unknown review {id}"))
    }
}

impl IntoResponse for ApiError {
    fn into_response(self) -> Response {
        (self.status, Json(json!({ "error": self.message }))).into_response()
    }
}

type ApiResult<T> = Result<T, ApiError>;

fn api_routes() -> Router<AppState> {
    Router::new()
        .route("/queue", get(queue))
        .route("/review/{id}", get(review))
        .route("/label", post(label))
        .route("/adjudicate", post(adjudicate))
        .route("/agreement", get(agreement))
        .route("/export", get(export))
}

/// Routes are served under `/api/v1` and, as an alias, `/api`.
pub fn router(state: AppState) -> Router {
    Router::new()
        .nest("/api/v1", api_routes())
        .nest("/api", api_routes())
        .with_state(state)
}

#[derive(Deserialize)]
struct QueueParams {
    mode: Option<String>,
    limit: Option<usize>,
}

async fn queue(State(st): State<AppState>, Query(q): Query<QueueParams>) -> ApiResult<Json<Value>> {
    let inner = st.0.read().expect("state lock");
    let mode = q.mode.as_deref().unwrap_or("disagreement");
    let keep: Box<dyn Fn(&str) -> bool> = match mode {
        // Unresolved cases where the two models disagree.
        "disagreement" => Box::new(|id: &str| {
            inner
                .predictions
                .get(id)
                .is_some_and(|p| p.chunker_label != p.doc_label)
                && !inner.adjudications.contains_key(id)
        }),
        "unlabeled" => Box::new(|id: &str| {
            inner.labels.get(id).is_none_or(|m| m.is_empty()) && !inner.adjudications.contains_key(id)
        }),
        "all" => Box::new(|_: &str| true),
        other => {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                format!("mode must be disagreement, unlabeled or all, not {other:?}"),
            ))
        }
    };
    let mut items: Vec<&Review> = inner
        .records
        .iter()
        .map(Record::review)
        .filter(|r| keep(&r.review_id))
        .collect();
    items.sort_by(|a, b| b.date.cmp(&a.date).then_with(|| a.review_id.cmp(&b.review_id)));
    let total = items.len();
    let limit = q.limit.unwrap_or(50);
    let out: Vec<Value> = items
        .into_iter()
        .take(limit)
        .map(|r| {
            let p = inner.predictions.get(&r.review_id);
            json!({
                "review_id": r.review_id,
                "professor_id": r.professor_id,
                "date": r.date,
                "chunker": p.map(|p| p.chunker_label),
                "doc": p.map(|p| p.doc_label),
                "ensemble2": p.map(|p| p.ensemble2),
                "labeled_by": inner.labels.get(&r.review_id).map(|m| m.keys().cloned().collect::<Vec<_>>()).unwrap_or_default(),
            })
        })
        .collect();
    Ok(Json(json!({ "mode": mode, "total": total, "items": out })))
}

async fn review(State(st): State<AppState>, Path(id): Path<String>) -> ApiResult<Json<Value>> {
    let inner = st.0.read().expect("state lock");
    let &i = inner.index.get(&id).ok_or_else(|| ApiError::not_found(&id))?;
    let rec = &inner.records[i];
    let r = rec.review();
    let tokens: Vec<Value> = r
        .tokens()
        .iter()
        .map(|t| json!({ "text": t.surface, "start": t.char_start, "end": t.char_end }))
        .collect();
    let gold = match rec {
        Record::Unlabeled(_) => Value::Null,
        Record::DocLabeled(_, l) => json!({ "doc_label": l, "spans": Value::Null }),
        Record::Labeled(l) => json!({ "doc_label": l.doc_label, "spans": l.spans }),
    };
    Ok(Json(json!({
        "review": r,
        "tokens": tokens,
        "prediction": inner.predictions.get(&id),
        "gold": gold,
        "labels": inner.labels.get(&id).cloned().unwrap_or_default(),
        "adjudication": inner.adjudications.get(&id),
    })))
}

#[derive(Deserialize)]
struct LabelRequest {
    review_id: String,
    annotator: String,
    #[serde(default)]
    spans: Vec<(usize, usize)>,
    /// Defaults to whether any span was given.
    doc_label: Option<bool>,
}

async fn label(State(st): State<AppState>, Json(req): Json<LabelRequest>) -> ApiResult<Response> {
    let mut inner = st.0.write().expect("state lock");
    let r = inner
        .review(&req.review_id)
        .ok_or_else(|| ApiError::not_found(&req.review_id))?
        .clone();
    let annotator = req.annotator.trim().to_string();
    if annotator.is_empty() {
        return Err(ApiError::unprocessable("annotator must not be empty"));
    }
    let doc_label = req.doc_label.unwrap_or(!req.spans.is_empty());
    if !doc_label && !req.spans.is_empty() {
        return Err(ApiError::unprocessable("spans given with doc_label false"));
    }
    let checked = LabeledReview::from_spans(r, req.spans).map_err(ApiError::unprocessable)?;
    let spans = checked.spans;
    if let Some(prev) = inner.labels.get(&req.review_id).and_then(|m| m.get(&annotator)) {
        if prev.spans == spans && prev.doc_label == doc_label {
            return Ok(Json(json!({ "status": "unchanged", "seq": prev.seq })).into_response());
        }
    }
    let ev = inner.commit(
        &req.review_id,
        EventBody::Label {
            annotator,
            spans,
            doc_label,
        },
    )?;
    Ok((StatusCode::CREATED, Json(json!({ "status": "recorded", "event": ev }))).into_response())
}

#[derive(Deserialize)]
struct AdjudicateRequest {
    review_id: String,
    verdict: Verdict,
    annotator: Option<String>,
}

async fn adjudicate(State(st): State<AppState>, Json(req): Json<AdjudicateRequest>) -> ApiResult<Response> {
    let mut inner = st.0.write().expect("state lock");
    if inner.review(&req.review_id).is_none() {
        return Err(ApiError::not_found(&req.review_id));
    }
    if req.verdict == Verdict::Abstain {
        return Err(ApiError::unprocessable("verdict must be positive or negative"));
    }
    if let Some(prev) = inner.adjudications.get(&req.review_id) {
        return if prev.verdict == req.verdict {
            Ok(Json(json!({ "status": "unchanged", "seq": prev.seq })).into_response())
        } else {
            Err(ApiError::new(
                StatusCode::CONFLICT,
                format!("{} already adjudicated {}", req.review_id, prev.verdict.as_str()),
            ))
        };
    }
    let ev = inner.commit(
        &req.review_id,
        EventBody::Adjudicate {
            verdict: req.verdict,
            annotator: req.annotator.filter(|a| !a.trim().is_empty()),
        },
    )?;
    Ok((StatusCode::CREATED, Json(json!({ "status": "recorded", "event": ev }))).into_response())
}

/// Pairwise agreement over the reviews both annotators labeled.
async fn agreement(State(st): State<AppState>) -> ApiResult<Json<Value>> {
    let inner = st.0.read().expect("state lock");
    let mut by_annotator: BTreeMap<&str, BTreeMap<&str, &Label>> = BTreeMap::new();
    for (id, m) in &inner.labels {
        for (a, l) in m {
            by_annotator.entry(a).or_default().insert(id, l);
        }
    }
    let names: Vec<&str> = by_annotator.keys().copied().collect();
    let mut pairs = Vec::new();
    for (i, a) in names.iter().enumerate() {
        for b in &names[i + 1..] {
            let (la, lb) = (&by_annotator[a], &by_annotator[b]);
            let common: Vec<&str> = la.keys().filter(|id| lb.contains_key(*id)).copied().collect();
            let build = |m: &BTreeMap<&str, &Label>| -> ApiResult<Vec<LabeledReview>> {
                common
                    .iter()
                    .map(|id| {
                        let r = inner.review(id).expect("journal ids are known").clone();
                        let l = m[id];
                        let mut lr = LabeledReview::from_spans(r, l.spans.clone())
                            .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e))?;
                        lr.doc_label = l.doc_label;
                        Ok(lr)
                    })
                    .collect()
            };
            let entry = if common.is_empty() {
                json!({ "a": a, "b": b, "n_reviews": 0, "report": Value::Null })
            } else {
                let report = agreement_report(&build(la)?, &build(lb)?)
                    .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
                json!({ "a": a, "b": b, "n_reviews": common.len(), "report": report })
            };
            pairs.push(entry);
        }
    }
    Ok(Json(json!({ "annotators": names, "pairs": pairs })))
}

#[derive(Deserialize)]
struct ExportParams {
    fmt: Option<String>,
}

async fn export(State(st): State<AppState>, Query(q): Query<ExportParams>) -> ApiResult<Response> {
    let inner = st.0.read().expect("state lock");
    let (format, mime) = match q.fmt.as_deref().unwrap_or("jsonl") {
        "jsonl" => (Format::Jsonl, "application/x-ndjson"),
        "csv" => (Format::Csv, "text/csv"),
        other => {
            return Err(ApiError::new(
                StatusCode::BAD_REQUEST,
                format!("fmt must be jsonl or csv, not {other:?}"),
            ))
        }
    };
    let merged: Vec<Record> = (0..inner.records.len()).map(|i| inner.merged(i)).collect();
    let body = write_corpus_string(&merged, format)
        .map_err(|e| ApiError::new(StatusCode::INTERNAL_SERVER_ERROR, e.to_string()))?;
    Ok(([(header::CONTENT_TYPE, mime)], body).into_response())
}
