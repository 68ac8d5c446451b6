//! Vote-based combination of the chunk tagger and the document classifier.

use std::fmt;
use std::io::{Read, Write};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum EnsembleError {
    #[error("empty input")]
    Empty,
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Ensemble-2 verdict; disagreement abstains.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Positive,
    Negative,
    Abstain,
}

impl Verdict {
    pub fn as_bool(self) -> Option<bool> {
        match self {
            Verdict::Positive => Some(true),
            Verdict::Negative => Some(false),
            Verdict::Abstain => None,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Positive => "positive",
            Verdict::Negative => "negative",
            Verdict::Abstain => "abstain",
        }
    }
}

impl fmt::Display for Verdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Verdict {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim().to_ascii_lowercase().as_str() {
            "positive" => Ok(Verdict::Positive),
            "negative" => Ok(Verdict::Negative),
            "abstain" => Ok(Verdict::Abstain),
            other => Err(format!("unknown verdict {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Combined {
    /// Positive only when both classifiers are positive.
    pub ensemble1: bool,
    pub ensemble2: Verdict,
}

pub fn combine(chunker: bool, doc: bool) -> Combined {
    let ensemble2 = match (chunker, doc) {
        (true, true) => Verdict::Positive,
        (false, false) => Verdict::Negative,
        _ => Verdict::Abstain,
    };
    Combined {
        ensemble1: chunker && doc,
        ensemble2,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictionRecord {
    pub review_id: String,
    pub chunker_label: bool,
    pub doc_label: bool,
    pub ensemble1: bool,
    pub ensemble2: Verdict,
    /// Document classifier margin, kept for triage only.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub doc_margin: Option<f64>,
}

impl PredictionRecord {
    pub fn new(review_id: String, chunker_label: bool, doc_label: bool) -> Self {
        let c = combine(chunker_label, doc_label);
        PredictionRecord {
            review_id,
            chunker_label,
            doc_label,
            ensemble1: c.ensemble1,
            ensemble2: c.ensemble2,
            doc_margin: None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairedConfusion {
    pub both_pos: usize,
    pub chunk_pos_doc_neg: usize,
    pub chunk_neg_doc_pos: usize,
    pub both_neg: usize,
}

impl PairedConfusion {
    pub fn total(&self) -> usize {
        self.both_pos + self.chunk_pos_doc_neg + self.chunk_neg_doc_pos + self.both_neg
    }

    pub fn disagreements(&self) -> usize {
        self.chunk_pos_doc_neg + self.chunk_neg_doc_pos
    }

    pub fn chunker_positive(&self) -> usize {
        self.both_pos + self.chunk_pos_doc_neg
    }

    pub fn doc_positive(&self) -> usize {
        self.both_pos + self.chunk_neg_doc_pos
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConfusionSummary {
    pub counts: PairedConfusion,
    pub disagreement_rate: f64,
    /// Reviews on which ensemble 2 does not abstain.
    pub ensemble2_retained: usize,
}

pub fn paired_confusion(records: &[PredictionRecord]) -> Result<ConfusionSummary, EnsembleError> {
    if records.is_empty() {
        return Err(EnsembleError::Empty);
    }
    let mut c = PairedConfusion::default();
    for r in records {
        match (r.chunker_label, r.doc_label) {
            (true, true) => c.both_pos += 1,
            (true, false) => c.chunk_pos_doc_neg += 1,
            (false, true) => c.chunk_neg_doc_pos += 1,
            (false, false) => c.both_neg += 1,
        }
    }
    Ok(ConfusionSummary {
        counts: c,
        disagreement_rate: c.disagreements() as f64 / c.total() as f64,
        ensemble2_retained: c.both_pos + c.both_neg,
    })
}

/// Join two per-review label lists by id. Ids missing from either side are
/// returned separately, in sorted order.
pub fn join_predictions(chunker: &[(String, bool)], doc: &[(String, bool)]) -> (Vec<PredictionRecord>, Vec<String>) {
    use std::collections::BTreeMap;
    let doc_by_id: BTreeMap<&str, bool> = doc.iter().map(|(id, l)| (id.as_str(), *l)).collect();
    let chunk_ids: std::collections::BTreeSet<&str> = chunker.iter().map(|(id, _)| id.as_str()).collect();
    let mut out = Vec::with_capacity(chunker.len());
    let mut missing = Vec::new();
    for (id, c) in chunker {
        match doc_by_id.get(id.as_str()) {
            Some(&d) => out.push(PredictionRecord::new(id.clone(), *c, d)),
            None => missing.push(id.clone()),
        }
    }
    missing.extend(
        doc_by_id
            .keys()
            .filter(|id| !chunk_ids.contains(*id))
            .map(|id| id.to_string()),
    );
    missing.sort();
    (out, missing)
}

pub const PREDICTIONS_HEADER: [&str; 5] = ["review_id", "chunker", "doc", "ensemble1", "ensemble2"];

pub fn write_predictions_csv<W: Write>(records: &[PredictionRecord], w: W) -> Result<(), EnsembleError> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(PREDICTIONS_HEADER)?;
    for r in records {
        wr.write_record([
            r.review_id.as_str(),
            bool_str(r.chunker_label),
            bool_str(r.doc_label),
            bool_str(r.ensemble1),
            r.ensemble2.as_str(),
        ])?;
    }
    wr.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Read a predictions file. `ensemble1`/`ensemble2` columns are optional and,
/// when present, must agree with the recomputed votes.
pub fn read_predictions_csv<R: Read>(r: R) -> Result<Vec<PredictionRecord>, EnsembleError> {
    let mut rd = csv::Reader::from_reader(r);
    let headers = rd.headers()?.clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let (Some(id_col), Some(c_col), Some(d_col)) = (col("review_id"), col("chunker"), col("doc")) else {
        return Err(EnsembleError::Malformed {
            line: 1,
            message: "header must contain review_id, chunker, doc".into(),
        });
    };
    let e1_col = col("ensemble1");
    let e2_col = col("ensemble2");
    let mut out = Vec::new();
    for (i, row) in rd.records().enumerate() {
        let row = row?;
        let line = i + 2;
        let bad = |message: String| EnsembleError::Malformed { line, message };
        let field = |c: usize| row.get(c).unwrap_or("");
        let c = parse_bool(field(c_col)).map_err(bad)?;
        let d = parse_bool(field(d_col)).map_err(bad)?;
        let rec = PredictionRecord::new(field(id_col).to_string(), c, d);
        if let Some(e1) = e1_col {
            if parse_bool(field(e1)).map_err(bad)? != rec.ensemble1 {
                return Err(bad("ensemble1 inconsistent with chunker/doc".into()));
            }
        }
        if let Some(e2) = e2_col {
            if field(e2).parse::<Verdict>().map_err(bad)? != rec.ensemble2 {
                return Err(bad("ensemble2 inconsistent with chunker/doc".into()));
            }
        }
        out.push(rec);
    }
    Ok(out)
}

/// Read a two-column `review_id,label` file as written by `tag`/`classify`.
pub fn read_labels_csv<R: Read>(r: R, label_column: &str) -> Result<Vec<(String, bool)>, EnsembleError> {
    let mut rd = csv::Reader::from_reader(r);
    let headers = rd.headers()?.clone();
    let id_col = headers.iter().position(|h| h.trim() == "review_id");
    let l_col = headers
        .iter()
        .position(|h| h.trim() == label_column)
        .or_else(|| headers.iter().position(|h| h.trim() == "label"));
    let (Some(id_col), Some(l_col)) = (id_col, l_col) else {
        return Err(EnsembleError::Malformed {
            line: 1,
            message: format!("header must contain review_id and {label_column} (or label)"),
        });
    };
    let mut out = Vec::new();
    for (i, row) in rd.records().enumerate() {
        let row = row?;
        let label = parse_bool(row.get(l_col).unwrap_or(""))
            .map_err(|message| EnsembleError::Malformed { line: i + 2, message })?;
        out.push((row.get(id_col).unwrap_or("").to_string(), label));
    }
    Ok(out)
}

pub fn bool_str(b: bool) -> &'static str {
    if b {
        "true"
    } else {
        "false"
    }
}

pub fn parse_bool(s: &str) -> Result<bool, String> {
    match s.trim().to_ascii_lowercase().as_str() {
        "true" | "1" | "yes" => Ok(true),
        "false" | "0" | "no" => Ok(false),
        other => Err(format!("expected boolean, got {other:?}")),
    }
}
