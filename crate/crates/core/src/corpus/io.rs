use std::collections::HashMap;
use std::fs;
use std::io::Write;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::{default_pepper_cutoff, CorpusError, Iob, LabeledReview, Record, Review};
use crate::textproc::Gender;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Jsonl,
    Csv,
}

impl Format {
    /// Guess from a file extension; anything but `.csv` is JSONL.
    pub fn from_path(path: &Path) -> Format {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => Format::Csv,
            _ => Format::Jsonl,
        }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct LoadOptions {
    pub format: Format,
    /// Skip malformed lines instead of failing the whole load.
    pub lenient: bool,
    pub pepper_cutoff: NaiveDate,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            format: Format::Jsonl,
            lenient: false,
            pepper_cutoff: default_pepper_cutoff(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RecordError {
    pub line: usize,
    pub review_id: Option<String>,
    pub message: String,
}

#[derive(Debug, Clone, Default)]
pub struct LoadReport {
    pub records: Vec<Record>,
    /// Records that were skipped, with the reason.
    pub errors: Vec<RecordError>,
}

impl LoadReport {
    pub fn reviews(&self) -> impl Iterator<Item = &Review> {
        self.records.iter().map(Record::review)
    }

    pub fn labeled(&self) -> impl Iterator<Item = &LabeledReview> {
        self.records.iter().filter_map(Record::labeled)
    }
}

/// Wire form shared by the JSONL and CSV encodings.
#[derive(Debug, Clone, Serialize, Deserialize)]
struct WireRecord {
    review_id: String,
    professor_id: String,
    #[serde(default)]
    school: String,
    #[serde(default)]
    subject: String,
    text: String,
    date: String,
    #[serde(default)]
    quality: Option<f64>,
    #[serde(default)]
    difficulty: Option<f64>,
    #[serde(default)]
    gender: Option<Gender>,
    #[serde(default)]
    spans: Option<Vec<[usize; 2]>>,
    #[serde(default)]
    doc_label: Option<bool>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    iob: Option<Vec<String>>,
}

enum Problem {
    /// The line itself is unusable.
    Malformed(String),
    /// The review parsed but its annotation is inconsistent.
    Annotation(String),
}

fn to_record(w: WireRecord, cutoff: NaiveDate) -> Result<Record, Problem> {
    let date = NaiveDate::parse_from_str(&w.date, "%Y-%m-%d")
        .map_err(|e| Problem::Malformed(format!("date {:?}: {e}", w.date)))?;
    let mut review = Review {
        review_id: w.review_id,
        professor_id: w.professor_id,
        school: w.school,
        subject: w.subject,
        text: w.text,
        date,
        quality: w.quality,
        difficulty: w.difficulty,
        gender: w.gender,
        pepper_present: false,
    };
    review.validate(cutoff).map_err(Problem::Malformed)?;

    let labeled = match (w.spans, w.iob) {
        (None, None) => None,
        (Some(spans), None) => Some(
            LabeledReview::from_spans(review.clone(), spans.iter().map(|s| (s[0], s[1])).collect())
                .map_err(Problem::Annotation)?,
        ),
        (spans, Some(tags)) => {
            let tags: Vec<Iob> = tags
                .iter()
                .map(|t| t.parse())
                .collect::<Result<_, _>>()
                .map_err(Problem::Annotation)?;
            let l = LabeledReview::from_iob(review.clone(), tags).map_err(Problem::Annotation)?;
            if let Some(spans) = spans {
                let s = LabeledReview::from_spans(review.clone(), spans.iter().map(|s| (s[0], s[1])).collect())
                    .map_err(Problem::Annotation)?;
                if s.iob != l.iob {
                    return Err(Problem::Annotation("spans and iob disagree".into()));
                }
            }
            Some(l)
        }
    };
    match (labeled, w.doc_label) {
        (Some(l), Some(d)) if d != l.doc_label => Err(Problem::Annotation(format!(
            "doc_label {d} inconsistent with spans (doc_label must be true exactly when a span is present)"
        ))),
        (Some(l), _) => Ok(Record::Labeled(l)),
        (None, Some(d)) => Ok(Record::DocLabeled(review, d)),
        (None, None) => Ok(Record::Unlabeled(review)),
    }
}

fn to_wire(rec: &Record) -> WireRecord {
    let r = rec.review();
    let (spans, doc_label) = match rec {
        Record::Unlabeled(_) => (None, None),
        Record::DocLabeled(_, d) => (None, Some(*d)),
        Record::Labeled(l) => (Some(l.spans.iter().map(|&(s, e)| [s, e]).collect()), Some(l.doc_label)),
    };
    WireRecord {
        review_id: r.review_id.clone(),
        professor_id: r.professor_id.clone(),
        school: r.school.clone(),
        subject: r.subject.clone(),
        text: r.text.clone(),
        date: r.date.format("%Y-%m-%d").to_string(),
        quality: r.quality,
        difficulty: r.difficulty,
        gender: r.gender,
        spans,
        doc_label,
        iob: None,
    }
}

pub fn load_corpus(path: &Path, opts: &LoadOptions) -> Result<LoadReport, CorpusError> {
    let text = fs::read_to_string(path)?;
    load_corpus_str(&text, opts)
}

pub fn load_corpus_str(text: &str, opts: &LoadOptions) -> Result<LoadReport, CorpusError> {
    let wires: Vec<(usize, Result<WireRecord, String>)> = match opts.format {
        Format::Jsonl => text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| (i + 1, serde_json::from_str(l).map_err(|e| e.to_string())))
            .collect(),
        Format::Csv => read_csv(text)?,
    };

    let mut report = LoadReport::default();
    let mut seen: HashMap<String, usize> = HashMap::new();
    for (line, wire) in wires {
        let wire = match wire {
            Ok(w) => w,
            Err(message) => {
                if !opts.lenient {
                    return Err(CorpusError::Malformed { line, message });
                }
                report.errors.push(RecordError {
                    line,
                    review_id: None,
                    message,
                });
                continue;
            }
        };
        let id = wire.review_id.clone();
        if let Some(&first) = seen.get(&id) {
            return Err(CorpusError::DuplicateId {
                id,
                first,
                second: line,
            });
        }
        seen.insert(id.clone(), line);
        match to_record(wire, opts.pepper_cutoff) {
            Ok(rec) => report.records.push(rec),
            Err(Problem::Malformed(message)) if !opts.lenient => {
                return Err(CorpusError::Malformed { line, message });
            }
            Err(Problem::Malformed(message)) | Err(Problem::Annotation(message)) => {
                report.errors.push(RecordError {
                    line,
                    review_id: Some(id),
                    message,
                });
            }
        }
    }
    Ok(report)
}

const CSV_HEADER: [&str; 11] = [
    "review_id",
    "professor_id",
    "school",
    "subject",
    "text",
    "date",
    "quality",
    "difficulty",
    "gender",
    "spans",
    "doc_label",
];

fn read_csv(text: &str) -> Result<Vec<(usize, Result<WireRecord, String>)>, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new().flexible(true).from_reader(text.as_bytes());
    let headers = rdr.headers()?.clone();
    let col: HashMap<&str, usize> = headers.iter().enumerate().map(|(i, h)| (h.trim(), i)).collect();
    for required in ["review_id", "professor_id", "text", "date"] {
        if !col.contains_key(required) {
            return Err(CorpusError::Malformed {
                line: 1,
                message: format!("missing CSV column {required:?}"),
            });
        }
    }
    let mut out = Vec::new();
    for row in rdr.records() {
        let row = row?;
        let line = row.position().map_or(0, |p| p.line() as usize);
        let get = |name: &str| -> Option<&str> { col.get(name).and_then(|&i| row.get(i)).filter(|s| !s.is_empty()) };
        let parsed = (|| -> Result<WireRecord, String> {
            let num = |name: &str| -> Result<Option<f64>, String> {
                get(name)
                    .map(|s| s.parse::<f64>().map_err(|e| format!("{name}: {e}")))
                    .transpose()
            };
            // "[]" marks a span-annotated review with no spans
            let spans = get("spans")
                .map(|s| {
                    s.trim_matches(|c| c == '[' || c == ']')
                        .split(';')
                        .filter(|p| !p.trim().is_empty())
                        .map(|p| {
                            let (a, b) = p
                                .trim()
                                .split_once('-')
                                .ok_or_else(|| format!("span {p:?} is not start-end"))?;
                            Ok([
                                a.parse().map_err(|e| format!("span start {a:?}: {e}"))?,
                                b.parse().map_err(|e| format!("span end {b:?}: {e}"))?,
                            ])
                        })
                        .collect::<Result<Vec<[usize; 2]>, String>>()
                })
                .transpose()?;
            Ok(WireRecord {
                review_id: get("review_id").unwrap_or_default().to_string(),
                professor_id: get("professor_id").unwrap_or_default().to_string(),
                school: get("school").unwrap_or_default().to_string(),
                subject: get("subject").unwrap_or_default().to_string(),
                text: get("text").unwrap_or_default().to_string(),
                date: get("date").unwrap_or_default().to_string(),
                quality: num("quality")?,
                difficulty: num("difficulty")?,
                gender: get("gender").map(str::parse).transpose()?,
                spans,
                doc_label: get("doc_label")
                    .map(|s| s.trim().parse::<bool>().map_err(|e| format!("doc_label: {e}")))
                    .transpose()?,
                iob: None,
            })
        })();
        out.push((line, parsed));
    }
    Ok(out)
}

pub fn write_corpus_string(records: &[Record], format: Format) -> Result<String, CorpusError> {
    match format {
        Format::Jsonl => {
            let mut s = String::new();
            for r in records {
                s.push_str(&serde_json::to_string(&to_wire(r)).expect("record serializes"));
                s.push('\n');
            }
            Ok(s)
        }
        Format::Csv => {
            let mut w = csv::Writer::from_writer(Vec::new());
            w.write_record(CSV_HEADER)?;
            for r in records {
                let wr = to_wire(r);
                let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
                w.write_record([
                    wr.review_id,
                    wr.professor_id,
                    wr.school,
                    wr.subject,
                    wr.text,
                    wr.date,
                    opt(wr.quality),
                    opt(wr.difficulty),
                    wr.gender.map(|g| g.as_str().to_string()).unwrap_or_default(),
                    wr.spans
                        .map(|s| {
                            if s.is_empty() {
                                return "[]".to_string();
                            }
                            s.iter().map(|[a, b]| format!("{a}-{b}")).collect::<Vec<_>>().join(";")
                        })
                        .unwrap_or_default(),
                    wr.doc_label.map(|d| d.to_string()).unwrap_or_default(),
                ])?;
            }
            let bytes = w.into_inner().map_err(|e| e.into_error())?;
            Ok(String::from_utf8(bytes).expect("csv output is utf-8"))
        }
    }
}

pub fn write_corpus(path: &Path, records: &[Record], format: Format) -> Result<(), CorpusError> {
    let s = write_corpus_string(records, format)?;
    let mut f = fs::File::create(path)?;
    f.write_all(s.as_bytes())?;
    Ok(())
}
