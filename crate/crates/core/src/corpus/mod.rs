//! Review data model, file ingestion and validation, train/dev splitting,
//! test-set sampling and synthetic corpus generation.

mod io;
mod sample;
mod split;
mod synthetic;

use std::collections::{BTreeMap, HashMap};

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::textproc::{pronoun_profile, tokenize, Gender, Lexicons, Token};

pub use io::{
    load_corpus, load_corpus_str, write_corpus, write_corpus_string, Format, LoadOptions, LoadReport, RecordError,
};
pub use sample::{sample_test_set, Stratum, TestSetRequest};
pub use split::{split_train_dev, CorpusSplit, TRAIN_FRACTION};
pub use synthetic::{generate_synthetic_corpus, SyntheticConfig};

/// Date the site removed its chili-pepper rating.
pub fn default_pepper_cutoff() -> NaiveDate {
    NaiveDate::from_ymd_opt(2018, 6, 28).expect("valid date")
}

/// Pepper rating shown on the site at `date` (strictly before the cutoff).
pub fn pepper_present(date: NaiveDate, cutoff: NaiveDate) -> bool {
    date < cutoff
}

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("line {line}: {message}")]
    Malformed { line: usize, message: String },
    #[error("duplicate review_id {id:?} (lines {first} and {second})")]
    DuplicateId { id: String, first: usize, second: usize },
    #[error("review {id}: {message}")]
    Invalid { id: String, message: String },
    #[error("need at least {need} labeled reviews to split, got {got}")]
    TooFewToSplit { need: usize, got: usize },
    #[error("stratum {stratum} has {available} reviews, {requested} requested")]
    PoolTooSmall {
        stratum: Stratum,
        available: usize,
        requested: usize,
    },
    #[error("positive_rate must be within [0, 1], got {0}")]
    BadRate(f64),
    #[error("synthetic generation needs a non-empty {0} lexicon")]
    EmptyLexicon(&'static str),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// One anonymous review with its metadata.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Review {
    pub review_id: String,
    pub professor_id: String,
    pub school: String,
    pub subject: String,
    pub text: String,
    pub date: NaiveDate,
    pub quality: Option<f64>,
    pub difficulty: Option<f64>,
    /// Professor gender from metadata, when the source provides it.
    pub gender: Option<Gender>,
    pub pepper_present: bool,
}

impl Review {
    /// Check field invariants; `pepper_present` is recomputed from `cutoff`.
    pub fn validate(&mut self, cutoff: NaiveDate) -> Result<(), String> {
        if self.review_id.trim().is_empty() {
            return Err("empty review_id".into());
        }
        if self.text.trim().is_empty() {
            return Err("empty text".into());
        }
        for (name, v) in [("quality", self.quality), ("difficulty", self.difficulty)] {
            if let Some(v) = v {
                if !(1.0..=5.0).contains(&v) {
                    return Err(format!("{name} {v} outside [1, 5]"));
                }
            }
        }
        self.pepper_present = pepper_present(self.date, cutoff);
        Ok(())
    }

    pub fn tokens(&self) -> Vec<Token> {
        tokenize(&self.text)
    }
}

/// Per-token chunk label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Iob {
    O,
    B,
    I,
}

impl Iob {
    /// Fixed class order used by the chunk model; also the tie-break order.
    pub const ORDER: [Iob; 3] = [Iob::O, Iob::B, Iob::I];

    pub fn index(self) -> usize {
        match self {
            Iob::O => 0,
            Iob::B => 1,
            Iob::I => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Iob::O => "O",
            Iob::B => "B",
            Iob::I => "I",
        }
    }
}

impl std::str::FromStr for Iob {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        // accept typed CoNLL tags such as B-ATTR
        match s.split('-').next().unwrap_or("") {
            "O" => Ok(Iob::O),
            "B" => Ok(Iob::B),
            "I" => Ok(Iob::I),
            _ => Err(format!("bad IOB tag {s:?}")),
        }
    }
}

/// `I` never follows `O` or starts a sequence.
pub fn iob_well_formed(tags: &[Iob]) -> bool {
    let mut prev = Iob::O;
    for &t in tags {
        if t == Iob::I && prev == Iob::O {
            return false;
        }
        prev = t;
    }
    true
}

/// Turn stray `I` tags into `B`.
pub fn repair_iob(tags: &mut [Iob]) {
    let mut prev = Iob::O;
    for t in tags.iter_mut() {
        if *t == Iob::I && prev == Iob::O {
            *t = Iob::B;
        }
        prev = *t;
    }
}

/// Token index ranges `[start, end)` of the chunks in a well-formed sequence.
pub fn iob_chunks(tags: &[Iob]) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    let mut open: Option<usize> = None;
    for (i, &t) in tags.iter().enumerate() {
        match t {
            Iob::B => {
                if let Some(s) = open.take() {
                    out.push((s, i));
                }
                open = Some(i);
            }
            Iob::I => {
                if open.is_none() {
                    open = Some(i);
                }
            }
            Iob::O => {
                if let Some(s) = open.take() {
                    out.push((s, i));
                }
            }
        }
    }
    if let Some(s) = open {
        out.push((s, tags.len()));
    }
    out
}

/// Project character spans onto tokens: a token is inside a span when
/// their character ranges overlap.
pub fn spans_to_iob(tokens: &[Token], spans: &[(usize, usize)]) -> Vec<Iob> {
    let mut tags = vec![Iob::O; tokens.len()];
    let mut sorted = spans.to_vec();
    sorted.sort();
    for (s, e) in sorted {
        let mut first = true;
        for (i, t) in tokens.iter().enumerate() {
            if t.char_start < e && t.char_end > s {
                if tags[i] == Iob::O {
                    tags[i] = if first { Iob::B } else { Iob::I };
                }
                first = false;
            }
        }
    }
    tags
}

/// Character spans covering each chunk of `tags`.
pub fn iob_to_spans(tokens: &[Token], tags: &[Iob]) -> Vec<(usize, usize)> {
    iob_chunks(tags)
        .into_iter()
        .map(|(s, e)| (tokens[s].char_start, tokens[e - 1].char_end))
        .collect()
}

/// A review with span-level gold annotation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabeledReview {
    pub review: Review,
    /// Gold spans as character offsets; the IOB sequence is derived from them.
    pub spans: Vec<(usize, usize)>,
    pub iob: Vec<Iob>,
    pub doc_label: bool,
}

impl LabeledReview {
    /// Build from character spans, projecting them onto this crate's tokens.
    pub fn from_spans(review: Review, spans: Vec<(usize, usize)>) -> Result<Self, String> {
        let n_chars = review.text.chars().count();
        let mut sorted = spans.clone();
        sorted.sort();
        for w in sorted.windows(2) {
            if w[1].0 < w[0].1 {
                return Err(format!("overlapping spans {:?} and {:?}", w[0], w[1]));
            }
        }
        for &(s, e) in &sorted {
            if s >= e || e > n_chars {
                return Err(format!("span [{s}, {e}) out of bounds for {n_chars} characters"));
            }
        }
        let tokens = review.tokens();
        let iob = spans_to_iob(&tokens, &spans);
        if !sorted.is_empty() && !iob.contains(&Iob::B) {
            return Err("spans cover no tokens".into());
        }
        let doc_label = iob.contains(&Iob::B);
        Ok(LabeledReview {
            review,
            spans: sorted,
            iob,
            doc_label,
        })
    }

    /// Build from an explicit tag sequence aligned to this crate's tokens.
    pub fn from_iob(review: Review, iob: Vec<Iob>) -> Result<Self, String> {
        let tokens = review.tokens();
        if iob.len() != tokens.len() {
            return Err(format!(
                "iob length mismatch: {} tokens, {} tags",
                tokens.len(),
                iob.len()
            ));
        }
        if !iob_well_formed(&iob) {
            return Err("iob not well formed: I after O".into());
        }
        let spans = iob_to_spans(&tokens, &iob);
        let doc_label = iob.contains(&Iob::B);
        Ok(LabeledReview {
            review,
            spans,
            iob,
            doc_label,
        })
    }

    pub fn tokens(&self) -> Vec<Token> {
        self.review.tokens()
    }
}

/// A loaded record: a review plus whatever gold annotation it carried.
#[derive(Debug, Clone, PartialEq)]
pub enum Record {
    Unlabeled(Review),
    /// Document-level label only (e.g. an adjudicated test item).
    DocLabeled(Review, bool),
    Labeled(LabeledReview),
}

impl Record {
    pub fn review(&self) -> &Review {
        match self {
            Record::Unlabeled(r) | Record::DocLabeled(r, _) => r,
            Record::Labeled(l) => &l.review,
        }
    }

    pub fn doc_label(&self) -> Option<bool> {
        match self {
            Record::Unlabeled(_) => None,
            Record::DocLabeled(_, d) => Some(*d),
            Record::Labeled(l) => Some(l.doc_label),
        }
    }

    pub fn labeled(&self) -> Option<&LabeledReview> {
        match self {
            Record::Labeled(l) => Some(l),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Professor {
    pub professor_id: String,
    pub gender: Gender,
    pub review_ids: Vec<String>,
}

/// Group reviews by professor. Gender comes from review metadata when any
/// review carries it, otherwise from pooled third-person pronoun counts.
pub fn professors<'a, I>(reviews: I, lexicons: &Lexicons) -> Vec<Professor>
where
    I: IntoIterator<Item = &'a Review>,
{
    struct Acc {
        ids: Vec<String>,
        meta: Option<Gender>,
        male: usize,
        female: usize,
    }
    let mut by_prof: BTreeMap<&str, Acc> = BTreeMap::new();
    for r in reviews {
        let acc = by_prof.entry(r.professor_id.as_str()).or_insert(Acc {
            ids: Vec::new(),
            meta: None,
            male: 0,
            female: 0,
        });
        acc.ids.push(r.review_id.clone());
        match r.gender {
            Some(g) if g != Gender::Unknown => acc.meta = Some(g),
            _ => {}
        }
        let p = pronoun_profile(&r.tokens(), lexicons);
        acc.male += p.third_m_count;
        acc.female += p.third_f_count;
    }
    by_prof
        .into_iter()
        .map(|(id, acc)| Professor {
            professor_id: id.to_string(),
            gender: acc.meta.unwrap_or_else(|| Gender::from_counts(acc.male, acc.female)),
            review_ids: acc.ids,
        })
        .collect()
}

/// Review, raw-token and token-type counts for a set of reviews.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusStats {
    pub reviews: usize,
    /// Word tokens (punctuation excluded).
    pub word_tokens: usize,
    /// Distinct lowercase word types.
    pub word_types: usize,
}

pub fn corpus_stats<'a, I: IntoIterator<Item = &'a Review>>(reviews: I) -> CorpusStats {
    let mut types: HashMap<String, ()> = HashMap::new();
    let mut n = 0;
    let mut tokens = 0;
    for r in reviews {
        n += 1;
        for t in r.tokens().into_iter().filter(Token::is_word) {
            tokens += 1;
            types.insert(t.lower, ());
        }
    }
    CorpusStats {
        reviews: n,
        word_tokens: tokens,
        word_types: types.len(),
    }
}

#[cfg(test)]
pub(crate) fn test_review(id: &str, text: &str) -> Review {
    Review {
        review_id: id.to_string(),
        professor_id: "p1".into(),
        school: "s".into(),
        subject: "math".into(),
        text: text.to_string(),
        date: NaiveDate::from_ymd_opt(2015, 3, 1).unwrap(),
        quality: Some(4.0),
        difficulty: Some(2.0),
        gender: None,
        pepper_present: true,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn cutoff_boundary() {
        let cut = default_pepper_cutoff();
        assert!(pepper_present(NaiveDate::from_ymd_opt(2018, 6, 27).unwrap(), cut));
        assert!(!pepper_present(NaiveDate::from_ymd_opt(2018, 6, 28).unwrap(), cut));
    }

    #[test]
    fn spans_project_to_iob() {
        let r = test_review("r", "He is easy on the eyes.");
        let l = LabeledReview::from_spans(r, vec![(6, 22)]).unwrap();
        use Iob::*;
        assert_eq!(l.iob, vec![O, O, B, I, I, I, O]);
        assert!(l.doc_label);
        let back = iob_to_spans(&l.tokens(), &l.iob);
        assert_eq!(back, vec![(6, 22)]);
    }

    #[test]
    fn bad_spans_rejected() {
        let r = test_review("r", "hot");
        assert!(LabeledReview::from_spans(r.clone(), vec![(0, 9)]).is_err());
        assert!(LabeledReview::from_spans(r.clone(), vec![(2, 1)]).is_err());
        let r2 = test_review("r", "hot and cute");
        assert!(LabeledReview::from_spans(r2, vec![(0, 5), (4, 8)]).is_err());
        let none = LabeledReview::from_spans(r, vec![]).unwrap();
        assert!(!none.doc_label);
    }

    #[test]
    fn iob_length_mismatch() {
        let r = test_review("r", "He is so hot !");
        let err = LabeledReview::from_iob(r, vec![Iob::O; 4]).unwrap_err();
        assert!(err.contains("iob length mismatch"));
    }

    #[test]
    fn ill_formed_iob_rejected_and_repaired() {
        let mut tags = vec![Iob::O, Iob::I, Iob::I, Iob::O, Iob::I];
        assert!(!iob_well_formed(&tags));
        repair_iob(&mut tags);
        assert_eq!(tags, vec![Iob::O, Iob::B, Iob::I, Iob::O, Iob::B]);
        assert!(iob_well_formed(&tags));
        assert_eq!(iob_chunks(&tags), vec![(1, 3), (4, 5)]);
    }

    #[test]
    fn professors_take_metadata_then_pronouns() {
        let mut a = test_review("a", "She is great and her class rocks");
        a.professor_id = "x".into();
        let mut b = test_review("b", "he was fine");
        b.professor_id = "y".into();
        let mut c = test_review("c", "he was fine");
        c.professor_id = "z".into();
        c.gender = Some(Gender::Female);
        let profs = professors([&a, &b, &c], &Lexicons::default());
        let g: Vec<Gender> = profs.iter().map(|p| p.gender).collect();
        assert_eq!(g, vec![Gender::Female, Gender::Male, Gender::Female]);
    }

    #[test]
    fn stats_count_tokens_and_types() {
        let a = test_review("a", "Hot hot class!");
        let s = corpus_stats([&a]);
        assert_eq!((s.reviews, s.word_tokens, s.word_types), (1, 3, 2));
    }

    proptest! {
        #[test]
        fn pepper_is_monotone(days in -4000i64..4000) {
            let cut = default_pepper_cutoff();
            let d = cut + chrono::Duration::days(days);
            prop_assert_eq!(pepper_present(d, cut), days < 0);
        }

        #[test]
        fn doc_label_iff_b(text in "[a-z]{1,6}( [a-z]{1,6}){0,8}", pick in 0usize..9) {
            let r = test_review("r", &text);
            let toks = r.tokens();
            let k = pick % toks.len();
            let l = LabeledReview::from_spans(r, vec![(toks[k].char_start, toks[k].char_end)]).unwrap();
            prop_assert!(l.doc_label);
            prop_assert_eq!(l.iob.iter().filter(|t| **t == Iob::B).count(), 1);
            prop_assert!(iob_well_formed(&l.iob));
        }
    }
}
