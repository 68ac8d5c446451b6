//! Binary classification metrics and Cohen's kappa.
//!
//! Undefined quantities (precision with no predicted positives, kappa when
//! chance agreement is 1) are `None` with a reason, never silently 0.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::{self, Write as _};
use std::hash::Hash;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Iob, LabeledReview};

#[derive(Debug, Error, PartialEq)]
pub enum EvalError {
    #[error("length mismatch: {0} vs {1}")]
    LengthMismatch(usize, usize),
    #[error("empty input")]
    Empty,
    #[error("review ids differ between annotators: {0:?}")]
    IdMismatch(Vec<String>),
    #[error("review {0}: texts differ between annotators")]
    TextMismatch(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub tp: usize,
    pub fp: usize,
    #[serde(rename = "fn")]
    pub fn_: usize,
    pub tn: usize,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    /// `2tp / (2tp + fp + fn)`; absent only when that denominator is 0.
    pub f1: Option<f64>,
    pub accuracy: f64,
    pub kappa: Option<f64>,
    /// One entry per absent metric.
    pub undefined: Vec<String>,
}

impl MetricReport {
    pub fn from_counts(tp: usize, fp: usize, fn_: usize, tn: usize) -> Result<Self, EvalError> {
        let total = tp + fp + fn_ + tn;
        if total == 0 {
            return Err(EvalError::Empty);
        }
        let mut undefined = Vec::new();
        let ratio = |num: usize, den: usize, what: &str, undefined: &mut Vec<String>| {
            if den == 0 {
                undefined.push(what.to_string());
                None
            } else {
                Some(num as f64 / den as f64)
            }
        };
        let precision = ratio(tp, tp + fp, "precision: no predicted positives", &mut undefined);
        let recall = ratio(tp, tp + fn_, "recall: no gold positives", &mut undefined);
        let f1 = ratio(
            2 * tp,
            2 * tp + fp + fn_,
            "f1: no positives predicted or gold",
            &mut undefined,
        );
        let kappa = kappa_from_table(&[vec![tp, fn_], vec![fp, tn]]);
        if kappa.is_none() {
            undefined.push("kappa: chance agreement is 1".into());
        }
        Ok(MetricReport {
            tp,
            fp,
            fn_,
            tn,
            precision,
            recall,
            f1,
            accuracy: (tp + tn) as f64 / total as f64,
            kappa,
            undefined,
        })
    }

    pub fn total(&self) -> usize {
        self.tp + self.fp + self.fn_ + self.tn
    }
}

pub fn score(pred: &[bool], gold: &[bool]) -> Result<MetricReport, EvalError> {
    if pred.len() != gold.len() {
        return Err(EvalError::LengthMismatch(pred.len(), gold.len()));
    }
    let (mut tp, mut fp, mut fn_, mut tn) = (0, 0, 0, 0);
    for (&p, &g) in pred.iter().zip(gold) {
        match (p, g) {
            (true, true) => tp += 1,
            (true, false) => fp += 1,
            (false, true) => fn_ += 1,
            (false, false) => tn += 1,
        }
    }
    MetricReport::from_counts(tp, fp, fn_, tn)
}

/// Kappa from a square agreement table (`table[i][j]`: rater A said i, B said j).
/// `None` when the table is empty or chance agreement is 1.
pub fn kappa_from_table(table: &[Vec<usize>]) -> Option<f64> {
    let k = table.len();
    let n: usize = table.iter().flatten().sum();
    if n == 0 {
        return None;
    }
    let n = n as f64;
    let p_o = (0..k).map(|i| table[i][i]).sum::<usize>() as f64 / n;
    let p_e: f64 = (0..k)
        .map(|i| {
            let row: usize = table[i].iter().sum();
            let col: usize = table.iter().map(|r| r[i]).sum();
            (row as f64 / n) * (col as f64 / n)
        })
        .sum();
    if (1.0 - p_e).abs() < 1e-15 {
        return None;
    }
    Some((p_o - p_e) / (1.0 - p_e))
}

/// Cohen's kappa over any finite label set. `Ok(None)` when chance
/// agreement is 1 (both raters constant and equal).
pub fn cohen_kappa<T: Ord + Clone>(a: &[T], b: &[T]) -> Result<Option<f64>, EvalError> {
    if a.len() != b.len() {
        return Err(EvalError::LengthMismatch(a.len(), b.len()));
    }
    if a.is_empty() {
        return Err(EvalError::Empty);
    }
    let labels: BTreeSet<&T> = a.iter().chain(b).collect();
    let index: BTreeMap<&T, usize> = labels.iter().enumerate().map(|(i, l)| (*l, i)).collect();
    let mut table = vec![vec![0usize; index.len()]; index.len()];
    for (x, y) in a.iter().zip(b) {
        table[index[x]][index[y]] += 1;
    }
    Ok(kappa_from_table(&table))
}

/// Qualitative bands for kappa; upper edges are inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KappaBand {
    Poor,
    Slight,
    Fair,
    Moderate,
    Substantial,
    AlmostPerfect,
}

impl KappaBand {
    pub fn of(kappa: f64) -> KappaBand {
        match kappa {
            k if k <= 0.0 => KappaBand::Poor,
            k if k <= 0.20 => KappaBand::Slight,
            k if k <= 0.40 => KappaBand::Fair,
            k if k <= 0.60 => KappaBand::Moderate,
            k if k <= 0.80 => KappaBand::Substantial,
            _ => KappaBand::AlmostPerfect,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            KappaBand::Poor => "poor",
            KappaBand::Slight => "slight",
            KappaBand::Fair => "fair",
            KappaBand::Moderate => "moderate",
            KappaBand::Substantial => "substantial",
            KappaBand::AlmostPerfect => "almost perfect",
        }
    }
}

impl fmt::Display for KappaBand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// How token tags are compared for span-level kappa.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SpanKappaMode {
    /// In-span versus out-of-span; B and I collapse.
    #[default]
    Binarized,
    ThreeClass,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KappaValue {
    pub kappa: Option<f64>,
    pub band: Option<KappaBand>,
}

impl KappaValue {
    fn new(kappa: Option<f64>) -> Self {
        KappaValue {
            kappa,
            band: kappa.map(KappaBand::of),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReviewDiff {
    pub review_id: String,
    pub doc_a: bool,
    pub doc_b: bool,
    /// Token indices whose tags differ (three-class comparison).
    pub tokens: Vec<usize>,
    pub tags_a: String,
    pub tags_b: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgreementReport {
    pub n_reviews: usize,
    pub n_tokens: usize,
    pub span_kappa: KappaValue,
    pub span_kappa_three_class: KappaValue,
    pub doc_kappa: KappaValue,
    pub diffs: Vec<ReviewDiff>,
}

impl AgreementReport {
    pub fn span(&self, mode: SpanKappaMode) -> &KappaValue {
        match mode {
            SpanKappaMode::Binarized => &self.span_kappa,
            SpanKappaMode::ThreeClass => &self.span_kappa_three_class,
        }
    }

    pub fn to_text(&self) -> String {
        let mut s = String::new();
        let line = |name: &str, v: &KappaValue| match (v.kappa, v.band) {
            (Some(k), Some(b)) => format!("{name:<28} {k:>7.3}  {b}\n"),
            _ => format!("{name:<28} {:>7}  undefined (chance agreement is 1)\n", "-"),
        };
        let _ = writeln!(s, "reviews {}, tokens {}", self.n_reviews, self.n_tokens);
        s.push_str(&line("span kappa (binarized)", &self.span_kappa));
        s.push_str(&line("span kappa (B/I/O)", &self.span_kappa_three_class));
        s.push_str(&line("document kappa", &self.doc_kappa));
        let _ = writeln!(s, "{} reviews with disagreements", self.diffs.len());
        for d in &self.diffs {
            let _ = writeln!(
                s,
                "  {}: doc {} vs {}; tokens {:?}\n    A {}\n    B {}",
                d.review_id, d.doc_a, d.doc_b, d.tokens, d.tags_a, d.tags_b
            );
        }
        s
    }
}

/// Compare two annotators over the same reviews (matched by id).
pub fn agreement_report(a: &[LabeledReview], b: &[LabeledReview]) -> Result<AgreementReport, EvalError> {
    let by_id = |c: &[LabeledReview]| -> BTreeMap<String, LabeledReview> {
        c.iter().map(|l| (l.review.review_id.clone(), l.clone())).collect()
    };
    let (ma, mb) = (by_id(a), by_id(b));
    let ids_a: BTreeSet<&String> = ma.keys().collect();
    let ids_b: BTreeSet<&String> = mb.keys().collect();
    if ids_a != ids_b {
        let diff: Vec<String> = ids_a.symmetric_difference(&ids_b).map(|s| s.to_string()).collect();
        return Err(EvalError::IdMismatch(diff));
    }
    if ma.is_empty() {
        return Err(EvalError::Empty);
    }
    let (mut tags_a, mut tags_b) = (Vec::new(), Vec::new());
    let (mut doc_a, mut doc_b) = (Vec::new(), Vec::new());
    let mut diffs = Vec::new();
    for (id, la) in &ma {
        let lb = &mb[id];
        if la.review.text != lb.review.text || la.iob.len() != lb.iob.len() {
            return Err(EvalError::TextMismatch(id.clone()));
        }
        tags_a.extend_from_slice(&la.iob);
        tags_b.extend_from_slice(&lb.iob);
        doc_a.push(la.doc_label);
        doc_b.push(lb.doc_label);
        let tokens: Vec<usize> = (0..la.iob.len()).filter(|&i| la.iob[i] != lb.iob[i]).collect();
        if !tokens.is_empty() || la.doc_label != lb.doc_label {
            let show = |t: &[Iob]| t.iter().map(|x| x.as_str()).collect::<Vec<_>>().join(" ");
            diffs.push(ReviewDiff {
                review_id: id.clone(),
                doc_a: la.doc_label,
                doc_b: lb.doc_label,
                tokens,
                tags_a: show(&la.iob),
                tags_b: show(&lb.iob),
            });
        }
    }
    let bin = |t: &[Iob]| t.iter().map(|x| *x != Iob::O).collect::<Vec<bool>>();
    // zero-token corpora have no span agreement to measure
    let span = |x: Option<f64>| if tags_a.is_empty() { None } else { x };
    Ok(AgreementReport {
        n_reviews: ma.len(),
        n_tokens: tags_a.len(),
        span_kappa: KappaValue::new(span(cohen_kappa(&bin(&tags_a), &bin(&tags_b)).unwrap_or(None))),
        span_kappa_three_class: KappaValue::new(span(cohen_kappa(&tags_a, &tags_b).unwrap_or(None))),
        doc_kappa: KappaValue::new(cohen_kappa(&doc_a, &doc_b)?),
        diffs,
    })
}

fn cell(v: Option<f64>) -> String {
    v.map_or_else(|| "-".to_string(), |x| format!("{x:.3}"))
}

/// Fixed-width table with one row per named report.
pub fn metrics_table(rows: &[(String, MetricReport)]) -> String {
    let mut s = format!(
        "{:<20} {:>6} {:>6} {:>6} {:>6} {:>6}\n",
        "model", "Prec.", "Rec.", "F1", "Acc.", "κ"
    );
    for (name, r) in rows {
        let _ = writeln!(
            s,
            "{:<20} {:>6} {:>6} {:>6} {:>6} {:>6}",
            name,
            cell(r.precision),
            cell(r.recall),
            cell(r.f1),
            cell(Some(r.accuracy)),
            cell(r.kappa)
        );
    }
    s
}

/// CSV with header `model,tp,fp,fn,tn,precision,recall,f1,accuracy,kappa`;
/// absent values are empty fields.
pub fn metrics_csv(rows: &[(String, MetricReport)]) -> String {
    let mut s = String::from("model,tp,fp,fn,tn,precision,recall,f1,accuracy,kappa\n");
    let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for (name, r) in rows {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            name,
            r.tp,
            r.fp,
            r.fn_,
            r.tn,
            opt(r.precision),
            opt(r.recall),
            opt(r.f1),
            r.accuracy,
            opt(r.kappa)
        );
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::test_review;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn perfect_agreement() {
        let g = [true, false, true, false, false];
        let r = score(&g, &g).unwrap();
        for v in [r.precision, r.recall, r.f1, Some(r.accuracy), r.kappa] {
            assert_eq!(v, Some(1.0));
        }
        assert!(r.undefined.is_empty());
    }

    #[test]
    fn formula_example() {
        let r = MetricReport::from_counts(8, 4, 2, 86).unwrap();
        assert_relative_eq!(r.precision.unwrap(), 8.0 / 12.0);
        assert_relative_eq!(r.recall.unwrap(), 0.8);
        assert_relative_eq!(r.f1.unwrap(), 16.0 / 22.0);
        assert_relative_eq!(r.accuracy, 0.94);
        assert_eq!(format!("{:.3}", r.precision.unwrap()), "0.667");
        assert_eq!(format!("{:.3}", r.f1.unwrap()), "0.727");
    }

    #[test]
    fn all_negative_predictions() {
        let r = score(&[false; 4], &[true, false, true, false]).unwrap();
        assert_eq!(r.precision, None);
        assert_eq!(r.recall, Some(0.0));
        assert_eq!(r.f1, Some(0.0));
        assert!(r.undefined.iter().any(|u| u.starts_with("precision")));
    }

    #[test]
    fn score_errors() {
        assert_eq!(score(&[true], &[]), Err(EvalError::LengthMismatch(1, 0)));
        assert_eq!(score(&[], &[]), Err(EvalError::Empty));
    }

    #[test]
    fn kappa_examples() {
        assert_eq!(cohen_kappa(&[1, 0, 1, 0], &[1, 0, 1, 0]).unwrap(), Some(1.0));
        assert_eq!(cohen_kappa(&[0, 0, 0, 0], &[1, 0, 1, 0]).unwrap(), Some(0.0));
        // p_o = 0.70; marginals (25,25) and (30,20) give p_e = 0.5
        let k = kappa_from_table(&[vec![20, 5], vec![10, 15]]).unwrap();
        assert_relative_eq!(k, 0.4, epsilon = 1e-12);
        assert_eq!(cohen_kappa(&[1, 1], &[1, 1]).unwrap(), None);
        assert_eq!(cohen_kappa(&[1], &[1, 2]), Err(EvalError::LengthMismatch(1, 2)));
    }

    #[test]
    fn bands() {
        assert_eq!(KappaBand::of(0.801), KappaBand::AlmostPerfect);
        assert_eq!(KappaBand::of(0.785), KappaBand::Substantial);
        assert_eq!(KappaBand::of(0.80), KappaBand::Substantial);
        assert_eq!(KappaBand::of(0.5), KappaBand::Moderate);
        assert_eq!(KappaBand::of(0.3), KappaBand::Fair);
        assert_eq!(KappaBand::of(0.1), KappaBand::Slight);
        assert_eq!(KappaBand::of(-0.2), KappaBand::Poor);
    }

    fn lab(id: &str, text: &str, iob: &[Iob]) -> LabeledReview {
        LabeledReview::from_iob(test_review(id, text), iob.to_vec()).unwrap()
    }

    #[test]
    fn identical_annotators() {
        let c = vec![
            lab("a", "so hot", &[Iob::O, Iob::B]),
            lab("b", "so dull", &[Iob::O, Iob::O]),
        ];
        let r = agreement_report(&c, &c).unwrap();
        assert_eq!(r.span_kappa.kappa, Some(1.0));
        assert_eq!(r.doc_kappa.kappa, Some(1.0));
        assert!(r.diffs.is_empty());
    }

    #[test]
    fn span_modes_differ_on_fixture() {
        use Iob::*;
        let texts = [
            "easy on the eyes",
            "very hot guy",
            "so cute",
            "nice and smart",
            "great class",
            "hard tests",
            "hot hot",
            "pretty boy",
            "fine",
            "boring class",
        ];
        let a_tags: [&[Iob]; 10] = [
            &[B, I, I, I],
            &[O, B, I],
            &[O, B],
            &[O, O, O],
            &[O, O],
            &[O, O],
            &[B, B],
            &[B, I],
            &[O],
            &[O, O],
        ];
        let b_tags: [&[Iob]; 10] = [
            &[B, I, I, I],
            &[O, B, O],
            &[B, I],
            &[O, O, B],
            &[O, O],
            &[O, O],
            &[B, I],
            &[O, B],
            &[O],
            &[O, O],
        ];
        let a: Vec<_> = (0..10).map(|i| lab(&format!("r{i}"), texts[i], a_tags[i])).collect();
        let b: Vec<_> = (0..10).map(|i| lab(&format!("r{i}"), texts[i], b_tags[i])).collect();
        let r = agreement_report(&a, &b).unwrap();

        // oracle: hand-built tables over the 22 tokens
        let flat = |t: &[&[Iob]; 10]| t.iter().flat_map(|x| x.iter().copied()).collect::<Vec<_>>();
        let (fa, fb) = (flat(&a_tags), flat(&b_tags));
        let mut bin = [[0usize; 2]; 2];
        let mut tri = [[0usize; 3]; 3];
        for (x, y) in fa.iter().zip(&fb) {
            bin[(*x != O) as usize][(*y != O) as usize] += 1;
            tri[x.index()][y.index()] += 1;
        }
        let k_bin = kappa_from_table(&bin.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap();
        let k_tri = kappa_from_table(&tri.iter().map(|r| r.to_vec()).collect::<Vec<_>>()).unwrap();
        assert_relative_eq!(r.span_kappa.kappa.unwrap(), k_bin, epsilon = 1e-12);
        assert_relative_eq!(r.span_kappa_three_class.kappa.unwrap(), k_tri, epsilon = 1e-12);
        assert!((k_bin - k_tri).abs() > 1e-3);
        assert_eq!(r.diffs.len(), 5);
        assert!(r.to_text().contains("binarized"));
    }

    #[test]
    fn id_mismatch() {
        let a = vec![lab("a", "x", &[Iob::O])];
        let b = vec![lab("b", "x", &[Iob::O])];
        assert!(matches!(agreement_report(&a, &b), Err(EvalError::IdMismatch(_))));
    }

    #[test]
    fn table_shows_dash_for_absent() {
        let r = score(&[false, false], &[false, false]).unwrap();
        let t = metrics_table(&[("chunker".into(), r.clone())]);
        let row = t.lines().nth(1).unwrap();
        assert_eq!(
            row.split_whitespace().collect::<Vec<_>>(),
            ["chunker", "-", "-", "-", "1.000", "-"]
        );
        let c = metrics_csv(&[("chunker".into(), r)]);
        assert_eq!(c.lines().nth(1).unwrap(), "chunker,0,0,0,2,,,,1,");
    }

    fn brute_kappa(a: &[bool], b: &[bool]) -> Option<f64> {
        let n = a.len() as f64;
        let agree = a.iter().zip(b).filter(|(x, y)| x == y).count() as f64 / n;
        let pa = a.iter().filter(|x| **x).count() as f64 / n;
        let pb = b.iter().filter(|x| **x).count() as f64 / n;
        let pe = pa * pb + (1.0 - pa) * (1.0 - pb);
        if pe == 1.0 {
            None
        } else {
            Some((agree - pe) / (1.0 - pe))
        }
    }

    proptest! {
        #[test]
        fn kappa_properties(pairs in prop::collection::vec((any::<bool>(), any::<bool>()), 1..80)) {
            let a: Vec<bool> = pairs.iter().map(|p| p.0).collect();
            let b: Vec<bool> = pairs.iter().map(|p| p.1).collect();
            let kab = cohen_kappa(&a, &b).unwrap();
            prop_assert_eq!(kab, cohen_kappa(&b, &a).unwrap());
            if a.iter().any(|x| *x) && a.iter().any(|x| !*x) {
                prop_assert_eq!(cohen_kappa(&a, &a).unwrap(), Some(1.0));
            }
            match (kab, brute_kappa(&a, &b)) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-12),
                (x, y) => prop_assert_eq!(x, y),
            }
            // complementing both raters leaves accuracy and kappa unchanged
            let na: Vec<bool> = a.iter().map(|x| !x).collect();
            let nb: Vec<bool> = b.iter().map(|x| !x).collect();
            let r = score(&a, &b).unwrap();
            let rc = score(&na, &nb).unwrap();
            prop_assert!((r.accuracy - rc.accuracy).abs() < 1e-12);
            match (r.kappa, rc.kappa) {
                (Some(x), Some(y)) => prop_assert!((x - y).abs() < 1e-12),
                (x, y) => prop_assert_eq!(x, y),
            }
            prop_assert_eq!(r.tp, rc.tn);
            prop_assert_eq!(r.fp, rc.fn_);
            if let Some(f1) = r.f1 {
                prop_assert_eq!(f1 == 0.0, r.tp == 0);
            }
        }
    }
}
