use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{groups_label, prepare, train_prepared, DocConfig, DocError, FeatureContext, FeatureGroup, PreparedDoc};
use crate::corpus::Review;
use crate::eval::score;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AblationRow {
    pub subset: String,
    pub groups: BTreeSet<FeatureGroup>,
    pub precision: Option<f64>,
    pub recall: Option<f64>,
    pub f1: Option<f64>,
    pub accuracy: f64,
}

/// The nine engineered-group columns of the reference ablation, in order.
pub fn reference_subsets() -> Vec<BTreeSet<FeatureGroup>> {
    use FeatureGroup::*;
    let all: BTreeSet<FeatureGroup> = FeatureGroup::ALL.into_iter().collect();
    let without = |drop: &[FeatureGroup]| all.iter().copied().filter(|g| !drop.contains(g)).collect();
    vec![
        all.clone(),
        BTreeSet::new(),
        without(&[Readability]),
        without(&[Readability, Formality]),
        [
            LexicalHot,
            LexicalAccent,
            LexicalAppearance,
            Polarity,
            Subjectivity,
            InternetStyle,
        ]
        .into(),
        [LexicalHot, LexicalAccent, LexicalAppearance, InternetStyle].into(),
        [LexicalHot, LexicalAccent, LexicalAppearance].into(),
        [LexicalHot].into(),
        [LexicalHot, LexicalAccent].into(),
    ]
}

/// Retrain once per subset with the other engineered groups masked and
/// score on `dev`. Featurization is shared across subsets.
pub fn ablate(
    train: &[(&Review, bool)],
    dev: &[(&Review, bool)],
    config: &DocConfig,
    subsets: &[BTreeSet<FeatureGroup>],
    ctx: &FeatureContext,
) -> Result<Vec<AblationRow>, DocError> {
    let tr: Vec<PreparedDoc> = train.iter().map(|(r, _)| prepare(r, ctx)).collect();
    let tr_labels: Vec<bool> = train.iter().map(|(_, l)| *l).collect();
    let dv: Vec<PreparedDoc> = dev.iter().map(|(r, _)| prepare(r, ctx)).collect();
    let gold: Vec<bool> = dev.iter().map(|(_, l)| *l).collect();
    subsets
        .iter()
        .map(|groups| {
            let cfg = DocConfig {
                groups: groups.clone(),
                ..config.clone()
            };
            let model = train_prepared(&tr, &tr_labels, &cfg, ctx.lexicons)?;
            let pred: Vec<bool> = dv.iter().map(|d| model.predict_prepared(d).label).collect();
            let m = score(&pred, &gold).map_err(|e| DocError::Format(e.to_string()))?;
            Ok(AblationRow {
                subset: groups_label(groups),
                groups: groups.clone(),
                precision: m.precision,
                recall: m.recall,
                f1: m.f1,
                accuracy: m.accuracy,
            })
        })
        .collect()
}

/// Header `subset,precision,recall,f1,accuracy`; undefined metrics are empty.
pub fn ablation_csv(rows: &[AblationRow]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["subset", "precision", "recall", "f1", "accuracy"])
        .expect("in-memory write");
    let fmt = |x: Option<f64>| x.map(|v| format!("{v:.4}")).unwrap_or_default();
    for r in rows {
        w.write_record([
            r.subset.clone(),
            fmt(r.precision),
            fmt(r.recall),
            fmt(r.f1),
            format!("{:.4}", r.accuracy),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}
