//! Document classifier: linear SVM over tf-idf unigrams/bigrams plus
//! engineered readability, formality, pronoun, lexical, sentiment and
//! internet-style features; and the feature-ablation harness.

mod ablate;
mod features;

use std::collections::BTreeSet;
use std::path::Path;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Review;
use crate::textproc::{analyze, LexiconSentiment, Lexicons, PosModel, SentimentScorer, Token};

pub use ablate::{ablate, ablation_csv, reference_subsets, AblationRow};
pub use features::{
    dense_feature_names, dense_features, groups_label, idf, parse_groups, sentence_count, terms, DocFeatureVector,
    FeatureGroup, TfidfVocabulary,
};

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum DocError {
    #[error("empty training set")]
    Empty,
    #[error("training set has only {0} examples; both classes are required")]
    SingleClass(&'static str),
    #[error("objective diverged (non-finite) at epoch {epoch}")]
    Diverged { epoch: usize },
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

/// Shared resources for featurization.
#[derive(Clone, Copy)]
pub struct FeatureContext<'a> {
    pub lexicons: &'a Lexicons,
    pub pos: &'a PosModel,
    pub sentiment: &'a dyn SentimentScorer,
}

pub fn default_sentiment() -> &'static LexiconSentiment {
    static S: OnceLock<LexiconSentiment> = OnceLock::new();
    S.get_or_init(LexiconSentiment::bundled)
}

impl<'a> FeatureContext<'a> {
    pub fn new(lexicons: &'a Lexicons) -> Self {
        FeatureContext {
            lexicons,
            pos: PosModel::bundled(),
            sentiment: default_sentiment(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocConfig {
    /// SVM cost; the L2 strength is `1 / (c * n)`.
    pub c: f64,
    pub epochs: usize,
    pub batch_size: usize,
    /// Initial step; epoch `e` uses `learning_rate / sqrt(1 + e)`.
    pub learning_rate: f64,
    pub min_df: usize,
    pub use_tfidf: bool,
    /// Engineered feature groups in use; the others are zeroed.
    pub groups: BTreeSet<FeatureGroup>,
    pub seed: u64,
}

impl Default for DocConfig {
    fn default() -> Self {
        DocConfig {
            c: 1.0,
            epochs: 50,
            batch_size: 32,
            learning_rate: 0.5,
            min_df: 2,
            use_tfidf: true,
            groups: FeatureGroup::ALL.into_iter().collect(),
            seed: 0,
        }
    }
}

/// A review reduced to what the classifier needs; independent of config.
#[derive(Debug, Clone)]
pub struct PreparedDoc {
    pub terms: Vec<String>,
    pub dense_raw: Vec<f64>,
}

pub fn prepare_tokens(tokens: &[Token], ctx: &FeatureContext) -> PreparedDoc {
    PreparedDoc {
        terms: terms(tokens),
        dense_raw: dense_features(tokens, ctx.lexicons, ctx.sentiment),
    }
}

pub fn prepare(review: &Review, ctx: &FeatureContext) -> PreparedDoc {
    prepare_tokens(&analyze(&review.text, ctx.pos), ctx)
}

fn mask_dense(dense: &mut [f64], groups: &BTreeSet<FeatureGroup>) {
    for (x, g) in dense.iter_mut().zip(features::dense_layout()) {
        if !groups.contains(&g) {
            *x = 0.0;
        }
    }
}

/// Feature vector for one review; dense values are raw, masked groups zero.
pub fn featurize(
    review: &Review,
    vocab: &TfidfVocabulary,
    mask: &BTreeSet<FeatureGroup>,
    ctx: &FeatureContext,
) -> DocFeatureVector {
    let p = prepare(review, ctx);
    let mut dense = p.dense_raw;
    mask_dense(&mut dense, mask);
    DocFeatureVector {
        sparse: vocab.transform(&p.terms),
        dense,
    }
}

/// Per-feature training mean and population standard deviation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
    /// Zero variance on the training data; centred but not divided.
    pub constant: Vec<bool>,
}

impl Scaling {
    pub fn fit(rows: &[Vec<f64>]) -> Scaling {
        let d = rows.first().map_or(0, Vec::len);
        let n = rows.len().max(1) as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            for (m, x) in mean.iter_mut().zip(r) {
                *m += x;
            }
        }
        mean.iter_mut().for_each(|m| *m /= n);
        let mut var = vec![0.0; d];
        for r in rows {
            for ((v, x), m) in var.iter_mut().zip(r).zip(&mean) {
                *v += (x - m) * (x - m);
            }
        }
        let std: Vec<f64> = var.iter().map(|v| (v / n).sqrt()).collect();
        let constant = std
            .iter()
            .zip(&mean)
            .map(|(s, m)| *s <= 1e-12 * m.abs().max(1.0))
            .collect();
        Scaling { mean, std, constant }
    }

    pub fn apply(&self, x: &mut [f64]) {
        for (i, v) in x.iter_mut().enumerate() {
            *v -= self.mean[i];
            if !self.constant[i] {
                *v /= self.std[i];
            }
        }
    }
}

/// Weighted hinge loss plus `λ/2 ‖w‖²`; the bias is unpenalized.
///
/// Parameters are the weight vector followed by the bias.
pub struct SvmObjective<'a> {
    pub rows: &'a [Vec<(usize, f64)>],
    /// +1 or -1.
    pub labels: &'a [f64],
    pub example_weights: &'a [f64],
    pub dim: usize,
    pub lambda: f64,
}

impl SvmObjective<'_> {
    fn margin(params: &[f64], row: &[(usize, f64)], dim: usize) -> f64 {
        params[dim] + row.iter().map(|&(j, x)| params[j] * x).sum::<f64>()
    }

    pub fn value(&self, params: &[f64]) -> f64 {
        let n = self.rows.len() as f64;
        let hinge: f64 = self
            .rows
            .iter()
            .zip(self.labels)
            .zip(self.example_weights)
            .map(|((r, y), c)| c * (1.0 - y * Self::margin(params, r, self.dim)).max(0.0))
            .sum();
        let reg: f64 = params[..self.dim].iter().map(|w| w * w).sum();
        0.5 * self.lambda * reg + hinge / n
    }

    /// Subgradient; exact gradient wherever no margin equals 1.
    pub fn subgradient(&self, params: &[f64]) -> Vec<f64> {
        let n = self.rows.len() as f64;
        let mut g: Vec<f64> = params[..self.dim].iter().map(|w| self.lambda * w).collect();
        g.push(0.0);
        for ((r, y), c) in self.rows.iter().zip(self.labels).zip(self.example_weights) {
            if y * Self::margin(params, r, self.dim) < 1.0 {
                for &(j, x) in r {
                    g[j] -= c * y * x / n;
                }
                g[self.dim] -= c * y / n;
            }
        }
        g
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DocPrediction {
    pub label: bool,
    pub margin: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocModel {
    pub format_version: u32,
    #[serde(flatten)]
    pub vocab: TfidfVocabulary,
    pub dense_feature_names: Vec<String>,
    pub scaling: Scaling,
    /// Sparse block weights, then dense block weights.
    pub weights: Vec<f64>,
    pub bias: f64,
    pub config: DocConfig,
    /// Positive-class and negative-class loss weights.
    pub class_weights: [f64; 2],
    pub lexicons: Lexicons,
    /// Objective of the returned parameters after each epoch's best-so-far.
    pub objective_history: Vec<f64>,
}

impl DocModel {
    fn row(&self, p: &PreparedDoc) -> Vec<(usize, f64)> {
        build_row(p, &self.vocab, &self.scaling, &self.config)
    }

    pub fn predict_prepared(&self, p: &PreparedDoc) -> DocPrediction {
        let margin = SvmObjective::margin(
            &[self.weights.as_slice(), &[self.bias]].concat(),
            &self.row(p),
            self.weights.len(),
        );
        DocPrediction {
            label: margin > 0.0,
            margin,
        }
    }

    /// Classify with the model's own lexicons and the bundled POS and
    /// sentiment resources.
    pub fn predict(&self, review: &Review) -> DocPrediction {
        let ctx = FeatureContext::new(&self.lexicons);
        self.predict_prepared(&prepare(review, &ctx))
    }

    pub fn predict_with(&self, review: &Review, ctx: &FeatureContext) -> DocPrediction {
        self.predict_prepared(&prepare(review, ctx))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, DocError> {
        let m: DocModel = serde_json::from_str(s)?;
        if m.format_version != FORMAT_VERSION {
            return Err(DocError::Format(format!(
                "unsupported format_version {} (expected {FORMAT_VERSION})",
                m.format_version
            )));
        }
        let d = m.dense_feature_names.len();
        if m.weights.len() != m.vocab.len() + d || m.vocab.idf.len() != m.vocab.len() || m.scaling.mean.len() != d {
            return Err(DocError::Format("dimension mismatch".into()));
        }
        if m.dense_feature_names != dense_feature_names() {
            return Err(DocError::Format("dense feature layout differs from this build".into()));
        }
        if m.weights.iter().chain([&m.bias]).any(|w| !w.is_finite()) {
            return Err(DocError::Format("non-finite weight".into()));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), DocError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, DocError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

fn build_row(p: &PreparedDoc, vocab: &TfidfVocabulary, scaling: &Scaling, config: &DocConfig) -> Vec<(usize, f64)> {
    let mut row = if config.use_tfidf {
        vocab.transform(&p.terms)
    } else {
        Vec::new()
    };
    let mut dense = p.dense_raw.clone();
    scaling.apply(&mut dense);
    mask_dense(&mut dense, &config.groups);
    let off = vocab.len();
    row.extend(
        dense
            .into_iter()
            .enumerate()
            .filter(|(_, x)| *x != 0.0)
            .map(|(i, x)| (off + i, x)),
    );
    row
}

/// `n / (2 n_pos)` and `n / (2 n_neg)`.
pub fn class_weights(labels: &[bool]) -> [f64; 2] {
    let n = labels.len() as f64;
    let pos = labels.iter().filter(|l| **l).count() as f64;
    [n / (2.0 * pos), n / (2.0 * (n - pos))]
}

pub fn train(examples: &[(&Review, bool)], config: &DocConfig, ctx: &FeatureContext) -> Result<DocModel, DocError> {
    let prepared: Vec<PreparedDoc> = examples.iter().map(|(r, _)| prepare(r, ctx)).collect();
    let labels: Vec<bool> = examples.iter().map(|(_, l)| *l).collect();
    train_prepared(&prepared, &labels, config, ctx.lexicons)
}

/// Fit by seeded mini-batch subgradient descent, returning the parameters
/// with the lowest full objective seen at any epoch end.
pub fn train_prepared(
    docs: &[PreparedDoc],
    labels: &[bool],
    config: &DocConfig,
    lexicons: &Lexicons,
) -> Result<DocModel, DocError> {
    if docs.is_empty() {
        return Err(DocError::Empty);
    }
    if labels.iter().all(|l| *l) {
        return Err(DocError::SingleClass("positive"));
    }
    if labels.iter().all(|l| !*l) {
        return Err(DocError::SingleClass("negative"));
    }
    let vocab = if config.use_tfidf {
        TfidfVocabulary::build(docs.iter().map(|d| d.terms.as_slice()), config.min_df)
    } else {
        TfidfVocabulary::empty()
    };
    let scaling = Scaling::fit(&docs.iter().map(|d| d.dense_raw.clone()).collect::<Vec<_>>());
    let rows: Vec<Vec<(usize, f64)>> = docs.iter().map(|d| build_row(d, &vocab, &scaling, config)).collect();
    let dim = vocab.len() + scaling.mean.len();
    let cw = class_weights(labels);
    let ys: Vec<f64> = labels.iter().map(|&l| if l { 1.0 } else { -1.0 }).collect();
    let example_weights: Vec<f64> = labels.iter().map(|&l| if l { cw[0] } else { cw[1] }).collect();
    let n = docs.len();
    let objective = SvmObjective {
        rows: &rows,
        labels: &ys,
        example_weights: &example_weights,
        dim,
        lambda: 1.0 / (config.c * n as f64),
    };

    let mut params = vec![0.0; dim + 1];
    let mut best = params.clone();
    let mut best_obj = objective.value(&params);
    let mut history = Vec::with_capacity(config.epochs);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..n).collect();
    let batch = config.batch_size.max(1);

    for epoch in 0..config.epochs {
        let eta = config.learning_rate / ((1 + epoch) as f64).sqrt();
        order.shuffle(&mut rng);
        for chunk in order.chunks(batch) {
            let mut step: Vec<(usize, f64)> = Vec::new();
            let mut bias_step = 0.0;
            for &i in chunk {
                if ys[i] * SvmObjective::margin(&params, &rows[i], dim) < 1.0 {
                    let s = eta * example_weights[i] * ys[i] / chunk.len() as f64;
                    step.extend(rows[i].iter().map(|&(j, x)| (j, s * x)));
                    bias_step += s;
                }
            }
            let decay = 1.0 - eta * objective.lambda;
            params[..dim].iter_mut().for_each(|w| *w *= decay);
            for (j, s) in step {
                params[j] += s;
            }
            params[dim] += bias_step;
        }
        let obj = objective.value(&params);
        if !obj.is_finite() {
            return Err(DocError::Diverged { epoch });
        }
        if obj < best_obj {
            best_obj = obj;
            best.clone_from(&params);
        }
        history.push(best_obj);
    }

    Ok(DocModel {
        format_version: FORMAT_VERSION,
        vocab,
        dense_feature_names: dense_feature_names().into_iter().map(String::from).collect(),
        scaling,
        bias: best[dim],
        weights: best[..dim].to_vec(),
        config: config.clone(),
        class_weights: cw,
        lexicons: lexicons.clone(),
        objective_history: history,
    })
}
