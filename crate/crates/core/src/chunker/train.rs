use std::collections::BTreeMap;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{
    encode_with, extract_features, feature_key, prepare, ChunkError, ChunkModel, FEATURE_NAMES, FORMAT_VERSION, UNK,
};
use crate::corpus::{Iob, LabeledReview};
use crate::textproc::{Lexicon, PosModel};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChunkConfig {
    pub l2_lambda: f64,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    /// Feature values seen fewer times map to the per-name UNK column.
    pub min_count: usize,
    pub seed: u64,
}

impl Default for ChunkConfig {
    fn default() -> Self {
        ChunkConfig {
            l2_lambda: 1e-4,
            epochs: 20,
            learning_rate: 0.1,
            batch_size: 16,
            min_count: 2,
            seed: 0,
        }
    }
}

/// Training tokens as active-column lists with gold classes.
#[derive(Debug, Clone)]
pub struct EncodedCorpus {
    pub n_features: usize,
    pub rows: Vec<Vec<usize>>,
    /// Class index in `Iob::ORDER`.
    pub labels: Vec<usize>,
    /// `n / (3 n_c)`; 0 for absent classes.
    pub class_weights: [f64; 3],
}

impl EncodedCorpus {
    pub fn new(n_features: usize, rows: Vec<Vec<usize>>, labels: Vec<usize>) -> Self {
        let mut counts = [0usize; 3];
        for &y in &labels {
            counts[y] += 1;
        }
        let n = labels.len() as f64;
        let class_weights = counts.map(|c| if c == 0 { 0.0 } else { n / (3.0 * c as f64) });
        EncodedCorpus {
            n_features,
            rows,
            labels,
            class_weights,
        }
    }
}

/// Class-weighted mean cross-entropy plus `λ/2 ‖W‖²` (bias unpenalized).
///
/// Parameters are flattened as the 3 × n weight rows followed by 3 biases.
pub struct ChunkObjective<'a> {
    pub data: &'a EncodedCorpus,
    pub l2_lambda: f64,
}

impl ChunkObjective<'_> {
    pub fn n_params(&self) -> usize {
        3 * self.data.n_features + 3
    }

    fn logits(&self, params: &[f64], row: &[usize]) -> [f64; 3] {
        let n = self.data.n_features;
        let mut z = [params[3 * n], params[3 * n + 1], params[3 * n + 2]];
        for (c, zc) in z.iter_mut().enumerate() {
            *zc += row.iter().map(|&j| params[c * n + j]).sum::<f64>();
        }
        z
    }

    pub fn value(&self, params: &[f64]) -> f64 {
        self.value_and_grad_inner(params, false).0
    }

    pub fn value_and_grad(&self, params: &[f64]) -> (f64, Vec<f64>) {
        self.value_and_grad_inner(params, true)
    }

    fn value_and_grad_inner(&self, params: &[f64], want_grad: bool) -> (f64, Vec<f64>) {
        let n = self.data.n_features;
        let m = self.data.rows.len() as f64;
        let mut grad = if want_grad {
            vec![0.0; self.n_params()]
        } else {
            Vec::new()
        };
        let mut loss = 0.0;
        for (row, &y) in self.data.rows.iter().zip(&self.data.labels) {
            let z = self.logits(params, row);
            let (p, lse) = softmax(&z);
            let w = self.data.class_weights[y];
            loss += w * (lse - z[y]);
            if want_grad {
                for c in 0..3 {
                    let g = w * (p[c] - f64::from(u8::from(c == y))) / m;
                    for &j in row {
                        grad[c * n + j] += g;
                    }
                    grad[3 * n + c] += g;
                }
            }
        }
        let mut reg = 0.0;
        for i in 0..3 * n {
            reg += params[i] * params[i];
            if want_grad {
                grad[i] += self.l2_lambda * params[i];
            }
        }
        (loss / m + 0.5 * self.l2_lambda * reg, grad)
    }
}

/// Probabilities and log-sum-exp, computed stably.
fn softmax(z: &[f64; 3]) -> ([f64; 3], f64) {
    let mx = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let e = z.map(|v| (v - mx).exp());
    let s: f64 = e.iter().sum();
    (e.map(|v| v / s), mx + s.ln())
}

fn flatten(weights: &[Vec<f64>], bias: &[f64; 3]) -> Vec<f64> {
    weights.iter().flatten().chain(bias.iter()).copied().collect()
}

/// Fit the tagger with gold previous labels (teacher forcing).
///
/// Mini-batch gradient descent over a seeded token order. After each epoch
/// the full objective is evaluated; if it rose, the epoch is undone and the
/// learning rate halved, so the recorded loss never increases.
pub fn train(
    corpus: &[&LabeledReview],
    config: &ChunkConfig,
    pos: &PosModel,
    hot: &Lexicon,
) -> Result<ChunkModel, ChunkError> {
    if corpus.is_empty() {
        return Err(ChunkError::Empty);
    }
    if !corpus.iter().any(|l| l.iob.contains(&Iob::B)) {
        return Err(ChunkError::NoPositiveSpans);
    }
    let tokens = prepare(corpus, pos);
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (toks, l) in tokens.iter().zip(corpus) {
        features.extend(extract_features(toks, &l.iob, hot)?);
        labels.extend(l.iob.iter().map(|t| t.index()));
    }

    let mut counts: BTreeMap<String, usize> = BTreeMap::new();
    for fv in &features {
        for (name, value) in fv.active() {
            *counts.entry(feature_key(name, &value)).or_default() += 1;
        }
    }
    let mut keys: Vec<String> = counts
        .into_iter()
        .filter(|(_, c)| *c >= config.min_count.max(1))
        .map(|(k, _)| k)
        .collect();
    keys.extend(FEATURE_NAMES.iter().map(|n| feature_key(n, UNK)));
    keys.sort();
    keys.dedup();
    let vocab: BTreeMap<String, usize> = keys.into_iter().enumerate().map(|(i, k)| (k, i)).collect();

    let rows: Vec<Vec<usize>> = features.iter().map(|fv| encode_with(&vocab, fv)).collect();
    let data = EncodedCorpus::new(vocab.len(), rows, labels);
    let objective = ChunkObjective {
        data: &data,
        l2_lambda: config.l2_lambda,
    };

    let n = vocab.len();
    let mut params = vec![0.0; 3 * n + 3];
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..data.rows.len()).collect();
    let mut lr = config.learning_rate;
    let mut prev_loss = objective.value(&params);
    let mut history = Vec::with_capacity(config.epochs);
    let batch = config.batch_size.max(1);

    for epoch in 0..config.epochs {
        let snapshot = params.clone();
        order.shuffle(&mut rng);
        let mut step: Vec<(usize, f64)> = Vec::new();
        for chunk in order.chunks(batch) {
            // gradient at the batch-start parameters, then one update
            step.clear();
            let scale = lr / chunk.len() as f64;
            for &i in chunk {
                let row = &data.rows[i];
                let y = data.labels[i];
                let (p, _) = softmax(&objective.logits(&params, row));
                let w = data.class_weights[y];
                for c in 0..3 {
                    let g = scale * w * (p[c] - f64::from(u8::from(c == y)));
                    step.extend(row.iter().map(|&j| (c * n + j, g)));
                    step.push((3 * n + c, g));
                }
            }
            let decay = 1.0 - lr * config.l2_lambda;
            for p in &mut params[..3 * n] {
                *p *= decay;
            }
            for &(k, g) in &step {
                params[k] -= g;
            }
        }
        let loss = objective.value(&params);
        if !loss.is_finite() {
            return Err(ChunkError::NonFinite {
                epoch,
                learning_rate: lr,
                last_loss: prev_loss,
            });
        }
        if loss > prev_loss {
            params = snapshot;
            lr *= 0.5;
        } else {
            prev_loss = loss;
        }
        history.push(prev_loss);
    }

    let weights: Vec<Vec<f64>> = (0..3).map(|c| params[c * n..(c + 1) * n].to_vec()).collect();
    let bias = [params[3 * n], params[3 * n + 1], params[3 * n + 2]];
    debug_assert_eq!(flatten(&weights, &bias), params);
    Ok(ChunkModel {
        format_version: FORMAT_VERSION,
        feature_vocab: vocab,
        class_order: Iob::ORDER,
        weights,
        bias,
        config: *config,
        hot_lexicon: hot
            .words()
            .map(str::to_string)
            .chain(hot.phrases().map(|p| p.join(" ")))
            .collect(),
        loss_history: history,
    })
}
