//! IOB span tagger: per-token features, multinomial logistic regression,
//! greedy left-to-right decoding.
//!
//! Boolean features are indicators: `has_hot`, `all_caps`, `prev_all_caps`
//! and `next_all_caps` contribute a weight only when true.

mod train;

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{repair_iob, Iob, LabeledReview};
use crate::textproc::{lexicon_match, Lexicon, LexiconName, PosModel, PosTag, Token};

pub use train::{train, ChunkConfig, ChunkObjective, EncodedCorpus};

pub const FORMAT_VERSION: u32 = 1;
pub const START: &str = "[START]";
pub const END: &str = "[END]";
pub const UNK: &str = "<UNK>";

pub const FEATURE_NAMES: [&str; 12] = [
    "word_lower",
    "lemma",
    "pos",
    "has_hot",
    "next_word",
    "next_pos",
    "prev_word",
    "prev_pos",
    "prev_iob",
    "all_caps",
    "prev_all_caps",
    "next_all_caps",
];

#[derive(Debug, Error)]
pub enum ChunkError {
    #[error("token {index} ({surface:?}) has no POS tag")]
    Untagged { index: usize, surface: String },
    #[error("no positive spans in training corpus; refusing to fit an all-O model")]
    NoPositiveSpans,
    #[error("empty training corpus")]
    Empty,
    #[error("non-finite loss at epoch {epoch} (learning rate {learning_rate}, last finite loss {last_loss})")]
    NonFinite {
        epoch: usize,
        learning_rate: f64,
        last_loss: f64,
    },
    #[error("model file: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenFeatureVector {
    pub word_lower: String,
    pub lemma: String,
    pub pos: PosTag,
    pub has_hot: bool,
    pub next_word: String,
    pub next_pos: String,
    pub prev_word: String,
    pub prev_pos: String,
    pub prev_iob: Iob,
    pub all_caps: bool,
    pub prev_all_caps: bool,
    pub next_all_caps: bool,
}

impl TokenFeatureVector {
    /// `name=value` strings for the active features, in `FEATURE_NAMES` order.
    pub fn active(&self) -> Vec<(&'static str, String)> {
        let mut v = vec![
            ("word_lower", self.word_lower.clone()),
            ("lemma", self.lemma.clone()),
            ("pos", self.pos.as_str().to_string()),
        ];
        if self.has_hot {
            v.push(("has_hot", "true".into()));
        }
        v.push(("next_word", self.next_word.clone()));
        v.push(("next_pos", self.next_pos.clone()));
        v.push(("prev_word", self.prev_word.clone()));
        v.push(("prev_pos", self.prev_pos.clone()));
        v.push(("prev_iob", self.prev_iob.as_str().to_string()));
        for (name, on) in [
            ("all_caps", self.all_caps),
            ("prev_all_caps", self.prev_all_caps),
            ("next_all_caps", self.next_all_caps),
        ] {
            if on {
                v.push((name, "true".into()));
            }
        }
        v
    }
}

fn require_tags(tokens: &[Token]) -> Result<Vec<PosTag>, ChunkError> {
    tokens
        .iter()
        .enumerate()
        .map(|(index, t)| {
            t.pos.ok_or_else(|| ChunkError::Untagged {
                index,
                surface: t.surface.clone(),
            })
        })
        .collect()
}

/// Per-token hot-lexicon flags for a sequence.
pub fn hot_flags(tokens: &[Token], hot: &Lexicon) -> Vec<bool> {
    let hits = lexicon_match(tokens, hot);
    (0..tokens.len()).map(|i| hits.contains(&i)).collect()
}

/// Features for position `i`, given the label assigned at `i - 1`.
fn features_at(tokens: &[Token], tags: &[PosTag], hot: &[bool], i: usize, prev_iob: Iob) -> TokenFeatureVector {
    let t = &tokens[i];
    let prev = i.checked_sub(1);
    let next = (i + 1 < tokens.len()).then_some(i + 1);
    TokenFeatureVector {
        word_lower: t.lower.clone(),
        lemma: t.lemma.clone(),
        pos: tags[i],
        has_hot: hot[i],
        next_word: next.map_or(END.to_string(), |j| tokens[j].lower.clone()),
        next_pos: next.map_or(END.to_string(), |j| tags[j].as_str().to_string()),
        prev_word: prev.map_or(START.to_string(), |j| tokens[j].lower.clone()),
        prev_pos: prev.map_or(START.to_string(), |j| tags[j].as_str().to_string()),
        prev_iob,
        all_caps: t.all_caps,
        prev_all_caps: prev.is_some_and(|j| tokens[j].all_caps),
        next_all_caps: next.is_some_and(|j| tokens[j].all_caps),
    }
}

/// One feature vector per token. `prev_labels[i]` is the label at `i`
/// (gold during training); position 0 sees `O`.
pub fn extract_features(
    tokens: &[Token],
    prev_labels: &[Iob],
    hot: &Lexicon,
) -> Result<Vec<TokenFeatureVector>, ChunkError> {
    let tags = require_tags(tokens)?;
    let flags = hot_flags(tokens, hot);
    Ok((0..tokens.len())
        .map(|i| {
            let prev = if i == 0 {
                Iob::O
            } else {
                prev_labels.get(i - 1).copied().unwrap_or(Iob::O)
            };
            features_at(tokens, &tags, &flags, i, prev)
        })
        .collect())
}

/// True when any tag is not `O`.
pub fn doc_label(iob: &[Iob]) -> bool {
    iob.iter().any(|t| *t != Iob::O)
}

/// Trained chunk tagger. Serialized as versioned JSON.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChunkModel {
    pub format_version: u32,
    /// `name=value` → column; every feature name has a `name=<UNK>` entry.
    pub feature_vocab: BTreeMap<String, usize>,
    pub class_order: [Iob; 3],
    /// One row per class in `class_order`.
    pub weights: Vec<Vec<f64>>,
    pub bias: [f64; 3],
    pub config: ChunkConfig,
    /// Hot lexicon used for `has_hot`, stored so the model is self-contained.
    pub hot_lexicon: Vec<String>,
    /// Full-data objective after each epoch.
    pub loss_history: Vec<f64>,
}

impl ChunkModel {
    pub fn n_features(&self) -> usize {
        self.feature_vocab.len()
    }

    pub fn hot(&self) -> Lexicon {
        Lexicon::new(LexiconName::Hot, self.hot_lexicon.iter()).expect("stored lexicon is valid")
    }

    /// Column indices for a feature vector; unseen values fall back to UNK.
    pub fn encode(&self, fv: &TokenFeatureVector) -> Vec<usize> {
        encode_with(&self.feature_vocab, fv)
    }

    /// Per-class scores in `class_order`.
    pub fn scores(&self, columns: &[usize]) -> [f64; 3] {
        let mut s = self.bias;
        for (c, row) in self.weights.iter().enumerate() {
            s[c] += columns.iter().map(|&j| row[j]).sum::<f64>();
        }
        s
    }

    /// Weight of `name=value` for `class`, if in the vocabulary.
    pub fn weight(&self, class: Iob, feature: &str) -> Option<f64> {
        self.feature_vocab.get(feature).map(|&j| self.weights[class.index()][j])
    }

    /// Greedy left-to-right decode. Ties go to the earlier class in
    /// O, B, I order; an `I` not preceded by `B`/`I` becomes `B`.
    pub fn decode(&self, tokens: &[Token]) -> Result<Vec<Iob>, ChunkError> {
        self.decode_with_hot(tokens, &self.hot())
    }

    pub fn decode_with_hot(&self, tokens: &[Token], hot: &Lexicon) -> Result<Vec<Iob>, ChunkError> {
        let tags = require_tags(tokens)?;
        let flags = hot_flags(tokens, hot);
        let mut out: Vec<Iob> = Vec::with_capacity(tokens.len());
        for i in 0..tokens.len() {
            let prev = out.last().copied().unwrap_or(Iob::O);
            let fv = features_at(tokens, &tags, &flags, i, prev);
            let s = self.scores(&self.encode(&fv));
            let mut best = 0;
            for c in 1..3 {
                if s[c] > s[best] {
                    best = c;
                }
            }
            let mut label = self.class_order[best];
            if label == Iob::I && prev == Iob::O {
                label = Iob::B;
            }
            out.push(label);
        }
        repair_iob(&mut out);
        Ok(out)
    }

    /// Tokenize, POS-tag and decode raw text.
    pub fn tag_text(&self, text: &str, pos: &PosModel) -> Vec<(Token, Iob)> {
        let tokens = crate::textproc::analyze(text, pos);
        let iob = self.decode(&tokens).expect("analyze tags every token");
        tokens.into_iter().zip(iob).collect()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(s: &str) -> Result<Self, ChunkError> {
        let m: ChunkModel = serde_json::from_str(s)?;
        if m.format_version != FORMAT_VERSION {
            return Err(ChunkError::Format(format!(
                "unsupported format_version {} (expected {FORMAT_VERSION})",
                m.format_version
            )));
        }
        let n = m.feature_vocab.len();
        if m.weights.len() != 3 || m.weights.iter().any(|r| r.len() != n) {
            return Err(ChunkError::Format("weights shape does not match vocabulary".into()));
        }
        if m.feature_vocab.values().copied().collect::<BTreeSet<_>>() != (0..n).collect() {
            return Err(ChunkError::Format("vocabulary indices are not 0..n".into()));
        }
        if m.weights.iter().flatten().chain(&m.bias).any(|w| !w.is_finite()) {
            return Err(ChunkError::Format("non-finite weight".into()));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), ChunkError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self, ChunkError> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }
}

pub(crate) fn feature_key(name: &str, value: &str) -> String {
    format!("{name}={value}")
}

pub(crate) fn encode_with(vocab: &BTreeMap<String, usize>, fv: &TokenFeatureVector) -> Vec<usize> {
    fv.active()
        .into_iter()
        .filter_map(|(name, value)| {
            vocab
                .get(&feature_key(name, &value))
                .or_else(|| vocab.get(&feature_key(name, UNK)))
                .copied()
        })
        .collect()
}

/// Tokenize and POS-tag every review once.
pub fn prepare(corpus: &[&LabeledReview], pos: &PosModel) -> Vec<Vec<Token>> {
    corpus
        .iter()
        .map(|l| crate::textproc::analyze(&l.review.text, pos))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{generate_synthetic_corpus, iob_well_formed, SyntheticConfig};
    use crate::textproc::{analyze, tokenize, Lexicons};
    use proptest::prelude::*;

    fn tagged(text: &str) -> Vec<Token> {
        analyze(text, PosModel::bundled())
    }

    #[test]
    fn cut_column() {
        let lx = Lexicons::default();
        let toks = tagged("He is CUT for a Stanford professor");
        let fv = extract_features(&toks, &[Iob::O; 7], lx.hot()).unwrap();
        let cut = &fv[2];
        assert_eq!(cut.word_lower, "cut");
        assert_eq!(cut.lemma, "cut");
        assert!(!cut.has_hot);
        assert_eq!(cut.prev_word, "is");
        assert_eq!(cut.next_word, "for");
        assert!(cut.all_caps);
        assert!(!cut.prev_all_caps);
        assert!(!cut.next_all_caps);
        assert_eq!(cut.prev_iob, Iob::O);
        assert_eq!(fv[0].prev_word, START);
        assert_eq!(fv[0].prev_pos, START);
        assert_eq!(fv[6].next_word, END);
    }

    #[test]
    fn single_hot_token() {
        let lx = Lexicons::default();
        let fv = extract_features(&tagged("hot"), &[], lx.hot()).unwrap();
        assert!(fv[0].has_hot);
        assert_eq!((fv[0].prev_word.as_str(), fv[0].next_word.as_str()), (START, END));
        assert_eq!(fv[0].prev_iob, Iob::O);
    }

    #[test]
    fn elongated_hot_flag() {
        let lx = Lexicons::default();
        let fv = extract_features(&tagged("so hoooottt"), &[Iob::O, Iob::B], lx.hot()).unwrap();
        assert!(fv[1].has_hot);
    }

    #[test]
    fn untagged_is_error() {
        let lx = Lexicons::default();
        assert!(matches!(
            extract_features(&tokenize("a b"), &[], lx.hot()),
            Err(ChunkError::Untagged { index: 0, .. })
        ));
    }

    #[test]
    fn exactly_twelve_names() {
        assert_eq!(FEATURE_NAMES.len(), 12);
        let lx = Lexicons::default();
        let fv = extract_features(&tagged("SO HOT NOW"), &[Iob::O, Iob::B, Iob::O], lx.hot()).unwrap();
        let names: BTreeSet<&str> = fv[1].active().into_iter().map(|(n, _)| n).collect();
        assert_eq!(names, FEATURE_NAMES.into_iter().collect());
    }

    #[test]
    fn doc_label_examples() {
        assert!(doc_label(&[Iob::O, Iob::O, Iob::B, Iob::I, Iob::O]));
        assert!(!doc_label(&[Iob::O; 3]));
        assert!(!doc_label(&[]));
    }

    fn small_model() -> (ChunkModel, Vec<LabeledReview>) {
        let corpus = generate_synthetic_corpus(&SyntheticConfig {
            n_reviews: 200,
            positive_rate: 0.2,
            seed: 4,
            ..SyntheticConfig::default()
        })
        .unwrap();
        let refs: Vec<&LabeledReview> = corpus.iter().collect();
        let m = train(
            &refs,
            &ChunkConfig::default(),
            PosModel::bundled(),
            Lexicons::default().hot(),
        )
        .unwrap();
        (m, corpus)
    }

    #[test]
    fn decode_edge_cases_and_round_trip() {
        let (m, corpus) = small_model();
        assert!(m.decode(&[]).unwrap().is_empty());
        let toks = tagged("Plus, hello, sexy!");
        let a = m.decode(&toks).unwrap();
        assert_eq!(a, m.decode(&toks).unwrap());
        assert_eq!(a[4], Iob::B);

        let back = ChunkModel::from_json(&m.to_json()).unwrap();
        assert_eq!(back, m);
        assert_eq!(back.to_json(), m.to_json());

        // gold doc_label is consistent with gold tags on every review
        for l in &corpus {
            assert_eq!(doc_label(&l.iob), l.doc_label);
        }
    }

    #[test]
    fn rejects_bad_model_files() {
        let (m, _) = small_model();
        let mut v: serde_json::Value = serde_json::from_str(&m.to_json()).unwrap();
        v["format_version"] = 99.into();
        assert!(matches!(
            ChunkModel::from_json(&v.to_string()),
            Err(ChunkError::Format(_))
        ));
        let mut v: serde_json::Value = serde_json::from_str(&m.to_json()).unwrap();
        v["weights"][0].as_array_mut().unwrap().pop();
        assert!(matches!(
            ChunkModel::from_json(&v.to_string()),
            Err(ChunkError::Format(_))
        ));
    }

    #[test]
    fn lexicon_monotone_at_weight_level() {
        let (m, _) = small_model();
        let toks = tagged("He is zorbly");
        let base = Lexicon::new(LexiconName::Hot, ["cute"]).unwrap();
        let mut extended = base.clone();
        extended.insert("zorbly");
        let score_b = |lx: &Lexicon| {
            let fv = extract_features(&toks, &[Iob::O, Iob::O], lx).unwrap();
            m.scores(&m.encode(&fv[2]))[Iob::B.index()]
        };
        let w = m.weight(Iob::B, "has_hot=true").unwrap();
        assert!(w > 0.0);
        let diff = score_b(&extended) - score_b(&base);
        assert!((diff - w).abs() < 1e-12, "{diff} vs {w}");
    }

    #[test]
    fn tie_breaks_to_o() {
        let (mut m, _) = small_model();
        for row in &mut m.weights {
            row.iter_mut().for_each(|w| *w = 0.0);
        }
        m.bias = [0.0; 3];
        assert_eq!(m.decode(&tagged("so hot")).unwrap(), vec![Iob::O, Iob::O]);
        // I is preferred everywhere: repaired to B then I
        m.bias = [0.0, 0.0, 1.0];
        assert_eq!(m.decode(&tagged("so hot")).unwrap(), vec![Iob::B, Iob::I]);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn locality(words in prop::collection::vec("[a-zA-Z]{1,6}", 4..10), swap in "[a-z]{1,6}", t in 0usize..2) {
            let lx = Lexicons::default();
            let text = words.join(" ");
            let mut toks = tagged(&text);
            let mut other = toks.clone();
            let j = t + 2;
            prop_assume!(j < toks.len());
            other[j] = Token::new(swap.clone(), other[j].char_start, other[j].char_start + swap.len());
            other[j].pos = Some(PosTag::X);
            toks.truncate(toks.len());
            let labels = vec![Iob::O; toks.len()];
            let a = extract_features(&toks, &labels, lx.hot()).unwrap();
            let b = extract_features(&other, &labels, lx.hot()).unwrap();
            prop_assert_eq!(&a[t], &b[t]);
        }

        #[test]
        fn decoded_is_well_formed(text in "[a-zA-Z!:) ]{0,40}") {
            let m = decode_model();
            let iob = m.decode(&tagged(&text)).unwrap();
            prop_assert!(iob_well_formed(&iob));
        }
    }

    fn decode_model() -> &'static ChunkModel {
        static M: std::sync::OnceLock<ChunkModel> = std::sync::OnceLock::new();
        M.get_or_init(|| small_model().0)
    }
}
