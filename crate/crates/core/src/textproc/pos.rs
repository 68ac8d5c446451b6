//! Averaged-perceptron part-of-speech tagger.
//!
//! A greedy left-to-right tagger in the style of the classic NLTK/textblob
//! perceptron: sparse string features, one weight per (feature, tag), and
//! weights averaged over every update step. Frequent unambiguous words are
//! resolved from a tag dictionary before the model is consulted.

use std::collections::{BTreeMap, HashMap};
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{PosTag, Token};

const N_TAGS: usize = PosTag::ALL.len();
const START: [&str; 2] = ["-START-", "-START2-"];
const END: [&str; 2] = ["-END-", "-END2-"];

#[derive(Debug, Error)]
pub enum PosError {
    #[error("tokens carry no part-of-speech tags and no trained model was given")]
    Untagged,
    #[error("tagged corpus line {line}: {message}")]
    Corpus { line: usize, message: String },
    #[error("tagged corpus is empty")]
    EmptyCorpus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PosTrainConfig {
    pub iterations: usize,
    pub seed: u64,
    /// Words seen at least this often with one tag only go in the tag dictionary.
    pub dict_min_count: usize,
}

impl Default for PosTrainConfig {
    fn default() -> Self {
        PosTrainConfig {
            iterations: 8,
            seed: 1,
            dict_min_count: 3,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PosModel {
    weights: HashMap<String, [f64; N_TAGS]>,
    tag_dict: HashMap<String, PosTag>,
}

/// Sentence as (word, tag) pairs.
pub type TaggedSentence = Vec<(String, PosTag)>;

impl PosModel {
    /// Read a CoNLL-style tagged corpus: `word<TAB>tag` per line, blank line
    /// between sentences. Extra columns are ignored; the tag is the last one.
    pub fn read_conll(text: &str) -> Result<Vec<TaggedSentence>, PosError> {
        let mut out = Vec::new();
        let mut cur = Vec::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim_end();
            if line.is_empty() {
                if !cur.is_empty() {
                    out.push(std::mem::take(&mut cur));
                }
                continue;
            }
            if line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() < 2 {
                return Err(PosError::Corpus {
                    line: i + 1,
                    message: "expected word and tag separated by a tab".into(),
                });
            }
            let tag = cols[cols.len() - 1]
                .parse::<PosTag>()
                .map_err(|message| PosError::Corpus { line: i + 1, message })?;
            cur.push((cols[0].to_string(), tag));
        }
        if !cur.is_empty() {
            out.push(cur);
        }
        if out.is_empty() {
            return Err(PosError::EmptyCorpus);
        }
        Ok(out)
    }

    pub fn train(sentences: &[TaggedSentence], config: &PosTrainConfig) -> Result<Self, PosError> {
        if sentences.is_empty() {
            return Err(PosError::EmptyCorpus);
        }
        let tag_dict = build_tag_dict(sentences, config.dict_min_count);
        let mut trainer = Trainer::default();
        let mut order: Vec<usize> = (0..sentences.len()).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

        for _ in 0..config.iterations {
            for &si in &order {
                let sent = &sentences[si];
                let words: Vec<String> = sent.iter().map(|(w, _)| w.clone()).collect();
                let ctx = context(&words);
                let (mut prev, mut prev2) = (START[0].to_string(), START[1].to_string());
                for (i, (word, gold)) in sent.iter().enumerate() {
                    let guess = match tag_dict.get(&normalize(word)) {
                        Some(&t) => t,
                        None => {
                            let feats = features(i, word, &ctx, &prev, &prev2);
                            let guess = trainer.predict(&feats);
                            trainer.update(*gold, guess, &feats);
                            guess
                        }
                    };
                    prev2 = prev;
                    prev = guess.as_str().to_string();
                }
            }
            order.shuffle(&mut rng);
        }
        Ok(PosModel {
            weights: trainer.averaged(),
            tag_dict,
        })
    }

    /// Model trained on the small review-style corpus shipped with the crate.
    pub fn bundled() -> &'static PosModel {
        static MODEL: OnceLock<PosModel> = OnceLock::new();
        MODEL.get_or_init(|| {
            let corpus =
                Self::read_conll(include_str!("../../data/pos_seed.conll")).expect("bundled POS corpus parses");
            Self::train(&corpus, &PosTrainConfig::default()).expect("bundled POS corpus trains")
        })
    }

    pub fn tag_words(&self, words: &[String]) -> Vec<PosTag> {
        let ctx = context(words);
        let (mut prev, mut prev2) = (START[0].to_string(), START[1].to_string());
        let mut out = Vec::with_capacity(words.len());
        for (i, word) in words.iter().enumerate() {
            let tag = match self.tag_dict.get(&normalize(word)) {
                Some(&t) => t,
                // runs like "??" or "!!!" are rare in training text
                None if word.chars().all(|c| matches!(c, '.' | '!' | '?' | ',' | ';' | ':')) => PosTag::Punct,
                None => {
                    let feats = features(i, word, &ctx, &prev, &prev2);
                    argmax(&score(&self.weights, &feats))
                }
            };
            prev2 = prev;
            prev = tag.as_str().to_string();
            out.push(tag);
        }
        out
    }

    /// Fill `pos` on every token.
    pub fn tag(&self, tokens: &mut [Token]) {
        let words: Vec<String> = tokens.iter().map(|t| t.surface.clone()).collect();
        for (t, tag) in tokens.iter_mut().zip(self.tag_words(&words)) {
            t.pos = Some(tag);
        }
    }

    /// Serialize with sorted keys so equal models give equal bytes.
    pub fn to_json(&self) -> String {
        #[derive(Serialize)]
        struct Sorted<'a> {
            weights: BTreeMap<&'a String, &'a [f64; N_TAGS]>,
            tag_dict: BTreeMap<&'a String, &'a PosTag>,
        }
        serde_json::to_string(&Sorted {
            weights: self.weights.iter().collect(),
            tag_dict: self.tag_dict.iter().collect(),
        })
        .expect("model serializes")
    }
}

/// Tag `tokens` with `model`, or accept tags already present on every token.
pub fn pos_tag(tokens: &mut [Token], model: Option<&PosModel>) -> Result<(), PosError> {
    match model {
        Some(m) => {
            m.tag(tokens);
            Ok(())
        }
        None if tokens.iter().all(|t| t.pos.is_some()) => Ok(()),
        None => Err(PosError::Untagged),
    }
}

fn build_tag_dict(sentences: &[TaggedSentence], min_count: usize) -> HashMap<String, PosTag> {
    let mut counts: BTreeMap<String, BTreeMap<PosTag, usize>> = BTreeMap::new();
    for sent in sentences {
        for (w, t) in sent {
            *counts.entry(normalize(w)).or_default().entry(*t).or_default() += 1;
        }
    }
    counts
        .into_iter()
        .filter_map(|(w, tags)| {
            let total: usize = tags.values().sum();
            if tags.len() == 1 && total >= min_count {
                tags.into_keys().next().map(|t| (w, t))
            } else {
                None
            }
        })
        .collect()
}

fn normalize(word: &str) -> String {
    if word.chars().all(|c| c.is_ascii_digit()) {
        "!DIGITS".to_string()
    } else if word.contains('-') && !word.starts_with('-') {
        "!HYPHEN".to_string()
    } else {
        word.to_lowercase()
    }
}

fn context(words: &[String]) -> Vec<String> {
    let mut ctx = Vec::with_capacity(words.len() + 4);
    ctx.extend(START.iter().map(|s| s.to_string()));
    ctx.extend(words.iter().map(|w| normalize(w)));
    ctx.extend(END.iter().map(|s| s.to_string()));
    ctx
}

fn shape(word: &str) -> String {
    let mut s = String::new();
    for c in word.chars() {
        let k = if c.is_uppercase() {
            'X'
        } else if c.is_lowercase() {
            'x'
        } else if c.is_ascii_digit() {
            'd'
        } else {
            c
        };
        if !s.ends_with(k) {
            s.push(k);
        }
    }
    s
}

fn suffix(s: &str, n: usize) -> &str {
    let start = s.char_indices().rev().nth(n.saturating_sub(1)).map_or(0, |(i, _)| i);
    &s[start..]
}

fn features(i: usize, word: &str, ctx: &[String], prev: &str, prev2: &str) -> Vec<String> {
    let i = i + START.len();
    let w = &ctx[i];
    let first: String = w.chars().take(1).collect();
    vec![
        "bias".to_string(),
        format!("i suffix {}", suffix(w, 3)),
        format!("i pref1 {first}"),
        format!("i shape {}", shape(word)),
        format!("i-1 tag {prev}"),
        format!("i-2 tag {prev2}"),
        format!("i tag+i-2 tag {prev} {prev2}"),
        format!("i word {w}"),
        format!("i-1 tag+i word {prev} {w}"),
        format!("i-1 word {}", ctx[i - 1]),
        format!("i-1 suffix {}", suffix(&ctx[i - 1], 3)),
        format!("i-2 word {}", ctx[i - 2]),
        format!("i+1 word {}", ctx[i + 1]),
        format!("i+1 suffix {}", suffix(&ctx[i + 1], 3)),
        format!("i+2 word {}", ctx[i + 2]),
    ]
}

fn score(weights: &HashMap<String, [f64; N_TAGS]>, feats: &[String]) -> [f64; N_TAGS] {
    let mut s = [0.0; N_TAGS];
    for f in feats {
        if let Some(w) = weights.get(f) {
            for (acc, v) in s.iter_mut().zip(w) {
                *acc += v;
            }
        }
    }
    s
}

fn argmax(scores: &[f64; N_TAGS]) -> PosTag {
    let mut best = 0;
    for k in 1..N_TAGS {
        if scores[k] > scores[best] {
            best = k;
        }
    }
    PosTag::ALL[best]
}

#[derive(Default)]
struct Trainer {
    weights: HashMap<String, [f64; N_TAGS]>,
    totals: HashMap<String, [f64; N_TAGS]>,
    stamps: HashMap<String, [u64; N_TAGS]>,
    step: u64,
}

impl Trainer {
    fn predict(&self, feats: &[String]) -> PosTag {
        argmax(&score(&self.weights, feats))
    }

    fn update(&mut self, truth: PosTag, guess: PosTag, feats: &[String]) {
        self.step += 1;
        if truth == guess {
            return;
        }
        for f in feats {
            for (tag, delta) in [(truth, 1.0), (guess, -1.0)] {
                let k = tag.index();
                let w = self.weights.entry(f.clone()).or_insert([0.0; N_TAGS]);
                let tot = self.totals.entry(f.clone()).or_insert([0.0; N_TAGS]);
                let st = self.stamps.entry(f.clone()).or_insert([0; N_TAGS]);
                tot[k] += (self.step - st[k]) as f64 * w[k];
                st[k] = self.step;
                w[k] += delta;
            }
        }
    }

    fn averaged(self) -> HashMap<String, [f64; N_TAGS]> {
        let step = self.step.max(1);
        let mut out = HashMap::with_capacity(self.weights.len());
        for (f, w) in self.weights {
            let tot = &self.totals[&f];
            let st = &self.stamps[&f];
            let mut avg = [0.0; N_TAGS];
            for k in 0..N_TAGS {
                let total = tot[k] + (self.step - st[k]) as f64 * w[k];
                avg[k] = total / step as f64;
            }
            if avg.iter().any(|v| *v != 0.0) {
                out.insert(f, avg);
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::textproc::tokenize;

    fn tags(text: &str) -> Vec<PosTag> {
        let mut toks = tokenize(text);
        PosModel::bundled().tag(&mut toks);
        toks.iter().map(|t| t.pos.unwrap()).collect()
    }

    #[test]
    fn pronoun_and_aux() {
        let t = tags("He is very helpful");
        assert_eq!(&t[..2], &[PosTag::Pron, PosTag::Aux]);
    }

    #[test]
    fn single_noun() {
        assert_eq!(tags("professor"), vec![PosTag::Noun]);
    }

    #[test]
    fn empty_sequence() {
        let mut toks: Vec<Token> = Vec::new();
        pos_tag(&mut toks, Some(PosModel::bundled())).unwrap();
        assert!(toks.is_empty());
    }

    #[test]
    fn punctuation_and_emoticons() {
        let t = tags("Great class . :)");
        assert_eq!(t[2], PosTag::Punct);
        assert_eq!(t[3], PosTag::Sym);
    }

    #[test]
    fn untagged_without_model_is_an_error() {
        let mut toks = tokenize("he is");
        assert!(matches!(pos_tag(&mut toks, None), Err(PosError::Untagged)));
        for t in &mut toks {
            t.pos = Some(PosTag::X);
        }
        pos_tag(&mut toks, None).unwrap();
    }

    #[test]
    fn training_is_deterministic() {
        let corpus = PosModel::read_conll(include_str!("../../data/pos_seed.conll")).unwrap();
        let a = PosModel::train(&corpus, &PosTrainConfig::default()).unwrap();
        let b = PosModel::train(&corpus, &PosTrainConfig::default()).unwrap();
        assert_eq!(a.to_json(), b.to_json());
    }

    #[test]
    fn fits_its_training_corpus() {
        let corpus = PosModel::read_conll(include_str!("../../data/pos_seed.conll")).unwrap();
        let model = PosModel::bundled();
        let (mut right, mut total) = (0, 0);
        for sent in &corpus {
            let words: Vec<String> = sent.iter().map(|(w, _)| w.clone()).collect();
            for (got, (_, want)) in model.tag_words(&words).iter().zip(sent) {
                right += usize::from(got == want);
                total += 1;
            }
        }
        assert!(right as f64 / total as f64 > 0.95, "{right}/{total}");
    }

    #[test]
    fn bad_corpus_lines() {
        assert!(matches!(PosModel::read_conll(""), Err(PosError::EmptyCorpus)));
        assert!(matches!(
            PosModel::read_conll("word\n"),
            Err(PosError::Corpus { line: 1, .. })
        ));
        assert!(matches!(
            PosModel::read_conll("word\tBOGUS\n"),
            Err(PosError::Corpus { line: 1, .. })
        ));
    }
}
