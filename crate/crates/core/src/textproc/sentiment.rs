use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use super::{tokenize, Token};

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Sentiment {
    /// In `[-1, 1]`.
    pub polarity: f64,
    /// In `[0, 1]`.
    pub subjectivity: f64,
}

/// Anything that scores a tokenized text for sentiment.
pub trait SentimentScorer: Send + Sync {
    fn score(&self, tokens: &[Token]) -> Sentiment;
}

const NEGATIONS: &[&str] = &["not", "n't", "never", "no", "hardly"];
const NEGATION_WINDOW: usize = 3;
const NEGATION_FACTOR: f64 = -0.5;

/// Averaging scorer over a (word, polarity, subjectivity) lexicon.
///
/// A matched word preceded by a negation within three tokens has its
/// polarity multiplied by -0.5.
#[derive(Debug, Clone)]
pub struct LexiconSentiment {
    entries: HashMap<String, (f64, f64)>,
}

impl LexiconSentiment {
    /// Parse tab-separated `word polarity subjectivity` lines; `#` comments.
    pub fn parse(text: &str) -> Result<Self, String> {
        let mut entries = HashMap::new();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 3 {
                return Err(format!("line {}: expected 3 tab-separated columns", i + 1));
            }
            let pol: f64 = cols[1].parse().map_err(|e| format!("line {}: polarity: {e}", i + 1))?;
            let subj: f64 = cols[2]
                .parse()
                .map_err(|e| format!("line {}: subjectivity: {e}", i + 1))?;
            if !(-1.0..=1.0).contains(&pol) || !(0.0..=1.0).contains(&subj) {
                return Err(format!("line {}: value out of range", i + 1));
            }
            entries.insert(cols[0].to_lowercase(), (pol, subj));
        }
        Ok(LexiconSentiment { entries })
    }

    pub fn from_entries<I: IntoIterator<Item = (String, f64, f64)>>(entries: I) -> Self {
        LexiconSentiment {
            entries: entries.into_iter().map(|(w, p, s)| (w, (p, s))).collect(),
        }
    }

    pub fn bundled() -> Self {
        Self::parse(include_str!("../../data/sentiment.tsv")).expect("bundled sentiment lexicon")
    }
}

impl Default for LexiconSentiment {
    fn default() -> Self {
        Self::bundled()
    }
}

impl SentimentScorer for LexiconSentiment {
    fn score(&self, tokens: &[Token]) -> Sentiment {
        let mut pol_sum = 0.0;
        let mut subj_sum = 0.0;
        let mut n = 0usize;
        for (i, t) in tokens.iter().enumerate() {
            let Some(&(pol, subj)) = self.entries.get(&t.lower) else {
                continue;
            };
            let negated = tokens[i.saturating_sub(NEGATION_WINDOW)..i]
                .iter()
                .any(|p| NEGATIONS.contains(&p.lower.as_str()));
            pol_sum += if negated { pol * NEGATION_FACTOR } else { pol };
            subj_sum += subj;
            n += 1;
        }
        if n == 0 {
            return Sentiment::default();
        }
        Sentiment {
            polarity: (pol_sum / n as f64).clamp(-1.0, 1.0),
            subjectivity: (subj_sum / n as f64).clamp(0.0, 1.0),
        }
    }
}

/// Score raw text with the bundled lexicon.
pub fn sentiment_subjectivity(text: &str) -> Sentiment {
    thread_local! {
        static SCORER: LexiconSentiment = LexiconSentiment::bundled();
    }
    let tokens = tokenize(text);
    SCORER.with(|s| s.score(&tokens))
}
