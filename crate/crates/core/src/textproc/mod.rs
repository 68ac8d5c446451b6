//! Text processing shared by both classifiers: tokenization, elongation
//! normalization, lemmatization, part-of-speech tagging, lexicon matching
//! and the small stylistic/pronoun/sentiment detectors.

mod elongation;
mod lemma;
mod lexicon;
mod pos;
mod sentiment;
mod style;
mod tokenize;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use elongation::{normalize_elongation, MAX_ELONGATION_CANDIDATES};
pub use lemma::lemmatize;
pub use lexicon::{lexicon_match, lexicon_matches, Lexicon, LexiconError, LexiconMatch, LexiconName, Lexicons};
pub use pos::{pos_tag, PosError, PosModel, PosTrainConfig};
pub use sentiment::{sentiment_subjectivity, LexiconSentiment, Sentiment, SentimentScorer};
pub use style::{pronoun_profile, style_features, Gender, PronounProfile, StyleFeatures};
pub use tokenize::{is_emoticon, is_repeated_exclaim, is_sentence_end, tokenize};

/// Universal part-of-speech tag set.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "UPPERCASE")]
pub enum PosTag {
    Adj,
    Adp,
    Adv,
    Aux,
    Cconj,
    Det,
    Intj,
    Noun,
    Num,
    Part,
    Pron,
    Propn,
    Punct,
    Sconj,
    Sym,
    Verb,
    X,
}

impl PosTag {
    pub const ALL: [PosTag; 17] = [
        PosTag::Adj,
        PosTag::Adp,
        PosTag::Adv,
        PosTag::Aux,
        PosTag::Cconj,
        PosTag::Det,
        PosTag::Intj,
        PosTag::Noun,
        PosTag::Num,
        PosTag::Part,
        PosTag::Pron,
        PosTag::Propn,
        PosTag::Punct,
        PosTag::Sconj,
        PosTag::Sym,
        PosTag::Verb,
        PosTag::X,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            PosTag::Adj => "ADJ",
            PosTag::Adp => "ADP",
            PosTag::Adv => "ADV",
            PosTag::Aux => "AUX",
            PosTag::Cconj => "CCONJ",
            PosTag::Det => "DET",
            PosTag::Intj => "INTJ",
            PosTag::Noun => "NOUN",
            PosTag::Num => "NUM",
            PosTag::Part => "PART",
            PosTag::Pron => "PRON",
            PosTag::Propn => "PROPN",
            PosTag::Punct => "PUNCT",
            PosTag::Sconj => "SCONJ",
            PosTag::Sym => "SYM",
            PosTag::Verb => "VERB",
            PosTag::X => "X",
        }
    }

    fn index(self) -> usize {
        self as usize
    }
}

impl fmt::Display for PosTag {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PosTag {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        PosTag::ALL
            .iter()
            .copied()
            .find(|t| t.as_str().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown POS tag {s:?}"))
    }
}

/// A token with its offsets into the source text.
///
/// Offsets count Unicode scalar values; `char_end` is exclusive.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Token {
    pub surface: String,
    pub lower: String,
    pub lemma: String,
    pub pos: Option<PosTag>,
    pub char_start: usize,
    pub char_end: usize,
    pub all_caps: bool,
}

impl Token {
    pub fn new(surface: String, char_start: usize, char_end: usize) -> Self {
        let lower = surface.to_lowercase().replace('\u{2019}', "'");
        let all_caps = is_all_caps(&surface);
        let mut tok = Token {
            lemma: String::new(),
            lower,
            surface,
            pos: None,
            char_start,
            char_end,
            all_caps,
        };
        tok.lemma = lemmatize(&tok);
        tok
    }

    /// Whether the token contains at least one alphanumeric character.
    pub fn is_word(&self) -> bool {
        self.surface.chars().any(char::is_alphanumeric)
    }
}

/// At least two letters, all of them uppercase.
pub fn is_all_caps(s: &str) -> bool {
    let mut letters = 0;
    for c in s.chars().filter(|c| c.is_alphabetic()) {
        if !c.is_uppercase() {
            return false;
        }
        letters += 1;
    }
    letters >= 2
}

/// Tokenize and tag in one step.
pub fn analyze(text: &str, model: &PosModel) -> Vec<Token> {
    let mut tokens = tokenize(text);
    model.tag(&mut tokens);
    tokens
}
