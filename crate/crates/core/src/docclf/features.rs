use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::textproc::{
    is_sentence_end, lexicon_matches, pronoun_profile, style_features, Gender, LexiconName, Lexicons, PosTag,
    SentimentScorer, Token,
};

/// Engineered feature groups, switchable for ablation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureGroup {
    /// First-to-third person pronoun ratio.
    FirstPerson,
    /// Hot-lexicon and idiom counts.
    LexicalHot,
    LexicalAccent,
    /// Age, body part, clothing and hair terms.
    LexicalAppearance,
    /// Word and sentence length, long-word proportion.
    Readability,
    Polarity,
    Subjectivity,
    /// Noun/verb ratio, non-standard punctuation and capitalization, titles.
    Formality,
    /// Gender inferred from third-person pronouns.
    Pronouns,
    /// Emoticons, repeated exclamation points, all-caps words.
    InternetStyle,
}

impl FeatureGroup {
    pub const ALL: [FeatureGroup; 10] = [
        FeatureGroup::FirstPerson,
        FeatureGroup::LexicalHot,
        FeatureGroup::LexicalAccent,
        FeatureGroup::LexicalAppearance,
        FeatureGroup::Readability,
        FeatureGroup::Polarity,
        FeatureGroup::Subjectivity,
        FeatureGroup::Formality,
        FeatureGroup::Pronouns,
        FeatureGroup::InternetStyle,
    ];

    pub const LEXICAL: [FeatureGroup; 3] = [
        FeatureGroup::LexicalHot,
        FeatureGroup::LexicalAccent,
        FeatureGroup::LexicalAppearance,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            FeatureGroup::FirstPerson => "first_person",
            FeatureGroup::LexicalHot => "lexical_hot",
            FeatureGroup::LexicalAccent => "lexical_accent",
            FeatureGroup::LexicalAppearance => "lexical_appearance",
            FeatureGroup::Readability => "readability",
            FeatureGroup::Polarity => "polarity",
            FeatureGroup::Subjectivity => "subjectivity",
            FeatureGroup::Formality => "formality",
            FeatureGroup::Pronouns => "pronouns",
            FeatureGroup::InternetStyle => "internet_style",
        }
    }

    /// Dense feature names in this group, in vector order.
    pub fn features(self) -> &'static [&'static str] {
        match self {
            FeatureGroup::FirstPerson => &["first_third_pronoun_ratio"],
            FeatureGroup::LexicalHot => &["hot_lexicon_count", "idiom_count"],
            FeatureGroup::LexicalAccent => &["accent_flag"],
            FeatureGroup::LexicalAppearance => &["fashion_count", "hair_count", "body_count"],
            FeatureGroup::Readability => &["avg_word_len", "avg_sent_len", "prop_words_gt4"],
            FeatureGroup::Polarity => &["polarity"],
            FeatureGroup::Subjectivity => &["subjectivity"],
            FeatureGroup::Formality => &[
                "noun_verb_ratio",
                "nonstandard_punct",
                "nonstandard_caps",
                "title_dr",
                "title_professor",
                "title_mrs",
                "title_mr",
            ],
            FeatureGroup::Pronouns => &["gender_male", "gender_female", "gender_unknown"],
            FeatureGroup::InternetStyle => &["emoticon_count", "repeated_exclaim_count", "all_caps_word_count"],
        }
    }
}

impl fmt::Display for FeatureGroup {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for FeatureGroup {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim().to_ascii_lowercase().replace('-', "_");
        FeatureGroup::ALL
            .into_iter()
            .find(|g| g.as_str() == s)
            .ok_or_else(|| format!("unknown feature group {s:?}"))
    }
}

/// Parse `a+b+c` (or `all` / `none`) into a group set.
pub fn parse_groups(s: &str) -> Result<BTreeSet<FeatureGroup>, String> {
    match s.trim() {
        "all" => Ok(FeatureGroup::ALL.into_iter().collect()),
        "none" | "" => Ok(BTreeSet::new()),
        other => other.split('+').map(str::parse).collect(),
    }
}

pub fn groups_label(groups: &BTreeSet<FeatureGroup>) -> String {
    if groups.len() == FeatureGroup::ALL.len() {
        "all".into()
    } else if groups.is_empty() {
        "none".into()
    } else {
        groups.iter().map(|g| g.as_str()).collect::<Vec<_>>().join("+")
    }
}

/// All dense feature names, grouped in `FeatureGroup::ALL` order.
pub fn dense_feature_names() -> Vec<&'static str> {
    FeatureGroup::ALL
        .iter()
        .flat_map(|g| g.features().iter().copied())
        .collect()
}

/// `(group, offset)` for every dense column.
pub(crate) fn dense_layout() -> Vec<FeatureGroup> {
    FeatureGroup::ALL
        .iter()
        .flat_map(|&g| std::iter::repeat_n(g, g.features().len()))
        .collect()
}

/// Sentence count: runs of `.!?` followed by whitespace or end of text close
/// a sentence; trailing words without a terminator form one more.
pub fn sentence_count(tokens: &[Token]) -> usize {
    let mut n = 0;
    let mut open = false;
    for (i, t) in tokens.iter().enumerate() {
        let followed_by_gap = tokens.get(i + 1).is_none_or(|nx| nx.char_start > t.char_end);
        if is_sentence_end(t) && followed_by_gap {
            if open {
                n += 1;
            }
            open = false;
        } else if t.is_word() {
            open = true;
        }
    }
    n + usize::from(open)
}

fn title_key(t: &Token) -> &str {
    t.lower.trim_end_matches('.')
}

/// Raw (unscaled) dense features for a tagged token sequence, in
/// `dense_feature_names()` order.
pub fn dense_features(tokens: &[Token], lexicons: &Lexicons, sentiment: &dyn SentimentScorer) -> Vec<f64> {
    let words: Vec<&Token> = tokens.iter().filter(|t| t.is_word()).collect();
    let n_words = words.len() as f64;
    let count = |name: LexiconName| lexicon_matches(tokens, lexicons.get(name)).len() as f64;
    let pronouns = pronoun_profile(tokens, lexicons);
    let style = style_features(tokens);
    let senti = sentiment.score(tokens);
    let nouns = tokens
        .iter()
        .filter(|t| matches!(t.pos, Some(PosTag::Noun | PosTag::Propn)))
        .count() as f64;
    let verbs = tokens.iter().filter(|t| t.pos == Some(PosTag::Verb)).count() as f64;
    let sentences = sentence_count(tokens);
    let titles = lexicons.get(LexiconName::Titles);
    let title = |w: &str| {
        if !titles.contains_word(w) {
            return 0.0;
        }
        tokens.iter().filter(|t| title_key(t) == w).count() as f64
    };
    let b = |x: bool| f64::from(u8::from(x));
    let ratio = |num: f64, den: f64| if den == 0.0 { 0.0 } else { num / den };

    let mut v = Vec::with_capacity(24);
    for g in FeatureGroup::ALL {
        match g {
            FeatureGroup::FirstPerson => v.push(pronouns.first_third_ratio()),
            FeatureGroup::LexicalHot => {
                v.push(count(LexiconName::Hot));
                v.push(count(LexiconName::Idioms));
            }
            FeatureGroup::LexicalAccent => v.push(b(count(LexiconName::Accent) > 0.0)),
            FeatureGroup::LexicalAppearance => {
                v.push(count(LexiconName::Fashion));
                v.push(count(LexiconName::Hair));
                v.push(count(LexiconName::Body));
            }
            FeatureGroup::Readability => {
                let chars: usize = words.iter().map(|t| t.surface.chars().count()).sum();
                v.push(ratio(chars as f64, n_words));
                v.push(ratio(n_words, sentences as f64));
                let long = words.iter().filter(|t| t.surface.chars().count() > 4).count();
                v.push(ratio(long as f64, n_words));
            }
            FeatureGroup::Polarity => v.push(senti.polarity),
            FeatureGroup::Subjectivity => v.push(senti.subjectivity),
            FeatureGroup::Formality => {
                v.push((nouns + 1.0) / (verbs + 1.0));
                v.push(b(style.nonstandard_punct));
                v.push(b(style.nonstandard_caps));
                for w in ["dr", "professor", "mrs", "mr"] {
                    v.push(title(w));
                }
            }
            FeatureGroup::Pronouns => {
                for gender in [Gender::Male, Gender::Female, Gender::Unknown] {
                    v.push(b(pronouns.inferred_gender == gender));
                }
            }
            FeatureGroup::InternetStyle => {
                v.push(style.emoticon_count as f64);
                v.push(style.repeated_exclaim_count as f64);
                v.push(style.all_caps_word_count as f64);
            }
        }
    }
    v
}

/// Lowercased word unigrams and adjacent-word bigrams ("a b").
pub fn terms(tokens: &[Token]) -> Vec<String> {
    let words: Vec<&str> = tokens
        .iter()
        .filter(|t| t.is_word())
        .map(|t| t.lower.as_str())
        .collect();
    let mut out: Vec<String> = words.iter().map(|w| w.to_string()).collect();
    out.extend(words.windows(2).map(|w| format!("{} {}", w[0], w[1])));
    out
}

/// Unigram/bigram vocabulary with add-one smoothed idf.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TfidfVocabulary {
    #[serde(rename = "vocab")]
    pub terms: BTreeMap<String, usize>,
    pub df: Vec<usize>,
    pub idf: Vec<f64>,
    pub n_docs: usize,
    pub min_df: usize,
}

impl TfidfVocabulary {
    /// Terms appearing in at least `min_df` of the documents.
    pub fn build<'a, I>(docs: I, min_df: usize) -> Self
    where
        I: IntoIterator<Item = &'a [String]>,
    {
        let mut df: BTreeMap<&str, usize> = BTreeMap::new();
        let mut n_docs = 0;
        for doc in docs {
            n_docs += 1;
            let unique: BTreeSet<&str> = doc.iter().map(String::as_str).collect();
            for t in unique {
                *df.entry(t).or_default() += 1;
            }
        }
        let kept: Vec<(&str, usize)> = df.into_iter().filter(|(_, d)| *d >= min_df.max(1)).collect();
        let idf = kept.iter().map(|(_, d)| idf(n_docs, *d)).collect();
        TfidfVocabulary {
            terms: kept.iter().enumerate().map(|(i, (t, _))| (t.to_string(), i)).collect(),
            df: kept.iter().map(|(_, d)| *d).collect(),
            idf,
            n_docs,
            min_df,
        }
    }

    pub fn empty() -> Self {
        TfidfVocabulary {
            terms: BTreeMap::new(),
            df: Vec::new(),
            idf: Vec::new(),
            n_docs: 0,
            min_df: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    /// Sorted `(index, weight)` pairs: raw tf times idf, L2-normalized.
    /// Out-of-vocabulary terms are ignored.
    pub fn transform(&self, doc_terms: &[String]) -> Vec<(usize, f64)> {
        let mut tf: BTreeMap<usize, f64> = BTreeMap::new();
        for t in doc_terms {
            if let Some(&i) = self.terms.get(t) {
                *tf.entry(i).or_default() += 1.0;
            }
        }
        let mut v: Vec<(usize, f64)> = tf.into_iter().map(|(i, c)| (i, c * self.idf[i])).collect();
        let norm = v.iter().map(|(_, x)| x * x).sum::<f64>().sqrt();
        if norm > 0.0 {
            v.iter_mut().for_each(|(_, x)| *x /= norm);
        }
        v
    }
}

/// `ln((1 + n) / (1 + df)) + 1`.
pub fn idf(n_docs: usize, df: usize) -> f64 {
    ((1.0 + n_docs as f64) / (1.0 + df as f64)).ln() + 1.0
}

/// Sparse tf-idf block plus raw dense block; masked groups are zero.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocFeatureVector {
    pub sparse: Vec<(usize, f64)>,
    pub dense: Vec<f64>,
}
