use serde::{Deserialize, Serialize};

use super::{is_emoticon, is_repeated_exclaim, LexiconName, Lexicons, Token};

/// Internet-style markers counted over a token sequence.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct StyleFeatures {
    pub emoticon_count: usize,
    pub repeated_exclaim_count: usize,
    pub all_caps_word_count: usize,
    pub nonstandard_punct: bool,
    pub nonstandard_caps: bool,
}

/// Count emoticons, `!!`-style runs and all-caps words.
///
/// Non-standard punctuation is any emoticon or any run of two or more
/// punctuation marks other than an ellipsis. Non-standard capitalization is
/// an all-caps word, a lowercase standalone "i", or a sentence that starts
/// with a lowercase letter.
pub fn style_features(tokens: &[Token]) -> StyleFeatures {
    let mut f = StyleFeatures::default();
    let mut sentence_start = true;
    for t in tokens {
        if is_emoticon(&t.surface) {
            f.emoticon_count += 1;
            f.nonstandard_punct = true;
            continue;
        }
        if is_repeated_exclaim(&t.surface) {
            f.repeated_exclaim_count += 1;
        }
        let punct_run =
            t.surface.chars().count() >= 2 && t.surface.chars().all(|c| c.is_ascii_punctuation()) && t.surface != "...";
        if punct_run {
            f.nonstandard_punct = true;
        }
        if t.all_caps {
            f.all_caps_word_count += 1;
            f.nonstandard_caps = true;
        }
        if t.surface == "i" {
            f.nonstandard_caps = true;
        }
        if t.is_word() {
            if sentence_start && t.surface.chars().next().is_some_and(char::is_lowercase) {
                f.nonstandard_caps = true;
            }
            sentence_start = false;
        } else if t.surface.chars().all(|c| matches!(c, '.' | '!' | '?')) {
            sentence_start = true;
        }
    }
    f
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Gender {
    Male,
    Female,
    #[default]
    Unknown,
}

impl Gender {
    pub fn as_str(self) -> &'static str {
        match self {
            Gender::Male => "male",
            Gender::Female => "female",
            Gender::Unknown => "unknown",
        }
    }

    /// Majority vote of third-person pronoun counts; ties are unknown.
    pub fn from_counts(male: usize, female: usize) -> Self {
        match male.cmp(&female) {
            std::cmp::Ordering::Greater => Gender::Male,
            std::cmp::Ordering::Less => Gender::Female,
            std::cmp::Ordering::Equal => Gender::Unknown,
        }
    }
}

impl std::str::FromStr for Gender {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "male" | "m" => Ok(Gender::Male),
            "female" | "f" => Ok(Gender::Female),
            "unknown" | "" => Ok(Gender::Unknown),
            other => Err(format!("unknown gender {other:?}")),
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PronounProfile {
    pub first_count: usize,
    pub third_m_count: usize,
    pub third_f_count: usize,
    pub inferred_gender: Gender,
}

impl PronounProfile {
    /// Smoothed first-to-third person ratio, `(first + 1) / (third + 1)`.
    pub fn first_third_ratio(&self) -> f64 {
        (self.first_count as f64 + 1.0) / ((self.third_m_count + self.third_f_count) as f64 + 1.0)
    }
}

pub fn pronoun_profile(tokens: &[Token], lexicons: &Lexicons) -> PronounProfile {
    let first = lexicons.get(LexiconName::PronounsFirst);
    let male = lexicons.get(LexiconName::PronounsThirdM);
    let female = lexicons.get(LexiconName::PronounsThirdF);
    let mut p = PronounProfile::default();
    for t in tokens {
        if first.contains_word(&t.lower) {
            p.first_count += 1;
        }
        if male.contains_word(&t.lower) {
            p.third_m_count += 1;
        }
        if female.contains_word(&t.lower) {
            p.third_f_count += 1;
        }
    }
    p.inferred_gender = Gender::from_counts(p.third_m_count, p.third_f_count);
    p
}
