use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{normalize_elongation, Token};

#[derive(Debug, Error)]
pub enum LexiconError {
    #[error("lexicon {0} has no entries")]
    Empty(LexiconName),
    #[error("lexicon {name}: line {line}: entry {entry:?} is not lowercase")]
    NotLowercase {
        name: LexiconName,
        line: usize,
        entry: String,
    },
    #[error("unknown lexicon name {0:?}")]
    UnknownName(String),
    #[error("reading lexicon: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LexiconName {
    Hot,
    Fashion,
    Hair,
    Idioms,
    Titles,
    PronounsFirst,
    PronounsThirdM,
    PronounsThirdF,
    /// Age and body-part terms used by the document classifier.
    Body,
    /// Accent and voice terms used by the document classifier.
    Accent,
}

impl LexiconName {
    pub const ALL: [LexiconName; 10] = [
        LexiconName::Hot,
        LexiconName::Fashion,
        LexiconName::Hair,
        LexiconName::Idioms,
        LexiconName::Titles,
        LexiconName::PronounsFirst,
        LexiconName::PronounsThirdM,
        LexiconName::PronounsThirdF,
        LexiconName::Body,
        LexiconName::Accent,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            LexiconName::Hot => "hot",
            LexiconName::Fashion => "fashion",
            LexiconName::Hair => "hair",
            LexiconName::Idioms => "idioms",
            LexiconName::Titles => "titles",
            LexiconName::PronounsFirst => "pronouns_first",
            LexiconName::PronounsThirdM => "pronouns_third_m",
            LexiconName::PronounsThirdF => "pronouns_third_f",
            LexiconName::Body => "body",
            LexiconName::Accent => "accent",
        }
    }

    fn bundled(self) -> &'static str {
        match self {
            LexiconName::Hot => include_str!("../../data/hot.txt"),
            LexiconName::Fashion => include_str!("../../data/fashion.txt"),
            LexiconName::Hair => include_str!("../../data/hair.txt"),
            LexiconName::Idioms => include_str!("../../data/idioms.txt"),
            LexiconName::Titles => include_str!("../../data/titles.txt"),
            LexiconName::PronounsFirst => include_str!("../../data/pronouns_first.txt"),
            LexiconName::PronounsThirdM => include_str!("../../data/pronouns_third_m.txt"),
            LexiconName::PronounsThirdF => include_str!("../../data/pronouns_third_f.txt"),
            LexiconName::Body => include_str!("../../data/body.txt"),
            LexiconName::Accent => include_str!("../../data/accent.txt"),
        }
    }
}

impl fmt::Display for LexiconName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for LexiconName {
    type Err = LexiconError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        LexiconName::ALL
            .iter()
            .copied()
            .find(|n| n.as_str() == s)
            .ok_or_else(|| LexiconError::UnknownName(s.to_string()))
    }
}

/// A named word list. Single words and multiword phrases are kept apart;
/// phrases are matched as exact token windows.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicon {
    pub name: LexiconName,
    words: BTreeSet<String>,
    phrases: BTreeSet<Vec<String>>,
}

impl Lexicon {
    pub fn new<I, S>(name: LexiconName, entries: I) -> Result<Self, LexiconError>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let mut lex = Lexicon {
            name,
            words: BTreeSet::new(),
            phrases: BTreeSet::new(),
        };
        for (i, e) in entries.into_iter().enumerate() {
            let e = e.as_ref().trim();
            if e.is_empty() {
                continue;
            }
            if e.to_lowercase() != e {
                return Err(LexiconError::NotLowercase {
                    name,
                    line: i + 1,
                    entry: e.to_string(),
                });
            }
            lex.insert(e);
        }
        if lex.is_empty() {
            return Err(LexiconError::Empty(name));
        }
        Ok(lex)
    }

    /// Parse the lexicon file format: one entry per line, `#` starts a comment.
    pub fn parse(name: LexiconName, text: &str) -> Result<Self, LexiconError> {
        let lines = text.lines().map(|l| match l.find('#') {
            Some(i) => &l[..i],
            None => l,
        });
        Self::new(name, lines)
    }

    pub fn from_file(name: LexiconName, path: &Path) -> Result<Self, LexiconError> {
        let text = std::fs::read_to_string(path)?;
        Self::parse(name, &text)
    }

    /// The word list shipped with the crate.
    pub fn bundled(name: LexiconName) -> Self {
        Self::parse(name, name.bundled()).expect("bundled lexicon is valid")
    }

    pub fn insert(&mut self, entry: &str) {
        let parts: Vec<String> = entry.split_whitespace().map(str::to_lowercase).collect();
        match parts.len() {
            0 => {}
            1 => {
                self.words.insert(parts.into_iter().next().unwrap());
            }
            _ => {
                self.phrases.insert(parts);
            }
        }
    }

    pub fn contains_word(&self, w: &str) -> bool {
        self.words.contains(w)
    }

    pub fn words(&self) -> impl Iterator<Item = &str> {
        self.words.iter().map(String::as_str)
    }

    pub fn phrases(&self) -> impl Iterator<Item = &[String]> {
        self.phrases.iter().map(Vec::as_slice)
    }

    pub fn len(&self) -> usize {
        self.words.len() + self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// A contiguous token range `[start, end)` matched by a lexicon entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct LexiconMatch {
    pub start: usize,
    pub end: usize,
}

impl LexiconMatch {
    pub fn len(&self) -> usize {
        self.end - self.start
    }

    pub fn is_empty(&self) -> bool {
        self.end == self.start
    }
}

fn candidates_match(cands: &BTreeSet<String>, target: &str) -> bool {
    cands.contains(target)
}

/// All matches of `lexicon` in `tokens`, in order of start index.
///
/// A single token matches when any elongation candidate of its lowercase
/// form is an entry. A phrase matches a window of tokens position by
/// position, or a single hyphenated token (`good-looking`).
pub fn lexicon_matches(tokens: &[Token], lexicon: &Lexicon) -> Vec<LexiconMatch> {
    let cands: Vec<BTreeSet<String>> = tokens.iter().map(|t| normalize_elongation(&t.lower)).collect();
    let mut out = Vec::new();
    for i in 0..tokens.len() {
        if cands[i].iter().any(|c| lexicon.words.contains(c)) {
            out.push(LexiconMatch { start: i, end: i + 1 });
        }
        for phrase in &lexicon.phrases {
            let k = phrase.len();
            if i + k <= tokens.len()
                && phrase
                    .iter()
                    .enumerate()
                    .all(|(j, w)| candidates_match(&cands[i + j], w))
            {
                out.push(LexiconMatch { start: i, end: i + k });
            }
            let pieces: Vec<&str> = tokens[i].lower.split('-').collect();
            if pieces.len() == k
                && pieces
                    .iter()
                    .zip(phrase)
                    .all(|(p, w)| normalize_elongation(p).contains(w))
            {
                out.push(LexiconMatch { start: i, end: i + 1 });
            }
        }
    }
    out.sort();
    out.dedup();
    out
}

/// Token indices covered by any match of `lexicon`.
pub fn lexicon_match(tokens: &[Token], lexicon: &Lexicon) -> BTreeSet<usize> {
    lexicon_matches(tokens, lexicon)
        .into_iter()
        .flat_map(|m| m.start..m.end)
        .collect()
}

/// The full set of word lists, keyed by name.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lexicons {
    map: BTreeMap<LexiconName, Lexicon>,
}

impl Default for Lexicons {
    fn default() -> Self {
        Lexicons {
            map: LexiconName::ALL.iter().map(|&n| (n, Lexicon::bundled(n))).collect(),
        }
    }
}

impl Lexicons {
    pub fn get(&self, name: LexiconName) -> &Lexicon {
        &self.map[&name]
    }

    /// Replace one list, e.g. with a file supplied on the command line.
    pub fn set(&mut self, lexicon: Lexicon) {
        self.map.insert(lexicon.name, lexicon);
    }

    pub fn hot(&self) -> &Lexicon {
        self.get(LexiconName::Hot)
    }
}
