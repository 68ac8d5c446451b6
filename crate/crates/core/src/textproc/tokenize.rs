//! Review tokenizer.
//!
//! Splits on whitespace and punctuation boundaries while keeping the pieces
//! of informal text that carry signal intact: emoticons, runs of `!`/`?`,
//! repeated punctuation such as `...`, and title abbreviations like `Dr.`.
//! English clitics (`'s`, `n't`, `'re`, ...) are split off the host word.
//!
//! Offsets are counted in Unicode scalar values, not bytes.

use super::{PosTag, Token};

const EMOTICONS: &[&str] = &[
    ":-)", ";-)", ":-(", ":-D", ":-P", ":)", ";)", ":(", ":D", ":P", ":p", ":/", "=)", "<3",
];

const TITLE_ABBREVIATIONS: &[&str] = &["dr", "mr", "mrs", "ms", "prof"];

const CLITICS: &[&str] = &["n't", "'s", "'re", "'ve", "'ll", "'d", "'m"];

fn is_word_char(c: char) -> bool {
    c.is_alphanumeric()
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

/// Tokenize `text` into surface tokens with character offsets.
///
/// Lemma and part of speech are left for later stages; `lemma` is filled
/// with the lowercase form so the token is usable on its own.
pub fn tokenize(text: &str) -> Vec<Token> {
    let chars: Vec<char> = text.chars().collect();
    let n = chars.len();
    let mut out = Vec::new();
    let mut i = 0;

    while i < n {
        let c = chars[i];
        if c.is_whitespace() {
            i += 1;
            continue;
        }

        if let Some(len) = emoticon_at(&chars, i) {
            push(&mut out, &chars, i, i + len);
            i += len;
            continue;
        }

        if is_word_char(c) {
            let start = i;
            i += 1;
            while i < n {
                let d = chars[i];
                if is_word_char(d) {
                    i += 1;
                } else if (d == '-' || is_apostrophe(d)) && i + 1 < n && is_word_char(chars[i + 1]) {
                    i += 2;
                } else {
                    break;
                }
            }
            let mut end = i;
            if end < n && chars[end] == '.' {
                let word: String = chars[start..end].iter().collect::<String>().to_lowercase();
                if TITLE_ABBREVIATIONS.contains(&word.as_str()) {
                    end += 1;
                    i = end;
                }
            }
            push_word(&mut out, &chars, start, end);
            continue;
        }

        // punctuation and symbols
        let start = i;
        if c == '!' || c == '?' {
            while i < n && (chars[i] == '!' || chars[i] == '?') {
                i += 1;
            }
        } else {
            while i < n && chars[i] == c {
                i += 1;
            }
        }
        push(&mut out, &chars, start, i);
    }
    out
}

fn emoticon_at(chars: &[char], i: usize) -> Option<usize> {
    if i > 0 && is_word_char(chars[i - 1]) {
        return None;
    }
    for emo in EMOTICONS {
        let len = emo.chars().count();
        if i + len > chars.len() {
            continue;
        }
        if emo.chars().zip(&chars[i..i + len]).all(|(a, &b)| a == b) {
            if i + len < chars.len() && is_word_char(chars[i + len]) {
                continue;
            }
            return Some(len);
        }
    }
    None
}

fn push_word(out: &mut Vec<Token>, chars: &[char], start: usize, end: usize) {
    let lower: String = chars[start..end]
        .iter()
        .collect::<String>()
        .to_lowercase()
        .replace('\u{2019}', "'");
    for clitic in CLITICS {
        let clen = clitic.chars().count();
        let wlen = end - start;
        if wlen > clen && lower.ends_with(clitic) {
            let split = end - clen;
            push(out, chars, start, split);
            push(out, chars, split, end);
            return;
        }
    }
    push(out, chars, start, end);
}

fn push(out: &mut Vec<Token>, chars: &[char], start: usize, end: usize) {
    let surface: String = chars[start..end].iter().collect();
    out.push(Token::new(surface, start, end));
}

/// True when the token is one of the recognised emoticons.
pub fn is_emoticon(surface: &str) -> bool {
    EMOTICONS.contains(&surface)
}

/// True for a punctuation token made of two or more `!`/`?` characters.
pub fn is_repeated_exclaim(surface: &str) -> bool {
    surface.chars().count() >= 2 && surface.chars().all(|c| c == '!' || c == '?') && surface.contains('!')
}

/// True when the token closes a sentence (`.`, `!`, `?` and runs thereof).
pub fn is_sentence_end(tok: &Token) -> bool {
    !tok.surface.is_empty()
        && tok.surface.chars().all(|c| matches!(c, '.' | '!' | '?'))
        && tok.pos.map_or(true, |p| p == PosTag::Punct)
}
