//! Template-generated labeled reviews for desk-scale verification.
//!
//! Negative reviews are stitched together from neutral course-review
//! sentences. Positive reviews additionally carry one attractiveness
//! sentence whose slot is filled from the hot lexicon (sometimes elongated
//! or upper-cased) or the idiom list; the slot's character offsets become
//! the gold span.

use chrono::NaiveDate;
use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{default_pepper_cutoff, pepper_present, CorpusError, LabeledReview, Review};
use crate::textproc::{Gender, LexiconName, Lexicons};

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub n_reviews: usize,
    pub positive_rate: f64,
    pub seed: u64,
    pub lexicons: Lexicons,
    /// Defaults to one professor per five reviews.
    pub n_professors: Option<usize>,
    /// Probability that a single-word slot is letter-elongated.
    pub elongation_rate: f64,
    /// Probability that a single-word slot is written in capitals.
    pub caps_rate: f64,
    pub start: NaiveDate,
    pub end: NaiveDate,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            n_reviews: 100,
            positive_rate: 0.1,
            seed: 0,
            lexicons: Lexicons::default(),
            n_professors: None,
            elongation_rate: 0.2,
            caps_rate: 0.2,
            start: NaiveDate::from_ymd_opt(2010, 1, 1).expect("valid date"),
            end: NaiveDate::from_ymd_opt(2019, 8, 31).expect("valid date"),
        }
    }
}

const NEUTRAL: &[&str] = &[
    "The lectures are clear and the exams are fair.",
    "{P} explains the material well.",
    "Lots of homework but the quizzes help.",
    "{Pos} tests are tough, so study hard.",
    "Attendance is mandatory.",
    "I learned a lot in this class.",
    "{P} grades fairly and gives extra credit.",
    "The readings were boring.",
    "Office hours are very helpful.",
    "Do the practice problems before every exam.",
    "{P} is always available for help.",
    "The final project was worth half of the grade.",
    "Class was hard but worth it.",
    "Would take {obj} again.",
    "{P} knows {pos} stuff.",
    "The textbook is useless.",
    "{Pos} accent was difficult to understand.",
    "Expect to work hard!!",
    "Best professor ever!!!",
    "AVOID this class.",
    "Great class :)",
    "{P} cares about {pos} students.",
    "Lectures are long and dull.",
    "The TA was rude.",
    "Pop quizzes every week.",
    "{P} speaks quickly and mumbles.",
    "Take good notes and you will pass.",
    "The labs take forever.",
];

/// `{X}` is filled with a single lexicon word.
const WORD_SLOT: &[&str] = &[
    "{P} is so {X}.",
    "Plus, hello, {X}!",
    "{P}'s also pretty {X} which helps. :)",
    "Everyone thinks {p} is {X}!",
    "Honestly {X}, I could listen to {obj} all day.",
    "Such a {X} professor.",
    "{X} teacher, would take again.",
];

/// `{X}` is filled with an idiom.
const PHRASE_SLOT: &[&str] = &["{P} is {X}.", "Not gonna lie, {p} is {X}."];

const SUBJECTS: &[&str] = &["Math", "Biology", "History", "English", "Physics", "Economics"];

struct Pronouns {
    subj_cap: &'static str,
    subj: &'static str,
    poss_cap: &'static str,
    poss: &'static str,
    obj: &'static str,
}

fn pronouns(g: Gender) -> Pronouns {
    match g {
        Gender::Female => Pronouns {
            subj_cap: "She",
            subj: "she",
            poss_cap: "Her",
            poss: "her",
            obj: "her",
        },
        _ => Pronouns {
            subj_cap: "He",
            subj: "he",
            poss_cap: "His",
            poss: "his",
            obj: "him",
        },
    }
}

fn fill(template: &str, p: &Pronouns) -> String {
    template
        .replace("{Pos}", p.poss_cap)
        .replace("{pos}", p.poss)
        .replace("{obj}", p.obj)
        .replace("{P}", p.subj_cap)
        .replace("{p}", p.subj)
}

fn elongate(word: &str, rng: &mut ChaCha8Rng) -> String {
    let chars: Vec<char> = word.chars().collect();
    let candidates: Vec<usize> = (0..chars.len()).filter(|&i| chars[i].is_alphabetic()).collect();
    let Some(&at) = candidates.choose(rng) else {
        return word.to_string();
    };
    let extra = rng.random_range(2..=5);
    let mut s = String::new();
    for (i, &c) in chars.iter().enumerate() {
        s.push(c);
        if i == at {
            s.extend(std::iter::repeat_n(c, extra));
        }
    }
    s
}

/// Generate `n_reviews` labeled reviews, exactly `round(n * rate)` positive.
pub fn generate_synthetic_corpus(cfg: &SyntheticConfig) -> Result<Vec<LabeledReview>, CorpusError> {
    if !(0.0..=1.0).contains(&cfg.positive_rate) {
        return Err(CorpusError::BadRate(cfg.positive_rate));
    }
    let hot: Vec<&str> = cfg.lexicons.get(LexiconName::Hot).words().collect();
    if hot.is_empty() {
        return Err(CorpusError::EmptyLexicon("hot"));
    }
    let idioms: Vec<String> = cfg
        .lexicons
        .get(LexiconName::Idioms)
        .phrases()
        .map(|p| p.join(" "))
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = cfg.n_reviews;
    let n_pos = (n as f64 * cfg.positive_rate).round() as usize;
    let mut is_pos: Vec<bool> = (0..n).map(|i| i < n_pos).collect();
    is_pos.shuffle(&mut rng);

    let n_prof = cfg.n_professors.unwrap_or((n / 5).max(1)).max(1);
    let genders: Vec<Gender> = (0..n_prof)
        .map(|_| {
            if rng.random_bool(0.4) {
                Gender::Female
            } else {
                Gender::Male
            }
        })
        .collect();
    let day_span = (cfg.end - cfg.start).num_days().max(0);
    let cutoff = default_pepper_cutoff();

    let mut out = Vec::with_capacity(n);
    for (i, &positive) in is_pos.iter().enumerate() {
        let prof = rng.random_range(0..n_prof);
        let p = pronouns(genders[prof]);

        let k = rng.random_range(2..=4);
        let mut sentences: Vec<String> = NEUTRAL.choose_multiple(&mut rng, k).map(|t| fill(t, &p)).collect();

        let mut slot: Option<(usize, String, String)> = None;
        if positive {
            let use_idiom = !idioms.is_empty() && rng.random_bool(0.15);
            let (template, filler) = if use_idiom {
                let t = PHRASE_SLOT.choose(&mut rng).expect("non-empty");
                (t, idioms.choose(&mut rng).expect("non-empty").clone())
            } else {
                let t = WORD_SLOT.choose(&mut rng).expect("non-empty");
                let mut w = if rng.random_bool(0.15) {
                    "hot".to_string()
                } else {
                    hot.choose(&mut rng).expect("non-empty").to_string()
                };
                if rng.random_bool(cfg.elongation_rate) {
                    w = elongate(&w, &mut rng);
                }
                if rng.random_bool(cfg.caps_rate) {
                    w = w.to_uppercase();
                } else if t.starts_with("{X}") {
                    let mut c = w.chars();
                    w = c
                        .next()
                        .map(|f| f.to_uppercase().chain(c).collect())
                        .unwrap_or_default();
                }
                (t, w)
            };
            let at = rng.random_range(0..=sentences.len());
            slot = Some((at, fill(template, &p), filler));
        }

        let mut text = String::new();
        let mut span = None;
        let total = sentences.len() + usize::from(slot.is_some());
        let mut neutral = sentences.drain(..);
        for s in 0..total {
            if !text.is_empty() {
                text.push(' ');
            }
            match &slot {
                Some((at, template, filler)) if *at == s => {
                    let (before, after) = template.split_once("{X}").expect("template has slot");
                    text.push_str(before);
                    let start = text.chars().count();
                    text.push_str(filler);
                    span = Some((start, start + filler.chars().count()));
                    text.push_str(after);
                }
                _ => text.push_str(&neutral.next().expect("enough sentences")),
            }
        }

        let date = cfg.start + chrono::Duration::days(rng.random_range(0..=day_span));
        let half_steps = |rng: &mut ChaCha8Rng| 1.0 + 0.5 * rng.random_range(0..=8) as f64;
        let review = Review {
            review_id: format!("syn-{:06}", i),
            professor_id: format!("prof-{prof:04}"),
            school: format!("School {}", prof % 10),
            subject: SUBJECTS[prof % SUBJECTS.len()].to_string(),
            text,
            date,
            quality: Some(half_steps(&mut rng)),
            difficulty: Some(half_steps(&mut rng)),
            gender: Some(genders[prof]),
            pepper_present: pepper_present(date, cutoff),
        };
        let spans: Vec<(usize, usize)> = span.into_iter().collect();
        let labeled = LabeledReview::from_spans(review, spans).map_err(|message| CorpusError::Invalid {
            id: format!("syn-{i:06}"),
            message,
        })?;
        out.push(labeled);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Iob;
    use crate::textproc::{lexicon_match, Lexicon};

    #[test]
    fn exact_positive_count() {
        let cfg = SyntheticConfig {
            n_reviews: 100,
            positive_rate: 0.1,
            seed: 3,
            ..SyntheticConfig::default()
        };
        let c = generate_synthetic_corpus(&cfg).unwrap();
        assert_eq!(c.len(), 100);
        let pos: Vec<_> = c.iter().filter(|l| l.doc_label).collect();
        assert_eq!(pos.len(), 10);
        assert!(pos.iter().all(|l| l.iob.contains(&Iob::B)));
    }

    #[test]
    fn zero_rate_is_all_outside() {
        let cfg = SyntheticConfig {
            positive_rate: 0.0,
            ..SyntheticConfig::default()
        };
        for l in generate_synthetic_corpus(&cfg).unwrap() {
            assert!(!l.doc_label);
            assert!(l.iob.iter().all(|t| *t == Iob::O));
        }
    }

    #[test]
    fn span_marks_the_injected_term() {
        let cfg = SyntheticConfig {
            n_reviews: 300,
            positive_rate: 1.0,
            seed: 11,
            ..SyntheticConfig::default()
        };
        let lx = Lexicons::default();
        for l in generate_synthetic_corpus(&cfg).unwrap() {
            let toks = l.tokens();
            let (s, e) = l.spans[0];
            let filler: String = l.review.text.chars().skip(s).take(e - s).collect();
            let tagged: Vec<usize> = (0..toks.len()).filter(|&i| l.iob[i] != Iob::O).collect();
            // the tagged tokens spell out exactly the injected filler
            let joined: Vec<&str> = tagged.iter().map(|&i| toks[i].surface.as_str()).collect();
            assert_eq!(joined.join(" "), filler);
            // and the injected term is found by the lexicons
            let hits: std::collections::BTreeSet<usize> = lexicon_match(&toks, lx.hot())
                .union(&lexicon_match(&toks, lx.get(LexiconName::Idioms)))
                .copied()
                .collect();
            assert!(tagged.iter().all(|i| hits.contains(i)), "{}", l.review.text);
        }
    }

    #[test]
    fn hello_template_tags_the_slot() {
        let cfg = SyntheticConfig {
            n_reviews: 400,
            positive_rate: 1.0,
            seed: 5,
            ..SyntheticConfig::default()
        };
        let found = generate_synthetic_corpus(&cfg)
            .unwrap()
            .into_iter()
            .find(|l| l.review.text.contains("Plus, hello, "))
            .expect("template used");
        let toks = found.tokens();
        let hello = toks.iter().position(|t| t.surface == "hello").unwrap();
        assert_eq!(found.iob[hello + 2], Iob::B);
        assert_eq!(found.iob[hello + 3], Iob::O);
    }

    #[test]
    fn deterministic_and_seed_sensitive() {
        let cfg = SyntheticConfig::default();
        let a = generate_synthetic_corpus(&cfg).unwrap();
        let b = generate_synthetic_corpus(&cfg).unwrap();
        assert_eq!(a, b);
        let c = generate_synthetic_corpus(&SyntheticConfig { seed: 1, ..cfg }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn negatives_avoid_lexicon_terms() {
        let lx = Lexicons::default();
        let cfg = SyntheticConfig {
            n_reviews: 200,
            positive_rate: 0.0,
            ..SyntheticConfig::default()
        };
        for l in generate_synthetic_corpus(&cfg).unwrap() {
            assert!(lexicon_match(&l.tokens(), lx.hot()).is_empty(), "{}", l.review.text);
        }
    }

    #[test]
    fn bad_config() {
        let cfg = SyntheticConfig {
            positive_rate: 1.5,
            ..SyntheticConfig::default()
        };
        assert!(matches!(generate_synthetic_corpus(&cfg), Err(CorpusError::BadRate(_))));
        // an all-comment lexicon file cannot be constructed at all
        assert!(Lexicon::parse(LexiconName::Hot, "#\n").is_err());
    }

    #[test]
    fn metadata_ranges() {
        let cfg = SyntheticConfig::default();
        for l in generate_synthetic_corpus(&cfg).unwrap() {
            let r = &l.review;
            assert!(r.date >= cfg.start && r.date <= cfg.end);
            assert!((1.0..=5.0).contains(&r.quality.unwrap()));
            assert!((1.0..=5.0).contains(&r.difficulty.unwrap()));
            assert_eq!(r.pepper_present, r.date < default_pepper_cutoff());
        }
    }
}
