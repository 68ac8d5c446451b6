use super::Token;

/// Irregular forms and words the suffix rules would mangle.
const EXCEPTIONS: &[(&str, &str)] = &[
    ("children", "child"),
    ("men", "man"),
    ("women", "woman"),
    ("people", "person"),
    ("feet", "foot"),
    ("teeth", "tooth"),
    ("mice", "mouse"),
    ("quizzes", "quiz"),
    ("taught", "teach"),
    ("thought", "think"),
    ("bought", "buy"),
    ("brought", "bring"),
    ("gave", "give"),
    ("given", "give"),
    ("took", "take"),
    ("taken", "take"),
    ("made", "make"),
    ("said", "say"),
    ("saw", "see"),
    ("seen", "see"),
    ("went", "go"),
    ("gone", "go"),
    ("knew", "know"),
    ("known", "know"),
    ("wrote", "write"),
    ("written", "write"),
    ("got", "get"),
    ("felt", "feel"),
    ("left", "leave"),
    ("kept", "keep"),
    ("learnt", "learn"),
    ("n't", "not"),
    ("wo", "will"),
    ("ca", "can"),
];

/// Words ending in a rule suffix that are already base forms.
const KEEP: &[&str] = &[
    "is",
    "was",
    "has",
    "his",
    "hers",
    "its",
    "this",
    "us",
    "yes",
    "bus",
    "plus",
    "thus",
    "always",
    "perhaps",
    "class",
    "less",
    "unless",
    "process",
    "business",
    "series",
    "news",
    "physics",
    "mathematics",
    "statistics",
    "economics",
    "politics",
    "lens",
    "gas",
    "bias",
    "analysis",
    "thesis",
    "basis",
    "crisis",
    "campus",
    "focus",
    "bonus",
    "syllabus",
    "virus",
    "status",
    "chaos",
    "ethos",
    "pass",
    "boss",
    "dress",
    "mess",
    "glass",
    "does",
    "goes",
    "thing",
    "nothing",
    "something",
    "anything",
    "everything",
    "morning",
    "evening",
    "king",
    "ring",
    "sing",
    "bring",
    "during",
    "spring",
    "string",
    "swing",
    "wing",
    "sibling",
    "ceiling",
    "darling",
    "pudding",
    "wedding",
    "interesting",
    "boring",
    "amazing",
    "confusing",
    "engaging",
    "charming",
    "stunning",
    "striking",
    "fetching",
    "smoking",
    "looking",
    "red",
    "bed",
    "need",
    "feed",
    "seed",
    "speed",
    "indeed",
    "shed",
    "wed",
    "hundred",
    "sacred",
    "naked",
    "wicked",
    "tired",
    "bored",
    "organized",
    "disorganized",
    "dressed",
    "bewitched",
    "never",
    "ever",
    "forever",
    "whatever",
    "over",
    "under",
    "after",
    "other",
    "another",
    "whether",
    "however",
    "either",
    "neither",
    "rather",
    "together",
    "paper",
    "teacher",
    "answer",
    "number",
    "power",
    "water",
    "letter",
    "matter",
    "chapter",
    "semester",
    "computer",
    "lecturer",
    "member",
    "order",
    "her",
    "per",
    "super",
    "summer",
    "winter",
    "center",
    "career",
    "proper",
    "clever",
    "corner",
    "dinner",
    "partner",
    "character",
    "daughter",
    "finger",
    "mister",
    "sister",
    "brother",
    "mother",
    "father",
    "player",
    "better",
    "later",
    "forest",
    "interest",
    "honest",
    "modest",
    "rest",
    "best",
    "test",
    "west",
    "guest",
    "request",
    "contest",
    "harvest",
    "midterm",
    "nest",
    "pest",
    "protest",
    "quest",
    "chest",
    "just",
    "must",
    "lest",
];

fn is_vowel(c: char) -> bool {
    matches!(c, 'a' | 'e' | 'i' | 'o' | 'u')
}

fn undouble(stem: &str) -> String {
    let chars: Vec<char> = stem.chars().collect();
    let n = chars.len();
    if n >= 3 && chars[n - 1] == chars[n - 2] && !is_vowel(chars[n - 1]) && !matches!(chars[n - 1], 'l' | 's' | 'z') {
        chars[..n - 1].iter().collect()
    } else {
        stem.to_string()
    }
}

/// Lemma of a token: lowercase, with a fixed list of English suffix rules.
///
/// Never returns an empty string.
pub fn lemmatize(token: &Token) -> String {
    lemmatize_word(&token.lower)
}

pub(crate) fn lemmatize_word(lower: &str) -> String {
    if let Some((_, lemma)) = EXCEPTIONS.iter().find(|(w, _)| *w == lower) {
        return (*lemma).to_string();
    }
    if KEEP.contains(&lower) || !lower.chars().all(|c| c.is_alphabetic()) {
        return lower.to_string();
    }
    let len = lower.chars().count();

    if len > 4 && lower.ends_with("ies") {
        return format!("{}y", &lower[..lower.len() - 3]);
    }
    if len > 4 && lower.ends_with("sses") {
        return lower[..lower.len() - 2].to_string();
    }
    for suffix in ["ches", "shes", "xes", "zes"] {
        if len > suffix.len() + 1 && lower.ends_with(suffix) {
            return lower[..lower.len() - 2].to_string();
        }
    }
    if len > 3 && lower.ends_with('s') && !lower.ends_with("ss") && !lower.ends_with("us") && !lower.ends_with("is") {
        return lower[..lower.len() - 1].to_string();
    }
    if len > 5 && lower.ends_with("ing") {
        return undouble(&lower[..lower.len() - 3]);
    }
    if len > 4 && lower.ends_with("ied") {
        return format!("{}y", &lower[..lower.len() - 3]);
    }
    if len > 4 && lower.ends_with("ed") {
        return undouble(&lower[..lower.len() - 2]);
    }
    if len > 5 && lower.ends_with("est") {
        return undouble(&lower[..lower.len() - 3]);
    }
    if len > 5 && lower.ends_with("er") {
        return undouble(&lower[..lower.len() - 2]);
    }
    lower.to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn lem(s: &str) -> String {
        lemmatize(&Token::new(s.to_string(), 0, s.chars().count()))
    }

    #[test]
    fn caps_are_folded() {
        assert_eq!(lem("CUT"), "cut");
    }

    #[test]
    fn plural_nouns() {
        assert_eq!(lem("professors"), "professor");
        assert_eq!(lem("quizzes"), "quiz");
        assert_eq!(lem("classes"), "class");
        assert_eq!(lem("studies"), "study");
        assert_eq!(lem("watches"), "watch");
    }

    #[test]
    fn verb_forms_with_doubling_repair() {
        assert_eq!(lem("stopped"), "stop");
        assert_eq!(lem("running"), "run");
        assert_eq!(lem("talked"), "talk");
        assert_eq!(lem("biggest"), "big");
        assert_eq!(lem("taller"), "tall");
    }

    #[test]
    fn identity_and_exceptions() {
        assert_eq!(lem("a"), "a");
        assert_eq!(lem("is"), "is");
        assert_eq!(lem("he"), "he");
        assert_eq!(lem("children"), "child");
        assert_eq!(lem("teacher"), "teacher");
        assert_eq!(lem(":)"), ":)");
    }

    #[test]
    fn never_empty() {
        for w in ["s", "ed", "ing", "es", "ies", "er", "est", "'s"] {
            assert!(!lem(w).is_empty(), "{w}");
        }
    }
}
