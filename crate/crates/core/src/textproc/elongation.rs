use std::collections::BTreeSet;

/// Upper bound on the number of candidates returned for one word.
pub const MAX_ELONGATION_CANDIDATES: usize = 64;

/// Candidate normal forms of an expressively elongated word.
///
/// Every run of two or more identical letters is collapsed either to two
/// letters or to one, independently per run, and the original word is kept.
/// `"hoooottt"` yields `"hot"`, `"hoot"`, `"hott"`, `"hoott"` and itself.
///
/// The two uniform collapses (all runs to one letter, all runs to two) are
/// always present; the remaining combinations are added in a fixed order
/// until [`MAX_ELONGATION_CANDIDATES`] is reached.
pub fn normalize_elongation(word: &str) -> BTreeSet<String> {
    let runs = letter_runs(word);
    let mut out = BTreeSet::new();
    out.insert(word.to_string());

    let n_runs = runs.iter().filter(|r| r.len >= 2).count();
    if n_runs == 0 {
        return out;
    }

    let build = |mask: u64| -> String {
        let mut s = String::with_capacity(word.len());
        let mut k = 0;
        for r in &runs {
            if r.len >= 2 {
                // bit set => collapse to one letter
                let keep = if mask >> k & 1 == 1 { 1 } else { 2 };
                k += 1;
                s.extend(std::iter::repeat_n(r.ch, keep));
            } else {
                s.extend(std::iter::repeat_n(r.ch, r.len));
            }
        }
        s
    };

    let all_ones = if n_runs >= 64 { u64::MAX } else { (1u64 << n_runs) - 1 };
    out.insert(build(all_ones));
    out.insert(build(0));

    let total: u64 = if n_runs >= 63 { u64::MAX } else { 1u64 << n_runs };
    let mut mask = 1u64;
    while mask < total && out.len() < MAX_ELONGATION_CANDIDATES {
        out.insert(build(mask));
        mask += 1;
    }
    out
}

struct Run {
    ch: char,
    len: usize,
}

fn letter_runs(word: &str) -> Vec<Run> {
    let mut runs: Vec<Run> = Vec::new();
    for ch in word.chars() {
        match runs.last_mut() {
            Some(r) if r.ch == ch && ch.is_alphabetic() => r.len += 1,
            _ => runs.push(Run { ch, len: 1 }),
        }
    }
    runs
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn collapses_elongated_hot() {
        assert!(normalize_elongation("hoooottt").contains("hot"));
        assert!(normalize_elongation("hotttttt").contains("hot"));
    }

    #[test]
    fn identity_is_member() {
        let c = normalize_elongation("hot");
        assert_eq!(c.len(), 1);
        assert!(c.contains("hot"));
    }

    #[test]
    fn loves_from_looooves() {
        assert!(normalize_elongation("loooves").contains("loves"));
        assert!(normalize_elongation("looooooves").contains("loves"));
    }

    #[test]
    fn double_letters_keep_both_forms() {
        let c = normalize_elongation("sheep");
        assert!(c.contains("sheep"));
        assert!(c.contains("shep"));
    }

    #[test]
    fn digits_do_not_form_runs() {
        assert_eq!(normalize_elongation("2000").len(), 1);
    }

    #[test]
    fn capped_candidate_set() {
        let w = "aabbccddeeffgghhiijj";
        let c = normalize_elongation(w);
        assert!(c.len() <= MAX_ELONGATION_CANDIDATES);
        assert!(c.contains("abcdefghij"));
        assert!(c.contains(w));
    }

    proptest! {
        #[test]
        fn shortest_member_is_fixed_point(w in "[a-e]{1,12}") {
            let c = normalize_elongation(&w);
            let shortest = c.iter().min_by_key(|s| (s.len(), (*s).clone())).unwrap().clone();
            let again = normalize_elongation(&shortest);
            let shortest2 = again.iter().min_by_key(|s| (s.len(), (*s).clone())).unwrap().clone();
            prop_assert_eq!(shortest, shortest2);
        }

        #[test]
        fn candidate_count_bounded(w in "[a-c]{0,30}") {
            let c = normalize_elongation(&w);
            let runs = letter_runs(&w).iter().filter(|r| r.len >= 2).count() as u32;
            let bound = ((1usize << runs.min(20)) + 1).min(MAX_ELONGATION_CANDIDATES);
            prop_assert!(c.len() <= bound);
            prop_assert!(c.contains(&w));
        }
    }
}
