use std::collections::HashMap;
use std::fmt;

use chrono::{Datelike, NaiveDate};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CorpusError;
use crate::ensemble::PredictionRecord;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stratum {
    AgreePositive,
    AgreeNegative,
    Disagree,
}

impl fmt::Display for Stratum {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stratum::AgreePositive => "agree-positive",
            Stratum::AgreeNegative => "agree-negative",
            Stratum::Disagree => "disagree",
        })
    }
}

impl Stratum {
    pub fn of(p: &PredictionRecord) -> Stratum {
        match (p.chunker_label, p.doc_label) {
            (true, true) => Stratum::AgreePositive,
            (false, false) => Stratum::AgreeNegative,
            _ => Stratum::Disagree,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TestSetRequest {
    pub n_agree_pos: usize,
    pub n_agree_neg: usize,
    pub n_disagree: usize,
    /// Extra weight on recent reviews in the disagreement stratum; 0 is uniform.
    pub recency_bias: f64,
    pub seed: u64,
}

impl Default for TestSetRequest {
    fn default() -> Self {
        TestSetRequest {
            n_agree_pos: 150,
            n_agree_neg: 150,
            n_disagree: 300,
            recency_bias: 0.0,
            seed: 0,
        }
    }
}

/// Draw the adjudication test set: fixed counts from each agreement
/// stratum, then shuffle the union.
///
/// Disagreement reviews are drawn without replacement with weight
/// `1 + recency_bias * t`, where `t` in `[0, 1]` is the review date scaled
/// over the stratum's date range. Reviews without a known date get `t = 0`.
pub fn sample_test_set(
    predictions: &[PredictionRecord],
    dates: &HashMap<String, NaiveDate>,
    request: &TestSetRequest,
) -> Result<Vec<String>, CorpusError> {
    if request.recency_bias < 0.0 || !request.recency_bias.is_finite() {
        return Err(CorpusError::Invalid {
            id: "request".into(),
            message: format!("recency_bias must be >= 0, got {}", request.recency_bias),
        });
    }
    let mut pools: HashMap<Stratum, Vec<&str>> = HashMap::new();
    for p in predictions {
        pools.entry(Stratum::of(p)).or_default().push(&p.review_id);
    }
    for pool in pools.values_mut() {
        pool.sort_unstable();
    }

    let mut rng = ChaCha8Rng::seed_from_u64(request.seed);
    let mut out: Vec<String> = Vec::new();
    for (stratum, n) in [
        (Stratum::AgreePositive, request.n_agree_pos),
        (Stratum::AgreeNegative, request.n_agree_neg),
        (Stratum::Disagree, request.n_disagree),
    ] {
        let pool = pools.get(&stratum).map(Vec::as_slice).unwrap_or(&[]);
        if pool.len() < n {
            return Err(CorpusError::PoolTooSmall {
                stratum,
                available: pool.len(),
                requested: n,
            });
        }
        if n == 0 {
            continue;
        }
        let bias = if stratum == Stratum::Disagree {
            request.recency_bias
        } else {
            0.0
        };
        let weights = recency_weights(pool, dates, bias);
        out.extend(weighted_without_replacement(pool, &weights, n, &mut rng));
    }
    out.shuffle(&mut rng);
    Ok(out)
}

fn recency_weights(pool: &[&str], dates: &HashMap<String, NaiveDate>, bias: f64) -> Vec<f64> {
    if bias == 0.0 {
        return vec![1.0; pool.len()];
    }
    let days: Vec<Option<i64>> = pool
        .iter()
        .map(|id| dates.get(*id).map(|d| d.num_days_from_ce() as i64))
        .collect();
    let lo = days.iter().flatten().min().copied().unwrap_or(0);
    let hi = days.iter().flatten().max().copied().unwrap_or(0);
    let span = (hi - lo) as f64;
    days.iter()
        .map(|d| {
            let t = match d {
                Some(d) if span > 0.0 => (*d - lo) as f64 / span,
                _ => 0.0,
            };
            1.0 + bias * t
        })
        .collect()
}

/// Efraimidis–Spirakis: keep the `k` largest `ln(u) / w`.
fn weighted_without_replacement(pool: &[&str], weights: &[f64], k: usize, rng: &mut ChaCha8Rng) -> Vec<String> {
    let mut keyed: Vec<(f64, usize)> = weights
        .iter()
        .enumerate()
        .map(|(i, &w)| {
            let u: f64 = rng.random::<f64>().max(f64::MIN_POSITIVE);
            (u.ln() / w, i)
        })
        .collect();
    keyed.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    keyed.into_iter().take(k).map(|(_, i)| pool[i].to_string()).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ensemble::combine;
    use statrs::distribution::{ChiSquared, ContinuousCDF};

    fn preds(counts: [usize; 4]) -> Vec<PredictionRecord> {
        let mut out = Vec::new();
        let cells = [(true, true), (true, false), (false, true), (false, false)];
        for (cell, &(c, d)) in counts.iter().zip(&cells) {
            for i in 0..*cell {
                out.push(PredictionRecord::new(format!("{c}{d}-{i}"), c, d));
            }
        }
        out
    }

    #[test]
    fn published_request_sizes() {
        let p = preds([8_573, 9_858, 4_295, 336_242]);
        let ids = sample_test_set(&p, &HashMap::new(), &TestSetRequest::default()).unwrap();
        assert_eq!(ids.len(), 600);
        let by_id: HashMap<&str, &PredictionRecord> = p.iter().map(|r| (r.review_id.as_str(), r)).collect();
        let mut counts = HashMap::new();
        for id in &ids {
            *counts.entry(Stratum::of(by_id[id.as_str()])).or_insert(0) += 1;
        }
        assert_eq!(counts[&Stratum::AgreePositive], 150);
        assert_eq!(counts[&Stratum::AgreeNegative], 150);
        assert_eq!(counts[&Stratum::Disagree], 300);
        let unique: std::collections::HashSet<_> = ids.iter().collect();
        assert_eq!(unique.len(), 600);
    }

    #[test]
    fn empty_request() {
        let req = TestSetRequest {
            n_agree_pos: 0,
            n_agree_neg: 0,
            n_disagree: 0,
            ..TestSetRequest::default()
        };
        assert!(sample_test_set(&[], &HashMap::new(), &req).unwrap().is_empty());
    }

    #[test]
    fn pool_too_small() {
        let p = preds([3, 0, 0, 10]);
        let err = sample_test_set(&p, &HashMap::new(), &TestSetRequest::default()).unwrap_err();
        assert!(matches!(
            err,
            CorpusError::PoolTooSmall {
                stratum: Stratum::AgreePositive,
                available: 3,
                requested: 150
            }
        ));
    }

    #[test]
    fn deterministic_per_seed() {
        let p = preds([200, 200, 200, 400]);
        let req = TestSetRequest::default();
        let a = sample_test_set(&p, &HashMap::new(), &req).unwrap();
        let b = sample_test_set(&p, &HashMap::new(), &req).unwrap();
        assert_eq!(a, b);
        let c = sample_test_set(&p, &HashMap::new(), &TestSetRequest { seed: 1, ..req }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn zero_bias_is_uniform() {
        // 10k single draws from a 20-review disagreement pool
        let p = preds([0, 20, 0, 0]);
        let dates: HashMap<String, NaiveDate> = p
            .iter()
            .enumerate()
            .map(|(i, r)| {
                (
                    r.review_id.clone(),
                    NaiveDate::from_ymd_opt(2010 + i as i32 / 2, 1, 1).unwrap(),
                )
            })
            .collect();
        let mut counts: HashMap<String, f64> = HashMap::new();
        for seed in 0..10_000 {
            let req = TestSetRequest {
                n_agree_pos: 0,
                n_agree_neg: 0,
                n_disagree: 1,
                recency_bias: 0.0,
                seed,
            };
            let ids = sample_test_set(&p, &dates, &req).unwrap();
            *counts.entry(ids[0].clone()).or_default() += 1.0;
        }
        let expected = 10_000.0 / 20.0;
        let chi2: f64 = p
            .iter()
            .map(|r| {
                let o = counts.get(&r.review_id).copied().unwrap_or(0.0);
                (o - expected).powi(2) / expected
            })
            .sum();
        let pval = 1.0 - ChiSquared::new(19.0).unwrap().cdf(chi2);
        assert!(pval > 0.01, "chi2 {chi2}, p {pval}");
    }

    #[test]
    fn positive_bias_prefers_recent() {
        let p = preds([0, 100, 0, 0]);
        let dates: HashMap<String, NaiveDate> = p
            .iter()
            .enumerate()
            .map(|(i, r)| {
                let d = NaiveDate::from_ymd_opt(2010, 1, 1).unwrap() + chrono::Duration::days(i as i64 * 30);
                (r.review_id.clone(), d)
            })
            .collect();
        let rank: HashMap<&str, usize> = p.iter().enumerate().map(|(i, r)| (r.review_id.as_str(), i)).collect();
        let mean_rank = |bias: f64| {
            let mut total = 0.0;
            for seed in 0..200 {
                let req = TestSetRequest {
                    n_agree_pos: 0,
                    n_agree_neg: 0,
                    n_disagree: 10,
                    recency_bias: bias,
                    seed,
                };
                for id in sample_test_set(&p, &dates, &req).unwrap() {
                    total += rank[id.as_str()] as f64;
                }
            }
            total / 2000.0
        };
        assert!(mean_rank(5.0) > mean_rank(0.0) + 10.0);
    }

    #[test]
    fn combine_is_consistent_with_strata() {
        for (c, d) in [(true, true), (true, false), (false, true), (false, false)] {
            let v = combine(c, d);
            let rec = PredictionRecord::new("x".into(), c, d);
            assert_eq!(rec.ensemble1, v.ensemble1);
            assert_eq!(Stratum::of(&rec) == Stratum::Disagree, c != d);
        }
    }
}
