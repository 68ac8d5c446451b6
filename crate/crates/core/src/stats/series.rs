use std::collections::BTreeMap;
use std::fmt;

use chrono::{Datelike, NaiveDate};
use serde::{Deserialize, Serialize};

use super::Predictions;
use crate::corpus::Review;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Quarter {
    pub year: i32,
    /// 1..=4
    pub q: u32,
}

impl Quarter {
    pub fn of(date: NaiveDate) -> Quarter {
        Quarter {
            year: date.year(),
            q: date.month0() / 3 + 1,
        }
    }

    pub fn next(self) -> Quarter {
        if self.q == 4 {
            Quarter {
                year: self.year + 1,
                q: 1,
            }
        } else {
            Quarter { q: self.q + 1, ..self }
        }
    }

    /// Quarters from `self` to `later`; negative when `later` is earlier.
    pub fn offset_to(self, later: Quarter) -> i64 {
        (i64::from(later.year) - i64::from(self.year)) * 4 + i64::from(later.q) - i64::from(self.q)
    }
}

impl fmt::Display for Quarter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}Q{}", self.year, self.q)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuarterPoint {
    pub quarter: Quarter,
    pub n: usize,
    pub k: usize,
    /// `ln((k+½)/(n−k+½))`; absent for empty quarters.
    pub log_odds: Option<f64>,
}

/// One point per calendar quarter from the earliest to the latest predicted
/// review, gaps included.
pub fn quarterly_logodds(reviews: &[Review], predictions: &Predictions) -> Vec<QuarterPoint> {
    let mut by_q: BTreeMap<Quarter, (usize, usize)> = BTreeMap::new();
    for r in reviews {
        if let Some(&p) = predictions.get(&r.review_id) {
            let e = by_q.entry(Quarter::of(r.date)).or_default();
            e.0 += 1;
            e.1 += usize::from(p);
        }
    }
    let (Some(&first), Some(&last)) = (by_q.keys().next(), by_q.keys().next_back()) else {
        return Vec::new();
    };
    let mut out = Vec::new();
    let mut q = first;
    while q <= last {
        let (n, k) = by_q.get(&q).copied().unwrap_or_default();
        out.push(QuarterPoint {
            quarter: q,
            n,
            k,
            log_odds: (n > 0).then(|| ((k as f64 + 0.5) / ((n - k) as f64 + 0.5)).ln()),
        });
        q = q.next();
    }
    out
}

/// Header `quarter,n,k,log_odds`; absent log-odds are empty.
pub fn trend_csv(points: &[QuarterPoint]) -> String {
    let mut s = String::from("quarter,n,k,log_odds\n");
    for p in points {
        let lo = p.log_odds.map(|v| v.to_string()).unwrap_or_default();
        s.push_str(&format!("{},{},{},{}\n", p.quarter, p.n, p.k, lo));
    }
    s
}

/// Unit bins on the five-point scale; the last bin is closed.
pub const DEFAULT_RATING_EDGES: [f64; 5] = [1.0, 2.0, 3.0, 4.0, 5.0];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RatingBin {
    /// "quality" or "difficulty".
    pub rating: String,
    pub lo: f64,
    pub hi: f64,
    pub n: usize,
    pub k: usize,
    pub proportion: Option<f64>,
}

/// Share of predicted-positive reviews per rating bin, for quality and for
/// difficulty. Bins are `[lo, hi)` except the last, which is `[lo, hi]`.
/// Ratings outside every bin are ignored.
pub fn proportions_by_rating(reviews: &[Review], predictions: &Predictions, edges: &[f64]) -> Vec<RatingBin> {
    let nbins = edges.len().saturating_sub(1);
    let bin_of =
        |v: f64| (0..nbins).find(|&b| v >= edges[b] && (v < edges[b + 1] || (b + 1 == nbins && v <= edges[b + 1])));
    let mut out = Vec::new();
    for (name, get) in [
        ("quality", (|r: &Review| r.quality) as fn(&Review) -> Option<f64>),
        ("difficulty", |r: &Review| r.difficulty),
    ] {
        let mut counts = vec![(0usize, 0usize); nbins];
        for r in reviews {
            let (Some(&p), Some(v)) = (predictions.get(&r.review_id), get(r)) else {
                continue;
            };
            if let Some(b) = bin_of(v) {
                counts[b].0 += 1;
                counts[b].1 += usize::from(p);
            }
        }
        out.extend(counts.into_iter().enumerate().map(|(b, (n, k))| RatingBin {
            rating: name.into(),
            lo: edges[b],
            hi: edges[b + 1],
            n,
            k,
            proportion: (n > 0).then(|| k as f64 / n as f64),
        }));
    }
    out
}

/// Header `rating,lo,hi,n,k,proportion`.
pub fn proportions_csv(bins: &[RatingBin]) -> String {
    let mut s = String::from("rating,lo,hi,n,k,proportion\n");
    for b in bins {
        let p = b.proportion.map(|v| v.to_string()).unwrap_or_default();
        s.push_str(&format!("{},{},{},{},{},{}\n", b.rating, b.lo, b.hi, b.n, b.k, p));
    }
    s
}
