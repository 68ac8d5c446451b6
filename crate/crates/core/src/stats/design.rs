use std::collections::HashMap;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use super::series::Quarter;
use super::{GeeData, Predictions};
use crate::corpus::{professors, Review};
use crate::textproc::{Gender, Lexicons};

pub const TABLE7_TERMS: [&str; 7] = [
    "(Intercept)",
    "pepperAbsent",
    "timeInQuarters",
    "difficultyHigh",
    "qualityHigh",
    "genderFemale",
    "qualityHigh:genderFemale",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignConfig {
    /// `timeInQuarters` is 0 in the quarter containing this date.
    pub epoch: NaiveDate,
    /// High when the rating is at least this.
    pub quality_threshold: f64,
    pub difficulty_threshold: f64,
}

impl Default for DesignConfig {
    fn default() -> Self {
        DesignConfig {
            epoch: NaiveDate::from_ymd_opt(2010, 1, 1).expect("valid date"),
            quality_threshold: 3.5,
            difficulty_threshold: 3.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct DesignSummary {
    pub used: usize,
    pub no_prediction: usize,
    pub missing_rating: usize,
    pub unknown_gender: usize,
    pub before_epoch: usize,
}

/// Per-review rows for the pepper/time/rating/gender model, clustered by
/// professor. Reviews without a prediction (abstentions included), without
/// both ratings, with unknown professor gender, or dated before the epoch
/// quarter are dropped and counted.
pub fn gee_design(
    reviews: &[Review],
    predictions: &Predictions,
    config: &DesignConfig,
    lexicons: &Lexicons,
) -> (GeeData, DesignSummary) {
    let gender: HashMap<String, Gender> = professors(reviews, lexicons)
        .into_iter()
        .map(|p| (p.professor_id, p.gender))
        .collect();
    let epoch = Quarter::of(config.epoch);
    let mut s = DesignSummary::default();
    let mut data = GeeData {
        names: TABLE7_TERMS.iter().map(|t| t.to_string()).collect(),
        x: Vec::new(),
        y: Vec::new(),
        cluster: Vec::new(),
    };
    for r in reviews {
        let Some(&y) = predictions.get(&r.review_id) else {
            s.no_prediction += 1;
            continue;
        };
        let (Some(q), Some(d)) = (r.quality, r.difficulty) else {
            s.missing_rating += 1;
            continue;
        };
        let female = match gender.get(&r.professor_id).copied().unwrap_or_default() {
            Gender::Female => 1.0,
            Gender::Male => 0.0,
            Gender::Unknown => {
                s.unknown_gender += 1;
                continue;
            }
        };
        let t = epoch.offset_to(Quarter::of(r.date));
        if t < 0 {
            s.before_epoch += 1;
            continue;
        }
        let flag = |b: bool| f64::from(u8::from(b));
        let qh = flag(q >= config.quality_threshold);
        data.x.push(vec![
            1.0,
            flag(!r.pepper_present),
            t as f64,
            flag(d >= config.difficulty_threshold),
            qh,
            female,
            qh * female,
        ]);
        data.y.push(y);
        data.cluster.push(r.professor_id.clone());
        s.used += 1;
    }
    (data, s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::test_review;

    #[test]
    fn rows_and_exclusions() {
        let mut a = test_review("a", "Fine.");
        a.date = NaiveDate::from_ymd_opt(2018, 7, 1).unwrap();
        a.pepper_present = false;
        a.quality = Some(4.0);
        a.difficulty = Some(3.0);
        a.gender = Some(Gender::Female);
        let mut b = a.clone();
        b.review_id = "b".into();
        b.quality = None;
        let mut c = a.clone();
        c.review_id = "c".into();
        c.date = NaiveDate::from_ymd_opt(2009, 12, 31).unwrap();
        let d = Review {
            review_id: "d".into(),
            ..a.clone()
        };
        let preds: Predictions = [("a", true), ("b", false), ("c", false)]
            .into_iter()
            .map(|(k, v)| (k.to_string(), v))
            .collect();
        let (data, s) = gee_design(&[a, b, c, d], &preds, &DesignConfig::default(), &Lexicons::default());
        assert_eq!(data.x, vec![vec![1.0, 1.0, 34.0, 0.0, 1.0, 1.0, 1.0]]);
        assert_eq!(data.y, vec![true]);
        assert_eq!(
            s,
            DesignSummary {
                used: 1,
                no_prediction: 1,
                missing_rating: 1,
                unknown_gender: 0,
                before_epoch: 1
            }
        );
    }
}
