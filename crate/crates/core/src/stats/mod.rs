//! Corpus-scale analyses: professor-level contingency tables, chi-square
//! tests, logistic GEE and the trend/proportion series.

mod design;
mod gee;
mod series;

use std::collections::HashMap;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::corpus::{professors, Review};
use crate::textproc::{Gender, Lexicons};

pub use design::{gee_design, DesignConfig, DesignSummary, TABLE7_TERMS};
pub use gee::{
    fit_gee, gee_csv, gee_report, wald_p_value, Coefficient, GeeData, GeeFit, GeeOptions, WorkingCorrelation,
};
pub use series::{
    proportions_by_rating, proportions_csv, quarterly_logodds, trend_csv, Quarter, QuarterPoint, RatingBin,
    DEFAULT_RATING_EDGES,
};

#[derive(Debug, Error)]
pub enum StatsError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("expected count is zero in row {row}, column {col}")]
    ZeroExpected { row: usize, col: usize },
    #[error("no professors with known gender")]
    NoGenderedProfessors,
    #[error("outcome is constant")]
    ConstantOutcome,
    #[error("need at least 2 clusters, found {0}")]
    TooFewClusters(usize),
    #[error("design matrix is not of full column rank")]
    RankDeficient,
    #[error("separation: coefficient for {covariate} reached {estimate}")]
    Separation { covariate: String, estimate: f64 },
    #[error("no convergence after {iterations} iterations; max |Δβ| trajectory {trajectory:?}")]
    NotConverged { iterations: usize, trajectory: Vec<f64> },
}

/// Review-level predictions keyed by review id; absent ids are excluded.
pub type Predictions = HashMap<String, bool>;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ContingencyTable {
    pub row_labels: Vec<String>,
    pub col_labels: Vec<String>,
    pub counts: Vec<Vec<u64>>,
}

impl ContingencyTable {
    pub fn new(row_labels: Vec<String>, col_labels: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self, StatsError> {
        if counts.len() != row_labels.len() || counts.iter().any(|r| r.len() != col_labels.len()) {
            return Err(StatsError::Invalid("counts shape does not match labels".into()));
        }
        if row_labels.len() < 2 || col_labels.len() < 2 {
            return Err(StatsError::Invalid("need at least 2 rows and 2 columns".into()));
        }
        Ok(ContingencyTable {
            row_labels,
            col_labels,
            counts,
        })
    }

    pub fn unlabeled(counts: Vec<Vec<u64>>) -> Result<Self, StatsError> {
        let r = counts.len();
        let c = counts.first().map_or(0, Vec::len);
        Self::new(
            (0..r).map(|i| format!("r{i}")).collect(),
            (0..c).map(|j| format!("c{j}")).collect(),
            counts,
        )
    }

    pub fn row_totals(&self) -> Vec<u64> {
        self.counts.iter().map(|r| r.iter().sum()).collect()
    }

    pub fn col_totals(&self) -> Vec<u64> {
        (0..self.col_labels.len())
            .map(|j| self.counts.iter().map(|r| r[j]).sum())
            .collect()
    }

    pub fn total(&self) -> u64 {
        self.row_totals().iter().sum()
    }

    pub fn transpose(&self) -> Self {
        ContingencyTable {
            row_labels: self.col_labels.clone(),
            col_labels: self.row_labels.clone(),
            counts: (0..self.col_labels.len())
                .map(|j| self.counts.iter().map(|r| r[j]).collect())
                .collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ChiSquare {
    pub chi2: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Pearson test of independence. The Yates correction applies only when
/// there is one degree of freedom.
pub fn chi_square_independence(table: &ContingencyTable, yates: bool) -> Result<ChiSquare, StatsError> {
    let rows = table.row_totals();
    let cols = table.col_totals();
    let n = table.total() as f64;
    let dof = (rows.len() - 1) * (cols.len() - 1);
    let correct = yates && dof == 1;
    let mut chi2 = 0.0;
    for (i, r) in rows.iter().enumerate() {
        for (j, c) in cols.iter().enumerate() {
            let e = *r as f64 * *c as f64 / n;
            if !(e > 0.0) {
                return Err(StatsError::ZeroExpected { row: i, col: j });
            }
            let mut d = (table.counts[i][j] as f64 - e).abs();
            if correct {
                d = (d - 0.5).max(0.0);
            }
            chi2 += d * d / e;
        }
    }
    let p_value = ChiSquared::new(dof as f64).expect("dof ≥ 1").sf(chi2);
    Ok(ChiSquare { chi2, dof, p_value })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProfessorTable {
    /// Rows female, male; columns has / has not an objectifying review.
    pub table: ContingencyTable,
    pub female_rate: Option<f64>,
    pub male_rate: Option<f64>,
    pub unknown_gender_excluded: usize,
}

/// Professors with at least one predicted review, by gender and whether
/// any of their reviews is predicted positive.
pub fn professor_objectification_table(
    reviews: &[Review],
    predictions: &Predictions,
    lexicons: &Lexicons,
) -> Result<ProfessorTable, StatsError> {
    let predicted: Vec<&Review> = reviews
        .iter()
        .filter(|r| predictions.contains_key(&r.review_id))
        .collect();
    let mut counts = vec![vec![0u64; 2]; 2];
    let mut unknown = 0;
    for prof in professors(predicted.iter().copied(), lexicons) {
        let row = match prof.gender {
            Gender::Female => 0,
            Gender::Male => 1,
            Gender::Unknown => {
                unknown += 1;
                continue;
            }
        };
        let has = prof.review_ids.iter().any(|id| predictions[id]);
        counts[row][usize::from(!has)] += 1;
    }
    if counts.iter().flatten().all(|c| *c == 0) {
        return Err(StatsError::NoGenderedProfessors);
    }
    let rate = |r: &[u64]| {
        let t = r[0] + r[1];
        (t > 0).then(|| r[0] as f64 / t as f64)
    };
    Ok(ProfessorTable {
        female_rate: rate(&counts[0]),
        male_rate: rate(&counts[1]),
        table: ContingencyTable::new(
            vec!["female".into(), "male".into()],
            vec!["has".into(), "has_not".into()],
            counts,
        )?,
        unknown_gender_excluded: unknown,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::test_review;
    use proptest::prelude::*;

    /// Expected counts from margins, computed cell by cell.
    fn oracle_chi2(t: &[Vec<u64>]) -> f64 {
        let n: f64 = t.iter().flatten().map(|c| *c as f64).sum();
        let mut s = 0.0;
        for i in 0..t.len() {
            for j in 0..t[0].len() {
                let ri: f64 = t[i].iter().map(|c| *c as f64).sum();
                let cj: f64 = t.iter().map(|r| r[j] as f64).sum();
                let e = ri * cj / n;
                s += (t[i][j] as f64 - e).powi(2) / e;
            }
        }
        s
    }

    #[test]
    fn independence_is_zero() {
        let t = ContingencyTable::unlabeled(vec![vec![10, 10], vec![10, 10]]).unwrap();
        let r = chi_square_independence(&t, false).unwrap();
        assert_eq!(r.chi2, 0.0);
        assert_eq!(r.dof, 1);
        assert!((r.p_value - 1.0).abs() < 1e-12);
    }

    #[test]
    fn thirty_ten_table() {
        // E = 20 everywhere, each cell contributes 100/20
        let t = ContingencyTable::unlabeled(vec![vec![30, 10], vec![10, 30]]).unwrap();
        let r = chi_square_independence(&t, false).unwrap();
        assert!((r.chi2 - 20.0).abs() < 1e-12);
        assert!((r.chi2 - oracle_chi2(&t.counts)).abs() < 1e-12);
        let y = chi_square_independence(&t, true).unwrap();
        assert!((y.chi2 - 4.0 * 9.5 * 9.5 / 20.0).abs() < 1e-12);
        assert!(r.p_value < 1e-4);
    }

    #[test]
    fn zero_expected_rejected() {
        let t = ContingencyTable::unlabeled(vec![vec![0, 0], vec![3, 4]]).unwrap();
        assert!(matches!(
            chi_square_independence(&t, false),
            Err(StatsError::ZeroExpected { row: 0, .. })
        ));
    }

    #[test]
    fn professor_level_counting() {
        let mut rs = Vec::new();
        for i in 0..5 {
            let mut r = test_review(&format!("r{i}"), "Great class.");
            r.professor_id = "p1".into();
            r.gender = Some(Gender::Female);
            rs.push(r);
        }
        let mut other = test_review("m1", "He is fine.");
        other.professor_id = "p2".into();
        other.gender = Some(Gender::Male);
        rs.push(other);
        let mut unk = test_review("u1", "Great class.");
        unk.professor_id = "p3".into();
        unk.gender = None;
        rs.push(unk);
        let mut preds: Predictions = rs.iter().map(|r| (r.review_id.clone(), false)).collect();
        preds.insert("r2".into(), true);
        let t = professor_objectification_table(&rs, &preds, &Lexicons::default()).unwrap();
        assert_eq!(t.table.counts, vec![vec![1, 0], vec![0, 1]]);
        assert_eq!(t.unknown_gender_excluded, 1);
        assert_eq!(t.female_rate, Some(1.0));
        assert_eq!(t.male_rate, Some(0.0));
    }

    #[test]
    fn single_positive_professor() {
        let mut r = test_review("r", "Great class.");
        r.gender = Some(Gender::Male);
        let preds: Predictions = [("r".to_string(), true)].into();
        let t = professor_objectification_table(&[r], &preds, &Lexicons::default()).unwrap();
        assert_eq!(t.table.counts, vec![vec![0, 0], vec![1, 0]]);
    }

    proptest! {
        #[test]
        fn chi2_symmetries(a in 1u64..500, b in 1u64..500, c in 1u64..500, d in 1u64..500) {
            let t = ContingencyTable::unlabeled(vec![vec![a, b], vec![c, d]]).unwrap();
            let base = chi_square_independence(&t, false).unwrap().chi2;
            prop_assert!((base - oracle_chi2(&t.counts)).abs() <= 1e-9 * base.max(1.0));
            let tt = chi_square_independence(&t.transpose(), false).unwrap().chi2;
            let swapped = ContingencyTable::unlabeled(vec![vec![c, d], vec![a, b]]).unwrap();
            let sw = chi_square_independence(&swapped, false).unwrap().chi2;
            prop_assert!((base - tt).abs() <= 1e-9 * base.max(1.0));
            prop_assert!((base - sw).abs() <= 1e-9 * base.max(1.0));
        }
    }
}
