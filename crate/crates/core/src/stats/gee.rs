//! Logistic GEE with independence or exchangeable working correlation and
//! sandwich standard errors.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use super::StatsError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WorkingCorrelation {
    Independence,
    #[default]
    Exchangeable,
}

impl std::str::FromStr for WorkingCorrelation {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "independence" => Ok(WorkingCorrelation::Independence),
            "exchangeable" => Ok(WorkingCorrelation::Exchangeable),
            _ => Err(format!("unknown working correlation {s:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeeOptions {
    pub working_correlation: WorkingCorrelation,
    pub max_iter: usize,
    /// Converged when every coefficient moves less than this.
    pub tol: f64,
    /// Any |β| above this is treated as separation.
    pub separation_bound: f64,
}

impl Default for GeeOptions {
    fn default() -> Self {
        GeeOptions {
            working_correlation: WorkingCorrelation::Exchangeable,
            max_iter: 100,
            tol: 1e-8,
            separation_bound: 25.0,
        }
    }
}

/// Per-observation rows. The intercept, if wanted, is an explicit column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeeData {
    pub names: Vec<String>,
    pub x: Vec<Vec<f64>>,
    pub y: Vec<bool>,
    pub cluster: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Coefficient {
    pub name: String,
    pub estimate: f64,
    pub robust_se: f64,
    pub wald_chi2: f64,
    pub p_value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeeFit {
    pub coefficients: Vec<Coefficient>,
    pub working_correlation: WorkingCorrelation,
    /// Exchangeable correlation; 0 under independence.
    pub alpha: f64,
    /// Pearson dispersion estimate.
    pub scale: f64,
    pub n_clusters: usize,
    pub n_obs: usize,
    pub log_quasi_likelihood: f64,
    pub qic: f64,
    pub converged: bool,
    pub iterations: usize,
    /// Row-major p×p sandwich covariance.
    pub robust_cov: Vec<Vec<f64>>,
}

impl GeeFit {
    pub fn coefficient(&self, name: &str) -> Option<&Coefficient> {
        self.coefficients.iter().find(|c| c.name == name)
    }
}

struct Cluster {
    x: DMatrix<f64>,
    y: DVector<f64>,
}

fn expit(eta: f64) -> f64 {
    if eta >= 0.0 {
        1.0 / (1.0 + (-eta).exp())
    } else {
        let e = eta.exp();
        e / (1.0 + e)
    }
}

/// Chi-square(1) upper tail.
pub fn wald_p_value(wald: f64) -> f64 {
    ChiSquared::new(1.0).expect("dof 1").sf(wald)
}

struct Moments {
    /// Σ Dᵢᵀ Vᵢ⁻¹ Dᵢ
    hessian: DMatrix<f64>,
    /// Σ Dᵢᵀ Vᵢ⁻¹ (yᵢ − μᵢ)
    score: DVector<f64>,
    /// Σ Uᵢ Uᵢᵀ
    meat: DMatrix<f64>,
    /// Σ Dᵢᵀ Aᵢ⁻¹ Dᵢ, the independence-model information.
    info_indep: DMatrix<f64>,
}

/// Rows scaled by √v and standardized residuals for one cluster.
fn standardized(c: &Cluster, beta: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>, DVector<f64>) {
    let mu = (&c.x * beta).map(expit);
    let s = mu.map(|m| (m * (1.0 - m)).sqrt().max(1e-12));
    let mut xs = c.x.clone();
    for (i, mut row) in xs.row_iter_mut().enumerate() {
        row *= s[i];
    }
    let r = (&c.y - &mu).component_div(&s);
    (xs, r, mu)
}

/// Uses R⁻¹ = (I − c·11ᵀ)/(1−α) with c = α/(1−α+nα) for the exchangeable case.
fn moments(clusters: &[Cluster], beta: &DVector<f64>, alpha: f64) -> Moments {
    let p = beta.len();
    let mut m = Moments {
        hessian: DMatrix::zeros(p, p),
        score: DVector::zeros(p),
        meat: DMatrix::zeros(p, p),
        info_indep: DMatrix::zeros(p, p),
    };
    for c in clusters {
        let (xs, r, _) = standardized(c, beta);
        let n = xs.nrows() as f64;
        let xtx = xs.transpose() * &xs;
        let xtr = xs.transpose() * &r;
        m.info_indep += &xtx;
        let (h, u) = if alpha == 0.0 {
            (xtx, xtr)
        } else {
            let k = alpha / (1.0 - alpha + n * alpha);
            let col_sum: DVector<f64> = xs.row_sum().transpose();
            let r_sum = r.sum();
            let h = (xtx - &col_sum * col_sum.transpose() * k) / (1.0 - alpha);
            let u = (xtr - &col_sum * (k * r_sum)) / (1.0 - alpha);
            (h, u)
        };
        m.meat += &u * u.transpose();
        m.hessian += h;
        m.score += u;
    }
    m
}

/// Moment estimators of the scale and the exchangeable correlation.
fn dispersion(clusters: &[Cluster], beta: &DVector<f64>, n_obs: usize) -> (f64, f64) {
    let p = beta.len();
    let mut ss = 0.0;
    let mut cross = 0.0;
    let mut pairs = 0.0;
    for c in clusters {
        let (_, r, _) = standardized(c, beta);
        ss += r.norm_squared();
        let sum = r.sum();
        cross += (sum * sum - r.norm_squared()) / 2.0;
        let n = r.len() as f64;
        pairs += n * (n - 1.0) / 2.0;
    }
    let phi = ss / (n_obs as f64 - p as f64);
    let denom = pairs - p as f64;
    let alpha = if denom > 0.0 { cross / (phi * denom) } else { 0.0 };
    (phi, alpha)
}

fn validate(data: &GeeData) -> Result<(), StatsError> {
    let p = data.names.len();
    if data.x.len() != data.y.len() || data.x.len() != data.cluster.len() {
        return Err(StatsError::Invalid("x, y and cluster lengths differ".into()));
    }
    if let Some(i) = data.x.iter().position(|r| r.len() != p) {
        return Err(StatsError::Invalid(format!("row {i} has wrong width")));
    }
    if data.x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(StatsError::Invalid("non-finite covariate".into()));
    }
    if data.y.iter().all(|y| *y) || data.y.iter().all(|y| !*y) {
        return Err(StatsError::ConstantOutcome);
    }
    Ok(())
}

pub fn fit_gee(data: &GeeData, options: &GeeOptions) -> Result<GeeFit, StatsError> {
    validate(data)?;
    let p = data.names.len();
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, c) in data.cluster.iter().enumerate() {
        groups.entry(c).or_default().push(i);
    }
    if groups.len() < 2 {
        return Err(StatsError::TooFewClusters(groups.len()));
    }
    let clusters: Vec<Cluster> = groups
        .values()
        .map(|idx| Cluster {
            x: DMatrix::from_fn(idx.len(), p, |i, j| data.x[idx[i]][j]),
            y: DVector::from_fn(idx.len(), |i, _| f64::from(u8::from(data.y[idx[i]]))),
        })
        .collect();
    let n_obs = data.y.len();

    let gram: DMatrix<f64> = clusters.iter().map(|c| c.x.transpose() * &c.x).sum();
    if gram.clone().cholesky().is_none() || gram.rank(1e-9 * gram.norm()) < p {
        return Err(StatsError::RankDeficient);
    }

    let exchangeable = options.working_correlation == WorkingCorrelation::Exchangeable;
    let mut beta = DVector::zeros(p);
    let mut alpha = 0.0;
    let mut trajectory = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    while iterations < options.max_iter {
        iterations += 1;
        if exchangeable && iterations > 1 {
            alpha = dispersion(&clusters, &beta, n_obs)
                .1
                .clamp(-0.99 / max_size(&clusters), 0.99);
        }
        let m = moments(&clusters, &beta, alpha);
        let step = m.hessian.cholesky().ok_or(StatsError::RankDeficient)?.solve(&m.score);
        beta += &step;
        let delta = step.amax();
        trajectory.push(delta);
        if let Some(j) = beta
            .iter()
            .position(|b| b.abs() > options.separation_bound || !b.is_finite())
        {
            return Err(StatsError::Separation {
                covariate: data.names[j].clone(),
                estimate: beta[j],
            });
        }
        if delta < options.tol {
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(StatsError::NotConverged { iterations, trajectory });
    }

    let (scale, final_alpha) = dispersion(&clusters, &beta, n_obs);
    if exchangeable {
        alpha = final_alpha.clamp(-0.99 / max_size(&clusters), 0.99);
    }
    let m = moments(&clusters, &beta, alpha);
    let bread = m.hessian.clone().try_inverse().ok_or(StatsError::RankDeficient)?;
    let cov = &bread * &m.meat * &bread;
    let cov = (&cov + cov.transpose()) * 0.5;

    let mut qll = 0.0;
    for c in &clusters {
        let mu = (&c.x * &beta).map(expit);
        for (y, m) in c.y.iter().zip(mu.iter()) {
            qll += if *y > 0.5 { m.ln() } else { (1.0 - m).ln() };
        }
    }
    let trace = (&m.info_indep * &cov).trace();

    let coefficients = (0..p)
        .map(|j| {
            let se = cov[(j, j)].max(0.0).sqrt();
            let wald = (beta[j] / se).powi(2);
            Coefficient {
                name: data.names[j].clone(),
                estimate: beta[j],
                robust_se: se,
                wald_chi2: wald,
                p_value: wald_p_value(wald),
            }
        })
        .collect();

    Ok(GeeFit {
        coefficients,
        working_correlation: options.working_correlation,
        alpha,
        scale,
        n_clusters: clusters.len(),
        n_obs,
        log_quasi_likelihood: qll,
        qic: -2.0 * qll + 2.0 * trace,
        converged,
        iterations,
        robust_cov: (0..p).map(|i| (0..p).map(|j| cov[(i, j)]).collect()).collect(),
    })
}

fn max_size(clusters: &[Cluster]) -> f64 {
    clusters
        .iter()
        .map(|c| c.x.nrows())
        .max()
        .unwrap_or(1)
        .saturating_sub(1)
        .max(1) as f64
}

/// Text table in estimate / std. err. / Wald / p layout.
pub fn gee_report(fit: &GeeFit) -> String {
    let w = fit.coefficients.iter().map(|c| c.name.len()).max().unwrap_or(4).max(4);
    let mut s = format!(
        "{:w$}  {:>10}  {:>9}  {:>9}  {:>7}\n",
        "", "Estimate", "Std. err.", "Wald χ²", "p(χ²)"
    );
    for c in &fit.coefficients {
        let p = if c.p_value < 0.001 {
            "< .001".to_string()
        } else {
            format!("{:.3}", c.p_value)
        };
        s.push_str(&format!(
            "{:w$}  {:>10.3}  {:>9.3}  {:>9.2}  {:>7}\n",
            c.name, c.estimate, c.robust_se, c.wald_chi2, p
        ));
    }
    s.push_str(&format!(
        "N = {}, clusters = {}, working correlation = {:?}, alpha = {:.4}\nlog quasi-likelihood = {:.3}, QIC = {:.3}, iterations = {}\n",
        fit.n_obs,
        fit.n_clusters,
        fit.working_correlation,
        fit.alpha,
        fit.log_quasi_likelihood,
        fit.qic,
        fit.iterations
    ));
    s
}

/// Header `term,estimate,robust_se,wald_chi2,p_value`.
pub fn gee_csv(fit: &GeeFit) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["term", "estimate", "robust_se", "wald_chi2", "p_value"])
        .expect("in-memory write");
    for c in &fit.coefficients {
        w.write_record([
            c.name.clone(),
            c.estimate.to_string(),
            c.robust_se.to_string(),
            c.wald_chi2.to_string(),
            c.p_value.to_string(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("flush")).expect("utf-8")
}

#[cfg(test)]
pub(crate) mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Plain Newton–Raphson logistic MLE with full-Hessian LU solves.
    pub(crate) fn newton_logistic(x: &[Vec<f64>], y: &[bool]) -> Vec<f64> {
        let p = x[0].len();
        let mut b = vec![0.0; p];
        for _ in 0..100 {
            let mut g = vec![0.0; p];
            let mut h = vec![vec![0.0; p]; p];
            for (row, &yi) in x.iter().zip(y) {
                let eta: f64 = row.iter().zip(&b).map(|(a, c)| a * c).sum();
                let mu = 1.0 / (1.0 + (-eta).exp());
                let resid = if yi { 1.0 } else { 0.0 } - mu;
                for j in 0..p {
                    g[j] += row[j] * resid;
                    for k in 0..p {
                        h[j][k] += row[j] * row[k] * mu * (1.0 - mu);
                    }
                }
            }
            let hm = DMatrix::from_fn(p, p, |i, j| h[i][j]);
            let step = hm.lu().solve(&DVector::from_vec(g)).unwrap();
            for j in 0..p {
                b[j] += step[j];
            }
            if step.amax() < 1e-13 {
                break;
            }
        }
        b
    }

    pub(crate) fn singleton_dataset(seed: u64, n: usize) -> GeeData {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let truth = [-1.0, 0.7, -0.4, 0.3];
        let mut x = Vec::new();
        let mut y = Vec::new();
        for _ in 0..n {
            let row = vec![
                1.0,
                rng.random_range(-2.0..2.0),
                f64::from(u8::from(rng.random_bool(0.4))),
                rng.random_range(0.0..3.0),
            ];
            let eta: f64 = row.iter().zip(truth).map(|(a, b)| a * b).sum();
            y.push(rng.random_bool(expit(eta)));
            x.push(row);
        }
        GeeData {
            names: vec!["(Intercept)".into(), "a".into(), "b".into(), "c".into()],
            cluster: (0..n).map(|i| format!("c{i}")).collect(),
            x,
            y,
        }
    }

    #[test]
    fn singleton_independence_is_glm() {
        let d = singleton_dataset(1, 800);
        let fit = fit_gee(
            &d,
            &GeeOptions {
                working_correlation: WorkingCorrelation::Independence,
                ..GeeOptions::default()
            },
        )
        .unwrap();
        let oracle = newton_logistic(&d.x, &d.y);
        for (c, o) in fit.coefficients.iter().zip(oracle) {
            assert!((c.estimate - o).abs() < 1e-6, "{} {} vs {o}", c.name, c.estimate);
        }
        assert_eq!(fit.alpha, 0.0);
        assert_eq!(fit.n_obs, 800);
    }

    #[test]
    fn wald_identity_and_psd() {
        let d = singleton_dataset(2, 500);
        let fit = fit_gee(&d, &GeeOptions::default()).unwrap();
        for c in &fit.coefficients {
            assert_eq!(c.wald_chi2, (c.estimate / c.robust_se).powi(2));
            assert!(
                (c.wald_chi2 * c.robust_se.powi(2) - c.estimate.powi(2)).abs() <= 1e-12 * c.estimate.powi(2).max(1.0)
            );
            assert!((0.0..=1.0).contains(&c.p_value));
        }
        let p = fit.robust_cov.len();
        let m = DMatrix::from_fn(p, p, |i, j| fit.robust_cov[i][j]);
        assert_eq!(m, m.transpose());
        assert!(m.symmetric_eigenvalues().iter().all(|e| *e >= -1e-10));
    }

    #[test]
    fn refusals() {
        let mut d = singleton_dataset(3, 50);
        d.y.iter_mut().for_each(|y| *y = false);
        assert!(matches!(
            fit_gee(&d, &GeeOptions::default()),
            Err(StatsError::ConstantOutcome)
        ));

        let mut d = singleton_dataset(3, 50);
        d.cluster.iter_mut().for_each(|c| *c = "one".into());
        assert!(matches!(
            fit_gee(&d, &GeeOptions::default()),
            Err(StatsError::TooFewClusters(1))
        ));

        let mut d = singleton_dataset(3, 50);
        for r in &mut d.x {
            r[3] = 2.0 * r[1];
        }
        assert!(matches!(
            fit_gee(&d, &GeeOptions::default()),
            Err(StatsError::RankDeficient)
        ));

        // b perfectly predicts y
        let mut d = singleton_dataset(3, 200);
        for (r, y) in d.x.iter().zip(d.y.iter_mut()) {
            *y = r[2] > 0.5;
        }
        match fit_gee(&d, &GeeOptions::default()) {
            Err(StatsError::Separation { covariate, .. }) => assert!(covariate == "b" || covariate == "(Intercept)"),
            other => panic!("expected separation, got {other:?}"),
        }

        let d = singleton_dataset(4, 300);
        let opts = GeeOptions {
            max_iter: 1,
            ..GeeOptions::default()
        };
        match fit_gee(&d, &opts) {
            Err(StatsError::NotConverged { iterations, trajectory }) => {
                assert_eq!(iterations, 1);
                assert_eq!(trajectory.len(), 1);
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn qic_penalty_near_p_for_correct_independence_model() {
        let d = singleton_dataset(5, 3000);
        let fit = fit_gee(
            &d,
            &GeeOptions {
                working_correlation: WorkingCorrelation::Independence,
                ..GeeOptions::default()
            },
        )
        .unwrap();
        let penalty = (fit.qic + 2.0 * fit.log_quasi_likelihood) / 2.0;
        assert!((penalty - 4.0).abs() < 1.0, "trace term {penalty}");
    }
}
