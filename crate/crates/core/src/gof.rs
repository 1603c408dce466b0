//! Goodness-of-fit tests built on gQLS residuals.
//!
//! The in-sample statistic `W = (n/σ̂²)·ε̂′Σ*⁻¹ε̂` is asymptotically χ² with
//! `k − m` degrees of freedom (`m` estimated parameters). The out-of-sample
//! statistic evaluates the same quadratic form on a second set of levels; its
//! null distribution has no closed form and is calibrated by parametric
//! bootstrap from the fitted model.

use std::fmt;

use rand::RngCore;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result, Warning};
use crate::estimate::{EstimatorKind, QlsFit, QlsModel};
use crate::family::{Family, ParamMode, Params};
use crate::linalg::{spd_factorize, Matrix, SpdFactor};
use crate::quantile::{
    empirical_quantiles, sigma_star, sorted_quantiles, standard_quantiles, QuantileGrid,
};
use crate::rng::stream_rng;

pub use crate::special::chi2_sf;

/// Significance levels reported with every test.
pub const DEFAULT_ALPHAS: [f64; 3] = [0.01, 0.05, 0.10];

/// Strictly increasing levels inside (0, 1) used by the out-of-sample test.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OutGrid {
    levels: Vec<f64>,
}

impl OutGrid {
    pub fn new(levels: Vec<f64>) -> Result<Self> {
        if levels.is_empty() {
            return Err(Error::InvalidGrid("out-of-sample grid is empty".into()));
        }
        if levels.iter().any(|&p| !(p > 0.0 && p < 1.0)) {
            return Err(Error::InvalidGrid(
                "out-of-sample levels must lie in (0, 1)".into(),
            ));
        }
        if levels.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidGrid(
                "out-of-sample levels must be strictly increasing".into(),
            ));
        }
        Ok(Self { levels })
    }

    pub fn from_grid(grid: &QuantileGrid) -> Self {
        Self {
            levels: grid.levels().to_vec(),
        }
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }

    pub fn r(&self) -> usize {
        self.levels.len()
    }
}

impl Default for OutGrid {
    /// `0.01, 0.03, …, 0.99`.
    fn default() -> Self {
        Self {
            levels: (0..50).map(|j| 0.01 + 0.02 * j as f64).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum GofKind {
    InSample,
    OutOfSample,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Decision {
    pub alpha: f64,
    pub reject: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GofResult {
    pub statistic: f64,
    pub kind: GofKind,
    /// Degrees of freedom of the reference χ² (in-sample test only).
    pub dof: Option<usize>,
    pub p_value: f64,
    /// Bootstrap replicates actually used (out-of-sample test only).
    pub b_replicates: Option<usize>,
    pub decisions: Vec<Decision>,
    pub warnings: Vec<Warning>,
}

impl GofResult {
    fn new(
        statistic: f64,
        kind: GofKind,
        dof: Option<usize>,
        p_value: f64,
        b: Option<usize>,
    ) -> Self {
        let mut r = Self {
            statistic,
            kind,
            dof,
            p_value,
            b_replicates: b,
            decisions: Vec::new(),
            warnings: Vec::new(),
        };
        r.decisions = DEFAULT_ALPHAS
            .iter()
            .map(|&alpha| Decision {
                alpha,
                reject: r.rejects(alpha),
            })
            .collect();
        r
    }

    /// Reject when the p-value does not exceed `alpha`.
    pub fn rejects(&self, alpha: f64) -> bool {
        self.p_value <= alpha
    }

    /// The p-value for display; a bootstrap estimate of 0 is shown as `< 1/B`.
    pub fn p_value_display(&self) -> String {
        match self.b_replicates {
            Some(b) if self.p_value == 0.0 => format!("< {}", 1.0 / b as f64),
            _ => format!("{:.4}", self.p_value),
        }
    }
}

impl fmt::Display for GofResult {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self.kind {
            GofKind::InSample => write!(
                f,
                "W = {:.4} (dof {}), p = {}",
                self.statistic,
                self.dof.unwrap_or(0),
                self.p_value_display()
            ),
            GofKind::OutOfSample => write!(
                f,
                "W_out = {:.4} (B = {}), p = {}",
                self.statistic,
                self.b_replicates.unwrap_or(0),
                self.p_value_display()
            ),
        }
    }
}

fn require_gqls(fit: &QlsFit) -> Result<()> {
    if fit.kind != EstimatorKind::Gqls {
        return Err(Error::NotGqls);
    }
    if !(fit.sigma > 0.0) {
        return Err(Error::NonPositiveScale(fit.sigma));
    }
    Ok(())
}

fn response_of(fit: &QlsFit) -> Result<&[f64]> {
    fit.response
        .as_ref()
        .map(|r| r.values.as_slice())
        .ok_or(Error::NotGqls)
}

fn check_model(model: &QlsModel, fit: &QlsFit) -> Result<()> {
    let k = model.grid().k();
    if fit.family != model.family() || fit.grid.as_ref().map(|g| g.k()) != Some(k) {
        return Err(Error::DimensionMismatch(
            "fit does not belong to this model".into(),
        ));
    }
    Ok(())
}

/// `Y − μ̂ − σ̂·q`: residuals against the full fitted line.
fn line_residuals(y: &[f64], q: &[f64], mu: f64, sigma: f64) -> Vec<f64> {
    y.iter().zip(q).map(|(v, z)| v - mu - sigma * z).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResidualAnalysis {
    pub residuals: Vec<f64>,
    pub fitted: Vec<f64>,
    pub residual_cov: Matrix,
    pub fitted_cov: Matrix,
    /// Covariance between fitted values and residuals; zero for gQLS.
    pub cross_cov: Matrix,
}

impl ResidualAnalysis {
    /// `(fitted, residual)` pairs for a residual plot.
    pub fn plot_pairs(&self) -> Vec<(f64, f64)> {
        self.fitted
            .iter()
            .copied()
            .zip(self.residuals.iter().copied())
            .collect()
    }
}

/// Residuals, fitted quantiles and their estimated covariances.
pub fn residual_analysis(model: &QlsModel, fit: &QlsFit) -> Result<ResidualAnalysis> {
    require_gqls(fit)?;
    check_model(model, fit)?;
    let y = response_of(fit)?;
    let q = model.standard_quantiles();
    let fitted: Vec<f64> = q.iter().map(|z| fit.mu + fit.sigma * z).collect();
    let residuals = line_residuals(y, q, fit.mu, fit.sigma);

    let x = model.design();
    let s = model.sigma_star();
    let w = model.weights(EstimatorKind::Gqls)?;
    let scale = fit.sigma * fit.sigma / fit.n as f64;
    let k = q.len();
    let hat = x.matmul(w)?; // X(X′Σ⁻¹X)⁻¹X′Σ⁻¹
    let proj = x
        .matmul(model.standardized_cov(EstimatorKind::Gqls)?)?
        .matmul(&x.transpose())?;
    let annihilator = Matrix::identity(k).sub(&hat)?;
    let fitted_cov = proj.scaled(scale).symmetrized();
    let residual_cov = s.sub(&proj)?.scaled(scale).symmetrized();
    let cross_cov = hat
        .matmul(s)?
        .matmul(&annihilator.transpose())?
        .scaled(scale);
    Ok(ResidualAnalysis {
        residuals,
        fitted,
        residual_cov,
        fitted_cov,
        cross_cov,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct QDecomposition {
    pub q: f64,
    pub q1: f64,
    pub q2: f64,
}

/// `Q = (n/σ²)(Y − Xβ)′Σ*⁻¹(Y − Xβ)` at the true parameters, split into the
/// residual part `Q1` and the estimation-error part `Q2`.
pub fn q_decomposition(model: &QlsModel, fit: &QlsFit, truth: Params) -> Result<QDecomposition> {
    require_gqls(fit)?;
    check_model(model, fit)?;
    let y = response_of(fit)?;
    let q = model.standard_quantiles();
    let factor = model.sigma_star_factor();
    let c = fit.n as f64 / (truth.sigma * truth.sigma);

    let total = factor.quadratic_form(&line_residuals(y, q, truth.mu, truth.sigma))?;
    let resid = factor.quadratic_form(&line_residuals(y, q, fit.mu, fit.sigma))?;
    // X(β̂ − β) is the difference of the two fitted lines.
    let diff: Vec<f64> = q
        .iter()
        .map(|z| (fit.mu - truth.mu) + (fit.sigma - truth.sigma) * z)
        .collect();
    let est = factor.quadratic_form(&diff)?;
    Ok(QDecomposition {
        q: c * total,
        q1: c * resid,
        q2: c * est,
    })
}

/// In-sample test: `W` against χ² with `k − m` degrees of freedom.
pub fn w_test(model: &QlsModel, fit: &QlsFit) -> Result<GofResult> {
    require_gqls(fit)?;
    check_model(model, fit)?;
    let k = model.grid().k();
    let m = fit.mode.n_params();
    if k < m + 1 {
        return Err(Error::InsufficientDof { k, params: m });
    }
    let y = response_of(fit)?;
    let r = line_residuals(y, model.standard_quantiles(), fit.mu, fit.sigma);
    let w =
        fit.n as f64 / (fit.sigma * fit.sigma) * model.sigma_star_factor().quadratic_form(&r)?;
    let dof = k - m;
    let mut result = GofResult::new(w, GofKind::InSample, Some(dof), chi2_sf(w, dof), None);
    result.warnings = fit.warnings.clone();
    Ok(result)
}

/// Standard quantiles and the factored Σ_out for one family on an out-grid.
#[derive(Debug, Clone)]
pub struct OutModel {
    q: Vec<f64>,
    factor: SpdFactor,
    levels: Vec<f64>,
}

impl OutModel {
    pub fn new(fam: Family, out: &OutGrid) -> Result<Self> {
        Ok(Self {
            q: standard_quantiles(fam, out.levels())?,
            factor: spd_factorize(&sigma_star(fam, out.levels())?)?,
            levels: out.levels().to_vec(),
        })
    }

    fn statistic(&self, y_out: &[f64], mu: f64, sigma: f64, n: usize) -> Result<f64> {
        let r = line_residuals(y_out, &self.q, mu, sigma);
        Ok(n as f64 / (sigma * sigma) * self.factor.quadratic_form(&r)?)
    }
}

/// `W_out = (n/σ̂²)(Y_out − X_out β̂)′Σ_out⁻¹(Y_out − X_out β̂)`.
pub fn w_out_statistic(data: &[f64], fit: &QlsFit, out: &OutGrid) -> Result<f64> {
    require_gqls(fit)?;
    let om = OutModel::new(fit.family, out)?;
    let y_out = empirical_quantiles(data, out.levels())?.values;
    om.statistic(&y_out, fit.mu, fit.sigma, data.len())
}

/// Parametric bootstrap p-value of the out-of-sample statistic.
///
/// The observed statistic comes from a gQLS fit on `data`. Each replicate
/// draws `n` points from the fitted model, refits, and recomputes the
/// statistic; `p̂` is the fraction of replicates strictly exceeding the
/// observed value. Replicate `b` uses stream `b` of a base seed drawn from
/// `rng`, so the result does not depend on thread scheduling.
pub fn bootstrap_pvalue<R: RngCore + ?Sized>(
    data: &[f64],
    fam: Family,
    grid: &QuantileGrid,
    out: &OutGrid,
    b: usize,
    rng: &mut R,
) -> Result<GofResult> {
    let model = QlsModel::new(fam, grid.clone(), ParamMode::LocationScale)?;
    let out_model = OutModel::new(fam, out)?;
    bootstrap_with_models(data, &model, &out_model, b, rng.next_u64())
}

/// [`bootstrap_pvalue`] with prebuilt models and an explicit base seed.
pub fn bootstrap_with_models(
    data: &[f64],
    model: &QlsModel,
    out_model: &OutModel,
    b: usize,
    base_seed: u64,
) -> Result<GofResult> {
    if b == 0 {
        return Err(Error::InvalidConfig("bootstrap needs B >= 1".into()));
    }
    if model.mode() != ParamMode::LocationScale {
        return Err(Error::InvalidConfig(
            "the bootstrap test refits both parameters".into(),
        ));
    }
    let n = data.len();
    let mut sorted = data.to_vec();
    if let Some(i) = sorted.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("sample value at index {i}")));
    }
    sorted.sort_unstable_by(f64::total_cmp);
    let (fit, observed) = fit_and_wout(&sorted, model, out_model)?;
    let params = fit.params()?;
    let fam = model.family();

    let replicates: Vec<Option<f64>> = (0..b as u64)
        .into_par_iter()
        .map(|i| {
            let mut rng = stream_rng(base_seed, i);
            let mut sample = fam.sample(params, n, &mut rng);
            sample.sort_unstable_by(f64::total_cmp);
            fit_and_wout(&sample, model, out_model).ok().map(|(_, w)| w)
        })
        .collect();

    let used: Vec<f64> = replicates.into_iter().flatten().collect();
    let failed = b - used.len();
    if used.is_empty() {
        return Err(Error::BootstrapFailed(b));
    }
    let exceed = used.iter().filter(|&&w| w > observed).count();
    let p = exceed as f64 / used.len() as f64;
    let mut result = GofResult::new(observed, GofKind::OutOfSample, None, p, Some(used.len()));
    result.warnings = fit.warnings;
    if failed * 10 > b {
        result.warnings.push(Warning::BootstrapDegenerate {
            failed,
            requested: b,
        });
    }
    Ok(result)
}

fn fit_and_wout(sorted: &[f64], model: &QlsModel, out_model: &OutModel) -> Result<(QlsFit, f64)> {
    let response = sorted_quantiles(sorted, model.grid().levels());
    let fit = model.fit_response(EstimatorKind::Gqls, response)?;
    if !(fit.sigma > 0.0) {
        return Err(Error::NonPositiveScale(fit.sigma));
    }
    let y_out = sorted_quantiles(sorted, &out_model.levels).values;
    let w = out_model.statistic(&y_out, fit.mu, fit.sigma, sorted.len())?;
    Ok((fit, w))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quantile::{make_grid, QuantileResponse};

    fn model(fam: Family, k: usize) -> QlsModel {
        QlsModel::new(
            fam,
            make_grid(0.05, 0.95, k).unwrap(),
            ParamMode::LocationScale,
        )
        .unwrap()
    }

    fn exact_fit(m: &QlsModel, mu: f64, sigma: f64, n: usize) -> QlsFit {
        let y = m
            .standard_quantiles()
            .iter()
            .map(|z| mu + sigma * z)
            .collect();
        m.fit_response(
            EstimatorKind::Gqls,
            QuantileResponse {
                values: y,
                n,
                warnings: vec![],
            },
        )
        .unwrap()
    }

    #[test]
    fn default_out_grid() {
        let g = OutGrid::default();
        assert_eq!(g.r(), 50);
        assert!((g.levels()[0] - 0.01).abs() < 1e-15 && (g.levels()[49] - 0.99).abs() < 1e-12);
        assert!(OutGrid::new(vec![0.2, 0.1]).is_err());
        assert!(OutGrid::new(vec![0.0, 0.1]).is_err());
    }

    #[test]
    fn perfect_fit() {
        let m = model(Family::Logistic, 25);
        let fit = exact_fit(&m, 1.0, 2.0, 500);
        let w = w_test(&m, &fit).unwrap();
        assert!(w.statistic.abs() < 1e-18 && w.p_value == 1.0, "{w:?}");
        let ra = residual_analysis(&m, &fit).unwrap();
        assert!(ra.residuals.iter().all(|r| r.abs() < 1e-12));
    }

    #[test]
    fn two_dof_tail() {
        let r = GofResult::new(5.991, GofKind::InSample, Some(2), chi2_sf(5.991, 2), None);
        assert!((r.p_value - 0.05).abs() < 1e-4);
    }

    #[test]
    fn refuses_oqls_and_bad_scale() {
        let m = model(Family::Normal, 10);
        let mut fit = exact_fit(&m, 0.0, 1.0, 100);
        fit.kind = EstimatorKind::Oqls;
        assert!(matches!(w_test(&m, &fit), Err(Error::NotGqls)));
        fit.kind = EstimatorKind::Gqls;
        fit.sigma = -1.0;
        assert!(matches!(w_test(&m, &fit), Err(Error::NonPositiveScale(_))));
        let m2 = model(Family::Normal, 2);
        let fit2 = exact_fit(&m2, 0.0, 1.0, 100);
        assert!(matches!(
            w_test(&m2, &fit2),
            Err(Error::InsufficientDof { .. })
        ));
    }

    #[test]
    fn bootstrap_with_single_replicate_counts() {
        let m = model(Family::Normal, 25);
        let out = OutModel::new(Family::Normal, &OutGrid::default()).unwrap();
        // Perfectly regular data give an observed statistic far below any replicate.
        let n = 2000;
        let data: Vec<f64> = (1..=n)
            .map(|i| crate::special::normal_quantile(i as f64 / (n + 1) as f64))
            .collect();
        let r = bootstrap_with_models(&data, &m, &out, 1, 7).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert_eq!(r.b_replicates, Some(1));
    }

    #[test]
    fn zero_p_value_display() {
        let r = GofResult::new(50.0, GofKind::OutOfSample, None, 0.0, Some(200));
        assert_eq!(r.p_value_display(), "< 0.005");
        assert!(r.decisions.iter().all(|d| d.reject));
    }
}
