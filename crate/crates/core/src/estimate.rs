//! Quantile least-squares estimators and the maximum-likelihood benchmark.
//!
//! Both QLS estimators regress the selected sample quantiles `Y` on the
//! standard quantiles of the family: `Y ≈ μ·1 + σ·F*⁻¹(p)`. The ordinary
//! variant ignores the correlation between sample quantiles; the generalized
//! one weights by Σ*, which is known up to σ².

use std::fmt;
use std::str::FromStr;

use serde::Serialize;

use crate::error::{Error, Result, Warning};
use crate::family::{Family, ParamMode, Params};
use crate::linalg::{spd_factorize, Matrix, SpdFactor};
use crate::quantile::{
    design_matrix, empirical_quantiles, empirical_quantiles_in_place, make_grid, sigma_star,
    standard_quantiles, QuantileGrid, QuantileResponse,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum EstimatorKind {
    Oqls,
    Gqls,
    Mle,
}

impl EstimatorKind {
    pub fn name(self) -> &'static str {
        match self {
            EstimatorKind::Oqls => "oqls",
            EstimatorKind::Gqls => "gqls",
            EstimatorKind::Mle => "mle",
        }
    }
}

impl fmt::Display for EstimatorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for EstimatorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "oqls" => Ok(EstimatorKind::Oqls),
            "gqls" => Ok(EstimatorKind::Gqls),
            "mle" => Ok(EstimatorKind::Mle),
            other => Err(Error::InvalidConfig(format!("unknown estimator '{other}'"))),
        }
    }
}

/// A fitted location-scale model.
///
/// `mu`/`sigma` hold the estimates; in a one-parameter mode the known value is
/// copied through. `sigma` may be non-positive for degenerate linear fits, in
/// which case a [`Warning::NonPositiveScale`] is attached and [`QlsFit::params`]
/// refuses.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QlsFit {
    pub kind: EstimatorKind,
    pub family: Family,
    pub mode: ParamMode,
    pub mu: f64,
    pub sigma: f64,
    /// Covariance of the estimated parameters, already divided by `n`.
    pub asy_cov: Matrix,
    pub grid: Option<QuantileGrid>,
    pub response: Option<QuantileResponse>,
    pub warnings: Vec<Warning>,
    pub n: usize,
    pub iterations: Option<usize>,
}

impl QlsFit {
    pub fn params(&self) -> Result<Params> {
        if !(self.sigma > 0.0) {
            return Err(Error::NonPositiveScale(self.sigma));
        }
        Params::new(self.mu, self.sigma)
    }

    /// Coefficients in design-matrix order: `[μ, σ]`, `[μ]` or `[σ]`.
    pub fn coefficients(&self) -> Vec<f64> {
        match self.mode {
            ParamMode::LocationScale => vec![self.mu, self.sigma],
            ParamMode::LocationOnly { .. } => vec![self.mu],
            ParamMode::ScaleOnly { .. } => vec![self.sigma],
        }
    }

    pub fn std_errors(&self) -> Vec<f64> {
        self.asy_cov
            .diag()
            .iter()
            .map(|v| v.max(0.0).sqrt())
            .collect()
    }

    /// Standard error of μ̂, or `None` when μ is known.
    pub fn se_mu(&self) -> Option<f64> {
        match self.mode {
            ParamMode::ScaleOnly { .. } => None,
            _ => Some(self.std_errors()[0]),
        }
    }

    /// Standard error of σ̂, or `None` when σ is known.
    pub fn se_sigma(&self) -> Option<f64> {
        match self.mode {
            ParamMode::LocationOnly { .. } => None,
            ParamMode::ScaleOnly { .. } => Some(self.std_errors()[0]),
            ParamMode::LocationScale => Some(self.std_errors()[1]),
        }
    }
}

fn gram_factor(x: &Matrix) -> Result<SpdFactor> {
    let gram = x.transpose().matmul(x)?;
    spd_factorize(&gram).map_err(|e| match e {
        Error::NotPositiveDefinite { .. } => Error::RankDeficient,
        other => other,
    })
}

fn check_rows(y: &[f64], x: &Matrix) -> Result<()> {
    if y.len() != x.rows() {
        return Err(Error::DimensionMismatch(format!(
            "response has {} entries, design has {} rows",
            y.len(),
            x.rows()
        )));
    }
    Ok(())
}

/// Ordinary least squares `(X′X)⁻¹X′Y`.
pub fn fit_oqls(y: &[f64], x: &Matrix) -> Result<Vec<f64>> {
    check_rows(y, x)?;
    gram_factor(x)?.solve_vec(&x.tr_mul_vec(y)?)
}

/// Generalized least squares `(X′Σ⁻¹X)⁻¹X′Σ⁻¹Y`, computed by whitening with
/// the Cholesky factor of Σ.
pub fn fit_gqls(y: &[f64], x: &Matrix, sigma_star: &Matrix) -> Result<Vec<f64>> {
    check_rows(y, x)?;
    let factor = spd_factorize(sigma_star)?;
    let xw = factor.whiten(x)?;
    let mut yw = y.to_vec();
    factor.forward_substitute(&mut yw);
    fit_oqls(&yw, &xw)
}

/// Covariance of the estimator for unit scale and unit sample size:
/// `(X′X)⁻¹X′Σ*X(X′X)⁻¹` or `(X′Σ*⁻¹X)⁻¹`.
pub fn standardized_cov(kind: EstimatorKind, x: &Matrix, sigma_star: &Matrix) -> Result<Matrix> {
    match kind {
        EstimatorKind::Oqls => {
            let g = gram_factor(x)?;
            let a = g.solve(&x.transpose())?; // (X′X)⁻¹X′
            Ok(a.matmul(sigma_star)?.matmul(&a.transpose())?.symmetrized())
        }
        EstimatorKind::Gqls => {
            let factor = spd_factorize(sigma_star)?;
            let xw = factor.whiten(x)?;
            Ok(gram_factor(&xw)?.inverse())
        }
        EstimatorKind::Mle => Err(Error::InvalidConfig(
            "the quantile covariance applies to QLS estimators only".into(),
        )),
    }
}

/// `(σ̂²/n)` times the standardized covariance.
pub fn asymptotic_cov(
    kind: EstimatorKind,
    x: &Matrix,
    sigma_star: &Matrix,
    sigma_hat: f64,
    n: usize,
) -> Result<Matrix> {
    Ok(standardized_cov(kind, x, sigma_star)?.scaled(sigma_hat * sigma_hat / n as f64))
}

/// Everything about a QLS fit that depends only on family, grid and mode,
/// computed once so repeated fits reduce to quantile selection plus an
/// `m × k` matrix–vector product.
#[derive(Debug, Clone)]
pub struct QlsModel {
    family: Family,
    grid: QuantileGrid,
    mode: ParamMode,
    q: Vec<f64>,
    x: Matrix,
    sigma_star: Matrix,
    factor: SpdFactor,
    oqls_weights: Matrix,
    gqls_weights: Matrix,
    oqls_cov: Matrix,
    gqls_cov: Matrix,
}

impl QlsModel {
    pub fn new(family: Family, grid: QuantileGrid, mode: ParamMode) -> Result<Self> {
        if grid.k() < mode.n_params() {
            return Err(Error::InsufficientDof {
                k: grid.k(),
                params: mode.n_params(),
            });
        }
        let q = standard_quantiles(family, grid.levels())?;
        let x = design_matrix(family, grid.levels(), mode)?;
        let sigma_star = sigma_star(family, grid.levels())?;
        let factor = spd_factorize(&sigma_star)?;

        let oqls_weights = gram_factor(&x)?.solve(&x.transpose())?;
        let sinv_x = factor.solve(&x)?;
        let gls_gram = x.transpose().matmul(&sinv_x)?.symmetrized();
        let gls_factor = spd_factorize(&gls_gram).map_err(|_| Error::RankDeficient)?;
        let gqls_weights = gls_factor.solve(&sinv_x.transpose())?;

        let oqls_cov = oqls_weights
            .matmul(&sigma_star)?
            .matmul(&oqls_weights.transpose())?
            .symmetrized();
        let gqls_cov = gls_factor.inverse();
        Ok(Self {
            family,
            grid,
            mode,
            q,
            x,
            sigma_star,
            factor,
            oqls_weights,
            gqls_weights,
            oqls_cov,
            gqls_cov,
        })
    }

    pub fn family(&self) -> Family {
        self.family
    }

    pub fn grid(&self) -> &QuantileGrid {
        &self.grid
    }

    pub fn mode(&self) -> ParamMode {
        self.mode
    }

    /// Standard quantiles `F*⁻¹(p_i)`.
    pub fn standard_quantiles(&self) -> &[f64] {
        &self.q
    }

    pub fn design(&self) -> &Matrix {
        &self.x
    }

    pub fn sigma_star(&self) -> &Matrix {
        &self.sigma_star
    }

    pub fn sigma_star_factor(&self) -> &SpdFactor {
        &self.factor
    }

    /// The `m × k` matrix mapping quantile responses to coefficients.
    pub fn weights(&self, kind: EstimatorKind) -> Result<&Matrix> {
        match kind {
            EstimatorKind::Oqls => Ok(&self.oqls_weights),
            EstimatorKind::Gqls => Ok(&self.gqls_weights),
            EstimatorKind::Mle => Err(Error::InvalidConfig("MLE has no quantile weights".into())),
        }
    }

    pub fn standardized_cov(&self, kind: EstimatorKind) -> Result<&Matrix> {
        match kind {
            EstimatorKind::Oqls => Ok(&self.oqls_cov),
            EstimatorKind::Gqls => Ok(&self.gqls_cov),
            EstimatorKind::Mle => Err(Error::InvalidConfig(
                "MLE has no quantile covariance".into(),
            )),
        }
    }

    pub fn fit(&self, kind: EstimatorKind, data: &[f64]) -> Result<QlsFit> {
        let response = empirical_quantiles(data, self.grid.levels())?;
        self.fit_response(kind, response)
    }

    /// As [`QlsModel::fit`], reordering `data` instead of copying it.
    pub fn fit_in_place(&self, kind: EstimatorKind, data: &mut [f64]) -> Result<QlsFit> {
        let response = empirical_quantiles_in_place(data, self.grid.levels())?;
        self.fit_response(kind, response)
    }

    pub fn fit_response(&self, kind: EstimatorKind, response: QuantileResponse) -> Result<QlsFit> {
        let weights = self.weights(kind)?;
        let y = &response.values;
        if y.len() != self.q.len() {
            return Err(Error::DimensionMismatch(format!(
                "response has {} entries, grid has {}",
                y.len(),
                self.q.len()
            )));
        }
        let adjusted: Vec<f64> = match self.mode {
            ParamMode::LocationScale => y.clone(),
            ParamMode::LocationOnly { sigma } => {
                y.iter().zip(&self.q).map(|(v, q)| v - sigma * q).collect()
            }
            ParamMode::ScaleOnly { mu } => y.iter().map(|v| v - mu).collect(),
        };
        let mut beta = weights.mul_vec(&adjusted)?;
        // A scale estimate within rounding noise of zero (constant quantiles) is zero.
        let scale_row = match self.mode {
            ParamMode::LocationScale => Some(1),
            ParamMode::ScaleOnly { .. } => Some(0),
            ParamMode::LocationOnly { .. } => None,
        };
        if let Some(r) = scale_row {
            let magnitude: f64 = weights
                .row(r)
                .iter()
                .zip(&adjusted)
                .map(|(w, v)| (w * v).abs())
                .sum();
            if beta[r].abs() <= 8.0 * f64::EPSILON * magnitude {
                beta[r] = 0.0;
            }
        }
        let (mu, sigma) = match self.mode {
            ParamMode::LocationScale => (beta[0], beta[1]),
            ParamMode::LocationOnly { sigma } => (beta[0], sigma),
            ParamMode::ScaleOnly { mu } => (mu, beta[0]),
        };
        if !mu.is_finite() || !sigma.is_finite() {
            return Err(Error::NonFinite(format!("estimates ({mu}, {sigma})")));
        }
        let mut warnings = response.warnings.clone();
        if sigma <= 0.0 {
            warnings.push(Warning::NonPositiveScale { sigma });
        }
        let n = response.n;
        let asy_cov = self
            .standardized_cov(kind)?
            .scaled(sigma * sigma / n as f64);
        Ok(QlsFit {
            kind,
            family: self.family,
            mode: self.mode,
            mu,
            sigma,
            asy_cov,
            grid: Some(self.grid.clone()),
            response: Some(response),
            warnings,
            n,
            iterations: None,
        })
    }
}

const MLE_MAX_ITER: usize = 500;
const MLE_STEP_TOL: f64 = 1e-9;
const MLE_LL_TOL: f64 = 1e-12;

/// Maximum-likelihood fit. Closed forms are used where they exist; Cauchy,
/// Logistic and Gumbel are maximized by safeguarded Newton iteration started
/// from the gQLS fit on the (0.05, 0.95, 25) grid.
pub fn fit_mle(fam: Family, data: &[f64], mode: ParamMode) -> Result<QlsFit> {
    if data.is_empty() {
        return Err(Error::EmptySample);
    }
    if data.len() < 2 {
        return Err(Error::Domain(
            "maximum likelihood needs at least two observations".into(),
        ));
    }
    if let Some(i) = data.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite(format!("sample value at index {i}")));
    }
    let n = data.len();
    let nf = n as f64;
    let (mu, sigma, iterations) = match (fam, mode) {
        (Family::Normal, _) => {
            let mean = data.iter().sum::<f64>() / nf;
            match mode {
                ParamMode::LocationScale => (mean, rms_about(data, mean), None),
                ParamMode::LocationOnly { sigma } => (mean, sigma, None),
                ParamMode::ScaleOnly { mu } => (mu, rms_about(data, mu), None),
            }
        }
        (Family::Laplace, _) => match mode {
            ParamMode::LocationScale => {
                let m = median(data);
                (m, mean_abs_about(data, m), None)
            }
            ParamMode::LocationOnly { sigma } => (median(data), sigma, None),
            ParamMode::ScaleOnly { mu } => (mu, mean_abs_about(data, mu), None),
        },
        (Family::Exponential, ParamMode::ScaleOnly { mu }) => {
            check_above(data, mu, fam)?;
            (mu, data.iter().map(|x| x - mu).sum::<f64>() / nf, None)
        }
        (Family::Levy, ParamMode::ScaleOnly { mu }) => {
            check_above(data, mu, fam)?;
            (
                mu,
                nf / data.iter().map(|x| 1.0 / (x - mu)).sum::<f64>(),
                None,
            )
        }
        (Family::Exponential | Family::Levy, _) => {
            return Err(Error::Unavailable(format!(
                "{} maximum likelihood is implemented for the scale with μ known only",
                fam.name()
            )))
        }
        (Family::Cauchy | Family::Logistic | Family::Gumbel, _) => {
            let (p, it) = newton_mle(fam, data, mode)?;
            (p.mu, p.sigma, Some(it))
        }
    };
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::NonPositiveScale(sigma));
    }
    let info = fam.fisher_info_standard(mode)?;
    let inv = spd_factorize(&info)?.inverse();
    Ok(QlsFit {
        kind: EstimatorKind::Mle,
        family: fam,
        mode,
        mu,
        sigma,
        asy_cov: inv.scaled(sigma * sigma / nf),
        grid: None,
        response: None,
        warnings: Vec::new(),
        n,
        iterations,
    })
}

fn rms_about(data: &[f64], c: f64) -> f64 {
    (data.iter().map(|x| (x - c) * (x - c)).sum::<f64>() / data.len() as f64).sqrt()
}

fn mean_abs_about(data: &[f64], c: f64) -> f64 {
    data.iter().map(|x| (x - c).abs()).sum::<f64>() / data.len() as f64
}

/// Midpoint of the two central order statistics for even `n`.
fn median(data: &[f64]) -> f64 {
    let mut v = data.to_vec();
    let n = v.len();
    let (_, &mut hi, _) = v.select_nth_unstable_by(n / 2, f64::total_cmp);
    if n % 2 == 1 {
        hi
    } else {
        let lo = v[..n / 2].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lo + hi)
    }
}

fn check_above(data: &[f64], mu: f64, fam: Family) -> Result<()> {
    match data.iter().find(|&&x| x <= mu) {
        Some(x) => Err(Error::Domain(format!(
            "{} data must exceed the known location {mu}; found {x}",
            fam.name()
        ))),
        None => Ok(()),
    }
}

/// `ln f*(z)` and its first two derivatives.
fn log_density_derivs(fam: Family, z: f64) -> (f64, f64, f64) {
    match fam {
        Family::Cauchy => {
            let d = 1.0 + z * z;
            (
                -std::f64::consts::PI.ln() - d.ln(),
                -2.0 * z / d,
                -2.0 * (1.0 - z * z) / (d * d),
            )
        }
        Family::Logistic => {
            let e = (-z.abs()).exp();
            let ll = -z.abs() - 2.0 * e.ln_1p();
            let f = e / ((1.0 + e) * (1.0 + e));
            (ll, -(0.5 * z).tanh(), -2.0 * f)
        }
        Family::Gumbel => {
            let e = (-z).exp();
            (-z - e, e - 1.0, -e)
        }
        _ => unreachable!("closed-form families never reach the Newton path"),
    }
}

fn log_density(fam: Family, z: f64) -> f64 {
    match fam {
        Family::Cauchy => -std::f64::consts::PI.ln() - (z * z).ln_1p(),
        Family::Logistic => -z.abs() - 2.0 * (-z.abs()).exp().ln_1p(),
        Family::Gumbel => -z - (-z).exp(),
        _ => unreachable!("closed-form families never reach the Newton path"),
    }
}

/// Log-likelihood of a location-scale member at `(mu, sigma)`.
pub fn log_likelihood(fam: Family, data: &[f64], mu: f64, sigma: f64) -> f64 {
    if !(sigma > 0.0) {
        return f64::NEG_INFINITY;
    }
    let n = data.len() as f64;
    match fam {
        Family::Cauchy | Family::Logistic | Family::Gumbel => {
            data.iter()
                .map(|&x| log_density(fam, (x - mu) / sigma))
                .sum::<f64>()
                - n * sigma.ln()
        }
        _ => {
            let p = Params { mu, sigma };
            data.iter().map(|&x| fam.pdf(x, p).ln()).sum()
        }
    }
}

struct Derivatives {
    ll: f64,
    grad: [f64; 2],
    hess: [[f64; 2]; 2],
}

fn derivatives(fam: Family, data: &[f64], mu: f64, sigma: f64) -> Derivatives {
    let (mut ll, mut s1, mut s1z, mut s2, mut s2z, mut s2zz) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
    for &x in data {
        let z = (x - mu) / sigma;
        let (l0, l1, l2) = log_density_derivs(fam, z);
        ll += l0;
        s1 += l1;
        s1z += l1 * z;
        s2 += l2;
        s2z += l2 * z;
        s2zz += l2 * z * z;
    }
    let n = data.len() as f64;
    let s2inv = 1.0 / (sigma * sigma);
    Derivatives {
        ll: ll - n * sigma.ln(),
        grad: [-s1 / sigma, -s1z / sigma - n / sigma],
        hess: [
            [s2 * s2inv, (s2z + s1) * s2inv],
            [(s2z + s1) * s2inv, (s2zz + 2.0 * s1z + n) * s2inv],
        ],
    }
}

/// Indices of the free parameters among (μ, σ).
fn free_indices(mode: ParamMode) -> &'static [usize] {
    match mode {
        ParamMode::LocationScale => &[0, 1],
        ParamMode::LocationOnly { .. } => &[0],
        ParamMode::ScaleOnly { .. } => &[1],
    }
}

fn starting_point(fam: Family, data: &[f64], mode: ParamMode) -> Result<Params> {
    let grid = make_grid(0.05, 0.95, 25)?;
    let fit = QlsModel::new(fam, grid, mode)?.fit(EstimatorKind::Gqls, data)?;
    if fit.sigma > 0.0 {
        return Params::new(fit.mu, fit.sigma);
    }
    // Degenerate central sample: fall back to the spread of the extremes.
    let (lo, hi) = data
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(l, h), &x| {
            (l.min(x), h.max(x))
        });
    if !(hi > lo) {
        return Err(Error::Domain("all observations are identical".into()));
    }
    let sigma = match mode {
        ParamMode::LocationOnly { sigma } => sigma,
        _ => (hi - lo) / 4.0,
    };
    Params::new(fit.mu, sigma)
}

fn newton_mle(fam: Family, data: &[f64], mode: ParamMode) -> Result<(Params, usize)> {
    let start = starting_point(fam, data, mode)?;
    let free = free_indices(mode);
    let info = fam.fisher_info_standard(ParamMode::LocationScale)?;
    let n = data.len() as f64;
    let mut theta = [start.mu, start.sigma];
    let mut d = derivatives(fam, data, theta[0], theta[1]);
    let mut last_step = f64::INFINITY;

    for iter in 1..=MLE_MAX_ITER {
        let m = free.len();
        let g: Vec<f64> = free.iter().map(|&i| d.grad[i]).collect();
        let neg_h = Matrix::from_fn(m, m, |r, c| -d.hess[free[r]][free[c]]);
        let direction = match spd_factorize(&neg_h) {
            Ok(f) => f.solve_vec(&g)?,
            Err(_) => {
                // Fisher scoring keeps the step an ascent direction away from the optimum.
                let s2 = theta[1] * theta[1];
                let expected = Matrix::from_fn(m, m, |r, c| n * info[(free[r], free[c])] / s2);
                spd_factorize(&expected)?.solve_vec(&g)?
            }
        };

        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut cand = theta;
            for (j, &i) in free.iter().enumerate() {
                cand[i] += t * direction[j];
            }
            if cand[1] > 0.0 && cand.iter().all(|v| v.is_finite()) {
                let ll = log_likelihood(fam, data, cand[0], cand[1]);
                if ll >= d.ll - 1e-12 * d.ll.abs() {
                    accepted = Some((cand, ll));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((cand, ll_new)) = accepted else {
            // No representable ascent remains: the current point is the optimum to
            // floating-point precision.
            return Ok((Params::new(theta[0], theta[1])?, iter));
        };

        let step_small = free
            .iter()
            .all(|&i| (cand[i] - theta[i]).abs() < MLE_STEP_TOL * (1.0 + theta[i].abs()));
        let ll_small = (ll_new - d.ll).abs() <= MLE_LL_TOL * d.ll.abs().max(1.0);
        last_step = free
            .iter()
            .map(|&i| (cand[i] - theta[i]).abs())
            .fold(0.0, f64::max);
        theta = cand;
        d = derivatives(fam, data, theta[0], theta[1]);
        if step_small && ll_small {
            return Ok((Params::new(theta[0], theta[1])?, iter));
        }
    }
    Err(Error::NoConvergence {
        iterations: MLE_MAX_ITER,
        last_step,
        log_likelihood: d.ll,
    })
}
