//! Breakdown points and influence functions of the QLS estimators.
//!
//! A QLS estimator is a fixed linear combination `W·Y` of sample quantiles, so
//! its influence function is the same combination of the quantile influence
//! functions. Those are step functions in `x`, which makes the estimator's
//! influence function piecewise constant with jumps at the model quantiles
//! `μ + σ·F*⁻¹(p_i)` and bounded whenever `a > 0` and `b < 1`.

use std::fmt::Write as _;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimate::{EstimatorKind, QlsModel};
use crate::family::{Family, ParamMode, Params};
use crate::linalg::Matrix;
use crate::quantile::QuantileGrid;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BreakdownPoint {
    /// Lower breakdown point: fraction of the lowest observations that may be corrupted.
    pub lbp: f64,
    /// Upper breakdown point.
    pub ubp: f64,
    pub bp: f64,
}

pub fn breakdown_point(grid: &QuantileGrid) -> BreakdownPoint {
    let lbp = grid.a();
    let ubp = 1.0 - grid.b();
    BreakdownPoint {
        lbp,
        ubp,
        bp: lbp.min(ubp),
    }
}

/// Influence function of the sample `p`-quantile at `x`:
/// `σ(p − 1{x ≤ μ + σF*⁻¹(p)}) / f*(F*⁻¹(p))`.
pub fn if_quantile(x: f64, p: f64, fam: Family, params: Params) -> Result<f64> {
    let q = fam.standard_qf(p)?;
    let dens = fam.standard_pdf(q);
    if !(dens > 0.0 && dens.is_finite()) {
        return Err(Error::DegenerateDensity { level: p });
    }
    let below = if x <= params.mu + params.sigma * q {
        1.0
    } else {
        0.0
    };
    Ok(params.sigma * (p - below) / dens)
}

/// Precomputed pieces for evaluating an estimator's influence function at many points.
#[derive(Debug, Clone)]
pub struct InfluenceWeights {
    levels: Vec<f64>,
    jumps: Vec<f64>,
    /// `σ / f*(q_i)`.
    steps: Vec<f64>,
    weights: Matrix,
}

impl InfluenceWeights {
    pub fn new(
        kind: EstimatorKind,
        fam: Family,
        params: Params,
        grid: &QuantileGrid,
    ) -> Result<Self> {
        let model = QlsModel::new(fam, grid.clone(), ParamMode::LocationScale)?;
        let weights = model.weights(kind)?.clone();
        let q = model.standard_quantiles();
        let mut steps = Vec::with_capacity(q.len());
        for (&z, &p) in q.iter().zip(grid.levels()) {
            let d = fam.standard_pdf(z);
            if !(d > 0.0 && d.is_finite()) {
                return Err(Error::DegenerateDensity { level: p });
            }
            steps.push(params.sigma / d);
        }
        Ok(Self {
            levels: grid.levels().to_vec(),
            jumps: q.iter().map(|z| params.mu + params.sigma * z).collect(),
            steps,
            weights,
        })
    }

    /// Locations `μ + σF*⁻¹(p_i)` where the influence function can jump.
    pub fn jump_points(&self) -> &[f64] {
        &self.jumps
    }

    /// The `2 × k` matrix applied to the quantile influence functions.
    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    /// Change in `(IF_μ, IF_σ)` when `x` crosses jump point `i` upward.
    pub fn jump_size(&self, i: usize) -> (f64, f64) {
        (
            self.weights[(0, i)] * self.steps[i],
            self.weights[(1, i)] * self.steps[i],
        )
    }

    pub fn eval(&self, x: f64) -> (f64, f64) {
        let (mut mu, mut sigma) = (0.0, 0.0);
        for i in 0..self.levels.len() {
            let below = if x <= self.jumps[i] { 1.0 } else { 0.0 };
            let v = self.steps[i] * (self.levels[i] - below);
            mu += self.weights[(0, i)] * v;
            sigma += self.weights[(1, i)] * v;
        }
        (mu, sigma)
    }

    /// True when every quantile enters the μ-estimator with a nonnegative
    /// weight, which makes the μ-curve nondecreasing.
    pub fn mu_is_monotone(&self) -> bool {
        (0..self.levels.len()).all(|i| self.weights[(0, i)] >= 0.0)
    }
}

/// `(IF_μ, IF_σ)` of a QLS estimator at `x`.
pub fn if_estimator(
    x: f64,
    kind: EstimatorKind,
    fam: Family,
    params: Params,
    grid: &QuantileGrid,
) -> Result<(f64, f64)> {
    Ok(InfluenceWeights::new(kind, fam, params, grid)?.eval(x))
}

#[derive(Debug, Clone, Serialize)]
pub struct InfluenceCurve {
    pub family: Family,
    pub kind: EstimatorKind,
    pub params: Params,
    pub grid: QuantileGrid,
    pub jump_points: Vec<f64>,
    pub x: Vec<f64>,
    pub if_mu: Vec<f64>,
    pub if_sigma: Vec<f64>,
}

impl InfluenceCurve {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("x,if_mu,if_sigma\n");
        for i in 0..self.x.len() {
            let _ = writeln!(out, "{},{},{}", self.x[i], self.if_mu[i], self.if_sigma[i]);
        }
        out
    }
}

/// Samples the influence function on `points` equally spaced values of
/// `range`, plus a pair of points `1e-9·σ` either side of every jump so the
/// step geometry survives plotting.
pub fn influence_curve(
    kind: EstimatorKind,
    fam: Family,
    params: Params,
    grid: &QuantileGrid,
    range: (f64, f64),
    points: usize,
) -> Result<InfluenceCurve> {
    let (lo, hi) = range;
    if !(lo.is_finite() && hi.is_finite() && lo < hi) {
        return Err(Error::Domain(format!("invalid x-range [{lo}, {hi}]")));
    }
    let iw = InfluenceWeights::new(kind, fam, params, grid)?;
    let mut x: Vec<f64> = match points {
        0 => Vec::new(),
        1 => vec![0.5 * (lo + hi)],
        _ => (0..points)
            .map(|i| lo + (hi - lo) * i as f64 / (points - 1) as f64)
            .collect(),
    };
    let delta = 1e-9 * params.sigma;
    for &j in iw.jump_points() {
        x.push(j - delta);
        x.push(j + delta);
    }
    x.sort_by(f64::total_cmp);
    x.dedup();
    let (if_mu, if_sigma) = x.iter().map(|&v| iw.eval(v)).unzip();
    Ok(InfluenceCurve {
        family: fam,
        kind,
        params,
        grid: grid.clone(),
        jump_points: iw.jump_points().to_vec(),
        x,
        if_mu,
        if_sigma,
    })
}
