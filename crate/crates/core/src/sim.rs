//! Monte Carlo engine: contaminated sampling, estimator comparisons,
//! goodness-of-fit power studies and timing runs.
//!
//! Replicate `r` of a study always draws from stream `r` of the study seed, and
//! results are reduced in replicate order, so summaries are bit-identical for
//! any number of worker threads.

use std::fmt::Write as _;
use std::time::{Duration, Instant};

use rand::RngCore;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimate::{fit_mle, EstimatorKind, QlsModel};
use crate::family::{Family, ParamMode, Params};
use crate::gof::{bootstrap_with_models, w_test, OutGrid, OutModel};
use crate::quantile::{make_grid, QuantileGrid};
use crate::rng::{open_uniform, stream_rng};

/// `F_ε = (1 − ε)·F₀ + ε·G`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ContaminationSpec {
    pub base: (Family, Params),
    pub contaminant: (Family, Params),
    pub epsilon: f64,
}

impl ContaminationSpec {
    pub fn new(
        base: (Family, Params),
        contaminant: (Family, Params),
        epsilon: f64,
    ) -> Result<Self> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::InvalidConfig(format!(
                "contamination level {epsilon} outside [0, 1]"
            )));
        }
        Ok(Self {
            base,
            contaminant,
            epsilon,
        })
    }

    pub fn clean(family: Family, params: Params) -> Self {
        Self {
            base: (family, params),
            contaminant: (family, params),
            epsilon: 0.0,
        }
    }
}

/// Draws `n` points from the mixture and reports how many came from `G`.
///
/// With `ε = 0` (or `ε = 1`) no selector uniforms are consumed, so the draws
/// coincide with plain sampling from `F₀` (or `G`) on the same generator.
pub fn sample_contaminated_counted<R: RngCore + ?Sized>(
    spec: &ContaminationSpec,
    n: usize,
    rng: &mut R,
) -> (Vec<f64>, usize) {
    let (bf, bp) = spec.base;
    let (cf, cp) = spec.contaminant;
    if spec.epsilon <= 0.0 {
        return (bf.sample(bp, n, rng), 0);
    }
    if spec.epsilon >= 1.0 {
        return (cf.sample(cp, n, rng), n);
    }
    let mut hits = 0;
    let values = (0..n)
        .map(|_| {
            if open_uniform(rng) < spec.epsilon {
                hits += 1;
                cf.draw(cp, rng)
            } else {
                bf.draw(bp, rng)
            }
        })
        .collect();
    (values, hits)
}

pub fn sample_contaminated<R: RngCore + ?Sized>(
    spec: &ContaminationSpec,
    n: usize,
    rng: &mut R,
) -> Vec<f64> {
    sample_contaminated_counted(spec, n, rng).0
}

/// Where simulated data come from.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DataGenerator {
    Pure {
        family: Family,
        params: Params,
    },
    Mixture {
        spec: ContaminationSpec,
        label: &'static str,
    },
}

impl DataGenerator {
    pub fn standard(family: Family) -> Self {
        DataGenerator::Pure {
            family,
            params: Params::standard(),
        }
    }

    /// `0.95·Normal(0, 1) + 0.05·Normal(1, 3)`.
    pub fn f005() -> Self {
        DataGenerator::Mixture {
            spec: ContaminationSpec {
                base: (Family::Normal, Params::standard()),
                contaminant: (
                    Family::Normal,
                    Params {
                        mu: 1.0,
                        sigma: 3.0,
                    },
                ),
                epsilon: 0.05,
            },
            label: "f005",
        }
    }

    pub fn label(&self) -> String {
        match self {
            DataGenerator::Pure { family, .. } => family.name().to_string(),
            DataGenerator::Mixture { label, .. } => (*label).to_string(),
        }
    }

    pub fn sample<R: RngCore + ?Sized>(&self, n: usize, rng: &mut R) -> Vec<f64> {
        match self {
            DataGenerator::Pure { family, params } => family.sample(*params, n, rng),
            DataGenerator::Mixture { spec, .. } => sample_contaminated(spec, n, rng),
        }
    }
}

impl std::str::FromStr for DataGenerator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("f005") {
            return Ok(DataGenerator::f005());
        }
        Ok(DataGenerator::standard(s.parse()?))
    }
}

/// One estimator in a Monte Carlo comparison.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorSpec {
    pub label: String,
    pub kind: EstimatorKind,
    /// Quantile grid; ignored for MLE.
    pub grid: Option<QuantileGrid>,
}

impl EstimatorSpec {
    pub fn mle() -> Self {
        Self {
            label: "mle".into(),
            kind: EstimatorKind::Mle,
            grid: None,
        }
    }

    pub fn qls(label: &str, kind: EstimatorKind, a: f64, b: f64, k: usize) -> Result<Self> {
        Ok(Self {
            label: label.into(),
            kind,
            grid: Some(make_grid(a, b, k)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McConfig {
    pub spec: ContaminationSpec,
    /// Family assumed by the estimators; usually the base family.
    pub fit_family: Family,
    pub mode: ParamMode,
    pub n: usize,
    pub m: usize,
    pub estimators: Vec<EstimatorSpec>,
    pub seed: u64,
}

impl McConfig {
    pub fn new(
        spec: ContaminationSpec,
        n: usize,
        m: usize,
        estimators: Vec<EstimatorSpec>,
        seed: u64,
    ) -> Self {
        Self {
            fit_family: spec.base.0,
            spec,
            mode: ParamMode::LocationScale,
            n,
            m,
            estimators,
            seed,
        }
    }
}

/// Location summary of one parameter across replicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ParamSummary {
    pub truth: f64,
    pub mean: f64,
    pub bias: f64,
    pub rmse: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl ParamSummary {
    pub fn from_values(values: &[f64], truth: f64) -> Self {
        if values.is_empty() {
            let nan = f64::NAN;
            return Self {
                truth,
                mean: nan,
                bias: nan,
                rmse: nan,
                min: nan,
                q1: nan,
                median: nan,
                q3: nan,
                max: nan,
            };
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let mse = values
            .iter()
            .map(|v| (v - truth) * (v - truth))
            .sum::<f64>()
            / n;
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        Self {
            truth,
            mean,
            bias: mean - truth,
            rmse: mse.sqrt(),
            min: sorted[0],
            q1: interpolated_quantile(&sorted, 0.25),
            median: interpolated_quantile(&sorted, 0.5),
            q3: interpolated_quantile(&sorted, 0.75),
            max: sorted[sorted.len() - 1],
        }
    }
}

/// Linear interpolation between order statistics at `(n − 1)·p`.
pub fn interpolated_quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorSummary {
    pub label: String,
    pub kind: EstimatorKind,
    pub mu: ParamSummary,
    pub sigma: ParamSummary,
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct McSummary {
    pub n: usize,
    pub m: usize,
    pub seed: u64,
    pub estimators: Vec<EstimatorSummary>,
}

impl McSummary {
    pub fn get(&self, label: &str) -> Option<&EstimatorSummary> {
        self.estimators.iter().find(|e| e.label == label)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from(
            "estimator,kind,parameter,n,m,truth,mean,bias,rmse,min,q1,median,q3,max,failures\n",
        );
        for e in &self.estimators {
            for (name, s) in [("mu", &e.mu), ("sigma", &e.sigma)] {
                let _ = writeln!(
                    out,
                    "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
                    e.label,
                    e.kind,
                    name,
                    self.n,
                    self.m,
                    s.truth,
                    s.mean,
                    s.bias,
                    s.rmse,
                    s.min,
                    s.q1,
                    s.median,
                    s.q3,
                    s.max,
                    e.failures
                );
            }
        }
        out
    }
}

enum Prepared {
    Qls(QlsModel),
    Mle,
}

fn prepare(config: &McConfig) -> Result<Vec<(EstimatorKind, Prepared)>> {
    config
        .estimators
        .iter()
        .map(|e| {
            Ok((
                e.kind,
                match e.kind {
                    EstimatorKind::Mle => Prepared::Mle,
                    _ => {
                        let grid = e.grid.clone().ok_or_else(|| {
                            Error::InvalidConfig(format!("estimator '{}' needs a grid", e.label))
                        })?;
                        Prepared::Qls(QlsModel::new(config.fit_family, grid, config.mode)?)
                    }
                },
            ))
        })
        .collect()
}

/// Fits every estimator to `m` replicate samples and summarizes against the
/// base parameters. Non-convergence and non-positive scales count as failures
/// and are excluded from the summaries.
pub fn run_mc(config: &McConfig) -> Result<McSummary> {
    if config.m == 0 || config.n == 0 {
        return Err(Error::InvalidConfig("need n >= 1 and M >= 1".into()));
    }
    let prepared = prepare(config)?;
    let per_replicate: Vec<Vec<Option<(f64, f64)>>> = (0..config.m as u64)
        .into_par_iter()
        .map(|r| {
            let mut rng = stream_rng(config.seed, r);
            let mut data = sample_contaminated(&config.spec, config.n, &mut rng);
            prepared
                .iter()
                .map(|(kind, p)| {
                    let fit = match p {
                        Prepared::Qls(model) => model.fit_in_place(*kind, &mut data),
                        Prepared::Mle => fit_mle(config.fit_family, &data, config.mode),
                    };
                    fit.ok().filter(|f| f.sigma > 0.0).map(|f| (f.mu, f.sigma))
                })
                .collect()
        })
        .collect();

    let truth = config.spec.base.1;
    let estimators = config
        .estimators
        .iter()
        .enumerate()
        .map(|(j, e)| {
            let ok: Vec<(f64, f64)> = per_replicate.iter().filter_map(|r| r[j]).collect();
            let mus: Vec<f64> = ok.iter().map(|v| v.0).collect();
            let sigmas: Vec<f64> = ok.iter().map(|v| v.1).collect();
            EstimatorSummary {
                label: e.label.clone(),
                kind: e.kind,
                mu: ParamSummary::from_values(&mus, truth.mu),
                sigma: ParamSummary::from_values(&sigmas, truth.sigma),
                failures: config.m - ok.len(),
            }
        })
        .collect();
    Ok(McSummary {
        n: config.n,
        m: config.m,
        seed: config.seed,
        estimators,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "test", rename_all = "snake_case")]
pub enum TestKind {
    W,
    WOut { b: usize },
}

impl TestKind {
    pub fn name(&self) -> &'static str {
        match self {
            TestKind::W => "w",
            TestKind::WOut { .. } => "wout",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerStudy {
    pub h0_families: Vec<Family>,
    pub generators: Vec<DataGenerator>,
    pub grid: QuantileGrid,
    pub out_grid: OutGrid,
    pub n: usize,
    pub m: usize,
    pub alpha: f64,
    pub test: TestKind,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerCell {
    pub h0: Family,
    pub data: String,
    pub rejections: usize,
    pub completed: usize,
    pub failures: usize,
    pub rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PowerTable {
    pub test: TestKind,
    pub n: usize,
    pub m: usize,
    pub alpha: f64,
    pub cells: Vec<PowerCell>,
}

impl PowerTable {
    pub fn rate(&self, h0: Family, data: &str) -> Option<f64> {
        self.cells
            .iter()
            .find(|c| c.h0 == h0 && c.data == data)
            .map(|c| c.rate)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("h0,data,test,n,m,alpha,rejection_rate,failures\n");
        for c in &self.cells {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                c.h0,
                c.data,
                self.test.name(),
                self.n,
                self.m,
                self.alpha,
                c.rate,
                c.failures
            );
        }
        out
    }
}

/// Stream indices: data for generator `g`, replicate `r` use `(g << 32) | r`,
/// shared by every null family so rows of the table see the same samples.
/// Bootstrap seeds come from the disjoint half with the top bit set.
fn data_stream(g: usize, r: usize) -> u64 {
    ((g as u64) << 32) | r as u64
}

fn bootstrap_stream(h: usize, g: usize, r: usize) -> u64 {
    (1 << 63) | ((h as u64) << 48) | ((g as u64) << 32) | r as u64
}

/// Rejection proportions of a goodness-of-fit test for every (H₀ family,
/// data generator) pair. Replicates whose fit fails are excluded and counted.
pub fn run_power_study(study: &PowerStudy) -> Result<PowerTable> {
    if study.m == 0 {
        return Err(Error::InvalidConfig("need M >= 1".into()));
    }
    let models: Vec<(QlsModel, Option<OutModel>)> = study
        .h0_families
        .iter()
        .map(|&f| {
            let m = QlsModel::new(f, study.grid.clone(), ParamMode::LocationScale)?;
            let o = match study.test {
                TestKind::WOut { .. } => Some(OutModel::new(f, &study.out_grid)?),
                TestKind::W => None,
            };
            Ok((m, o))
        })
        .collect::<Result<_>>()?;

    let mut cells = Vec::new();
    for (h, (model, out_model)) in models.iter().enumerate() {
        for (g, gen) in study.generators.iter().enumerate() {
            let outcomes: Vec<Option<bool>> = (0..study.m)
                .into_par_iter()
                .map(|r| {
                    let mut rng = stream_rng(study.seed, data_stream(g, r));
                    let data = gen.sample(study.n, &mut rng);
                    let result = match (study.test, out_model) {
                        (TestKind::W, _) => model
                            .fit(EstimatorKind::Gqls, &data)
                            .and_then(|fit| w_test(model, &fit)),
                        (TestKind::WOut { b }, Some(om)) => {
                            let seed = stream_rng(study.seed, bootstrap_stream(h, g, r)).next_u64();
                            bootstrap_with_models(&data, model, om, b, seed)
                        }
                        (TestKind::WOut { .. }, None) => unreachable!("out models built for W_out"),
                    };
                    result.ok().map(|res| res.rejects(study.alpha))
                })
                .collect();
            let completed = outcomes.iter().flatten().count();
            let rejections = outcomes.iter().flatten().filter(|&&r| r).count();
            cells.push(PowerCell {
                h0: model.family(),
                data: gen.label(),
                rejections,
                completed,
                failures: study.m - completed,
                rate: if completed > 0 {
                    rejections as f64 / completed as f64
                } else {
                    f64::NAN
                },
            });
        }
    }
    Ok(PowerTable {
        test: study.test,
        n: study.n,
        m: study.m,
        alpha: study.alpha,
        cells,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingConfig {
    pub families: Vec<Family>,
    pub estimators: Vec<EstimatorKind>,
    pub sizes: Vec<usize>,
    pub repeats: usize,
    pub grid: QuantileGrid,
    /// A fit slower than this marks the cell and skips larger sizes.
    pub cap: Duration,
    pub seed: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum TimingStatus {
    Ok,
    /// Exceeded the cap; larger sizes were not attempted.
    TimedOut,
    /// Skipped because a smaller size already exceeded the cap.
    Skipped,
    /// The fit itself failed (for example, no convergence).
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TimingRow {
    pub family: Family,
    pub estimator: EstimatorKind,
    pub n: usize,
    /// Median seconds to generate the sample.
    pub sample_seconds: f64,
    /// Median seconds to fit, excluding data generation.
    pub fit_seconds: Option<f64>,
    pub status: TimingStatus,
}

pub fn timing_csv(rows: &[TimingRow]) -> String {
    let mut out = String::from("family,estimator,n,sample_seconds,fit_seconds,status\n");
    for r in rows {
        let fit = match (r.status, r.fit_seconds) {
            (TimingStatus::Ok, Some(s)) => format!("{s:.6}"),
            (_, Some(s)) => format!("{s:.6}**"),
            _ => "**".to_string(),
        };
        let status = match r.status {
            TimingStatus::Ok => "ok",
            TimingStatus::TimedOut => "timed_out",
            TimingStatus::Skipped => "skipped",
            TimingStatus::Failed => "failed",
        };
        let _ = writeln!(
            out,
            "{},{},{},{:.6},{},{}",
            r.family, r.estimator, r.n, r.sample_seconds, fit, status
        );
    }
    out
}

fn median_secs(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    interpolated_quantile(&v, 0.5)
}

/// Sequential wall-clock timings; fitting time excludes data generation.
pub fn run_timing(config: &TimingConfig) -> Result<Vec<TimingRow>> {
    if config.sizes.windows(2).any(|w| w[1] < w[0]) {
        return Err(Error::InvalidConfig(
            "timing sizes must be ascending".into(),
        ));
    }
    let repeats = config.repeats.max(1);
    let mut rows = Vec::new();
    for (fi, &fam) in config.families.iter().enumerate() {
        let models: Vec<Option<QlsModel>> = config
            .estimators
            .iter()
            .map(|&k| match k {
                EstimatorKind::Mle => Ok(None),
                _ => QlsModel::new(fam, config.grid.clone(), ParamMode::LocationScale).map(Some),
            })
            .collect::<Result<_>>()?;
        let mut capped = vec![false; config.estimators.len()];
        for (si, &n) in config.sizes.iter().enumerate() {
            let mut sample_times = Vec::new();
            let mut fit_times = vec![Vec::new(); config.estimators.len()];
            let mut failed = vec![false; config.estimators.len()];
            let mut over = vec![false; config.estimators.len()];
            for rep in 0..repeats {
                let stream = ((fi as u64) << 40) | ((si as u64) << 20) | rep as u64;
                let mut rng = stream_rng(config.seed, stream);
                let t = Instant::now();
                let data = fam.sample(Params::standard(), n, &mut rng);
                sample_times.push(t.elapsed().as_secs_f64());
                for (e, &kind) in config.estimators.iter().enumerate() {
                    if capped[e] || failed[e] || over[e] {
                        continue;
                    }
                    let t = Instant::now();
                    let ok = match &models[e] {
                        Some(m) => m.fit(kind, &data).is_ok(),
                        None => fit_mle(fam, &data, ParamMode::LocationScale).is_ok(),
                    };
                    let secs = t.elapsed().as_secs_f64();
                    if ok {
                        fit_times[e].push(secs);
                    } else {
                        failed[e] = true;
                    }
                    if secs > config.cap.as_secs_f64() {
                        over[e] = true;
                    }
                }
            }
            let sample_seconds = median_secs(sample_times);
            for (e, &kind) in config.estimators.iter().enumerate() {
                let (fit_seconds, status) = if capped[e] {
                    (None, TimingStatus::Skipped)
                } else if failed[e] {
                    (None, TimingStatus::Failed)
                } else {
                    let s = median_secs(fit_times[e].clone());
                    if over[e] {
                        capped[e] = true;
                        (Some(s), TimingStatus::TimedOut)
                    } else {
                        (Some(s), TimingStatus::Ok)
                    }
                };
                rows.push(TimingRow {
                    family: fam,
                    estimator: kind,
                    n,
                    sample_seconds,
                    fit_seconds,
                    status,
                });
            }
        }
    }
    Ok(rows)
}
