//! Declarative study files.
//!
//! A study is a TOML document whose `study` key selects the kind:
//!
//! ```toml
//! study = "monte-carlo"
//! seed = 7
//! n = 1000
//! m = 2000
//! epsilon = 0.05
//! base = { family = "normal", mu = 0.0, sigma = 1.0 }
//! contaminant = { family = "normal", mu = 1.0, sigma = 3.0 }
//!
//! [[estimators]]
//! kind = "mle"
//!
//! [[estimators]]
//! label = "g3"
//! kind = "gqls"
//! a = 0.10
//! b = 0.90
//! k = 25
//! ```
//!
//! `study = "power"` takes `h0`, `data`, `test` (`"w"` or `"wout"`),
//! `bootstrap`, `alpha` and grid keys; `study = "timing"` takes `families`,
//! `estimators`, `sizes`, `repeats` and `cap_seconds`.

use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::estimate::EstimatorKind;
use crate::family::{Family, ParamMode, Params};
use crate::gof::OutGrid;
use crate::quantile::make_grid;
use crate::sim::{
    run_mc, run_power_study, run_timing, timing_csv, ContaminationSpec, EstimatorSpec, McConfig,
    McSummary, PowerStudy, PowerTable, TestKind, TimingConfig, TimingRow,
};

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(tag = "study", rename_all = "kebab-case")]
pub enum StudyConfig {
    MonteCarlo(McStudy),
    Power(PowerStudyConfig),
    Timing(TimingStudy),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Distribution {
    pub family: String,
    #[serde(default)]
    pub mu: f64,
    #[serde(default = "one")]
    pub sigma: f64,
}

impl Distribution {
    fn resolve(&self) -> Result<(Family, Params)> {
        Ok((self.family.parse()?, Params::new(self.mu, self.sigma)?))
    }
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorEntry {
    pub label: Option<String>,
    pub kind: String,
    pub a: Option<f64>,
    pub b: Option<f64>,
    pub k: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct McStudy {
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub n: usize,
    #[serde(default = "default_m")]
    pub m: usize,
    pub base: Distribution,
    pub contaminant: Option<Distribution>,
    #[serde(default)]
    pub epsilon: f64,
    /// Family assumed by the estimators; defaults to the base family.
    pub fit_family: Option<String>,
    /// `"location-scale"`, `"location"` (σ known) or `"scale"` (μ known);
    /// known values are taken from `base`.
    pub mode: Option<String>,
    pub estimators: Vec<EstimatorEntry>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PowerStudyConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub n: usize,
    #[serde(default = "default_m")]
    pub m: usize,
    #[serde(default = "default_alpha")]
    pub alpha: f64,
    pub test: String,
    #[serde(default = "default_bootstrap")]
    pub bootstrap: usize,
    pub h0: Vec<String>,
    pub data: Vec<String>,
    #[serde(default = "default_a")]
    pub a: f64,
    #[serde(default = "default_b")]
    pub b: f64,
    #[serde(default = "default_k")]
    pub k: usize,
    pub out_levels: Option<Vec<f64>>,
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TimingStudy {
    #[serde(default = "default_seed")]
    pub seed: u64,
    pub families: Vec<String>,
    pub estimators: Vec<String>,
    pub sizes: Vec<usize>,
    #[serde(default = "default_repeats")]
    pub repeats: usize,
    #[serde(default = "default_cap")]
    pub cap_seconds: f64,
    #[serde(default = "default_a")]
    pub a: f64,
    #[serde(default = "default_b")]
    pub b: f64,
    #[serde(default = "default_k")]
    pub k: usize,
}

fn one() -> f64 {
    1.0
}
fn default_seed() -> u64 {
    1
}
fn default_m() -> usize {
    2000
}
fn default_alpha() -> f64 {
    0.05
}
fn default_bootstrap() -> usize {
    1000
}
fn default_a() -> f64 {
    0.05
}
fn default_b() -> f64 {
    0.95
}
fn default_k() -> usize {
    25
}
fn default_repeats() -> usize {
    3
}
fn default_cap() -> f64 {
    600.0
}

pub fn parse_study(text: &str) -> Result<StudyConfig> {
    toml::from_str(text).map_err(|e| Error::InvalidConfig(e.to_string()))
}

pub fn parse_mode(name: &str, known: Params) -> Result<ParamMode> {
    match name.to_ascii_lowercase().as_str() {
        "location-scale" | "both" | "joint" => Ok(ParamMode::LocationScale),
        "location" => Ok(ParamMode::LocationOnly { sigma: known.sigma }),
        "scale" => Ok(ParamMode::ScaleOnly { mu: known.mu }),
        other => Err(Error::InvalidConfig(format!(
            "unknown parameter mode '{other}'"
        ))),
    }
}

impl McStudy {
    pub fn to_config(&self) -> Result<McConfig> {
        let base = self.base.resolve()?;
        let contaminant = match &self.contaminant {
            Some(c) => c.resolve()?,
            None if self.epsilon > 0.0 => {
                return Err(Error::InvalidConfig(
                    "epsilon > 0 requires a contaminant".into(),
                ))
            }
            None => base,
        };
        let spec = ContaminationSpec::new(base, contaminant, self.epsilon)?;
        let estimators = self
            .estimators
            .iter()
            .map(|e| {
                let kind: EstimatorKind = e.kind.parse()?;
                let grid = match kind {
                    EstimatorKind::Mle => None,
                    _ => Some(make_grid(
                        e.a.unwrap_or(0.05),
                        e.b.unwrap_or(0.95),
                        e.k.unwrap_or(25),
                    )?),
                };
                let label = e.label.clone().unwrap_or_else(|| match &grid {
                    Some(g) => format!("{}({},{},{})", kind, g.a(), g.b(), g.k()),
                    None => kind.to_string(),
                });
                Ok(EstimatorSpec { label, kind, grid })
            })
            .collect::<Result<Vec<_>>>()?;
        if estimators.is_empty() {
            return Err(Error::InvalidConfig("no estimators listed".into()));
        }
        let mut config = McConfig::new(spec, self.n, self.m, estimators, self.seed);
        if let Some(f) = &self.fit_family {
            config.fit_family = f.parse()?;
        }
        if let Some(m) = &self.mode {
            config.mode = parse_mode(m, base.1)?;
        }
        Ok(config)
    }
}

impl PowerStudyConfig {
    pub fn to_study(&self) -> Result<PowerStudy> {
        let test = match self.test.to_ascii_lowercase().as_str() {
            "w" => TestKind::W,
            "wout" | "w_out" | "w-out" => TestKind::WOut { b: self.bootstrap },
            other => return Err(Error::InvalidConfig(format!("unknown test '{other}'"))),
        };
        let out_grid = match &self.out_levels {
            Some(l) => OutGrid::new(l.clone())?,
            None => OutGrid::default(),
        };
        Ok(PowerStudy {
            h0_families: self.h0.iter().map(|s| s.parse()).collect::<Result<_>>()?,
            generators: self.data.iter().map(|s| s.parse()).collect::<Result<_>>()?,
            grid: make_grid(self.a, self.b, self.k)?,
            out_grid,
            n: self.n,
            m: self.m,
            alpha: self.alpha,
            test,
            seed: self.seed,
        })
    }
}

impl TimingStudy {
    pub fn to_config(&self) -> Result<TimingConfig> {
        if !(self.cap_seconds >= 0.0 && self.cap_seconds.is_finite()) {
            return Err(Error::InvalidConfig(
                "cap_seconds must be a nonnegative number".into(),
            ));
        }
        Ok(TimingConfig {
            families: self
                .families
                .iter()
                .map(|s| s.parse())
                .collect::<Result<_>>()?,
            estimators: self
                .estimators
                .iter()
                .map(|s| s.parse())
                .collect::<Result<_>>()?,
            sizes: self.sizes.clone(),
            repeats: self.repeats,
            grid: make_grid(self.a, self.b, self.k)?,
            cap: Duration::from_secs_f64(self.cap_seconds),
            seed: self.seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "study", content = "result", rename_all = "kebab-case")]
pub enum StudyOutput {
    MonteCarlo(McSummary),
    Power(PowerTable),
    Timing(Vec<TimingRow>),
}

impl StudyOutput {
    pub fn to_csv(&self) -> String {
        match self {
            StudyOutput::MonteCarlo(s) => s.to_csv(),
            StudyOutput::Power(t) => t.to_csv(),
            StudyOutput::Timing(rows) => timing_csv(rows),
        }
    }
}

pub fn run_study(config: &StudyConfig) -> Result<StudyOutput> {
    Ok(match config {
        StudyConfig::MonteCarlo(s) => StudyOutput::MonteCarlo(run_mc(&s.to_config()?)?),
        StudyConfig::Power(p) => StudyOutput::Power(run_power_study(&p.to_study()?)?),
        StudyConfig::Timing(t) => StudyOutput::Timing(run_timing(&t.to_config()?)?),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_monte_carlo_study() {
        let text = r#"
            study = "monte-carlo"
            seed = 7
            n = 100
            m = 20
            epsilon = 0.05
            base = { family = "normal" }
            contaminant = { family = "normal", mu = 1.0, sigma = 3.0 }

            [[estimators]]
            kind = "mle"

            [[estimators]]
            label = "g3"
            kind = "gqls"
            a = 0.10
            b = 0.90
        "#;
        let StudyConfig::MonteCarlo(s) = parse_study(text).unwrap() else {
            panic!()
        };
        let c = s.to_config().unwrap();
        assert_eq!(c.estimators[0].label, "mle");
        assert_eq!(c.estimators[1].grid.as_ref().unwrap().k(), 25);
        assert_eq!(c.spec.contaminant.1.sigma, 3.0);
        let out = run_study(&StudyConfig::MonteCarlo(s)).unwrap();
        assert!(out.to_csv().starts_with("estimator,kind,parameter"));
    }

    #[test]
    fn parses_power_and_timing() {
        let p = parse_study(
            r#"study = "power"
               n = 200
               m = 10
               test = "w"
               h0 = ["normal", "gumbel"]
               data = ["laplace", "f005"]"#,
        )
        .unwrap();
        let StudyConfig::Power(p) = p else { panic!() };
        let study = p.to_study().unwrap();
        assert_eq!(study.generators[1].label(), "f005");
        assert_eq!(study.grid.k(), 25);

        let t = parse_study(
            r#"study = "timing"
               families = ["cauchy"]
               estimators = ["gqls", "mle"]
               sizes = [1000]"#,
        )
        .unwrap();
        let StudyConfig::Timing(t) = t else { panic!() };
        assert_eq!(t.to_config().unwrap().repeats, 3);
    }

    #[test]
    fn rejects_unknown_keys_and_kinds() {
        assert!(parse_study(
            "study = \"power\"\nn = 1\ntest = \"w\"\nh0 = []\ndata = []\nbogus = 1"
        )
        .is_err());
        assert!(parse_study("study = \"nope\"").is_err());
        let p = parse_study("study = \"power\"\nn = 1\ntest = \"z\"\nh0 = []\ndata = []").unwrap();
        let StudyConfig::Power(p) = p else { panic!() };
        assert!(p.to_study().is_err());
    }
}
