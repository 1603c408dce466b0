//! Quantile least-squares estimation for location-scale families.
//!
//! The crate regresses selected sample quantiles on the standard quantiles of
//! a family, either ordinarily (oQLS) or weighting by the known quantile
//! covariance (gQLS), and provides the surrounding tooling: maximum-likelihood
//! benchmarks, efficiency and robustness diagnostics, two goodness-of-fit tests
//! and a Monte Carlo harness.

pub mod efficiency;
pub mod error;
pub mod estimate;
pub mod family;
pub mod gof;
pub mod linalg;
pub mod quantile;
pub mod rng;
pub mod robustness;
pub mod sim;
pub mod special;
pub mod study;

pub use efficiency::{are, are_table, AreResult, AreTarget};
pub use error::{Error, Result, Warning};
pub use estimate::{fit_gqls, fit_mle, fit_oqls, EstimatorKind, QlsFit, QlsModel};
pub use family::{Family, ParamMode, Params};
pub use gof::{GofResult, OutGrid};
pub use linalg::Matrix;
pub use quantile::{make_grid, QuantileGrid, QuantileResponse};
pub use robustness::{breakdown_point, InfluenceCurve};
pub use sim::{ContaminationSpec, McConfig, McSummary};
