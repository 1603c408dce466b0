//! Location-scale families.
//!
//! Each family is described by its standard (μ = 0, σ = 1) density, cdf and
//! quantile function; the general member is `F((x − μ)/σ)`. Fisher information
//! is given in standardized form `I* = σ²·I`.
//!
//! Folded and log-location-scale variants (folded normal, lognormal, Pareto I)
//! are handled by transforming the data first (`|x|`, `ln x`) and fitting the
//! corresponding family to the transformed values.

use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use rand::RngCore;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::open_uniform;
use crate::special::{normal_cdf, normal_pdf, normal_quantile, EULER_GAMMA};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Family {
    Cauchy,
    Laplace,
    Logistic,
    Normal,
    Exponential,
    Gumbel,
    Levy,
}

/// Which of (μ, σ) are estimated. The one-parameter variants carry the known value.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum ParamMode {
    LocationScale,
    ScaleOnly { mu: f64 },
    LocationOnly { sigma: f64 },
}

impl ParamMode {
    pub fn n_params(&self) -> usize {
        match self {
            ParamMode::LocationScale => 2,
            _ => 1,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            ParamMode::LocationScale => "location-scale",
            ParamMode::ScaleOnly { .. } => "scale",
            ParamMode::LocationOnly { .. } => "location",
        }
    }
}

impl fmt::Display for ParamMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// Location μ and scale σ > 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Params {
    pub mu: f64,
    pub sigma: f64,
}

impl Params {
    pub fn new(mu: f64, sigma: f64) -> Result<Self> {
        if !mu.is_finite() || !sigma.is_finite() {
            return Err(Error::NonFinite(format!("parameters ({mu}, {sigma})")));
        }
        if sigma <= 0.0 {
            return Err(Error::NonPositiveScale(sigma));
        }
        Ok(Self { mu, sigma })
    }

    pub fn standard() -> Self {
        Self {
            mu: 0.0,
            sigma: 1.0,
        }
    }
}

impl Family {
    pub const ALL: [Family; 7] = [
        Family::Cauchy,
        Family::Laplace,
        Family::Logistic,
        Family::Normal,
        Family::Exponential,
        Family::Gumbel,
        Family::Levy,
    ];

    /// The five families with a full location-scale Fisher information.
    pub const REGULAR: [Family; 5] = [
        Family::Cauchy,
        Family::Laplace,
        Family::Logistic,
        Family::Normal,
        Family::Gumbel,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Cauchy => "cauchy",
            Family::Laplace => "laplace",
            Family::Logistic => "logistic",
            Family::Normal => "normal",
            Family::Exponential => "exponential",
            Family::Gumbel => "gumbel",
            Family::Levy => "levy",
        }
    }

    pub fn is_symmetric(self) -> bool {
        matches!(
            self,
            Family::Cauchy | Family::Laplace | Family::Logistic | Family::Normal
        )
    }

    /// Support of the standard member.
    pub fn support(self) -> (f64, f64) {
        match self {
            Family::Exponential | Family::Levy => (0.0, f64::INFINITY),
            _ => (f64::NEG_INFINITY, f64::INFINITY),
        }
    }

    pub fn standard_pdf(self, z: f64) -> f64 {
        match self {
            Family::Cauchy => 1.0 / (PI * (1.0 + z * z)),
            Family::Laplace => 0.5 * (-z.abs()).exp(),
            Family::Logistic => {
                // symmetric form avoids overflow of e^{-z} for very negative z
                let e = (-z.abs()).exp();
                e / ((1.0 + e) * (1.0 + e))
            }
            Family::Normal => normal_pdf(z),
            Family::Exponential => {
                if z > 0.0 {
                    (-z).exp()
                } else {
                    0.0
                }
            }
            Family::Gumbel => (-z - (-z).exp()).exp(),
            Family::Levy => {
                if z > 0.0 {
                    (-0.5 / z).exp() / ((2.0 * PI).sqrt() * z.powf(1.5))
                } else {
                    0.0
                }
            }
        }
    }

    pub fn standard_cdf(self, z: f64) -> f64 {
        match self {
            Family::Cauchy => 0.5 + z.atan() / PI,
            Family::Laplace => {
                if z < 0.0 {
                    0.5 * z.exp()
                } else {
                    1.0 - 0.5 * (-z).exp()
                }
            }
            Family::Logistic => {
                if z >= 0.0 {
                    1.0 / (1.0 + (-z).exp())
                } else {
                    let e = z.exp();
                    e / (1.0 + e)
                }
            }
            Family::Normal => normal_cdf(z),
            Family::Exponential => {
                if z > 0.0 {
                    -(-z).exp_m1()
                } else {
                    0.0
                }
            }
            Family::Gumbel => (-(-z).exp()).exp(),
            Family::Levy => {
                if z > 0.0 {
                    libm::erfc((0.5 / z).sqrt())
                } else {
                    0.0
                }
            }
        }
    }

    /// Standard quantile function F*⁻¹(u) on the open interval (0, 1).
    pub fn standard_qf(self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return Err(Error::Domain(format!(
                "quantile level {u} is outside (0, 1)"
            )));
        }
        Ok(self.qf_interior(u))
    }

    pub(crate) fn qf_interior(self, u: f64) -> f64 {
        match self {
            Family::Cauchy => (PI * (u - 0.5)).tan(),
            Family::Laplace => {
                if u <= 0.5 {
                    (2.0 * u).ln()
                } else {
                    -(2.0 * (1.0 - u)).ln()
                }
            }
            Family::Logistic => u.ln() - (-u).ln_1p(),
            Family::Normal => normal_quantile(u),
            Family::Exponential => -(-u).ln_1p(),
            Family::Gumbel => -(-u.ln()).ln(),
            Family::Levy => {
                // Φ⁻¹(1 − u/2) = −Φ⁻¹(u/2), computed on the accurate side
                let z = normal_quantile(0.5 * u);
                1.0 / (z * z)
            }
        }
    }

    pub fn pdf(self, x: f64, p: Params) -> f64 {
        self.standard_pdf((x - p.mu) / p.sigma) / p.sigma
    }

    pub fn cdf(self, x: f64, p: Params) -> f64 {
        self.standard_cdf((x - p.mu) / p.sigma)
    }

    pub fn qf(self, u: f64, p: Params) -> Result<f64> {
        Ok(p.mu + p.sigma * self.standard_qf(u)?)
    }

    /// Standardized Fisher information I* for the estimated parameters of `mode`.
    ///
    /// Exponential and Lévy violate the regularity conditions in μ, so only
    /// their scale-only information exists.
    pub fn fisher_info_standard(self, mode: ParamMode) -> Result<Matrix> {
        let full = match self {
            Family::Cauchy => [0.5, 0.0, 0.5],
            Family::Laplace => [1.0, 0.0, 1.0],
            Family::Logistic => [1.0 / 3.0, 0.0, (3.0 + PI * PI) / 9.0],
            Family::Normal => [1.0, 0.0, 2.0],
            Family::Gumbel => {
                let g1 = EULER_GAMMA - 1.0;
                [1.0, g1, PI * PI / 6.0 + g1 * g1]
            }
            Family::Exponential | Family::Levy => {
                return match mode {
                    ParamMode::ScaleOnly { .. } => {
                        let v = if self == Family::Exponential {
                            1.0
                        } else {
                            0.5
                        };
                        Ok(Matrix::from_diag(&[v]))
                    }
                    _ => Err(Error::Unavailable(format!(
                        "{} Fisher information exists only for the scale with μ known",
                        self.name()
                    ))),
                };
            }
        };
        Ok(match mode {
            ParamMode::LocationScale => {
                Matrix::from_parts(2, 2, vec![full[0], full[1], full[1], full[2]])
            }
            ParamMode::LocationOnly { .. } => Matrix::from_diag(&[full[0]]),
            ParamMode::ScaleOnly { .. } => Matrix::from_diag(&[full[2]]),
        })
    }

    /// `n` independent draws `μ + σ·F*⁻¹(U)` with `U` uniform on (0, 1).
    pub fn sample<R: RngCore + ?Sized>(self, p: Params, n: usize, rng: &mut R) -> Vec<f64> {
        (0..n).map(|_| self.draw(p, rng)).collect()
    }

    pub fn draw<R: RngCore + ?Sized>(self, p: Params, rng: &mut R) -> f64 {
        p.mu + p.sigma * self.qf_interior(open_uniform(rng))
    }

    /// Deterministic inversion of caller-supplied uniforms.
    pub fn sample_from_uniforms(self, p: Params, uniforms: &[f64]) -> Result<Vec<f64>> {
        uniforms.iter().map(|&u| self.qf(u, p)).collect()
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.trim().to_ascii_lowercase();
        Family::ALL
            .into_iter()
            .find(|f| f.name() == lower)
            .ok_or_else(|| Error::Domain(format!("unknown family '{s}'")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::stream_rng;

    fn levels() -> impl Iterator<Item = f64> {
        (1..1000).map(|i| i as f64 / 1000.0)
    }

    #[test]
    fn table_pdf_values() {
        assert_eq!(Family::Laplace.standard_pdf(0.0), 0.5);
        assert!((Family::Cauchy.standard_pdf(0.0) - std::f64::consts::FRAC_1_PI).abs() < 1e-15);
        assert_eq!(Family::Exponential.standard_pdf(-1.0), 0.0);
        assert_eq!(Family::Levy.standard_pdf(-1.0), 0.0);
        assert!((Family::Gumbel.standard_pdf(0.0) - (-1f64).exp()).abs() < 1e-15);
        assert!((Family::Logistic.standard_pdf(0.0) - 0.25).abs() < 1e-15);
        assert!(Family::Logistic.standard_pdf(-800.0) >= 0.0);
    }

    #[test]
    fn table_qf_values() {
        assert_eq!(Family::Logistic.standard_qf(0.5).unwrap(), 0.0);
        assert!((Family::Cauchy.standard_qf(0.75).unwrap() - 1.0).abs() < 1e-12);
        assert!(Family::Gumbel.standard_qf((-1f64).exp()).unwrap().abs() < 1e-15);
        assert!((Family::Exponential.standard_qf(0.5).unwrap() - 2f64.ln()).abs() < 1e-15);
        // Lévy median: 1 / Φ⁻¹(3/4)²
        let z = 0.674_489_750_196_081_7;
        assert!((Family::Levy.standard_qf(0.5).unwrap() - 1.0 / (z * z)).abs() < 1e-9);
        for bad in [0.0, 1.0, -0.2, 1.5, f64::NAN] {
            assert!(matches!(
                Family::Normal.standard_qf(bad),
                Err(Error::Domain(_))
            ));
        }
    }

    #[test]
    fn cdf_values() {
        assert_eq!(Family::Normal.standard_cdf(0.0), 0.5);
        assert!((Family::Exponential.standard_cdf(2f64.ln()) - 0.5).abs() < 1e-15);
        assert!((Family::Levy.standard_cdf(1e12) - 1.0).abs() < 1e-5);
        assert_eq!(Family::Levy.standard_cdf(f64::INFINITY), 1.0);
    }

    #[test]
    fn cdf_inverts_qf() {
        for fam in Family::ALL {
            for u in levels() {
                let z = fam.standard_qf(u).unwrap();
                assert!((fam.standard_cdf(z) - u).abs() < 1e-8, "{fam} u={u}");
            }
        }
    }

    #[test]
    fn qf_inverts_cdf_on_interior() {
        for fam in Family::ALL {
            let (lo, _) = fam.support();
            for i in 0..=80 {
                let z = if lo == 0.0 {
                    0.05 + i as f64 * 0.1
                } else {
                    -4.0 + i as f64 * 0.1
                };
                let back = fam.standard_qf(fam.standard_cdf(z)).unwrap();
                assert!(
                    (back - z).abs() < 1e-8 * z.abs().max(1.0),
                    "{fam} z={z} back={back}"
                );
            }
        }
    }

    #[test]
    fn qf_strictly_increasing() {
        for fam in Family::ALL {
            let q: Vec<f64> = levels().map(|u| fam.standard_qf(u).unwrap()).collect();
            assert!(q.windows(2).all(|w| w[1] > w[0]), "{fam}");
        }
    }

    #[test]
    fn symmetric_families_are_odd() {
        for fam in Family::ALL.into_iter().filter(|f| f.is_symmetric()) {
            for u in levels() {
                let l = fam.standard_qf(u).unwrap();
                let r = fam.standard_qf(1.0 - u).unwrap();
                assert!((l + r).abs() < 1e-9 * l.abs().max(1.0), "{fam} u={u}");
            }
        }
    }

    #[test]
    fn density_matches_cdf_derivative() {
        for fam in Family::ALL {
            for i in 1..20 {
                let u = i as f64 / 20.0;
                let z = fam.standard_qf(u).unwrap();
                let h = 1e-5 * z.abs().max(1.0);
                let deriv = (fam.standard_cdf(z + h) - fam.standard_cdf(z - h)) / (2.0 * h);
                let pdf = fam.standard_pdf(z);
                assert!(
                    (deriv - pdf).abs() <= 1e-5 * pdf,
                    "{fam} u={u}: {deriv} vs {pdf}"
                );
            }
        }
    }

    /// Simpson's rule in `t` with `z = sinh t`, which keeps panels narrow near the
    /// mode and wide in heavy tails; the mass outside the range is read off the cdf.
    #[test]
    fn densities_integrate_to_one() {
        for fam in Family::ALL {
            let lo = fam.standard_qf(1e-6).unwrap().asinh();
            let hi = fam.standard_qf(1.0 - 1e-6).unwrap().asinh();
            let panels = 200_000;
            let h = (hi - lo) / panels as f64;
            let g = |t: f64| fam.standard_pdf(t.sinh()) * t.cosh();
            let mut s = g(lo) + g(hi);
            for i in 1..panels {
                let w = if i % 2 == 1 { 4.0 } else { 2.0 };
                s += w * g(lo + i as f64 * h);
            }
            let total = s * h / 3.0;
            let tails = fam.standard_cdf(lo.sinh()) + (1.0 - fam.standard_cdf(hi.sinh()));
            assert!(
                (total + tails - 1.0).abs() < 1e-6,
                "{fam}: {}",
                total + tails
            );
        }
    }

    #[test]
    fn fisher_information_table() {
        let ls = ParamMode::LocationScale;
        assert_eq!(
            Family::Cauchy.fisher_info_standard(ls).unwrap(),
            Matrix::from_diag(&[0.5, 0.5])
        );
        let g = Family::Gumbel.fisher_info_standard(ls).unwrap();
        assert!((g[(0, 1)] - (0.5772 - 1.0)).abs() < 1e-4);
        assert_eq!(g[(0, 1)], g[(1, 0)]);
        assert!((g[(1, 1)] - (PI * PI / 6.0 + (EULER_GAMMA - 1.0).powi(2))).abs() < 1e-15);
        let levy = Family::Levy
            .fisher_info_standard(ParamMode::ScaleOnly { mu: 0.0 })
            .unwrap();
        assert_eq!(levy.as_slice(), &[0.5]);
        for fam in [Family::Exponential, Family::Levy] {
            assert!(matches!(
                fam.fisher_info_standard(ls),
                Err(Error::Unavailable(_))
            ));
            assert!(fam
                .fisher_info_standard(ParamMode::LocationOnly { sigma: 1.0 })
                .is_err());
        }
        let logistic = Family::Logistic
            .fisher_info_standard(ParamMode::ScaleOnly { mu: 0.0 })
            .unwrap();
        assert!((logistic[(0, 0)] - (3.0 + PI * PI) / 9.0).abs() < 1e-15);
    }

    #[test]
    fn sampling_is_inversion() {
        let p = Params::new(2.0, 3.0).unwrap();
        let us = [0.1, 0.5, 0.9];
        for fam in Family::ALL {
            let xs = fam.sample_from_uniforms(p, &us).unwrap();
            for (x, u) in xs.iter().zip(us) {
                assert_eq!(*x, 2.0 + 3.0 * fam.standard_qf(u).unwrap());
            }
        }
    }

    #[test]
    fn sample_moments_and_support() {
        let mut rng = stream_rng(2024, 0);
        let xs = Family::Normal.sample(Params::standard(), 100_000, &mut rng);
        let mean = xs.iter().sum::<f64>() / xs.len() as f64;
        assert!(mean.abs() < 0.02);

        let p = Params::new(1.0, 3.0).unwrap();
        let xs = Family::Exponential.sample(p, 100_000, &mut rng);
        assert!(xs.iter().all(|&x| x >= 1.0));

        let a = Family::Gumbel.sample(p, 50, &mut stream_rng(5, 1));
        let b = Family::Gumbel.sample(p, 50, &mut stream_rng(5, 1));
        assert_eq!(a, b);
    }

    #[test]
    fn names_parse_case_insensitively() {
        for fam in Family::ALL {
            assert_eq!(fam.name().to_uppercase().parse::<Family>().unwrap(), fam);
        }
        assert!("student".parse::<Family>().is_err());
        assert!(Params::new(0.0, 0.0).is_err());
    }
}
