//! Asymptotic relative efficiency of the QLS estimators against maximum likelihood.
//!
//! Every quantity here is parameter free: σ² cancels between the estimator's
//! covariance and the inverse Fisher information, so the computations only see
//! the family and the grid.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::estimate::{standardized_cov, EstimatorKind};
use crate::family::{Family, ParamMode};
use crate::linalg::{det, spd_factorize};
use crate::quantile::{design_matrix, make_grid, sigma_star};

/// What the efficiency compares.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum AreTarget {
    /// Both parameters unknown; square root of the determinant ratio.
    Joint,
    /// σ known, only μ estimated (one-column design).
    Location,
    /// μ known, only σ estimated.
    Scale,
    /// μ-component of the joint fit: `[I*⁻¹]₁₁ / C₁₁`.
    LocationInJoint,
    /// σ-component of the joint fit: `[I*⁻¹]₂₂ / C₂₂`.
    ScaleInJoint,
}

impl AreTarget {
    pub const ALL: [AreTarget; 5] = [
        AreTarget::Joint,
        AreTarget::Location,
        AreTarget::Scale,
        AreTarget::LocationInJoint,
        AreTarget::ScaleInJoint,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AreTarget::Joint => "joint",
            AreTarget::Location => "location",
            AreTarget::Scale => "scale",
            AreTarget::LocationInJoint => "location-in-joint",
            AreTarget::ScaleInJoint => "scale-in-joint",
        }
    }

    fn mode(self) -> ParamMode {
        match self {
            AreTarget::Location => ParamMode::LocationOnly { sigma: 1.0 },
            AreTarget::Scale => ParamMode::ScaleOnly { mu: 0.0 },
            _ => ParamMode::LocationScale,
        }
    }
}

impl fmt::Display for AreTarget {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for AreTarget {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        AreTarget::ALL
            .into_iter()
            .find(|t| t.name() == lower)
            .or(match lower.as_str() {
                "location-scale" | "both" => Some(AreTarget::Joint),
                _ => None,
            })
            .ok_or_else(|| Error::InvalidConfig(format!("unknown ARE target '{s}'")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AreResult {
    pub family: Family,
    pub kind: EstimatorKind,
    pub target: AreTarget,
    pub a: f64,
    pub b: f64,
    pub k: usize,
    /// `None` when the cell is undefined; `note` then says why.
    pub are: Option<f64>,
    pub note: Option<String>,
}

pub fn are(
    kind: EstimatorKind,
    fam: Family,
    a: f64,
    b: f64,
    k: usize,
    target: AreTarget,
) -> Result<AreResult> {
    let value = are_value(kind, fam, a, b, k, target)?;
    Ok(AreResult {
        family: fam,
        kind,
        target,
        a,
        b,
        k,
        are: Some(value),
        note: None,
    })
}

/// Just the efficiency number of [`are`].
pub fn are_value(
    kind: EstimatorKind,
    fam: Family,
    a: f64,
    b: f64,
    k: usize,
    target: AreTarget,
) -> Result<f64> {
    if kind == EstimatorKind::Mle {
        return Ok(1.0);
    }
    let mode = target.mode();
    let info = fam.fisher_info_standard(mode)?;
    let info_inv = spd_factorize(&info)?.inverse();
    let grid = make_grid(a, b, k)?;
    let x = design_matrix(fam, grid.levels(), mode)?;
    let s = sigma_star(fam, grid.levels())?;
    let cov = standardized_cov(kind, &x, &s)?;
    Ok(match target {
        AreTarget::Joint => (det(&info_inv)? / det(&cov)?).sqrt(),
        AreTarget::Location | AreTarget::Scale => info_inv[(0, 0)] / cov[(0, 0)],
        AreTarget::LocationInJoint => info_inv[(0, 0)] / cov[(0, 0)],
        AreTarget::ScaleInJoint => info_inv[(1, 1)] / cov[(1, 1)],
    })
}

/// Cross product of families × grids × targets; cells that cannot be computed
/// are kept with `are = None` rather than aborting the table.
pub fn are_table(
    kind: EstimatorKind,
    families: &[Family],
    grids: &[(f64, f64, usize)],
    targets: &[AreTarget],
) -> Vec<AreResult> {
    let cells: Vec<(Family, (f64, f64, usize), AreTarget)> = families
        .iter()
        .flat_map(|&f| {
            grids
                .iter()
                .flat_map(move |&g| targets.iter().map(move |&t| (f, g, t)))
        })
        .collect();
    cells
        .into_par_iter()
        .map(
            |(fam, (a, b, k), target)| match are_value(kind, fam, a, b, k, target) {
                Ok(v) => AreResult {
                    family: fam,
                    kind,
                    target,
                    a,
                    b,
                    k,
                    are: Some(v),
                    note: None,
                },
                Err(e) => AreResult {
                    family: fam,
                    kind,
                    target,
                    a,
                    b,
                    k,
                    are: None,
                    note: Some(e.to_string()),
                },
            },
        )
        .collect()
}

/// ARE as a function of `k` on a fixed `[a, b]`.
pub fn are_curve(
    kind: EstimatorKind,
    fam: Family,
    a: f64,
    b: f64,
    ks: impl IntoIterator<Item = usize>,
    target: AreTarget,
) -> Result<Vec<(usize, f64)>> {
    ks.into_iter()
        .map(|k| {
            if !(2..=500).contains(&k) {
                return Err(Error::InvalidGrid(format!("k = {k} outside 2..=500")));
            }
            Ok((k, are_value(kind, fam, a, b, k, target)?))
        })
        .collect()
}

pub fn are_csv(rows: &[AreResult]) -> String {
    let mut out = String::from("family,kind,mode,a,b,k,are\n");
    for r in rows {
        let v = r
            .are
            .map_or_else(|| "NA".to_string(), |v| format!("{v:.6}"));
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.family, r.kind, r.target, r.a, r.b, r.k, v
        );
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    const G: EstimatorKind = EstimatorKind::Gqls;
    const O: EstimatorKind = EstimatorKind::Oqls;

    #[test]
    fn headline_values() {
        let v = are_value(G, Family::Normal, 0.05, 0.95, 25, AreTarget::Joint).unwrap();
        assert!((v - 0.911).abs() < 0.003, "{v}");
        let v = are_value(O, Family::Cauchy, 0.05, 0.95, 15, AreTarget::Joint).unwrap();
        assert!((v - 0.181).abs() < 0.003, "{v}");
        let v = are_value(G, Family::Laplace, 0.05, 0.95, 25, AreTarget::Location).unwrap();
        assert!((v - 1.0).abs() < 1e-9, "{v}");
    }

    #[test]
    fn laplace_location_seesaw() {
        for k in [11, 13, 15, 25] {
            let odd = are_value(G, Family::Laplace, 0.05, 0.95, k, AreTarget::Location).unwrap();
            let even =
                are_value(G, Family::Laplace, 0.05, 0.95, k + 1, AreTarget::Location).unwrap();
            assert!((odd - 1.0).abs() < 1e-9 && even < odd - 1e-3, "k={k}");
        }
    }

    #[test]
    fn gls_dominates_ols() {
        for fam in Family::ALL {
            for target in AreTarget::ALL {
                for (a, b) in [(0.02, 0.98), (0.05, 0.95), (0.1, 0.9)] {
                    for k in [2, 5, 15, 25] {
                        match (
                            are_value(G, fam, a, b, k, target),
                            are_value(O, fam, a, b, k, target),
                        ) {
                            (Ok(g), Ok(o)) => assert!(g >= o - 1e-12, "{fam} {target} {a} {k}"),
                            (Err(Error::Unavailable(_)), Err(Error::Unavailable(_))) => {}
                            other => panic!("{fam} {target}: {other:?}"),
                        }
                    }
                }
            }
        }
    }

    #[test]
    fn unavailable_cells_are_carried() {
        let rows = are_table(
            G,
            &[Family::Exponential, Family::Levy],
            &[(0.05, 0.95, 25)],
            &AreTarget::ALL,
        );
        assert_eq!(rows.len(), 10);
        for r in &rows {
            assert_eq!(r.are.is_some(), r.target == AreTarget::Scale, "{:?}", r);
        }
        let csv = are_csv(&rows);
        assert!(csv.starts_with("family,kind,mode,a,b,k,are\n"));
        assert!(csv.contains("exponential,gqls,joint,0.05,0.95,25,NA"));
    }

    /// Laplace is excluded: its location component alternates between odd
    /// and even k, and the joint curve inherits the zigzag.
    #[test]
    fn gqls_joint_curve_is_nondecreasing() {
        for fam in [
            Family::Cauchy,
            Family::Logistic,
            Family::Normal,
            Family::Gumbel,
        ] {
            let curve = are_curve(G, fam, 0.05, 0.95, 2..=40, AreTarget::Joint).unwrap();
            for w in curve.windows(2) {
                assert!(w[1].1 >= w[0].1 - 1e-9, "{fam} k={}", w[1].0);
            }
        }
        let laplace = are_curve(
            G,
            Family::Laplace,
            0.05,
            0.95,
            [15, 20, 25],
            AreTarget::Joint,
        )
        .unwrap();
        assert!(laplace[1].1 < laplace[0].1 && laplace[1].1 < laplace[2].1);
    }

    /// Widening [a, b] helps the scale estimator, except for Cauchy where the
    /// extreme quantiles carry so little information that the width barely
    /// matters and no consistent ordering exists.
    #[test]
    fn scale_efficiency_versus_grid_width() {
        let widths = [(0.1, 0.9), (0.05, 0.95), (0.02, 0.98)];
        for fam in Family::REGULAR {
            for k in [15, 20, 25] {
                let v: Vec<f64> = widths
                    .iter()
                    .map(|&(a, b)| are_value(G, fam, a, b, k, AreTarget::Scale).unwrap())
                    .collect();
                if fam == Family::Cauchy {
                    let spread = v.iter().fold(0.0f64, |m, x| m.max((x - v[0]).abs()));
                    assert!(spread < 0.005, "{fam} k={k}: {v:?}");
                } else {
                    assert!(v[0] <= v[1] && v[1] <= v[2], "{fam} k={k}: {v:?}");
                }
            }
        }
    }

    #[test]
    fn curve_rejects_out_of_range_k() {
        assert!(are_curve(G, Family::Normal, 0.05, 0.95, [1], AreTarget::Joint).is_err());
        assert!(are_curve(G, Family::Normal, 0.05, 0.95, [501], AreTarget::Joint).is_err());
    }

    #[test]
    fn target_names_round_trip() {
        for t in AreTarget::ALL {
            assert_eq!(t.name().parse::<AreTarget>().unwrap(), t);
        }
    }
}
