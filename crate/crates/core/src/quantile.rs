//! Quantile grids, sample quantiles and the regression ingredients built on them.
//!
//! The sample quantile at level `p` is the `⌈n·p⌉`-th order statistic. The
//! response vector for a grid is the set of those order statistics; the
//! standardized covariance Σ* and design matrix X depend only on the family
//! and the grid.

use serde::Serialize;

use crate::error::{Error, Result, Warning};
use crate::family::{Family, ParamMode};
use crate::linalg::Matrix;

/// Samples up to this size are sorted outright; larger ones use histogram selection.
pub const SORT_THRESHOLD: usize = 4096;

/// Probability levels `a = p_1 < … < p_k = b`, equally spaced.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantileGrid {
    a: f64,
    b: f64,
    levels: Vec<f64>,
}

pub fn make_grid(a: f64, b: f64, k: usize) -> Result<QuantileGrid> {
    QuantileGrid::new(a, b, k)
}

impl QuantileGrid {
    pub fn new(a: f64, b: f64, k: usize) -> Result<Self> {
        if !(a > 0.0 && a < b && b < 1.0) {
            return Err(Error::InvalidGrid(format!(
                "need 0 < a < b < 1, got a={a}, b={b}"
            )));
        }
        if k < 2 {
            return Err(Error::InvalidGrid(format!("need k >= 2 levels, got {k}")));
        }
        let step = (b - a) / (k - 1) as f64;
        let mut levels: Vec<f64> = (0..k).map(|i| a + i as f64 * step).collect();
        levels[k - 1] = b;
        Ok(Self { a, b, levels })
    }

    pub fn a(&self) -> f64 {
        self.a
    }

    pub fn b(&self) -> f64 {
        self.b
    }

    pub fn k(&self) -> usize {
        self.levels.len()
    }

    pub fn levels(&self) -> &[f64] {
        &self.levels
    }
}

/// Selected sample quantiles `Y = (F̂⁻¹(p_1), …, F̂⁻¹(p_k))′`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct QuantileResponse {
    pub values: Vec<f64>,
    pub n: usize,
    pub warnings: Vec<Warning>,
}

/// `⌈n·p⌉`, clamped to `1..=n`. Products within a few ulps of an integer count
/// as that integer, so `100 × 0.91` is rank 91 even though it evaluates to
/// `91.00000000000001`.
pub fn order_rank(n: usize, p: f64) -> usize {
    let x = n as f64 * p;
    let nearest = x.round();
    let r = if (x - nearest).abs() <= 64.0 * f64::EPSILON * x.abs().max(1.0) {
        nearest
    } else {
        x.ceil()
    };
    (r.max(1.0) as usize).min(n.max(1))
}

/// Places the order statistics with the given 0-based `ranks` (sorted,
/// deduplicated) at their final positions, then reads them off.
pub fn order_statistics(data: &mut [f64], ranks: &[usize]) -> Vec<f64> {
    if data.len() <= SORT_THRESHOLD {
        data.sort_unstable_by(f64::total_cmp);
    } else {
        select_nested(data, ranks, 0);
    }
    ranks.iter().map(|&r| data[r]).collect()
}

fn select_nested(data: &mut [f64], ranks: &[usize], offset: usize) {
    if ranks.is_empty() {
        return;
    }
    let mid = ranks.len() / 2;
    let pos = ranks[mid] - offset;
    let (left, _, right) = data.select_nth_unstable_by(pos, f64::total_cmp);
    select_nested(left, &ranks[..mid], offset);
    select_nested(right, &ranks[mid + 1..], offset + pos + 1);
}

/// Maps a float to an integer with the same ordering as `f64::total_cmp`.
#[inline]
fn order_key(x: f64) -> u64 {
    let bits = x.to_bits();
    bits ^ ((((bits as i64) >> 63) as u64) | (1 << 63))
}

const RADIX_BITS: u32 = 16;

/// Order statistics of a read-only sample without copying it.
///
/// One pass finds the key range (and rejects non-finite values), a second
/// builds a 2¹⁶-bin histogram of the order keys, and a third copies out only
/// the bins that contain a requested rank; those small buckets are then
/// selected in place. Ties and signed zeros follow `f64::total_cmp`, so the
/// result equals sorting and indexing.
pub fn select_order_statistics(data: &[f64], ranks: &[usize]) -> Result<Vec<f64>> {
    let (lo, hi, finite) = data
        .iter()
        .fold((u64::MAX, 0u64, true), |(lo, hi, ok), &x| {
            let k = order_key(x);
            (lo.min(k), hi.max(k), ok & x.is_finite())
        });
    if !finite {
        let i = data.iter().position(|v| !v.is_finite()).unwrap_or(0);
        return Err(Error::NonFinite(format!("sample value at index {i}")));
    }
    if data.is_empty() {
        return Err(Error::EmptySample);
    }
    if data.len() > u32::MAX as usize {
        return Ok(order_statistics(&mut data.to_vec(), ranks));
    }
    let span = hi - lo;
    let shift = (64 - span.leading_zeros()).saturating_sub(RADIX_BITS);
    let bin = |x: f64| ((order_key(x) - lo) >> shift) as usize;
    let bins = (span >> shift) as usize + 1;

    let mut hist = vec![0u32; bins];
    for &x in data {
        hist[bin(x)] += 1;
    }
    let mut start = Vec::with_capacity(bins + 1);
    start.push(0usize);
    for &h in &hist {
        start.push(start[start.len() - 1] + h as usize);
    }
    let rank_bins: Vec<usize> = ranks
        .iter()
        .map(|&r| start.partition_point(|&s| s <= r) - 1)
        .collect();

    // At most one slot per rank, so the u8 index suffices for any grid that
    // needs fewer than 255 distinct bins; otherwise fall back to selection.
    let mut targets: Vec<usize> = Vec::new();
    for &b in &rank_bins {
        if targets.last() != Some(&b) {
            targets.push(b);
        }
    }
    if targets.len() >= u8::MAX as usize {
        return Ok(order_statistics(&mut data.to_vec(), ranks));
    }
    let mut slot = vec![u8::MAX; bins];
    for (j, &b) in targets.iter().enumerate() {
        slot[b] = j as u8;
    }
    let mut buckets: Vec<Vec<f64>> = targets
        .iter()
        .map(|&b| Vec::with_capacity(hist[b] as usize))
        .collect();
    for &x in data {
        let s = slot[bin(x)];
        if s != u8::MAX {
            buckets[s as usize].push(x);
        }
    }

    let mut out = Vec::with_capacity(ranks.len());
    let mut i = 0;
    for (bucket, &b) in buckets.iter_mut().zip(&targets) {
        let first = i;
        while i < ranks.len() && rank_bins[i] == b {
            i += 1;
        }
        let local: Vec<usize> = ranks[first..i].iter().map(|&r| r - start[b]).collect();
        select_nested(bucket, &local, 0);
        out.extend(local.iter().map(|&p| bucket[p]));
    }
    Ok(out)
}

/// 0-based ranks for `levels`, with the warnings they trigger.
fn plan_ranks(n: usize, levels: &[f64]) -> (Vec<usize>, Vec<Warning>) {
    let mut warnings = Vec::new();
    let ranks: Vec<usize> = levels
        .iter()
        .map(|&p| {
            if (n as f64) * p < 1.0 {
                warnings.push(Warning::RankClamped { level: p });
            }
            order_rank(n, p) - 1
        })
        .collect();
    let duplicates = ranks.windows(2).filter(|w| w[0] == w[1]).count();
    if duplicates > 0 {
        warnings.push(Warning::DegenerateGrid { duplicates });
    }
    (ranks, warnings)
}

fn assemble(
    n: usize,
    ranks: &[usize],
    warnings: Vec<Warning>,
    solve: impl FnOnce(&[usize]) -> Result<Vec<f64>>,
) -> Result<QuantileResponse> {
    let mut unique = ranks.to_vec();
    unique.dedup();
    let stats = solve(&unique)?;
    let values = ranks
        .iter()
        .map(|r| stats[unique.binary_search(r).expect("rank present")])
        .collect();
    Ok(QuantileResponse {
        values,
        n,
        warnings,
    })
}

fn check_finite(sample: &[f64]) -> Result<()> {
    match sample.iter().position(|v| !v.is_finite()) {
        Some(i) => Err(Error::NonFinite(format!("sample value at index {i}"))),
        None => Ok(()),
    }
}

/// Sample quantiles at `levels` (nondecreasing). Small samples are sorted
/// into a scratch copy; large ones go through [`select_order_statistics`].
pub fn empirical_quantiles(sample: &[f64], levels: &[f64]) -> Result<QuantileResponse> {
    let n = sample.len();
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let (ranks, warnings) = plan_ranks(n, levels);
    assemble(n, &ranks, warnings, |unique| {
        if n <= SORT_THRESHOLD {
            check_finite(sample)?;
            Ok(order_statistics(&mut sample.to_vec(), unique))
        } else {
            select_order_statistics(sample, unique)
        }
    })
}

/// As [`empirical_quantiles`], but small samples are sorted in place instead
/// of copied. Large samples are left untouched.
pub fn empirical_quantiles_in_place(
    sample: &mut [f64],
    levels: &[f64],
) -> Result<QuantileResponse> {
    let n = sample.len();
    if n == 0 {
        return Err(Error::EmptySample);
    }
    let (ranks, warnings) = plan_ranks(n, levels);
    assemble(n, &ranks, warnings, |unique| {
        if n <= SORT_THRESHOLD {
            check_finite(sample)?;
            Ok(order_statistics(sample, unique))
        } else {
            select_order_statistics(sample, unique)
        }
    })
}

/// Reads the grid quantiles off an already sorted sample (no validation).
pub fn sorted_quantiles(sorted: &[f64], levels: &[f64]) -> QuantileResponse {
    let n = sorted.len();
    let values = levels
        .iter()
        .map(|&p| sorted[order_rank(n, p) - 1])
        .collect();
    QuantileResponse {
        values,
        n,
        warnings: Vec::new(),
    }
}

pub fn standard_quantiles(fam: Family, levels: &[f64]) -> Result<Vec<f64>> {
    levels.iter().map(|&p| fam.standard_qf(p)).collect()
}

/// Σ* with entries `p_i(1 − p_j) / (f*(q_i)·f*(q_j))` for `i ≤ j`, `q = F*⁻¹(p)`.
pub fn sigma_star(fam: Family, levels: &[f64]) -> Result<Matrix> {
    let q = standard_quantiles(fam, levels)?;
    let dens: Vec<f64> = q.iter().map(|&z| fam.standard_pdf(z)).collect();
    for (&d, &p) in dens.iter().zip(levels) {
        if !(d > 0.0 && d.is_finite()) {
            return Err(Error::DegenerateDensity { level: p });
        }
    }
    let k = levels.len();
    let mut m = Matrix::zeros(k, k);
    for i in 0..k {
        for j in i..k {
            let (lo, hi) = if levels[i] <= levels[j] {
                (i, j)
            } else {
                (j, i)
            };
            let v = levels[lo] * (1.0 - levels[hi]) / (dens[i] * dens[j]);
            m[(i, j)] = v;
            m[(j, i)] = v;
        }
    }
    Ok(m)
}

/// Columns `[1, F*⁻¹(p)]`, or the single column matching the estimated parameter.
pub fn design_matrix(fam: Family, levels: &[f64], mode: ParamMode) -> Result<Matrix> {
    let q = standard_quantiles(fam, levels)?;
    let k = levels.len();
    Ok(match mode {
        ParamMode::LocationScale => Matrix::from_fn(k, 2, |i, j| if j == 0 { 1.0 } else { q[i] }),
        ParamMode::LocationOnly { .. } => Matrix::from_fn(k, 1, |_, _| 1.0),
        ParamMode::ScaleOnly { .. } => Matrix::from_fn(k, 1, |i, _| q[i]),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::family::Params;
    use crate::linalg::spd_factorize;
    use crate::rng::stream_rng;
    use std::f64::consts::PI;

    #[test]
    fn grid_arithmetic() {
        let g = make_grid(0.1, 0.9, 5).unwrap();
        let expected = [0.1, 0.3, 0.5, 0.7, 0.9];
        for (a, b) in g.levels().iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }
        assert_eq!(make_grid(0.05, 0.95, 2).unwrap().levels(), &[0.05, 0.95]);
        let g = make_grid(0.05, 0.95, 25).unwrap();
        assert!((g.levels()[1] - 0.0875).abs() < 1e-15);
        assert_eq!(g.levels()[24], 0.95);
        assert_eq!(g.levels()[0], 0.05);
    }

    #[test]
    fn invalid_grids() {
        for (a, b, k) in [
            (0.0, 0.9, 5),
            (0.5, 0.5, 5),
            (0.9, 0.1, 5),
            (0.1, 1.0, 5),
            (0.1, 0.9, 1),
        ] {
            assert!(
                matches!(make_grid(a, b, k), Err(Error::InvalidGrid(_))),
                "{a} {b} {k}"
            );
        }
    }

    #[test]
    fn ranks_follow_ceiling() {
        assert_eq!(order_rank(10, 0.25), 3);
        assert_eq!(order_rank(100, 0.91), 91);
        assert_eq!(order_rank(1000, 0.05), 50);
        assert_eq!(order_rank(10, 0.01), 1);
        assert_eq!(order_rank(10, 0.999), 10);
        let g = make_grid(0.05, 0.95, 25).unwrap();
        // 1000 * (0.05 + 0.9 * 6 / 24) = 275 exactly
        assert_eq!(order_rank(1000, g.levels()[6]), 275);
    }

    #[test]
    fn quantiles_of_small_samples() {
        let sample: Vec<f64> = (1..=10).rev().map(f64::from).collect();
        let r = empirical_quantiles(&sample, &[0.25]).unwrap();
        assert_eq!(r.values, vec![3.0]);

        let sample: Vec<f64> = (1..=100).map(f64::from).collect();
        let r = empirical_quantiles(&sample, &[0.91]).unwrap();
        assert_eq!(r.values, vec![91.0]);

        let r = empirical_quantiles(&[5.0], make_grid(0.1, 0.9, 5).unwrap().levels()).unwrap();
        assert_eq!(r.values, vec![5.0; 5]);
        assert!(r
            .warnings
            .iter()
            .any(|w| matches!(w, Warning::DegenerateGrid { duplicates: 4 })));
        assert!(r
            .warnings
            .iter()
            .any(|w| matches!(w, Warning::RankClamped { .. })));

        assert!(matches!(
            empirical_quantiles(&[], &[0.5]),
            Err(Error::EmptySample)
        ));
        assert!(matches!(
            empirical_quantiles(&[1.0, f64::NAN], &[0.5]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn selection_agrees_with_sorting() {
        let mut rng = stream_rng(3, 0);
        let data = Family::Cauchy.sample(Params::standard(), 50_001, &mut rng);
        let grid = make_grid(0.02, 0.98, 37).unwrap();
        let selected = empirical_quantiles(&data, grid.levels()).unwrap();
        let mut sorted = data.clone();
        sorted.sort_by(f64::total_cmp);
        for (&p, &v) in grid.levels().iter().zip(&selected.values) {
            assert_eq!(v, sorted[order_rank(data.len(), p) - 1]);
        }
        assert!(selected.values.windows(2).all(|w| w[0] <= w[1]));
    }

    fn by_sorting(data: &[f64], ranks: &[usize]) -> Vec<f64> {
        let mut sorted = data.to_vec();
        sorted.sort_by(f64::total_cmp);
        ranks.iter().map(|&r| sorted[r]).collect()
    }

    #[test]
    fn histogram_selection_on_awkward_inputs() {
        let n = 20_000;
        let ranks: Vec<usize> = [0, 1, 999, 5000, 10_000, 10_001, 19_998, 19_999].to_vec();
        let mut rng = stream_rng(8, 0);
        let narrow: Vec<f64> =
            Family::Normal.sample(Params::new(1000.0, 1e-9).unwrap(), n, &mut rng);
        let ties: Vec<f64> = (0..n).map(|i| ((i * 7919) % 13) as f64 - 6.0).collect();
        let zeros: Vec<f64> = (0..n)
            .map(|i| match i % 3 {
                0 => 0.0,
                1 => -0.0,
                _ => (i as f64).sin(),
            })
            .collect();
        let wild: Vec<f64> = (0..n)
            .map(|i| {
                let e = (i % 600) as i32 - 300;
                (if i % 2 == 0 { 1.0 } else { -1.0 }) * 10f64.powi(e)
            })
            .collect();
        let constant = vec![2.5; n];
        let cauchy = Family::Cauchy.sample(Params::standard(), n, &mut rng);
        for data in [narrow, ties, zeros, wild, constant, cauchy] {
            let got = select_order_statistics(&data, &ranks).unwrap();
            let want = by_sorting(&data, &ranks);
            for (g, w) in got.iter().zip(&want) {
                assert_eq!(g.to_bits(), w.to_bits());
            }
        }
    }

    #[test]
    fn histogram_selection_rejects_non_finite() {
        let mut data = vec![1.0; 10_000];
        data[7_777] = f64::INFINITY;
        match select_order_statistics(&data, &[5]) {
            Err(Error::NonFinite(msg)) => assert!(msg.contains("7777")),
            other => panic!("{other:?}"),
        }
        assert!(matches!(
            empirical_quantiles(&data, &[0.5]),
            Err(Error::NonFinite(_))
        ));
    }

    #[test]
    fn in_place_and_copying_paths_agree() {
        let grid = make_grid(0.05, 0.95, 25).unwrap();
        for n in [100, SORT_THRESHOLD, SORT_THRESHOLD + 1, 30_000] {
            let data = Family::Gumbel.sample(Params::standard(), n, &mut stream_rng(9, n as u64));
            let a = empirical_quantiles(&data, grid.levels()).unwrap();
            let mut copy = data.clone();
            let b = empirical_quantiles_in_place(&mut copy, grid.levels()).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn single_level_covariances() {
        let s = sigma_star(Family::Normal, &[0.5]).unwrap();
        assert!((s[(0, 0)] - PI / 2.0).abs() < 1e-12);
        let s = sigma_star(Family::Cauchy, &[0.5]).unwrap();
        assert!((s[(0, 0)] - PI * PI / 4.0).abs() < 1e-12);
    }

    #[test]
    fn sigma_star_is_exactly_symmetric() {
        for fam in Family::ALL {
            let s = sigma_star(fam, make_grid(0.1, 0.75, 25).unwrap().levels()).unwrap();
            for i in 0..25 {
                for j in 0..25 {
                    assert_eq!(s[(i, j)], s[(j, i)]);
                }
            }
        }
    }

    #[test]
    fn sigma_star_positive_definite_across_grids() {
        for fam in Family::ALL {
            for (a, b) in [(0.02, 0.98), (0.05, 0.95), (0.10, 0.90)] {
                for k in 2..=200 {
                    let s = sigma_star(fam, make_grid(a, b, k).unwrap().levels()).unwrap();
                    assert!(spd_factorize(&s).is_ok(), "{fam} ({a},{b}) k={k}");
                }
            }
        }
    }

    #[test]
    fn design_columns() {
        let g = make_grid(0.05, 0.95, 25).unwrap();
        let x = design_matrix(Family::Gumbel, g.levels(), ParamMode::LocationScale).unwrap();
        assert!(x.col_vec(0).iter().all(|&v| v == 1.0));
        let q = x.col_vec(1);
        assert!(q.windows(2).all(|w| w[1] > w[0]));

        let x = design_matrix(
            Family::Logistic,
            &[0.25, 0.5, 0.75],
            ParamMode::LocationScale,
        )
        .unwrap();
        let expected = [-(3f64.ln()), 0.0, 3f64.ln()];
        for (a, b) in x.col_vec(1).iter().zip(expected) {
            assert!((a - b).abs() < 1e-15);
        }

        let x = design_matrix(
            Family::Normal,
            g.levels(),
            ParamMode::LocationOnly { sigma: 1.0 },
        )
        .unwrap();
        assert_eq!((x.rows(), x.cols()), (25, 1));
        assert!(x.as_slice().iter().all(|&v| v == 1.0));
        let x =
            design_matrix(Family::Normal, g.levels(), ParamMode::ScaleOnly { mu: 0.0 }).unwrap();
        assert_eq!(
            x.col_vec(0),
            standard_quantiles(Family::Normal, g.levels()).unwrap()
        );
    }

    #[test]
    fn quantiles_converge_on_ideal_samples() {
        let grid = make_grid(0.05, 0.95, 25).unwrap();
        let p = Params::new(1.5, 2.0).unwrap();
        for fam in Family::ALL {
            let max_err = |n: usize| {
                let sample: Vec<f64> = (1..=n)
                    .map(|i| fam.qf(i as f64 / (n + 1) as f64, p).unwrap())
                    .collect();
                let y = empirical_quantiles(&sample, grid.levels()).unwrap();
                grid.levels()
                    .iter()
                    .zip(&y.values)
                    .map(|(&l, &v)| (v - fam.qf(l, p).unwrap()).abs())
                    .fold(0.0, f64::max)
            };
            let coarse = max_err(10_000);
            let fine = max_err(40_000);
            assert!(fine <= coarse / 2.0, "{fam}: {coarse} -> {fine}");
        }
    }
}
