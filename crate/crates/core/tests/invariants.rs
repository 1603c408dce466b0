use proptest::prelude::*;

use qls_core::gof::{w_out_statistic, w_test};
use qls_core::rng::stream_rng;
use qls_core::{
    breakdown_point, make_grid, EstimatorKind, Family, OutGrid, ParamMode, Params, QlsModel,
};

const FAMILIES: [Family; 5] = [
    Family::Cauchy,
    Family::Laplace,
    Family::Logistic,
    Family::Normal,
    Family::Gumbel,
];

fn family() -> impl Strategy<Value = Family> {
    (0..FAMILIES.len()).prop_map(|i| FAMILIES[i])
}

fn grid_params() -> impl Strategy<Value = (f64, f64, usize)> {
    (0.01f64..0.2, 0.8f64..0.99, 3usize..40)
}

fn close(a: f64, b: f64, rel: f64) -> bool {
    (a - b).abs() <= rel * (1.0 + a.abs().max(b.abs()))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn estimates_are_affine_equivariant(
        fam in family(),
        (a, b, k) in grid_params(),
        shift in -50.0f64..50.0,
        scale in 0.01f64..100.0,
        seed in any::<u64>(),
    ) {
        let data = fam.sample(Params::standard(), 400, &mut stream_rng(seed, 0));
        let moved: Vec<f64> = data.iter().map(|x| shift + scale * x).collect();
        let model = QlsModel::new(fam, make_grid(a, b, k).unwrap(), ParamMode::LocationScale).unwrap();
        for kind in [EstimatorKind::Oqls, EstimatorKind::Gqls] {
            let f0 = model.fit(kind, &data).unwrap();
            let f1 = model.fit(kind, &moved).unwrap();
            prop_assert!(close(f1.mu, shift + scale * f0.mu, 1e-9), "{} vs {}", f1.mu, shift + scale * f0.mu);
            prop_assert!(close(f1.sigma, scale * f0.sigma, 1e-9));
        }
    }

    #[test]
    fn w_is_affine_invariant(
        fam in family(),
        (a, b, k) in grid_params(),
        shift in -50.0f64..50.0,
        scale in 0.01f64..100.0,
        seed in any::<u64>(),
    ) {
        let data = fam.sample(Params::standard(), 400, &mut stream_rng(seed, 1));
        let moved: Vec<f64> = data.iter().map(|x| shift + scale * x).collect();
        let model = QlsModel::new(fam, make_grid(a, b, k).unwrap(), ParamMode::LocationScale).unwrap();
        let w0 = w_test(&model, &model.fit(EstimatorKind::Gqls, &data).unwrap()).unwrap();
        let w1 = w_test(&model, &model.fit(EstimatorKind::Gqls, &moved).unwrap()).unwrap();
        prop_assert!(close(w0.statistic, w1.statistic, 1e-6), "{} vs {}", w0.statistic, w1.statistic);
        prop_assert!((0.0..=1.0).contains(&w0.p_value));
    }

    #[test]
    fn out_of_sample_statistic_on_the_fit_grid_is_w(
        fam in family(),
        (a, b, k) in grid_params(),
        seed in any::<u64>(),
    ) {
        let data = fam.sample(Params::standard(), 300, &mut stream_rng(seed, 2));
        let grid = make_grid(a, b, k).unwrap();
        let model = QlsModel::new(fam, grid.clone(), ParamMode::LocationScale).unwrap();
        let fit = model.fit(EstimatorKind::Gqls, &data).unwrap();
        let w = w_test(&model, &fit).unwrap().statistic;
        let w_out = w_out_statistic(&data, &fit, &OutGrid::from_grid(&grid)).unwrap();
        prop_assert!(close(w, w_out, 1e-9), "{w} vs {w_out}");
    }

    #[test]
    fn breakdown_point_is_the_smaller_tail((a, b, k) in grid_params()) {
        let bp = breakdown_point(&make_grid(a, b, k).unwrap());
        prop_assert!((bp.bp - a.min(1.0 - b)).abs() < 1e-15);
        prop_assert!(bp.bp <= bp.lbp && bp.bp <= bp.ubp);
    }

    #[test]
    fn sample_order_does_not_matter(fam in family(), seed in any::<u64>(), n in 50usize..6000) {
        let data = fam.sample(Params::standard(), n, &mut stream_rng(seed, 3));
        let mut reversed = data.clone();
        reversed.reverse();
        let model = QlsModel::new(fam, make_grid(0.05, 0.95, 25).unwrap(), ParamMode::LocationScale).unwrap();
        let f0 = model.fit(EstimatorKind::Gqls, &data).unwrap();
        let f1 = model.fit(EstimatorKind::Gqls, &reversed).unwrap();
        prop_assert_eq!(f0.mu.to_bits(), f1.mu.to_bits());
        prop_assert_eq!(f0.sigma.to_bits(), f1.sigma.to_bits());
    }
}
