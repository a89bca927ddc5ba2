use ndarray::Array2;
use proptest::prelude::*;
use simpair::diagnostics::{
    mean_abs_correlation, mean_dim_variance, pairwise_distance_bruteforce, CollapseReport,
    CollapseThresholds,
};
use simpair::objective::batch_stats;

fn matrix(max_rows: usize, max_cols: usize) -> impl Strategy<Value = Array2<f64>> {
    (2..=max_rows, 1..=max_cols).prop_flat_map(|(n, d)| {
        prop::collection::vec(-10.0..10.0f64, n * d)
            .prop_map(move |v| Array2::from_shape_vec((n, d), v).unwrap())
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(150))]

    #[test]
    fn pairwise_distance_is_twice_the_summed_variance(z in matrix(60, 12)) {
        let brute = pairwise_distance_bruteforce(z.view());
        let stats = batch_stats(z.view()).unwrap();
        let identity = 2.0 * stats.per_dim_var().sum();
        prop_assert!((brute - identity).abs() < 1e-9 * brute.max(1.0));
        let report = CollapseReport::compute(z.view(), &CollapseThresholds::default()).unwrap();
        prop_assert!((report.d_p - brute).abs() < 1e-9 * brute.max(1.0));
        let var = mean_dim_variance(z.view()).unwrap();
        prop_assert!((brute / (2.0 * z.ncols() as f64) - var).abs() < 1e-9 * var.max(1.0));
    }

    #[test]
    fn correlation_is_bounded_and_affine_invariant(
        z in matrix(40, 6),
        scales in prop::collection::vec(0.1..10.0f64, 6),
        shifts in prop::collection::vec(-5.0..5.0f64, 6),
    ) {
        prop_assume!(z.ncols() >= 2);
        let c = mean_abs_correlation(z.view()).unwrap();
        prop_assert!((0.0..=1.0).contains(&c));
        let mut w = z.clone();
        for (q, mut col) in w.columns_mut().into_iter().enumerate() {
            col.mapv_inplace(|v| scales[q] * v + shifts[q]);
        }
        let cw = mean_abs_correlation(w.view()).unwrap();
        prop_assert!((c - cw).abs() < 1e-9);
    }

    #[test]
    fn classification_is_total_and_deterministic(z in matrix(30, 5)) {
        let t = CollapseThresholds::default();
        let a = CollapseReport::compute(z.view(), &t).unwrap();
        let b = CollapseReport::compute(z.view(), &t).unwrap();
        prop_assert_eq!(a, b);
    }
}

#[test]
fn two_row_values_are_perfectly_correlated() {
    // rows p1, p2 repeated; every pair of non-constant columns has |r| = 1
    let p1 = [1.0, -2.0, 0.5, 3.0];
    let p2 = [4.0, 1.0, 0.5, -1.0];
    let z = Array2::from_shape_fn((10, 4), |(l, q)| if l < 3 { p1[q] } else { p2[q] });
    // column 2 is constant: 3 of the 6 pairs involve it and contribute 0
    let c = mean_abs_correlation(z.view()).unwrap();
    assert!((c - 3.0 / 6.0).abs() < 1e-12, "{c}");
}
