use fieldex::limitlaws::{
    band_probability, evaluate, joint_cdf, marginal_max_cdf, marginal_min_cdf, LimitParams, MinConvention, Theorem, ZeroBivariate,
};
use proptest::prelude::*;
use std::f64::consts::E;
use std::sync::Arc;

const INF: f64 = f64::INFINITY;

fn gumbel(x: f64) -> f64 {
    (-(-x).exp()).exp()
}

/// A bivariate constant shaped like the Pickands-grid case: decreasing in both
/// arguments and bounded by `min(e^{-x}, e^{-y})`.
fn toy_params(r: f64) -> LimitParams {
    let h = Arc::new(|x: f64, y: f64| 0.4 * (-x).exp().min((-y).exp()));
    LimitParams::pickands(r, 1.0, 0.6, h)
}

#[test]
fn sparse_law_at_zero_matches_closed_form() {
    let v = joint_cdf(&LimitParams::sparse(0.0), 0.0, 0.0, 0.0, 0.0).unwrap();
    assert!((v - 0.054_076_8).abs() < 1e-7);
    assert!((v - (1.0 - 1.0 / E).powi(2) * (-2.0f64).exp()).abs() < 1e-12);
}

#[test]
fn dense_law_at_zero_matches_closed_form() {
    let v = joint_cdf(&LimitParams::dense(0.0), 0.0, 0.0, 0.0, 0.0).unwrap();
    assert!((v - 0.232_544_2).abs() < 1e-7);
}

#[test]
fn sparse_marginal_at_zero_is_product_of_gumbels() {
    let p = LimitParams::sparse(0.0);
    for (x, y) in [(-1.0, 0.5), (0.0, 0.0), (2.0, -0.3)] {
        assert!((marginal_max_cdf(&p, x, y).unwrap() - gumbel(x) * gumbel(y)).abs() < 1e-12);
    }
}

#[test]
fn dense_marginal_is_a_single_gumbel() {
    let p = LimitParams::dense(1.5);
    let a = marginal_max_cdf(&p, 0.3, 0.3).unwrap();
    let b = marginal_max_cdf(&p, 0.3, INF).unwrap();
    assert!((a - b).abs() < 1e-12);
}

#[test]
fn mixture_marginal_matches_gaussian_average() {
    let r: f64 = 2.0;
    let p = LimitParams::sparse(r);
    // Simpson's rule over the mixing variable on [−10, 10].
    let f = |z: f64| {
        let g = (-r + (2.0 * r).sqrt() * z).exp();
        (-g * 2.0).exp() * (-z * z / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt()
    };
    let n = 20_000;
    let h = 20.0 / n as f64;
    let mut s = f(-10.0) + f(10.0);
    for k in 1..n {
        s += f(-10.0 + k as f64 * h) * if k % 2 == 1 { 4.0 } else { 2.0 };
    }
    let oracle = s * h / 3.0;
    assert!((marginal_max_cdf(&p, 0.0, 0.0).unwrap() - oracle).abs() < 1e-8);
}

#[test]
fn infinite_arguments_reduce_to_marginals() {
    for p in [LimitParams::sparse(0.7), LimitParams::dense(0.7), toy_params(0.7)] {
        let j = joint_cdf(&p, INF, INF, 0.4, -0.2).unwrap();
        assert!((j - marginal_max_cdf(&p, 0.4, -0.2).unwrap()).abs() < 1e-12);
        let m = joint_cdf(&p, -0.3, 0.1, INF, INF).unwrap();
        assert!((m - marginal_min_cdf(&p, -0.3, 0.1).unwrap()).abs() < 1e-12);
    }
}

#[test]
fn bivariate_term_vanishes_with_zero_constant() {
    let zero = LimitParams::pickands(0.5, 1.0, 1.0, Arc::new(ZeroBivariate));
    let sparse = LimitParams::sparse(0.5);
    for args in [[0.0, 0.0, 0.0, 0.0], [-1.0, 0.5, 1.0, -0.5]] {
        let a = joint_cdf(&zero, args[0], args[1], args[2], args[3]).unwrap();
        let b = joint_cdf(&sparse, args[0], args[1], args[2], args[3]).unwrap();
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn oversized_bivariate_constant_is_clamped_and_flagged() {
    let big = LimitParams::pickands(0.0, 1.0, 1.0, Arc::new(|_: f64, _: f64| 1e6));
    let e = evaluate(&big, 0.0, 0.0, 0.0, 0.0).unwrap();
    assert!(e.clamped);
    assert!((0.0..=1.0).contains(&e.value));
    assert!(!evaluate(&toy_params(0.0), 0.0, 0.0, 0.0, 0.0).unwrap().clamped);
}

#[test]
fn conventions_differ_only_in_the_minima_bracket() {
    let p = LimitParams::sparse(1.0);
    let q = LimitParams::sparse(1.0).with_convention(MinConvention::Published);
    assert_eq!(MinConvention::default(), MinConvention::Reflected);
    let (a, b) = (marginal_max_cdf(&p, 0.2, 0.1).unwrap(), marginal_max_cdf(&q, 0.2, 0.1).unwrap());
    assert!((a - b).abs() < 1e-14);
    let (c, d) = (joint_cdf(&p, 0.2, 0.1, 0.2, 0.1).unwrap(), joint_cdf(&q, 0.2, 0.1, 0.2, 0.1).unwrap());
    assert!((c - d).abs() > 1e-3);
}

#[test]
fn parameter_domain_is_enforced() {
    assert!(joint_cdf(&LimitParams::sparse(-0.1), 0.0, 0.0, 0.0, 0.0).is_err());
    assert!(joint_cdf(&LimitParams::sparse(f64::NAN), 0.0, 0.0, 0.0, 0.0).is_err());
    assert_eq!(Theorem::from_number(2), Some(Theorem::PickandsT2));
    assert_eq!(Theorem::from_number(0), None);
    assert_eq!(Theorem::DenseT3.number(), 3);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn joint_law_is_a_probability_and_monotone(
        which in 0usize..3,
        r in 0.0f64..3.0,
        x1 in -3.0f64..3.0, y1 in -3.0f64..3.0, x2 in -3.0f64..3.0, y2 in -3.0f64..3.0,
        bump in 0.05f64..1.0,
    ) {
        let p = match which { 0 => LimitParams::sparse(r), 1 => LimitParams::dense(r), _ => toy_params(r) };
        let base = joint_cdf(&p, x1, y1, x2, y2).unwrap();
        prop_assert!((-1e-12..=1.0 + 1e-12).contains(&base));
        // Raising a maxima level can only raise the probability.
        prop_assert!(joint_cdf(&p, x1, y1, x2 + bump, y2).unwrap() >= base - 1e-10);
        prop_assert!(joint_cdf(&p, x1, y1, x2, y2 + bump).unwrap() >= base - 1e-10);
        let band = band_probability(&p, x1, y1, x2, y2).unwrap();
        prop_assert!((0.0..=1.0).contains(&band));
        prop_assert!(band <= marginal_max_cdf(&p, x2, y2).unwrap() + 1e-10);
    }

    #[test]
    fn marginal_max_increases_with_both_levels(r in 0.0f64..3.0, x in -3.0f64..3.0, y in -3.0f64..3.0) {
        let p = LimitParams::sparse(r);
        let v = marginal_max_cdf(&p, x, y).unwrap();
        prop_assert!(marginal_max_cdf(&p, x + 0.5, y).unwrap() >= v);
        prop_assert!(marginal_max_cdf(&p, x, y + 0.5).unwrap() >= v);
        let diag = marginal_max_cdf(&p, x, x).unwrap();
        prop_assert!(diag <= marginal_max_cdf(&LimitParams::dense(r), x, x).unwrap() + 1e-12);
    }
}
