use nltraffic_core::nonlocal::{GridFunction, GridSpec};
use nltraffic_core::scenarios::{bump_init, subcritical_init, InitialDatum, RandomBumps};
use nltraffic_core::threshold::{
    classify_initial_data, sigma_eval, sigma_residual, threshold_curve_export, ThresholdCurve,
    Verdict,
};
use proptest::prelude::*;

fn sigma(u: f64) -> f64 {
    sigma_eval(u).unwrap()
}

#[test]
fn residual_of_the_evaluator_vanishes() {
    for k in 0..=980 {
        let u = 0.01 + k as f64 * 1e-3;
        let r = sigma_residual(&sigma, None, u).unwrap();
        assert!(r.abs() <= 1e-6, "u = {u}: {r}");
    }
}

#[test]
fn table_residual_is_small() {
    let curve = ThresholdCurve::build();
    let table = |u: f64| curve.interpolate(u);
    for k in 0..=98 {
        let u = 0.01 + k as f64 * 1e-2;
        let r = sigma_residual(&table, None, u).unwrap();
        assert!(r.abs() <= 1e-6, "u = {u}: {r}");
    }
}

#[test]
fn curve_shape() {
    let curve = ThresholdCurve::global();
    for &(u, s) in curve.table() {
        if (0.01..=0.99).contains(&u) {
            assert!(s > 0.0, "sigma({u}) = {s}");
        }
        assert!(s <= u + 1e-12, "sigma({u}) = {s} exceeds u");
    }
    let u2 = curve.boost_level();
    assert!(u2 >= 0.2);
    assert!((u2 - 0.25).abs() < 1e-9, "{u2}");
    for k in 0..=1000 {
        let u = u2 * k as f64 / 1000.0;
        assert!(sigma(u) >= 0.75 * u - 1e-15);
    }
}

#[test]
fn export_examples() {
    assert_eq!(threshold_curve_export(2).unwrap(), vec![(0.0, 0.0), (1.0, 0.0)]);
    assert_eq!(
        threshold_curve_export(3).unwrap(),
        vec![(0.0, 0.0), (0.5, sigma(0.5)), (1.0, 0.0)]
    );
    let many = threshold_curve_export(1001).unwrap();
    assert!(many.windows(2).all(|w| w[1].0 > w[0].0));
    assert!(threshold_curve_export(1).is_err());
}

fn classify_fn(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> Verdict {
    let g = GridSpec::new(a, b, n).unwrap();
    classify_initial_data(&GridFunction::from_fn(g, f).unwrap())
        .unwrap()
        .verdict
}

#[test]
fn classifier_examples() {
    assert_eq!(classify_fn(|_| 0.0, 0.0, 1.0, 100), Verdict::Subcritical);
    assert_eq!(classify_fn(bump_init, -2.0, 2.0, 1000), Verdict::Supercritical);
    assert_eq!(classify_fn(subcritical_init, -60.0, 30.0, 4000), Verdict::Subcritical);
}

#[test]
fn witness_iff_supercritical() {
    for datum in [InitialDatum::bump(), InitialDatum::subinit(), InitialDatum::random(5)] {
        let u = datum.sample(datum.grid(2000).unwrap()).unwrap();
        let c = classify_initial_data(&u).unwrap();
        match c.verdict {
            Verdict::Supercritical => assert!(c.witness.unwrap().margin > 0.0),
            Verdict::Subcritical => {
                assert!(c.witness.is_none());
                assert!(c.min_margin >= -1e-10);
            }
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn verdict_survives_refinement(seed in 0u64..10_000, n in 300usize..1500) {
        let bumps = RandomBumps::generate(seed);
        let (a, b) = bumps.support;
        let coarse = classify_fn(|x| bumps.eval(x), a - 1.0, b + 1.0, n);
        let fine = classify_fn(|x| bumps.eval(x), a - 1.0, b + 1.0, 2 * n);
        prop_assert_eq!(coarse, fine);
    }

    #[test]
    fn decreasing_profiles_are_subcritical(scale in 0.05..1.0f64) {
        // u' <= 0 <= sigma(u) everywhere.
        let f = |x: f64| scale * 0.5 * (-x).exp();
        prop_assert_eq!(classify_fn(f, 0.0, 30.0, 3000), Verdict::Subcritical);
    }
}
