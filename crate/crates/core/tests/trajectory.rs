use proptest::prelude::*;

use hashtag_lifecycle::synth::{logistic_curve, LogisticTruth};
use hashtag_lifecycle::trajectory::{summarize_curve, CumulativeCurve, SplineOptions};
use hashtag_lifecycle::CumulativeCurve64;

#[test]
fn logistic_growth_and_saturation() {
    let (l, k, mid) = (2000.0, 0.05, 150.0);
    let truth = LogisticTruth::new(l, k, mid);
    let a = summarize_curve(logistic_curve(l, k, mid), &SplineOptions::default()).unwrap();
    assert!((a.summary.growth - truth.growth).abs() / truth.growth < 0.02);
    assert!((a.summary.t_e - truth.t_e.round() as i64).abs() <= 2);
    assert!(a.summary.t_star > mid as i64 && a.summary.t_star < a.summary.t_e);
}

#[test]
fn tangent_matches_summary() {
    let a = summarize_curve(logistic_curve(500.0, 0.1, 80.0), &SplineOptions::default()).unwrap();
    let s = a.summary;
    let anchor = a.fit.value(s.t_m);
    for (m, _, _, tangent) in a.plot_rows() {
        assert!((tangent - (anchor + s.growth * (m as f64 - s.t_m))).abs() < 1e-9);
    }
}

#[test]
fn single_precision_agrees() {
    let counts: Vec<f32> = (0..200).map(|t| 300.0 / (1.0 + (-(t as f32 - 90.0) * 0.08).exp())).collect();
    let a32 = summarize_curve(CumulativeCurve::new(0, counts).unwrap(), &SplineOptions::default()).unwrap();
    let c64: CumulativeCurve64 = logistic_curve(300.0, 0.08, 90.0);
    let a64 = summarize_curve(c64, &SplineOptions::default()).unwrap();
    assert!((f64::from(a32.summary.growth) - a64.summary.growth).abs() / a64.summary.growth < 0.01);
    assert!((a32.summary.t_e - a64.summary.t_e).abs() <= 1);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn critical_points_are_ordered(incs in proptest::collection::vec(0u32..30, 1..150), start in 0i64..500) {
        let incs: Vec<f64> = incs.into_iter().map(f64::from).collect();
        prop_assume!(incs.iter().any(|&x| x > 0.0));
        let curve = CumulativeCurve::from_increments(start, &incs).unwrap();
        let a = summarize_curve(curve, &SplineOptions::default()).unwrap();
        let s = a.summary;
        prop_assert!(s.t0 <= s.t_star && s.t_star <= s.t_e, "{:?}", s);
        prop_assert!(s.growth >= 0.0);
        prop_assert_eq!(s.persistence, s.t_e - s.t0);
    }
}
