use proptest::prelude::*;

use hashtag_lifecycle::survival::{fit_cox, fit_cox_counting, km, median_survival, rows_from_records, SurvivalRecord};
use hashtag_lifecycle::synth::{gen_survival_cohort, quantile_cohort};

fn records(raw: &[(u8, bool)]) -> Vec<SurvivalRecord> {
    raw.iter()
        .map(|&(d, e)| SurvivalRecord {
            tag: String::new(),
            duration: f64::from(d),
            event: e,
            covariates: vec![],
        })
        .collect()
}

// Reference values from an independent Efron-ties implementation (statsmodels PHReg)
// on the seed-0 cohort below.
#[test]
fn cox_matches_reference_fit() {
    let (r, _) = gen_survival_cohort(&[std::f64::consts::LN_2], 0.01, 1000, f64::INFINITY, 0).unwrap();
    let fit = fit_cox(&["group".to_string()], &r).unwrap();
    let c = &fit.coefficients[0];
    assert!((c.estimate - 0.744_723_605_847_805_1).abs() < 1e-8);
    assert!((c.se - 0.067_176_885_841_303_5).abs() < 1e-8);
    assert!((fit.loglik - -5_850.922_981_661_813_5).abs() < 1e-6);
}

#[test]
fn censored_cohort_routes_agree() {
    let (r, _) = gen_survival_cohort(&[0.5, -0.3, 0.2], 0.02, 400, 60.0, 9).unwrap();
    let names: Vec<String> = ["group", "x1", "x2"].iter().map(|s| s.to_string()).collect();
    let a = fit_cox(&names, &r).unwrap();
    let b = fit_cox_counting(&names, &rows_from_records(&r)).unwrap();
    assert!(r.iter().any(|x| !x.event));
    for (x, y) in a.coefficients.iter().zip(&b.coefficients) {
        assert!((x.estimate - y.estimate).abs() < 1e-8);
    }
    assert!((a.loglik - b.loglik).abs() < 1e-8);
}

#[test]
fn split_intervals_leave_the_fit_unchanged() {
    let (r, _) = gen_survival_cohort(&[0.7], 0.05, 200, 40.0, 3).unwrap();
    let names = vec!["group".to_string()];
    let whole = fit_cox_counting(&names, &rows_from_records(&r)).unwrap();
    let mut split = Vec::new();
    for row in rows_from_records(&r) {
        let cut = row.stop / 2.0;
        let mut first = row.clone();
        first.stop = cut;
        first.event = false;
        let mut second = row;
        second.start = cut;
        split.push(first);
        split.push(second);
    }
    let parts = fit_cox_counting(&names, &split).unwrap();
    assert!((whole.coefficients[0].estimate - parts.coefficients[0].estimate).abs() < 1e-8);
}

#[test]
fn planted_median() {
    let curve = km(&quantile_cohort(301, 120.0)).unwrap();
    assert!((median_survival(&curve).unwrap() - 120.0).abs() <= 1.0);
}

proptest! {
    #[test]
    fn km_is_a_nonincreasing_step_function(raw in proptest::collection::vec((0u8..50, any::<bool>()), 1..80)) {
        let curve = km(&records(&raw)).unwrap();
        prop_assert_eq!(curve.rows[0].time, 0.0);
        prop_assert_eq!(curve.rows[0].survival, 1.0);
        for w in curve.rows.windows(2) {
            prop_assert!(w[1].time >= w[0].time);
            prop_assert!(w[1].survival <= w[0].survival);
        }
        for r in &curve.rows {
            prop_assert!(0.0 <= r.lower && r.lower <= r.survival + 1e-12);
            prop_assert!(r.survival <= r.upper + 1e-12 && r.upper <= 1.0);
        }
    }

    #[test]
    fn cox_rescaling(seed in 0u64..500, scale in 0.05f64..20.0) {
        let (r, _) = gen_survival_cohort(&[0.4, 0.3], 0.01, 300, 150.0, seed).unwrap();
        let names = vec!["group".to_string(), "x1".to_string()];
        let mut s = r.clone();
        for x in &mut s {
            x.covariates[1] *= scale;
        }
        let a = fit_cox(&names, &r).unwrap();
        let b = fit_cox(&names, &s).unwrap();
        prop_assert!((a.loglik - b.loglik).abs() < 1e-8);
        prop_assert!((a.coefficients[1].estimate - b.coefficients[1].estimate * scale).abs() < 1e-7);
        prop_assert!((a.coefficients[0].estimate - b.coefficients[0].estimate).abs() < 1e-7);
    }
}
