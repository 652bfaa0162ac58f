use std::collections::BTreeMap;

use rand::Rng;

use scenlib_core::density::ParamDensity;
use scenlib_core::generate::{is_estimate, min_tests_is, min_tests_naive, Method, SamplingPlan, TestBudget};
use scenlib_core::ontology::{ElementCategory, ParameterSpec, Scenario};
use scenlib_core::seed::rng;

/// P(X > a) for a standard normal, by Simpson's rule on [a, a + 40].
fn normal_tail(a: f64) -> f64 {
    let n = 200_000;
    let h = 40.0 / n as f64;
    let phi = |x: f64| (-0.5 * x * x).exp() / (2.0 * std::f64::consts::PI).sqrt();
    let inner: f64 = (1..n).map(|i| phi(a + i as f64 * h) * if i % 2 == 1 { 4.0 } else { 2.0 }).sum();
    (phi(a) + phi(a + 40.0) + inner) * h / 3.0
}

fn tail_plan(seed: u64, proposal_mean: f64) -> SamplingPlan {
    let logical = Scenario::logical("tail", [ParameterSpec::continuous("x", ElementCategory::EgoBasic, "-", -40.0, 40.0)]);
    let d = |m: f64| BTreeMap::from([("x".to_string(), ParamDensity::normal(m, 1.0).unwrap())]);
    SamplingPlan::new(logical, d(0.0), seed, 0).with_proposal(d(proposal_mean))
}

#[test]
fn importance_estimate_is_unbiased() {
    let oracle = normal_tail(3.0);
    let r = 200;
    let estimates: Vec<f64> = (0..r)
        .map(|k| {
            is_estimate(&tail_plan(1000 + k, 3.0), |s| s.number("x").unwrap() > 3.0, 2_000, Method::Importance)
                .unwrap()
                .gamma_hat
        })
        .collect();
    let mean = estimates.iter().sum::<f64>() / r as f64;
    let sd = (estimates.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (r - 1) as f64).sqrt();
    let se = sd / (r as f64).sqrt();
    assert!((mean - oracle).abs() < 4.0 * se, "mean {mean}, oracle {oracle}, se {se}");
}

#[test]
fn a_badly_placed_proposal_still_estimates_the_same_quantity() {
    // shifted past the event, with heavier weights; still unbiased
    let oracle = normal_tail(3.0);
    let est = is_estimate(&tail_plan(7, 4.5), |s| s.number("x").unwrap() > 3.0, 40_000, Method::Importance).unwrap();
    assert!((est.gamma_hat - oracle).abs() < 4.0 * est.std_error, "{est:?}");
}

#[test]
fn test_counts_agree_when_the_proposal_is_the_source() {
    let mut r = rng(11);
    for _ in 0..1000 {
        let b = TestBudget::new(r.random_range(1.0..=1000.0), r.random_range(1e-4..=0.9)).unwrap();
        assert_eq!(min_tests_is(b.gamma, &b).unwrap(), min_tests_naive(&b), "{b:?}");
    }
}

#[test]
fn test_count_examples() {
    let b = TestBudget::new(100.0, 0.01).unwrap();
    assert_eq!(min_tests_naive(&b), 9900);
    // E = 2 γ² needs z (2 - 1) = z tests
    assert_eq!(min_tests_is(2.0 * 0.01 * 0.01, &b).unwrap(), 100);
    assert!(min_tests_is(0.5 * 0.01 * 0.01, &b).is_err());
}
