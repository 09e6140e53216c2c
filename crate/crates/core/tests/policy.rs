mod common;

use proptest::prelude::*;
use stochoed::policy::{
    pmf, pmf_gradient, pmf_second_derivative, sample, score, score_total_variance,
};
use stochoed::rng::seeded;
use stochoed::{DesignVector, PolicyParameter};

fn interior(max_n: usize) -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.01f64..0.99, 1..=max_n)
}

fn all_designs(n: usize) -> impl Iterator<Item = DesignVector> {
    (1..=1u64 << n).map(move |k| DesignVector::from_index(k, n).unwrap())
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn pmf_sums_to_one(p in interior(12)) {
        let theta = PolicyParameter::new(p).unwrap();
        let total: f64 = all_designs(theta.nsens()).map(|d| pmf(&d, &theta).unwrap()).sum();
        prop_assert!((total - 1.0).abs() < 1e-12, "sum = {total}");
    }

    #[test]
    fn index_round_trip(n in 1usize..20, seed in any::<u64>()) {
        let k = 1 + seed % (1u64 << n);
        let d = DesignVector::from_index(k, n).unwrap();
        prop_assert_eq!(d.index(), Some(k));
        prop_assert_eq!(DesignVector::parse_bits(&d.bit_string()).unwrap(), d);
    }

    #[test]
    fn gradient_matches_finite_differences(p in interior(8), k in any::<u64>()) {
        let theta = PolicyParameter::new(p.clone()).unwrap();
        let n = theta.nsens();
        let d = DesignVector::from_index(1 + k % (1u64 << n), n).unwrap();
        let g = pmf_gradient(&d, &theta).unwrap();
        let h = 1e-6;
        for j in 0..n {
            let mut up = p.clone();
            let mut dn = p.clone();
            up[j] += h;
            dn[j] -= h;
            let fd = (pmf(&d, &PolicyParameter::new(up).unwrap()).unwrap()
                - pmf(&d, &PolicyParameter::new(dn).unwrap()).unwrap())
                / (2.0 * h);
            prop_assert!((fd - g[j]).abs() <= 1e-8 * (1.0 + g[j].abs()), "j={j} fd={fd} g={}", g[j]);
        }
    }

    #[test]
    fn second_derivative_matches_finite_differences(p in prop::collection::vec(0.05f64..0.95, 2..=6), k in any::<u64>()) {
        let theta = PolicyParameter::new(p.clone()).unwrap();
        let n = theta.nsens();
        let d = DesignVector::from_index(1 + k % (1u64 << n), n).unwrap();
        let h = 1e-5;
        for i in 0..n {
            for j in 0..n {
                let mut up = p.clone();
                let mut dn = p.clone();
                up[j] += h;
                dn[j] -= h;
                let fd = (pmf_gradient(&d, &PolicyParameter::new(up).unwrap()).unwrap()[i]
                    - pmf_gradient(&d, &PolicyParameter::new(dn).unwrap()).unwrap()[i])
                    / (2.0 * h);
                let exact = pmf_second_derivative(&d, &theta, i, j).unwrap();
                prop_assert!((fd - exact).abs() < 1e-8, "({i},{j}) fd={fd} exact={exact}");
            }
        }
    }

    #[test]
    fn score_is_gradient_over_pmf(p in interior(10), k in any::<u64>()) {
        let theta = PolicyParameter::new(p).unwrap();
        let n = theta.nsens();
        let d = DesignVector::from_index(1 + k % (1u64 << n), n).unwrap();
        let prob = pmf(&d, &theta).unwrap();
        for (s, g) in score(&d, &theta).unwrap().iter().zip(pmf_gradient(&d, &theta).unwrap()) {
            prop_assert!((s * prob - g).abs() <= 1e-12 * (1.0 + g.abs()));
        }
    }

    #[test]
    fn score_has_zero_mean_and_known_variance(p in interior(10)) {
        let theta = PolicyParameter::new(p).unwrap();
        let n = theta.nsens();
        let mut mean = vec![0.0; n];
        let mut second = 0.0;
        for d in all_designs(n) {
            let w = pmf(&d, &theta).unwrap();
            let s = score(&d, &theta).unwrap();
            for (m, v) in mean.iter_mut().zip(&s) {
                *m += w * v;
            }
            second += w * s.iter().map(|v| v * v).sum::<f64>();
        }
        prop_assert!(mean.iter().all(|m| m.abs() < 1e-12), "{mean:?}");
        let formula = score_total_variance(&theta).unwrap();
        prop_assert!((second - formula).abs() <= 1e-10 * formula.max(1.0), "{second} vs {formula}");
    }

    #[test]
    fn pmf_gradient_norm_bound(p in interior(10), k in any::<u64>()) {
        let theta = PolicyParameter::new(p.clone()).unwrap();
        let n = theta.nsens();
        let d = DesignVector::from_index(1 + k % (1u64 << n), n).unwrap();
        let factors: Vec<f64> = d.bits().iter().zip(&p).map(|(&b, &t)| if b { t } else { 1.0 - t }).collect();
        let bound = (0..n)
            .map(|j| {
                (0..n).filter(|&i| i != j).map(|i| factors[i]).fold(1.0f64, f64::min)
            })
            .fold(0.0f64, f64::max)
            * (n as f64).sqrt();
        let g = common::norm(&pmf_gradient(&d, &theta).unwrap());
        prop_assert!(g <= bound + 1e-15, "{g} > {bound}");
    }

    #[test]
    fn degenerate_components_are_copied(p in prop::collection::vec(prop::sample::select(vec![0.0, 1.0, 0.3, 0.8]), 1..12), seed in any::<u64>()) {
        let theta = PolicyParameter::new(p.clone()).unwrap();
        for d in sample(&theta, 50, &mut seeded(seed)).unwrap() {
            for (i, &t) in p.iter().enumerate() {
                if t == 0.0 {
                    prop_assert_eq!(d.bit(i), 0);
                }
                if t == 1.0 {
                    prop_assert_eq!(d.bit(i), 1);
                }
            }
            prop_assert!(pmf(&d, &theta).unwrap() > 0.0);
        }
    }
}

#[test]
fn sampled_score_mean_is_zero() {
    let theta = PolicyParameter::new(vec![0.3, 0.7]).unwrap();
    let n = 100_000;
    let draws = sample(&theta, n, &mut seeded(11)).unwrap();
    for i in 0..2 {
        let s: Vec<f64> = draws.iter().map(|d| score(d, &theta).unwrap()[i]).collect();
        let mean = s.iter().sum::<f64>() / n as f64;
        let var = s.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
        let se = (var / n as f64).sqrt();
        assert!(mean.abs() < 4.0 * se, "component {i}: mean {mean}, se {se}");
    }
}

#[test]
fn sampled_score_variance_matches_formula() {
    let theta = PolicyParameter::new(vec![0.4, 0.6]).unwrap();
    let n = 100_000;
    let draws = sample(&theta, n, &mut seeded(12)).unwrap();
    let scores: Vec<Vec<f64>> = draws.iter().map(|d| score(d, &theta).unwrap()).collect();
    let mut trace = 0.0;
    for i in 0..2 {
        let mean = scores.iter().map(|s| s[i]).sum::<f64>() / n as f64;
        trace += scores.iter().map(|s| (s[i] - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    }
    let formula = score_total_variance(&theta).unwrap();
    assert!(((trace - formula) / formula).abs() < 0.05, "{trace} vs {formula}");
}

#[test]
fn sample_frequencies_match_probabilities() {
    let theta = PolicyParameter::new(vec![0.1, 0.5, 0.85]).unwrap();
    let n = 100_000;
    let draws = sample(&theta, n, &mut seeded(3)).unwrap();
    for (i, &p) in theta.probs().iter().enumerate() {
        let freq = draws.iter().filter(|d| d.bit(i) == 1).count() as f64 / n as f64;
        let se = (p * (1.0 - p) / n as f64).sqrt();
        assert!((freq - p).abs() < 4.0 * se, "sensor {i}: {freq} vs {p}");
    }
}
