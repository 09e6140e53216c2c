mod common;

use std::sync::Arc;

use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use stochoed::models::toy_problem;
use stochoed::oracle::DEFAULT_GUARD;
use stochoed::rng::seeded;
use stochoed::{
    brute_force, optimize, BaselineMode, Criterion, DesignObjective, ExactOracle, ObjectiveSpec,
    OptimizerConfig, ProjectionMode, StepSchedule, StopReason, StopRule,
};

fn toy(criterion: Criterion) -> DesignObjective {
    DesignObjective::new(Arc::new(toy_problem()), ObjectiveSpec::new(criterion)).unwrap()
}

#[test]
fn toy_reaches_brute_force_minimum() {
    let obj = toy(Criterion::AOptimal);
    let table = brute_force(&obj, DEFAULT_GUARD).unwrap();
    let run = optimize(&obj, &OptimizerConfig::default(), &mut seeded(0), None).unwrap();
    assert_eq!(run.best_value, table.min_value());
    assert_eq!(run.best_design, "11");
}

// A single noisy run can be absorbed at the wrong vertex, so only the
// success rate over seeds is checked here.
#[test]
fn toy_success_rate_over_seeds() {
    for (criterion, needed) in [
        (Criterion::PaperToyClosedForm, 80),
        (Criterion::AOptimal, 85),
        (Criterion::DOptimal, 95),
    ] {
        let obj = toy(criterion);
        let min = brute_force(&obj, DEFAULT_GUARD).unwrap().min_value();
        let hits = (0..100)
            .filter(|&s| optimize(&obj, &OptimizerConfig::default(), &mut seeded(s), None).unwrap().best_value == min)
            .count();
        assert!(hits >= needed, "{criterion:?}: {hits}/100");
    }
}

#[test]
fn baseline_modes_on_toy() {
    let obj = toy(Criterion::DOptimal);
    let min = brute_force(&obj, DEFAULT_GUARD).unwrap().min_value();
    for mode in [BaselineMode::None, BaselineMode::Empirical, BaselineMode::Optimal] {
        let cfg = OptimizerConfig {
            baseline_mode: mode,
            ..Default::default()
        };
        let hits = (0..40)
            .filter(|&s| optimize(&obj, &cfg, &mut seeded(s), None).unwrap().best_value == min)
            .count();
        assert!(hits >= 20, "{mode:?}: {hits}/40");
    }
}

#[test]
fn same_seed_same_trace() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let p = Arc::new(common::random_problem(6, &mut rng));
    let trace = |seed: u64| {
        let obj = DesignObjective::new(p.clone(), ObjectiveSpec::new(Criterion::AOptimal).with_l0(0.05)).unwrap();
        let run = optimize(&obj, &OptimizerConfig::default(), &mut seeded(seed), None).unwrap();
        let mut out = Vec::new();
        run.write_trace_csv(&mut out).unwrap();
        run.write_samples_csv(&mut out).unwrap();
        out
    };
    assert_eq!(trace(3), trace(3));
    assert_ne!(trace(3), trace(4));
}

#[test]
fn trace_layout() {
    let run = optimize(&toy(Criterion::AOptimal), &OptimizerConfig::default(), &mut seeded(0), None).unwrap();
    let mut out = Vec::new();
    run.write_trace_csv(&mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next().unwrap(), "n,theta_1,theta_2,obj_estimate,exact_obj,grad_norm,new_evals,baseline");
    let first: Vec<&str> = lines.next().unwrap().split(',').collect();
    assert_eq!(first.len(), 8);
    assert_eq!(&first[..3], &["1", "0.5", "0.5"]);
    assert_eq!(first[4], "");
}

#[test]
fn exact_stop_rule_halts_at_vertex() {
    let obj = toy(Criterion::PaperToyClosedForm);
    let oracle = ExactOracle::from_objective(&obj, DEFAULT_GUARD).unwrap();
    let cfg = OptimizerConfig {
        stop_rule: StopRule::Exact,
        max_iters: 200,
        ..Default::default()
    };
    let run = optimize(&obj, &cfg, &mut seeded(2), Some(&oracle)).unwrap();
    assert_eq!(run.stop_reason, StopReason::ProjectedGradient);
    assert_eq!(run.final_theta, vec![0.0, 0.0]);
    assert!(run.iterations.iter().all(|r| r.exact_objective.is_some()));
}

#[test]
fn accounting_adds_up() {
    let obj = toy(Criterion::AOptimal);
    let cfg = OptimizerConfig {
        baseline_mode: BaselineMode::Empirical,
        ..Default::default()
    };
    let run = optimize(&obj, &cfg, &mut seeded(5), None).unwrap();
    assert_eq!(run.setup_evaluations, 2);
    assert_eq!(run.total_new_evaluations(), obj.cache().new_evaluations());
    assert!(run.total_new_evaluations() <= 4);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn iterates_stay_in_box(seed in any::<u64>(), eta in 0.05f64..5.0, metric in any::<bool>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let obj = common::table_objective(5, common::random_table(5, &mut rng));
        let cfg = OptimizerConfig {
            step: StepSchedule::Constant { eta },
            projection: if metric { ProjectionMode::Metric } else { ProjectionMode::Truncation },
            max_iters: 15,
            ..Default::default()
        };
        let run = optimize(&obj, &cfg, &mut seeded(seed), None).unwrap();
        for r in &run.iterations {
            prop_assert!(r.theta.iter().all(|t| (0.0..=1.0).contains(t)));
        }
        prop_assert!(run.final_theta.iter().all(|t| (0.0..=1.0).contains(t)));
        let min = run.samples.iter().map(|s| s.value).fold(f64::INFINITY, f64::min);
        prop_assert_eq!(run.best_value, min);
    }
}
