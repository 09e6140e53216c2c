use std::sync::Arc;

use serde::Serialize;
use serde_json::{json, Value};
use stochoed::container::write_problem;
use stochoed::models::AdModel;
use stochoed::objective::relaxed_value;
use stochoed::optimizer::estimate_gradient;
use stochoed::rng::{seeded, PolicyRng};
use stochoed::{
    brute_force, optimize, BaselineMode, DesignObjective, DesignVector, ExactOracle, InverseProblem,
    Objective, OptimizerConfig, PolicyParameter, StopReason, StopRule,
};

use crate::config::{ExperimentConfig, ProblemKind};
use crate::error::CliError;
use crate::output::OutputDir;

#[derive(Debug, Serialize)]
struct RunSummary<'a> {
    seed: u64,
    config: &'a ExperimentConfig,
    stop_reason: StopReason,
    iterations: usize,
    total_evaluations: u64,
    new_evaluations: u64,
    best_design: &'a str,
    best_index: Option<u64>,
    best_value: f64,
    final_theta: &'a [f64],
}

fn objective(cfg: &ExperimentConfig, problem: &Arc<InverseProblem>) -> Result<DesignObjective, CliError> {
    Ok(DesignObjective::new(problem.clone(), cfg.objective)?)
}

/// Oracle built on its own objective so its enumeration does not show up
/// in the optimizer's evaluation counts.
fn oracle(cfg: &ExperimentConfig, problem: &Arc<InverseProblem>) -> Result<ExactOracle, CliError> {
    Ok(ExactOracle::from_objective(&objective(cfg, problem)?, cfg.oracle.guard)?)
}

fn csv_f64(v: f64) -> String {
    format!("{v:?}")
}

pub fn run(cfg: &ExperimentConfig) -> Result<Value, CliError> {
    let problem = cfg.build_problem()?;
    let obj = objective(cfg, &problem)?;
    let exact = if cfg.oracle.exact_objective || cfg.optimizer.stop_rule == StopRule::Exact {
        Some(oracle(cfg, &problem)?)
    } else {
        None
    };
    let record = optimize(&obj, &cfg.optimizer, &mut seeded(cfg.optimizer.seed), exact.as_ref())?;

    let mut out = OutputDir::create(&cfg.outputs.dir)?;
    out.write("trace.csv", |w| Ok(record.write_trace_csv(w)?))?;
    out.write("samples.csv", |w| Ok(record.write_samples_csv(w)?))?;
    let summary = RunSummary {
        seed: cfg.optimizer.seed,
        config: cfg,
        stop_reason: record.stop_reason,
        iterations: record.iterations.len(),
        total_evaluations: obj.cache().lookups(),
        new_evaluations: record.total_new_evaluations(),
        best_design: &record.best_design,
        best_index: record.best_index,
        best_value: record.best_value,
        final_theta: &record.final_theta,
    };
    out.write_json("summary.json", &summary)?;
    Ok(json!({
        "command": "run",
        "best_design": record.best_design,
        "best_value": record.best_value,
        "stop_reason": record.stop_reason,
        "outputs": out.written(),
    }))
}

pub fn brute(cfg: &ExperimentConfig) -> Result<Value, CliError> {
    let problem = cfg.build_problem()?;
    let obj = objective(cfg, &problem)?;
    let table = brute_force(&obj, cfg.oracle.guard)?;
    let argmin: Vec<Value> = table
        .argmin_designs()
        .iter()
        .map(|d| json!({ "index": d.index(), "bits": d.bit_string(), "active_count": d.active_count() }))
        .collect();
    let optimum = json!({
        "nsens": table.nsens(),
        "designs": table.len(),
        "objective": cfg.objective,
        "min_value": table.min_value(),
        "argmin": argmin,
    });
    let mut out = OutputDir::create(&cfg.outputs.dir)?;
    out.write("designs.csv", |w| Ok(table.write_csv(w)?))?;
    out.write_json("optimum.json", &optimum)?;
    Ok(json!({ "command": "brute-force", "optimum": optimum, "outputs": out.written() }))
}

fn linspace(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64 / (n - 1) as f64).collect()
}

/// Relaxed objective and exact expectation on a lattice covering `[0, 1]^2`.
pub fn surface(cfg: &ExperimentConfig) -> Result<Value, CliError> {
    let problem = cfg.build_problem()?;
    if problem.nsens() != 2 {
        return Err(CliError::Config(format!(
            "surface needs a two-sensor problem, this one has {}",
            problem.nsens()
        )));
    }
    let exact = oracle(cfg, &problem)?;
    let grid = linspace(cfg.surface.grid_n);
    let mut rows = Vec::with_capacity(grid.len() * grid.len());
    for &t1 in &grid {
        for &t2 in &grid {
            let relaxed = relaxed_value(&problem, &cfg.objective, &[t1, t2])?;
            let expected = exact.objective(&PolicyParameter::new(vec![t1, t2])?)?;
            rows.push([t1, t2, relaxed, expected]);
        }
    }
    let mut out = OutputDir::create(&cfg.outputs.dir)?;
    out.write("surface.csv", |w| {
        writeln!(w, "theta_1,theta_2,J_relaxed,J_expected")?;
        for r in &rows {
            let cells: Vec<String> = r.iter().map(|&v| csv_f64(v)).collect();
            writeln!(w, "{}", cells.join(","))?;
        }
        Ok(())
    })?;
    Ok(json!({ "command": "surface", "points": rows.len(), "outputs": out.written() }))
}

struct Moments {
    mean: Vec<f64>,
    total_variance: f64,
    mean_baseline: f64,
}

fn estimator_moments<O: Objective>(
    obj: &O,
    theta: &PolicyParameter,
    mode: BaselineMode,
    replicates: usize,
    base: &OptimizerConfig,
    rng: &mut PolicyRng,
) -> Result<Moments, CliError> {
    let config = OptimizerConfig {
        baseline_mode: mode,
        ..base.clone()
    };
    let n = theta.nsens();
    let mut draws = Vec::with_capacity(replicates);
    let mut baseline_sum = 0.0;
    for _ in 0..replicates {
        let est = estimate_gradient(obj, theta, &config, rng)?;
        baseline_sum += est.baseline;
        draws.push(est.gradient);
    }
    let r = replicates as f64;
    let mean: Vec<f64> = (0..n).map(|i| draws.iter().map(|g| g[i]).sum::<f64>() / r).collect();
    let total_variance = if replicates > 1 {
        (0..n)
            .map(|i| draws.iter().map(|g| (g[i] - mean[i]).powi(2)).sum::<f64>() / (r - 1.0))
            .sum()
    } else {
        0.0
    };
    Ok(Moments {
        mean,
        total_variance,
        mean_baseline: baseline_sum / r,
    })
}

/// Exact gradient and an estimator's sample mean and total variance on an
/// interior lattice over the first two components. Remaining components
/// are held at `fixed_theta`.
pub fn gradient_check(cfg: &ExperimentConfig) -> Result<Value, CliError> {
    let gc = cfg.gradient_check;
    let problem = cfg.build_problem()?;
    let n = problem.nsens();
    if n < 2 {
        return Err(CliError::Config("gradient-check needs at least two sensors".into()));
    }
    let exact = oracle(cfg, &problem)?;
    let obj = objective(cfg, &problem)?;
    let grid: Vec<f64> = (1..=gc.grid_n).map(|k| k as f64 / (gc.grid_n + 1) as f64).collect();
    let mut rng = seeded(cfg.optimizer.seed);

    let mut header: Vec<String> = vec!["theta_1".into(), "theta_2".into()];
    header.extend((1..=n).map(|i| format!("exact_{i}")));
    header.extend((1..=n).map(|i| format!("mean_{i}")));
    header.extend(["total_variance", "replicates", "flag"].map(String::from));

    let mut lines = Vec::new();
    let mut variance_sum = 0.0;
    for &t1 in &grid {
        for &t2 in &grid {
            let mut probs = vec![gc.fixed_theta; n];
            probs[0] = t1;
            probs[1] = t2;
            let theta = PolicyParameter::new(probs)?;
            let g = exact.gradient(&theta)?;
            let (mean, variance, replicates) = match gc.estimator.baseline() {
                None => (g.clone(), 0.0, 0),
                Some(mode) => {
                    let m = estimator_moments(&obj, &theta, mode, gc.replicates, &cfg.optimizer, &mut rng)?;
                    (m.mean, m.total_variance, gc.replicates)
                }
            };
            variance_sum += variance;
            let flag = if replicates == 1 { "single_replicate" } else { "" };
            let mut cells = vec![csv_f64(t1), csv_f64(t2)];
            cells.extend(g.iter().map(|&v| csv_f64(v)));
            cells.extend(mean.iter().map(|&v| csv_f64(v)));
            cells.push(csv_f64(variance));
            cells.push(replicates.to_string());
            cells.push(flag.into());
            lines.push(cells.join(","));
        }
    }
    let name = format!("gradient_{}.csv", gc.estimator.name());
    let mut out = OutputDir::create(&cfg.outputs.dir)?;
    out.write(&name, |w| {
        writeln!(w, "{}", header.join(","))?;
        for l in &lines {
            writeln!(w, "{l}")?;
        }
        Ok(())
    })?;
    Ok(json!({
        "command": "gradient-check",
        "estimator": gc.estimator,
        "points": lines.len(),
        "mean_total_variance": variance_sum / lines.len() as f64,
        "outputs": out.written(),
    }))
}

/// Variance of the gradient estimator with each baseline at one policy.
pub fn baseline_study(cfg: &ExperimentConfig) -> Result<Value, CliError> {
    let bs = &cfg.baseline_study;
    let problem = cfg.build_problem()?;
    let n = problem.nsens();
    let theta = match &bs.theta {
        Some(t) if t.len() != n => {
            return Err(CliError::Config(format!("baseline_study.theta has {} entries, expected {n}", t.len())))
        }
        Some(t) => PolicyParameter::new(t.clone())?,
        None => PolicyParameter::uniform(n, 0.5)?,
    };
    let exact = if n <= cfg.oracle.guard {
        Some(oracle(cfg, &problem)?.gradient(&theta)?)
    } else {
        None
    };
    let obj = objective(cfg, &problem)?;
    let mut rng = seeded(cfg.optimizer.seed);
    let mut rows = Vec::new();
    for (label, mode) in [
        ("plain", BaselineMode::None),
        ("empirical", BaselineMode::Empirical),
        ("optimal", BaselineMode::Optimal),
    ] {
        let m = estimator_moments(&obj, &theta, mode, bs.replicates, &cfg.optimizer, &mut rng)?;
        let bias = exact.as_ref().map(|g| {
            g.iter()
                .zip(&m.mean)
                .map(|(a, b)| (a - b).powi(2))
                .sum::<f64>()
                .sqrt()
        });
        rows.push((label, m, bias));
    }
    let plain = rows[0].1.total_variance;
    let mut out = OutputDir::create(&cfg.outputs.dir)?;
    out.write("baseline_study.csv", |w| {
        writeln!(w, "mode,replicates,total_variance,variance_ratio,mean_baseline,bias_norm")?;
        for (label, m, bias) in &rows {
            let ratio = if plain > 0.0 { m.total_variance / plain } else { f64::NAN };
            writeln!(
                w,
                "{label},{},{},{},{},{}",
                bs.replicates,
                csv_f64(m.total_variance),
                csv_f64(ratio),
                csv_f64(m.mean_baseline),
                bias.map(csv_f64).unwrap_or_default()
            )?;
        }
        Ok(())
    })?;
    let table: Vec<Value> = rows
        .iter()
        .map(|(label, m, _)| json!({ "mode": label, "total_variance": m.total_variance }))
        .collect();
    Ok(json!({ "command": "baseline-study", "modes": table, "outputs": out.written() }))
}

/// Build the configured problem and export it in the container format.
pub fn assemble(cfg: &ExperimentConfig) -> Result<Value, CliError> {
    let problem = cfg.build_problem()?;
    let sensors = match cfg.problem.kind {
        ProblemKind::AdvectionDiffusion => {
            let model = AdModel::new(cfg.problem.model.clone())?;
            Some(json!({
                "coordinates": cfg.problem.model.sensors,
                "cells": model.sensor_nodes(),
                "observation_times": cfg.problem.model.observation_times(),
            }))
        }
        _ => None,
    };
    let info = json!({
        "nsens": problem.nsens(),
        "nobs": problem.nobs(),
        "nstate": problem.nstate(),
        "sensors": sensors,
        "empty_design_trace": problem.prior_cov().trace(),
        "full_design_trace": problem.posterior_covariance(&DesignVector::ones(problem.nsens()))?.trace(),
    });
    let mut out = OutputDir::create(&cfg.outputs.dir)?;
    out.write("problem.txt", |w| Ok(write_problem(&problem, w)?))?;
    out.write_json("problem.json", &info)?;
    Ok(json!({ "command": "assemble", "problem": info, "outputs": out.written() }))
}
