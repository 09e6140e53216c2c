//! Projected stochastic gradient descent over the Bernoulli policy.
//!
//! Each iteration samples a batch of designs from the current policy,
//! forms the score-function estimate of the gradient of the expected
//! objective (optionally shifted by a baseline), takes a step and projects
//! back onto the unit box. After the loop a handful of designs is drawn from
//! the final policy and the best one is returned.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::objective::Objective;
use crate::oracle::ExactOracle;
use crate::policy::{
    interior_score_variance, sample, score, DesignVector, PolicyParameter,
};
use crate::rng::PolicyRng;

/// Components this close to 0 or 1 are treated as degenerate.
pub const SNAP_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProjectionMode {
    #[default]
    Truncation,
    Metric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StepSchedule {
    Constant { eta: f64 },
    /// `eta0 / n` at iteration `n`.
    RobbinsMonro { eta0: f64 },
}

impl Default for StepSchedule {
    fn default() -> Self {
        StepSchedule::Constant { eta: 0.25 }
    }
}

impl StepSchedule {
    pub fn eta(&self, iteration: usize) -> f64 {
        match *self {
            StepSchedule::Constant { eta } => eta,
            StepSchedule::RobbinsMonro { eta0 } => eta0 / iteration as f64,
        }
    }

    fn initial(&self) -> f64 {
        match *self {
            StepSchedule::Constant { eta } => eta,
            StepSchedule::RobbinsMonro { eta0 } => eta0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BaselineMode {
    None,
    /// Average of the all-off and all-on objective values.
    Empirical,
    #[default]
    Optimal,
}

/// Which gradient drives the projected-gradient stopping test.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopRule {
    #[default]
    Stochastic,
    /// Enumerated gradient; needs an attached oracle.
    Exact,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Initial activation probabilities; all 0.5 when absent.
    pub theta0: Option<Vec<f64>>,
    pub step: StepSchedule,
    pub ens_size: usize,
    pub baseline_mode: BaselineMode,
    pub baseline_batches: usize,
    pub final_samples: usize,
    pub pgtol: f64,
    pub max_iters: usize,
    pub seed: u64,
    pub projection: ProjectionMode,
    pub stop_rule: StopRule,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            theta0: None,
            step: StepSchedule::default(),
            ens_size: 32,
            baseline_mode: BaselineMode::Optimal,
            baseline_batches: 10,
            final_samples: 10,
            pgtol: 1e-8,
            max_iters: 20,
            seed: 0,
            projection: ProjectionMode::Truncation,
            stop_rule: StopRule::Stochastic,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_owned()));
        if self.ens_size == 0 {
            return bad("ens_size must be >= 1");
        }
        if self.baseline_batches == 0 {
            return bad("baseline_batches must be >= 1");
        }
        if self.final_samples == 0 {
            return bad("final_samples must be >= 1");
        }
        if !(self.pgtol > 0.0) {
            return bad("pgtol must be positive");
        }
        if self.max_iters == 0 {
            return bad("max_iters must be >= 1");
        }
        let eta = self.step.initial();
        if !(eta > 0.0 && eta.is_finite()) {
            return bad("step size must be positive");
        }
        if let Some(t) = &self.theta0 {
            PolicyParameter::new(t.clone())?;
        }
        Ok(())
    }

    pub fn initial_policy(&self, nsens: usize) -> Result<PolicyParameter> {
        match &self.theta0 {
            Some(t) if t.len() != nsens => Err(Error::DimensionMismatch {
                what: "initial policy",
                expected: nsens,
                got: t.len(),
            }),
            Some(t) => PolicyParameter::new(t.clone()),
            None => PolicyParameter::uniform(nsens, 0.5),
        }
    }
}

/// Project onto `[0, 1]^n`. Truncation clamps each component; the metric
/// projection picks the nearest feasible point per coordinate. For a box
/// the two coincide.
pub fn project(theta: &[f64], mode: ProjectionMode) -> PolicyParameter {
    let probs = match mode {
        ProjectionMode::Truncation => theta.iter().map(|&t| 1f64.min(0f64.max(t))).collect(),
        ProjectionMode::Metric => theta
            .iter()
            .map(|&t| {
                if t.is_nan() {
                    return 0.0;
                }
                let mut best = 0.0;
                for candidate in [1.0, t] {
                    if (0.0..=1.0).contains(&candidate) && (candidate - t).abs() < (best - t).abs() {
                        best = candidate;
                    }
                }
                best
            })
            .collect(),
    };
    PolicyParameter::new(probs).expect("projection lands in the unit box")
}

/// `(1/N) sum_j (J(xi_j) - b) score(xi_j, theta)`.
pub fn stochastic_gradient(
    theta: &PolicyParameter,
    designs: &[DesignVector],
    values: &[f64],
    baseline: f64,
) -> Result<Vec<f64>> {
    if designs.is_empty() {
        return Err(Error::InvalidParameter("empty gradient batch".into()));
    }
    if designs.len() != values.len() {
        return Err(Error::DimensionMismatch {
            what: "batch values",
            expected: designs.len(),
            got: values.len(),
        });
    }
    let mut grad = vec![0.0; theta.nsens()];
    for (design, &value) in designs.iter().zip(values) {
        let shifted = value - baseline;
        for (g, s) in grad.iter_mut().zip(score(design, theta)?) {
            *g += shifted * s;
        }
    }
    let n = designs.len() as f64;
    grad.iter_mut().for_each(|g| *g /= n);
    Ok(grad)
}

/// `(J(all off) + J(all on)) / 2`.
pub fn empirical_baseline<O: Objective + ?Sized>(objective: &O) -> Result<f64> {
    let n = objective.nsens();
    let off = objective.evaluate(&DesignVector::zeros(n))?;
    let on = objective.evaluate(&DesignVector::ones(n))?;
    Ok(0.5 * (off + on))
}

/// Batched estimate of the variance-minimizing baseline,
/// `Nens / (b_m * V) * sum_e g_e . d_e`, where `g_e` and `d_e` are the
/// batch means of `J * score` and `score` and `V = sum_i 1/(theta_i - theta_i^2)`
/// over the interior components.
pub fn optimal_baseline<O: Objective + ?Sized>(
    theta: &PolicyParameter,
    ens_size: usize,
    batches: usize,
    rng: &mut PolicyRng,
    objective: &O,
) -> Result<f64> {
    if ens_size == 0 || batches == 0 {
        return Err(Error::InvalidParameter(
            "baseline needs at least one batch of one design".into(),
        ));
    }
    let Some(variance) = interior_score_variance(theta) else {
        return Ok(0.0);
    };
    let n = theta.nsens();
    let mut accum = 0.0;
    for _ in 0..batches {
        let designs = sample(theta, ens_size, rng)?;
        let values = objective.evaluate_batch(&designs)?;
        let mut g = vec![0.0; n];
        let mut d = vec![0.0; n];
        for (design, &value) in designs.iter().zip(&values) {
            for (i, s) in score(design, theta)?.into_iter().enumerate() {
                g[i] += value * s;
                d[i] += s;
            }
        }
        let scale = 1.0 / ens_size as f64;
        accum += g.iter().zip(&d).map(|(a, b)| a * scale * b * scale).sum::<f64>();
    }
    Ok(accum * ens_size as f64 / (batches as f64 * variance))
}

/// One draw of the gradient estimator.
#[derive(Debug, Clone, PartialEq)]
pub struct GradientEstimate {
    pub gradient: Vec<f64>,
    pub baseline: f64,
    /// Objective values of the gradient batch.
    pub values: Vec<f64>,
}

/// Draw a batch of `ens_size` designs and form the gradient estimate with
/// the configured baseline. The optimal baseline uses its own batches,
/// drawn after the gradient batch, so it is independent of it.
pub fn estimate_gradient<O: Objective + ?Sized>(
    objective: &O,
    theta: &PolicyParameter,
    config: &OptimizerConfig,
    rng: &mut PolicyRng,
) -> Result<GradientEstimate> {
    let designs = sample(theta, config.ens_size, rng)?;
    let values = objective.evaluate_batch(&designs)?;
    let baseline = match config.baseline_mode {
        BaselineMode::None => 0.0,
        BaselineMode::Empirical => empirical_baseline(objective)?,
        BaselineMode::Optimal => {
            optimal_baseline(theta, config.ens_size, config.baseline_batches, rng, objective)?
        }
    };
    let gradient = stochastic_gradient(theta, &designs, &values, baseline)?;
    Ok(GradientEstimate {
        gradient,
        baseline,
        values,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    ProjectedGradient,
    MaxIterations,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// One-based iteration number.
    pub iteration: usize,
    /// Policy at which the batch was drawn.
    pub theta: Vec<f64>,
    /// Batch mean of the objective.
    pub objective_estimate: f64,
    /// Enumerated expected objective at `theta`, when an oracle is attached.
    pub exact_objective: Option<f64>,
    pub gradient_norm: f64,
    pub projected_gradient_norm: f64,
    pub step_size: f64,
    /// Distinct designs first evaluated during this iteration.
    pub new_evaluations: u64,
    pub baseline: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub design: String,
    pub index: Option<u64>,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub nsens: usize,
    pub iterations: Vec<IterationRecord>,
    pub final_theta: Vec<f64>,
    pub samples: Vec<SampleRecord>,
    pub best_design: String,
    pub best_index: Option<u64>,
    pub best_value: f64,
    pub stop_reason: StopReason,
    /// New evaluations before the first iteration (empirical baseline).
    pub setup_evaluations: u64,
    /// New evaluations while sampling the final policy.
    pub final_evaluations: u64,
}

impl RunRecord {
    pub fn best(&self) -> DesignVector {
        DesignVector::parse_bits(&self.best_design).expect("stored as a bit string")
    }

    pub fn total_new_evaluations(&self) -> u64 {
        self.setup_evaluations
            + self.final_evaluations
            + self.iterations.iter().map(|r| r.new_evaluations).sum::<u64>()
    }

    /// Header and one row per iteration.
    pub fn write_trace_csv<W: Write>(&self, mut out: W) -> Result<()> {
        let thetas: Vec<String> = (1..=self.nsens).map(|i| format!("theta_{i}")).collect();
        writeln!(
            out,
            "n,{},obj_estimate,exact_obj,grad_norm,new_evals,baseline",
            thetas.join(",")
        )?;
        for r in &self.iterations {
            let theta: Vec<String> = r.theta.iter().map(|t| format!("{t:?}")).collect();
            let exact = r.exact_objective.map(|v| format!("{v:?}")).unwrap_or_default();
            writeln!(
                out,
                "{},{},{:?},{},{:?},{},{:?}",
                r.iteration,
                theta.join(","),
                r.objective_estimate,
                exact,
                r.gradient_norm,
                r.new_evaluations,
                r.baseline
            )?;
        }
        Ok(())
    }

    pub fn write_samples_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "bits,J")?;
        for s in &self.samples {
            writeln!(out, "{},{:?}", s.design, s.value)?;
        }
        Ok(())
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

fn projected_gradient_norm(
    theta: &PolicyParameter,
    grad: &[f64],
    eta: f64,
    mode: ProjectionMode,
) -> (PolicyParameter, f64) {
    let stepped: Vec<f64> = theta
        .probs()
        .iter()
        .zip(grad)
        .map(|(t, g)| t - eta * g)
        .collect();
    let next = project(&stepped, mode).snapped(SNAP_TOLERANCE);
    let moved: Vec<f64> = next
        .probs()
        .iter()
        .zip(theta.probs())
        .map(|(a, b)| a - b)
        .collect();
    let pg = norm(&moved) / eta;
    (next, pg)
}

/// Run the projected stochastic gradient loop and pick a design from the
/// final policy.
pub fn optimize<O: Objective + ?Sized>(
    objective: &O,
    config: &OptimizerConfig,
    rng: &mut PolicyRng,
    oracle: Option<&ExactOracle>,
) -> Result<RunRecord> {
    config.validate()?;
    let nsens = objective.nsens();
    if config.stop_rule == StopRule::Exact && oracle.is_none() {
        return Err(Error::Config("exact stopping rule needs an enumeration oracle".into()));
    }
    if let Some(o) = oracle {
        if o.nsens() != nsens {
            return Err(Error::DimensionMismatch {
                what: "oracle vs objective",
                expected: nsens,
                got: o.nsens(),
            });
        }
    }

    let mut theta = config.initial_policy(nsens)?.snapped(SNAP_TOLERANCE);
    let start = objective.new_evaluations();
    if config.baseline_mode == BaselineMode::Empirical {
        empirical_baseline(objective)?;
    }
    let setup_evaluations = objective.new_evaluations() - start;

    let mut iterations = Vec::new();
    let mut stop_reason = StopReason::MaxIterations;
    for n in 1..=config.max_iters {
        let before = objective.new_evaluations();
        let GradientEstimate {
            gradient: grad,
            baseline,
            values,
        } = estimate_gradient(objective, &theta, config, rng)?;
        let eta = config.step.eta(n);
        let (next, stochastic_pg) = projected_gradient_norm(&theta, &grad, eta, config.projection);
        let pg = match (config.stop_rule, oracle) {
            (StopRule::Exact, Some(o)) => {
                projected_gradient_norm(&theta, &o.gradient(&theta)?, eta, config.projection).1
            }
            _ => stochastic_pg,
        };
        let exact_objective = oracle.map(|o| o.objective(&theta)).transpose()?;

        iterations.push(IterationRecord {
            iteration: n,
            theta: theta.probs().to_vec(),
            objective_estimate: values.iter().sum::<f64>() / values.len() as f64,
            exact_objective,
            gradient_norm: norm(&grad),
            projected_gradient_norm: pg,
            step_size: eta,
            new_evaluations: objective.new_evaluations() - before,
            baseline,
        });
        theta = next;
        if pg <= config.pgtol {
            stop_reason = StopReason::ProjectedGradient;
            break;
        }
    }

    let before = objective.new_evaluations();
    let finals = sample(&theta, config.final_samples, rng)?;
    let values = objective.evaluate_batch(&finals)?;
    let final_evaluations = objective.new_evaluations() - before;

    let mut best: Option<(usize, f64)> = None;
    for (j, (design, &value)) in finals.iter().zip(&values).enumerate() {
        let better = match best {
            None => true,
            Some((b, bv)) => value < bv || (value == bv && design.key() < finals[b].key()),
        };
        if better {
            best = Some((j, value));
        }
    }
    let (best_j, best_value) = best.expect("at least one final sample");
    let samples = finals
        .iter()
        .zip(&values)
        .map(|(d, &value)| SampleRecord {
            design: d.bit_string(),
            index: d.index(),
            value,
        })
        .collect();

    Ok(RunRecord {
        nsens,
        iterations,
        final_theta: theta.probs().to_vec(),
        samples,
        best_design: finals[best_j].bit_string(),
        best_index: finals[best_j].index(),
        best_value,
        stop_reason,
        setup_evaluations,
        final_evaluations,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::FnObjective;
    use crate::rng::seeded;

    fn th(p: &[f64]) -> PolicyParameter {
        PolicyParameter::new(p.to_vec()).unwrap()
    }

    #[test]
    fn projection_examples() {
        for mode in [ProjectionMode::Truncation, ProjectionMode::Metric] {
            assert_eq!(project(&[1.2, -0.1], mode).probs(), &[1.0, 0.0]);
            assert_eq!(project(&[0.3, 0.0, 1.0], mode).probs(), &[0.3, 0.0, 1.0]);
            assert_eq!(project(&[f64::NAN], mode).probs(), &[0.0]);
        }
    }

    #[test]
    fn constant_objective_with_matching_baseline_is_flat() {
        let theta = th(&[0.2, 0.5, 0.9]);
        let designs = sample(&theta, 20, &mut seeded(1)).unwrap();
        let values = vec![4.0; 20];
        let g = stochastic_gradient(&theta, &designs, &values, 4.0).unwrap();
        assert!(g.iter().all(|&v| v == 0.0));
        assert!(stochastic_gradient(&theta, &[], &[], 0.0).is_err());
    }

    #[test]
    fn degenerate_components_contribute_nothing() {
        let theta = th(&[1.0, 0.5]);
        let designs = vec![
            DesignVector::from_bits(vec![true, true]),
            DesignVector::from_bits(vec![true, false]),
        ];
        let g = stochastic_gradient(&theta, &designs, &[3.0, 1.0], 0.0).unwrap();
        assert_eq!(g[0], 0.0);
        assert_eq!(g[1], (3.0 * 2.0 + 1.0 * -2.0) / 2.0);
    }

    #[test]
    fn empirical_baseline_of_constant() {
        let obj = FnObjective::new(4, |_| 2.5);
        assert_eq!(empirical_baseline(&obj).unwrap(), 2.5);
    }

    #[test]
    fn optimal_baseline_edge_cases() {
        let obj = FnObjective::new(3, |d: &DesignVector| d.active_count() as f64);
        let b = optimal_baseline(&th(&[0.3, 0.6, 0.5]), 1, 1, &mut seeded(2), &obj).unwrap();
        assert!(b.is_finite());
        let degenerate = optimal_baseline(&th(&[0.0, 1.0, 1.0]), 8, 3, &mut seeded(2), &obj);
        assert_eq!(degenerate.unwrap(), 0.0);
    }

    #[test]
    fn schedules() {
        assert_eq!(StepSchedule::Constant { eta: 0.25 }.eta(7), 0.25);
        assert_eq!(StepSchedule::RobbinsMonro { eta0: 1.0 }.eta(4), 0.25);
    }

    #[test]
    fn config_validation() {
        let ok = OptimizerConfig::default();
        assert!(ok.validate().is_ok());
        for broken in [
            OptimizerConfig { ens_size: 0, ..ok.clone() },
            OptimizerConfig { pgtol: 0.0, ..ok.clone() },
            OptimizerConfig { max_iters: 0, ..ok.clone() },
            OptimizerConfig { theta0: Some(vec![1.5]), ..ok.clone() },
            OptimizerConfig { step: StepSchedule::Constant { eta: -1.0 }, ..ok.clone() },
        ] {
            assert!(broken.validate().is_err());
        }
        assert!(ok.initial_policy(3).unwrap().probs() == [0.5; 3]);
        let wrong = OptimizerConfig { theta0: Some(vec![0.5]), ..ok };
        assert!(wrong.initial_policy(2).is_err());
    }

    #[test]
    fn degenerate_start_is_absorbing() {
        let obj = FnObjective::new(3, |d: &DesignVector| d.active_count() as f64);
        let config = OptimizerConfig {
            theta0: Some(vec![0.0, 0.0, 0.0]),
            ..OptimizerConfig::default()
        };
        let run = optimize(&obj, &config, &mut seeded(9), None).unwrap();
        assert_eq!(run.iterations.len(), 1);
        assert_eq!(run.stop_reason, StopReason::ProjectedGradient);
        assert_eq!(run.final_theta, vec![0.0; 3]);
        assert_eq!(run.best_design, "000");
    }

    #[test]
    fn exact_rule_needs_oracle() {
        let obj = FnObjective::new(2, |_| 1.0);
        let config = OptimizerConfig {
            stop_rule: StopRule::Exact,
            ..OptimizerConfig::default()
        };
        assert!(optimize(&obj, &config, &mut seeded(0), None).is_err());
    }

    #[test]
    fn ties_break_to_smallest_index() {
        let obj = FnObjective::new(3, |_| 1.0);
        let config = OptimizerConfig {
            max_iters: 1,
            final_samples: 40,
            ..OptimizerConfig::default()
        };
        let run = optimize(&obj, &config, &mut seeded(4), None).unwrap();
        let smallest = run.samples.iter().filter_map(|s| s.index).min().unwrap();
        assert_eq!(run.best_index, Some(smallest));
    }
}
