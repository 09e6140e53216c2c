//! Regularized design objective `J(xi) = Psi(xi) + alpha * Phi(xi)` and its
//! memoizing evaluator.

use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayes::{cholesky, InverseProblem};
use crate::error::{Error, Result};
use crate::models::is_toy_problem;
use crate::policy::{DesignKey, DesignVector};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Criterion {
    /// Trace of the posterior covariance.
    AOptimal,
    /// Log-determinant of the posterior covariance.
    DOptimal,
    /// The printed toy formula `2 xi_1 + 0.5 xi_2 + 6.25`.
    PaperToyClosedForm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PenaltyKind {
    None,
    L0,
    Budget,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ObjectiveSpec {
    pub criterion: Criterion,
    pub penalty: PenaltyKind,
    pub alpha: f64,
    pub budget: Option<u32>,
    /// Penalize only designs above the budget.
    pub one_sided_budget: bool,
}

impl Default for ObjectiveSpec {
    fn default() -> Self {
        Self {
            criterion: Criterion::AOptimal,
            penalty: PenaltyKind::None,
            alpha: 0.0,
            budget: None,
            one_sided_budget: false,
        }
    }
}

impl ObjectiveSpec {
    pub fn new(criterion: Criterion) -> Self {
        Self {
            criterion,
            ..Self::default()
        }
    }

    pub fn with_l0(mut self, alpha: f64) -> Self {
        self.penalty = PenaltyKind::L0;
        self.alpha = alpha;
        self
    }

    pub fn with_budget(mut self, alpha: f64, budget: u32) -> Self {
        self.penalty = PenaltyKind::Budget;
        self.alpha = alpha;
        self.budget = Some(budget);
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::Config(format!(
                "penalty weight must be finite and >= 0, got {}",
                self.alpha
            )));
        }
        match (self.penalty, self.budget) {
            (PenaltyKind::Budget, None) => {
                Err(Error::Config("budget penalty requires a budget".into()))
            }
            (PenaltyKind::Budget, Some(0)) => Err(Error::Config("budget must be positive".into())),
            (PenaltyKind::None | PenaltyKind::L0, Some(_)) => Err(Error::Config(
                "a budget is only meaningful with the budget penalty".into(),
            )),
            _ => Ok(()),
        }
    }
}

/// Design criterion through dense state-space algebra.
pub fn criterion_value(
    problem: &InverseProblem,
    spec: &ObjectiveSpec,
    design: &DesignVector,
) -> Result<f64> {
    match spec.criterion {
        Criterion::AOptimal => Ok(problem.posterior_covariance(design)?.trace()),
        Criterion::DOptimal => {
            let precision = problem.weighted_precision(design)?;
            let chol = cholesky(&precision, "posterior precision")?;
            Ok(-2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>())
        }
        Criterion::PaperToyClosedForm => toy_closed_form(problem, design),
    }
}

fn toy_closed_form(problem: &InverseProblem, design: &DesignVector) -> Result<f64> {
    if !is_toy_problem(problem) {
        return Err(Error::UnsupportedCriterion("paper_toy_closed_form"));
    }
    if design.nsens() != 2 {
        return Err(Error::DimensionMismatch {
            what: "toy design",
            expected: 2,
            got: design.nsens(),
        });
    }
    Ok(2.0 * f64::from(design.bit(0)) + 0.5 * f64::from(design.bit(1)) + 6.25)
}

pub fn penalty_value(spec: &ObjectiveSpec, design: &DesignVector) -> f64 {
    let active = design.active_count() as f64;
    match spec.penalty {
        PenaltyKind::None => 0.0,
        PenaltyKind::L0 => active,
        PenaltyKind::Budget => {
            let budget = f64::from(spec.budget.unwrap_or(0));
            if spec.one_sided_budget {
                (active - budget).max(0.0)
            } else {
                (active - budget).abs()
            }
        }
    }
}

/// Thread-safe memo table from design key to objective value.
#[derive(Debug, Default)]
pub struct EvaluationCache {
    values: Mutex<HashMap<DesignKey, f64>>,
    lookups: AtomicU64,
    hits: AtomicU64,
    inserted: AtomicU64,
}

impl EvaluationCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&self, key: &DesignKey) -> Option<f64> {
        self.values.lock().expect("cache poisoned").get(key).copied()
    }

    /// Look up `key`, computing and storing it on a miss. Concurrent misses
    /// on the same key may both compute; the first insert wins and only it
    /// counts as a new evaluation.
    pub fn get_or_compute<F>(&self, key: DesignKey, compute: F) -> Result<f64>
    where
        F: FnOnce() -> Result<f64>,
    {
        self.lookups.fetch_add(1, Ordering::Relaxed);
        if let Some(v) = self.get(&key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return Ok(v);
        }
        let value = compute()?;
        let mut map = self.values.lock().expect("cache poisoned");
        let stored = *map.entry(key).or_insert_with(|| {
            self.inserted.fetch_add(1, Ordering::Relaxed);
            value
        });
        Ok(stored)
    }

    pub fn len(&self) -> usize {
        self.values.lock().expect("cache poisoned").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn lookups(&self) -> u64 {
        self.lookups.load(Ordering::Relaxed)
    }

    pub fn hits(&self) -> u64 {
        self.hits.load(Ordering::Relaxed)
    }

    /// Number of distinct designs computed through this cache.
    pub fn new_evaluations(&self) -> u64 {
        self.inserted.load(Ordering::Relaxed)
    }

    /// Entries sorted by key.
    pub fn entries(&self) -> Vec<(DesignKey, f64)> {
        let map = self.values.lock().expect("cache poisoned");
        let mut out: Vec<_> = map.iter().map(|(k, v)| (k.clone(), *v)).collect();
        out.sort_by(|a, b| a.0.cmp(&b.0));
        out
    }

    /// Write `k,J` rows with a header.
    pub fn dump<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "k,J")?;
        for (k, v) in self.entries() {
            writeln!(out, "{k},{v:?}")?;
        }
        Ok(())
    }

    /// Merge rows written by [`dump`](Self::dump). Loaded entries do not
    /// count as new evaluations.
    pub fn load<R: BufRead>(&self, input: R) -> Result<usize> {
        let mut loaded = 0;
        let mut map = self.values.lock().expect("cache poisoned");
        for (lineno, line) in input.lines().enumerate() {
            let line = line?;
            let line = line.trim();
            if line.is_empty() || (lineno == 0 && line == "k,J") {
                continue;
            }
            let (k, v) = line
                .split_once(',')
                .ok_or_else(|| Error::Format(format!("line {}: expected `k,J`", lineno + 1)))?;
            let key: DesignKey = k.trim().parse()?;
            let value: f64 = v
                .trim()
                .parse()
                .map_err(|_| Error::Format(format!("line {}: bad value `{v}`", lineno + 1)))?;
            map.entry(key).or_insert(value);
            loaded += 1;
        }
        Ok(loaded)
    }
}

/// Anything that assigns a value to a binary design.
pub trait Objective: Sync {
    fn nsens(&self) -> usize;

    fn evaluate(&self, design: &DesignVector) -> Result<f64>;

    /// Distinct designs computed so far (memoized objectives only).
    fn new_evaluations(&self) -> u64 {
        0
    }

    /// Evaluate a batch in parallel; output order follows input order.
    fn evaluate_batch(&self, designs: &[DesignVector]) -> Result<Vec<f64>> {
        designs.par_iter().map(|d| self.evaluate(d)).collect()
    }
}

/// Objective given by a plain function, memoized like the OED objective.
pub struct FnObjective<F> {
    nsens: usize,
    f: F,
    cache: EvaluationCache,
}

impl<F> FnObjective<F>
where
    F: Fn(&DesignVector) -> f64 + Sync,
{
    pub fn new(nsens: usize, f: F) -> Self {
        Self {
            nsens,
            f,
            cache: EvaluationCache::new(),
        }
    }

    pub fn cache(&self) -> &EvaluationCache {
        &self.cache
    }
}

impl<F> Objective for FnObjective<F>
where
    F: Fn(&DesignVector) -> f64 + Sync,
{
    fn nsens(&self) -> usize {
        self.nsens
    }

    fn evaluate(&self, design: &DesignVector) -> Result<f64> {
        if design.nsens() != self.nsens {
            return Err(Error::DimensionMismatch {
                what: "design",
                expected: self.nsens,
                got: design.nsens(),
            });
        }
        self.cache.get_or_compute(design.key(), || Ok((self.f)(design)))
    }

    fn new_evaluations(&self) -> u64 {
        self.cache.new_evaluations()
    }
}

/// Low-rank factors for evaluating criteria in observation space when the
/// mass matrix is the identity. With `B` the whitened forward operator and
/// `a` the active rows,
/// `tr(Gpost) = tr(Gpr) - tr((I + H_aa)^{-1} K_aa)` and
/// `logdet(Gpost) = logdet(Gpr) - logdet(I + H_aa)`,
/// where `H = B Gpr B^T` and `K = B Gpr^2 B^T`.
#[derive(Debug)]
struct DataSpaceFactors {
    h: DMatrix<f64>,
    k: DMatrix<f64>,
    prior_trace: f64,
    prior_logdet: f64,
}

impl DataSpaceFactors {
    fn new(problem: &InverseProblem) -> Result<Self> {
        let b = problem.whitened_forward();
        let bg = b * problem.prior_cov();
        let h = crate::bayes::symmetrize(&(&bg * b.transpose()));
        let k = crate::bayes::symmetrize(&(&bg * bg.transpose()));
        let chol = cholesky(problem.prior_cov(), "prior covariance")?;
        let prior_logdet = 2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>();
        Ok(Self {
            h,
            k,
            prior_trace: problem.prior_cov().trace(),
            prior_logdet,
        })
    }

    fn capacitance(&self, rows: &[usize]) -> Result<nalgebra::Cholesky<f64, nalgebra::Dyn>> {
        let mut c = self.h.select_rows(rows).select_columns(rows);
        for i in 0..rows.len() {
            c[(i, i)] += 1.0;
        }
        cholesky(&c, "data-space capacitance")
    }

    fn trace(&self, rows: &[usize]) -> Result<f64> {
        if rows.is_empty() {
            return Ok(self.prior_trace);
        }
        let chol = self.capacitance(rows)?;
        let k = self.k.select_rows(rows).select_columns(rows);
        let reduction = chol.solve(&k).trace();
        Ok(self.prior_trace - reduction)
    }

    fn logdet(&self, rows: &[usize]) -> Result<f64> {
        if rows.is_empty() {
            return Ok(self.prior_logdet);
        }
        let chol = self.capacitance(rows)?;
        let half: f64 = chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum();
        Ok(self.prior_logdet - 2.0 * half)
    }
}

/// The OED objective for one problem, memoized by design index.
/// `J` at a relaxed design `w in [0, 1]^n`. The precision weights each
/// sensor's rows by `w`; the l0 count becomes `sum w` and the budget
/// penalty uses that sum in place of the active count.
pub fn relaxed_value(problem: &InverseProblem, spec: &ObjectiveSpec, weights: &[f64]) -> Result<f64> {
    spec.validate()?;
    if weights.len() != problem.nsens() {
        return Err(Error::DimensionMismatch {
            what: "relaxed weights vs sensor count",
            expected: problem.nsens(),
            got: weights.len(),
        });
    }
    if let Some(w) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
        return Err(Error::InvalidParameter(format!("relaxed weight {w} outside [0, 1]")));
    }
    let psi = match spec.criterion {
        Criterion::PaperToyClosedForm => {
            if !is_toy_problem(problem) {
                return Err(Error::UnsupportedCriterion("paper_toy_closed_form"));
            }
            2.0 * weights[0] + 0.5 * weights[1] + 6.25
        }
        criterion => {
            let precision = problem.relaxed_precision(weights)?;
            let chol = cholesky(&precision, "relaxed posterior precision")?;
            match criterion {
                Criterion::AOptimal => chol.inverse().trace(),
                _ => -2.0 * chol.l_dirty().diagonal().iter().map(|d| d.ln()).sum::<f64>(),
            }
        }
    };
    let mass: f64 = weights.iter().sum();
    let penalty = match spec.penalty {
        PenaltyKind::None => 0.0,
        PenaltyKind::L0 => mass,
        PenaltyKind::Budget => {
            let excess = mass - f64::from(spec.budget.unwrap_or(0));
            if spec.one_sided_budget {
                excess.max(0.0)
            } else {
                excess.abs()
            }
        }
    };
    Ok(psi + spec.alpha * penalty)
}

pub struct DesignObjective {
    problem: Arc<InverseProblem>,
    spec: ObjectiveSpec,
    fast: Option<DataSpaceFactors>,
    cache: EvaluationCache,
}

impl DesignObjective {
    pub fn new(problem: Arc<InverseProblem>, spec: ObjectiveSpec) -> Result<Self> {
        spec.validate()?;
        if spec.criterion == Criterion::PaperToyClosedForm && !is_toy_problem(&problem) {
            return Err(Error::UnsupportedCriterion("paper_toy_closed_form"));
        }
        let fast = match spec.criterion {
            Criterion::AOptimal | Criterion::DOptimal if problem.mass_is_identity() => {
                Some(DataSpaceFactors::new(&problem)?)
            }
            _ => None,
        };
        Ok(Self {
            problem,
            spec,
            fast,
            cache: EvaluationCache::new(),
        })
    }

    pub fn problem(&self) -> &InverseProblem {
        &self.problem
    }

    pub fn spec(&self) -> &ObjectiveSpec {
        &self.spec
    }

    pub fn cache(&self) -> &EvaluationCache {
        &self.cache
    }

    /// Criterion without caching. Uses observation-space algebra when fewer
    /// rows are active than there are state components.
    pub fn criterion(&self, design: &DesignVector) -> Result<f64> {
        if let Some(fast) = &self.fast {
            let rows = self.problem.active_rows(design)?;
            if rows.len() <= self.problem.nstate() {
                return match self.spec.criterion {
                    Criterion::AOptimal => fast.trace(&rows),
                    _ => fast.logdet(&rows),
                };
            }
        }
        criterion_value(&self.problem, &self.spec, design)
    }
}

impl Objective for DesignObjective {
    fn nsens(&self) -> usize {
        self.problem.nsens()
    }

    fn evaluate(&self, design: &DesignVector) -> Result<f64> {
        if design.nsens() != self.nsens() {
            return Err(Error::DimensionMismatch {
                what: "design vs sensor count",
                expected: self.nsens(),
                got: design.nsens(),
            });
        }
        self.cache.get_or_compute(design.key(), || {
            let psi = self.criterion(design)?;
            Ok(psi + self.spec.alpha * penalty_value(&self.spec, design))
        })
    }

    fn new_evaluations(&self) -> u64 {
        self.cache.new_evaluations()
    }
}

/// One-shot evaluation of `J` without a cache.
pub fn evaluate(problem: &InverseProblem, spec: &ObjectiveSpec, design: &DesignVector) -> Result<f64> {
    spec.validate()?;
    Ok(criterion_value(problem, spec, design)? + spec.alpha * penalty_value(spec, design))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::models::toy_problem;

    fn d(bits: &[u8]) -> DesignVector {
        DesignVector::from_bits(bits.iter().map(|&b| b == 1).collect())
    }

    #[test]
    fn relaxed_matches_binary_at_vertices() {
        let toy = toy_problem();
        for criterion in [Criterion::AOptimal, Criterion::DOptimal, Criterion::PaperToyClosedForm] {
            let spec = ObjectiveSpec::new(criterion).with_budget(0.5, 1);
            for bits in [[0, 0], [1, 0], [0, 1], [1, 1]] {
                let w = [f64::from(bits[0]), f64::from(bits[1])];
                let a = relaxed_value(&toy, &spec, &w).unwrap();
                let b = evaluate(&toy, &spec, &d(&bits)).unwrap();
                assert!((a - b).abs() < 1e-12, "{criterion:?} {bits:?}: {a} vs {b}");
            }
        }
        let spec = ObjectiveSpec::new(Criterion::PaperToyClosedForm);
        assert_eq!(relaxed_value(&toy, &spec, &[0.5, 0.5]).unwrap(), 7.5);
        assert!(relaxed_value(&toy, &spec, &[1.5, 0.5]).is_err());
    }

    fn toy_objective(spec: ObjectiveSpec) -> DesignObjective {
        DesignObjective::new(Arc::new(toy_problem()), spec).unwrap()
    }

    #[test]
    fn toy_criteria() {
        let toy = toy_problem();
        let closed = ObjectiveSpec::new(Criterion::PaperToyClosedForm);
        assert_eq!(criterion_value(&toy, &closed, &d(&[0, 0])).unwrap(), 6.25);
        assert_eq!(criterion_value(&toy, &closed, &d(&[1, 1])).unwrap(), 8.75);
        let a = ObjectiveSpec::new(Criterion::AOptimal);
        assert!((criterion_value(&toy, &a, &d(&[0, 0])).unwrap() - 6.25).abs() < 1e-12);
        let dopt = ObjectiveSpec::new(Criterion::DOptimal);
        assert!(criterion_value(&toy, &dopt, &d(&[0, 0])).unwrap().abs() < 1e-14);
    }

    #[test]
    fn closed_form_refuses_other_problems() {
        let toy = toy_problem();
        let other = InverseProblem::new(
            toy.forward() * 2.0,
            toy.prior_mean().clone(),
            toy.prior_cov().clone(),
            toy.noise_cov().clone(),
            None,
            toy.sensor_map().to_vec(),
        )
        .unwrap();
        let spec = ObjectiveSpec::new(Criterion::PaperToyClosedForm);
        assert!(matches!(
            criterion_value(&other, &spec, &d(&[1, 0])),
            Err(Error::UnsupportedCriterion(_))
        ));
        assert!(DesignObjective::new(Arc::new(other), spec).is_err());
    }

    #[test]
    fn penalties() {
        let l0 = ObjectiveSpec::new(Criterion::AOptimal).with_l0(1.0);
        assert_eq!(penalty_value(&l0, &d(&[1, 0, 1, 1, 0])), 3.0);
        let budget = ObjectiveSpec::new(Criterion::AOptimal).with_budget(1.0, 8);
        let eight = DesignVector::from_bits((0..14).map(|i| i < 8).collect());
        let five = DesignVector::from_bits((0..14).map(|i| i < 5).collect());
        assert_eq!(penalty_value(&budget, &eight), 0.0);
        assert_eq!(penalty_value(&budget, &five), 3.0);
        let one_sided = ObjectiveSpec {
            one_sided_budget: true,
            ..budget
        };
        assert_eq!(penalty_value(&one_sided, &five), 0.0);
        assert_eq!(penalty_value(&ObjectiveSpec::default(), &five), 0.0);
    }

    #[test]
    fn spec_validation() {
        let mut s = ObjectiveSpec::default();
        s.penalty = PenaltyKind::Budget;
        assert!(s.validate().is_err());
        s.budget = Some(3);
        assert!(s.validate().is_ok());
        s.alpha = -1.0;
        assert!(s.validate().is_err());
        let mut s = ObjectiveSpec::default();
        s.budget = Some(2);
        assert!(s.validate().is_err());
    }

    #[test]
    fn memoization_contract() {
        let obj = toy_objective(ObjectiveSpec::new(Criterion::AOptimal));
        let first = obj.evaluate(&d(&[1, 1])).unwrap();
        assert!((first - 3.214286).abs() < 1e-6);
        assert_eq!(obj.new_evaluations(), 1);
        let hits = obj.cache().hits();
        let second = obj.evaluate(&d(&[1, 1])).unwrap();
        assert_eq!(first.to_bits(), second.to_bits());
        assert_eq!(obj.cache().hits(), hits + 1);
        assert_eq!(obj.new_evaluations(), 1);
    }

    #[test]
    fn penalized_closed_form() {
        let obj = toy_objective(ObjectiveSpec::new(Criterion::PaperToyClosedForm).with_l0(1.0));
        assert_eq!(obj.evaluate(&d(&[1, 0])).unwrap(), 9.25);
    }

    #[test]
    fn zero_alpha_is_pure_criterion() {
        let toy = toy_problem();
        let spec = ObjectiveSpec::new(Criterion::AOptimal);
        for bits in [[0, 1], [1, 0]] {
            assert_eq!(
                evaluate(&toy, &spec, &d(&bits)).unwrap(),
                criterion_value(&toy, &spec, &d(&bits)).unwrap()
            );
        }
    }

    #[test]
    fn data_space_matches_state_space() {
        let toy = toy_problem();
        for criterion in [Criterion::AOptimal, Criterion::DOptimal] {
            let spec = ObjectiveSpec::new(criterion);
            let obj = toy_objective(spec);
            for design in DesignVector::enumerate(2).unwrap() {
                let fast = obj.criterion(&design).unwrap();
                let dense = criterion_value(&toy, &spec, &design).unwrap();
                assert!((fast - dense).abs() < 1e-12, "{criterion:?} {design}");
            }
        }
    }

    #[test]
    fn dump_and_load() {
        let obj = toy_objective(ObjectiveSpec::new(Criterion::AOptimal));
        for design in DesignVector::enumerate(2).unwrap() {
            obj.evaluate(&design).unwrap();
        }
        let mut buf = Vec::new();
        obj.cache().dump(&mut buf).unwrap();
        let restored = EvaluationCache::new();
        assert_eq!(restored.load(buf.as_slice()).unwrap(), 4);
        assert_eq!(restored.entries(), obj.cache().entries());
        assert_eq!(restored.new_evaluations(), 0);
        assert!(restored.load("k,J\n1,oops\n".as_bytes()).is_err());
    }
}
