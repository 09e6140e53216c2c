//! Exhaustive ground truth for small design spaces.
//!
//! [`brute_force`] evaluates every design once and keeps the table; an
//! [`ExactOracle`] built from that table gives the expected objective under
//! a policy, its gradient and its Hessian entries as finite sums.

use std::io::Write;

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::objective::Objective;
use crate::policy::{pmf, pmf_gradient, pmf_second_derivative, DesignVector, PolicyParameter};

pub const DEFAULT_GUARD: usize = 20;

#[derive(Debug, Clone)]
pub struct EnumerationResult {
    nsens: usize,
    /// `values[k - 1]` is `J` of the design with one-based index `k`.
    values: Vec<f64>,
    min_value: f64,
    argmin: Vec<u64>,
}

fn check_guard(nsens: usize, guard: usize) -> Result<()> {
    if nsens > guard {
        return Err(Error::GuardExceeded { nsens, guard });
    }
    Ok(())
}

/// Evaluate all `2^nsens` designs.
pub fn brute_force<O: Objective + ?Sized>(objective: &O, guard: usize) -> Result<EnumerationResult> {
    let nsens = objective.nsens();
    check_guard(nsens, guard)?;
    let count = 1u64 << nsens;
    let values = (1..=count)
        .into_par_iter()
        .map(|k| objective.evaluate(&DesignVector::from_index(k, nsens)?))
        .collect::<Result<Vec<f64>>>()?;
    Ok(EnumerationResult::from_values(nsens, values))
}

impl EnumerationResult {
    pub fn from_values(nsens: usize, values: Vec<f64>) -> Self {
        assert_eq!(values.len(), 1usize << nsens, "table must cover every design");
        let min_value = values.iter().copied().fold(f64::INFINITY, f64::min);
        let argmin = values
            .iter()
            .enumerate()
            .filter(|(_, &v)| v == min_value)
            .map(|(i, _)| i as u64 + 1)
            .collect();
        Self {
            nsens,
            values,
            min_value,
            argmin,
        }
    }

    pub fn nsens(&self) -> usize {
        self.nsens
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, k: u64) -> f64 {
        self.values[(k - 1) as usize]
    }

    pub fn min_value(&self) -> f64 {
        self.min_value
    }

    pub fn max_value(&self) -> f64 {
        self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    pub fn max_abs_value(&self) -> f64 {
        self.values.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// One-based indices attaining the minimum, ascending.
    pub fn argmin(&self) -> &[u64] {
        &self.argmin
    }

    pub fn argmin_designs(&self) -> Vec<DesignVector> {
        self.argmin
            .iter()
            .map(|&k| DesignVector::from_index(k, self.nsens).expect("valid index"))
            .collect()
    }

    /// Rows as `(k, design, J)` in index order.
    pub fn rows(&self) -> impl Iterator<Item = (u64, DesignVector, f64)> + '_ {
        self.values.iter().enumerate().map(move |(i, &v)| {
            let k = i as u64 + 1;
            (k, DesignVector::from_index(k, self.nsens).expect("valid index"), v)
        })
    }

    /// Design indices grouped by active-sensor count (`0..=nsens`).
    pub fn by_active_count(&self) -> Vec<Vec<u64>> {
        let mut groups = vec![Vec::new(); self.nsens + 1];
        for (k, design, _) in self.rows() {
            groups[design.active_count()].push(k);
        }
        groups
    }

    /// CSV with columns `k,bits,active_count,J`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> Result<()> {
        writeln!(out, "k,bits,active_count,J")?;
        for (k, design, v) in self.rows() {
            writeln!(out, "{k},{},{},{v:?}", design.bit_string(), design.active_count())?;
        }
        Ok(())
    }
}

/// Exact policy-level quantities from a full design table.
#[derive(Debug, Clone)]
pub struct ExactOracle {
    table: EnumerationResult,
}

impl ExactOracle {
    pub fn new(table: EnumerationResult) -> Self {
        Self { table }
    }

    pub fn from_objective<O: Objective + ?Sized>(objective: &O, guard: usize) -> Result<Self> {
        Ok(Self::new(brute_force(objective, guard)?))
    }

    pub fn table(&self) -> &EnumerationResult {
        &self.table
    }

    pub fn nsens(&self) -> usize {
        self.table.nsens
    }

    fn check(&self, theta: &PolicyParameter) -> Result<()> {
        if theta.nsens() != self.nsens() {
            return Err(Error::DimensionMismatch {
                what: "policy vs oracle",
                expected: self.nsens(),
                got: theta.nsens(),
            });
        }
        Ok(())
    }

    /// `sum_k J(xi_k) P(xi_k | theta)`.
    pub fn objective(&self, theta: &PolicyParameter) -> Result<f64> {
        self.check(theta)?;
        self.table
            .rows()
            .map(|(_, design, v)| Ok(v * pmf(&design, theta)?))
            .sum()
    }

    /// `sum_k J(xi_k) grad P(xi_k | theta)`.
    pub fn gradient(&self, theta: &PolicyParameter) -> Result<Vec<f64>> {
        self.check(theta)?;
        let mut grad = vec![0.0; self.nsens()];
        for (_, design, v) in self.table.rows() {
            for (g, dp) in grad.iter_mut().zip(pmf_gradient(&design, theta)?) {
                *g += v * dp;
            }
        }
        Ok(grad)
    }

    /// `sum_k J(xi_k) d^2 P(xi_k | theta) / d theta_i d theta_j`.
    pub fn hessian_entry(&self, theta: &PolicyParameter, i: usize, j: usize) -> Result<f64> {
        self.check(theta)?;
        self.table
            .rows()
            .map(|(_, design, v)| Ok(v * pmf_second_derivative(&design, theta, i, j)?))
            .sum()
    }
}

pub fn exact_stochastic_objective<O: Objective + ?Sized>(
    objective: &O,
    theta: &PolicyParameter,
    guard: usize,
) -> Result<f64> {
    ExactOracle::from_objective(objective, guard)?.objective(theta)
}

pub fn exact_gradient<O: Objective + ?Sized>(
    objective: &O,
    theta: &PolicyParameter,
    guard: usize,
) -> Result<Vec<f64>> {
    ExactOracle::from_objective(objective, guard)?.gradient(theta)
}

pub fn exact_hessian_entry<O: Objective + ?Sized>(
    objective: &O,
    theta: &PolicyParameter,
    i: usize,
    j: usize,
    guard: usize,
) -> Result<f64> {
    ExactOracle::from_objective(objective, guard)?.hessian_entry(theta, i, j)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::objective::{Criterion, DesignObjective, FnObjective, ObjectiveSpec};
    use crate::models::toy_problem;
    use std::sync::Arc;

    fn closed_form() -> DesignObjective {
        DesignObjective::new(
            Arc::new(toy_problem()),
            ObjectiveSpec::new(Criterion::PaperToyClosedForm),
        )
        .unwrap()
    }

    #[test]
    fn toy_table() {
        let result = brute_force(&closed_form(), DEFAULT_GUARD).unwrap();
        assert_eq!(result.len(), 4);
        assert_eq!(result.values(), &[6.25, 8.25, 6.75, 8.75]);
        assert_eq!(result.min_value(), 6.25);
        assert_eq!(result.argmin(), &[1]);
        let mut csv = Vec::new();
        result.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert_eq!(text.lines().nth(2).unwrap(), "2,10,1,8.25");
    }

    #[test]
    fn guard_refuses() {
        let obj = FnObjective::new(21, |_| 0.0);
        assert!(matches!(
            brute_force(&obj, DEFAULT_GUARD),
            Err(Error::GuardExceeded { nsens: 21, guard: 20 })
        ));
    }

    #[test]
    fn ties_listed_in_index_order() {
        let obj = FnObjective::new(3, |d: &DesignVector| (d.active_count() as f64 - 1.0).abs());
        let r = brute_force(&obj, DEFAULT_GUARD).unwrap();
        assert_eq!(r.argmin(), &[2, 3, 5]);
        let groups = r.by_active_count();
        assert_eq!(groups.iter().map(Vec::len).collect::<Vec<_>>(), vec![1, 3, 3, 1]);
    }

    #[test]
    fn toy_uniform_policy() {
        let oracle = ExactOracle::from_objective(&closed_form(), DEFAULT_GUARD).unwrap();
        let half = PolicyParameter::uniform(2, 0.5).unwrap();
        assert!((oracle.objective(&half).unwrap() - 7.5).abs() < 1e-14);
        let g = oracle.gradient(&half).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-14 && (g[1] - 0.5).abs() < 1e-14);
        assert_eq!(oracle.hessian_entry(&half, 1, 1).unwrap(), 0.0);
    }

    #[test]
    fn constant_objective_has_zero_gradient() {
        let obj = FnObjective::new(5, |_| 3.5);
        let theta = PolicyParameter::new(vec![0.1, 0.4, 0.5, 0.77, 0.9]).unwrap();
        let g = exact_gradient(&obj, &theta, DEFAULT_GUARD).unwrap();
        assert!(g.iter().all(|v| v.abs() < 1e-12));
        let h = exact_hessian_entry(&obj, &theta, 0, 3, DEFAULT_GUARD).unwrap();
        assert!(h.abs() < 1e-12);
        let j = exact_stochastic_objective(&obj, &theta, DEFAULT_GUARD).unwrap();
        assert!((j - 3.5).abs() < 1e-12);
    }
}
