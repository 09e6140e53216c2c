#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;
use stochoed::{DesignVector, FnObjective, InverseProblem, PolicyParameter};

/// Random linear Gaussian problem with one observation row per sensor.
pub fn random_problem<R: Rng>(nsens: usize, rng: &mut R) -> InverseProblem {
    let nstate = nsens + 2;
    let forward = DMatrix::from_fn(nsens, nstate, |_, _| rng.gen_range(-1.0..1.0));
    let a = DMatrix::from_fn(nstate, nstate, |_, _| rng.gen_range(-1.0..1.0));
    let prior_cov = &a * a.transpose() / nstate as f64 + DMatrix::identity(nstate, nstate) * 0.5;
    let noise = DVector::from_fn(nsens, |_, _| rng.gen_range(0.1..1.0));
    InverseProblem::new(
        forward,
        DVector::zeros(nstate),
        prior_cov,
        DMatrix::from_diagonal(&noise),
        None,
        (0..nsens).map(|i| vec![i]).collect(),
    )
    .expect("well-posed random problem")
}

/// Random table `J(xi_k)` wrapped as a memoized objective.
pub fn random_table<R: Rng>(nsens: usize, rng: &mut R) -> Vec<f64> {
    (0..1usize << nsens).map(|_| rng.gen_range(-2.0..5.0)).collect()
}

pub fn table_objective(nsens: usize, table: Vec<f64>) -> FnObjective<impl Fn(&DesignVector) -> f64 + Sync> {
    FnObjective::new(nsens, move |d: &DesignVector| table[(d.index().unwrap() - 1) as usize])
}

pub fn random_interior<R: Rng>(nsens: usize, rng: &mut R) -> PolicyParameter {
    PolicyParameter::new((0..nsens).map(|_| rng.gen_range(0.02..0.98)).collect()).unwrap()
}

pub fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}
