use nalgebra::{DMatrix, DVector};

use crate::bayes::InverseProblem;

const TOY_FORWARD: [f64; 8] = [0.5, 0.5, 0.0, 0.0, 0.0, 0.0, 0.5, 0.5];
const TOY_PRIOR_VARIANCES: [f64; 4] = [4.0, 1.0, 0.25, 1.0];
const TOY_NOISE_VARIANCES: [f64; 2] = [0.25, 1.0];

/// Two sensors observing pairwise averages of a four-parameter state.
pub fn toy_problem() -> InverseProblem {
    InverseProblem::new(
        DMatrix::from_row_slice(2, 4, &TOY_FORWARD),
        DVector::zeros(4),
        DMatrix::from_diagonal(&DVector::from_column_slice(&TOY_PRIOR_VARIANCES)),
        DMatrix::from_diagonal(&DVector::from_column_slice(&TOY_NOISE_VARIANCES)),
        None,
        vec![vec![0], vec![1]],
    )
    .expect("toy problem is well posed")
}

/// Structural check used to guard the toy-only closed-form criterion.
pub fn is_toy_problem(problem: &InverseProblem) -> bool {
    let toy = toy_problem();
    problem.forward() == toy.forward()
        && problem.prior_cov() == toy.prior_cov()
        && problem.noise_cov() == toy.noise_cov()
        && problem.mass_is_identity()
        && problem.sensor_map() == toy.sensor_map()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn toy_shapes_and_values() {
        let toy = toy_problem();
        assert_eq!((toy.nobs(), toy.nstate(), toy.nsens()), (2, 4, 2));
        let y = toy.forward() * DVector::from_vec(vec![1.0, 1.0, 0.0, 0.0]);
        assert_eq!(y.as_slice(), &[1.0, 0.0]);
        assert_eq!(toy.prior_cov().trace(), 6.25);
        assert!(is_toy_problem(&toy));
    }
}
