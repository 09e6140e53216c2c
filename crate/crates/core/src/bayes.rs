//! Linear Gaussian inverse problem with a design-weighted likelihood.
//!
//! Each candidate sensor owns a set of observation rows (one per
//! observation time). A design switches all rows of a sensor on or off, and
//! the posterior precision becomes
//! `M^{-1} F^T Gn^{-1/2} diag(xi) Gn^{-1/2} F + Gpr^{-1}`.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};
use crate::policy::DesignVector;

/// Immutable problem definition plus the factors every design evaluation
/// reuses.
#[derive(Debug, Clone)]
pub struct InverseProblem {
    forward: DMatrix<f64>,
    prior_mean: DVector<f64>,
    prior_cov: DMatrix<f64>,
    noise_cov: DMatrix<f64>,
    mass: DMatrix<f64>,
    sensor_map: Vec<Vec<usize>>,

    prior_precision: DMatrix<f64>,
    mass_is_identity: bool,
    mass_inv: DMatrix<f64>,
    /// `Gn^{-1/2} F`
    whitened_forward: DMatrix<f64>,
    noise_inv_sqrt: DMatrix<f64>,
}

/// Posterior covariance and, when data were supplied, the posterior mean.
#[derive(Debug, Clone)]
pub struct PosteriorSummary {
    pub covariance: DMatrix<f64>,
    pub mean: Option<DVector<f64>>,
}

impl PosteriorSummary {
    pub fn trace(&self) -> f64 {
        self.covariance.trace()
    }
}

pub(crate) fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

pub(crate) fn cholesky(a: &DMatrix<f64>, name: &'static str) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(symmetrize(a)).ok_or(Error::NotPositiveDefinite(name))
}

fn require_square(m: &DMatrix<f64>, n: usize, what: &'static str) -> Result<()> {
    if m.nrows() != n || m.ncols() != n {
        return Err(Error::DimensionMismatch {
            what,
            expected: n,
            got: if m.nrows() != n { m.nrows() } else { m.ncols() },
        });
    }
    Ok(())
}

fn is_identity(m: &DMatrix<f64>) -> bool {
    m.iter().enumerate().all(|(flat, &v)| {
        let (r, c) = (flat % m.nrows(), flat / m.nrows());
        v == if r == c { 1.0 } else { 0.0 }
    })
}

impl InverseProblem {
    /// Validate and factor a problem. `mass` defaults to the identity.
    pub fn new(
        forward: DMatrix<f64>,
        prior_mean: DVector<f64>,
        prior_cov: DMatrix<f64>,
        noise_cov: DMatrix<f64>,
        mass: Option<DMatrix<f64>>,
        sensor_map: Vec<Vec<usize>>,
    ) -> Result<Self> {
        let (nobs, nstate) = forward.shape();
        if prior_mean.len() != nstate {
            return Err(Error::DimensionMismatch {
                what: "prior mean",
                expected: nstate,
                got: prior_mean.len(),
            });
        }
        require_square(&prior_cov, nstate, "prior covariance")?;
        require_square(&noise_cov, nobs, "noise covariance")?;
        let mass = mass.unwrap_or_else(|| DMatrix::identity(nstate, nstate));
        require_square(&mass, nstate, "mass matrix")?;

        if sensor_map.is_empty() {
            return Err(Error::InvalidParameter("no candidate sensors".into()));
        }
        let mut owner = vec![None; nobs];
        for (s, rows) in sensor_map.iter().enumerate() {
            if rows.is_empty() {
                return Err(Error::InvalidParameter(format!("sensor {s} owns no rows")));
            }
            for &r in rows {
                if r >= nobs {
                    return Err(Error::InvalidParameter(format!(
                        "sensor {s} owns row {r} but there are only {nobs} observations"
                    )));
                }
                if let Some(prev) = owner[r].replace(s) {
                    return Err(Error::InvalidParameter(format!(
                        "observation row {r} owned by sensors {prev} and {s}"
                    )));
                }
            }
        }
        if let Some(r) = owner.iter().position(Option::is_none) {
            return Err(Error::InvalidParameter(format!(
                "observation row {r} belongs to no sensor"
            )));
        }

        let prior_chol = cholesky(&prior_cov, "prior covariance")?;
        let prior_precision = symmetrize(&prior_chol.inverse());

        cholesky(&noise_cov, "noise covariance")?;
        let noise_inv_sqrt = inverse_sqrt(&noise_cov)?;
        let whitened_forward = &noise_inv_sqrt * &forward;

        let mass_is_identity = is_identity(&mass);
        let mass_inv = if mass_is_identity {
            mass.clone()
        } else {
            cholesky(&mass, "mass matrix")?.inverse()
        };

        Ok(Self {
            forward,
            prior_mean,
            prior_cov,
            noise_cov,
            mass,
            sensor_map,
            prior_precision,
            mass_is_identity,
            mass_inv,
            whitened_forward,
            noise_inv_sqrt,
        })
    }

    pub fn nsens(&self) -> usize {
        self.sensor_map.len()
    }

    pub fn nobs(&self) -> usize {
        self.forward.nrows()
    }

    pub fn nstate(&self) -> usize {
        self.forward.ncols()
    }

    pub fn forward(&self) -> &DMatrix<f64> {
        &self.forward
    }

    pub fn prior_mean(&self) -> &DVector<f64> {
        &self.prior_mean
    }

    pub fn prior_cov(&self) -> &DMatrix<f64> {
        &self.prior_cov
    }

    pub fn prior_precision(&self) -> &DMatrix<f64> {
        &self.prior_precision
    }

    pub fn noise_cov(&self) -> &DMatrix<f64> {
        &self.noise_cov
    }

    pub fn mass(&self) -> &DMatrix<f64> {
        &self.mass
    }

    pub fn mass_is_identity(&self) -> bool {
        self.mass_is_identity
    }

    pub fn sensor_map(&self) -> &[Vec<usize>] {
        &self.sensor_map
    }

    pub fn whitened_forward(&self) -> &DMatrix<f64> {
        &self.whitened_forward
    }

    /// Observation rows switched on by `design`, ascending.
    pub fn active_rows(&self, design: &DesignVector) -> Result<Vec<usize>> {
        self.check_design(design)?;
        let mut rows: Vec<usize> = design
            .bits()
            .iter()
            .zip(&self.sensor_map)
            .filter(|(&b, _)| b)
            .flat_map(|(_, rows)| rows.iter().copied())
            .collect();
        rows.sort_unstable();
        Ok(rows)
    }

    fn check_design(&self, design: &DesignVector) -> Result<()> {
        if design.nsens() != self.nsens() {
            return Err(Error::DimensionMismatch {
                what: "design vs sensor count",
                expected: self.nsens(),
                got: design.nsens(),
            });
        }
        Ok(())
    }

    /// `F^T W(xi) F`, summed over the active whitened rows.
    fn data_misfit_hessian(&self, design: &DesignVector) -> Result<DMatrix<f64>> {
        let rows = self.active_rows(design)?;
        let b = self.whitened_forward.select_rows(rows.iter());
        Ok(b.tr_mul(&b))
    }

    /// Posterior precision `M^{-1} F^T W(xi) F + Gpr^{-1}`.
    pub fn weighted_precision(&self, design: &DesignVector) -> Result<DMatrix<f64>> {
        let misfit = self.data_misfit_hessian(design)?;
        let misfit = if self.mass_is_identity {
            misfit
        } else {
            &self.mass_inv * misfit
        };
        Ok(symmetrize(&(misfit + &self.prior_precision)))
    }

    /// Precision for a relaxed design: sensor `s` scales its rows of the
    /// data misfit by `weights[s]` in `[0, 1]`. Binary weights reproduce
    /// [`Self::weighted_precision`].
    pub fn relaxed_precision(&self, weights: &[f64]) -> Result<DMatrix<f64>> {
        if weights.len() != self.nsens() {
            return Err(Error::DimensionMismatch {
                what: "relaxed weights vs sensor count",
                expected: self.nsens(),
                got: weights.len(),
            });
        }
        if let Some(w) = weights.iter().find(|w| !(0.0..=1.0).contains(*w)) {
            return Err(Error::InvalidParameter(format!("relaxed weight {w} outside [0, 1]")));
        }
        let mut scaled = self.whitened_forward.clone();
        for (rows, &w) in self.sensor_map.iter().zip(weights) {
            for &r in rows {
                scaled.row_mut(r).scale_mut(w.sqrt());
            }
        }
        let mut misfit = scaled.tr_mul(&scaled);
        if !self.mass_is_identity {
            misfit = &self.mass_inv * misfit;
        }
        Ok(symmetrize(&(misfit + &self.prior_precision)))
    }

    /// Dense posterior covariance, inverted through a Cholesky factor.
    pub fn posterior_covariance(&self, design: &DesignVector) -> Result<PosteriorSummary> {
        let precision = self.weighted_precision(design)?;
        let chol = cholesky(&precision, "posterior precision")?;
        Ok(PosteriorSummary {
            covariance: symmetrize(&chol.inverse()),
            mean: None,
        })
    }

    /// Posterior mean `Gpost (Gpr^{-1} m_pr + M^{-1} F^T W(xi) y)`.
    pub fn posterior_mean(&self, design: &DesignVector, data: &DVector<f64>) -> Result<DVector<f64>> {
        if data.len() != self.nobs() {
            return Err(Error::DimensionMismatch {
                what: "observation vector",
                expected: self.nobs(),
                got: data.len(),
            });
        }
        let precision = self.weighted_precision(design)?;
        let chol = cholesky(&precision, "posterior precision")?;

        let mask = self.observation_mask(design)?;
        let whitened_data = &self.noise_inv_sqrt * data;
        let gated = whitened_data.component_mul(&mask);
        let mut rhs = self.whitened_forward.tr_mul(&gated);
        if !self.mass_is_identity {
            rhs = &self.mass_inv * rhs;
        }
        rhs += &self.prior_precision * &self.prior_mean;
        Ok(chol.solve(&rhs))
    }

    /// Posterior covariance together with the posterior mean for `data`.
    pub fn posterior(&self, design: &DesignVector, data: &DVector<f64>) -> Result<PosteriorSummary> {
        let mut summary = self.posterior_covariance(design)?;
        summary.mean = Some(self.posterior_mean(design, data)?);
        Ok(summary)
    }

    /// Row-expanded design as a 0/1 vector over observations.
    pub fn observation_mask(&self, design: &DesignVector) -> Result<DVector<f64>> {
        let mut mask = DVector::zeros(self.nobs());
        for r in self.active_rows(design)? {
            mask[r] = 1.0;
        }
        Ok(mask)
    }
}

/// Symmetric inverse square root of an SPD matrix. Diagonal input is
/// handled elementwise.
fn inverse_sqrt(a: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let n = a.nrows();
    let diagonal = (0..n).all(|i| (0..n).all(|j| i == j || a[(i, j)] == 0.0));
    if diagonal {
        let mut out = DMatrix::zeros(n, n);
        for i in 0..n {
            out[(i, i)] = 1.0 / a[(i, i)].sqrt();
        }
        return Ok(out);
    }
    let eig = SymmetricEigen::new(symmetrize(a));
    if eig.eigenvalues.iter().any(|&l| l <= 0.0) {
        return Err(Error::NotPositiveDefinite("noise covariance"));
    }
    let scaled = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| 1.0 / l.sqrt()));
    Ok(symmetrize(
        &(&eig.eigenvectors * scaled * eig.eigenvectors.transpose()),
    ))
}
