//! Finite-difference advection-diffusion surrogate on the unit square.
//!
//! The state is the initial contaminant concentration on an `nx x ny`
//! cell-centred grid. The model advances with implicit Euler using a
//! 5-point diffusion stencil and first-order upwind advection, both written
//! in flux form with closed (no-flux) outer walls so the discrete total mass
//! is conserved. Observations restrict the field to the sensor cells at the
//! observation instants `t_first + s * dt`.

use std::f64::consts::PI;

use nalgebra::{DMatrix, DVector, LU, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bayes::{symmetrize, InverseProblem};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VelocityField {
    Zero,
    /// Rigid rotation `omega * (y - 0.5, 0.5 - x)` about the centre.
    Rotation { omega: f64 },
    /// Cellular flow with zero normal velocity on the walls.
    DoubleGyre { amplitude: f64 },
}

impl VelocityField {
    pub fn at(&self, x: f64, y: f64) -> (f64, f64) {
        match *self {
            VelocityField::Zero => (0.0, 0.0),
            VelocityField::Rotation { omega } => (omega * (y - 0.5), omega * (0.5 - x)),
            VelocityField::DoubleGyre { amplitude } => (
                -PI * amplitude * (PI * x).sin() * (PI * y).cos(),
                PI * amplitude * (PI * x).cos() * (PI * y).sin(),
            ),
        }
    }
}

/// Axis-aligned obstacle; cells whose centre falls inside are closed off.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Rect {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl Rect {
    fn contains(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }
}

/// Coefficients of the prior covariance `(gamma * L + delta * I)^{-2}`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PriorConfig {
    pub gamma: f64,
    pub delta: f64,
    /// Constant prior mean.
    pub mean: f64,
}

impl Default for PriorConfig {
    fn default() -> Self {
        Self {
            gamma: 0.03,
            delta: 20.0,
            mean: 0.0,
        }
    }
}

/// Gaussian-bump initial condition used as the synthetic truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GaussianBump {
    pub center: [f64; 2],
    pub width: f64,
    pub amplitude: f64,
}

impl Default for GaussianBump {
    fn default() -> Self {
        Self {
            center: [0.35, 0.7],
            width: 0.1,
            amplitude: 1.0,
        }
    }
}

impl GaussianBump {
    pub fn at(&self, x: f64, y: f64) -> f64 {
        let r2 = (x - self.center[0]).powi(2) + (y - self.center[1]).powi(2);
        self.amplitude * (-0.5 * r2 / (self.width * self.width)).exp()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AdConfig {
    pub nx: usize,
    pub ny: usize,
    pub kappa: f64,
    pub velocity: VelocityField,
    pub dt: f64,
    pub t_first: f64,
    pub n_obs_times: usize,
    pub final_time: f64,
    pub sensors: Vec<[f64; 2]>,
    pub noise_sigma: f64,
    /// Recompute the noise level as 5% of the peak noiseless observation of
    /// the truth instead of using `noise_sigma`.
    pub noise_from_truth: bool,
    pub prior: PriorConfig,
    pub truth: GaussianBump,
    pub buildings: Vec<Rect>,
}

/// Fourteen sensors on a staggered lattice: rows of 4, 3, 4, 3.
pub fn default_sensors() -> Vec<[f64; 2]> {
    let mut out = Vec::with_capacity(14);
    for (row, y) in [0.2, 0.4, 0.6, 0.8].into_iter().enumerate() {
        let xs: &[f64] = if row % 2 == 0 {
            &[0.2, 0.4, 0.6, 0.8]
        } else {
            &[0.3, 0.5, 0.7]
        };
        out.extend(xs.iter().map(|&x| [x, y]));
    }
    out
}

impl Default for AdConfig {
    fn default() -> Self {
        Self {
            nx: 24,
            ny: 24,
            kappa: 0.01,
            velocity: VelocityField::Rotation { omega: 1.0 },
            dt: 0.2,
            t_first: 1.0,
            n_obs_times: 16,
            final_time: 4.0,
            sensors: default_sensors(),
            noise_sigma: 2.482e-2,
            noise_from_truth: false,
            prior: PriorConfig::default(),
            truth: GaussianBump::default(),
            buildings: Vec::new(),
        }
    }
}

impl AdConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.nx < 2 || self.ny < 2 {
            return bad(format!("grid {}x{} is too small", self.nx, self.ny));
        }
        if !(self.kappa > 0.0) {
            return bad(format!("kappa must be positive, got {}", self.kappa));
        }
        if !(self.dt > 0.0) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if self.n_obs_times == 0 {
            return bad("n_obs_times must be >= 1".into());
        }
        if self.t_first < 0.0 || !is_step_multiple(self.t_first, self.dt) {
            return bad(format!(
                "t_first {} is not a nonnegative multiple of dt {}",
                self.t_first, self.dt
            ));
        }
        let last = self.t_first + (self.n_obs_times - 1) as f64 * self.dt;
        if last > self.final_time + 1e-9 {
            return bad(format!(
                "last observation at t = {last} is after the final time {}",
                self.final_time
            ));
        }
        if self.sensors.is_empty() {
            return bad("no candidate sensors".into());
        }
        if !(self.noise_sigma > 0.0) && !self.noise_from_truth {
            return bad(format!("noise_sigma must be positive, got {}", self.noise_sigma));
        }
        if !(self.prior.gamma > 0.0 && self.prior.delta > 0.0) {
            return bad("prior gamma and delta must be positive".into());
        }
        Ok(())
    }

    /// Model steps at which observations are taken.
    pub fn observation_steps(&self) -> Vec<usize> {
        let first = (self.t_first / self.dt).round() as usize;
        (0..self.n_obs_times).map(|s| first + s).collect()
    }

    pub fn observation_times(&self) -> Vec<f64> {
        (0..self.n_obs_times)
            .map(|s| self.t_first + s as f64 * self.dt)
            .collect()
    }
}

fn is_step_multiple(t: f64, dt: f64) -> bool {
    let r = t / dt;
    (r - r.round()).abs() < 1e-9
}

/// Discretized operator and sensor layout for one configuration.
pub struct AdModel {
    config: AdConfig,
    hx: f64,
    hy: f64,
    open: Vec<bool>,
    sensor_nodes: Vec<usize>,
    /// Generator `A` of `du/dt = A u`.
    generator: DMatrix<f64>,
    system: LU<f64, Dyn, Dyn>,
    system_t: LU<f64, Dyn, Dyn>,
}

impl AdModel {
    pub fn new(config: AdConfig) -> Result<Self> {
        config.validate()?;
        let (nx, ny) = (config.nx, config.ny);
        let (hx, hy) = (1.0 / nx as f64, 1.0 / ny as f64);
        let n = nx * ny;

        let open: Vec<bool> = (0..n)
            .map(|p| {
                let (x, y) = cell_center(p, nx, hx, hy);
                !config.buildings.iter().any(|r| r.contains(x, y))
            })
            .collect();

        let mut sensor_nodes = Vec::with_capacity(config.sensors.len());
        for (s, &[x, y]) in config.sensors.iter().enumerate() {
            if !(x > 0.0 && x < 1.0 && y > 0.0 && y < 1.0) {
                return Err(Error::Config(format!(
                    "sensor {s} at ({x}, {y}) is not strictly inside the domain"
                )));
            }
            let i = ((x * nx as f64) as usize).min(nx - 1);
            let j = ((y * ny as f64) as usize).min(ny - 1);
            let node = j * nx + i;
            if !open[node] {
                return Err(Error::Config(format!("sensor {s} lies inside an obstacle")));
            }
            if sensor_nodes.contains(&node) {
                return Err(Error::Config(format!(
                    "sensor {s} maps to the same grid cell as another sensor"
                )));
            }
            sensor_nodes.push(node);
        }

        let generator = assemble_generator(&config, &open, hx, hy);
        let system = DMatrix::identity(n, n) - &generator * config.dt;
        let system_t = system.transpose();
        Ok(Self {
            hx,
            hy,
            open,
            sensor_nodes,
            generator,
            system: system.lu(),
            system_t: system_t.lu(),
            config,
        })
    }

    pub fn config(&self) -> &AdConfig {
        &self.config
    }

    pub fn nstate(&self) -> usize {
        self.config.nx * self.config.ny
    }

    pub fn cell_area(&self) -> f64 {
        self.hx * self.hy
    }

    pub fn sensor_nodes(&self) -> &[usize] {
        &self.sensor_nodes
    }

    pub fn generator(&self) -> &DMatrix<f64> {
        &self.generator
    }

    /// One implicit-Euler step.
    pub fn step(&self, state: &DVector<f64>) -> Result<DVector<f64>> {
        if state.len() != self.nstate() {
            return Err(Error::DimensionMismatch {
                what: "concentration field",
                expected: self.nstate(),
                got: state.len(),
            });
        }
        self.system
            .solve(state)
            .ok_or_else(|| Error::LinearSolve("implicit Euler system is singular".into()))
    }

    fn step_adjoint(&self, state: &DVector<f64>) -> Result<DVector<f64>> {
        self.system_t
            .solve(state)
            .ok_or_else(|| Error::LinearSolve("adjoint system is singular".into()))
    }

    /// Forward simulation followed by restriction to sensors, ordered
    /// time-major: row `t * nsens + s`.
    pub fn observe(&self, initial: &DVector<f64>) -> Result<DVector<f64>> {
        let steps = self.config.observation_steps();
        let last = *steps.last().expect("at least one observation time");
        let nsens = self.sensor_nodes.len();
        let mut out = DVector::zeros(nsens * steps.len());
        let mut state = initial.clone();
        let mut next_obs = 0;
        for k in 0..=last {
            if k > 0 {
                state = self.step(&state)?;
            }
            if next_obs < steps.len() && steps[next_obs] == k {
                for (s, &node) in self.sensor_nodes.iter().enumerate() {
                    out[next_obs * nsens + s] = state[node];
                }
                next_obs += 1;
            }
        }
        Ok(out)
    }

    /// Dense forward operator. Each sensor's observation functional is
    /// propagated backwards through the transposed stepper, which needs one
    /// solve per sensor and step instead of one per state component.
    pub fn forward_matrix(&self) -> Result<DMatrix<f64>> {
        let steps = self.config.observation_steps();
        let nsens = self.sensor_nodes.len();
        let n = self.nstate();
        let rows: Vec<Vec<(usize, DVector<f64>)>> = self
            .sensor_nodes
            .par_iter()
            .enumerate()
            .map(|(s, &node)| {
                let mut z = DVector::zeros(n);
                z[node] = 1.0;
                let mut out = Vec::with_capacity(steps.len());
                let mut k = 0;
                for (t, &target) in steps.iter().enumerate() {
                    while k < target {
                        z = self.step_adjoint(&z)?;
                        k += 1;
                    }
                    out.push((t * nsens + s, z.clone()));
                }
                Ok(out)
            })
            .collect::<Result<_>>()?;
        let mut forward = DMatrix::zeros(nsens * steps.len(), n);
        for (r, row) in rows.into_iter().flatten() {
            forward.row_mut(r).copy_from(&row.transpose());
        }
        Ok(forward)
    }

    /// Neumann finite-difference Laplacian (positive semidefinite sign).
    pub fn laplacian(&self) -> DMatrix<f64> {
        let (nx, ny) = (self.config.nx, self.config.ny);
        let n = nx * ny;
        let mut l = DMatrix::zeros(n, n);
        for (p, q, h) in faces(nx, ny, self.hx, self.hy) {
            if !(self.open[p] && self.open[q]) {
                continue;
            }
            let w = 1.0 / (h * h);
            l[(p, p)] += w;
            l[(q, q)] += w;
            l[(p, q)] -= w;
            l[(q, p)] -= w;
        }
        l
    }

    pub fn prior_covariance(&self) -> Result<DMatrix<f64>> {
        let n = self.nstate();
        let PriorConfig { gamma, delta, .. } = self.config.prior;
        let elliptic = self.laplacian() * gamma + DMatrix::identity(n, n) * delta;
        let inv = crate::bayes::cholesky(&elliptic, "prior elliptic operator")?.inverse();
        Ok(symmetrize(&(&inv * &inv)))
    }

    pub fn truth_field(&self) -> DVector<f64> {
        let (nx, hx, hy) = (self.config.nx, self.hx, self.hy);
        DVector::from_fn(self.nstate(), |p, _| {
            let (x, y) = cell_center(p, nx, hx, hy);
            if self.open[p] {
                self.config.truth.at(x, y)
            } else {
                0.0
            }
        })
    }

    /// Five percent of the peak noiseless observation of the truth.
    pub fn noise_sigma_from_truth(&self) -> Result<f64> {
        let obs = self.observe(&self.truth_field())?;
        Ok(0.05 * obs.amax())
    }
}

fn cell_center(p: usize, nx: usize, hx: f64, hy: f64) -> (f64, f64) {
    let (i, j) = (p % nx, p / nx);
    ((i as f64 + 0.5) * hx, (j as f64 + 0.5) * hy)
}

/// Interior faces as `(lower cell, upper cell, spacing)`: x-faces first.
fn faces(nx: usize, ny: usize, hx: f64, hy: f64) -> impl Iterator<Item = (usize, usize, f64)> {
    let xf = (0..ny).flat_map(move |j| (0..nx - 1).map(move |i| (j * nx + i, j * nx + i + 1, hx)));
    let yf = (0..ny - 1).flat_map(move |j| (0..nx).map(move |i| (j * nx + i, (j + 1) * nx + i, hy)));
    xf.chain(yf)
}

fn assemble_generator(config: &AdConfig, open: &[bool], hx: f64, hy: f64) -> DMatrix<f64> {
    let (nx, ny) = (config.nx, config.ny);
    let n = nx * ny;
    let mut a = DMatrix::zeros(n, n);
    for (p, q, h) in faces(nx, ny, hx, hy) {
        if !(open[p] && open[q]) {
            continue;
        }
        // Diffusive exchange.
        let d = config.kappa / (h * h);
        a[(p, p)] -= d;
        a[(q, q)] -= d;
        a[(p, q)] += d;
        a[(q, p)] += d;

        // Upwind advective flux from p to q through the shared face.
        let (xp, yp) = cell_center(p, nx, hx, hy);
        let x_dir = q == p + 1 && p / nx == q / nx;
        let (fx, fy) = if x_dir { (xp + 0.5 * hx, yp) } else { (xp, yp + 0.5 * hy) };
        let (vx, vy) = config.velocity.at(fx, fy);
        let vn = if x_dir { vx } else { vy };
        let c = vn / h;
        let (donor, receiver, c) = if c >= 0.0 { (p, q, c) } else { (q, p, -c) };
        a[(donor, donor)] -= c;
        a[(receiver, donor)] += c;
    }
    a
}

/// Build the sensor-placement inverse problem for `config`.
pub fn assemble_ad_problem(config: &AdConfig) -> Result<InverseProblem> {
    let model = AdModel::new(config.clone())?;
    let forward = model.forward_matrix()?;
    let nobs = forward.nrows();
    let nsens = model.sensor_nodes().len();
    let sigma = if config.noise_from_truth {
        model.noise_sigma_from_truth()?
    } else {
        config.noise_sigma
    };
    let noise_cov = DMatrix::identity(nobs, nobs) * (sigma * sigma);
    let sensor_map = (0..nsens)
        .map(|s| (0..config.n_obs_times).map(|t| t * nsens + s).collect())
        .collect();
    InverseProblem::new(
        forward,
        DVector::from_element(model.nstate(), config.prior.mean),
        model.prior_covariance()?,
        noise_cov,
        None,
        sensor_map,
    )
}
