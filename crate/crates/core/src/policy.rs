//! Multivariate Bernoulli policy over binary sensor designs.
//!
//! A design activates sensor `i` independently with probability `theta[i]`.
//! The functions here evaluate the joint PMF, its first and second
//! derivatives with respect to the activation probabilities, the score
//! (gradient of the log-PMF), and draw designs from the policy.
//!
//! Sensor indices in the Rust API are zero-based. The canonical design index
//! is one-based: the all-off design has index 1.

use std::fmt;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Beyond this many sensors the PMF is accumulated in the log domain.
const LOG_DOMAIN_THRESHOLD: usize = 30;

/// Largest sensor count whose canonical index fits in a `u64`.
pub const MAX_INDEXED_SENSORS: usize = 63;

/// Activation probabilities, one per candidate sensor, each in `[0, 1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct PolicyParameter {
    probs: Vec<f64>,
}

impl PolicyParameter {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidParameter(
                "policy needs at least one sensor".into(),
            ));
        }
        if let Some((i, p)) = probs
            .iter()
            .enumerate()
            .find(|(_, p)| !(p.is_finite() && (0.0..=1.0).contains(*p)))
        {
            return Err(Error::InvalidParameter(format!(
                "activation probability {i} is {p}, outside [0, 1]"
            )));
        }
        Ok(Self { probs })
    }

    /// Every sensor active with probability `p`.
    pub fn uniform(nsens: usize, p: f64) -> Result<Self> {
        Self::new(vec![p; nsens])
    }

    pub fn nsens(&self) -> usize {
        self.probs.len()
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn is_degenerate(&self) -> bool {
        self.probs.iter().all(|&p| p == 0.0 || p == 1.0)
    }

    /// Replace components within `tol` of 0 or 1 by the bound itself.
    pub fn snapped(&self, tol: f64) -> Self {
        let probs = self
            .probs
            .iter()
            .map(|&p| {
                if p <= tol {
                    0.0
                } else if p >= 1.0 - tol {
                    1.0
                } else {
                    p
                }
            })
            .collect();
        Self { probs }
    }

    /// Interpret a degenerate policy as the design it always produces.
    pub fn as_design(&self) -> Option<DesignVector> {
        if !self.is_degenerate() {
            return None;
        }
        Some(DesignVector::from_bits(
            self.probs.iter().map(|&p| p == 1.0).collect(),
        ))
    }

    fn check_dim(&self, design: &DesignVector) -> Result<()> {
        if design.nsens() != self.nsens() {
            return Err(Error::DimensionMismatch {
                what: "design vs policy",
                expected: self.nsens(),
                got: design.nsens(),
            });
        }
        Ok(())
    }
}

impl TryFrom<Vec<f64>> for PolicyParameter {
    type Error = Error;

    fn try_from(probs: Vec<f64>) -> Result<Self> {
        Self::new(probs)
    }
}

impl From<PolicyParameter> for Vec<f64> {
    fn from(theta: PolicyParameter) -> Self {
        theta.probs
    }
}

/// Memoization key for a design. Small designs use the one-based integer
/// index; wider designs fall back to their bit string.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum DesignKey {
    Index(u64),
    Bits(String),
}

impl fmt::Display for DesignKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DesignKey::Index(k) => write!(f, "{k}"),
            DesignKey::Bits(s) => f.write_str(s),
        }
    }
}

impl std::str::FromStr for DesignKey {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if let Ok(k) = s.parse::<u64>() {
            if k == 0 {
                return Err(Error::Format("design index is one-based".into()));
            }
            return Ok(DesignKey::Index(k));
        }
        if !s.is_empty() && s.bytes().all(|b| b == b'0' || b == b'1') {
            return Ok(DesignKey::Bits(s.to_owned()));
        }
        Err(Error::Format(format!("`{s}` is not a design key")))
    }
}

/// A binary sensor activation pattern.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct DesignVector {
    bits: Vec<bool>,
}

impl DesignVector {
    pub fn from_bits(bits: Vec<bool>) -> Self {
        Self { bits }
    }

    pub fn zeros(nsens: usize) -> Self {
        Self::from_bits(vec![false; nsens])
    }

    pub fn ones(nsens: usize) -> Self {
        Self::from_bits(vec![true; nsens])
    }

    /// Design with the given one-based canonical index,
    /// `k = 1 + sum_i bit_i * 2^i` (bit 0 is sensor 1).
    pub fn from_index(k: u64, nsens: usize) -> Result<Self> {
        if nsens > MAX_INDEXED_SENSORS {
            return Err(Error::InvalidParameter(format!(
                "integer design index needs at most {MAX_INDEXED_SENSORS} sensors, got {nsens}"
            )));
        }
        let count = 1u64 << nsens;
        if k == 0 || k > count {
            return Err(Error::InvalidParameter(format!(
                "design index {k} outside 1..={count}"
            )));
        }
        let code = k - 1;
        Ok(Self::from_bits(
            (0..nsens).map(|i| (code >> i) & 1 == 1).collect(),
        ))
    }

    /// Parse a bit string such as `"1001"` (first character is sensor 1).
    pub fn parse_bits(s: &str) -> Result<Self> {
        s.chars()
            .map(|c| match c {
                '0' => Ok(false),
                '1' => Ok(true),
                _ => Err(Error::Format(format!("`{s}` is not a bit string"))),
            })
            .collect::<Result<Vec<_>>>()
            .map(Self::from_bits)
    }

    pub fn nsens(&self) -> usize {
        self.bits.len()
    }

    pub fn bits(&self) -> &[bool] {
        &self.bits
    }

    pub fn bit(&self, i: usize) -> u8 {
        u8::from(self.bits[i])
    }

    pub fn active_count(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    /// One-based canonical index, if the design is narrow enough.
    pub fn index(&self) -> Option<u64> {
        if self.nsens() > MAX_INDEXED_SENSORS {
            return None;
        }
        let code = self
            .bits
            .iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .fold(0u64, |acc, (i, _)| acc | (1u64 << i));
        Some(code + 1)
    }

    pub fn key(&self) -> DesignKey {
        match self.index() {
            Some(k) => DesignKey::Index(k),
            None => DesignKey::Bits(self.bit_string()),
        }
    }

    pub fn bit_string(&self) -> String {
        self.bits.iter().map(|&b| if b { '1' } else { '0' }).collect()
    }

    /// Componentwise `self <= other`.
    pub fn is_subset_of(&self, other: &DesignVector) -> bool {
        self.nsens() == other.nsens()
            && self.bits.iter().zip(&other.bits).all(|(&a, &b)| !a || b)
    }

    /// All `2^nsens` designs in index order.
    pub fn enumerate(nsens: usize) -> Result<impl Iterator<Item = DesignVector>> {
        if nsens > MAX_INDEXED_SENSORS {
            return Err(Error::InvalidParameter(format!(
                "cannot enumerate {nsens} sensors"
            )));
        }
        Ok((1..=(1u64 << nsens)).map(move |k| {
            DesignVector::from_index(k, nsens).expect("index within range")
        }))
    }
}

impl fmt::Display for DesignVector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.bit_string())
    }
}

/// Marginal probability of sensor `i` taking its value in `design`.
#[inline]
fn factor(bit: bool, p: f64) -> f64 {
    if bit {
        p
    } else {
        1.0 - p
    }
}

/// Joint probability `prod_i theta_i^xi_i (1 - theta_i)^(1 - xi_i)`.
pub fn pmf(design: &DesignVector, theta: &PolicyParameter) -> Result<f64> {
    theta.check_dim(design)?;
    let factors = design.bits.iter().zip(&theta.probs);
    if design.nsens() > LOG_DOMAIN_THRESHOLD {
        let mut log_p = 0.0;
        for (&b, &p) in factors {
            let f = factor(b, p);
            if f == 0.0 {
                return Ok(0.0);
            }
            log_p += f.ln();
        }
        Ok(log_p.exp())
    } else {
        Ok(factors.map(|(&b, &p)| factor(b, p)).product())
    }
}

/// Log of [`pmf`]; `-inf` for designs outside the support.
pub fn log_pmf(design: &DesignVector, theta: &PolicyParameter) -> Result<f64> {
    theta.check_dim(design)?;
    Ok(design
        .bits
        .iter()
        .zip(&theta.probs)
        .map(|(&b, &p)| factor(b, p).ln())
        .sum())
}

/// Gradient of [`pmf`] with respect to the activation probabilities.
///
/// Component `j` is `(-1)^(1 - xi_j)` times the product of the other
/// marginal factors. Prefix/suffix products keep this linear in `nsens`
/// and exact when some factor is zero.
pub fn pmf_gradient(design: &DesignVector, theta: &PolicyParameter) -> Result<Vec<f64>> {
    theta.check_dim(design)?;
    let n = design.nsens();
    let factors: Vec<f64> = design
        .bits
        .iter()
        .zip(&theta.probs)
        .map(|(&b, &p)| factor(b, p))
        .collect();
    let mut prefix = vec![1.0; n + 1];
    for i in 0..n {
        prefix[i + 1] = prefix[i] * factors[i];
    }
    let mut suffix = vec![1.0; n + 1];
    for i in (0..n).rev() {
        suffix[i] = suffix[i + 1] * factors[i];
    }
    Ok((0..n)
        .map(|j| {
            let rest = prefix[j] * suffix[j + 1];
            if design.bits[j] {
                rest
            } else {
                -rest
            }
        })
        .collect())
}

/// Mixed second derivative `d^2 P / d theta_i d theta_j`.
///
/// The PMF is affine in each coordinate, so the diagonal is exactly zero.
pub fn pmf_second_derivative(
    design: &DesignVector,
    theta: &PolicyParameter,
    i: usize,
    j: usize,
) -> Result<f64> {
    theta.check_dim(design)?;
    let n = design.nsens();
    for idx in [i, j] {
        if idx >= n {
            return Err(Error::IndexOutOfRange { index: idx, len: n });
        }
    }
    if i == j {
        return Ok(0.0);
    }
    let rest: f64 = (0..n)
        .filter(|&l| l != i && l != j)
        .map(|l| factor(design.bits[l], theta.probs[l]))
        .product();
    let same_sign = design.bits[i] == design.bits[j];
    Ok(if same_sign { rest } else { -rest })
}

/// Gradient of the log-PMF: `xi_i / theta_i + (xi_i - 1) / (1 - theta_i)`.
///
/// Degenerate components contribute exactly zero. A design that is
/// impossible under a degenerate component is rejected.
pub fn score(design: &DesignVector, theta: &PolicyParameter) -> Result<Vec<f64>> {
    theta.check_dim(design)?;
    design
        .bits
        .iter()
        .zip(&theta.probs)
        .enumerate()
        .map(|(i, (&b, &p))| {
            if p == 0.0 || p == 1.0 {
                if b != (p == 1.0) {
                    return Err(Error::ImpossibleDesign {
                        component: i,
                        bit: u8::from(b),
                        prob: p,
                    });
                }
                Ok(0.0)
            } else if b {
                Ok(1.0 / p)
            } else {
                Ok(-1.0 / (1.0 - p))
            }
        })
        .collect()
}

/// Total variance of the score, `sum_i 1 / (theta_i - theta_i^2)`.
pub fn score_total_variance(theta: &PolicyParameter) -> Result<f64> {
    theta
        .probs
        .iter()
        .enumerate()
        .map(|(i, &p)| {
            if p <= 0.0 || p >= 1.0 {
                Err(Error::DivergentVariance {
                    component: i,
                    prob: p,
                })
            } else {
                Ok(1.0 / (p - p * p))
            }
        })
        .sum()
}

/// Score total variance restricted to interior components. Degenerate
/// components carry a zero score and are skipped; `None` when every
/// component is degenerate.
pub fn interior_score_variance(theta: &PolicyParameter) -> Option<f64> {
    let mut total = 0.0;
    let mut any = false;
    for &p in &theta.probs {
        if p > 0.0 && p < 1.0 {
            total += 1.0 / (p - p * p);
            any = true;
        }
    }
    any.then_some(total)
}

/// Draw one design. Components at 0 or 1 are copied without consuming
/// randomness.
pub fn sample_one<R: Rng + ?Sized>(theta: &PolicyParameter, rng: &mut R) -> DesignVector {
    DesignVector::from_bits(
        theta
            .probs
            .iter()
            .map(|&p| {
                if p == 0.0 {
                    false
                } else if p == 1.0 {
                    true
                } else {
                    rng.gen::<f64>() < p
                }
            })
            .collect(),
    )
}

/// Draw `n` independent designs.
pub fn sample<R: Rng + ?Sized>(
    theta: &PolicyParameter,
    n: usize,
    rng: &mut R,
) -> Result<Vec<DesignVector>> {
    if n == 0 {
        return Err(Error::InvalidParameter("sample size must be >= 1".into()));
    }
    Ok((0..n).map(|_| sample_one(theta, rng)).collect())
}
