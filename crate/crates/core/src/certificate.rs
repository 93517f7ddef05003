//! Scenario-optimization certificate arithmetic.
//!
//! A scenario program solved over `N` i.i.d. constraint samples with a
//! `d`-dimensional decision variable has violation probability above `ε`
//! with probability at most the binomial tail
//! `Σ_{i<d} C(N,i) ε^i (1-ε)^{N-i}`. Both uses in this crate are scalar
//! (`d = 1`): the sample maximum of gap values and the sample minimum of
//! safety values, for which the tail collapses to `(1-ε)^N`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

fn check_probability(name: &'static str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(Error::ProbabilityOutOfRange {
            name,
            value,
            lo: 0.0,
            hi: 1.0,
        })
    }
}

fn check_open_probability(name: &'static str, value: f64) -> Result<()> {
    if value > 0.0 && value < 1.0 {
        Ok(())
    } else {
        Err(Error::ProbabilityOutOfRange {
            name,
            value,
            lo: 0.0,
            hi: 1.0,
        })
    }
}

/// Upper bound on the probability that the scenario solution from `samples`
/// draws violates more than an `epsilon` fraction of constraints.
///
/// Accumulated in log space so that `samples` in the millions does not
/// overflow the binomial coefficients.
pub fn violation_bound(samples: u64, dimension: u64, epsilon: f64) -> Result<f64> {
    if dimension == 0 {
        return Err(Error::InvalidArgument("dimension must be at least 1".into()));
    }
    if samples < dimension {
        return Err(Error::TooFewSamples {
            samples,
            dimension,
        });
    }
    check_probability("epsilon", epsilon)?;

    if epsilon == 0.0 {
        // Only the i = 0 term survives: (1 - 0)^N.
        return Ok(1.0);
    }
    if epsilon == 1.0 {
        // Every term carries (1 - ε)^{N-i} with N - i >= 1.
        return Ok(0.0);
    }

    let ln_eps = epsilon.ln();
    let ln_keep = (-epsilon).ln_1p();
    let n = samples as f64;

    let mut ln_binom = 0.0_f64;
    let mut ln_terms = Vec::with_capacity(dimension as usize);
    for i in 0..dimension {
        if i > 0 {
            let k = i as f64;
            ln_binom += (n - k + 1.0).ln() - k.ln();
        }
        let k = i as f64;
        ln_terms.push(ln_binom + k * ln_eps + (n - k) * ln_keep);
    }

    let peak = ln_terms.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if peak == f64::NEG_INFINITY {
        return Ok(0.0);
    }
    let sum: f64 = ln_terms.iter().map(|t| (t - peak).exp()).sum();
    Ok((peak + sum.ln()).exp().clamp(0.0, 1.0))
}

/// Confidence `1 - (1-ε)^N` attached to a scalar scenario solution.
pub fn confidence_scalar(samples: u64, epsilon: f64) -> Result<f64> {
    if samples == 0 {
        return Err(Error::TooFewSamples {
            samples,
            dimension: 1,
        });
    }
    Ok(1.0 - violation_bound(samples, 1, epsilon)?)
}

/// Smallest `N` with `(1-ε)^N <= beta`.
pub fn required_samples(epsilon: f64, beta: f64) -> Result<u64> {
    check_open_probability("epsilon", epsilon)?;
    check_open_probability("beta", beta)?;

    let estimate = (beta.ln() / (-epsilon).ln_1p()).ceil().max(1.0);
    if !estimate.is_finite() || estimate > u64::MAX as f64 / 2.0 {
        return Err(Error::InvalidArgument(format!(
            "no representable sample count for epsilon = {epsilon}, beta = {beta}"
        )));
    }
    // Guard the rounding of the closed form against the exact predicate.
    let tail = |n: u64| violation_bound(n, 1, epsilon);
    let mut n = estimate as u64;
    while tail(n)? > beta {
        n += 1;
    }
    while n > 1 && tail(n - 1)? <= beta {
        n -= 1;
    }
    Ok(n)
}

/// `(N, ε, confidence, d)` statement about a scenario solution.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Certificate {
    pub sample_count: u64,
    pub epsilon: f64,
    pub confidence: f64,
    pub dimension: u64,
}

impl Certificate {
    pub fn new(sample_count: u64, dimension: u64, epsilon: f64) -> Result<Self> {
        let confidence = 1.0 - violation_bound(sample_count, dimension, epsilon)?;
        Ok(Self {
            sample_count,
            epsilon,
            confidence,
            dimension,
        })
    }

    pub fn scalar(sample_count: u64, epsilon: f64) -> Result<Self> {
        Ok(Self {
            sample_count,
            epsilon,
            confidence: confidence_scalar(sample_count, epsilon)?,
            dimension: 1,
        })
    }

    /// Re-derives the confidence from `(N, d, ε)`; false for tampered files.
    pub fn is_consistent(&self) -> bool {
        match violation_bound(self.sample_count, self.dimension, self.epsilon) {
            Ok(bound) => ((1.0 - bound) - self.confidence).abs() <= 1e-12,
            Err(_) => false,
        }
    }

    /// Minimum probability `1 - ε` that the certified bound holds.
    pub fn probability(&self) -> f64 {
        1.0 - self.epsilon
    }

    /// Short human-readable form, e.g. `≥99% with ≥95% confidence`.
    pub fn summary(&self) -> String {
        format!(
            "≥{}% with ≥{}% confidence",
            percent_round(self.probability()),
            percent_floor(self.confidence)
        )
    }
}

fn trim_percent(tenths: f64) -> String {
    let s = format!("{:.1}", tenths / 10.0);
    s.strip_suffix(".0").map(str::to_owned).unwrap_or(s)
}

fn percent_round(p: f64) -> String {
    trim_percent((p * 1000.0).round())
}

// Confidence is a lower bound, so it is never rounded up.
fn percent_floor(p: f64) -> String {
    trim_percent((p * 1000.0 + 1e-9).floor())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Above,
    Below,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Tail {
    Upper,
    Lower,
}

/// Sorted sample of scalar outcomes (gap values or safety values).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmpiricalDistribution {
    values: Vec<f64>,
    pub source_seed: u64,
}

impl EmpiricalDistribution {
    pub fn new(mut values: Vec<f64>, source_seed: u64) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyDistribution);
        }
        if values.iter().any(|v| v.is_nan()) {
            return Err(Error::InvalidArgument("distribution contains NaN".into()));
        }
        values.sort_by(f64::total_cmp);
        Ok(Self {
            values,
            source_seed,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn min(&self) -> f64 {
        self.values[0]
    }

    pub fn max(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Fraction of values strictly beyond `threshold`; equality never counts
    /// as a violation.
    pub fn violation(&self, threshold: f64, direction: Direction) -> f64 {
        let count = match direction {
            Direction::Above => {
                self.values.len() - self.values.partition_point(|&v| v <= threshold)
            }
            Direction::Below => self.values.partition_point(|&v| v < threshold),
        };
        count as f64 / self.values.len() as f64
    }

    /// Nearest-rank quantile: `1-ε` for the upper tail, `ε` for the lower.
    pub fn cutoff(&self, epsilon: f64, tail: Tail) -> Result<f64> {
        check_open_probability("epsilon", epsilon)?;
        let m = self.values.len();
        let rank = match tail {
            Tail::Upper => m - ((epsilon * m as f64 + 1e-9).floor() as usize).min(m - 1),
            Tail::Lower => ((epsilon * m as f64 - 1e-9).ceil() as usize).clamp(1, m),
        };
        Ok(self.values[rank - 1])
    }
}

pub fn empirical_violation(
    dist: &EmpiricalDistribution,
    threshold: f64,
    direction: Direction,
) -> Result<f64> {
    if dist.is_empty() {
        return Err(Error::EmptyDistribution);
    }
    Ok(dist.violation(threshold, direction))
}

pub fn empirical_cutoff(dist: &EmpiricalDistribution, epsilon: f64, tail: Tail) -> Result<f64> {
    if dist.is_empty() {
        return Err(Error::EmptyDistribution);
    }
    dist.cutoff(epsilon, tail)
}
