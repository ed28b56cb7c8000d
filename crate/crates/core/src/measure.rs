//! Probability vectors over indexed finite spaces, stored in log-space, and
//! the canonical measure of a sector.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rate::RateFunction;
use crate::sector::{format_config, Sector};

pub fn log_sum_exp(values: &[f64]) -> f64 {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY {
        return max;
    }
    max + values.iter().map(|&v| (v - max).exp()).sum::<f64>().ln()
}

#[inline]
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiscreteMeasure {
    log_weights: Vec<f64>,
    log_normalizer: f64,
    probs: Vec<f64>,
}

impl DiscreteMeasure {
    pub fn from_log_weights(log_weights: Vec<f64>) -> Result<Self> {
        if log_weights.is_empty() {
            return Err(Error::EmptyInput("measure weights"));
        }
        let log_normalizer = log_sum_exp(&log_weights);
        if !log_normalizer.is_finite() {
            return Err(Error::Degenerate("measure has no mass".into()));
        }
        let probs = log_weights
            .iter()
            .map(|&w| (w - log_normalizer).exp())
            .collect();
        Ok(DiscreteMeasure {
            log_weights,
            log_normalizer,
            probs,
        })
    }

    pub fn from_weights(weights: &[f64]) -> Result<Self> {
        if weights.iter().any(|&w| !(w >= 0.0) || !w.is_finite()) {
            return Err(Error::Domain("weights must be finite and non-negative".into()));
        }
        Self::from_log_weights(weights.iter().map(|w| w.ln()).collect())
    }

    pub fn point_mass(size: usize, at: usize) -> Result<Self> {
        let mut lw = vec![f64::NEG_INFINITY; size];
        *lw.get_mut(at)
            .ok_or_else(|| Error::Domain(format!("point {at} outside space of size {size}")))? =
            0.0;
        Self::from_log_weights(lw)
    }

    pub fn space_size(&self) -> usize {
        self.probs.len()
    }

    pub fn log_weights(&self) -> &[f64] {
        &self.log_weights
    }

    /// `log Z`, the log-sum-exp of the weights.
    pub fn log_normalizer(&self) -> f64 {
        self.log_normalizer
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    #[inline]
    pub fn prob(&self, i: usize) -> f64 {
        self.probs[i]
    }

    #[inline]
    pub fn log_prob(&self, i: usize) -> f64 {
        self.log_weights[i] - self.log_normalizer
    }

    pub fn expectation(&self, f: &[f64]) -> f64 {
        self.probs.iter().zip(f).map(|(p, v)| p * v).sum()
    }

    pub fn mean_and_variance(&self, f: &[f64]) -> (f64, f64) {
        let mean = self.expectation(f);
        let var = self
            .probs
            .iter()
            .zip(f)
            .map(|(p, v)| p * (v - mean) * (v - mean))
            .sum();
        (mean, var)
    }

    /// Covariance `mu[f, g]`.
    pub fn covariance(&self, f: &[f64], g: &[f64]) -> f64 {
        let mf = self.expectation(f);
        let mg = self.expectation(g);
        self.probs
            .iter()
            .zip(f.iter().zip(g))
            .map(|(p, (a, b))| p * (a - mf) * (b - mg))
            .sum()
    }

    /// Total variation distance to another measure on the same space.
    pub fn total_variation(&self, other: &[f64]) -> f64 {
        0.5 * self
            .probs
            .iter()
            .zip(other)
            .map(|(p, q)| (p - q).abs())
            .sum::<f64>()
    }

    /// Writes `index,config,prob` rows.
    pub fn write_csv<W: Write>(&self, sector: &Sector, out: W) -> Result<()> {
        if sector.size() != self.space_size() {
            return Err(Error::Shape {
                expected: sector.size(),
                actual: self.space_size(),
            });
        }
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["index", "config", "prob"])?;
        for (i, p) in self.probs.iter().enumerate() {
            w.write_record([
                i.to_string(),
                format_config(sector.config(i)),
                format!("{p:.17e}"),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// `nu_Lambda^N[{eta}] ∝ prod_x 1 / c(eta_x)!`.
pub fn canonical_measure(sector: &Sector, rate: &RateFunction) -> Result<DiscreteMeasure> {
    rate.ensure_tabulated(sector.n_particles())?;
    let log_weights = sector
        .configs()
        .map(|c| -c.iter().map(|&k| rate.log_factorial(k as usize)).sum::<f64>())
        .collect();
    DiscreteMeasure::from_log_weights(log_weights)
}
