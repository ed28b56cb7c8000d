//! Canonical versus grand-canonical comparison on sub-volumes, and the
//! single-site equivalence gap.

use std::fmt;
use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::partition::{canonical_site_marginal, log_partition_table};
use crate::rate::RateFunction;
use crate::site_law::{grand_canonical_site_law, invert_fugacity, DEFAULT_FUGACITY_TOL, DEFAULT_TAIL_TOL};

/// Below this particle number a cell counts as very small density.
pub const DEFAULT_SMALL_N0: usize = 6;
pub const DEFAULT_RHO0: f64 = 1.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RatioProfile {
    pub volume: usize,
    pub sub_volume: usize,
    pub big_n: usize,
    pub alpha: f64,
    /// `log p_{V - V'}(N - n) - log p_V(N)` for `n = 0..=N`.
    pub log_ratio: Vec<f64>,
    pub sup: f64,
    pub argmax: usize,
}

fn sub_volume(volume: usize, delta0: f64) -> Result<usize> {
    if !(delta0 > 0.0 && delta0 < 1.0) {
        return Err(Error::Domain(format!("sub-volume fraction must lie in (0, 1), got {delta0}")));
    }
    let sub = (delta0 * volume as f64).floor() as usize;
    if sub == 0 || sub >= volume {
        return Err(Error::Domain(format!(
            "floor({delta0} * {volume}) = {sub} leaves no proper sub-volume"
        )));
    }
    Ok(sub)
}

// log Z_V^n tables for the two volumes, valid for every N <= n_max
struct Tables {
    full: Vec<f64>,
    rest: Vec<f64>,
}

impl Tables {
    fn new(rate: &RateFunction, volume: usize, sub: usize, n_max: usize) -> Result<Self> {
        Ok(Tables {
            full: log_partition_table(rate, volume, n_max)?,
            rest: log_partition_table(rate, volume - sub, n_max)?,
        })
    }
}

fn profile(rate: &RateFunction, volume: usize, sub: usize, big_n: usize, t: &Tables) -> Result<RatioProfile> {
    let rho = big_n as f64 / volume as f64;
    let alpha = invert_fugacity(rate, rho, DEFAULT_FUGACITY_TOL)?;
    let log_ratio: Vec<f64> = if big_n == 0 {
        vec![0.0]
    } else {
        if !t.full[big_n].is_finite() {
            return Err(Error::Degenerate(format!("p_V(N) vanishes at N = {big_n}")));
        }
        let log_z = grand_canonical_site_law(rate, alpha, DEFAULT_TAIL_TOL)?.log_z;
        let la = alpha.ln();
        // p_W(m) = alpha^m Z_W^m / Z(alpha)^W
        (0..=big_n)
            .map(|n| -(n as f64) * la + t.rest[big_n - n] - t.full[big_n] + sub as f64 * log_z)
            .collect()
    };
    let (argmax, &best) = log_ratio
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.total_cmp(b.1))
        .unwrap();
    Ok(RatioProfile {
        volume,
        sub_volume: sub,
        big_n,
        alpha,
        sup: best.exp(),
        argmax,
        log_ratio,
    })
}

/// `sup_{0 <= n <= N} p_{V - V'}(N - n) / p_V(N)` at `rho = N / V`, with
/// `V' = floor(delta0 V)`.
pub fn ensemble_ratio(rate: &RateFunction, volume: usize, delta0: f64, big_n: usize) -> Result<RatioProfile> {
    let sub = sub_volume(volume, delta0)?;
    let t = Tables::new(rate, volume, sub, big_n)?;
    profile(rate, volume, sub, big_n, &t)
}

pub fn ensemble_ratio_sup(rate: &RateFunction, volume: usize, delta0: f64, big_n: usize) -> Result<f64> {
    Ok(ensemble_ratio(rate, volume, delta0, big_n)?.sup)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum Regime {
    /// `N < n0`.
    VerySmall,
    /// `n0 <= N <= rho0 V`.
    Small,
    /// `N > rho0 V`.
    Large,
}

impl Regime {
    pub fn classify(big_n: usize, volume: usize, n0: usize, rho0: f64) -> Regime {
        if big_n < n0 {
            Regime::VerySmall
        } else if big_n as f64 <= rho0 * volume as f64 {
            Regime::Small
        } else {
            Regime::Large
        }
    }
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::VerySmall => "very_small",
            Regime::Small => "small",
            Regime::Large => "large",
        })
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RegimeOptions {
    pub delta0: f64,
    pub rho0: f64,
    pub n0: usize,
    /// Cells run over `N = 1..=max_density * V`.
    pub max_density: usize,
}

impl Default for RegimeOptions {
    fn default() -> Self {
        RegimeOptions {
            delta0: 0.5,
            rho0: DEFAULT_RHO0,
            n0: DEFAULT_SMALL_N0,
            max_density: 4,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegimeRow {
    pub rate: String,
    pub volume: usize,
    pub regime: Regime,
    pub max_ratio: f64,
    /// Particle number attaining `max_ratio`.
    pub at_n: usize,
    pub cells: usize,
}

/// Per-volume, per-regime maxima of the sup-ratio. Rows sorted by volume
/// then regime.
pub fn regime_table(rate: &RateFunction, volumes: &[usize], opts: &RegimeOptions) -> Result<Vec<RegimeRow>> {
    let mut rows = Vec::new();
    for &volume in volumes {
        let sub = sub_volume(volume, opts.delta0)?;
        let n_max = opts.max_density * volume;
        let t = Tables::new(rate, volume, sub, n_max)?;
        let sups = (1..=n_max)
            .into_par_iter()
            .map(|n| profile(rate, volume, sub, n, &t).map(|p| (n, p.sup)))
            .collect::<Result<Vec<_>>>()?;
        for regime in [Regime::VerySmall, Regime::Small, Regime::Large] {
            let cells: Vec<_> = sups
                .iter()
                .filter(|(n, _)| Regime::classify(*n, volume, opts.n0, opts.rho0) == regime)
                .collect();
            if let Some(&&(at_n, max_ratio)) = cells.iter().max_by(|a, b| a.1.total_cmp(&b.1)) {
                rows.push(RegimeRow {
                    rate: rate.label.clone(),
                    volume,
                    regime,
                    max_ratio,
                    at_n,
                    cells: cells.len(),
                });
            }
        }
    }
    Ok(rows)
}

pub fn write_regime_csv<W: Write>(rows: &[RegimeRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["rate", "volume", "regime", "max_ratio", "at_N", "cells"])?;
    for r in rows {
        w.write_record([
            r.rate.clone(),
            r.volume.to_string(),
            r.regime.to_string(),
            format!("{:e}", r.max_ratio),
            r.at_n.to_string(),
            r.cells.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// `|nu_V^N[c(eta_x)] - mu_{N/V}[c(eta_x)]|`, with the canonical marginal
/// from partition functions.
pub fn equivalence_gap(rate: &RateFunction, volume: usize, big_n: usize, site: usize) -> Result<f64> {
    if site >= volume {
        return Err(Error::Domain(format!("site {site} outside a volume of {volume}")));
    }
    if big_n == 0 {
        return Ok(0.0);
    }
    let marginal = canonical_site_marginal(rate, volume, big_n)?;
    let canonical: f64 = marginal.iter().enumerate().map(|(k, p)| p * rate.rate(k)).sum();
    let alpha = invert_fugacity(rate, big_n as f64 / volume as f64, DEFAULT_FUGACITY_TOL)?;
    // mu_rho[c] = alpha exactly; the site law only enters through alpha
    Ok((canonical - alpha).abs())
}
