//! Relaxation time of the slowest density mode from equilibrium
//! autocorrelations over independent replicas.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::partition::PartitionLadder;
use crate::rate::RateFunction;
use crate::simulate::kmc::{single_particle_gap, stream_rng, Sampler, SimState};

/// The exponential fit uses lags until the autocorrelation first drops
/// below this level.
pub const FIT_FLOOR: f64 = 0.3;
/// The integrated time sums the autocorrelation down to this level.
pub const SUM_FLOOR: f64 = 0.05;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelaxationOptions {
    pub replicas: usize,
    /// Simulated time per replica; default `100 / gap_estimate`.
    pub horizon: Option<f64>,
    /// Sampling interval; default `0.1 / gap_estimate`.
    pub cadence: Option<f64>,
    /// Largest lag, as a multiple of `1 / gap_estimate`.
    pub max_lag: f64,
    pub seed: u64,
}

impl Default for RelaxationOptions {
    fn default() -> Self {
        RelaxationOptions {
            replicas: 16,
            horizon: None,
            cadence: None,
            max_lag: 5.0,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RelaxationEstimate {
    /// `tau` from an exponential fit to the pooled autocorrelation.
    pub tau: f64,
    /// Replica-spread 95% interval around `tau`.
    pub ci: (f64, f64),
    /// `cadence (1/2 + sum_k rho(k))` until `rho` drops below [`SUM_FLOOR`].
    pub tau_integrated: f64,
    pub per_replica: Vec<f64>,
    /// `1 / gap` of one walker in the box, the scale of the defaults.
    pub gap_estimate: f64,
    pub cadence: f64,
    /// Pooled autocorrelation at lags `0, cadence, 2 cadence, ...`.
    pub acf: Vec<f64>,
    /// False when the autocorrelation never fell below [`FIT_FLOOR`].
    pub converged: bool,
}

// lag sums sum_i m_i m_{i+k} / (n - k); the equilibrium mean of the mode is 0
fn autocovariance(m: &[f64], max_lag: usize) -> Vec<f64> {
    (0..=max_lag.min(m.len().saturating_sub(1)))
        .map(|k| {
            let n = m.len() - k;
            m[..n].iter().zip(&m[k..]).map(|(a, b)| a * b).sum::<f64>() / n as f64
        })
        .collect()
}

/// Least-squares slope of `log rho` against time over the leading lags with
/// `rho >= FIT_FLOOR`, turned into `tau = -1 / slope`.
fn exponential_tau(acf: &[f64], cadence: f64) -> Option<(f64, usize)> {
    let window = acf.iter().position(|&r| r < FIT_FLOOR)?;
    if window < 3 {
        return None;
    }
    let pts: Vec<(f64, f64)> = (0..window).map(|k| (k as f64 * cadence, acf[k].ln())).collect();
    let n = pts.len() as f64;
    let (mx, my) = (
        pts.iter().map(|p| p.0).sum::<f64>() / n,
        pts.iter().map(|p| p.1).sum::<f64>() / n,
    );
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let slope = sxy / sxx;
    (slope < 0.0).then(|| (-1.0 / slope, window))
}

pub fn relaxation_estimate(
    lattice: &Lattice,
    rate: &RateFunction,
    n_particles: usize,
    opts: &RelaxationOptions,
) -> Result<RelaxationEstimate> {
    if n_particles == 0 {
        return Err(Error::NoDynamics("no particles".into()));
    }
    if lattice.n_sites() < 2 {
        return Err(Error::NoDynamics("a single site has no jumps".into()));
    }
    if opts.replicas < 8 {
        return Err(Error::Domain(format!("needs at least 8 replicas, got {}", opts.replicas)));
    }
    let scale = 1.0 / single_particle_gap(lattice);
    let horizon = opts.horizon.unwrap_or(100.0 * scale);
    let cadence = opts.cadence.unwrap_or(0.1 * scale);
    if !(horizon > 0.0 && cadence > 0.0 && cadence < horizon) {
        return Err(Error::Domain(format!("bad horizon {horizon} or cadence {cadence}")));
    }
    let max_lag = ((opts.max_lag * scale / cadence).ceil() as usize).max(4);
    let v = lattice.n_sites();
    let ladder = PartitionLadder::new(rate, v, n_particles)?;
    let covs = (0..opts.replicas)
        .into_par_iter()
        .map(|r| {
            // stream 0 draws the initial state, stream 1 drives the dynamics
            let stream = 2 * r as u64;
            let initial = ladder.sample_canonical(v, n_particles, &mut stream_rng(opts.seed, stream))?;
            let mut state = SimState::new(lattice, rate, initial, opts.seed, stream + 1)?;
            let mut sampler = Sampler::new(cadence);
            state.run(horizon, &mut sampler)?;
            let m: Vec<f64> = sampler.samples.iter().map(|s| s.mode).collect();
            Ok(autocovariance(&m, max_lag))
        })
        .collect::<Result<Vec<_>>>()?;
    let lags = covs.iter().map(|c| c.len()).min().unwrap_or(0);
    let pooled: Vec<f64> = (0..lags).map(|k| covs.iter().map(|c| c[k]).sum::<f64>()).collect();
    if lags == 0 || !(pooled[0] > 0.0) {
        return Err(Error::Degenerate("the slow mode does not fluctuate".into()));
    }
    let acf: Vec<f64> = pooled.iter().map(|c| c / pooled[0]).collect();
    let fit = exponential_tau(&acf, cadence);
    let converged = fit.is_some();
    let tau = fit.map_or(f64::NAN, |f| f.0);
    let window = acf.iter().position(|&r| r < SUM_FLOOR).unwrap_or(acf.len());
    let tau_integrated = cadence * (0.5 + acf[1..window].iter().sum::<f64>());
    let per_replica: Vec<f64> = covs
        .iter()
        .filter_map(|c| {
            let a: Vec<f64> = c.iter().map(|x| x / c[0]).collect();
            exponential_tau(&a, cadence).map(|t| t.0)
        })
        .collect();
    let ci = if per_replica.len() >= 2 {
        let n = per_replica.len() as f64;
        let mean = per_replica.iter().sum::<f64>() / n;
        let sd = (per_replica.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
        let half = 1.96 * sd / n.sqrt();
        (tau - half, tau + half)
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(RelaxationEstimate {
        tau,
        ci,
        tau_integrated,
        per_replica,
        gap_estimate: 1.0 / scale,
        cadence,
        acf,
        converged,
    })
}
