//! Exact representations of the discrete gradient
//! `nu[f | n] - nu[f | n-1]` of conditional expectations in the first-half
//! particle count.
//!
//! With `h(k) = (k+1) / c(k+1)` and `d_yx f(eta) = f(eta - e_y + e_x) - f(eta)`:
//!
//! * inflow (particles enter the first half, evaluated on fiber `n-1`):
//!   `gamma(n-1)/gamma(n) / (n |L2|) *
//!    ( nu[sum_{x in L1, y in L2} h(eta_x) c(eta_y) d_yx f | n-1]
//!    + nu[f, sum_{x in L1, y in L2} h(eta_x) c(eta_y) | n-1] )`
//! * outflow (particles leave the first half, evaluated on fiber `n`):
//!   `-gamma(n)/gamma(n-1) / ((N-n+1) |L1|) *
//!    ( nu[sum h(eta_y) c(eta_x) d_xy f | n] + nu[f, sum h(eta_y) c(eta_x) | n] )`
//!
//! Both follow from `nu[eta + e_x] c(eta_x + 1) = nu[eta]` written on the
//! fibers. For equal halves `|L1| = |L2|` is the usual half-length.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decomposition::split::SplitSector;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, Serialize, Deserialize)]
pub(crate) struct FiberStats {
    pub mean: f64,
    // conditional mean of the inflow gradient sum
    pub grad_in: f64,
    pub cov_in: f64,
    pub grad_out: f64,
    pub cov_out: f64,
}

pub(crate) fn fiber_stats(split: &SplitSector, f: &[f64], k: usize) -> Result<FiberStats> {
    let w = split.conditional_weights(k)?;
    let fiber = split.fiber(k);
    let sector = split.sector();
    let rate = split.rate();
    let h = |m: u32| rate.h(m as usize);
    let c = |m: u32| rate.rate(m as usize);
    let mut scratch = Vec::with_capacity(sector.n_sites());
    let (mut mean, mut grad_in, mut grad_out) = (0.0, 0.0, 0.0);
    let mut g_in = Vec::with_capacity(fiber.len());
    let mut g_out = Vec::with_capacity(fiber.len());
    for (&i, &p) in fiber.iter().zip(&w) {
        let cfg = sector.config(i);
        let fi = f[i];
        mean += p * fi;
        let (mut s_in, mut s_out) = (0.0, 0.0);
        for &x in split.half1() {
            for &y in split.half2() {
                if cfg[y] > 0 {
                    let j = sector.moved_rank(i, y, x, &mut scratch);
                    s_in += h(cfg[x]) * c(cfg[y]) * (f[j] - fi);
                }
                if cfg[x] > 0 {
                    let j = sector.moved_rank(i, x, y, &mut scratch);
                    s_out += h(cfg[y]) * c(cfg[x]) * (f[j] - fi);
                }
            }
        }
        grad_in += p * s_in;
        grad_out += p * s_out;
        let sum = |half: &[usize], g: &dyn Fn(u32) -> f64| half.iter().map(|&x| g(cfg[x])).sum::<f64>();
        g_in.push(sum(split.half1(), &h) * sum(split.half2(), &c));
        g_out.push(sum(split.half2(), &h) * sum(split.half1(), &c));
    }
    let cov = |g: &[f64]| {
        let mg: f64 = w.iter().zip(g).map(|(p, v)| p * v).sum();
        fiber
            .iter()
            .zip(&w)
            .zip(g)
            .map(|((&i, p), v)| p * (f[i] - mean) * (v - mg))
            .sum::<f64>()
    };
    Ok(FiberStats {
        mean,
        grad_in,
        cov_in: cov(&g_in),
        grad_out,
        cov_out: cov(&g_out),
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GradientTerms {
    pub n: usize,
    pub direct: f64,
    pub inflow: f64,
    pub outflow: f64,
    /// Gradient and covariance parts of `inflow`.
    pub inflow_parts: (f64, f64),
    pub outflow_parts: (f64, f64),
}

fn terms(split: &SplitSector, n: usize, below: &FiberStats, at: &FiberStats) -> GradientTerms {
    let big_n = split.n_particles() as f64;
    let lg = |k: usize| split.gamma().log_prob(k);
    let pre_in = (lg(n - 1) - lg(n)).exp() / (n as f64 * split.half2().len() as f64);
    let pre_out =
        -(lg(n) - lg(n - 1)).exp() / ((big_n - n as f64 + 1.0) * split.half1().len() as f64);
    let inflow_parts = (pre_in * below.grad_in, pre_in * below.cov_in);
    let outflow_parts = (pre_out * at.grad_out, pre_out * at.cov_out);
    GradientTerms {
        n,
        direct: at.mean - below.mean,
        inflow: inflow_parts.0 + inflow_parts.1,
        outflow: outflow_parts.0 + outflow_parts.1,
        inflow_parts,
        outflow_parts,
    }
}

fn check_n(split: &SplitSector, f: &[f64], n: usize) -> Result<()> {
    split.check_len(f.len())?;
    if n == 0 || n > split.n_particles() {
        return Err(Error::Domain(format!(
            "gradient index n = {n} outside 1..={}",
            split.n_particles()
        )));
    }
    for k in [n - 1, n] {
        if split.check_fiber(k).is_err() {
            return Err(Error::Degenerate(format!("gamma({k}) = 0")));
        }
    }
    Ok(())
}

pub fn gradient_representation(split: &SplitSector, f: &[f64], n: usize) -> Result<GradientTerms> {
    check_n(split, f, n)?;
    let below = fiber_stats(split, f, n - 1)?;
    let at = fiber_stats(split, f, n)?;
    Ok(terms(split, n, &below, &at))
}

/// Gradient terms for every `n = 1..=N`, each fiber visited once.
pub fn gradient_table(split: &SplitSector, f: &[f64]) -> Result<Vec<GradientTerms>> {
    split.check_len(f.len())?;
    let n = split.n_particles();
    if n == 0 {
        return Ok(Vec::new());
    }
    for k in 1..=n {
        check_n(split, f, k)?;
    }
    let stats = (0..=n)
        .into_par_iter()
        .map(|k| fiber_stats(split, f, k))
        .collect::<Result<Vec<_>>>()?;
    Ok((1..=n).map(|k| terms(split, k, &stats[k - 1], &stats[k])).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Branch {
    /// `2n >= N`: the inflow representation.
    Inflow,
    Outflow,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct AbSplit {
    /// Conditional gradient part.
    pub a: f64,
    /// Conditional covariance part; vanishes for linear rates.
    pub b: f64,
    pub branch: Branch,
}

impl GradientTerms {
    pub fn ab(&self, n_particles: usize) -> AbSplit {
        if 2 * self.n >= n_particles {
            AbSplit {
                a: self.inflow_parts.0,
                b: self.inflow_parts.1,
                branch: Branch::Inflow,
            }
        } else {
            AbSplit {
                a: self.outflow_parts.0,
                b: self.outflow_parts.1,
                branch: Branch::Outflow,
            }
        }
    }
}

pub fn ab_split(split: &SplitSector, f: &[f64], n: usize) -> Result<AbSplit> {
    Ok(gradient_representation(split, f, n)?.ab(split.n_particles()))
}
