//! Laws of the total particle number `p_V(n) = mu_rho[eta_V = n]` and their
//! local-limit errors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::log_add_exp;
use crate::partition::log_convolve;
use crate::site_law::SiteLaw;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CountLaw {
    pub site_law: SiteLaw,
    pub volume: usize,
    /// `p(0), ..., p(n_cut)` with `n_cut = volume * k_cut`.
    pub pmf: Vec<f64>,
    /// Total variation distance to the untruncated law is at most this
    /// (union bound over sites).
    pub tail_bound: f64,
}

impl CountLaw {
    pub fn n_cut(&self) -> usize {
        self.pmf.len() - 1
    }

    pub fn prob(&self, n: usize) -> f64 {
        self.pmf.get(n).copied().unwrap_or(0.0)
    }

    pub fn mass(&self) -> f64 {
        self.pmf.iter().sum()
    }

    pub fn mean(&self) -> f64 {
        self.pmf.iter().enumerate().map(|(n, p)| n as f64 * p).sum()
    }

    /// Bound on `|mean() - rho V|` from the site-level truncation.
    pub fn mean_error(&self) -> f64 {
        // the site moment error also bounds the first-moment tail
        self.volume as f64 * self.site_law.moment_error
    }
}

/// `volume`-fold convolution of the site law, by log-space doubling.
pub fn total_count_law(site_law: &SiteLaw, volume: usize) -> Result<CountLaw> {
    if volume == 0 {
        return Err(Error::Domain("volume must be >= 1".into()));
    }
    let tail_bound = volume as f64 * site_law.tail_bound;
    if tail_bound >= 1e-6 {
        return Err(Error::ExtendCut(format!(
            "site tail {:e} times volume {volume} is too coarse",
            site_law.tail_bound
        )));
    }
    let len = volume * site_law.k_cut() + 1;
    let site: Vec<f64> = site_law.pmf.iter().map(|p| p.ln()).collect();
    let mut result = vec![f64::NEG_INFINITY; 1];
    result[0] = 0.0;
    let mut power = site;
    let mut v = volume;
    while v > 0 {
        if v & 1 == 1 {
            let l = (result.len() + power.len() - 1).min(len);
            result = log_convolve(&result, &power, l);
        }
        v >>= 1;
        if v > 0 {
            let l = (2 * power.len() - 1).min(len);
            power = log_convolve(&power, &power, l);
        }
    }
    let log_mass = result.iter().fold(f64::NEG_INFINITY, |a, &b| log_add_exp(a, b));
    let pmf = result.iter().map(|l| (l - log_mass).exp()).collect();
    Ok(CountLaw {
        site_law: site_law.clone(),
        volume,
        pmf,
        tail_bound,
    })
}

fn poisson_pmf(mean: f64, n_max: usize) -> Vec<f64> {
    let mut out = Vec::with_capacity(n_max + 1);
    let mut log_fact = 0.0;
    for n in 0..=n_max {
        if n > 0 {
            log_fact += (n as f64).ln();
        }
        out.push(if mean == 0.0 {
            if n == 0 { 1.0 } else { 0.0 }
        } else {
            (n as f64 * mean.ln() - mean - log_fact).exp()
        });
    }
    out
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct LltErrors {
    /// `max_{0 < n <= N} |p(n) - N^n e^{-N} / n!|`.
    pub poisson_err: f64,
    /// `max_n |s p(n) - phi((n - rho V) / s)|`, `s = sqrt(sigma^2 V)`.
    pub gaussian_err: f64,
    pub sigma2: f64,
}

pub fn llt_errors(law: &CountLaw, big_n: usize) -> Result<LltErrors> {
    let sigma2 = law.site_law.variance_sigma2;
    if !(sigma2 > 0.0) {
        return Err(Error::Degenerate("sigma^2 = 0 at zero fugacity".into()));
    }
    let poisson = poisson_pmf(big_n as f64, big_n);
    let poisson_err = (1..=big_n)
        .map(|n| (law.prob(n) - poisson[n]).abs())
        .fold(0.0, f64::max);
    let v = law.volume as f64;
    let s = (sigma2 * v).sqrt();
    let centre = law.site_law.mean_rho * v;
    let phi = |z: f64| (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt();
    // beyond n_cut the law is below the tail bound; scan a little past it
    let gaussian_err = (0..=law.n_cut() + (6.0 * s) as usize)
        .map(|n| (s * law.prob(n) - phi((n as f64 - centre) / s)).abs())
        .fold(0.0, f64::max);
    Ok(LltErrors {
        poisson_err,
        gaussian_err,
        sigma2,
    })
}
