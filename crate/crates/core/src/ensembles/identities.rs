//! Exact single-site identities of the grand-canonical law, checked on
//! truncated sums.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::rate::RateFunction;
use crate::site_law::{grand_canonical_site_law, invert_fugacity, DEFAULT_FUGACITY_TOL, DEFAULT_TAIL_TOL};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentityRow {
    pub alpha: f64,
    pub rho: f64,
    /// Max relative residual of `mu[c f] = alpha mu[T f]` over indicators
    /// `f = 1(n = j)` and `f = 1`.
    pub shift_residual: f64,
    /// Relative residual of `mu[1/c(n+1)] = (Z - 1) / (alpha Z)`; `None` at
    /// `alpha = 0`.
    pub inverse_rate_residual: Option<f64>,
    /// `rho * Var_mu(h)`, `h(n) = (n+1) / c(n+1)`.
    pub h_variance_rho: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct IdentityReport {
    pub rows: Vec<IdentityRow>,
    pub max_shift_residual: f64,
    pub max_inverse_rate_residual: f64,
    pub skipped_alphas: Vec<f64>,
    pub max_h_variance_rho: f64,
}

fn rel(a: f64, b: f64) -> f64 {
    let scale = a.abs().max(b.abs());
    if scale == 0.0 {
        0.0
    } else {
        (a - b).abs() / scale
    }
}

pub fn identity_row(rate: &RateFunction, alpha: f64) -> Result<IdentityRow> {
    let law = grand_canonical_site_law(rate, alpha, DEFAULT_TAIL_TOL)?;
    let k_cut = law.k_cut();
    rate.ensure_tabulated(k_cut + 1)?;
    let p = &law.pmf;
    let mut shift: f64 = 0.0;
    for j in 0..=k_cut {
        let lhs = rate.rate(j) * p[j];
        let rhs = if j == 0 { 0.0 } else { alpha * p[j - 1] };
        shift = shift.max(rel(lhs, rhs));
    }
    // f = 1 picks up the mass beyond the cut, hence the tail allowance
    let mean_c = law.mean_rate(rate);
    shift = shift.max((rel(mean_c, alpha) - law.tail_bound - p[k_cut]).max(0.0));

    let inverse_rate_residual = (alpha > 0.0).then(|| {
        let lhs: f64 = (0..=k_cut).map(|k| p[k] / rate.rate(k + 1)).sum();
        // (Z - 1) / Z = 1 - p(0), summed without cancellation
        let rhs = p[1..].iter().sum::<f64>() / alpha;
        (rel(lhs, rhs) - law.tail_bound).max(0.0)
    });

    let h: Vec<f64> = (0..=k_cut).map(|k| rate.h(k)).collect();
    let mh: f64 = p.iter().zip(&h).map(|(a, b)| a * b).sum();
    let var_h: f64 = p.iter().zip(&h).map(|(a, b)| a * (b - mh).powi(2)).sum();
    Ok(IdentityRow {
        alpha,
        rho: law.mean_rho,
        shift_residual: shift,
        inverse_rate_residual,
        h_variance_rho: law.mean_rho * var_h,
    })
}

pub fn identity_suite(rate: &RateFunction, alphas: &[f64]) -> Result<IdentityReport> {
    let rows = alphas
        .iter()
        .map(|&a| identity_row(rate, a))
        .collect::<Result<Vec<_>>>()?;
    let max = |f: &dyn Fn(&IdentityRow) -> f64| rows.iter().map(f).fold(0.0, f64::max);
    Ok(IdentityReport {
        max_shift_residual: max(&|r| r.shift_residual),
        max_inverse_rate_residual: max(&|r| r.inverse_rate_residual.unwrap_or(0.0)),
        skipped_alphas: rows
            .iter()
            .filter(|r| r.inverse_rate_residual.is_none())
            .map(|r| r.alpha)
            .collect(),
        max_h_variance_rho: max(&|r| r.h_variance_rho),
        rows,
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DensityRow {
    pub rho: f64,
    pub alpha: f64,
    pub alpha_over_rho: f64,
    pub sigma2_over_rho: f64,
}

/// `alpha(rho) / rho` and `sigma^2(rho) / rho` along a density grid.
pub fn density_scan(rate: &RateFunction, rhos: &[f64]) -> Result<Vec<DensityRow>> {
    rhos.iter()
        .filter(|&&r| r > 0.0)
        .map(|&rho| {
            let alpha = invert_fugacity(rate, rho, DEFAULT_FUGACITY_TOL)?;
            let law = grand_canonical_site_law(rate, alpha, DEFAULT_TAIL_TOL)?;
            Ok(DensityRow {
                rho,
                alpha,
                alpha_over_rho: alpha / rho,
                sigma2_over_rho: law.variance_sigma2 / rho,
            })
        })
        .collect()
}
