//! Grand-canonical single-site laws `mu_rho[eta_x = k] ∝ alpha^k / c(k)!`
//! with certified truncation, and the inversion `rho -> alpha(rho)`.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::log_add_exp;
use crate::rate::RateFunction;

pub const DEFAULT_TAIL_TOL: f64 = 1e-14;
pub const DEFAULT_FUGACITY_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SiteLaw {
    pub fugacity_alpha: f64,
    /// `log Z(alpha)` of the truncated sum.
    pub log_z: f64,
    /// `p(0), ..., p(k_cut)`, normalized over the truncation.
    pub pmf: Vec<f64>,
    /// Certified upper bound on the neglected mass `sum_{k > k_cut} p(k)`.
    pub tail_bound: f64,
    pub mean_rho: f64,
    pub variance_sigma2: f64,
    /// Bound on the truncation error of the first two moments.
    pub moment_error: f64,
    /// Geometric ratio bound used beyond the rate table.
    pub beyond_ratio: f64,
}

impl SiteLaw {
    pub fn k_cut(&self) -> usize {
        self.pmf.len() - 1
    }

    pub fn expectation(&self, f: impl Fn(usize) -> f64) -> f64 {
        self.pmf.iter().enumerate().map(|(k, p)| p * f(k)).sum()
    }

    /// `mu[c(eta_x)]` over the truncation.
    pub fn mean_rate(&self, rate: &RateFunction) -> f64 {
        self.expectation(|k| rate.rate(k))
    }
}

/// Builds the site law at fugacity `alpha`, truncated where the certified
/// tail drops below `tail_tol`.
///
/// Beyond the rate table the envelope `c(k) >= k / A0` is assumed, which
/// bounds the term ratio by `alpha A0 / (n_max + 1)`.
pub fn grand_canonical_site_law(rate: &RateFunction, alpha: f64, tail_tol: f64) -> Result<SiteLaw> {
    if !(alpha >= 0.0) || !alpha.is_finite() {
        return Err(Error::Domain(format!("fugacity must be >= 0, got {alpha}")));
    }
    if alpha == 0.0 {
        return Ok(SiteLaw {
            fugacity_alpha: 0.0,
            log_z: 0.0,
            pmf: vec![1.0],
            tail_bound: 0.0,
            mean_rho: 0.0,
            variance_sigma2: 0.0,
            moment_error: 0.0,
            beyond_ratio: 0.0,
        });
    }
    let n_max = rate.n_max();
    let ratio = alpha * rate.envelope_a0 / (n_max + 1) as f64;
    if ratio >= 1.0 {
        return Err(Error::ExtendTable(format!(
            "alpha = {alpha} with A0 = {} needs a table longer than {n_max}",
            rate.envelope_a0
        )));
    }
    let la = alpha.ln();
    let log_terms: Vec<f64> = (0..=n_max)
        .map(|k| k as f64 * la - rate.log_factorial(k))
        .collect();
    let log_beyond = log_terms[n_max] + (ratio / (1.0 - ratio)).ln();

    // suffix[k] = log sum_{j > k} term_j, including the part beyond the table
    let mut suffix = vec![f64::NEG_INFINITY; n_max + 1];
    suffix[n_max] = log_beyond;
    for k in (0..n_max).rev() {
        suffix[k] = log_add_exp(suffix[k + 1], log_terms[k + 1]);
    }

    let mut log_z = f64::NEG_INFINITY;
    let mut cut = None;
    for k in 0..=n_max {
        log_z = log_add_exp(log_z, log_terms[k]);
        if suffix[k] - log_z <= tail_tol.ln() {
            cut = Some(k);
            break;
        }
    }
    let Some(k_cut) = cut else {
        return Err(Error::ExtendTable(format!(
            "tail at alpha = {alpha} stays above {tail_tol:e} on a table of length {n_max}"
        )));
    };
    let tail_bound = (suffix[k_cut] - log_z).exp();
    let pmf: Vec<f64> = log_terms[..=k_cut]
        .iter()
        .map(|lt| (lt - log_z).exp())
        .collect();
    let mean_rho: f64 = pmf.iter().enumerate().map(|(k, p)| k as f64 * p).sum();
    let variance_sigma2: f64 = pmf
        .iter()
        .enumerate()
        .map(|(k, p)| (k as f64 - mean_rho).powi(2) * p)
        .sum();

    // sum_{k > k_cut} k^2 p(k): exact inside the table, geometric beyond it
    let mut tail_m2: f64 = (k_cut + 1..=n_max)
        .map(|k| (k as f64).powi(2) * (log_terms[k] - log_z).exp())
        .sum();
    let (n, r) = (n_max as f64, ratio);
    let series = n * n * r / (1.0 - r) + 2.0 * n * r / (1.0 - r).powi(2) + r * (1.0 + r) / (1.0 - r).powi(3);
    tail_m2 += (log_terms[n_max] - log_z).exp() * series;
    let moment_error = tail_m2 + (mean_rho * mean_rho + variance_sigma2) * tail_bound;

    Ok(SiteLaw {
        fugacity_alpha: alpha,
        log_z,
        pmf,
        tail_bound,
        mean_rho,
        variance_sigma2,
        moment_error,
        beyond_ratio: ratio,
    })
}

/// Inverts the strictly increasing map `alpha -> rho(alpha)` by bisection
/// with geometric bracket growth. Returns `alpha` with
/// `|rho(alpha) - rho| <= tol * max(rho, 1)`.
pub fn invert_fugacity(rate: &RateFunction, rho: f64, tol: f64) -> Result<f64> {
    if !(rho >= 0.0) || !rho.is_finite() {
        return Err(Error::Domain(format!("density must be >= 0, got {rho}")));
    }
    if rho == 0.0 {
        return Ok(0.0);
    }
    let mean_at = |alpha: f64| -> Result<Option<f64>> {
        match grand_canonical_site_law(rate, alpha, DEFAULT_TAIL_TOL) {
            Ok(law) => Ok(Some(law.mean_rho)),
            Err(Error::ExtendTable(_)) => Ok(None),
            Err(e) => Err(e),
        }
    };
    let target = tol * rho.max(1.0);
    let (mut lo, mut hi) = (0.0, 1.0);
    loop {
        match mean_at(hi)? {
            Some(m) if (m - rho).abs() <= target => return Ok(hi),
            Some(m) if m < rho => {
                lo = hi;
                hi *= 2.0;
                if hi > 1e12 {
                    return Err(Error::ExtendTable(format!("no bracket for rho = {rho}")));
                }
            }
            _ => break,
        }
    }
    let mut best: Option<f64> = None;
    for _ in 0..400 {
        let mid = 0.5 * (lo + hi);
        match mean_at(mid)? {
            Some(m) => {
                if (m - rho).abs() <= target {
                    return Ok(mid);
                }
                best = Some(mid);
                if m < rho {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            None => hi = mid,
        }
        if hi - lo <= f64::EPSILON * hi {
            break;
        }
    }
    match best {
        Some(a) if mean_at(a)?.is_some_and(|m| (m - rho).abs() <= 1e3 * target) => Ok(a),
        _ => Err(Error::ExtendTable(format!(
            "density {rho} not reachable within the rate table"
        ))),
    }
}

/// Site law at density `rho`.
pub fn site_law_at_density(rate: &RateFunction, rho: f64) -> Result<SiteLaw> {
    let alpha = invert_fugacity(rate, rho, DEFAULT_FUGACITY_TOL)?;
    grand_canonical_site_law(rate, alpha, DEFAULT_TAIL_TOL)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rate::RateFamily;

    #[test]
    fn poisson_at_unit_fugacity() {
        let law = grand_canonical_site_law(&RateFamily::Linear(1.0).table(), 1.0, 1e-14).unwrap();
        assert!((law.log_z - 1.0).abs() < 1e-13);
        assert!((law.mean_rho - 1.0).abs() < 1e-13);
        assert!(law.tail_bound <= 1e-14);
        assert!((law.variance_sigma2 - 1.0).abs() <= law.moment_error + 1e-13);
        assert!(law.moment_error < 1e-11);
    }

    #[test]
    fn geometric_for_constant_rate() {
        let law = grand_canonical_site_law(&RateFamily::Constant(1.0).table(), 0.5, 1e-14).unwrap();
        assert!((law.log_z - 2f64.ln()).abs() < 1e-13);
        assert!((law.mean_rho - 1.0).abs() < 1e-12);
    }

    #[test]
    fn zero_fugacity_is_point_mass() {
        let law = grand_canonical_site_law(&RateFamily::Staircase(2).table(), 0.0, 1e-14).unwrap();
        assert_eq!(law.pmf, vec![1.0]);
        assert_eq!(law.log_z, 0.0);
        assert_eq!(law.mean_rho, 0.0);
    }

    #[test]
    fn short_table_requests_extension() {
        let short = RateFamily::Linear(1.0).tabulate(10).unwrap();
        assert!(matches!(
            grand_canonical_site_law(&short, 8.0, 1e-14),
            Err(Error::ExtendTable(_))
        ));
        assert!(grand_canonical_site_law(&short.extended(200).unwrap(), 8.0, 1e-14).is_ok());
        assert!(short.extended(20).unwrap().family.is_some());
    }

    #[test]
    fn inversion_examples() {
        let lin = RateFamily::Linear(1.0).table();
        assert!((invert_fugacity(&lin, 1.5, 1e-13).unwrap() - 1.5).abs() < 1e-11);
        let con = RateFamily::Constant(1.0).table();
        assert!((invert_fugacity(&con, 1.0, 1e-13).unwrap() - 0.5).abs() < 1e-11);
        assert_eq!(invert_fugacity(&lin, 0.0, 1e-12).unwrap(), 0.0);
        assert!(matches!(invert_fugacity(&lin, -1.0, 1e-12), Err(Error::Domain(_))));
    }

    #[test]
    fn inversion_is_accurate_across_densities() {
        for fam in [RateFamily::Linear(1.0), RateFamily::Staircase(2), RateFamily::Constant(1.0)] {
            let rate = fam.table();
            for rho in [0.01, 0.3, 1.0, 4.0, 20.0] {
                let law = site_law_at_density(&rate, rho).unwrap();
                assert!((law.mean_rho - rho).abs() <= 1e-12 * rho.max(1.0), "{fam} {rho}");
            }
        }
    }
}
