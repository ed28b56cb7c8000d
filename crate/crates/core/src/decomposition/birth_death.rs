//! The Metropolis birth-death chain reversible for `gamma`, and a Hardy-type
//! bracket for its log-Sobolev constant.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;
use crate::spectral::chain::ReversibleChain;

pub const DEFAULT_HARDY_FACTOR: f64 = 20.0;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BirthDeathChain {
    pub pmf: Vec<f64>,
    /// `min(gamma(n+1) / gamma(n), 1)`, zero at the top of the support.
    pub up_rates: Vec<f64>,
    /// `min(gamma(n-1) / gamma(n), 1)`, zero at the bottom of the support.
    pub down_rates: Vec<f64>,
    log_pmf: Vec<f64>,
    support: (usize, usize),
}

pub fn birth_death_generator(gamma: &DiscreteMeasure) -> Result<BirthDeathChain> {
    let len = gamma.space_size();
    let log_pmf: Vec<f64> = (0..len).map(|n| gamma.log_prob(n)).collect();
    let lo = log_pmf.iter().position(|l| l.is_finite()).ok_or(Error::EmptyInput("gamma"))?;
    let hi = log_pmf.iter().rposition(|l| l.is_finite()).unwrap();
    if let Some(n) = (lo..=hi).find(|&n| !log_pmf[n].is_finite()) {
        return Err(Error::DisconnectedSupport(n));
    }
    let mut up = vec![0.0; len];
    let mut down = vec![0.0; len];
    for n in lo..hi {
        up[n] = (log_pmf[n + 1] - log_pmf[n]).exp().min(1.0);
        down[n + 1] = (log_pmf[n] - log_pmf[n + 1]).exp().min(1.0);
    }
    Ok(BirthDeathChain {
        pmf: gamma.probs().to_vec(),
        up_rates: up,
        down_rates: down,
        log_pmf,
        support: (lo, hi),
    })
}

impl BirthDeathChain {
    pub fn support(&self) -> (usize, usize) {
        self.support
    }

    /// Conductance `gamma(n) ∧ gamma(n-1)` of the bond `{n-1, n}`.
    pub fn conductance(&self, n: usize) -> f64 {
        self.log_pmf[n].min(self.log_pmf[n - 1]).exp()
    }

    /// `(A phi)(n) = up(n) (phi(n+1) - phi(n)) + down(n) (phi(n-1) - phi(n))`.
    pub fn apply(&self, phi: &[f64]) -> Vec<f64> {
        let len = self.pmf.len();
        (0..len)
            .map(|n| {
                let mut v = 0.0;
                if n + 1 < len {
                    v += self.up_rates[n] * (phi[n + 1] - phi[n]);
                }
                if n > 0 {
                    v += self.down_rates[n] * (phi[n - 1] - phi[n]);
                }
                v
            })
            .collect()
    }

    pub fn dirichlet(&self, phi: &[f64]) -> f64 {
        let (lo, hi) = self.support;
        (lo + 1..=hi)
            .map(|n| self.conductance(n) * (phi[n] - phi[n - 1]).powi(2))
            .sum()
    }

    /// `max_n |gamma(n) up(n) - gamma(n+1) down(n+1)|`.
    pub fn reversibility_residual(&self) -> f64 {
        (1..self.pmf.len())
            .map(|n| (self.pmf[n - 1] * self.up_rates[n - 1] - self.pmf[n] * self.down_rates[n]).abs())
            .fold(0.0, f64::max)
    }

    /// The chain restricted to its support interval, state `k` standing for
    /// `n = lo + k`.
    pub fn to_reversible_chain(&self) -> Result<ReversibleChain> {
        let (lo, hi) = self.support;
        let pi = self.pmf[lo..=hi].to_vec();
        let edges: Vec<(usize, usize, f64)> = (lo + 1..=hi)
            .map(|n| (n - 1 - lo, n - lo, self.conductance(n)))
            .collect();
        ReversibleChain::from_edges(pi, &edges)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct HardyBracket {
    pub functional: f64,
    pub lower: f64,
    pub upper: f64,
}

/// Median-split Hardy functional
/// `max_k T(k) log(1 + 1/T(k)) R(k)` over both tails, where `T` is the tail
/// mass beyond `k` and `R` the resistance between the median and `k`. The
/// bracket is `[H / factor, H * factor]`.
pub fn hardy_lsi_bound(chain: &BirthDeathChain, factor: f64) -> HardyBracket {
    let (lo, hi) = chain.support;
    if lo == hi {
        return HardyBracket {
            functional: 0.0,
            lower: 0.0,
            upper: 0.0,
        };
    }
    let p = &chain.pmf;
    let mut acc = 0.0;
    let mut median = hi;
    for (n, &q) in p.iter().enumerate().take(hi + 1).skip(lo) {
        acc += q;
        if acc >= 0.5 {
            median = n;
            break;
        }
    }
    let term = |t: f64, r: f64| if t > 0.0 { t * (1.0 / t).ln_1p() * r } else { 0.0 };
    let mut h: f64 = 0.0;

    // tails summed from their far end so tiny masses keep full precision
    let mut suffix = vec![0.0; hi + 2];
    for k in (lo..=hi).rev() {
        suffix[k] = suffix[k + 1] + p[k];
    }
    let mut prefix = vec![0.0; hi + 1];
    let mut running = 0.0;
    for k in lo..=hi {
        running += p[k];
        prefix[k] = running;
    }
    // right tails [k, hi], resistance over bonds median+1..=k
    let mut r = 0.0;
    for k in median + 1..=hi {
        r += 1.0 / chain.conductance(k);
        h = h.max(term(suffix[k], r));
    }
    // left tails [lo, k], resistance over bonds k+1..=median
    let mut r = 0.0;
    for k in (lo..median).rev() {
        r += 1.0 / chain.conductance(k + 1);
        h = h.max(term(prefix[k], r));
    }
    HardyBracket {
        functional: h,
        lower: h / factor,
        upper: h * factor,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::lsi::{chain_lsi_constant, lsi_ratio, LsiOptions};

    #[test]
    fn metropolis_rates() {
        let g = DiscreteMeasure::from_weights(&[0.25, 0.5, 0.25]).unwrap();
        let c = birth_death_generator(&g).unwrap();
        assert_eq!(c.up_rates, vec![1.0, 0.5, 0.0]);
        assert_eq!(c.down_rates, vec![0.0, 0.5, 1.0]);

        let u = DiscreteMeasure::from_weights(&[1.0; 6]).unwrap();
        let c = birth_death_generator(&u).unwrap();
        assert!(c.up_rates[..5].iter().all(|&r| (r - 1.0).abs() < 1e-15));
        assert!(c.down_rates[1..].iter().all(|&r| (r - 1.0).abs() < 1e-15));
    }

    #[test]
    fn reversible_and_form_matches_generator() {
        let w = [0.3, 2.0, 0.01, 1.7, 4.0, 0.2, 0.9];
        let g = DiscreteMeasure::from_weights(&w).unwrap();
        let c = birth_death_generator(&g).unwrap();
        assert!(c.reversibility_residual() < 1e-12);
        let phi = [1.0, -2.0, 0.5, 3.0, 0.0, 1.5, -1.0];
        let a = c.apply(&phi);
        let minus_inner: f64 = -(0..7).map(|n| c.pmf[n] * phi[n] * a[n]).sum::<f64>();
        assert!((c.dirichlet(&phi) - minus_inner).abs() < 1e-10);
        let chain = c.to_reversible_chain().unwrap();
        assert!((chain.dirichlet(&phi) - c.dirichlet(&phi)).abs() < 1e-14);
    }

    #[test]
    fn internal_zero_is_disconnected() {
        let g = DiscreteMeasure::from_weights(&[0.0, 1.0, 0.0, 1.0]).unwrap();
        assert!(matches!(birth_death_generator(&g), Err(Error::DisconnectedSupport(_))));
        let g = DiscreteMeasure::from_weights(&[0.0, 1.0, 1.0, 0.0]).unwrap();
        assert_eq!(birth_death_generator(&g).unwrap().support(), (1, 2));
    }

    #[test]
    fn two_point_bracket_contains_scan() {
        let g = DiscreteMeasure::from_weights(&[0.5, 0.5]).unwrap();
        let c = birth_death_generator(&g).unwrap();
        let chain = c.to_reversible_chain().unwrap();
        let mut scan: f64 = 0.0;
        for k in 1..2000 {
            let th = std::f64::consts::FRAC_PI_2 * k as f64 / 2000.0;
            let v = [th.cos(), th.sin()];
            if (v[0] - v[1]).abs() > 1e-6 {
                scan = scan.max(lsi_ratio(&chain, &v));
            }
        }
        let b = hardy_lsi_bound(&c, DEFAULT_HARDY_FACTOR);
        assert!(b.lower <= scan && scan <= b.upper, "{b:?} {scan}");
        let s = chain_lsi_constant(&chain, &LsiOptions::default()).unwrap().estimate;
        assert!(b.lower <= s && s <= b.upper);
    }

    #[test]
    fn point_mass_bracket_is_zero() {
        let g = DiscreteMeasure::point_mass(4, 2).unwrap();
        let b = hardy_lsi_bound(&birth_death_generator(&g).unwrap(), DEFAULT_HARDY_FACTOR);
        assert_eq!((b.lower, b.upper), (0.0, 0.0));
    }
}
