//! Canonical partition functions `Z_V^n = sum_{|eta| = n} prod_x 1/c(eta_x)!`
//! by log-space convolution, and an exact canonical sampler built on them.

use rand::Rng;

use crate::error::{Error, Result};
use crate::measure::log_add_exp;
use crate::rate::RateFunction;

/// Truncated log-space convolution: `out[n] = log sum_k exp(a[k] + b[n-k])`.
pub fn log_convolve(a: &[f64], b: &[f64], len: usize) -> Vec<f64> {
    let mut out = vec![f64::NEG_INFINITY; len];
    for (n, slot) in out.iter_mut().enumerate() {
        let lo = n.saturating_sub(b.len().saturating_sub(1));
        let hi = n.min(a.len().saturating_sub(1));
        if lo > hi {
            continue;
        }
        let mut max = f64::NEG_INFINITY;
        for k in lo..=hi {
            max = max.max(a[k] + b[n - k]);
        }
        if max == f64::NEG_INFINITY {
            continue;
        }
        let s: f64 = (lo..=hi).map(|k| (a[k] + b[n - k] - max).exp()).sum();
        *slot = max + s.ln();
    }
    out
}

fn single_site(rate: &RateFunction, n_max: usize) -> Vec<f64> {
    (0..=n_max).map(|k| -rate.log_factorial(k)).collect()
}

/// `log Z_V^n` for `n = 0, ..., n_max`, by repeated doubling.
pub fn log_partition_table(rate: &RateFunction, volume: usize, n_max: usize) -> Result<Vec<f64>> {
    rate.ensure_tabulated(n_max)?;
    let len = n_max + 1;
    let mut result = vec![f64::NEG_INFINITY; len];
    result[0] = 0.0;
    let mut power = single_site(rate, n_max);
    let mut v = volume;
    while v > 0 {
        if v & 1 == 1 {
            result = log_convolve(&result, &power, len);
        }
        v >>= 1;
        if v > 0 {
            power = log_convolve(&power, &power, len);
        }
    }
    Ok(result)
}

/// `log Z_r^n` for every volume `r = 0, ..., max_volume` and `n <= n_max`.
#[derive(Debug, Clone)]
pub struct PartitionLadder {
    tables: Vec<Vec<f64>>,
    site: Vec<f64>,
}

impl PartitionLadder {
    pub fn new(rate: &RateFunction, max_volume: usize, n_max: usize) -> Result<Self> {
        rate.ensure_tabulated(n_max)?;
        let site = single_site(rate, n_max);
        let len = n_max + 1;
        let mut tables = Vec::with_capacity(max_volume + 1);
        let mut cur = vec![f64::NEG_INFINITY; len];
        cur[0] = 0.0;
        tables.push(cur.clone());
        for _ in 0..max_volume {
            cur = log_convolve(&cur, &site, len);
            tables.push(cur.clone());
        }
        Ok(PartitionLadder { tables, site })
    }

    #[inline]
    pub fn log_z(&self, volume: usize, n: usize) -> f64 {
        self.tables[volume][n]
    }

    pub fn table(&self, volume: usize) -> &[f64] {
        &self.tables[volume]
    }

    /// Draws an exact sample from `nu_V^N` site by site, using
    /// `P(eta_x = k | rest) ∝ Z_1^k Z_{r}^{m-k}` with `r` remaining sites.
    pub fn sample_canonical<R: Rng + ?Sized>(
        &self,
        n_sites: usize,
        n: usize,
        rng: &mut R,
    ) -> Result<Vec<u32>> {
        if n_sites == 0 || n_sites >= self.tables.len() || n >= self.site.len() {
            return Err(Error::Domain(format!(
                "ladder does not cover {n_sites} sites with {n} particles"
            )));
        }
        let mut out = vec![0u32; n_sites];
        let mut left = n;
        for (x, slot) in out.iter_mut().enumerate().take(n_sites - 1) {
            let rest = n_sites - x - 1;
            let log_w: Vec<f64> = (0..=left)
                .map(|k| self.site[k] + self.tables[rest][left - k])
                .collect();
            let total = log_w.iter().fold(f64::NEG_INFINITY, |a, &b| log_add_exp(a, b));
            let u: f64 = rng.random();
            let mut acc = 0.0;
            let mut pick = left;
            for (k, lw) in log_w.iter().enumerate() {
                acc += (lw - total).exp();
                if u < acc {
                    pick = k;
                    break;
                }
            }
            *slot = pick as u32;
            left -= pick;
        }
        out[n_sites - 1] = left as u32;
        Ok(out)
    }
}

/// Canonical single-site marginal `nu_V^N[eta_x = k] ∝ Z_1^k Z_{V-1}^{N-k}`,
/// computed without enumerating the sector.
pub fn canonical_site_marginal(rate: &RateFunction, volume: usize, n: usize) -> Result<Vec<f64>> {
    if volume == 0 {
        return Err(Error::Domain("volume must be positive".into()));
    }
    let rest = log_partition_table(rate, volume - 1, n)?;
    let log_w: Vec<f64> = (0..=n).map(|k| -rate.log_factorial(k) + rest[n - k]).collect();
    let total = log_w.iter().fold(f64::NEG_INFINITY, |a, &b| log_add_exp(a, b));
    Ok(log_w.iter().map(|lw| (lw - total).exp()).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Lattice;
    use crate::measure::{canonical_measure, log_sum_exp};
    use crate::rate::RateFamily;
    use crate::sector::enumerate_sector;
    use rand::SeedableRng;

    #[test]
    fn linear_partition_is_power_over_factorial() {
        // Z_V^n = V^n / n! for c(n) = n
        let rate = RateFamily::Linear(1.0).table();
        let t = log_partition_table(&rate, 7, 30).unwrap();
        for (n, &lz) in t.iter().enumerate() {
            let lf: f64 = (1..=n).map(|k| (k as f64).ln()).sum();
            let expected = n as f64 * 7f64.ln() - lf;
            assert!((lz - expected).abs() < 1e-12 * (1.0 + expected.abs()));
        }
    }

    #[test]
    fn doubling_agrees_with_enumeration_and_ladder() {
        let rate = RateFamily::Staircase(2).table();
        let ladder = PartitionLadder::new(&rate, 5, 9).unwrap();
        for v in 1..=5 {
            let t = log_partition_table(&rate, v, 9).unwrap();
            for n in 0..=9 {
                let s = enumerate_sector(&Lattice::segment(v).unwrap(), n).unwrap();
                let m = canonical_measure(&s, &rate).unwrap();
                let brute = log_sum_exp(m.log_weights());
                assert!((t[n] - brute).abs() < 1e-12 * (1.0 + brute.abs()));
                assert!((ladder.log_z(v, n) - brute).abs() < 1e-12 * (1.0 + brute.abs()));
            }
        }
    }

    #[test]
    fn site_marginal_is_binomial_for_linear_rates() {
        let rate = RateFamily::Linear(1.0).table();
        let m = canonical_site_marginal(&rate, 5, 7).unwrap();
        let mut binom = 1.0;
        for (k, p) in m.iter().enumerate() {
            if k > 0 {
                binom = binom * (7 - k + 1) as f64 / k as f64;
            }
            let exact = binom * 0.2f64.powi(k as i32) * 0.8f64.powi(7 - k as i32);
            assert!((p - exact).abs() < 1e-14);
        }
        assert_eq!(canonical_site_marginal(&rate, 1, 3).unwrap(), vec![0.0, 0.0, 0.0, 1.0]);
    }

    #[test]
    fn sampler_matches_canonical_law() {
        let rate = RateFamily::Staircase(2).table();
        let ladder = PartitionLadder::new(&rate, 3, 3).unwrap();
        let s = enumerate_sector(&Lattice::segment(3).unwrap(), 3).unwrap();
        let m = canonical_measure(&s, &rate).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut counts = vec![0usize; s.size()];
        let draws = 200_000;
        for _ in 0..draws {
            let c = ladder.sample_canonical(3, 3, &mut rng).unwrap();
            counts[s.rank(&c)] += 1;
        }
        for (i, &k) in counts.iter().enumerate() {
            let p = m.prob(i);
            let sd = (p * (1.0 - p) / draws as f64).sqrt();
            assert!((k as f64 / draws as f64 - p).abs() < 5.0 * sd);
        }
    }
}
