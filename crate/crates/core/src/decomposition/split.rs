//! A sector split into two halves, the law `gamma` of the particle count in
//! the first half, and conditional expectations on its fibers.

use crate::error::{Error, Result};
use crate::measure::{canonical_measure, log_add_exp, DiscreteMeasure};
use crate::partition::log_partition_table;
use crate::rate::RateFunction;
use crate::sector::Sector;

/// `gamma(n) ∝ Z_{|L1|}^n Z_{|L2|}^{N-n}`, by convolution of partition
/// functions (no fiber sums).
pub fn gamma_distribution(
    rate: &RateFunction,
    size1: usize,
    size2: usize,
    n_particles: usize,
) -> Result<DiscreteMeasure> {
    if size1 == 0 || size2 == 0 {
        return Err(Error::Domain(format!(
            "split needs two nonempty halves, got {size1} + {size2}"
        )));
    }
    let z1 = log_partition_table(rate, size1, n_particles)?;
    let z2 = log_partition_table(rate, size2, n_particles)?;
    DiscreteMeasure::from_log_weights(
        (0..=n_particles)
            .map(|n| z1[n] + z2[n_particles - n])
            .collect(),
    )
}

#[derive(Debug, Clone)]
pub struct SplitSector {
    sector: Sector,
    rate: RateFunction,
    measure: DiscreteMeasure,
    half1: Vec<usize>,
    half2: Vec<usize>,
    in_half1: Vec<bool>,
    gamma: DiscreteMeasure,
    // particle count in the first half, per rank
    fiber_of: Vec<u32>,
    fibers: Vec<Vec<usize>>,
    // nu-mass of each fiber, from the enumeration
    fiber_mass: Vec<f64>,
}

impl SplitSector {
    pub fn new(sector: Sector, rate: RateFunction, half1: Vec<usize>) -> Result<Self> {
        let v = sector.n_sites();
        let mut in_half1 = vec![false; v];
        for &x in &half1 {
            if x >= v || in_half1[x] {
                return Err(Error::Domain(format!("invalid or repeated site {x} in split")));
            }
            in_half1[x] = true;
        }
        let half2: Vec<usize> = (0..v).filter(|&x| !in_half1[x]).collect();
        let mut half1 = half1;
        half1.sort_unstable();
        let n = sector.n_particles();
        let gamma = gamma_distribution(&rate, half1.len(), half2.len(), n)?;
        // gradient representations evaluate h(k) = (k + 1) / c(k + 1) up to k = N
        rate.ensure_tabulated(n + 1)?;
        let measure = canonical_measure(&sector, &rate)?;
        let fiber_of: Vec<u32> = sector
            .configs()
            .map(|c| half1.iter().map(|&x| c[x]).sum())
            .collect();
        let mut fibers = vec![Vec::new(); n + 1];
        let mut fiber_mass = vec![0.0; n + 1];
        for (i, &k) in fiber_of.iter().enumerate() {
            fibers[k as usize].push(i);
            fiber_mass[k as usize] += measure.prob(i);
        }
        Ok(SplitSector {
            sector,
            rate,
            measure,
            half1,
            half2,
            in_half1,
            gamma,
            fiber_of,
            fibers,
            fiber_mass,
        })
    }

    /// First half = the `floor(|L| / 2)` lowest-indexed sites. On a segment
    /// this is the left half.
    pub fn equal_halves(sector: Sector, rate: RateFunction) -> Result<Self> {
        let half = sector.n_sites() / 2;
        Self::new(sector, rate, (0..half).collect())
    }

    pub fn sector(&self) -> &Sector {
        &self.sector
    }

    pub fn rate(&self) -> &RateFunction {
        &self.rate
    }

    pub fn measure(&self) -> &DiscreteMeasure {
        &self.measure
    }

    pub fn half1(&self) -> &[usize] {
        &self.half1
    }

    pub fn half2(&self) -> &[usize] {
        &self.half2
    }

    pub fn in_half1(&self, x: usize) -> bool {
        self.in_half1[x]
    }

    pub fn n_particles(&self) -> usize {
        self.sector.n_particles()
    }

    pub fn gamma(&self) -> &DiscreteMeasure {
        &self.gamma
    }

    /// `gamma(n)` as the enumerated fiber mass.
    pub fn fiber_mass(&self, n: usize) -> f64 {
        self.fiber_mass[n]
    }

    pub fn fiber(&self, n: usize) -> &[usize] {
        &self.fibers[n]
    }

    pub fn fiber_of(&self, rank: usize) -> usize {
        self.fiber_of[rank] as usize
    }

    pub(crate) fn check_len(&self, len: usize) -> Result<()> {
        if len != self.sector.size() {
            return Err(Error::Shape {
                expected: self.sector.size(),
                actual: len,
            });
        }
        Ok(())
    }

    pub(crate) fn check_fiber(&self, n: usize) -> Result<()> {
        if n > self.n_particles() || self.fibers[n].is_empty() || self.gamma.prob(n) == 0.0 {
            return Err(Error::Domain(format!("fiber {{eta_L1 = {n}}} is empty")));
        }
        Ok(())
    }

    /// Conditional weights `nu[eta | eta_L1 = n]` over `fiber(n)`.
    pub fn conditional_weights(&self, n: usize) -> Result<Vec<f64>> {
        self.check_fiber(n)?;
        let fiber = &self.fibers[n];
        let log_mass = fiber
            .iter()
            .fold(f64::NEG_INFINITY, |a, &i| log_add_exp(a, self.measure.log_prob(i)));
        Ok(fiber
            .iter()
            .map(|&i| (self.measure.log_prob(i) - log_mass).exp())
            .collect())
    }

    /// Largest relative deviation of `nu[. | n]` from the product
    /// `nu_{L1}^n (x) nu_{L2}^{N-n}` over the sector.
    pub fn factorization_residual(&self) -> Result<f64> {
        let n = self.n_particles();
        let z1 = log_partition_table(&self.rate, self.half1.len(), n)?;
        let z2 = log_partition_table(&self.rate, self.half2.len(), n)?;
        let mut worst: f64 = 0.0;
        for k in 0..=n {
            if self.fibers[k].is_empty() {
                continue;
            }
            let w = self.conditional_weights(k)?;
            for (&i, p) in self.fibers[k].iter().zip(w) {
                let c = self.sector.config(i);
                let lw: f64 = c.iter().map(|&m| -self.rate.log_factorial(m as usize)).sum();
                let product = (lw - z1[k] - z2[n - k]).exp();
                worst = worst.max((p - product).abs() / product);
            }
        }
        Ok(worst)
    }
}

/// `nu[f | eta_L1 = n]`.
pub fn conditional_expectation(split: &SplitSector, f: &[f64], n: usize) -> Result<f64> {
    split.check_len(f.len())?;
    let w = split.conditional_weights(n)?;
    Ok(split.fiber(n).iter().zip(w).map(|(&i, p)| p * f[i]).sum())
}

/// Conditional covariance `nu[f, g | eta_L1 = n]`.
pub fn conditional_covariance(split: &SplitSector, f: &[f64], g: &[f64], n: usize) -> Result<f64> {
    split.check_len(f.len())?;
    split.check_len(g.len())?;
    let w = split.conditional_weights(n)?;
    let fiber = split.fiber(n);
    let mf: f64 = fiber.iter().zip(&w).map(|(&i, p)| p * f[i]).sum();
    let mg: f64 = fiber.iter().zip(&w).map(|(&i, p)| p * g[i]).sum();
    Ok(fiber
        .iter()
        .zip(&w)
        .map(|(&i, p)| p * (f[i] - mf) * (g[i] - mg))
        .sum())
}
