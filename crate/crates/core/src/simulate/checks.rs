//! Trajectory statistics against the exact canonical measure on enumerable
//! sectors.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::lattice::Lattice;
use crate::measure::canonical_measure;
use crate::rate::RateFunction;
use crate::sector::{enumerate_sector, Sector};
use crate::simulate::kmc::{Observer, SimState};
use crate::spectral::{assemble_generator, spectral_gap};

/// Below this many gap-scaled time units a run counts as under-sampled.
pub const MIN_RELAXATIONS: f64 = 100.0;

struct Dwell<'a> {
    sector: &'a Sector,
    time: Vec<f64>,
}

impl Observer for Dwell<'_> {
    fn hold(&mut self, state: &SimState, from: f64, to: f64) {
        self.time[self.sector.rank(state.occupancy())] += to - from;
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EmpiricalLawCheck {
    pub tv: f64,
    /// Expected size of the TV distance from the CLT for additive
    /// functionals, `1/2 sum_i sqrt(2 nu_i (1 - nu_i) / (gap T))`.
    pub tolerance: f64,
    pub gap: f64,
    pub events: u64,
    pub under_sampled: bool,
    pub empirical: Vec<f64>,
}

/// Starts every particle on site 0 and compares occupation times with `nu`.
pub fn empirical_law_check(
    lattice: &Lattice,
    rate: &RateFunction,
    n_particles: usize,
    horizon: f64,
    seed: u64,
) -> Result<EmpiricalLawCheck> {
    let sector = enumerate_sector(lattice, n_particles)?;
    let nu = canonical_measure(&sector, rate)?;
    let gen = assemble_generator(&sector, rate)?;
    let gap = if sector.size() > 1 {
        spectral_gap(&gen, &nu, 1e-10)?.gap
    } else {
        f64::INFINITY
    };
    let mut initial = vec![0u32; lattice.n_sites()];
    initial[0] = n_particles as u32;
    let mut state = SimState::new(lattice, rate, initial, seed, 0)?;
    let mut dwell = Dwell {
        sector: &sector,
        time: vec![0.0; sector.size()],
    };
    state.run(horizon, &mut dwell)?;
    let empirical: Vec<f64> = dwell.time.iter().map(|t| t / horizon).collect();
    let tv = nu.total_variation(&empirical);
    let tolerance = 0.5
        * nu
            .probs()
            .iter()
            .map(|p| (2.0 * p * (1.0 - p) / (gap * horizon)).sqrt())
            .sum::<f64>();
    Ok(EmpiricalLawCheck {
        tv,
        tolerance,
        gap,
        events: state.events(),
        under_sampled: gap * horizon < MIN_RELAXATIONS,
        empirical,
    })
}

struct Transitions<'a> {
    sector: &'a Sector,
    pair: (usize, usize),
    current: usize,
    counts: (u64, u64),
    time: (f64, f64),
}

impl Observer for Transitions<'_> {
    fn hold(&mut self, _state: &SimState, from: f64, to: f64) {
        if self.current == self.pair.0 {
            self.time.0 += to - from;
        } else if self.current == self.pair.1 {
            self.time.1 += to - from;
        }
    }

    fn jump(&mut self, state: &SimState, _x: usize, _y: usize) {
        let next = self.sector.rank(state.occupancy());
        if (self.current, next) == self.pair {
            self.counts.0 += 1;
        } else if (next, self.current) == self.pair {
            self.counts.1 += 1;
        }
        self.current = next;
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ReversibilityCheck {
    /// Ranks `(a, b)` of the watched adjacent pair.
    pub pair: (usize, usize),
    pub forward: u64,
    pub backward: u64,
    /// `(forward - backward) / sqrt(forward + backward)`; stationary
    /// reversible flows balance, so this is approximately standard normal.
    pub z_score: f64,
    /// Measured `(forward / T_a) / (backward / T_b)`.
    pub rate_ratio: f64,
    /// Detailed-balance value `nu(b) / nu(a)`.
    pub expected_ratio: f64,
}

/// Watches the most likely state and its most likely neighbour, starting
/// in the former.
pub fn reversibility_check(
    lattice: &Lattice,
    rate: &RateFunction,
    n_particles: usize,
    horizon: f64,
    seed: u64,
) -> Result<ReversibilityCheck> {
    let sector = enumerate_sector(lattice, n_particles)?;
    let nu = canonical_measure(&sector, rate)?;
    let probs = nu.probs();
    let a = (0..sector.size()).max_by(|&i, &j| probs[i].total_cmp(&probs[j])).unwrap();
    let mut scratch = Vec::new();
    let mut b = a;
    for x in 0..lattice.n_sites() {
        if sector.config(a)[x] == 0 {
            continue;
        }
        for &y in lattice.neighbors(x) {
            let j = sector.moved_rank(a, x, y, &mut scratch);
            if b == a || probs[j] > probs[b] {
                b = j;
            }
        }
    }
    let mut state = SimState::new(lattice, rate, sector.config(a).to_vec(), seed, 0)?;
    let mut obs = Transitions {
        sector: &sector,
        pair: (a, b),
        current: a,
        counts: (0, 0),
        time: (0.0, 0.0),
    };
    state.run(horizon, &mut obs)?;
    let (f, r) = obs.counts;
    let z_score = if f + r > 0 {
        (f as f64 - r as f64) / ((f + r) as f64).sqrt()
    } else {
        0.0
    };
    Ok(ReversibilityCheck {
        pair: (a, b),
        forward: f,
        backward: r,
        z_score,
        rate_ratio: (f as f64 / obs.time.0) / (r as f64 / obs.time.1),
        expected_ratio: probs[b] / probs[a],
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rate::RateFamily;

    #[test]
    fn occupation_times_match_the_canonical_measure() {
        let l3 = Lattice::segment(3).unwrap();
        let c = empirical_law_check(&l3, &RateFamily::Linear(1.0).table(), 3, 1e5, 1).unwrap();
        assert!(c.tv <= 0.02 && !c.under_sampled, "{c:?}");
        let c = empirical_law_check(&l3, &RateFamily::Staircase(2).table(), 2, 1e5, 2).unwrap();
        assert!(c.tv <= 0.02 && !c.under_sampled, "{c:?}");
        assert!((c.empirical.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn short_runs_are_flagged() {
        let l3 = Lattice::segment(3).unwrap();
        let c = empirical_law_check(&l3, &RateFamily::Linear(1.0).table(), 3, 2.0, 1).unwrap();
        assert!(c.under_sampled);
        assert!(c.tv > 0.2, "{c:?}");
    }

    #[test]
    fn transition_flows_balance() {
        let lattice = Lattice::segment(3).unwrap();
        let r = reversibility_check(&lattice, &RateFamily::Staircase(2).table(), 4, 2e4, 3).unwrap();
        assert!(r.forward > 1000 && r.backward > 1000, "{r:?}");
        assert!(r.z_score.abs() <= 3.0, "{r:?}");
        let rel = (r.rate_ratio - r.expected_ratio).abs() / r.expected_ratio;
        assert!(rel < 0.1, "{r:?}");
    }
}
