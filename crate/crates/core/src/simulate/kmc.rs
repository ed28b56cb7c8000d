//! Gillespie dynamics: each site `x` fires at rate `deg(x) c(eta_x)` and sends
//! one particle to a uniformly chosen neighbour, i.e. rate `c(eta_x)` per
//! neighbour.

use std::f64::consts::PI;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::rate::RateFunction;
use crate::simulate::fenwick::Fenwick;

/// Events between full rebuilds of the rate tree.
pub const REBUILD_EVERY: u64 = 100_000;

/// `cos(pi (x_1 + 1/2) / side)` on the first coordinate: the slowest
/// Neumann mode of the box.
pub fn slow_mode_weights(lattice: &Lattice) -> Vec<f64> {
    let side = lattice.side() as f64;
    (0..lattice.n_sites())
        .map(|x| (PI * (lattice.coords(x)[0] as f64 + 0.5) / side).cos())
        .collect()
}

/// Spectral gap `2 (1 - cos(pi / side))` of one walker jumping at rate 1 to
/// each neighbour in the box.
pub fn single_particle_gap(lattice: &Lattice) -> f64 {
    2.0 * (1.0 - (PI / lattice.side() as f64).cos())
}

/// Counter-based stream for `(seed, stream)`.
pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

#[derive(Debug, Clone)]
pub struct SimState {
    lattice: Lattice,
    rate: RateFunction,
    occupancy: Vec<u32>,
    tree: Fenwick,
    total_rate: f64,
    clock: f64,
    events: u64,
    n_particles: usize,
    rng: ChaCha8Rng,
    mode_weights: Vec<f64>,
    mode: f64,
    max_drift: f64,
}

impl SimState {
    pub fn new(lattice: &Lattice, rate: &RateFunction, initial: Vec<u32>, seed: u64, stream: u64) -> Result<Self> {
        if initial.len() != lattice.n_sites() {
            return Err(Error::Shape {
                expected: lattice.n_sites(),
                actual: initial.len(),
            });
        }
        let n_particles: usize = initial.iter().map(|&k| k as usize).sum();
        rate.ensure_tabulated(n_particles)?;
        let weights: Vec<f64> = (0..initial.len())
            .map(|x| lattice.degree(x) as f64 * rate.rate(initial[x] as usize))
            .collect();
        let tree = Fenwick::new(&weights);
        let mode_weights = slow_mode_weights(lattice);
        let mode = initial.iter().zip(&mode_weights).map(|(&k, w)| k as f64 * w).sum();
        Ok(SimState {
            lattice: lattice.clone(),
            rate: rate.clone(),
            total_rate: weights.iter().sum(),
            occupancy: initial,
            tree,
            clock: 0.0,
            events: 0,
            n_particles,
            rng: stream_rng(seed, stream),
            mode_weights,
            mode,
            max_drift: 0.0,
        })
    }

    pub fn occupancy(&self) -> &[u32] {
        &self.occupancy
    }

    pub fn clock(&self) -> f64 {
        self.clock
    }

    pub fn events(&self) -> u64 {
        self.events
    }

    pub fn n_particles(&self) -> usize {
        self.n_particles
    }

    pub fn total_rate(&self) -> f64 {
        self.total_rate
    }

    /// `sum_x eta_x cos(pi (x_1 + 1/2) / side)`.
    pub fn mode(&self) -> f64 {
        self.mode
    }

    /// `sum_x c(eta_x)`.
    pub fn rate_sum(&self) -> f64 {
        self.occupancy.iter().map(|&k| self.rate.rate(k as usize)).sum()
    }

    /// Largest relative gap between the incremental and a recomputed total
    /// rate seen at the periodic rebuilds.
    pub fn max_drift(&self) -> f64 {
        self.max_drift
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    fn site_weight(&self, x: usize) -> f64 {
        self.lattice.degree(x) as f64 * self.rate.rate(self.occupancy[x] as usize)
    }

    fn rebuild(&mut self) {
        let weights: Vec<f64> = (0..self.occupancy.len()).map(|x| self.site_weight(x)).collect();
        let exact: f64 = weights.iter().sum();
        self.max_drift = self.max_drift.max((self.total_rate - exact).abs() / exact.max(1.0));
        self.tree = Fenwick::new(&weights);
        self.total_rate = exact;
    }

    /// Runs until `horizon`, reporting every holding interval and jump. The
    /// waiting time is drawn first; a wait crossing the horizon is cut there,
    /// which is exact by memorylessness.
    pub fn run(&mut self, horizon: f64, obs: &mut impl Observer) -> Result<()> {
        if !(horizon >= self.clock) {
            return Err(Error::Domain(format!("horizon {horizon} precedes the clock {}", self.clock)));
        }
        if self.n_particles == 0 {
            obs.hold(self, self.clock, horizon);
            self.clock = horizon;
            return Ok(());
        }
        loop {
            if !(self.total_rate > 0.0) {
                // c(n) > 0 for n > 0, so this means a corrupted cache
                return Err(Error::Degenerate(format!(
                    "total rate {} with {} particles",
                    self.total_rate, self.n_particles
                )));
            }
            let wait: f64 = Exp1.sample(&mut self.rng);
            let next = self.clock + wait / self.total_rate;
            if next >= horizon {
                obs.hold(self, self.clock, horizon);
                self.clock = horizon;
                return Ok(());
            }
            obs.hold(self, self.clock, next);
            self.clock = next;
            let u = self.rng.random::<f64>() * self.total_rate;
            let x = self.tree.find(u);
            let nbrs = self.lattice.neighbors(x);
            let y = nbrs[self.rng.random_range(0..nbrs.len())];
            self.occupancy[x] -= 1;
            self.occupancy[y] += 1;
            self.mode += self.mode_weights[y] - self.mode_weights[x];
            for z in [x, y] {
                let w = self.site_weight(z);
                self.total_rate += w - self.tree.get(z);
                self.tree.set(z, w);
            }
            self.events += 1;
            if self.events.is_multiple_of(REBUILD_EVERY) {
                self.rebuild();
            }
            obs.jump(self, x, y);
        }
    }
}

pub trait Observer {
    /// The state was constant on `[from, to)`.
    fn hold(&mut self, state: &SimState, from: f64, to: f64);

    /// A particle moved from `x` to `y`; `state` is already updated.
    fn jump(&mut self, _state: &SimState, _x: usize, _y: usize) {}
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Sample {
    pub t: f64,
    pub mode: f64,
    pub n_particles: usize,
    /// `sum_x c(eta_x)`.
    pub rate_sum: f64,
}

/// Records the state at `0, cadence, 2 cadence, ...`.
#[derive(Debug, Clone)]
pub struct Sampler {
    pub cadence: f64,
    pub samples: Vec<Sample>,
    next: f64,
}

impl Sampler {
    pub fn new(cadence: f64) -> Self {
        Sampler {
            cadence,
            samples: Vec::new(),
            next: 0.0,
        }
    }
}

impl Observer for Sampler {
    fn hold(&mut self, state: &SimState, _from: f64, to: f64) {
        // sample times are visited in order, so each lies in [from, to)
        while self.next < to {
            self.samples.push(Sample {
                t: self.next,
                mode: state.mode(),
                n_particles: state.occupancy().iter().map(|&k| k as usize).sum(),
                rate_sum: state.rate_sum(),
            });
            self.next = self.samples.len() as f64 * self.cadence;
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Trajectory {
    pub samples: Vec<Sample>,
    pub events: u64,
    pub horizon: f64,
    pub final_occupancy: Vec<u32>,
    pub max_drift: f64,
}

pub fn kmc_run(
    lattice: &Lattice,
    rate: &RateFunction,
    initial: Vec<u32>,
    horizon: f64,
    seed: u64,
    cadence: f64,
) -> Result<Trajectory> {
    if !(horizon > 0.0) {
        return Err(Error::Domain(format!("horizon must be positive, got {horizon}")));
    }
    if !(cadence > 0.0) {
        return Err(Error::Domain(format!("cadence must be positive, got {cadence}")));
    }
    let mut state = SimState::new(lattice, rate, initial, seed, 0)?;
    let mut sampler = Sampler::new(cadence);
    state.run(horizon, &mut sampler)?;
    Ok(Trajectory {
        samples: sampler.samples,
        events: state.events(),
        horizon,
        final_occupancy: state.occupancy().to_vec(),
        max_drift: state.max_drift(),
    })
}

pub fn write_trajectory_csv<W: Write>(traj: &Trajectory, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["t", "mode_value", "N", "rate_sum"])?;
    for s in &traj.samples {
        w.write_record([
            format!("{}", s.t),
            format!("{:e}", s.mode),
            s.n_particles.to_string(),
            format!("{:e}", s.rate_sum),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rate::RateFamily;

    struct Count {
        total: usize,
        broken: bool,
    }

    impl Observer for Count {
        fn hold(&mut self, _: &SimState, _: f64, _: f64) {}

        fn jump(&mut self, s: &SimState, _: usize, _: usize) {
            let n: usize = s.occupancy().iter().map(|&k| k as usize).sum();
            self.broken |= n != self.total;
        }
    }

    #[test]
    fn particles_are_conserved_and_cache_stays_exact() {
        let lattice = Lattice::cube(2, 4).unwrap();
        let rate = RateFamily::Staircase(2).table();
        let initial = vec![3, 0, 1, 0, 0, 5, 0, 0, 2, 0, 0, 0, 0, 0, 1, 0];
        let mut s = SimState::new(&lattice, &rate, initial, 9, 0).unwrap();
        let mut c = Count { total: 12, broken: false };
        s.run(50_000.0, &mut c).unwrap();
        assert!(s.events() >= 1_000_000, "{}", s.events());
        assert!(!c.broken);
        assert!(s.max_drift() <= 1e-9, "{}", s.max_drift());
        let modes = slow_mode_weights(&lattice);
        let m: f64 = s.occupancy().iter().zip(&modes).map(|(&k, w)| k as f64 * w).sum();
        assert!((m - s.mode()).abs() < 1e-9);
    }

    struct TimeAt0 {
        t: f64,
    }

    impl Observer for TimeAt0 {
        fn hold(&mut self, s: &SimState, from: f64, to: f64) {
            if s.occupancy()[0] == 1 {
                self.t += to - from;
            }
        }
    }

    #[test]
    fn two_state_chain_spends_half_the_time_in_each_state() {
        // switching rate 1 each way: occupation-time variance 2ab/(a+b)^3 T = T/4
        let lattice = Lattice::segment(2).unwrap();
        let rate = RateFamily::Linear(1.0).table();
        let horizon = 1e4;
        let mut s = SimState::new(&lattice, &rate, vec![1, 0], 4, 0).unwrap();
        let mut obs = TimeAt0 { t: 0.0 };
        s.run(horizon, &mut obs).unwrap();
        let sigma = (0.25 / horizon).sqrt();
        assert!((obs.t / horizon - 0.5).abs() <= 3.0 * sigma, "{}", obs.t / horizon);
    }

    #[test]
    fn same_seed_same_trajectory() {
        let lattice = Lattice::segment(6).unwrap();
        let rate = RateFamily::Staircase(2).table();
        let run = |seed| kmc_run(&lattice, &rate, vec![2, 0, 0, 3, 0, 1], 200.0, seed, 0.5).unwrap();
        let (a, b, c) = (run(1), run(1), run(2));
        assert_eq!(a.events, b.events);
        assert_eq!(a.final_occupancy, b.final_occupancy);
        assert!(a.samples.iter().zip(&b.samples).all(|(x, y)| x.mode.to_bits() == y.mode.to_bits()));
        assert!(a.events != c.events || a.final_occupancy != c.final_occupancy);
        assert_eq!(a.samples.len(), 400);
        assert!(a.samples.iter().all(|s| s.n_particles == 6));
        let mut buf = Vec::new();
        write_trajectory_csv(&a, &mut buf).unwrap();
        assert!(String::from_utf8(buf).unwrap().starts_with("t,mode_value,N,rate_sum\n0,"));
    }

    #[test]
    fn empty_box_returns_immediately() {
        let lattice = Lattice::segment(4).unwrap();
        let rate = RateFamily::Linear(1.0).table();
        let t = kmc_run(&lattice, &rate, vec![0; 4], 10.0, 0, 1.0).unwrap();
        assert_eq!(t.events, 0);
        assert_eq!(t.samples.len(), 10);
        assert!(kmc_run(&lattice, &rate, vec![0; 4], 0.0, 0, 1.0).is_err());
        assert!(kmc_run(&lattice, &rate, vec![0; 3], 1.0, 0, 1.0).is_err());
    }
}
