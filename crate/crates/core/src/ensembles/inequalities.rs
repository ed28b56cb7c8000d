//! Falsification suites for the single-site MGF bounds and the entropy
//! inequalities. Every MGF is a truncated sum plus a certified tail, and a
//! bound only passes if `value + tail <= bound`.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decomposition::diagnostics::implied_mgf_constants;
use crate::error::{Error, Result};
use crate::measure::{log_add_exp, log_sum_exp, DiscreteMeasure};
use crate::rate::RateFunction;
use crate::site_law::{invert_fugacity, DEFAULT_FUGACITY_TOL};
use crate::spectral::forms::{entropy, rothaus_slack};

/// Truncation stops once the certified tail is below this fraction of the
/// partial sum.
pub const MGF_TAIL_TOL: f64 = 1e-13;
/// Largest admissible tail relative to the value.
pub const MGF_TAIL_LIMIT: f64 = 1e-10;

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct CertifiedMgf {
    pub value: f64,
    pub tail: f64,
}

impl CertifiedMgf {
    pub fn upper(&self) -> f64 {
        self.value + self.tail
    }
}

/// `mu_alpha[exp(t obs(eta))]` for an observable with increments bounded by
/// `slope`. Past index `K` the weighted terms shrink at least by
/// `alpha A0 e^{|t| slope} / (K + 1)`, which certifies the tail. The
/// normalization uses the truncated `Z`, which can only overestimate.
pub fn certified_mgf(
    rate: &RateFunction,
    alpha: f64,
    t: f64,
    obs: impl Fn(usize) -> f64,
    slope: f64,
) -> Result<CertifiedMgf> {
    if alpha == 0.0 {
        return Ok(CertifiedMgf {
            value: (t * obs(0)).exp(),
            tail: 0.0,
        });
    }
    let la = alpha.ln();
    let growth = alpha * rate.envelope_a0 * (t.abs() * slope).exp();
    let (mut log_z, mut log_s) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
    for k in 0..=rate.n_max() {
        let base = k as f64 * la - rate.log_factorial(k);
        let lt = base + t * obs(k);
        log_z = log_add_exp(log_z, base);
        log_s = log_add_exp(log_s, lt);
        let r = growth / (k + 1) as f64;
        let r0 = alpha * rate.envelope_a0 / (k + 1) as f64;
        if r < 1.0 && r0 < 1.0 {
            let log_tail = lt + (r / (1.0 - r)).ln();
            // Z itself must be converged too, or negative t would stop early
            let log_z_tail = base + (r0 / (1.0 - r0)).ln();
            if log_tail - log_s <= MGF_TAIL_TOL.ln() && log_z_tail - log_z <= MGF_TAIL_TOL.ln() {
                return Ok(CertifiedMgf {
                    value: (log_s - log_z).exp(),
                    tail: (log_tail - log_z).exp(),
                });
            }
        }
    }
    Err(Error::ExtendCut(format!(
        "MGF tail at alpha = {alpha}, t = {t} stays above {MGF_TAIL_LIMIT:e} on a table of length {}",
        rate.n_max()
    )))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Witness {
    pub at: BTreeMap<String, f64>,
    pub lhs: f64,
    pub rhs: f64,
}

/// Outcome of one inequality over a grid. `slack = rhs - lhs` (in log
/// space for multiplicative bounds); a point violates when
/// `slack < -tolerance`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct InequalityCheck {
    pub name: String,
    pub points: usize,
    pub violations: usize,
    pub min_slack: f64,
    pub tolerance: f64,
    /// The point of smallest slack.
    pub witness: Option<Witness>,
}

impl InequalityCheck {
    pub fn new(name: &str, tolerance: f64) -> Self {
        InequalityCheck {
            name: name.to_string(),
            points: 0,
            violations: 0,
            min_slack: f64::INFINITY,
            tolerance,
            witness: None,
        }
    }

    pub fn record(&mut self, lhs: f64, rhs: f64, at: &[(&str, f64)]) {
        let slack = if rhs.is_nan() || lhs.is_nan() { f64::NEG_INFINITY } else { rhs - lhs };
        self.points += 1;
        if slack < -self.tolerance {
            self.violations += 1;
        }
        if slack < self.min_slack || self.witness.is_none() {
            self.min_slack = slack;
            self.witness = Some(Witness {
                at: at.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
                lhs,
                rhs,
            });
        }
    }

    pub fn merge(mut self, other: InequalityCheck) -> Self {
        self.points += other.points;
        self.violations += other.violations;
        if other.min_slack < self.min_slack {
            self.min_slack = other.min_slack;
            self.witness = other.witness;
        }
        self
    }

    pub fn passed(&self) -> bool {
        self.violations == 0
    }
}

fn merge_all(name: &str, tol: f64, parts: Vec<InequalityCheck>) -> InequalityCheck {
    parts.into_iter().fold(InequalityCheck::new(name, tol), InequalityCheck::merge)
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MgfOptions {
    pub rhos: Vec<f64>,
    pub ts: Vec<f64>,
    /// Random variables drawn for the Taylor bound.
    pub taylor_trials: usize,
    /// Random variables drawn for the square-root bound, besides the
    /// binomial and the site laws.
    pub sqrt_trials: usize,
    pub sqrt_ts: Vec<f64>,
    /// `(volume, N)` sectors for the implied single-site constants.
    pub sectors: Vec<(usize, usize)>,
    pub seed: u64,
}

impl Default for MgfOptions {
    fn default() -> Self {
        // 25 log-spaced densities in [0.1, 10], t in [-2, 2] by 0.1
        let rhos = (0..25).map(|i| 0.1 * 100f64.powf(i as f64 / 24.0)).collect();
        let ts = (-20..=20).map(|i| i as f64 / 10.0).collect();
        MgfOptions {
            rhos,
            ts,
            taylor_trials: 1000,
            sqrt_trials: 200,
            sqrt_ts: vec![0.25, 0.5, 1.0, 2.0],
            sectors: vec![(4, 4), (4, 8), (6, 6), (8, 8), (8, 16)],
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ImpliedConstants {
    pub volume: usize,
    pub big_n: usize,
    pub a_rate: f64,
    pub a_h: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MgfReport {
    pub rate: String,
    pub checks: Vec<InequalityCheck>,
    /// Smallest `C` with `mu[e^{t eta}] <= exp(C t rho e^{C t})` over the
    /// positive `t` of the grid, per density.
    pub exponential_moment_c: Vec<(f64, f64)>,
    pub exponential_moment_c_max: f64,
    pub implied: Vec<ImpliedConstants>,
}

impl MgfReport {
    pub fn violations(&self) -> usize {
        self.checks.iter().map(|c| c.violations).sum()
    }
}

fn fit_exponential_moment_c(log_m: f64, t: f64, rho: f64) -> f64 {
    if log_m <= 0.0 {
        return 0.0;
    }
    let phi = |c: f64| c * t * rho * (c * t).exp() - log_m;
    let (mut lo, mut hi) = (0.0, 1.0);
    while phi(hi) < 0.0 {
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if phi(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    hi
}

/// Herbst-type bound `mu[e^{t(c - alpha)}] <= exp(alpha a1 t^2 e^{a1 |t|})` and
/// the fitted exponential-moment constant, for one density.
fn site_mgf_cell(rate: &RateFunction, rho: f64, ts: &[f64]) -> Result<(InequalityCheck, f64)> {
    let alpha = invert_fugacity(rate, rho, DEFAULT_FUGACITY_TOL)?;
    let a1 = rate.lipschitz_a1;
    let mut check = InequalityCheck::new("herbst", 1e-12);
    let mut c_fit: f64 = 0.0;
    for &t in ts {
        let m = certified_mgf(rate, alpha, t, |k| rate.rate(k) - alpha, a1)?;
        let bound = alpha * a1 * t * t * (a1 * t.abs()).exp();
        check.record(m.upper().ln(), bound, &[("rho", rho), ("alpha", alpha), ("t", t)]);
        if t > 0.0 {
            let e = certified_mgf(rate, alpha, t, |k| k as f64, 1.0)?;
            c_fit = c_fit.max(fit_exponential_moment_c(e.upper().ln(), t, rho));
        }
    }
    Ok((check, c_fit))
}

/// `E e^X <= exp(E X + E(X^2 e^{|X|}) / 2)` on a finitely supported law.
pub fn taylor_slack(probs: &[f64], values: &[f64]) -> (f64, f64) {
    let logs: Vec<f64> = probs.iter().zip(values).map(|(p, x)| p.ln() + x).collect();
    let ex: f64 = probs.iter().zip(values).map(|(p, x)| p * x).sum();
    let second: f64 = probs.iter().zip(values).map(|(p, x)| p * x * x * x.abs().exp()).sum();
    (log_sum_exp(&logs), ex + 0.5 * second)
}

fn random_law(rng: &mut ChaCha8Rng, max_points: usize) -> Vec<f64> {
    let m = rng.random_range(1..=max_points);
    let w: Vec<f64> = (0..m).map(|_| rng.random_range(0.01..1.0)).collect();
    let s: f64 = w.iter().sum();
    w.iter().map(|x| x / s).collect()
}

fn taylor_suite(trials: usize, seed: u64) -> InequalityCheck {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut check = InequalityCheck::new("taylor_mgf", 1e-12);
    let scales = [0.1, 1.0, 3.0, 10.0];
    for trial in 0..trials {
        let scale = scales[trial % scales.len()];
        let p = random_law(&mut rng, 10);
        let x: Vec<f64> = p.iter().map(|_| rng.random_range(-scale..=scale)).collect();
        let (lhs, rhs) = taylor_slack(&p, &x);
        check.record(lhs, rhs, &[("trial", trial as f64), ("scale", scale)]);
    }
    check
}

/// Square-root MGF bound for `X >= 0` given `E e^{tX}` through `mgf` and the
/// minimal `g(t) = log E e^{tX} / (t E X)`:
/// `E e^{t sqrt X} <= exp(t sqrt(2 g(2t) + g(t)) sqrt(E X)) + e^t`.
/// Returns `(log lhs, log rhs)`.
pub fn sqrt_mgf_sides(mean: f64, t: f64, mgf: impl Fn(f64) -> f64, sqrt_mgf: f64) -> (f64, f64) {
    let g = |s: f64| mgf(s).ln() / (s * mean);
    let expo = t * (2.0 * g(2.0 * t) + g(t)).sqrt() * mean.sqrt();
    (sqrt_mgf.ln(), log_add_exp(expo, t))
}

fn finite_sqrt_sides(p: &[f64], x: &[f64], t: f64) -> (f64, f64) {
    let mean: f64 = p.iter().zip(x).map(|(a, b)| a * b).sum();
    let mgf = |s: f64| p.iter().zip(x).map(|(a, b)| a * (s * b).exp()).sum::<f64>();
    let lhs: f64 = p.iter().zip(x).map(|(a, b)| a * (t * b.sqrt()).exp()).sum();
    sqrt_mgf_sides(mean, t, mgf, lhs)
}

fn binomial(n: usize, q: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n + 1);
    let mut c = 1.0;
    for k in 0..=n {
        if k > 0 {
            c = c * (n - k + 1) as f64 / k as f64;
        }
        out.push(c * q.powi(k as i32) * (1.0 - q).powi((n - k) as i32));
    }
    out
}

fn sqrt_suite(rate: &RateFunction, opts: &MgfOptions) -> Result<InequalityCheck> {
    let mut check = InequalityCheck::new("sqrt_mgf", 1e-12);
    let p = binomial(10, 0.3);
    let x: Vec<f64> = (0..=10).map(|k| k as f64).collect();
    for &t in &opts.sqrt_ts {
        let (l, r) = finite_sqrt_sides(&p, &x, t);
        check.record(l, r, &[("binomial", 1.0), ("t", t)]);
    }
    for &rho in &opts.rhos {
        let alpha = invert_fugacity(rate, rho, DEFAULT_FUGACITY_TOL)?;
        for &t in &opts.sqrt_ts {
            let up = |s: f64| certified_mgf(rate, alpha, s, |k| k as f64, 1.0).map(|m| m.upper());
            let (m1, m2) = (up(t)?, up(2.0 * t)?);
            let lhs = certified_mgf(rate, alpha, t, |k| (k as f64).sqrt(), 1.0)?.upper();
            let mgf = |s: f64| if s == t { m1 } else { m2 };
            let (l, r) = sqrt_mgf_sides(rho, t, mgf, lhs);
            check.record(l, r, &[("rho", rho), ("t", t)]);
        }
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed ^ 0x5eed);
    for trial in 0..opts.sqrt_trials {
        let p = random_law(&mut rng, 10);
        let x: Vec<f64> = p.iter().map(|_| rng.random_range(0.0..20.0)).collect();
        if x.iter().zip(&p).all(|(v, _)| *v == 0.0) {
            continue;
        }
        for &t in &opts.sqrt_ts {
            let (l, r) = finite_sqrt_sides(&p, &x, t);
            check.record(l, r, &[("trial", trial as f64), ("t", t)]);
        }
    }
    Ok(check)
}

pub fn mgf_suite(rate: &RateFunction, opts: &MgfOptions) -> Result<MgfReport> {
    let cells = opts
        .rhos
        .par_iter()
        .map(|&rho| site_mgf_cell(rate, rho, &opts.ts))
        .collect::<Result<Vec<_>>>()?;
    let exponential_moment_c: Vec<(f64, f64)> =
        opts.rhos.iter().zip(&cells).map(|(&r, (_, c))| (r, *c)).collect();
    let herbst = merge_all("herbst", 1e-12, cells.into_iter().map(|(c, _)| c).collect());
    let implied = opts
        .sectors
        .par_iter()
        .map(|&(volume, big_n)| {
            let (a_rate, a_h) = implied_mgf_constants(rate, volume, big_n, &opts.ts)?;
            Ok(ImpliedConstants {
                volume,
                big_n,
                a_rate,
                a_h,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(MgfReport {
        rate: rate.label.clone(),
        checks: vec![
            herbst,
            taylor_suite(opts.taylor_trials, opts.seed),
            sqrt_suite(rate, opts)?,
        ],
        exponential_moment_c_max: exponential_moment_c.iter().map(|c| c.1).fold(0.0, f64::max),
        exponential_moment_c,
        implied,
    })
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EntropySlack {
    /// RHS - LHS of `nu[f, g] <= nu[f]/t log nu[e^{t(g - nu g)}] + Ent(f)/t`.
    pub one_sided: f64,
    /// Same for `|nu[f, g]|` with the larger of the two MGFs.
    pub symmetric: f64,
}

pub fn entropy_inequality_check(
    measure: &DiscreteMeasure,
    f: &[f64],
    g: &[f64],
    t: f64,
) -> Result<EntropySlack> {
    if !(t > 0.0) {
        return Err(Error::Domain(format!("t must be positive, got {t}")));
    }
    if g.len() != measure.space_size() {
        return Err(Error::Shape {
            expected: measure.space_size(),
            actual: g.len(),
        });
    }
    let ent = entropy(measure, f)?;
    let mf = measure.expectation(f);
    let mg = measure.expectation(g);
    let cov = measure.covariance(f, g);
    let log_mgf = |sign: f64| {
        let terms: Vec<f64> = (0..g.len())
            .map(|i| measure.log_prob(i) + sign * t * (g[i] - mg))
            .collect();
        log_sum_exp(&terms)
    };
    let (up, down) = (log_mgf(1.0), log_mgf(-1.0));
    Ok(EntropySlack {
        one_sided: mf / t * up + ent / t - cov,
        symmetric: mf / t * up.max(down) + ent / t - cov.abs(),
    })
}

fn lognormal(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(rng);
            (scale * z).exp()
        })
        .collect()
}

/// Random `f`, `g` on 20-point spaces. Returns the one-sided and the
/// symmetric checks.
pub fn entropy_inequality_suite(trials: usize, ts: &[f64], seed: u64) -> Result<(InequalityCheck, InequalityCheck)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut one = InequalityCheck::new("entropy_inequality", 1e-12);
    let mut sym = InequalityCheck::new("entropy_inequality_symmetric", 1e-12);
    for trial in 0..trials {
        let w = lognormal(&mut rng, 20, 1.0);
        let m = DiscreteMeasure::from_weights(&w)?;
        let f = lognormal(&mut rng, 20, 1.5);
        let g: Vec<f64> = (0..20)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                z
            })
            .collect();
        for &t in ts {
            let s = entropy_inequality_check(&m, &f, &g, t)?;
            let at = [("trial", trial as f64), ("t", t)];
            one.record(0.0, s.one_sided, &at);
            sym.record(0.0, s.symmetric, &at);
        }
    }
    Ok((one, sym))
}

/// Rothaus' inequality on random positive `f` over random measures.
pub fn rothaus_suite(trials: usize, seed: u64) -> Result<InequalityCheck> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut check = InequalityCheck::new("rothaus", 1e-12);
    for trial in 0..trials {
        let n = rng.random_range(2..=20);
        let m = DiscreteMeasure::from_weights(&lognormal(&mut rng, n, 1.0))?;
        let f = lognormal(&mut rng, n, 2.0);
        let scale = m.expectation(&f).max(1.0);
        check.record(0.0, rothaus_slack(&m, &f)? / scale, &[("trial", trial as f64)]);
    }
    Ok(check)
}
