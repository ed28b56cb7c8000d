//! Implied constants of the bounded-ratio estimates, measured over a grid
//! of sectors and random test functions.
//!
//! Quantities (CSV column `quantity`):
//!
//! * `gamma_ratio`: `gamma(n-1)/gamma(n) * (N-n+1)/n`, per `n`
//! * `gamma_ratio_upper`, `gamma_ratio_lower`: its max and the max of its
//!   reciprocal over `n`
//! * `gradient_c`: `A(n)^2 N / ((|L|/2)^2 max(nu[f|n], nu[f|n-1]) *
//!   (gamma(n-1)/gamma(n) E_{n-1}(sqrt f) + E_n(sqrt f)))`, with `E_k` the
//!   Dirichlet form integrated against `nu[. | k]`; per `n` and maximized
//! * `cov_rate_c`: `nu[f, sum c]^2 / (N nu[f] Ent f)`
//! * `cov_h_c`: `nu[f, sum h]^2 N / (nu[f] (nu[f] + Ent f))`
//! * `mgf_rate_a`: smallest `A` with `nu[e^{t(c - nu c)}] <= e^{A N t^2}`
//! * `mgf_h_a`: smallest `A` with `nu[e^{tN(h - nu h)}] <= A e^{A (N t^2 + sqrt(N) |t|)}`
//!
//! The last two use a single-site canonical marginal and `t` on a grid in
//! `[-1, 1]`.

use std::io::Write;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decomposition::gradient::gradient_table;
use crate::decomposition::identities::fiber_dirichlet;
use crate::decomposition::split::{conditional_expectation, SplitSector};
use crate::error::Result;
use crate::lattice::Lattice;
use crate::measure::log_sum_exp;
use crate::partition::canonical_site_marginal;
use crate::rate::RateFunction;
use crate::sector::Sector;
use crate::spectral::forms::entropy_weighted;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiagnosticOptions {
    pub functions: usize,
    pub seed: u64,
    pub t_grid: Vec<f64>,
    pub sector_cap: usize,
}

impl Default for DiagnosticOptions {
    fn default() -> Self {
        DiagnosticOptions {
            functions: 20,
            seed: 0,
            t_grid: (-20..=20).map(|k| k as f64 / 20.0).collect(),
            sector_cap: 200_000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticRow {
    pub quantity: String,
    pub rate: String,
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "N")]
    pub big_n: usize,
    pub n: Option<usize>,
    pub value: f64,
}

/// `max_n` and `max_n` of the reciprocal of `gamma(n-1)/gamma(n) (N-n+1)/n`,
/// with the per-`n` values.
pub fn gamma_ratio_profile(split: &SplitSector) -> Vec<f64> {
    let big_n = split.n_particles();
    let g = split.gamma();
    (1..=big_n)
        .map(|n| {
            (g.log_prob(n - 1) - g.log_prob(n)).exp() * (big_n - n + 1) as f64 / n as f64
        })
        .collect()
}

fn push(rows: &mut Vec<DiagnosticRow>, q: &str, split: &SplitSector, n: Option<usize>, value: f64) {
    rows.push(DiagnosticRow {
        quantity: q.to_string(),
        rate: split.rate().label.clone(),
        l: split.sector().n_sites(),
        big_n: split.n_particles(),
        n,
        value,
    });
}

/// Smallest `A > 0` with `log A + A q >= target`, for `q > 0`; bisection
/// in `log A`.
fn solve_log_linear(target: f64, q: f64) -> f64 {
    let phi = |la: f64| la + la.exp() * q - target;
    let (mut lo, mut hi) = (-1.0f64, 1.0f64);
    while phi(lo) > 0.0 {
        lo *= 2.0;
    }
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
    hi.exp()
}

/// Implied constants for the two single-site MGF bounds.
pub fn implied_mgf_constants(
    rate: &RateFunction,
    volume: usize,
    big_n: usize,
    t_grid: &[f64],
) -> Result<(f64, f64)> {
    let p = canonical_site_marginal(rate, volume, big_n)?;
    let nf = big_n as f64;
    let c: Vec<f64> = (0..=big_n).map(|k| rate.rate(k)).collect();
    let h: Vec<f64> = (0..=big_n).map(|k| rate.h(k)).collect();
    let mean = |v: &[f64]| p.iter().zip(v).map(|(a, b)| a * b).sum::<f64>();
    let (mc, mh) = (mean(&c), mean(&h));
    let log_mgf = |v: &[f64], m: f64, s: f64| {
        let terms: Vec<f64> = p
            .iter()
            .zip(v)
            .map(|(pk, x)| pk.ln() + s * (x - m))
            .collect();
        log_sum_exp(&terms)
    };
    let (mut a_rate, mut a_h): (f64, f64) = (0.0, 0.0);
    for &t in t_grid {
        if t == 0.0 {
            // the second bound forces A >= 1 at t = 0
            a_h = a_h.max(1.0);
            continue;
        }
        a_rate = a_rate.max(log_mgf(&c, mc, t) / (nf * t * t));
        let q = nf * t * t + nf.sqrt() * t.abs();
        a_h = a_h.max(solve_log_linear(log_mgf(&h, mh, t * nf), q));
    }
    Ok((a_rate, a_h))
}

/// `(cov_rate_c, cov_h_c)` for one positive `f` on the full sector.
pub fn implied_covariance_constants(split: &SplitSector, f: &[f64]) -> Result<(f64, f64)> {
    split.check_len(f.len())?;
    let m = split.measure();
    let rate = split.rate();
    let sum_c: Vec<f64> = split
        .sector()
        .configs()
        .map(|c| c.iter().map(|&k| rate.rate(k as usize)).sum())
        .collect();
    let sum_h: Vec<f64> = split
        .sector()
        .configs()
        .map(|c| c.iter().map(|&k| rate.h(k as usize)).sum())
        .collect();
    let nf = split.n_particles() as f64;
    let mean = m.expectation(f);
    let ent = entropy_weighted(m.probs(), f);
    let (cc, ch) = (m.covariance(f, &sum_c), m.covariance(f, &sum_h));
    let ratio = |num: f64, den: f64| if num == 0.0 || den <= 0.0 { 0.0 } else { num / den };
    // Ent f = 0 forces f constant, hence zero covariances
    let c_rate = if ent > 0.0 { ratio(cc * cc, nf * mean * ent) } else { 0.0 };
    let c_h = ratio(ch * ch * nf, mean * (mean + ent));
    Ok((c_rate, c_h))
}

/// Per-`n` implied constant of the gradient bound for one positive `f`.
pub fn implied_gradient_constants(split: &SplitSector, f: &[f64]) -> Result<Vec<(usize, f64)>> {
    let big_n = split.n_particles();
    let root: Vec<f64> = f.iter().map(|v| v.sqrt()).collect();
    let half_len = split.sector().n_sites() as f64 / 2.0;
    let table = gradient_table(split, f)?;
    let forms = (0..=big_n)
        .map(|k| fiber_dirichlet(split, &root, k, false))
        .collect::<Result<Vec<_>>>()?;
    let conds = (0..=big_n)
        .map(|k| conditional_expectation(split, f, k))
        .collect::<Result<Vec<_>>>()?;
    let g = split.gamma();
    Ok(table
        .iter()
        .map(|t| {
            let n = t.n;
            let a = t.ab(big_n).a;
            let ratio = (g.log_prob(n - 1) - g.log_prob(n)).exp();
            let den = half_len.powi(2) * conds[n].max(conds[n - 1]) * (ratio * forms[n - 1] + forms[n]);
            let value = if a == 0.0 { 0.0 } else { a * a * big_n as f64 / den };
            (n, value)
        })
        .collect())
}

/// Diagnostics of one `(L, N)` cell for the given test functions.
pub fn cell_diagnostics(
    split: &SplitSector,
    functions: &[Vec<f64>],
    t_grid: &[f64],
) -> Result<Vec<DiagnosticRow>> {
    let mut rows = Vec::new();
    let big_n = split.n_particles();
    if big_n == 0 {
        return Ok(rows);
    }
    let profile = gamma_ratio_profile(split);
    for (k, v) in profile.iter().enumerate() {
        push(&mut rows, "gamma_ratio", split, Some(k + 1), *v);
    }
    push(&mut rows, "gamma_ratio_upper", split, None, profile.iter().copied().fold(0.0, f64::max));
    push(
        &mut rows,
        "gamma_ratio_lower",
        split,
        None,
        profile.iter().map(|v| 1.0 / v).fold(0.0, f64::max),
    );

    let mut per_n = vec![0.0f64; big_n];
    for f in functions {
        for (n, v) in implied_gradient_constants(split, f)? {
            per_n[n - 1] = per_n[n - 1].max(v);
        }
    }
    for (k, v) in per_n.iter().enumerate() {
        push(&mut rows, "gradient_c", split, Some(k + 1), *v);
    }
    push(&mut rows, "gradient_c_max", split, None, per_n.iter().copied().fold(0.0, f64::max));

    let (mut c_rate, mut c_h): (f64, f64) = (0.0, 0.0);
    for f in functions {
        let (a, b) = implied_covariance_constants(split, f)?;
        c_rate = c_rate.max(a);
        c_h = c_h.max(b);
    }
    push(&mut rows, "cov_rate_c", split, None, c_rate);
    push(&mut rows, "cov_h_c", split, None, c_h);

    let (a_rate, a_h) = implied_mgf_constants(split.rate(), split.sector().n_sites(), big_n, t_grid)?;
    push(&mut rows, "mgf_rate_a", split, None, a_rate);
    push(&mut rows, "mgf_h_a", split, None, a_h);
    Ok(rows)
}

/// Strictly positive test functions `exp(Z)`, `Z` standard normal.
pub fn random_positive_functions(size: usize, count: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..count)
        .map(|_| {
            (0..size)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    z.exp()
                })
                .collect()
        })
        .collect()
}

/// Runs every `(sites, N)` cell on a segment with equal halves. Rows are
/// sorted by `(L, N)`, then by quantity order of emission.
pub fn diagnostics_scan(
    grid: &[(usize, usize)],
    rate: &RateFunction,
    opts: &DiagnosticOptions,
) -> Result<Vec<DiagnosticRow>> {
    let mut cells: Vec<(usize, usize)> = grid.to_vec();
    cells.sort_unstable();
    cells.dedup();
    let results = cells
        .par_iter()
        .map(|&(sites, big_n)| {
            let sector = Sector::with_cap(&Lattice::segment(sites)?, big_n, opts.sector_cap)?;
            let split = SplitSector::equal_halves(sector, rate.clone())?;
            let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
            rng.set_stream(((sites as u64) << 32) | big_n as u64);
            let fs = random_positive_functions(split.sector().size(), opts.functions, &mut rng);
            cell_diagnostics(&split, &fs, &opts.t_grid)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(results.into_iter().flatten().collect())
}

pub fn write_diagnostics_csv<W: Write>(rows: &[DiagnosticRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["quantity", "rate", "L", "N", "n", "value"])?;
    for r in rows {
        w.write_record([
            r.quantity.clone(),
            r.rate.clone(),
            r.l.to_string(),
            r.big_n.to_string(),
            r.n.map(|n| n.to_string()).unwrap_or_default(),
            format!("{:e}", r.value),
        ])?;
    }
    w.flush()?;
    Ok(())
}
