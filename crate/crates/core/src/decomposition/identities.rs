//! Entropy and Dirichlet-form identities attached to a split.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::decomposition::split::SplitSector;
use crate::error::{Error, Result};
use crate::spectral::forms::entropy_weighted;

fn check_positive(f: &[f64]) -> Result<()> {
    if let Some(v) = f.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::Domain(format!("needs f >= 0, found {v}")));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct EntropyDecomposition {
    pub total: f64,
    /// `nu[Ent_{nu[.|n]}(f)]`.
    pub within: f64,
    /// `Ent_nu(nu[f | n])`.
    pub between: f64,
    /// `|total - within - between| / total`, zero when `total = 0`.
    pub residual: f64,
}

pub fn entropy_decomposition(split: &SplitSector, f: &[f64]) -> Result<EntropyDecomposition> {
    split.check_len(f.len())?;
    check_positive(f)?;
    let probs = split.measure().probs();
    let total = entropy_weighted(probs, f);
    let mut within = 0.0;
    let mut masses = Vec::new();
    let mut conds = Vec::new();
    for n in 0..=split.n_particles() {
        let fiber = split.fiber(n);
        if fiber.is_empty() {
            continue;
        }
        let w: Vec<f64> = fiber.iter().map(|&i| probs[i]).collect();
        let fv: Vec<f64> = fiber.iter().map(|&i| f[i]).collect();
        let mass = split.fiber_mass(n);
        within += mass * entropy_weighted(&w, &fv);
        masses.push(mass);
        conds.push(w.iter().zip(&fv).map(|(a, b)| a * b).sum::<f64>() / mass);
    }
    let between = entropy_weighted(&masses, &conds);
    let residual = if total > 0.0 {
        (total - within - between).abs() / total
    } else {
        (within + between).abs()
    };
    Ok(EntropyDecomposition {
        total,
        within,
        between,
        residual,
    })
}

/// Average entropy over classes of equal `key`, weighted by `nu`.
fn grouped_entropy(split: &SplitSector, f: &[f64], key: impl Fn(&[u32]) -> Vec<u32>) -> f64 {
    let probs = split.measure().probs();
    let mut groups: HashMap<Vec<u32>, (Vec<f64>, Vec<f64>)> = HashMap::new();
    for (i, cfg) in split.sector().configs().enumerate() {
        let g = groups.entry(key(cfg)).or_default();
        g.0.push(probs[i]);
        g.1.push(f[i]);
    }
    let mut keys: Vec<_> = groups.keys().cloned().collect();
    keys.sort_unstable();
    keys.iter()
        .map(|k| {
            let (w, v) = &groups[k];
            w.iter().sum::<f64>() * entropy_weighted(w, v)
        })
        .sum()
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TensorCheck {
    /// `nu[Ent_{nu[.|n]}(f)]`.
    pub conditional: f64,
    /// `nu[Ent_{nu_L1}(f)] + nu[Ent_{nu_L2}(f)]`, each half resampled with
    /// the other frozen.
    pub product: f64,
    pub slack: f64,
}

pub fn tensor_property(split: &SplitSector, f: &[f64]) -> Result<TensorCheck> {
    split.check_len(f.len())?;
    check_positive(f)?;
    let conditional = entropy_decomposition(split, f)?.within;
    let freeze = |half: &[usize]| {
        let half = half.to_vec();
        move |c: &[u32]| half.iter().map(|&x| c[x]).collect::<Vec<u32>>()
    };
    // resampling L1 means freezing L2 (and vice versa)
    let product = grouped_entropy(split, f, freeze(split.half2()))
        + grouped_entropy(split, f, freeze(split.half1()));
    Ok(TensorCheck {
        conditional,
        product,
        slack: product - conditional,
    })
}

/// `E_{nu[.|n]}(g, g) = 1/2 nu[sum_x sum_{y~x} c(eta_x) (d_xy g)^2 | eta_L1 = n]`,
/// the full form integrated against the conditional measure. With
/// `within_only` the bonds joining the two halves are dropped.
pub fn fiber_dirichlet(split: &SplitSector, g: &[f64], n: usize, within_only: bool) -> Result<f64> {
    split.check_len(g.len())?;
    let w = split.conditional_weights(n)?;
    let sector = split.sector();
    let lattice = sector.lattice();
    let rate = split.rate();
    let mut scratch = Vec::with_capacity(sector.n_sites());
    let mut total = 0.0;
    for (&i, p) in split.fiber(n).iter().zip(&w) {
        let cfg = sector.config(i);
        let mut s = 0.0;
        for x in 0..sector.n_sites() {
            if cfg[x] == 0 {
                continue;
            }
            let cx = rate.rate(cfg[x] as usize);
            for &y in lattice.neighbors(x) {
                if !within_only || split.in_half1(x) == split.in_half1(y) {
                    let j = sector.moved_rank(i, x, y, &mut scratch);
                    s += cx * (g[j] - g[i]).powi(2);
                }
            }
        }
        total += p * s;
    }
    Ok(0.5 * total)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct ConditionalDirichlet {
    /// `sum_n gamma(n) E_{nu[.|n]}(g, g)`.
    pub averaged: f64,
    /// `E_nu(g, g)` from the sector generator.
    pub full: f64,
    /// Part of `full` carried by bonds inside a half.
    pub within_bonds: f64,
    /// Part carried by bonds joining the halves.
    pub cross_bonds: f64,
    /// `|averaged - full| / full`.
    pub residual: f64,
    /// `|sum_n gamma(n) E^within_n - within_bonds| / within_bonds`.
    pub within_residual: f64,
}

fn relative(a: f64, b: f64) -> f64 {
    if b == 0.0 {
        a.abs()
    } else {
        (a - b).abs() / b.abs()
    }
}

pub fn conditional_dirichlet(split: &SplitSector, g: &[f64]) -> Result<ConditionalDirichlet> {
    split.check_len(g.len())?;
    let (mut averaged, mut averaged_within) = (0.0, 0.0);
    for n in 0..=split.n_particles() {
        if split.check_fiber(n).is_ok() {
            let gn = split.gamma().prob(n);
            averaged += gn * fiber_dirichlet(split, g, n, false)?;
            averaged_within += gn * fiber_dirichlet(split, g, n, true)?;
        }
    }
    let sector = split.sector();
    let lattice = sector.lattice();
    let rate = split.rate();
    let probs = split.measure().probs();
    let mut scratch = Vec::with_capacity(sector.n_sites());
    let (mut within_bonds, mut cross_bonds) = (0.0, 0.0);
    for (i, cfg) in sector.configs().enumerate() {
        for x in 0..sector.n_sites() {
            if cfg[x] == 0 {
                continue;
            }
            let cx = rate.rate(cfg[x] as usize);
            for &y in lattice.neighbors(x) {
                let j = sector.moved_rank(i, x, y, &mut scratch);
                let term = 0.5 * probs[i] * cx * (g[j] - g[i]).powi(2);
                if split.in_half1(x) == split.in_half1(y) {
                    within_bonds += term;
                } else {
                    cross_bonds += term;
                }
            }
        }
    }
    let full = within_bonds + cross_bonds;
    Ok(ConditionalDirichlet {
        averaged,
        full,
        within_bonds,
        cross_bonds,
        residual: relative(averaged, full),
        within_residual: relative(averaged_within, within_bonds),
    })
}
