//! Indexed particle-number sectors `{eta : sum_x eta_x = N}`.
//!
//! Configurations are weak compositions of `N` into `|Lambda|` parts, ranked
//! in colexicographic order of their stars-and-bars bar sets. Rank 0 is
//! `(N, 0, ..., 0)` and the last rank is `(0, ..., 0, N)`.

use crate::error::{Error, Result};
use crate::lattice::Lattice;

pub const DEFAULT_SECTOR_CAP: usize = 2_000_000;

/// Exact number of weak compositions of `n` into `parts` parts, `None` on
/// `u128` overflow.
pub fn composition_count(parts: usize, n: usize) -> Option<u128> {
    if parts == 0 {
        return if n == 0 { Some(1) } else { Some(0) };
    }
    // C(n + parts - 1, parts - 1), built incrementally so every partial
    // product is itself a binomial coefficient.
    let k = (parts - 1).min(n) as u128;
    let top = (n + parts - 1) as u128;
    let mut acc: u128 = 1;
    for i in 1..=k {
        acc = acc.checked_mul(top - k + i)? / i;
    }
    Some(acc)
}

/// Rank/unrank bijection for compositions of `n` into `parts` parts.
#[derive(Debug, Clone)]
pub struct CompositionIndex {
    parts: usize,
    n: usize,
    size: usize,
    stride: usize,
    // binom[i * stride + p] = C(p, i), saturating
    binom: Vec<u64>,
}

impl CompositionIndex {
    pub fn new(parts: usize, n: usize, cap: usize) -> Result<Self> {
        if parts == 0 {
            return Err(Error::Domain("sector needs at least one site".into()));
        }
        let count = composition_count(parts, n).unwrap_or(u128::MAX);
        if count > cap as u128 {
            return Err(Error::SectorTooLarge {
                count,
                cap: cap as u128,
            });
        }
        let stride = n + parts;
        let mut binom = vec![0u64; parts * stride];
        for p in 0..stride {
            binom[p] = 1;
        }
        for i in 1..parts {
            for p in 1..stride {
                binom[i * stride + p] =
                    binom[(i - 1) * stride + p - 1].saturating_add(binom[i * stride + p - 1]);
            }
        }
        Ok(CompositionIndex {
            parts,
            n,
            size: count as usize,
            stride,
            binom,
        })
    }

    #[inline]
    fn c(&self, p: usize, i: usize) -> u64 {
        self.binom[i * self.stride + p]
    }

    pub fn parts(&self) -> usize {
        self.parts
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn size(&self) -> usize {
        self.size
    }

    /// Rank of a configuration, O(parts).
    pub fn rank(&self, config: &[u32]) -> usize {
        debug_assert_eq!(config.len(), self.parts);
        let mut tail = 0usize;
        let mut r = 0u64;
        for i in 1..self.parts {
            tail += config[self.parts - i] as usize;
            r += self.c(tail + i - 1, i);
        }
        r as usize
    }

    pub fn unrank_into(&self, rank: usize, out: &mut [u32]) {
        debug_assert!(rank < self.size);
        let v = self.parts;
        let mut r = rank as u64;
        let mut prev_tail = self.n;
        for i in (1..v).rev() {
            // largest p with C(p, i) <= r, p in [i - 1, n + i - 1]
            let (mut lo, mut hi) = (i - 1, self.n + i - 1);
            while lo < hi {
                let mid = (lo + hi).div_ceil(2);
                if self.c(mid, i) <= r {
                    lo = mid;
                } else {
                    hi = mid - 1;
                }
            }
            r -= self.c(lo, i);
            let tail = lo + 1 - i;
            // tail_i counts particles on the last i sites
            out[v - 1 - i] = (prev_tail - tail) as u32;
            prev_tail = tail;
        }
        out[v - 1] = prev_tail as u32;
    }

    pub fn unrank(&self, rank: usize) -> Vec<u32> {
        let mut out = vec![0; self.parts];
        self.unrank_into(rank, &mut out);
        out
    }
}

/// A fully enumerated sector on a lattice.
#[derive(Debug, Clone)]
pub struct Sector {
    lattice: Lattice,
    index: CompositionIndex,
    configs: Vec<u32>,
}

/// Enumerates the sector with the default size cap.
pub fn enumerate_sector(lattice: &Lattice, n_particles: usize) -> Result<Sector> {
    Sector::with_cap(lattice, n_particles, DEFAULT_SECTOR_CAP)
}

impl Sector {
    pub fn with_cap(lattice: &Lattice, n_particles: usize, cap: usize) -> Result<Self> {
        let index = CompositionIndex::new(lattice.n_sites(), n_particles, cap)?;
        let v = lattice.n_sites();
        let mut configs = vec![0u32; index.size() * v];
        for (r, chunk) in configs.chunks_exact_mut(v).enumerate() {
            index.unrank_into(r, chunk);
        }
        Ok(Sector {
            lattice: lattice.clone(),
            index,
            configs,
        })
    }

    pub fn lattice(&self) -> &Lattice {
        &self.lattice
    }

    pub fn n_sites(&self) -> usize {
        self.lattice.n_sites()
    }

    pub fn n_particles(&self) -> usize {
        self.index.n()
    }

    pub fn size(&self) -> usize {
        self.index.size()
    }

    pub fn index(&self) -> &CompositionIndex {
        &self.index
    }

    #[inline]
    pub fn config(&self, rank: usize) -> &[u32] {
        let v = self.n_sites();
        &self.configs[rank * v..(rank + 1) * v]
    }

    pub fn configs(&self) -> impl Iterator<Item = &[u32]> {
        self.configs.chunks_exact(self.n_sites())
    }

    #[inline]
    pub fn rank(&self, config: &[u32]) -> usize {
        self.index.rank(config)
    }

    /// Rank of `eta - delta^x + delta^y`; requires `eta_x > 0`.
    pub fn moved_rank(&self, rank: usize, x: usize, y: usize, scratch: &mut Vec<u32>) -> usize {
        scratch.clear();
        scratch.extend_from_slice(self.config(rank));
        debug_assert!(scratch[x] > 0);
        scratch[x] -= 1;
        scratch[y] += 1;
        self.index.rank(scratch)
    }
}

/// Formats a configuration as space-separated occupations.
pub fn format_config(config: &[u32]) -> String {
    config
        .iter()
        .map(|c| c.to_string())
        .collect::<Vec<_>>()
        .join(" ")
}
