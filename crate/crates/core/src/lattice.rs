//! Finite boxes of `Z^d` with nearest-neighbour adjacency.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// A box with `side` sites along each of `dimension` axes, open boundary.
///
/// Site counts are always explicit: a segment with `L` sites is
/// `Lattice::segment(L)`, never inferred from an `[0, L]` convention.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Lattice {
    dimension: usize,
    side: usize,
    neighbors: Vec<Vec<usize>>,
}

impl Lattice {
    pub fn segment(sites: usize) -> Result<Self> {
        Self::cube(1, sites)
    }

    pub fn cube(dimension: usize, side: usize) -> Result<Self> {
        if dimension == 0 || side == 0 {
            return Err(Error::Domain(format!(
                "box needs positive dimension and side, got d = {dimension}, side = {side}"
            )));
        }
        let n_sites = side
            .checked_pow(dimension as u32)
            .ok_or_else(|| Error::Domain("box too large".into()))?;
        let mut neighbors = vec![Vec::with_capacity(2 * dimension); n_sites];
        let mut stride = 1;
        for _axis in 0..dimension {
            for (site, nbrs) in neighbors.iter_mut().enumerate() {
                let coord = (site / stride) % side;
                if coord > 0 {
                    nbrs.push(site - stride);
                }
                if coord + 1 < side {
                    nbrs.push(site + stride);
                }
            }
            stride *= side;
        }
        for nbrs in &mut neighbors {
            nbrs.sort_unstable();
        }
        Ok(Lattice {
            dimension,
            side,
            neighbors,
        })
    }

    pub fn dimension(&self) -> usize {
        self.dimension
    }

    pub fn side(&self) -> usize {
        self.side
    }

    pub fn n_sites(&self) -> usize {
        self.neighbors.len()
    }

    pub fn neighbors(&self, site: usize) -> &[usize] {
        &self.neighbors[site]
    }

    pub fn degree(&self, site: usize) -> usize {
        self.neighbors[site].len()
    }

    pub fn coords(&self, site: usize) -> Vec<usize> {
        let mut rest = site;
        (0..self.dimension)
            .map(|_| {
                let c = rest % self.side;
                rest /= self.side;
                c
            })
            .collect()
    }

    /// Ordered nearest-neighbour pairs `(x, y)` with `x ~ y`.
    pub fn ordered_bonds(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.neighbors
            .iter()
            .enumerate()
            .flat_map(|(x, nbrs)| nbrs.iter().map(move |&y| (x, y)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn segment_adjacency() {
        let l = Lattice::segment(4).unwrap();
        assert_eq!(l.n_sites(), 4);
        assert_eq!(l.neighbors(0), &[1]);
        assert_eq!(l.neighbors(2), &[1, 3]);
        assert_eq!(l.ordered_bonds().count(), 6);
    }

    #[test]
    fn square_box_degrees_and_symmetry() {
        let l = Lattice::cube(2, 3).unwrap();
        assert_eq!(l.n_sites(), 9);
        for x in 0..9 {
            assert!((2..=4).contains(&l.degree(x)));
            for &y in l.neighbors(x) {
                assert!(l.neighbors(y).contains(&x));
                let (a, b) = (l.coords(x), l.coords(y));
                let dist: usize = a.iter().zip(&b).map(|(p, q)| p.abs_diff(*q)).sum();
                assert_eq!(dist, 1);
            }
        }
        assert_eq!(l.degree(4), 4);
    }

    #[test]
    fn rejects_empty_box() {
        assert!(Lattice::segment(0).is_err());
        assert!(Lattice::cube(0, 3).is_err());
    }
}
