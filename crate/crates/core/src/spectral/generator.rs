//! The zero-range generator `L f(eta) = sum_x sum_{y~x} c(eta_x) (f(eta^{x->y}) - f(eta))`
//! restricted to a sector, stored row-compressed.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;
use crate::rate::RateFunction;
use crate::sector::Sector;

const PAR_THRESHOLD: usize = 20_000;

#[derive(Debug, Clone)]
pub struct SparseGenerator {
    n_states: usize,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    rates: Vec<f64>,
    /// Total exit rate of each state; the matrix diagonal is its negative.
    exit: Vec<f64>,
}

fn row_transitions(sector: &Sector, rate: &RateFunction, rank: usize) -> Vec<(u32, f64)> {
    let config = sector.config(rank);
    let lattice = sector.lattice();
    let mut scratch = Vec::with_capacity(config.len());
    let mut out = Vec::new();
    for (x, &k) in config.iter().enumerate() {
        if k == 0 {
            continue;
        }
        let c = rate.rate(k as usize);
        for &y in lattice.neighbors(x) {
            out.push((sector.moved_rank(rank, x, y, &mut scratch) as u32, c));
        }
    }
    out.sort_unstable_by_key(|&(j, _)| j);
    out
}

/// One off-diagonal entry per `(eta, x, y)` with `eta_x > 0` and `y ~ x`.
pub fn assemble_generator(sector: &Sector, rate: &RateFunction) -> Result<SparseGenerator> {
    rate.ensure_tabulated(sector.n_particles())?;
    let n = sector.size();
    let rows: Vec<Vec<(u32, f64)>> = if n >= PAR_THRESHOLD {
        (0..n)
            .into_par_iter()
            .map(|r| row_transitions(sector, rate, r))
            .collect()
    } else {
        (0..n).map(|r| row_transitions(sector, rate, r)).collect()
    };
    let mut row_ptr = Vec::with_capacity(n + 1);
    row_ptr.push(0);
    let nnz: usize = rows.iter().map(Vec::len).sum();
    let mut cols = Vec::with_capacity(nnz);
    let mut rates = Vec::with_capacity(nnz);
    let mut exit = Vec::with_capacity(n);
    for row in rows {
        let mut total = 0.0;
        for (j, r) in row {
            cols.push(j);
            rates.push(r);
            total += r;
        }
        exit.push(total);
        row_ptr.push(cols.len());
    }
    Ok(SparseGenerator {
        n_states: n,
        row_ptr,
        cols,
        rates,
        exit,
    })
}

impl SparseGenerator {
    pub fn n_states(&self) -> usize {
        self.n_states
    }

    pub fn nnz(&self) -> usize {
        self.cols.len()
    }

    pub fn exit_rate(&self, i: usize) -> f64 {
        self.exit[i]
    }

    /// Off-diagonal entries `(j, rate)` of row `i`, sorted by `j`.
    pub fn row(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[span.clone()]
            .iter()
            .zip(&self.rates[span])
            .map(|(&j, &r)| (j as usize, r))
    }

    /// Rate of the transition `i -> j`, zero if absent.
    pub fn rate(&self, i: usize, j: usize) -> f64 {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        match self.cols[span.clone()].binary_search(&(j as u32)) {
            Ok(k) => self.rates[span.start + k],
            Err(_) => 0.0,
        }
    }

    /// All stored transitions `(i, j, rate)`.
    pub fn triplets(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.n_states).flat_map(move |i| self.row(i).map(move |(j, r)| (i, j, r)))
    }

    fn check_len(&self, len: usize) -> Result<()> {
        if len != self.n_states {
            return Err(Error::Shape {
                expected: self.n_states,
                actual: len,
            });
        }
        Ok(())
    }

    /// `(L f)(i) = sum_j r_ij (f_j - f_i)`.
    pub fn apply(&self, f: &[f64]) -> Result<Vec<f64>> {
        self.check_len(f.len())?;
        let row = |i: usize| -> f64 { self.row(i).map(|(j, r)| r * (f[j] - f[i])).sum() };
        Ok(if self.n_states >= PAR_THRESHOLD {
            (0..self.n_states).into_par_iter().map(row).collect()
        } else {
            (0..self.n_states).map(row).collect()
        })
    }

    /// Largest `|sum of row i|` of the full matrix including the diagonal.
    pub fn max_row_sum(&self) -> f64 {
        (0..self.n_states)
            .map(|i| (self.row(i).map(|(_, r)| r).sum::<f64>() - self.exit[i]).abs())
            .fold(0.0, f64::max)
    }

    /// Largest relative violation of `nu_i r_ij = nu_j r_ji`, in log space.
    pub fn reversibility_residual(&self, measure: &DiscreteMeasure) -> Result<f64> {
        self.check_len(measure.space_size())?;
        let mut worst: f64 = 0.0;
        for (i, j, r) in self.triplets() {
            let back = self.rate(j, i);
            if back == 0.0 {
                return Ok(f64::INFINITY);
            }
            let a = measure.log_prob(i) + r.ln();
            let b = measure.log_prob(j) + back.ln();
            worst = worst.max((a - b).abs().exp_m1());
        }
        Ok(worst)
    }

    /// True when the transition graph is connected.
    pub fn is_irreducible(&self) -> bool {
        let n = self.n_states;
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = stack.pop() {
            for (j, _) in self.row(i) {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    stack.push(j);
                }
            }
        }
        count == n
    }

    /// Dense matrix, row-major, for small-sector oracles.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.n_states;
        let mut m = vec![vec![0.0; n]; n];
        for i in 0..n {
            for (j, r) in self.row(i) {
                m[i][j] += r;
            }
            m[i][i] -= self.exit[i];
        }
        m
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::lattice::Lattice;
    use crate::measure::canonical_measure;
    use crate::rate::RateFamily;
    use crate::sector::enumerate_sector;

    #[test]
    fn two_sites_one_particle() {
        let s = enumerate_sector(&Lattice::segment(2).unwrap(), 1).unwrap();
        let g = assemble_generator(&s, &RateFamily::Linear(1.0).table()).unwrap();
        assert_eq!(g.to_dense(), vec![vec![-1.0, 1.0], vec![1.0, -1.0]]);
    }

    #[test]
    fn empty_sector_gives_zero_matrix() {
        let s = enumerate_sector(&Lattice::segment(3).unwrap(), 0).unwrap();
        let g = assemble_generator(&s, &RateFamily::Linear(1.0).table()).unwrap();
        assert_eq!(g.to_dense(), vec![vec![0.0]]);
        assert_eq!(g.nnz(), 0);
    }

    #[test]
    fn constant_rate_chain_on_three_states() {
        let s = enumerate_sector(&Lattice::segment(2).unwrap(), 2).unwrap();
        let g = assemble_generator(&s, &RateFamily::Constant(1.0).table()).unwrap();
        // (2,0) <-> (1,1) <-> (0,2)
        let t: Vec<_> = g.triplets().collect();
        assert_eq!(t, vec![(0, 1, 1.0), (1, 0, 1.0), (1, 2, 1.0), (2, 1, 1.0)]);
    }

    #[test]
    fn rows_sum_to_zero_and_detailed_balance_holds() {
        for fam in [RateFamily::Linear(1.0), RateFamily::Staircase(2), RateFamily::Constant(1.0)] {
            let rate = fam.table();
            for (sites, n) in [(3, 4), (4, 5), (5, 3)] {
                let s = enumerate_sector(&Lattice::segment(sites).unwrap(), n).unwrap();
                let g = assemble_generator(&s, &rate).unwrap();
                let m = canonical_measure(&s, &rate).unwrap();
                assert!(g.max_row_sum() <= 1e-12);
                assert!(g.reversibility_residual(&m).unwrap() <= 1e-12);
                assert!(g.is_irreducible());
            }
            let s = enumerate_sector(&Lattice::cube(2, 2).unwrap(), 3).unwrap();
            let g = assemble_generator(&s, &rate).unwrap();
            let m = canonical_measure(&s, &rate).unwrap();
            assert!(g.reversibility_residual(&m).unwrap() <= 1e-12);
        }
    }

    #[test]
    fn short_table_is_rejected() {
        let s = enumerate_sector(&Lattice::segment(2).unwrap(), 5).unwrap();
        let short = RateFamily::Linear(1.0).tabulate(3).unwrap();
        assert!(matches!(
            assemble_generator(&s, &short),
            Err(Error::InsufficientTabulation { .. })
        ));
    }
}
