//! Reversible Markov chains given by a positive stationary law `pi` and
//! symmetric edge conductances `w_ij = pi_i r_ij = pi_j r_ji`.
//!
//! Both the sector generator and the one-dimensional birth-death chains are
//! brought into this form, so the gap solver and the log-Sobolev optimizer
//! are written once.

use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;
use crate::spectral::generator::SparseGenerator;

#[derive(Debug, Clone)]
pub struct ReversibleChain {
    pi: Vec<f64>,
    row_ptr: Vec<usize>,
    cols: Vec<u32>,
    conductance: Vec<f64>,
}

impl ReversibleChain {
    /// Builds a chain from undirected edges `(i, j, w_ij)`; duplicate edges add.
    pub fn from_edges(pi: Vec<f64>, edges: &[(usize, usize, f64)]) -> Result<Self> {
        let n = pi.len();
        if n == 0 {
            return Err(Error::EmptyInput("stationary law"));
        }
        if pi.iter().any(|&p| !(p > 0.0) || !p.is_finite()) {
            return Err(Error::Domain("stationary law must be strictly positive".into()));
        }
        let mut adj: Vec<Vec<(u32, f64)>> = vec![Vec::new(); n];
        for &(i, j, w) in edges {
            if i >= n || j >= n {
                return Err(Error::Shape {
                    expected: n,
                    actual: i.max(j) + 1,
                });
            }
            if i == j || w == 0.0 {
                continue;
            }
            if !(w > 0.0) || !w.is_finite() {
                return Err(Error::Domain(format!("conductance {w} on edge ({i}, {j})")));
            }
            adj[i].push((j as u32, w));
            adj[j].push((i as u32, w));
        }
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut conductance = Vec::new();
        for mut row in adj {
            row.sort_unstable_by_key(|&(j, _)| j);
            for (j, w) in row {
                if cols.len() > *row_ptr.last().unwrap() && *cols.last().unwrap() == j {
                    *conductance.last_mut().unwrap() += w;
                } else {
                    cols.push(j);
                    conductance.push(w);
                }
            }
            row_ptr.push(cols.len());
        }
        Ok(ReversibleChain {
            pi,
            row_ptr,
            cols,
            conductance,
        })
    }

    /// Conductances `sqrt(nu_i r_ij nu_j r_ji)`, exact under detailed balance.
    pub fn from_generator(gen: &SparseGenerator, measure: &DiscreteMeasure) -> Result<Self> {
        if gen.n_states() != measure.space_size() {
            return Err(Error::Shape {
                expected: gen.n_states(),
                actual: measure.space_size(),
            });
        }
        let mut edges = Vec::with_capacity(gen.nnz() / 2);
        for (i, j, r) in gen.triplets() {
            if i < j {
                let back = gen.rate(j, i);
                let lw = 0.5 * (measure.log_prob(i) + r.ln() + measure.log_prob(j) + back.ln());
                edges.push((i, j, lw.exp()));
            }
        }
        Self::from_edges(measure.probs().to_vec(), &edges)
    }

    pub fn size(&self) -> usize {
        self.pi.len()
    }

    pub fn pi(&self) -> &[f64] {
        &self.pi
    }

    pub fn n_edges(&self) -> usize {
        self.cols.len() / 2
    }

    /// Neighbours `(j, w_ij)` of state `i`.
    pub fn neighbors(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        let span = self.row_ptr[i]..self.row_ptr[i + 1];
        self.cols[span.clone()]
            .iter()
            .zip(&self.conductance[span])
            .map(|(&j, &w)| (j as usize, w))
    }

    /// Undirected edges `(i, j, w)` with `i < j`.
    pub fn edges(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        (0..self.size()).flat_map(move |i| {
            self.neighbors(i)
                .filter(move |&(j, _)| j > i)
                .map(move |(j, w)| (i, j, w))
        })
    }

    /// Total exit rate `sum_j w_ij / pi_i`.
    pub fn exit_rate(&self, i: usize) -> f64 {
        self.neighbors(i).map(|(_, w)| w).sum::<f64>() / self.pi[i]
    }

    /// `sum_{i<j} w_ij (g_i - g_j)^2`.
    pub fn dirichlet(&self, g: &[f64]) -> f64 {
        self.edges().map(|(i, j, w)| w * (g[i] - g[j]).powi(2)).sum()
    }

    /// `(K g)_i = sum_j w_ij (g_i - g_j)`, the gradient of the form is `2 K g`.
    pub fn laplacian_apply(&self, g: &[f64], out: &mut [f64]) {
        for (i, o) in out.iter_mut().enumerate() {
            *o = self.neighbors(i).map(|(j, w)| w * (g[i] - g[j])).sum();
        }
    }

    pub fn is_connected(&self) -> bool {
        let n = self.size();
        let mut seen = vec![false; n];
        let mut stack = vec![0usize];
        seen[0] = true;
        let mut count = 1;
        while let Some(i) = stack.pop() {
            for (j, _) in self.neighbors(i) {
                if !seen[j] {
                    seen[j] = true;
                    count += 1;
                    stack.push(j);
                }
            }
        }
        count == n
    }
}
