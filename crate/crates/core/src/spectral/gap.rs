//! Spectral gap of a reversible chain: the smallest non-zero eigenvalue of
//! `-L`, computed on the symmetrized operator `S = D^{1/2} (-L) D^{-1/2}`
//! with the zero mode `sqrt(pi)` deflated.

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;
use crate::spectral::chain::ReversibleChain;
use crate::spectral::generator::SparseGenerator;

/// Chains smaller than this are diagonalized densely.
pub const DENSE_LIMIT: usize = 2000;
pub const DEFAULT_GAP_TOL: f64 = 1e-10;

const MAX_RESTARTS: usize = 200;
const PAR_THRESHOLD: usize = 20_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum GapMethod {
    Dense,
    Lanczos,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GapResult {
    pub gap: f64,
    /// Eigenfunction `f` with `pi[f] = 0` and `pi[f^2] = 1`.
    pub eigenvector: Vec<f64>,
    pub method: GapMethod,
    pub iterations: usize,
    /// Residual norm of the returned eigenpair of `S`.
    pub residual: f64,
}

struct Symmetrized {
    diag: Vec<f64>,
    row_ptr: Vec<usize>,
    cols: Vec<usize>,
    vals: Vec<f64>,
    zero_mode: Vec<f64>,
    norm_bound: f64,
}

impl Symmetrized {
    fn new(chain: &ReversibleChain) -> Self {
        let n = chain.size();
        let sq: Vec<f64> = chain.pi().iter().map(|p| p.sqrt()).collect();
        let mut row_ptr = vec![0];
        let mut cols = Vec::new();
        let mut vals = Vec::new();
        let mut diag = Vec::with_capacity(n);
        for i in 0..n {
            let mut d = 0.0;
            for (j, w) in chain.neighbors(i) {
                d += w;
                cols.push(j);
                vals.push(-w / (sq[i] * sq[j]));
            }
            diag.push(d / chain.pi()[i]);
            row_ptr.push(cols.len());
        }
        let norm = sq.iter().map(|s| s * s).sum::<f64>().sqrt();
        let zero_mode = sq.iter().map(|s| s / norm).collect();
        let norm_bound = 2.0 * diag.iter().copied().fold(0.0, f64::max);
        Symmetrized {
            diag,
            row_ptr,
            cols,
            vals,
            zero_mode,
            norm_bound,
        }
    }

    fn row(&self, i: usize, x: &[f64]) -> f64 {
        let mut acc = self.diag[i] * x[i];
        for k in self.row_ptr[i]..self.row_ptr[i + 1] {
            acc += self.vals[k] * x[self.cols[k]];
        }
        acc
    }

    fn apply(&self, x: &[f64], out: &mut [f64]) {
        if x.len() >= PAR_THRESHOLD {
            out.par_iter_mut()
                .enumerate()
                .for_each(|(i, o)| *o = self.row(i, x));
        } else {
            for (i, o) in out.iter_mut().enumerate() {
                *o = self.row(i, x);
            }
        }
    }

    fn deflate(&self, x: &mut [f64]) {
        let c = dot(&self.zero_mode, x);
        axpy(-c, &self.zero_mode, x);
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    if a.len() >= PAR_THRESHOLD {
        a.par_iter().zip(b).map(|(x, y)| x * y).sum()
    } else {
        a.iter().zip(b).map(|(x, y)| x * y).sum()
    }
}

fn axpy(a: f64, x: &[f64], y: &mut [f64]) {
    if y.len() >= PAR_THRESHOLD {
        y.par_iter_mut().zip(x).for_each(|(yi, xi)| *yi += a * xi);
    } else {
        for (yi, xi) in y.iter_mut().zip(x) {
            *yi += a * xi;
        }
    }
}

fn normalize(x: &mut [f64]) -> f64 {
    let n = dot(x, x).sqrt();
    if n > 0.0 {
        x.iter_mut().for_each(|v| *v /= n);
    }
    n
}

/// Spectral gap of the sector generator with respect to its canonical measure.
pub fn spectral_gap(gen: &SparseGenerator, measure: &DiscreteMeasure, tol: f64) -> Result<GapResult> {
    chain_spectral_gap(&ReversibleChain::from_generator(gen, measure)?, tol)
}

pub fn chain_spectral_gap(chain: &ReversibleChain, tol: f64) -> Result<GapResult> {
    let n = chain.size();
    if n < 2 {
        return Err(Error::Degenerate(
            "a single state has no spectral gap".into(),
        ));
    }
    if !chain.is_connected() {
        return Err(Error::Degenerate("chain is reducible, gap is zero".into()));
    }
    let op = Symmetrized::new(chain);
    let (gap, psi, method, iterations, residual) = if n < DENSE_LIMIT {
        let (g, v, r) = dense_gap(&op);
        (g, v, GapMethod::Dense, 1, r)
    } else {
        let (g, v, it, r) = lanczos_gap(&op, tol)?;
        (g, v, GapMethod::Lanczos, it, r)
    };
    let mut f: Vec<f64> = psi
        .iter()
        .zip(chain.pi())
        .map(|(v, p)| v / p.sqrt())
        .collect();
    let mean: f64 = f.iter().zip(chain.pi()).map(|(v, p)| v * p).sum();
    f.iter_mut().for_each(|v| *v -= mean);
    let norm: f64 = f
        .iter()
        .zip(chain.pi())
        .map(|(v, p)| v * v * p)
        .sum::<f64>()
        .sqrt();
    f.iter_mut().for_each(|v| *v /= norm);
    Ok(GapResult {
        gap,
        eigenvector: f,
        method,
        iterations,
        residual,
    })
}

fn dense_gap(op: &Symmetrized) -> (f64, Vec<f64>, f64) {
    let n = op.diag.len();
    let shift = op.norm_bound + 1.0;
    let q = &op.zero_mode;
    let mut m = DMatrix::<f64>::zeros(n, n);
    for i in 0..n {
        m[(i, i)] = op.diag[i];
        for k in op.row_ptr[i]..op.row_ptr[i + 1] {
            m[(i, op.cols[k])] += op.vals[k];
        }
        for j in 0..n {
            m[(i, j)] += shift * q[i] * q[j];
        }
    }
    let eig = SymmetricEigen::new(m);
    let (k, &gap) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty spectrum");
    let v: Vec<f64> = eig.eigenvectors.column(k).iter().copied().collect();
    let mut sv = vec![0.0; n];
    op.apply(&v, &mut sv);
    let residual = sv
        .iter()
        .zip(&v)
        .map(|(a, b)| (a - gap * b).powi(2))
        .sum::<f64>()
        .sqrt();
    (gap, v, residual)
}

/// Lanczos with full reorthogonalization and explicit restarts from the
/// current Ritz vector.
fn lanczos_gap(op: &Symmetrized, tol: f64) -> Result<(f64, Vec<f64>, usize, f64)> {
    let n = op.diag.len();
    let krylov = (n - 1).min(150).min((40_000_000 / n).max(20));
    let floor = 100.0 * f64::EPSILON * op.norm_bound;
    let mut rng = ChaCha8Rng::seed_from_u64(0x05ee_d6a9);
    let mut start: Vec<f64> = (0..n).map(|_| rng.random::<f64>() - 0.5).collect();
    op.deflate(&mut start);
    normalize(&mut start);
    let mut total = 0;
    let mut best = (f64::INFINITY, start.clone(), f64::INFINITY);
    let mut w = vec![0.0; n];
    for _restart in 0..MAX_RESTARTS {
        let mut basis: Vec<Vec<f64>> = vec![start.clone()];
        let mut alphas: Vec<f64> = Vec::new();
        let mut betas: Vec<f64> = Vec::new();
        let mut ritz = None;
        for k in 0..krylov {
            op.apply(&basis[k], &mut w);
            total += 1;
            let alpha = dot(&basis[k], &w);
            axpy(-alpha, &basis[k], &mut w);
            if k > 0 {
                axpy(-betas[k - 1], &basis[k - 1], &mut w);
            }
            for _ in 0..2 {
                op.deflate(&mut w);
                for b in &basis {
                    let c = dot(b, &w);
                    axpy(-c, b, &mut w);
                }
            }
            alphas.push(alpha);
            let beta = dot(&w, &w).sqrt();
            let last = k + 1 == krylov || beta <= floor;
            if last || (k + 1) % 5 == 0 {
                let (theta, s) = smallest_ritz(&alphas, &betas);
                let res = beta * s[k].abs();
                ritz = Some((theta, s, res));
                if res <= (tol * theta.abs()).max(floor) || last {
                    break;
                }
            }
            betas.push(beta);
            basis.push(w.iter().map(|v| v / beta).collect());
        }
        let (theta, s, res) = ritz.expect("at least one Ritz evaluation");
        let mut y = vec![0.0; n];
        for (coef, b) in s.iter().zip(&basis) {
            axpy(*coef, b, &mut y);
        }
        op.deflate(&mut y);
        normalize(&mut y);
        if res < best.2 {
            best = (theta, y.clone(), res);
        }
        if res <= (tol * theta.abs()).max(floor) {
            return Ok((theta, y, total, res));
        }
        start = y;
    }
    Err(Error::Convergence {
        iterations: total,
        residual: best.2,
    })
}

fn smallest_ritz(alphas: &[f64], betas: &[f64]) -> (f64, Vec<f64>) {
    let k = alphas.len();
    let mut t = DMatrix::<f64>::zeros(k, k);
    for i in 0..k {
        t[(i, i)] = alphas[i];
        if i + 1 < k {
            t[(i, i + 1)] = betas[i];
            t[(i + 1, i)] = betas[i];
        }
    }
    let eig = SymmetricEigen::new(t);
    let (idx, &theta) = eig
        .eigenvalues
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty tridiagonal");
    (theta, eig.eigenvectors.column(idx).iter().copied().collect())
}
