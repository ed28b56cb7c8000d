//! Dirichlet forms, variances and entropies of functions on a finite space.

use crate::error::{Error, Result};
use crate::measure::DiscreteMeasure;
use crate::spectral::generator::SparseGenerator;

/// `r log r - r + 1 >= 0`, accurate near `r = 1`.
pub fn entropy_excess(r: f64) -> f64 {
    if r == 0.0 {
        return 1.0;
    }
    let d = r - 1.0;
    if d.abs() < 1e-2 {
        // sum_{k>=2} (-1)^k d^k / (k (k-1))
        let mut term = d * d;
        let mut acc = 0.0;
        for k in 2..12 {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            acc += sign * term / (k * (k - 1)) as f64;
            term *= d;
        }
        return acc;
    }
    r * r.ln() - d
}

/// `v e^v - (e^v - 1) >= 0`, the excess above at `r = e^v`.
pub fn entropy_excess_log(v: f64) -> f64 {
    if v.abs() < 0.1 {
        // sum_{k>=2} v^k (k - 1) / k!
        let mut term = v * v / 2.0;
        let mut acc = 0.0;
        for k in 2..16 {
            acc += term * (k - 1) as f64;
            term *= v / (k + 1) as f64;
        }
        return acc;
    }
    v * v.exp() - v.exp_m1()
}

fn check(measure: &DiscreteMeasure, len: usize) -> Result<()> {
    if measure.space_size() != len {
        return Err(Error::Shape {
            expected: measure.space_size(),
            actual: len,
        });
    }
    Ok(())
}

/// `1/2 sum_x sum_{y~x} nu[c(eta_x) d_xy f d_xy g]`, one term per stored transition.
pub fn dirichlet_form(
    gen: &SparseGenerator,
    measure: &DiscreteMeasure,
    f: &[f64],
    g: &[f64],
) -> Result<f64> {
    check(measure, gen.n_states())?;
    check(measure, f.len())?;
    check(measure, g.len())?;
    let total: f64 = gen
        .triplets()
        .map(|(i, j, r)| measure.prob(i) * r * (f[j] - f[i]) * (g[j] - g[i]))
        .sum();
    Ok(0.5 * total)
}

pub fn variance(measure: &DiscreteMeasure, f: &[f64]) -> Result<f64> {
    check(measure, f.len())?;
    Ok(measure.mean_and_variance(f).1)
}

/// `Ent(f) = nu[f log f] - nu[f] log nu[f]` with `0 log 0 = 0`, evaluated as
/// `nu[f] * sum_i nu_i excess(f_i / nu[f])` so it is non-negative by construction.
pub fn entropy(measure: &DiscreteMeasure, f: &[f64]) -> Result<f64> {
    check(measure, f.len())?;
    if let Some(v) = f.iter().find(|v| !(**v >= 0.0) || !v.is_finite()) {
        return Err(Error::Domain(format!("entropy needs f >= 0, found {v}")));
    }
    let mean = measure.expectation(f);
    if mean == 0.0 {
        return Ok(0.0);
    }
    Ok(mean
        * measure
            .probs()
            .iter()
            .zip(f)
            .map(|(p, v)| p * entropy_excess(v / mean))
            .sum::<f64>())
}

/// Entropy of `f >= 0` under the probability vector `weights / sum(weights)`.
pub fn entropy_weighted(weights: &[f64], f: &[f64]) -> f64 {
    let total: f64 = weights.iter().sum();
    if total == 0.0 {
        return 0.0;
    }
    let mean = weights.iter().zip(f).map(|(w, v)| w * v).sum::<f64>() / total;
    if mean == 0.0 {
        return 0.0;
    }
    mean * weights
        .iter()
        .zip(f)
        .map(|(w, v)| w * entropy_excess(v / mean))
        .sum::<f64>()
        / total
}

/// Slack of `Ent(f) <= Ent((sqrt f - nu[sqrt f])^2) + 2 nu[sqrt f, sqrt f]`.
pub fn rothaus_slack(measure: &DiscreteMeasure, f: &[f64]) -> Result<f64> {
    let root: Vec<f64> = f.iter().map(|v| v.max(0.0).sqrt()).collect();
    let (m, var) = measure.mean_and_variance(&root);
    let centred: Vec<f64> = root.iter().map(|r| (r - m).powi(2)).collect();
    Ok(entropy(measure, &centred)? + 2.0 * var - entropy(measure, f)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn uniform(n: usize) -> DiscreteMeasure {
        DiscreteMeasure::from_weights(&vec![1.0; n]).unwrap()
    }

    #[test]
    fn entropy_examples() {
        let m = uniform(2);
        assert_eq!(entropy(&m, &[3.0, 3.0]).unwrap(), 0.0);
        assert!((entropy(&m, &[2.0, 0.0]).unwrap() - 2f64.ln()).abs() < 1e-15);
        assert!(entropy(&uniform(3), &[0.0, 1.0, 5.0]).unwrap().is_finite());
        assert!(matches!(entropy(&m, &[-1.0, 1.0]), Err(Error::Domain(_))));
    }

    #[test]
    fn excess_series_matches_closed_form() {
        for r in [0.5, 0.98, 0.995, 1.0, 1.004, 1.5, 7.0] {
            let closed = r * f64::ln(r) - r + 1.0;
            assert!((entropy_excess(r) - closed).abs() < 1e-15, "{r}");
        }
        for v in [-2.0, -0.09, -1e-5, 0.0, 3e-3, 0.07, 1.2] {
            let closed = entropy_excess(f64::exp(v));
            assert!((entropy_excess_log(v) - closed).abs() <= 1e-9 * closed.max(1e-300), "{v}");
        }
    }

    #[test]
    fn rothaus_on_small_space() {
        let m = DiscreteMeasure::from_weights(&[1.0, 2.0, 3.0]).unwrap();
        for f in [[0.0, 1.0, 4.0], [1.0, 1.0, 1.0], [9.0, 0.1, 0.0]] {
            assert!(rothaus_slack(&m, &f).unwrap() >= -1e-12);
        }
    }
}
