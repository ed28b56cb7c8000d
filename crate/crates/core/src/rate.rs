//! Jump-rate functions `c(n)` with certified growth constants.
//!
//! Rates are always stored as tables `c(0), ..., c(n_max)`. The built-in
//! families generate tables of any length, so a table that turns out to be
//! too short can be regenerated with [`RateFunction::extended`].

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default table length used when a family is tabulated without an explicit
/// `n_max`.
pub const DEFAULT_TABLE_LEN: usize = 2048;

/// A parametric family of rate functions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum RateFamily {
    /// `c(n) = lambda * n`, independent random walkers.
    Linear(f64),
    /// `c(n) = value * 1(n > 0)`.
    Constant(f64),
    /// `c(n) = step * ceil(n / step)`, e.g. `(0, 2, 2, 4, 4, ...)` for step 2.
    Staircase(u32),
}

impl RateFamily {
    pub fn rate(&self, n: usize) -> f64 {
        if n == 0 {
            return 0.0;
        }
        match *self {
            RateFamily::Linear(lambda) => lambda * n as f64,
            RateFamily::Constant(value) => value,
            RateFamily::Staircase(step) => {
                let step = step as usize;
                (step * n.div_ceil(step)) as f64
            }
        }
    }

    pub fn tabulate(&self, n_max: usize) -> Result<RateFunction> {
        let values: Vec<f64> = (0..=n_max).map(|n| self.rate(n)).collect();
        let mut rate = validate_rate_function(&values)?;
        rate.family = Some(*self);
        rate.label = self.to_string();
        Ok(rate)
    }

    /// Tabulates with [`DEFAULT_TABLE_LEN`] entries.
    pub fn table(&self) -> RateFunction {
        self.tabulate(DEFAULT_TABLE_LEN)
            .expect("built-in families produce valid tables")
    }
}

impl fmt::Display for RateFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RateFamily::Linear(l) => write!(f, "linear:{l}"),
            RateFamily::Constant(c) => write!(f, "constant:{c}"),
            RateFamily::Staircase(s) => write!(f, "staircase:{s}"),
        }
    }
}

impl FromStr for RateFamily {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, param) = match s.split_once(':') {
            Some((n, p)) => (n.trim(), Some(p.trim())),
            None => (s.trim(), None),
        };
        let bad = |m: &str| Error::Parse {
            line: 0,
            message: format!("rate family `{s}`: {m}"),
        };
        let real = |p: Option<&str>| -> Result<f64> {
            match p {
                None => Ok(1.0),
                Some(p) => p.parse::<f64>().map_err(|e| bad(&e.to_string())),
            }
        };
        let family = match name {
            "linear" => RateFamily::Linear(real(param)?),
            "constant" => RateFamily::Constant(real(param)?),
            "staircase" => {
                let step = match param {
                    None => 2,
                    Some(p) => p.parse::<u32>().map_err(|e| bad(&e.to_string()))?,
                };
                if step == 0 {
                    return Err(bad("step must be positive"));
                }
                RateFamily::Staircase(step)
            }
            _ => return Err(bad("unknown family (linear, constant, staircase)")),
        };
        match family {
            RateFamily::Linear(v) | RateFamily::Constant(v) if !(v > 0.0 && v.is_finite()) => {
                Err(bad("parameter must be positive"))
            }
            f => Ok(f),
        }
    }
}

/// A tabulated rate function together with its certified constants.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RateFunction {
    pub values: Vec<f64>,
    /// `sup_k |c(k+1) - c(k)|` over the table.
    pub lipschitz_a1: f64,
    /// Largest `a2` with `c(k) - c(j) >= a2` whenever `k >= j + k0`.
    pub monotone_a2: Option<f64>,
    pub monotone_k0: Option<usize>,
    /// Smallest `A0` with `k / A0 <= c(k) <= A0 k` on the table.
    pub envelope_a0: f64,
    /// `log c(n)!`, with `log c(0)! = 0`.
    pub log_factorials: Vec<f64>,
    pub family: Option<RateFamily>,
    pub label: String,
}

/// Validates a rate table and computes its tight constants.
pub fn validate_rate_function(values: &[f64]) -> Result<RateFunction> {
    if values.is_empty() {
        return Err(Error::EmptyInput("rate table"));
    }
    if values[0] != 0.0 {
        return Err(Error::InvalidRate {
            index: 0,
            value: values[0],
        });
    }
    for (index, &value) in values.iter().enumerate().skip(1) {
        if !(value > 0.0 && value.is_finite()) {
            return Err(Error::InvalidRate { index, value });
        }
    }
    let n_max = values.len() - 1;

    let lipschitz_a1 = values
        .windows(2)
        .map(|w| (w[1] - w[0]).abs())
        .fold(0.0, f64::max);

    let (monotone_k0, monotone_a2) = match monotone_constants(values) {
        Some((k0, a2)) => (Some(k0), Some(a2)),
        None => (None, None),
    };

    let envelope_a0 = (1..=n_max)
        .map(|k| {
            let (c, k) = (values[k], k as f64);
            (c / k).max(k / c)
        })
        .fold(1.0, f64::max);

    let mut log_factorials = Vec::with_capacity(values.len());
    let mut acc = 0.0;
    log_factorials.push(0.0);
    for &c in &values[1..] {
        acc += c.ln();
        log_factorials.push(acc);
    }

    Ok(RateFunction {
        values: values.to_vec(),
        lipschitz_a1,
        monotone_a2,
        monotone_k0,
        envelope_a0,
        log_factorials,
        family: None,
        label: "table".to_string(),
    })
}

/// Scans `k0 = 1, ..., max(1, n_max / 2)` and returns the first `k0` for
/// which Condition (M) holds on the table, with the largest admissible `a2`.
fn monotone_constants(values: &[f64]) -> Option<(usize, f64)> {
    let n_max = values.len() - 1;
    if n_max == 0 {
        return None;
    }
    // suffix_min[k] = min_{i >= k} c(i)
    let mut suffix_min = values.to_vec();
    for k in (0..n_max).rev() {
        suffix_min[k] = suffix_min[k].min(suffix_min[k + 1]);
    }
    let scale = values.iter().fold(0.0f64, |a, &b| a.max(b.abs())).max(1.0);
    for k0 in 1..=(n_max / 2).max(1) {
        let a2 = (0..=n_max - k0)
            .map(|j| suffix_min[j + k0] - values[j])
            .fold(f64::INFINITY, f64::min);
        if a2 > 1e-12 * scale {
            return Some((k0, a2));
        }
    }
    None
}

impl RateFunction {
    pub fn n_max(&self) -> usize {
        self.values.len() - 1
    }

    #[inline]
    pub fn rate(&self, n: usize) -> f64 {
        self.values[n]
    }

    #[inline]
    pub fn log_factorial(&self, n: usize) -> f64 {
        self.log_factorials[n]
    }

    /// `h(n) = (n + 1) / c(n + 1)`.
    #[inline]
    pub fn h(&self, n: usize) -> f64 {
        (n + 1) as f64 / self.values[n + 1]
    }

    pub fn satisfies_monotonicity(&self) -> bool {
        self.monotone_a2.is_some()
    }

    /// Errors unless the table covers `c(0), ..., c(n)`.
    pub fn ensure_tabulated(&self, n: usize) -> Result<()> {
        if n > self.n_max() {
            Err(Error::InsufficientTabulation {
                tabulated: self.n_max(),
                needed: n,
            })
        } else {
            Ok(())
        }
    }

    /// Real-argument extension by linear interpolation between integers.
    pub fn interpolate(&self, r: f64) -> Result<f64> {
        if !(r >= 0.0) {
            return Err(Error::Domain(format!("c(r) needs r >= 0, got {r}")));
        }
        let lo = r.floor() as usize;
        if lo >= self.n_max() {
            if lo == self.n_max() && r == lo as f64 {
                return Ok(self.values[lo]);
            }
            return Err(Error::InsufficientTabulation {
                tabulated: self.n_max(),
                needed: lo + 1,
            });
        }
        let t = r - lo as f64;
        Ok((1.0 - t) * self.values[lo] + t * self.values[lo + 1])
    }

    /// Same family with a longer table. Tables read from files cannot grow.
    pub fn extended(&self, n_max: usize) -> Result<RateFunction> {
        if n_max <= self.n_max() {
            return Ok(self.clone());
        }
        match self.family {
            Some(family) => family.tabulate(n_max),
            None => Err(Error::ExtendTable(format!(
                "table `{}` has n_max = {}, {} needed",
                self.label,
                self.n_max(),
                n_max
            ))),
        }
    }

    /// Parses a rate file: one `n value` pair per line, `#` starts a comment.
    /// Indices must run consecutively from 0.
    pub fn parse_table(text: &str) -> Result<RateFunction> {
        let mut values = Vec::new();
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                line: i + 1,
                message,
            };
            let mut parts = line.split_whitespace();
            let (Some(n), Some(v), None) = (parts.next(), parts.next(), parts.next()) else {
                return Err(parse_err(format!("expected `n value`, got `{line}`")));
            };
            let n: usize = n.parse().map_err(|e| parse_err(format!("index: {e}")))?;
            let v: f64 = v.parse().map_err(|e| parse_err(format!("value: {e}")))?;
            if n != values.len() {
                return Err(parse_err(format!(
                    "expected index {}, found {n}",
                    values.len()
                )));
            }
            values.push(v);
        }
        validate_rate_function(&values)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<RateFunction> {
        let text = std::fs::read_to_string(path.as_ref())?;
        let mut rate = Self::parse_table(&text)?;
        rate.label = format!("file:{}", path.as_ref().display());
        Ok(rate)
    }

    pub fn to_table_string(&self) -> String {
        let mut out = format!("# rate {}\n", self.label);
        for (n, v) in self.values.iter().enumerate() {
            out.push_str(&format!("{n} {v}\n"));
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_constants() {
        let r = RateFamily::Linear(1.0).tabulate(10).unwrap();
        assert_eq!(r.lipschitz_a1, 1.0);
        assert_eq!(r.monotone_a2, Some(1.0));
        assert_eq!(r.monotone_k0, Some(1));
        assert_eq!(r.envelope_a0, 1.0);
    }

    #[test]
    fn constant_fails_monotonicity() {
        let r = RateFamily::Constant(1.0).tabulate(10).unwrap();
        assert_eq!(r.lipschitz_a1, 1.0);
        assert!(r.monotone_a2.is_none());
        assert!(r.monotone_k0.is_none());
    }

    #[test]
    fn staircase_constants_match_exhaustive_scan() {
        let values = [0.0, 2.0, 2.0, 4.0, 4.0, 6.0, 6.0, 8.0, 8.0, 10.0, 10.0];
        let r = validate_rate_function(&values).unwrap();
        assert_eq!(r.lipschitz_a1, 2.0);
        assert_eq!(r.monotone_k0, Some(2));
        assert_eq!(r.monotone_a2, Some(2.0));
        assert_eq!(r.envelope_a0, 2.0);
        // brute force over all pairs with k >= j + 2
        let mut min = f64::INFINITY;
        for j in 0..=10 {
            for k in (j + 2)..=10 {
                min = min.min(values[k] - values[j]);
            }
        }
        assert_eq!(min, 2.0);
        let fam = RateFamily::Staircase(2).tabulate(10).unwrap();
        assert_eq!(fam.values, values.to_vec());
    }

    #[test]
    fn rejects_bad_tables() {
        assert!(matches!(
            validate_rate_function(&[]),
            Err(Error::EmptyInput(_))
        ));
        assert!(matches!(
            validate_rate_function(&[0.0, 1.0, 0.0]),
            Err(Error::InvalidRate { index: 2, .. })
        ));
        assert!(matches!(
            validate_rate_function(&[1.0, 1.0]),
            Err(Error::InvalidRate { index: 0, .. })
        ));
    }

    #[test]
    fn log_factorials_recompute() {
        let r = RateFamily::Staircase(3).tabulate(40).unwrap();
        for n in 0..=40 {
            let direct: f64 = (1..=n).map(|k| r.rate(k).ln()).sum();
            assert!((direct - r.log_factorial(n)).abs() < 1e-12 * (1.0 + direct.abs()));
        }
    }

    #[test]
    fn interpolation() {
        let r = RateFamily::Staircase(2).tabulate(6).unwrap();
        assert_eq!(r.interpolate(2.5).unwrap(), 3.0);
        assert_eq!(r.interpolate(6.0).unwrap(), 6.0);
        assert!(r.interpolate(6.5).is_err());
        assert!(r.interpolate(-1.0).is_err());
    }

    #[test]
    fn table_file_round_trip() {
        let r = RateFamily::Staircase(2).tabulate(8).unwrap();
        let parsed = RateFunction::parse_table(&r.to_table_string()).unwrap();
        assert_eq!(parsed.values, r.values);
        let err = RateFunction::parse_table("0 0\n2 1\n").unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }));
    }

    #[test]
    fn family_parsing() {
        assert_eq!("linear:2".parse::<RateFamily>().unwrap(), RateFamily::Linear(2.0));
        assert_eq!("staircase".parse::<RateFamily>().unwrap(), RateFamily::Staircase(2));
        assert!("bogus".parse::<RateFamily>().is_err());
        assert!("linear:-1".parse::<RateFamily>().is_err());
    }
}
