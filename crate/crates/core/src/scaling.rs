//! Gap and log-Sobolev tables over `(L, N)` grids and log-log slope fits.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::measure::canonical_measure;
use crate::rate::RateFunction;
use crate::sector::enumerate_sector;
use crate::spectral::gap::DEFAULT_GAP_TOL;
use crate::spectral::{assemble_generator, lsi_constant, spectral_gap, LsiOptions};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CellValue {
    #[serde(rename = "L")]
    pub l: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub value: f64,
}

fn grid(ls: &[usize], ns: &[usize]) -> Vec<(usize, usize)> {
    let mut cells: Vec<(usize, usize)> = ls.iter().flat_map(|&l| ns.iter().map(move |&n| (l, n))).collect();
    cells.sort_unstable();
    cells.dedup();
    cells
}

/// Spectral gap of every segment sector `(L, N)`, sorted by `(L, N)`.
pub fn gap_table(rate: &RateFunction, ls: &[usize], ns: &[usize]) -> Result<Vec<CellValue>> {
    grid(ls, ns)
        .into_par_iter()
        .map(|(l, n)| {
            let sector = enumerate_sector(&Lattice::segment(l)?, n)?;
            let measure = canonical_measure(&sector, rate)?;
            let gen = assemble_generator(&sector, rate)?;
            Ok(CellValue {
                l,
                n,
                value: spectral_gap(&gen, &measure, DEFAULT_GAP_TOL)?.gap,
            })
        })
        .collect()
}

/// Log-Sobolev estimates of every segment sector `(L, N)`.
pub fn lsi_table(rate: &RateFunction, ls: &[usize], ns: &[usize], opts: &LsiOptions) -> Result<Vec<CellValue>> {
    grid(ls, ns)
        .into_par_iter()
        .map(|(l, n)| {
            let sector = enumerate_sector(&Lattice::segment(l)?, n)?;
            let measure = canonical_measure(&sector, rate)?;
            let gen = assemble_generator(&sector, rate)?;
            Ok(CellValue {
                l,
                n,
                value: lsi_constant(&gen, &measure, opts)?.estimate,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SlopeFit {
    pub slope: f64,
    pub intercept: f64,
    /// Standard error of the slope; zero for an exact fit.
    pub stderr: f64,
    pub points: usize,
}

/// Least squares of `log y` against `log x`. Needs three distinct `x`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<SlopeFit> {
    if xs.len() != ys.len() {
        return Err(Error::Shape {
            expected: xs.len(),
            actual: ys.len(),
        });
    }
    let mut distinct: Vec<f64> = xs.to_vec();
    distinct.sort_by(f64::total_cmp);
    distinct.dedup();
    if distinct.len() < 3 {
        return Err(Error::Domain(format!(
            "a slope fit needs at least 3 distinct sizes, got {}",
            distinct.len()
        )));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0) || !v.is_finite()) {
        return Err(Error::Domain("log-log fit needs positive finite data".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|x| x.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|y| y.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = lx.iter().zip(&ly).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
    let stderr = if lx.len() > 2 { (rss / (n - 2.0) / sxx).sqrt() } else { 0.0 };
    Ok(SlopeFit {
        slope,
        intercept,
        stderr,
        points: lx.len(),
    })
}

/// `max / min` of positive values; infinite if any is not positive.
pub fn band_factor(values: &[f64]) -> f64 {
    let max = values.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
    if min > 0.0 && max.is_finite() {
        max / min
    } else {
        f64::INFINITY
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingRow {
    pub quantity: String,
    /// `"pooled"` or the particle number of the series.
    pub series: String,
    pub slope: f64,
    pub stderr: f64,
    pub points: usize,
}

/// Slopes of `value` against `L` per particle number and pooled over all
/// cells. Series with fewer than three sizes are skipped.
pub fn scaling_rows(quantity: &str, cells: &[CellValue]) -> Result<Vec<ScalingRow>> {
    let mut ns: Vec<usize> = cells.iter().map(|c| c.n).collect();
    ns.sort_unstable();
    ns.dedup();
    let mut rows = Vec::new();
    let fit = |cs: Vec<&CellValue>| {
        let xs: Vec<f64> = cs.iter().map(|c| c.l as f64).collect();
        let ys: Vec<f64> = cs.iter().map(|c| c.value).collect();
        loglog_slope(&xs, &ys)
    };
    for n in ns {
        if let Ok(f) = fit(cells.iter().filter(|c| c.n == n).collect()) {
            rows.push(ScalingRow {
                quantity: quantity.to_string(),
                series: n.to_string(),
                slope: f.slope,
                stderr: f.stderr,
                points: f.points,
            });
        }
    }
    let pooled = fit(cells.iter().collect())?;
    rows.push(ScalingRow {
        quantity: quantity.to_string(),
        series: "pooled".into(),
        slope: pooled.slope,
        stderr: pooled.stderr,
        points: pooled.points,
    });
    Ok(rows)
}

pub fn write_scaling_csv<W: Write>(rows: &[ScalingRow], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["quantity", "series", "slope", "stderr", "points"])?;
    for r in rows {
        w.write_record([
            r.quantity.clone(),
            r.series.clone(),
            format!("{:.6}", r.slope),
            format!("{:.6}", r.stderr),
            r.points.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rate::RateFamily;

    #[test]
    fn slope_of_power_laws() {
        let xs = [2.0, 3.0, 5.0, 8.0];
        let ys: Vec<f64> = xs.iter().map(|x: &f64| 3.0 * x.powf(2.0)).collect();
        let f = loglog_slope(&xs, &ys).unwrap();
        assert!((f.slope - 2.0).abs() < 1e-12 && f.stderr < 1e-10);
        assert_eq!(loglog_slope(&xs, &[4.0; 4]).unwrap().slope, 0.0);
        assert!(loglog_slope(&[2.0, 2.0, 3.0], &[1.0, 1.0, 1.0]).is_err());
    }

    #[test]
    fn linear_gap_slope_is_diffusive() {
        let rate = RateFamily::Linear(1.0).table();
        let ls: Vec<usize> = (2..=8).collect();
        let cells = gap_table(&rate, &ls, &[3]).unwrap();
        let inv: Vec<f64> = cells.iter().map(|c| 1.0 / c.value).collect();
        let xs: Vec<f64> = cells.iter().map(|c| c.l as f64).collect();
        let f = loglog_slope(&xs, &inv).unwrap();
        assert!((1.8..=2.2).contains(&f.slope), "{f:?}");
        let rows = scaling_rows("gap", &cells).unwrap();
        assert_eq!(rows.last().unwrap().series, "pooled");
        assert_eq!(band_factor(&[1.0, 2.0, 0.5]), 4.0);
    }
}
