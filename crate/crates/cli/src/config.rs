//! Experiment configuration: flat TOML or JSON, overridden by flags.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use zrlab::{RateFamily, RateFunction};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Measures,
    Gap,
    Lsi,
    Decomposition,
    Ensembles,
    Simulate,
    VerifyAll,
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Experiment::Measures => "measures",
            Experiment::Gap => "gap",
            Experiment::Lsi => "lsi",
            Experiment::Decomposition => "decomposition",
            Experiment::Ensembles => "ensembles",
            Experiment::Simulate => "simulate",
            Experiment::VerifyAll => "verify-all",
        })
    }
}

/// Keys as they appear in a config file. Every key is optional so that
/// flags can fill the gaps; unknown keys are rejected.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    pub experiment: Option<Experiment>,
    pub rate: Option<String>,
    pub rate_file: Option<PathBuf>,
    #[serde(rename = "L")]
    pub l: Option<Vec<usize>>,
    #[serde(rename = "N")]
    pub n: Option<Vec<usize>>,
    pub seeds: Option<Vec<u64>>,
    pub tol: Option<f64>,
    pub out: Option<PathBuf>,
    pub threads: Option<usize>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let is_json = path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{');
        if is_json {
            serde_json::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
        } else {
            toml::from_str(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub rate: String,
    pub rate_file: Option<PathBuf>,
    #[serde(rename = "L")]
    pub l: Vec<usize>,
    #[serde(rename = "N")]
    pub n: Vec<usize>,
    pub seeds: Vec<u64>,
    pub tol: f64,
    pub out: PathBuf,
    pub threads: Option<usize>,
}

pub const DEFAULT_RATE: &str = "staircase:2";
pub const DEFAULT_TOL: f64 = 1e-9;

impl ExperimentConfig {
    /// File values first, flags on top, defaults for whatever is left.
    pub fn resolve(experiment: Experiment, file: ConfigFile, flags: ConfigFile) -> Result<Self, CliError> {
        if let Some(e) = file.experiment {
            if e != experiment {
                return Err(CliError::Usage(format!(
                    "config is for `{e}` but the `{experiment}` subcommand was used"
                )));
            }
        }
        let pick = |a: Option<Vec<usize>>, b: Option<Vec<usize>>, d: &[usize]| b.or(a).unwrap_or_else(|| d.to_vec());
        let cfg = ExperimentConfig {
            experiment,
            rate: flags.rate.or(file.rate).unwrap_or_else(|| DEFAULT_RATE.into()),
            rate_file: flags.rate_file.or(file.rate_file),
            l: pick(file.l, flags.l, &[2, 3, 4]),
            n: pick(file.n, flags.n, &[1, 2, 3, 4]),
            seeds: flags.seeds.or(file.seeds).unwrap_or_else(|| vec![0]),
            tol: flags.tol.or(file.tol).unwrap_or(DEFAULT_TOL),
            out: flags.out.or(file.out).unwrap_or_else(|| PathBuf::from("zrlab-out")),
            threads: flags.threads.or(file.threads),
        };
        cfg.validate()?;
        Ok(cfg)
    }

    fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Usage(m));
        if self.l.is_empty() {
            return bad("the L list is empty".into());
        }
        if self.n.is_empty() {
            return bad("the N list is empty".into());
        }
        if self.seeds.is_empty() {
            return bad("the seed list is empty".into());
        }
        if self.l.contains(&0) {
            return bad("L values must be positive".into());
        }
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return bad(format!("tolerance must be positive, got {}", self.tol));
        }
        if self.threads == Some(0) {
            return bad("threads must be positive".into());
        }
        if let Some(path) = &self.rate_file {
            if !path.is_file() {
                return bad(format!("rate file {} does not exist", path.display()));
            }
        }
        self.rate_function()?;
        Ok(())
    }

    pub fn rate_function(&self) -> Result<RateFunction, CliError> {
        match &self.rate_file {
            Some(path) => RateFunction::from_file(path).map_err(|e| CliError::Usage(e.to_string())),
            None => self
                .rate
                .parse::<RateFamily>()
                .map(|f| f.table())
                .map_err(|e| CliError::Usage(e.to_string())),
        }
    }

    /// Label written into every report row.
    pub fn rate_label(&self) -> String {
        match &self.rate_file {
            Some(p) => format!("file:{}", p.display()),
            None => self.rate.clone(),
        }
    }

    pub fn sorted_l(&self) -> Vec<usize> {
        sorted(&self.l)
    }

    pub fn sorted_n(&self) -> Vec<usize> {
        sorted(&self.n)
    }
}

fn sorted(v: &[usize]) -> Vec<usize> {
    let mut v = v.to_vec();
    v.sort_unstable();
    v.dedup();
    v
}

/// `2,3,5-8` style lists.
pub fn parse_list(s: &str) -> Result<Vec<u64>, String> {
    let mut out = Vec::new();
    for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
        let num = |t: &str| t.trim().parse::<u64>().map_err(|e| format!("`{t}`: {e}"));
        match part.split_once('-') {
            Some((a, b)) => {
                let (a, b) = (num(a)?, num(b)?);
                if a > b {
                    return Err(format!("empty range `{part}`"));
                }
                out.extend(a..=b);
            }
            None => out.push(num(part)?),
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn lists_and_ranges() {
        assert_eq!(parse_list("2,3,5-7").unwrap(), vec![2, 3, 5, 6, 7]);
        assert_eq!(parse_list("").unwrap(), Vec::<u64>::new());
        assert!(parse_list("4-2").is_err());
        assert!(parse_list("x").is_err());
    }

    #[test]
    fn flags_override_file() {
        let file: ConfigFile = toml::from_str("rate = \"linear:1\"\nL = [2, 3]\ntol = 1e-6").unwrap();
        let flags = ConfigFile {
            l: Some(vec![4]),
            ..Default::default()
        };
        let c = ExperimentConfig::resolve(Experiment::Gap, file, flags).unwrap();
        assert_eq!((c.rate.as_str(), c.l.as_slice(), c.tol), ("linear:1", &[4][..], 1e-6));
    }

    #[test]
    fn unknown_keys_and_empty_grids_are_rejected() {
        assert!(toml::from_str::<ConfigFile>("colour = 3").is_err());
        let file: ConfigFile = toml::from_str("L = []").unwrap();
        let err = ExperimentConfig::resolve(Experiment::Gap, file, ConfigFile::default()).unwrap_err();
        assert!(matches!(err, CliError::Usage(_)));
    }
}
