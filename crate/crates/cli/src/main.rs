//! `zrlab`: batch experiments over (rate, L, N) grids with reproducible
//! CSV/JSON reports.

mod config;
mod experiments;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use clap::{Args, Parser, Subcommand};

use config::{parse_list, ConfigFile, Experiment, ExperimentConfig};
use output::{write_atomic, Report};

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(zrlab::Error),
    Io(std::io::Error),
}

impl From<zrlab::Error> for CliError {
    fn from(e: zrlab::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

impl From<csv::Error> for CliError {
    fn from(e: csv::Error) -> Self {
        CliError::Core(e.into())
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(m) => write!(f, "usage error: {m}"),
            CliError::Core(e) => write!(f, "{e}"),
            CliError::Io(e) => write!(f, "i/o error: {e}"),
        }
    }
}

impl CliError {
    /// 2 for bad input, 3 for resource caps, 1 otherwise.
    fn exit_code(&self) -> u8 {
        use zrlab::Error as E;
        match self {
            CliError::Usage(_) => 2,
            CliError::Core(E::Domain(_) | E::Parse { .. } | E::EmptyInput(_) | E::InvalidRate { .. } | E::Shape { .. }) => 2,
            CliError::Core(
                E::SectorTooLarge { .. } | E::TooLarge { .. } | E::ExtendTable(_) | E::ExtendCut(_) | E::InsufficientTabulation { .. },
            ) => 3,
            _ => 1,
        }
    }
}

#[derive(Parser)]
#[command(name = "zrlab", version, about = "Numerical laboratory for the zero-range process")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Canonical measures, partition functions and detailed balance.
    Measures(Common),
    /// Spectral gaps per (L, N), with a scaling fit when L has 3+ values.
    Gap(Common),
    /// Log-Sobolev estimates per (L, N, seed).
    Lsi(Common),
    /// Two-block decomposition identities and diagnostics.
    Decomposition(Common),
    /// Ensemble comparison, local limit errors and inequality suites.
    Ensembles(Common),
    /// Kinetic Monte Carlo relaxation and empirical-law checks.
    Simulate(Common),
    /// Every experiment on one grid: 7 report files plus the manifest.
    VerifyAll(Common),
    /// Scaling fits from gap.csv and lsi.csv in the output directory.
    Report(ReportArgs),
}

#[derive(Args, Default)]
struct Common {
    /// Flat TOML or JSON config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Rate family: linear:<lambda>, constant:<c> or staircase:<step>.
    #[arg(long)]
    rate: Option<String>,
    /// Rate table with one `n c(n)` pair per line, instead of a family.
    #[arg(long)]
    rate_file: Option<PathBuf>,
    /// Lattice lengths, e.g. `2,3,4` or `2-8`.
    #[arg(long = "L", value_name = "LIST")]
    l: Option<String>,
    /// Particle numbers, e.g. `1-12`.
    #[arg(long = "N", value_name = "LIST")]
    n: Option<String>,
    /// Seeds, e.g. `0` or `0-3`.
    #[arg(long = "seed", value_name = "LIST")]
    seed: Option<String>,
    /// Tolerance for identity residuals.
    #[arg(long)]
    tol: Option<f64>,
    /// Output directory (created if missing).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; results do not depend on this.
    #[arg(long)]
    threads: Option<usize>,
}

#[derive(Args)]
struct ReportArgs {
    /// Directory holding gap.csv and/or lsi.csv; scaling.csv goes there too.
    #[arg(long, default_value = "zrlab-out")]
    out: PathBuf,
}

impl Common {
    fn flags(&self) -> Result<ConfigFile, CliError> {
        let list = |s: &Option<String>, what: &str| -> Result<Option<Vec<u64>>, CliError> {
            s.as_deref()
                .map(|s| parse_list(s).map_err(|e| CliError::Usage(format!("--{what}: {e}"))))
                .transpose()
        };
        let sizes = |v: Option<Vec<u64>>| v.map(|v| v.into_iter().map(|x| x as usize).collect());
        Ok(ConfigFile {
            experiment: None,
            rate: self.rate.clone(),
            rate_file: self.rate_file.clone(),
            l: sizes(list(&self.l, "L")?),
            n: sizes(list(&self.n, "N")?),
            seeds: list(&self.seed, "seed")?,
            tol: self.tol,
            out: self.out.clone(),
            threads: self.threads,
        })
    }
}

fn run(experiment: Experiment, common: &Common) -> Result<Report, CliError> {
    let file = match &common.config {
        Some(p) => ConfigFile::load(p)?,
        None => ConfigFile::default(),
    };
    let cfg = ExperimentConfig::resolve(experiment, file, common.flags()?)?;
    if let Some(t) = cfg.threads {
        // only fails if a pool already exists, which cannot happen here
        let _ = rayon::ThreadPoolBuilder::new().num_threads(t).build_global();
    }
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs()).unwrap_or(0);
    let clock = Instant::now();
    let ctx = experiments::Ctx::new(cfg)?;
    let report = experiments::run(&ctx)?;
    output::write_report(&ctx.cfg, &report, started, clock.elapsed().as_secs_f64())?;
    Ok(report)
}

fn report_only(args: &ReportArgs) -> Result<Report, CliError> {
    use zrlab::scaling::{scaling_rows, CellValue};
    let mut rows = Vec::new();
    let mut found = false;
    for (file, column, quantity, invert) in [
        ("gap.csv", "gap", "inverse_gap", true),
        ("lsi.csv", "lsi_estimate", "lsi_estimate", false),
    ] {
        let path = args.out.join(file);
        if !path.is_file() {
            continue;
        }
        found = true;
        let mut rdr = csv::Reader::from_path(&path)?;
        let headers = rdr.headers()?.clone();
        let col = |name: &str| {
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| CliError::Usage(format!("{}: missing column {name}", path.display())))
        };
        let (il, i_n, iv) = (col("L")?, col("N")?, col(column)?);
        let mut cells: Vec<CellValue> = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let parse = |i: usize| rec[i].parse::<f64>().ok();
            let (Some(l), Some(n), Some(v)) = (parse(il), parse(i_n), parse(iv)) else {
                continue;
            };
            let value = if invert { 1.0 / v } else { v };
            // several seeds per cell: keep the largest
            match cells.iter_mut().find(|c| c.l == l as usize && c.n == n as usize) {
                Some(c) => c.value = c.value.max(value),
                None => cells.push(CellValue {
                    l: l as usize,
                    n: n as usize,
                    value,
                }),
            }
        }
        let mut ls: Vec<usize> = cells.iter().map(|c| c.l).collect();
        ls.sort_unstable();
        ls.dedup();
        if ls.len() < 3 {
            return Err(CliError::Usage(format!(
                "{file}: insufficient data, {} distinct L values (need 3)",
                ls.len()
            )));
        }
        rows.extend(scaling_rows(quantity, &cells)?);
    }
    if !found {
        return Err(CliError::Usage(format!("no gap.csv or lsi.csv in {}", args.out.display())));
    }
    let mut report = Report::default();
    experiments::push_scaling_summary(&rows, &mut report);
    let mut summary = String::new();
    for r in &rows {
        summary.push_str(&format!(
            "{:<14} {:<8} slope {:>8.4} +/- {:.4} ({} points)\n",
            r.quantity, r.series, r.slope, r.stderr, r.points
        ));
    }
    write_atomic(&args.out, "scaling.csv", &experiments::scaling_body(&rows)?)?;
    write_atomic(&args.out, "summary.txt", summary.as_bytes())?;
    Ok(report)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Measures(c) => run(Experiment::Measures, c),
        Command::Gap(c) => run(Experiment::Gap, c),
        Command::Lsi(c) => run(Experiment::Lsi, c),
        Command::Decomposition(c) => run(Experiment::Decomposition, c),
        Command::Ensembles(c) => run(Experiment::Ensembles, c),
        Command::Simulate(c) => run(Experiment::Simulate, c),
        Command::VerifyAll(c) => run(Experiment::VerifyAll, c),
        Command::Report(a) => report_only(a),
    };
    match result {
        Ok(report) => {
            for line in &report.summary {
                println!("{line}");
            }
            if report.violations.is_empty() {
                ExitCode::SUCCESS
            } else {
                eprintln!("{} violation(s):", report.violations.len());
                for v in &report.violations {
                    eprintln!("{}", serde_json::to_string(v).expect("violation serializes"));
                }
                ExitCode::from(1)
            }
        }
        Err(e) => {
            eprintln!("zrlab: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
