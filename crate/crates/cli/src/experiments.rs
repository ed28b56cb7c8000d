//! One function per experiment. Each returns the report bodies in memory;
//! nothing touches the output directory until the run is complete.

use std::collections::BTreeMap;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use zrlab::decomposition::birth_death::DEFAULT_HARDY_FACTOR;
use zrlab::decomposition::diagnostics::{gamma_ratio_profile, random_positive_functions};
use zrlab::decomposition::{
    birth_death_generator, conditional_dirichlet, diagnostics_scan, entropy_decomposition, gradient_table,
    hardy_lsi_bound, tensor_property, DiagnosticOptions, SplitSector,
};
use zrlab::ensembles::{
    entropy_inequality_suite, equivalence_gap, identity_suite, llt_errors, mgf_suite, regime_table, rothaus_suite,
    total_count_law, InequalityCheck, MgfOptions, RegimeOptions,
};
use zrlab::scaling::{scaling_rows, write_scaling_csv, CellValue, ScalingRow};
use zrlab::simulate::{empirical_law_check, kmc_run, relaxation_estimate, single_particle_gap, write_trajectory_csv};
use zrlab::simulate::RelaxationOptions;
use zrlab::site_law::site_law_at_density;
use zrlab::spectral::gap::DEFAULT_GAP_TOL;
use zrlab::spectral::{assemble_generator, chain_lsi_constant, lsi_constant, spectral_gap, LsiOptions};
use zrlab::{canonical_measure, invert_fugacity, Lattice, RateFunction, Sector};

use crate::config::{Experiment, ExperimentConfig};
use crate::output::{Report, Violation, SCHEMA_VERSION};
use crate::CliError;

/// Largest sector enumerated by the exact experiments.
pub const SECTOR_CAP: usize = 200_000;
/// Sectors up to this size also get an empirical-law check in `simulate`.
pub const EMPIRICAL_CAP: usize = 5_000;
/// Random test functions per decomposition cell.
pub const DECOMPOSITION_FUNCTIONS: usize = 20;
const IDENTITY_ALPHAS: [f64; 8] = [0.05, 0.1, 0.3, 1.0, 2.0, 5.0, 10.0, 30.0];
const DENSITIES: [f64; 7] = [0.1, 0.25, 0.5, 1.0, 2.0, 4.0, 8.0];

pub struct Ctx {
    pub cfg: ExperimentConfig,
    pub rate: RateFunction,
    pub label: String,
}

impl Ctx {
    pub fn new(cfg: ExperimentConfig) -> Result<Self, CliError> {
        let rate = cfg.rate_function()?;
        let label = cfg.rate_label();
        Ok(Ctx { cfg, rate, label })
    }

    fn cells(&self, min_l: usize, min_n: usize) -> Vec<(usize, usize)> {
        let mut out = Vec::new();
        for &l in &self.cfg.sorted_l() {
            for &n in &self.cfg.sorted_n() {
                if l >= min_l && n >= min_n {
                    out.push((l, n));
                }
            }
        }
        out
    }

    fn seeded_cells(&self, min_l: usize, min_n: usize) -> Vec<(usize, usize, u64)> {
        let mut seeds = self.cfg.seeds.clone();
        seeds.sort_unstable();
        seeds.dedup();
        let mut out = Vec::new();
        for (l, n) in self.cells(min_l, min_n) {
            out.extend(seeds.iter().map(|&s| (l, n, s)));
        }
        out
    }

    /// Exact computations ignore the seed; their rows carry the first one.
    fn seed0(&self) -> u64 {
        self.cfg.seeds[0]
    }

    fn violation(&self, check: &str, at: Option<(usize, usize, u64)>, value: f64, limit: f64) -> Violation {
        Violation {
            check: check.to_string(),
            rate: self.label.clone(),
            l: at.map(|a| a.0),
            n: at.map(|a| a.1),
            seed: at.map(|a| a.2),
            value,
            limit,
            witness: serde_json::Value::Null,
        }
    }
}

pub fn run(ctx: &Ctx) -> Result<Report, CliError> {
    match ctx.cfg.experiment {
        Experiment::Measures => measures(ctx),
        Experiment::Gap => gap(ctx),
        Experiment::Lsi => lsi(ctx),
        Experiment::Decomposition => decomposition(ctx, true),
        Experiment::Ensembles => ensembles(ctx, true),
        Experiment::Simulate => simulate(ctx, true),
        Experiment::VerifyAll => verify_all(ctx),
    }
}

fn fmt(v: f64) -> String {
    if v.is_finite() {
        format!("{v:e}")
    } else {
        String::new()
    }
}

fn csv_body(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>, CliError> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header)?;
    for r in rows {
        w.write_record(r)?;
    }
    w.into_inner().map_err(|e| CliError::Io(e.into_error()))
}

fn open_sector(l: usize, n: usize) -> zrlab::Result<Sector> {
    Sector::with_cap(&Lattice::segment(l)?, n, SECTOR_CAP)
}

pub const MEASURES_HEADER: [&str; 9] = [
    "rate",
    "L",
    "N",
    "seed",
    "states",
    "log_partition",
    "reversibility_residual",
    "alpha",
    "canonical_mean_rate",
];

fn measures(ctx: &Ctx) -> Result<Report, CliError> {
    let cells = ctx.cells(1, 0);
    let rows = cells
        .par_iter()
        .map(|&(l, n)| -> zrlab::Result<(Vec<String>, f64)> {
            let sector = open_sector(l, n)?;
            let nu = canonical_measure(&sector, &ctx.rate)?;
            let gen = assemble_generator(&sector, &ctx.rate)?;
            let residual = gen.reversibility_residual(&nu)?;
            let mean_rate: f64 = sector
                .configs()
                .zip(nu.probs())
                .map(|(c, p)| p * ctx.rate.rate(c[0] as usize))
                .sum();
            let alpha = if n == 0 {
                0.0
            } else {
                invert_fugacity(&ctx.rate, n as f64 / l as f64, 1e-12)?
            };
            let row = vec![
                ctx.label.clone(),
                l.to_string(),
                n.to_string(),
                ctx.seed0().to_string(),
                sector.size().to_string(),
                fmt(nu.log_normalizer()),
                fmt(residual),
                fmt(alpha),
                fmt(mean_rate),
            ];
            Ok((row, residual))
        })
        .collect::<zrlab::Result<Vec<_>>>()?;
    let mut report = Report::default();
    let mut worst: f64 = 0.0;
    for (&(l, n), (_, residual)) in cells.iter().zip(&rows) {
        worst = worst.max(*residual);
        if *residual > ctx.cfg.tol {
            report.violations.push(ctx.violation("detailed_balance", Some((l, n, ctx.seed0())), *residual, ctx.cfg.tol));
        }
    }
    let rows: Vec<Vec<String>> = rows.into_iter().map(|r| r.0).collect();
    report.add_file("measures.csv", csv_body(&MEASURES_HEADER, &rows)?);
    report
        .summary
        .push(format!("measures: {} cells, max detailed-balance residual {worst:.2e}", rows.len()));
    Ok(report)
}

pub const GAP_HEADER: [&str; 10] = [
    "rate",
    "L",
    "N",
    "seed",
    "states",
    "gap",
    "gap_L2",
    "inverse_gap",
    "method",
    "residual",
];

fn gap_cells(ctx: &Ctx) -> Result<Vec<(usize, usize, usize, Option<zrlab::spectral::GapResult>)>, CliError> {
    let cells = ctx.cells(1, 0);
    Ok(cells
        .par_iter()
        .map(|&(l, n)| {
            let sector = open_sector(l, n)?;
            if sector.size() < 2 {
                return Ok((l, n, sector.size(), None));
            }
            let nu = canonical_measure(&sector, &ctx.rate)?;
            let gen = assemble_generator(&sector, &ctx.rate)?;
            let g = spectral_gap(&gen, &nu, DEFAULT_GAP_TOL)?;
            Ok((l, n, sector.size(), Some(g)))
        })
        .collect::<zrlab::Result<Vec<_>>>()?)
}

fn gap(ctx: &Ctx) -> Result<Report, CliError> {
    let (mut report, values) = gap_report(ctx)?;
    if let Some(scaling) = try_scaling("inverse_gap", &values, &mut report)? {
        report.add_file("scaling.csv", scaling);
    }
    Ok(report)
}

/// `gap.csv` plus the `1/gap` cells for the scaling fit.
fn gap_report(ctx: &Ctx) -> Result<(Report, Vec<CellValue>), CliError> {
    let results = gap_cells(ctx)?;
    let mut rows = Vec::new();
    let mut values = Vec::new();
    for (l, n, states, g) in &results {
        let (gap, method, residual) = match g {
            Some(g) => (g.gap, format!("{:?}", g.method).to_lowercase(), g.residual),
            None => (f64::NAN, "single_state".to_string(), f64::NAN),
        };
        if gap.is_finite() {
            values.push(CellValue {
                l: *l,
                n: *n,
                value: 1.0 / gap,
            });
        }
        rows.push(vec![
            ctx.label.clone(),
            l.to_string(),
            n.to_string(),
            ctx.seed0().to_string(),
            states.to_string(),
            fmt(gap),
            fmt(gap * (*l * *l) as f64),
            fmt(1.0 / gap),
            method,
            fmt(residual),
        ]);
    }
    let mut report = Report::default();
    report.add_file("gap.csv", csv_body(&GAP_HEADER, &rows)?);
    report.summary.push(format!("gap: {} cells", rows.len()));
    Ok((report, values))
}

pub const LSI_HEADER: [&str; 10] = [
    "rate",
    "L",
    "N",
    "seed",
    "states",
    "lsi_estimate",
    "certified_lower",
    "gap",
    "lsi_over_L2",
    "lsi_gap_over_2",
];

fn lsi_results(ctx: &Ctx) -> Result<Vec<(usize, usize, u64, usize, Option<zrlab::spectral::LsiResult>)>, CliError> {
    let cells = ctx.seeded_cells(1, 0);
    Ok(cells
        .par_iter()
        .map(|&(l, n, seed)| {
            let sector = open_sector(l, n)?;
            if sector.size() < 2 {
                return Ok((l, n, seed, sector.size(), None));
            }
            let nu = canonical_measure(&sector, &ctx.rate)?;
            let gen = assemble_generator(&sector, &ctx.rate)?;
            let opts = LsiOptions {
                seed,
                ..LsiOptions::default()
            };
            Ok((l, n, seed, sector.size(), Some(lsi_constant(&gen, &nu, &opts)?)))
        })
        .collect::<zrlab::Result<Vec<_>>>()?)
}

fn lsi(ctx: &Ctx) -> Result<Report, CliError> {
    let (mut report, values) = lsi_report(ctx)?;
    if let Some(scaling) = try_scaling("lsi_estimate", &values, &mut report)? {
        report.add_file("scaling.csv", scaling);
    }
    Ok(report)
}

/// `lsi.csv` plus the best estimate over seeds per cell.
fn lsi_report(ctx: &Ctx) -> Result<(Report, Vec<CellValue>), CliError> {
    let results = lsi_results(ctx)?;
    let mut rows = Vec::new();
    // best estimate over seeds per cell
    let mut best: BTreeMap<(usize, usize), f64> = BTreeMap::new();
    let mut report = Report::default();
    for (l, n, seed, states, r) in &results {
        let (est, lower, gap) = match r {
            Some(r) => (r.estimate, r.certified_lower, r.gap),
            None => (f64::NAN, f64::NAN, f64::NAN),
        };
        if est.is_finite() {
            let e = best.entry((*l, *n)).or_insert(0.0);
            *e = e.max(est);
            if est + ctx.cfg.tol < lower {
                report.violations.push(ctx.violation("lsi_estimate_below_certified", Some((*l, *n, *seed)), est, lower));
            }
        }
        rows.push(vec![
            ctx.label.clone(),
            l.to_string(),
            n.to_string(),
            seed.to_string(),
            states.to_string(),
            fmt(est),
            fmt(lower),
            fmt(gap),
            fmt(est / (*l * *l) as f64),
            fmt(est * gap / 2.0),
        ]);
    }
    report.add_file("lsi.csv", csv_body(&LSI_HEADER, &rows)?);
    report.summary.push(format!("lsi: {} cells", rows.len()));
    let values: Vec<CellValue> = best.into_iter().map(|((l, n), value)| CellValue { l, n, value }).collect();
    Ok((report, values))
}

fn distinct_l(values: &[CellValue]) -> usize {
    let mut ls: Vec<usize> = values.iter().map(|c| c.l).collect();
    ls.sort_unstable();
    ls.dedup();
    ls.len()
}

/// Scaling rows for one quantity, or `None` with a note when the grid has
/// fewer than three lengths.
fn try_scaling(
    quantity: &str,
    values: &[CellValue],
    report: &mut Report,
) -> Result<Option<Vec<u8>>, CliError> {
    if distinct_l(values) < 3 {
        report.summary.push(format!("{quantity}: fewer than 3 L values, no scaling fit"));
        return Ok(None);
    }
    let rows = scaling_rows(quantity, values)?;
    push_scaling_summary(&rows, report);
    Ok(Some(scaling_body(&rows)?))
}

pub fn scaling_body(rows: &[ScalingRow]) -> Result<Vec<u8>, CliError> {
    let mut body = Vec::new();
    write_scaling_csv(rows, &mut body)?;
    Ok(body)
}

pub fn push_scaling_summary(rows: &[ScalingRow], report: &mut Report) {
    for r in rows.iter().filter(|r| r.series == "pooled") {
        report.summary.push(format!(
            "{}: pooled log-log slope {:.3} +/- {:.3} over {} points",
            r.quantity, r.slope, r.stderr, r.points
        ));
    }
}

pub const DECOMPOSITION_HEADER: [&str; 15] = [
    "rate",
    "L",
    "N",
    "seed",
    "states",
    "factorization_residual",
    "entropy_residual",
    "tensor_slack_min",
    "dirichlet_residual",
    "gradient_residual",
    "ab_residual",
    "gamma_ratio_max",
    "hardy_lower",
    "gamma_lsi",
    "hardy_upper",
];

#[derive(Default)]
struct DecompositionCell {
    row: Vec<String>,
    // (check, value) pairs compared against the tolerance
    residuals: Vec<(&'static str, f64)>,
}

fn rel(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / b.abs().max(floor)
}

fn decomposition_cell(ctx: &Ctx, l: usize, n: usize, seed: u64) -> zrlab::Result<DecompositionCell> {
    let sector = open_sector(l, n)?;
    let states = sector.size();
    let split = SplitSector::equal_halves(sector, ctx.rate.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((l as u64) << 32) | n as u64);
    let fs = random_positive_functions(states, DECOMPOSITION_FUNCTIONS, &mut rng);
    let factorization = split.factorization_residual()?;
    let (mut ent, mut slack, mut dir, mut grad, mut ab_res) = (0.0f64, f64::INFINITY, 0.0f64, 0.0f64, 0.0f64);
    for f in &fs {
        let scale = f.iter().cloned().fold(0.0, f64::max);
        ent = ent.max(entropy_decomposition(&split, f)?.residual);
        let t = tensor_property(&split, f)?;
        slack = slack.min(t.slack / t.conditional.max(1e-300));
        let g: Vec<f64> = f.iter().map(|v| v.sqrt()).collect();
        dir = dir.max(conditional_dirichlet(&split, &g)?.residual);
        for term in gradient_table(&split, f)? {
            let floor = 1e-12 * scale;
            let ab = term.ab(n);
            grad = grad
                .max(rel(term.inflow, term.direct, floor))
                .max(rel(term.outflow, term.direct, floor));
            ab_res = ab_res.max(rel(ab.a + ab.b, term.direct, floor));
        }
    }
    let ratio_max = gamma_ratio_profile(&split).into_iter().fold(0.0, f64::max);
    let bd = birth_death_generator(split.gamma())?;
    let (lo, hi) = bd.support();
    let (hardy, gamma_lsi) = if hi > lo {
        let chain = bd.to_reversible_chain()?;
        let opts = LsiOptions {
            seed,
            ..LsiOptions::default()
        };
        (Some(hardy_lsi_bound(&bd, DEFAULT_HARDY_FACTOR)), chain_lsi_constant(&chain, &opts)?.estimate)
    } else {
        (None, 0.0)
    };
    let row = vec![
        ctx.label.clone(),
        l.to_string(),
        n.to_string(),
        seed.to_string(),
        states.to_string(),
        fmt(factorization),
        fmt(ent),
        fmt(slack),
        fmt(dir),
        fmt(grad),
        fmt(ab_res),
        fmt(ratio_max),
        hardy.map(|h| fmt(h.lower)).unwrap_or_default(),
        fmt(gamma_lsi),
        hardy.map(|h| fmt(h.upper)).unwrap_or_default(),
    ];
    Ok(DecompositionCell {
        row,
        residuals: vec![
            ("factorization", factorization),
            ("entropy_decomposition", ent),
            ("tensor_property", (-slack).max(0.0)),
            ("conditional_dirichlet", dir),
            ("gradient_representation", grad),
            ("ab_reconstruction", ab_res),
        ],
    })
}

fn decomposition(ctx: &Ctx, standalone: bool) -> Result<Report, CliError> {
    let cells = ctx.seeded_cells(2, 1);
    let results = cells
        .par_iter()
        .map(|&(l, n, s)| decomposition_cell(ctx, l, n, s))
        .collect::<zrlab::Result<Vec<_>>>()?;
    let mut report = Report::default();
    let mut worst: f64 = 0.0;
    for (&at, cell) in cells.iter().zip(&results) {
        for &(check, v) in &cell.residuals {
            worst = worst.max(v);
            if !(v <= ctx.cfg.tol) {
                report.violations.push(ctx.violation(check, Some(at), v, ctx.cfg.tol));
            }
        }
    }
    let rows: Vec<Vec<String>> = results.into_iter().map(|c| c.row).collect();
    report.add_file("decomposition.csv", csv_body(&DECOMPOSITION_HEADER, &rows)?);
    report
        .summary
        .push(format!("decomposition: {} cells, max identity residual {worst:.2e}", rows.len()));
    if standalone {
        let mut diag = Vec::new();
        for &seed in &ctx.cfg.seeds {
            let opts = DiagnosticOptions {
                seed,
                ..DiagnosticOptions::default()
            };
            let grid = ctx.cells(2, 1);
            for r in diagnostics_scan(&grid, &ctx.rate, &opts)? {
                diag.push(vec![
                    r.quantity,
                    ctx.label.clone(),
                    r.l.to_string(),
                    r.big_n.to_string(),
                    seed.to_string(),
                    r.n.map(|n| n.to_string()).unwrap_or_default(),
                    fmt(r.value),
                ]);
            }
        }
        report.add_file(
            "diagnostics.csv",
            csv_body(&["quantity", "rate", "L", "N", "seed", "n", "value"], &diag)?,
        );
    }
    Ok(report)
}

#[derive(Serialize)]
struct LltRow {
    rate: String,
    #[serde(rename = "L")]
    l: usize,
    #[serde(rename = "N")]
    n: usize,
    seed: u64,
    rho: f64,
    poisson_err: f64,
    gaussian_err: f64,
    sigma2: f64,
    equivalence_gap: f64,
}

#[derive(Serialize)]
struct SuiteRun {
    seed: u64,
    checks: Vec<InequalityCheck>,
    exponential_moment_c_max: f64,
}

fn ensembles(ctx: &Ctx, standalone: bool) -> Result<Report, CliError> {
    let mut report = Report::default();
    let rate = &ctx.rate;
    let tol = ctx.cfg.tol;

    let identities = identity_suite(rate, &IDENTITY_ALPHAS)?;
    for (check, v) in [
        ("shift_identity", identities.max_shift_residual),
        ("inverse_rate_identity", identities.max_inverse_rate_residual),
    ] {
        if !(v <= tol) {
            report.violations.push(ctx.violation(check, None, v, tol));
        }
    }
    let density = zrlab::ensembles::density_scan(rate, &DENSITIES)?;

    let mut volumes: Vec<usize> = ctx.cfg.sorted_l().into_iter().filter(|&v| v >= 2).collect();
    volumes.dedup();
    let regimes = regime_table(rate, &volumes, &RegimeOptions::default())?;
    for r in &regimes {
        if !r.max_ratio.is_finite() {
            let mut v = ctx.violation("ensemble_ratio_finite", Some((r.volume, r.at_n, ctx.seed0())), r.max_ratio, f64::MAX);
            v.witness = json!({ "regime": r.regime.to_string() });
            report.violations.push(v);
        }
    }

    let llt = ctx
        .cells(1, 1)
        .par_iter()
        .map(|&(l, n)| -> zrlab::Result<LltRow> {
            let rho = n as f64 / l as f64;
            let law = total_count_law(&site_law_at_density(rate, rho)?, l)?;
            let e = llt_errors(&law, n)?;
            Ok(LltRow {
                rate: ctx.label.clone(),
                l,
                n,
                seed: ctx.seed0(),
                rho,
                poisson_err: e.poisson_err,
                gaussian_err: e.gaussian_err,
                sigma2: e.sigma2,
                equivalence_gap: equivalence_gap(rate, l, n, 0)?,
            })
        })
        .collect::<zrlab::Result<Vec<_>>>()?;

    let mut seeds = ctx.cfg.seeds.clone();
    seeds.sort_unstable();
    seeds.dedup();
    let mut runs = Vec::new();
    for &seed in &seeds {
        let mgf = mgf_suite(
            rate,
            &MgfOptions {
                seed,
                ..MgfOptions::default()
            },
        )?;
        let (one, sym) = entropy_inequality_suite(1000, &[0.1, 1.0, 10.0], seed)?;
        let rothaus = rothaus_suite(1000, seed)?;
        let mut checks = mgf.checks.clone();
        checks.extend([one, sym, rothaus]);
        for c in &checks {
            if !c.passed() {
                let mut v = ctx.violation(&c.name, None, -c.min_slack, c.tolerance);
                v.seed = Some(seed);
                v.witness = serde_json::to_value(&c.witness).unwrap_or_default();
                report.violations.push(v);
            }
        }
        runs.push((
            SuiteRun {
                seed,
                checks,
                exponential_moment_c_max: mgf.exponential_moment_c_max,
            },
            mgf,
        ));
    }

    let points: usize = runs.iter().flat_map(|r| r.0.checks.iter()).map(|c| c.points).sum();
    report.summary.push(format!(
        "ensembles: identity residuals {:.2e} / {:.2e}, {} inequality points, {} regime rows",
        identities.max_shift_residual,
        identities.max_inverse_rate_residual,
        points,
        regimes.len()
    ));

    let body = json!({
        "schema_version": SCHEMA_VERSION,
        "rate": ctx.label,
        "seeds": seeds,
        "tol": tol,
        "identities": identities,
        "density": density,
        "regimes": regimes,
        "llt": llt,
        "suites": runs.iter().map(|r| &r.0).collect::<Vec<_>>(),
        "mgf": runs.iter().map(|r| &r.1).collect::<Vec<_>>(),
    });
    let mut bytes = serde_json::to_vec_pretty(&body).expect("report serializes");
    bytes.push(b'\n');
    report.add_file("ensembles.json", bytes);

    if standalone {
        let mut buf = Vec::new();
        zrlab::ensembles::comparison::write_regime_csv(&regimes, &mut buf)?;
        report.add_file("regimes.csv", buf);
        let rows: Vec<Vec<String>> = llt
            .iter()
            .map(|r| {
                vec![
                    r.rate.clone(),
                    r.l.to_string(),
                    r.n.to_string(),
                    r.seed.to_string(),
                    fmt(r.rho),
                    fmt(r.poisson_err),
                    fmt(r.gaussian_err),
                    fmt(r.sigma2),
                    fmt(r.equivalence_gap),
                ]
            })
            .collect();
        report.add_file(
            "llt.csv",
            csv_body(
                &["rate", "L", "N", "seed", "rho", "poisson_err", "gaussian_err", "sigma2", "equivalence_gap"],
                &rows,
            )?,
        );
    }
    Ok(report)
}

pub const SIMULATE_HEADER: [&str; 16] = [
    "rate",
    "L",
    "N",
    "seed",
    "tau",
    "tau_ci_low",
    "tau_ci_high",
    "tau_integrated",
    "tau_single_particle",
    "tau_gap",
    "converged",
    "tv",
    "tv_tolerance",
    "tv_limit",
    "under_sampled",
    "events",
];

/// Relaxation-time horizon for the empirical-law check, in units of `1/gap`.
const EMPIRICAL_RELAXATIONS: f64 = 2000.0;

struct SimCell {
    row: Vec<String>,
    tv: Option<(f64, f64)>,
    trajectory: Option<Vec<u8>>,
}

fn simulate_cell(ctx: &Ctx, l: usize, n: usize, seed: u64, trajectory: bool) -> zrlab::Result<SimCell> {
    let lattice = Lattice::segment(l)?;
    let est = relaxation_estimate(
        &lattice,
        &ctx.rate,
        n,
        &RelaxationOptions {
            seed,
            ..RelaxationOptions::default()
        },
    )?;
    let sp_gap = single_particle_gap(&lattice);
    let enumerable = zrlab::sector::composition_count(l, n).is_some_and(|c| c <= EMPIRICAL_CAP as u128);
    let (mut tv, mut tv_tol, mut tv_limit, mut under, mut events, mut tau_gap) =
        (f64::NAN, f64::NAN, f64::NAN, String::new(), String::new(), f64::NAN);
    let mut checked = None;
    if enumerable {
        let sector = open_sector(l, n)?;
        let nu = canonical_measure(&sector, &ctx.rate)?;
        let g = spectral_gap(&assemble_generator(&sector, &ctx.rate)?, &nu, DEFAULT_GAP_TOL)?.gap;
        tau_gap = 1.0 / g;
        let c = empirical_law_check(&lattice, &ctx.rate, n, EMPIRICAL_RELAXATIONS / g, seed)?;
        tv = c.tv;
        tv_tol = c.tolerance;
        tv_limit = tv_limit_for(c.tolerance);
        under = c.under_sampled.to_string();
        events = c.events.to_string();
        if !c.under_sampled {
            checked = Some((tv, tv_limit));
        }
    }
    let traj = if trajectory {
        // particles dealt round-robin, observed for 20 single-particle times
        let mut initial = vec![0u32; l];
        for k in 0..n {
            initial[k % l] += 1;
        }
        let t = kmc_run(&lattice, &ctx.rate, initial, 20.0 / sp_gap, seed, 0.1 / sp_gap)?;
        let mut buf = Vec::new();
        write_trajectory_csv(&t, &mut buf)?;
        Some(buf)
    } else {
        None
    };
    Ok(SimCell {
        row: vec![
            ctx.label.clone(),
            l.to_string(),
            n.to_string(),
            seed.to_string(),
            fmt(est.tau),
            fmt(est.ci.0),
            fmt(est.ci.1),
            fmt(est.tau_integrated),
            fmt(1.0 / sp_gap),
            fmt(tau_gap),
            est.converged.to_string(),
            fmt(tv),
            fmt(tv_tol),
            fmt(tv_limit),
            under,
            events,
        ],
        tv: checked,
        trajectory: traj,
    })
}

/// Five CLT standard errors, never below the acceptance level of 0.02.
pub fn tv_limit_for(tolerance: f64) -> f64 {
    (5.0 * tolerance).max(0.02)
}

fn simulate(ctx: &Ctx, standalone: bool) -> Result<Report, CliError> {
    let cells = ctx.seeded_cells(2, 1);
    let results = cells
        .par_iter()
        .map(|&(l, n, s)| simulate_cell(ctx, l, n, s, standalone))
        .collect::<zrlab::Result<Vec<_>>>()?;
    let mut report = Report::default();
    let mut rows = Vec::new();
    for (&(l, n, s), cell) in cells.iter().zip(results) {
        if let Some((tv, limit)) = cell.tv {
            if tv > limit {
                report.violations.push(ctx.violation("empirical_law", Some((l, n, s)), tv, limit));
            }
        }
        if let Some(t) = cell.trajectory {
            report.add_file(&format!("trajectory_L{l}_N{n}_seed{s}.csv"), t);
        }
        rows.push(cell.row);
    }
    report.add_file("simulate.csv", csv_body(&SIMULATE_HEADER, &rows)?);
    report.summary.push(format!("simulate: {} cells", rows.len()));
    Ok(report)
}

fn verify_all(ctx: &Ctx) -> Result<Report, CliError> {
    let mut report = Report::default();
    report.merge(measures(ctx)?);

    // gap and lsi share one scaling file
    let (g, gaps) = gap_report(ctx)?;
    let (l, lsis) = lsi_report(ctx)?;
    report.merge(g);
    report.merge(l);
    let mut rows = Vec::new();
    for (quantity, values) in [("inverse_gap", &gaps), ("lsi_estimate", &lsis)] {
        if distinct_l(values) >= 3 {
            rows.extend(scaling_rows(quantity, values)?);
        } else {
            report.summary.push(format!("{quantity}: fewer than 3 L values, no scaling fit"));
        }
    }
    push_scaling_summary(&rows, &mut report);
    report.add_file("scaling.csv", scaling_body(&rows)?);

    report.merge(decomposition(ctx, false)?);
    report.merge(ensembles(ctx, false)?);
    report.merge(simulate(ctx, false)?);
    Ok(report)
}
