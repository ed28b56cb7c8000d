//! Acceptance run: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use zrlab::decomposition::diagnostics::random_positive_functions;
use zrlab::decomposition::{
    birth_death_generator, conditional_dirichlet, entropy_decomposition, gamma_distribution, gradient_table,
    hardy_lsi_bound, tensor_property, SplitSector,
};
use zrlab::ensembles::{
    entropy_inequality_suite, equivalence_gap, identity_suite, llt_errors, mgf_suite, regime_table,
    rothaus_suite, total_count_law, MgfOptions, Regime, RegimeOptions,
};
use zrlab::scaling::{band_factor, gap_table, loglog_slope, lsi_table};
use zrlab::simulate::{empirical_law_check, relaxation_estimate, single_particle_gap, RelaxationOptions};
use zrlab::site_law::{grand_canonical_site_law, site_law_at_density};
use zrlab::spectral::{assemble_generator, chain_lsi_constant, LsiOptions};
use zrlab::{canonical_measure, enumerate_sector, Lattice, RateFamily, RateFunction};

type Outcome = Result<String, String>;

fn families() -> [(RateFamily, RateFunction); 2] {
    [
        (RateFamily::Linear(1.0), RateFamily::Linear(1.0).table()),
        (RateFamily::Staircase(2), RateFamily::Staircase(2).table()),
    ]
}

fn rel(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / b.abs().max(floor)
}

fn log_factorial(n: usize) -> f64 {
    (1..=n).map(|k| (k as f64).ln()).sum()
}

fn exact_identities() -> Outcome {
    let mut cells = Vec::new();
    for (fam, rate) in families() {
        for l in 2..=6 {
            for n in 1..=10 {
                cells.push((fam, rate.clone(), l, n));
            }
        }
    }
    let worst = cells
        .par_iter()
        .map(|(fam, rate, l, n)| -> zrlab::Result<(f64, String)> {
            let sector = enumerate_sector(&Lattice::segment(*l)?, *n)?;
            let split = SplitSector::equal_halves(sector.clone(), rate.clone())?;
            let gen = assemble_generator(&sector, rate)?;
            let mut worst = gen.reversibility_residual(split.measure())?;
            let mut rng = ChaCha8Rng::seed_from_u64((*l as u64) << 32 | *n as u64);
            for f in random_positive_functions(sector.size(), 100, &mut rng) {
                let scale = f.iter().cloned().fold(0.0, f64::max);
                worst = worst.max(entropy_decomposition(&split, &f)?.residual);
                let t = tensor_property(&split, &f)?;
                worst = worst.max((-t.slack / t.conditional.max(1e-300)).max(0.0));
                let g: Vec<f64> = f.iter().map(|v| v.sqrt()).collect();
                worst = worst.max(conditional_dirichlet(&split, &g)?.residual);
                for term in gradient_table(&split, &f)? {
                    let floor = 1e-12 * scale;
                    let ab = term.ab(*n);
                    worst = worst
                        .max(rel(term.inflow, term.direct, floor))
                        .max(rel(term.outflow, term.direct, floor))
                        .max(rel(ab.a + ab.b, term.direct, floor));
                }
            }
            Ok((worst, format!("{fam} L={l} N={n}")))
        })
        .collect::<zrlab::Result<Vec<_>>>()
        .map_err(|e| e.to_string())?;
    let (mut max, mut at) = worst.iter().cloned().fold((0.0, String::new()), |a, b| if b.0 > a.0 { b } else { a });
    let alphas = [0.05, 0.3, 1.0, 2.0, 5.0, 10.0, 30.0];
    for (fam, rate) in families() {
        let rep = identity_suite(&rate, &alphas).map_err(|e| e.to_string())?;
        for (v, what) in [(rep.max_shift_residual, "shift"), (rep.max_inverse_rate_residual, "inverse rate")] {
            if v > max {
                max = v;
                at = format!("{fam} {what} identity");
            }
        }
    }
    let msg = format!("max relative residual {max:.2e} (worst: {at})");
    if max <= 1e-9 { Ok(msg) } else { Err(msg) }
}

fn independent_particles() -> Outcome {
    let rate = RateFamily::Linear(1.0).table();
    let mut worst_multi: f64 = 0.0;
    let mut worst_gamma: f64 = 0.0;
    let mut worst_b: f64 = 0.0;
    for (l, n) in [(3, 4), (4, 6), (5, 7), (6, 5)] {
        let sector = enumerate_sector(&Lattice::segment(l).unwrap(), n).unwrap();
        let m = canonical_measure(&sector, &rate).unwrap();
        for (i, c) in sector.configs().enumerate() {
            let lw = log_factorial(n) - c.iter().map(|&k| log_factorial(k as usize)).sum::<f64>()
                - n as f64 * (l as f64).ln();
            worst_multi = worst_multi.max((m.prob(i) - lw.exp()).abs());
        }
        let split = SplitSector::equal_halves(sector.clone(), rate.clone()).unwrap();
        let q = (l / 2) as f64 / l as f64;
        for k in 0..=n {
            let lb = log_factorial(n) - log_factorial(k) - log_factorial(n - k)
                + k as f64 * q.ln()
                + (n - k) as f64 * (1.0 - q).ln();
            worst_gamma = worst_gamma
                .max((split.gamma().prob(k) - lb.exp()).abs())
                .max((split.fiber_mass(k) - lb.exp()).abs());
        }
        let mut rng = ChaCha8Rng::seed_from_u64(l as u64);
        for f in random_positive_functions(sector.size(), 20, &mut rng) {
            for t in gradient_table(&split, &f).unwrap() {
                let ab = t.ab(n);
                worst_b = worst_b.max(ab.b.abs() / ab.a.abs().max(1e-300));
            }
        }
    }
    let mut spread: f64 = 0.0;
    for l in [3, 4, 5] {
        let gaps: Vec<f64> = gap_table(&rate, &[l], &(1..=20).collect::<Vec<_>>())
            .unwrap()
            .iter()
            .map(|c| c.value)
            .collect();
        let hi = gaps.iter().cloned().fold(f64::MIN, f64::max);
        let lo = gaps.iter().cloned().fold(f64::MAX, f64::min);
        spread = spread.max(hi - lo);
    }
    let mut worst_poisson: f64 = 0.0;
    for (alpha, v) in [(0.5, 4), (1.0, 8), (2.0, 16)] {
        let site = grand_canonical_site_law(&rate, alpha, 1e-15).unwrap();
        let law = total_count_law(&site, v).unwrap();
        let mean = alpha * v as f64;
        for (k, p) in law.pmf.iter().enumerate() {
            let lp = k as f64 * mean.ln() - mean - log_factorial(k);
            worst_poisson = worst_poisson.max((p - lp.exp()).abs());
        }
    }
    let msg = format!(
        "multinomial {worst_multi:.1e}, binomial gamma {worst_gamma:.1e}, |B|/|A| {worst_b:.1e}, gap spread {spread:.1e}, Poisson count law {worst_poisson:.1e}"
    );
    if worst_multi <= 1e-12 && worst_gamma <= 1e-12 && worst_b <= 1e-10 && spread <= 1e-6 && worst_poisson <= 1e-12 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn diffusive_gap() -> Outcome {
    let ls: Vec<usize> = (2..=8).collect();
    let ns: Vec<usize> = (1..=12).collect();
    let stair = gap_table(&RateFamily::Staircase(2).table(), &ls, &ns).map_err(|e| e.to_string())?;
    let band = band_factor(&stair.iter().map(|c| c.value * (c.l * c.l) as f64).collect::<Vec<_>>());
    let lin = gap_table(&RateFamily::Linear(1.0).table(), &ls, &ns).map_err(|e| e.to_string())?;
    let xs: Vec<f64> = lin.iter().map(|c| c.l as f64).collect();
    let ys: Vec<f64> = lin.iter().map(|c| 1.0 / c.value).collect();
    let slope = loglog_slope(&xs, &ys).map_err(|e| e.to_string())?.slope;
    let msg = format!("staircase gap*L^2 band {band:.3} (<= 4), linear 1/gap slope {slope:.4} (in [1.8, 2.2])");
    if band <= 4.0 && (1.8..=2.2).contains(&slope) { Ok(msg) } else { Err(msg) }
}

fn lsi_trend() -> Outcome {
    let ls = [2, 3, 4];
    let ns: Vec<usize> = (1..=12).collect();
    let opts = LsiOptions::default();
    let mut parts = Vec::new();
    let mut ok = true;
    for (fam, rate) in families() {
        let cells = lsi_table(&rate, &ls, &ns, &opts).map_err(|e| e.to_string())?;
        let band = band_factor(&cells.iter().map(|c| c.value / (c.l * c.l) as f64).collect::<Vec<_>>());
        ok &= band <= 5.0;
        parts.push(format!("{fam} s/L^2 band {band:.3}"));
        if matches!(fam, RateFamily::Linear(_)) {
            let mut worst: f64 = 0.0;
            for &l in &ls {
                let base = cells.iter().find(|c| c.l == l && c.n == 1).unwrap().value;
                for c in cells.iter().filter(|c| c.l == l) {
                    worst = worst.max(c.value / base);
                }
            }
            ok &= worst <= 1.05;
            parts.push(format!("linear max s(L,N)/s(L,1) {worst:.4}"));
        }
    }
    let msg = parts.join(", ");
    if ok { Ok(msg) } else { Err(msg) }
}

fn gamma_chain_lsi() -> Outcome {
    let rate = RateFamily::Linear(1.0).table();
    let opts = LsiOptions::default();
    let mut cells: Vec<(usize, usize, usize)> = [8, 16, 32, 64].iter().map(|&n| (4, 4, n)).collect();
    for l in [4, 16, 64] {
        for n in [8, 16, 32] {
            cells.push((1, l - 1, n));
        }
    }
    let results = cells
        .par_iter()
        .map(|&(s1, s2, n)| -> zrlab::Result<(usize, usize, usize, f64, f64, f64)> {
            let g = gamma_distribution(&rate, s1, s2, n)?;
            let chain = birth_death_generator(&g)?;
            let est = chain_lsi_constant(&chain.to_reversible_chain()?, &opts)?.estimate;
            let b = hardy_lsi_bound(&chain, zrlab::decomposition::birth_death::DEFAULT_HARDY_FACTOR);
            Ok((s1, s2, n, est, b.lower, b.upper))
        })
        .collect::<zrlab::Result<Vec<_>>>()
        .map_err(|e| e.to_string())?;
    let halves: Vec<f64> = results.iter().filter(|r| r.0 == 4).map(|r| r.3 / r.2 as f64).collect();
    let single: Vec<f64> = results
        .iter()
        .filter(|r| r.0 == 1)
        .map(|r| r.3 / (r.2 as f64 * ((r.0 + r.1) as f64).ln()))
        .collect();
    let contained = results.iter().all(|r| r.4 <= r.3 && r.3 <= r.5);
    let (b1, b2) = (band_factor(&halves), band_factor(&single));
    let msg = format!(
        "equal halves s/N band {b1:.3}, single site s/(N log L) band {b2:.3}, Hardy brackets contain estimates: {contained}"
    );
    if b1 <= 3.0 && b2 <= 3.0 && contained { Ok(msg) } else { Err(msg) }
}

fn ensemble_comparison() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for (fam, rate) in families() {
        let rows = regime_table(&rate, &[8, 16, 32, 64], &RegimeOptions::default()).map_err(|e| e.to_string())?;
        ok &= rows.iter().all(|r| r.max_ratio.is_finite());
        for regime in [Regime::VerySmall, Regime::Small, Regime::Large] {
            let v: Vec<f64> = rows
                .iter()
                .filter(|r| r.regime == regime && r.volume >= 16)
                .map(|r| r.max_ratio)
                .collect();
            let band = band_factor(&v);
            ok &= band <= 2.0;
            parts.push(format!("{fam} {regime} {band:.3}"));
        }
    }
    let msg = format!("per-regime spread over volumes >= 16: {}", parts.join(", "));
    if ok { Ok(msg) } else { Err(msg) }
}

fn local_limit() -> Outcome {
    let volumes = [16usize, 32, 64, 128];
    let mut parts = Vec::new();
    let mut ok = true;
    for (fam, rate) in families() {
        let mut poisson = Vec::new();
        let mut gauss = vec![Vec::new(), Vec::new()];
        for &v in &volumes {
            let mut pe: f64 = 0.0;
            for n in 1..=5 {
                let site = site_law_at_density(&rate, n as f64 / v as f64).map_err(|e| e.to_string())?;
                let law = total_count_law(&site, v).map_err(|e| e.to_string())?;
                pe = pe.max(llt_errors(&law, n).map_err(|e| e.to_string())?.poisson_err);
            }
            poisson.push(pe * v as f64);
            for (i, rho) in [1.0, 4.0].into_iter().enumerate() {
                let site = site_law_at_density(&rate, rho).map_err(|e| e.to_string())?;
                let law = total_count_law(&site, v).map_err(|e| e.to_string())?;
                let e = llt_errors(&law, (rho * v as f64) as usize).map_err(|e| e.to_string())?;
                gauss[i].push(e.gaussian_err * (e.sigma2 * v as f64).sqrt());
            }
        }
        if matches!(fam, RateFamily::Linear(_)) {
            // the count law is exactly Poisson(N): the error is pure rounding
            let max = poisson.iter().cloned().fold(0.0, f64::max);
            ok &= max <= 1e-8;
            parts.push(format!("{fam} poisson_err*V <= {max:.1e} (exact zero)"));
        } else {
            let band = band_factor(&poisson);
            ok &= band <= 3.0;
            parts.push(format!("{fam} poisson_err*V band {band:.3}"));
        }
        for (g, rho) in gauss.iter().zip([1, 4]) {
            let band = band_factor(g);
            ok &= band <= 3.0;
            parts.push(format!("{fam} rho={rho} gaussian band {band:.3}"));
        }
    }
    let msg = parts.join(", ");
    if ok { Ok(msg) } else { Err(msg) }
}

fn inequality_suites() -> Outcome {
    let mut checks = Vec::new();
    let mut fitted = Vec::new();
    for (fam, rate) in families() {
        let rep = mgf_suite(&rate, &MgfOptions::default()).map_err(|e| e.to_string())?;
        fitted.push(format!("{fam} C = {:.3}", rep.exponential_moment_c_max));
        for c in rep.checks {
            checks.push((format!("{fam} {}", c.name), c));
        }
    }
    let (one, sym) = entropy_inequality_suite(1000, &[0.1, 1.0, 10.0], 0).map_err(|e| e.to_string())?;
    checks.push(("entropy".into(), one));
    checks.push(("entropy symmetric".into(), sym));
    checks.push(("rothaus".into(), rothaus_suite(1000, 0).map_err(|e| e.to_string())?));
    let points: usize = checks.iter().map(|c| c.1.points).sum();
    let failed: Vec<String> = checks
        .iter()
        .filter(|c| !c.1.passed())
        .map(|(name, c)| format!("{name}: {} violations, witness {:?}", c.violations, c.witness))
        .collect();
    let msg = format!("{} checks, {points} points, fitted {}", checks.len(), fitted.join(", "));
    if failed.is_empty() {
        Ok(format!("zero violations; {msg}"))
    } else {
        Err(format!("{msg}; {}", failed.join("; ")))
    }
}

fn simulator() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    let l3 = Lattice::segment(3).unwrap();
    let l4 = Lattice::segment(4).unwrap();
    for (name, lattice, rate, n) in [
        ("linear L=3 N=3", &l3, RateFamily::Linear(1.0).table(), 3),
        ("staircase L=3 N=2", &l3, RateFamily::Staircase(2).table(), 2),
        ("staircase L=4 N=5", &l4, RateFamily::Staircase(2).table(), 5),
    ] {
        let c = empirical_law_check(lattice, &rate, n, 1e5, 7).map_err(|e| e.to_string())?;
        ok &= c.tv <= 0.02 && !c.under_sampled;
        parts.push(format!("{name} TV {:.4}", c.tv));
    }
    let rate = RateFamily::Linear(1.0).table();
    let opts = RelaxationOptions::default();
    let mut taus = Vec::new();
    for l in [32usize, 64] {
        let lattice = Lattice::segment(l).unwrap();
        let est = relaxation_estimate(&lattice, &rate, l, &opts).map_err(|e| e.to_string())?;
        ok &= est.converged;
        taus.push((l, est.tau, 1.0 / single_particle_gap(&lattice)));
    }
    let err32 = (taus[0].1 - taus[0].2).abs() / taus[0].2;
    let ratio = taus[1].1 / taus[0].1;
    ok &= err32 <= 0.25 && (3.0..=5.0).contains(&ratio);
    parts.push(format!(
        "tau(32) {:.1} vs exact {:.1} ({:.1}%), tau(64)/tau(32) {ratio:.3}",
        taus[0].1,
        taus[0].2,
        100.0 * err32
    ));
    let msg = parts.join(", ");
    if ok { Ok(msg) } else { Err(msg) }
}

fn equivalence_rate() -> Outcome {
    let mut parts = Vec::new();
    let mut ok = true;
    for (fam, rate) in families() {
        let scaled: Vec<f64> = (8..=64)
            .into_par_iter()
            .map(|l| equivalence_gap(&rate, l, l, 0).map(|g| g * l as f64 / 2f64.sqrt()))
            .collect::<zrlab::Result<Vec<_>>>()
            .map_err(|e| e.to_string())?;
        if matches!(fam, RateFamily::Linear(_)) {
            // binomial marginal mean N/L equals alpha = rho exactly
            let max = scaled.iter().cloned().fold(0.0, f64::max);
            ok &= max <= 1e-8;
            parts.push(format!("{fam} gap*L/sqrt(1+rho) <= {max:.1e} (exact zero)"));
        } else {
            let band = band_factor(&scaled);
            ok &= band <= 3.0;
            parts.push(format!("{fam} gap*L/sqrt(1+rho) band {band:.3}"));
        }
    }
    let msg = parts.join(", ");
    if ok { Ok(msg) } else { Err(msg) }
}

fn main() {
    let criteria: [(&str, fn() -> Outcome); 10] = [
        ("exact identities", exact_identities),
        ("independent-particle oracle", independent_particles),
        ("diffusive gap scaling", diffusive_gap),
        ("LSI boundedness trend", lsi_trend),
        ("gamma-chain LSI", gamma_chain_lsi),
        ("ensemble comparison", ensemble_comparison),
        ("local limit rates", local_limit),
        ("inequality suites", inequality_suites),
        ("simulator consistency", simulator),
        ("equivalence-of-ensembles rate", equivalence_rate),
    ];
    let mut failures = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let start = Instant::now();
        let outcome = run();
        let secs = start.elapsed().as_secs_f64();
        match outcome {
            Ok(msg) => println!("PASS {:>2} {name}: {msg} [{secs:.1}s]", i + 1),
            Err(msg) => {
                failures += 1;
                println!("FAIL {:>2} {name}: {msg} [{secs:.1}s]", i + 1);
            }
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failures, criteria.len());
    if failures > 0 {
        std::process::exit(1);
    }
}
