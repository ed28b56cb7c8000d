use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use zrlab::decomposition::birth_death::DEFAULT_HARDY_FACTOR;
use zrlab::decomposition::diagnostics::random_positive_functions;
use zrlab::decomposition::{
    birth_death_generator, conditional_dirichlet, conditional_expectation, diagnostics_scan, entropy_decomposition,
    gamma_distribution, gradient_table, hardy_lsi_bound, tensor_property, DiagnosticOptions, SplitSector,
};
use zrlab::scaling::{band_factor, loglog_slope};
use zrlab::spectral::{chain_lsi_constant, LsiOptions};
use zrlab::{enumerate_sector, Lattice, RateFamily};

fn family(i: usize) -> RateFamily {
    [RateFamily::Linear(1.0), RateFamily::Staircase(2), RateFamily::Constant(1.0), RateFamily::Staircase(3)][i]
}

fn gamma_lsi(s1: usize, s2: usize, n: usize) -> (f64, f64, f64) {
    let g = gamma_distribution(&RateFamily::Linear(1.0).table(), s1, s2, n).unwrap();
    let chain = birth_death_generator(&g).unwrap();
    let est = chain_lsi_constant(&chain.to_reversible_chain().unwrap(), &LsiOptions::default())
        .unwrap()
        .estimate;
    let b = hardy_lsi_bound(&chain, DEFAULT_HARDY_FACTOR);
    (b.lower, est, b.upper)
}

#[test]
fn gamma_chain_lsi_grows_linearly_for_equal_halves() {
    let mut scaled = Vec::new();
    for n in [8, 16, 32, 64] {
        let (lo, est, hi) = gamma_lsi(4, 4, n);
        assert!(lo <= est && est <= hi, "N={n}: {est} outside [{lo}, {hi}]");
        scaled.push(est / n as f64);
    }
    assert!(band_factor(&scaled) <= 3.0, "{scaled:?}");
}

#[test]
fn gamma_chain_lsi_for_a_single_site_is_n_log_l() {
    let mut scaled = Vec::new();
    for l in [4, 16, 64] {
        for n in [8, 16, 32] {
            let (lo, est, hi) = gamma_lsi(1, l - 1, n);
            assert!(lo <= est && est <= hi, "L={l} N={n}");
            scaled.push(est / (n as f64 * (l as f64).ln()));
        }
    }
    assert!(band_factor(&scaled) <= 3.0, "{scaled:?}");
}

/// The implied constant of the gradient bound does not grow with `N` at
/// fixed `L`.
#[test]
fn gradient_constant_is_flat_in_n() {
    for fam in [RateFamily::Linear(1.0), RateFamily::Staircase(2)] {
        let ns = [4, 8, 16];
        let grid: Vec<(usize, usize)> = ns.iter().map(|&n| (6, n)).collect();
        let rows = diagnostics_scan(&grid, &fam.table(), &DiagnosticOptions::default()).unwrap();
        let c: Vec<f64> = ns
            .iter()
            .map(|&n| {
                rows.iter()
                    .find(|r| r.quantity == "gradient_c_max" && r.big_n == n)
                    .unwrap()
                    .value
            })
            .collect();
        let xs: Vec<f64> = ns.iter().map(|&n| n as f64).collect();
        let fit = loglog_slope(&xs, &c).unwrap();
        assert!(fit.slope <= 0.1, "{fam}: {c:?} slope {}", fit.slope);
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn split_identities_hold(fam in 0usize..4, l in 2usize..6, n in 1usize..8, cut in 1usize..5, seed in any::<u64>()) {
        prop_assume!(cut < l);
        let s = enumerate_sector(&Lattice::segment(l).unwrap(), n).unwrap();
        let split = SplitSector::new(s, family(fam).table(), (0..cut).collect()).unwrap();
        prop_assert!(split.factorization_residual().unwrap() <= 1e-12);
        let gsum: f64 = split.gamma().probs().iter().sum();
        prop_assert!((gsum - 1.0).abs() <= 1e-12);

        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f = random_positive_functions(split.sector().size(), 1, &mut rng).remove(0);
        let nu_f = split.measure().expectation(&f);
        let tower: f64 = (0..=n)
            .map(|k| split.gamma().prob(k) * conditional_expectation(&split, &f, k).unwrap())
            .sum();
        prop_assert!((tower - nu_f).abs() <= 1e-12 * nu_f);

        let d = entropy_decomposition(&split, &f).unwrap();
        prop_assert!(d.residual <= 1e-10);
        let t = tensor_property(&split, &f).unwrap();
        prop_assert!(t.slack >= -1e-10 * t.conditional.max(1.0));
        let g: Vec<f64> = f.iter().map(|v| v.sqrt()).collect();
        prop_assert!(conditional_dirichlet(&split, &g).unwrap().residual <= 1e-10);

        let scale = f.iter().cloned().fold(0.0, f64::max);
        for term in gradient_table(&split, &f).unwrap() {
            let floor = 1e-12 * scale;
            let ab = term.ab(n);
            for v in [term.inflow, term.outflow, ab.a + ab.b] {
                prop_assert!((v - term.direct).abs() <= 1e-9 * term.direct.abs().max(floor), "{:?}", term);
            }
        }
    }

    #[test]
    fn birth_death_chain_is_reversible(w in prop::collection::vec(0.001f64..10.0, 2..40)) {
        let g = zrlab::DiscreteMeasure::from_weights(&w).unwrap();
        let c = birth_death_generator(&g).unwrap();
        prop_assert!(c.reversibility_residual() <= 1e-12);
        let phi: Vec<f64> = (0..w.len()).map(|i| (i as f64 * 0.7).sin()).collect();
        let a = c.apply(&phi);
        let inner: f64 = -(0..w.len()).map(|i| c.pmf[i] * phi[i] * a[i]).sum::<f64>();
        prop_assert!((c.dirichlet(&phi) - inner).abs() <= 1e-10 * inner.abs().max(1.0));
    }
}
