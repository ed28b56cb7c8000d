use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use zrlab::spectral::gap::DEFAULT_GAP_TOL;
use zrlab::spectral::{
    assemble_generator, dirichlet_form, entropy, lsi_constant, lsi_ratio, rothaus_slack, spectral_gap, variance,
    LsiOptions, ReversibleChain,
};
use zrlab::{canonical_measure, enumerate_sector, DiscreteMeasure, Lattice, RateFamily, Sector};

fn families() -> [RateFamily; 3] {
    [RateFamily::Linear(1.0), RateFamily::Staircase(2), RateFamily::Constant(1.0)]
}

fn sector(l: usize, n: usize) -> Sector {
    enumerate_sector(&Lattice::segment(l).unwrap(), n).unwrap()
}

fn gaussian(len: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..len).map(|_| StandardNormal.sample(rng)).collect()
}

#[test]
fn poincare_holds_for_random_functions() {
    for fam in families() {
        for (l, n) in [(3, 3), (4, 5), (5, 4)] {
            let rate = fam.table();
            let s = sector(l, n);
            let nu = canonical_measure(&s, &rate).unwrap();
            let gen = assemble_generator(&s, &rate).unwrap();
            let gap = spectral_gap(&gen, &nu, DEFAULT_GAP_TOL).unwrap().gap;
            let mut rng = ChaCha8Rng::seed_from_u64(l as u64 * 100 + n as u64);
            for _ in 0..100 {
                let f = gaussian(s.size(), &mut rng);
                let var = variance(&nu, &f).unwrap();
                let form = dirichlet_form(&gen, &nu, &f, &f).unwrap();
                assert!(var <= form / gap * (1.0 + 1e-8), "{fam} L={l} N={n}: {var} > {form}/{gap}");
            }
        }
    }
}

/// `E(f, f) = -<f, L f>_nu` against a dense matrix product.
#[test]
fn dirichlet_form_matches_dense_generator() {
    let rate = RateFamily::Linear(1.0).table();
    let s = sector(3, 2);
    let nu = canonical_measure(&s, &rate).unwrap();
    let gen = assemble_generator(&s, &rate).unwrap();
    let dense = gen.to_dense();
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..20 {
        let f = gaussian(s.size(), &mut rng);
        let g = gaussian(s.size(), &mut rng);
        let lf: Vec<f64> = dense.iter().map(|row| row.iter().zip(&f).map(|(a, b)| a * b).sum()).collect();
        let oracle: f64 = -(0..s.size()).map(|i| nu.prob(i) * f[i] * lf[i]).sum::<f64>();
        let form = dirichlet_form(&gen, &nu, &f, &f).unwrap();
        assert!((form - oracle).abs() <= 1e-12 * oracle.abs().max(1.0));
        let fg = dirichlet_form(&gen, &nu, &f, &g).unwrap();
        let gf = dirichlet_form(&gen, &nu, &g, &f).unwrap();
        assert!((fg - gf).abs() <= 1e-13 * fg.abs().max(1.0));
    }
    let ones = vec![3.0; s.size()];
    assert_eq!(dirichlet_form(&gen, &nu, &ones, &f64_vec(s.size())).unwrap(), 0.0);
}

fn f64_vec(n: usize) -> Vec<f64> {
    (0..n).map(|i| i as f64).collect()
}

#[test]
fn linear_gap_does_not_depend_on_n() {
    let rate = RateFamily::Linear(1.0).table();
    for (l, n_max) in [(2, 20), (3, 20), (4, 20), (5, 10), (6, 8)] {
        let gaps: Vec<f64> = (1..=n_max)
            .map(|n| {
                let s = sector(l, n);
                let nu = canonical_measure(&s, &rate).unwrap();
                spectral_gap(&assemble_generator(&s, &rate).unwrap(), &nu, DEFAULT_GAP_TOL).unwrap().gap
            })
            .collect();
        let exact = 2.0 * (1.0 - (std::f64::consts::PI / l as f64).cos());
        for g in &gaps {
            assert!((g - exact).abs() <= 1e-6 * exact, "L={l}: {g} vs {exact}");
        }
    }
}

#[test]
fn lsi_of_independent_walkers_is_uniform_in_n() {
    let rate = RateFamily::Linear(1.0).table();
    let est = |n: usize| {
        let s = sector(2, n);
        let nu = canonical_measure(&s, &rate).unwrap();
        lsi_constant(&assemble_generator(&s, &rate).unwrap(), &nu, &LsiOptions::default())
            .unwrap()
            .estimate
    };
    let single = est(1);
    assert!(est(4) <= single * 1.05, "{} vs {single}", est(4));
}

#[test]
fn lsi_witness_attains_the_estimate() {
    for fam in families() {
        let rate = fam.table();
        let s = sector(3, 4);
        let nu = canonical_measure(&s, &rate).unwrap();
        let gen = assemble_generator(&s, &rate).unwrap();
        let r = lsi_constant(&gen, &nu, &LsiOptions::default()).unwrap();
        let g = &r.witness;
        let g2: Vec<f64> = g.iter().map(|v| v * v).collect();
        let ent = entropy(&nu, &g2).unwrap();
        let form = dirichlet_form(&gen, &nu, g, g).unwrap();
        assert!(ent <= r.estimate * form * (1.0 + 1e-10), "{fam}");
        let chain = ReversibleChain::from_generator(&gen, &nu).unwrap();
        assert!(lsi_ratio(&chain, g) <= r.estimate * (1.0 + 1e-12));
        // never below the Rothaus consequence s >= 2 / gap
        assert!(r.estimate >= 2.0 / r.gap * (1.0 - 1e-6));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn rothaus_inequality(w in prop::collection::vec(0.01f64..10.0, 2..30), seed in any::<u64>()) {
        let m = DiscreteMeasure::from_weights(&w).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let f: Vec<f64> = gaussian(w.len(), &mut rng).iter().map(|z| (2.0 * z).exp()).collect();
        prop_assert!(rothaus_slack(&m, &f).unwrap() >= -1e-10);
    }

    #[test]
    fn entropy_is_nonnegative_and_homogeneous(w in prop::collection::vec(0.01f64..10.0, 2..20),
                                              f in prop::collection::vec(0.0f64..5.0, 20),
                                              scale in 0.1f64..10.0) {
        let m = DiscreteMeasure::from_weights(&w).unwrap();
        let f = &f[..w.len()];
        let e = entropy(&m, f).unwrap();
        prop_assert!(e >= -1e-12);
        let scaled: Vec<f64> = f.iter().map(|v| v * scale).collect();
        prop_assert!((entropy(&m, &scaled).unwrap() - scale * e).abs() <= 1e-10 * (1.0 + scale * e));
    }
}
