mod common;

use common::{oracle_product_moment, oracle_single_moment, oracle_upper_gamma, Fixture};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ugrec::moments::{
    build_moment_table, covariance, product_moment, product_recurrence_residual, single_moment,
    single_recurrence_residual,
};
use ugrec::special::upper_gamma;
use ugrec::study::THETA_GRID;

#[test]
fn table1_means() {
    let f = Fixture::load("table1.csv");
    let mut count = 0;
    for i in 0..f.rows.len() {
        let k = f.get(i, "k").unwrap() as usize;
        let n = f.get(i, "n").unwrap() as usize;
        for th in THETA_GRID {
            let want = f.get(i, &format!("theta_{th}")).unwrap();
            let got = single_moment(1.0, n, k, th).unwrap();
            assert!((got - want).abs() <= 5e-5, "k={k} n={n} theta={th}: {got} vs {want}");
            count += 1;
        }
    }
    assert_eq!(count, 90);
}

#[test]
fn table2_covariances() {
    let f = Fixture::load("table2.csv");
    let mut count = 0;
    for i in 0..f.rows.len() {
        let k = f.get(i, "k").unwrap() as usize;
        let m = f.get(i, "m").unwrap() as usize;
        let n = f.get(i, "n").unwrap() as usize;
        for th in THETA_GRID {
            let want = f.get(i, &format!("theta_{th}")).unwrap();
            let got = covariance(m, n, k, th).unwrap();
            assert!((got - want).abs() <= 5e-5, "k={k} m={m} n={n} theta={th}: {got} vs {want}");
            count += 1;
        }
    }
    assert_eq!(count, 315);
}

#[test]
fn recurrences_vanish() {
    let mut cases = 0;
    for &th in &THETA_GRID {
        for k in 1..=3 {
            for r in [1.0, 2.0] {
                for n in 2..=6 {
                    let res = single_recurrence_residual(r, n, k, th).unwrap();
                    assert!(res.abs() <= 1e-8, "single r={r} n={n} k={k} theta={th}: {res}");
                    cases += 1;
                }
                for s in [1.0, 2.0] {
                    for n in 3..=6 {
                        for m in 1..n - 1 {
                            let res = product_recurrence_residual(r, s, m, n, k, th).unwrap();
                            assert!(res.abs() <= 1e-8, "product r={r} s={s} m={m} n={n}: {res}");
                            cases += 1;
                        }
                    }
                }
            }
        }
    }
    assert!(cases >= 50);
}

#[test]
fn recurrence_preconditions() {
    assert!(single_recurrence_residual(1.0, 1, 1, 1.5).is_err());
    assert!(product_recurrence_residual(1.0, 1.0, 2, 3, 1, 1.5).is_err());
}

#[test]
fn moments_match_quadrature_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    for _ in 0..10 {
        let k = rng.random_range(1..=3);
        let th = rng.random_range(0.75..4.5);
        let r = rng.random_range(0.5..3.0);
        let n = rng.random_range(1..=6);
        let got = single_moment(r, n, k, th).unwrap();
        let want = oracle_single_moment(r, n, k, th);
        assert!((got - want).abs() <= 1e-7, "single r={r} n={n} k={k} theta={th}: {got} vs {want}");

        let n = rng.random_range(2..=6);
        let m = rng.random_range(1..n);
        let s = rng.random_range(0.5..3.0);
        let got = product_moment(r, s, m, n, k, th).unwrap();
        let want = oracle_product_moment(r, s, m, n, k, th);
        assert!(
            (got - want).abs() <= 1e-7,
            "product r={r} s={s} m={m} n={n} k={k} theta={th}: {got} vs {want}"
        );
    }
}

#[test]
fn singular_denominator_falls_back() {
    // r = θ(n-1-i-j) for some terms
    let got = product_moment(1.5, 1.0, 1, 3, 2, 1.5).unwrap();
    let want = oracle_product_moment(1.5, 1.0, 1, 3, 2, 1.5);
    assert!((got - want).abs() < 1e-7, "{got} vs {want}");
}

#[test]
fn upper_gamma_matches_quadrature() {
    let xs = [0.01, 0.1, 0.5, 1.0, 1.5, 2.0, 3.0, 5.0, 10.0, 30.0];
    let mut a = -5.0;
    while a <= 5.0 + 1e-12 {
        for &x in &xs {
            let got = upper_gamma(a, x).unwrap();
            let want = oracle_upper_gamma(a, x);
            let rel = ((got - want) / want).abs();
            assert!(rel <= 1e-10, "a={a} x={x}: {got} vs {want} (rel {rel:e})");
        }
        a += 0.25;
    }
    // orders near integers go through the small-order expansion
    for a in [-4.93, -2.05, -1.0909, -0.9, -0.37, -0.0909, -1e-6, 1e-9, 0.03, 0.0909, 0.3, 0.49] {
        for &x in &xs {
            let got = upper_gamma(a, x).unwrap();
            let want = oracle_upper_gamma(a, x);
            let rel = ((got - want) / want).abs();
            assert!(rel <= 1e-10, "a={a} x={x}: {got} vs {want} (rel {rel:e})");
        }
    }
}

#[test]
fn moment_table_is_consistent() {
    let t = build_moment_table(5, 2, 2.5).unwrap();
    for i in 0..5 {
        assert!((t.alpha[i] - single_moment(1.0, i + 1, 2, 2.5).unwrap()).abs() < 1e-15);
        for j in 0..5 {
            assert_eq!(t.b[(i, j)], t.b[(j, i)]);
        }
    }
}

#[test]
fn domain_errors() {
    assert!(single_moment(1.0, 0, 1, 1.5).is_err());
    assert!(single_moment(1.0, 31, 1, 1.5).is_err());
    assert!(single_moment(-1.0, 2, 1, 1.5).is_err());
    assert!(single_moment(1.0, 2, 0, 1.5).is_err());
    assert!(single_moment(1.0, 2, 1, 0.0).is_err());
    assert!(product_moment(1.0, 1.0, 3, 3, 1, 1.5).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn means_decrease_and_variances_positive(k in 1usize..=4, th in 0.3f64..6.0, n in 2usize..=8) {
        let a = single_moment(1.0, n - 1, k, th).unwrap();
        let b = single_moment(1.0, n, k, th).unwrap();
        prop_assert!(b < a && b > 0.0 && a < 1.0);
        prop_assert!(covariance(n, n, k, th).unwrap() > 0.0);
    }

    #[test]
    fn cauchy_schwarz(k in 1usize..=3, th in 0.5f64..5.0, m in 1usize..=4, gap in 1usize..=3) {
        let n = m + gap;
        let c = covariance(m, n, k, th).unwrap();
        let vm = covariance(m, m, k, th).unwrap();
        let vn = covariance(n, n, k, th).unwrap();
        prop_assert!(c * c <= vm * vn * (1.0 + 1e-9));
    }
}
