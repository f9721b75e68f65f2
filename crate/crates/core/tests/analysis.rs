mod common;

use common::covid_data;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use ugrec::analysis::{
    analyze, kolmogorov_exact_cdf, ks_p_value, parse_data, pearson, theta_diagnostic, AnalysisOptions,
};
use ugrec::moments::single_moment;
use ugrec::pivotal::Pivot;
use ugrec::records::{extract_lower_k_records, RecordSeries};
use ugrec::Error;

fn worked_example(fidelity: bool) -> ugrec::analysis::AnalysisReport {
    let mut o = AnalysisOptions::new(2);
    o.theta = Some(1.5);
    o.n = Some(4);
    o.reps = 10_000;
    o.paper_fidelity = fidelity;
    analyze(&covid_data(), &o).unwrap()
}

#[test]
fn worked_example_full_precision() {
    let r = worked_example(false);
    let e = &r.estimates;
    for (got, want) in [
        (e.mu_blue, 0.08321097),
        (e.sigma_blue, 0.2203375),
        (e.mu_blie, 0.1041557),
        (e.sigma_blie, 0.1847957),
        (r.prediction.blup, 0.188666),
        (r.prediction.blip, 0.1911442),
    ] {
        assert!((got - want).abs() <= 1e-3, "{got} vs {want}");
    }
    assert_eq!(r.next_observed, Some(0.1954));
    assert_eq!(r.intervals.len(), 6);
    assert!(r.stage_errors.is_empty(), "{:?}", r.stage_errors);
}

#[test]
fn worked_example_fidelity_mode() {
    let r = worked_example(true);
    let e = &r.estimates;
    for (got, want, what) in [
        (e.mu_blue, 0.08321097, "mu*"),
        (e.sigma_blue, 0.2203375, "sigma*"),
        (e.mu_blie, 0.1041557, "mu~"),
        (e.sigma_blie, 0.1847957, "sigma~"),
        (r.prediction.blup, 0.188666, "BLUP"),
        (r.prediction.blip, 0.1911442, "BLIP"),
    ] {
        assert!((got - want).abs() <= 5e-7, "{what}: {got} vs {want}");
    }
    let c = r.theta_diagnostic.iter().find(|c| c.theta == 1.5).unwrap();
    assert!((c.correlation - 0.8686669).abs() <= 5e-7, "{}", c.correlation);
    // printed variance factors of the BLIEs
    assert!((e.var_mu_blie - 0.05754).abs() < 5e-6);
    assert!((e.var_sigma_blie - 0.135286).abs() < 5e-7);
    assert!((e.cov_blie + 0.079724).abs() < 5e-7);
}

#[test]
fn mspe_identity_in_worked_example() {
    let r = worked_example(false);
    let p = &r.prediction;
    let gap = p.mspe_blup - p.mspe_blip;
    assert!((gap - p.v4 * p.v4 / (1.0 + r.coefficients.v2)).abs() < 1e-12);
    assert!((r.mspe_blup_data - p.mspe_blup * r.estimates.sigma_blue.powi(2)).abs() < 1e-15);
}

#[test]
fn goodness_of_fit_on_covid_data() {
    let r = worked_example(false);
    let ks = r.ks.unwrap();
    assert!((ks.statistic - 0.11062).abs() < 0.03);
    assert!(ks.p_value > 0.05);
}

#[test]
fn default_theta_is_argmax_of_diagnostic() {
    let mut o = AnalysisOptions::new(2);
    o.reps = 1000;
    let r = analyze(&covid_data(), &o).unwrap();
    let best = r.theta_diagnostic.iter().max_by(|a, b| a.correlation.total_cmp(&b.correlation)).unwrap();
    assert_eq!(r.chosen_theta, best.theta);
    assert!(r.theta_diagnostic.iter().all(|c| (-1.0..=1.0).contains(&c.correlation)));
    assert!(o.theta_grid.contains(&r.chosen_theta));
}

#[test]
fn analysis_is_bit_stable() {
    let a = serde_json::to_string(&worked_example(true)).unwrap();
    let b = serde_json::to_string(&worked_example(true)).unwrap();
    assert_eq!(a, b);
}

#[test]
fn single_record_is_an_error() {
    // decreasing k-th smallest happens once only
    let data = [0.1, 0.2, 0.3, 0.4];
    let o = AnalysisOptions::new(1);
    assert!(matches!(analyze(&data, &o), Err(Error::InsufficientRecords { needed: 2, got: 1 })));
}

#[test]
fn stage_errors_are_attached() {
    // values above 1 cannot be fitted, later stages still run
    let data = [3.0, 2.5, 2.7, 2.2, 2.1, 1.7, 1.9, 1.5];
    let mut o = AnalysisOptions::new(1);
    o.theta = Some(1.5);
    o.reps = 1000;
    let r = analyze(&data, &o).unwrap();
    assert!(r.fit.is_none());
    assert!(r.stage_errors.iter().any(|s| s.stage == "fit"));
    assert_eq!(r.intervals.len(), 6);
}

#[test]
fn correlation_is_one_for_exact_means() {
    let k = 3;
    let means: Vec<f64> = (1..=5).map(|i| single_moment(1.0, i, k, 2.5).unwrap()).collect();
    let rec = RecordSeries {
        k,
        values: means.iter().map(|m| 0.1 + 0.3 * m).collect(),
        source_indices: vec![],
    };
    let d = theta_diagnostic(&rec, &[2.5]).unwrap();
    assert!((d[0].correlation - 1.0).abs() < 1e-12);
}

fn naive_pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let (sx, sy): (f64, f64) = (x.iter().sum(), y.iter().sum());
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| a * b).sum();
    let sxx: f64 = x.iter().map(|a| a * a).sum();
    let syy: f64 = y.iter().map(|b| b * b).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}

#[test]
fn reversed_records_flip_sign() {
    let rec = extract_lower_k_records(&covid_data(), 2).unwrap();
    let d = theta_diagnostic(&rec, &[1.5]).unwrap()[0].correlation;
    let means: Vec<f64> = (1..=5).map(|i| single_moment(1.0, i, 2, 1.5).unwrap()).collect();
    assert!((d - naive_pearson(&rec.values, &means)).abs() < 1e-12);
    let rev: Vec<f64> = rec.values.iter().rev().copied().collect();
    let dr = pearson(&rev, &means).unwrap();
    assert!((dr - naive_pearson(&rev, &means)).abs() < 1e-12);
    // negating records reverses the sign exactly
    let neg: Vec<f64> = rec.values.iter().map(|v| -v).collect();
    assert!((pearson(&neg, &means).unwrap() + d).abs() < 1e-15);
}

#[test]
fn diagnostic_preconditions() {
    let rec = RecordSeries { k: 1, values: vec![0.5, 0.4], source_indices: vec![] };
    assert!(theta_diagnostic(&rec, &[1.5]).is_err());
    assert!(matches!(pearson(&[1.0, 1.0, 1.0], &[0.1, 0.2, 0.3]), Err(Error::UndefinedCorrelation)));
}

#[test]
fn exact_ks_distribution_against_simulation() {
    // P(D_n >= d) for uniform samples, estimated by brute force
    let (n, d, reps) = (8usize, 0.3, 200_000);
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut hits = 0;
    for _ in 0..reps {
        let mut u: Vec<f64> = (0..n).map(|_| rng.random::<f64>()).collect();
        u.sort_by(f64::total_cmp);
        let stat = u
            .iter()
            .enumerate()
            .map(|(i, &x)| ((i + 1) as f64 / n as f64 - x).max(x - i as f64 / n as f64))
            .fold(0.0, f64::max);
        if stat >= d {
            hits += 1;
        }
    }
    let p_mc = hits as f64 / reps as f64;
    let p = ks_p_value(n, d);
    let se = (p * (1.0 - p) / reps as f64).sqrt();
    assert!((p - p_mc).abs() < 4.0 * se, "exact {p} vs simulated {p_mc}");
    assert!(kolmogorov_exact_cdf(n, 0.0) == 0.0 && kolmogorov_exact_cdf(n, 1.0) == 1.0);
}

#[test]
fn ks_asymptotic_branch_is_continuous_with_exact() {
    let d = 0.09;
    let exact = ks_p_value(100, d);
    let asym = ks_p_value(101, d);
    assert!((exact - asym).abs() < 0.03, "{exact} vs {asym}");
}

#[test]
fn data_file_formats() {
    let d = parse_data("positive_rate\n0.2012\n0.2557\n").unwrap();
    assert_eq!(d, vec![0.2012, 0.2557]);
    assert!(matches!(parse_data(""), Err(Error::InsufficientData { .. })));
    assert!(matches!(parse_data("a\nb\n"), Err(Error::Input(_))));
}

#[test]
fn intervals_cover_observed_next_record() {
    let r = worked_example(false);
    for iv in r.intervals.iter().filter(|i| matches!(i.pivot, Pivot::T1Star | Pivot::T2Star)) {
        assert!(iv.contains(0.1954), "{iv:?}");
        assert!(iv.upper <= r.records.values[3]);
    }
}
