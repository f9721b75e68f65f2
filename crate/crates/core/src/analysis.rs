//! Real-data analysis: goodness of fit, the record/mean correlation
//! diagnostic for `θ`, and a combined report of estimates, predictions and
//! intervals.

use crate::distribution::{fit_mle, MleFit, UgTwoParam};
use crate::error::{domain, Error, Result};
use crate::estimation::{blue_coefficients, estimate, BlueCoefficients, LinearEstimates};
use crate::moments::single_moment;
use crate::pivotal::{
    cached_pivot_quantiles, ci_location, ci_scale, pi_next_record, simulate_all_pivot_quantiles,
    Interval, Pivot, QuantileTable,
};
use crate::prediction::{predict, v4, PredictionResult, PredictionSetup};
use crate::records::{extract_lower_k_records, RecordSeries};
use crate::study::THETA_GRID;
use serde::Serialize;
use std::fmt;
use std::path::{Path, PathBuf};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct KsResult {
    pub statistic: f64,
    pub p_value: f64,
}

/// Two-sided one-sample Kolmogorov–Smirnov statistic against `cdf`.
pub fn ks_statistic<F: Fn(f64) -> f64>(data: &[f64], cdf: F) -> Result<f64> {
    if data.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    if data.iter().any(|x| x.is_nan()) {
        return domain("data contain NaN");
    }
    let mut v = data.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    Ok(v.iter().enumerate().fold(0.0f64, |d, (i, &x)| {
        let f = cdf(x);
        d.max((i + 1) as f64 / n - f).max(f - i as f64 / n)
    }))
}

pub fn ks_test(data: &[f64], params: &UgTwoParam) -> Result<KsResult> {
    if let Some(x) = data.iter().find(|x| !(**x > 0.0 && **x < 1.0)) {
        return domain(format!("observations must lie in (0, 1), got {x}"));
    }
    let d = ks_statistic(data, |x| params.cdf(x))?;
    Ok(KsResult { statistic: d, p_value: ks_p_value(data.len(), d) })
}

/// `P(D_n >= d)`: exact for `n <= 100`, asymptotic otherwise.
pub fn ks_p_value(n: usize, d: f64) -> f64 {
    if n <= 100 {
        (1.0 - kolmogorov_exact_cdf(n, d)).clamp(0.0, 1.0)
    } else {
        kolmogorov_survival((n as f64).sqrt() * d)
    }
}

/// `P(D_n < d)` by the Marsaglia–Tsang–Wang matrix-power method.
pub fn kolmogorov_exact_cdf(n: usize, d: f64) -> f64 {
    if d <= 0.0 {
        return 0.0;
    }
    if d >= 1.0 {
        return 1.0;
    }
    let nd = n as f64 * d;
    let k = nd.floor() as usize + 1;
    let m = 2 * k - 1;
    let h = k as f64 - nd;
    let mut hm = vec![0.0; m * m];
    for i in 0..m {
        for j in 0..m {
            if i + 1 >= j {
                hm[i * m + j] = 1.0;
            }
        }
    }
    for i in 0..m {
        hm[i * m] -= h.powi(i as i32 + 1);
        hm[(m - 1) * m + i] -= h.powi((m - i) as i32);
    }
    if 2.0 * h - 1.0 > 0.0 {
        hm[(m - 1) * m] += (2.0 * h - 1.0).powi(m as i32);
    }
    for i in 0..m {
        for j in 0..m {
            if i + 1 > j {
                for g in 1..=(i + 1 - j) {
                    hm[i * m + j] /= g as f64;
                }
            }
        }
    }
    let (q, mut e) = matrix_power(&hm, m, n);
    let mut s = q[(k - 1) * m + k - 1];
    for i in 1..=n {
        s = s * i as f64 / n as f64;
        if s < 1e-140 {
            s *= 1e140;
            e -= 140;
        }
    }
    s * 10f64.powi(e)
}

fn matmul(a: &[f64], b: &[f64], m: usize) -> Vec<f64> {
    let mut c = vec![0.0; m * m];
    for i in 0..m {
        for l in 0..m {
            let x = a[i * m + l];
            if x != 0.0 {
                for j in 0..m {
                    c[i * m + j] += x * b[l * m + j];
                }
            }
        }
    }
    c
}

// A^p with a decimal exponent carried separately to avoid overflow.
fn matrix_power(a: &[f64], m: usize, p: usize) -> (Vec<f64>, i32) {
    if p == 1 {
        return (a.to_vec(), 0);
    }
    let (v, ev) = matrix_power(a, m, p / 2);
    let mut b = matmul(&v, &v, m);
    let mut eb = 2 * ev;
    if p % 2 == 1 {
        b = matmul(a, &b, m);
    }
    let centre = (m / 2) * m + m / 2;
    if b[centre] > 1e140 {
        for x in b.iter_mut() {
            *x *= 1e-140;
        }
        eb += 140;
    }
    (b, eb)
}

/// Survival function of the Kolmogorov distribution.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        let pi2 = std::f64::consts::PI.powi(2);
        let s: f64 = (1..=20)
            .map(|j| (-((2 * j - 1) as f64).powi(2) * pi2 / (8.0 * lambda * lambda)).exp())
            .sum();
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0)
    } else {
        let s: f64 = (1..=100)
            .map(|j| {
                let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
                sign * (-2.0 * (j * j) as f64 * lambda * lambda).exp()
            })
            .sum();
        (2.0 * s).clamp(0.0, 1.0)
    }
}

/// Two-sample Kolmogorov–Smirnov test with the asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsResult> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n1, n2) = (x.len() as f64, y.len() as f64);
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < x.len() && j < y.len() {
        let t = x[i].min(y[j]);
        while i < x.len() && x[i] <= t {
            i += 1;
        }
        while j < y.len() && y[j] <= t {
            j += 1;
        }
        d = d.max((i as f64 / n1 - j as f64 / n2).abs());
    }
    let ne = n1 * n2 / (n1 + n2);
    Ok(KsResult { statistic: d, p_value: kolmogorov_survival(ne.sqrt() * d) })
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::Dimension { expected: x.len(), got: y.len() });
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::UndefinedCorrelation);
    }
    Ok((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ThetaCorrelation {
    pub theta: f64,
    pub correlation: f64,
}

/// Correlation between observed records and their expected standardized
/// values, for each `θ` in `grid`.
pub fn theta_diagnostic(records: &RecordSeries, grid: &[f64]) -> Result<Vec<ThetaCorrelation>> {
    diagnostic(records, grid, None)
}

fn diagnostic(records: &RecordSeries, grid: &[f64], decimals: Option<i32>) -> Result<Vec<ThetaCorrelation>> {
    if records.len() < 3 {
        return Err(Error::InsufficientRecords { needed: 3, got: records.len() });
    }
    grid.iter()
        .map(|&theta| {
            let means = (1..=records.len())
                .map(|i| {
                    single_moment(1.0, i, records.k, theta)
                        .map(|m| decimals.map_or(m, |d| crate::round_to(m, d)))
                })
                .collect::<Result<Vec<_>>>()?;
            Ok(ThetaCorrelation { theta, correlation: pearson(&records.values, &means)? })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisOptions {
    pub k: usize,
    /// Fixed `θ`; when absent the diagnostic's best grid value is used.
    pub theta: Option<f64>,
    pub level: f64,
    /// Number of records used for estimation; defaults to all extracted.
    pub n: Option<usize>,
    pub seed: u64,
    pub reps: usize,
    pub theta_grid: Vec<f64>,
    /// Round tabulated quantities to 5 decimals, as in printed tables.
    pub paper_fidelity: bool,
    pub cache_dir: Option<PathBuf>,
}

impl AnalysisOptions {
    pub fn new(k: usize) -> Self {
        AnalysisOptions {
            k,
            theta: None,
            level: 0.95,
            n: None,
            seed: crate::study::DEFAULT_SEED,
            reps: crate::study::DEFAULT_TABLE_REPS,
            theta_grid: THETA_GRID.to_vec(),
            paper_fidelity: false,
            cache_dir: None,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct StageError {
    pub stage: &'static str,
    pub message: String,
}

#[derive(Debug, Clone, Serialize)]
pub struct AnalysisReport {
    pub n_observations: usize,
    pub k: usize,
    pub records: RecordSeries,
    pub n_used: usize,
    pub fit: Option<MleFit>,
    pub ks: Option<KsResult>,
    pub theta_diagnostic: Vec<ThetaCorrelation>,
    pub chosen_theta: f64,
    pub paper_fidelity: bool,
    pub coefficients: BlueCoefficients,
    pub estimates: LinearEstimates,
    pub prediction: PredictionResult,
    /// MSPEs multiplied by `σ*²`.
    pub mspe_blup_data: f64,
    pub mspe_blip_data: f64,
    /// The record following the last one used, when observed.
    pub next_observed: Option<f64>,
    pub level: f64,
    pub pivot_seed: u64,
    pub pivot_reps: usize,
    pub intervals: Vec<Interval>,
    pub stage_errors: Vec<StageError>,
}

const FIDELITY_DECIMALS: i32 = 5;

/// Moments, coefficients and prediction terms for one design, optionally
/// rounded as in printed tables. Rounded `V4` comes from its exact value.
#[derive(Debug, Clone)]
pub struct Model {
    pub setup: PredictionSetup,
    pub coeffs: BlueCoefficients,
    v4: Option<f64>,
}

impl Model {
    pub fn new(n: usize, k: usize, theta: f64, paper_fidelity: bool) -> Result<Self> {
        let setup = PredictionSetup::from_moments(n, k, theta)?;
        let coeffs = blue_coefficients(&setup.table)?;
        if !paper_fidelity {
            return Ok(Model { setup, coeffs, v4: None });
        }
        let v4 = crate::round_to(v4(&setup, &coeffs)?, FIDELITY_DECIMALS);
        Ok(Model {
            setup: setup.rounded(FIDELITY_DECIMALS)?,
            coeffs: coeffs.rounded(FIDELITY_DECIMALS),
            v4: Some(v4),
        })
    }

    pub fn predict(&self, records: &[f64], est: &LinearEstimates) -> Result<PredictionResult> {
        let mut p = predict(&self.setup, &self.coeffs, records, est.mu_blue, est.sigma_blue)?;
        if let Some(v) = self.v4 {
            p.v4 = v;
            p.blip = p.blup - v / (1.0 + self.coeffs.v2) * est.sigma_blue;
        }
        Ok(p)
    }
}

/// Runs extraction, fitting, estimation, prediction and interval
/// construction on one data set.
pub fn analyze(data: &[f64], opts: &AnalysisOptions) -> Result<AnalysisReport> {
    if !(opts.level > 0.0 && opts.level < 1.0) {
        return domain(format!("level must lie in (0, 1), got {}", opts.level));
    }
    let mut stage_errors = Vec::new();
    let mut note = |stage: &'static str, e: Error| stage_errors.push(StageError { stage, message: e.to_string() });

    let records = extract_lower_k_records(data, opts.k)?;
    if records.len() < 2 {
        return Err(Error::InsufficientRecords { needed: 2, got: records.len() });
    }
    let n = opts.n.unwrap_or(records.len());
    if n < 2 || n > records.len() {
        return Err(Error::InsufficientRecords { needed: n.max(2), got: records.len() });
    }
    let used = records.truncated(n)?;

    let (fit, ks) = match fit_mle(data) {
        Ok(f) => match ks_test(data, &f.params) {
            Ok(k) => (Some(f), Some(k)),
            Err(e) => {
                note("goodness_of_fit", e);
                (Some(f), None)
            }
        },
        Err(e) => {
            note("fit", e);
            (None, None)
        }
    };

    let decimals = opts.paper_fidelity.then_some(FIDELITY_DECIMALS);
    let theta_diagnostic = match diagnostic(&records, &opts.theta_grid, decimals) {
        Ok(d) => d,
        Err(e) => {
            if opts.theta.is_none() {
                return Err(e);
            }
            note("theta_diagnostic", e);
            Vec::new()
        }
    };
    let chosen_theta = match opts.theta {
        Some(t) => t,
        None => theta_diagnostic
            .iter()
            .max_by(|a, b| a.correlation.total_cmp(&b.correlation))
            .map(|c| c.theta)
            .ok_or_else(|| Error::Input("empty theta grid".into()))?,
    };

    let model = Model::new(n, opts.k, chosen_theta, opts.paper_fidelity)?;
    let coeffs = model.coeffs.clone();
    let estimates = estimate(&used.values, &coeffs)?;
    let prediction = model.predict(&used.values, &estimates)?;

    let g = 1.0 - opts.level;
    let probs = [g / 2.0, 1.0 - g / 2.0];
    let tables = match &opts.cache_dir {
        Some(dir) => cached_pivot_quantiles(dir, chosen_theta, opts.k, n, opts.reps, &probs, opts.seed),
        None => simulate_all_pivot_quantiles(chosen_theta, opts.k, n, opts.reps, &probs, opts.seed),
    };
    let intervals = match tables {
        Ok(t) => {
            let (ivs, errs) = intervals_from_tables(&estimates, &coeffs, &used.values, &t, opts.level);
            for e in errs {
                note("intervals", e);
            }
            ivs
        }
        Err(e) => {
            note("pivot_tables", e);
            Vec::new()
        }
    };

    let s2 = estimates.sigma_blue * estimates.sigma_blue;
    Ok(AnalysisReport {
        n_observations: data.len(),
        k: opts.k,
        next_observed: records.values.get(n).copied(),
        records,
        n_used: n,
        fit,
        ks,
        theta_diagnostic,
        chosen_theta,
        paper_fidelity: opts.paper_fidelity,
        coefficients: coeffs,
        estimates,
        mspe_blup_data: prediction.mspe_blup * s2,
        mspe_blip_data: prediction.mspe_blip * s2,
        prediction,
        level: opts.level,
        pivot_seed: opts.seed,
        pivot_reps: opts.reps,
        intervals,
        stage_errors,
    })
}

/// All six intervals from tables in [`Pivot::ALL`] order; failures are
/// returned alongside the intervals that could be formed.
pub fn intervals_from_tables(
    est: &LinearEstimates,
    coeffs: &BlueCoefficients,
    records: &[f64],
    tables: &[QuantileTable],
    level: f64,
) -> (Vec<Interval>, Vec<Error>) {
    let mut ivs = Vec::new();
    let mut errs = Vec::new();
    for t in tables {
        let r = match t.pivot {
            Pivot::T1 | Pivot::T3 => ci_location(est, coeffs, t, level),
            Pivot::T2 | Pivot::T4 => ci_scale(est, coeffs, t, level),
            Pivot::T1Star => pi_next_record(records, est.sigma_blue, t, level),
            Pivot::T2Star => pi_next_record(records, est.sigma_blie, t, level),
        };
        match r {
            Ok(i) => ivs.push(i),
            Err(e) => errs.push(e),
        }
    }
    (ivs, errs)
}

/// Reads one observation per line. A non-numeric first line is taken as a
/// header; blank lines and lines starting with `#` are skipped; only the
/// first comma-separated field is used.
pub fn read_data(path: &Path) -> Result<Vec<f64>> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| Error::Input(format!("cannot read {}: {e}", path.display())))?;
    parse_data(&text)
}

pub fn parse_data(text: &str) -> Result<Vec<f64>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let field = line.split(',').next().unwrap_or("").trim().trim_matches('"');
        match field.parse::<f64>() {
            Ok(x) if x.is_finite() => out.push(x),
            _ if out.is_empty() && i == first_content_line(text) => continue,
            _ => return Err(Error::Input(format!("line {}: cannot parse '{field}' as a number", i + 1))),
        }
    }
    if out.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    Ok(out)
}

fn first_content_line(text: &str) -> usize {
    text.lines()
        .position(|l| {
            let l = l.trim();
            !l.is_empty() && !l.starts_with('#')
        })
        .unwrap_or(0)
}

impl fmt::Display for AnalysisReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "observations: {}", self.n_observations)?;
        writeln!(f, "lower {}-records: {:?}", self.k, self.records.values)?;
        if let (Some(fit), Some(ks)) = (&self.fit, &self.ks) {
            writeln!(
                f,
                "fit: alpha = {:.6}, theta = {:.6}; K-S D = {:.5}, p = {:.4}",
                fit.params.alpha(),
                fit.params.theta(),
                ks.statistic,
                ks.p_value
            )?;
        }
        for c in &self.theta_diagnostic {
            writeln!(f, "corr(records, means | theta = {}) = {:.7}", c.theta, c.correlation)?;
        }
        writeln!(f, "theta = {}, records used = {}", self.chosen_theta, self.n_used)?;
        let e = &self.estimates;
        writeln!(f, "BLUE: mu = {:.8}, sigma = {:.8}", e.mu_blue, e.sigma_blue)?;
        writeln!(f, "BLIE: mu = {:.8}, sigma = {:.8}", e.mu_blie, e.sigma_blie)?;
        let p = &self.prediction;
        writeln!(f, "BLUP = {:.8} (MSPE {:.8} sigma^2)", p.blup, p.mspe_blup)?;
        writeln!(f, "BLIP = {:.8} (MSPE {:.8} sigma^2)", p.blip, p.mspe_blip)?;
        if let Some(x) = self.next_observed {
            writeln!(f, "observed next record = {x}")?;
        }
        for iv in &self.intervals {
            writeln!(f, "{} interval ({}): [{:.8}, {:.8}]", iv.pivot, self.level, iv.lower, iv.upper)?;
        }
        for s in &self.stage_errors {
            writeln!(f, "warning [{}]: {}", s.stage, s.message)?;
        }
        Ok(())
    }
}
