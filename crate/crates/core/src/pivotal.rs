//! Pivotal quantities, their simulated quantiles, and the resulting
//! confidence intervals for `μ`, `σ` and prediction intervals for the next
//! record.
//!
//! All six pivots are computed from one shared stream of replications:
//! replication `i` draws its records from a ChaCha8 generator seeded with
//! the table seed and switched to stream `i`, so results do not depend on
//! thread scheduling.

use crate::error::{domain, Error, Result};
use crate::estimation::{blie_from_blue, blue_coefficients, BlueCoefficients, LinearEstimates};
use crate::moments::build_moment_table;
use crate::records::simulate_standard_records;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

pub const DEFAULT_PROBS: [f64; 4] = [0.025, 0.05, 0.95, 0.975];

/// Smallest simulation size accepted for a quantile table.
pub const MIN_TABLE_REPS: usize = 1000;

const PROB_TOL: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Pivot {
    T1,
    T2,
    T3,
    T4,
    T1Star,
    T2Star,
}

impl Pivot {
    pub const ALL: [Pivot; 6] = [Pivot::T1, Pivot::T2, Pivot::T3, Pivot::T4, Pivot::T1Star, Pivot::T2Star];

    pub fn name(self) -> &'static str {
        match self {
            Pivot::T1 => "T1",
            Pivot::T2 => "T2",
            Pivot::T3 => "T3",
            Pivot::T4 => "T4",
            Pivot::T1Star => "T1star",
            Pivot::T2Star => "T2star",
        }
    }

    fn index(self) -> usize {
        Pivot::ALL.iter().position(|&p| p == self).expect("listed")
    }
}

impl fmt::Display for Pivot {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Pivot {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        Pivot::ALL
            .into_iter()
            .find(|p| p.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| Error::Input(format!("unknown pivot '{s}'")))
    }
}

/// Standardized estimates from one simulated replication.
#[derive(Debug, Clone)]
pub(crate) struct Replication {
    /// `Z_1, …, Z_(n+1)`.
    pub z: Vec<f64>,
    pub mu_blue: f64,
    pub sigma_blue: f64,
    pub mu_blie: f64,
    pub sigma_blie: f64,
}

pub(crate) fn replicate(coeffs: &BlueCoefficients, k: usize, seed: u64, rep: u64) -> Replication {
    let n = coeffs.n();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(rep);
    let z = simulate_standard_records(&mut rng, k, coeffs.theta, n + 1);
    let mu: f64 = coeffs.a.iter().zip(&z).map(|(a, z)| a * z).sum();
    let sigma: f64 = coeffs.b.iter().zip(&z).map(|(b, z)| b * z).sum();
    let (mu_t, sigma_t) = blie_from_blue(mu, sigma, coeffs);
    Replication { z, mu_blue: mu, sigma_blue: sigma, mu_blie: mu_t, sigma_blie: sigma_t }
}

pub(crate) fn pivot_values(c: &BlueCoefficients, r: &Replication) -> [f64; 6] {
    let d = 1.0 + c.v2;
    let n = c.n();
    let step = r.z[n] - r.z[n - 1];
    [
        r.mu_blue / (r.sigma_blue * c.v1.sqrt()),
        (r.sigma_blue - 1.0) / c.v2.sqrt(),
        r.mu_blie / (r.sigma_blie * c.blie_mu_scale()),
        (r.sigma_blie - 1.0) / (c.v2.sqrt() / d),
        step / r.sigma_blue,
        step / r.sigma_blie,
    ]
}

/// Raw simulated draws of every pivot.
#[derive(Debug, Clone)]
pub struct PivotSamples {
    pub k: usize,
    pub theta: f64,
    pub n: usize,
    pub seed: u64,
    samples: [Vec<f64>; 6],
    /// Replications in which `σ*` was not positive (retained).
    pub nonpositive_sigma: usize,
}

impl PivotSamples {
    pub fn get(&self, pivot: Pivot) -> &[f64] {
        &self.samples[pivot.index()]
    }

    pub fn reps(&self) -> usize {
        self.samples[0].len()
    }
}

fn check_design(theta: f64, k: usize, n: usize, reps: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::InsufficientRecords { needed: 2, got: n });
    }
    if k == 0 || !(theta > 0.0) || !theta.is_finite() {
        return domain(format!("need k >= 1 and theta > 0, got k={k}, theta={theta}"));
    }
    if reps < MIN_TABLE_REPS {
        return domain(format!("need at least {MIN_TABLE_REPS} replications, got {reps}"));
    }
    Ok(())
}

pub fn simulate_pivot_samples(theta: f64, k: usize, n: usize, reps: usize, seed: u64) -> Result<PivotSamples> {
    check_design(theta, k, n, reps)?;
    let coeffs = blue_coefficients(&build_moment_table(n, k, theta)?)?;
    let rows: Vec<([f64; 6], bool)> = (0..reps as u64)
        .into_par_iter()
        .map(|rep| {
            let r = replicate(&coeffs, k, seed, rep);
            (pivot_values(&coeffs, &r), r.sigma_blue <= 0.0)
        })
        .collect();
    let mut samples: [Vec<f64>; 6] = Default::default();
    for s in samples.iter_mut() {
        s.reserve(reps);
    }
    let mut nonpositive_sigma = 0;
    for (vals, bad) in rows {
        for (s, v) in samples.iter_mut().zip(vals) {
            s.push(v);
        }
        nonpositive_sigma += bad as usize;
    }
    Ok(PivotSamples { k, theta, n, seed, samples, nonpositive_sigma })
}

/// Type-7 (linear interpolation) sample quantile of sorted data.
pub fn type7_quantile(sorted: &[f64], p: f64) -> f64 {
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuantileTable {
    pub pivot: Pivot,
    pub k: usize,
    pub theta: f64,
    pub n: usize,
    pub reps: usize,
    pub seed: u64,
    pub probs: Vec<f64>,
    pub quantiles: Vec<f64>,
}

#[derive(Debug, Serialize, Deserialize)]
struct QuantileRow {
    pivot: String,
    k: usize,
    theta: f64,
    n: usize,
    reps: usize,
    seed: u64,
    prob: f64,
    quantile: f64,
}

impl QuantileTable {
    pub fn from_samples(samples: &PivotSamples, pivot: Pivot, probs: &[f64]) -> Result<Self> {
        if let Some(p) = probs.iter().find(|p| !(**p > 0.0 && **p < 1.0)) {
            return domain(format!("quantile probability must lie in (0, 1), got {p}"));
        }
        let mut v = samples.get(pivot).to_vec();
        v.sort_by(f64::total_cmp);
        Ok(QuantileTable {
            pivot,
            k: samples.k,
            theta: samples.theta,
            n: samples.n,
            reps: samples.reps(),
            seed: samples.seed,
            probs: probs.to_vec(),
            quantiles: probs.iter().map(|&p| type7_quantile(&v, p)).collect(),
        })
    }

    /// Table built from externally supplied quantiles.
    pub fn from_values(pivot: Pivot, k: usize, theta: f64, n: usize, probs: &[f64], quantiles: &[f64]) -> Result<Self> {
        if probs.len() != quantiles.len() {
            return Err(Error::Dimension { expected: probs.len(), got: quantiles.len() });
        }
        Ok(QuantileTable {
            pivot,
            k,
            theta,
            n,
            reps: 0,
            seed: 0,
            probs: probs.to_vec(),
            quantiles: quantiles.to_vec(),
        })
    }

    pub fn quantile(&self, p: f64) -> Result<f64> {
        self.probs
            .iter()
            .position(|&q| (q - p).abs() <= PROB_TOL)
            .map(|i| self.quantiles[i])
            .ok_or(Error::MissingQuantile(p))
    }

    pub fn cache_path(dir: &Path, pivot: Pivot, k: usize, theta: f64, n: usize) -> PathBuf {
        dir.join("pivots").join(format!("{pivot}_{k}_{theta}_{n}.csv"))
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent)?;
        }
        let mut w = csv::Writer::from_path(path)?;
        for (&prob, &quantile) in self.probs.iter().zip(&self.quantiles) {
            w.serialize(QuantileRow {
                pivot: self.pivot.to_string(),
                k: self.k,
                theta: self.theta,
                n: self.n,
                reps: self.reps,
                seed: self.seed,
                prob,
                quantile,
            })?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(path)?;
        let rows = r.deserialize::<QuantileRow>().collect::<std::result::Result<Vec<_>, _>>()?;
        let first = rows
            .first()
            .ok_or_else(|| Error::Input(format!("{} has no quantile rows", path.display())))?;
        let pivot: Pivot = first.pivot.parse()?;
        if rows.iter().any(|r| {
            r.pivot != first.pivot || r.k != first.k || r.theta != first.theta || r.n != first.n
        }) {
            return Err(Error::Input(format!("{} mixes several designs", path.display())));
        }
        Ok(QuantileTable {
            pivot,
            k: first.k,
            theta: first.theta,
            n: first.n,
            reps: first.reps,
            seed: first.seed,
            probs: rows.iter().map(|r| r.prob).collect(),
            quantiles: rows.iter().map(|r| r.quantile).collect(),
        })
    }

    fn check_design(&self, coeffs: &BlueCoefficients) -> Result<()> {
        if self.k != coeffs.k || (self.theta - coeffs.theta).abs() > 1e-12 || self.n != coeffs.n() {
            return Err(Error::TableMismatch {
                table_k: self.k,
                table_theta: self.theta,
                table_n: self.n,
                k: coeffs.k,
                theta: coeffs.theta,
                n: coeffs.n(),
            });
        }
        Ok(())
    }

    fn tails(&self, level: f64) -> Result<(f64, f64)> {
        if !(level > 0.0 && level < 1.0) {
            return domain(format!("confidence level must lie in (0, 1), got {level}"));
        }
        let g = 1.0 - level;
        Ok((self.quantile(g / 2.0)?, self.quantile(1.0 - g / 2.0)?))
    }
}

pub fn simulate_pivot_quantiles(
    pivot: Pivot,
    theta: f64,
    k: usize,
    n: usize,
    reps: usize,
    probs: &[f64],
    seed: u64,
) -> Result<QuantileTable> {
    QuantileTable::from_samples(&simulate_pivot_samples(theta, k, n, reps, seed)?, pivot, probs)
}

/// Quantile tables of all six pivots, in [`Pivot::ALL`] order.
pub fn simulate_all_pivot_quantiles(
    theta: f64,
    k: usize,
    n: usize,
    reps: usize,
    probs: &[f64],
    seed: u64,
) -> Result<Vec<QuantileTable>> {
    let s = simulate_pivot_samples(theta, k, n, reps, seed)?;
    Pivot::ALL.iter().map(|&p| QuantileTable::from_samples(&s, p, probs)).collect()
}

/// Like [`simulate_all_pivot_quantiles`], reusing CSV files under
/// `dir/pivots/` when they hold the same design, seed, size and probabilities.
pub fn cached_pivot_quantiles(
    dir: &Path,
    theta: f64,
    k: usize,
    n: usize,
    reps: usize,
    probs: &[f64],
    seed: u64,
) -> Result<Vec<QuantileTable>> {
    let paths: Vec<PathBuf> = Pivot::ALL
        .iter()
        .map(|&p| QuantileTable::cache_path(dir, p, k, theta, n))
        .collect();
    let cached: Option<Vec<QuantileTable>> = paths
        .iter()
        .map(|p| QuantileTable::read_csv(p).ok())
        .collect::<Option<Vec<_>>>()
        .filter(|ts| {
            ts.iter().all(|t| {
                t.reps == reps && t.seed == seed && probs.iter().all(|&p| t.quantile(p).is_ok())
            })
        });
    if let Some(ts) = cached {
        return Ok(ts);
    }
    let ts = simulate_all_pivot_quantiles(theta, k, n, reps, probs, seed)?;
    for (t, p) in ts.iter().zip(&paths) {
        t.write_csv(p)?;
    }
    Ok(ts)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Target {
    Mu,
    Sigma,
    NextRecord,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Interval {
    pub pivot: Pivot,
    pub target: Target,
    pub level: f64,
    pub lower: f64,
    pub upper: f64,
    /// Bounds as given by the inversion formula, before ordering.
    pub raw: (f64, f64),
}

impl Interval {
    fn new(pivot: Pivot, target: Target, level: f64, raw: (f64, f64)) -> Self {
        Interval {
            pivot,
            target,
            level,
            lower: raw.0.min(raw.1),
            upper: raw.0.max(raw.1),
            raw,
        }
    }

    pub fn length(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, x: f64) -> bool {
        self.lower <= x && x <= self.upper
    }
}

/// Confidence interval for `μ` from `T1` (BLUE) or `T3` (BLIE).
pub fn ci_location(
    est: &LinearEstimates,
    coeffs: &BlueCoefficients,
    table: &QuantileTable,
    level: f64,
) -> Result<Interval> {
    table.check_design(coeffs)?;
    let (lo, hi) = table.tails(level)?;
    let (centre, scale) = match table.pivot {
        Pivot::T1 => (est.mu_blue, est.sigma_blue * coeffs.v1.sqrt()),
        Pivot::T3 => (est.mu_blie, est.sigma_blie * coeffs.blie_mu_scale()),
        p => return Err(Error::WrongPivot { pivot: p.to_string(), target: "a location interval" }),
    };
    Ok(Interval::new(table.pivot, Target::Mu, level, (centre - scale * hi, centre - scale * lo)))
}

/// Confidence interval for `σ` from `T2` (BLUE) or `T4` (BLIE).
pub fn ci_scale(
    est: &LinearEstimates,
    coeffs: &BlueCoefficients,
    table: &QuantileTable,
    level: f64,
) -> Result<Interval> {
    table.check_design(coeffs)?;
    let (lo, hi) = table.tails(level)?;
    let (est_sigma, s) = match table.pivot {
        Pivot::T2 => (est.sigma_blue, coeffs.v2.sqrt()),
        Pivot::T4 => (est.sigma_blie, coeffs.v2.sqrt() / (1.0 + coeffs.v2)),
        p => return Err(Error::WrongPivot { pivot: p.to_string(), target: "a scale interval" }),
    };
    let bound = |q: f64| {
        let d = 1.0 + s * q;
        if d > 0.0 {
            Ok(est_sigma / d)
        } else {
            Err(Error::UndefinedBound(q))
        }
    };
    Ok(Interval::new(table.pivot, Target::Sigma, level, (bound(hi)?, bound(lo)?)))
}

/// Prediction interval for `R_(n+1)` from `T1*` (with `σ*`) or `T2*`
/// (with `σ̃`).
pub fn pi_next_record(records: &[f64], sigma_estimate: f64, table: &QuantileTable, level: f64) -> Result<Interval> {
    if !matches!(table.pivot, Pivot::T1Star | Pivot::T2Star) {
        return Err(Error::WrongPivot { pivot: table.pivot.to_string(), target: "a prediction interval" });
    }
    if records.len() != table.n {
        return Err(Error::Dimension { expected: table.n, got: records.len() });
    }
    let (lo, hi) = table.tails(level)?;
    let last = records[records.len() - 1];
    Ok(Interval::new(
        table.pivot,
        Target::NextRecord,
        level,
        (last + sigma_estimate * lo, last + sigma_estimate * hi),
    ))
}
