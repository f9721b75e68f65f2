//! Lower k-record values: extraction from a data stream, simulation, and the
//! joint density of the first `n` records.
//!
//! The lower k-record sequence of a stream is the sequence of strict
//! decreases of its running k-th smallest value, starting with the k-th
//! smallest of the first `k` observations.

use crate::distribution::UgParams;
use crate::error::{domain, Error, Result};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp};
use serde::Serialize;
use std::cmp::Ordering;
use std::collections::BinaryHeap;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RecordSeries {
    pub k: usize,
    pub values: Vec<f64>,
    /// Position in the source stream at which each record was set.
    /// Empty for simulated series.
    pub source_indices: Vec<usize>,
}

impl RecordSeries {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn last(&self) -> Option<f64> {
        self.values.last().copied()
    }

    /// The first `n` records.
    pub fn truncated(&self, n: usize) -> Result<RecordSeries> {
        if n > self.len() {
            return Err(Error::InsufficientRecords { needed: n, got: self.len() });
        }
        Ok(RecordSeries {
            k: self.k,
            values: self.values[..n].to_vec(),
            source_indices: self.source_indices.iter().take(n).copied().collect(),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Key(f64);

impl Eq for Key {}

impl PartialOrd for Key {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Key {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.total_cmp(&other.0)
    }
}

/// Incremental lower k-record extractor; keeps the `k` smallest values
/// seen so far in a max-heap.
#[derive(Debug, Clone)]
pub struct LowerKRecordTracker {
    k: usize,
    heap: BinaryHeap<Key>,
    seen: usize,
    current: Option<f64>,
}

impl LowerKRecordTracker {
    pub fn new(k: usize) -> Result<Self> {
        if k == 0 {
            return domain("k must be at least 1");
        }
        Ok(Self { k, heap: BinaryHeap::with_capacity(k + 1), seen: 0, current: None })
    }

    /// Feeds one observation; returns the new record value if one was set.
    pub fn push(&mut self, x: f64) -> Result<Option<f64>> {
        if x.is_nan() {
            return domain(format!("observation {} is NaN", self.seen));
        }
        self.seen += 1;
        if self.heap.len() < self.k {
            self.heap.push(Key(x));
            if self.heap.len() == self.k {
                let top = self.heap.peek().expect("k >= 1").0;
                self.current = Some(top);
                return Ok(Some(top));
            }
            return Ok(None);
        }
        let top = self.heap.peek().expect("k >= 1").0;
        if x >= top {
            return Ok(None);
        }
        self.heap.pop();
        self.heap.push(Key(x));
        let new_top = self.heap.peek().expect("k >= 1").0;
        match self.current {
            Some(c) if new_top < c => {
                self.current = Some(new_top);
                Ok(Some(new_top))
            }
            _ => Ok(None),
        }
    }

    /// Number of observations consumed so far.
    pub fn seen(&self) -> usize {
        self.seen
    }
}

pub fn extract_lower_k_records(data: &[f64], k: usize) -> Result<RecordSeries> {
    let mut tracker = LowerKRecordTracker::new(k)?;
    if data.len() < k {
        return Err(Error::InsufficientData { needed: k, got: data.len() });
    }
    let mut values = Vec::new();
    let mut source_indices = Vec::new();
    for (i, &x) in data.iter().enumerate() {
        if let Some(r) = tracker.push(x)? {
            values.push(r);
            source_indices.push(i);
        }
    }
    Ok(RecordSeries { k, values, source_indices })
}

/// Standardized lower k-records `Z_1 > … > Z_n`, using
/// `Z_j = (1 + W_j)^(-1/θ)` where `W_j` is a sum of `j` independent
/// exponentials with rate `k`.
pub fn simulate_standard_records<R: Rng + ?Sized>(
    rng: &mut R,
    k: usize,
    theta: f64,
    n: usize,
) -> Vec<f64> {
    let exp = Exp::new(k as f64).expect("k >= 1");
    let mut w = 0.0;
    (0..n)
        .map(|_| {
            w += exp.sample(rng);
            (1.0 + w).powf(-1.0 / theta)
        })
        .collect()
}

pub fn simulate_k_records(k: usize, n: usize, params: &UgParams, seed: u64) -> Result<RecordSeries> {
    if k == 0 || n == 0 {
        return domain("k and n must be at least 1");
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let values = simulate_standard_records(&mut rng, k, params.theta(), n)
        .into_iter()
        .map(|z| params.mu() + params.sigma() * z)
        .collect();
    Ok(RecordSeries { k, values, source_indices: Vec::new() })
}

/// Log of the joint density of the first `n` lower k-records,
/// `k^n F(r_n)^k Π f(r_i)/F(r_i)`; `-inf` outside the support.
pub fn record_joint_log_density(series: &RecordSeries, params: &UgParams) -> Result<f64> {
    if series.is_empty() {
        return Err(Error::InsufficientRecords { needed: 1, got: 0 });
    }
    let (mu, sigma, theta) = (params.mu(), params.sigma(), params.theta());
    let k = series.k as f64;
    let mut prev = f64::INFINITY;
    let mut acc = 0.0;
    for &r in &series.values {
        let z = (r - mu) / sigma;
        if !(z > 0.0 && z < 1.0) || z >= prev {
            return Ok(f64::NEG_INFINITY);
        }
        prev = z;
        // ln f(z) - ln F(z) = ln θ - (θ + 1) ln z
        acc += theta.ln() - (theta + 1.0) * z.ln() - sigma.ln();
    }
    let zn = prev;
    let n = series.len() as f64;
    Ok(n * k.ln() - k * (zn.powf(-theta) - 1.0) + acc)
}
