//! Independent oracles shared by the integration tests.
//!
//! Nothing here calls into the library's numerical routines: record moments
//! are integrated directly against the record densities in the original
//! variable with tanh-sinh quadrature, and Γ(a, x) is integrated from its
//! definition.

#![allow(dead_code)]

use std::collections::HashMap;
use std::f64::consts::FRAC_PI_2;
use std::path::PathBuf;

/// Tanh-sinh quadrature of `f` over `(a, b)`; `f` is never evaluated at the
/// endpoints.
pub fn tanh_sinh<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, rel_tol: f64) -> f64 {
    let w = b - a;
    let tmax = 3.6;
    let term = |t: f64| -> f64 {
        let u = FRAC_PI_2 * t.sinh();
        let s = 1.0 / (1.0 + (2.0 * u).exp());
        let ch = u.cosh();
        let wt = 0.5 * w * FRAC_PI_2 * t.cosh() / (ch * ch);
        if t == 0.0 {
            return wt * f(a + 0.5 * w);
        }
        let mut acc = 0.0;
        let d = w * s;
        if d > 0.0 {
            let (xl, xr) = (a + d, b - d);
            if xl > a && xl < b {
                acc += f(xl);
            }
            if xr > a && xr < b {
                acc += f(xr);
            }
        }
        wt * acc
    };
    let mut h = 0.5;
    let mut sum: f64 = (0..=(tmax / h) as usize).map(|j| term(j as f64 * h)).sum();
    let mut prev = sum * h;
    for _ in 0..9 {
        h /= 2.0;
        let n = (tmax / h) as usize;
        sum += (1..=n).step_by(2).map(|j| term(j as f64 * h)).sum::<f64>();
        let cur = sum * h;
        if (cur - prev).abs() <= rel_tol * cur.abs() {
            return cur;
        }
        prev = cur;
    }
    prev
}

fn ln_factorial(n: usize) -> f64 {
    (1..=n).map(|i| (i as f64).ln()).sum()
}

/// `-ln F(z)` for the standard parent.
fn cum_hazard(z: f64, theta: f64) -> f64 {
    z.powf(-theta) - 1.0
}

fn pow_ln(e: usize, x: f64) -> f64 {
    if e == 0 {
        0.0
    } else {
        e as f64 * x.ln()
    }
}

/// Density of the `n`-th standardized lower k-record at `z`.
pub fn record_density(z: f64, n: usize, k: usize, theta: f64) -> f64 {
    let h = cum_hazard(z, theta);
    let kf = k as f64;
    let ln = n as f64 * kf.ln() - ln_factorial(n - 1) + pow_ln(n - 1, h) + theta.ln()
        - (theta + 1.0) * z.ln()
        - kf * h;
    ln.exp()
}

/// Joint density of records `m < n` at `(x, y)`, `y < x`.
pub fn joint_record_density(x: f64, y: f64, m: usize, n: usize, k: usize, theta: f64) -> f64 {
    let (hx, hy) = (cum_hazard(x, theta), cum_hazard(y, theta));
    let kf = k as f64;
    let ln = n as f64 * kf.ln() - ln_factorial(m - 1) - ln_factorial(n - m - 1)
        + pow_ln(m - 1, hx)
        + pow_ln(n - m - 1, hy - hx)
        + 2.0 * theta.ln()
        - (theta + 1.0) * (x.ln() + y.ln())
        - kf * hy;
    ln.exp()
}

pub fn oracle_single_moment(r: f64, n: usize, k: usize, theta: f64) -> f64 {
    tanh_sinh(|z| z.powf(r) * record_density(z, n, k, theta), 0.0, 1.0, 1e-14)
}

/// `E[Z_m^r Z_n^s]`, `m < n`.
pub fn oracle_product_moment(r: f64, s: f64, m: usize, n: usize, k: usize, theta: f64) -> f64 {
    tanh_sinh(
        |x| {
            let inner = tanh_sinh(
                |y| y.powf(s) * joint_record_density(x, y, m, n, k, theta),
                0.0,
                x,
                1e-13,
            );
            x.powf(r) * inner
        },
        0.0,
        1.0,
        1e-12,
    )
}

/// `Γ(a, x)` for `x > 0` straight from the integral definition.
pub fn oracle_upper_gamma(a: f64, x: f64) -> f64 {
    let c = x.min(1.0);
    let i = tanh_sinh(
        |u| {
            let v = c * u / (1.0 - u);
            let jac = c / ((1.0 - u) * (1.0 - u));
            ((a - 1.0) * (x + v).ln() - v).exp() * jac
        },
        0.0,
        1.0,
        1e-15,
    );
    (-x).exp() * i
}

/// Lower k-records by recomputing the k-th smallest of every prefix.
pub fn brute_force_records(data: &[f64], k: usize) -> (Vec<f64>, Vec<usize>) {
    let mut vals = Vec::new();
    let mut idx = Vec::new();
    for t in k..=data.len() {
        let mut p = data[..t].to_vec();
        p.sort_by(f64::total_cmp);
        let kth = p[k - 1];
        if vals.last().is_none_or(|&last: &f64| kth < last) {
            vals.push(kth);
            idx.push(t - 1);
        }
    }
    (vals, idx)
}

/// K-S distance evaluated at all `2n` one-sided limits of the empirical cdf.
pub fn brute_force_ks<F: Fn(f64) -> f64>(data: &[f64], cdf: F) -> f64 {
    let n = data.len() as f64;
    let mut d = 0.0f64;
    for &x in data {
        let le = data.iter().filter(|&&y| y <= x).count() as f64 / n;
        let lt = data.iter().filter(|&&y| y < x).count() as f64 / n;
        let f = cdf(x);
        d = d.max((le - f).abs()).max((lt - f).abs());
    }
    d
}

/// A reference table transcribed from print.
pub struct Fixture {
    pub header: Vec<String>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl Fixture {
    pub fn load(name: &str) -> Fixture {
        let path = fixture_path(name);
        let mut rdr = csv::Reader::from_path(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
        let header = rdr.headers().unwrap().iter().map(str::to_string).collect();
        let rows = rdr
            .records()
            .map(|r| {
                r.unwrap()
                    .iter()
                    .map(|c| if c.trim().is_empty() { None } else { Some(c.trim().parse().unwrap()) })
                    .collect()
            })
            .collect();
        Fixture { header, rows }
    }

    pub fn col(&self, name: &str) -> usize {
        self.header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))
    }

    pub fn get(&self, row: usize, name: &str) -> Option<f64> {
        self.rows[row][self.col(name)]
    }

    /// Rows as `column -> value` maps.
    pub fn records(&self) -> Vec<HashMap<String, f64>> {
        self.rows
            .iter()
            .map(|r| {
                self.header
                    .iter()
                    .zip(r)
                    .filter_map(|(h, v)| v.map(|v| (h.clone(), v)))
                    .collect()
            })
            .collect()
    }

    /// Index of the row whose key columns equal `keys`.
    pub fn find(&self, keys: &[(&str, f64)]) -> Option<usize> {
        (0..self.rows.len()).find(|&i| keys.iter().all(|(c, v)| self.get(i, c) == Some(*v)))
    }
}

pub fn fixture_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("tests").join("fixtures").join(name)
}

pub fn covid_data() -> Vec<f64> {
    let f = Fixture::load("covid_andorra.csv");
    f.rows.iter().map(|r| r[0].unwrap()).collect()
}

/// 99% band for a quantile at `p` when both our sample (`sorted`) and the
/// reference were estimated from samples of the same size.
pub fn two_sample_quantile_band(sorted: &[f64], p: f64) -> (f64, f64) {
    let n = sorted.len() as f64;
    let half = 2.576 * 2f64.sqrt() * (p * (1.0 - p) / n).sqrt();
    let lo = ((p - half) * n).floor().max(0.0) as usize;
    let hi = (((p + half) * n).ceil() as usize).min(sorted.len() - 1);
    (sorted[lo], sorted[hi])
}

pub fn mean_var(x: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let m = x.iter().sum::<f64>() / n;
    let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1.0);
    (m, v)
}
