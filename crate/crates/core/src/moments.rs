//! Exact moments of standardized lower k-records `Z_n`.
//!
//! Single moments `E[Z_n^r]` and product moments `E[Z_m^r Z_n^s]` are
//! finite alternating sums of upper incomplete gamma functions evaluated
//! at `k`. When a sum cancels badly (more than six decimal digits lost) or
//! a product-moment denominator is near zero, the value is recomputed by
//! adaptive quadrature over the gamma-distributed record "times"
//! `W_n = Z_n^-θ - 1`, and the fallback is reported in [`MomentEval`].

use crate::error::{domain, Error, Result};
use crate::quadrature::integrate;
use crate::special::{binomial, factorial, upper_gamma_scaled, NeumaierSum};
use nalgebra::{DMatrix, DVector};
use statrs::function::gamma::ln_gamma;

/// Largest record index supported.
pub const MAX_RECORD_INDEX: usize = 30;

/// Digits of cancellation above which a closed-form sum is abandoned.
pub const MAX_DIGITS_LOST: f64 = 6.0;

const SINGULAR_DENOMINATOR: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Method {
    ClosedForm,
    Quadrature,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MomentEval {
    pub value: f64,
    /// Digits lost to cancellation in the closed-form sum.
    pub digits_lost: f64,
    pub method: Method,
}

impl MomentEval {
    /// True when the closed form was judged unreliable.
    pub fn ill_conditioned(&self) -> bool {
        self.method == Method::Quadrature
    }
}

fn check_common(k: usize, theta: f64) -> Result<()> {
    if k == 0 {
        return domain("k must be at least 1");
    }
    if !(theta > 0.0) || !theta.is_finite() {
        return domain(format!("theta must be positive, got {theta}"));
    }
    Ok(())
}

fn check_index(n: usize) -> Result<()> {
    if n == 0 || n > MAX_RECORD_INDEX {
        return domain(format!("record index must be in 1..={MAX_RECORD_INDEX}, got {n}"));
    }
    Ok(())
}

fn check_order(r: f64) -> Result<()> {
    if !(r >= 0.0) || !r.is_finite() {
        return domain(format!("moment order must be finite and non-negative, got {r}"));
    }
    Ok(())
}

/// `E[Z_n^r]` for the standardized lower k-record.
pub fn single_moment(r: f64, n: usize, k: usize, theta: f64) -> Result<f64> {
    Ok(single_moment_eval(r, n, k, theta)?.value)
}

pub fn single_moment_eval(r: f64, n: usize, k: usize, theta: f64) -> Result<MomentEval> {
    check_order(r)?;
    check_index(n)?;
    check_common(k, theta)?;
    let kf = k as f64;
    let q = r / theta;
    let ln_pref = -ln_gamma(n as f64);
    let mut sum = NeumaierSum::new();
    for i in 0..n {
        let sign = if (n - i - 1) % 2 == 0 { 1.0 } else { -1.0 };
        let g = upper_gamma_scaled(i as f64 - q + 1.0, kf)?;
        let mag = (ln_pref + (n as f64 + q - i as f64 - 1.0) * kf.ln()).exp();
        sum.add(sign * binomial(n - 1, i) * mag * g);
    }
    let digits_lost = sum.digits_lost();
    if digits_lost > MAX_DIGITS_LOST || !sum.value().is_finite() {
        let value = single_by_quadrature(r, n, k, theta)?;
        return Ok(MomentEval { value, digits_lost, method: Method::Quadrature });
    }
    Ok(MomentEval { value: sum.value(), digits_lost, method: Method::ClosedForm })
}

/// `E[Z_m^r Z_n^s]` for `m < n`.
pub fn product_moment(r: f64, s: f64, m: usize, n: usize, k: usize, theta: f64) -> Result<f64> {
    Ok(product_moment_eval(r, s, m, n, k, theta)?.value)
}

pub fn product_moment_eval(
    r: f64,
    s: f64,
    m: usize,
    n: usize,
    k: usize,
    theta: f64,
) -> Result<MomentEval> {
    check_order(r)?;
    check_order(s)?;
    check_index(m)?;
    check_index(n)?;
    check_common(k, theta)?;
    if m >= n {
        return domain(format!("product moment needs m < n, got m={m}, n={n}"));
    }
    let kf = k as f64;
    let lk = kf.ln();
    let pref = theta * ((n - 1) as f64 * lk).exp() / (factorial(m - 1) * factorial(n - m - 1));
    let (qs, qrs) = (s / theta, (r + s) / theta);
    let mut sum = NeumaierSum::new();
    let mut singular = false;
    'outer: for i in 0..m {
        for j in 0..(n - m) {
            let den = r - theta * (n - 1 - i - j) as f64;
            if den.abs() < SINGULAR_DENOMINATOR {
                singular = true;
                break 'outer;
            }
            let exponent = n - m - 1 - j + i;
            let sign = if exponent % 2 == 0 { 1.0 } else { -1.0 };
            let c = sign * binomial(m - 1, i) * binomial(n - m - 1, j) * pref / den;
            let a1 = j as f64 - qs;
            let t1 = upper_gamma_scaled(a1 + 1.0, kf)? * (-a1 * lk).exp();
            let a2 = (n - i - 1) as f64 - qrs;
            let t2 = upper_gamma_scaled(a2 + 1.0, kf)? * (-a2 * lk).exp();
            sum.add(c * t1);
            sum.add(-c * t2);
        }
    }
    let digits_lost = if singular { f64::INFINITY } else { sum.digits_lost() };
    if singular || digits_lost > MAX_DIGITS_LOST || !sum.value().is_finite() {
        let value = product_by_quadrature(r, s, m, n, k, theta)?;
        return Ok(MomentEval { value, digits_lost, method: Method::Quadrature });
    }
    Ok(MomentEval { value: sum.value(), digits_lost, method: Method::ClosedForm })
}

// Gamma(shape, rate k) density of W, mapped from t in [0, 1) by w = t/(1-t).
fn gamma_weight(shape: usize, k: f64, t: f64) -> (f64, f64) {
    if t >= 1.0 {
        return (f64::INFINITY, 0.0);
    }
    let w = t / (1.0 - t);
    if w == 0.0 {
        let d = if shape == 1 { k } else { 0.0 };
        return (0.0, d);
    }
    let ln_d = shape as f64 * k.ln() + (shape as f64 - 1.0) * w.ln() - k * w - ln_gamma(shape as f64);
    (w, ln_d.exp() / ((1.0 - t) * (1.0 - t)))
}

fn single_by_quadrature(r: f64, n: usize, k: usize, theta: f64) -> Result<f64> {
    let kf = k as f64;
    integrate(
        |t| {
            let (w, d) = gamma_weight(n, kf, t);
            if d == 0.0 {
                0.0
            } else {
                (1.0 + w).powf(-r / theta) * d
            }
        },
        0.0,
        1.0,
        1e-14,
        1e-12,
    )
}

fn product_by_quadrature(r: f64, s: f64, m: usize, n: usize, k: usize, theta: f64) -> Result<f64> {
    let kf = k as f64;
    let mut failure: Option<Error> = None;
    let v = integrate(
        |t| {
            let (u, du) = gamma_weight(m, kf, t);
            if du == 0.0 {
                return 0.0;
            }
            let inner = integrate(
                |tv| {
                    let (v, dv) = gamma_weight(n - m, kf, tv);
                    if dv == 0.0 {
                        0.0
                    } else {
                        (1.0 + u + v).powf(-s / theta) * dv
                    }
                },
                0.0,
                1.0,
                1e-14,
                1e-12,
            );
            match inner {
                Ok(x) => (1.0 + u).powf(-r / theta) * du * x,
                Err(e) => {
                    failure.get_or_insert(e);
                    0.0
                }
            }
        },
        0.0,
        1.0,
        1e-13,
        1e-11,
    )?;
    match failure {
        Some(e) => Err(e),
        None => Ok(v),
    }
}

/// Mean and variance of `Z_n`.
pub fn mean_and_variance(n: usize, k: usize, theta: f64) -> Result<(f64, f64)> {
    let m1 = single_moment(1.0, n, k, theta)?;
    let m2 = single_moment(2.0, n, k, theta)?;
    Ok((m1, m2 - m1 * m1))
}

/// `Cov(Z_m, Z_n)`; symmetric in `m` and `n`.
pub fn covariance(m: usize, n: usize, k: usize, theta: f64) -> Result<f64> {
    let (m, n) = if m <= n { (m, n) } else { (n, m) };
    if m == n {
        return Ok(mean_and_variance(n, k, theta)?.1);
    }
    let p = product_moment(1.0, 1.0, m, n, k, theta)?;
    Ok(p - single_moment(1.0, m, k, theta)? * single_moment(1.0, n, k, theta)?)
}

/// Means `α` and covariance matrix `B` of `(Z_1, …, Z_n)`.
#[derive(Debug, Clone, PartialEq)]
pub struct MomentTable {
    pub theta: f64,
    pub k: usize,
    pub alpha: DVector<f64>,
    pub b: DMatrix<f64>,
}

impl MomentTable {
    pub fn n(&self) -> usize {
        self.alpha.len()
    }

    /// Copy with every entry rounded to `decimals` places.
    pub fn rounded(&self, decimals: i32) -> MomentTable {
        MomentTable {
            theta: self.theta,
            k: self.k,
            alpha: self.alpha.map(|x| crate::round_to(x, decimals)),
            b: self.b.map(|x| crate::round_to(x, decimals)),
        }
    }

    /// Leading `n x n` block.
    pub fn leading(&self, n: usize) -> Result<MomentTable> {
        if n == 0 || n > self.n() {
            return Err(Error::Dimension { expected: self.n(), got: n });
        }
        Ok(MomentTable {
            theta: self.theta,
            k: self.k,
            alpha: self.alpha.rows(0, n).into_owned(),
            b: self.b.view((0, 0), (n, n)).into_owned(),
        })
    }
}

pub fn build_moment_table(n: usize, k: usize, theta: f64) -> Result<MomentTable> {
    check_index(n)?;
    check_common(k, theta)?;
    let means = (1..=n)
        .map(|i| single_moment(1.0, i, k, theta))
        .collect::<Result<Vec<_>>>()?;
    let mut b = DMatrix::zeros(n, n);
    for i in 0..n {
        let m2 = single_moment(2.0, i + 1, k, theta)?;
        b[(i, i)] = m2 - means[i] * means[i];
        for j in (i + 1)..n {
            let p = product_moment(1.0, 1.0, i + 1, j + 1, k, theta)?;
            let c = p - means[i] * means[j];
            b[(i, j)] = c;
            b[(j, i)] = c;
        }
    }
    if b.clone().cholesky().is_none() {
        return Err(Error::Conditioning(format!(
            "covariance matrix for n={n}, k={k}, theta={theta} is not positive definite"
        )));
    }
    Ok(MomentTable { theta, k, alpha: DVector::from_vec(means), b })
}

/// `E[Z_n^(r+θ)] - (θk/r) (E[Z_(n-1)^r] - E[Z_n^r])`, which vanishes
/// identically for `n >= 2`, `r > 0`.
pub fn single_recurrence_residual(r: f64, n: usize, k: usize, theta: f64) -> Result<f64> {
    if n < 2 || !(r > 0.0) {
        return domain("single-moment recurrence needs n >= 2 and r > 0");
    }
    let lhs = single_moment(r + theta, n, k, theta)?;
    let rhs = theta * k as f64 / r
        * (single_moment(r, n - 1, k, theta)? - single_moment(r, n, k, theta)?);
    Ok(lhs - rhs)
}

/// `E[Z_m^r Z_n^(s+θ)] - (θk/s) (E[Z_m^r Z_(n-1)^s] - E[Z_m^r Z_n^s])`,
/// which vanishes identically for `n - 1 > m >= 1`, `s > 0`.
pub fn product_recurrence_residual(
    r: f64,
    s: f64,
    m: usize,
    n: usize,
    k: usize,
    theta: f64,
) -> Result<f64> {
    if m < 1 || n <= m + 1 || !(s > 0.0) {
        return domain("product-moment recurrence needs n - 1 > m >= 1 and s > 0");
    }
    let lhs = product_moment(r, s + theta, m, n, k, theta)?;
    let rhs = theta * k as f64 / s
        * (product_moment(r, s, m, n - 1, k, theta)? - product_moment(r, s, m, n, k, theta)?);
    Ok(lhs - rhs)
}
