//! Special functions: the upper incomplete gamma function for real order,
//! the exponential integral, factorials and compensated summation.

use crate::error::{domain, Error, Result};
use statrs::function::gamma::{gamma, ln_gamma};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;
const MAX_ITER: usize = 10_000;

// zeta(2) .. zeta(10)
const ZETA: [f64; 9] = [
    1.644_934_066_848_226_4,
    1.202_056_903_159_594_3,
    1.082_323_233_711_138_2,
    1.036_927_755_143_369_9,
    1.017_343_061_984_449_1,
    1.008_349_277_381_922_8,
    1.004_077_356_197_944_3,
    1.002_008_392_826_082_2,
    1.000_994_575_127_818_1,
];

/// Upper incomplete gamma function `Γ(a, x) = ∫_x^∞ t^(a-1) e^(-t) dt`
/// for any real order `a` and `x > 0`.
///
/// Uses the Lentz continued fraction whenever `x >= 1` and `x >= a + 1`,
/// the regularized lower series for `a >= 1/2`, and otherwise an expansion
/// about the nearest integer order followed by downward recurrence.
pub fn upper_gamma(a: f64, x: f64) -> Result<f64> {
    if !a.is_finite() {
        return domain(format!("incomplete gamma order must be finite, got {a}"));
    }
    if !(x > 0.0) || !x.is_finite() {
        return domain(format!("incomplete gamma argument must be positive and finite, got {x}"));
    }
    let v = if x >= 1.0 && x >= a + 1.0 {
        continued_fraction(a, x)?
    } else if a >= 0.5 {
        series_complement(a, x)?
    } else {
        small_x(a, x)?
    };
    if !v.is_finite() {
        return Err(Error::Conditioning(format!(
            "incomplete gamma Γ({a}, {x}) is not representable"
        )));
    }
    Ok(v)
}

/// `e^x Γ(a, x)`, which stays representable for large `x`.
pub fn upper_gamma_scaled(a: f64, x: f64) -> Result<f64> {
    if x >= 1.0 && x >= a + 1.0 && a.is_finite() && x.is_finite() {
        let v = continued_fraction_raw(a, x)? * (a * x.ln()).exp();
        if !v.is_finite() {
            return Err(Error::Conditioning(format!(
                "scaled incomplete gamma at ({a}, {x}) is not representable"
            )));
        }
        return Ok(v);
    }
    Ok(upper_gamma(a, x)? * x.exp())
}

/// Exponential integral `E1(x) = Γ(0, x)`.
pub fn exp_integral_e1(x: f64) -> Result<f64> {
    upper_gamma(0.0, x)
}

fn continued_fraction(a: f64, x: f64) -> Result<f64> {
    Ok((a * x.ln() - x).exp() * continued_fraction_raw(a, x)?)
}

// Lentz evaluation of the continued fraction for e^x x^-a Γ(a, x).
fn continued_fraction_raw(a: f64, x: f64) -> Result<f64> {
    let tiny = 1e-300;
    let mut b = x + 1.0 - a;
    let mut c = 1.0 / tiny;
    let mut d = 1.0 / b;
    let mut h = d;
    for i in 1..MAX_ITER {
        let an = -(i as f64) * (i as f64 - a);
        b += 2.0;
        d = an * d + b;
        if d.abs() < tiny {
            d = tiny;
        }
        c = b + an / c;
        if c.abs() < tiny {
            c = tiny;
        }
        d = 1.0 / d;
        let delta = d * c;
        h *= delta;
        if (delta - 1.0).abs() < 1e-16 {
            return Ok(h);
        }
    }
    Err(Error::Conditioning(format!(
        "continued fraction for Γ({a}, {x}) did not converge"
    )))
}

fn series_complement(a: f64, x: f64) -> Result<f64> {
    let mut ap = a;
    let mut term = 1.0 / a;
    let mut sum = term;
    for _ in 0..MAX_ITER {
        ap += 1.0;
        term *= x / ap;
        sum += term;
        if term.abs() < sum.abs() * 1e-17 {
            let p = sum * (a * x.ln() - x - ln_gamma(a)).exp();
            return Ok(ln_gamma(a).exp() * (1.0 - p));
        }
    }
    Err(Error::Conditioning(format!(
        "lower series for Γ({a}, {x}) did not converge"
    )))
}

fn small_x(a: f64, x: f64) -> Result<f64> {
    let shift = a.round();
    let a0 = a - shift;
    let mut g = near_zero_order(a0, x)?;
    let steps = (-shift) as i64;
    let lx = x.ln();
    for j in 1..=steps {
        let b = a0 - j as f64;
        g = (g - (b * lx - x).exp()) / b;
    }
    Ok(g)
}

// Γ(a, x) for |a| <= 1/2:
//   (Γ(1+a) - 1)/a - (x^a - 1)/a - Σ_{n≥1} (-1)^n x^(a+n) / (n! (a+n))
fn near_zero_order(a: f64, x: f64) -> Result<f64> {
    let lx = x.ln();
    let t1 = gamma_one_plus_minus_one_over(a);
    let t2 = if a == 0.0 || a * lx == 0.0 {
        lx
    } else {
        (a * lx).exp_m1() / a
    };
    let xa = (a * lx).exp();
    let mut tail = NeumaierSum::new();
    let mut pow = 1.0;
    for n in 1..200 {
        pow *= -x / n as f64;
        let term = xa * pow / (a + n as f64);
        tail.add(term);
        if term.abs() < 1e-17 * tail.value().abs() {
            return Ok(t1 - t2 - tail.value());
        }
    }
    Err(Error::Conditioning(format!(
        "small-order expansion for Γ({a}, {x}) did not converge"
    )))
}

// (Γ(1+a) - 1) / a, continuous at a = 0.
fn gamma_one_plus_minus_one_over(a: f64) -> f64 {
    if a == 0.0 {
        return -EULER_GAMMA;
    }
    if a.abs() >= 0.1 {
        return (gamma(1.0 + a) - 1.0) / a;
    }
    // ln Γ(1+a) = -γ a + Σ_{k≥2} (-1)^k ζ(k) a^k / k
    let mut l = -EULER_GAMMA * a;
    let mut p = -a;
    for k in 2..=30usize {
        p *= -a;
        let z = if k <= 10 {
            ZETA[k - 2]
        } else {
            (1..=12).map(|j| (j as f64).powi(-(k as i32))).sum()
        };
        l += z * p / k as f64;
    }
    l.exp_m1() / a
}

const FACTORIALS: [u64; 21] = {
    let mut t = [1u64; 21];
    let mut i = 1;
    while i < 21 {
        t[i] = t[i - 1] * i as u64;
        i += 1;
    }
    t
};

/// `n!`, exact for `n <= 20`.
pub fn factorial(n: usize) -> f64 {
    if n <= 20 {
        FACTORIALS[n] as f64
    } else {
        ln_gamma(n as f64 + 1.0).exp()
    }
}

/// Binomial coefficient, exact for `n <= 20`.
pub fn binomial(n: usize, k: usize) -> f64 {
    if k > n {
        return 0.0;
    }
    if n <= 20 {
        return (FACTORIALS[n] / FACTORIALS[k] / FACTORIALS[n - k]) as f64;
    }
    (ln_gamma(n as f64 + 1.0) - ln_gamma(k as f64 + 1.0) - ln_gamma((n - k) as f64 + 1.0))
        .exp()
        .round()
}

/// Neumaier compensated sum that also tracks the largest term, so the
/// number of decimal digits lost to cancellation can be reported.
#[derive(Debug, Clone, Copy, Default)]
pub struct NeumaierSum {
    sum: f64,
    comp: f64,
    max_abs: f64,
}

impl NeumaierSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
        self.max_abs = self.max_abs.max(x.abs());
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }

    /// `log10(max |term| / |sum|)`, infinite when the sum cancels to zero.
    pub fn digits_lost(&self) -> f64 {
        let v = self.value().abs();
        if self.max_abs == 0.0 {
            0.0
        } else if v == 0.0 {
            f64::INFINITY
        } else {
            (self.max_abs / v).log10().max(0.0)
        }
    }
}

impl std::iter::FromIterator<f64> for NeumaierSum {
    fn from_iter<I: IntoIterator<Item = f64>>(iter: I) -> Self {
        let mut s = NeumaierSum::new();
        for x in iter {
            s.add(x);
        }
        s
    }
}
