//! The unit-Gompertz family.
//!
//! Standardized form on `(0, 1)`: `F(z) = exp(-(z^-θ - 1))`. The location-scale
//! form is `X = μ + σ Z`; the two-parameter form used for fitting data is
//! `F(x) = exp(-α (x^-θ - 1))` on `(0, 1)`.

use crate::error::{domain, Error, Result};
use crate::special::NeumaierSum;
use rand::distr::Open01;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

/// Location-scale unit-Gompertz parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UgParams {
    mu: f64,
    sigma: f64,
    theta: f64,
}

impl UgParams {
    pub fn new(mu: f64, sigma: f64, theta: f64) -> Result<Self> {
        if !mu.is_finite() {
            return domain(format!("mu must be finite, got {mu}"));
        }
        if !(sigma > 0.0) || !sigma.is_finite() {
            return domain(format!("sigma must be positive, got {sigma}"));
        }
        check_theta(theta)?;
        Ok(Self { mu, sigma, theta })
    }

    pub fn standard(theta: f64) -> Result<Self> {
        Self::new(0.0, 1.0, theta)
    }

    pub fn mu(&self) -> f64 {
        self.mu
    }
    pub fn sigma(&self) -> f64 {
        self.sigma
    }
    pub fn theta(&self) -> f64 {
        self.theta
    }

    fn standardize(&self, x: f64) -> f64 {
        (x - self.mu) / self.sigma
    }

    /// Density. At the upper endpoint the left limit `θ/σ` is returned.
    pub fn pdf(&self, x: f64) -> f64 {
        let z = self.standardize(x);
        if !(z > 0.0) || z > 1.0 {
            return 0.0;
        }
        let lf = self.theta.ln() - (self.theta + 1.0) * z.ln() - (z.powf(-self.theta) - 1.0);
        lf.exp() / self.sigma
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let z = self.standardize(x);
        if z <= 0.0 {
            0.0
        } else if z >= 1.0 {
            1.0
        } else {
            (-(z.powf(-self.theta) - 1.0)).exp()
        }
    }

    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return domain(format!("quantile probability must lie in (0, 1), got {u}"));
        }
        Ok(self.mu + self.sigma * standard_quantile(self.theta, u))
    }

    /// `n` i.i.d. draws from a ChaCha8 stream seeded with `seed`.
    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        self.sample_with(&mut rng, n)
    }

    pub fn sample_with<R: Rng + ?Sized>(&self, rng: &mut R, n: usize) -> Vec<f64> {
        (0..n)
            .map(|_| {
                let u: f64 = rng.sample(Open01);
                self.mu + self.sigma * standard_quantile(self.theta, u)
            })
            .collect()
    }
}

fn check_theta(theta: f64) -> Result<()> {
    if !(theta > 0.0) || !theta.is_finite() {
        return domain(format!("theta must be positive, got {theta}"));
    }
    Ok(())
}

pub(crate) fn standard_quantile(theta: f64, u: f64) -> f64 {
    (1.0 - u.ln()).powf(-1.0 / theta)
}

/// Two-parameter unit-Gompertz `F(x) = exp(-α (x^-θ - 1))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct UgTwoParam {
    alpha: f64,
    theta: f64,
}

impl UgTwoParam {
    pub fn new(alpha: f64, theta: f64) -> Result<Self> {
        if !(alpha > 0.0) || !alpha.is_finite() {
            return domain(format!("alpha must be positive, got {alpha}"));
        }
        check_theta(theta)?;
        Ok(Self { alpha, theta })
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }
    pub fn theta(&self) -> f64 {
        self.theta
    }

    pub fn cdf(&self, x: f64) -> f64 {
        if x <= 0.0 {
            0.0
        } else if x >= 1.0 {
            1.0
        } else {
            (-self.alpha * (x.powf(-self.theta) - 1.0)).exp()
        }
    }

    pub fn pdf(&self, x: f64) -> f64 {
        if !(x > 0.0) || x > 1.0 {
            return 0.0;
        }
        (self.alpha.ln() + self.theta.ln() - (self.theta + 1.0) * x.ln()
            - self.alpha * (x.powf(-self.theta) - 1.0))
            .exp()
    }

    pub fn quantile(&self, u: f64) -> Result<f64> {
        if !(u > 0.0 && u < 1.0) {
            return domain(format!("quantile probability must lie in (0, 1), got {u}"));
        }
        Ok((1.0 - u.ln() / self.alpha).powf(-1.0 / self.theta))
    }

    pub fn sample(&self, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| {
                let u: f64 = rng.sample(Open01);
                (1.0 - u.ln() / self.alpha).powf(-1.0 / self.theta)
            })
            .collect()
    }

    pub fn log_likelihood(&self, data: &[f64]) -> f64 {
        log_likelihood(data, self.alpha, self.theta)
    }
}

fn log_likelihood(data: &[f64], alpha: f64, theta: f64) -> f64 {
    let n = data.len() as f64;
    let mut s = NeumaierSum::new();
    for &x in data {
        let lx = x.ln();
        s.add(-(theta + 1.0) * lx - alpha * ((-theta * lx).exp() - 1.0));
    }
    n * (alpha.ln() + theta.ln()) + s.value()
}

/// Result of a maximum-likelihood fit of the two-parameter form.
#[derive(Debug, Clone, Serialize)]
pub struct MleFit {
    pub params: UgTwoParam,
    pub log_likelihood: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
}

struct Derivs {
    ll: f64,
    g: [f64; 2],
    h: [[f64; 2]; 2],
}

fn derivs(data: &[f64], alpha: f64, theta: f64) -> Derivs {
    let n = data.len() as f64;
    let (mut s0, mut s1, mut s2, mut sl) = (
        NeumaierSum::new(),
        NeumaierSum::new(),
        NeumaierSum::new(),
        NeumaierSum::new(),
    );
    for &x in data {
        let lx = x.ln();
        let p = (-theta * lx).exp();
        s0.add(p - 1.0);
        s1.add(p * lx);
        s2.add(p * lx * lx);
        sl.add(lx);
    }
    let (s0, s1, s2, sl) = (s0.value(), s1.value(), s2.value(), sl.value());
    Derivs {
        ll: n * (alpha.ln() + theta.ln()) - (theta + 1.0) * sl - alpha * s0,
        g: [n / alpha - s0, n / theta - sl + alpha * s1],
        h: [[-n / (alpha * alpha), s1], [s1, -n / (theta * theta) - alpha * s2]],
    }
}

/// Maximum-likelihood fit of `(α, θ)` by damped Newton iterations in
/// `(ln α, ln θ)`, started from the best point of a coarse profile grid.
pub fn fit_mle(data: &[f64]) -> Result<MleFit> {
    if data.len() < 2 {
        return Err(Error::InsufficientData { needed: 2, got: data.len() });
    }
    if let Some(x) = data.iter().find(|x| !(**x > 0.0 && **x < 1.0)) {
        return domain(format!("observations must lie in (0, 1), got {x}"));
    }
    let n = data.len() as f64;
    let profile_alpha = |theta: f64| {
        let s: NeumaierSum = data.iter().map(|x| x.powf(-theta) - 1.0).collect();
        n / s.value()
    };
    let mut best = (f64::NEG_INFINITY, 1.0, 1.0);
    for i in 0..=60 {
        let theta = (0.01f64.ln() + (1000.0f64.ln() - 0.01f64.ln()) * i as f64 / 60.0).exp();
        let alpha = profile_alpha(theta);
        if alpha.is_finite() && alpha > 0.0 {
            let ll = log_likelihood(data, alpha, theta);
            if ll > best.0 {
                best = (ll, alpha, theta);
            }
        }
    }
    let (mut alpha, mut theta) = (best.1, best.2);
    let max_iter = 200;
    for it in 0..max_iter {
        let d = derivs(data, alpha, theta);
        let gnorm = d.g[0].hypot(d.g[1]);
        if gnorm <= 1e-8 {
            return Ok(MleFit {
                params: UgTwoParam::new(alpha, theta)?,
                log_likelihood: d.ll,
                gradient_norm: gnorm,
                iterations: it,
            });
        }
        // gradient and Hessian in u = (ln α, ln θ)
        let gu = [alpha * d.g[0], theta * d.g[1]];
        let huu = [
            [alpha * alpha * d.h[0][0] + gu[0], alpha * theta * d.h[0][1]],
            [alpha * theta * d.h[1][0], theta * theta * d.h[1][1] + gu[1]],
        ];
        let det = huu[0][0] * huu[1][1] - huu[0][1] * huu[1][0];
        let mut step = if huu[0][0] < 0.0 && det > 0.0 {
            [
                -(huu[1][1] * gu[0] - huu[0][1] * gu[1]) / det,
                -(-huu[1][0] * gu[0] + huu[0][0] * gu[1]) / det,
            ]
        } else {
            gu
        };
        let len = step[0].hypot(step[1]);
        if len > 1.0 {
            step = [step[0] / len, step[1] / len];
        }
        let slope = gu[0] * step[0] + gu[1] * step[1];
        let mut t = 1.0;
        let mut moved = false;
        while t > 1e-12 {
            let a1 = alpha * (t * step[0]).exp();
            let th1 = theta * (t * step[1]).exp();
            let ll1 = log_likelihood(data, a1, th1);
            if ll1.is_finite() && ll1 >= d.ll + 1e-4 * t * slope {
                alpha = a1;
                theta = th1;
                moved = true;
                break;
            }
            t *= 0.5;
        }
        if !moved || !alpha.is_finite() || !theta.is_finite() || theta > 1e6 {
            return Err(Error::Optimization {
                iterations: it,
                gradient_norm: gnorm,
                alpha,
                theta,
            });
        }
    }
    let d = derivs(data, alpha, theta);
    Err(Error::Optimization {
        iterations: max_iter,
        gradient_norm: d.g[0].hypot(d.g[1]),
        alpha,
        theta,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn endpoint_values() {
        let p = UgParams::standard(1.5).unwrap();
        assert_eq!(p.cdf(0.0), 0.0);
        assert_eq!(p.cdf(1.0), 1.0);
        assert_eq!(p.pdf(0.0), 0.0);
        assert!((p.pdf(1.0) - 1.5).abs() < 1e-15);
        assert_eq!(p.pdf(1.0 + 1e-12), 0.0);
        assert!((p.cdf(0.5) - (-(2f64.powf(1.5) - 1.0)).exp()).abs() < 1e-15);
    }

    #[test]
    fn invalid_parameters() {
        assert!(UgParams::new(0.0, 0.0, 1.0).is_err());
        assert!(UgParams::new(0.0, 1.0, -1.0).is_err());
        assert!(UgParams::new(f64::NAN, 1.0, 1.0).is_err());
        assert!(UgTwoParam::new(0.0, 1.0).is_err());
        let p = UgParams::standard(2.0).unwrap();
        assert!(p.quantile(0.0).is_err());
        assert!(p.quantile(1.0).is_err());
    }

    #[test]
    fn two_param_reduces_to_standard() {
        let a = UgTwoParam::new(1.0, 2.5).unwrap();
        let b = UgParams::standard(2.5).unwrap();
        for &x in &[0.1, 0.4, 0.9] {
            assert!((a.cdf(x) - b.cdf(x)).abs() < 1e-15);
            assert!((a.pdf(x) - b.pdf(x)).abs() < 1e-13);
        }
    }

    #[test]
    fn sampling_is_reproducible() {
        let p = UgParams::new(2.0, 3.0, 0.75).unwrap();
        let a = p.sample(100, 9);
        assert_eq!(a, p.sample(100, 9));
        assert!(a.iter().all(|&x| x > 2.0 && x < 5.0));
    }
}
