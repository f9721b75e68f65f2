//! Best linear unbiased (BLUE) and best linear invariant (BLIE) estimation
//! of location `μ` and scale `σ` from the first `n` lower k-records.
//!
//! With `R = μ 1 + σ α + σ ε`, `Cov(ε) = B`, generalized least squares gives
//! `μ* = Σ a_i R_i`, `σ* = Σ b_i R_i` and
//! `Var(μ*) = σ² V1`, `Var(σ*) = σ² V2`, `Cov(μ*, σ*) = σ² V3`.

use crate::error::{Error, Result};
use crate::moments::MomentTable;
use nalgebra::{Cholesky, DVector, Dyn};
use serde::Serialize;

/// The three quadratic forms `αᵀB⁻¹α`, `1ᵀB⁻¹1`, `αᵀB⁻¹1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GlsScalars {
    pub alpha_alpha: f64,
    pub one_one: f64,
    pub alpha_one: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BlueCoefficients {
    pub k: usize,
    pub theta: f64,
    pub a: Vec<f64>,
    pub b: Vec<f64>,
    pub v1: f64,
    pub v2: f64,
    pub v3: f64,
    pub gls: GlsScalars,
}

impl BlueCoefficients {
    pub fn n(&self) -> usize {
        self.a.len()
    }

    /// Copy with `a`, `b` and `V1..V3` rounded to `decimals` places.
    pub fn rounded(&self, decimals: i32) -> Self {
        let r = |x: f64| crate::round_to(x, decimals);
        BlueCoefficients {
            a: self.a.iter().map(|&x| r(x)).collect(),
            b: self.b.iter().map(|&x| r(x)).collect(),
            v1: r(self.v1),
            v2: r(self.v2),
            v3: r(self.v3),
            ..self.clone()
        }
    }

    /// Standard-deviation factor of the BLIE of `μ`, in units of `σ`.
    pub fn blie_mu_scale(&self) -> f64 {
        blie_variances(self).0.sqrt()
    }
}

pub(crate) fn factorize(table: &MomentTable) -> Result<Cholesky<f64, Dyn>> {
    table.b.clone().cholesky().ok_or_else(|| {
        Error::Conditioning(format!(
            "covariance matrix (n={}, k={}, theta={}) is not positive definite",
            table.n(),
            table.k,
            table.theta
        ))
    })
}

pub fn blue_coefficients(table: &MomentTable) -> Result<BlueCoefficients> {
    let n = table.n();
    if n < 2 {
        return Err(Error::InsufficientRecords { needed: 2, got: n });
    }
    let chol = factorize(table)?;
    let ones = DVector::from_element(n, 1.0);
    let x = chol.solve(&table.alpha);
    let y = chol.solve(&ones);
    let aa = table.alpha.dot(&x);
    let oo = ones.dot(&y);
    let ao = table.alpha.dot(&y);
    let delta = aa * oo - ao * ao;
    if !(delta > 1e-12 * aa * oo) {
        return Err(Error::Conditioning(format!(
            "design is nearly collinear (n={n}, k={}, theta={})",
            table.k, table.theta
        )));
    }
    let a = (&y * aa - &x * ao) / delta;
    let b = (&x * oo - &y * ao) / delta;
    Ok(BlueCoefficients {
        k: table.k,
        theta: table.theta,
        a: a.iter().copied().collect(),
        b: b.iter().copied().collect(),
        v1: aa / delta,
        v2: oo / delta,
        v3: -ao / delta,
        gls: GlsScalars { alpha_alpha: aa, one_one: oo, alpha_one: ao },
    })
}

/// `(μ*, σ*)` from the first `n` records.
pub fn blue_estimate(records: &[f64], coeffs: &BlueCoefficients) -> Result<(f64, f64)> {
    if records.len() != coeffs.n() {
        return Err(Error::Dimension { expected: coeffs.n(), got: records.len() });
    }
    let dot = |w: &[f64]| w.iter().zip(records).map(|(w, r)| w * r).sum::<f64>();
    Ok((dot(&coeffs.a), dot(&coeffs.b)))
}

// (Var μ̃, Var σ̃, Cov) / σ²
fn blie_variances(c: &BlueCoefficients) -> (f64, f64, f64) {
    let d = 1.0 + c.v2;
    (
        c.v1 - c.v3 * c.v3 * (2.0 + c.v2) / (d * d),
        c.v2 / (d * d),
        c.v3 / (d * d),
    )
}

/// BLIEs `(μ̃, σ̃)` obtained from the BLUEs.
pub fn blie_from_blue(mu_star: f64, sigma_star: f64, coeffs: &BlueCoefficients) -> (f64, f64) {
    let d = 1.0 + coeffs.v2;
    (mu_star - coeffs.v3 / d * sigma_star, sigma_star / d)
}

/// Point estimates with their variances and covariances in units of `σ²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LinearEstimates {
    pub mu_blue: f64,
    pub sigma_blue: f64,
    pub mu_blie: f64,
    pub sigma_blie: f64,
    pub var_mu_blue: f64,
    pub var_sigma_blue: f64,
    pub cov_blue: f64,
    pub var_mu_blie: f64,
    pub var_sigma_blie: f64,
    pub cov_blie: f64,
}

pub fn estimate(records: &[f64], coeffs: &BlueCoefficients) -> Result<LinearEstimates> {
    let (mu_blue, sigma_blue) = blue_estimate(records, coeffs)?;
    let (mu_blie, sigma_blie) = blie_from_blue(mu_blue, sigma_blue, coeffs);
    let (var_mu_blie, var_sigma_blie, cov_blie) = blie_variances(coeffs);
    Ok(LinearEstimates {
        mu_blue,
        sigma_blue,
        mu_blie,
        sigma_blie,
        var_mu_blue: coeffs.v1,
        var_sigma_blue: coeffs.v2,
        cov_blue: coeffs.v3,
        var_mu_blie,
        var_sigma_blie,
        cov_blie,
    })
}

/// MSE of the BLUE divided by MSE of the BLIE, for `μ` and `σ`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RelativeEfficiency {
    pub mu: f64,
    pub sigma: f64,
}

pub fn relative_efficiency(coeffs: &BlueCoefficients) -> RelativeEfficiency {
    let d = 1.0 + coeffs.v2;
    RelativeEfficiency {
        mu: coeffs.v1 / (coeffs.v1 - coeffs.v3 * coeffs.v3 / d),
        sigma: d,
    }
}
