//! Prediction of the next record `R_(n+1)` from the first `n`.
//!
//! `ω` holds `Cov(Z_i, Z_(n+1))`, `i = 1..n`. All mean squared prediction
//! errors are in units of `σ²`.

use crate::error::{Error, Result};
use crate::estimation::{factorize, BlueCoefficients};
use crate::moments::{build_moment_table, MomentTable};
use nalgebra::DVector;
use serde::Serialize;

#[derive(Debug, Clone)]
pub struct PredictionSetup {
    pub table: MomentTable,
    pub alpha_next: f64,
    pub var_next: f64,
    pub omega: DVector<f64>,
    binv_omega: DVector<f64>,
}

impl PredictionSetup {
    pub fn new(table: MomentTable, alpha_next: f64, var_next: f64, omega: DVector<f64>) -> Result<Self> {
        if omega.len() != table.n() {
            return Err(Error::Dimension { expected: table.n(), got: omega.len() });
        }
        let binv_omega = factorize(&table)?.solve(&omega);
        Ok(Self { table, alpha_next, var_next, omega, binv_omega })
    }

    /// Splits the moment table of `(Z_1, …, Z_(n+1))`.
    pub fn from_table(full: &MomentTable) -> Result<Self> {
        let n = full.n().checked_sub(1).filter(|&n| n >= 1).ok_or(Error::InsufficientRecords {
            needed: 2,
            got: full.n(),
        })?;
        if factorize(full).is_err() {
            return Err(Error::Conditioning(
                "bordered covariance matrix is not positive definite".into(),
            ));
        }
        if !(full.alpha[n] < full.alpha[n - 1]) {
            return Err(Error::Conditioning(
                "mean of the next record is not below the last mean".into(),
            ));
        }
        let omega = full.b.view((0, n), (n, 1)).column(0).into_owned();
        Self::new(full.leading(n)?, full.alpha[n], full.b[(n, n)], omega)
    }

    pub fn from_moments(n: usize, k: usize, theta: f64) -> Result<Self> {
        Self::from_table(&build_moment_table(n + 1, k, theta)?)
    }

    pub fn n(&self) -> usize {
        self.table.n()
    }

    /// Copy with every moment rounded to `decimals` places.
    pub fn rounded(&self, decimals: i32) -> Result<Self> {
        let r = |x: f64| crate::round_to(x, decimals);
        Self::new(
            self.table.rounded(decimals),
            r(self.alpha_next),
            r(self.var_next),
            self.omega.map(r),
        )
    }

    fn terms(&self) -> (f64, f64, f64) {
        let w1 = self.binv_omega.sum();
        let wa = self.binv_omega.dot(&self.table.alpha);
        let ww = self.binv_omega.dot(&self.omega);
        (w1, wa, ww)
    }

    fn check(&self, coeffs: &BlueCoefficients) -> Result<()> {
        if coeffs.n() != self.n() {
            return Err(Error::Dimension { expected: self.n(), got: coeffs.n() });
        }
        Ok(())
    }
}

/// Best linear unbiased predictor of `R_(n+1)`.
pub fn blup(setup: &PredictionSetup, records: &[f64], mu_star: f64, sigma_star: f64) -> Result<f64> {
    if records.len() != setup.n() {
        return Err(Error::Dimension { expected: setup.n(), got: records.len() });
    }
    let resid: f64 = records
        .iter()
        .zip(setup.table.alpha.iter())
        .zip(setup.binv_omega.iter())
        .map(|((r, a), w)| w * (r - mu_star - sigma_star * a))
        .sum();
    Ok(mu_star + setup.alpha_next * sigma_star + resid)
}

pub fn mspe_blup(setup: &PredictionSetup, coeffs: &BlueCoefficients) -> Result<f64> {
    setup.check(coeffs)?;
    let (w1, wa, ww) = setup.terms();
    let (p, q) = (1.0 - w1, setup.alpha_next - wa);
    Ok(p * p * coeffs.v1 + q * q * coeffs.v2 - ww + 2.0 * p * q * coeffs.v3 + setup.var_next)
}

/// `Cov(σ*, R*_(n+1) - R_(n+1)) / σ²`.
pub fn v4(setup: &PredictionSetup, coeffs: &BlueCoefficients) -> Result<f64> {
    setup.check(coeffs)?;
    let (w1, wa, _) = setup.terms();
    Ok((1.0 - w1) * coeffs.v3 + (setup.alpha_next - wa) * coeffs.v2)
}

pub fn mspe_blip(setup: &PredictionSetup, coeffs: &BlueCoefficients) -> Result<f64> {
    setup.check(coeffs)?;
    let (w1, wa, ww) = setup.terms();
    let g = &coeffs.gls;
    let delta = (g.alpha_alpha + 1.0) * g.one_one - g.alpha_one * g.alpha_one;
    let (p, q) = (1.0 - w1, setup.alpha_next - wa);
    Ok((g.alpha_alpha + 1.0) / delta * p * p + g.one_one / delta * q * q - ww
        - 2.0 * g.alpha_one / delta * p * q
        + setup.var_next)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PredictionResult {
    pub blup: f64,
    pub blip: f64,
    pub v4: f64,
    pub mspe_blup: f64,
    pub mspe_blip: f64,
    /// `MSPE(BLUP) / MSPE(BLIP)`.
    pub rec: f64,
}

/// BLUP and best linear invariant predictor (BLIP) with their MSPEs.
pub fn predict(
    setup: &PredictionSetup,
    coeffs: &BlueCoefficients,
    records: &[f64],
    mu_star: f64,
    sigma_star: f64,
) -> Result<PredictionResult> {
    let blup = blup(setup, records, mu_star, sigma_star)?;
    let v4 = v4(setup, coeffs)?;
    let mspe_blup = mspe_blup(setup, coeffs)?;
    let mspe_blip = mspe_blip(setup, coeffs)?;
    Ok(PredictionResult {
        blup,
        blip: blup - v4 / (1.0 + coeffs.v2) * sigma_star,
        v4,
        mspe_blup,
        mspe_blip,
        rec: mspe_blup / mspe_blip,
    })
}
