//! Variance-matched Student-t data-generating process and its analytic VaR.

use serde::{Deserialize, Serialize};

use crate::calibration::ReturnSeries;
use crate::distributions::{sample_student_t, student_t_quantile, Seed, StudentTParams};
use crate::error::{Error, Result};

/// Student-t return law whose variance equals the nominal Gaussian variance.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrueModel {
    pub nu: f64,
    pub mu_star: f64,
    pub s_nu: f64,
}

impl TrueModel {
    pub fn variance_matched(nu: f64, mu_hat: f64, sigma_hat: f64) -> Result<Self> {
        let s_nu = variance_matched_scale(nu, sigma_hat)?;
        if !mu_hat.is_finite() {
            return Err(Error::domain(format!("location must be finite, got {mu_hat}")));
        }
        Ok(Self {
            nu,
            mu_star: mu_hat,
            s_nu,
        })
    }

    pub fn variance(&self) -> f64 {
        self.s_nu * self.s_nu * self.nu / (self.nu - 2.0)
    }

    pub fn params(&self) -> StudentTParams {
        StudentTParams {
            nu: self.nu,
            loc: self.mu_star,
            scale: self.s_nu,
        }
    }

    pub fn var(&self, alpha: f64) -> Result<f64> {
        true_var(self.mu_star, self.s_nu, self.nu, alpha)
    }
}

/// `s_nu = sigma_hat * sqrt((nu - 2) / nu)`.
pub fn variance_matched_scale(nu: f64, sigma_hat: f64) -> Result<f64> {
    if !(nu > 2.0) {
        return Err(Error::domain(format!(
            "variance matching needs nu > 2, got {nu}"
        )));
    }
    if !(sigma_hat > 0.0 && sigma_hat.is_finite()) {
        return Err(Error::domain(format!("sigma_hat must be positive, got {sigma_hat}")));
    }
    Ok(sigma_hat * ((nu - 2.0) / nu).sqrt())
}

pub fn sample_true_returns(model: &TrueModel, t_count: usize, seed: Seed) -> Result<ReturnSeries> {
    if t_count < 2 {
        return Err(Error::InsufficientData {
            needed: 2,
            got: t_count,
        });
    }
    let params = StudentTParams::new(model.nu, model.mu_star, model.s_nu)?;
    Ok(ReturnSeries::new(sample_student_t(params, t_count, seed)?))
}

/// `x*_alpha = -(mu_hat + s_nu * t_{nu, 1-alpha})`.
pub fn true_var(mu_hat: f64, s_nu: f64, nu: f64, alpha: f64) -> Result<f64> {
    let t = student_t_quantile(nu, 1.0 - alpha)?;
    Ok(-(mu_hat + s_nu * t))
}
