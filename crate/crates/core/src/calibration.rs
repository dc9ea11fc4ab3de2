//! Log-returns, Gaussian maximum-likelihood fit, and the closed-form Gaussian
//! VaR used as the pilot for importance sampling.

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::distributions::normal_quantile;
use crate::error::{Error, Result};

/// Daily closing prices indexed by trading day.
#[derive(Debug, Clone, PartialEq)]
pub struct PriceSeries {
    dates: Vec<NaiveDate>,
    closes: Vec<f64>,
}

impl PriceSeries {
    pub fn new(dates: Vec<NaiveDate>, closes: Vec<f64>) -> Result<Self> {
        if dates.len() != closes.len() {
            return Err(Error::domain(format!(
                "{} dates but {} closes",
                dates.len(),
                closes.len()
            )));
        }
        if closes.len() < 2 {
            return Err(Error::InsufficientData {
                needed: 2,
                got: closes.len(),
            });
        }
        if let Some(i) = closes.iter().position(|c| !(*c > 0.0 && c.is_finite())) {
            return Err(Error::domain(format!(
                "close at position {i} must be positive, got {}",
                closes[i]
            )));
        }
        if let Some(w) = dates.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::domain(format!(
                "dates must be strictly increasing ({} followed by {})",
                dates[w],
                dates[w + 1]
            )));
        }
        Ok(Self { dates, closes })
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn closes(&self) -> &[f64] {
        &self.closes
    }

    pub fn len(&self) -> usize {
        self.closes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.closes.is_empty()
    }
}

/// One-day log-returns `R_t`.
#[derive(Debug, Clone, PartialEq)]
pub struct ReturnSeries(Vec<f64>);

impl ReturnSeries {
    pub fn new(values: Vec<f64>) -> Self {
        ReturnSeries(values)
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Losses `L_t = -R_t`.
    pub fn losses(&self) -> Vec<f64> {
        self.0.iter().map(|r| -r).collect()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

/// Gaussian nominal return model `R ~ N(mu_hat, sigma_hat^2)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NominalModel {
    pub mu_hat: f64,
    pub sigma_hat: f64,
    /// Calibration sample size, `None` when the model was configured directly.
    pub sample_size: Option<usize>,
}

impl NominalModel {
    pub fn new(mu_hat: f64, sigma_hat: f64) -> Result<Self> {
        if !mu_hat.is_finite() {
            return Err(Error::domain(format!("mu_hat must be finite, got {mu_hat}")));
        }
        if !(sigma_hat > 0.0 && sigma_hat.is_finite()) {
            return Err(Error::DegenerateVariance);
        }
        Ok(Self {
            mu_hat,
            sigma_hat,
            sample_size: None,
        })
    }

    /// Mean of the loss `L = -R`.
    pub fn loss_mean(&self) -> f64 {
        -self.mu_hat
    }
}

/// `R_t = ln(S_t / S_{t-1})` over adjacent rows.
pub fn log_returns(prices: &PriceSeries) -> ReturnSeries {
    ReturnSeries(
        prices
            .closes
            .windows(2)
            .map(|w| (w[1] / w[0]).ln())
            .collect(),
    )
}

/// Gaussian MLE with the `1/T` variance normalization.
pub fn fit_gaussian_mle(returns: &ReturnSeries) -> Result<NominalModel> {
    let xs = returns.values();
    if xs.is_empty() {
        return Err(Error::InsufficientData { needed: 2, got: 0 });
    }
    if let Some(x) = xs.iter().find(|x| !x.is_finite()) {
        return Err(Error::domain(format!("non-finite return {x}")));
    }
    let t = xs.len() as f64;
    let mu_hat = xs.iter().sum::<f64>() / t;
    let var = xs.iter().map(|r| (r - mu_hat).powi(2)).sum::<f64>() / t;
    // A single return has sigma_hat = 0 under the 1/T normalization.
    if !(var > 0.0) || xs.iter().all(|&x| x == xs[0]) {
        return Err(Error::DegenerateVariance);
    }
    Ok(NominalModel {
        mu_hat,
        sigma_hat: var.sqrt(),
        sample_size: Some(xs.len()),
    })
}

/// Closed-form Gaussian VaR `x0 = -(mu_hat + sigma_hat * z_{1-alpha})`.
pub fn gaussian_var(model: &NominalModel, alpha: f64) -> Result<f64> {
    let z = normal_quantile(1.0 - alpha)
        .map_err(|_| Error::domain(format!("alpha must lie in (0, 1), got {alpha}")))?;
    Ok(-(model.mu_hat + model.sigma_hat * z))
}
