//! Browser bindings for the static demo page in `www/`.
//!
//! Each export returns a JSON string; the plain `*_json` functions hold the
//! logic so they can be tested natively.

use serde::Serialize;
use tailvar::calibration::{gaussian_var, NominalModel};
use tailvar::distributions::Seed;
use tailvar::dmm::{build_grid, cdf_envelope, moment_sweep, nominal_moments, FrontierBreak, MomentSourceSetting};
use tailvar::importance_sampling::{solve_var_bisection, ProposalSample, TiltedProposal, VarSolveOptions};
use tailvar::truth::TrueModel;
use wasm_bindgen::prelude::*;

const MAX_ORDER: usize = 20;
const MAX_SAMPLES: usize = 200_000;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

#[derive(Serialize)]
struct Bracket {
    d: usize,
    lower: f64,
    upper: f64,
}

#[derive(Serialize)]
struct DmmView {
    brackets: Vec<Bracket>,
    d_star: usize,
    frontier: Option<String>,
    /// Envelope at `d_star`.
    x: Vec<f64>,
    cdf_lower: Vec<f64>,
    cdf_upper: Vec<f64>,
    gaussian_var: f64,
}

pub fn dmm_sweep_json(mu: f64, sigma: f64, alpha: f64, d_max: usize, analytic: bool, seed: u64) -> Result<String, String> {
    if !(1..=MAX_ORDER).contains(&d_max) {
        return Err(format!("moment order must be between 1 and {MAX_ORDER}"));
    }
    let model = NominalModel::new(mu, sigma).map_err(err)?;
    let grid = build_grid(&model, 200, 8.0).map_err(err)?;
    let source = if analytic {
        MomentSourceSetting::Analytic
    } else {
        MomentSourceSetting::Sampled { n: 100_000 }
    };
    let mv = nominal_moments(&model, d_max, source, Seed(seed)).map_err(err)?;
    let sweep = moment_sweep(&grid, &mv, alpha, d_max).map_err(err)?;
    let d_star = sweep.d_star.ok_or("no feasible moment order")?;
    let env = cdf_envelope(&grid, &mv.prefix(d_star)).map_err(err)?;
    let view = DmmView {
        brackets: sweep
            .feasible_brackets()
            .map(|b| Bracket {
                d: b.moment_order,
                lower: b.lower,
                upper: b.upper,
            })
            .collect(),
        d_star,
        frontier: sweep.frontier.map(|f| match f {
            FrontierBreak::Infeasible { order, .. } => format!("order {order} infeasible"),
            FrontierBreak::NumericalFailure { order, .. } => format!("order {order} numerically unstable"),
        }),
        x: env.thresholds,
        cdf_lower: env.lower,
        cdf_upper: env.upper,
        gaussian_var: gaussian_var(&model, alpha).map_err(err)?,
    };
    serde_json::to_string(&view).map_err(err)
}

#[derive(Serialize)]
struct IsView {
    x: Vec<f64>,
    p_hat: Vec<f64>,
    target: f64,
    var: f64,
    pilot_var: f64,
    iterations: usize,
    ess: f64,
    max_weight_share: f64,
}

pub fn is_curve_json(mu: f64, sigma: f64, alpha: f64, n: usize, seed: u64) -> Result<String, String> {
    if !(100..=MAX_SAMPLES).contains(&n) {
        return Err(format!("sample size must be between 100 and {MAX_SAMPLES}"));
    }
    let model = NominalModel::new(mu, sigma).map_err(err)?;
    let opts = VarSolveOptions {
        n_samples: n,
        ..Default::default()
    };
    let r = solve_var_bisection(&model, alpha, Seed(seed), &opts).map_err(err)?;
    // Same seed and proposal as the solve, so the curve is the one bisected.
    let sample = ProposalSample::draw(TiltedProposal::new(model, r.theta).map_err(err)?, n, Seed(seed)).map_err(err)?;
    let x: Vec<f64> = (0..=120)
        .map(|k| r.pilot_var + sigma * (-2.0 + 4.0 * k as f64 / 120.0))
        .collect();
    let p_hat = x.iter().map(|&t| sample.tail_probability(t).probability).collect();
    let view = IsView {
        x,
        p_hat,
        target: 1.0 - alpha,
        var: r.var_estimate,
        pilot_var: r.pilot_var,
        iterations: r.iterations,
        ess: r.diagnostics.ess,
        max_weight_share: r.diagnostics.max_weight_share,
    };
    serde_json::to_string(&view).map_err(err)
}

#[derive(Serialize)]
struct CompareView {
    nu: Vec<f64>,
    true_var: Vec<f64>,
    gaussian_var: f64,
}

pub fn var_comparison_json(mu: f64, sigma: f64, alpha: f64) -> Result<String, String> {
    let model = NominalModel::new(mu, sigma).map_err(err)?;
    let nu: Vec<f64> = (0..=54).map(|k| 2.5 + 0.5 * k as f64).collect();
    let true_var = nu
        .iter()
        .map(|&v| TrueModel::variance_matched(v, mu, sigma).and_then(|t| t.var(alpha)))
        .collect::<tailvar::Result<Vec<f64>>>()
        .map_err(err)?;
    let view = CompareView {
        nu,
        true_var,
        gaussian_var: gaussian_var(&model, alpha).map_err(err)?,
    };
    serde_json::to_string(&view).map_err(err)
}

#[wasm_bindgen]
pub fn dmm_sweep(mu: f64, sigma: f64, alpha: f64, d_max: usize, analytic: bool, seed: u64) -> Result<String, JsValue> {
    dmm_sweep_json(mu, sigma, alpha, d_max, analytic, seed).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn is_curve(mu: f64, sigma: f64, alpha: f64, n: usize, seed: u64) -> Result<String, JsValue> {
    is_curve_json(mu, sigma, alpha, n, seed).map_err(|e| JsValue::from_str(&e))
}

#[wasm_bindgen]
pub fn var_comparison(mu: f64, sigma: f64, alpha: f64) -> Result<String, JsValue> {
    var_comparison_json(mu, sigma, alpha).map_err(|e| JsValue::from_str(&e))
}
