//! Discrete moment matching: VaR brackets over every grid-supported loss
//! distribution that reproduces the first `d` raw moments.
//!
//! For each grid threshold `X_j` the smallest and largest attainable value of
//! `F(X_j) = sum_{i <= j} p_i` over the moment-feasible set are linear programs
//! sharing one constraint system. Phase one is therefore run once per moment
//! order and each threshold only pays for a phase-two re-optimization.
//! The resulting envelopes `F- <= F+` are inverted on the grid: `F+` crosses
//! `alpha` first and gives the lower VaR bound, `F-` gives the upper one.
//!
//! Before assembly the grid is mapped affinely onto `[-1, 1]` and the moments
//! are transformed with it by binomial expansion. That leaves the feasible set
//! unchanged and keeps the power rows of comparable magnitude.

use serde::{Deserialize, Serialize};

use crate::calibration::NominalModel;
use crate::distributions::{sample_normal, NormalParams, Seed};
use crate::error::{Error, Result};
use crate::lp_solver::{EqualityPolytope, LpStatus, PhaseOne, Sense};

/// Slack allowed when deciding that an envelope has reached `alpha`.
pub const CROSSING_TOL: f64 = 1e-9;

/// Strictly increasing loss support `X_0 < ... < X_m`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossGrid {
    points: Vec<f64>,
}

impl LossGrid {
    pub fn new(points: Vec<f64>) -> Result<Self> {
        if points.len() < 2 {
            return Err(Error::domain("loss grid needs at least two points"));
        }
        if points.iter().any(|x| !x.is_finite()) {
            return Err(Error::domain("loss grid points must be finite"));
        }
        if points.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::domain("loss grid must be strictly increasing"));
        }
        Ok(Self { points })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    /// Index of the last point.
    pub fn m(&self) -> usize {
        self.points.len() - 1
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn first(&self) -> f64 {
        self.points[0]
    }

    pub fn last(&self) -> f64 {
        self.points[self.m()]
    }

    pub fn contains(&self, x: f64) -> bool {
        x >= self.first() && x <= self.last()
    }

    fn center(&self) -> f64 {
        0.5 * (self.first() + self.last())
    }

    fn half_width(&self) -> f64 {
        0.5 * (self.last() - self.first())
    }
}

/// Uniform grid of `m + 1` points over `-mu_hat +/- span * sigma_hat`.
pub fn build_grid(model: &NominalModel, m: usize, span: f64) -> Result<LossGrid> {
    if m < 1 {
        return Err(Error::domain("grid needs m >= 1"));
    }
    if !(span > 0.0 && span.is_finite()) {
        return Err(Error::domain(format!("grid span must be positive, got {span}")));
    }
    let center = model.loss_mean();
    let half = span * model.sigma_hat;
    let (lo, hi) = (center - half, center + half);
    let points = (0..=m)
        .map(|i| {
            if i == m {
                hi
            } else {
                lo + (hi - lo) * (i as f64 / m as f64)
            }
        })
        .collect();
    LossGrid::new(points)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MomentSource {
    AnalyticGaussian,
    NominalSample,
}

/// Raw loss moments `(mu_1, ..., mu_d)`; `mu_0 = 1` is implicit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentVector {
    values: Vec<f64>,
    source: MomentSource,
}

impl MomentVector {
    pub fn new(values: Vec<f64>, source: MomentSource) -> Result<Self> {
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::domain("moments must be finite"));
        }
        Ok(Self { values, source })
    }

    pub fn order(&self) -> usize {
        self.values.len()
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn source(&self) -> MomentSource {
        self.source
    }

    /// First `d` moments.
    pub fn prefix(&self, d: usize) -> MomentVector {
        MomentVector {
            values: self.values[..d.min(self.values.len())].to_vec(),
            source: self.source,
        }
    }

    /// `mu_2 - mu_1^2`, when the order allows it.
    pub fn implied_variance(&self) -> Option<f64> {
        (self.order() >= 2).then(|| self.values[1] - self.values[0] * self.values[0])
    }
}

/// Sample raw moments of `losses` up to order `d`.
pub fn raw_moments(losses: &[f64], d: usize) -> Result<MomentVector> {
    if d == 0 {
        return Err(Error::domain("moment order must be at least 1"));
    }
    if losses.is_empty() {
        return Err(Error::InsufficientData { needed: 1, got: 0 });
    }
    if let Some(x) = losses.iter().find(|x| !x.is_finite()) {
        return Err(Error::domain(format!("non-finite loss {x}")));
    }
    let mut sums = vec![0.0; d];
    for &x in losses {
        let mut p = 1.0;
        for s in sums.iter_mut() {
            p *= x;
            *s += p;
        }
    }
    let n = losses.len() as f64;
    MomentVector::new(sums.into_iter().map(|s| s / n).collect(), MomentSource::NominalSample)
}

/// Exact raw moments of `L = -R`, `R ~ N(mu_hat, sigma_hat^2)`.
pub fn analytic_gaussian_moments(model: &NominalModel, d: usize) -> Result<MomentVector> {
    if d == 0 {
        return Err(Error::domain("moment order must be at least 1"));
    }
    let mean = model.loss_mean();
    let s = model.sigma_hat;
    // Central moments E[(sigma Z)^k]: zero for odd k, sigma^k (k-1)!! for even k.
    let mut central = vec![0.0; d + 1];
    central[0] = 1.0;
    for k in (2..=d).step_by(2) {
        central[k] = central[k - 2] * (k as f64 - 1.0) * s * s;
    }
    let values = (1..=d)
        .map(|r| {
            (0..=r)
                .map(|k| binomial(r, k) * mean.powi((r - k) as i32) * central[k])
                .sum()
        })
        .collect();
    MomentVector::new(values, MomentSource::AnalyticGaussian)
}

/// Raw moments of `L` for the nominal model, either exact or sampled.
pub fn nominal_moments(
    model: &NominalModel,
    d: usize,
    source: MomentSourceSetting,
    seed: Seed,
) -> Result<MomentVector> {
    match source {
        MomentSourceSetting::Analytic => analytic_gaussian_moments(model, d),
        MomentSourceSetting::Sampled { n } => {
            let params = NormalParams::new(model.mu_hat, model.sigma_hat)?;
            let losses: Vec<f64> = sample_normal(params, n, seed)?.into_iter().map(|r| -r).collect();
            raw_moments(&losses, d)
        }
    }
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Moments of `Y = (L - center) / half` from raw moments of `L`.
fn standardized_moments(moments: &[f64], center: f64, half: f64) -> Vec<f64> {
    let raw = |k: usize| if k == 0 { 1.0 } else { moments[k - 1] };
    (1..=moments.len())
        .map(|r| {
            let s: f64 = (0..=r)
                .map(|k| binomial(r, k) * raw(k) * (-center).powi((r - k) as i32))
                .sum();
            s / half.powi(r as i32)
        })
        .collect()
}

/// Equality rows `sum p_i = 1`, `sum y_i^r p_i = nu_r` on the standardized grid.
fn moment_polytope(grid: &LossGrid, moments: &MomentVector) -> Result<EqualityPolytope> {
    let (c, h) = (grid.center(), grid.half_width());
    let ys: Vec<f64> = grid.points().iter().map(|x| (x - c) / h).collect();
    let targets = standardized_moments(moments.values(), c, h);
    let mut rows = vec![vec![1.0; ys.len()]];
    let mut rhs = vec![1.0];
    let mut power = vec![1.0; ys.len()];
    for target in targets {
        power.iter_mut().zip(&ys).for_each(|(p, y)| *p *= y);
        rows.push(power.clone());
        rhs.push(target);
    }
    EqualityPolytope::new(ys.len(), &rows, &rhs)
}

/// Pointwise CDF bounds over the moment-feasible set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CdfEnvelope {
    pub thresholds: Vec<f64>,
    /// `F-(X_j)`; NaN when infeasible.
    pub lower: Vec<f64>,
    /// `F+(X_j)`; NaN when infeasible.
    pub upper: Vec<f64>,
    pub statuses: Vec<LpStatus>,
    pub feasible: bool,
    pub moment_order: usize,
    pub phase_one_residual: f64,
}

pub fn cdf_envelope(grid: &LossGrid, moments: &MomentVector) -> Result<CdfEnvelope> {
    let n = grid.len();
    if moments.order() >= n {
        return Err(Error::domain(format!(
            "moment order {} needs more than {} grid points",
            moments.order(),
            n
        )));
    }
    let polytope = moment_polytope(grid, moments)?;
    let basis = match polytope.phase_one() {
        PhaseOne::Feasible(basis) => basis,
        PhaseOne::Infeasible { residual, .. } => {
            return Ok(CdfEnvelope {
                thresholds: grid.points().to_vec(),
                lower: vec![f64::NAN; n],
                upper: vec![f64::NAN; n],
                statuses: vec![LpStatus::Infeasible; n],
                feasible: false,
                moment_order: moments.order(),
                phase_one_residual: residual,
            })
        }
        PhaseOne::NumericalFailure { .. } => return Err(Error::LpNumerical { threshold: 0 }),
    };

    // Two warm-started chains: the optimal basis at X_j seeds X_{j+1}.
    let chain = |sense: Sense| -> Result<Vec<f64>> {
        let mut warm = basis.initial_basis();
        let mut objective = vec![0.0; n];
        let mut values = Vec::with_capacity(n);
        for j in 0..n {
            objective[j] = 1.0;
            let out = basis.optimize_warm(&mut warm, &objective, sense);
            match (out.status, out.value) {
                (LpStatus::Optimal, Some(v)) => values.push(v),
                _ => return Err(Error::LpNumerical { threshold: j }),
            }
        }
        Ok(values)
    };
    let bounds: Vec<(f64, f64)> = chain(Sense::Minimize)?
        .into_iter()
        .zip(chain(Sense::Maximize)?)
        .collect();

    // Clamp rounding-level excursions so both envelopes are valid CDFs.
    let mut lower = Vec::with_capacity(n);
    let mut upper = Vec::with_capacity(n);
    let (mut lo_run, mut hi_run) = (0.0f64, 0.0f64);
    for (lo, hi) in bounds {
        lo_run = lo_run.max(lo.clamp(0.0, 1.0));
        hi_run = hi_run.max(hi.clamp(0.0, 1.0));
        lower.push(lo_run.min(hi_run));
        upper.push(hi_run);
    }
    Ok(CdfEnvelope {
        thresholds: grid.points().to_vec(),
        lower,
        upper,
        statuses: vec![LpStatus::Optimal; n],
        feasible: true,
        moment_order: moments.order(),
        phase_one_residual: basis.phase_one_residual(),
    })
}

/// Moment-consistent VaR interval at level `alpha`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarBracket {
    pub lower: f64,
    pub upper: f64,
    pub alpha: f64,
    pub moment_order: usize,
    pub feasible: bool,
}

impl VarBracket {
    pub fn width(&self) -> f64 {
        self.upper - self.lower
    }

    pub fn contains(&self, x: f64) -> bool {
        self.feasible && x >= self.lower && x <= self.upper
    }

    fn infeasible(alpha: f64, moment_order: usize) -> Self {
        Self {
            lower: f64::NAN,
            upper: f64::NAN,
            alpha,
            moment_order,
            feasible: false,
        }
    }
}

/// Left-continuous inversion of both envelopes on the grid.
pub fn var_bounds(envelope: &CdfEnvelope, alpha: f64) -> Result<VarBracket> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::domain(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    if !envelope.feasible {
        return Err(Error::Infeasible);
    }
    let first_crossing = |cdf: &[f64]| cdf.iter().position(|&f| f >= alpha - CROSSING_TOL);
    let lower = first_crossing(&envelope.upper).ok_or(Error::GridTooShort { alpha })?;
    let upper = first_crossing(&envelope.lower).ok_or(Error::GridTooShort { alpha })?;
    Ok(VarBracket {
        lower: envelope.thresholds[lower],
        upper: envelope.thresholds[upper],
        alpha,
        moment_order: envelope.moment_order,
        feasible: true,
    })
}

/// Why a sweep stopped before `d_max`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum FrontierBreak {
    /// Phase one could not reach the feasibility tolerance.
    Infeasible { order: usize, residual: f64 },
    /// A threshold LP could not be solved to the residual tolerance.
    NumericalFailure { order: usize, threshold: usize },
}

impl FrontierBreak {
    pub fn order(&self) -> usize {
        match *self {
            FrontierBreak::Infeasible { order, .. } | FrontierBreak::NumericalFailure { order, .. } => order,
        }
    }
}

/// Brackets for `d = 1..=d_max` up to the first order that fails.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MomentSweep {
    pub alpha: f64,
    /// Brackets for `d = 1..=d_star`, then one infeasible entry if the sweep broke.
    pub brackets: Vec<VarBracket>,
    /// Largest order whose bracket was computed.
    pub d_star: Option<usize>,
    pub frontier: Option<FrontierBreak>,
}

impl MomentSweep {
    pub fn feasible_brackets(&self) -> impl Iterator<Item = &VarBracket> {
        self.brackets.iter().filter(|b| b.feasible)
    }

    /// Bracket at the frontier order `d_star`.
    pub fn frontier_bracket(&self) -> Option<&VarBracket> {
        self.feasible_brackets().last()
    }
}

pub fn moment_sweep(
    grid: &LossGrid,
    moments_full: &MomentVector,
    alpha: f64,
    d_max: usize,
) -> Result<MomentSweep> {
    let mut sweeps = moment_sweeps(grid, moments_full, &[alpha], d_max)?;
    Ok(sweeps.remove(0))
}

/// One sweep per level, sharing phase one across levels at each order.
pub fn moment_sweeps(
    grid: &LossGrid,
    moments_full: &MomentVector,
    alphas: &[f64],
    d_max: usize,
) -> Result<Vec<MomentSweep>> {
    if d_max > moments_full.order() {
        return Err(Error::domain(format!(
            "sweep to order {d_max} needs at least that many moments, got {}",
            moments_full.order()
        )));
    }
    if d_max >= grid.len() {
        return Err(Error::domain(format!(
            "sweep to order {d_max} needs more than {} grid points",
            grid.len()
        )));
    }
    if let Some(a) = alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
        return Err(Error::domain(format!("alpha must lie in (0, 1), got {a}")));
    }
    let mut sweeps: Vec<MomentSweep> = alphas
        .iter()
        .map(|&alpha| MomentSweep {
            alpha,
            brackets: Vec::with_capacity(d_max),
            d_star: None,
            frontier: None,
        })
        .collect();
    for d in 1..=d_max {
        let frontier = match cdf_envelope(grid, &moments_full.prefix(d)) {
            Ok(env) if env.feasible => {
                for s in sweeps.iter_mut() {
                    s.brackets.push(var_bounds(&env, s.alpha)?);
                    s.d_star = Some(d);
                }
                continue;
            }
            Ok(env) => FrontierBreak::Infeasible {
                order: d,
                residual: env.phase_one_residual,
            },
            Err(Error::LpNumerical { threshold }) => FrontierBreak::NumericalFailure { order: d, threshold },
            Err(e) => return Err(e),
        };
        for s in sweeps.iter_mut() {
            s.brackets.push(VarBracket::infeasible(s.alpha, d));
            s.frontier = Some(frontier);
        }
        break;
    }
    Ok(sweeps)
}

/// Midpoint of a feasible bracket.
pub fn dmm_midpoint(bracket: &VarBracket) -> Result<f64> {
    if !bracket.feasible {
        return Err(Error::Infeasible);
    }
    Ok(0.5 * (bracket.lower + bracket.upper))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum MomentSourceSetting {
    Analytic,
    Sampled { n: usize },
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DmmSettings {
    pub grid_m: usize,
    pub span: f64,
    pub d_max: usize,
    pub moments: MomentSourceSetting,
}

impl Default for DmmSettings {
    fn default() -> Self {
        Self {
            grid_m: 200,
            span: 8.0,
            d_max: 16,
            moments: MomentSourceSetting::Sampled { n: 100_000 },
        }
    }
}

/// Sweep for one nominal model, with the bracket taken at the frontier order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmmEstimate {
    pub sweep: MomentSweep,
    pub bracket: VarBracket,
}

impl DmmEstimate {
    pub fn midpoint(&self) -> f64 {
        0.5 * (self.bracket.lower + self.bracket.upper)
    }
}

pub fn dmm_estimate(
    model: &NominalModel,
    alpha: f64,
    settings: &DmmSettings,
    seed: Seed,
) -> Result<DmmEstimate> {
    Ok(dmm_estimates(model, &[alpha], settings, seed)?.remove(0))
}

/// Estimates at several levels from one moment sample and one sweep.
pub fn dmm_estimates(
    model: &NominalModel,
    alphas: &[f64],
    settings: &DmmSettings,
    seed: Seed,
) -> Result<Vec<DmmEstimate>> {
    let grid = build_grid(model, settings.grid_m, settings.span)?;
    let moments = nominal_moments(model, settings.d_max, settings.moments, seed)?;
    moment_sweeps(&grid, &moments, alphas, settings.d_max)?
        .into_iter()
        .map(|sweep| {
            let bracket = *sweep.frontier_bracket().ok_or(Error::Infeasible)?;
            Ok(DmmEstimate { sweep, bracket })
        })
        .collect()
}
