//! Replicated misspecification study: draw Student-t returns, refit the
//! Gaussian, then score the tilted IS estimator and the DMM bracket against
//! the analytic Student-t VaR.
//!
//! Every random stream is a pure function of the master seed, a purpose tag
//! and the replication index. Replication `m` therefore sees the same uniforms
//! for every `nu` and `alpha`, which keeps cross-cell comparisons paired.

use serde::{Deserialize, Serialize};

use crate::calibration::{fit_gaussian_mle, NominalModel};
use crate::distributions::Seed;
use crate::dmm::{self, DmmSettings, FrontierBreak, MomentSourceSetting};
use crate::error::{Error, Result};
use crate::importance_sampling::{solve_var_bisection, VarSolveOptions};
use crate::truth::{sample_true_returns, TrueModel};

const STREAM_TRUTH: u64 = 1;
const STREAM_IS: u64 = 2;
const STREAM_DMM: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub alphas: Vec<f64>,
    pub nus: Vec<f64>,
    /// IS sample count `N` per solve.
    pub n_mc: usize,
    /// Replications `M` per cell.
    pub m_reps: usize,
    /// Calibration sample length `T`.
    pub t_obs: usize,
    pub master_seed: Seed,
    /// Location of the reference Gaussian the truth is variance-matched to.
    pub mu: f64,
    /// Scale of the reference Gaussian.
    pub sigma: f64,
    pub dmm: DmmSettings,
    pub is_tolerance: f64,
    pub is_max_iter: usize,
    /// Worker threads; `None` uses the global pool.
    pub threads: Option<usize>,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            alphas: vec![0.99, 0.995],
            nus: vec![5.0, 7.0, 10.0],
            n_mc: 10_000,
            m_reps: 100,
            t_obs: 2_000,
            master_seed: Seed(20_240_601),
            mu: 0.0005,
            sigma: 0.013,
            dmm: DmmSettings {
                d_max: 8,
                ..DmmSettings::default()
            },
            is_tolerance: 1e-6,
            is_max_iter: 100,
            threads: None,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::Config(msg));
        if self.alphas.is_empty() || self.nus.is_empty() {
            return bad("alphas and nus must be non-empty".into());
        }
        if let Some(a) = self.alphas.iter().find(|a| !(**a > 0.0 && **a < 1.0)) {
            return bad(format!("alpha {a} outside (0, 1)"));
        }
        if let Some(nu) = self.nus.iter().find(|nu| !(**nu > 2.0 && nu.is_finite())) {
            return bad(format!("nu {nu} must exceed 2"));
        }
        if self.n_mc < 1 || self.m_reps < 1 || self.is_max_iter < 1 {
            return bad("n_mc, m_reps and is_max_iter must be at least 1".into());
        }
        if self.t_obs < 2 {
            return bad(format!("t_obs must be at least 2, got {}", self.t_obs));
        }
        if !self.mu.is_finite() || !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return bad(format!("invalid reference model mu={} sigma={}", self.mu, self.sigma));
        }
        if !(self.is_tolerance > 0.0) {
            return bad(format!("is_tolerance must be positive, got {}", self.is_tolerance));
        }
        if self.dmm.grid_m < 1 || !(self.dmm.span > 0.0) || self.dmm.d_max < 1 {
            return bad("dmm grid_m, span and d_max must be positive".into());
        }
        if self.dmm.d_max >= self.dmm.grid_m + 1 {
            return bad("dmm d_max must be below the number of grid points".into());
        }
        if let MomentSourceSetting::Sampled { n: 0 } = self.dmm.moments {
            return bad("dmm moment sample size must be at least 1".into());
        }
        if self.threads == Some(0) {
            return bad("threads must be at least 1".into());
        }
        Ok(())
    }

    fn solve_options(&self) -> VarSolveOptions {
        VarSolveOptions {
            n_samples: self.n_mc,
            tolerance: self.is_tolerance,
            max_iter: self.is_max_iter,
            ..VarSolveOptions::default()
        }
    }

    pub(crate) fn truth_seed(&self, rep: usize) -> Seed {
        self.master_seed.derive(&[STREAM_TRUTH, rep as u64])
    }

    fn is_seed(&self, rep: usize) -> Seed {
        self.master_seed.derive(&[STREAM_IS, rep as u64])
    }

    fn dmm_seed(&self, rep: usize) -> Seed {
        self.master_seed.derive(&[STREAM_DMM, rep as u64])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FailureStage {
    Sampling,
    Calibration,
    TrueVar,
    Dmm,
    ImportanceSampling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Failure {
    pub stage: FailureStage,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IsOutcome {
    pub var: f64,
    pub ess: f64,
    pub max_weight_share: f64,
    pub iterations: usize,
    pub bracket_width: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DmmOutcome {
    pub lower: f64,
    pub upper: f64,
    pub midpoint: f64,
    pub width: f64,
    pub d_star: usize,
    pub frontier: Option<FrontierBreak>,
    /// Bracket endpoints for `d = 1..=d_star`.
    pub sweep_lower: Vec<f64>,
    pub sweep_upper: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub rep_index: usize,
    pub nu: f64,
    pub alpha: f64,
    pub mu_hat: Option<f64>,
    pub sigma_hat: Option<f64>,
    pub true_var: Option<f64>,
    pub is: Option<IsOutcome>,
    pub dmm: Option<DmmOutcome>,
    pub failure: Option<Failure>,
}

impl ReplicationRecord {
    pub fn succeeded(&self) -> bool {
        self.failure.is_none()
    }

    fn blank(rep_index: usize, nu: f64, alpha: f64) -> Self {
        Self {
            rep_index,
            nu,
            alpha,
            mu_hat: None,
            sigma_hat: None,
            true_var: None,
            is: None,
            dmm: None,
            failure: None,
        }
    }
}

fn tag<T>(stage: FailureStage, r: Result<T>) -> std::result::Result<T, Failure> {
    r.map_err(|e| Failure {
        stage,
        message: e.to_string(),
    })
}

/// One replication at a single `alpha`.
pub fn run_replication(cfg: &ExperimentConfig, nu: f64, alpha: f64, rep_index: usize) -> ReplicationRecord {
    replication_group(cfg, nu, &[alpha], rep_index).remove(0)
}

/// One replication at every level in `alphas`, sharing the data draw, the fit
/// and the DMM sweep. Identical to calling [`run_replication`] per level.
pub fn replication_group(cfg: &ExperimentConfig, nu: f64, alphas: &[f64], rep_index: usize) -> Vec<ReplicationRecord> {
    let mut records: Vec<_> = alphas
        .iter()
        .map(|&a| ReplicationRecord::blank(rep_index, nu, a))
        .collect();
    let fail_all = |records: &mut Vec<ReplicationRecord>, f: Failure| {
        for r in records.iter_mut() {
            r.failure = Some(f.clone());
        }
    };

    let truth = match tag(
        FailureStage::Sampling,
        TrueModel::variance_matched(nu, cfg.mu, cfg.sigma),
    ) {
        Ok(t) => t,
        Err(f) => {
            fail_all(&mut records, f);
            return records;
        }
    };
    let returns = match tag(
        FailureStage::Sampling,
        sample_true_returns(&truth, cfg.t_obs, cfg.truth_seed(rep_index)),
    ) {
        Ok(r) => r,
        Err(f) => {
            fail_all(&mut records, f);
            return records;
        }
    };
    let fitted = match tag(FailureStage::Calibration, fit_gaussian_mle(&returns)) {
        Ok(m) => m,
        Err(f) => {
            fail_all(&mut records, f);
            return records;
        }
    };
    for r in records.iter_mut() {
        r.mu_hat = Some(fitted.mu_hat);
        r.sigma_hat = Some(fitted.sigma_hat);
    }

    // Benchmark with the refit location and the variance-matched scale.
    let s_nu = truth.s_nu;
    for r in records.iter_mut() {
        match tag(
            FailureStage::TrueVar,
            crate::truth::true_var(fitted.mu_hat, s_nu, nu, r.alpha),
        ) {
            Ok(v) => r.true_var = Some(v),
            Err(f) => r.failure = Some(f),
        }
    }

    match tag(
        FailureStage::Dmm,
        dmm::dmm_estimates(&fitted, alphas, &cfg.dmm, cfg.dmm_seed(rep_index)),
    ) {
        Ok(estimates) => {
            for (r, e) in records.iter_mut().zip(estimates) {
                let feasible: Vec<_> = e.sweep.feasible_brackets().collect();
                r.dmm = Some(DmmOutcome {
                    lower: e.bracket.lower,
                    upper: e.bracket.upper,
                    midpoint: e.midpoint(),
                    width: e.bracket.width(),
                    d_star: e.bracket.moment_order,
                    frontier: e.sweep.frontier,
                    sweep_lower: feasible.iter().map(|b| b.lower).collect(),
                    sweep_upper: feasible.iter().map(|b| b.upper).collect(),
                });
            }
        }
        Err(f) => {
            for r in records.iter_mut() {
                r.failure.get_or_insert(f.clone());
            }
        }
    }

    let opts = cfg.solve_options();
    for r in records.iter_mut() {
        match tag(
            FailureStage::ImportanceSampling,
            solve_var_bisection(&fitted, r.alpha, cfg.is_seed(rep_index), &opts),
        ) {
            Ok(s) => {
                r.is = Some(IsOutcome {
                    var: s.var_estimate,
                    ess: s.diagnostics.ess,
                    max_weight_share: s.diagnostics.max_weight_share,
                    iterations: s.iterations,
                    bracket_width: s.bracket_hi - s.bracket_lo,
                })
            }
            Err(f) => {
                r.failure.get_or_insert(f);
            }
        }
    }
    records
}

/// Table-1 row for one `(nu, alpha)` cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryCell {
    pub nu: f64,
    pub alpha: f64,
    pub n_success: usize,
    pub n_failed: usize,
    /// Fewer than two successful replications; statistics are NaN.
    pub insufficient: bool,
    pub true_var_mean: f64,
    pub is_mean: f64,
    pub is_std: f64,
    pub is_bias: f64,
    pub is_variance: f64,
    pub is_mse: f64,
    pub ess_mean: f64,
    pub maxw_mean: f64,
    /// DMM columns are descriptive only.
    pub dmm_lower_mean: f64,
    pub dmm_upper_mean: f64,
    pub dmm_width_mean: f64,
    pub dmm_mid_bias: f64,
    /// Smallest frontier order over the cell's replications.
    pub dmm_d_star: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryTable {
    pub cells: Vec<SummaryCell>,
}

impl SummaryTable {
    pub fn cell(&self, nu: f64, alpha: f64) -> Option<&SummaryCell> {
        self.cells.iter().find(|c| c.nu == nu && c.alpha == alpha)
    }
}

fn mean(xs: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = xs.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        f64::NAN
    } else {
        s / n as f64
    }
}

/// Bias, `1/(M-1)` variance and `MSE = bias^2 + variance` over the successful
/// records of one cell.
pub fn summarize_cell(nu: f64, alpha: f64, records: &[ReplicationRecord]) -> SummaryCell {
    let ok: Vec<&ReplicationRecord> = records
        .iter()
        .filter(|r| r.nu == nu && r.alpha == alpha && r.succeeded())
        .collect();
    let n_cell = records.iter().filter(|r| r.nu == nu && r.alpha == alpha).count();
    let n_success = ok.len();
    let insufficient = n_success < 2;
    let nan = f64::NAN;
    let mut cell = SummaryCell {
        nu,
        alpha,
        n_success,
        n_failed: n_cell - n_success,
        insufficient,
        true_var_mean: nan,
        is_mean: nan,
        is_std: nan,
        is_bias: nan,
        is_variance: nan,
        is_mse: nan,
        ess_mean: nan,
        maxw_mean: nan,
        dmm_lower_mean: nan,
        dmm_upper_mean: nan,
        dmm_width_mean: nan,
        dmm_mid_bias: nan,
        dmm_d_star: 0,
    };
    if insufficient {
        return cell;
    }
    let truth: Vec<f64> = ok.iter().map(|r| r.true_var.unwrap()).collect();
    let est: Vec<f64> = ok.iter().map(|r| r.is.as_ref().unwrap().var).collect();
    let dmm: Vec<&DmmOutcome> = ok.iter().map(|r| r.dmm.as_ref().unwrap()).collect();
    let m = n_success as f64;
    cell.true_var_mean = mean(truth.iter().copied());
    cell.is_mean = mean(est.iter().copied());
    cell.is_bias = mean(est.iter().zip(&truth).map(|(e, t)| e - t));
    cell.is_variance = est.iter().map(|e| (e - cell.is_mean).powi(2)).sum::<f64>() / (m - 1.0);
    cell.is_std = cell.is_variance.sqrt();
    cell.is_mse = cell.is_bias * cell.is_bias + cell.is_variance;
    cell.ess_mean = mean(ok.iter().map(|r| r.is.as_ref().unwrap().ess));
    cell.maxw_mean = mean(ok.iter().map(|r| r.is.as_ref().unwrap().max_weight_share));
    cell.dmm_lower_mean = mean(dmm.iter().map(|d| d.lower));
    cell.dmm_upper_mean = mean(dmm.iter().map(|d| d.upper));
    cell.dmm_width_mean = mean(dmm.iter().map(|d| d.width));
    cell.dmm_mid_bias = mean(dmm.iter().zip(&truth).map(|(d, t)| d.midpoint - t));
    cell.dmm_d_star = dmm.iter().map(|d| d.d_star).min().unwrap_or(0);
    cell
}

pub fn summarize(cfg: &ExperimentConfig, records: &[ReplicationRecord]) -> SummaryTable {
    let mut cells = Vec::with_capacity(cfg.nus.len() * cfg.alphas.len());
    for &nu in &cfg.nus {
        for &alpha in &cfg.alphas {
            cells.push(summarize_cell(nu, alpha, records));
        }
    }
    SummaryTable { cells }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutput {
    pub summary: SummaryTable,
    /// Sorted by `(nu, alpha, rep_index)` in configuration order.
    pub records: Vec<ReplicationRecord>,
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentOutput> {
    cfg.validate()?;
    let jobs: Vec<(usize, usize)> = (0..cfg.nus.len())
        .flat_map(|i| (0..cfg.m_reps).map(move |rep| (i, rep)))
        .collect();
    let groups = execute(cfg, &jobs)?;
    let mut keyed: Vec<((usize, usize, usize), ReplicationRecord)> = groups
        .into_iter()
        .zip(&jobs)
        .flat_map(|(group, &(i, rep))| {
            group
                .into_iter()
                .enumerate()
                .map(move |(a, r)| ((i, a, rep), r))
        })
        .collect();
    keyed.sort_by_key(|(k, _)| *k);
    let records: Vec<ReplicationRecord> = keyed.into_iter().map(|(_, r)| r).collect();
    Ok(ExperimentOutput {
        summary: summarize(cfg, &records),
        records,
    })
}

#[cfg(feature = "parallel")]
fn execute(cfg: &ExperimentConfig, jobs: &[(usize, usize)]) -> Result<Vec<Vec<ReplicationRecord>>> {
    use rayon::prelude::*;
    let work = || -> Vec<Vec<ReplicationRecord>> {
        jobs.par_iter()
            .map(|&(i, rep)| replication_group(cfg, cfg.nus[i], &cfg.alphas, rep))
            .collect()
    };
    match cfg.threads {
        None => Ok(work()),
        Some(k) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(k)
                .build()
                .map_err(|e| Error::Config(format!("thread pool: {e}")))?;
            Ok(pool.install(work))
        }
    }
}

#[cfg(not(feature = "parallel"))]
fn execute(cfg: &ExperimentConfig, jobs: &[(usize, usize)]) -> Result<Vec<Vec<ReplicationRecord>>> {
    Ok(jobs
        .iter()
        .map(|&(i, rep)| replication_group(cfg, cfg.nus[i], &cfg.alphas, rep))
        .collect())
}

/// One figure's series as named numeric columns.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FigureData {
    pub name: String,
    pub columns: Vec<String>,
    pub rows: Vec<Vec<f64>>,
}

impl FigureData {
    fn new(name: &str, columns: &[&str]) -> Self {
        Self {
            name: name.into(),
            columns: columns.iter().map(|c| c.to_string()).collect(),
            rows: Vec::new(),
        }
    }

    pub fn column(&self, name: &str) -> Option<Vec<f64>> {
        let k = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r[k]).collect())
    }
}

/// Series behind figures 1 to 7.
///
/// Figure 1 needs one replication's raw losses and envelope, which are
/// regenerated from the seeds of replication 0 in the first `nu` cell.
pub fn emit_figure_data(
    cfg: &ExperimentConfig,
    table: &SummaryTable,
    records: &[ReplicationRecord],
) -> Result<Vec<FigureData>> {
    if table.cells.is_empty() {
        return Err(Error::domain("figure data needs a non-empty summary"));
    }
    let mut figs = Vec::new();
    let alpha1 = if cfg.alphas.contains(&0.99) { 0.99 } else { cfg.alphas[0] };
    figs.extend(envelope_figures(cfg, cfg.nus[0], alpha1)?);

    let mut sens = FigureData::new("figure_2_sensitivity", &["nu", "alpha", "d", "lower_mean", "upper_mean", "count"]);
    for cell in &table.cells {
        let dmms: Vec<&DmmOutcome> = records
            .iter()
            .filter(|r| r.nu == cell.nu && r.alpha == cell.alpha && r.succeeded())
            .filter_map(|r| r.dmm.as_ref())
            .collect();
        let d_top = dmms.iter().map(|d| d.sweep_lower.len()).max().unwrap_or(0);
        for d in 1..=d_top {
            let at_d: Vec<(f64, f64)> = dmms
                .iter()
                .filter(|o| o.sweep_lower.len() >= d)
                .map(|o| (o.sweep_lower[d - 1], o.sweep_upper[d - 1]))
                .collect();
            sens.rows.push(vec![
                cell.nu,
                cell.alpha,
                d as f64,
                mean(at_d.iter().map(|p| p.0)),
                mean(at_d.iter().map(|p| p.1)),
                at_d.len() as f64,
            ]);
        }
    }
    figs.push(sens);

    let mut scatter = FigureData::new("figure_3_calibration", &["nu", "alpha", "rep", "true_var", "is_var"]);
    for r in records.iter().filter(|r| r.succeeded()) {
        scatter.rows.push(vec![
            r.nu,
            r.alpha,
            r.rep_index as f64,
            r.true_var.unwrap(),
            r.is.as_ref().unwrap().var,
        ]);
    }
    figs.push(scatter);

    let per_cell = |name: &str, cols: &[&str], f: &dyn Fn(&SummaryCell) -> Vec<f64>| {
        let mut fig = FigureData::new(name, cols);
        fig.rows = table.cells.iter().map(f).collect();
        fig
    };
    figs.push(per_cell("figure_4_bias", &["alpha", "nu", "is_bias"], &|c| {
        vec![c.alpha, c.nu, c.is_bias]
    }));
    figs.push(per_cell("figure_5_std", &["alpha", "nu", "is_std"], &|c| {
        vec![c.alpha, c.nu, c.is_std]
    }));
    figs.push(per_cell(
        "figure_6_diagnostics",
        &["nu", "alpha", "ess_mean", "maxw_mean"],
        &|c| vec![c.nu, c.alpha, c.ess_mean, c.maxw_mean],
    ));
    figs.push(per_cell(
        "figure_7_bias_vs_ess",
        &["nu", "alpha", "ess_mean", "abs_bias"],
        &|c| vec![c.nu, c.alpha, c.ess_mean, c.is_bias.abs()],
    ));
    Ok(figs)
}

/// Envelope of replication 0 against its empirical loss CDF, plus the
/// bracket, empirical VaR and true VaR as markers.
fn envelope_figures(cfg: &ExperimentConfig, nu: f64, alpha: f64) -> Result<Vec<FigureData>> {
    let truth = TrueModel::variance_matched(nu, cfg.mu, cfg.sigma)?;
    let returns = sample_true_returns(&truth, cfg.t_obs, cfg.truth_seed(0))?;
    let fitted: NominalModel = fit_gaussian_mle(&returns)?;
    let grid = dmm::build_grid(&fitted, cfg.dmm.grid_m, cfg.dmm.span)?;
    let moments = dmm::nominal_moments(&fitted, cfg.dmm.d_max, cfg.dmm.moments, cfg.dmm_seed(0))?;
    let sweep = dmm::moment_sweep(&grid, &moments, alpha, cfg.dmm.d_max)?;
    let d = sweep.d_star.ok_or(Error::Infeasible)?;
    let env = dmm::cdf_envelope(&grid, &moments.prefix(d))?;
    let bracket = dmm::var_bounds(&env, alpha)?;

    let mut losses = returns.losses();
    losses.sort_by(f64::total_cmp);
    let t = losses.len() as f64;
    let ecdf = |x: f64| losses.partition_point(|l| *l <= x) as f64 / t;
    let mut curve = FigureData::new("figure_1_envelope", &["x", "empirical_cdf", "cdf_lower", "cdf_upper"]);
    for (j, &x) in env.thresholds.iter().enumerate() {
        curve.rows.push(vec![x, ecdf(x), env.lower[j], env.upper[j]]);
    }
    let k = ((alpha * t).ceil() as usize).clamp(1, losses.len());
    let mut markers = FigureData::new(
        "figure_1_markers",
        &["nu", "alpha", "d", "dmm_lower", "dmm_upper", "empirical_var", "true_var"],
    );
    markers.rows.push(vec![
        nu,
        alpha,
        d as f64,
        bracket.lower,
        bracket.upper,
        losses[k - 1],
        truth.var(alpha)?,
    ]);
    Ok(vec![curve, markers])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn record(nu: f64, alpha: f64, rep: usize, est: f64, truth: f64) -> ReplicationRecord {
        ReplicationRecord {
            mu_hat: Some(0.0),
            sigma_hat: Some(1.0),
            true_var: Some(truth),
            is: Some(IsOutcome {
                var: est,
                ess: 100.0,
                max_weight_share: 0.01,
                iterations: 10,
                bracket_width: 1e-7,
            }),
            dmm: Some(DmmOutcome {
                lower: truth - 1.0,
                upper: truth + 1.0,
                midpoint: truth,
                width: 2.0,
                d_star: 7,
                frontier: None,
                sweep_lower: vec![truth - 1.0],
                sweep_upper: vec![truth + 1.0],
            }),
            ..ReplicationRecord::blank(rep, nu, alpha)
        }
    }

    fn small_config() -> ExperimentConfig {
        ExperimentConfig {
            nus: vec![5.0, 10.0],
            n_mc: 2_000,
            m_reps: 4,
            t_obs: 500,
            dmm: DmmSettings {
                grid_m: 60,
                d_max: 4,
                moments: MomentSourceSetting::Sampled { n: 5_000 },
                ..DmmSettings::default()
            },
            ..ExperimentConfig::default()
        }
    }

    #[test]
    fn two_point_cell_arithmetic() {
        let recs = vec![record(5.0, 0.99, 0, 1.0, 2.0), record(5.0, 0.99, 1, 3.0, 2.0)];
        let c = summarize_cell(5.0, 0.99, &recs);
        assert_eq!(c.is_bias, 0.0);
        assert_eq!(c.is_variance, 2.0);
        assert_eq!(c.is_mse, 2.0);
        assert!(!c.insufficient);
    }

    #[test]
    fn exact_estimates_give_zero_error() {
        let recs: Vec<_> = (0..5).map(|i| record(7.0, 0.995, i, 0.03, 0.03)).collect();
        let c = summarize_cell(7.0, 0.995, &recs);
        assert_eq!((c.is_bias, c.is_variance, c.is_mse), (0.0, 0.0, 0.0));
        assert_eq!(c.dmm_d_star, 7);
    }

    #[test]
    fn mse_identity() {
        let recs: Vec<_> = (0..9)
            .map(|i| record(5.0, 0.99, i, 0.02 + 0.001 * (i as f64).sin(), 0.025 + 1e-4 * i as f64))
            .collect();
        let c = summarize_cell(5.0, 0.99, &recs);
        assert!((c.is_mse - (c.is_bias * c.is_bias + c.is_variance)).abs() < 1e-12);
    }

    #[test]
    fn failed_records_are_excluded_and_counted() {
        let mut recs: Vec<_> = (0..3).map(|i| record(5.0, 0.99, i, 1.0, 1.0)).collect();
        recs[1].failure = Some(Failure {
            stage: FailureStage::Dmm,
            message: "x".into(),
        });
        let c = summarize_cell(5.0, 0.99, &recs);
        assert_eq!((c.n_success, c.n_failed), (2, 1));
        recs[2].failure = recs[1].failure.clone();
        let c = summarize_cell(5.0, 0.99, &recs);
        assert!(c.insufficient && c.is_bias.is_nan());
    }

    #[test]
    fn config_validation() {
        assert!(ExperimentConfig::default().validate().is_ok());
        let bad = [
            ExperimentConfig { alphas: vec![1.0], ..Default::default() },
            ExperimentConfig { nus: vec![2.0], ..Default::default() },
            ExperimentConfig { m_reps: 0, ..Default::default() },
            ExperimentConfig { t_obs: 1, ..Default::default() },
            ExperimentConfig { sigma: 0.0, ..Default::default() },
            ExperimentConfig { threads: Some(0), ..Default::default() },
        ];
        for cfg in bad {
            assert!(matches!(cfg.validate(), Err(Error::Config(_))));
        }
    }

    #[test]
    fn record_determinism_and_grouping() {
        let cfg = small_config();
        let a = run_replication(&cfg, 5.0, 0.995, 2);
        let b = run_replication(&cfg, 5.0, 0.995, 2);
        assert_eq!(a, b);
        let group = replication_group(&cfg, 5.0, &cfg.alphas, 2);
        assert_eq!(group[1], a);
        assert!(a.succeeded(), "{:?}", a.failure);
        assert!(a.is.as_ref().unwrap().bracket_width <= cfg.is_tolerance);
        assert!(a.true_var.unwrap().is_finite());
    }

    #[test]
    fn bracket_contains_refit_gaussian_var() {
        let mut cfg = small_config();
        cfg.dmm.moments = MomentSourceSetting::Analytic;
        for rep in 0..3 {
            let r = run_replication(&cfg, 7.0, 0.99, rep);
            let fitted = NominalModel::new(r.mu_hat.unwrap(), r.sigma_hat.unwrap()).unwrap();
            let g = crate::calibration::gaussian_var(&fitted, 0.99).unwrap();
            let d = r.dmm.unwrap();
            assert!(d.lower <= g && g <= d.upper);
        }
    }

    #[test]
    fn streams_are_shared_across_cells() {
        let cfg = small_config();
        let a = run_replication(&cfg, 5.0, 0.99, 1);
        let b = run_replication(&cfg, 10.0, 0.99, 1);
        // Same uniforms, different tails: the fits differ but only slightly.
        assert_ne!(a.sigma_hat, b.sigma_hat);
        assert!((a.sigma_hat.unwrap() / b.sigma_hat.unwrap() - 1.0).abs() < 0.1);
    }

    #[test]
    fn small_experiment_end_to_end() {
        let cfg = small_config();
        let out = run_experiment(&cfg).unwrap();
        assert_eq!(out.records.len(), 2 * 2 * 4);
        assert_eq!(out.summary.cells.len(), 4);
        let keys: Vec<_> = out.records.iter().map(|r| (r.nu, r.alpha, r.rep_index)).collect();
        assert_eq!(keys[0], (5.0, 0.99, 0));
        assert_eq!(keys[4], (5.0, 0.995, 0));
        assert_eq!(keys[8], (10.0, 0.99, 0));
        for c in &out.summary.cells {
            assert_eq!(c.n_success, 4);
            assert!((c.is_mse - (c.is_bias * c.is_bias + c.is_variance)).abs() < 1e-12);
        }
        let figs = emit_figure_data(&cfg, &out.summary, &out.records).unwrap();
        let names: Vec<_> = figs.iter().map(|f| f.name.as_str()).collect();
        assert_eq!(names.len(), 8);
        assert!(names.contains(&"figure_1_envelope") && names.contains(&"figure_7_bias_vs_ess"));
        let env = &figs[0];
        assert_eq!(env.rows.len(), cfg.dmm.grid_m + 1);
        let lo = env.column("cdf_lower").unwrap();
        let hi = env.column("cdf_upper").unwrap();
        assert!(lo.iter().zip(&hi).all(|(l, h)| l <= h));
    }
}
