//! Exponentially tilted importance sampling for nominal-model tail
//! probabilities, and VaR by bracketing plus bisection on the estimated tail
//! function.
//!
//! Under the nominal model `R ~ N(mu, sigma^2)` the proposal shifts the mean
//! to `mu - theta` with the variance unchanged, so the likelihood ratio is
//!
//! ```text
//! W(r) = exp(theta * (r - mu) / sigma^2 + theta^2 / (2 sigma^2))
//! ```
//!
//! A [`ProposalSample`] draws the `N` proposal returns once. Every threshold
//! evaluated against it sees the same draws (common random numbers), so the
//! estimated tail function is an exactly non-increasing step function of the
//! threshold and bisection on it is well posed.

use serde::{Deserialize, Serialize};

use crate::calibration::{gaussian_var, NominalModel};
use crate::distributions::{std_normal_inv, Seed};
use crate::error::{Error, Result};

/// Largest log-weight that still exponentiates to a finite `f64`.
const MAX_LOG_WEIGHT: f64 = 709.78;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TiltedProposal {
    pub base: NominalModel,
    pub theta: f64,
}

impl TiltedProposal {
    pub fn new(base: NominalModel, theta: f64) -> Result<Self> {
        if !theta.is_finite() {
            return Err(Error::domain(format!("tilt must be finite, got {theta}")));
        }
        Ok(Self { base, theta })
    }

    /// Proposal centred on the boundary return `-x0` of the pilot VaR.
    pub fn pilot(base: NominalModel, alpha: f64) -> Result<Self> {
        Self::new(base, tilt_from_pilot(&base, alpha)?)
    }

    /// Mean return under the proposal.
    pub fn mean(&self) -> f64 {
        self.base.mu_hat - self.theta
    }

    /// A non-positive tilt does not move mass toward the loss tail.
    pub fn is_degenerate(&self) -> bool {
        self.theta <= 0.0
    }

    pub fn log_weight(&self, r: f64) -> f64 {
        let s2 = self.base.sigma_hat * self.base.sigma_hat;
        self.theta * (r - self.base.mu_hat) / s2 + self.theta * self.theta / (2.0 * s2)
    }

    pub fn weight(&self, r: f64) -> Result<f64> {
        let lw = self.log_weight(r);
        if lw > MAX_LOG_WEIGHT || lw.is_nan() {
            return Err(Error::WeightOverflow { log_weight: lw });
        }
        Ok(lw.exp())
    }
}

/// `theta = mu_hat + x0`, i.e. `sigma_hat * z_alpha`.
pub fn tilt_from_pilot(model: &NominalModel, alpha: f64) -> Result<f64> {
    Ok(model.mu_hat + gaussian_var(model, alpha)?)
}

/// Closed-form density ratio `f_P(r) / f_Q(r)`.
pub fn likelihood_ratio(model: &NominalModel, theta: f64, r: f64) -> Result<f64> {
    TiltedProposal::new(*model, theta)?.weight(r)
}

/// Weight-dispersion diagnostics over normalized weights.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ISDiagnostics {
    /// `1 / sum(w_i^2)` over normalized weights, in `[1, N]`.
    pub ess: f64,
    /// Largest normalized weight, in `[1/N, 1]`.
    pub max_weight_share: f64,
}

pub fn diagnostics_from_weights(weights: &[f64]) -> Result<ISDiagnostics> {
    if let Some(w) = weights.iter().find(|w| !(**w >= 0.0 && w.is_finite())) {
        return Err(Error::domain(format!("weights must be finite and non-negative, got {w}")));
    }
    let total: f64 = weights.iter().sum();
    if !(total > 0.0) {
        return Err(Error::DegenerateWeights);
    }
    let (sum_sq, max) = weights.iter().fold((0.0, 0.0f64), |(sq, mx), &w| {
        let nw = w / total;
        (sq + nw * nw, mx.max(nw))
    });
    Ok(clamp_diagnostics(1.0 / sum_sq, max, weights.len()))
}

/// Same as [`diagnostics_from_weights`] but from log-weights, shifting by the
/// maximum before exponentiating.
pub fn diagnostics_from_log_weights(log_weights: &[f64]) -> Result<ISDiagnostics> {
    let shift = log_weights.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !shift.is_finite() {
        return Err(Error::DegenerateWeights);
    }
    let scaled: Vec<f64> = log_weights.iter().map(|lw| (lw - shift).exp()).collect();
    diagnostics_from_weights(&scaled)
}

// Rounding can push ESS a hair outside [1, N]; the bounds are exact in theory.
fn clamp_diagnostics(ess: f64, max_share: f64, n: usize) -> ISDiagnostics {
    let n = n as f64;
    ISDiagnostics {
        ess: ess.clamp(1.0, n),
        max_weight_share: max_share.clamp(1.0 / n, 1.0),
    }
}

/// Tail probability estimate at one threshold.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailEstimate {
    pub probability: f64,
    /// Draws with `R < -x`.
    pub hits: usize,
    /// Monte Carlo standard error of `probability`.
    pub std_error: f64,
}

impl TailEstimate {
    pub fn is_zero_hits(&self) -> bool {
        self.hits == 0
    }
}

/// A fixed set of proposal draws with prefix sums of their weights, sorted by
/// return so each threshold is answered by one binary search.
#[derive(Debug, Clone)]
pub struct ProposalSample {
    proposal: TiltedProposal,
    sorted_returns: Vec<f64>,
    cum_weight: Vec<f64>,
    cum_weight_sq: Vec<f64>,
    diagnostics: ISDiagnostics,
}

impl ProposalSample {
    pub fn draw(proposal: TiltedProposal, n: usize, seed: Seed) -> Result<Self> {
        if n == 0 {
            return Err(Error::domain("sample count must be at least 1"));
        }
        let mean = proposal.mean();
        let sigma = proposal.base.sigma_hat;
        let mut stream = seed.stream();
        let mut returns: Vec<f64> = (0..n)
            .map(|_| mean + sigma * std_normal_inv(stream.next_open01()))
            .collect();
        returns.sort_by(f64::total_cmp);

        let log_weights: Vec<f64> = returns.iter().map(|&r| proposal.log_weight(r)).collect();
        if let Some(&lw) = log_weights.iter().find(|lw| **lw > MAX_LOG_WEIGHT) {
            return Err(Error::WeightOverflow { log_weight: lw });
        }
        let diagnostics = diagnostics_from_log_weights(&log_weights)?;

        let mut cum_weight = Vec::with_capacity(n + 1);
        let mut cum_weight_sq = Vec::with_capacity(n + 1);
        let (mut s, mut s2) = (0.0, 0.0);
        cum_weight.push(0.0);
        cum_weight_sq.push(0.0);
        for lw in log_weights {
            let w = lw.exp();
            s += w;
            s2 += w * w;
            cum_weight.push(s);
            cum_weight_sq.push(s2);
        }
        Ok(Self {
            proposal,
            sorted_returns: returns,
            cum_weight,
            cum_weight_sq,
            diagnostics,
        })
    }

    pub fn proposal(&self) -> &TiltedProposal {
        &self.proposal
    }

    pub fn len(&self) -> usize {
        self.sorted_returns.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted_returns.is_empty()
    }

    /// Diagnostics over all `N` draws; independent of any threshold.
    pub fn diagnostics(&self) -> ISDiagnostics {
        self.diagnostics
    }

    /// `(1/N) * sum 1{R_i < -x} W(R_i)`.
    pub fn tail_probability(&self, x: f64) -> TailEstimate {
        let hits = self.sorted_returns.partition_point(|&r| r < -x);
        let n = self.len() as f64;
        let p = self.cum_weight[hits] / n;
        let second = self.cum_weight_sq[hits] / n;
        TailEstimate {
            probability: p,
            hits,
            std_error: ((second - p * p).max(0.0) / n).sqrt(),
        }
    }
}

/// Tail estimate plus the weight diagnostics of the draws behind it.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TailProbabilityEstimate {
    pub estimate: TailEstimate,
    pub diagnostics: ISDiagnostics,
}

pub fn estimate_tail_probability(
    model: &NominalModel,
    theta: f64,
    x: f64,
    n: usize,
    seed: Seed,
) -> Result<TailProbabilityEstimate> {
    let sample = ProposalSample::draw(TiltedProposal::new(*model, theta)?, n, seed)?;
    Ok(TailProbabilityEstimate {
        estimate: sample.tail_probability(x),
        diagnostics: sample.diagnostics(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct VarSolveOptions {
    pub n_samples: usize,
    /// Final bracket width (return units).
    pub tolerance: f64,
    pub max_iter: usize,
    /// Initial bracket half-width around the pilot VaR, in units of `sigma_hat`.
    pub bracket_sigmas: f64,
    /// Number of outward doublings tried before giving up on the bracket.
    pub max_expansions: usize,
}

impl Default for VarSolveOptions {
    fn default() -> Self {
        Self {
            n_samples: 100_000,
            tolerance: 1e-6,
            max_iter: 100,
            bracket_sigmas: 6.0,
            max_expansions: 5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ISVarResult {
    pub var_estimate: f64,
    pub bracket_lo: f64,
    pub bracket_hi: f64,
    pub iterations: usize,
    pub diagnostics: ISDiagnostics,
    pub n_samples: usize,
    /// `1 - alpha`.
    pub target_tail: f64,
    pub theta: f64,
    pub pilot_var: f64,
    /// Standard error of the tail estimate at `var_estimate`.
    pub tail_std_error: f64,
}

impl ISVarResult {
    pub fn degenerate_tilt(&self) -> bool {
        self.theta <= 0.0
    }
}

/// Solves `p_hat(x) = 1 - alpha` by bisection under common random numbers.
pub fn solve_var_bisection(
    model: &NominalModel,
    alpha: f64,
    seed: Seed,
    opts: &VarSolveOptions,
) -> Result<ISVarResult> {
    if !(opts.tolerance > 0.0) {
        return Err(Error::domain(format!("tolerance must be positive, got {}", opts.tolerance)));
    }
    let pilot_var = gaussian_var(model, alpha)?;
    let proposal = TiltedProposal::new(*model, model.mu_hat + pilot_var)?;
    let sample = ProposalSample::draw(proposal, opts.n_samples, seed)?;
    let target = 1.0 - alpha;
    let p = |x: f64| sample.tail_probability(x).probability;

    let mut half = opts.bracket_sigmas * model.sigma_hat;
    let (mut lo, mut hi) = (pilot_var - half, pilot_var + half);
    let mut expansions = 0;
    while !(p(lo) >= target && p(hi) <= target) {
        if expansions == opts.max_expansions {
            return Err(Error::BracketNotFound { lo, hi });
        }
        half *= 2.0;
        lo = pilot_var - half;
        hi = pilot_var + half;
        expansions += 1;
    }

    let mut iterations = 0;
    while hi - lo > opts.tolerance {
        if iterations == opts.max_iter {
            return Err(Error::NoConvergence { lo, hi, iterations });
        }
        let mid = 0.5 * (lo + hi);
        if p(mid) >= target {
            lo = mid;
        } else {
            hi = mid;
        }
        iterations += 1;
    }

    let var_estimate = 0.5 * (lo + hi);
    Ok(ISVarResult {
        var_estimate,
        bracket_lo: lo,
        bracket_hi: hi,
        iterations,
        diagnostics: sample.diagnostics(),
        n_samples: opts.n_samples,
        target_tail: target,
        theta: proposal.theta,
        pilot_var,
        tail_std_error: sample.tail_probability(var_estimate).std_error,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::distributions::{normal_cdf, normal_pdf, normal_quantile, UniformStream};

    fn model(mu: f64, sigma: f64) -> NominalModel {
        NominalModel::new(mu, sigma).unwrap()
    }

    fn gaussian_density(mean: f64, sigma: f64, r: f64) -> f64 {
        normal_pdf((r - mean) / sigma) / sigma
    }

    #[test]
    fn pilot_tilt_examples() {
        let m = model(0.0, 0.01);
        let theta = tilt_from_pilot(&m, 0.99).unwrap();
        assert!((theta - 0.023_263_5).abs() < 1e-7);
        assert_eq!(tilt_from_pilot(&model(0.0, 0.4), 0.5).unwrap(), 0.0);
        let m = model(0.0007, 0.012);
        let proposal = TiltedProposal::pilot(m, 0.995).unwrap();
        let x0 = gaussian_var(&m, 0.995).unwrap();
        assert!((proposal.mean() + x0).abs() < 1e-15);
        assert!(!proposal.is_degenerate());
        assert!(TiltedProposal::pilot(m, 0.2).unwrap().is_degenerate());
    }

    #[test]
    fn likelihood_ratio_special_points() {
        let m = model(0.0003, 0.011);
        for r in [-0.1, -0.01, 0.0, 0.02] {
            assert_eq!(likelihood_ratio(&m, 0.0, r).unwrap(), 1.0);
        }
        let theta = 0.025;
        let w = likelihood_ratio(&m, theta, m.mu_hat - theta / 2.0).unwrap();
        assert!((w - 1.0).abs() < 1e-14);
    }

    #[test]
    fn likelihood_ratio_matches_density_ratio() {
        let m = model(0.0004, 0.013);
        let theta = 0.03;
        let mut s = UniformStream::new(Seed(17));
        for _ in 0..100 {
            let r = -0.08 + 0.12 * s.next_open01();
            let ratio = gaussian_density(m.mu_hat, m.sigma_hat, r)
                / gaussian_density(m.mu_hat - theta, m.sigma_hat, r);
            let closed = likelihood_ratio(&m, theta, r).unwrap();
            assert!((closed / ratio - 1.0).abs() < 1e-12, "r={r}");
        }
    }

    #[test]
    fn likelihood_ratio_overflow_is_reported() {
        let m = model(0.0, 0.001);
        match likelihood_ratio(&m, 1.0, 10.0) {
            Err(Error::WeightOverflow { log_weight }) => assert!(log_weight > 709.0),
            other => panic!("expected overflow, got {other:?}"),
        }
    }

    #[test]
    fn diagnostics_examples() {
        let d = diagnostics_from_weights(&[2.5; 8]).unwrap();
        assert!((d.ess - 8.0).abs() < 1e-12);
        assert!((d.max_weight_share - 0.125).abs() < 1e-15);

        let d = diagnostics_from_weights(&[0.0, 0.0, 3.0, 0.0]).unwrap();
        assert_eq!(d.ess, 1.0);
        assert_eq!(d.max_weight_share, 1.0);

        let d = diagnostics_from_weights(&[1.0, 1.0, 2.0]).unwrap();
        assert!((d.ess - 8.0 / 3.0).abs() < 1e-14);
        assert_eq!(d.max_weight_share, 0.5);

        assert!(matches!(
            diagnostics_from_weights(&[0.0, 0.0]),
            Err(Error::DegenerateWeights)
        ));
        assert!(diagnostics_from_weights(&[1.0, -1.0]).is_err());
    }

    #[test]
    fn log_weight_diagnostics_survive_huge_logs() {
        let d = diagnostics_from_log_weights(&[1000.0, 1000.0, 1000.0 + 2f64.ln()]).unwrap();
        assert!((d.ess - 8.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn naive_median_threshold() {
        let m = model(0.001, 0.01);
        let n = 40_000;
        let est = estimate_tail_probability(&m, 0.0, -m.mu_hat, n, Seed(3)).unwrap();
        assert!((est.estimate.probability - 0.5).abs() < 3.0 / (n as f64).sqrt());
        assert!((est.diagnostics.ess - n as f64).abs() < 1e-6);
    }

    #[test]
    fn zero_hits_flag() {
        let m = model(0.0, 0.01);
        let est = estimate_tail_probability(&m, 0.0, 1.0, 1000, Seed(3)).unwrap();
        assert_eq!(est.estimate.probability, 0.0);
        assert!(est.estimate.is_zero_hits());
    }

    #[test]
    fn tail_estimate_is_unbiased_across_seeds() {
        let m = model(0.0, 0.01);
        let theta = tilt_from_pilot(&m, 0.99).unwrap();
        let x = 0.025;
        let exact = normal_cdf((-x - m.mu_hat) / m.sigma_hat);
        let estimates: Vec<f64> = (0..200)
            .map(|s| {
                estimate_tail_probability(&m, theta, x, 2_000, Seed(1000 + s))
                    .unwrap()
                    .estimate
                    .probability
            })
            .collect();
        let k = estimates.len() as f64;
        let mean = estimates.iter().sum::<f64>() / k;
        let sd = (estimates.iter().map(|p| (p - mean).powi(2)).sum::<f64>() / (k - 1.0)).sqrt();
        assert!((mean - exact).abs() < 4.0 * sd / k.sqrt());
    }

    #[test]
    fn crn_monotone_in_threshold() {
        let m = model(0.0002, 0.012);
        let sample = ProposalSample::draw(TiltedProposal::pilot(m, 0.99).unwrap(), 5_000, Seed(9)).unwrap();
        let mut prev = f64::INFINITY;
        for k in 0..400 {
            let x = -0.01 + k as f64 * 1e-4;
            let p = sample.tail_probability(x).probability;
            assert!(p <= prev);
            prev = p;
        }
    }

    #[test]
    fn sorted_prefix_sum_matches_direct_sum() {
        let m = model(0.0, 0.01);
        let proposal = TiltedProposal::pilot(m, 0.99).unwrap();
        let n = 3_000;
        let sample = ProposalSample::draw(proposal, n, Seed(4)).unwrap();
        let mut stream = Seed(4).stream();
        let draws: Vec<f64> = (0..n)
            .map(|_| proposal.mean() + m.sigma_hat * normal_quantile(stream.next_open01()).unwrap())
            .collect();
        for x in [0.015, 0.02, 0.0232, 0.03] {
            let direct = draws
                .iter()
                .filter(|&&r| r < -x)
                .map(|&r| proposal.weight(r).unwrap())
                .sum::<f64>()
                / n as f64;
            let fast = sample.tail_probability(x).probability;
            assert!((direct - fast).abs() < 1e-14, "x={x}");
        }
    }

    #[test]
    fn baseline_nominal_var() {
        let m = model(0.0, 0.01);
        let r = solve_var_bisection(&m, 0.99, Seed(2024), &VarSolveOptions::default()).unwrap();
        let exact = 0.023_263_478_740_408_4;
        let density = normal_pdf(exact / m.sigma_hat) / m.sigma_hat;
        let se = r.tail_std_error / density;
        assert!((r.var_estimate - exact).abs() < 2.0 * se, "{} vs {exact} (se {se})", r.var_estimate);
        assert!(r.bracket_lo <= r.var_estimate && r.var_estimate <= r.bracket_hi);
        assert!(r.bracket_hi - r.bracket_lo <= 1e-6);
        assert!((r.target_tail - 0.01).abs() < 1e-15);
    }

    #[test]
    fn result_independent_of_initial_bracket() {
        let m = model(0.0003, 0.013);
        let base = VarSolveOptions {
            n_samples: 20_000,
            ..Default::default()
        };
        let a = solve_var_bisection(&m, 0.995, Seed(5), &base).unwrap();
        for w in [1.0, 3.0, 10.0, 25.0] {
            let b = solve_var_bisection(&m, 0.995, Seed(5), &VarSolveOptions { bracket_sigmas: w, ..base })
                .unwrap();
            assert!((a.var_estimate - b.var_estimate).abs() <= base.tolerance);
        }
    }

    #[test]
    fn median_of_symmetric_loss() {
        let m = model(0.0, 0.01);
        let opts = VarSolveOptions::default();
        let r = solve_var_bisection(&m, 0.5, Seed(8), &opts).unwrap();
        assert_eq!(r.theta, 0.0);
        // Sample median noise: sd = sigma * sqrt(pi / 2) / sqrt(N).
        let sd = 0.01 * (std::f64::consts::PI / 2.0).sqrt() / (opts.n_samples as f64).sqrt();
        assert!(r.var_estimate.abs() < 4.0 * sd + opts.tolerance);
    }

    #[test]
    fn solver_errors() {
        let m = model(0.0, 0.01);
        let opts = VarSolveOptions {
            n_samples: 1_000,
            ..Default::default()
        };
        assert!(solve_var_bisection(&m, 0.99, Seed(1), &VarSolveOptions { tolerance: 0.0, ..opts }).is_err());
        assert!(solve_var_bisection(&m, 0.99, Seed(1), &VarSolveOptions { n_samples: 0, ..opts }).is_err());
        match solve_var_bisection(&m, 0.99, Seed(1), &VarSolveOptions { max_iter: 3, ..opts }) {
            Err(Error::NoConvergence { lo, hi, iterations }) => {
                assert_eq!(iterations, 3);
                assert!(hi > lo);
            }
            other => panic!("expected convergence error, got {other:?}"),
        }
        // A near-zero half-width cannot straddle the crossing even after doubling.
        match solve_var_bisection(&m, 0.99, Seed(1), &VarSolveOptions { bracket_sigmas: 1e-9, max_expansions: 2, ..opts }) {
            Err(Error::BracketNotFound { .. }) => {}
            other => panic!("expected bracketing failure, got {other:?}"),
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #![proptest_config(ProptestConfig::with_cases(48))]

            #[test]
            fn diagnostics_bounds(ws in proptest::collection::vec(0.0f64..1e3, 1..200)) {
                prop_assume!(ws.iter().any(|w| *w > 0.0));
                let d = diagnostics_from_weights(&ws).unwrap();
                let n = ws.len() as f64;
                prop_assert!(d.ess >= 1.0 && d.ess <= n);
                prop_assert!(d.max_weight_share >= 1.0 / n && d.max_weight_share <= 1.0);
            }

            #[test]
            fn solved_var_brackets(seed in any::<u64>(), alpha in 0.9f64..0.999) {
                let m = NominalModel::new(0.0005, 0.012).unwrap();
                let opts = VarSolveOptions { n_samples: 2_000, ..Default::default() };
                let r = solve_var_bisection(&m, alpha, Seed(seed), &opts).unwrap();
                prop_assert!(r.bracket_lo <= r.var_estimate && r.var_estimate <= r.bracket_hi);
                prop_assert!(r.bracket_hi - r.bracket_lo <= opts.tolerance);
            }
        }
    }
}
