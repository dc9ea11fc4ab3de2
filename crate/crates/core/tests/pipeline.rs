use std::fmt::Write as _;
use std::fs;

use proptest::prelude::*;
use tailvar::calibration::{fit_gaussian_mle, gaussian_var, log_returns};
use tailvar::distributions::Seed;
use tailvar::dmm::{dmm_estimate, DmmSettings, MomentSourceSetting};
use tailvar::experiment::{emit_figure_data, run_experiment, summarize, ExperimentConfig};
use tailvar::importance_sampling::{solve_var_bisection, VarSolveOptions};
use tailvar::io;
use tailvar::lp_solver::{solve, LinearProgram, LpStatus, Sense};
use tailvar::truth::{sample_true_returns, TrueModel};

/// Prices from a compounded return path, written in shuffled order.
fn price_file(returns: &[f64]) -> String {
    let start = chrono::NaiveDate::from_ymd_opt(2020, 1, 1).unwrap();
    let mut rows = Vec::new();
    let mut s = 100.0;
    rows.push((start, s));
    for (k, r) in returns.iter().enumerate() {
        s *= r.exp();
        rows.push((start + chrono::Days::new(k as u64 + 1), s));
    }
    rows.reverse();
    let mut text = String::from("date,close\n");
    for (d, c) in rows {
        let _ = writeln!(text, "{d},{c:.12}");
    }
    text
}

#[test]
fn prices_to_brackets() {
    let truth = TrueModel::variance_matched(5.0, 0.0005, 0.013).unwrap();
    let returns = sample_true_returns(&truth, 1500, Seed(8)).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("prices.csv");
    fs::write(&path, price_file(returns.values())).unwrap();

    let prices = io::load_price_csv(&path).unwrap();
    assert_eq!(prices.len(), 1501);
    let model = fit_gaussian_mle(&log_returns(&prices)).unwrap();
    let direct = fit_gaussian_mle(&returns).unwrap();
    assert!((model.mu_hat - direct.mu_hat).abs() < 1e-10);
    assert!((model.sigma_hat - direct.sigma_hat).abs() < 1e-10);

    let x0 = gaussian_var(&model, 0.99).unwrap();
    let is = solve_var_bisection(&model, 0.99, Seed(2), &VarSolveOptions::default()).unwrap();
    assert!((is.var_estimate - x0).abs() < 0.02 * x0);

    let settings = DmmSettings {
        d_max: 8,
        moments: MomentSourceSetting::Analytic,
        ..Default::default()
    };
    let est = dmm_estimate(&model, 0.99, &settings, Seed(3)).unwrap();
    assert!(est.bracket.contains(x0));
    // The Gaussian bracket does not see the heavier t tail.
    assert!(truth.var(0.995).unwrap() > x0);
}

#[test]
fn reports_round_trip_through_files() {
    let cfg = ExperimentConfig {
        nus: vec![5.0, 10.0],
        m_reps: 3,
        n_mc: 2_000,
        t_obs: 400,
        dmm: DmmSettings {
            d_max: 4,
            moments: MomentSourceSetting::Sampled { n: 4_000 },
            ..Default::default()
        },
        ..Default::default()
    };
    let out = run_experiment(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let mut w = io::OutputWriter::create(dir.path()).unwrap();
    let summary = w.write(io::SUMMARY_FILE, &io::render_summary(&out.summary)).unwrap();
    let records = w.write(io::RECORDS_FILE, &io::render_records(&out.records).unwrap()).unwrap();

    let back = io::read_summary(&summary).unwrap();
    assert_eq!(io::render_summary(&back), fs::read_to_string(&summary).unwrap());
    assert_eq!(back.cells.len(), 4);

    let recs = io::read_records(&records).unwrap();
    assert_eq!(recs, out.records);
    assert_eq!(summarize(&cfg, &recs), out.summary);

    let figs = emit_figure_data(&cfg, &out.summary, &recs).unwrap();
    for f in &figs {
        let text = io::render_figure(f);
        assert_eq!(text.lines().count(), f.rows.len() + 1, "{}", f.name);
        assert!(f.name.starts_with("figure_"));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn optimal_points_are_feasible(
        n in 2usize..7,
        rows in prop::collection::vec(prop::collection::vec(-3.0f64..3.0, 6), 1..4),
        weights in prop::collection::vec(0.1f64..2.0, 6),
        x in prop::collection::vec(0.0f64..2.0, 6),
        cost in prop::collection::vec(-1.0f64..1.0, 6),
    ) {
        // A known nonnegative point and a positive row make the program feasible and bounded.
        let mut a: Vec<Vec<f64>> = vec![weights[..n].to_vec()];
        a.extend(rows.iter().take(n - 1).map(|r| r[..n].to_vec()));
        let b: Vec<f64> = a.iter().map(|r| r.iter().zip(&x).map(|(p, q)| p * q).sum()).collect();
        let lp = LinearProgram::new(cost[..n].to_vec(), Sense::Minimize, a.clone(), b.clone()).unwrap();
        let out = solve(&lp).unwrap();
        prop_assert_eq!(out.status, LpStatus::Optimal);
        let sol = out.solution.unwrap();
        prop_assert!(sol.iter().all(|&v| v >= -1e-9));
        for (row, rhs) in a.iter().zip(&b) {
            let lhs: f64 = row.iter().zip(&sol).map(|(p, q)| p * q).sum();
            prop_assert!((lhs - rhs).abs() < 1e-7 * (1.0 + rhs.abs()));
        }
        let known: f64 = cost[..n].iter().zip(&x).map(|(c, v)| c * v).sum();
        prop_assert!(out.value.unwrap() <= known + 1e-8);
    }
}
