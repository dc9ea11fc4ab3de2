use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use tailvar::calibration::{fit_gaussian_mle, gaussian_var, log_returns, NominalModel};
use tailvar::distributions::Seed;
use tailvar::dmm::{build_grid, nominal_moments, moment_sweep, FrontierBreak, MomentSourceSetting};
use tailvar::experiment::{emit_figure_data, run_experiment, summarize, ExperimentConfig};
use tailvar::importance_sampling::{solve_var_bisection, VarSolveOptions};
use tailvar::io::{self, OutputWriter, RunManifest};

#[derive(Parser, Debug)]
#[command(name = "tailvar", version, about = "Importance-sampling and moment-bracketing VaR")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Master seed; defaults to the configured or built-in seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Directory for report files.
    #[arg(long)]
    out_dir: Option<PathBuf>,
}

/// Where the nominal model comes from: a price file or explicit parameters.
#[derive(Args, Debug)]
struct ModelArgs {
    /// Price CSV with `date` and `close` columns; overrides --mu/--sigma.
    #[arg(long)]
    prices: Option<PathBuf>,
    #[arg(long, default_value_t = 0.0005, allow_negative_numbers = true)]
    mu: f64,
    #[arg(long, default_value_t = 0.013)]
    sigma: f64,
}

impl ModelArgs {
    fn model(&self) -> tailvar::Result<NominalModel> {
        match &self.prices {
            Some(p) => fit_gaussian_mle(&log_returns(&io::load_price_csv(p)?)),
            None => NominalModel::new(self.mu, self.sigma),
        }
    }
}

#[derive(ValueEnum, Clone, Copy, Debug)]
enum Moments {
    Sampled,
    Analytic,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Fit the Gaussian model to prices and print its VaR.
    Calibrate {
        #[arg(long)]
        prices: PathBuf,
        #[arg(long, value_delimiter = ',', default_values_t = vec![0.99, 0.995])]
        alpha: Vec<f64>,
        #[command(flatten)]
        common: Common,
    },
    /// One importance-sampling VaR solve with diagnostics.
    IsVar {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 0.99)]
        alpha: f64,
        #[arg(long, default_value_t = 100_000)]
        n: usize,
        #[arg(long, default_value_t = 1e-6)]
        tolerance: f64,
        #[arg(long, default_value_t = 100)]
        max_iter: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Moment-bracketing sweep over orders 1..=d-max.
    DmmBounds {
        #[command(flatten)]
        model: ModelArgs,
        #[arg(long, default_value_t = 0.99)]
        alpha: f64,
        #[arg(long, default_value_t = 12)]
        d_max: usize,
        #[arg(long, default_value_t = 200)]
        grid_m: usize,
        #[arg(long, default_value_t = 8.0)]
        span: f64,
        #[arg(long, value_enum, default_value_t = Moments::Sampled)]
        moments: Moments,
        #[arg(long, default_value_t = 100_000)]
        moment_samples: usize,
        #[command(flatten)]
        common: Common,
    },
    /// Run the full experiment and write reports.
    Simulate {
        /// Key-value config file; a previous manifest also works.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Worker threads; does not change any output.
        #[arg(long)]
        threads: Option<usize>,
        #[command(flatten)]
        common: Common,
    },
    /// Rebuild figure files from stored records.
    Figures {
        /// Defaults to `<out-dir>/records.ndjson`.
        #[arg(long)]
        records: Option<PathBuf>,
        /// Defaults to `<out-dir>/manifest.txt`.
        #[arg(long)]
        config: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli.command) {
        Ok(report) => {
            print!("{report}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn seed_or_default(seed: Option<u64>) -> Seed {
    seed.map(Seed).unwrap_or(ExperimentConfig::default().master_seed)
}

/// Writes the report text to `name` when an output directory was given.
fn save_report(common: &Common, name: &str, text: &str) -> tailvar::Result<()> {
    if let Some(dir) = &common.out_dir {
        OutputWriter::create(dir)?.write(name, text)?;
    }
    Ok(())
}

fn run(cmd: Command) -> tailvar::Result<String> {
    let mut out = String::new();
    match cmd {
        Command::Calibrate { prices, alpha, common } => {
            let returns = log_returns(&io::load_price_csv(&prices)?);
            let model = fit_gaussian_mle(&returns)?;
            let _ = writeln!(out, "mu_hat={}", io::fmt_num(model.mu_hat));
            let _ = writeln!(out, "sigma_hat={}", io::fmt_num(model.sigma_hat));
            let _ = writeln!(out, "T={}", returns.len());
            for a in alpha {
                let _ = writeln!(out, "gaussian_var[{a}]={}", io::fmt_num(gaussian_var(&model, a)?));
            }
            save_report(&common, "calibration.txt", &out)?;
        }
        Command::IsVar { model, alpha, n, tolerance, max_iter, common } => {
            let model = model.model()?;
            let opts = VarSolveOptions {
                n_samples: n,
                tolerance,
                max_iter,
                ..Default::default()
            };
            let r = solve_var_bisection(&model, alpha, seed_or_default(common.seed), &opts)?;
            let _ = writeln!(out, "var={}", io::fmt_num(r.var_estimate));
            let _ = writeln!(out, "pilot_var={}", io::fmt_num(r.pilot_var));
            let _ = writeln!(out, "theta={}", io::fmt_num(r.theta));
            let _ = writeln!(out, "bracket={},{}", io::fmt_num(r.bracket_lo), io::fmt_num(r.bracket_hi));
            let _ = writeln!(out, "iterations={}", r.iterations);
            let _ = writeln!(out, "tail_std_error={}", io::fmt_num(r.tail_std_error));
            let _ = writeln!(out, "ess={}", io::fmt_num(r.diagnostics.ess));
            let _ = writeln!(out, "max_weight_share={}", io::fmt_num(r.diagnostics.max_weight_share));
            save_report(&common, "is_var.txt", &out)?;
        }
        Command::DmmBounds {
            model,
            alpha,
            d_max,
            grid_m,
            span,
            moments,
            moment_samples,
            common,
        } => {
            let model = model.model()?;
            let source = match moments {
                Moments::Sampled => MomentSourceSetting::Sampled { n: moment_samples },
                Moments::Analytic => MomentSourceSetting::Analytic,
            };
            let grid = build_grid(&model, grid_m, span)?;
            let mv = nominal_moments(&model, d_max, source, seed_or_default(common.seed))?;
            let sweep = moment_sweep(&grid, &mv, alpha, d_max)?;
            let _ = writeln!(out, "d,lower,upper,width");
            for b in sweep.feasible_brackets() {
                let _ = writeln!(
                    out,
                    "{},{},{},{}",
                    b.moment_order,
                    io::fmt_num(b.lower),
                    io::fmt_num(b.upper),
                    io::fmt_num(b.width())
                );
            }
            match sweep.frontier {
                Some(FrontierBreak::Infeasible { order, residual }) => {
                    let _ = writeln!(out, "# order {order} infeasible (phase-one residual {residual:.3e})");
                }
                Some(FrontierBreak::NumericalFailure { order, threshold }) => {
                    let _ = writeln!(out, "# order {order} numerically unstable at threshold {threshold}");
                }
                None => {}
            }
            let _ = writeln!(out, "d_star={}", sweep.d_star.unwrap_or(0));
            save_report(&common, "dmm_bounds.csv", &out)?;
        }
        Command::Simulate { config, threads, common } => {
            let mut cfg = match &config {
                Some(p) => io::load_config(p)?,
                None => ExperimentConfig::default(),
            };
            if let Some(s) = common.seed {
                cfg.master_seed = Seed(s);
            }
            if threads.is_some() {
                cfg.threads = threads;
            }
            let dir = common.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
            out = simulate(&cfg, &dir)?;
        }
        Command::Figures { records, config, common } => {
            let dir = common.out_dir.clone().unwrap_or_else(|| PathBuf::from("out"));
            let records_path = records.unwrap_or_else(|| dir.join(io::RECORDS_FILE));
            let config_path = config.unwrap_or_else(|| dir.join(io::MANIFEST_FILE));
            let mut cfg = io::load_config(&config_path)?;
            if let Some(s) = common.seed {
                cfg.master_seed = Seed(s);
            }
            let records = io::read_records(&records_path)?;
            let table = summarize(&cfg, &records);
            let figs = emit_figure_data(&cfg, &table, &records)?;
            let mut w = OutputWriter::create(&dir)?;
            for f in &figs {
                if let Err(e) = w.write(&io::figure_file_name(f), &io::render_figure(f)) {
                    w.abort();
                    return Err(e);
                }
            }
            for name in w.file_names() {
                let _ = writeln!(out, "wrote {}", dir.join(name).display());
            }
        }
    }
    Ok(out)
}

fn simulate(cfg: &ExperimentConfig, dir: &Path) -> tailvar::Result<String> {
    let start = Instant::now();
    let output = run_experiment(cfg)?;
    let figs = emit_figure_data(cfg, &output.summary, &output.records)?;
    let mut w = OutputWriter::create(dir)?;
    let written = (|| -> tailvar::Result<()> {
        w.write(io::SUMMARY_FILE, &io::render_summary(&output.summary))?;
        w.write(io::RECORDS_FILE, &io::render_records(&output.records)?)?;
        for f in &figs {
            w.write(&io::figure_file_name(f), &io::render_figure(f))?;
        }
        let mut files = w.file_names();
        files.push(io::MANIFEST_FILE.to_string());
        let manifest = RunManifest {
            config: cfg.clone(),
            files,
            cells: output
                .summary
                .cells
                .iter()
                .map(|c| (c.nu, c.alpha, c.n_success, c.n_failed))
                .collect(),
            wall_clock_seconds: start.elapsed().as_secs_f64(),
        };
        w.write(io::MANIFEST_FILE, &io::render_manifest(&manifest))?;
        Ok(())
    })();
    if let Err(e) = written {
        w.abort();
        return Err(e);
    }
    let mut out = String::new();
    let _ = writeln!(out, "nu,alpha,trueVaR,IS_mean,IS_bias,ESS,maxW,dmm_lower,dmm_upper,d_star,ok,failed");
    for c in &output.summary.cells {
        let _ = writeln!(
            out,
            "{},{},{:.6},{:.6},{:.6},{:.1},{:.4},{:.6},{:.6},{},{},{}",
            c.nu,
            c.alpha,
            c.true_var_mean,
            c.is_mean,
            c.is_bias,
            c.ess_mean,
            c.maxw_mean,
            c.dmm_lower_mean,
            c.dmm_upper_mean,
            c.dmm_d_star,
            c.n_success,
            c.n_failed
        );
    }
    let _ = writeln!(out, "wrote {} files to {}", w.written().len(), dir.display());
    Ok(out)
}
