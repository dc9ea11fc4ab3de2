//! File formats: price CSV input, key-value configuration, summary CSV,
//! line-delimited JSON records, figure CSVs and the run manifest.
//!
//! Report numbers use ten significant digits so that a written table re-reads
//! to the same text.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use chrono::NaiveDate;

use crate::calibration::PriceSeries;
use crate::distributions::Seed;
use crate::dmm::MomentSourceSetting;
use crate::error::{Error, Result};
use crate::experiment::{ExperimentConfig, FigureData, ReplicationRecord, SummaryCell, SummaryTable};

pub const SUMMARY_FILE: &str = "summary.csv";
pub const RECORDS_FILE: &str = "records.ndjson";
pub const MANIFEST_FILE: &str = "manifest.txt";

/// Columns of `summary.csv`, in order.
pub const SUMMARY_COLUMNS: [&str; 13] = [
    "nu",
    "alpha",
    "trueVaR",
    "IS_mean",
    "IS_std",
    "IS_bias",
    "ESS",
    "maxW",
    "dmm_lower",
    "dmm_upper",
    "dmm_width",
    "dmm_mid_bias",
    "dmm_d_star",
];

/// Ten significant digits in scientific notation.
pub fn fmt_num(x: f64) -> String {
    format!("{x:.9e}")
}

/// Reads `date,close` rows (header required, extra columns ignored) and
/// returns them sorted by date.
pub fn load_price_csv(path: &Path) -> Result<PriceSeries> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_price_csv(&text, path)
}

pub fn parse_price_csv(text: &str, path: &Path) -> Result<PriceSeries> {
    let parse_err = |row: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        message,
    };
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(text.as_bytes());
    let headers = reader
        .headers()
        .map_err(|e| parse_err(1, e.to_string()))?
        .clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h.eq_ignore_ascii_case(name))
            .ok_or_else(|| parse_err(1, format!("missing column `{name}`")))
    };
    let (date_col, close_col) = (find("date")?, find("close")?);

    let mut rows: Vec<(NaiveDate, f64, usize)> = Vec::new();
    for (i, rec) in reader.records().enumerate() {
        // Line numbers count the header as line 1.
        let line = i + 2;
        let rec = rec.map_err(|e| parse_err(line, e.to_string()))?;
        let field = |k: usize| rec.get(k).unwrap_or("");
        let date = NaiveDate::parse_from_str(field(date_col), "%Y-%m-%d")
            .map_err(|e| parse_err(line, format!("bad date `{}`: {e}", field(date_col))))?;
        let close: f64 = field(close_col)
            .parse()
            .map_err(|_| parse_err(line, format!("bad close `{}`", field(close_col))))?;
        if !(close > 0.0 && close.is_finite()) {
            return Err(parse_err(line, format!("close must be positive, got {close}")));
        }
        rows.push((date, close, line));
    }
    rows.sort_by_key(|r| r.0);
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(parse_err(w[1].2, format!("duplicate date {}", w[1].0)));
    }
    let (dates, closes) = rows.into_iter().map(|(d, c, _)| (d, c)).unzip();
    PriceSeries::new(dates, closes)
}

/// Key-value configuration: one `key = value` per line, `#` comments, lists
/// comma-separated. Keys not given keep their defaults. Keys starting with
/// `manifest.` are skipped, so a run manifest is itself a valid config.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::default();
    let mut moment_kind = None;
    let mut moment_n = None;
    for (i, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |msg: String| Error::Config(format!("line {}: {msg}", i + 1));
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| err(format!("expected `key = value`, got `{line}`")))?;
        let (key, value) = (key.trim(), value.trim());
        if key.starts_with("manifest.") {
            continue;
        }
        let num = |v: &str| v.parse::<f64>().map_err(|_| err(format!("`{key}`: bad number `{v}`")));
        let int = |v: &str| v.parse::<usize>().map_err(|_| err(format!("`{key}`: bad count `{v}`")));
        let list = |v: &str| v.split(',').map(|s| num(s.trim())).collect::<Result<Vec<f64>>>();
        match key {
            "alphas" => cfg.alphas = list(value)?,
            "nus" => cfg.nus = list(value)?,
            "n_mc" => cfg.n_mc = int(value)?,
            "m_reps" => cfg.m_reps = int(value)?,
            "t_obs" => cfg.t_obs = int(value)?,
            "master_seed" => {
                cfg.master_seed = Seed(value.parse().map_err(|_| err(format!("bad seed `{value}`")))?)
            }
            "mu" => cfg.mu = num(value)?,
            "sigma" => cfg.sigma = num(value)?,
            "dmm_grid_m" => cfg.dmm.grid_m = int(value)?,
            "dmm_span" => cfg.dmm.span = num(value)?,
            "dmm_d_max" => cfg.dmm.d_max = int(value)?,
            "dmm_moments" => moment_kind = Some(value.to_string()),
            "dmm_moment_samples" => moment_n = Some(int(value)?),
            "is_tolerance" => cfg.is_tolerance = num(value)?,
            "is_max_iter" => cfg.is_max_iter = int(value)?,
            "threads" => {
                cfg.threads = match value {
                    "auto" => None,
                    v => Some(int(v)?),
                }
            }
            _ => return Err(err(format!("unknown key `{key}`"))),
        }
    }
    let default_n = match cfg.dmm.moments {
        MomentSourceSetting::Sampled { n } => n,
        MomentSourceSetting::Analytic => 100_000,
    };
    cfg.dmm.moments = match moment_kind.as_deref() {
        None | Some("sampled") => MomentSourceSetting::Sampled {
            n: moment_n.unwrap_or(default_n),
        },
        Some("analytic") => MomentSourceSetting::Analytic,
        Some(other) => {
            return Err(Error::Config(format!(
                "dmm_moments must be `sampled` or `analytic`, got `{other}`"
            )))
        }
    };
    cfg.validate()?;
    Ok(cfg)
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_config(&text).map_err(|e| match e {
        Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
        other => other,
    })
}

/// Every configuration key with its value, in the format [`parse_config`] reads.
pub fn render_config(cfg: &ExperimentConfig) -> String {
    let join = |xs: &[f64]| xs.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(", ");
    let mut s = String::new();
    let _ = writeln!(s, "alphas = {}", join(&cfg.alphas));
    let _ = writeln!(s, "nus = {}", join(&cfg.nus));
    let _ = writeln!(s, "n_mc = {}", cfg.n_mc);
    let _ = writeln!(s, "m_reps = {}", cfg.m_reps);
    let _ = writeln!(s, "t_obs = {}", cfg.t_obs);
    let _ = writeln!(s, "master_seed = {}", cfg.master_seed.0);
    let _ = writeln!(s, "mu = {}", cfg.mu);
    let _ = writeln!(s, "sigma = {}", cfg.sigma);
    let _ = writeln!(s, "dmm_grid_m = {}", cfg.dmm.grid_m);
    let _ = writeln!(s, "dmm_span = {}", cfg.dmm.span);
    let _ = writeln!(s, "dmm_d_max = {}", cfg.dmm.d_max);
    match cfg.dmm.moments {
        MomentSourceSetting::Analytic => {
            let _ = writeln!(s, "dmm_moments = analytic");
        }
        MomentSourceSetting::Sampled { n } => {
            let _ = writeln!(s, "dmm_moments = sampled");
            let _ = writeln!(s, "dmm_moment_samples = {n}");
        }
    }
    let _ = writeln!(s, "is_tolerance = {}", cfg.is_tolerance);
    let _ = writeln!(s, "is_max_iter = {}", cfg.is_max_iter);
    let _ = writeln!(
        s,
        "threads = {}",
        cfg.threads.map_or("auto".to_string(), |t| t.to_string())
    );
    s
}

pub fn render_summary(table: &SummaryTable) -> String {
    let mut s = SUMMARY_COLUMNS.join(",");
    s.push('\n');
    for c in &table.cells {
        let nums = [
            c.true_var_mean,
            c.is_mean,
            c.is_std,
            c.is_bias,
            c.ess_mean,
            c.maxw_mean,
            c.dmm_lower_mean,
            c.dmm_upper_mean,
            c.dmm_width_mean,
            c.dmm_mid_bias,
        ];
        let _ = write!(s, "{},{}", c.nu, c.alpha);
        for x in nums {
            let _ = write!(s, ",{}", fmt_num(x));
        }
        let _ = writeln!(s, ",{}", c.dmm_d_star);
    }
    s
}

/// Reads a table written by [`render_summary`]. Replication counts are not
/// part of the file and come back as zero; variance and MSE are rebuilt from
/// the standard deviation and bias.
pub fn parse_summary(text: &str, path: &Path) -> Result<SummaryTable> {
    let parse_err = |row: usize, message: String| Error::Parse {
        path: path.to_path_buf(),
        row,
        message,
    };
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| parse_err(1, "empty file".into()))?;
    if header.split(',').ne(SUMMARY_COLUMNS.iter().copied()) {
        return Err(parse_err(1, format!("unexpected header `{header}`")));
    }
    let mut cells = Vec::new();
    for (i, line) in lines.enumerate() {
        let row = i + 2;
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != SUMMARY_COLUMNS.len() {
            return Err(parse_err(row, format!("expected {} fields", SUMMARY_COLUMNS.len())));
        }
        let f = |k: usize| -> Result<f64> {
            fields[k]
                .parse()
                .map_err(|_| parse_err(row, format!("bad number `{}` in `{}`", fields[k], SUMMARY_COLUMNS[k])))
        };
        let is_std = f(4)?;
        let is_bias = f(5)?;
        let is_variance = is_std * is_std;
        cells.push(SummaryCell {
            nu: f(0)?,
            alpha: f(1)?,
            n_success: 0,
            n_failed: 0,
            insufficient: f(3)?.is_nan(),
            true_var_mean: f(2)?,
            is_mean: f(3)?,
            is_std,
            is_bias,
            is_variance,
            is_mse: is_bias * is_bias + is_variance,
            ess_mean: f(6)?,
            maxw_mean: f(7)?,
            dmm_lower_mean: f(8)?,
            dmm_upper_mean: f(9)?,
            dmm_width_mean: f(10)?,
            dmm_mid_bias: f(11)?,
            dmm_d_star: fields[12]
                .parse()
                .map_err(|_| parse_err(row, format!("bad order `{}`", fields[12])))?,
        });
    }
    Ok(SummaryTable { cells })
}

pub fn read_summary(path: &Path) -> Result<SummaryTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_summary(&text, path)
}

pub fn render_records(records: &[ReplicationRecord]) -> Result<String> {
    let mut s = String::new();
    for r in records {
        s.push_str(&serde_json::to_string(r)?);
        s.push('\n');
    }
    Ok(s)
}

pub fn read_records(path: &Path) -> Result<Vec<ReplicationRecord>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| {
            serde_json::from_str(l).map_err(|e| Error::Parse {
                path: path.to_path_buf(),
                row: i + 1,
                message: e.to_string(),
            })
        })
        .collect()
}

pub fn figure_file_name(fig: &FigureData) -> String {
    format!("{}.csv", fig.name)
}

pub fn render_figure(fig: &FigureData) -> String {
    let mut s = fig.columns.join(",");
    s.push('\n');
    for row in &fig.rows {
        let cells: Vec<String> = row.iter().map(|x| fmt_num(*x)).collect();
        s.push_str(&cells.join(","));
        s.push('\n');
    }
    s
}

/// Metadata lines for `manifest.txt`; the config echo is prepended by
/// [`render_manifest`].
#[derive(Debug, Clone, PartialEq)]
pub struct RunManifest {
    pub config: ExperimentConfig,
    pub files: Vec<String>,
    /// `(nu, alpha, successes, failures)` per cell.
    pub cells: Vec<(f64, f64, usize, usize)>,
    pub wall_clock_seconds: f64,
}

pub fn render_manifest(m: &RunManifest) -> String {
    let mut s = String::from("# tailvar run manifest; usable as --config\n");
    s.push_str(&render_config(&m.config));
    let _ = writeln!(s, "manifest.version = {}", env!("CARGO_PKG_VERSION"));
    for f in &m.files {
        let _ = writeln!(s, "manifest.file = {f}");
    }
    for (nu, alpha, ok, failed) in &m.cells {
        let _ = writeln!(s, "manifest.cell = nu {nu}, alpha {alpha}, succeeded {ok}, failed {failed}");
    }
    let _ = writeln!(s, "manifest.wall_clock_seconds = {:.3}", m.wall_clock_seconds);
    s
}

/// Writes files into one directory and deletes them all again on [`abort`].
///
/// [`abort`]: OutputWriter::abort
#[derive(Debug)]
pub struct OutputWriter {
    dir: PathBuf,
    written: Vec<PathBuf>,
}

impl OutputWriter {
    pub fn create(dir: &Path) -> Result<Self> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            written: Vec::new(),
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn write(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        let path = self.dir.join(name);
        // Register first so a half-written file is also cleaned up.
        self.written.push(path.clone());
        fs::write(&path, contents).map_err(|e| Error::io(&path, e))?;
        Ok(path)
    }

    pub fn written(&self) -> &[PathBuf] {
        &self.written
    }

    pub fn file_names(&self) -> Vec<String> {
        self.written
            .iter()
            .filter_map(|p| p.file_name().map(|n| n.to_string_lossy().into_owned()))
            .collect()
    }

    pub fn abort(self) {
        for p in &self.written {
            let _ = fs::remove_file(p);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::experiment::SummaryCell;

    fn p() -> &'static Path {
        Path::new("prices.csv")
    }

    #[test]
    fn two_row_price_file() {
        let s = parse_price_csv("date,close\n2024-01-02,100\n2024-01-03,101\n", p()).unwrap();
        assert_eq!(s.len(), 2);
        assert_eq!(s.closes(), &[100.0, 101.0]);
    }

    #[test]
    fn zero_close_names_row() {
        let e = parse_price_csv("date,close\n2024-01-02,100\n2024-01-03,0\n", p()).unwrap_err();
        assert!(matches!(e, Error::Parse { row: 3, .. }), "{e}");
        assert!(e.to_string().contains("row 3"));
    }

    #[test]
    fn unsorted_rows_are_sorted() {
        let s = parse_price_csv(
            "close,date\n102,2024-01-04\n100,2024-01-02\n101,2024-01-03\n",
            p(),
        )
        .unwrap();
        assert_eq!(s.closes(), &[100.0, 101.0, 102.0]);
        assert!(s.dates().windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn price_file_errors() {
        let cases = [
            ("date,price\n2024-01-02,1\n", 1),
            ("date,close\n2024-01-02,1\n2024-01-02,2\n", 3),
            ("date,close\n2024-01-02,1\n2024-13-02,2\n", 3),
            ("date,close\n2024-01-02,abc\n2024-01-03,2\n", 2),
        ];
        for (text, row) in cases {
            match parse_price_csv(text, p()) {
                Err(Error::Parse { row: r, .. }) => assert_eq!(r, row, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
    }

    #[test]
    fn config_round_trip() {
        let mut cfg = ExperimentConfig::default();
        cfg.alphas = vec![0.95, 0.999];
        cfg.nus = vec![4.5];
        cfg.dmm.moments = MomentSourceSetting::Analytic;
        cfg.threads = Some(3);
        cfg.master_seed = Seed(u64::MAX);
        assert_eq!(parse_config(&render_config(&cfg)).unwrap(), cfg);
        let d = ExperimentConfig::default();
        assert_eq!(parse_config(&render_config(&d)).unwrap(), d);
        assert_eq!(parse_config("# only a comment\n\n").unwrap(), d);
    }

    #[test]
    fn config_errors() {
        for text in ["bogus = 1", "n_mc = -3", "alphas = 0.9, x", "m_reps", "nus = 1.5", "dmm_moments = exact"] {
            assert!(matches!(parse_config(text), Err(Error::Config(_))), "{text}");
        }
        let e = parse_config("n_mc = 10\nbogus = 1").unwrap_err();
        assert!(e.to_string().contains("line 2"));
    }

    #[test]
    fn manifest_is_a_config() {
        let cfg = ExperimentConfig { m_reps: 7, ..Default::default() };
        let m = RunManifest {
            config: cfg.clone(),
            files: vec!["summary.csv".into()],
            cells: vec![(5.0, 0.99, 7, 0)],
            wall_clock_seconds: 1.25,
        };
        assert_eq!(parse_config(&render_manifest(&m)).unwrap(), cfg);
    }

    fn cell(nu: f64, alpha: f64, k: f64) -> SummaryCell {
        SummaryCell {
            nu,
            alpha,
            n_success: 100,
            n_failed: 0,
            insufficient: false,
            true_var_mean: 0.0334 + k,
            is_mean: 0.0297 + k / 3.0,
            is_std: 0.000_93,
            is_bias: -0.003_64 - k,
            is_variance: 0.000_93f64.powi(2),
            is_mse: 0.0,
            ess_mean: 145.5,
            maxw_mean: 0.0685,
            dmm_lower_mean: 0.0182,
            dmm_upper_mean: 0.0368,
            dmm_width_mean: 0.0186,
            dmm_mid_bias: -0.0059,
            dmm_d_star: 8,
        }
    }

    #[test]
    fn summary_round_trip() {
        let table = SummaryTable {
            cells: vec![cell(5.0, 0.99, 1.0 / 7.0), cell(10.0, 0.995, 0.0)],
        };
        let text = render_summary(&table);
        assert_eq!(text.lines().next().unwrap(), SUMMARY_COLUMNS.join(","));
        let back = parse_summary(&text, p()).unwrap();
        assert_eq!(render_summary(&back), text);
        for (a, b) in table.cells.iter().zip(&back.cells) {
            assert_eq!((a.nu, a.alpha, a.dmm_d_star), (b.nu, b.alpha, b.dmm_d_star));
            for (x, y) in [(a.is_bias, b.is_bias), (a.true_var_mean, b.true_var_mean), (a.ess_mean, b.ess_mean)] {
                assert!(((x - y) / x).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn insufficient_cells_round_trip_as_nan() {
        let mut c = cell(7.0, 0.99, 0.0);
        c.is_mean = f64::NAN;
        c.is_bias = f64::NAN;
        let text = render_summary(&SummaryTable { cells: vec![c] });
        let back = parse_summary(&text, p()).unwrap();
        assert!(back.cells[0].insufficient && back.cells[0].is_bias.is_nan());
        assert_eq!(render_summary(&back), text);
    }

    #[test]
    fn ten_significant_digits() {
        assert_eq!(fmt_num(0.0232634787404), "2.326347874e-2");
        assert_eq!(fmt_num(-1.0), "-1.000000000e0");
    }

    #[test]
    fn writer_abort_removes_files() {
        let dir = tempfile::tempdir().unwrap();
        let mut w = OutputWriter::create(&dir.path().join("out")).unwrap();
        let a = w.write("a.txt", "1").unwrap();
        let b = w.write("b.txt", "2").unwrap();
        assert!(a.exists() && b.exists());
        assert_eq!(w.file_names(), vec!["a.txt", "b.txt"]);
        w.abort();
        assert!(!a.exists() && !b.exists());
    }
}
