//! Pipelines behind the `wlab` binary. Each command turns its flags into one
//! primary artifact (CSV, JSON or binary) plus optional side files, and a
//! [`RunReport`] whose `pass` decides the exit status.

// `!(x > 0.0)` also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::fmt::Write as _;
use std::io::Write as _;
use std::path::{Path as FsPath, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::json;

use wlab::analytic::{self, GLawParams};
use wlab::paths::io::{encode_ensemble, ensemble_to_csv, fmt_f64};
use wlab::paths::{PathEnsemble, ProcessKind, ProcessParams, ProcessTag, TimeGrid};
use wlab::pi::{self, PiTestConfig};
use wlab::report::{GridSummary, RunReport, TestReport};
use wlab::williams::{self, GMonitor, WilliamsOptions};
use wlab::{Error, Result};

/// Exit status when every contained test passes.
pub const EXIT_PASS: i32 = 0;
pub const EXIT_TEST_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_NUMERIC: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "wlab", version, about = "Simulate proportional-increment and Bessel(3) processes and check their laws")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Format {
    Csv,
    Json,
    /// WLAB1 binary ensemble (`simulate` only).
    Bin,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum Process {
    Bm,
    BmDrift,
    Tbt,
    BesNorm,
    BesSde,
    Williams,
}

impl From<Process> for ProcessKind {
    fn from(p: Process) -> Self {
        match p {
            Process::Bm => ProcessKind::Bm,
            Process::BmDrift => ProcessKind::BmDrift,
            Process::Tbt => ProcessKind::Tbt,
            Process::BesNorm => ProcessKind::BesNorm,
            Process::BesSde => ProcessKind::BesSde,
            Process::Williams => ProcessKind::Williams,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum PiMode {
    /// Test the process as p.i. and its ratio `X_t / t` as a martingale.
    Pi,
    /// Test the process as a martingale and its lift `t M_t` as p.i.
    Martingale,
}

/// Flags shared by every command.
#[derive(Clone, Debug, Args)]
pub struct Common {
    #[arg(long, default_value_t = 1)]
    pub seed: u64,
    /// Significance level for KS checks.
    #[arg(long, default_value_t = 0.01)]
    pub alpha: f64,
    /// Primary artifact; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

/// Grid flags. Unset values take per-command defaults.
#[derive(Clone, Debug, Default, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub horizon: Option<f64>,
    #[arg(long)]
    pub dt: Option<f64>,
    /// End of the uniform segment; later steps grow geometrically.
    #[arg(long)]
    pub knee: Option<f64>,
    /// Step growth factor after the knee.
    #[arg(long)]
    pub growth: Option<f64>,
}

#[derive(Clone, Debug, Subcommand)]
pub enum Command {
    /// Write an ensemble of paths.
    Simulate {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, value_enum, default_value = "bm")]
        process: Process,
        #[arg(long, default_value_t = 100)]
        n_paths: usize,
        #[arg(long, default_value_t = 0.0)]
        x0: f64,
        /// Drift per unit time.
        #[arg(long, default_value_t = 0.0)]
        a: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        /// Bessel dimension.
        #[arg(long, default_value_t = 3)]
        dim: u32,
        /// Bessel / Williams start.
        #[arg(long, default_value_t = 1.0)]
        r: f64,
    },
    /// Residual tests of the proportional-increment property and its dual.
    VerifyPi {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, value_enum, default_value = "tbt")]
        process: Process,
        #[arg(long, value_enum, default_value = "pi")]
        mode: PiMode,
        #[arg(long, default_value_t = 100_000)]
        n_paths: usize,
        #[arg(long, default_value_t = 0.0)]
        x0: f64,
        #[arg(long, default_value_t = 0.0)]
        a: f64,
        #[arg(long, default_value_t = 1.0)]
        sigma: f64,
        /// `t:s` pairs.
        #[arg(long, value_delimiter = ',', default_value = "1:0.5")]
        test_times: Vec<String>,
        #[arg(long, default_value_t = 4.0)]
        z_threshold: f64,
    },
    /// Marginals of Williams-constructed paths against direct BES(3) paths.
    VerifyWilliams {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, default_value_t = 10_000)]
        n_paths: usize,
        #[arg(long, default_value_t = 1.0)]
        r: f64,
        #[arg(long, value_delimiter = ',', default_value = "0.5,1,5")]
        check_times: Vec<f64>,
    },
    /// Laws of the infimum and of the last passage time `g`.
    VerifyGLaw {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, default_value_t = 10_000)]
        n_paths: usize,
        #[arg(long, default_value_t = 1.0)]
        r: f64,
        /// Finest bridge subdivision step, in units of r^2.
        #[arg(long, default_value_t = 1e-6)]
        fine_dt: f64,
        /// Plain endpoint monitoring (no bridge correction or subdivision).
        #[arg(long)]
        plain: bool,
        /// Also write the per-realization records as CSV.
        #[arg(long)]
        records: Option<PathBuf>,
    },
    /// Calibration of `P(g > t)` against `I_t / R_t`.
    VerifyAzema {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, default_value_t = 20_000)]
        n_paths: usize,
        #[arg(long, default_value_t = 1.0)]
        r: f64,
        #[arg(long, default_value_t = 1.0)]
        t: f64,
        #[arg(long, default_value_t = 10)]
        bins: usize,
        /// Stability window; half the horizon when absent.
        #[arg(long)]
        window: Option<f64>,
        #[arg(long, default_value_t = 1e-6)]
        fine_dt: f64,
        #[arg(long)]
        plain: bool,
    },
    /// Density, CDF and mixture value of `g`.
    DensityTable {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "1")]
        r: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0.5,1,2")]
        times: Vec<f64>,
    },
    /// Closed-form and numerical Laplace transforms of `g`.
    LaplaceTable {
        #[command(flatten)]
        common: Common,
        #[arg(long, value_delimiter = ',', default_value = "0.5,1,2")]
        r: Vec<f64>,
        #[arg(long, value_delimiter = ',', default_value = "0.5,2")]
        lambdas: Vec<f64>,
    },
    /// Brownian residual of the BES(3) SDE.
    ResidualBm {
        #[command(flatten)]
        common: Common,
        #[command(flatten)]
        grid: GridArgs,
        #[arg(long, default_value_t = 1000)]
        n_paths: usize,
        #[arg(long, default_value_t = 1.0)]
        r: f64,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::Simulate { .. } => "simulate",
            Command::VerifyPi { .. } => "verify-pi",
            Command::VerifyWilliams { .. } => "verify-williams",
            Command::VerifyGLaw { .. } => "verify-g-law",
            Command::VerifyAzema { .. } => "verify-azema",
            Command::DensityTable { .. } => "density-table",
            Command::LaplaceTable { .. } => "laplace-table",
            Command::ResidualBm { .. } => "residual-bm",
        }
    }

    pub fn common(&self) -> &Common {
        match self {
            Command::Simulate { common, .. }
            | Command::VerifyPi { common, .. }
            | Command::VerifyWilliams { common, .. }
            | Command::VerifyGLaw { common, .. }
            | Command::VerifyAzema { common, .. }
            | Command::DensityTable { common, .. }
            | Command::LaplaceTable { common, .. }
            | Command::ResidualBm { common, .. } => common,
        }
    }
}

/// Everything a command produces. Nothing is written until the run succeeds.
#[derive(Debug)]
pub struct Outcome {
    pub report: RunReport,
    /// Primary artifact, destined for `--out` or standard output.
    pub output: Vec<u8>,
    pub side_files: Vec<(PathBuf, Vec<u8>)>,
    /// Table commands exit 0 whatever their embedded checks say.
    pub pure_table: bool,
}

impl Outcome {
    pub fn exit_code(&self) -> i32 {
        if self.pure_table || self.report.pass {
            EXIT_PASS
        } else {
            EXIT_TEST_FAILURE
        }
    }
}

pub fn exit_code_for(err: &Error) -> i32 {
    match err {
        Error::Numeric { .. } | Error::Truncated(_) | Error::Json(_) => EXIT_NUMERIC,
        _ => EXIT_USAGE,
    }
}

/// Writes `bytes` to a temporary file next to `path`, then renames it over `path`.
pub fn write_atomic(path: &FsPath, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(d) if !d.as_os_str().is_empty() => d,
        _ => FsPath::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir)?;
    tmp.write_all(bytes)?;
    // Temporary files are created 0600; artifacts are ordinary files.
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        let mode = std::fs::metadata(path).map(|m| m.permissions().mode()).unwrap_or(0o644);
        tmp.as_file().set_permissions(std::fs::Permissions::from_mode(mode))?;
    }
    tmp.as_file().sync_all()?;
    tmp.persist(path).map_err(|e| Error::Io(e.error))?;
    Ok(())
}

/// Runs the command and writes its artifacts. Returns the exit status.
pub fn execute(cmd: &Command) -> i32 {
    let result = run(cmd).and_then(|outcome| {
        for (path, bytes) in &outcome.side_files {
            write_atomic(path, bytes)?;
        }
        match &cmd.common().out {
            Some(path) => write_atomic(path, &outcome.output)?,
            None => std::io::stdout().write_all(&outcome.output)?,
        }
        Ok(outcome)
    });
    match result {
        Ok(outcome) => outcome.exit_code(),
        Err(e) => {
            eprintln!("wlab {}: {e}", cmd.name());
            exit_code_for(&e)
        }
    }
}

fn positive(name: &str, x: f64) -> Result<f64> {
    if x > 0.0 && x.is_finite() {
        Ok(x)
    } else {
        Err(Error::Parameter(format!("--{name} must be positive and finite, got {x}")))
    }
}

fn validate_common(common: &Common) -> Result<()> {
    if !(common.alpha > 0.0 && common.alpha < 1.0) {
        return Err(Error::Parameter(format!("--alpha must lie in (0, 1), got {}", common.alpha)));
    }
    Ok(())
}

fn validate_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::Parameter("--n-paths must be at least 1".into()));
    }
    Ok(())
}

/// Uniform on `[0, horizon]`, or uniform to `knee` with a geometric tail.
fn build_grid(g: &GridArgs, horizon: f64, dt: f64, knee: Option<f64>, growth: f64) -> Result<TimeGrid> {
    let horizon = positive("horizon", g.horizon.unwrap_or(horizon))?;
    let dt = positive("dt", g.dt.unwrap_or(dt))?;
    if !(horizon > dt) {
        return Err(Error::Parameter(format!("--horizon {horizon} must exceed --dt {dt}")));
    }
    match g.knee.or(knee) {
        Some(knee) => {
            let growth = g.growth.unwrap_or(growth);
            if !(growth >= 1.0) {
                return Err(Error::Parameter(format!("--growth must be >= 1, got {growth}")));
            }
            TimeGrid::geometric_tail(dt, positive("knee", knee)?, horizon, growth)
        }
        None => {
            if g.growth.is_some() {
                return Err(Error::Parameter("--growth needs --knee".into()));
            }
            TimeGrid::uniform_to(horizon, dt)
        }
    }
}

fn format_or(common: &Common, default: Format, allowed: &[Format]) -> Result<Format> {
    let f = common.format.unwrap_or(default);
    if !allowed.contains(&f) {
        return Err(Error::Parameter(format!("--format {f:?} is not available for this command").to_lowercase()));
    }
    Ok(f)
}

fn json_text(v: &serde_json::Value) -> String {
    match v {
        serde_json::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// `# key=value` metadata for CSV artifacts.
fn comments(report: &RunReport) -> Vec<(String, String)> {
    let mut c = vec![
        ("tool".to_string(), "wlab".to_string()),
        ("version".to_string(), report.tool_version.clone()),
        ("command".to_string(), report.command.clone()),
        ("master_seed".to_string(), report.seed.to_string()),
    ];
    if let Some(g) = &report.grid {
        c.push(("grid".to_string(), serde_json::to_string(g).unwrap_or_default()));
    }
    for (k, v) in &report.parameters {
        c.push((k.clone(), json_text(v)));
    }
    c
}

fn write_comments(out: &mut String, report: &RunReport) {
    for (k, v) in comments(report) {
        let _ = writeln!(out, "# {k}={v}");
    }
}

fn report_json(report: &RunReport) -> Result<Vec<u8>> {
    let mut s = serde_json::to_string_pretty(report)?;
    s.push('\n');
    Ok(s.into_bytes())
}

/// One row per check, for `--format csv` on verify commands.
fn checks_csv(report: &RunReport) -> Vec<u8> {
    let mut out = String::new();
    write_comments(&mut out, report);
    out.push_str("report,check,statistic,threshold,p_value,n1,n2,pass\n");
    for r in &report.reports {
        for c in &r.checks {
            let _ = writeln!(
                out,
                "{},{},{},{},{},{},{},{}",
                r.name,
                c.name,
                fmt_f64(c.statistic),
                fmt_f64(c.threshold),
                c.p_value.map(fmt_f64).unwrap_or_default(),
                c.n1,
                c.n2,
                c.pass
            );
        }
    }
    let z_max = report.parameters.get("z_threshold").and_then(|v| v.as_f64()).unwrap_or(4.0);
    for (k, res) in report.residuals.iter().enumerate() {
        for e in &res.entries {
            let functional = serde_json::to_value(e.functional).map(|v| json_text(&v)).unwrap_or_default();
            let _ = writeln!(
                out,
                "residuals_{k},t={}:s={}:{functional},{},{},,{},0,{}",
                e.t,
                e.s,
                fmt_f64(e.z),
                fmt_f64(z_max),
                e.n_used,
                e.z.abs() <= z_max
            );
        }
    }
    out.into_bytes()
}

fn verify_output(common: &Common, report: &RunReport) -> Result<Vec<u8>> {
    match format_or(common, Format::Json, &[Format::Json, Format::Csv])? {
        Format::Csv => Ok(checks_csv(report)),
        _ => report_json(report),
    }
}

fn outcome(report: RunReport, output: Vec<u8>) -> Outcome {
    Outcome {
        report,
        output,
        side_files: Vec::new(),
        pure_table: false,
    }
}

/// Runs a command without touching the filesystem or standard output.
pub fn run(cmd: &Command) -> Result<Outcome> {
    validate_common(cmd.common())?;
    match cmd {
        Command::Simulate {
            common,
            grid,
            process,
            n_paths,
            x0,
            a,
            sigma,
            dim,
            r,
        } => simulate(common, grid, *process, *n_paths, ProcessParams { x0: *x0, drift_a: *a, sigma: *sigma, dim_n: *dim, r0: *r }),
        Command::VerifyPi {
            common,
            grid,
            process,
            mode,
            n_paths,
            x0,
            a,
            sigma,
            test_times,
            z_threshold,
        } => verify_pi(common, grid, *process, *mode, *n_paths, ProcessParams::drifted(*x0, *a, *sigma), test_times, *z_threshold),
        Command::VerifyWilliams {
            common,
            grid,
            n_paths,
            r,
            check_times,
        } => verify_williams(common, grid, *n_paths, *r, check_times),
        Command::VerifyGLaw {
            common,
            grid,
            n_paths,
            r,
            fine_dt,
            plain,
            records,
        } => verify_g_law(common, grid, *n_paths, *r, *fine_dt, *plain, records.as_deref()),
        Command::VerifyAzema {
            common,
            grid,
            n_paths,
            r,
            t,
            bins,
            window,
            fine_dt,
            plain,
        } => verify_azema(common, grid, *n_paths, *r, *t, *bins, *window, *fine_dt, *plain),
        Command::DensityTable { common, r, times } => density_table(common, r, times),
        Command::LaplaceTable { common, r, lambdas } => laplace_table(common, r, lambdas),
        Command::ResidualBm {
            common,
            grid,
            n_paths,
            r,
        } => residual_bm(common, grid, *n_paths, *r),
    }
}

fn simulate(common: &Common, g: &GridArgs, process: Process, n: usize, params: ProcessParams) -> Result<Outcome> {
    validate_n(n)?;
    let format = format_or(common, Format::Csv, &[Format::Csv, Format::Json, Format::Bin])?;
    let grid = Arc::new(build_grid(g, 1.0, 1e-3, None, 1.01)?);
    let tag = ProcessTag::new(process.into(), params);
    let ens = PathEnsemble::simulate(&grid, n, common.seed, tag)?;
    let mut report = RunReport::new("simulate", common.seed);
    report.grid = Some(GridSummary::from(grid.as_ref()));
    report.process = Some(tag);
    report.param("n_paths", n);
    report.param("process", json!(tag.kind));
    report.param("x0", params.x0);
    report.param("drift_a", params.drift_a);
    report.param("sigma", params.sigma);
    report.param("dim_n", params.dim_n);
    report.param("r0", params.r0);
    let output = match format {
        Format::Csv => ensemble_to_csv(&ens, &comments(&report)).into_bytes(),
        Format::Bin => encode_ensemble(&ens),
        Format::Json => report_json(&report)?,
    };
    let mut out = outcome(report, output);
    out.pure_table = true;
    Ok(out)
}

fn parse_test_times(items: &[String]) -> Result<Vec<(f64, f64)>> {
    items
        .iter()
        .map(|item| {
            let (t, s) = item
                .split_once(':')
                .ok_or_else(|| Error::Parameter(format!("test time {item:?} is not of the form t:s")))?;
            let parse = |x: &str| {
                x.trim()
                    .parse::<f64>()
                    .map_err(|_| Error::Parameter(format!("bad number {x:?} in test time {item:?}")))
            };
            Ok((parse(t)?, parse(s)?))
        })
        .collect()
}

#[allow(clippy::too_many_arguments)]
fn verify_pi(
    common: &Common,
    g: &GridArgs,
    process: Process,
    mode: PiMode,
    n: usize,
    params: ProcessParams,
    test_times: &[String],
    z_threshold: f64,
) -> Result<Outcome> {
    validate_n(n)?;
    let mut cfg = PiTestConfig::at(parse_test_times(test_times)?);
    cfg.z_threshold = z_threshold;
    cfg.validate()?;
    let horizon = cfg.test_times.iter().map(|(t, s)| t + s).fold(0.0, f64::max);
    let grid = Arc::new(build_grid(g, horizon, 0.05, None, 1.01)?);
    let tag = ProcessTag::new(process.into(), params);
    let ens = PathEnsemble::simulate(&grid, n, common.seed, tag)?;
    let mut report = RunReport::new("verify-pi", common.seed);
    report.grid = Some(GridSummary::from(grid.as_ref()));
    report.process = Some(tag);
    report.param("n_paths", n);
    report.param("mode", if mode == PiMode::Pi { "pi" } else { "martingale" });
    report.param("test_times", test_times.join(","));
    report.param("z_threshold", z_threshold);
    match mode {
        PiMode::Pi => {
            report.add_residuals(pi::pi_residuals(&ens, &cfg)?);
            // The ratio is undefined at t = 0.
            let positive_times: Vec<f64> = grid.times().iter().copied().filter(|&t| t > 0.0).collect();
            let keep = Arc::new(TimeGrid::explicit(positive_times)?);
            report.add_residuals(pi::martingale_residuals(&pi::ratio_ensemble(&ens.project(&keep)?)?, &cfg)?);
        }
        PiMode::Martingale => {
            report.add_residuals(pi::martingale_residuals(&ens, &cfg)?);
            report.add_residuals(pi::pi_residuals(&pi::lift_ensemble(&ens)?, &cfg)?);
        }
    }
    let output = verify_output(common, &report)?;
    Ok(outcome(report, output))
}

fn check_times_grid(times: &[f64]) -> Result<TimeGrid> {
    let mut t = times.to_vec();
    t.sort_by(f64::total_cmp);
    t.dedup();
    TimeGrid::explicit(t)
}

fn verify_williams(common: &Common, g: &GridArgs, n: usize, r: f64, check_times: &[f64]) -> Result<Outcome> {
    validate_n(n)?;
    positive("r", r)?;
    let keep = Arc::new(check_times_grid(check_times)?);
    let grid = Arc::new(build_grid(g, keep.horizon(), 1e-3, None, 1.01)?);
    let tag = ProcessTag::new(ProcessKind::BesNorm, ProcessParams::bessel(3, r));
    let (w_ens, records) = williams::williams_ensemble(r, &grid, &keep, n, common.seed, WilliamsOptions::default())?;
    let direct = PathEnsemble::simulate_projected(&grid, &keep, n, common.seed ^ 0xD1, tag)?;
    let control = PathEnsemble::simulate_projected(&grid, &keep, n, common.seed ^ 0xD2, tag)?;
    let mut report = RunReport::new("verify-williams", common.seed);
    report.grid = Some(GridSummary::from(grid.as_ref()));
    report.process = Some(tag);
    report.param("n_paths", n);
    report.param("r", r);
    report.param("check_times", json!(keep.times()));
    report.param("alpha", common.alpha);
    report.param("direct_seed", common.seed ^ 0xD1);
    report.param("control_seed", common.seed ^ 0xD2);
    report.param("truncated", records.iter().filter(|r| r.truncated).count());
    let mut law = williams::verify_bes3_law(&w_ens, &direct, keep.times(), common.alpha)?;
    law.name = "williams_vs_direct".into();
    report.add_report(law);
    let mut ctl = williams::verify_bes3_law(&control, &direct, keep.times(), common.alpha)?;
    ctl.name = "direct_vs_direct".into();
    report.add_report(ctl);
    let output = verify_output(common, &report)?;
    Ok(outcome(report, output))
}

fn verify_g_law(
    common: &Common,
    g: &GridArgs,
    n: usize,
    r: f64,
    fine_dt: f64,
    plain: bool,
    records_path: Option<&FsPath>,
) -> Result<Outcome> {
    validate_n(n)?;
    let s = positive("r", r)?.powi(2);
    let grid = Arc::new(build_grid(g, 2e4 * s, 1e-3 * s, Some(20.0 * s), 1.01)?);
    let opts = if plain {
        WilliamsOptions::default()
    } else {
        WilliamsOptions::refined(positive("fine-dt", fine_dt)? * s)
    };
    let keep = Arc::new(grid.prefix(2)?);
    let (_, records) = williams::williams_ensemble(r, &grid, &keep, n, common.seed, opts)?;
    let mut report = RunReport::new("verify-g-law", common.seed);
    report.grid = Some(GridSummary::from(grid.as_ref()));
    report.process = Some(ProcessTag::new(ProcessKind::Williams, ProcessParams::bessel(3, r)));
    report.param("n_paths", n);
    report.param("r", r);
    report.param("alpha", common.alpha);
    report.param("monitoring", if plain { "plain".to_string() } else { format!("refined fine_dt={}", fine_dt * s) });
    report.add_report(williams::verify_infimum_law(&records, r, common.alpha)?);
    report.add_report(williams::verify_g_law(&records, r, grid.horizon(), common.alpha)?);
    report.warnings = report.reports.iter().flat_map(|t| t.warnings.clone()).collect();
    let output = verify_output(common, &report)?;
    let mut out = outcome(report, output);
    if let Some(p) = records_path {
        let csv = williams::records_to_csv(&records, &comments(&out.report));
        out.side_files.push((p.to_path_buf(), csv.into_bytes()));
    }
    Ok(out)
}

#[allow(clippy::too_many_arguments)]
fn verify_azema(
    common: &Common,
    g: &GridArgs,
    n: usize,
    r: f64,
    t: f64,
    bins: usize,
    window: Option<f64>,
    fine_dt: f64,
    plain: bool,
) -> Result<Outcome> {
    validate_n(n)?;
    let s = positive("r", r)?.powi(2);
    positive("t", t)?;
    let grid = Arc::new(build_grid(g, 200.0 * s, 1e-3 * s, Some(20.0 * s), 1.01)?);
    let window = window.unwrap_or_else(|| williams::default_stability_window(&grid));
    let monitor = if plain {
        GMonitor::plain(window)
    } else {
        GMonitor::refined(window, positive("fine-dt", fine_dt)? * s)
    };
    let (ens, estimates) = williams::bes3_with_g_estimates(r, &grid, n, common.seed, t, monitor)?;
    let mut report = RunReport::new("verify-azema", common.seed);
    report.grid = Some(GridSummary::from(grid.as_ref()));
    report.process = Some(ProcessTag::new(ProcessKind::BesNorm, ProcessParams::bessel(3, r)));
    report.param("n_paths", n);
    report.param("r", r);
    report.param("t", t);
    report.param("bins", bins);
    report.param("stability_window", window);
    report.param("monitoring", if plain { "plain".to_string() } else { format!("refined fine_dt={}", fine_dt * s) });
    report.param("flagged", estimates.iter().filter(|e| e.truncation_flag).count());
    match williams::verify_azema(&ens, &estimates, t, bins) {
        Ok(rep) => {
            report.warnings.extend(rep.warnings.iter().cloned());
            report.add_report(rep);
        }
        Err(Error::Validation(msg)) => {
            let mut rep = TestReport::new("azema");
            rep.fail(format!("truncation bias: {msg}"));
            report.warnings.push(format!("truncation bias: {msg}"));
            report.add_report(rep);
        }
        Err(e) => return Err(e),
    }
    let output = verify_output(common, &report)?;
    Ok(outcome(report, output))
}

fn table_outcome(common: &Common, report: RunReport, csv: String) -> Result<Outcome> {
    let output = match format_or(common, Format::Csv, &[Format::Csv, Format::Json])? {
        Format::Csv => csv.into_bytes(),
        _ => report_json(&report)?,
    };
    let mut out = outcome(report, output);
    out.pure_table = true;
    Ok(out)
}

fn nonempty(name: &str, xs: &[f64]) -> Result<()> {
    if xs.is_empty() {
        return Err(Error::Parameter(format!("--{name} needs at least one value")));
    }
    Ok(())
}

/// Largest accepted gap between the density and its mixture representation.
const MIXTURE_TOL: f64 = 1e-8;
/// Largest accepted gap between the two Laplace transforms.
const LAPLACE_TOL: f64 = 1e-4;

fn density_table(common: &Common, rs: &[f64], times: &[f64]) -> Result<Outcome> {
    nonempty("r", rs)?;
    nonempty("times", times)?;
    let mut report = RunReport::new("density-table", common.seed);
    report.param("r", json!(rs));
    report.param("times", json!(times));
    let mut checks = TestReport::new("mixture_identity");
    let mut body = String::from("r,t,density,cdf,mixture\n");
    for &r in rs {
        let params = GLawParams::new(r)?;
        for &t in times {
            let p = analytic::g_density(params, t)?;
            let f = analytic::g_cdf(params, t)?;
            let mix = analytic::first_hit_mixture(params, t)?;
            let _ = writeln!(body, "{},{},{},{},{}", fmt_f64(r), fmt_f64(t), fmt_f64(p), fmt_f64(f), fmt_f64(mix));
            checks.push(wlab::report::Check::within(format!("gap_r={r}_t={t}"), p - mix, MIXTURE_TOL, 1));
        }
    }
    report.add_report(checks);
    let mut csv = String::new();
    write_comments(&mut csv, &report);
    csv.push_str(&body);
    table_outcome(common, report, csv)
}

fn laplace_table(common: &Common, rs: &[f64], lambdas: &[f64]) -> Result<Outcome> {
    nonempty("r", rs)?;
    nonempty("lambdas", lambdas)?;
    let mut report = RunReport::new("laplace-table", common.seed);
    report.param("r", json!(rs));
    report.param("lambdas", json!(lambdas));
    let mut checks = TestReport::new("laplace_consistency");
    let mut body = String::from("r,lambda,closed_form,numeric,abs_diff\n");
    for &r in rs {
        let params = GLawParams::new(r)?;
        for &lam in lambdas {
            let closed = analytic::g_laplace(params, lam)?;
            let numeric = analytic::g_laplace_numeric(params, lam)?;
            let diff = (closed - numeric).abs();
            let _ = writeln!(body, "{},{},{},{},{}", fmt_f64(r), fmt_f64(lam), fmt_f64(closed), fmt_f64(numeric), fmt_f64(diff));
            checks.push(wlab::report::Check::within(format!("abs_diff_r={r}_lambda={lam}"), diff, LAPLACE_TOL, 1));
        }
    }
    report.add_report(checks);
    let mut csv = String::new();
    write_comments(&mut csv, &report);
    csv.push_str(&body);
    table_outcome(common, report, csv)
}

fn residual_bm(common: &Common, g: &GridArgs, n: usize, r: f64) -> Result<Outcome> {
    validate_n(n)?;
    positive("r", r)?;
    if g.knee.is_some() {
        return Err(Error::Parameter("residual-bm needs a uniform grid; drop --knee".into()));
    }
    let grid = Arc::new(build_grid(g, 1.0, 1e-3, None, 1.01)?);
    let tag = ProcessTag::new(ProcessKind::BesNorm, ProcessParams::bessel(3, r));
    let ens = PathEnsemble::simulate(&grid, n, common.seed, tag)?;
    let mut report = RunReport::new("residual-bm", common.seed);
    report.grid = Some(GridSummary::from(grid.as_ref()));
    report.process = Some(tag);
    report.param("n_paths", n);
    report.param("r", r);
    report.param("alpha", common.alpha);
    report.add_report(williams::residual_bm_check(&ens, common.alpha)?);
    let output = verify_output(common, &report)?;
    Ok(outcome(report, output))
}
