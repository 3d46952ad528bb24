//! BES(3) from `r` built by Williams' path decomposition, the last-hitting-time
//! estimator, and Monte Carlo checks of the associated laws.
//!
//! A realization runs a BM `B'` from `r` until it first reaches `m = rU`, then
//! continues as `m + R̃_{t-g}` with `R̃` an independent BES(3) from 0.

use std::fmt::Write as _;
use std::sync::Arc;

use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::analytic::{azema_z, g_cdf, g_laplace, g_laplace_tail, infimum_cdf, GLawParams};
use crate::error::{Error, Result};
use crate::refine;
use crate::paths::io::fmt_f64;
use crate::paths::{
    gaussian_increments, sample_bes_norm, Path, PathEnsemble, ProcessKind, ProcessParams,
    ProcessTag, StreamId, TimeGrid,
};
use crate::report::{Check, TestReport};
use crate::stats::{ks_one_sample, ks_two_sample, mean_and_stderr, normal_cdf, normality_check};

const LANE_U: u64 = 0;
const LANE_PRE: u64 = 1;
const LANE_POST: u64 = 2;
const LANE_BRIDGE: u64 = 3;
const LANE_MONITOR: u64 = 4;

/// Standard errors allowed for mean-type checks.
pub const Z_THRESHOLD: f64 = 4.0;
/// Largest tolerated fraction of truncated realizations.
pub const MAX_EXCLUDED: f64 = 0.10;

#[derive(Clone, Debug, PartialEq)]
pub struct WilliamsRealization {
    /// The glued process on the full grid.
    pub path: Path,
    /// Glue time; the grid horizon when `truncated`.
    pub g: f64,
    /// Target level `rU`.
    pub m: f64,
    pub u: f64,
    /// Number of samples taken from `B'` before the glue.
    pub pre_grid_len: usize,
    pub truncated: bool,
    pub stream: StreamId,
    /// Minimum over every simulated point, including sub-grid points when
    /// refinement is on.
    pub path_min: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Default)]
pub struct WilliamsOptions {
    /// Also glue inside a step whose endpoints both lie above `m`, with the
    /// Brownian-bridge crossing probability. Off by default.
    pub bridge_correction: bool,
    /// Subdivide steps that may cross `m` by Brownian-bridge sampling down to
    /// this step, so `g` and the path minimum are resolved below the grid.
    /// The grid path keeps its law.
    pub fine_dt: Option<f64>,
}

impl WilliamsOptions {
    /// Bridge correction plus refinement to `fine_dt`.
    pub fn refined(fine_dt: f64) -> Self {
        WilliamsOptions {
            bridge_correction: true,
            fine_dt: Some(fine_dt),
        }
    }
}

/// Builds one realization from `stream` on `grid`, starting at `r`.
///
/// Returns [`Error::Truncated`] with the whole `B'` path if `B'` never reaches
/// `m` on the grid.
pub fn construct_williams(r: f64, grid: &Arc<TimeGrid>, stream: StreamId) -> Result<WilliamsRealization> {
    let u = 1.0 - stream.lane(LANE_U).rng().random::<f64>();
    build(r, u, grid, stream, WilliamsOptions::default())
}

/// [`construct_williams`] with options and, optionally, a forced `u`.
pub fn construct_williams_with(
    r: f64,
    grid: &Arc<TimeGrid>,
    stream: StreamId,
    u: Option<f64>,
    opts: WilliamsOptions,
) -> Result<WilliamsRealization> {
    let u = match u {
        Some(u) if u > 0.0 && u <= 1.0 => u,
        Some(u) => return Err(Error::Parameter(format!("u must lie in (0, 1], got {u}"))),
        None => 1.0 - stream.lane(LANE_U).rng().random::<f64>(),
    };
    build(r, u, grid, stream, opts)
}

fn build(r: f64, u: f64, grid: &Arc<TimeGrid>, stream: StreamId, opts: WilliamsOptions) -> Result<WilliamsRealization> {
    if !(r > 0.0) || !r.is_finite() {
        return Err(Error::Parameter(format!("r must be positive and finite, got {r}")));
    }
    if grid.start() != 0.0 {
        return Err(Error::Grid("Williams construction needs a grid starting at 0".into()));
    }
    if let Some(f) = opts.fine_dt.filter(|f| !(*f > 0.0)) {
        return Err(Error::Parameter(format!("fine_dt must be positive, got {f}")));
    }
    let fine_dt = opts.fine_dt.unwrap_or(f64::INFINITY);
    let m = r * u;
    let times = grid.times();
    let n = times.len();

    // B' from r, step by step, until the first interval reaching m.
    let mut pre = Vec::with_capacity(n);
    let mut rng = stream.lane(LANE_PRE).rng();
    let mut bridge = stream.lane(LANE_BRIDGE).rng();
    let mut b = r;
    pre.push(b);
    let mut path_min = b;
    let mut glue = None;
    if b <= m {
        glue = Some((0.0, 0));
    }
    let mut i = 0;
    while glue.is_none() && i + 1 < n {
        let h = times[i + 1] - times[i];
        let next = b + h.sqrt() * rng.sample::<f64, _>(StandardNormal);
        let hit = refine::first_passage(
            times[i],
            h,
            b,
            next,
            m,
            fine_dt,
            opts.bridge_correction,
            &mut bridge,
            &mut path_min,
        );
        match hit {
            Some(g) => glue = Some((g.min(times[i + 1]), i + 1)),
            None => {
                pre.push(next);
                path_min = path_min.min(next);
            }
        }
        b = next;
        i += 1;
    }

    let Some((g, pre_len)) = glue else {
        let path = Path::new(grid.clone(), pre)?;
        return Err(Error::Truncated(Box::new(WilliamsRealization {
            path,
            g: grid.horizon(),
            m,
            u,
            pre_grid_len: n,
            truncated: true,
            stream,
            path_min,
        })));
    };

    // m + R̃_{t-g} on the remaining samples, R̃ from sample_bes_norm on the
    // shifted times. Ahead of the first grid offset go 0 and, when refining,
    // offsets fine_dt * 2^j that only feed path_min.
    let shifted: Vec<f64> = times[pre_len..].iter().map(|t| (t - g).max(0.0)).collect();
    let mut head = vec![0.0];
    let mut off = fine_dt;
    while off < 0.5 * shifted[0] {
        head.push(off);
        off *= 2.0;
    }
    if shifted[0] == 0.0 {
        head.truncate(1);
    }
    let lead = head.len() - usize::from(shifted[0] == 0.0);
    head.extend(&shifted[usize::from(shifted[0] == 0.0)..]);
    let post_grid = Arc::new(TimeGrid::explicit(head)?);
    let post = sample_bes_norm(&post_grid, &ProcessParams::bessel(3, 0.0), stream.lane(LANE_POST))?;
    pre.truncate(pre_len);
    pre.extend(post.values()[lead..].iter().map(|v| m + v));
    if opts.fine_dt.is_some() {
        let extra = post.values()[1..lead.max(1)].iter().copied().fold(f64::INFINITY, f64::min);
        path_min = path_min.min(m + extra);
    }
    path_min = path_min.min(pre[pre_len..].iter().copied().fold(f64::INFINITY, f64::min));
    Ok(WilliamsRealization {
        path: Path::new(grid.clone(), pre)?,
        g,
        m,
        u,
        pre_grid_len: pre_len,
        truncated: false,
        stream,
        path_min,
    })
}

/// Result of [`estimate_g`].
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GEstimate {
    pub g_hat: f64,
    pub i_hat: f64,
    pub horizon: f64,
    pub truncation_flag: bool,
    pub stability_window: f64,
    /// Grid index of `g_hat`.
    pub index: usize,
}

/// Half the horizon.
pub fn default_stability_window(grid: &TimeGrid) -> f64 {
    0.5 * (grid.horizon() - grid.start())
}

/// Last time the running infimum decreases (ties go to the later index).
pub fn estimate_g(path: &Path, stability_window: f64) -> Result<GEstimate> {
    let times = path.times();
    let horizon = times[times.len() - 1];
    if !(stability_window >= 0.0) || stability_window >= horizon - times[0] {
        return Err(Error::Parameter(format!(
            "stability window {stability_window} must lie in [0, horizon)"
        )));
    }
    let values = path.values();
    let mut index = 0;
    let mut inf = values[0];
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v <= inf {
            inf = v;
            index = i;
        }
    }
    let g_hat = times[index];
    Ok(GEstimate {
        g_hat,
        i_hat: inf,
        horizon,
        truncation_flag: horizon - g_hat < stability_window,
        stability_window,
        index,
    })
}

/// Per-realization metadata, one CSV row each.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WilliamsRecord {
    pub realization_id: u64,
    pub u: f64,
    pub m: f64,
    pub g: f64,
    pub g_hat: f64,
    pub truncated: bool,
    /// Minimum of the whole simulated path.
    pub i_hat: f64,
}

pub const RECORD_HEADER: &str = "realization_id,u,m,g,g_hat,truncated,i_hat";

pub fn records_to_csv(records: &[WilliamsRecord], comments: &[(String, String)]) -> String {
    let mut out = String::new();
    for (k, v) in comments {
        let _ = writeln!(out, "# {k}={v}");
    }
    out.push_str(RECORD_HEADER);
    out.push('\n');
    for r in records {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            r.realization_id,
            fmt_f64(r.u),
            fmt_f64(r.m),
            fmt_f64(r.g),
            fmt_f64(r.g_hat),
            r.truncated,
            fmt_f64(r.i_hat)
        );
    }
    out
}

pub fn records_from_csv(text: &str) -> Result<Vec<WilliamsRecord>> {
    let mut lines = text
        .lines()
        .enumerate()
        .filter(|(_, l)| !l.starts_with('#') && !l.trim().is_empty());
    match lines.next() {
        Some((_, h)) if h.trim() == RECORD_HEADER => {}
        Some((n, h)) => return Err(Error::Format(format!("line {}: unexpected header {h:?}", n + 1))),
        None => return Err(Error::Format("missing header".into())),
    }
    lines
        .map(|(n, line)| {
            let bad = |what: &str| Error::Format(format!("line {}: {what}", n + 1));
            let cols: Vec<&str> = line.trim().split(',').collect();
            if cols.len() != 7 {
                return Err(bad(&format!("expected 7 columns, found {}", cols.len())));
            }
            let num = |i: usize| -> Result<f64> {
                let x: f64 = cols[i].parse().map_err(|_| bad(&format!("bad number {:?}", cols[i])))?;
                if x.is_finite() {
                    Ok(x)
                } else {
                    Err(bad("non-finite number"))
                }
            };
            Ok(WilliamsRecord {
                realization_id: cols[0].parse().map_err(|_| bad("bad realization_id"))?,
                u: num(1)?,
                m: num(2)?,
                g: num(3)?,
                g_hat: num(4)?,
                truncated: cols[5].parse().map_err(|_| bad("bad truncated flag"))?,
                i_hat: num(6)?,
            })
        })
        .collect()
}

/// `n_paths` realizations on `sim_grid`, kept at the times of `keep`, with
/// their metadata. Truncated realizations are kept: on the simulated window
/// they are plain `B'` paths, which is the glued process there.
pub fn williams_ensemble(
    r: f64,
    sim_grid: &Arc<TimeGrid>,
    keep: &Arc<TimeGrid>,
    n_paths: usize,
    master_seed: u64,
    opts: WilliamsOptions,
) -> Result<(PathEnsemble, Vec<WilliamsRecord>)> {
    let idx = sim_grid.indices_of(keep)?;
    let window = default_stability_window(sim_grid);
    let rows = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let w = match construct_williams_with(r, sim_grid, StreamId::new(master_seed, i), None, opts) {
                Ok(w) => w,
                Err(Error::Truncated(w)) => *w,
                Err(e) => return Err(e),
            };
            let est = estimate_g(&w.path, window)?;
            let rec = WilliamsRecord {
                realization_id: i,
                u: w.u,
                m: w.m,
                g: w.g,
                g_hat: est.g_hat,
                truncated: w.truncated,
                i_hat: w.path_min,
            };
            Ok((w.path.project_indices(&idx, keep.clone()), rec))
        })
        .collect::<Result<Vec<_>>>()?;
    let (paths, records): (Vec<Path>, Vec<WilliamsRecord>) = rows.into_iter().unzip();
    let ens = PathEnsemble::new(
        keep.clone(),
        paths,
        master_seed,
        (0..n_paths as u64).collect(),
        ProcessTag::new(ProcessKind::Williams, ProcessParams::bessel(3, r)),
    )?;
    Ok((ens, records))
}

/// How [`bes3_with_g_estimates`] locates the last minimum of each path.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GMonitor {
    pub stability_window: f64,
    /// After the kept prefix, subdivide steps that may dip to the running
    /// minimum by 3-D bridge sampling, down to this step.
    pub fine_dt: Option<f64>,
    /// Decide whether the path ever returns to its minimum after the horizon
    /// (walk-on-spheres from the final position). Such paths get
    /// `g_hat = horizon` and the truncation flag; the window rule is not used.
    pub beyond_horizon: bool,
}

impl GMonitor {
    /// Grid-only [`estimate_g`].
    pub fn plain(stability_window: f64) -> Self {
        GMonitor {
            stability_window,
            fine_dt: None,
            beyond_horizon: false,
        }
    }

    pub fn refined(stability_window: f64, fine_dt: f64) -> Self {
        GMonitor {
            stability_window,
            fine_dt: Some(fine_dt),
            beyond_horizon: true,
        }
    }
}

/// The BES(3) path [`sample_bes_norm`] draws for `stream`, with the last
/// minimum monitored below the grid after index `from`.
fn monitored_bes3(grid: &Arc<TimeGrid>, r: f64, stream: StreamId, from: usize, mon: &GMonitor) -> Result<(Path, GEstimate)> {
    let times = grid.times();
    let horizon = grid.horizon();
    let inc = gaussian_increments(grid, stream, 3);
    let mut rng = stream.lane(LANE_MONITOR).rng();
    let mut x = [r, 0.0, 0.0];
    let mut values = Vec::with_capacity(times.len());
    values.push(r);
    let mut min = refine::NormMin {
        value: r,
        time: times[0],
        fine_dt: mon.fine_dt.unwrap_or(f64::INFINITY),
    };
    for (i, d) in inc.chunks_exact(3).enumerate() {
        let xa = x;
        let mut sq = 0.0;
        for (coord, d) in x.iter_mut().zip(d) {
            *coord += d;
            sq += *coord * *coord;
        }
        if i >= from {
            min.scan_step(times[i], times[i + 1] - times[i], xa, x, &mut rng);
        }
        let v = sq.sqrt();
        if v <= min.value {
            min.value = v;
            min.time = times[i + 1];
        }
        values.push(v);
    }
    let later = mon.beyond_horizon && refine::ever_enters_ball(x, min.value, &mut rng);
    let g_hat = if later { horizon } else { min.time };
    let est = GEstimate {
        g_hat,
        i_hat: min.value,
        horizon,
        truncation_flag: if mon.beyond_horizon { later } else { horizon - g_hat < mon.stability_window },
        stability_window: mon.stability_window,
        index: grid.last_index_at_or_before(g_hat).unwrap_or(0),
    };
    Ok((Path::new(grid.clone(), values)?, est))
}

/// Direct BES(3) paths from `r` on `grid`, each with its [`GEstimate`], kept
/// only up to time `keep_until`.
///
/// With [`GMonitor::plain`] the estimate is [`estimate_g`] of the grid path.
/// Refinement applies only after `keep_until`, so the kept prefix is exactly
/// the information the estimate is compared against.
pub fn bes3_with_g_estimates(
    r: f64,
    grid: &Arc<TimeGrid>,
    n_paths: usize,
    master_seed: u64,
    keep_until: f64,
    monitor: GMonitor,
) -> Result<(PathEnsemble, Vec<GEstimate>)> {
    let params = ProcessParams::bessel(3, r);
    params.validate()?;
    if !(r > 0.0) {
        return Err(Error::Parameter(format!("r must be positive, got {r}")));
    }
    let span = grid.horizon() - grid.start();
    if !(monitor.stability_window >= 0.0) || monitor.stability_window >= span {
        return Err(Error::Parameter(format!(
            "stability window {} must lie in [0, horizon)",
            monitor.stability_window
        )));
    }
    if let Some(f) = monitor.fine_dt.filter(|f| !(*f > 0.0)) {
        return Err(Error::Parameter(format!("fine_dt must be positive, got {f}")));
    }
    let last = grid
        .index_of(keep_until)
        .ok_or_else(|| Error::Grid(format!("time {keep_until} is not on the grid")))?;
    let keep = Arc::new(grid.prefix(last + 1)?);
    let rows = (0..n_paths as u64)
        .into_par_iter()
        .map(|i| {
            let (p, est) = monitored_bes3(grid, r, StreamId::new(master_seed, i), last, &monitor)?;
            Ok((Path::new(keep.clone(), p.values()[..=last].to_vec())?, est))
        })
        .collect::<Result<Vec<_>>>()?;
    let (paths, ests): (Vec<Path>, Vec<GEstimate>) = rows.into_iter().unzip();
    let ens = PathEnsemble::new(
        keep,
        paths,
        master_seed,
        (0..n_paths as u64).collect(),
        ProcessTag::new(ProcessKind::BesNorm, params),
    )?;
    Ok((ens, ests))
}

/// Two-sample KS of the marginals at each check time.
pub fn verify_bes3_law(
    williams_ens: &PathEnsemble,
    direct_ens: &PathEnsemble,
    check_times: &[f64],
    alpha: f64,
) -> Result<TestReport> {
    check_alpha(alpha)?;
    if williams_ens.grid() != direct_ens.grid() {
        return Err(Error::Grid("ensembles are on different grids".into()));
    }
    let mut report = TestReport::new("bes3_marginals");
    for &t in check_times {
        let a = williams_ens.values_at_time(t)?;
        let b = direct_ens.values_at_time(t)?;
        let ks = ks_two_sample(&a, &b)?;
        report.push(Check::p_above(format!("ks_t={t}"), ks.statistic, ks.p_value, alpha, ks.n1, ks.n2));
    }
    Ok(report)
}

fn check_alpha(alpha: f64) -> Result<()> {
    if alpha > 0.0 && alpha < 1.0 {
        Ok(())
    } else {
        Err(Error::Parameter(format!("alpha must lie in (0, 1), got {alpha}")))
    }
}

/// Splits off truncated records and adds the exclusion check.
fn untruncated<'a>(records: &'a [WilliamsRecord], report: &mut TestReport) -> Result<Vec<&'a WilliamsRecord>> {
    if records.is_empty() {
        return Err(Error::DegenerateInput("no realizations".into()));
    }
    let kept: Vec<&WilliamsRecord> = records.iter().filter(|r| !r.truncated).collect();
    let frac = (records.len() - kept.len()) as f64 / records.len() as f64;
    let check = Check::within("excluded_fraction", frac, MAX_EXCLUDED, records.len());
    if !check.pass {
        report.warn(format!(
            "truncation bias: {:.1}% of realizations never reached m and were excluded",
            100.0 * frac
        ));
    }
    report.push(check);
    Ok(kept)
}

/// KS of the whole-path minima of untruncated realizations against `U(0, r)`.
pub fn verify_infimum_law(records: &[WilliamsRecord], r: f64, alpha: f64) -> Result<TestReport> {
    check_alpha(alpha)?;
    let params = GLawParams::new(r)?;
    let mut report = TestReport::new("infimum_law");
    let kept = untruncated(records, &mut report)?;
    let mins: Vec<f64> = kept.iter().map(|r| r.i_hat).collect();
    let ks = ks_one_sample(&mins, |x| infimum_cdf(params, x))?;
    report.push(Check::p_above("ks_infimum", ks.statistic, ks.p_value, alpha, ks.n1, 0));
    Ok(report)
}

/// KS of the glue times against the law of `g`, plus `E[exp(-λ g)]` at
/// `λ ∈ {0.5, 2}`.
///
/// Truncated realizations are excluded, so the reference law is `g`
/// conditioned on `g <= horizon`; with `horizon = ∞` it is the plain law.
pub fn verify_g_law(records: &[WilliamsRecord], r: f64, horizon: f64, alpha: f64) -> Result<TestReport> {
    check_alpha(alpha)?;
    let params = GLawParams::new(r)?;
    if !(horizon > 0.0) {
        return Err(Error::Parameter(format!("horizon must be positive, got {horizon}")));
    }
    let mut report = TestReport::new("g_law");
    let kept = untruncated(records, &mut report)?;
    if kept.len() < 1000 {
        return Err(Error::DegenerateInput(format!(
            "{} untruncated realizations, need at least 1000",
            kept.len()
        )));
    }
    let mass = if horizon.is_finite() { g_cdf(params, horizon)? } else { 1.0 };
    let gs: Vec<f64> = kept.iter().map(|r| r.g).collect();
    let cdf_err = std::cell::RefCell::new(None);
    let ks = ks_one_sample(&gs, |t| {
        let t = t.min(horizon);
        match g_cdf(params, t) {
            Ok(f) => (f / mass).min(1.0),
            Err(e) => {
                cdf_err.borrow_mut().get_or_insert(e);
                0.0
            }
        }
    })?;
    if let Some(e) = cdf_err.into_inner() {
        return Err(e);
    }
    report.push(Check::p_above("ks_g", ks.statistic, ks.p_value, alpha, ks.n1, 0));
    for lam in [0.5, 2.0] {
        let xs: Vec<f64> = gs.iter().map(|g| (-lam * g).exp()).collect();
        let (mean, se) = mean_and_stderr(&xs);
        let tail = if horizon.is_finite() { g_laplace_tail(params, lam, horizon)? } else { 0.0 };
        let expected = (g_laplace(params, lam)? - tail) / mass;
        let z = if se > 0.0 { (mean - expected) / se } else { f64::INFINITY };
        report.push(
            Check::within(format!("laplace_lambda={lam}"), z, Z_THRESHOLD, xs.len())
                .with_note(format!("empirical {mean:.6}, closed form {expected:.6}")),
        );
    }
    Ok(report)
}

/// Bins paths by `Z_t = I_t / R_t` and compares, per bin, the frequency of
/// `{g_hat > t}` with the mean of `Z_t`.
///
/// `g_hat > t` implies `g > t`, so truncated estimates still give the right
/// indicator; they only matter through the 90% untruncated requirement.
pub fn verify_azema(direct_ens: &PathEnsemble, estimates: &[GEstimate], t: f64, n_bins: usize) -> Result<TestReport> {
    if estimates.len() != direct_ens.len() {
        return Err(Error::Shape(format!(
            "{} estimates for {} paths",
            estimates.len(),
            direct_ens.len()
        )));
    }
    if direct_ens.is_empty() || n_bins == 0 {
        return Err(Error::DegenerateInput("need at least one path and one bin".into()));
    }
    let e0 = estimates[0];
    if t > e0.horizon - e0.stability_window {
        return Err(Error::Domain(format!(
            "t = {t} lies within the stability window {} of the horizon {}",
            e0.stability_window, e0.horizon
        )));
    }
    let flagged = estimates.iter().filter(|e| e.truncation_flag).count();
    if flagged as f64 > 0.1 * estimates.len() as f64 {
        return Err(Error::Validation(format!(
            "{flagged} of {} g estimates are truncated; need at least 90% untruncated",
            estimates.len()
        )));
    }
    let idx = direct_ens
        .grid()
        .index_of(t)
        .ok_or_else(|| Error::Grid(format!("t = {t} is not on the grid")))?;
    let rows = direct_ens
        .paths()
        .iter()
        .zip(estimates)
        .map(|(p, e)| Ok((azema_z(p, idx)?, e.g_hat > t)))
        .collect::<Result<Vec<(f64, bool)>>>()?;

    let mut report = TestReport::new("azema");
    let mut bins = n_bins;
    let tallies = loop {
        let mut tallies = vec![(0usize, 0.0f64, 0usize); bins];
        for &(z, after) in &rows {
            let k = ((z * bins as f64) as usize).min(bins - 1);
            tallies[k].0 += 1;
            tallies[k].1 += z;
            tallies[k].2 += usize::from(after);
        }
        if bins == 1 || tallies.iter().all(|b| b.0 > 0) {
            break tallies;
        }
        bins -= 1;
    };
    if bins < n_bins {
        report.warn(format!("reduced from {n_bins} to {bins} bins to avoid empty bins"));
    }
    for (k, &(n, zsum, hits)) in tallies.iter().enumerate() {
        let zbar = zsum / n as f64;
        let freq = hits as f64 / n as f64;
        let se = (zbar * (1.0 - zbar) / n as f64).sqrt();
        let gap = freq - zbar;
        let stat = if se > 0.0 {
            gap / se
        } else if gap == 0.0 {
            0.0
        } else {
            f64::INFINITY
        };
        report.push(
            Check::within(format!("bin_{k}"), stat, Z_THRESHOLD, n)
                .with_note(format!("mean Z {zbar:.4}, frequency {freq:.4}")),
        );
    }
    Ok(report)
}

/// `(R_{i+1} - R_i) - Δt_i / R_i` along the path.
pub fn bes_residual_increments(path: &Path) -> Result<Vec<f64>> {
    let v = path.values();
    if let Some(i) = v.iter().position(|&x| !(x > 0.0)) {
        return Err(Error::Domain(format!("nonpositive value {} at index {i}", v[i])));
    }
    let t = path.times();
    Ok((0..v.len() - 1)
        .map(|i| (v[i + 1] - v[i]) - (t[i + 1] - t[i]) / v[i])
        .collect())
}

/// Tests that the residual increments of a BES(3) ensemble look like
/// Brownian increments: mean 0, variance `Δt`, Gaussian shape.
pub fn residual_bm_check(direct_ens: &PathEnsemble, alpha: f64) -> Result<TestReport> {
    check_alpha(alpha)?;
    let dt = direct_ens
        .grid()
        .uniform_step()
        .ok_or_else(|| Error::Grid("residual check needs a uniform grid".into()))?;
    let scale = dt.sqrt().recip();
    let mut z = Vec::with_capacity(direct_ens.len() * (direct_ens.grid().len() - 1));
    for p in direct_ens.paths() {
        z.extend(bes_residual_increments(p)?.into_iter().map(|d| d * scale));
    }
    let mut report = normality_check(&z, 0.0, 1.0)?;
    report.name = "residual_bm".into();
    let ks = ks_one_sample(&z, normal_cdf)?;
    report.push(Check::p_above("ks_normal", ks.statistic, ks.p_value, alpha, ks.n1, 0));
    Ok(report)
}
