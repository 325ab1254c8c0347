//! Batch runs: both engines over a time grid, CSV and metadata output.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::Serialize;

use crate::config::{RunConfig, SweepParameter};
use crate::error::{Error, Result};
use crate::flow::integrate_trajectory_at;
use crate::quantum::{exact_purity_curve, PurityCurve};
use crate::semiclassical::{purity_sc, purity_sc_raw};

/// Rows whose discarded imaginary part exceeds this are flagged.
pub const IMAG_FLAG_LIMIT: f64 = 1e-8;

pub const CSV_HEADER: &str = "t,p_exact,p_sc,slin_exact,slin_sc,residual_detM,residual_energy,residual_im_psc";

const BREAKDOWN_PREFIX: &str = "ValidityBreakdown";

#[derive(Clone, Debug)]
pub struct RunOptions {
    /// Relative output paths are resolved against this directory.
    pub output_dir: Option<PathBuf>,
    pub threads: usize,
}

impl Default for RunOptions {
    fn default() -> Self {
        Self { output_dir: None, threads: 1 }
    }
}

/// Maxima of the residual columns over rows where they are finite.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct InvariantSummary {
    pub max_residual_det_m: f64,
    pub max_residual_energy: f64,
    pub max_residual_im_psc: f64,
    pub flagged_rows: usize,
    pub breakdown_rows: usize,
    pub first_breakdown_t: Option<f64>,
}

impl InvariantSummary {
    fn from_curve(c: &PurityCurve) -> Self {
        let max = |v: &[f64]| v.iter().copied().filter(|x| x.is_finite()).fold(0.0, f64::max);
        let breakdowns: Vec<f64> = c
            .flags
            .iter()
            .zip(&c.times)
            .filter(|(f, _)| f.as_deref().is_some_and(|s| s.starts_with(BREAKDOWN_PREFIX)))
            .map(|(_, &t)| t)
            .collect();
        InvariantSummary {
            max_residual_det_m: max(&c.residual_det_m),
            max_residual_energy: max(&c.residual_energy),
            max_residual_im_psc: max(&c.residual_im_psc),
            flagged_rows: c.flagged_rows(),
            breakdown_rows: breakdowns.len(),
            first_breakdown_t: breakdowns.first().copied(),
        }
    }
}

/// Result of one sweep-free configuration, before anything is written.
#[derive(Clone, Debug)]
pub struct CaseResult {
    pub curve: PurityCurve,
    pub summary: InvariantSummary,
    pub model_label: String,
    pub accepted_steps: usize,
    pub rejected_steps: usize,
}

/// Runs both engines for a sweep-free configuration.
///
/// Rows where the semiclassical purity leaves its validity window hold `NaN`
/// in `p_sc` and `slin_sc` and a flag naming the reason; every other engine
/// failure aborts the case.
pub fn compute_case(cfg: &RunConfig) -> Result<CaseResult> {
    if cfg.sweep.is_some() {
        return Err(Error::validation("sweep", "expand sweeps with RunConfig::cases first"));
    }
    let sys = cfg.spin_system()?;
    let model = cfg.build_model()?;
    let s0 = cfg.initial_label()?;
    let times = cfg.time_grid();
    let n = times.len();
    let p_exact = if cfg.wants("p_exact") || cfg.wants("slin_exact") {
        exact_purity_curve(&sys, &model, &s0, &times)?
    } else {
        vec![f64::NAN; n]
    };
    let traj = integrate_trajectory_at(&sys, &model, &s0, &times, &cfg.integrator_config()?)?;
    let e0 = traj.energy[0];
    let mut curve = PurityCurve { times: times.clone(), ..Default::default() };
    for i in 0..n {
        let m = &traj.stability[i];
        let tcal = traj.tcal(i);
        let raw = purity_sc_raw(m, tcal);
        let (p_sc, flag) = match purity_sc(m, tcal) {
            Ok(p) if p.imag_residual > IMAG_FLAG_LIMIT => (p.value, Some(format!("ImaginaryResidual: {:e}", p.imag_residual))),
            Ok(p) => (p.value, None),
            Err(Error::ValidityBreakdown { reason }) => (f64::NAN, Some(format!("{BREAKDOWN_PREFIX}: {reason}"))),
            Err(e) => return Err(e),
        };
        curve.p_exact.push(p_exact[i]);
        curve.p_sc.push(p_sc);
        curve.slin_exact.push(1.0 - p_exact[i]);
        curve.slin_sc.push(1.0 - p_sc);
        curve.residual_det_m.push((m.det() - tcal).norm());
        curve.residual_energy.push((traj.energy[i] - e0).norm() / (1.0 + e0.norm()));
        curve.residual_im_psc.push(raw.im.abs());
        curve.flags.push(flag);
    }
    Ok(CaseResult {
        summary: InvariantSummary::from_curve(&curve),
        curve,
        model_label: model.label.clone(),
        accepted_steps: traj.accepted_steps,
        rejected_steps: traj.rejected_steps,
    })
}

fn fmt(x: f64) -> String {
    if x.is_nan() {
        "nan".to_string()
    } else {
        format!("{x:.16e}")
    }
}

/// Header plus one row per time, 17 significant digits, LF line endings.
pub fn write_csv<W: Write>(curve: &PurityCurve, mut out: W) -> io::Result<()> {
    writeln!(out, "{CSV_HEADER}")?;
    for i in 0..curve.len() {
        let row = [
            curve.times[i],
            curve.p_exact[i],
            curve.p_sc[i],
            curve.slin_exact[i],
            curve.slin_sc[i],
            curve.residual_det_m[i],
            curve.residual_energy[i],
            curve.residual_im_psc[i],
        ];
        let cells: Vec<String> = row.iter().map(|&x| fmt(x)).collect();
        writeln!(out, "{}", cells.join(","))?;
    }
    out.flush()
}

/// Files and summary of one case.
#[derive(Clone, Debug)]
pub struct CaseReport {
    pub sweep: Option<(SweepParameter, f64)>,
    pub csv_path: PathBuf,
    pub meta_path: PathBuf,
    pub result: CaseResult,
}

#[derive(Clone, Debug)]
pub struct RunReport {
    pub cases: Vec<CaseReport>,
    pub wall_time_s: f64,
}

impl RunReport {
    /// True if any row left the validity window of the semiclassical purity.
    pub fn has_breakdown(&self) -> bool {
        self.cases.iter().any(|c| c.result.summary.breakdown_rows > 0)
    }
}

/// `dir/stem_param_value.ext` for sweep cases, `path` otherwise, with
/// relative paths placed under `output_dir`.
pub fn case_path(path: &Path, output_dir: Option<&Path>, sweep: Option<(SweepParameter, f64)>) -> PathBuf {
    let base = match output_dir {
        Some(dir) if path.is_relative() => dir.join(path),
        _ => path.to_path_buf(),
    };
    match sweep {
        None => base,
        Some((param, value)) => {
            let stem = base.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default();
            let name = match base.extension() {
                Some(ext) => format!("{stem}_{}_{value}.{}", param.name(), ext.to_string_lossy()),
                None => format!("{stem}_{}_{value}", param.name()),
            };
            base.with_file_name(name)
        }
    }
}

/// `out.csv` -> `out.meta.json`.
pub fn meta_path(csv: &Path) -> PathBuf {
    csv.with_extension("meta.json")
}

#[derive(Serialize)]
struct Metadata<'a> {
    crate_version: &'static str,
    model: &'a str,
    sweep: Option<(&'static str, f64)>,
    config: &'a RunConfig,
    rows: usize,
    threads: usize,
    wall_time_s: f64,
    accepted_steps: usize,
    rejected_steps: usize,
    invariants: InvariantSummary,
    flags: Vec<(f64, &'a str)>,
}

/// Runs every case of `cfg` (one per sweep value), then writes each CSV and
/// its metadata sidecar in configuration order.
pub fn run_experiment(cfg: &RunConfig, opts: &RunOptions) -> Result<RunReport> {
    let start = Instant::now();
    let param = cfg.sweep.as_ref().map(|s| s.parameter);
    let cases = cfg.cases();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(opts.threads.max(1))
        .build()
        .map_err(|e| Error::validation("threads", e.to_string()))?;
    let timed: Vec<Result<(CaseResult, f64)>> = pool.install(|| {
        cases
            .par_iter()
            .map(|(_, c)| {
                let t0 = Instant::now();
                compute_case(c).map(|r| (r, t0.elapsed().as_secs_f64()))
            })
            .collect()
    });
    let mut reports = Vec::with_capacity(cases.len());
    for ((value, case_cfg), res) in cases.iter().zip(timed) {
        let (result, wall) = res?;
        let sweep = param.zip(*value);
        let csv_path = case_path(&cfg.outputs.path, opts.output_dir.as_deref(), sweep);
        if let Some(parent) = csv_path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        write_csv(&result.curve, io::BufWriter::new(fs::File::create(&csv_path)?))?;
        let meta = Metadata {
            crate_version: env!("CARGO_PKG_VERSION"),
            model: &result.model_label,
            sweep: sweep.map(|(p, v)| (p.name(), v)),
            config: case_cfg,
            rows: result.curve.len(),
            threads: opts.threads.max(1),
            wall_time_s: wall,
            accepted_steps: result.accepted_steps,
            rejected_steps: result.rejected_steps,
            invariants: result.summary,
            flags: result.curve.flags.iter().zip(&result.curve.times).filter_map(|(f, &t)| f.as_deref().map(|s| (t, s))).collect(),
        };
        let meta_file = meta_path(&csv_path);
        let json = serde_json::to_string_pretty(&meta).map_err(|e| Error::Io(e.to_string()))?;
        fs::write(&meta_file, json + "\n")?;
        reports.push(CaseReport { sweep, csv_path, meta_path: meta_file, result });
    }
    Ok(RunReport { cases: reports, wall_time_s: start.elapsed().as_secs_f64() })
}
