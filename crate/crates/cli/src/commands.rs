//! Subcommand implementations.

use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::Value;

use ioncycle::hilbert::partial_trace;
use ioncycle::hilbert::Subsystem;
use ioncycle::thermo::{ergotropy, ergotropy_diagonal, quanta_efficiency, von_neumann_entropy};
use ioncycle::tomography::{
    fit_distribution, measured_distribution, rabi_signal, reconstruct_observables, sample_scan, FitOptions,
    ReconstructedObservables,
};
use ioncycle::{
    run_cycles, CalibrationParams, CycleConfig, Direction, FitResult, PhononDistribution, RabiScan, SimulationTrace,
};

use crate::output::{csv_header_line, numeric_columns, read_csv, write_csv, write_json};
use crate::spec::{ExperimentSpec, TomographySpec};
use crate::CliError;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Versions {
    pub ioncycle: String,
    pub format: u32,
}

impl Versions {
    fn current() -> Self {
        Self { ioncycle: ioncycle::VERSION.to_string(), format: FORMAT_VERSION }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorRecord {
    pub kind: String,
    pub message: String,
}

impl From<&CliError> for ErrorRecord {
    fn from(e: &CliError) -> Self {
        Self { kind: e.kind().to_string(), message: e.message().to_string() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub n_cycles: usize,
    pub delta_n_per_cycle: Option<f64>,
    pub final_mean_n: f64,
    pub final_entropy_nats: f64,
    pub final_ergotropy_hw: f64,
    pub final_ergotropy_diag_hw: f64,
    pub eta_q: Option<f64>,
    pub mean_p_d_b: Option<f64>,
    pub mean_p_d_d: Option<f64>,
    pub reduced_chi2: Option<f64>,
}

/// Contents of run.json. Its `spec` field is a complete spec, so the file
/// can be fed back to `run`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunRecord {
    pub versions: Versions,
    pub seed: u64,
    pub status: String,
    pub error: Option<ErrorRecord>,
    pub artifacts: Vec<String>,
    pub summary: Option<RunSummary>,
    pub spec: ExperimentSpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitSettings {
    pub shots: u32,
    pub points: usize,
    pub box_halfwidth: f64,
    pub n_levels: usize,
    pub gamma_base_per_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub reduced_chi2: f64,
    pub chi2: f64,
    pub n_levels_used: usize,
    pub iterations: usize,
    pub settings: FitSettings,
    pub observables: ReconstructedObservables,
}

fn physics(e: ioncycle::Error) -> CliError {
    CliError::Physics(e.to_string())
}

fn f(x: f64) -> String {
    format!("{x}")
}

fn trace_rows(trace: &SimulationTrace) -> Vec<Vec<String>> {
    trace
        .series
        .iter()
        .map(|s| {
            vec![
                f(s.time_s),
                s.stroke.as_str().to_string(),
                s.cycle_index.to_string(),
                f(s.p_d),
                f(s.mean_n),
                f(s.entropy_nats),
                f(s.ergotropy_hw),
                f(s.mutual_info_nats),
            ]
        })
        .collect()
}

fn boundary_rows(trace: &SimulationTrace) -> Vec<Vec<String>> {
    trace
        .boundaries()
        .iter()
        .flat_map(|c| {
            c.points().map(|p| {
                vec![c.cycle.to_string(), p.label.as_str().to_string(), f(p.time_s), f(p.p_d), f(p.mean_n)]
            })
        })
        .collect()
}

fn distribution_rows(p: &[f64], sigma: Option<&[f64]>) -> Vec<Vec<String>> {
    p.iter()
        .enumerate()
        .map(|(n, v)| vec![n.to_string(), f(*v), f(sigma.map_or(0.0, |s| s[n]))])
        .collect()
}

fn summarize(trace: &SimulationTrace) -> Result<RunSummary, CliError> {
    let last = trace.final_state();
    let load = partial_trace(last, Subsystem::Load).map_err(physics)?;
    let pops = PhononDistribution::normalized(load.populations()).map_err(physics)?;
    let cycles = trace.boundaries();
    let mean_over = |pick: fn(&ioncycle::cycle::CycleBoundaries) -> f64| {
        (!cycles.is_empty()).then(|| cycles.iter().map(pick).sum::<f64>() / cycles.len() as f64)
    };
    Ok(RunSummary {
        n_cycles: cycles.len(),
        delta_n_per_cycle: trace.delta_n_per_cycle().ok(),
        final_mean_n: pops.mean(),
        final_entropy_nats: von_neumann_entropy(&load).map_err(physics)?,
        final_ergotropy_hw: ergotropy(&load).map_err(physics)?,
        final_ergotropy_diag_hw: ergotropy_diagonal(&pops).map_err(physics)?,
        eta_q: match trace.config.direction {
            Direction::Forward if !cycles.is_empty() => quanta_efficiency(trace).ok(),
            _ => None,
        },
        mean_p_d_b: mean_over(|c| c.b.p_d),
        mean_p_d_d: mean_over(|c| c.d.p_d),
        reduced_chi2: None,
    })
}

fn fit_options(t: &TomographySpec) -> FitOptions {
    FitOptions { box_halfwidth: t.box_halfwidth, n_levels: t.n_levels, gamma_base: t.gamma_base_per_s }
}

fn fit_record(fit: &FitResult, scan: &RabiScan, opts: &FitOptions) -> Result<FitRecord, CliError> {
    Ok(FitRecord {
        reduced_chi2: fit.reduced_chi2,
        chi2: fit.chi2,
        n_levels_used: fit.n_levels_used,
        iterations: fit.iterations,
        settings: FitSettings {
            shots: scan.shots_per_point,
            points: scan.len(),
            box_halfwidth: opts.box_halfwidth,
            n_levels: opts.n_levels,
            gamma_base_per_s: opts.gamma_base,
        },
        observables: reconstruct_observables(fit).map_err(physics)?,
    })
}

fn scan_rows(scan: &RabiScan) -> Vec<Vec<String>> {
    (0..scan.len()).map(|i| vec![f(scan.times[i]), f(scan.p_s[i]), f(scan.sigma_p[i])]).collect()
}

/// Emulated measurement of the final load state and its fit.
fn tomography_artifacts(
    spec: &ExperimentSpec,
    t: &TomographySpec,
    trace: &SimulationTrace,
    out: &Path,
    comment: &str,
    artifacts: &mut Vec<String>,
) -> Result<f64, CliError> {
    let calib = &spec.cycle.calib;
    let prior = measured_distribution(trace.final_state(), calib).map_err(physics)?;
    write_csv(&out.join("prior.csv"), comment, &["n", "p_n", "sigma"], &distribution_rows(prior.probs(), None))?;
    artifacts.push("prior.csv".into());
    let times = t.times()?;
    let signal = rabi_signal(&prior, &times, calib, t.gamma_base_per_s).map_err(physics)?;
    let scan = sample_scan(&signal, &times, t.shots, t.seed.unwrap_or(spec.seed)).map_err(physics)?;
    write_csv(&out.join("scan.csv"), comment, &["time_s", "p_S", "sigma_p"], &scan_rows(&scan))?;
    artifacts.push("scan.csv".into());
    let opts = fit_options(t);
    let fit = fit_distribution(&scan, &prior, calib, &opts).map_err(physics)?;
    write_csv(
        &out.join("distribution.csv"),
        comment,
        &["n", "p_n", "sigma"],
        &distribution_rows(fit.p_fit.probs(), Some(fit.sigma())),
    )?;
    artifacts.push("distribution.csv".into());
    write_json(&out.join("fit.json"), &fit_record(&fit, &scan, &opts)?)?;
    artifacts.push("fit.json".into());
    Ok(fit.reduced_chi2)
}

fn execute(spec: &ExperimentSpec, out: &Path, artifacts: &mut Vec<String>) -> Result<RunSummary, CliError> {
    let mut cfg: CycleConfig = spec.cycle.clone();
    if !spec.emit_snapshots {
        cfg.snapshots_per_stroke = 0;
    }
    let trace = run_cycles(&cfg).map_err(physics)?;
    let comment = csv_header_line(&spec.name, spec.seed);
    write_csv(
        &out.join("trace.csv"),
        &comment,
        &["time_s", "stroke_label", "cycle_index", "p_D", "mean_n", "entropy_nats", "ergotropy_hw", "mutual_info_nats"],
        &trace_rows(&trace),
    )?;
    artifacts.push("trace.csv".into());
    write_csv(
        &out.join("boundaries.csv"),
        &comment,
        &["cycle", "point", "time_s", "p_D", "mean_n"],
        &boundary_rows(&trace),
    )?;
    artifacts.push("boundaries.csv".into());
    let mut summary = summarize(&trace)?;
    match &spec.tomography {
        Some(t) => summary.reduced_chi2 = Some(tomography_artifacts(spec, t, &trace, out, &comment, artifacts)?),
        None => {
            let pops = trace.final_state().load_populations().map_err(physics)?;
            write_csv(&out.join("distribution.csv"), &comment, &["n", "p_n", "sigma"], &distribution_rows(&pops, None))?;
            artifacts.push("distribution.csv".into());
        }
    }
    Ok(summary)
}

/// Runs one experiment into `spec.outputs`. run.json is always written;
/// on failure it carries `status = "failed"` and lists what was produced.
pub fn run(spec: &ExperimentSpec) -> Result<RunRecord, Box<(RunRecord, CliError)>> {
    let out = spec.outputs.clone();
    let mut artifacts = Vec::new();
    let result = std::fs::create_dir_all(&out)
        .map_err(|e| CliError::Io(format!("{}: {e}", out.display())))
        .and_then(|_| execute(spec, &out, &mut artifacts));
    let (summary, error) = match result {
        Ok(s) => (Some(s), None),
        Err(e) => (None, Some(e)),
    };
    artifacts.push("run.json".into());
    let record = RunRecord {
        versions: Versions::current(),
        seed: spec.seed,
        status: if error.is_none() { "ok" } else { "failed" }.into(),
        error: error.as_ref().map(ErrorRecord::from),
        artifacts,
        summary,
        spec: spec.clone(),
    };
    if let Err(e) = write_json(&out.join("run.json"), &record) {
        return Err(Box::new((record, error.unwrap_or(e))));
    }
    match error {
        None => Ok(record),
        Some(e) => Err(Box::new((record, e))),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub point: usize,
    pub assignments: Vec<(String, Value)>,
    pub seed: u64,
    pub status: String,
    pub summary: Option<RunSummary>,
    pub error: Option<String>,
}

fn cell(v: &Value) -> String {
    match v {
        Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

fn opt(x: Option<f64>) -> String {
    x.map(f).unwrap_or_default()
}

/// One run per grid point, in parallel. Failed points become failed rows.
pub fn sweep(spec: &ExperimentSpec) -> Result<Vec<SweepRow>, CliError> {
    let grid = spec.sweep.clone().unwrap_or_default();
    let fields: Vec<String> = grid.axes.iter().map(|a| a.field.clone()).collect();
    let points = grid.points();
    let rows: Vec<SweepRow> = points
        .into_par_iter()
        .enumerate()
        .map(|(i, assignments)| {
            let seed = spec.seed.wrapping_add(i as u64);
            let result = spec.cycle_at(&assignments).and_then(|cycle| {
                let sub = ExperimentSpec {
                    name: format!("{}/point_{i:03}", spec.name),
                    seed,
                    outputs: spec.outputs.join(format!("point_{i:03}")),
                    cycle,
                    tomography: spec.tomography.clone().map(|t| TomographySpec { seed: Some(seed), ..t }),
                    sweep: None,
                    ..spec.clone()
                };
                sub.validate()?;
                run(&sub).map_err(|b| b.1)
            });
            let (status, summary, error) = match result {
                Ok(r) => ("ok".to_string(), r.summary, None),
                Err(e) => ("failed".to_string(), None, Some(e.to_string())),
            };
            SweepRow { point: i, assignments, seed, status, summary, error }
        })
        .collect();

    let mut header: Vec<&str> = vec!["point"];
    header.extend(fields.iter().map(String::as_str));
    header.extend([
        "status",
        "seed",
        "delta_n_per_cycle",
        "final_mean_n",
        "final_entropy_nats",
        "final_ergotropy_hw",
        "eta_q",
        "error",
    ]);
    let table: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            let mut row = vec![r.point.to_string()];
            row.extend(r.assignments.iter().map(|(_, v)| cell(v)));
            let s = r.summary.as_ref();
            row.extend([
                r.status.clone(),
                r.seed.to_string(),
                opt(s.and_then(|s| s.delta_n_per_cycle)),
                opt(s.map(|s| s.final_mean_n)),
                opt(s.map(|s| s.final_entropy_nats)),
                opt(s.map(|s| s.final_ergotropy_hw)),
                opt(s.and_then(|s| s.eta_q)),
                r.error.clone().unwrap_or_default(),
            ]);
            row
        })
        .collect();
    write_csv(&spec.outputs.join("summary.csv"), &csv_header_line(&spec.name, spec.seed), &header, &table)?;
    Ok(rows)
}

pub struct TomoArgs {
    pub scan: PathBuf,
    pub prior: PathBuf,
    pub out: PathBuf,
    pub calib: CalibrationParams,
    pub expected_times: Option<Vec<f64>>,
    pub shots: u32,
    pub seed: u64,
    pub opts: FitOptions,
}

/// Fits a scan file against a prior distribution file.
pub fn tomo(args: &TomoArgs) -> Result<FitRecord, CliError> {
    let (h, rows) = read_csv(&args.scan)?;
    let cols = numeric_columns(&args.scan, &h, &rows, &["time_s", "p_S", "sigma_p"])?;
    let (times, p_s, sigma) = (cols[0].clone(), cols[1].clone(), cols[2].clone());
    if let Some(want) = &args.expected_times {
        let same = want.len() == times.len() && want.iter().zip(&times).all(|(a, b)| (a - b).abs() <= 1e-12);
        if !same {
            return Err(CliError::Schema(format!(
                "{}: time grid ({} points) does not match the requested grid ({} points)",
                args.scan.display(),
                times.len(),
                want.len()
            )));
        }
    }
    let scan = RabiScan::new(times, p_s, sigma, args.shots)
        .map_err(|e| CliError::Schema(format!("{}: {e}", args.scan.display())))?;

    let (ph, prow) = read_csv(&args.prior)?;
    let pcols = numeric_columns(&args.prior, &ph, &prow, &["n", "p_n"])?;
    for (i, n) in pcols[0].iter().enumerate() {
        if *n != i as f64 {
            return Err(CliError::Schema(format!("{}: levels must be 0, 1, 2, ... in order", args.prior.display())));
        }
    }
    let prior = PhononDistribution::normalized(pcols[1].clone())
        .map_err(|e| CliError::Schema(format!("{}: {e}", args.prior.display())))?;

    let fit = fit_distribution(&scan, &prior, &args.calib, &args.opts).map_err(|e| match e {
        ioncycle::Error::Underdetermined { .. } | ioncycle::Error::InvalidArgument(_) => {
            CliError::Validation(e.to_string())
        }
        other => physics(other),
    })?;
    let record = fit_record(&fit, &scan, &args.opts)?;
    let comment = csv_header_line("tomo", args.seed);
    write_csv(
        &args.out.join("fit.csv"),
        &comment,
        &["n", "p_fit", "sigma"],
        &distribution_rows(fit.p_fit.probs(), Some(fit.sigma())),
    )?;
    write_json(&args.out.join("fit.json"), &record)?;
    Ok(record)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(dir: &Path) -> ExperimentSpec {
        ExperimentSpec {
            name: "tiny".into(),
            seed: 5,
            outputs: dir.to_path_buf(),
            emit_snapshots: true,
            cycle: CycleConfig { n_cycles: 1, fock_dim: 30, ..CycleConfig::default() },
            tomography: None,
            sweep: None,
        }
    }

    #[test]
    fn run_writes_all_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        let rec = run(&tiny(dir.path())).unwrap();
        assert_eq!(rec.status, "ok");
        for a in ["trace.csv", "boundaries.csv", "distribution.csv", "run.json"] {
            assert!(dir.path().join(a).exists(), "{a}");
            assert!(rec.artifacts.iter().any(|x| x == a));
        }
        let s = rec.summary.unwrap();
        assert_eq!(s.n_cycles, 1);
        assert!(s.delta_n_per_cycle.unwrap() > 0.0);
        assert!(s.eta_q.is_some());
    }

    #[test]
    fn physics_failure_is_flagged() {
        let dir = tempfile::tempdir().unwrap();
        // a 6-level space overflows on the first cycle from a thermal load
        let mut spec = tiny(dir.path());
        spec.cycle.fock_dim = 6;
        let (rec, err) = *run(&spec).unwrap_err();
        assert_eq!(rec.status, "failed");
        assert_eq!(err.kind(), "physics");
        let text = std::fs::read_to_string(dir.path().join("run.json")).unwrap();
        assert!(text.contains("\"failed\""));
    }
}
