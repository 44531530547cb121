use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use ioncycle::ideal::{ideal_distribution, IdealStage};
use ioncycle::tomography::{default_grid, rabi_signal, DEFAULT_GAMMA_BASE};
use ioncycle::{CalibrationParams, PhononDistribution};

fn ioncycle(args: &[&str], envs: &[(&str, &str)]) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_ioncycle"));
    cmd.args(args);
    for (k, _) in std::env::vars() {
        if k.starts_with("IONCYCLE") {
            cmd.env_remove(k);
        }
    }
    for (k, v) in envs {
        cmd.env(k, v);
    }
    cmd.output().expect("binary runs")
}

fn ok(out: &Output) {
    assert!(
        out.status.success(),
        "exit {:?}\nstdout: {}\nstderr: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
}

fn error_kind(out: &Output) -> String {
    let v: serde_json::Value = serde_json::from_slice(&out.stderr).expect("stderr is json");
    v["error"]["kind"].as_str().unwrap().to_string()
}

/// Data rows of a CSV artifact (comment line skipped), keyed by column.
fn table(path: &Path) -> Vec<BTreeMap<String, String>> {
    let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path).unwrap();
    let header: Vec<String> = r.headers().unwrap().iter().map(str::to_string).collect();
    r.records()
        .map(|rec| header.iter().cloned().zip(rec.unwrap().iter().map(str::to_string)).collect())
        .collect()
}

fn col(rows: &[BTreeMap<String, String>], name: &str) -> Vec<f64> {
    rows.iter().map(|r| r[name].parse().unwrap()).collect()
}

fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut out = BTreeMap::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let p = e.unwrap().path();
        if p.is_file() {
            out.insert(p.clone(), std::fs::read(&p).unwrap());
        }
    }
    out
}

fn run_small(dir: &Path, extra: &[&str]) -> Output {
    let out = dir.to_str().unwrap();
    let mut args = vec!["run", "--preset", "fig1c", "--out", out, "--seed", "11"];
    args.extend(["--set", "cycle.n_cycles=1", "--set", "cycle.fock_dim=30"]);
    args.extend(extra);
    ioncycle(&args, &[])
}

#[test]
fn run_writes_schema_and_seed_headers() {
    let dir = tempfile::tempdir().unwrap();
    ok(&run_small(dir.path(), &[]));
    for name in ["trace.csv", "boundaries.csv", "distribution.csv"] {
        let text = std::fs::read_to_string(dir.path().join(name)).unwrap();
        assert!(text.lines().next().unwrap().contains("seed=11"), "{name}");
    }
    let trace = table(&dir.path().join("trace.csv"));
    let header: Vec<&String> = trace[0].keys().collect();
    for c in ["time_s", "stroke_label", "cycle_index", "p_D", "mean_n", "entropy_nats", "ergotropy_hw", "mutual_info_nats"] {
        assert!(header.iter().any(|h| *h == c), "missing {c}");
    }
    let means = col(&trace, "mean_n");
    assert!(means.last().unwrap() > &(means[0] + 0.3));
    let bounds = table(&dir.path().join("boundaries.csv"));
    let points: Vec<&str> = bounds.iter().map(|r| r["point"].as_str()).collect();
    assert_eq!(points, ["A", "B", "C", "D"]);
    let dist = col(&table(&dir.path().join("distribution.csv")), "p_n");
    assert!((dist.iter().sum::<f64>() - 1.0).abs() < 1e-6);

    let run: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("run.json")).unwrap()).unwrap();
    assert_eq!(run["status"], "ok");
    assert_eq!(run["seed"], 11);
    assert!(run["versions"]["ioncycle"].is_string());
}

#[test]
fn identical_spec_and_seed_give_identical_bytes() {
    let dir = tempfile::tempdir().unwrap();
    ok(&run_small(dir.path(), &[]));
    let first = snapshot(dir.path());
    ok(&run_small(dir.path(), &[]));
    assert_eq!(first, snapshot(dir.path()));
}

#[test]
fn run_json_feeds_back_as_spec() {
    let dir = tempfile::tempdir().unwrap();
    ok(&run_small(dir.path(), &[]));
    let first = snapshot(dir.path());
    let copy = dir.path().parent().unwrap().join(format!("{}-spec.json", dir.path().file_name().unwrap().to_str().unwrap()));
    std::fs::copy(dir.path().join("run.json"), &copy).unwrap();
    ok(&ioncycle(&["run", "--spec", copy.to_str().unwrap()], &[]));
    std::fs::remove_file(&copy).unwrap();
    assert_eq!(first, snapshot(dir.path()));
}

#[test]
fn environment_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let out = ioncycle(
        &["run", "--preset", "fig1c"],
        &[
            ("IONCYCLE_OUT", dir.path().to_str().unwrap()),
            ("IONCYCLE_SEED", "4"),
            ("IONCYCLE__CYCLE__N_CYCLES", "1"),
            ("IONCYCLE__CYCLE__FOCK_DIM", "30"),
        ],
    );
    ok(&out);
    let run: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("run.json")).unwrap()).unwrap();
    assert_eq!(run["seed"], 4);
    assert_eq!(run["spec"]["cycle"]["n_cycles"], 1);
}

#[test]
fn validation_errors_are_machine_readable() {
    let out = ioncycle(&["validate", "--preset", "fig1c", "--set", "cycle.p_d_a=1.7"], &[]);
    assert_eq!(out.status.code(), Some(2));
    assert_eq!(error_kind(&out), "validation");
    let out = ioncycle(&["validate", "--preset", "nope"], &[]);
    assert_eq!(out.status.code(), Some(2));
    let out = ioncycle(&["validate", "--preset", "fig1c", "--set", "cycle.bogus=1"], &[]);
    assert_eq!(error_kind(&out), "validation");
    ok(&ioncycle(&["validate", "--preset", "fig3"], &[]));
}

#[test]
fn printed_spec_validates_again() {
    let dir = tempfile::tempdir().unwrap();
    let out = ioncycle(&["validate", "--preset", "fig2c", "--print"], &[]);
    ok(&out);
    let path = dir.path().join("fig2c.toml");
    std::fs::write(&path, &out.stdout).unwrap();
    ok(&ioncycle(&["validate", "--spec", path.to_str().unwrap()], &[]));
}

#[test]
fn physics_failure_flags_run_json() {
    let dir = tempfile::tempdir().unwrap();
    let out = run_small(dir.path(), &["--set", "cycle.fock_dim=6"]);
    assert_eq!(out.status.code(), Some(3));
    assert_eq!(error_kind(&out), "physics");
    let run: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("run.json")).unwrap()).unwrap();
    assert_eq!(run["status"], "failed");
    assert_eq!(run["error"]["kind"], "physics");
}

#[test]
fn sweep_orders_transfer_by_reset_population() {
    let dir = tempfile::tempdir().unwrap();
    let out = ioncycle(
        &[
            "sweep", "--preset", "fig2b", "--out", dir.path().to_str().unwrap(),
            "--set", "cycle.n_cycles=2", "--set", "cycle.snapshots_per_stroke=0",
        ],
        &[],
    );
    ok(&out);
    let rows = table(&dir.path().join("summary.csv"));
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r["status"] == "ok"));
    let p = col(&rows, "p_d_a");
    assert_eq!(p, [0.15, 0.32, 0.5]);
    let dn = col(&rows, "delta_n_per_cycle");
    assert!(dn[0] < dn[1] && dn[1] < dn[2], "{dn:?}");
    assert!(dir.path().join("point_002/run.json").exists());
}

#[test]
fn empty_sweep_grid_writes_empty_summary() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("empty.toml");
    std::fs::write(&spec, "name = \"empty\"\n[sweep]\naxes = []\n").unwrap();
    let out = dir.path().join("o");
    ok(&ioncycle(&["sweep", "--spec", spec.to_str().unwrap(), "--out", out.to_str().unwrap()], &[]));
    assert!(table(&out.join("summary.csv")).is_empty());
}

#[test]
fn failing_sweep_point_is_recorded() {
    let dir = tempfile::tempdir().unwrap();
    let spec = dir.path().join("s.toml");
    std::fs::write(
        &spec,
        "name = \"s\"\n[cycle]\nn_cycles = 1\nsnapshots_per_stroke = 0\n\
         [[sweep.axes]]\nfield = \"fock_dim\"\nvalues = [6, 30]\n",
    )
    .unwrap();
    let out = dir.path().join("o");
    let res = ioncycle(&["sweep", "--spec", spec.to_str().unwrap(), "--out", out.to_str().unwrap()], &[]);
    assert_eq!(res.status.code(), Some(3));
    let rows = table(&out.join("summary.csv"));
    assert_eq!(rows.len(), 2);
    assert_eq!(rows[0]["status"], "failed");
    assert!(!rows[0]["error"].is_empty());
    assert_eq!(rows[1]["status"], "ok");
}

#[test]
fn oracle_preset_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    ok(&ioncycle(&["run", "--preset", "ideal_oracle", "--out", dir.path().to_str().unwrap()], &[]));
    let p = col(&table(&dir.path().join("distribution.csv")), "p_n");
    let got = PhononDistribution::normalized(p).unwrap();
    let want = ideal_distribution(10, 0.25, IdealStage::DA).unwrap().resized(got.len()).unwrap();
    assert!(got.total_variation(&want) < 1e-6);
    let bounds = table(&dir.path().join("boundaries.csv"));
    let d_means: Vec<f64> =
        bounds.iter().filter(|r| r["point"] == "D").map(|r| r["mean_n"].parse().unwrap()).collect();
    for (k, m) in d_means.iter().enumerate() {
        assert!((m - (1.0 + 0.5 * (k + 1) as f64)).abs() < 1e-6);
    }
}

#[test]
fn reverse_preset_cools() {
    let dir = tempfile::tempdir().unwrap();
    ok(&ioncycle(
        &[
            "run", "--preset", "fig2a_reverse", "--out", dir.path().to_str().unwrap(),
            "--set", "cycle.n_cycles=2", "--set", "cycle.snapshots_per_stroke=0",
        ],
        &[],
    ));
    let bounds = table(&dir.path().join("boundaries.csv"));
    let d: Vec<f64> = bounds.iter().filter(|r| r["point"] == "D").map(|r| r["mean_n"].parse().unwrap()).collect();
    assert!(d[0] < 3.0 && d[1] < d[0], "{d:?}");
}

fn write_scan(path: &Path, times: &[f64], p: &[f64], sigma: f64) {
    let mut text = String::from("time_s,p_S,sigma_p\n");
    for (t, v) in times.iter().zip(p) {
        text.push_str(&format!("{t},{v},{sigma}\n"));
    }
    std::fs::write(path, text).unwrap();
}

fn write_prior(path: &Path, p: &[f64]) {
    let mut text = String::from("n,p_n\n");
    for (n, v) in p.iter().enumerate() {
        text.push_str(&format!("{n},{v}\n"));
    }
    std::fs::write(path, text).unwrap();
}

#[test]
fn tomo_self_consistent_scan_has_zero_chi2() {
    let dir = tempfile::tempdir().unwrap();
    let prior = ideal_distribution(4, 0.32, IdealStage::C).unwrap().resized(20).unwrap();
    let times = default_grid();
    let clean = rabi_signal(&prior, &times, &CalibrationParams::default(), DEFAULT_GAMMA_BASE).unwrap();
    let scan = dir.path().join("scan.csv");
    let prior_path = dir.path().join("prior.csv");
    write_scan(&scan, &times, &clean, 1e-3);
    write_prior(&prior_path, prior.probs());
    let out = dir.path().join("fit");
    let res = ioncycle(
        &[
            "tomo", "--scan", scan.to_str().unwrap(), "--prior", prior_path.to_str().unwrap(),
            "--out", out.to_str().unwrap(), "--grid", "default",
        ],
        &[],
    );
    ok(&res);
    let fit: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("fit.json")).unwrap()).unwrap();
    assert!(fit["reduced_chi2"].as_f64().unwrap() < 1e-9);
    let p = col(&table(&out.join("fit.csv")), "p_fit");
    for (a, b) in p.iter().zip(prior.probs()) {
        assert!((a - b).abs() < 1e-6);
    }

    // the same scan checked against the long grid is a schema error
    let res = ioncycle(
        &[
            "tomo", "--scan", scan.to_str().unwrap(), "--prior", prior_path.to_str().unwrap(),
            "--out", out.to_str().unwrap(), "--grid", "reference",
        ],
        &[],
    );
    assert_eq!(res.status.code(), Some(2));
    assert_eq!(error_kind(&res), "schema");
}

#[test]
fn tomo_rejects_malformed_scan() {
    let dir = tempfile::tempdir().unwrap();
    let scan = dir.path().join("scan.csv");
    std::fs::write(&scan, "time_s,p_S\n0,1\n").unwrap();
    let prior = dir.path().join("prior.csv");
    write_prior(&prior, &[1.0]);
    let res = ioncycle(&["tomo", "--scan", scan.to_str().unwrap(), "--prior", prior.to_str().unwrap()], &[]);
    assert_eq!(res.status.code(), Some(2));
    assert_eq!(error_kind(&res), "schema");
}

#[test]
fn run_with_tomography_reports_chi2() {
    let dir = tempfile::tempdir().unwrap();
    ok(&ioncycle(
        &[
            "run", "--preset", "fig3", "--out", dir.path().to_str().unwrap(),
            "--set", "cycle.n_cycles=1", "--set", "cycle.fock_dim=30", "--set", "cycle.snapshots_per_stroke=0",
        ],
        &[],
    ));
    for a in ["scan.csv", "prior.csv", "distribution.csv", "fit.json"] {
        assert!(dir.path().join(a).exists(), "{a}");
    }
    let scan = table(&dir.path().join("scan.csv"));
    assert_eq!(scan.len(), 200);
    let fit: serde_json::Value = serde_json::from_slice(&std::fs::read(dir.path().join("fit.json")).unwrap()).unwrap();
    let chi2 = fit["reduced_chi2"].as_f64().unwrap();
    assert!(chi2 > 0.3 && chi2 < 3.0, "{chi2}");

    // refit of the emitted files through the tomo subcommand
    let out = dir.path().join("refit");
    ok(&ioncycle(
        &[
            "tomo",
            "--scan", dir.path().join("scan.csv").to_str().unwrap(),
            "--prior", dir.path().join("prior.csv").to_str().unwrap(),
            "--out", out.to_str().unwrap(),
            "--grid", "reference",
        ],
        &[],
    ));
    let refit: serde_json::Value = serde_json::from_slice(&std::fs::read(out.join("fit.json")).unwrap()).unwrap();
    assert!((refit["reduced_chi2"].as_f64().unwrap() - chi2).abs() < 1e-9);
}

#[test]
fn presets_are_listed() {
    let out = ioncycle(&["presets"], &[]);
    ok(&out);
    let text = String::from_utf8(out.stdout).unwrap();
    for name in ["fig1c", "fig2a", "fig2a_reverse", "fig2b", "fig2c", "fig3", "refrigerator15", "ideal_oracle"] {
        assert!(text.contains(name));
    }
}
