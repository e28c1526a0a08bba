//! End-to-end checks of the `els` binary: exit codes, determinism of the
//! written tables and exact replay of saved runs.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use els_core::config::parse_config;
use els_core::diagnostics::total_directional_energy;
use els_core::io::{read_trajectory_csv, read_trajectory_json};
use els_core::solver::{run, wels_energy, welss_energy, StepRecord};
use tempfile::TempDir;

fn config_path(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(format!("{name}.json"))
}

fn els(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_els"))
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .env("ELS_THREADS", "2")
        .output()
        .expect("els binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn write_config(dir: &TempDir, text: &str) -> PathBuf {
    let path = dir.path().join("config.json");
    fs::write(&path, text).unwrap();
    path
}

/// Every regular file under `dir`, relative path and contents, in sorted order.
fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut files = Vec::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                files.push((
                    path.strip_prefix(dir).unwrap().to_path_buf(),
                    fs::read(&path).unwrap(),
                ));
            }
        }
    }
    files.sort();
    files
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= 1e-12 * b.abs().max(1.0)
}

fn assert_records_match(got: &[StepRecord], want: &[StepRecord]) {
    assert_eq!(got.len(), want.len());
    for (g, w) in got.iter().zip(want) {
        for (x, y) in [
            (g.t, w.t),
            (g.e_total_welss, w.e_total_welss),
            (g.e_total_wels, w.e_total_wels),
            (g.dissipation_residual, w.dissipation_residual),
            (g.sup_hr, w.sup_hr),
            (g.sup_ht, w.sup_ht),
        ] {
            assert!(close(x, y), "{g:?} vs {w:?}");
        }
    }
}

const SMALL_RUN: &str = r#"{
  "grid": { "r_max": 10, "n_cells": 400 },
  "solver": {
    "formulation": "FORM",
    "dt": 0.0125,
    "t_end": 0.5,
    "initial_data": { "kind": "gaussian_bump", "amplitude": 0.5, "center": 2, "width": 0.5 }
  },
  "diagnostics": { "cone_T": 0.5, "lambdas": [0.5], "taus": [0.25] },
  "output": { "directory": "unused", "formats": ["csv", "json"], "snapshot_every": 2 }
}"#;

#[test]
fn repeated_runs_write_identical_files() {
    for form in ["h_form", "v_form", "sigma_model"] {
        let tmp = TempDir::new().unwrap();
        let cfg = write_config(&tmp, &SMALL_RUN.replace("FORM", form));
        let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
        assert_eq!(code(&els(&["run"], &cfg, &a)), 0);
        assert_eq!(code(&els(&["run"], &cfg, &b)), 0);
        let (ta, tb) = (tree(&a), tree(&b));
        assert!(ta.iter().any(|(p, _)| p == Path::new("diagnostics.csv")));
        assert!(ta.iter().any(|(p, _)| p.starts_with("snapshots")));
        let names = |t: &[(PathBuf, Vec<u8>)]| t.iter().map(|f| f.0.clone()).collect::<Vec<_>>();
        assert_eq!(names(&ta), names(&tb), "{form}");
        for ((path, x), (_, y)) in ta.iter().zip(&tb) {
            // The echoed configuration records the output directory.
            if path != Path::new("summary.json") && path != Path::new("config.json") {
                assert!(x == y, "{form}: {} differs between runs", path.display());
            }
        }
    }
}

#[test]
fn saved_runs_reproduce_in_memory_diagnostics() {
    for form in ["h_form", "v_form"] {
        let tmp = TempDir::new().unwrap();
        let text = SMALL_RUN.replace("FORM", form);
        let cfg = write_config(&tmp, &text);
        let out = tmp.path().join("out");
        assert_eq!(code(&els(&["run"], &cfg, &out)), 0);

        let rc = parse_config(&text).unwrap();
        let mem = run(&rc.solver_config(), &rc.grid().unwrap()).unwrap();
        let from_json = read_trajectory_json(&out.join("trajectory.json")).unwrap();
        let from_csv = read_trajectory_csv(&out).unwrap();
        assert_records_match(&from_json.records, &mem.records);
        assert_records_match(&from_csv.records, &mem.records);

        for saved in [&from_json, &from_csv] {
            assert_eq!(saved.snapshots.len(), mem.snapshots.len());
            for (s, m) in saved.snapshots.iter().zip(&mem.snapshots) {
                assert!(close(s.time, m.time));
                assert!(
                    close(welss_energy(s), welss_energy(m)),
                    "{form} t = {}",
                    m.time
                );
                assert!(
                    close(wels_energy(s), wels_energy(m)),
                    "{form} t = {}",
                    m.time
                );
                assert!(close(
                    total_directional_energy(s),
                    total_directional_energy(m)
                ));
            }
        }
    }
}

#[test]
fn zero_data_writes_zero_tables() {
    let tmp = TempDir::new().unwrap();
    let text = SMALL_RUN.replace("FORM", "h_form").replace(
        r#"{ "kind": "gaussian_bump", "amplitude": 0.5, "center": 2, "width": 0.5 }"#,
        r#"{ "kind": "zero" }"#,
    );
    let cfg = write_config(&tmp, &text);
    let out = tmp.path().join("out");
    assert_eq!(code(&els(&["run"], &cfg, &out)), 0);
    let traj = read_trajectory_csv(&out).unwrap();
    assert!(traj.snapshots.len() > 1);
    for s in &traj.snapshots {
        for f in [&s.phi, &s.phi_t, &s.v, &s.h] {
            assert!(f.values.iter().all(|&x| x == 0.0));
        }
    }
    assert!(traj
        .records
        .iter()
        .all(|r| r.e_total_welss == 0.0 && r.e_total_wels == 0.0));
}

#[test]
fn configuration_errors_exit_with_status_three() {
    let tmp = TempDir::new().unwrap();
    let out = tmp.path().join("out");
    let base = SMALL_RUN.replace("FORM", "h_form");
    let cases = [
        (
            base.replace(r#""t_end": 0.5"#, r#""t_end": 0.5, "t_final": 1"#),
            "t_final",
        ),
        (base.replace(r#""dt": 0.0125"#, r#""dt": -0.0125"#), "dt"),
        (base.replace(r#""dt": 0.0125"#, r#""dt": 0.05"#), "CFL"),
        (
            base.replace(
                r#""diagnostics": {"#,
                r#""diagnostics": { "epsilon0": 0.5, "epsilon1": 0.25,"#,
            ),
            "epsilon",
        ),
        ("{ not json".to_string(), ""),
    ];
    for (text, needle) in cases {
        let cfg = write_config(&tmp, &text);
        let o = els(&["run"], &cfg, &out);
        assert_eq!(code(&o), 3, "{}", stderr(&o));
        assert!(
            stderr(&o).contains(needle),
            "expected {needle:?} in {}",
            stderr(&o)
        );
    }
    let o = els(&["verify"], &tmp.path().join("missing.json"), &out);
    assert_eq!(code(&o), 3);
}

#[test]
fn verify_passes_on_shipped_director_configs() {
    for name in [
        "bump_h_form",
        "bump_v_form",
        "harmonic_cap_static",
        "small_energy",
    ] {
        let tmp = TempDir::new().unwrap();
        let o = els(&["verify"], &config_path(name), tmp.path());
        assert_eq!(code(&o), 0, "{name}:\n{}{}", stdout(&o), stderr(&o));
        assert!(!stdout(&o).contains("FAIL"), "{name}:\n{}", stdout(&o));
        assert!(tmp.path().join("verify.csv").exists());
        assert!(tmp.path().join("verify.json").exists());
    }
}

#[test]
fn verify_flags_the_gl_penalty_growth() {
    let tmp = TempDir::new().unwrap();
    let o = els(&["verify"], &config_path("gl_bump"), tmp.path());
    assert_eq!(code(&o), 1, "{}{}", stdout(&o), stderr(&o));
    let text = stdout(&o);
    let failing: Vec<&str> = text
        .lines()
        .filter(|l| l.contains("FAIL"))
        .filter_map(|l| l.split_whitespace().next())
        .collect();
    assert_eq!(failing, ["gl_penalty_bounded"], "{text}");
}

#[test]
fn analyze_recovers_the_synthetic_profile_constant() {
    let tmp = TempDir::new().unwrap();
    let o = els(&["analyze"], &config_path("synthetic_blowup"), tmp.path());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let report: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(tmp.path().join("blowup_report.json")).unwrap())
            .unwrap();
    let c_fit = report["fit"]["C_fit"].as_f64().unwrap();
    let c_true = 6.0 * 7.0_f64.sqrt();
    assert!((c_fit - c_true).abs() < 0.05 * c_true, "C_fit = {c_fit}");
    assert!(tmp.path().join("blowup_candidates.csv").exists());
    assert!(tmp
        .path()
        .join("rescaled_profiles")
        .read_dir()
        .unwrap()
        .next()
        .is_some());
}

#[test]
fn sweep_runs_every_point_into_its_own_directory() {
    let tmp = TempDir::new().unwrap();
    let cfg = write_config(
        &tmp,
        &SMALL_RUN.replace("FORM", "h_form").replace(
            r#""output""#,
            r#""sweep": { "dr": [0.05, 0.025], "amplitude": [0.25, 0.5] }, "output""#,
        ),
    );
    let out = tmp.path().join("out");
    let o = els(&["sweep"], &cfg, &out);
    assert_eq!(code(&o), 0, "{}{}", stdout(&o), stderr(&o));
    let table = fs::read_to_string(out.join("sweep.csv")).unwrap();
    let rows: Vec<&str> = table.lines().skip(1).collect();
    assert_eq!(rows.len(), 4, "{table}");
    for row in rows {
        let (name, status) = row.split_once(',').unwrap();
        assert_eq!(status, "0");
        assert!(out.join(name).join("diagnostics.csv").exists());
    }
}
