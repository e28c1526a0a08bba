//! The `run`, `sweep`, `verify` and `analyze` commands.

use std::fs;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::blowup::{analyze_blowup, synth_selfsimilar, BlowupReport};
use crate::config::{AnalyzeSource, Format, RunConfig};
use crate::diagnostics::{
    boundary_drift, cone_flux, cone_reports, energy_report, flux, h_bound_check,
    local_energy_monotonicity, max_abs_angle, sup_norms_h, total_directional_energy,
};
use crate::error::{ElsError, Result};
use crate::gl::{consistency_vs_director, gl_run, GLTrajectory};
use crate::io::{
    load_trajectory, prepare_dir, write_csv, write_gl_trajectory, write_json, write_trajectory_csv,
    write_trajectory_json,
};
use crate::solver::{run, Trajectory};

/// Process exit status of a command.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    Ok = 0,
    CheckFailed = 1,
    Diverged = 2,
    ConfigOrIo = 3,
}

impl Status {
    pub fn code(self) -> i32 {
        self as i32
    }

    /// Status for an error that ended a command.
    pub fn of_error(e: &ElsError) -> Status {
        match e {
            ElsError::Config(_) | ElsError::Io(_) => Status::ConfigOrIo,
            ElsError::Divergence { .. } => Status::Diverged,
            _ => Status::CheckFailed,
        }
    }
}

/// Result of a command: its status and the lines it reports.
#[derive(Debug, Clone, PartialEq)]
pub struct Outcome {
    pub status: Status,
    pub lines: Vec<String>,
}

/// Slack allowed per step in the energy monotonicity checks.
pub fn step_slack(dt: f64, dr: f64) -> f64 {
    1e-8 + 10.0 * dt * dr * dr
}

/// Threads for sweeps: `ELS_THREADS` when set to a positive integer.
pub fn thread_cap() -> Option<usize> {
    std::env::var("ELS_THREADS")
        .ok()?
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
}

fn wants(config: &RunConfig, f: Format) -> bool {
    config.output.formats.contains(&f)
}

#[derive(Debug, Clone, Serialize)]
struct RunSummary {
    status: Status,
    formulation: &'static str,
    final_time: f64,
    snapshots: usize,
    failure: Option<String>,
    initial_directional_energy: f64,
    gl_failure: Option<String>,
    gl_consistency: Option<f64>,
}

fn write_energy_profile(dir: &Path, traj: &Trajectory) -> Result<()> {
    let Some(last) = traj.last() else {
        return Ok(());
    };
    let rep = energy_report(last);
    let g = &last.grid;
    write_csv(
        &dir.join("energy_profile.csv"),
        &["r", "e", "E_of_R"],
        (0..g.len()).map(|j| vec![g.r(j), rep.e_field.values[j], rep.e_of_r[j]]),
    )
}

fn write_cone_tables(dir: &Path, config: &RunConfig, traj: &Trajectory) -> Result<()> {
    let d = &config.diagnostics;
    let Some(apex) = d.cone_t else { return Ok(()) };
    let rep = cone_reports(traj, apex, &d.lambdas, &d.taus)?;
    write_csv(
        &dir.join("cone_annulus.csv"),
        &["t", "lambda", "value"],
        rep.annulus_energies.iter().map(|x| vec![x.0, x.1, x.2]),
    )?;
    write_csv(
        &dir.join("cone_phit.csv"),
        &["tau", "average"],
        rep.phit_cone_avg.iter().map(|x| vec![x.0, x.1]),
    )?;
    let fluxes = d
        .taus
        .iter()
        .map(|&tau| flux(traj, apex, tau).map(|f| vec![tau, f.flux_value, f.integrand_min]))
        .collect::<Result<Vec<_>>>()?;
    write_csv(
        &dir.join("flux.csv"),
        &["tau", "flux", "integrand_min"],
        fluxes,
    )
}

struct RunArtifacts {
    traj: Trajectory,
    gl: Option<GLTrajectory>,
}

fn execute(config: &RunConfig) -> Result<RunArtifacts> {
    let grid = config.grid()?;
    let traj = run(&config.solver_config(), &grid)?;
    let gl = match config.gl {
        Some(g) => Some(gl_run(&config.gl_config(g.epsilon), &grid)?),
        None => None,
    };
    Ok(RunArtifacts { traj, gl })
}

/// Runs the solver (and the GL relaxation when configured) and writes every
/// artifact under `out`.
pub fn cmd_run(config: &RunConfig, out: &Path) -> Result<Outcome> {
    let dir = prepare_dir(out)?;
    write_json(&dir.join("config.json"), config)?;
    let RunArtifacts { traj, gl } = execute(config)?;
    if wants(config, Format::Csv) {
        write_trajectory_csv(&dir, &traj)?;
        write_energy_profile(&dir, &traj)?;
    }
    if wants(config, Format::Json) {
        write_trajectory_json(&dir, &traj)?;
    }
    let mut consistency = None;
    if let Some(gl) = &gl {
        write_gl_trajectory(&dir, gl)?;
        if gl.failure.is_none() && traj.failure.is_none() {
            let c = consistency_vs_director(gl, &traj)?;
            write_json(&dir.join("gl_consistency.json"), &c)?;
            consistency = Some(c.distance);
        }
    }
    let diverged = traj.failure.is_some() || gl.as_ref().is_some_and(|g| g.failure.is_some());
    if !diverged {
        write_cone_tables(&dir, config, &traj)?;
    }
    let status = if diverged {
        Status::Diverged
    } else {
        Status::Ok
    };
    let summary = RunSummary {
        status,
        formulation: config.solver.formulation.name(),
        final_time: traj.last().map_or(0.0, |s| s.time),
        snapshots: traj.snapshots.len(),
        failure: traj.failure.as_ref().map(|e| e.to_string()),
        initial_directional_energy: traj.snapshots.first().map_or(0.0, total_directional_energy),
        gl_failure: gl
            .as_ref()
            .and_then(|g| g.failure.as_ref().map(|e| e.to_string())),
        gl_consistency: consistency,
    };
    write_json(&dir.join("summary.json"), &summary)?;
    let mut lines = vec![format!(
        "{}: t = {} after {} snapshots -> {}",
        summary.formulation,
        summary.final_time,
        summary.snapshots,
        dir.display()
    )];
    lines.extend(summary.failure.iter().map(|f| format!("failure: {f}")));
    lines.extend(
        summary
            .gl_failure
            .iter()
            .map(|f| format!("gl failure: {f}")),
    );
    Ok(Outcome { status, lines })
}

/// Runs every sweep point into `out/<label>`, in parallel.
pub fn cmd_sweep(config: &RunConfig, out: &Path) -> Result<Outcome> {
    let dir = prepare_dir(out)?;
    let points = config.sweep_points();
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = thread_cap() {
        builder = builder.num_threads(n);
    }
    let pool = builder.build().map_err(|e| ElsError::Io(e.to_string()))?;
    let results: Vec<(String, Status, String)> = pool.install(|| {
        points
            .par_iter()
            .map(|(name, c)| {
                let mut c = c.clone();
                c.output.directory = dir.join(name);
                match c.validate().and_then(|_| cmd_run(&c, &dir.join(name))) {
                    Ok(o) => (name.clone(), o.status, o.lines.join("; ")),
                    Err(e) => (name.clone(), Status::of_error(&e), e.to_string()),
                }
            })
            .collect()
    });
    let mut w =
        csv::Writer::from_path(dir.join("sweep.csv")).map_err(|e| ElsError::Io(e.to_string()))?;
    w.write_record(["name", "status"])
        .map_err(|e| ElsError::Io(e.to_string()))?;
    for (name, status, _) in &results {
        w.write_record([name.as_str(), &status.code().to_string()])
            .map_err(|e| ElsError::Io(e.to_string()))?;
    }
    w.flush()?;
    let status = results.iter().map(|r| r.1).max().unwrap_or(Status::Ok);
    let lines = results
        .iter()
        .map(|(n, s, m)| format!("{n}: {} {m}", s.code()))
        .collect();
    Ok(Outcome { status, lines })
}

/// One row of the verification table.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub measured: f64,
    pub tolerance: f64,
    pub passed: bool,
    pub note: String,
}

impl Check {
    fn at_most(name: &str, measured: f64, tolerance: f64, note: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            measured,
            tolerance,
            passed: measured <= tolerance,
            note: note.into(),
        }
    }

    fn at_least(name: &str, measured: f64, tolerance: f64, note: impl Into<String>) -> Self {
        Check {
            name: name.into(),
            measured,
            tolerance,
            passed: measured >= tolerance,
            note: note.into(),
        }
    }

    fn error(name: &str, e: &ElsError) -> Self {
        Check {
            name: name.into(),
            measured: f64::NAN,
            tolerance: f64::NAN,
            passed: false,
            note: e.to_string(),
        }
    }
}

/// Largest per-step increase of `energies` minus the slack; `≤ 0` means monotone.
pub fn worst_increase(energies: &[f64], slack: f64) -> f64 {
    energies
        .windows(2)
        .map(|w| w[1] - w[0] - slack)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Snapshot times of the trajectory strictly before `t`, nearest first.
fn earlier_times(traj: &Trajectory, t: f64) -> Vec<f64> {
    let mut v: Vec<f64> = traj
        .times()
        .into_iter()
        .filter(|&s| s < t - 1e-12)
        .collect();
    v.reverse();
    v
}

/// The invariant checks run by `verify` on one trajectory.
pub fn director_checks(traj: &Trajectory) -> Vec<Check> {
    let g = traj.grid;
    let mut checks = Vec::new();
    let slack = step_slack(traj.dt, g.dr());
    checks.push(Check::at_most(
        "energy_dissipation",
        worst_increase(&traj.monitored_energies(), 0.0),
        slack,
        "largest per-step increase of the monitored energy",
    ));
    let h_worst = traj
        .snapshots
        .iter()
        .map(|s| h_bound_check(s).violation)
        .fold(0.0, f64::max);
    checks.push(Check::at_most(
        "h_bound",
        h_worst,
        1e-8,
        "max_j |H(phi_j)| - E(r_j) over snapshots",
    ));
    checks.push(Check::at_most(
        "boundary_drift",
        boundary_drift(traj),
        0.0,
        "axis and outer values of phi and v",
    ));
    let axis = traj
        .snapshots
        .iter()
        .map(|s| s.phi.values[0].abs() + s.v.values[0].abs())
        .fold(0.0, f64::max);
    checks.push(Check::at_most(
        "axis_regularity",
        axis,
        0.0,
        "|phi(0)| + |v(0)|",
    ));
    let (shr, sht) = sup_norms_h(traj);
    checks.push(Check::at_most(
        "h_sup_norms_finite",
        if shr.is_finite() && sht.is_finite() {
            0.0
        } else {
            1.0
        },
        0.0,
        format!("sup|h_r| = {shr:e}, sup|h_t| = {sht:e}"),
    ));
    let report_ok = traj.snapshots.iter().all(|s| {
        let r = energy_report(s);
        r.e_field.values.iter().all(|e| *e >= 0.0) && r.e_of_r.windows(2).all(|w| w[1] >= w[0])
    });
    checks.push(Check::at_most(
        "energy_report_shape",
        if report_ok { 0.0 } else { 1.0 },
        0.0,
        "e >= 0 and E(R) non-decreasing",
    ));

    let Some(last) = traj.last() else {
        return checks;
    };
    let apex = last.time;
    let e0 = traj.records.first().map_or(0.0, |r| r.e_total_welss);
    match cone_flux(traj, apex, 0.0, apex) {
        Ok((_, min)) => checks.push(Check::at_least(
            "flux_integrand",
            min,
            -1e-12,
            "min of e - phi_r phi_t on the cone",
        )),
        Err(e) => checks.push(Check::error("flux_integrand", &e)),
    }
    let taus: Vec<f64> = earlier_times(traj, apex)
        .into_iter()
        .map(|s| apex - s)
        .collect();
    let fluxes: Result<Vec<f64>> = taus
        .iter()
        .map(|&tau| flux(traj, apex, tau).map(|f| f.flux_value))
        .collect();
    match fluxes {
        Ok(f) if !f.is_empty() => {
            let rises = f.windows(2).map(|w| w[0] - w[1]).fold(0.0, f64::max);
            checks.push(Check::at_most(
                "flux_monotone_in_tau",
                rises,
                1e-12,
                "largest decrease of Flux(T, tau) as tau grows",
            ));
            checks.push(Check::at_most(
                "flux_small_cone",
                f[0],
                0.05 * e0,
                format!("Flux(T, {}) against 0.05 E0", taus[0]),
            ));
        }
        Ok(_) => {}
        Err(e) => checks.push(Check::error("flux_monotone_in_tau", &e)),
    }
    let radius = 1.0_f64.min(0.25 * g.r_max());
    let mut worst = 0.0_f64;
    let mut local_err = None;
    for &tau in &taus {
        if radius + tau > g.r_max() || tau > apex {
            continue;
        }
        match local_energy_monotonicity(traj, radius + apex, radius, apex, tau, None) {
            Ok(c) => worst = worst.max(c.violation),
            Err(e) => local_err = Some(e),
        }
    }
    match local_err {
        Some(e) => checks.push(Check::error("local_energy", &e)),
        None => checks.push(Check::at_most(
            "local_energy",
            worst,
            1e-6,
            "E(R,s) + Flux - E(R+tau, s-tau) - C tau",
        )),
    }
    let initial = traj.snapshots.first().map_or(0.0, total_directional_energy);
    let zero_boundary = traj
        .snapshots
        .first()
        .is_some_and(|s| s.phi.values[g.n_cells()] == 0.0);
    if initial < 4.0 && zero_boundary {
        checks.push(Check::at_most(
            "small_energy_half_pi",
            max_abs_angle(traj),
            std::f64::consts::FRAC_PI_2 + 0.01,
            format!("max |phi| with initial directional energy {initial:.4}"),
        ));
    }
    checks
}

/// GL checks: energy monotone, penalty bounded by its initial value, axis
/// regularity and consistency with the director run.
pub fn gl_checks(gl: &GLTrajectory, dir: &Trajectory) -> Vec<Check> {
    let slack = step_slack(gl.dt, gl.grid.dr());
    let totals: Vec<f64> = gl.energies.iter().map(|e| e.1.total).collect();
    let mut checks = vec![Check::at_most(
        "gl_energy_dissipation",
        worst_increase(&totals, 0.0),
        slack,
        "largest per-step increase of the GL total",
    )];
    let p0 = gl.energies.first().map_or(0.0, |e| e.1.penalty);
    let pmax = gl.energies.iter().map(|e| e.1.penalty).fold(p0, f64::max);
    checks.push(Check::at_most(
        "gl_penalty_bounded",
        pmax - p0,
        slack,
        "max penalty minus initial penalty",
    ));
    let axis = gl
        .snapshots
        .iter()
        .map(|s| s.u.values[0].abs())
        .fold(0.0, f64::max);
    checks.push(Check::at_most("gl_axis_regularity", axis, 0.0, "|u(0)|"));
    match consistency_vs_director(gl, dir) {
        Ok(c) => checks.push(Check::at_most(
            "gl_consistency",
            c.distance,
            0.05,
            if c.warning() {
                format!(
                    "L2(r dr) angle distance; {} nodes without an angle",
                    c.excluded
                )
            } else {
                "L2(r dr) angle distance".into()
            },
        )),
        Err(e) => checks.push(Check::error("gl_consistency", &e)),
    }
    checks
}

fn write_checks(dir: &Path, checks: &[Check]) -> Result<()> {
    write_json(&dir.join("verify.json"), checks)?;
    let mut w =
        csv::Writer::from_path(dir.join("verify.csv")).map_err(|e| ElsError::Io(e.to_string()))?;
    w.write_record(["name", "measured", "tolerance", "passed", "note"])
        .map_err(|e| ElsError::Io(e.to_string()))?;
    for c in checks {
        w.write_record([
            c.name.clone(),
            crate::io::fmt_num(c.measured),
            crate::io::fmt_num(c.tolerance),
            c.passed.to_string(),
            c.note.clone(),
        ])
        .map_err(|e| ElsError::Io(e.to_string()))?;
    }
    w.flush()?;
    Ok(())
}

fn check_line(c: &Check) -> String {
    format!(
        "{:<24} {:<4} measured {:>12.4e}  tolerance {:>12.4e}  {}",
        c.name,
        if c.passed { "PASS" } else { "FAIL" },
        c.measured,
        c.tolerance,
        c.note
    )
}

/// Runs the configuration with a snapshot after every step, so cone
/// quadratures are at time resolution `dt`, and checks every invariant.
pub fn cmd_verify(config: &RunConfig, out: &Path) -> Result<Outcome> {
    let dir = prepare_dir(out)?;
    let mut dense = config.clone();
    dense.output.snapshot_every = 1;
    let RunArtifacts { traj, gl } = execute(&dense)?;
    let mut checks = Vec::new();
    let mut lines = Vec::new();
    if let Some(f) = &traj.failure {
        lines.push(format!("director run failed: {f}"));
    }
    checks.extend(director_checks(&traj));
    if let Some(gl) = &gl {
        if let Some(f) = &gl.failure {
            lines.push(format!("gl run failed: {f}"));
        }
        checks.extend(gl_checks(gl, &traj));
    }
    write_checks(&dir, &checks)?;
    lines.extend(checks.iter().map(check_line));
    let diverged = traj.failure.is_some() || gl.as_ref().is_some_and(|g| g.failure.is_some());
    let status = if diverged {
        Status::Diverged
    } else if checks.iter().all(|c| c.passed) {
        Status::Ok
    } else {
        Status::CheckFailed
    };
    Ok(Outcome { status, lines })
}

fn analysis_source(config: &RunConfig, seed: u64) -> Result<Trajectory> {
    let source = config
        .analyze
        .as_ref()
        .map_or(AnalyzeSource::Run, |a| a.source.clone());
    match source {
        AnalyzeSource::Run => run(&config.solver_config(), &config.grid()?),
        AnalyzeSource::Snapshots { path } => load_trajectory(&path),
        AnalyzeSource::Synthetic {
            schedule,
            times,
            noise,
        } => {
            let mut traj =
                synth_selfsimilar(&schedule.schedule(), &config.grid()?, &times.times())?;
            if noise > 0.0 {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                for s in &mut traj.snapshots {
                    for v in s.phi.values.iter_mut().skip(1) {
                        *v += rng.gen_range(-noise..noise);
                    }
                    s.phi_prev = s.phi.clone();
                }
            }
            Ok(traj)
        }
    }
}

fn write_blowup_report(dir: &Path, report: &BlowupReport) -> Result<()> {
    write_json(&dir.join("blowup_report.json"), report)?;
    let c = &report.candidate;
    write_csv(
        &dir.join("blowup_candidates.csv"),
        &[
            "t",
            "R",
            "ratio",
            "C_fit",
            "residual_l2",
            "harmonic_residual",
            "h_sup",
        ],
        (0..c.times.len()).map(|i| {
            let f = &report.fits[i];
            vec![
                c.times[i],
                c.radii[i],
                c.ratio[i],
                f.c_fit,
                f.residual_l2,
                f.harmonic_residual,
                report.h_sup_rescaled[i],
            ]
        }),
    )?;
    let pdir: PathBuf = dir.join("rescaled_profiles");
    fs::create_dir_all(&pdir)?;
    for (k, (phi, h)) in report.rescaled_profiles.iter().enumerate() {
        let g = &phi.grid;
        write_csv(
            &pdir.join(format!("profile_{k:03}.csv")),
            &["r", "phi", "h"],
            (0..g.len()).map(|j| vec![g.r(j), phi.values[j], h.values[j]]),
        )?;
    }
    Ok(())
}

/// Concentration analysis of a fresh run, a synthetic soliton or a saved run.
pub fn cmd_analyze(config: &RunConfig, out: &Path, seed: u64) -> Result<Outcome> {
    let dir = prepare_dir(out)?;
    let traj = analysis_source(config, seed)?;
    let params = config.analysis_params()?;
    let report = analyze_blowup(&traj, &params)?;
    let mut lines = Vec::new();
    if let Some(f) = &traj.failure {
        lines.push(format!("source run failed: {f}"));
    }
    match &report {
        Some(r) => {
            write_blowup_report(&dir, r)?;
            lines.push(format!(
                "concentration at T0 = {} ({} candidates{}), C_fit = {:.6}, cv = {:.3e}, sup|h_i| = {:.3e}",
                r.candidate.t0,
                r.candidate.times.len(),
                if r.candidate.resolution_limited { ", resolution-limited" } else { "" },
                r.fit.c_fit,
                r.fit_cv,
                r.h_sup_rescaled.iter().fold(0.0f64, |m, x| m.max(*x)),
            ));
        }
        None => {
            write_json(&dir.join("blowup_report.json"), &serde_json::Value::Null)?;
            lines.push("no concentration detected".into());
        }
    }
    let status = if traj.failure.is_some() {
        Status::Diverged
    } else {
        Status::Ok
    };
    Ok(Outcome { status, lines })
}
