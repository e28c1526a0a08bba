//! CSV and JSON serialization of trajectories and reports.
//!
//! Every number is written as `{:.16e}` (17 significant digits), which
//! round-trips an `f64` exactly.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::error::{ElsError, Result};
use crate::gl::{GLEnergy, GLTrajectory};
use crate::grid::{RadialField, RadialGrid};
use crate::solver::{FieldState, StepRecord, Trajectory};

pub const SNAPSHOT_COLUMNS: [&str; 5] = ["r", "phi", "phi_t", "v", "h"];
pub const DIAGNOSTIC_COLUMNS: [&str; 6] = [
    "t",
    "E_total_welss",
    "E_total_wels",
    "dissipation_residual",
    "sup_hr",
    "sup_ht",
];
pub const INDEX_COLUMNS: [&str; 3] = ["index", "t", "file"];
pub const GL_ENERGY_COLUMNS: [&str; 6] = ["t", "kinetic", "elastic", "penalty", "fluid", "total"];

pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const INDEX_FILE: &str = "snapshots.csv";
pub const SNAPSHOT_DIR: &str = "snapshots";
pub const TRAJECTORY_FILE: &str = "trajectory.json";

fn csv_err(e: csv::Error) -> ElsError {
    ElsError::Io(e.to_string())
}

pub fn fmt_num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes a header and numeric rows.
pub fn write_csv<I>(path: &Path, header: &[&str], rows: I) -> Result<()>
where
    I: IntoIterator<Item = Vec<f64>>,
{
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    w.write_record(header).map_err(csv_err)?;
    for row in rows {
        w.write_record(row.iter().map(|x| fmt_num(*x)))
            .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

/// Reads a numeric CSV whose header must equal `header`.
pub fn read_csv(path: &Path, header: &[&str]) -> Result<Vec<Vec<f64>>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_err)?;
    let found: Vec<String> = r
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_owned)
        .collect();
    if found != header {
        return Err(ElsError::Io(format!(
            "{}: expected columns {header:?}, found {found:?}",
            path.display()
        )));
    }
    r.records()
        .map(|rec| {
            let rec = rec.map_err(csv_err)?;
            rec.iter()
                .map(|s| {
                    s.trim().parse::<f64>().map_err(|e| {
                        ElsError::Io(format!("{}: bad number {s:?}: {e}", path.display()))
                    })
                })
                .collect()
        })
        .collect()
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| ElsError::Io(e.to_string()))?;
    fs::write(path, text + "\n")?;
    Ok(())
}

pub fn write_snapshot(path: &Path, state: &FieldState) -> Result<()> {
    let g = &state.grid;
    write_csv(
        path,
        &SNAPSHOT_COLUMNS,
        (0..g.len()).map(|j| {
            vec![
                g.r(j),
                state.phi.values[j],
                state.phi_t.values[j],
                state.v.values[j],
                state.h.values[j],
            ]
        }),
    )
}

/// Snapshot from a CSV file; the grid is recovered from the `r` column, `h`
/// is taken as stored and `h_t` is zero.
pub fn read_snapshot(path: &Path, time: f64) -> Result<FieldState> {
    let rows = read_csv(path, &SNAPSHOT_COLUMNS)?;
    if rows.len() < 3 {
        return Err(ElsError::Io(format!("{}: too few rows", path.display())));
    }
    let n = rows.len() - 1;
    let grid = RadialGrid::new(rows[n][0], n)?;
    let tol = 1e-9 * grid.dr();
    if let Some(j) = (0..=n).find(|&j| (rows[j][0] - grid.r(j)).abs() > tol) {
        return Err(ElsError::Io(format!(
            "{}: r column is not uniform at row {j}",
            path.display()
        )));
    }
    let col = |k: usize| RadialField {
        grid,
        values: rows.iter().map(|row| row[k]).collect(),
    };
    let mut state = FieldState::zero(grid);
    state.phi = col(1);
    state.phi_prev = state.phi.clone();
    state.phi_t = col(2);
    state.v = col(3);
    state.h = col(4);
    state.time = time;
    Ok(state)
}

pub fn write_records(path: &Path, records: &[StepRecord]) -> Result<()> {
    write_csv(
        path,
        &DIAGNOSTIC_COLUMNS,
        records.iter().map(|r| {
            vec![
                r.t,
                r.e_total_welss,
                r.e_total_wels,
                r.dissipation_residual,
                r.sup_hr,
                r.sup_ht,
            ]
        }),
    )
}

pub fn read_records(path: &Path) -> Result<Vec<StepRecord>> {
    Ok(read_csv(path, &DIAGNOSTIC_COLUMNS)?
        .into_iter()
        .map(|r| StepRecord {
            t: r[0],
            e_total_welss: r[1],
            e_total_wels: r[2],
            dissipation_residual: r[3],
            sup_hr: r[4],
            sup_ht: r[5],
        })
        .collect())
}

fn snapshot_name(k: usize) -> String {
    format!("snapshot_{k:05}.csv")
}

/// Writes `diagnostics.csv`, `snapshots.csv` and `snapshots/snapshot_NNNNN.csv`.
pub fn write_trajectory_csv(dir: &Path, traj: &Trajectory) -> Result<()> {
    let snap_dir = dir.join(SNAPSHOT_DIR);
    fs::create_dir_all(&snap_dir)?;
    write_records(&dir.join(DIAGNOSTICS_FILE), &traj.records)?;
    let mut w = csv::Writer::from_path(dir.join(INDEX_FILE)).map_err(csv_err)?;
    w.write_record(INDEX_COLUMNS).map_err(csv_err)?;
    for (k, s) in traj.snapshots.iter().enumerate() {
        let name = snapshot_name(k);
        write_snapshot(&snap_dir.join(&name), s)?;
        w.write_record([
            k.to_string(),
            fmt_num(s.time),
            format!("{SNAPSHOT_DIR}/{name}"),
        ])
        .map_err(csv_err)?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trajectory_json(dir: &Path, traj: &Trajectory) -> Result<()> {
    fs::create_dir_all(dir)?;
    write_json(&dir.join(TRAJECTORY_FILE), traj)
}

pub fn read_trajectory_json(path: &Path) -> Result<Trajectory> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| ElsError::Io(format!("{}: {e}", path.display())))
}

/// Trajectory from a directory written by [`write_trajectory_csv`].
pub fn read_trajectory_csv(dir: &Path) -> Result<Trajectory> {
    let mut r = csv::Reader::from_path(dir.join(INDEX_FILE)).map_err(csv_err)?;
    let mut snapshots = Vec::new();
    for rec in r.records() {
        let rec = rec.map_err(csv_err)?;
        let t: f64 = rec
            .get(1)
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| ElsError::Io(format!("bad index row {rec:?}")))?;
        let file = rec
            .get(2)
            .ok_or_else(|| ElsError::Io(format!("bad index row {rec:?}")))?;
        snapshots.push(read_snapshot(&dir.join(file), t)?);
    }
    let first = snapshots
        .first()
        .ok_or_else(|| ElsError::Io(format!("{}: no snapshots", dir.display())))?;
    let grid = first.grid;
    if snapshots.iter().any(|s| !s.grid.matches(&grid)) {
        return Err(ElsError::Io("snapshots live on different grids".into()));
    }
    let records_path = dir.join(DIAGNOSTICS_FILE);
    let records = if records_path.exists() {
        read_records(&records_path)?
    } else {
        Vec::new()
    };
    let dt = records
        .windows(2)
        .map(|w| w[1].t - w[0].t)
        .next()
        .unwrap_or(0.0);
    Ok(Trajectory {
        grid,
        formulation: None,
        dt,
        snapshots,
        records,
        failure: None,
        synthetic: false,
    })
}

/// Reloads a run directory, preferring the exact JSON form when present.
pub fn load_trajectory(dir: &Path) -> Result<Trajectory> {
    let json = dir.join(TRAJECTORY_FILE);
    if json.exists() {
        read_trajectory_json(&json)
    } else {
        read_trajectory_csv(dir)
    }
}

pub fn write_gl_energies(path: &Path, energies: &[(f64, GLEnergy)]) -> Result<()> {
    write_csv(
        path,
        &GL_ENERGY_COLUMNS,
        energies
            .iter()
            .map(|(t, e)| vec![*t, e.kinetic, e.elastic, e.penalty, e.fluid, e.total]),
    )
}

/// Writes `gl_energy.csv` and one `gl_snapshots/snapshot_NNNNN.csv` per GL
/// snapshot with columns `r, u, w, u_t, w_t, v`.
pub fn write_gl_trajectory(dir: &Path, traj: &GLTrajectory) -> Result<()> {
    let snap_dir = dir.join("gl_snapshots");
    fs::create_dir_all(&snap_dir)?;
    write_gl_energies(&dir.join("gl_energy.csv"), &traj.energies)?;
    for (k, s) in traj.snapshots.iter().enumerate() {
        let g = &s.grid;
        write_csv(
            &snap_dir.join(snapshot_name(k)),
            &["r", "u", "w", "u_t", "w_t", "v"],
            (0..g.len()).map(|j| {
                vec![
                    g.r(j),
                    s.u.values[j],
                    s.w.values[j],
                    s.u_t.values[j],
                    s.w_t.values[j],
                    s.v.values[j],
                ]
            }),
        )?;
    }
    Ok(())
}

/// Creates `dir` and checks that it accepts files.
pub fn prepare_dir(dir: &Path) -> Result<PathBuf> {
    fs::create_dir_all(dir)
        .map_err(|e| ElsError::Io(format!("cannot create {}: {e}", dir.display())))?;
    let probe = dir.join(".els_write_probe");
    fs::write(&probe, b"")
        .map_err(|e| ElsError::Io(format!("{} is not writable: {e}", dir.display())))?;
    fs::remove_file(&probe)?;
    Ok(dir.to_path_buf())
}
