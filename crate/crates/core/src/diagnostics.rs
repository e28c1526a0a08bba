//! Local energy, cone flux and the pointwise bounds checked on trajectories.
//!
//! Two normalizations of the director energy appear. The density
//! `e = ½φ_r² + ½φ_t² + sin²φ/(2r²)` and its integral [`local_energy`] carry
//! the ½ and enter the flux identity. The *directional* energy
//! `∫(φ_r² + φ_t² + sin²φ/r²) r dr = 2∫e r dr` equals 4 on the harmonic-map
//! bubble and is the one compared against energy thresholds.

use serde::{Deserialize, Serialize};

use crate::error::{ElsError, Result};
use crate::grid::{central_derivative_into, integrate_radial_slice, weighted_sum, RadialField};
use crate::solver::{wels_energy, welss_energy, FieldState, Trajectory};

/// Relative tolerance when matching requested times to snapshot times.
const TIME_TOL: f64 = 1e-9;

/// Nodal energy density `e` and the pointwise factors it is built from.
/// `φ_r` uses the fourth-order central stencil away from the two end cells.
#[derive(Debug, Clone)]
struct Density {
    e: Vec<f64>,
    phi_r: Vec<f64>,
}

fn density(state: &FieldState) -> Density {
    let g = &state.grid;
    let phi = &state.phi.values;
    let phi_t = &state.phi_t.values;
    let mut phi_r = vec![0.0; g.len()];
    central_derivative_into(g, phi, &mut phi_r);
    let dr = g.dr();
    for j in 2..g.len() - 2 {
        phi_r[j] = (phi[j - 2] - 8.0 * phi[j - 1] + 8.0 * phi[j + 1] - phi[j + 2]) / (12.0 * dr);
    }
    let e = (0..g.len())
        .map(|j| {
            let potential = if j == 0 {
                // sin φ / r → φ_r(0) on the axis
                phi_r[0] * phi_r[0]
            } else {
                let s = phi[j].sin() / g.r(j);
                s * s
            };
            0.5 * (phi_r[j] * phi_r[j] + phi_t[j] * phi_t[j] + potential)
        })
        .collect();
    Density { e, phi_r }
}

/// `e(r,t)` at every node.
pub fn energy_density(state: &FieldState) -> RadialField {
    RadialField {
        grid: state.grid,
        values: density(state).e,
    }
}

/// `E(R,t) = ∫_0^R e r dr`.
pub fn local_energy(state: &FieldState, radius: f64) -> Result<f64> {
    if radius == 0.0 {
        return Ok(0.0);
    }
    integrate_radial_slice(&state.grid, &density(state).e, 0.0, radius)
}

/// `∫_0^R (φ_r² + φ_t² + sin²φ/r²) r dr = 2E(R,t)`.
pub fn directional_energy(state: &FieldState, radius: f64) -> Result<f64> {
    Ok(2.0 * local_energy(state, radius)?)
}

/// Directional energy over the whole grid.
pub fn total_directional_energy(state: &FieldState) -> f64 {
    2.0 * weighted_sum(&state.grid, &density(state).e)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnergyReport {
    pub time: f64,
    pub e_field: RadialField,
    /// Directional energy inside each node radius, `2∫_0^{r_j} e r dr`.
    #[serde(rename = "E_of_R")]
    pub e_of_r: Vec<f64>,
    pub total_welss: f64,
    pub total_wels: f64,
}

impl EnergyReport {
    /// Directional energy inside `radius`, by the same quadrature as the table.
    pub fn energy_within(&self, radius: f64) -> Result<f64> {
        if radius == 0.0 {
            return Ok(0.0);
        }
        Ok(2.0 * integrate_radial_slice(&self.e_field.grid, &self.e_field.values, 0.0, radius)?)
    }
}

pub fn energy_report(state: &FieldState) -> EnergyReport {
    let g = &state.grid;
    let e = density(state).e;
    let dr = g.dr();
    let mut e_of_r = vec![0.0; g.len()];
    for j in 1..g.len() {
        e_of_r[j] = e_of_r[j - 1] + (e[j - 1] * g.r(j - 1) + e[j] * g.r(j)) * dr;
    }
    EnergyReport {
        time: state.time,
        e_field: RadialField {
            grid: *g,
            values: e,
        },
        e_of_r,
        total_welss: welss_energy(state),
        total_wels: wels_energy(state),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FluxReport {
    #[serde(rename = "T")]
    pub apex: f64,
    pub tau: f64,
    pub flux_value: f64,
    /// Smallest `e - φ_r φ_t` met at a sampled cone point.
    pub integrand_min: f64,
}

fn same_time(a: f64, b: f64) -> bool {
    (a - b).abs() <= TIME_TOL * a.abs().max(b.abs()).max(1.0)
}

/// Snapshots with times in `[t_lo, t_hi]`, which must both be snapshot times.
fn snapshots_between(traj: &Trajectory, t_lo: f64, t_hi: f64) -> Result<Vec<&FieldState>> {
    let picked: Vec<&FieldState> = traj
        .snapshots
        .iter()
        .filter(|s| {
            (s.time >= t_lo || same_time(s.time, t_lo))
                && (s.time <= t_hi || same_time(s.time, t_hi))
        })
        .collect();
    match (picked.first(), picked.last()) {
        (Some(a), Some(b))
            if same_time(a.time, t_lo) && same_time(b.time, t_hi) && picked.len() >= 2 =>
        {
            Ok(picked)
        }
        _ => Err(ElsError::Resolution(format!(
            "snapshots do not cover [{t_lo}, {t_hi}] with endpoints on snapshot times"
        ))),
    }
}

/// `∫_{t_lo}^{t_hi} [e - φ_r φ_t](T - t, t) (T - t) dt` along the backward cone
/// with apex `T`. The nodal values of `[e - φ_r φ_t] r` are interpolated
/// linearly to `r = T - t`, the same convention as [`integrate_radial`], and
/// integrated by the trapezoid rule over snapshot times. Returns the value and
/// the smallest sampled `e - φ_r φ_t`.
///
/// [`integrate_radial`]: crate::grid::integrate_radial
pub fn cone_flux(traj: &Trajectory, apex: f64, t_lo: f64, t_hi: f64) -> Result<(f64, f64)> {
    if t_lo.is_nan() || t_hi.is_nan() || t_lo >= t_hi || t_hi > apex * (1.0 + TIME_TOL) + TIME_TOL {
        return Err(ElsError::range(format!(
            "cone interval [{t_lo}, {t_hi}] must end before the apex {apex}"
        )));
    }
    if apex - t_lo > traj.grid.r_max() {
        return Err(ElsError::range(format!(
            "cone radius {} exceeds r_max = {}",
            apex - t_lo,
            traj.grid.r_max()
        )));
    }
    let snaps = snapshots_between(traj, t_lo, t_hi)?;
    let mut samples = Vec::with_capacity(snaps.len());
    let mut integrand_min = f64::INFINITY;
    for s in &snaps {
        let d = density(s);
        let g: Vec<f64> = (0..s.grid.len())
            .map(|j| d.e[j] - d.phi_r[j] * s.phi_t.values[j])
            .collect();
        let gr: Vec<f64> = g.iter().enumerate().map(|(j, x)| x * s.grid.r(j)).collect();
        let r = (apex - s.time).max(0.0);
        integrand_min = integrand_min.min(s.grid.interpolate(&g, r)?);
        samples.push((s.time, s.grid.interpolate(&gr, r)?));
    }
    let flux = samples
        .windows(2)
        .map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0))
        .sum();
    Ok((flux, integrand_min))
}

/// `Flux(T, T - τ)`.
pub fn flux(traj: &Trajectory, apex: f64, tau: f64) -> Result<FluxReport> {
    let (flux_value, integrand_min) = cone_flux(traj, apex, apex - tau, apex)?;
    Ok(FluxReport {
        apex,
        tau,
        flux_value,
        integrand_min,
    })
}

/// `sup_t ∫ h_t² r dr` over the snapshots.
pub fn sup_ht_l2_squared(traj: &Trajectory) -> f64 {
    traj.snapshots
        .iter()
        .map(|s| {
            weighted_sum(
                &s.grid,
                &s.h_t.values.iter().map(|x| x * x).collect::<Vec<f64>>(),
            )
        })
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocalEnergyCheck {
    /// `max(0, E(R,s) + Flux - E(R+τ, s-τ) - C τ)`.
    pub violation: f64,
    pub inner: f64,
    pub flux: f64,
    pub outer: f64,
    pub c_test: f64,
}

fn snapshot_at(traj: &Trajectory, t: f64) -> Result<&FieldState> {
    traj.snapshots
        .iter()
        .find(|s| same_time(s.time, t))
        .ok_or_else(|| ElsError::Resolution(format!("no snapshot at t = {t}")))
}

/// Local energy inequality `E(R,s) + Flux(s, s-τ) ≤ E(R+τ, s-τ) + C τ` on the
/// cone with apex `T = R + s`. `c_test` defaults to [`sup_ht_l2_squared`].
pub fn local_energy_monotonicity(
    traj: &Trajectory,
    apex: f64,
    radius: f64,
    s: f64,
    tau: f64,
    c_test: Option<f64>,
) -> Result<LocalEnergyCheck> {
    if (radius + s - apex).abs() > TIME_TOL * apex.abs().max(1.0) {
        return Err(ElsError::range(format!(
            "R + s = {} differs from T = {apex}",
            radius + s
        )));
    }
    if !(radius > 0.0 && tau > 0.0) {
        return Err(ElsError::range("R and tau must be positive"));
    }
    if radius + tau > traj.grid.r_max() {
        return Err(ElsError::range(format!(
            "R + tau = {} exceeds r_max",
            radius + tau
        )));
    }
    let c_test = c_test.unwrap_or_else(|| sup_ht_l2_squared(traj));
    let inner = local_energy(snapshot_at(traj, s)?, radius)?;
    let outer = local_energy(snapshot_at(traj, s - tau)?, radius + tau)?;
    let (flux, _) = cone_flux(traj, apex, s - tau, s)?;
    let violation = (inner + flux - outer - c_test * tau).max(0.0);
    Ok(LocalEnergyCheck {
        violation,
        inner,
        flux,
        outer,
        c_test,
    })
}

/// `H(φ) = ∫_0^φ |sin τ| dτ`, odd in `φ`.
pub fn h_function(phi: f64) -> f64 {
    let a = phi.abs();
    let k = (a / std::f64::consts::PI).floor();
    let value = 2.0 * k + 1.0 - (a - k * std::f64::consts::PI).cos();
    value.copysign(phi)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HBound {
    /// `max_j (|H(φ_j)| - E_dir(r_j)) ∨ 0`.
    pub violation: f64,
    /// `max_j |H(φ_j)| / E_dir(r_j)` over nodes with positive energy; the
    /// Cauchy–Schwarz estimate bounds it by ½.
    pub sharp_ratio: f64,
}

/// Compares `|H(φ(r))|` with the directional energy inside `r` at every node.
pub fn h_bound_check(state: &FieldState) -> HBound {
    let report = energy_report(state);
    let mut out = HBound {
        violation: 0.0,
        sharp_ratio: 0.0,
    };
    for (j, phi) in state.phi.values.iter().enumerate() {
        let h = h_function(*phi).abs();
        let e = report.e_of_r[j];
        out.violation = out.violation.max(h - e);
        if e > 0.0 {
            out.sharp_ratio = out.sharp_ratio.max(h / e);
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConeReport {
    #[serde(rename = "T")]
    pub apex: f64,
    /// `(t, λ, ∫_{λ(T-t)}^{T-t} e r dr)`.
    pub annulus_energies: Vec<(f64, f64, f64)>,
    /// `(τ, (1/τ)∬_{K^T(τ)} φ_t² r dr dt)`.
    pub phit_cone_avg: Vec<(f64, f64)>,
}

/// Annulus energies at every snapshot before `T` whose cone fits the grid, and
/// cone averages of `φ_t²` over `K^T(τ) = {T-τ ≤ t ≤ T, r ≤ T-t}`.
pub fn cone_reports(
    traj: &Trajectory,
    apex: f64,
    lambdas: &[f64],
    taus: &[f64],
) -> Result<ConeReport> {
    if let Some(l) = lambdas.iter().find(|l| !(**l > 0.0 && **l < 1.0)) {
        return Err(ElsError::range(format!("lambda = {l} must lie in (0, 1)")));
    }
    if let Some(tau_min) = taus.iter().cloned().reduce(f64::min) {
        if tau_min <= 0.0 {
            return Err(ElsError::range("tau must be positive"));
        }
        let spacing = traj
            .snapshots
            .windows(2)
            .map(|w| w[1].time - w[0].time)
            .fold(0.0, f64::max);
        if spacing > tau_min / 8.0 * (1.0 + 1e-9) {
            return Err(ElsError::Resolution(format!(
                "snapshot spacing {spacing} exceeds tau_min/8 = {}",
                tau_min / 8.0
            )));
        }
    }
    let r_max = traj.grid.r_max();
    let mut annulus_energies = Vec::new();
    for s in traj
        .snapshots
        .iter()
        .filter(|s| s.time < apex && apex - s.time <= r_max)
    {
        let d = density(s);
        let outer = apex - s.time;
        for &lambda in lambdas {
            let value = integrate_radial_slice(&s.grid, &d.e, lambda * outer, outer)?;
            annulus_energies.push((s.time, lambda, value));
        }
    }
    let mut phit_cone_avg = Vec::with_capacity(taus.len());
    for &tau in taus {
        if tau > r_max {
            return Err(ElsError::range(format!("tau = {tau} exceeds r_max")));
        }
        let snaps = snapshots_between(traj, apex - tau, apex)?;
        let slices: Vec<(f64, f64)> = snaps
            .iter()
            .map(|s| {
                let radius = apex - s.time;
                let sq: Vec<f64> = s.phi_t.values.iter().map(|x| x * x).collect();
                let value = if radius <= 0.0 {
                    0.0
                } else {
                    integrate_radial_slice(&s.grid, &sq, 0.0, radius)?
                };
                Ok((s.time, value))
            })
            .collect::<Result<_>>()?;
        let integral: f64 = slices
            .windows(2)
            .map(|w| 0.5 * (w[0].1 + w[1].1) * (w[1].0 - w[0].0))
            .sum();
        phit_cone_avg.push((tau, integral / tau));
    }
    Ok(ConeReport {
        apex,
        annulus_energies,
        phit_cone_avg,
    })
}

/// `(max |h_r|, max |h_t|)` over every recorded step.
pub fn sup_norms_h(traj: &Trajectory) -> (f64, f64) {
    traj.records
        .iter()
        .fold((0.0, 0.0), |(a, b), r| (a.max(r.sup_hr), b.max(r.sup_ht)))
}

/// Largest deviation of `φ` and `v` at `r = 0` and `r = r_max` from their
/// initial values.
pub fn boundary_drift(traj: &Trajectory) -> f64 {
    let Some(first) = traj.snapshots.first() else {
        return 0.0;
    };
    let n = traj.grid.n_cells();
    traj.snapshots
        .iter()
        .flat_map(|s| {
            [
                (s.phi.values[0] - first.phi.values[0]).abs(),
                (s.v.values[0] - first.v.values[0]).abs(),
                (s.phi.values[n] - first.phi.values[n]).abs(),
                (s.v.values[n] - first.v.values[n]).abs(),
            ]
        })
        .fold(0.0, f64::max)
}

/// `max |φ|` over all nodes and snapshots.
pub fn max_abs_angle(traj: &Trajectory) -> f64 {
    traj.snapshots
        .iter()
        .map(|s| s.phi.max_abs())
        .fold(0.0, f64::max)
}
