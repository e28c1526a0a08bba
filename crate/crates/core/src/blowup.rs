//! Concentration detection, self-similar rescaling and harmonic-map profile
//! fitting, plus a synthetic shrinking-soliton trajectory for validation.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::diagnostics::energy_density;
use crate::error::{ElsError, Result};
use crate::grid::{integrate_radial_slice, weighted_sum, RadialField, RadialGrid};
use crate::solver::{FieldState, StepRecord, Trajectory};

/// Number of snapshots before `T₀` reported by [`detect_blowup`].
pub const DEFAULT_CANDIDATES: usize = 8;
/// Probe radius floor in cells.
pub const PROBE_FLOOR_CELLS: f64 = 4.0;
/// Profiles whose largest value on the fit window is at most this are rejected.
pub const FIT_MIN_AMPLITUDE: f64 = 0.1;

const BISECTION_STEPS: usize = 80;
const GOLDEN_TOL: f64 = 1e-12;

/// Directional energy `2∫_0^ρ e r dr` for every `ρ`, from one density evaluation.
struct EnergyProfile {
    grid: RadialGrid,
    e: Vec<f64>,
    total: f64,
}

impl EnergyProfile {
    fn new(state: &FieldState) -> Self {
        let e = energy_density(state).values;
        let total = 2.0 * weighted_sum(&state.grid, &e);
        EnergyProfile {
            grid: state.grid,
            e,
            total,
        }
    }

    fn within(&self, rho: f64) -> f64 {
        if rho <= 0.0 {
            return 0.0;
        }
        let rho = rho.min(self.grid.r_max());
        2.0 * integrate_radial_slice(&self.grid, &self.e, 0.0, rho).expect("radius clamped to grid")
    }

    /// Smallest `R` with `E(6R) = ε₁`, by bisection on the continuous map.
    fn concentration_radius(&self, epsilon1: f64) -> Option<f64> {
        if epsilon1.is_nan() || epsilon1 <= 0.0 || self.total < epsilon1 {
            return None;
        }
        let (mut lo, mut hi) = (0.0, self.grid.r_max());
        for _ in 0..BISECTION_STEPS {
            let mid = 0.5 * (lo + hi);
            if self.within(mid) >= epsilon1 {
                hi = mid;
            } else {
                lo = mid;
            }
        }
        Some(hi / 6.0)
    }
}

/// Smallest `R` with `ε₁ ≤ E(6R, t) ≤ 2ε₁` in directional energy; `None` when the
/// total energy is below `ε₁`.
pub fn select_concentration_radius(state: &FieldState, epsilon1: f64) -> Option<f64> {
    EnergyProfile::new(state).concentration_radius(epsilon1)
}

/// Snapshots preceding a flagged concentration time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConcentrationCandidate {
    /// First snapshot time with `E(r_c) ≥ ε₀`.
    #[serde(rename = "T0")]
    pub t0: f64,
    pub times: Vec<f64>,
    pub radii: Vec<f64>,
    pub epsilon0: f64,
    pub epsilon1: f64,
    /// `R_i / (T₀ - T_i)`.
    pub ratio: Vec<f64>,
    /// Probe radius at `T₀`.
    pub probe_radius: f64,
    /// True when the probe at `T₀` sat on the `4dr` floor.
    pub resolution_limited: bool,
}

impl ConcentrationCandidate {
    /// `R_i / (t0 - T_i)` against another blowup time.
    pub fn ratio_against(&self, t0: f64) -> Vec<f64> {
        self.times
            .iter()
            .zip(&self.radii)
            .map(|(t, r)| r / (t0 - t))
            .collect()
    }
}

fn check_epsilons(epsilon0: f64, epsilon1: f64) -> Result<()> {
    if !(epsilon1 > 0.0 && epsilon0.is_finite()) {
        return Err(ElsError::config(
            "epsilon1 must be positive and epsilon0 finite",
        ));
    }
    if 3.0 * epsilon1 >= epsilon0 {
        return Err(ElsError::config(format!(
            "need 3*epsilon1 < epsilon0, got epsilon1 = {epsilon1}, epsilon0 = {epsilon0}"
        )));
    }
    Ok(())
}

/// [`detect_blowup_with`] keeping [`DEFAULT_CANDIDATES`] snapshots.
pub fn detect_blowup(
    traj: &Trajectory,
    epsilon0: f64,
    epsilon1: f64,
) -> Result<Option<ConcentrationCandidate>> {
    detect_blowup_with(traj, epsilon0, epsilon1, DEFAULT_CANDIDATES)
}

/// Flags `T₀` as the first snapshot where the directional energy inside
/// `r_c = max(6R(t), 4dr)` reaches `ε₀`, and returns up to `count` earlier
/// snapshots with a concentration radius satisfying `6R_i < T₀ - T_i`.
pub fn detect_blowup_with(
    traj: &Trajectory,
    epsilon0: f64,
    epsilon1: f64,
    count: usize,
) -> Result<Option<ConcentrationCandidate>> {
    check_epsilons(epsilon0, epsilon1)?;
    let floor = PROBE_FLOOR_CELLS * traj.grid.dr();
    let mut seen: Vec<(f64, f64)> = Vec::new();
    for s in &traj.snapshots {
        let profile = EnergyProfile::new(s);
        let radius = profile.concentration_radius(epsilon1);
        let probe = radius.map_or(floor, |r| (6.0 * r).max(floor));
        if profile.total >= epsilon0 && profile.within(probe) >= epsilon0 {
            let t0 = s.time;
            let kept: Vec<(f64, f64)> =
                seen.into_iter().filter(|(t, r)| 6.0 * r < t0 - t).collect();
            let kept = &kept[kept.len().saturating_sub(count)..];
            let times: Vec<f64> = kept.iter().map(|x| x.0).collect();
            let radii: Vec<f64> = kept.iter().map(|x| x.1).collect();
            let ratio = times
                .iter()
                .zip(&radii)
                .map(|(t, r)| r / (t0 - t))
                .collect();
            return Ok(Some(ConcentrationCandidate {
                t0,
                times,
                radii,
                epsilon0,
                epsilon1,
                ratio,
                probe_radius: probe,
                resolution_limited: radius.is_none_or(|r| 6.0 * r < floor),
            }));
        }
        if let Some(r) = radius {
            seen.push((s.time, r));
        }
    }
    Ok(None)
}

/// Fields of the snapshot at `t`, or the linear blend of the two bracketing it.
fn slice_at(traj: &Trajectory, t: f64) -> Result<(Vec<f64>, Vec<f64>)> {
    let snaps = &traj.snapshots;
    let tol = 1e-9 * traj.dt.max(1e-12);
    if let Some(s) = snaps
        .iter()
        .find(|s| (s.time - t).abs() <= tol.max(1e-12 * t.abs()))
    {
        return Ok((s.phi.values.clone(), s.h.values.clone()));
    }
    let k = snaps
        .windows(2)
        .position(|w| w[0].time < t && t < w[1].time)
        .ok_or_else(|| ElsError::Resolution(format!("time {t} is not bracketed by snapshots")))?;
    let (a, b) = (&snaps[k], &snaps[k + 1]);
    let s = (t - a.time) / (b.time - a.time);
    let blend = |x: &[f64], y: &[f64]| {
        x.iter()
            .zip(y)
            .map(|(p, q)| p * (1.0 - s) + q * s)
            .collect()
    };
    Ok((
        blend(&a.phi.values, &b.phi.values),
        blend(&a.h.values, &b.h.values),
    ))
}

/// `φ_i(r) = φ(R_i r, T_i)` and `h_i(r) = h(R_i r, T_i)` on `comparison`.
pub fn rescale_profile(
    traj: &Trajectory,
    radius: f64,
    time: f64,
    comparison: &RadialGrid,
) -> Result<(RadialField, RadialField)> {
    if !(radius > 0.0 && radius.is_finite()) {
        return Err(ElsError::range(format!(
            "rescaling radius must be positive, got {radius}"
        )));
    }
    let reach = radius * comparison.r_max();
    if reach > traj.grid.r_max() * (1.0 + 1e-12) {
        return Err(ElsError::range(format!(
            "rescaled grid reaches r = {reach}, source domain ends at {}",
            traj.grid.r_max()
        )));
    }
    let (phi, h) = slice_at(traj, time)?;
    let sample = |values: &[f64]| -> Result<RadialField> {
        let v = (0..comparison.len())
            .map(|j| {
                traj.grid
                    .interpolate(values, (radius * comparison.r(j)).min(traj.grid.r_max()))
            })
            .collect::<Result<Vec<f64>>>()?;
        RadialField::new(*comparison, v)
    };
    Ok((sample(&phi)?, sample(&h)?))
}

/// Best fit of `2 arctan(r/C)` to a profile.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProfileFit {
    #[serde(rename = "C_fit")]
    pub c_fit: f64,
    /// `(Σ (p_j - 2 arctan(r_j/C))² r_j dr)^½` over the window.
    pub residual_l2: f64,
    pub fit_window: (f64, f64),
    /// `L²(r dr)` norm of `φ_rr + φ_r/r - sin φ cos φ / r²` on the window interior.
    pub harmonic_residual: f64,
}

/// Least-squares fit over `C ∈ [dr, r_max]` by golden-section search in `log C`.
pub fn fit_harmonic_profile(profile: &RadialField, window: (f64, f64)) -> Result<ProfileFit> {
    let g = &profile.grid;
    let (lo, hi) = window;
    if !(0.0 <= lo && lo < hi && hi <= g.r_max() * (1.0 + 1e-12)) {
        return Err(ElsError::range(format!(
            "fit window ({lo}, {hi}) not inside [0, {}]",
            g.r_max()
        )));
    }
    let nodes: Vec<usize> = (0..g.len())
        .filter(|&j| g.r(j) >= lo && g.r(j) <= hi)
        .collect();
    let p = &profile.values;
    let amplitude = nodes.iter().map(|&j| p[j].abs()).fold(0.0, f64::max);
    if amplitude <= FIT_MIN_AMPLITUDE {
        return Err(ElsError::FitDegenerate(format!(
            "profile amplitude {amplitude} on the window is at most {FIT_MIN_AMPLITUDE}"
        )));
    }
    let dr = g.dr();
    let cost = |log_c: f64| -> f64 {
        let c = log_c.exp();
        nodes
            .iter()
            .map(|&j| {
                let d = p[j] - 2.0 * (g.r(j) / c).atan();
                d * d * g.r(j) * dr
            })
            .sum()
    };
    let log_c = golden_section(cost, dr.ln(), g.r_max().ln());
    let c_fit = log_c.exp();
    Ok(ProfileFit {
        c_fit,
        residual_l2: cost(log_c).sqrt(),
        fit_window: window,
        harmonic_residual: harmonic_residual(profile, &nodes),
    })
}

fn golden_section(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = b - inv_phi * (b - a);
    let mut x2 = a + inv_phi * (b - a);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while b - a > GOLDEN_TOL {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - inv_phi * (b - a);
            f1 = f(x1);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + inv_phi * (b - a);
            f2 = f(x2);
        }
    }
    0.5 * (a + b)
}

fn harmonic_residual(profile: &RadialField, nodes: &[usize]) -> f64 {
    let g = &profile.grid;
    let p = &profile.values;
    let dr = g.dr();
    let sum: f64 = nodes
        .iter()
        .filter(|&&j| {
            j >= 1 && j + 1 < g.len() && nodes.contains(&(j - 1)) && nodes.contains(&(j + 1))
        })
        .map(|&j| {
            let r = g.r(j);
            let prr = (p[j + 1] - 2.0 * p[j] + p[j - 1]) / (dr * dr);
            let pr = (p[j + 1] - p[j - 1]) / (2.0 * dr);
            let res = prr + pr / r - p[j].sin() * p[j].cos() / (r * r);
            res * res * r * dr
        })
        .sum();
    sum.sqrt()
}

pub type LambdaFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// Core scale `λ(t)` of a synthetic soliton `2 arctan(r/λ(t))`.
#[derive(Clone)]
pub enum Schedule {
    Constant(f64),
    /// `λ(t) = t0 - t`.
    Linear {
        t0: f64,
    },
    /// `λ` and its derivative.
    Custom {
        lambda: LambdaFn,
        derivative: LambdaFn,
    },
}

impl fmt::Debug for Schedule {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Schedule::Constant(c) => write!(f, "Constant({c})"),
            Schedule::Linear { t0 } => write!(f, "Linear {{ t0: {t0} }}"),
            Schedule::Custom { .. } => f.write_str("Custom"),
        }
    }
}

impl Schedule {
    pub fn lambda(&self, t: f64) -> f64 {
        match self {
            Schedule::Constant(c) => *c,
            Schedule::Linear { t0 } => t0 - t,
            Schedule::Custom { lambda, .. } => lambda(t),
        }
    }

    pub fn derivative(&self, t: f64) -> f64 {
        match self {
            Schedule::Constant(_) => 0.0,
            Schedule::Linear { .. } => -1.0,
            Schedule::Custom { derivative, .. } => derivative(t),
        }
    }
}

/// Trajectory with `φ = 2 arctan(r/λ(t))`, `φ_t = -2rλ'/(λ² + r²)` and
/// `v = h = 0` at each of `times`.
pub fn synth_selfsimilar(
    schedule: &Schedule,
    grid: &RadialGrid,
    times: &[f64],
) -> Result<Trajectory> {
    if times.is_empty() {
        return Err(ElsError::config(
            "synthetic trajectory needs at least one time",
        ));
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(ElsError::config(
            "synthetic times must be strictly increasing",
        ));
    }
    let mut prev = f64::INFINITY;
    let mut snapshots = Vec::with_capacity(times.len());
    let mut records = Vec::with_capacity(times.len());
    for &t in times {
        let lambda = schedule.lambda(t);
        if !(lambda > 0.0 && lambda.is_finite()) {
            return Err(ElsError::config(format!(
                "schedule gives lambda({t}) = {lambda}, must be positive"
            )));
        }
        if lambda > prev {
            return Err(ElsError::config(format!("schedule increases at t = {t}")));
        }
        prev = lambda;
        let dl = schedule.derivative(t);
        let phi = RadialField::from_fn(*grid, |r| 2.0 * (r / lambda).atan());
        let phi_t = RadialField::from_fn(*grid, |r| -2.0 * r * dl / (lambda * lambda + r * r));
        let state = FieldState::from_fields(phi, phi_t, RadialField::zeros(*grid), t)?;
        records.push(StepRecord::of(&state, 0.0));
        snapshots.push(state);
    }
    let dt = times
        .windows(2)
        .map(|w| w[1] - w[0])
        .fold(f64::INFINITY, f64::min);
    Ok(Trajectory {
        grid: *grid,
        formulation: None,
        dt: if dt.is_finite() { dt } else { 0.0 },
        snapshots,
        records,
        failure: None,
        synthetic: true,
    })
}

/// Concentration candidate with its rescaled profiles and fits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BlowupReport {
    pub candidate: ConcentrationCandidate,
    pub rescaled_profiles: Vec<(RadialField, RadialField)>,
    /// Fit of the last rescaled profile.
    pub fit: ProfileFit,
    /// One fit per rescaled profile.
    pub fits: Vec<ProfileFit>,
    /// Coefficient of variation of `C_fit` over the last five fits.
    pub fit_cv: f64,
    pub h_sup_rescaled: Vec<f64>,
    /// Mean of `|h_i|` over the fit window.
    pub h_window_mean: Vec<f64>,
    /// How `h_i → 0` is measured; no discrete weak topology is used.
    pub h_convergence_note: String,
}

/// Settings for [`analyze_blowup`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnalysisParams {
    pub epsilon0: f64,
    pub epsilon1: f64,
    pub candidates: usize,
    pub comparison: RadialGrid,
    pub window: (f64, f64),
}

/// Coefficient of variation of the last `k` entries.
pub fn coefficient_of_variation(values: &[f64], k: usize) -> f64 {
    let tail = &values[values.len().saturating_sub(k)..];
    if tail.len() < 2 {
        return 0.0;
    }
    let n = tail.len() as f64;
    let mean = tail.iter().sum::<f64>() / n;
    let var = tail.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    var.sqrt() / mean.abs()
}

/// Detection, rescaling at every candidate and profile fitting; `None` when
/// nothing concentrates.
pub fn analyze_blowup(traj: &Trajectory, params: &AnalysisParams) -> Result<Option<BlowupReport>> {
    let Some(candidate) =
        detect_blowup_with(traj, params.epsilon0, params.epsilon1, params.candidates)?
    else {
        return Ok(None);
    };
    if candidate.times.is_empty() {
        return Err(ElsError::Resolution(format!(
            "concentration flagged at T0 = {} but no earlier snapshot qualifies",
            candidate.t0
        )));
    }
    let g = params.comparison;
    let (lo, hi) = params.window;
    let window_nodes: Vec<usize> = (0..g.len())
        .filter(|&j| g.r(j) >= lo && g.r(j) <= hi)
        .collect();
    let mut profiles = Vec::with_capacity(candidate.times.len());
    let mut fits = Vec::with_capacity(candidate.times.len());
    let mut h_sup = Vec::with_capacity(candidate.times.len());
    let mut h_mean = Vec::with_capacity(candidate.times.len());
    for (&t, &r) in candidate.times.iter().zip(&candidate.radii) {
        let (phi, h) = rescale_profile(traj, r, t, &g)?;
        fits.push(fit_harmonic_profile(&phi, params.window)?);
        h_sup.push(h.max_abs());
        let m = window_nodes.iter().map(|&j| h.values[j].abs()).sum::<f64>()
            / window_nodes.len().max(1) as f64;
        h_mean.push(m);
        profiles.push((phi, h));
    }
    let c: Vec<f64> = fits.iter().map(|f| f.c_fit).collect();
    Ok(Some(BlowupReport {
        fit: *fits.last().expect("at least one candidate"),
        fit_cv: coefficient_of_variation(&c, 5),
        candidate,
        rescaled_profiles: profiles,
        fits,
        h_sup_rescaled: h_sup,
        h_window_mean: h_mean,
        h_convergence_note:
            "sup-norm and window-mean surrogates; weak H1_loc convergence is not tested".into(),
    }))
}
