//! Time integration of the coupled director/flow system in the `(v, φ)` and
//! `(h, φ)` formulations, and of the uncoupled σ-model.
//!
//! One step is a backward-Euler parabolic solve followed by a damped leapfrog
//! wave step that sees the freshly updated flow. The leapfrog is carried in its
//! half-step velocity form `p^{n+1/2} = (φ^{n+1} - φ^n)/dt`; the stored `φ_t` is
//! the time-centred velocity at the integer level.

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{ElsError, Result};
use crate::grid::{
    bessel_laplacian_into, central_derivative_into, energy_gradient_into, flow_gradient_energy,
    flux_divergence_into, half_node_gradient_energy, implicit_diffusion_solve, weighted_sum,
    AxisCell, AxisPolicy, RadialField, RadialGrid, AXIS_TOLERANCE,
};
use crate::initial::InitialDataSpec;

/// Magnitude beyond which a field is declared divergent.
pub const DIVERGENCE_LIMIT: f64 = 1e8;

/// Fraction of `r_max` the wave cone may travel, minus the data's support.
pub const DOMAIN_FRACTION: f64 = 0.8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Formulation {
    /// `v_t = (1/r)(r v_r + r φ_t)_r`, `φ_tt + 2φ_t = L φ - sin2φ/(2r²) - v_r`.
    VForm,
    /// `h_t = L_vec h + φ_t`, `φ_tt + φ_t = L φ - sin2φ/(2r²) - h_t`.
    HForm,
    /// `φ_tt = L φ - sin2φ/(2r²)`.
    SigmaModel,
}

impl Formulation {
    /// Coefficient of `φ_t` in the wave equation.
    pub fn damping(self) -> f64 {
        match self {
            Formulation::VForm => 2.0,
            Formulation::HForm => 1.0,
            Formulation::SigmaModel => 0.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Formulation::VForm => "v_form",
            Formulation::HForm => "h_form",
            Formulation::SigmaModel => "sigma_model",
        }
    }
}

/// Source term `f(grid, t)` added to one equation's right side.
pub type SourceFn = Arc<dyn Fn(&RadialGrid, f64) -> RadialField + Send + Sync>;

/// Manufactured sources: `flow` enters the `v` (or `h`) equation, `director`
/// the `φ` equation.
#[derive(Clone, Default)]
pub struct Forcing {
    pub flow: Option<SourceFn>,
    pub director: Option<SourceFn>,
}

impl fmt::Debug for Forcing {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Forcing")
            .field("flow", &self.flow.is_some())
            .field("director", &self.director.is_some())
            .finish()
    }
}

#[derive(Debug, Clone)]
pub struct SolverConfig {
    pub formulation: Formulation,
    pub dt: f64,
    pub t_end: f64,
    pub cfl_sigma: f64,
    pub initial_data: InitialDataSpec,
    pub forcing: Option<Forcing>,
    pub snapshot_every: usize,
}

impl SolverConfig {
    pub const DEFAULT_CFL: f64 = 0.5;
    pub const DEFAULT_SNAPSHOT_EVERY: usize = 10;

    pub fn new(
        formulation: Formulation,
        dt: f64,
        t_end: f64,
        initial_data: InitialDataSpec,
    ) -> Self {
        SolverConfig {
            formulation,
            dt,
            t_end,
            cfl_sigma: Self::DEFAULT_CFL,
            initial_data,
            forcing: None,
            snapshot_every: Self::DEFAULT_SNAPSHOT_EVERY,
        }
    }

    pub fn with_forcing(mut self, forcing: Forcing) -> Self {
        self.forcing = Some(forcing);
        self
    }

    pub fn with_snapshot_every(mut self, k: usize) -> Self {
        self.snapshot_every = k;
        self
    }

    pub fn with_cfl(mut self, cfl: f64) -> Self {
        self.cfl_sigma = cfl;
        self
    }

    /// Number of steps taken by [`run`]; the last step lands on `t_end`.
    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt - 1e-9).ceil().max(0.0) as usize
    }

    pub fn check_cfl(&self, grid: &RadialGrid) -> Result<()> {
        check_cfl(self.dt, self.cfl_sigma, grid)
    }

    pub fn validate(&self, grid: &RadialGrid) -> Result<()> {
        if !(self.dt.is_finite() && self.dt > 0.0) {
            return Err(ElsError::config(format!(
                "dt must be positive, got {}",
                self.dt
            )));
        }
        if !(self.t_end.is_finite() && self.t_end >= 0.0) {
            return Err(ElsError::config(format!(
                "t_end must be non-negative, got {}",
                self.t_end
            )));
        }
        if !(self.cfl_sigma > 0.0 && self.cfl_sigma <= 1.0) {
            return Err(ElsError::config(format!(
                "cfl_sigma must lie in (0, 1], got {}",
                self.cfl_sigma
            )));
        }
        if self.snapshot_every == 0 {
            return Err(ElsError::config("snapshot_every must be positive"));
        }
        self.check_cfl(grid)?;
        self.initial_data.validate()?;
        check_domain(self.t_end, self.initial_data.support_radius(), grid)
    }
}

pub(crate) fn check_cfl(dt: f64, cfl: f64, grid: &RadialGrid) -> Result<()> {
    let limit = cfl * grid.dr();
    if dt > limit * (1.0 + 1e-12) {
        return Err(ElsError::config(format!(
            "dt = {dt} violates the CFL bound cfl_sigma*dr = {limit}"
        )));
    }
    Ok(())
}

pub(crate) fn check_domain(t_end: f64, support: f64, grid: &RadialGrid) -> Result<()> {
    let reach = DOMAIN_FRACTION * grid.r_max() - support;
    if t_end > reach {
        return Err(ElsError::config(format!(
            "t_end = {t_end} lets the wave cone reach the outer boundary \
             (0.8*r_max - support radius = {reach})"
        )));
    }
    Ok(())
}

/// Snapshot of `(φ, φ_t, v, h)` at one time plus leapfrog bookkeeping.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldState {
    pub grid: RadialGrid,
    pub phi: RadialField,
    pub phi_t: RadialField,
    pub v: RadialField,
    pub h: RadialField,
    pub time: f64,
    pub phi_prev: RadialField,
    /// Discrete `h_t` of the step that produced this state.
    pub h_t: RadialField,
    pub steps: u64,
}

impl FieldState {
    /// State with the given fields, `h = h_from_v(v)`, `h_t = 0` and a
    /// stationary leapfrog history.
    pub fn from_fields(
        phi: RadialField,
        phi_t: RadialField,
        v: RadialField,
        time: f64,
    ) -> Result<Self> {
        let grid = phi.grid;
        if !grid.matches(&phi_t.grid) || !grid.matches(&v.grid) {
            return Err(ElsError::Contract("fields live on different grids".into()));
        }
        let h = h_from_v(&v)?;
        Ok(FieldState {
            grid,
            phi_prev: phi.clone(),
            phi,
            phi_t,
            v,
            h,
            time,
            h_t: RadialField::zeros(grid),
            steps: 0,
        })
    }

    pub fn zero(grid: RadialGrid) -> Self {
        let z = RadialField::zeros(grid);
        FieldState {
            grid,
            phi: z.clone(),
            phi_t: z.clone(),
            v: z.clone(),
            h: z.clone(),
            time: 0.0,
            phi_prev: z.clone(),
            h_t: z,
            steps: 0,
        }
    }

    fn check_finite(&self) -> Result<()> {
        let fields = [
            ("phi", &self.phi),
            ("phi_t", &self.phi_t),
            ("v", &self.v),
            ("h", &self.h),
        ];
        for (name, f) in fields {
            if let Some(j) = f
                .values
                .iter()
                .position(|x| !x.is_finite() || x.abs() > DIVERGENCE_LIMIT)
            {
                return Err(ElsError::Divergence {
                    time: self.time,
                    reason: format!("{name} = {} at r = {}", f.values[j], self.grid.r(j)),
                });
            }
        }
        Ok(())
    }
}

/// `h(r) = (1/r) ∫_0^r v R dR`, integrating the piecewise-linear interpolant of
/// `v` against `R` exactly cell by cell; `h_0 = 0`.
pub fn h_from_v(v: &RadialField) -> Result<RadialField> {
    require_axis_zero("v", &v.values)?;
    Ok(RadialField {
        grid: v.grid,
        values: h_from_v_slice(&v.grid, &v.values),
    })
}

pub(crate) fn h_from_v_slice(grid: &RadialGrid, v: &[f64]) -> Vec<f64> {
    let dr = grid.dr();
    let mut h = vec![0.0; v.len()];
    let mut acc = 0.0;
    for j in 1..v.len() {
        let (a, b) = (grid.r(j - 1), grid.r(j));
        acc += dr / 6.0 * (v[j - 1] * (2.0 * a + b) + v[j] * (a + 2.0 * b));
        h[j] = acc / b;
    }
    h
}

/// `v = h_r + h/r` with `h_r` by central differences (one-sided at `r_max`); `v_0 = 0`.
pub fn v_from_h(h: &RadialField) -> Result<RadialField> {
    require_axis_zero("h", &h.values)?;
    Ok(RadialField {
        grid: h.grid,
        values: v_from_h_slice(&h.grid, &h.values),
    })
}

pub(crate) fn v_from_h_slice(grid: &RadialGrid, h: &[f64]) -> Vec<f64> {
    let mut d = vec![0.0; h.len()];
    central_derivative_into(grid, h, &mut d);
    d[0] = 0.0;
    for j in 1..h.len() {
        d[j] += h[j] / grid.r(j);
    }
    d
}

fn require_axis_zero(name: &str, f: &[f64]) -> Result<()> {
    if f[0].abs() > AXIS_TOLERANCE {
        return Err(ElsError::Contract(format!(
            "{name}(0) must vanish, got {}",
            f[0]
        )));
    }
    Ok(())
}

/// Right side of the wave equation without damping:
/// `L φ - sin(2φ)/(2r²) - coupling + source`, zero at both end nodes.
fn wave_force(
    grid: &RadialGrid,
    phi: &[f64],
    coupling: Option<&[f64]>,
    source: Option<&RadialField>,
    out: &mut [f64],
) {
    bessel_laplacian_into(grid, phi, AxisPolicy::DirichletZero, out);
    let n = grid.n_cells();
    for j in 1..n {
        let r = grid.r(j);
        out[j] -= (2.0 * phi[j]).sin() / (2.0 * r * r);
        if let Some(c) = coupling {
            out[j] -= c[j];
        }
        if let Some(s) = source {
            out[j] += s.values[j];
        }
    }
    out[0] = 0.0;
    out[n] = 0.0;
}

fn source_at(f: Option<&SourceFn>, grid: &RadialGrid, t: f64) -> Result<Option<RadialField>> {
    match f {
        None => Ok(None),
        Some(f) => {
            let s = f(grid, t);
            if s.len() != grid.len() {
                return Err(ElsError::Contract(format!(
                    "forcing returned {} values for {} nodes",
                    s.len(),
                    grid.len()
                )));
            }
            Ok(Some(s))
        }
    }
}

/// Initial state at `t = 0` with the leapfrog history set by a second-order
/// Taylor step consistent with `φ_t(0) = φ₁`.
pub fn init_state(config: &SolverConfig, grid: &RadialGrid) -> Result<FieldState> {
    let (phi, phi1, v) = config.initial_data.sample(grid)?;
    let n = grid.n_cells();
    let dt = config.dt;
    let gamma = config.formulation.damping();
    let h = h_from_v(&v)?;

    let mut grad_v = vec![0.0; grid.len()];
    energy_gradient_into(grid, &v.values, &mut grad_v);
    let mut h_t = vec![0.0; grid.len()];
    for j in 1..n {
        h_t[j] = grad_v[j] + phi1.values[j];
    }
    let coupling = match config.formulation {
        Formulation::VForm => Some(grad_v.as_slice()),
        Formulation::HForm => Some(h_t.as_slice()),
        Formulation::SigmaModel => None,
    };
    let director = config.forcing.as_ref().and_then(|f| f.director.as_ref());
    let src = source_at(director, grid, 0.0)?;
    let mut force = vec![0.0; grid.len()];
    wave_force(grid, &phi.values, coupling, src.as_ref(), &mut force);

    let mut phi_t = phi1.values.clone();
    phi_t[0] = 0.0;
    phi_t[n] = 0.0;
    let mut prev = phi.values.clone();
    for j in 1..n {
        prev[j] = phi.values[j] - dt * phi_t[j] + 0.5 * dt * dt * (force[j] - gamma * phi_t[j]);
    }
    if config.formulation == Formulation::SigmaModel {
        h_t = vec![0.0; grid.len()];
    }
    let state = FieldState {
        grid: *grid,
        phi_t: RadialField {
            grid: *grid,
            values: phi_t,
        },
        phi_prev: RadialField {
            grid: *grid,
            values: prev,
        },
        phi,
        v,
        h,
        time: 0.0,
        h_t: RadialField {
            grid: *grid,
            values: h_t,
        },
        steps: 0,
    };
    state.check_finite()?;
    Ok(state)
}

/// Advances `state` by one step of `config.dt`.
pub fn step(state: &FieldState, config: &SolverConfig) -> Result<FieldState> {
    config.check_cfl(&state.grid)?;
    let grid = state.grid;
    let n = grid.n_cells();
    let dt = config.dt;
    let t = state.time;
    let t_new = t + dt;
    let gamma = config.formulation.damping();
    let forcing = config.forcing.as_ref();
    let flow_src = source_at(forcing.and_then(|f| f.flow.as_ref()), &grid, t_new)?;

    let (v_new, h_new, h_t, coupling) = match config.formulation {
        Formulation::VForm => {
            let mut rhs = vec![0.0; grid.len()];
            flux_divergence_into(&grid, &state.phi_t.values, &mut rhs);
            for (j, x) in rhs.iter_mut().enumerate() {
                *x = state.v.values[j] + dt * (*x + flow_src.as_ref().map_or(0.0, |s| s.values[j]));
            }
            let v_new = implicit_diffusion_solve(
                &grid,
                &rhs,
                dt,
                None,
                false,
                AxisCell::ZeroFlux(state.v.values[0]),
                state.v.values[n],
            );
            let h_new = h_from_v_slice(&grid, &v_new);
            let h_t: Vec<f64> = (0..=n)
                .map(|j| (h_new[j] - state.h.values[j]) / dt)
                .collect();
            let mut grad = vec![0.0; grid.len()];
            energy_gradient_into(&grid, &v_new, &mut grad);
            (v_new, h_new, h_t, Some(grad))
        }
        Formulation::HForm => {
            let rhs: Vec<f64> = (0..=n)
                .map(|j| {
                    state.h.values[j]
                        + dt * (state.phi_t.values[j]
                            + flow_src.as_ref().map_or(0.0, |s| s.values[j]))
                })
                .collect();
            let h_new = implicit_diffusion_solve(
                &grid,
                &rhs,
                dt,
                None,
                true,
                AxisCell::Dirichlet(0.0),
                state.h.values[n],
            );
            let h_t: Vec<f64> = (0..=n)
                .map(|j| (h_new[j] - state.h.values[j]) / dt)
                .collect();
            let mut v_new = v_from_h_slice(&grid, &h_new);
            v_new[n] = state.v.values[n];
            let coupling = h_t.clone();
            (v_new, h_new, h_t, Some(coupling))
        }
        Formulation::SigmaModel => (
            state.v.values.clone(),
            state.h.values.clone(),
            vec![0.0; grid.len()],
            None,
        ),
    };

    let director = forcing.and_then(|f| f.director.as_ref());
    let src_old = source_at(director, &grid, t)?;
    let mut force = vec![0.0; grid.len()];
    wave_force(
        &grid,
        &state.phi.values,
        coupling.as_deref(),
        src_old.as_ref(),
        &mut force,
    );

    let damp_minus = 1.0 - 0.5 * gamma * dt;
    let damp_plus = 1.0 + 0.5 * gamma * dt;
    let mut phi_new = state.phi.values.clone();
    let mut p_new = vec![0.0; grid.len()];
    for j in 1..n {
        let p_old = (state.phi.values[j] - state.phi_prev.values[j]) / dt;
        p_new[j] = (p_old * damp_minus + dt * force[j]) / damp_plus;
        phi_new[j] = state.phi.values[j] + dt * p_new[j];
    }

    let src_new = source_at(director, &grid, t_new)?;
    wave_force(
        &grid,
        &phi_new,
        coupling.as_deref(),
        src_new.as_ref(),
        &mut force,
    );
    let mut phi_t_new = vec![0.0; grid.len()];
    for j in 1..n {
        phi_t_new[j] = (p_new[j] + 0.5 * dt * force[j]) / damp_plus;
    }

    let field = |values: Vec<f64>| RadialField { grid, values };
    let next = FieldState {
        grid,
        phi_prev: state.phi.clone(),
        phi: field(phi_new),
        phi_t: field(phi_t_new),
        v: field(v_new),
        h: field(h_new),
        time: t_new,
        h_t: field(h_t),
        steps: state.steps + 1,
    };
    next.check_finite()?;
    Ok(next)
}

/// `½∫(φ_r² + φ_t² + sin²φ/r² + h_r² + h²/r²) r dr`.
pub fn welss_energy(state: &FieldState) -> f64 {
    let g = &state.grid;
    let h = &state.h.values;
    let h_over_r: Vec<f64> = (0..g.len())
        .map(|j| if j == 0 { 0.0 } else { h[j] / g.r(j) })
        .collect();
    director_energy(state)
        + 0.5 * (half_node_gradient_energy(g, h) + weighted_sum(g, &squares(&h_over_r)))
}

/// `½∫(v² + φ_r² + φ_t² + sin²φ/r²) r dr`.
pub fn wels_energy(state: &FieldState) -> f64 {
    director_energy(state) + 0.5 * weighted_sum(&state.grid, &squares(&state.v.values))
}

/// `½∫(φ_r² + φ_t² + sin²φ/r²) r dr`.
pub fn director_energy(state: &FieldState) -> f64 {
    let g = &state.grid;
    let phi = &state.phi.values;
    let potential: Vec<f64> = (0..g.len())
        .map(|j| {
            if j == 0 {
                0.0
            } else {
                let s = phi[j].sin() / g.r(j);
                s * s
            }
        })
        .collect();
    0.5 * (half_node_gradient_energy(g, phi)
        + weighted_sum(g, &squares(&state.phi_t.values))
        + weighted_sum(g, &potential))
}

fn squares(f: &[f64]) -> Vec<f64> {
    f.iter().map(|x| x * x).collect()
}

/// Energy functional monitored for each formulation: the `(v, φ)` functional
/// for `v_form`, the `(h, φ)` functional otherwise.
pub fn monitored_energy(formulation: Formulation, state: &FieldState) -> f64 {
    match formulation {
        Formulation::VForm => wels_energy(state),
        Formulation::HForm | Formulation::SigmaModel => welss_energy(state),
    }
}

/// Continuum dissipation rate of the monitored functional evaluated on a state:
/// `∫(v_r² + 2v_rφ_t + 2φ_t²) r dr` for `v_form`, `∫(φ_t² + h_t²) r dr` for
/// `h_form`, zero for the σ-model.
pub fn dissipation_rate(formulation: Formulation, state: &FieldState) -> f64 {
    let g = &state.grid;
    let phi_t = &state.phi_t.values;
    match formulation {
        Formulation::VForm => {
            let mut grad = vec![0.0; g.len()];
            energy_gradient_into(g, &state.v.values, &mut grad);
            let cross: Vec<f64> = (0..g.len())
                .map(|j| 2.0 * grad[j] * phi_t[j] + 2.0 * phi_t[j] * phi_t[j])
                .collect();
            flow_gradient_energy(g, &state.v.values) + weighted_sum(g, &cross)
        }
        Formulation::HForm => {
            weighted_sum(g, &squares(phi_t)) + weighted_sum(g, &squares(&state.h_t.values))
        }
        Formulation::SigmaModel => 0.0,
    }
}

/// `(max|h_r|, max|h_t|)` over the nodes of one state.
pub fn h_sup_norms(state: &FieldState) -> (f64, f64) {
    let mut hr = vec![0.0; state.grid.len()];
    central_derivative_into(&state.grid, &state.h.values, &mut hr);
    let sup = |f: &[f64]| f.iter().fold(0.0f64, |m, x| m.max(x.abs()));
    (sup(&hr), sup(&state.h_t.values))
}

/// Scalar diagnostics recorded after every step.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    #[serde(rename = "E_total_welss")]
    pub e_total_welss: f64,
    #[serde(rename = "E_total_wels")]
    pub e_total_wels: f64,
    /// `E(t_{n+1}) - E(t_n) + dt·(D_n + D_{n+1})/2` for the monitored functional.
    pub dissipation_residual: f64,
    pub sup_hr: f64,
    pub sup_ht: f64,
}

impl StepRecord {
    pub(crate) fn of(state: &FieldState, residual: f64) -> Self {
        let (sup_hr, sup_ht) = h_sup_norms(state);
        StepRecord {
            t: state.time,
            e_total_welss: welss_energy(state),
            e_total_wels: wels_energy(state),
            dissipation_residual: residual,
            sup_hr,
            sup_ht,
        }
    }
}

/// Snapshots and per-step records of one run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub grid: RadialGrid,
    pub formulation: Option<Formulation>,
    pub dt: f64,
    pub snapshots: Vec<FieldState>,
    pub records: Vec<StepRecord>,
    /// Set when the run stopped early; the snapshots end at the last good state.
    pub failure: Option<ElsError>,
    pub synthetic: bool,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time).collect()
    }

    pub fn last(&self) -> Option<&FieldState> {
        self.snapshots.last()
    }

    pub fn is_complete(&self) -> bool {
        self.failure.is_none()
    }

    pub fn failure_time(&self) -> Option<f64> {
        match &self.failure {
            Some(ElsError::Divergence { time, .. }) => Some(*time),
            _ => None,
        }
    }

    /// Energies of the monitored functional at every step.
    pub fn monitored_energies(&self) -> Vec<f64> {
        self.records
            .iter()
            .map(|r| match self.formulation {
                Some(Formulation::VForm) => r.e_total_wels,
                _ => r.e_total_welss,
            })
            .collect()
    }
}

/// Integrates from `t = 0` to `t_end`, keeping every `snapshot_every`-th state
/// plus the first and last. Divergence ends the run early and is recorded in
/// [`Trajectory::failure`]; configuration errors are returned directly.
pub fn run(config: &SolverConfig, grid: &RadialGrid) -> Result<Trajectory> {
    config.validate(grid)?;
    let mut traj = Trajectory {
        grid: *grid,
        formulation: Some(config.formulation),
        dt: config.dt,
        snapshots: Vec::new(),
        records: Vec::new(),
        failure: None,
        synthetic: false,
    };
    let mut state = match init_state(config, grid) {
        Ok(s) => s,
        Err(e @ ElsError::Divergence { .. }) => {
            traj.failure = Some(e);
            return Ok(traj);
        }
        Err(e) => return Err(e),
    };
    let form = config.formulation;
    let mut energy = monitored_energy(form, &state);
    let mut rate = dissipation_rate(form, &state);
    traj.records.push(StepRecord::of(&state, 0.0));
    traj.snapshots.push(state.clone());

    let n_steps = config.n_steps();
    for k in 1..=n_steps {
        match step(&state, config) {
            Ok(next) => {
                let e = monitored_energy(form, &next);
                let d = dissipation_rate(form, &next);
                traj.records.push(StepRecord::of(
                    &next,
                    e - energy + 0.5 * config.dt * (rate + d),
                ));
                energy = e;
                rate = d;
                state = next;
                if k % config.snapshot_every == 0 || k == n_steps {
                    traj.snapshots.push(state.clone());
                }
            }
            Err(e @ ElsError::Divergence { .. }) => {
                if traj.snapshots.last().map(|s| s.steps) != Some(state.steps) {
                    traj.snapshots.push(state.clone());
                }
                traj.failure = Some(e);
                break;
            }
            Err(e) => return Err(e),
        }
    }
    Ok(traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::initial::Profile;
    use approx::assert_abs_diff_eq;
    use proptest::prelude::*;

    fn max_diff(a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
    }

    #[test]
    fn h_from_v_examples() {
        let g = RadialGrid::new(2.0, 200).unwrap();
        assert_eq!(h_from_v(&RadialField::zeros(g)).unwrap().max_abs(), 0.0);

        let h = h_from_v(&RadialField::from_fn(g, |r| r)).unwrap();
        let exact: Vec<f64> = g.nodes().iter().map(|r| r * r / 3.0).collect();
        assert!(max_diff(&h.values, &exact) < 1e-12);

        let h = h_from_v(&RadialField::from_fn(g, |r| 2.0 * r / (1.0 + r * r))).unwrap();
        for j in 1..g.len() {
            let r = g.r(j);
            assert_abs_diff_eq!(
                h.values[j],
                (2.0 * r - 2.0 * r.atan()) / r,
                epsilon = g.dr() * g.dr()
            );
        }
        assert_eq!(h.values[0], 0.0);
    }

    #[test]
    fn v_from_h_examples() {
        let g = RadialGrid::new(2.0, 200).unwrap();
        assert_eq!(v_from_h(&RadialField::zeros(g)).unwrap().max_abs(), 0.0);
        // central differences are exact on quadratics
        let v = v_from_h(&RadialField::from_fn(g, |r| r * r / 3.0)).unwrap();
        let exact = g.nodes();
        assert!(max_diff(&v.values, &exact) < 1e-12);
    }

    #[test]
    fn transform_rejects_nonzero_axis() {
        let g = RadialGrid::new(1.0, 10).unwrap();
        let f = RadialField::from_fn(g, |r| 1.0 + r);
        assert!(matches!(h_from_v(&f), Err(ElsError::Contract(_))));
        assert!(matches!(v_from_h(&f), Err(ElsError::Contract(_))));
    }

    #[test]
    fn roundtrip_is_second_order() {
        let err = |n: usize| {
            let g = RadialGrid::new(4.0, n).unwrap();
            let v = RadialField::from_fn(g, |r| r * (-r * r).exp());
            let back = v_from_h(&h_from_v(&v).unwrap()).unwrap();
            max_diff(&back.values, &v.values)
        };
        let (e1, e2) = (err(100), err(200));
        assert!(e1 < 1e-2 && e1 / e2 > 3.6, "errors {e1} {e2}");
    }

    fn reference_grid() -> RadialGrid {
        RadialGrid::new(20.0, 2000).unwrap()
    }

    #[test]
    fn zero_state_is_a_fixed_point() {
        let g = RadialGrid::new(5.0, 100).unwrap();
        for form in [
            Formulation::VForm,
            Formulation::HForm,
            Formulation::SigmaModel,
        ] {
            let cfg = SolverConfig::new(form, 0.01, 1.0, InitialDataSpec::zero());
            let s0 = init_state(&cfg, &g).unwrap();
            let s1 = step(&s0, &cfg).unwrap();
            assert_eq!(
                s1.phi.max_abs() + s1.phi_t.max_abs() + s1.v.max_abs() + s1.h.max_abs(),
                0.0
            );
            assert_abs_diff_eq!(s1.time, 0.01, epsilon = 1e-15);
        }
    }

    #[test]
    fn cfl_violation_is_a_config_error() {
        let g = RadialGrid::new(5.0, 100).unwrap();
        let cfg = SolverConfig::new(Formulation::VForm, 0.05, 1.0, InitialDataSpec::zero());
        let s = FieldState::zero(g);
        assert!(matches!(step(&s, &cfg), Err(ElsError::Config(_))));
        assert!(matches!(run(&cfg, &g), Err(ElsError::Config(_))));
    }

    #[test]
    fn domain_rule_refuses_long_runs() {
        let g = RadialGrid::new(10.0, 1000).unwrap();
        let cfg = SolverConfig::new(
            Formulation::HForm,
            0.005,
            6.0,
            InitialDataSpec::gaussian_bump(0.5, 2.0, 0.5),
        );
        assert!(matches!(cfg.validate(&g), Err(ElsError::Config(_))));
        let ok = SolverConfig { t_end: 3.0, ..cfg };
        ok.validate(&g).unwrap();
    }

    #[test]
    fn harmonic_cap_initial_state() {
        let g = reference_grid();
        let cfg = SolverConfig::new(
            Formulation::VForm,
            0.0025,
            1.0,
            InitialDataSpec::harmonic_cap(1.0, Some(5.0)),
        );
        let s = init_state(&cfg, &g).unwrap();
        assert_abs_diff_eq!(
            s.phi.at(1.0).unwrap(),
            std::f64::consts::FRAC_PI_2,
            epsilon = 1e-12
        );
        assert_eq!(s.phi.values[0], 0.0);
        assert_eq!(s.h.values[0], 0.0);
    }

    #[test]
    fn bump_energy_is_finite_and_positive() {
        let g = reference_grid();
        let cfg = SolverConfig::new(
            Formulation::HForm,
            0.0025,
            1.0,
            InitialDataSpec::gaussian_bump(0.5, 2.0, 0.5),
        );
        let s = init_state(&cfg, &g).unwrap();
        let e = welss_energy(&s);
        // oracle: ½∫(φ_r² + sin²φ/r²) r dr by composite Simpson on a fine mesh
        let phi = |r: f64| {
            0.5 * ((-((r - 2.0) / 0.5f64).powi(2)).exp() - (-((r + 2.0) / 0.5f64).powi(2)).exp())
        };
        let dphi = |r: f64| {
            let a = (r - 2.0) / 0.5;
            let b = (r + 2.0) / 0.5;
            0.5 * (-2.0 * a / 0.5 * (-a * a).exp() + 2.0 * b / 0.5 * (-b * b).exp())
        };
        let m = 20_000;
        let hstep = 10.0 / m as f64;
        let density = |r: f64| {
            if r == 0.0 {
                0.0
            } else {
                0.5 * (dphi(r).powi(2) + (phi(r).sin() / r).powi(2)) * r
            }
        };
        let mut simpson = density(0.0) + density(10.0);
        for k in 1..m {
            simpson += density(k as f64 * hstep) * if k % 2 == 1 { 4.0 } else { 2.0 };
        }
        simpson *= hstep / 3.0;
        assert!(e.is_finite() && e > 0.0);
        assert_abs_diff_eq!(e, simpson, epsilon = 1e-4 * simpson);
    }

    #[test]
    fn static_harmonic_map_barely_moves_in_one_step() {
        let g = reference_grid();
        let cfg = SolverConfig::new(
            Formulation::VForm,
            0.0025,
            1.0,
            InitialDataSpec::harmonic_cap(1.0, None),
        );
        let s0 = init_state(&cfg, &g).unwrap();
        let s1 = step(&s0, &cfg).unwrap();
        let drift = max_diff(&s1.phi.values, &s0.phi.values);
        assert!(drift <= g.dr() * g.dr() * cfg.dt, "drift {drift}");
    }

    #[test]
    fn run_keeps_first_periodic_and_last_snapshots() {
        let g = RadialGrid::new(5.0, 100).unwrap();
        let cfg = SolverConfig::new(
            Formulation::HForm,
            0.02,
            0.5,
            InitialDataSpec::gaussian_bump(0.3, 1.0, 0.3),
        )
        .with_snapshot_every(10);
        let traj = run(&cfg, &g).unwrap();
        assert!(traj.is_complete());
        assert_eq!(traj.records.len(), 26);
        let times = traj.times();
        assert_eq!(times.len(), 4);
        assert_abs_diff_eq!(times[3], 0.5, epsilon = 1e-12);
    }

    #[test]
    fn divergence_is_reported_with_time() {
        let g = RadialGrid::new(5.0, 100).unwrap();
        let cfg = SolverConfig::new(Formulation::SigmaModel, 0.02, 1.0, InitialDataSpec::zero());
        let mut s = init_state(&cfg, &g).unwrap();
        s.phi.values[50] = f64::NAN;
        s.phi_prev.values[50] = 0.0;
        match step(&s, &cfg) {
            Err(ElsError::Divergence { time, .. }) => {
                assert_abs_diff_eq!(time, 0.02, epsilon = 1e-15)
            }
            other => panic!("expected divergence, got {other:?}"),
        }
    }

    #[test]
    fn table_initial_data_must_match_grid() {
        let g = RadialGrid::new(5.0, 100).unwrap();
        let spec = InitialDataSpec::phi0(Profile::Table {
            nodes: vec![0.0, 1.0],
            values: vec![0.0, 0.0],
        });
        let cfg = SolverConfig::new(Formulation::HForm, 0.02, 0.1, spec);
        assert!(matches!(run(&cfg, &g), Err(ElsError::Config(_))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(16))]
        #[test]
        fn boundary_values_are_held(amp in -1.0f64..1.0, center in 0.5f64..2.0, width in 0.2f64..0.8) {
            let g = RadialGrid::new(16.0, 160).unwrap();
            for form in [Formulation::VForm, Formulation::HForm, Formulation::SigmaModel] {
                let spec = InitialDataSpec::gaussian_bump(amp, center, width)
                    .with_v0(Profile::GaussianBump { amplitude: 0.2, center: 1.0, width: 0.4 });
                let cfg = SolverConfig::new(form, 0.02, 0.4, spec);
                let traj = run(&cfg, &g).unwrap();
                let first = &traj.snapshots[0];
                for s in &traj.snapshots {
                    prop_assert_eq!(s.phi.values[0], 0.0);
                    prop_assert_eq!(s.v.values[0], 0.0);
                    prop_assert_eq!(s.phi.values[160], first.phi.values[160]);
                    prop_assert_eq!(s.v.values[160], first.v.values[160]);
                }
            }
        }

        #[test]
        fn h_from_v_is_linear(a in -3.0f64..3.0, b in -3.0f64..3.0) {
            let g = RadialGrid::new(2.0, 40).unwrap();
            let f1 = RadialField::from_fn(g, |r| r * (-r).exp());
            let f2 = RadialField::from_fn(g, |r| (2.0 * r).sin());
            let comb = RadialField::from_fn(g, |r| a * r * (-r).exp() + b * (2.0 * r).sin());
            let h1 = h_from_v(&f1).unwrap();
            let h2 = h_from_v(&f2).unwrap();
            let hc = h_from_v(&comb).unwrap();
            for j in 0..g.len() {
                prop_assert!((hc.values[j] - a * h1.values[j] - b * h2.values[j]).abs() < 1e-12);
            }
        }
    }
}
