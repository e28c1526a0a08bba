//! Ginzburg–Landau relaxation of the director constraint, reduced to radial
//! form with `d = (u cos θ, u sin θ, w)`.
//!
//! Reduced system, with `ρ = u² + w² - 1`:
//!
//! ```text
//! v_t            = ½ L v + (1/r)(r F)_r,   F = (w u_t - u w_t) + ½(u² + w²) v_r
//! u_tt + 2u_t    = L_vec u - ρ u/ε² - v_r w
//! w_tt + 2w_t    = L w     - ρ w/ε² + v_r u      (Neumann axis)
//! ```
//!
//! The `½|d|² v_r` part of `F` is combined with `½ L v` into one
//! variable-coefficient diffusion `(1/r)(r a v_r)_r`, `a = ½(1 + |d|²)`, and
//! solved implicitly.

use serde::{Deserialize, Serialize};

use crate::error::{ElsError, Result};
use crate::grid::{
    bessel_laplacian_into, energy_gradient_into, flux_divergence_into, half_node_gradient_energy,
    implicit_diffusion_solve, variable_bessel_into, vector_laplacian_into, weighted_sum, AxisCell,
    AxisPolicy, RadialField, RadialGrid,
};
use crate::initial::InitialDataSpec;
use crate::solver::{check_cfl, check_domain, FieldState, Trajectory, DIVERGENCE_LIMIT};

/// Leapfrog damping coefficient of both director components.
const DAMPING: f64 = 2.0;

/// Nodes with `|d|` below this have no defined angle.
const ANGLE_FLOOR: f64 = 1e-8;

/// Share of excluded nodes above which a consistency result carries a warning.
const EXCLUDED_WARN_FRACTION: f64 = 0.01;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GLConfig {
    pub epsilon: f64,
    pub dt: f64,
    pub t_end: f64,
    pub cfl_sigma: f64,
    pub initial_data: InitialDataSpec,
    pub snapshot_every: usize,
}

impl GLConfig {
    pub fn new(epsilon: f64, dt: f64, t_end: f64, initial_data: InitialDataSpec) -> Self {
        GLConfig {
            epsilon,
            dt,
            t_end,
            cfl_sigma: 0.5,
            initial_data,
            snapshot_every: 10,
        }
    }

    pub fn with_snapshot_every(mut self, k: usize) -> Self {
        self.snapshot_every = k;
        self
    }

    pub fn n_steps(&self) -> usize {
        (self.t_end / self.dt - 1e-9).ceil().max(0.0) as usize
    }

    pub fn validate(&self, grid: &RadialGrid) -> Result<()> {
        check_epsilon(self.epsilon)?;
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
        check_stiffness(self.dt, self.cfl_sigma, self.epsilon, grid)?;
        self.initial_data.validate()?;
        check_domain(self.t_end, self.initial_data.support_radius(), grid)
    }
}

fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(epsilon.is_finite() && epsilon > 0.0) {
        return Err(ElsError::config(format!(
            "epsilon must be positive, got {epsilon}"
        )));
    }
    Ok(())
}

fn check_stiffness(dt: f64, cfl: f64, epsilon: f64, grid: &RadialGrid) -> Result<()> {
    check_cfl(dt, cfl, grid)?;
    if dt > 0.5 * epsilon * (1.0 + 1e-12) {
        return Err(ElsError::config(format!(
            "dt = {dt} violates the penalty stiffness bound 0.5*epsilon = {}",
            0.5 * epsilon
        )));
    }
    Ok(())
}

/// Snapshot of the reduced Ginzburg–Landau system.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GLState {
    pub grid: RadialGrid,
    pub u: RadialField,
    pub w: RadialField,
    pub u_t: RadialField,
    pub w_t: RadialField,
    pub v: RadialField,
    pub epsilon: f64,
    pub time: f64,
    pub u_prev: RadialField,
    pub w_prev: RadialField,
    pub steps: u64,
    /// CFL factor used by [`gl_step`]'s stiffness check.
    pub cfl_sigma: f64,
}

impl GLState {
    fn check_finite(&self) -> Result<()> {
        for (name, f) in [
            ("u", &self.u),
            ("w", &self.w),
            ("u_t", &self.u_t),
            ("w_t", &self.w_t),
            ("v", &self.v),
        ] {
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

    /// `|d|² = u² + w²` at every node.
    pub fn modulus_squared(&self) -> Vec<f64> {
        self.u
            .values
            .iter()
            .zip(&self.w.values)
            .map(|(u, w)| u * u + w * w)
            .collect()
    }
}

struct Forces {
    u: Vec<f64>,
    w: Vec<f64>,
}

/// Director right sides without damping; `grad_v` is the discrete `v_r`.
fn director_forces(
    grid: &RadialGrid,
    u: &[f64],
    w: &[f64],
    grad_v: &[f64],
    epsilon: f64,
) -> Forces {
    let n = grid.n_cells();
    let mut fu = vec![0.0; grid.len()];
    let mut fw = vec![0.0; grid.len()];
    vector_laplacian_into(grid, u, &mut fu);
    bessel_laplacian_into(grid, w, AxisPolicy::Neumann, &mut fw);
    let inv_eps2 = 1.0 / (epsilon * epsilon);
    for j in 0..n {
        let rho = u[j] * u[j] + w[j] * w[j] - 1.0;
        fu[j] -= rho * u[j] * inv_eps2 + grad_v[j] * w[j];
        fw[j] += -rho * w[j] * inv_eps2 + grad_v[j] * u[j];
    }
    fu[0] = 0.0;
    fu[n] = 0.0;
    fw[n] = 0.0;
    Forces { u: fu, w: fw }
}

/// Half-node diffusion coefficient `½(1 + |d|²)` of the reduced flow equation.
fn flow_coefficient(u: &[f64], w: &[f64]) -> Vec<f64> {
    let m2 = |j: usize| u[j] * u[j] + w[j] * w[j];
    (0..u.len() - 1)
        .map(|j| 0.5 + 0.25 * (m2(j) + m2(j + 1)))
        .collect()
}

fn angular_flux(u: &[f64], w: &[f64], u_t: &[f64], w_t: &[f64]) -> Vec<f64> {
    (0..u.len())
        .map(|j| w[j] * u_t[j] - u[j] * w_t[j])
        .collect()
}

/// Constrained initial state `u = sin φ₀`, `w = cos φ₀`, `u_t = φ₁ cos φ₀`,
/// `w_t = -φ₁ sin φ₀`, `v = v₀`, with a second-order leapfrog history.
pub fn gl_init(config: &GLConfig, grid: &RadialGrid) -> Result<GLState> {
    check_epsilon(config.epsilon)?;
    let (phi0, phi1, v) = config.initial_data.sample(grid)?;
    let n = grid.n_cells();
    let dt = config.dt;
    let u: Vec<f64> = phi0.values.iter().map(|p| p.sin()).collect();
    let w: Vec<f64> = phi0.values.iter().map(|p| p.cos()).collect();
    let mut u_t: Vec<f64> = (0..grid.len())
        .map(|j| phi1.values[j] * phi0.values[j].cos())
        .collect();
    let mut w_t: Vec<f64> = (0..grid.len())
        .map(|j| -phi1.values[j] * phi0.values[j].sin())
        .collect();
    u_t[0] = 0.0;
    u_t[n] = 0.0;
    w_t[n] = 0.0;

    let mut grad_v = vec![0.0; grid.len()];
    energy_gradient_into(grid, &v.values, &mut grad_v);
    let f = director_forces(grid, &u, &w, &grad_v, config.epsilon);
    let mut u_prev = u.clone();
    let mut w_prev = w.clone();
    for j in 0..n {
        if j > 0 {
            u_prev[j] = u[j] - dt * u_t[j] + 0.5 * dt * dt * (f.u[j] - DAMPING * u_t[j]);
        }
        w_prev[j] = w[j] - dt * w_t[j] + 0.5 * dt * dt * (f.w[j] - DAMPING * w_t[j]);
    }
    let field = |values: Vec<f64>| RadialField {
        grid: *grid,
        values,
    };
    let state = GLState {
        grid: *grid,
        u: field(u),
        w: field(w),
        u_t: field(u_t),
        w_t: field(w_t),
        v,
        epsilon: config.epsilon,
        time: 0.0,
        u_prev: field(u_prev),
        w_prev: field(w_prev),
        steps: 0,
        cfl_sigma: config.cfl_sigma,
    };
    state.check_finite()?;
    Ok(state)
}

/// One step: implicit flow solve, then damped leapfrog for `(u, w)` using the
/// new `v_r`.
pub fn gl_step(state: &GLState, dt: f64) -> Result<GLState> {
    let grid = state.grid;
    check_stiffness(dt, state.cfl_sigma, state.epsilon, &grid)?;
    let n = grid.n_cells();
    let (u, w) = (&state.u.values, &state.w.values);

    let a = flow_coefficient(u, w);
    let flux = angular_flux(u, w, &state.u_t.values, &state.w_t.values);
    let mut rhs = vec![0.0; grid.len()];
    flux_divergence_into(&grid, &flux, &mut rhs);
    for (x, v) in rhs.iter_mut().zip(&state.v.values) {
        *x = v + dt * *x;
    }
    let v_new = implicit_diffusion_solve(
        &grid,
        &rhs,
        dt,
        Some(&a),
        false,
        AxisCell::ZeroFlux(state.v.values[0]),
        state.v.values[n],
    );
    let mut grad_v = vec![0.0; grid.len()];
    energy_gradient_into(&grid, &v_new, &mut grad_v);

    let f = director_forces(&grid, u, w, &grad_v, state.epsilon);
    let damp_minus = 1.0 - 0.5 * DAMPING * dt;
    let damp_plus = 1.0 + 0.5 * DAMPING * dt;
    let mut u_new = u.clone();
    let mut w_new = w.clone();
    let mut pu = vec![0.0; grid.len()];
    let mut pw = vec![0.0; grid.len()];
    for j in 0..n {
        if j > 0 {
            let p_old = (u[j] - state.u_prev.values[j]) / dt;
            pu[j] = (p_old * damp_minus + dt * f.u[j]) / damp_plus;
            u_new[j] = u[j] + dt * pu[j];
        }
        let p_old = (w[j] - state.w_prev.values[j]) / dt;
        pw[j] = (p_old * damp_minus + dt * f.w[j]) / damp_plus;
        w_new[j] = w[j] + dt * pw[j];
    }
    let f_new = director_forces(&grid, &u_new, &w_new, &grad_v, state.epsilon);
    let mut u_t = vec![0.0; grid.len()];
    let mut w_t = vec![0.0; grid.len()];
    for j in 0..n {
        if j > 0 {
            u_t[j] = (pu[j] + 0.5 * dt * f_new.u[j]) / damp_plus;
        }
        w_t[j] = (pw[j] + 0.5 * dt * f_new.w[j]) / damp_plus;
    }

    let field = |values: Vec<f64>| RadialField { grid, values };
    let next = GLState {
        grid,
        u_prev: state.u.clone(),
        w_prev: state.w.clone(),
        u: field(u_new),
        w: field(w_new),
        u_t: field(u_t),
        w_t: field(w_t),
        v: field(v_new),
        epsilon: state.epsilon,
        time: state.time + dt,
        steps: state.steps + 1,
        cfl_sigma: state.cfl_sigma,
    };
    next.check_finite()?;
    Ok(next)
}

/// Right side of the reduced flow equation on a state,
/// `(1/r)(r a v_r)_r + (1/r)(r (w u_t - u w_t))_r`.
pub fn gl_flow_rhs(state: &GLState) -> RadialField {
    let grid = state.grid;
    let (u, w) = (&state.u.values, &state.w.values);
    let a = flow_coefficient(u, w);
    let mut diff = vec![0.0; grid.len()];
    variable_bessel_into(&grid, &a, &state.v.values, &mut diff);
    let mut src = vec![0.0; grid.len()];
    flux_divergence_into(
        &grid,
        &angular_flux(u, w, &state.u_t.values, &state.w_t.values),
        &mut src,
    );
    RadialField {
        grid,
        values: diff.iter().zip(&src).map(|(x, y)| x + y).collect(),
    }
}

/// Right side of the director solver's flow equation, `L v + (1/r)(r φ_t)_r`.
pub fn director_flow_rhs(state: &FieldState) -> RadialField {
    let grid = state.grid;
    let mut diff = vec![0.0; grid.len()];
    bessel_laplacian_into(&grid, &state.v.values, AxisPolicy::DirichletZero, &mut diff);
    let mut src = vec![0.0; grid.len()];
    flux_divergence_into(&grid, &state.phi_t.values, &mut src);
    RadialField {
        grid,
        values: diff.iter().zip(&src).map(|(x, y)| x + y).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GLEnergy {
    pub kinetic: f64,
    pub elastic: f64,
    pub penalty: f64,
    pub fluid: f64,
    pub total: f64,
}

/// Kinetic `½∫(u_t² + w_t²)`, elastic `½∫(u_r² + w_r² + u²/r²)`, penalty
/// `∫(u² + w² - 1)²/(4ε²)` and fluid `½∫v²`, all in `r dr`.
pub fn gl_energy(state: &GLState) -> GLEnergy {
    let g = &state.grid;
    let sq = |f: &[f64]| f.iter().map(|x| x * x).collect::<Vec<f64>>();
    let (u, w) = (&state.u.values, &state.w.values);
    let kinetic =
        0.5 * (weighted_sum(g, &sq(&state.u_t.values)) + weighted_sum(g, &sq(&state.w_t.values)));
    let u_over_r: Vec<f64> = (0..g.len())
        .map(|j| if j == 0 { 0.0 } else { u[j] / g.r(j) })
        .collect();
    let elastic = 0.5
        * (half_node_gradient_energy(g, u)
            + half_node_gradient_energy(g, w)
            + weighted_sum(g, &sq(&u_over_r)));
    let eps2 = state.epsilon * state.epsilon;
    let rho2: Vec<f64> = state
        .modulus_squared()
        .iter()
        .map(|m| (m - 1.0).powi(2) / (4.0 * eps2))
        .collect();
    let penalty = weighted_sum(g, &rho2);
    let fluid = 0.5 * weighted_sum(g, &sq(&state.v.values));
    GLEnergy {
        kinetic,
        elastic,
        penalty,
        fluid,
        total: kinetic + elastic + penalty + fluid,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GLTrajectory {
    pub grid: RadialGrid,
    pub epsilon: f64,
    pub dt: f64,
    pub snapshots: Vec<GLState>,
    /// `(t, energy)` after every step, starting at `t = 0`.
    pub energies: Vec<(f64, GLEnergy)>,
    pub failure: Option<ElsError>,
}

impl GLTrajectory {
    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time).collect()
    }
}

pub fn gl_run(config: &GLConfig, grid: &RadialGrid) -> Result<GLTrajectory> {
    config.validate(grid)?;
    let mut traj = GLTrajectory {
        grid: *grid,
        epsilon: config.epsilon,
        dt: config.dt,
        snapshots: Vec::new(),
        energies: Vec::new(),
        failure: None,
    };
    let mut state = gl_init(config, grid)?;
    traj.energies.push((0.0, gl_energy(&state)));
    traj.snapshots.push(state.clone());
    let n_steps = config.n_steps();
    for k in 1..=n_steps {
        match gl_step(&state, config.dt) {
            Ok(next) => {
                state = next;
                traj.energies.push((state.time, gl_energy(&state)));
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

/// Angle `atan2(u, w)` unwrapped outward from the axis; `None` where `|d|` vanishes.
pub fn extract_angle(state: &GLState) -> Vec<Option<f64>> {
    let mut out = Vec::with_capacity(state.grid.len());
    let mut last: Option<f64> = None;
    for (u, w) in state.u.values.iter().zip(&state.w.values) {
        if u.hypot(*w) < ANGLE_FLOOR {
            out.push(None);
            continue;
        }
        let mut theta = u.atan2(*w);
        if let Some(prev) = last {
            let turns = ((prev - theta) / std::f64::consts::TAU).round();
            theta += turns * std::f64::consts::TAU;
        }
        last = Some(theta);
        out.push(Some(theta));
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Consistency {
    /// Max over shared snapshot times of the `L²(r dr)` angle distance.
    pub distance: f64,
    /// Largest number of nodes excluded at one time for lack of an angle.
    pub excluded: usize,
    pub nodes: usize,
    pub shared_times: usize,
}

impl Consistency {
    pub fn warning(&self) -> bool {
        self.excluded as f64 > EXCLUDED_WARN_FRACTION * self.nodes as f64
    }
}

/// Compares the angle of a GL run with `φ` of a director run at the snapshot
/// times the two share.
pub fn consistency_vs_director(gl: &GLTrajectory, dir: &Trajectory) -> Result<Consistency> {
    if !gl.grid.matches(&dir.grid) {
        return Err(ElsError::Comparison(
            "trajectories live on different grids".into(),
        ));
    }
    let weights = gl.grid.weights();
    let mut out = Consistency {
        distance: 0.0,
        excluded: 0,
        nodes: gl.grid.len(),
        shared_times: 0,
    };
    for gs in &gl.snapshots {
        let tol = 1e-9 * gs.time.abs().max(1.0);
        let Some(ds) = dir
            .snapshots
            .iter()
            .find(|d| (d.time - gs.time).abs() <= tol)
        else {
            continue;
        };
        let angle = extract_angle(gs);
        let mut sum = 0.0;
        let mut excluded = 0;
        for (j, a) in angle.iter().enumerate() {
            match a {
                Some(a) => sum += weights[j] * (a - ds.phi.values[j]).powi(2),
                None => excluded += 1,
            }
        }
        out.distance = out.distance.max(sum.sqrt());
        out.excluded = out.excluded.max(excluded);
        out.shared_times += 1;
    }
    if out.shared_times == 0 {
        return Err(ElsError::Comparison(
            "trajectories share no snapshot times".into(),
        ));
    }
    Ok(out)
}
