//! Uniform radial mesh on `[0, r_max]`, the discrete operators of the radial
//! equations and quadrature in the measure `r dr`.
//!
//! All second-order operators use the conservative (flux) form with half-node
//! radii `r_{j+1/2}`; together with the trapezoid weights `w_j = r_j dr` they
//! satisfy a discrete summation-by-parts identity, which is what makes the
//! solvers' discrete energy laws tight.

use serde::{Deserialize, Serialize};

use crate::error::{ElsError, Result};

/// Smallest admissible number of cells.
pub const MIN_CELLS: usize = 8;

/// Tolerance on `f(0)` for fields required to vanish on the axis.
pub const AXIS_TOLERANCE: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RadialGrid {
    r_max: f64,
    n_cells: usize,
    dr: f64,
}

impl RadialGrid {
    pub fn new(r_max: f64, n_cells: usize) -> Result<Self> {
        if !(r_max.is_finite() && r_max > 0.0) {
            return Err(ElsError::config(format!(
                "r_max must be positive, got {r_max}"
            )));
        }
        if n_cells < MIN_CELLS {
            return Err(ElsError::config(format!(
                "n_cells must be at least {MIN_CELLS}, got {n_cells}"
            )));
        }
        Ok(RadialGrid {
            r_max,
            n_cells,
            dr: r_max / n_cells as f64,
        })
    }

    pub fn r_max(&self) -> f64 {
        self.r_max
    }

    pub fn n_cells(&self) -> usize {
        self.n_cells
    }

    /// Number of nodes, `n_cells + 1`.
    pub fn len(&self) -> usize {
        self.n_cells + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn dr(&self) -> f64 {
        self.dr
    }

    /// Node radius `r_j = j dr`; the last node is exactly `r_max`.
    #[inline]
    pub fn r(&self, j: usize) -> f64 {
        if j == self.n_cells {
            self.r_max
        } else {
            j as f64 * self.dr
        }
    }

    /// Half-node radius `r_{j+1/2}`.
    #[inline]
    pub fn r_half(&self, j: usize) -> f64 {
        (j as f64 + 0.5) * self.dr
    }

    pub fn nodes(&self) -> Vec<f64> {
        (0..self.len()).map(|j| self.r(j)).collect()
    }

    /// Trapezoid weights in the measure `r dr`.
    pub fn weights(&self) -> Vec<f64> {
        let mut w: Vec<f64> = (0..self.len()).map(|j| self.r(j) * self.dr).collect();
        w[0] *= 0.5;
        w[self.n_cells] *= 0.5;
        w
    }

    /// Same geometry, compared with a tolerance on `r_max`.
    pub fn matches(&self, other: &RadialGrid) -> bool {
        self.n_cells == other.n_cells && (self.r_max - other.r_max).abs() <= 1e-12 * self.r_max
    }

    /// Index of the cell containing `r` and the local coordinate in `[0, 1]`.
    fn locate(&self, r: f64) -> (usize, f64) {
        let x = (r / self.dr).clamp(0.0, self.n_cells as f64);
        let j = (x.floor() as usize).min(self.n_cells - 1);
        (j, x - j as f64)
    }

    /// Linear interpolation of nodal `values` at `r`.
    pub fn interpolate(&self, values: &[f64], r: f64) -> Result<f64> {
        if !(0.0..=self.r_max * (1.0 + 1e-12)).contains(&r) {
            return Err(ElsError::range(format!(
                "radius {r} outside grid [0, {}]",
                self.r_max
            )));
        }
        let (j, s) = self.locate(r);
        Ok(values[j] * (1.0 - s) + values[j + 1] * s)
    }
}

/// Nodal values of a radial function on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RadialField {
    pub grid: RadialGrid,
    pub values: Vec<f64>,
}

impl RadialField {
    pub fn new(grid: RadialGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.len() {
            return Err(ElsError::config(format!(
                "field has {} values, grid has {} nodes",
                values.len(),
                grid.len()
            )));
        }
        if let Some(j) = values.iter().position(|v| !v.is_finite()) {
            return Err(ElsError::Contract(format!("non-finite value at node {j}")));
        }
        Ok(RadialField { grid, values })
    }

    pub fn zeros(grid: RadialGrid) -> Self {
        RadialField {
            grid,
            values: vec![0.0; grid.len()],
        }
    }

    pub fn from_fn(grid: RadialGrid, f: impl Fn(f64) -> f64) -> Self {
        let values = (0..grid.len()).map(|j| f(grid.r(j))).collect();
        RadialField { grid, values }
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    pub fn at(&self, r: f64) -> Result<f64> {
        self.grid.interpolate(&self.values, r)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AxisPolicy {
    DirichletZero,
    Neumann,
}

/// `(1/r)(r f_r)_r` in conservative form.
///
/// The outer node returns 0 (its value is pinned); the axis node returns 0 under
/// `DirichletZero` and the 2-D axis limit `4(f_1 - f_0)/dr^2` under `Neumann`.
pub fn apply_bessel_laplacian(f: &RadialField, axis: AxisPolicy) -> RadialField {
    let mut out = vec![0.0; f.len()];
    bessel_laplacian_into(&f.grid, &f.values, axis, &mut out);
    RadialField {
        grid: f.grid,
        values: out,
    }
}

/// `(1/r)(r f_r)_r - f/r^2`, the operator acting on fields that vanish on the axis.
pub fn apply_vector_laplacian(f: &RadialField) -> Result<RadialField> {
    if f.values[0].abs() > AXIS_TOLERANCE {
        return Err(ElsError::Contract(format!(
            "vector Laplacian requires f(0) = 0, got {}",
            f.values[0]
        )));
    }
    let mut out = vec![0.0; f.len()];
    vector_laplacian_into(&f.grid, &f.values, &mut out);
    Ok(RadialField {
        grid: f.grid,
        values: out,
    })
}

/// `∫_{r_lo}^{r_hi} f r dr`, trapezoid rule on full cells.
///
/// Partial cells integrate the linear interpolant of the integrand `f r`, so the
/// rule is the exact integral of one piecewise-linear function and is additive
/// over adjacent intervals.
pub fn integrate_radial(f: &RadialField, r_lo: f64, r_hi: f64) -> Result<f64> {
    integrate_radial_slice(&f.grid, &f.values, r_lo, r_hi)
}

pub(crate) fn integrate_radial_slice(
    grid: &RadialGrid,
    f: &[f64],
    r_lo: f64,
    r_hi: f64,
) -> Result<f64> {
    let top = grid.r_max * (1.0 + 1e-12);
    if !(r_lo >= 0.0 && r_lo < r_hi && r_hi <= top) {
        return Err(ElsError::range(format!(
            "integration bounds [{r_lo}, {r_hi}] not inside [0, {}]",
            grid.r_max
        )));
    }
    let r_hi = r_hi.min(grid.r_max);
    let g = |j: usize| f[j] * grid.r(j);
    let (ja, sa) = grid.locate(r_lo);
    let (jb, sb) = grid.locate(r_hi);
    let interp = |j: usize, s: f64| g(j) * (1.0 - s) + g(j + 1) * s;
    let dr = grid.dr;
    if ja == jb {
        let (a, b) = (interp(ja, sa), interp(jb, sb));
        return Ok(0.5 * (a + b) * (sb - sa) * dr);
    }
    // [r_lo, r_{ja+1}]
    let mut total = 0.5 * (interp(ja, sa) + g(ja + 1)) * (1.0 - sa) * dr;
    for j in ja + 1..jb {
        total += 0.5 * (g(j) + g(j + 1)) * dr;
    }
    // [r_jb, r_hi]
    total += 0.5 * (g(jb) + interp(jb, sb)) * sb * dr;
    Ok(total)
}

/// Full-domain trapezoid sum `Σ w_j f_j`.
pub(crate) fn weighted_sum(grid: &RadialGrid, f: &[f64]) -> f64 {
    let dr = grid.dr;
    let n = grid.n_cells;
    let mut s = 0.5 * f[n] * grid.r(n) * dr;
    for (j, v) in f.iter().enumerate().take(n).skip(1) {
        s += v * grid.r(j) * dr;
    }
    s
}

pub(crate) fn bessel_laplacian_into(
    grid: &RadialGrid,
    f: &[f64],
    axis: AxisPolicy,
    out: &mut [f64],
) {
    let n = grid.n_cells;
    let dr2 = grid.dr * grid.dr;
    out[0] = match axis {
        AxisPolicy::DirichletZero => 0.0,
        AxisPolicy::Neumann => 4.0 * (f[1] - f[0]) / dr2,
    };
    for j in 1..n {
        let flux_out = grid.r_half(j) * (f[j + 1] - f[j]);
        let flux_in = grid.r_half(j - 1) * (f[j] - f[j - 1]);
        out[j] = (flux_out - flux_in) / (grid.r(j) * dr2);
    }
    out[n] = 0.0;
}

pub(crate) fn vector_laplacian_into(grid: &RadialGrid, f: &[f64], out: &mut [f64]) {
    bessel_laplacian_into(grid, f, AxisPolicy::DirichletZero, out);
    for j in 1..grid.n_cells {
        let r = grid.r(j);
        out[j] -= f[j] / (r * r);
    }
}

/// `(1/r)(r a f_r)_r` with `a` given on half nodes (`a[j]` at `r_{j+1/2}`);
/// zero at both end nodes.
pub(crate) fn variable_bessel_into(grid: &RadialGrid, a: &[f64], f: &[f64], out: &mut [f64]) {
    let n = grid.n_cells;
    let dr2 = grid.dr * grid.dr;
    out[0] = 0.0;
    for j in 1..n {
        let flux_out = grid.r_half(j) * a[j] * (f[j + 1] - f[j]);
        let flux_in = grid.r_half(j - 1) * a[j - 1] * (f[j] - f[j - 1]);
        out[j] = (flux_out - flux_in) / (grid.r(j) * dr2);
    }
    out[n] = 0.0;
}

/// `(1/r)(r g)_r` with `g` averaged to half nodes; zero at both end nodes.
/// No flux crosses the axis half node `r = dr/2`: the axis node carries no
/// quadrature mass, so the flow equation there is the condition `r(v_r + g) = 0`.
///
/// Discrete adjoint of [`energy_gradient_into`]:
/// `Σ w_j D(g)_j v_j = -Σ w_j g_j G(v)_j` whenever `v` vanishes at `r_max`.
pub(crate) fn flux_divergence_into(grid: &RadialGrid, g: &[f64], out: &mut [f64]) {
    let n = grid.n_cells;
    out[0] = 0.0;
    for j in 1..n {
        let up = grid.r_half(j) * 0.5 * (g[j] + g[j + 1]);
        let down = if j == 1 {
            0.0
        } else {
            grid.r_half(j - 1) * 0.5 * (g[j] + g[j - 1])
        };
        out[j] = (up - down) / (grid.r(j) * grid.dr);
    }
    out[n] = 0.0;
}

/// Radial derivative weighted so that it is the adjoint of [`flux_divergence_into`]:
/// `G(v)_j = [r_{j+1/2}(v_{j+1}-v_j) + r_{j-1/2}(v_j-v_{j-1})] / (2 r_j dr)`, with
/// the axis half cell omitted at `j = 1` and `G(v)_0 = 0`, so the pinned axis
/// value of `v` is never read. Second order away from the axis; one-sided at
/// `r_max`.
pub(crate) fn energy_gradient_into(grid: &RadialGrid, v: &[f64], out: &mut [f64]) {
    let n = grid.n_cells;
    let dr = grid.dr;
    out[0] = 0.0;
    for j in 1..n {
        let a = grid.r_half(j) * (v[j + 1] - v[j]);
        let b = if j == 1 {
            0.0
        } else {
            grid.r_half(j - 1) * (v[j] - v[j - 1])
        };
        out[j] = (a + b) / (2.0 * grid.r(j) * dr);
    }
    out[n] = (v[n] - v[n - 1]) / dr;
}

/// Central differences in the interior, second-order one-sided at the ends.
pub fn central_derivative(f: &RadialField) -> RadialField {
    let mut out = vec![0.0; f.len()];
    central_derivative_into(&f.grid, &f.values, &mut out);
    RadialField {
        grid: f.grid,
        values: out,
    }
}

pub(crate) fn central_derivative_into(grid: &RadialGrid, f: &[f64], out: &mut [f64]) {
    let n = grid.n_cells;
    let dr = grid.dr;
    out[0] = (-3.0 * f[0] + 4.0 * f[1] - f[2]) / (2.0 * dr);
    for j in 1..n {
        out[j] = (f[j + 1] - f[j - 1]) / (2.0 * dr);
    }
    out[n] = (3.0 * f[n] - 4.0 * f[n - 1] + f[n - 2]) / (2.0 * dr);
}

/// `Σ_{j} r_{j+1/2} dr ((f_{j+1} - f_j)/dr)^2`, the half-node quadrature of
/// `∫ f_r^2 r dr` that pairs with the conservative Laplacian.
pub(crate) fn half_node_gradient_energy(grid: &RadialGrid, f: &[f64]) -> f64 {
    gradient_energy_from(grid, f, 0)
}

/// [`half_node_gradient_energy`] without the axis half cell, the form that
/// pairs with [`AxisCell::ZeroFlux`].
pub(crate) fn flow_gradient_energy(grid: &RadialGrid, f: &[f64]) -> f64 {
    gradient_energy_from(grid, f, 1)
}

fn gradient_energy_from(grid: &RadialGrid, f: &[f64], first: usize) -> f64 {
    let dr = grid.dr;
    (first..grid.n_cells)
        .map(|j| {
            let d = (f[j + 1] - f[j]) / dr;
            grid.r_half(j) * dr * d * d
        })
        .sum()
}

/// Axis treatment for [`implicit_diffusion_solve`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub(crate) enum AxisCell {
    /// `u_0` is a Dirichlet value read by the `j = 1` stencil.
    Dirichlet(f64),
    /// No flux crosses `r = dr/2`; `u_0` is set to the value but never read.
    ZeroFlux(f64),
}

/// Solves `u - dt·A u = rhs` on the interior nodes with the given axis
/// treatment and Dirichlet value `u_N = right`, where
/// `A u = (1/r)(r a u_r)_r - vector·u/r^2` and `a` lives on half nodes
/// (`None` means `a ≡ 1`).
pub(crate) fn implicit_diffusion_solve(
    grid: &RadialGrid,
    rhs: &[f64],
    dt: f64,
    half_coeff: Option<&[f64]>,
    vector: bool,
    axis: AxisCell,
    right: f64,
) -> Vec<f64> {
    let n = grid.n_cells;
    let m = n - 1;
    let dr2 = grid.dr * grid.dr;
    let coeff = |k: usize| half_coeff.map_or(1.0, |a| a[k]);
    let mut lower = vec![0.0; m];
    let mut diag = vec![0.0; m];
    let mut upper = vec![0.0; m];
    let mut b = vec![0.0; m];
    for i in 0..m {
        let j = i + 1;
        let r = grid.r(j);
        let cp = dt * grid.r_half(j) * coeff(j) / (r * dr2);
        let cm = match axis {
            AxisCell::ZeroFlux(_) if j == 1 => 0.0,
            _ => dt * grid.r_half(j - 1) * coeff(j - 1) / (r * dr2),
        };
        let cv = if vector { dt / (r * r) } else { 0.0 };
        lower[i] = -cm;
        upper[i] = -cp;
        diag[i] = 1.0 + cp + cm + cv;
        b[i] = rhs[j];
    }
    let left = match axis {
        AxisCell::Dirichlet(x) | AxisCell::ZeroFlux(x) => x,
    };
    b[0] -= lower[0] * left;
    b[m - 1] -= upper[m - 1] * right;
    let interior = crate::tridiag::solve(&lower, &diag, &upper, &b);
    let mut u = Vec::with_capacity(n + 1);
    u.push(left);
    u.extend_from_slice(&interior);
    u.push(right);
    u
}
