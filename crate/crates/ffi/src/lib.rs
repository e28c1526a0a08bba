//! C ABI over `els-core`.
//!
//! Every entry point returns an [`ElsStatus`]; on failure the message is kept
//! per thread and can be copied out with [`els_last_error_message`]. A
//! simulation is an opaque [`ElsSimulation`] created from the same JSON
//! document the `els` binary reads and released with [`els_simulation_free`].

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};

use els_core::blowup::fit_harmonic_profile;
use els_core::config::parse_config;
use els_core::diagnostics::total_directional_energy;
use els_core::solver::{wels_energy, welss_energy};
use els_core::{step, ElsError, FieldState, RadialField, RadialGrid, SolverConfig};

/// Result codes shared by every function in this library.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElsStatus {
    Ok = 0,
    NullPointer = 1,
    InvalidUtf8 = 2,
    Config = 3,
    Contract = 4,
    Range = 5,
    Diverged = 6,
    Comparison = 7,
    Resolution = 8,
    FitDegenerate = 9,
    Io = 10,
    BufferTooSmall = 11,
    Panic = 12,
}

impl From<&ElsError> for ElsStatus {
    fn from(e: &ElsError) -> Self {
        match e {
            ElsError::Config(_) => ElsStatus::Config,
            ElsError::Contract(_) => ElsStatus::Contract,
            ElsError::Range(_) => ElsStatus::Range,
            ElsError::Divergence { .. } => ElsStatus::Diverged,
            ElsError::Comparison(_) => ElsStatus::Comparison,
            ElsError::Resolution(_) => ElsStatus::Resolution,
            ElsError::FitDegenerate(_) => ElsStatus::FitDegenerate,
            ElsError::Io(_) => ElsStatus::Io,
        }
    }
}

/// Nodal field selector for [`els_simulation_copy_field`].
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElsField {
    R = 0,
    Phi = 1,
    PhiT = 2,
    V = 3,
    H = 4,
}

/// Energies of the current state.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ElsEnergy {
    /// Energy of the `h` formulation.
    pub welss: f64,
    /// Energy of the `v` formulation.
    pub wels: f64,
    /// `∫ (φ_r² + sin²φ / r²) r dr`.
    pub directional: f64,
}

/// Result of a least-squares fit against `2 arctan(r / C)`.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ElsProfileFit {
    pub c_fit: f64,
    pub residual_l2: f64,
    pub harmonic_residual: f64,
}

/// Opaque simulation handle.
pub struct ElsSimulation {
    config: SolverConfig,
    state: FieldState,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|s| *s.borrow_mut() = msg.into());
}

fn fail(status: ElsStatus, msg: impl Into<String>) -> ElsStatus {
    set_error(msg);
    status
}

fn guard(f: impl FnOnce() -> ElsStatus) -> ElsStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(status) => status,
        Err(_) => fail(ElsStatus::Panic, "panic inside els-ffi"),
    }
}

fn from_core(e: ElsError) -> ElsStatus {
    let status = ElsStatus::from(&e);
    fail(status, e.to_string())
}

/// Library version as a static NUL-terminated string.
#[no_mangle]
pub extern "C" fn els_version() -> *const c_char {
    concat!(env!("CARGO_PKG_VERSION"), "\0").as_ptr().cast()
}

/// Copies the last error message of this thread into `buf` (NUL-terminated,
/// truncated to `len - 1` bytes) and returns the full message length.
///
/// # Safety
/// `buf` must be null or point to `len` writable bytes.
#[no_mangle]
pub unsafe extern "C" fn els_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|s| {
        let msg = s.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf.cast::<u8>(), n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Builds a simulation from a JSON configuration document and stores the
/// handle in `*out`.
///
/// # Safety
/// `config_json` must be null or a NUL-terminated string; `out` must be null
/// or writable.
#[no_mangle]
pub unsafe extern "C" fn els_simulation_new(
    config_json: *const c_char,
    out: *mut *mut ElsSimulation,
) -> ElsStatus {
    guard(|| {
        if config_json.is_null() || out.is_null() {
            return fail(ElsStatus::NullPointer, "null argument");
        }
        *out = std::ptr::null_mut();
        let Ok(text) = CStr::from_ptr(config_json).to_str() else {
            return fail(ElsStatus::InvalidUtf8, "configuration is not UTF-8");
        };
        let built = parse_config(text).and_then(|cfg| {
            let grid = cfg.grid()?;
            let config = cfg.solver_config();
            let state = els_core::init_state(&config, &grid)?;
            Ok(ElsSimulation { config, state })
        });
        match built {
            Ok(sim) => {
                *out = Box::into_raw(Box::new(sim));
                ElsStatus::Ok
            }
            Err(e) => from_core(e),
        }
    })
}

/// Releases a handle from [`els_simulation_new`]. Null is ignored.
///
/// # Safety
/// `sim` must be null or a live handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn els_simulation_free(sim: *mut ElsSimulation) {
    if !sim.is_null() {
        drop(Box::from_raw(sim));
    }
}

/// Advances the simulation by `n_steps` time steps. On divergence the handle
/// keeps the last finite state.
///
/// # Safety
/// `sim` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn els_simulation_step(sim: *mut ElsSimulation, n_steps: u64) -> ElsStatus {
    guard(|| {
        let Some(sim) = sim.as_mut() else {
            return fail(ElsStatus::NullPointer, "null simulation");
        };
        for _ in 0..n_steps {
            match step(&sim.state, &sim.config) {
                Ok(next) => sim.state = next,
                Err(e) => return from_core(e),
            }
        }
        ElsStatus::Ok
    })
}

/// Writes the current time into `*t`.
///
/// # Safety
/// `sim` must be null or a live handle; `t` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn els_simulation_time(sim: *const ElsSimulation, t: *mut f64) -> ElsStatus {
    guard(|| match (sim.as_ref(), t.is_null()) {
        (Some(sim), false) => {
            *t = sim.state.time;
            ElsStatus::Ok
        }
        _ => fail(ElsStatus::NullPointer, "null argument"),
    })
}

/// Writes the number of grid nodes (`n_cells + 1`) into `*n`.
///
/// # Safety
/// `sim` must be null or a live handle; `n` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn els_simulation_node_count(
    sim: *const ElsSimulation,
    n: *mut usize,
) -> ElsStatus {
    guard(|| match (sim.as_ref(), n.is_null()) {
        (Some(sim), false) => {
            *n = sim.state.grid.len();
            ElsStatus::Ok
        }
        _ => fail(ElsStatus::NullPointer, "null argument"),
    })
}

/// Copies one nodal field into `buf`, which must hold at least the node count.
///
/// # Safety
/// `sim` must be null or a live handle; `buf` must be null or point to `len`
/// writable doubles.
#[no_mangle]
pub unsafe extern "C" fn els_simulation_copy_field(
    sim: *const ElsSimulation,
    field: ElsField,
    buf: *mut f64,
    len: usize,
) -> ElsStatus {
    guard(|| {
        let Some(sim) = sim.as_ref() else {
            return fail(ElsStatus::NullPointer, "null simulation");
        };
        if buf.is_null() {
            return fail(ElsStatus::NullPointer, "null buffer");
        }
        let s = &sim.state;
        let nodes;
        let values: &[f64] = match field {
            ElsField::R => {
                nodes = s.grid.nodes();
                &nodes
            }
            ElsField::Phi => &s.phi.values,
            ElsField::PhiT => &s.phi_t.values,
            ElsField::V => &s.v.values,
            ElsField::H => &s.h.values,
        };
        if len < values.len() {
            return fail(
                ElsStatus::BufferTooSmall,
                format!("buffer holds {len} values, {} needed", values.len()),
            );
        }
        std::ptr::copy_nonoverlapping(values.as_ptr(), buf, values.len());
        ElsStatus::Ok
    })
}

/// Writes the energies of the current state into `*energy`.
///
/// # Safety
/// `sim` must be null or a live handle; `energy` must be null or writable.
#[no_mangle]
pub unsafe extern "C" fn els_simulation_energy(
    sim: *const ElsSimulation,
    energy: *mut ElsEnergy,
) -> ElsStatus {
    guard(|| match (sim.as_ref(), energy.is_null()) {
        (Some(sim), false) => {
            *energy = ElsEnergy {
                welss: welss_energy(&sim.state),
                wels: wels_energy(&sim.state),
                directional: total_directional_energy(&sim.state),
            };
            ElsStatus::Ok
        }
        _ => fail(ElsStatus::NullPointer, "null argument"),
    })
}

/// Fits `2 arctan(r / C)` to `values` sampled on the uniform grid of
/// `n_cells` cells over `[0, r_max]`, restricted to `[window_lo, window_hi]`.
///
/// # Safety
/// `values` must be null or point to `len` readable doubles; `out` must be
/// null or writable.
#[no_mangle]
pub unsafe extern "C" fn els_fit_harmonic_profile(
    r_max: f64,
    n_cells: usize,
    values: *const f64,
    len: usize,
    window_lo: f64,
    window_hi: f64,
    out: *mut ElsProfileFit,
) -> ElsStatus {
    guard(|| {
        if values.is_null() || out.is_null() {
            return fail(ElsStatus::NullPointer, "null argument");
        }
        let data = std::slice::from_raw_parts(values, len).to_vec();
        let fit = RadialGrid::new(r_max, n_cells)
            .and_then(|g| RadialField::new(g, data))
            .and_then(|p| fit_harmonic_profile(&p, (window_lo, window_hi)));
        match fit {
            Ok(f) => {
                *out = ElsProfileFit {
                    c_fit: f.c_fit,
                    residual_l2: f.residual_l2,
                    harmonic_residual: f.harmonic_residual,
                };
                ElsStatus::Ok
            }
            Err(e) => from_core(e),
        }
    })
}
