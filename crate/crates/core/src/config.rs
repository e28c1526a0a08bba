//! JSON run configuration: grammar, defaults and validation.

use std::collections::BTreeSet;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::blowup::{AnalysisParams, Schedule, DEFAULT_CANDIDATES};
use crate::error::{ElsError, Result};
use crate::gl::GLConfig;
use crate::grid::RadialGrid;
use crate::initial::{InitialDataSpec, Profile};
use crate::solver::{Formulation, SolverConfig};

pub const DEFAULT_CFL: f64 = 0.5;
pub const DEFAULT_EPSILON0: f64 = 1.0;
pub const DEFAULT_EPSILON1: f64 = 0.25;
pub const DEFAULT_SNAPSHOT_EVERY: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridSection {
    pub r_max: f64,
    pub n_cells: usize,
}

impl GridSection {
    pub fn build(&self) -> Result<RadialGrid> {
        RadialGrid::new(self.r_max, self.n_cells)
    }
}

fn default_cfl() -> f64 {
    DEFAULT_CFL
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverSection {
    pub formulation: Formulation,
    pub dt: f64,
    pub t_end: f64,
    #[serde(default = "default_cfl")]
    pub cfl_sigma: f64,
    pub initial_data: InitialDataSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GlSection {
    pub epsilon: f64,
}

fn default_epsilon0() -> f64 {
    DEFAULT_EPSILON0
}

fn default_epsilon1() -> f64 {
    DEFAULT_EPSILON1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsSection {
    /// Apex time of the cone reports; no cone reports when absent.
    #[serde(rename = "cone_T", default, skip_serializing_if = "Option::is_none")]
    pub cone_t: Option<f64>,
    #[serde(default)]
    pub lambdas: Vec<f64>,
    #[serde(default)]
    pub taus: Vec<f64>,
    #[serde(default = "default_epsilon0")]
    pub epsilon0: f64,
    #[serde(default = "default_epsilon1")]
    pub epsilon1: f64,
}

impl Default for DiagnosticsSection {
    fn default() -> Self {
        DiagnosticsSection {
            cone_t: None,
            lambdas: Vec::new(),
            taus: Vec::new(),
            epsilon0: DEFAULT_EPSILON0,
            epsilon1: DEFAULT_EPSILON1,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Format {
    Csv,
    Json,
}

fn default_directory() -> PathBuf {
    PathBuf::from("out")
}

fn default_formats() -> Vec<Format> {
    vec![Format::Csv, Format::Json]
}

fn default_snapshot_every() -> usize {
    DEFAULT_SNAPSHOT_EVERY
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OutputSection {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
    #[serde(default = "default_snapshot_every")]
    pub snapshot_every: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            directory: default_directory(),
            formats: default_formats(),
            snapshot_every: DEFAULT_SNAPSHOT_EVERY,
        }
    }
}

/// Parameter lists; the sweep runs their Cartesian product.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SweepSection {
    #[serde(default)]
    pub epsilon: Vec<f64>,
    #[serde(default)]
    pub dr: Vec<f64>,
    #[serde(default)]
    pub dt: Vec<f64>,
    /// Replaces the `gaussian_bump` amplitude of `φ₀`.
    #[serde(default)]
    pub amplitude: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ScheduleSpec {
    Constant {
        lambda: f64,
    },
    /// `λ(t) = t0 - t`.
    Linear {
        t0: f64,
    },
}

impl ScheduleSpec {
    pub fn schedule(&self) -> Schedule {
        match *self {
            ScheduleSpec::Constant { lambda } => Schedule::Constant(lambda),
            ScheduleSpec::Linear { t0 } => Schedule::Linear { t0 },
        }
    }
}

/// `start + k·step` for `k = 0..count`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeRange {
    pub start: f64,
    pub step: f64,
    pub count: usize,
}

impl TimeRange {
    pub fn times(&self) -> Vec<f64> {
        (0..self.count)
            .map(|k| self.start + k as f64 * self.step)
            .collect()
    }
}

/// Where `analyze` gets its trajectory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum AnalyzeSource {
    /// A fresh solver run from this configuration.
    Run,
    /// A shrinking soliton on the configured grid, optionally with seeded
    /// uniform noise of the given amplitude added to `φ`.
    Synthetic {
        schedule: ScheduleSpec,
        times: TimeRange,
        #[serde(default)]
        noise: f64,
    },
    /// A directory written by `els run`.
    Snapshots { path: PathBuf },
}

fn default_source() -> AnalyzeSource {
    AnalyzeSource::Run
}

fn default_comparison() -> GridSection {
    GridSection {
        r_max: 50.0,
        n_cells: 500,
    }
}

fn default_candidates() -> usize {
    DEFAULT_CANDIDATES
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalyzeSection {
    #[serde(default = "default_source")]
    pub source: AnalyzeSource,
    #[serde(default = "default_comparison")]
    pub comparison_grid: GridSection,
    /// Fit window on the comparison grid; the whole grid when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub window: Option<(f64, f64)>,
    #[serde(default = "default_candidates")]
    pub candidates: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub grid: GridSection,
    pub solver: SolverSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gl: Option<GlSection>,
    #[serde(default)]
    pub diagnostics: DiagnosticsSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep: Option<SweepSection>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub analyze: Option<AnalyzeSection>,
}

/// A bare profile under `initial_data` is shorthand for `{"phi0": profile}`.
fn normalize(doc: &mut Value) {
    if let Some(init) = doc.pointer_mut("/solver/initial_data") {
        if init.get("kind").is_some() {
            *init = serde_json::json!({ "phi0": init.take() });
        }
    }
}

/// Keys of `zero` profiles, which carry no parameters.
fn zero_profile_extras(doc: &Value) -> Vec<String> {
    let mut out = Vec::new();
    for slot in ["phi0", "phi1", "v0"] {
        let path = format!("/solver/initial_data/{slot}");
        if let Some(Value::Object(map)) = doc.pointer(&path) {
            if map.get("kind").and_then(Value::as_str) == Some("zero") {
                out.extend(
                    map.keys()
                        .filter(|k| *k != "kind")
                        .map(|k| format!("solver.initial_data.{slot}.{k}")),
                );
            }
        }
    }
    out
}

/// Parses and validates a JSON configuration document.
pub fn parse_config(text: &str) -> Result<RunConfig> {
    let mut doc: Value = serde_json::from_str(text)
        .map_err(|e| ElsError::config(format!("malformed configuration: {e}")))?;
    if !doc.is_object() {
        return Err(ElsError::config("configuration must be a JSON object"));
    }
    normalize(&mut doc);
    let mut unknown: BTreeSet<String> = zero_profile_extras(&doc).into_iter().collect();
    let config: RunConfig = serde_ignored::deserialize(doc, |path| {
        unknown.insert(path.to_string());
    })
    .map_err(|e| ElsError::config(format!("invalid configuration: {e}")))?;
    if !unknown.is_empty() {
        let list: Vec<String> = unknown.into_iter().collect();
        return Err(ElsError::config(format!(
            "unknown keys: {}",
            list.join(", ")
        )));
    }
    config.validate()?;
    Ok(config)
}

fn positive(name: &str, x: f64) -> Result<()> {
    if x.is_finite() && x > 0.0 {
        Ok(())
    } else {
        Err(ElsError::config(format!(
            "constraint {name} > 0 violated: {name} = {x}"
        )))
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        positive("grid.r_max", self.grid.r_max)?;
        if self.grid.n_cells < 2 {
            return Err(ElsError::config("constraint grid.n_cells >= 2 violated"));
        }
        positive("solver.dt", self.solver.dt)?;
        positive("solver.t_end", self.solver.t_end)?;
        positive("solver.cfl_sigma", self.solver.cfl_sigma)?;
        let d = &self.diagnostics;
        positive("diagnostics.epsilon1", d.epsilon1)?;
        positive("diagnostics.epsilon0", d.epsilon0)?;
        if 3.0 * d.epsilon1 >= d.epsilon0 {
            return Err(ElsError::config(format!(
                "constraint 3*epsilon1 < epsilon0 violated: epsilon1 = {}, epsilon0 = {}",
                d.epsilon1, d.epsilon0
            )));
        }
        if let Some(t) = d.cone_t {
            positive("diagnostics.cone_T", t)?;
        }
        for &x in d.lambdas.iter().chain(&d.taus) {
            positive("diagnostics.lambdas/taus entries", x)?;
        }
        if self.output.snapshot_every == 0 {
            return Err(ElsError::config(
                "constraint output.snapshot_every >= 1 violated",
            ));
        }
        if self.output.formats.is_empty() {
            return Err(ElsError::config(
                "constraint output.formats non-empty violated",
            ));
        }
        let grid = self.grid.build()?;
        self.solver_config().validate(&grid)?;
        if let Some(gl) = self.gl {
            positive("gl.epsilon", gl.epsilon)?;
            self.gl_config(gl.epsilon).validate(&grid)?;
        }
        if let Some(s) = &self.sweep {
            for (name, list) in [
                ("sweep.epsilon", &s.epsilon),
                ("sweep.dr", &s.dr),
                ("sweep.dt", &s.dt),
            ] {
                for &x in list {
                    positive(name, x)?;
                }
            }
            if !s.epsilon.is_empty() && self.gl.is_none() {
                return Err(ElsError::config("sweep.epsilon needs a gl section"));
            }
            if !s.amplitude.is_empty()
                && !matches!(self.solver.initial_data.phi0, Profile::GaussianBump { .. })
            {
                return Err(ElsError::config(
                    "sweep.amplitude needs a gaussian_bump phi0",
                ));
            }
            if s.amplitude.iter().any(|a| !a.is_finite()) {
                return Err(ElsError::config("sweep.amplitude entries must be finite"));
            }
        }
        if let Some(a) = &self.analyze {
            let cmp = a.comparison_grid.build()?;
            let (lo, hi) = a.window.unwrap_or((0.0, cmp.r_max()));
            if !(0.0 <= lo && lo < hi && hi <= cmp.r_max()) {
                return Err(ElsError::config(format!(
                    "constraint 0 <= window.lo < window.hi <= comparison_grid.r_max violated: ({lo}, {hi})"
                )));
            }
            if a.candidates == 0 {
                return Err(ElsError::config(
                    "constraint analyze.candidates >= 1 violated",
                ));
            }
            if let AnalyzeSource::Synthetic {
                times,
                noise,
                schedule,
            } = &a.source
            {
                positive("analyze.source.times.step", times.step)?;
                if times.count == 0 {
                    return Err(ElsError::config(
                        "constraint analyze.source.times.count >= 1 violated",
                    ));
                }
                if !(noise.is_finite() && *noise >= 0.0) {
                    return Err(ElsError::config(
                        "constraint analyze.source.noise >= 0 violated",
                    ));
                }
                if let ScheduleSpec::Constant { lambda } = schedule {
                    positive("analyze.source.schedule.lambda", *lambda)?;
                }
            }
        }
        Ok(())
    }

    pub fn grid(&self) -> Result<RadialGrid> {
        self.grid.build()
    }

    pub fn solver_config(&self) -> SolverConfig {
        let s = &self.solver;
        SolverConfig::new(s.formulation, s.dt, s.t_end, s.initial_data.clone())
            .with_cfl(s.cfl_sigma)
            .with_snapshot_every(self.output.snapshot_every)
    }

    pub fn gl_config(&self, epsilon: f64) -> GLConfig {
        let s = &self.solver;
        let mut c = GLConfig::new(epsilon, s.dt, s.t_end, s.initial_data.clone())
            .with_snapshot_every(self.output.snapshot_every);
        c.cfl_sigma = s.cfl_sigma;
        c
    }

    pub fn analysis_params(&self) -> Result<AnalysisParams> {
        let a = self.analyze.clone().unwrap_or(AnalyzeSection {
            source: AnalyzeSource::Run,
            comparison_grid: default_comparison(),
            window: None,
            candidates: DEFAULT_CANDIDATES,
        });
        let comparison = a.comparison_grid.build()?;
        Ok(AnalysisParams {
            epsilon0: self.diagnostics.epsilon0,
            epsilon1: self.diagnostics.epsilon1,
            candidates: a.candidates,
            comparison,
            window: a.window.unwrap_or((0.0, comparison.r_max())),
        })
    }

    /// One configuration per point of the sweep grid, in a fixed order:
    /// `dr` outermost, then `dt`, `amplitude`, `epsilon`.
    pub fn sweep_points(&self) -> Vec<(String, RunConfig)> {
        let Some(s) = &self.sweep else {
            return vec![("base".into(), self.clone())];
        };
        let opt = |v: &Vec<f64>| -> Vec<Option<f64>> {
            if v.is_empty() {
                vec![None]
            } else {
                v.iter().copied().map(Some).collect()
            }
        };
        let mut out = Vec::new();
        for dr in opt(&s.dr) {
            for dt in opt(&s.dt) {
                for amp in opt(&s.amplitude) {
                    for eps in opt(&s.epsilon) {
                        let mut c = self.clone();
                        c.sweep = None;
                        let mut label = Vec::new();
                        if let Some(dr) = dr {
                            c.grid.n_cells = (c.grid.r_max / dr).round().max(2.0) as usize;
                            label.push(format!("dr{dr}"));
                        }
                        if let Some(dt) = dt {
                            c.solver.dt = dt;
                            label.push(format!("dt{dt}"));
                        }
                        if let Some(a) = amp {
                            if let Profile::GaussianBump { amplitude, .. } =
                                &mut c.solver.initial_data.phi0
                            {
                                *amplitude = a;
                            }
                            label.push(format!("amp{a}"));
                        }
                        if let Some(e) = eps {
                            c.gl = Some(GlSection { epsilon: e });
                            label.push(format!("eps{e}"));
                        }
                        let name = if label.is_empty() {
                            "base".into()
                        } else {
                            label.join("_")
                        };
                        out.push((name, c));
                    }
                }
            }
        }
        out
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"{"grid":{"r_max":10,"n_cells":1000},
        "solver":{"formulation":"h_form","dt":0.0025,"t_end":1,"initial_data":{"kind":"zero"}}}"#;

    #[test]
    fn minimal_document_gets_defaults() {
        let c = parse_config(MINIMAL).unwrap();
        assert_eq!(c.solver.cfl_sigma, 0.5);
        assert_eq!(c.diagnostics.epsilon0, 1.0);
        assert_eq!(c.diagnostics.epsilon1, 0.25);
        assert_eq!(c.output.snapshot_every, 10);
        assert_eq!(c.solver.formulation, Formulation::HForm);
        assert_eq!(c.solver.initial_data, InitialDataSpec::zero());
        assert!(c.gl.is_none() && c.sweep.is_none() && c.analyze.is_none());
    }

    fn with(patch: &str) -> Result<RunConfig> {
        let mut doc: Value = serde_json::from_str(MINIMAL).unwrap();
        let p: Value = serde_json::from_str(patch).unwrap();
        merge(&mut doc, p);
        parse_config(&doc.to_string())
    }

    fn merge(a: &mut Value, b: Value) {
        match (a, b) {
            (Value::Object(a), Value::Object(b)) => {
                for (k, v) in b {
                    if k == "initial_data" {
                        a.insert(k, v);
                    } else {
                        merge(a.entry(k).or_insert(Value::Null), v);
                    }
                }
            }
            (a, b) => *a = b,
        }
    }

    #[test]
    fn epsilon_compatibility_is_a_constraint() {
        let e = with(r#"{"diagnostics":{"epsilon0":0.6,"epsilon1":0.2}}"#).unwrap_err();
        assert!(
            matches!(&e, ElsError::Config(m) if m.contains("3*epsilon1 < epsilon0")),
            "{e}"
        );
    }

    #[test]
    fn negative_dt_is_a_constraint() {
        let e = with(r#"{"solver":{"dt":-0.1}}"#).unwrap_err();
        assert!(
            matches!(&e, ElsError::Config(m) if m.contains("solver.dt")),
            "{e}"
        );
    }

    #[test]
    fn unknown_keys_are_all_listed() {
        let e = with(r#"{"grid":{"typo":1},"output":{"colour":"red"},"extra":true}"#).unwrap_err();
        let ElsError::Config(m) = e else { panic!() };
        for k in ["grid.typo", "output.colour", "extra"] {
            assert!(m.contains(k), "{m}");
        }
        let e = with(r#"{"solver":{"initial_data":{"kind":"zero","amplitude":1}}}"#).unwrap_err();
        assert!(
            matches!(&e, ElsError::Config(m) if m.contains("phi0.amplitude")),
            "{e}"
        );
    }

    #[test]
    fn full_initial_data_and_sections_parse() {
        let c = with(
            r#"{"solver":{"initial_data":{"phi0":{"kind":"gaussian_bump","amplitude":0.5,"center":2,"width":0.5},
                 "v0":{"kind":"zero"}}, "t_end":0.5},
                "gl":{"epsilon":0.05},
                "diagnostics":{"cone_T":1,"lambdas":[0.5],"taus":[0.2]},
                "output":{"directory":"x","formats":["csv"],"snapshot_every":4},
                "sweep":{"dt":[0.0025,0.00125],"amplitude":[0.25,0.5]},
                "analyze":{"source":{"kind":"synthetic","schedule":{"kind":"linear","t0":1},
                           "times":{"start":0,"step":0.01,"count":10}},"window":[0,40]}}"#,
        )
        .unwrap();
        assert_eq!(c.gl, Some(GlSection { epsilon: 0.05 }));
        assert_eq!(c.output.formats, vec![Format::Csv]);
        assert_eq!(c.solver_config().snapshot_every, 4);
        let points = c.sweep_points();
        assert_eq!(points.len(), 4);
        assert_eq!(points[0].0, "dt0.0025_amp0.25");
        assert_eq!(points[3].1.solver.dt, 0.00125);
        let p = c.analysis_params().unwrap();
        assert_eq!(p.window, (0.0, 40.0));
    }

    #[test]
    fn domain_and_stiffness_rules_apply() {
        let e = with(
            r#"{"solver":{"t_end":9,"initial_data":{"kind":"gaussian_bump","amplitude":0.5,"center":2,"width":0.5}}}"#,
        );
        assert!(matches!(e, Err(ElsError::Config(_))));
        assert!(matches!(
            with(r#"{"gl":{"epsilon":0.001}}"#),
            Err(ElsError::Config(_))
        ));
        assert!(matches!(
            with(r#"{"solver":{"dt":0.1}}"#),
            Err(ElsError::Config(_))
        ));
    }

    #[test]
    fn malformed_text_is_a_config_error() {
        assert!(matches!(parse_config("{"), Err(ElsError::Config(_))));
        assert!(matches!(parse_config("[1]"), Err(ElsError::Config(_))));
        assert!(matches!(
            with(r#"{"solver":{"formulation":"x_form"}}"#),
            Err(ElsError::Config(_))
        ));
    }

    #[test]
    fn config_round_trips_through_json() {
        let c = with(r#"{"gl":{"epsilon":0.05},"sweep":{"dr":[0.02]}}"#).unwrap();
        let back = parse_config(&serde_json::to_string(&c).unwrap()).unwrap();
        assert_eq!(back, c);
    }
}
