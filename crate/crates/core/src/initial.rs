//! Initial-data profiles for `(φ₀, φ₁, v₀)`.

use serde::{Deserialize, Serialize};

use crate::error::{ElsError, Result};
use crate::grid::{RadialField, RadialGrid};

/// Values below this are treated as zero when measuring a table's support.
const SUPPORT_EPS: f64 = 1e-14;

/// One radial profile. Every variant vanishes on the axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Profile {
    #[default]
    Zero,
    /// `A [exp(-((r-c)/w)^2) - exp(-((r+c)/w)^2)]`: a Gaussian ring made odd
    /// in `r` so it vanishes on the axis and is smooth there.
    GaussianBump {
        amplitude: f64,
        center: f64,
        width: f64,
    },
    /// `2 arctan(r/C) χ(r)` with `χ = 1` on `[0, cutoff]`, `0` beyond `2·cutoff`;
    /// no cutoff means the uncut harmonic map.
    HarmonicCap {
        #[serde(rename = "C")]
        c: f64,
        #[serde(default, skip_serializing_if = "Option::is_none")]
        cutoff: Option<f64>,
    },
    /// Values on exactly the grid nodes.
    Table { nodes: Vec<f64>, values: Vec<f64> },
}

fn bump(x: f64) -> f64 {
    if x <= 0.0 {
        0.0
    } else {
        (-1.0 / x).exp()
    }
}

/// C^∞ step equal to 1 for `r <= a` and 0 for `r >= 2a`.
pub fn smooth_cutoff(r: f64, a: f64) -> f64 {
    let s = (r - a) / a;
    if s <= 0.0 {
        1.0
    } else if s >= 1.0 {
        0.0
    } else {
        let (p, q) = (bump(1.0 - s), bump(s));
        p / (p + q)
    }
}

impl Profile {
    pub fn validate(&self) -> Result<()> {
        match self {
            Profile::Zero => Ok(()),
            Profile::GaussianBump {
                amplitude,
                center,
                width,
            } => {
                if !amplitude.is_finite() || !center.is_finite() || *center < 0.0 {
                    return Err(ElsError::config(
                        "gaussian_bump needs finite amplitude and center >= 0",
                    ));
                }
                if !(width.is_finite() && *width > 0.0) {
                    return Err(ElsError::config("gaussian_bump width must be positive"));
                }
                Ok(())
            }
            Profile::HarmonicCap { c, cutoff } => {
                if !(c.is_finite() && *c > 0.0) {
                    return Err(ElsError::config("harmonic_cap C must be positive"));
                }
                if let Some(a) = cutoff {
                    if !(a.is_finite() && *a > 0.0) {
                        return Err(ElsError::config("harmonic_cap cutoff must be positive"));
                    }
                }
                Ok(())
            }
            Profile::Table { nodes, values } => {
                if nodes.len() != values.len() {
                    return Err(ElsError::config(format!(
                        "table has {} nodes but {} values",
                        nodes.len(),
                        values.len()
                    )));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(ElsError::config("table values must be finite"));
                }
                Ok(())
            }
        }
    }

    pub fn sample(&self, grid: &RadialGrid) -> Result<RadialField> {
        self.validate()?;
        let field = match self {
            Profile::Zero => RadialField::zeros(*grid),
            Profile::GaussianBump {
                amplitude,
                center,
                width,
            } => RadialField::from_fn(*grid, |r| {
                let a = (r - center) / width;
                let b = (r + center) / width;
                amplitude * ((-a * a).exp() - (-b * b).exp())
            }),
            Profile::HarmonicCap { c, cutoff } => RadialField::from_fn(*grid, |r| {
                let chi = cutoff.map_or(1.0, |a| smooth_cutoff(r, a));
                2.0 * (r / c).atan() * chi
            }),
            Profile::Table { nodes, values } => {
                if nodes.len() != grid.len() {
                    return Err(ElsError::config(format!(
                        "table has {} nodes, grid has {}",
                        nodes.len(),
                        grid.len()
                    )));
                }
                let tol = 1e-9 * grid.dr();
                if let Some(j) = (0..grid.len()).find(|&j| (nodes[j] - grid.r(j)).abs() > tol) {
                    return Err(ElsError::config(format!(
                        "table node {j} at r = {} does not match grid node {}",
                        nodes[j],
                        grid.r(j)
                    )));
                }
                if values[0] != 0.0 {
                    return Err(ElsError::config("table value on the axis must be 0"));
                }
                RadialField::new(*grid, values.clone())?
            }
        };
        Ok(field)
    }

    /// Radius beyond which the profile is zero to double precision, or
    /// `stationary_ok` zero for profiles that are exact static solutions.
    fn support_radius(&self, stationary_ok: bool) -> f64 {
        match self {
            Profile::Zero => 0.0,
            Profile::GaussianBump { center, width, .. } => center + 6.0 * width,
            Profile::HarmonicCap {
                cutoff: Some(a), ..
            } => 2.0 * a,
            Profile::HarmonicCap { cutoff: None, .. } => {
                if stationary_ok {
                    0.0
                } else {
                    f64::INFINITY
                }
            }
            Profile::Table { nodes, values } => nodes
                .iter()
                .zip(values)
                .filter(|(_, v)| v.abs() > SUPPORT_EPS)
                .map(|(r, _)| *r)
                .fold(0.0, f64::max),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Profile::Zero)
    }
}

/// Initial data `φ(r,0) = φ₀`, `φ_t(r,0) = φ₁`, `v(r,0) = v₀`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
pub struct InitialDataSpec {
    pub phi0: Profile,
    #[serde(default)]
    pub phi1: Profile,
    #[serde(default)]
    pub v0: Profile,
}

impl InitialDataSpec {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn phi0(profile: Profile) -> Self {
        InitialDataSpec {
            phi0: profile,
            ..Default::default()
        }
    }

    pub fn gaussian_bump(amplitude: f64, center: f64, width: f64) -> Self {
        Self::phi0(Profile::GaussianBump {
            amplitude,
            center,
            width,
        })
    }

    pub fn harmonic_cap(c: f64, cutoff: Option<f64>) -> Self {
        Self::phi0(Profile::HarmonicCap { c, cutoff })
    }

    pub fn with_phi1(mut self, p: Profile) -> Self {
        self.phi1 = p;
        self
    }

    pub fn with_v0(mut self, p: Profile) -> Self {
        self.v0 = p;
        self
    }

    pub fn validate(&self) -> Result<()> {
        self.phi0.validate()?;
        self.phi1.validate()?;
        self.v0.validate()
    }

    /// Radius outside which the data is at rest; an uncut harmonic map in `φ₀`
    /// is a static solution and contributes nothing.
    pub fn support_radius(&self) -> f64 {
        self.phi0
            .support_radius(true)
            .max(self.phi1.support_radius(false))
            .max(self.v0.support_radius(false))
    }

    /// Samples `(φ₀, φ₁, v₀)` on the grid.
    pub fn sample(&self, grid: &RadialGrid) -> Result<(RadialField, RadialField, RadialField)> {
        Ok((
            self.phi0.sample(grid)?,
            self.phi1.sample(grid)?,
            self.v0.sample(grid)?,
        ))
    }
}
