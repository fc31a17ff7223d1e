//! Named experiment configurations, TOML files and `key=value` overrides.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::controller::ControllerConfig;
use crate::model::{PhysicalParams, Vec2};
use crate::sim::{initial_state, AugmentedState, SimRun, SimSetup};
use crate::trajectory::{
    hilbert_waypoints, time_parameterize, EllipseConfig, PiecewiseTrajectory, Reference, ReferenceSample, SetPoint,
};

use super::HarnessError;

/// Reference generator and its parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum TrajectorySpec {
    Ellipse {
        /// Tilt [rad].
        psi: f64,
        /// Angular rate [rad/s].
        omega: f64,
        a: f64,
        b: f64,
    },
    Hilbert {
        order: u32,
        /// Side of the square the curve fills [m].
        side: f64,
        v_max: f64,
        a_max: f64,
    },
    SetPoint {
        x: f64,
        y: f64,
    },
}

impl TrajectorySpec {
    pub fn build(&self) -> Result<BuiltReference, HarnessError> {
        Ok(match *self {
            TrajectorySpec::Ellipse { psi, omega, a, b } => {
                if !(omega.is_finite() && a.is_finite() && b.is_finite() && psi.is_finite()) {
                    return Err(HarnessError::Config("ellipse parameters must be finite".into()));
                }
                BuiltReference::Ellipse(EllipseConfig { psi, omega, a, b })
            }
            TrajectorySpec::Hilbert { order, side, v_max, a_max } => {
                if !(side > 0.0 && side.is_finite()) {
                    return Err(HarnessError::Config(format!("hilbert side must be positive, got {side}")));
                }
                let waypoints = hilbert_waypoints(order, side)?;
                BuiltReference::Path(time_parameterize(&waypoints, v_max, a_max)?)
            }
            TrajectorySpec::SetPoint { x, y } => BuiltReference::Fixed(SetPoint(Vec2::new(x, y))),
        })
    }
}

/// A constructed reference; cheap to sample from many threads.
#[derive(Debug, Clone, PartialEq)]
pub enum BuiltReference {
    Ellipse(EllipseConfig<f64>),
    Path(PiecewiseTrajectory<f64>),
    Fixed(SetPoint<f64>),
}

impl Reference<f64> for BuiltReference {
    fn sample(&self, t: f64) -> ReferenceSample<f64> {
        match self {
            BuiltReference::Ellipse(e) => e.sample(t),
            BuiltReference::Path(p) => p.sample_full(t),
            BuiltReference::Fixed(s) => s.sample(t),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialCondition {
    /// Start position [m]; omitted means on the reference.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub position: Option<[f64; 2]>,
    /// Initial thrust [N]; must clear the guard.
    pub thrust: f64,
}

impl Default for InitialCondition {
    fn default() -> Self {
        Self { position: None, thrust: 9.81 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Preset {
    pub name: String,
    #[serde(default)]
    pub description: String,
    pub trajectory: TrajectorySpec,
    #[serde(default)]
    pub controller: ControllerConfig<f64>,
    #[serde(default)]
    pub params: PhysicalParams<f64>,
    #[serde(default)]
    pub initial: InitialCondition,
    /// Integration step [s].
    pub dt: f64,
    /// Run length [s]. Omitted: 120 s, or path duration plus `settle` for
    /// Hilbert references.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub duration: Option<f64>,
    #[serde(default = "default_settle")]
    pub settle: f64,
    #[serde(default = "default_stride")]
    pub output_stride: usize,
    /// Seed for randomized checks driven from this preset.
    #[serde(default)]
    pub seed: u64,
}

fn default_settle() -> f64 {
    10.0
}

fn default_stride() -> usize {
    1
}

const DEFAULT_DURATION: f64 = 120.0;

impl Preset {
    fn base(name: &str, description: &str, trajectory: TrajectorySpec, rate: f64) -> Self {
        Self {
            name: name.into(),
            description: description.into(),
            trajectory,
            controller: ControllerConfig::with_adaptation_rate(rate),
            params: PhysicalParams::default(),
            initial: InitialCondition::default(),
            dt: 1e-3,
            duration: None,
            settle: default_settle(),
            output_stride: 1,
            seed: 0,
        }
    }

    /// Fast-adaptation presets are stiff; they step at 0.2 ms and record at
    /// 1 ms.
    fn fast(mut self) -> Self {
        self.dt = 2e-4;
        self.output_stride = 5;
        self
    }

    pub fn duration(&self) -> Result<f64, HarnessError> {
        if let Some(d) = self.duration {
            return Ok(d);
        }
        Ok(match self.trajectory.build()? {
            BuiltReference::Path(p) => p.duration + self.settle,
            _ => DEFAULT_DURATION,
        })
    }

    pub fn initial_state(&self, reference: &dyn Reference<f64>) -> AugmentedState<f64> {
        let start = match self.initial.position {
            Some([x, y]) => Vec2::new(x, y),
            None => reference.sample(0.0).position,
        };
        initial_state(start, self.initial.thrust)
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(format!("{}: {m}", self.name)));
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if self.output_stride == 0 {
            return bad("output_stride must be at least 1".into());
        }
        if let Some(d) = self.duration {
            if !(d >= 0.0 && d.is_finite()) {
                return bad(format!("duration must be nonnegative, got {d}"));
            }
        }
        if !self.params.is_valid() {
            return bad("params must be positive and finite".into());
        }
        if let Err(e) = self.controller.validate() {
            return bad(e);
        }
        if !self.initial.thrust.is_finite() {
            return bad("initial thrust must be finite".into());
        }
        self.trajectory.build().map(|_| ())
    }

    /// Builds the reference and integrates.
    pub fn simulate(&self) -> Result<SimRun<f64>, HarnessError> {
        self.validate()?;
        let reference = self.trajectory.build()?;
        let setup = SimSetup {
            reference: &reference,
            controller: self.controller,
            params: self.params,
            initial: self.initial_state(&reference),
            dt: self.dt,
            duration: self.duration()?,
            output_stride: self.output_stride,
        };
        Ok(crate::sim::simulate(&setup))
    }

    /// Applies one `dotted.key=value` override. The value is parsed as a
    /// TOML value, falling back to a bare string.
    pub fn apply_override(&mut self, assignment: &str) -> Result<(), HarnessError> {
        let (key, raw) = assignment
            .split_once('=')
            .ok_or_else(|| HarnessError::Config(format!("override `{assignment}` is not key=value")))?;
        self.set(key.trim(), parse_value(raw.trim()))
    }

    /// Sets one dotted key to a TOML value and re-validates the shape.
    pub fn set(&mut self, key: &str, value: toml::Value) -> Result<(), HarnessError> {
        let mut doc = toml::Table::try_from(&*self).map_err(|e| HarnessError::Config(e.to_string()))?;
        set_path(&mut doc, key, value)?;
        *self = Preset::deserialize(doc).map_err(|e| HarnessError::Config(format!("override `{key}`: {e}")))?;
        Ok(())
    }

    pub fn to_toml(&self) -> Result<String, HarnessError> {
        toml::to_string_pretty(self).map_err(|e| HarnessError::Config(e.to_string()))
    }

    /// Parses a preset file. A top-level `base = "<builtin>"` key makes the
    /// file an overlay on that preset.
    pub fn from_toml(text: &str) -> Result<Self, HarnessError> {
        let mut doc: toml::Table = text.parse().map_err(|e: toml::de::Error| HarnessError::Config(e.to_string()))?;
        if let Some(base) = doc.remove("base") {
            let base_name = base
                .as_str()
                .ok_or_else(|| HarnessError::Config("`base` must be a preset name".into()))?;
            let base = builtin(base_name)?;
            let mut merged = toml::Table::try_from(&base).map_err(|e| HarnessError::Config(e.to_string()))?;
            merge(&mut merged, doc);
            doc = merged;
        }
        Preset::deserialize(doc).map_err(|e| HarnessError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_toml(&text)
    }
}

fn parse_value(raw: &str) -> toml::Value {
    format!("v = {raw}")
        .parse::<toml::Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| toml::Value::String(raw.to_string()))
}

fn set_path(doc: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), HarnessError> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let leaf = parts.pop().filter(|s| !s.is_empty()).ok_or_else(|| HarnessError::Config(format!("empty key in `{key}`")))?;
    let mut table = doc;
    for part in parts {
        table = table
            .get_mut(part)
            .and_then(|v| v.as_table_mut())
            .ok_or_else(|| HarnessError::Config(format!("unknown key `{key}`")))?;
    }
    table.insert(leaf.to_string(), value);
    Ok(())
}

fn merge(into: &mut toml::Table, from: toml::Table) {
    for (k, v) in from {
        match (into.get_mut(&k), v) {
            (Some(toml::Value::Table(dst)), toml::Value::Table(src)) => {
                // switching trajectory kind replaces the whole table
                if src.get("kind").is_some_and(|kind| dst.get("kind") != Some(kind)) {
                    *dst = src;
                } else {
                    merge(dst, src);
                }
            }
            (_, v) => {
                into.insert(k, v);
            }
        }
    }
}

pub const BUILTIN_NAMES: [&str; 6] = [
    "ellipse-slow",
    "ellipse-fast",
    "hilbert-slow",
    "hilbert-fast",
    "regulation",
    "singular-hover",
];

fn ellipse() -> TrajectorySpec {
    let e = EllipseConfig::<f64>::default();
    TrajectorySpec::Ellipse { psi: e.psi, omega: e.omega, a: e.a, b: e.b }
}

fn hilbert() -> TrajectorySpec {
    TrajectorySpec::Hilbert { order: 2, side: 4.0, v_max: 1.0, a_max: 1.0 }
}

/// Built-in preset by name.
pub fn builtin(name: &str) -> Result<Preset, HarnessError> {
    Ok(match name {
        "ellipse-slow" => Preset::base(name, "tilted ellipse, adaptation rates 0.1", ellipse(), 0.1),
        "ellipse-fast" => Preset::base(name, "tilted ellipse, adaptation rates 1", ellipse(), 1.0).fast(),
        "hilbert-slow" => Preset::base(name, "order-2 Hilbert path, adaptation rates 0.1", hilbert(), 0.1),
        "hilbert-fast" => Preset::base(name, "order-2 Hilbert path, adaptation rates 1", hilbert(), 1.0).fast(),
        "regulation" => {
            let mut p = Preset::base(
                name,
                "set point (1, 1) from the origin, adaptation rates 0.1",
                TrajectorySpec::SetPoint { x: 1.0, y: 1.0 },
                0.1,
            );
            p.initial.position = Some([0.0, 0.0]);
            p
        }
        "singular-hover" => {
            let mut p = Preset::base(
                name,
                "hover without gravity: thrust decays to zero until the guard trips",
                TrajectorySpec::SetPoint { x: 0.0, y: 0.0 },
                0.1,
            );
            p.params.gravity = 0.0;
            p.controller.gravity = 0.0;
            p.duration = Some(20.0);
            p
        }
        _ => return Err(HarnessError::UnknownPreset(name.to_string())),
    })
}

pub fn builtins() -> Vec<Preset> {
    BUILTIN_NAMES.iter().map(|n| builtin(n).expect("builtin names resolve")).collect()
}

/// A builtin name or a path to a TOML preset file.
pub fn resolve(name_or_path: &str) -> Result<Preset, HarnessError> {
    match builtin(name_or_path) {
        Ok(p) => Ok(p),
        Err(e) => {
            let path = Path::new(name_or_path);
            if path.extension().is_some_and(|x| x == "toml") || path.is_file() {
                Preset::load(path)
            } else {
                Err(e)
            }
        }
    }
}
