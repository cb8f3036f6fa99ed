//! Restoration scenario: horizon, stage-one energization plan and weights.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{BusId, Network};
use crate::error::{Error, Result};

/// Discrete restoration horizon.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Horizon {
    pub start_minute: u32,
    pub step_minutes: u32,
    pub steps: usize,
}

impl Horizon {
    pub fn step_hours(&self) -> f64 {
        self.step_minutes as f64 / 60.0
    }

    /// Clock label `HH:MM` of the start of step `t`.
    pub fn label(&self, t: usize) -> String {
        let m = self.start_minute as usize + t * self.step_minutes as usize;
        format!("{:02}:{:02}", (m / 60) % 24, m % 60)
    }

    pub fn end_minute(&self) -> u32 {
        self.start_minute + self.steps as u32 * self.step_minutes
    }
}

fn parse_clock(field: &str, s: &str) -> Result<u32> {
    let bad = || Error::schema(field, format!("expected HH:MM, got {s:?}"));
    let (h, m) = s.split_once(':').ok_or_else(bad)?;
    let h: u32 = h.parse().map_err(|_| bad())?;
    let m: u32 = m.parse().map_err(|_| bad())?;
    if h > 24 || m >= 60 || (h == 24 && m != 0) {
        return Err(bad());
    }
    Ok(h * 60 + m)
}

fn clock(m: u32) -> String {
    format!("{:02}:{:02}", m / 60, m % 60)
}

fn default_step() -> u32 {
    60
}

fn default_true() -> bool {
    true
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HorizonFile {
    pub start: String,
    pub end: String,
    #[serde(default = "default_step")]
    pub step_minutes: u32,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightsFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_re: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub w_op: Option<f64>,
}

/// On-disk scenario layout. Buses listed in `l0` form the off-outage area;
/// every other load is energized throughout.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub description: Option<String>,
    pub horizon: HorizonFile,
    #[serde(default)]
    pub l0: BTreeMap<BusId, Vec<u8>>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub open_lines: Vec<(BusId, BusId)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<WeightsFile>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub slip_step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k_max: Option<usize>,
    #[serde(default = "default_true")]
    pub one_motor_per_step: bool,
}

/// Values a scenario file may leave unset.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScenarioDefaults {
    pub w_re: f64,
    pub w_op: f64,
    pub slip_step: f64,
}

impl Default for ScenarioDefaults {
    fn default() -> Self {
        ScenarioDefaults {
            w_re: 1.0,
            w_op: 1e-4,
            slip_step: 0.05,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioInput {
    pub horizon: Horizon,
    /// Stage-one plan `L⁰` for each off-outage bus.
    pub l0: BTreeMap<BusId, Vec<u8>>,
    pub open_lines: Vec<(BusId, BusId)>,
    pub w_re: f64,
    pub w_op: f64,
    pub slip_step: f64,
    pub k_max: Option<usize>,
    pub one_motor_per_step: bool,
}

impl ScenarioFile {
    pub fn from_path(path: impl AsRef<Path>) -> Result<ScenarioFile> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        ScenarioFile::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<ScenarioFile> {
        serde_json::from_str(text).map_err(|e| {
            Error::schema(format!("line {} column {}", e.line(), e.column()), e.to_string())
        })
    }

    pub fn into_input(self, defaults: &ScenarioDefaults) -> Result<ScenarioInput> {
        let start = parse_clock("horizon.start", &self.horizon.start)?;
        let end = parse_clock("horizon.end", &self.horizon.end)?;
        let step = self.horizon.step_minutes;
        if step == 0 {
            return Err(Error::schema("horizon.step_minutes", "must be positive"));
        }
        if end <= start || (end - start) % step != 0 {
            return Err(Error::schema(
                "horizon",
                format!("end - start must be a positive multiple of {step} minutes"),
            ));
        }
        let weights = self.weights.unwrap_or(WeightsFile { w_re: None, w_op: None });
        Ok(ScenarioInput {
            horizon: Horizon {
                start_minute: start,
                step_minutes: step,
                steps: ((end - start) / step) as usize,
            },
            l0: self.l0,
            open_lines: self.open_lines,
            w_re: weights.w_re.unwrap_or(defaults.w_re),
            w_op: weights.w_op.unwrap_or(defaults.w_op),
            slip_step: self.slip_step.unwrap_or(defaults.slip_step),
            k_max: self.k_max,
            one_motor_per_step: self.one_motor_per_step,
        })
    }
}

impl ScenarioInput {
    pub fn from_path(path: impl AsRef<Path>, defaults: &ScenarioDefaults) -> Result<ScenarioInput> {
        ScenarioFile::from_path(path)?.into_input(defaults)
    }

    pub fn from_json(text: &str, defaults: &ScenarioDefaults) -> Result<ScenarioInput> {
        ScenarioFile::from_json(text)?.into_input(defaults)
    }

    pub fn to_file(&self) -> ScenarioFile {
        ScenarioFile {
            description: None,
            horizon: HorizonFile {
                start: clock(self.horizon.start_minute),
                end: clock(self.horizon.end_minute()),
                step_minutes: self.horizon.step_minutes,
            },
            l0: self.l0.clone(),
            open_lines: self.open_lines.clone(),
            weights: Some(WeightsFile {
                w_re: Some(self.w_re),
                w_op: Some(self.w_op),
            }),
            slip_step: Some(self.slip_step),
            k_max: self.k_max,
            one_motor_per_step: self.one_motor_per_step,
        }
    }

    pub fn is_off_outage(&self, bus: BusId) -> bool {
        self.l0.contains_key(&bus)
    }

    /// `L⁰_{i,t}`; loads outside the off-outage area count as energized.
    pub fn l0_at(&self, bus: BusId, t: usize) -> u8 {
        self.l0.get(&bus).map_or(1, |row| row[t])
    }

    /// Checks the scenario against a network and returns the network with
    /// the scenario's open lines removed.
    pub fn apply(&self, net: &Network) -> Result<Network> {
        let steps = self.horizon.steps;
        if let Some(n) = net.horizon_len() {
            if n != steps {
                return Err(Error::schema(
                    "horizon",
                    format!("{steps} steps but network profiles have length {n}"),
                ));
            }
        }
        for (bus, row) in &self.l0 {
            let field = format!("l0[{bus}]");
            if net.static_load_at(*bus).is_none() && net.motor_at(*bus).is_none() {
                return Err(Error::schema(field, "bus hosts no load or motor"));
            }
            if row.len() != steps {
                return Err(Error::schema(
                    field,
                    format!("expected {steps} entries, found {}", row.len()),
                ));
            }
            if row.iter().any(|&v| v > 1) {
                return Err(Error::schema(field, "entries must be 0 or 1"));
            }
            if row.windows(2).any(|w| w[1] < w[0]) {
                return Err(Error::schema(field, "must be non-decreasing in time"));
            }
        }
        for (name, v) in [("w_re", self.w_re), ("w_op", self.w_op)] {
            if !(v >= 0.0) || !v.is_finite() {
                return Err(Error::param(name, "must be finite and non-negative"));
            }
        }
        if !(self.slip_step > 0.0 && self.slip_step < 1.0) {
            return Err(Error::param("slip_step", "must lie in (0, 1)"));
        }
        if self.k_max == Some(0) {
            return Err(Error::param("k_max", "must be positive"));
        }
        net.with_open_lines(&self.open_lines)
    }
}
