use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mip::ModelConfig;
use crate::netmodel::ScenarioDefaults;
use crate::simulate::{SimOptions, ValidationOptions};
use crate::solve::SolverConfig;

/// Run configuration file: solver settings plus module defaults.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub solver: SolverConfig,
    pub model: ModelConfig,
    pub scenario_defaults: ScenarioDefaults,
    pub simulation: SimOptions,
    pub validation: ValidationOptions,
    /// Seed for any randomized component; the shipped backend is
    /// deterministic and ignores it.
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            solver: SolverConfig::default(),
            model: ModelConfig::default(),
            scenario_defaults: ScenarioDefaults::default(),
            simulation: SimOptions::default(),
            validation: ValidationOptions::default(),
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn from_path(path: impl AsRef<Path>) -> Result<RunConfig> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<RunConfig> {
        let cfg: RunConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        self.solver.validate()?;
        self.model.validate()?;
        self.simulation.validate()?;
        let d = &self.scenario_defaults;
        if !(d.w_re >= 0.0) || !(d.w_op >= 0.0) {
            return Err(Error::param("scenario_defaults", "weights must be non-negative"));
        }
        if !(d.slip_step > 0.0 && d.slip_step < 1.0) {
            return Err(Error::param("scenario_defaults.slip_step", "must lie in (0, 1)"));
        }
        let v = &self.validation;
        if !(v.voltage_tol > 0.0) || !(v.accel_tol > 0.0) || !(v.initial_window_s >= 0.0) {
            return Err(Error::param("validation", "tolerances must be positive"));
        }
        Ok(())
    }
}
