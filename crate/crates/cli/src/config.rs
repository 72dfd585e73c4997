//! Experiment files: TOML by default, JSON when the name ends in `.json`.

use std::path::{Path, PathBuf};

use energy_neutral::feasibility::region::SweepAxes;
use energy_neutral::mdp::DiscreteSpec;
use energy_neutral::models::{EnergyDistribution, Environment, SensorSpec};
use energy_neutral::policies::{PolicyClass, PolicyParams};
use energy_neutral::presets;
use energy_neutral::scheduling::MultiSensorSpec;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("{path}: {message}")]
    Parse { path: PathBuf, message: String },
    #[error("unknown preset `{0}` for this command (known: {1})")]
    UnknownPreset(String, String),
    #[error("config is for `{found}` but the command is `{wanted}`")]
    WrongKind { wanted: &'static str, found: &'static str },
    #[error("give exactly one of --config and --preset")]
    NoSource,
    #[error("invalid experiment: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    pub experiment: Experiment,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Experiment {
    Region {
        sensor: SensorSpec,
        axes: SweepAxes,
        d_bar: f64,
        classes: Vec<PolicyClass>,
    },
    Tradeoff {
        spec: DiscreteSpec,
        gamma_points: usize,
        #[serde(default = "yes")]
        separable: bool,
    },
    Simulate {
        sensor: SensorSpec,
        d_bar: f64,
        class: PolicyClass,
        /// Explicit parameters; synthesized for `class` when absent.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        policy: Option<PolicyParams>,
        horizon: u64,
        /// Also write every slot to `trace.csv`.
        #[serde(default)]
        records: bool,
    },
    Schedule {
        sensors: MultiSensorSpec,
        points: usize,
        /// `(p_w^q, p_w^h)` settings of the second sensor, one sweep each;
        /// the template's own values when empty.
        #[serde(default)]
        cases: Vec<[f64; 2]>,
    },
}

fn yes() -> bool {
    true
}

impl Experiment {
    pub fn kind(&self) -> &'static str {
        match self {
            Experiment::Region { .. } => "region",
            Experiment::Tradeoff { .. } => "tradeoff",
            Experiment::Simulate { .. } => "simulate",
            Experiment::Schedule { .. } => "schedule",
        }
    }

    /// Overrides the grid size (region and schedule points per axis,
    /// trade-off weights).
    pub fn set_resolution(&mut self, n: usize) -> Result<(), ConfigError> {
        if n < 2 {
            return Err(ConfigError::Invalid("resolution must be at least 2".into()));
        }
        match self {
            Experiment::Region { axes, .. } => {
                *axes = match axes {
                    SweepAxes::ConstantState { q_values, h_values } => SweepAxes::ConstantState {
                        q_values: SweepAxes::log_grid(q_values[0], *q_values.last().unwrap(), n),
                        h_values: SweepAxes::log_grid(h_values[0], *h_values.last().unwrap(), n),
                    },
                    SweepAxes::TwoState { q_states, h_states, .. } => SweepAxes::two_state(*q_states, *h_states, n),
                }
            }
            Experiment::Tradeoff { gamma_points, .. } => *gamma_points = n,
            Experiment::Schedule { points, .. } => *points = n,
            Experiment::Simulate { .. } => {
                return Err(ConfigError::Invalid("simulations have no resolution; set horizon instead".into()))
            }
        }
        Ok(())
    }
}

pub const SIMULATE_PRESETS: [&str; 1] = ["matched-point"];

fn region_experiment(name: &str) -> Option<Experiment> {
    let s = presets::region(name, None)?;
    Some(Experiment::Region { sensor: s.template, axes: s.axes, d_bar: s.d_bar, classes: s.classes })
}

pub fn preset(command: &str, name: &str) -> Result<ExperimentConfig, ConfigError> {
    let experiment = match command {
        "region" => region_experiment(name),
        "tradeoff" => presets::tradeoff(name).map(|spec| Experiment::Tradeoff {
            spec,
            gamma_points: presets::GAMMA_POINTS,
            separable: true,
        }),
        "simulate" if name == "matched-point" => {
            let env = Environment::constant(10.0, 10.0, EnergyDistribution::Uniform { lo: 0.0, hi: 2.0 })
                .expect("valid constants");
            Some(Experiment::Simulate {
                sensor: presets::sensor(100, 100, env),
                d_bar: presets::D_BAR,
                class: PolicyClass::Do,
                policy: None,
                horizon: 1_000_000,
                records: false,
            })
        }
        "schedule" if name == "two-sensor" => Some(Experiment::Schedule {
            sensors: presets::two_sensors(0.5, 0.5),
            points: presets::PROBABILITY_POINTS,
            cases: presets::SECOND_SENSOR_CASES.iter().map(|&(q, h)| [q, h]).collect(),
        }),
        _ => None,
    };
    let known = preset_names(command).join(", ");
    let experiment = experiment.ok_or_else(|| ConfigError::UnknownPreset(name.to_string(), known))?;
    Ok(ExperimentConfig { seed: None, out: None, experiment })
}

pub fn preset_names(command: &str) -> Vec<&'static str> {
    match command {
        "region" => presets::REGION_PRESETS.to_vec(),
        "tradeoff" => presets::TRADEOFF_PRESETS.to_vec(),
        "simulate" => SIMULATE_PRESETS.to_vec(),
        "schedule" => presets::SCHEDULE_PRESETS.to_vec(),
        _ => Vec::new(),
    }
}

/// Every shipped preset as `(command, name)`.
pub fn all_presets() -> Vec<(&'static str, &'static str)> {
    ["region", "tradeoff", "simulate", "schedule"]
        .into_iter()
        .flat_map(|c| preset_names(c).into_iter().map(move |n| (c, n)))
        .collect()
}

fn is_json(path: &Path) -> bool {
    path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"))
}

pub fn parse(text: &str, json: bool, path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let parsed = if json {
        serde_json::from_str(text).map_err(|e| e.to_string())
    } else {
        toml::from_str(text).map_err(|e| e.to_string())
    };
    parsed.map_err(|message| ConfigError::Parse { path: path.to_path_buf(), message: message.trim_end().to_string() })
}

pub fn load(path: &Path) -> Result<ExperimentConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.to_path_buf(), source })?;
    parse(&text, is_json(path), path)
}

impl ExperimentConfig {
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("configs are representable in TOML")
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("configs are representable in JSON")
    }

    /// SHA-256 of the canonical JSON form, so TOML and JSON copies of the
    /// same experiment hash alike.
    pub fn hash(&self) -> String {
        format!("{:x}", Sha256::digest(serde_json::to_vec(self).expect("configs are representable in JSON")))
    }
}
