//! Sectioned TOML configuration with logarithmic power units, converted to a
//! harness [`ExperimentConfig`] in SI units.

use std::path::Path;

use nfloc::channel::{db_to_linear, dbm_to_watts};
use nfloc::estimator::{ConvergenceConfig, GridSpec};
use nfloc::harness::{ExperimentConfig, ScenarioParams, StageKind, SweepAxis};
use serde::Deserialize;
use thiserror::Error;
use toml::{Table, Value};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{source_name}:{line}: {message}")]
    Parse {
        source_name: String,
        line: usize,
        message: String,
    },
    #[error("invalid configuration: {0}")]
    Validation(String),
}

#[derive(Debug, Clone, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScenarioSection {
    pub carrier_freq_hz: f64,
    pub bandwidth_hz: f64,
    pub symbol_period_s: Option<f64>,
    pub tx_power_dbm: f64,
    pub noise_psd_dbm_per_hz: f64,
    pub noise_figure_db: f64,
    pub tx_gain_db: f64,
    pub rx_gain_db: f64,
    pub global_phase_rad: f64,
    pub ris_rows: usize,
    pub ris_cols: usize,
    pub element_spacing_m: Option<f64>,
    pub bs_position: [f64; 3],
    pub ue_direction: [f64; 3],
    pub rho: f64,
    pub speed: f64,
    #[serde(alias = "L")]
    pub num_pilots: usize,
    pub profile_seed: u64,
    pub rician_k: Option<f64>,
    pub snr_offset_db: f64,
    pub noise: bool,
}

impl Default for ScenarioSection {
    fn default() -> Self {
        Self {
            carrier_freq_hz: 28e9,
            bandwidth_hz: 1e6,
            symbol_period_s: None,
            tx_power_dbm: 20.0,
            noise_psd_dbm_per_hz: -174.0,
            noise_figure_db: 8.0,
            tx_gain_db: 0.0,
            rx_gain_db: 0.0,
            global_phase_rad: 0.0,
            ris_rows: 32,
            ris_cols: 32,
            element_spacing_m: None,
            bs_position: [3.0, 3.0, 1.0],
            ue_direction: [-1.0, 2.0, 1.0],
            rho: 2.0,
            speed: 1.0,
            num_pilots: 40,
            profile_seed: 0,
            rician_k: None,
            snr_offset_db: 0.0,
            noise: true,
        }
    }
}

impl ScenarioSection {
    pub fn to_params(&self) -> ScenarioParams {
        ScenarioParams {
            carrier_freq: self.carrier_freq_hz,
            bandwidth: self.bandwidth_hz,
            symbol_period: self.symbol_period_s,
            tx_power: dbm_to_watts(self.tx_power_dbm),
            noise_psd: dbm_to_watts(self.noise_psd_dbm_per_hz),
            noise_figure: db_to_linear(self.noise_figure_db),
            tx_gain: db_to_linear(self.tx_gain_db),
            rx_gain: db_to_linear(self.rx_gain_db),
            global_phase: self.global_phase_rad,
            ris_rows: self.ris_rows,
            ris_cols: self.ris_cols,
            element_spacing: self.element_spacing_m,
            bs_position: self.bs_position,
            ue_direction: self.ue_direction,
            rho: self.rho,
            speed: self.speed,
            num_pilots: self.num_pilots,
            profile_seed: self.profile_seed,
            rician_k: self.rician_k,
            snr_offset_db: self.snr_offset_db,
            noise: self.noise,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepSection {
    /// Subcommand default when absent.
    pub values: Option<Vec<f64>>,
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub stages: Option<Vec<StageKind>>,
    pub per_trial_profiles: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FileConfig {
    pub scenario: ScenarioSection,
    pub sweep: SweepSection,
    pub grid: GridSpec,
    pub convergence: ConvergenceConfig,
}

const SECTIONS: [&str; 4] = ["scenario", "sweep", "grid", "convergence"];

/// Section owning each key, used to resolve bare `--set` keys.
const KEYS: &[(&str, &str)] = &[
    ("carrier_freq_hz", "scenario"),
    ("bandwidth_hz", "scenario"),
    ("symbol_period_s", "scenario"),
    ("tx_power_dbm", "scenario"),
    ("noise_psd_dbm_per_hz", "scenario"),
    ("noise_figure_db", "scenario"),
    ("tx_gain_db", "scenario"),
    ("rx_gain_db", "scenario"),
    ("global_phase_rad", "scenario"),
    ("ris_rows", "scenario"),
    ("ris_cols", "scenario"),
    ("element_spacing_m", "scenario"),
    ("bs_position", "scenario"),
    ("ue_direction", "scenario"),
    ("rho", "scenario"),
    ("speed", "scenario"),
    ("num_pilots", "scenario"),
    ("L", "scenario"),
    ("profile_seed", "scenario"),
    ("rician_k", "scenario"),
    ("snr_offset_db", "scenario"),
    ("noise", "scenario"),
    ("values", "sweep"),
    ("trials", "sweep"),
    ("seed", "sweep"),
    ("stages", "sweep"),
    ("per_trial_profiles", "sweep"),
    ("n_theta", "grid"),
    ("n_phi", "grid"),
    ("n_rho", "grid"),
    ("rho_max", "grid"),
    ("objective_tolerance", "convergence"),
    ("grid_max_iterations", "convergence"),
    ("refinement_max_iterations", "convergence"),
    ("outer_max_iterations", "convergence"),
    ("descent_max_iterations", "convergence"),
    ("relinearize", "convergence"),
];

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

fn parse_error(source_name: &str, text: &str, err: &toml::de::Error) -> ConfigError {
    ConfigError::Parse {
        source_name: source_name.to_string(),
        line: err.span().map_or(1, |s| line_of(text, s.start)),
        message: err.message().to_string(),
    }
}

/// Parses one `key=value` override into `(section, key, value)`. Values that
/// are not valid TOML are taken as strings.
pub fn parse_override(raw: &str) -> Result<(String, String, Value), ConfigError> {
    let bad = |message: String| ConfigError::Parse {
        source_name: format!("--set {raw}"),
        line: 1,
        message,
    };
    let (key, value) = raw
        .split_once('=')
        .ok_or_else(|| bad("expected key=value".into()))?;
    let key = key.trim();
    let value = value.trim();
    let (section, key) = match key.split_once('.') {
        Some((s, k)) => {
            if !SECTIONS.contains(&s) {
                return Err(bad(format!("unknown section `{s}`")));
            }
            (s.to_string(), k.to_string())
        }
        None => {
            let section = KEYS
                .iter()
                .find(|(k, _)| *k == key)
                .map(|(_, s)| *s)
                .ok_or_else(|| bad(format!("unknown key `{key}`")))?;
            let key = if key == "L" { "num_pilots" } else { key };
            (section.to_string(), key.to_string())
        }
    };
    let parsed = format!("v = {value}")
        .parse::<Table>()
        .ok()
        .and_then(|mut t| t.remove("v"))
        .unwrap_or_else(|| Value::String(value.to_string()));
    Ok((section, key, parsed))
}

/// Parses configuration text and applies overrides in order.
pub fn parse_str(
    text: &str,
    source_name: &str,
    overrides: &[String],
) -> Result<FileConfig, ConfigError> {
    let mut table: Table = text
        .parse()
        .map_err(|e: toml::de::Error| parse_error(source_name, text, &e))?;
    if overrides.is_empty() {
        return toml::from_str(text).map_err(|e| parse_error(source_name, text, &e));
    }
    for raw in overrides {
        let (section, key, value) = parse_override(raw)?;
        let entry = table
            .entry(section.clone())
            .or_insert_with(|| Value::Table(Table::new()));
        match entry {
            Value::Table(t) => {
                if key == "num_pilots" {
                    t.remove("L");
                }
                t.insert(key, value);
            }
            _ => {
                return Err(ConfigError::Parse {
                    source_name: source_name.to_string(),
                    line: 1,
                    message: format!("`{section}` must be a section"),
                })
            }
        }
    }
    let merged = toml::to_string(&table).map_err(|e| ConfigError::Parse {
        source_name: source_name.to_string(),
        line: 1,
        message: e.to_string(),
    })?;
    toml::from_str(&merged).map_err(|e| ConfigError::Parse {
        source_name: format!("{source_name} with overrides"),
        line: 1,
        message: e.message().to_string(),
    })
}

pub fn parse_file(path: &Path, overrides: &[String]) -> Result<FileConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Parse {
        source_name: path.display().to_string(),
        line: 0,
        message: format!("cannot read file: {e}"),
    })?;
    parse_str(&text, &path.display().to_string(), overrides)
}

/// Default sweep values per axis.
pub fn default_values(axis: SweepAxis) -> Vec<f64> {
    match axis {
        SweepAxis::Distance => vec![1.0, 2.0, 4.0, 6.0, 8.0, 10.0],
        SweepAxis::Speed => (0..=10).map(|i| 5.0 * i as f64).collect(),
        SweepAxis::RicianK => vec![5.0, 10.0, 50.0, 100.0, 500.0, 1000.0],
        SweepAxis::SnrOffset => vec![-20.0, -10.0, 0.0, 10.0],
    }
}

impl FileConfig {
    /// Validated harness configuration for a sweep along `axis`.
    pub fn experiment(&self, axis: SweepAxis) -> Result<ExperimentConfig, ConfigError> {
        let defaults = ExperimentConfig::default();
        let config = ExperimentConfig {
            scenario: self.scenario.to_params(),
            axis,
            values: self
                .sweep
                .values
                .clone()
                .unwrap_or_else(|| default_values(axis)),
            trials: self.sweep.trials.unwrap_or(defaults.trials),
            seed: self.sweep.seed.unwrap_or(defaults.seed),
            stages: self
                .sweep
                .stages
                .clone()
                .unwrap_or_else(|| vec![StageKind::Grid, StageKind::Full]),
            per_trial_profiles: self.sweep.per_trial_profiles,
            grid: self.grid.clone(),
            convergence: self.convergence.clone(),
        };
        config
            .validate()
            .map_err(|e| ConfigError::Validation(e.to_string()))?;
        Ok(config)
    }
}
