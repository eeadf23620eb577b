//! Experiment configuration files.
//!
//! Files are TOML with unit-suffixed keys. Every section except the top-level
//! scalars and `[system]` is optional and falls back to the library defaults.

use std::path::Path;
use std::str::FromStr;

use ehswitch::schedule::GainRef;
use ehswitch::{
    ExperimentConfig, InitialEnergy, MeanConvention, PolicyKind, PredictorSettings,
    ScheduleSettings, SimOptions, SystemConfig, TransmissionTarget, TransmitterConfig,
    WorkTimeMode,
};
use serde::Deserialize;
use thiserror::Error;

/// Problems reading or understanding a configuration file.
#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("cannot parse {path}: {source}")]
    Parse {
        path: String,
        source: Box<toml::de::Error>,
    },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

fn default_n_runs() -> u64 {
    500
}

fn default_mode() -> String {
    "known".into()
}

/// Raw file schema.
#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    /// Root seed for every generator in the experiment.
    pub master_seed: u64,
    /// Number of Monte Carlo runs (default 500).
    #[serde(default = "default_n_runs")]
    pub n_runs: u64,
    /// Policy names; see `PolicyKind` for the known set.
    pub policies: Vec<String>,
    /// Working-time mode for baselines: "known" or "predicted".
    #[serde(default = "default_mode")]
    pub mode: String,
    pub system: SystemSection,
    #[serde(default)]
    pub schedule: ScheduleSection,
    #[serde(default)]
    pub simulation: SimulationSection,
    #[serde(default)]
    pub predictor: PredictorSection,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemSection {
    pub bandwidth_mhz: f64,
    pub noise_w_per_hz: f64,
    pub target_bits_mbit: f64,
    pub transmitters: Vec<TransmitterSection>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TransmitterSection {
    pub id: u32,
    pub lambda_per_s: f64,
    pub amount_min_mj: f64,
    pub amount_max_mj: f64,
    pub pathloss_db: f64,
}

/// Reference channel: a named rule or an explicit path loss in dB.
#[derive(Debug, Deserialize)]
#[serde(untagged)]
pub enum GainSpec {
    Named(String),
    Db(f64),
}

impl GainSpec {
    fn to_gain_ref(&self) -> Result<GainRef, ConfigError> {
        match self {
            GainSpec::Db(db) => Ok(GainRef::ExplicitDb(*db)),
            GainSpec::Named(name) => match name.as_str() {
                "best-channel" => Ok(GainRef::BestChannel),
                "linear-mean" => Ok(GainRef::LinearMean),
                "energy-weighted" => Ok(GainRef::EnergyWeighted),
                other => Err(ConfigError::Invalid(format!(
                    "unknown reference_gain {other:?}; use \"best-channel\", \
                     \"linear-mean\", \"energy-weighted\", or a path loss in dB"
                ))),
            },
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ScheduleSection {
    pub reference_gain: GainSpec,
    pub margin: f64,
    pub trace_horizon_s: f64,
}

impl Default for ScheduleSection {
    fn default() -> Self {
        let d = ScheduleSettings::default();
        ScheduleSection {
            reference_gain: GainSpec::Named("energy-weighted".into()),
            margin: d.margin,
            trace_horizon_s: d.trace_horizon_s,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulationSection {
    /// "draw" charges each battery with one burst draw at t = 0; "zero"
    /// starts empty.
    pub initial_energy: String,
    pub count_idle_resume_switch: bool,
    pub event_cap: u64,
}

impl Default for SimulationSection {
    fn default() -> Self {
        let d = SimOptions::default();
        SimulationSection {
            initial_energy: "draw".into(),
            count_idle_resume_switch: d.count_idle_resume_switch,
            event_cap: d.event_cap,
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct PredictorSection {
    /// "midpoint" uses (min+max)/2 as the mean burst; "half-width" uses
    /// (max-min)/2.
    pub mean_amount_convention: String,
    pub n_max: usize,
}

impl Default for PredictorSection {
    fn default() -> Self {
        let d = PredictorSettings::default();
        PredictorSection {
            mean_amount_convention: "midpoint".into(),
            n_max: d.n_max,
        }
    }
}

/// Parses a working-time mode name.
pub fn parse_mode(s: &str) -> Result<WorkTimeMode, ConfigError> {
    match s {
        "known" => Ok(WorkTimeMode::Known),
        "predicted" => Ok(WorkTimeMode::Predicted),
        other => Err(ConfigError::Invalid(format!(
            "unknown mode {other:?}; use \"known\" or \"predicted\""
        ))),
    }
}

/// Parses a comma-separated policy list.
pub fn parse_policies(s: &str) -> Result<Vec<PolicyKind>, ConfigError> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| PolicyKind::from_str(p).map_err(|e| ConfigError::Invalid(e.to_string())))
        .collect()
}

impl FileConfig {
    /// Reads and parses a configuration file, returning it together with the
    /// raw bytes (for provenance hashing).
    pub fn load(path: &Path) -> Result<(FileConfig, Vec<u8>), ConfigError> {
        let bytes = std::fs::read(path).map_err(|source| ConfigError::Io {
            path: path.display().to_string(),
            source,
        })?;
        let text = String::from_utf8_lossy(&bytes);
        let cfg: FileConfig = toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.display().to_string(),
            source: Box::new(source),
        })?;
        Ok((cfg, bytes))
    }

    /// Converts the file schema into a validated experiment description.
    pub fn to_experiment(&self) -> Result<ExperimentConfig, ConfigError> {
        let transmitters: Vec<TransmitterConfig> = self
            .system
            .transmitters
            .iter()
            .map(|t| TransmitterConfig {
                id: t.id,
                lambda_per_s: t.lambda_per_s,
                amount_min_mj: t.amount_min_mj,
                amount_max_mj: t.amount_max_mj,
                pathloss_db: t.pathloss_db,
            })
            .collect();
        let policies = self
            .policies
            .iter()
            .map(|p| {
                PolicyKind::from_str(p).map_err(|e| ConfigError::Invalid(e.to_string()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        let convention = match self.predictor.mean_amount_convention.as_str() {
            "midpoint" => MeanConvention::Midpoint,
            "half-width" => MeanConvention::HalfWidth,
            other => {
                return Err(ConfigError::Invalid(format!(
                    "unknown mean_amount_convention {other:?}; \
                     use \"midpoint\" or \"half-width\""
                )))
            }
        };
        let initial_energy = match self.simulation.initial_energy.as_str() {
            "draw" => InitialEnergy::Draw,
            "zero" => InitialEnergy::Zero,
            other => {
                return Err(ConfigError::Invalid(format!(
                    "unknown initial_energy {other:?}; use \"draw\" or \"zero\""
                )))
            }
        };
        let cfg = ExperimentConfig {
            system: SystemConfig {
                transmitters,
                bandwidth_mhz: self.system.bandwidth_mhz,
                noise_w_per_hz: self.system.noise_w_per_hz,
                target: TransmissionTarget::Bits(self.system.target_bits_mbit),
                rng_seed: self.master_seed,
            },
            policies,
            n_runs: self.n_runs,
            master_seed: self.master_seed,
            mode: parse_mode(&self.mode)?,
            schedule: ScheduleSettings {
                gain_ref: self.schedule.reference_gain.to_gain_ref()?,
                margin: self.schedule.margin,
                trace_horizon_s: self.schedule.trace_horizon_s,
            },
            sim: SimOptions {
                count_idle_resume_switch: self.simulation.count_idle_resume_switch,
                event_cap: self.simulation.event_cap,
            },
            predictor: PredictorSettings {
                convention,
                n_max: self.predictor.n_max,
            },
            initial_energy,
        };
        cfg.validate()
            .map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(cfg)
    }
}
