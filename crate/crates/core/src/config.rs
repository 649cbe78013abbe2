//! Run configuration, read from TOML.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::analysis::{BasisPair, DEFAULT_K};
use crate::calibrate::CalibrateConfig;
use crate::emitter::{EmitterNoise, ExperimentConfig};
use crate::fusion::FusionNoise;
use crate::network::NetworkSpec;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot parse config: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("cannot write config: {0}")]
    Serialize(#[from] toml::ser::Error),
    #[error("unsupported schema_version {0} (expected {SCHEMA_VERSION})")]
    Schema(u32),
    #[error("invalid config: {0}")]
    Invalid(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    #[default]
    Experiment,
    Network,
    OracleCheck,
    Calibrate,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OutputFormat {
    #[default]
    Json,
    Csv,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchedulePreset {
    /// All nine basis pairs.
    Full,
    /// ZZ, XX, YY.
    Diagonal,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WeightedBasis {
    pub basis: BasisPair,
    pub weight: u32,
}

/// Which basis pairs are sampled and how shots are split between them.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BasisSchedule {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub preset: Option<SchedulePreset>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub pairs: Vec<WeightedBasis>,
}

impl Default for BasisSchedule {
    fn default() -> Self {
        Self::preset(SchedulePreset::Full)
    }
}

impl BasisSchedule {
    pub fn preset(p: SchedulePreset) -> Self {
        BasisSchedule {
            preset: Some(p),
            pairs: Vec::new(),
        }
    }

    pub fn weights(&self) -> Result<Vec<(BasisPair, u32)>, ConfigError> {
        let list: Vec<(BasisPair, u32)> = match (&self.preset, self.pairs.is_empty()) {
            (Some(_), false) => {
                return Err(ConfigError::Invalid("schedule: give either a preset or pairs, not both".into()));
            }
            (Some(SchedulePreset::Full), true) | (None, true) => BasisPair::all().into_iter().map(|b| (b, 1)).collect(),
            (Some(SchedulePreset::Diagonal), true) => BasisPair::diagonals().into_iter().map(|b| (b, 1)).collect(),
            (None, false) => self.pairs.iter().map(|w| (w.basis, w.weight)).collect(),
        };
        for (i, (b, _)) in list.iter().enumerate() {
            if list[..i].iter().any(|(c, _)| c == b) {
                return Err(ConfigError::Invalid(format!("schedule: basis pair {b} listed twice")));
            }
        }
        if list.iter().map(|(_, w)| u64::from(*w)).sum::<u64>() == 0 {
            return Err(ConfigError::Invalid("schedule: total weight is zero".into()));
        }
        Ok(list)
    }

    /// Shots per basis pair, proportional to weight; remainders go to the
    /// largest fractional parts (earlier pairs first on ties).
    pub fn allocate(&self, shots: u64) -> Result<Vec<(BasisPair, u64)>, ConfigError> {
        let w = self.weights()?;
        let total: u128 = w.iter().map(|(_, x)| u128::from(*x)).sum();
        let mut out: Vec<(BasisPair, u64)> = Vec::with_capacity(w.len());
        let mut rems = Vec::with_capacity(w.len());
        for (i, (b, x)) in w.iter().enumerate() {
            let exact = u128::from(shots) * u128::from(*x);
            out.push((*b, (exact / total) as u64));
            rems.push((exact % total, i));
        }
        let assigned: u64 = out.iter().map(|(_, n)| n).sum();
        rems.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        for &(_, i) in rems.iter().take((shots - assigned) as usize) {
            out[i].1 += 1;
        }
        Ok(out)
    }
}

/// Basis pair of every trial: contiguous blocks in schedule order.
pub fn trial_bases(allocation: &[(BasisPair, u64)]) -> Vec<BasisPair> {
    allocation
        .iter()
        .flat_map(|(b, n)| std::iter::repeat_n(*b, *n as usize))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(default)]
    pub format: OutputFormat,
    /// Also write every trial record.
    #[serde(default)]
    pub records: bool,
    /// Put wall-clock runtime into the report (breaks byte equality between runs).
    #[serde(default)]
    pub include_runtime: bool,
}

fn default_p_success() -> f64 {
    0.5
}

fn default_runs() -> u64 {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NetworkConfig {
    pub spec: NetworkSpec,
    #[serde(default = "default_p_success")]
    pub p_success: f64,
    /// Defaults to `1 - eta^2` from the fusion noise.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p_erasure: Option<f64>,
    #[serde(default = "default_runs")]
    pub runs: u64,
}

fn default_v_grid() -> Vec<f64> {
    vec![0.0, 0.25, 0.5, 0.75, 0.9, 1.0]
}

fn default_eta_grid() -> Vec<f64> {
    vec![0.1, 0.5, 1.0]
}

fn default_bg_grid() -> Vec<f64> {
    vec![0.0, 0.01, 0.1]
}

fn default_modes() -> Vec<bool> {
    vec![true, false]
}

fn default_tolerance() -> f64 {
    1e-9
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleCheckConfig {
    #[serde(default = "default_v_grid")]
    pub indistinguishability: Vec<f64>,
    #[serde(default = "default_eta_grid")]
    pub eta: Vec<f64>,
    #[serde(default = "default_bg_grid")]
    pub p_bg: Vec<f64>,
    /// `number_resolving` values to sweep.
    #[serde(default = "default_modes")]
    pub number_resolving: Vec<bool>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    /// Harness self-test: perturbs the closed-form channel by this much.
    #[serde(default, skip_serializing_if = "is_zero")]
    pub corruption: f64,
}

fn is_zero(x: &f64) -> bool {
    *x == 0.0
}

impl Default for OracleCheckConfig {
    fn default() -> Self {
        OracleCheckConfig {
            indistinguishability: default_v_grid(),
            eta: default_eta_grid(),
            p_bg: default_bg_grid(),
            number_resolving: default_modes(),
            tolerance: default_tolerance(),
            corruption: 0.0,
        }
    }
}

fn default_k() -> f64 {
    DEFAULT_K
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AnalysisConfig {
    /// Standard deviations required above 1/2 for an entanglement verdict.
    #[serde(default = "default_k")]
    pub k: f64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig { k: DEFAULT_K }
    }
}

fn default_schema() -> u32 {
    SCHEMA_VERSION
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_schema")]
    pub schema_version: u32,
    #[serde(default)]
    pub mode: Mode,
    pub experiment: ExperimentConfig,
    #[serde(default)]
    pub emitter: EmitterNoise,
    #[serde(default)]
    pub fusion: FusionNoise,
    #[serde(default)]
    pub schedule: BasisSchedule,
    #[serde(default)]
    pub analysis: AnalysisConfig,
    #[serde(default)]
    pub output: OutputConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub network: Option<NetworkConfig>,
    #[serde(default)]
    pub oracle_check: OracleCheckConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub calibrate: Option<CalibrateConfig>,
}

impl RunConfig {
    /// Ideal devices, full schedule.
    pub fn ideal(shots: u64, seed: u64) -> Self {
        RunConfig {
            schema_version: SCHEMA_VERSION,
            mode: Mode::Experiment,
            experiment: ExperimentConfig {
                cycle_separation_ns: 300.0,
                shots,
                seed,
                metadata: Default::default(),
            },
            emitter: EmitterNoise::ideal(),
            fusion: FusionNoise::ideal(),
            schedule: BasisSchedule::default(),
            analysis: AnalysisConfig::default(),
            output: OutputConfig::default(),
            network: None,
            oracle_check: OracleCheckConfig::default(),
            calibrate: None,
        }
    }

    pub fn from_toml(text: &str) -> Result<Self, ConfigError> {
        let cfg: RunConfig = toml::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml(&self) -> Result<String, ConfigError> {
        Ok(toml::to_string(self)?)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Self::from_toml(&text)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::Schema(self.schema_version));
        }
        let invalid = |e: &dyn std::fmt::Display| ConfigError::Invalid(e.to_string());
        self.experiment.validate().map_err(|e| invalid(&e))?;
        self.emitter.validate().map_err(|e| invalid(&e))?;
        self.fusion.validate().map_err(|e| invalid(&e))?;
        self.schedule.weights()?;
        if !(self.analysis.k.is_finite() && self.analysis.k >= 0.0) {
            return Err(ConfigError::Invalid(format!("analysis.k = {} must be non-negative", self.analysis.k)));
        }
        if let Some(n) = &self.network {
            n.spec.validate().map_err(|e| invalid(&e))?;
            for (name, p) in [("p_success", Some(n.p_success)), ("p_erasure", n.p_erasure)] {
                if let Some(p) = p {
                    if !(0.0..=1.0).contains(&p) {
                        return Err(ConfigError::Invalid(format!("network.{name} = {p} not in [0, 1]")));
                    }
                }
            }
            if n.runs == 0 {
                return Err(ConfigError::Invalid("network.runs must be at least 1".into()));
            }
        }
        let oc = &self.oracle_check;
        for (name, grid) in [
            ("indistinguishability", &oc.indistinguishability),
            ("eta", &oc.eta),
            ("p_bg", &oc.p_bg),
        ] {
            if grid.is_empty() || grid.iter().any(|p| !(0.0..=1.0).contains(p)) {
                return Err(ConfigError::Invalid(format!("oracle_check.{name} must be a non-empty list in [0, 1]")));
            }
        }
        if oc.number_resolving.is_empty() || !(oc.tolerance > 0.0) || !oc.corruption.is_finite() {
            return Err(ConfigError::Invalid("oracle_check: bad detector modes, tolerance or corruption".into()));
        }
        if let Some(c) = &self.calibrate {
            c.validate().map_err(|e| invalid(&e))?;
        }
        Ok(())
    }
}
