//! Flat `key = value` settings shared by configuration files and flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use vlearn_core::basis::BasisKind;
use vlearn_core::data::UtilitySpec;
use vlearn_core::simenv::SimEnv;
use vlearn_core::vlearn::NuMode;

use crate::error::CliError;

/// Environment variable supplying the default seed.
pub const SEED_ENV: &str = "VLEARN_SEED";

/// Every key a command may read. Unset keys take command defaults.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize, clap::Args)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    /// Simulation environment: toy, toy_hetero, t1d or t1d_multi.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub env: Option<String>,

    /// Number of patients.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,

    /// Decision points per patient.
    #[arg(long = "T", id = "T")]
    #[serde(rename = "T", skip_serializing_if = "Option::is_none")]
    pub horizon: Option<usize>,

    /// Discount factor in (0, 1).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,

    /// Master seed (default: $VLEARN_SEED, else 0).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,

    /// Steps simulated and discarded before recording.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub burn_in: Option<usize>,

    /// Monte Carlo replications.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub reps: Option<usize>,

    /// vl or ggq.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub method: Option<String>,

    /// Value basis for vl: linear, polynomial, gaussian or tabular.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub basis: Option<String>,

    /// Online mode: universal or individualized.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub mode: Option<String>,

    /// Input dataset CSV.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub data: Option<PathBuf>,

    /// Policy file (written by fit, read by evaluate).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub policy: Option<PathBuf>,

    /// Output file, or directory for reproduce.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,

    /// Patients per evaluation rollout.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub n_eval: Option<usize>,

    /// Steps per evaluation rollout.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_eval: Option<usize>,

    /// Policy-coefficient penalty (default 0.1/√transitions).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_beta: Option<f64>,

    /// Value-coefficient ridge (default n^(-3/4)).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub lambda_theta: Option<f64>,

    /// Reference distribution: all (observed states) or initial.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub nu: Option<String>,

    /// Behavior model: logged, logistic, or known:p0,p1,...
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub propensity: Option<String>,

    /// Utility source: column, toy or glycemic.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub utility: Option<String>,

    /// State component holding glucose for the glycemic utility.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub glucose_index: Option<usize>,

    /// Number of actions (default: largest logged action + 1).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub actions: Option<usize>,

    /// Comma-separated state columns (default: s_1, s_2, ...).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state_columns: Option<String>,

    /// Exploration probability stored with a GGQ policy.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,

    /// Comma-separated state at which to report action probabilities.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub state: Option<String>,

    /// Table to reproduce, 1 to 5.
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub table: Option<usize>,

    /// Worker threads (default: all cores).
    #[arg(long)]
    #[serde(skip_serializing_if = "Option::is_none")]
    pub threads: Option<usize>,
}

impl Settings {
    pub fn to_table(&self) -> toml::Table {
        toml::Table::try_from(self).expect("settings serialize to a table")
    }

    pub fn from_table(table: toml::Table) -> Result<Self, CliError> {
        toml::Value::Table(table)
            .try_into()
            .map_err(|e: toml::de::Error| CliError::Usage(format!("config: {}", e.message())))
    }

    /// Keys that are set.
    pub fn keys(&self) -> Vec<String> {
        self.to_table().keys().cloned().collect()
    }

    /// Rejects any set key outside `allowed`.
    pub fn restrict(&self, command: &str, allowed: &[&str]) -> Result<(), CliError> {
        for key in self.keys() {
            if !allowed.contains(&key.as_str()) {
                return Err(CliError::Usage(format!("key '{key}' is not used by {command}")));
            }
        }
        Ok(())
    }

    /// Resolves the seed from the settings, then `$VLEARN_SEED`, then 0.
    pub fn resolve_seed(&mut self) -> Result<u64, CliError> {
        if self.seed.is_none() {
            self.seed = Some(match std::env::var(SEED_ENV) {
                Ok(v) => v
                    .trim()
                    .parse()
                    .map_err(|_| CliError::Usage(format!("{SEED_ENV}='{v}' is not an unsigned integer")))?,
                Err(_) => 0,
            });
        }
        Ok(self.seed.unwrap_or(0))
    }

    pub fn env(&self) -> Result<SimEnv, CliError> {
        let name = self.env.as_deref().ok_or_else(|| CliError::Usage("missing key 'env'".into()))?;
        SimEnv::from_name(name).ok_or_else(|| {
            CliError::Usage(format!("unknown env '{name}' (expected toy, toy_hetero, t1d or t1d_multi)"))
        })
    }

    pub fn gamma(&self) -> Result<f64, CliError> {
        let gamma = self.gamma.unwrap_or(0.9);
        if !(gamma > 0.0 && gamma < 1.0) {
            return Err(CliError::Validation(format!("gamma {gamma} outside (0, 1)")));
        }
        Ok(gamma)
    }

    pub fn basis(&self) -> Result<BasisKind, CliError> {
        let name = self.basis.as_deref().unwrap_or("gaussian");
        BasisKind::parse(name).ok_or_else(|| {
            CliError::Usage(format!("unknown basis '{name}' (expected linear, polynomial, gaussian or tabular)"))
        })
    }

    pub fn nu_mode(&self) -> Result<NuMode, CliError> {
        match self.nu.as_deref().unwrap_or("all") {
            "all" => Ok(NuMode::AllStates),
            "initial" => Ok(NuMode::InitialStates),
            other => Err(CliError::Usage(format!("unknown nu '{other}' (expected all or initial)"))),
        }
    }

    pub fn utility(&self) -> Result<UtilitySpec, CliError> {
        match self.utility.as_deref().unwrap_or("column") {
            "column" => Ok(UtilitySpec::Column),
            "toy" => Ok(UtilitySpec::SimpleToy),
            "glycemic" => Ok(UtilitySpec::Glycemic {
                glucose_index: self.glucose_index.unwrap_or(0),
            }),
            other => Err(CliError::Usage(format!("unknown utility '{other}' (expected column, toy or glycemic)"))),
        }
    }

    pub fn positive(&self, key: &str, value: Option<usize>, default: usize) -> Result<usize, CliError> {
        let v = value.unwrap_or(default);
        if v == 0 {
            return Err(CliError::Validation(format!("{key} must be positive")));
        }
        Ok(v)
    }

    pub fn required_path<'a>(&self, key: &str, value: &'a Option<PathBuf>) -> Result<&'a Path, CliError> {
        value
            .as_deref()
            .ok_or_else(|| CliError::Usage(format!("missing key '{key}'")))
    }
}

/// Parses a comma-separated list of numbers.
pub fn parse_list(key: &str, text: &str) -> Result<Vec<f64>, CliError> {
    text.split(',')
        .map(|f| {
            f.trim()
                .parse::<f64>()
                .map_err(|_| CliError::Usage(format!("{key}: '{}' is not a number", f.trim())))
        })
        .collect()
}

/// Reads a settings file. A file with a `[config]` table (a run
/// manifest) contributes only that table.
pub fn read_settings_file(path: &Path) -> Result<Settings, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let mut table: toml::Table = text
        .parse()
        .map_err(|e: toml::de::Error| CliError::Usage(format!("{}: {}", path.display(), e.message())))?;
    let table = match table.remove("config") {
        Some(toml::Value::Table(t)) => t,
        Some(_) => return Err(CliError::Usage(format!("{}: 'config' must be a table", path.display()))),
        None => table,
    };
    Settings::from_table(table).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))
}

/// File settings overlaid by flag settings; flags win.
pub fn merge(file: Option<Settings>, flags: &Settings) -> Result<Settings, CliError> {
    let mut table = file.map(|f| f.to_table()).unwrap_or_default();
    table.extend(flags.to_table());
    Settings::from_table(table)
}
