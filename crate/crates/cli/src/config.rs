//! Run configuration: a JSON file, overridden field by field by flags.

use std::path::{Path, PathBuf};

use clap::{Args, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::error::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum BaseArg {
    PhiPlus,
    PsiMinus,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum JointArg {
    Bsm,
    Ejm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum ScenarioArg {
    UniBrgp,
    BiEqualBrgp,
    UniEjm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum FamilyArg {
    Nme,
    Werner,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum QuantityArg {
    /// Maximum rounds of every scenario along a family.
    MaxRounds,
    /// The inequality value of one configuration with one parameter varied.
    B,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum SuiteArg {
    Oracle,
}

/// Every knob of every subcommand. All optional so that a file and the flags
/// can each supply part of it.
#[derive(Args, Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// JSON configuration file; flags override its fields.
    #[arg(long)]
    #[serde(skip)]
    pub config: Option<PathBuf>,

    /// Source 1 parameter eta (source 2 too unless --eta2).
    #[arg(long)]
    pub eta: Option<f64>,
    #[arg(long)]
    pub eta2: Option<f64>,
    /// Source 1 visibility (source 2 too unless --v2).
    #[arg(long)]
    pub v: Option<f64>,
    #[arg(long)]
    pub v2: Option<f64>,
    #[arg(long, value_enum)]
    pub base: Option<BaseArg>,

    #[arg(long, value_enum)]
    pub joint: Option<JointArg>,
    #[arg(long = "ejm-theta")]
    pub ejm_theta: Option<f64>,

    /// Alice precisions, comma separated, one per round.
    #[arg(long = "alice-G", value_delimiter = ',')]
    #[serde(rename = "alice_G")]
    pub alice_g: Option<Vec<f64>>,
    /// Charu precisions, comma separated, one per round.
    #[arg(long = "charu-G", value_delimiter = ',')]
    #[serde(rename = "charu_G")]
    pub charu_g: Option<Vec<f64>>,
    /// Alice angle for in-plane rounds (default pi/4).
    #[arg(long)]
    pub phi: Option<f64>,
    /// Charu angles, one per round (default pi/4).
    #[arg(long = "charu-theta", value_delimiter = ',')]
    pub charu_theta: Option<Vec<f64>>,

    #[arg(long, value_enum)]
    pub scenario: Option<ScenarioArg>,
    #[arg(long, value_enum)]
    pub family: Option<FamilyArg>,
    #[arg(long)]
    pub rounds: Option<usize>,
    /// Entanglement of the family member to use instead of --eta or --v.
    #[arg(long)]
    pub entanglement: Option<f64>,
    /// Restrict the frontier to identical Alice and Charu precisions.
    #[arg(long = "equal-precision", num_args = 0..=1, default_missing_value = "true")]
    pub equal_precision: Option<bool>,

    #[arg(long, value_enum)]
    pub quantity: Option<QuantityArg>,
    /// Swept parameter: eta, v, alice-G or charu-G.
    #[arg(long)]
    pub parameter: Option<String>,
    #[arg(long)]
    pub start: Option<f64>,
    #[arg(long)]
    pub stop: Option<f64>,
    #[arg(long)]
    pub steps: Option<usize>,
    /// Also write figure1.csv, figure2.csv and figure3.csv.
    #[arg(long, num_args = 0..=1, default_missing_value = "true")]
    pub figures: Option<bool>,

    #[arg(long, value_enum)]
    pub suite: Option<SuiteArg>,
    #[arg(long)]
    pub samples: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,

    /// Directory receiving results.json and CSV outputs.
    #[arg(long = "out-dir")]
    pub out_dir: Option<PathBuf>,
    /// Also write the probability table of `simulate` here as CSV.
    #[arg(long = "table-csv")]
    pub table_csv: Option<PathBuf>,
}

macro_rules! overlay {
    ($flags:expr, $file:expr, $($field:ident),* $(,)?) => {
        RunConfig {
            config: $flags.config.clone(),
            $($field: $flags.$field.clone().or($file.$field.clone()),)*
        }
    };
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Parse {
            line: e.line(),
            column: e.column(),
            message: e.to_string(),
        })
    }

    fn read(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io {
            path: path.to_path_buf(),
            source: e,
        })?;
        Self::from_json(&text)
    }

    /// File values (if a file was given) with every flag that was set on top.
    pub fn resolve(flags: &RunConfig) -> Result<Self, CliError> {
        let file = match &flags.config {
            Some(path) => Self::read(path)?,
            None => RunConfig::default(),
        };
        let merged = Self::merge(flags, &file);
        merged.validate()?;
        Ok(merged)
    }

    /// `flags` wherever set, `file` otherwise.
    pub fn merge(flags: &RunConfig, file: &RunConfig) -> Self {
        overlay!(
            flags, file, eta, eta2, v, v2, base, joint, ejm_theta, alice_g, charu_g, phi, charu_theta, scenario,
            family, rounds, entanglement, equal_precision, quantity, parameter, start, stop, steps, figures, suite,
            samples, seed, out_dir, table_csv,
        )
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let unit = |field: &'static str, value: Option<f64>| match value {
            Some(x) if !(0.0..=1.0).contains(&x) => Err(CliError::validation(field, format!("{x} is outside [0, 1]"))),
            _ => Ok(()),
        };
        unit("eta", self.eta)?;
        unit("eta2", self.eta2)?;
        unit("v", self.v)?;
        unit("v2", self.v2)?;
        unit("entanglement", self.entanglement)?;
        for (field, list) in [("alice_G", &self.alice_g), ("charu_G", &self.charu_g)] {
            if let Some(list) = list {
                if list.is_empty() {
                    return Err(CliError::validation(field, "needs at least one round".into()));
                }
                if let Some(g) = list.iter().find(|g| !(**g > 0.0 && **g <= 1.0)) {
                    return Err(CliError::validation(field, format!("{g} is outside (0, 1]")));
                }
            }
        }
        if let Some(theta) = self.ejm_theta {
            if !(0.0..=std::f64::consts::FRAC_PI_2).contains(&theta) {
                return Err(CliError::validation("ejm_theta", format!("{theta} is outside [0, pi/2]")));
            }
        }
        if self.rounds == Some(0) {
            return Err(CliError::validation("rounds", "must be at least 1".into()));
        }
        if self.steps == Some(0) {
            return Err(CliError::validation("steps", "must be at least 1".into()));
        }
        if self.samples == Some(0) {
            return Err(CliError::validation("samples", "must be at least 1".into()));
        }
        Ok(())
    }

    pub fn out_dir(&self) -> PathBuf {
        self.out_dir.clone().unwrap_or_else(|| PathBuf::from("."))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flags_override_file_values() {
        let file = RunConfig::from_json(r#"{"eta": 0.3, "v": 0.9, "charu_G": [0.5, 1.0]}"#).unwrap();
        let flags = RunConfig {
            v: Some(0.8),
            ..RunConfig::default()
        };
        let merged = RunConfig::merge(&flags, &file);
        assert_eq!(merged.eta, Some(0.3));
        assert_eq!(merged.v, Some(0.8));
        assert_eq!(merged.charu_g, Some(vec![0.5, 1.0]));
    }

    #[test]
    fn parse_errors_carry_a_position() {
        match RunConfig::from_json("{\n  \"eta\": 0.5,\n  \"v\": oops\n}") {
            Err(CliError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("{other:?}"),
        }
        assert!(matches!(RunConfig::from_json(r#"{"etta": 0.5}"#), Err(CliError::Parse { .. })));
    }

    #[test]
    fn out_of_range_fields_are_named() {
        let cfg = RunConfig::from_json(r#"{"charu_G": [1.2]}"#).unwrap();
        match cfg.validate() {
            Err(CliError::Validation { field, .. }) => assert_eq!(field, "charu_G"),
            other => panic!("{other:?}"),
        }
    }
}
