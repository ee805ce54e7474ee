//! Scenario files: one TOML document per scenario.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sisnet::dynamics::IntegrationSettings;
use sisnet::limits::NStarSettings;
use sisnet::model::{EpidemicScenario, Mechanism, DEFAULT_CLASSIFICATION_BAND};
use sisnet::netmat::{validate_connectivity, SquareMatrix, DEFAULT_VALIDATION_TOL};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioFile {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub name: Option<String>,
    pub n: usize,
    /// Connectivity matrix, row major.
    #[serde(rename = "L")]
    pub l: Vec<f64>,
    pub beta: Vec<f64>,
    pub gamma: Vec<f64>,
    #[serde(rename = "dS")]
    pub d_s: f64,
    #[serde(rename = "dI")]
    pub d_i: f64,
    pub mechanism: Mechanism,
    #[serde(rename = "S0")]
    pub s0: Vec<f64>,
    #[serde(rename = "I0")]
    pub i0: Vec<f64>,
    /// Total population; defaults to `sum(S0 + I0)`.
    #[serde(rename = "N", default, skip_serializing_if = "Option::is_none")]
    pub total: Option<f64>,
    #[serde(default)]
    pub integration: IntegrationSettings,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default)]
    pub nstar: NStarSettings,
    #[serde(default)]
    pub output: Output,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    /// Column-sum tolerance for the connectivity matrix.
    pub validation: f64,
    /// Relative band around 1 for moderate-risk patches.
    pub classification: f64,
    /// Verdict tolerance.
    pub verify: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            validation: DEFAULT_VALIDATION_TOL,
            classification: DEFAULT_CLASSIFICATION_BAND,
            verify: 1e-3,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Output {
    /// Output directory; `--out` takes precedence.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub dir: Option<PathBuf>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub trajectory: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub summary: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub report: Option<String>,
}

impl ScenarioFile {
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
        Self::parse(&text).map_err(|e| match e {
            CliError::Parse(_, msg) => CliError::Parse(path.to_path_buf(), msg),
            other => other,
        })
    }

    pub fn parse(text: &str) -> Result<Self, CliError> {
        toml::from_str(text).map_err(|e| CliError::Parse(PathBuf::new(), e.message().to_string()))
    }

    /// The canonical document: every default spelled out. Reals print in
    /// shortest round-trip form, so re-parsing is bit-exact.
    pub fn dump(&self) -> String {
        toml::to_string(self).expect("scenario files always serialize")
    }

    pub fn scenario(&self) -> Result<EpidemicScenario, CliError> {
        if self.l.len() != self.n * self.n {
            return Err(CliError::Validation(sisnet::Error::InvalidScenario(format!(
                "L has {} entries, expected n * n = {}",
                self.l.len(),
                self.n * self.n
            ))));
        }
        let raw = SquareMatrix::from_row_major(self.n, self.l.clone())?;
        let connectivity = validate_connectivity(raw, self.tolerances.validation)?;
        let mass: f64 = self.s0.iter().chain(&self.i0).sum();
        let scenario = EpidemicScenario {
            connectivity,
            beta: self.beta.clone(),
            gamma: self.gamma.clone(),
            d_s: self.d_s,
            d_i: self.d_i,
            mechanism: self.mechanism,
            s0: self.s0.clone(),
            i0: self.i0.clone(),
            total: self.total.unwrap_or(mass),
        };
        scenario.validate()?;
        Ok(scenario)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const SYM2: &str = r#"
n = 2
L = [-1.0, 1.0, 1.0, -1.0]
beta = [1.0, 1.0]
gamma = [2.0, 3.0]
dS = 0.0
dI = 1.0
mechanism = "mass_action"
S0 = [2.5, 0.5]
I0 = [0.5, 0.5]
"#;

    #[test]
    fn dump_round_trips() {
        let mut file = ScenarioFile::parse(SYM2).unwrap();
        file.beta = vec![0.1 + 0.2, 1.0 / 3.0];
        file.integration.rel_tol = 1.2345678901234567e-11;
        let again = ScenarioFile::parse(&file.dump()).unwrap();
        assert_eq!(again, file);
        assert_eq!(again.beta[0].to_bits(), (0.1f64 + 0.2).to_bits());
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{SYM2}\ncolour = 3\n");
        assert!(matches!(ScenarioFile::parse(&text), Err(CliError::Parse(..))));
        let text = format!("{SYM2}\n[integration]\nrtol = 1e-8\n");
        assert!(matches!(ScenarioFile::parse(&text), Err(CliError::Parse(..))));
    }

    #[test]
    fn population_mismatch_names_a2() {
        let text = format!("{SYM2}\nN = 5.0\n");
        let err = ScenarioFile::parse(&text).unwrap().scenario().unwrap_err();
        assert!(err.to_string().contains("(A2)"), "{err}");
    }
}
