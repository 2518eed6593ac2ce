//! Experiment configuration files (TOML). Unknown keys are rejected.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use aojc_core::analytics::MaxAgeOptions;
use aojc_core::optimizer::OptimizerSettings;
use aojc_core::sim::{DriftThresholds, Verdict};
use aojc_core::{
    validate_params, validate_params_allow_zero_arrivals, RawParams, SchedulerKind, SubsetKey,
    SystemParams,
};
use serde::Deserialize;
use sha2::{Digest, Sha256};

use crate::error::{config_err, CliError, Result};

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_id")]
    pub id: String,
    /// Master seed; every simulation seed is derived from it.
    #[serde(default)]
    pub seed: u64,
    pub system: Option<RawParams>,
    pub policy: Option<PolicySection>,
    #[serde(default)]
    pub sim: SimSection,
    #[serde(default)]
    pub optimizer: OptimizerSettings,
    pub sweep: Option<SweepSection>,
    pub evaluate: Option<EvaluateSection>,
    pub verify: Option<VerifySection>,
    pub stability: Option<StabilitySection>,
}

fn default_id() -> String {
    "experiment".into()
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolicySection {
    pub kind: Option<SchedulerKind>,
    /// Pre-solved table (JSON), relative to the config file.
    pub table: Option<PathBuf>,
    /// Same sampling probability on every subset and uniform scheduling.
    pub uniform_mu: Option<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ModeSpec {
    #[default]
    Open,
    Saturated,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimSection {
    pub horizon: u64,
    pub seeds: Vec<u64>,
    pub mode: ModeSpec,
    /// One-based user labels of the backlogged subset (saturated mode).
    pub subset: Option<Vec<usize>>,
    pub burn_in_fraction: f64,
    pub trace_stride: Option<u64>,
}

impl Default for SimSection {
    fn default() -> Self {
        Self {
            horizon: 500_000,
            seeds: vec![1, 2, 3, 4, 5],
            mode: ModeSpec::Open,
            subset: None,
            burn_in_fraction: 0.1,
            trace_stride: None,
        }
    }
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ArrivalConfig {
    pub name: String,
    pub rates: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    FlipProb,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub param: SweepParam,
    pub values: Vec<f64>,
    pub arrival_configs: Vec<ArrivalConfig>,
}

/// A backlogged subset with fixed policy parameters.
#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CaseSpec {
    pub name: String,
    /// Falls back to the top-level `[system]` table.
    pub system: Option<RawParams>,
    pub subset: Vec<usize>,
    pub kind: SchedulerKind,
    pub mu: f64,
    /// Scheduling weights of the subset members, in label order
    /// (randomized cases only).
    pub pi: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvaluateSection {
    #[serde(default)]
    pub max_age: MaxAgeOptions,
    pub cases: Vec<CaseSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    #[serde(default = "default_verify_horizon")]
    pub horizon: u64,
    #[serde(default = "default_verify_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_tolerance")]
    pub tolerance: f64,
    #[serde(default)]
    pub max_age: MaxAgeOptions,
    pub cases: Vec<CaseSpec>,
}

fn default_verify_horizon() -> u64 {
    1_000_000
}

fn default_verify_seeds() -> Vec<u64> {
    vec![1, 2, 3]
}

fn default_tolerance() -> f64 {
    0.02
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityConfig {
    pub id: String,
    pub system: RawParams,
    /// Use a uniform table with this sampling probability instead of the
    /// optimized tables.
    pub uniform_mu: Option<f64>,
    /// Expected outcome; a mismatch is reported as a failure.
    pub expect: Option<Expectation>,
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Expectation {
    /// Whether at least one sufficient condition holds.
    pub conditions_satisfied: Option<bool>,
    /// Verdict required under both policy tables.
    pub verdict: Option<Verdict>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SoundnessSweep {
    pub count: usize,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilitySection {
    #[serde(default = "default_stability_horizon")]
    pub horizon: u64,
    #[serde(default = "default_verify_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    #[serde(default = "default_stride")]
    pub trace_stride: u64,
    #[serde(default)]
    pub drift: DriftThresholds,
    #[serde(default)]
    pub configs: Vec<StabilityConfig>,
    pub sweep: Option<SoundnessSweep>,
}

fn default_stability_horizon() -> u64 {
    200_000
}

fn default_epsilon() -> f64 {
    0.01
}

fn default_stride() -> u64 {
    100
}

/// A parsed config together with its origin and content hash.
#[derive(Debug, Clone)]
pub struct LoadedConfig {
    pub config: ExperimentConfig,
    pub base_dir: PathBuf,
    pub sha256: String,
}

impl LoadedConfig {
    pub fn from_path(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|source| CliError::ReadConfig { path: path.to_path_buf(), source })?;
        let base_dir = path.parent().map(Path::to_path_buf).unwrap_or_default();
        Self::from_str(&text, base_dir)
            .map_err(|e| match e {
                CliError::ParseConfig { source, .. } => CliError::ParseConfig { path: path.to_path_buf(), source },
                other => other,
            })
    }

    pub fn from_str(text: &str, base_dir: PathBuf) -> Result<Self> {
        let config: ExperimentConfig = toml::from_str(text)
            .map_err(|e| CliError::ParseConfig { path: PathBuf::from("<inline>"), source: Box::new(e) })?;
        let sha256 = hex(&Sha256::digest(text.as_bytes()));
        let loaded = Self { config, base_dir, sha256 };
        loaded.validate()?;
        Ok(loaded)
    }

    pub fn resolve(&self, p: &Path) -> PathBuf {
        if p.is_absolute() {
            p.to_path_buf()
        } else {
            self.base_dir.join(p)
        }
    }

    fn validate(&self) -> Result<()> {
        let c = &self.config;
        check_seeds(&c.sim.seeds, "sim.seeds")?;
        if c.sim.horizon == 0 {
            return Err(config_err("sim.horizon must be positive"));
        }
        if !(0.0..1.0).contains(&c.sim.burn_in_fraction) {
            return Err(config_err("sim.burn_in_fraction must lie in [0, 1)"));
        }
        if let Some(policy) = &c.policy {
            if let Some(t) = &policy.table {
                let path = self.resolve(t);
                if !path.is_file() {
                    return Err(config_err(format!("policy table {} does not exist", path.display())));
                }
            }
            if policy.table.is_some() && policy.uniform_mu.is_some() {
                return Err(config_err("policy.table and policy.uniform_mu are mutually exclusive"));
            }
        }
        if let Some(sweep) = &c.sweep {
            if sweep.values.is_empty() {
                return Err(config_err("sweep.values must not be empty"));
            }
            if sweep.arrival_configs.is_empty() {
                return Err(config_err("sweep.arrival_configs must not be empty"));
            }
            let mut names = HashSet::new();
            for a in &sweep.arrival_configs {
                if !names.insert(a.name.as_str()) {
                    return Err(config_err(format!("duplicate arrival config name {:?}", a.name)));
                }
            }
        }
        if let Some(v) = &c.verify {
            check_seeds(&v.seeds, "verify.seeds")?;
            if v.cases.is_empty() {
                return Err(config_err("verify.cases must not be empty"));
            }
            if v.tolerance.is_nan() || v.tolerance <= 0.0 {
                return Err(config_err("verify.tolerance must be positive"));
            }
        }
        if let Some(e) = &c.evaluate {
            if e.cases.is_empty() {
                return Err(config_err("evaluate.cases must not be empty"));
            }
        }
        if let Some(s) = &c.stability {
            check_seeds(&s.seeds, "stability.seeds")?;
            if s.configs.is_empty() && s.sweep.is_none() {
                return Err(config_err("stability needs configs or a sweep"));
            }
        }
        Ok(())
    }

    pub fn system(&self) -> Result<SystemParams> {
        let raw = self.config.system.as_ref().ok_or_else(|| config_err("missing [system] table"))?;
        Ok(validate_params(raw)?)
    }

    pub fn section<'a, T>(&self, s: &'a Option<T>, name: &str) -> Result<&'a T> {
        s.as_ref().ok_or_else(|| config_err(format!("missing [{name}] table")))
    }
}

fn check_seeds(seeds: &[u64], what: &str) -> Result<()> {
    if seeds.is_empty() {
        return Err(config_err(format!("{what} must not be empty")));
    }
    let mut seen = HashSet::new();
    for s in seeds {
        if !seen.insert(s) {
            return Err(config_err(format!("{what} contains duplicate seed {s}")));
        }
    }
    Ok(())
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl CaseSpec {
    /// System of this case, falling back to `default`.
    pub fn params(&self, default: Option<&RawParams>) -> Result<SystemParams> {
        let raw = self
            .system
            .as_ref()
            .or(default)
            .ok_or_else(|| config_err(format!("case {:?} has no system and there is no [system] table", self.name)))?;
        Ok(validate_params(raw)?)
    }

    pub fn key(&self, n_users: usize) -> Result<SubsetKey> {
        Ok(SubsetKey::from_labels(&self.subset, n_users)?)
    }

    /// Length-N scheduling distribution built from the per-member weights.
    /// A singleton subset may omit `pi`.
    pub fn schedule_dist(&self, n_users: usize) -> Result<Vec<f64>> {
        let key = self.key(n_users)?;
        let single = [1.0];
        let pi: &[f64] = match &self.pi {
            Some(pi) => pi,
            None if key.len() == 1 => &single,
            None => return Err(config_err(format!("randomized case {:?} needs pi", self.name))),
        };
        if pi.len() != key.len() {
            return Err(config_err(format!(
                "case {:?}: pi has {} entries for a subset of {} users",
                self.name,
                pi.len(),
                key.len()
            )));
        }
        let mut dist = vec![0.0; n_users];
        for (i, &w) in key.users().zip(pi) {
            dist[i] = w;
        }
        Ok(dist)
    }
}

impl StabilityConfig {
    pub fn params(&self) -> Result<SystemParams> {
        Ok(validate_params_allow_zero_arrivals(&self.system)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
id = "t"
[system]
n_users = 2
arrival_rates = [0.1, 0.2]
service_rates = [0.5, 0.9]
flip_prob = 0.4
post_busy_prob = 0.5
sampling_cost = 5.0
"#;

    #[test]
    fn minimal_config_parses() {
        let c = LoadedConfig::from_str(MINIMAL, PathBuf::new()).unwrap();
        assert_eq!(c.config.id, "t");
        assert_eq!(c.system().unwrap().n_users(), 2);
        assert_eq!(c.sha256.len(), 64);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let text = format!("{MINIMAL}\nbogus = 1\n");
        let err = LoadedConfig::from_str(&text, PathBuf::new()).unwrap_err();
        assert_eq!(err.exit_code(), 2);
        let text = MINIMAL.replace("sampling_cost", "samplng_cost");
        assert!(LoadedConfig::from_str(&text, PathBuf::new()).is_err());
    }

    #[test]
    fn duplicate_seeds_are_rejected() {
        let text = format!("{MINIMAL}\n[sim]\nseeds = [1, 2, 1]\n");
        assert!(matches!(LoadedConfig::from_str(&text, PathBuf::new()), Err(CliError::Config(_))));
    }

    #[test]
    fn missing_table_file_is_rejected() {
        let text = format!("{MINIMAL}\n[policy]\ntable = \"/nonexistent/policy.json\"\n");
        assert!(matches!(LoadedConfig::from_str(&text, PathBuf::new()), Err(CliError::Config(_))));
    }

    #[test]
    fn empty_sweep_grid_is_rejected() {
        let text = format!("{MINIMAL}\n[sweep]\nparam = \"flip_prob\"\nvalues = []\narrival_configs = []\n");
        assert!(LoadedConfig::from_str(&text, PathBuf::new()).is_err());
    }
}
