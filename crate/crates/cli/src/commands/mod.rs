pub mod evaluate;
pub mod fig4;
pub mod optimize;
pub mod simulate;
pub mod stability;
pub mod verify;

use std::path::PathBuf;

use aojc_core::optimizer::{build_max_age_table, build_randomized_table};
use aojc_core::rng::derive;
use aojc_core::{AdaptivePolicy, SchedulerKind, SystemParams};
use rand::RngCore;

use crate::config::LoadedConfig;
use crate::error::{config_err, Result};
use crate::output::RunMeta;

/// Everything a command needs besides its own config section.
#[derive(Debug, Clone)]
pub struct Context {
    pub cfg: LoadedConfig,
    pub master_seed: u64,
    pub out_dir: PathBuf,
}

impl Context {
    /// `seed_override` wins over the seed in the config file.
    pub fn new(cfg: LoadedConfig, seed_override: Option<u64>, out_dir: PathBuf) -> Self {
        let master_seed = seed_override.unwrap_or(cfg.config.seed);
        Self { cfg, master_seed, out_dir }
    }

    pub fn meta(&self, command: &str) -> RunMeta {
        RunMeta::new(command, &self.cfg.config.id, &self.cfg.sha256, self.master_seed)
    }

    /// Simulation seed of replicate `replicate`.
    pub fn run_seed(&self, replicate: u64) -> u64 {
        run_seed(self.master_seed, replicate)
    }

    /// Policy table from the `[policy]` section: a stored table, a uniform
    /// table, or a freshly optimized one.
    pub fn policy_for(&self, params: &SystemParams) -> Result<AdaptivePolicy> {
        let section = self.cfg.config.policy.as_ref();
        let kind = section.and_then(|p| p.kind).unwrap_or(SchedulerKind::MaxAge);
        if let Some(path) = section.and_then(|p| p.table.as_ref()) {
            let text = std::fs::read_to_string(self.cfg.resolve(path))?;
            let table = AdaptivePolicy::from_json(&text)?;
            if section.and_then(|p| p.kind).is_some_and(|k| k != table.kind()) {
                return Err(config_err(format!(
                    "policy.kind is {kind} but the table at {} is {}",
                    path.display(),
                    table.kind()
                )));
            }
            return Ok(table);
        }
        if let Some(mu) = section.and_then(|p| p.uniform_mu) {
            return Ok(AdaptivePolicy::uniform(params.n_users(), kind, mu)?);
        }
        solve(params, kind, &self.cfg.config.optimizer)
    }
}

/// Mixes the master seed with a replicate index.
pub fn run_seed(master: u64, replicate: u64) -> u64 {
    const REPLICATE_STREAMS: u64 = 0x7265_706c_0000_0000;
    derive(master, REPLICATE_STREAMS ^ replicate).next_u64()
}

pub fn solve(
    params: &SystemParams,
    kind: SchedulerKind,
    settings: &aojc_core::optimizer::OptimizerSettings,
) -> Result<AdaptivePolicy> {
    Ok(match kind {
        SchedulerKind::AdaptiveRandomized => build_randomized_table(params, settings)?.policy,
        SchedulerKind::MaxAge => build_max_age_table(params, settings)?.policy,
    })
}

/// Files written by a command and the checks that failed.
#[derive(Debug, Default, Clone)]
pub struct Outcome {
    pub files: Vec<PathBuf>,
    pub failures: Vec<String>,
    pub notes: Vec<String>,
}
