//! The TOML configuration file. Every key is optional; missing keys take
//! the defaults printed by [`documented_default`].

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{DriftRangeSet, ExperimentPlan, HealingConfigs, WilcoxonVariant};
use crate::agents::{AgentKind, DqnHyperparams, PpoHyperparams};
use crate::envs::{EnvKind, Intensity};
use crate::error::{Error, Result};
use crate::tracing::DEFAULT_SAMPLE_COUNT;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TraceConfig {
    pub sample_count: usize,
}

impl Default for TraceConfig {
    fn default() -> Self {
        Self { sample_count: DEFAULT_SAMPLE_COUNT }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftConfig {
    pub intensity: Intensity,
    pub count: usize,
    pub ranges: DriftRangeSet,
}

impl Default for DriftConfig {
    fn default() -> Self {
        Self { intensity: Intensity::Moderate, count: 6, ranges: DriftRangeSet::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub envs: Vec<EnvKind>,
    pub agents: Vec<AgentKind>,
    pub seeds: usize,
    pub heal_budget: Option<usize>,
    pub workers: usize,
    pub wilcoxon: WilcoxonVariant,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            envs: EnvKind::ALL.to_vec(),
            agents: AgentKind::ALL.to_vec(),
            seeds: 10,
            heal_budget: None,
            workers: 0,
            wilcoxon: WilcoxonVariant::RankSum,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub seed: u64,
    pub dqn: DqnHyperparams,
    pub ppo: PpoHyperparams,
    pub trace: TraceConfig,
    pub drift: DriftConfig,
    pub healing: HealingConfigs,
    pub experiment: ExperimentConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            seed: 0,
            dqn: DqnHyperparams::default(),
            ppo: PpoHyperparams::default(),
            trace: TraceConfig::default(),
            drift: DriftConfig::default(),
            healing: HealingConfigs::default(),
            experiment: ExperimentConfig::default(),
        }
    }
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let c: Config = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        c.validate()?;
        Ok(c)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        if self.seed > crate::seed::MAX_SEED {
            return Err(Error::Config(format!("seed must not exceed {}", crate::seed::MAX_SEED)));
        }
        self.plan().validate()
    }

    pub fn plan(&self) -> ExperimentPlan {
        ExperimentPlan {
            envs: self.experiment.envs.clone(),
            agents: self.experiment.agents.clone(),
            seeds: self.experiment.seeds,
            drifts: self.drift.count,
            intensity: self.drift.intensity,
            drift_ranges: self.drift.ranges.clone(),
            heal_budget: self.experiment.heal_budget,
            healing: self.healing.clone(),
            dqn: self.dqn.clone(),
            ppo: self.ppo.clone(),
            trace_samples: self.trace.sample_count,
            base_seed: self.seed,
            workers: self.experiment.workers,
            wilcoxon: self.experiment.wilcoxon,
        }
    }
}

/// `(table, key, description)` for every key of the file.
const DOCS: &[(&str, &str, &str)] = &[
    ("", "seed", "Root seed; every other seed is derived from it."),
    ("dqn", "replay_capacity", "Replay memory size in transitions."),
    ("dqn", "batch_size", "Minibatch size per gradient step."),
    ("dqn", "target_update_interval_steps", "Environment steps between target network syncs."),
    ("dqn", "discount", "Discount factor."),
    ("dqn", "epsilon_start", "Initial exploration rate."),
    ("dqn", "epsilon_end", "Final exploration rate."),
    ("dqn", "epsilon_anneal_steps", "Steps over which exploration decays linearly."),
    ("dqn", "learning_rate", "Adam step size."),
    ("dqn", "max_train_episodes", "Training budget in episodes."),
    ("dqn", "warmup_steps", "Transitions collected before learning starts."),
    ("dqn", "hidden", "Hidden layer widths (ReLU)."),
    ("dqn", "max_grad_norm", "Global gradient norm clip; 0 disables clipping."),
    ("dqn", "eval_interval", "Episodes between solve checks."),
    ("ppo", "clip_ratio", "Surrogate clipping range."),
    ("ppo", "discount", "Discount factor."),
    ("ppo", "gae_lambda", "Advantage estimation smoothing."),
    ("ppo", "rollout_steps", "Transitions collected per update."),
    ("ppo", "epochs_per_update", "Passes over each rollout."),
    ("ppo", "minibatch_size", "Minibatch size within an epoch."),
    ("ppo", "entropy_coef", "Entropy bonus weight."),
    ("ppo", "value_coef", "Value loss weight."),
    ("ppo", "learning_rate", "Adam step size for both networks."),
    ("ppo", "max_train_episodes", "Training budget in episodes."),
    ("ppo", "hidden", "Hidden layer widths (ReLU) of both networks."),
    ("ppo", "max_grad_norm", "Global gradient norm clip; 0 disables clipping."),
    ("ppo", "eval_interval", "Episodes between solve checks."),
    ("trace", "sample_count", "Observations collected for activation traces."),
    ("drift", "intensity", "Drift band: mild, moderate or severe."),
    ("drift", "count", "Drifts sampled per environment."),
    ("drift.ranges.*", "*", "Sampling range [lo, hi] of a drifted parameter."),
    ("healing.*", "forget_rate", "Percentage of each hidden layer to forget."),
    ("healing.*", "scale_rate", "Scale of re-initialized weights, in (0, 1]."),
    ("healing.*", "max_heal_episodes", "Fine-tuning budget in episodes."),
    ("healing.*", "dqn_epsilon_start", "Exploration rate at heal start (dqn)."),
    ("healing.*", "dqn_epsilon_end", "Exploration floor while healing (dqn)."),
    (
        "healing.*",
        "dqn_epsilon_anneal_episodes",
        "Episodes of exploration decay (dqn); half the budget when absent.",
    ),
    ("healing.*", "ppo_entropy_coef", "Entropy bonus while healing (ppo)."),
    ("healing.*", "reload_replay", "Fine-tune on top of the training replay memory (dqn)."),
    ("healing.*", "eval_window", "Episodes per adaptation check."),
    ("healing.*", "eval_interval", "Episodes between adaptation checks."),
    ("healing.*", "use_tolerance", "Accept rewards within the environment's tolerance."),
    ("healing.*", "reset_outgoing", "Also re-initialize forgotten neurons' outgoing weights."),
    ("experiment", "envs", "Environments in the comparison matrix."),
    ("experiment", "agents", "Agent kinds in the comparison matrix."),
    ("experiment", "seeds", "Trained agents per (env, agent) cell."),
    ("experiment", "heal_budget", "Overrides every max_heal_episodes when set."),
    ("experiment", "workers", "Parallel cells; 0 uses every core."),
    ("experiment", "wilcoxon", "rank_sum (independent runs) or signed_rank (matched seeds)."),
];

/// Optional keys absent from the serialized defaults, shown commented out.
const COMMENTED: &[(&str, &str)] = &[
    ("healing.*", "# dqn_epsilon_anneal_episodes = 500"),
    ("experiment", "# heal_budget = 200"),
];

fn doc_for(table: &str, key: &str) -> Option<&'static str> {
    DOCS.iter()
        .find(|(t, k, _)| {
            let table_ok = match t.strip_suffix(".*") {
                Some(prefix) => table.strip_prefix(prefix).is_some_and(|rest| rest.starts_with('.')),
                None => *t == table,
            };
            table_ok && (*k == "*" || *k == key)
        })
        .map(|(_, _, d)| *d)
}

fn matches_table(pattern: &str, table: &str) -> bool {
    match pattern.strip_suffix(".*") {
        Some(prefix) => table.strip_prefix(prefix).is_some_and(|rest| rest.starts_with('.')),
        None => pattern == table,
    }
}

/// The default configuration with a comment above every key.
pub fn documented_default() -> String {
    let text = Config::default().to_toml().expect("defaults serialize");
    let mut out = String::from("# healrl configuration. Every key is optional.\n");
    let mut table = String::new();
    let flush_commented = |table: &str, out: &mut String| {
        for (pattern, line) in COMMENTED {
            if matches_table(pattern, table) {
                let key = line.trim_start_matches("# ").split(' ').next().unwrap_or_default();
                if let Some(doc) = doc_for(table, key) {
                    out.push_str(&format!("# {doc}\n"));
                }
                out.push_str(line);
                out.push('\n');
            }
        }
    };
    for line in text.lines() {
        let trimmed = line.trim();
        if let Some(name) = trimmed.strip_prefix('[').and_then(|s| s.strip_suffix(']')) {
            flush_commented(&table, &mut out);
            table = name.to_string();
            out.push_str(line);
            out.push('\n');
            continue;
        }
        if let Some((key, _)) = trimmed.split_once(" = ") {
            if let Some(doc) = doc_for(&table, key.trim_matches('"')) {
                out.push_str(&format!("# {doc}\n"));
            }
        }
        out.push_str(line);
        out.push('\n');
    }
    flush_commented(&table, &mut out);
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_default_parses_to_defaults() {
        let text = documented_default();
        assert_eq!(Config::from_toml(&text).unwrap(), Config::default());
        // Every key line is preceded by a comment.
        let lines: Vec<&str> = text.lines().collect();
        for (i, l) in lines.iter().enumerate() {
            if l.contains(" = ") && !l.starts_with('#') {
                assert!(lines[i - 1].starts_with('#'), "undocumented key: {l}");
            }
        }
        assert!(text.contains("[healing.mountain_car]"));
        assert!(text.contains("# dqn_epsilon_anneal_episodes = 500"));
    }

    #[test]
    fn partial_files_fill_defaults() {
        let c = Config::from_toml("seed = 7\n[healing.cartpole]\nforget_rate = 20.0\n[experiment]\nseeds = 3\n").unwrap();
        assert_eq!(c.seed, 7);
        assert_eq!(c.healing.cartpole.forget_rate, 20.0);
        assert_eq!(c.healing.cartpole.scale_rate, 0.1);
        assert_eq!(c.healing.acrobot.scale_rate, 1e-4);
        assert_eq!(c.experiment.seeds, 3);
        assert_eq!(c.dqn, DqnHyperparams::default());
        assert_eq!(Config::from_toml("").unwrap(), Config::default());
    }

    #[test]
    fn bad_files_are_rejected() {
        assert!(matches!(Config::from_toml("sed = 1"), Err(Error::Config(_))));
        assert!(Config::from_toml("[healing.cartpole]\nscale_rate = 0.0").is_err());
        assert!(Config::from_toml("[experiment]\nseeds = 0").is_err());
        assert!(Config::from_toml("[drift]\nintensity = \"wild\"").is_err());
        assert!(Config::from_toml("[dqn]\nbatch_size = 0").is_err());
    }

    #[test]
    fn round_trip() {
        let mut c = Config::default();
        c.experiment.heal_budget = Some(50);
        c.healing.acrobot.dqn_epsilon_anneal_episodes = Some(9);
        c.dqn.max_grad_norm = None;
        assert_eq!(Config::from_toml(&c.to_toml().unwrap()).unwrap(), c);
        assert_eq!(c.plan().healing_config(EnvKind::Acrobot).max_heal_episodes, 50);
    }
}
