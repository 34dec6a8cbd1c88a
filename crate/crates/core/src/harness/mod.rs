//! Experiment orchestration: train agents, trace them, sample drifts, heal
//! with both methods, aggregate metrics and statistics, write CSV artifacts.

pub mod config;
pub mod metrics;
pub mod records;
pub mod report;
pub mod stats;

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::agents::{train_dqn, train_ppo, Agent, AgentKind, DqnHyperparams, PpoHyperparams};
use crate::envs::{sample_drifts, DriftRanges, DriftSpec, EnvKind, EnvSpec, Intensity};
use crate::error::{Error, Result};
use crate::healing::{heal_drdrl, heal_vanilla_cl, HealMethod, HealingConfig, HealingReport};
use crate::seed;
use crate::tracing::{collect_observations, compute_agent_trace, TraceSet};

pub use config::Config;
pub use metrics::{adaptability_ratio, decrease_ratio, increase_ratio};
pub use stats::{vargha_delaney_a12, wilcoxon_rank_sum, wilcoxon_signed_rank, Magnitude, TestResult, WilcoxonVariant};

/// Per-environment healing configurations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HealingConfigs {
    pub cartpole: HealingConfig,
    pub mountain_car: HealingConfig,
    pub acrobot: HealingConfig,
}

impl Default for HealingConfigs {
    fn default() -> Self {
        Self {
            cartpole: HealingConfig::for_env(EnvKind::CartPole),
            mountain_car: HealingConfig::for_env(EnvKind::MountainCar),
            acrobot: HealingConfig::for_env(EnvKind::Acrobot),
        }
    }
}

impl HealingConfigs {
    pub fn get(&self, kind: EnvKind) -> &HealingConfig {
        match kind {
            EnvKind::CartPole => &self.cartpole,
            EnvKind::MountainCar => &self.mountain_car,
            EnvKind::Acrobot => &self.acrobot,
        }
    }

    pub fn get_mut(&mut self, kind: EnvKind) -> &mut HealingConfig {
        match kind {
            EnvKind::CartPole => &mut self.cartpole,
            EnvKind::MountainCar => &mut self.mountain_car,
            EnvKind::Acrobot => &mut self.acrobot,
        }
    }
}

/// Per-environment drift sampling ranges.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DriftRangeSet {
    pub cartpole: DriftRanges,
    pub mountain_car: DriftRanges,
    pub acrobot: DriftRanges,
}

impl Default for DriftRangeSet {
    fn default() -> Self {
        Self {
            cartpole: DriftRanges::defaults(EnvKind::CartPole),
            mountain_car: DriftRanges::defaults(EnvKind::MountainCar),
            acrobot: DriftRanges::defaults(EnvKind::Acrobot),
        }
    }
}

impl DriftRangeSet {
    pub fn get(&self, kind: EnvKind) -> &DriftRanges {
        match kind {
            EnvKind::CartPole => &self.cartpole,
            EnvKind::MountainCar => &self.mountain_car,
            EnvKind::Acrobot => &self.acrobot,
        }
    }
}

/// A full comparison matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentPlan {
    pub envs: Vec<EnvKind>,
    pub agents: Vec<AgentKind>,
    /// Independently trained agents per (env, agent) cell.
    pub seeds: usize,
    /// Drifts per environment, shared by every seed.
    pub drifts: usize,
    pub intensity: Intensity,
    pub drift_ranges: DriftRangeSet,
    /// Overrides every config's `max_heal_episodes` when set.
    pub heal_budget: Option<usize>,
    pub healing: HealingConfigs,
    pub dqn: DqnHyperparams,
    pub ppo: PpoHyperparams,
    pub trace_samples: usize,
    pub base_seed: u64,
    /// Worker threads; 0 uses all cores.
    pub workers: usize,
    pub wilcoxon: WilcoxonVariant,
}

impl Default for ExperimentPlan {
    fn default() -> Self {
        Config::default().plan()
    }
}

impl ExperimentPlan {
    pub fn validate(&self) -> Result<()> {
        if self.envs.is_empty() || self.agents.is_empty() {
            return Err(Error::InvalidArgument("plan needs at least one env and one agent kind".into()));
        }
        if self.seeds == 0 || self.drifts == 0 {
            return Err(Error::InvalidArgument("plan needs seeds >= 1 and drifts >= 1".into()));
        }
        if self.trace_samples == 0 {
            return Err(Error::InvalidArgument("trace_samples must be at least 1".into()));
        }
        for &k in &self.envs {
            self.healing_config(k).validate()?;
        }
        self.dqn.validate()?;
        self.ppo.validate()
    }

    /// The healing config used for `kind`, with the budget override applied.
    pub fn healing_config(&self, kind: EnvKind) -> HealingConfig {
        let mut c = self.healing.get(kind).clone();
        if let Some(b) = self.heal_budget {
            c.max_heal_episodes = b;
        }
        c
    }

    /// The drifts every cell of `kind` is healed on.
    pub fn drifts_for(&self, kind: EnvKind) -> Result<Vec<DriftSpec>> {
        let spec = EnvSpec::new(kind);
        let s = seed::derive(self.base_seed, &format!("drifts-{kind}"));
        sample_drifts(kind, &spec.params, self.drift_ranges.get(kind), self.intensity, self.drifts, s)
    }

    fn cells(&self) -> Vec<CellKey> {
        let mut out = Vec::new();
        for &env in &self.envs {
            for &agent in &self.agents {
                for seed_index in 0..self.seeds {
                    out.push(CellKey { env, agent, seed_index });
                }
            }
        }
        out
    }
}

/// One trained agent: the unit of parallel work.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct CellKey {
    pub env: EnvKind,
    pub agent: AgentKind,
    pub seed_index: usize,
}

impl CellKey {
    pub fn seed(&self, base: u64) -> u64 {
        let group = seed::derive(base, &format!("cell-{}-{}", self.env, self.agent));
        seed::derive_indexed(group, "seed", self.seed_index as u64)
    }
}

/// Identifies an (agent, drifted environment) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct PairKey {
    pub env: EnvKind,
    pub agent: AgentKind,
    pub drift_id: usize,
    pub seed_index: usize,
}

/// Both methods' reports on one pair.
#[derive(Debug, Clone, PartialEq)]
pub struct PairOutcome {
    pub key: PairKey,
    /// Whether the agent solved its original environment after training.
    pub base_solved: bool,
    pub drdrl: HealingReport,
    pub cl: HealingReport,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CellFailure {
    pub key: CellKey,
    pub message: String,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuadrantCounts {
    pub both: usize,
    pub drdrl_only: usize,
    pub cl_only: usize,
    pub neither: usize,
}

impl QuadrantCounts {
    pub fn total(&self) -> usize {
        self.both + self.drdrl_only + self.cl_only + self.neither
    }

    pub fn add(&mut self, drdrl_adapted: bool, cl_adapted: bool) {
        match (drdrl_adapted, cl_adapted) {
            (true, true) => self.both += 1,
            (true, false) => self.drdrl_only += 1,
            (false, true) => self.cl_only += 1,
            (false, false) => self.neither += 1,
        }
    }

    pub fn ar_drdrl(&self) -> Result<f64> {
        adaptability_ratio(self.both + self.drdrl_only, self.total())
    }

    pub fn ar_cl(&self) -> Result<f64> {
        adaptability_ratio(self.both + self.cl_only, self.total())
    }
}

/// Partitions `(pair, method, adapted)` records by the two methods'
/// adapted flags. Every pair needs exactly one record per method.
pub fn quadrant_classify(records: &[(PairKey, HealMethod, bool)]) -> Result<QuadrantCounts> {
    let mut by_pair: BTreeMap<PairKey, [Option<bool>; 2]> = BTreeMap::new();
    for &(key, method, adapted) in records {
        let slot = &mut by_pair.entry(key).or_default()[method as usize];
        if slot.is_some() {
            return Err(Error::InvalidArgument(format!("duplicate {method} report for {key:?}")));
        }
        *slot = Some(adapted);
    }
    let mut counts = QuadrantCounts::default();
    for (key, [dr, cl]) in by_pair {
        match (dr, cl) {
            (Some(d), Some(c)) => counts.add(d, c),
            _ => return Err(Error::InvalidArgument(format!("missing counterpart report for {key:?}"))),
        }
    }
    Ok(counts)
}

pub fn quadrants_of(pairs: &[PairOutcome]) -> QuadrantCounts {
    let mut q = QuadrantCounts::default();
    for p in pairs {
        q.add(p.drdrl.adapted, p.cl.adapted);
    }
    q
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Episodes,
    WallTime,
    Reward,
}

impl Metric {
    pub const ALL: [Metric; 3] = [Metric::Episodes, Metric::WallTime, Metric::Reward];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Episodes => "episodes",
            Metric::WallTime => "wall_time",
            Metric::Reward => "reward",
        }
    }

    fn of(self, r: &HealingReport) -> f64 {
        match self {
            Metric::Episodes => r.fine_tune_episodes as f64,
            Metric::WallTime => r.wall_time_seconds,
            Metric::Reward => r.final_avg_reward,
        }
    }

    /// Episodes and time are costs (decrease ratio); reward is a gain
    /// (increase ratio).
    pub fn is_cost(self) -> bool {
        !matches!(self, Metric::Reward)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSummary {
    pub metric: Metric,
    pub drdrl_mean: f64,
    pub cl_mean: f64,
    /// %DR for costs, %IR for rewards; `None` when undefined.
    pub ratio: Option<f64>,
    pub p_value: Option<f64>,
    /// Why `p_value` is missing or degenerate.
    pub test_note: Option<String>,
    pub a12: Option<f64>,
    pub magnitude: Option<Magnitude>,
}

/// Aggregate comparison over a group of pairs; `env`/`agent` of `None`
/// mean all.
#[derive(Debug, Clone, PartialEq)]
pub struct ComparisonSummary {
    pub env: Option<EnvKind>,
    pub agent: Option<AgentKind>,
    pub pairs: usize,
    pub metrics: Vec<MetricSummary>,
    pub quadrants: QuadrantCounts,
    pub ar_drdrl: f64,
    pub ar_cl: f64,
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Summarizes a non-empty group of pairs.
pub fn summarize(
    env: Option<EnvKind>,
    agent: Option<AgentKind>,
    pairs: &[PairOutcome],
    variant: WilcoxonVariant,
) -> Result<ComparisonSummary> {
    if pairs.is_empty() {
        return Err(Error::InvalidArgument("cannot summarize zero pairs".into()));
    }
    let metrics = Metric::ALL
        .iter()
        .map(|&m| {
            let dr: Vec<f64> = pairs.iter().map(|p| m.of(&p.drdrl)).collect();
            let cl: Vec<f64> = pairs.iter().map(|p| m.of(&p.cl)).collect();
            let (dm, cm) = (mean(&dr), mean(&cl));
            let ratio = if m.is_cost() { decrease_ratio(cm, dm) } else { increase_ratio(dm, cm) }.ok();
            let (p_value, test_note) = match variant.run(&dr, &cl) {
                Ok(t) if t.degenerate => (Some(t.p_value), Some("degenerate".to_string())),
                Ok(t) => (Some(t.p_value), None),
                Err(e) => (None, Some(e.to_string())),
            };
            let (a12, magnitude) = match vargha_delaney_a12(&dr, &cl) {
                Ok((a, mag)) => (Some(a), Some(mag)),
                Err(_) => (None, None),
            };
            MetricSummary { metric: m, drdrl_mean: dm, cl_mean: cm, ratio, p_value, test_note, a12, magnitude }
        })
        .collect();
    let quadrants = quadrants_of(pairs);
    Ok(ComparisonSummary {
        env,
        agent,
        pairs: pairs.len(),
        metrics,
        ar_drdrl: quadrants.ar_drdrl()?,
        ar_cl: quadrants.ar_cl()?,
        quadrants,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    /// Sorted by pair key.
    pub pairs: Vec<PairOutcome>,
    pub failures: Vec<CellFailure>,
    /// One summary per (env, agent) group with pairs, then the overall one.
    pub summaries: Vec<ComparisonSummary>,
}

impl ExperimentResult {
    /// Writes `runs.csv`, `curves.csv`, `summary.csv`, `quadrants.csv` and
    /// `failures.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        records::write_runs(&dir.join("runs.csv"), &records::run_rows(&self.pairs))?;
        records::write_curves(&dir.join("curves.csv"), &self.pairs)?;
        records::write_summaries(&dir.join("summary.csv"), &self.summaries)?;
        records::write_quadrants(&dir.join("quadrants.csv"), &self.summaries)?;
        records::write_failures(&dir.join("failures.csv"), &self.failures)?;
        Ok(())
    }
}

/// Trains one cell's agent, traces it and heals it on every drift with
/// both methods.
pub fn run_cell(plan: &ExperimentPlan, key: CellKey, drifts: &[DriftSpec]) -> Result<Vec<PairOutcome>> {
    let spec = EnvSpec::new(key.env);
    let cell_seed = key.seed(plan.base_seed);
    let (agent, base_solved) = match key.agent {
        AgentKind::Dqn => {
            let (a, o, _) = train_dqn(&spec, &plan.dqn, cell_seed)?;
            (a, o.solved)
        }
        AgentKind::Ppo => {
            let (a, o) = train_ppo(&spec, &plan.ppo, cell_seed)?;
            (a, o.solved)
        }
    };
    if !base_solved {
        log::warn!("{key:?}: agent did not solve its original environment");
    }
    let obs = collect_observations(&agent, &spec, plan.trace_samples, seed::derive(cell_seed, "trace"))?;
    let traces = compute_agent_trace(&agent, &obs)?;
    let config = plan.healing_config(key.env);
    drifts
        .iter()
        .enumerate()
        .map(|(drift_id, drift)| {
            let drifted = drift.apply(&spec)?;
            let heal_seed = seed::derive_indexed(cell_seed, "heal", drift_id as u64);
            let (drdrl, cl) = heal_pair(&agent, &spec, &drifted, &traces, &config, heal_seed)?;
            Ok(PairOutcome {
                key: PairKey { env: key.env, agent: key.agent, drift_id, seed_index: key.seed_index },
                base_solved,
                drdrl,
                cl,
            })
        })
        .collect()
}

/// Heals copies of `agent` with both methods under the same seed.
pub fn heal_pair(
    agent: &Agent,
    original: &EnvSpec,
    drifted: &EnvSpec,
    traces: &TraceSet,
    config: &HealingConfig,
    seed: u64,
) -> Result<(HealingReport, HealingReport)> {
    let mut a = agent.clone();
    let drdrl = heal_drdrl(&mut a, original, drifted, traces, config, seed)?;
    let mut b = agent.clone();
    let cl = heal_vanilla_cl(&mut b, drifted, config, seed)?;
    Ok((drdrl, cl))
}

/// Runs `work` on every cell in parallel; an error or panic in one cell is
/// recorded and never affects the others. Output is sorted by cell key.
pub(crate) fn run_cells<F>(cells: &[CellKey], workers: usize, work: F) -> Result<Vec<(CellKey, std::result::Result<Vec<PairOutcome>, String>)>>
where
    F: Fn(CellKey) -> Result<Vec<PairOutcome>> + Sync,
{
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::State(format!("thread pool: {e}")))?;
    let mut out: Vec<_> = pool.install(|| {
        cells
            .par_iter()
            .map(|&key| {
                let r = match catch_unwind(AssertUnwindSafe(|| work(key))) {
                    Ok(Ok(pairs)) => Ok(pairs),
                    Ok(Err(e)) => Err(e.to_string()),
                    Err(panic) => Err(panic_message(panic)),
                };
                (key, r)
            })
            .collect()
    });
    out.sort_by_key(|(k, _)| *k);
    Ok(out)
}

fn panic_message(panic: Box<dyn std::any::Any + Send>) -> String {
    let msg = panic
        .downcast_ref::<&str>()
        .map(|s| s.to_string())
        .or_else(|| panic.downcast_ref::<String>().cloned())
        .unwrap_or_else(|| "unknown panic".into());
    format!("panic: {msg}")
}

/// Assembles sorted pairs, failures and summaries from per-cell results.
pub(crate) fn collect_results(
    cells: Vec<(CellKey, std::result::Result<Vec<PairOutcome>, String>)>,
    variant: WilcoxonVariant,
) -> Result<ExperimentResult> {
    let mut pairs = Vec::new();
    let mut failures = Vec::new();
    for (key, r) in cells {
        match r {
            Ok(p) => pairs.extend(p),
            Err(message) => failures.push(CellFailure { key, message }),
        }
    }
    pairs.sort_by_key(|p| p.key);
    let mut groups: BTreeMap<(EnvKind, AgentKind), Vec<PairOutcome>> = BTreeMap::new();
    for p in &pairs {
        groups.entry((p.key.env, p.key.agent)).or_default().push(p.clone());
    }
    let mut summaries = groups
        .iter()
        .map(|(&(e, a), ps)| summarize(Some(e), Some(a), ps, variant))
        .collect::<Result<Vec<_>>>()?;
    if !pairs.is_empty() {
        summaries.push(summarize(None, None, &pairs, variant)?);
    }
    Ok(ExperimentResult { pairs, failures, summaries })
}

/// Runs the whole plan. Cell failures are recorded in the result.
pub fn run_experiment(plan: &ExperimentPlan) -> Result<ExperimentResult> {
    plan.validate()?;
    let drifts: BTreeMap<EnvKind, Vec<DriftSpec>> =
        plan.envs.iter().map(|&k| Ok((k, plan.drifts_for(k)?))).collect::<Result<_>>()?;
    let cells = run_cells(&plan.cells(), plan.workers, |key| run_cell(plan, key, &drifts[&key.env]))?;
    collect_results(cells, plan.wilcoxon)
}
