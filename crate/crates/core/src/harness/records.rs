//! CSV artifacts. Each file starts with a `# healrl-<kind> v<N>` line
//! followed by a header row.
//!
//! | file            | columns |
//! |-----------------|---------|
//! | `runs.csv`      | method, env, drift_id, seed, adapted, episodes, wall_time_s, final_avg_reward, agent, pre_heal_avg_reward, forgotten_neurons, base_solved, heal_seed, error |
//! | `curves.csv`    | method, env, agent, drift_id, seed, episode, reward |
//! | `summary.csv`   | env, agent, pairs, then per metric `<m>_drdrl_mean, <m>_cl_mean, <m>_ratio_pct, <m>_p_value, <m>_test_note, <m>_a12, <m>_magnitude`, then both, drdrl_only, cl_only, neither, ar_drdrl, ar_cl |
//! | `quadrants.csv` | env, agent, scenario, count, percent |
//! | `failures.csv`  | env, agent, seed, message |
//!
//! `seed` is the seed index within a cell; `all` in env/agent marks the
//! overall summary. Reals are written in shortest round-trip form, so
//! re-reading reproduces them exactly; empty cells are missing values.

use std::path::Path;
use std::str::FromStr;

use super::{CellFailure, ComparisonSummary, Metric, MetricSummary, PairOutcome, QuadrantCounts};
use crate::agents::AgentKind;
use crate::envs::EnvKind;
use crate::error::{Error, Result};
use crate::healing::{HealMethod, HealingReport};

pub const RUNS_VERSION: u32 = 1;
pub const CURVES_VERSION: u32 = 1;
pub const SUMMARY_VERSION: u32 = 1;
pub const QUADRANTS_VERSION: u32 = 1;
pub const FAILURES_VERSION: u32 = 1;

pub const RUNS_HEADER: &[&str] = &[
    "method",
    "env",
    "drift_id",
    "seed",
    "adapted",
    "episodes",
    "wall_time_s",
    "final_avg_reward",
    "agent",
    "pre_heal_avg_reward",
    "forgotten_neurons",
    "base_solved",
    "heal_seed",
    "error",
];

/// One healing run, as stored in `runs.csv`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub method: HealMethod,
    pub env: EnvKind,
    pub drift_id: usize,
    pub seed: usize,
    pub adapted: bool,
    pub episodes: usize,
    pub wall_time_s: f64,
    pub final_avg_reward: f64,
    pub agent: AgentKind,
    pub pre_heal_avg_reward: f64,
    pub forgotten_neurons: usize,
    pub base_solved: bool,
    pub heal_seed: u64,
    pub error: Option<String>,
}

impl RunRow {
    fn from_report(p: &PairOutcome, r: &HealingReport) -> Self {
        Self {
            method: r.method,
            env: p.key.env,
            drift_id: p.key.drift_id,
            seed: p.key.seed_index,
            adapted: r.adapted,
            episodes: r.fine_tune_episodes,
            wall_time_s: r.wall_time_seconds,
            final_avg_reward: r.final_avg_reward,
            agent: p.key.agent,
            pre_heal_avg_reward: r.pre_heal_reward,
            forgotten_neurons: r.forgotten_neurons,
            base_solved: p.base_solved,
            heal_seed: r.seed,
            error: r.error.clone(),
        }
    }
}

/// Two rows per pair: drdrl then vanilla_cl.
pub fn run_rows(pairs: &[PairOutcome]) -> Vec<RunRow> {
    pairs
        .iter()
        .flat_map(|p| [RunRow::from_report(p, &p.drdrl), RunRow::from_report(p, &p.cl)])
        .collect()
}

fn real(v: f64) -> String {
    format!("{v:?}")
}

fn opt_real(v: Option<f64>) -> String {
    v.map(real).unwrap_or_default()
}

fn writer(path: &Path, kind: &str, version: u32, header: &[String]) -> Result<csv::Writer<std::fs::File>> {
    use std::io::Write;
    let mut f = std::fs::File::create(path)?;
    writeln!(f, "# healrl-{kind} v{version}")?;
    let mut w = csv::Writer::from_writer(f);
    w.write_record(header)?;
    Ok(w)
}

/// Reads a versioned CSV: checks the banner and header, returns the rows.
fn read_table(path: &Path, kind: &str, version: u32, header: &[String]) -> Result<Vec<csv::StringRecord>> {
    let text = std::fs::read_to_string(path)?;
    let (banner, body) = text.split_once('\n').unwrap_or((&text, ""));
    let prefix = format!("# healrl-{kind} v");
    let found: u32 = banner
        .trim_end()
        .strip_prefix(&prefix)
        .and_then(|v| v.parse().ok())
        .ok_or_else(|| Error::Corrupt(format!("{}: missing `{prefix}N` banner", path.display())))?;
    if found == 0 || found > version {
        return Err(Error::Version { found, supported: version });
    }
    let mut r = csv::ReaderBuilder::new().has_headers(true).from_reader(body.as_bytes());
    let got: Vec<String> = r.headers()?.iter().map(String::from).collect();
    if got != header {
        return Err(Error::Schema(format!("{}: unexpected header {got:?}", path.display())));
    }
    let rows: std::result::Result<Vec<_>, _> = r.records().collect();
    Ok(rows?)
}

struct Fields<'a> {
    rec: &'a csv::StringRecord,
    at: usize,
}

impl<'a> Fields<'a> {
    fn new(rec: &'a csv::StringRecord) -> Self {
        Self { rec, at: 0 }
    }

    fn raw(&mut self) -> &'a str {
        let v = self.rec.get(self.at).unwrap_or_default();
        self.at += 1;
        v
    }

    fn parse<T: FromStr>(&mut self) -> Result<T> {
        let col = self.at;
        let v = self.raw();
        v.parse().map_err(|_| Error::Corrupt(format!("column {col}: cannot parse `{v}`")))
    }

    fn opt<T: FromStr>(&mut self) -> Result<Option<T>> {
        if self.rec.get(self.at).unwrap_or_default().is_empty() {
            self.at += 1;
            return Ok(None);
        }
        self.parse().map(Some)
    }

    fn opt_string(&mut self) -> Option<String> {
        let v = self.raw();
        (!v.is_empty()).then(|| v.to_string())
    }
}

fn strings(h: &[&str]) -> Vec<String> {
    h.iter().map(|s| s.to_string()).collect()
}

pub fn write_runs(path: &Path, rows: &[RunRow]) -> Result<()> {
    let mut w = writer(path, "runs", RUNS_VERSION, &strings(RUNS_HEADER))?;
    for r in rows {
        w.write_record([
            r.method.name().to_string(),
            r.env.name().to_string(),
            r.drift_id.to_string(),
            r.seed.to_string(),
            r.adapted.to_string(),
            r.episodes.to_string(),
            real(r.wall_time_s),
            real(r.final_avg_reward),
            r.agent.name().to_string(),
            real(r.pre_heal_avg_reward),
            r.forgotten_neurons.to_string(),
            r.base_solved.to_string(),
            r.heal_seed.to_string(),
            r.error.clone().unwrap_or_default(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_runs(path: &Path) -> Result<Vec<RunRow>> {
    read_table(path, "runs", RUNS_VERSION, &strings(RUNS_HEADER))?
        .iter()
        .map(|rec| {
            let mut f = Fields::new(rec);
            Ok(RunRow {
                method: f.parse()?,
                env: f.parse()?,
                drift_id: f.parse()?,
                seed: f.parse()?,
                adapted: f.parse()?,
                episodes: f.parse()?,
                wall_time_s: f.parse()?,
                final_avg_reward: f.parse()?,
                agent: f.parse()?,
                pre_heal_avg_reward: f.parse()?,
                forgotten_neurons: f.parse()?,
                base_solved: f.parse()?,
                heal_seed: f.parse()?,
                error: f.opt_string(),
            })
        })
        .collect()
}

pub const CURVES_HEADER: &[&str] = &["method", "env", "agent", "drift_id", "seed", "episode", "reward"];

pub fn write_curves(path: &Path, pairs: &[PairOutcome]) -> Result<()> {
    let mut w = writer(path, "curves", CURVES_VERSION, &strings(CURVES_HEADER))?;
    for p in pairs {
        for r in [&p.drdrl, &p.cl] {
            for (i, v) in r.reward_curve.iter().enumerate() {
                w.write_record([
                    r.method.name().to_string(),
                    p.key.env.name().to_string(),
                    p.key.agent.name().to_string(),
                    p.key.drift_id.to_string(),
                    p.key.seed_index.to_string(),
                    (i + 1).to_string(),
                    real(*v),
                ])?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

fn summary_header() -> Vec<String> {
    let mut h = strings(&["env", "agent", "pairs"]);
    for m in Metric::ALL {
        for col in ["drdrl_mean", "cl_mean", "ratio_pct", "p_value", "test_note", "a12", "magnitude"] {
            h.push(format!("{}_{col}", m.name()));
        }
    }
    h.extend(strings(&["both", "drdrl_only", "cl_only", "neither", "ar_drdrl", "ar_cl"]));
    h
}

fn group_name<T: ToString>(v: Option<T>) -> String {
    v.map_or_else(|| "all".to_string(), |v| v.to_string())
}

fn parse_group<T: FromStr<Err = Error>>(s: &str) -> Result<Option<T>> {
    if s == "all" {
        Ok(None)
    } else {
        s.parse().map(Some)
    }
}

pub fn write_summaries(path: &Path, summaries: &[ComparisonSummary]) -> Result<()> {
    let mut w = writer(path, "summary", SUMMARY_VERSION, &summary_header())?;
    for s in summaries {
        let mut rec = vec![group_name(s.env), group_name(s.agent), s.pairs.to_string()];
        for m in &s.metrics {
            rec.extend([
                real(m.drdrl_mean),
                real(m.cl_mean),
                opt_real(m.ratio),
                opt_real(m.p_value),
                m.test_note.clone().unwrap_or_default(),
                opt_real(m.a12),
                m.magnitude.map(|g| g.name().to_string()).unwrap_or_default(),
            ]);
        }
        let q = s.quadrants;
        rec.extend([
            q.both.to_string(),
            q.drdrl_only.to_string(),
            q.cl_only.to_string(),
            q.neither.to_string(),
            real(s.ar_drdrl),
            real(s.ar_cl),
        ]);
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_summaries(path: &Path) -> Result<Vec<ComparisonSummary>> {
    read_table(path, "summary", SUMMARY_VERSION, &summary_header())?
        .iter()
        .map(|rec| {
            let mut f = Fields::new(rec);
            let env = parse_group(f.raw())?;
            let agent = parse_group(f.raw())?;
            let pairs = f.parse()?;
            let metrics = Metric::ALL
                .iter()
                .map(|&metric| {
                    Ok(MetricSummary {
                        metric,
                        drdrl_mean: f.parse()?,
                        cl_mean: f.parse()?,
                        ratio: f.opt()?,
                        p_value: f.opt()?,
                        test_note: f.opt_string(),
                        a12: f.opt()?,
                        magnitude: f.opt()?,
                    })
                })
                .collect::<Result<Vec<_>>>()?;
            let quadrants = QuadrantCounts {
                both: f.parse()?,
                drdrl_only: f.parse()?,
                cl_only: f.parse()?,
                neither: f.parse()?,
            };
            Ok(ComparisonSummary { env, agent, pairs, metrics, quadrants, ar_drdrl: f.parse()?, ar_cl: f.parse()? })
        })
        .collect()
}

pub const QUADRANTS_HEADER: &[&str] = &["env", "agent", "scenario", "count", "percent"];

/// Pie-chart data: one row per scenario of every summary.
pub fn write_quadrants(path: &Path, summaries: &[ComparisonSummary]) -> Result<()> {
    let mut w = writer(path, "quadrants", QUADRANTS_VERSION, &strings(QUADRANTS_HEADER))?;
    for s in summaries {
        let q = s.quadrants;
        let total = q.total() as f64;
        for (name, count) in [("both", q.both), ("drdrl_only", q.drdrl_only), ("cl_only", q.cl_only), ("neither", q.neither)] {
            w.write_record([
                group_name(s.env),
                group_name(s.agent),
                name.to_string(),
                count.to_string(),
                real(count as f64 / total * 100.0),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub const FAILURES_HEADER: &[&str] = &["env", "agent", "seed", "message"];

pub fn write_failures(path: &Path, failures: &[CellFailure]) -> Result<()> {
    let mut w = writer(path, "failures", FAILURES_VERSION, &strings(FAILURES_HEADER))?;
    for c in failures {
        w.write_record([
            c.key.env.name().to_string(),
            c.key.agent.name().to_string(),
            c.key.seed_index.to_string(),
            c.message.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}
