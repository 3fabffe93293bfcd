//! Scenario generation, episode orchestration, metrics and persistence.

mod agent;
mod episode;
mod generate;

use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::judge::{JudgeError, RoundEvent, RoundRecord};
use crate::oracle::OracleError;
use crate::world::{Scenario, WorldError};
use crate::Config;

pub(crate) use agent::{Agent, Explored};
pub use episode::{interactive_session, run_episode, user_seed};
pub use generate::{generate_scenarios, goal_attributes, GeneratorConfig, SuiteKind};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("infeasible generator config: {0}")]
    Infeasible(String),
    #[error("strategy {0:?} does not run in mode {1:?}")]
    InvalidCombination(Strategy, Mode),
    #[error(transparent)]
    World(#[from] WorldError),
    #[error(transparent)]
    Judge(#[from] JudgeError),
    #[error(transparent)]
    Oracle(#[from] OracleError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("thread pool: {0}")]
    Pool(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HarnessConfig {
    /// Worker threads; 0 uses every core, 1 runs serially.
    pub jobs: usize,
    /// Mixed into every simulated user's seed.
    pub seed: u64,
}

impl Default for HarnessConfig {
    fn default() -> Self {
        Self { jobs: 0, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Strategy {
    Comparative,
    Independent,
    Pooled,
}

impl Strategy {
    pub fn name(self) -> &'static str {
        match self {
            Strategy::Comparative => "comparative",
            Strategy::Independent => "independent",
            Strategy::Pooled => "pooled",
        }
    }
}

impl std::str::FromStr for Strategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "comparative" => Ok(Strategy::Comparative),
            "independent" => Ok(Strategy::Independent),
            "pooled" => Ok(Strategy::Pooled),
            other => Err(format!("unknown strategy '{other}'")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    InteractiveSim,
    Textnav,
}

impl std::str::FromStr for Mode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s.trim() {
            "interactive-sim" | "coin" => Ok(Mode::InteractiveSim),
            "textnav" => Ok(Mode::Textnav),
            other => Err(format!("unknown mode '{other}'")),
        }
    }
}

/// Episode constants a mode fixes.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ModePreset {
    pub horizon: usize,
    pub fallback_step: usize,
    /// `None` when questions are disabled.
    pub budget: Option<usize>,
}

impl Mode {
    pub fn preset(self) -> ModePreset {
        match self {
            Mode::InteractiveSim => ModePreset {
                horizon: 500,
                fallback_step: 400,
                budget: Some(4),
            },
            Mode::Textnav => ModePreset {
                horizon: 1000,
                fallback_step: 600,
                budget: None,
            },
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    Stop,
    Horizon,
}

/// Wall-clock seconds per stage. Not persisted: it varies run to run.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct StageTimes {
    pub explore: f64,
    pub judge: f64,
    pub navigate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpisodeResult {
    pub scenario_id: String,
    pub strategy: Strategy,
    pub success: bool,
    /// p, meters.
    pub agent_path_length: f64,
    /// l, meters.
    pub shortest_path_length: f64,
    pub questions: usize,
    pub response_tokens: usize,
    pub steps: usize,
    pub termination: Termination,
    #[serde(skip)]
    pub wall_times: StageTimes,
}

/// One question-free re-exploration and what it admitted.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Reexploration {
    /// Event of the round that triggered it, if any round ran.
    pub trigger: Option<RoundEvent>,
    pub added: Vec<usize>,
    pub survivors: Vec<usize>,
    pub target_added: bool,
    pub target_survived: bool,
}

/// Accept/reject verification of one candidate (non-interactive mode).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Verification {
    pub candidate: usize,
    pub accepted: bool,
    /// Ground truth: the candidate's instance lacks some goal pair.
    pub missing_goal: bool,
}

/// Evaluation-side record of an episode. Candidate-to-instance links come
/// from ground truth and are never seen by the strategies.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub initial_pool: Vec<usize>,
    pub target_in_initial_pool: bool,
    pub target_in_pool: bool,
    pub chosen: Option<usize>,
    pub chosen_is_target: bool,
    pub rounds: Vec<RoundRecord>,
    pub reexplorations: Vec<Reexploration>,
    pub verifications: Vec<Verification>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpisodeOutput {
    pub result: EpisodeResult,
    pub trace: EpisodeTrace,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    /// Percent.
    pub sr: f64,
    /// Percent.
    pub spl: f64,
    pub rl_mean: f64,
    pub nq_mean: f64,
    pub episodes: usize,
}

/// SPL in percent: (100 / N) sum of success * l / max(p, l).
pub fn compute_spl(results: &[EpisodeResult]) -> f64 {
    if results.is_empty() {
        return 0.0;
    }
    let total: f64 = results
        .iter()
        .filter(|r| r.success)
        .map(|r| {
            let denom = r.agent_path_length.max(r.shortest_path_length);
            if denom > 0.0 {
                r.shortest_path_length / denom
            } else {
                1.0
            }
        })
        .sum();
    100.0 * total / results.len() as f64
}

/// SR, SPL, RL and NQ averaged over every episode.
pub fn aggregate(results: &[EpisodeResult]) -> Metrics {
    let n = results.len();
    let mean = |f: &dyn Fn(&EpisodeResult) -> f64| {
        if n == 0 {
            0.0
        } else {
            results.iter().map(f).sum::<f64>() / n as f64
        }
    };
    Metrics {
        sr: 100.0 * mean(&|r| r.success as u8 as f64),
        spl: compute_spl(results),
        rl_mean: mean(&|r| r.response_tokens as f64),
        nq_mean: mean(&|r| r.questions as f64),
        episodes: n,
    }
}

/// Suite name of a generated scenario id (`partial-0007` -> `partial`).
pub fn suite_of(scenario_id: &str) -> &str {
    scenario_id.rsplit_once('-').map_or(scenario_id, |(s, _)| s)
}

pub const RESULTS_FILE: &str = "results.jsonl";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const TRANSCRIPTS_FILE: &str = "transcripts.jsonl";

/// Writes `results.jsonl` and `summary.csv` (one row per strategy and
/// suite, in first-seen order) into `dir`.
pub fn write_results(results: &[EpisodeResult], dir: &Path) -> Result<(), HarnessError> {
    fs::create_dir_all(dir)?;
    let mut out = BufWriter::new(File::create(dir.join(RESULTS_FILE))?);
    for r in results {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    out.flush()?;

    let mut groups: Vec<((Strategy, String), Vec<EpisodeResult>)> = Vec::new();
    for r in results {
        let key = (r.strategy, suite_of(&r.scenario_id).to_owned());
        match groups.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r.clone()),
            None => groups.push((key, vec![r.clone()])),
        }
    }
    let mut csv = csv::Writer::from_path(dir.join(SUMMARY_FILE))?;
    csv.write_record(["strategy", "suite", "episodes", "SR", "SPL", "RL", "NQ"])?;
    for ((strategy, suite), rs) in &groups {
        let m = aggregate(rs);
        csv.write_record([
            strategy.name().to_owned(),
            suite.clone(),
            m.episodes.to_string(),
            format!("{:.1}", m.sr),
            format!("{:.1}", m.spl),
            format!("{:.1}", m.rl_mean),
            format!("{:.2}", m.nq_mean),
        ])?;
    }
    csv.flush()?;
    Ok(())
}

pub fn read_results(path: &Path) -> Result<Vec<EpisodeResult>, HarnessError> {
    let mut out = Vec::new();
    for line in BufReader::new(File::open(path)?).lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, Serialize)]
struct TranscriptLine<'a> {
    scenario_id: &'a str,
    strategy: Strategy,
    #[serde(flatten)]
    round: &'a RoundRecord,
}

fn write_transcripts(outputs: &[EpisodeOutput], dir: &Path) -> Result<(), HarnessError> {
    let mut out = BufWriter::new(File::create(dir.join(TRANSCRIPTS_FILE))?);
    for o in outputs {
        for round in &o.trace.rounds {
            let line = TranscriptLine {
                scenario_id: &o.result.scenario_id,
                strategy: o.result.strategy,
                round,
            };
            serde_json::to_writer(&mut out, &line)?;
            out.write_all(b"\n")?;
        }
    }
    out.flush()?;
    Ok(())
}

#[derive(Debug, Clone)]
pub struct BenchmarkOutput {
    /// Strategy-major, scenario order within a strategy.
    pub outputs: Vec<EpisodeOutput>,
    pub metrics: Vec<(Strategy, Metrics)>,
}

impl BenchmarkOutput {
    pub fn results(&self) -> Vec<EpisodeResult> {
        self.outputs.iter().map(|o| o.result.clone()).collect()
    }

    pub fn metrics_for(&self, s: Strategy) -> Option<Metrics> {
        self.metrics.iter().find(|(k, _)| *k == s).map(|(_, m)| *m)
    }
}

/// Runs every strategy on every scenario. Episodes run in parallel up to
/// `cfg.harness.jobs` workers; results keep input order regardless. With
/// `out` set, results, transcripts and the summary are written there, also
/// when an episode fails (the completed ones are kept).
pub fn run_benchmark(
    scenarios: &[Scenario],
    strategies: &[Strategy],
    mode: Mode,
    cfg: &Config,
    out: Option<&Path>,
) -> Result<BenchmarkOutput, HarnessError> {
    for &s in strategies {
        if s != Strategy::Comparative && mode != Mode::InteractiveSim {
            return Err(HarnessError::InvalidCombination(s, mode));
        }
    }
    let jobs: Vec<(Strategy, &Scenario)> = strategies
        .iter()
        .flat_map(|&s| scenarios.iter().map(move |sc| (s, sc)))
        .collect();
    let run = |&(s, sc): &(Strategy, &Scenario)| run_episode(sc, s, mode, cfg);
    let done: Vec<Result<EpisodeOutput, HarnessError>> = if cfg.harness.jobs == 1 {
        jobs.iter().map(run).collect()
    } else {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(cfg.harness.jobs)
            .build()
            .map_err(|e| HarnessError::Pool(e.to_string()))?;
        pool.install(|| jobs.par_iter().map(run).collect())
    };

    let mut outputs = Vec::with_capacity(done.len());
    let mut first_err = None;
    for d in done {
        match d {
            Ok(o) => outputs.push(o),
            Err(e) => {
                log::error!("episode failed: {e}");
                first_err.get_or_insert(e);
            }
        }
    }
    if let Some(dir) = out {
        let results: Vec<EpisodeResult> = outputs.iter().map(|o| o.result.clone()).collect();
        write_results(&results, dir)?;
        write_transcripts(&outputs, dir)?;
    }
    if let Some(e) = first_err {
        return Err(e);
    }
    let metrics = strategies
        .iter()
        .map(|&s| {
            let rs: Vec<EpisodeResult> = outputs
                .iter()
                .filter(|o| o.result.strategy == s)
                .map(|o| o.result.clone())
                .collect();
            (s, aggregate(&rs))
        })
        .collect();
    Ok(BenchmarkOutput { outputs, metrics })
}

#[cfg(test)]
mod tests;
