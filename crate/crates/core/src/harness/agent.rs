//! Exploration, pool upkeep and navigation shared by every strategy.

use std::collections::BTreeMap;
use std::time::Instant;

use super::{EpisodeResult, HarnessError, ModePreset, StageTimes, Strategy, Termination};
use crate::explore::{Decision, ExplorePolicy, Goal};
use crate::pool::{pool_ready, CandidatePool};
use crate::world::{shortest_path_length, Action, Environment, Observation, Scenario};
use crate::Config;

/// Outcome of a single exploration step.
#[derive(Debug, Clone, PartialEq, Eq)]
pub(crate) enum Explored {
    /// Ids of candidates created by this step.
    Stepped(Vec<usize>),
    Exhausted,
    Terminated,
}

pub(crate) struct Agent<'a> {
    pub env: Environment<'a>,
    pub policy: ExplorePolicy,
    pub pool: CandidatePool,
    pub times: StageTimes,
    /// Candidate id -> instance index -> detections (evaluation only).
    sightings: BTreeMap<usize, BTreeMap<usize, usize>>,
}

impl<'a> Agent<'a> {
    /// Creates the agent and takes the first observation. Returns the
    /// candidates that observation created.
    pub fn new(scenario: &'a Scenario, cfg: &Config, preset: &ModePreset) -> (Self, Vec<usize>) {
        let range = cfg.world.sensing_range_m;
        let mut agent = Self {
            env: Environment::new(scenario, preset.horizon, range),
            policy: ExplorePolicy::new(cfg.explore.clone(), &scenario.start(), range),
            pool: CandidatePool::new(
                scenario.category(),
                cfg.pool.clone(),
                preset.fallback_step,
                scenario.cell_size(),
            ),
            times: StageTimes::default(),
            sightings: BTreeMap::new(),
        };
        let obs = agent.env.observe();
        let fresh = agent.ingest(&obs, usize::MAX);
        (agent, fresh)
    }

    /// Folds detections of the query category into the pool, creating at
    /// most `max_new` candidates.
    fn ingest(&mut self, obs: &Observation, max_new: usize) -> Vec<usize> {
        let pose = self.env.pose();
        let mut fresh = Vec::new();
        let category = self.pool.category.clone();
        for det in obs.detections.iter().filter(|d| d.category == category) {
            let before = self.pool.len();
            let Some(id) = self.pool.assign_detection(det, &pose, fresh.len() < max_new) else {
                continue;
            };
            *self.sightings.entry(id).or_default().entry(det.instance).or_default() += 1;
            if self.pool.len() > before {
                fresh.push(id);
            }
        }
        fresh
    }

    pub fn running(&self) -> bool {
        !self.env.status().is_terminated()
    }

    fn act(&mut self, action: Action, max_new: usize) -> Result<Vec<usize>, HarnessError> {
        let out = self.env.step(action)?;
        Ok(self.ingest(&out.observation, max_new))
    }

    pub fn explore_step(&mut self, max_new: usize) -> Result<Explored, HarnessError> {
        if !self.running() {
            return Ok(Explored::Terminated);
        }
        let t = Instant::now();
        let decision = self
            .policy
            .next_action(self.env.known(), &self.env.pose(), self.env.steps(), None);
        let out = match decision {
            Decision::Act(a) => Explored::Stepped(self.act(a, max_new)?),
            Decision::Arrived | Decision::Exhausted => Explored::Exhausted,
        };
        self.times.explore += t.elapsed().as_secs_f64();
        Ok(out)
    }

    /// Explores until the pool is ready, the map is exhausted or the
    /// horizon is hit. Returns every candidate created on the way.
    pub fn build_pool(&mut self) -> Result<Vec<usize>, HarnessError> {
        let mut created = Vec::new();
        while !pool_ready(&self.pool, self.env.steps()) {
            match self.explore_step(usize::MAX)? {
                Explored::Stepped(ids) => created.extend(ids),
                Explored::Exhausted | Explored::Terminated => break,
            }
        }
        Ok(created)
    }

    /// Resumes exploration until exactly one new candidate appears. Returns
    /// it, or `None` when the map is exhausted or the horizon is hit.
    pub fn reexplore(&mut self) -> Result<Option<usize>, HarnessError> {
        self.policy.resume();
        loop {
            match self.explore_step(1)? {
                Explored::Stepped(ids) => {
                    if let Some(&id) = ids.first() {
                        return Ok(Some(id));
                    }
                }
                Explored::Exhausted | Explored::Terminated => return Ok(None),
            }
        }
    }

    /// Drives to within the success radius of candidate `id`'s region.
    /// Returns whether it arrived. Detections on the way refine existing
    /// candidates but never create new ones.
    pub fn navigate_to(&mut self, id: usize) -> Result<bool, HarnessError> {
        let t = Instant::now();
        let radius = self.env.scenario().success_radius();
        let arrived = loop {
            if !self.running() {
                break false;
            }
            let Some(c) = self.pool.get(id) else {
                break false;
            };
            let goal = Goal {
                cells: c.region.iter().copied().collect(),
                radius,
            };
            let decision =
                self.policy
                    .next_action(self.env.known(), &self.env.pose(), self.env.steps(), Some(&goal));
            match decision {
                Decision::Act(a) => {
                    self.act(a, 0)?;
                }
                Decision::Arrived => break true,
                Decision::Exhausted => break false,
            }
        };
        self.times.navigate += t.elapsed().as_secs_f64();
        Ok(arrived)
    }

    /// Issues `stop` unless the episode already ended.
    pub fn stop(&mut self) -> Result<(), HarnessError> {
        if self.running() {
            self.env.step(Action::Stop)?;
        }
        Ok(())
    }

    /// Ground-truth instance a candidate was seen as most often (ties:
    /// lowest index).
    pub fn instance_of(&self, id: usize) -> Option<usize> {
        let counts = self.sightings.get(&id)?;
        let mut best: Option<(usize, usize)> = None;
        for (&inst, &n) in counts {
            if best.is_none_or(|(_, bn)| n > bn) {
                best = Some((inst, n));
            }
        }
        best.map(|(i, _)| i)
    }

    pub fn is_target(&self, id: usize) -> bool {
        self.instance_of(id) == Some(self.env.scenario().target_index())
    }

    pub fn target_in_pool(&self) -> bool {
        self.pool.ids().into_iter().any(|id| self.is_target(id))
    }

    pub fn result(&self, strategy: Strategy, questions: usize, tokens: usize) -> Result<EpisodeResult, HarnessError> {
        let scenario = self.env.scenario();
        let stopped = self.env.status() == crate::world::EpisodeStatus::Stopped;
        Ok(EpisodeResult {
            scenario_id: scenario.id().to_owned(),
            strategy,
            success: self.env.succeeded(),
            agent_path_length: self.env.path_length(),
            shortest_path_length: shortest_path_length(scenario, &scenario.start(), scenario.target())?,
            questions,
            response_tokens: tokens,
            steps: self.env.steps(),
            termination: if stopped { Termination::Stop } else { Termination::Horizon },
            wall_times: self.times,
        })
    }
}
