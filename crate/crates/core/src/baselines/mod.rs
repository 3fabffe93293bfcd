//! Independent-matching baselines.
//!
//! Both ask open-ended questions and score candidates one at a time against
//! the facts collected so far. The independent matcher commits to the first
//! candidate that scores high enough; the pooled variant waits for the full
//! pool and commits to the best score.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::harness::{Agent, EpisodeOutput, EpisodeTrace, HarnessError, Mode, Strategy};
use crate::judge::{entailment_score, JudgeError};
use crate::oracle::{answer_open, Verifier};
use crate::pool::Candidate;
use crate::world::{AttributeValue, InstanceSpec, Scenario};
use crate::Config;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct BaselineConfig {
    /// θ_match: consistency at which the independent matcher stops.
    pub theta_match: f64,
    /// Open questions per episode.
    pub budget: usize,
}

impl Default for BaselineConfig {
    fn default() -> Self {
        Self {
            theta_match: 0.9,
            budget: 4,
        }
    }
}

/// Facts revealed by open-ended answers, deduplicated, in arrival order.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FactSet {
    facts: Vec<AttributeValue>,
}

impl FactSet {
    pub fn extend<I: IntoIterator<Item = AttributeValue>>(&mut self, revealed: I) {
        for a in revealed {
            if !self.facts.contains(&a) {
                self.facts.push(a);
            }
        }
    }

    pub fn facts(&self) -> &[AttributeValue] {
        &self.facts
    }

    pub fn len(&self) -> usize {
        self.facts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.facts.is_empty()
    }

    pub fn as_set(&self) -> BTreeSet<AttributeValue> {
        self.facts.iter().cloned().collect()
    }

    /// Topic of the next open question: the first target attribute not yet
    /// covered by any fact, else the first target attribute.
    pub fn next_topic(&self, target: &InstanceSpec) -> String {
        let covered: BTreeSet<&str> = self.facts.iter().map(|f| f.attribute.as_str()).collect();
        let names: Vec<&str> = target.attribute_values().map(|a| a.attribute.as_str()).collect();
        let first = names.first().copied().unwrap_or_default();
        names.into_iter().find(|n| !covered.contains(n)).unwrap_or(first).to_owned()
    }
}

/// Mean entailment score of `candidate` over the facts; 0.5 with no facts.
pub fn consistency_score(candidate: &Candidate, facts: &FactSet, verifier: &dyn Verifier) -> Result<f64, JudgeError> {
    if facts.is_empty() {
        return Ok(0.5);
    }
    let mut total = 0.0;
    for f in facts.facts() {
        total += entailment_score(candidate, f, verifier)?.0;
    }
    Ok(total / facts.len() as f64)
}

/// Question and token tally of one baseline episode.
struct Asker<'s> {
    target: &'s InstanceSpec,
    reveal_k: usize,
    budget: usize,
    questions: usize,
    tokens: usize,
    facts: FactSet,
}

impl<'s> Asker<'s> {
    fn new(scenario: &'s Scenario, cfg: &Config) -> Self {
        Self {
            target: scenario.target(),
            reveal_k: cfg.oracle.reveal_k,
            budget: cfg.baselines.budget,
            questions: 0,
            tokens: 0,
            facts: FactSet::default(),
        }
    }

    /// Asks one open question if the budget allows.
    fn ask(&mut self) {
        if self.questions >= self.budget {
            return;
        }
        let topic = self.facts.next_topic(self.target);
        let ans = answer_open(self.target, &topic, &self.facts.as_set(), self.reveal_k);
        self.questions += 1;
        self.tokens += ans.token_count;
        self.facts.extend(ans.revealed);
    }
}

fn finish(agent: &mut Agent, strategy: Strategy, asker: &Asker, mut trace: EpisodeTrace) -> Result<EpisodeOutput, HarnessError> {
    agent.stop()?;
    trace.target_in_pool = agent.target_in_pool();
    trace.chosen_is_target = trace.chosen.is_some_and(|id| agent.is_target(id));
    let result = agent.result(strategy, asker.questions, asker.tokens)?;
    Ok(EpisodeOutput { result, trace })
}

/// Asks about each candidate on its first detection and stops at the first
/// one whose consistency reaches θ_match.
pub fn independent_match_episode(
    scenario: &Scenario,
    cfg: &Config,
    verifier: &dyn Verifier,
) -> Result<EpisodeOutput, HarnessError> {
    let preset = Mode::InteractiveSim.preset();
    let (mut agent, mut fresh) = Agent::new(scenario, cfg, &preset);
    let mut asker = Asker::new(scenario, cfg);
    let mut trace = EpisodeTrace::default();
    'episode: loop {
        for id in std::mem::take(&mut fresh) {
            asker.ask();
            let c = agent.pool.get(id).expect("fresh candidate exists");
            if consistency_score(c, &asker.facts, verifier)? >= cfg.baselines.theta_match {
                trace.chosen = Some(id);
                agent.navigate_to(id)?;
                break 'episode;
            }
        }
        match agent.explore_step(usize::MAX)? {
            crate::harness::Explored::Stepped(ids) => fresh = ids,
            _ => break,
        }
    }
    trace.initial_pool = agent.pool.ids();
    finish(&mut agent, Strategy::Independent, &asker, trace)
}

/// Builds the pool first, asks one open question per candidate, then goes
/// to the candidate most consistent with all facts (ties: lowest id).
pub fn pooled_independent_episode(
    scenario: &Scenario,
    cfg: &Config,
    verifier: &dyn Verifier,
) -> Result<EpisodeOutput, HarnessError> {
    let preset = Mode::InteractiveSim.preset();
    let (mut agent, _) = Agent::new(scenario, cfg, &preset);
    agent.build_pool()?;
    let ids = agent.pool.ids();
    let mut trace = EpisodeTrace {
        initial_pool: ids.clone(),
        target_in_initial_pool: agent.target_in_pool(),
        ..EpisodeTrace::default()
    };
    let mut asker = Asker::new(scenario, cfg);
    for _ in &ids {
        asker.ask();
    }
    let mut best: Option<(f64, usize)> = None;
    for &id in &ids {
        let c = agent.pool.get(id).expect("pool id exists");
        let s = consistency_score(c, &asker.facts, verifier)?;
        if best.is_none_or(|(b, _)| s > b + 1e-12) {
            best = Some((s, id));
        }
    }
    if let Some((_, id)) = best {
        trace.chosen = Some(id);
        if agent.running() {
            agent.navigate_to(id)?;
        }
    }
    finish(&mut agent, Strategy::Pooled, &asker, trace)
}
