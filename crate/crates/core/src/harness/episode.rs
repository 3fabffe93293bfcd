//! Episode drivers for the comparative strategy and its non-interactive
//! variant.

use std::hash::Hasher;
use std::io::{BufRead, Write};
use std::time::Instant;

use super::agent::Agent;
use super::generate::goal_attributes;
use super::{
    EpisodeOutput, EpisodeTrace, HarnessError, Mode, Reexploration, Strategy, Verification,
};
use crate::baselines;
use crate::judge::{
    admit_candidates, best_guess, run_rcj, textnav_round, JudgeConfig, JudgeError, RcjOutcome,
    RoundState, TextNavOutcome,
};
use crate::oracle::{OracleError, Responder, SimulatedUser, TerminalUser, UserAnswer, Verifier};
use crate::world::{AttributeValue, Scenario};
use crate::Config;

/// Seed of the simulated user for `scenario`: independent of run order.
pub fn user_seed(scenario: &Scenario, cfg: &Config) -> u64 {
    let mut h = fnv::FnvHasher::default();
    h.write(scenario.id().as_bytes());
    h.finish() ^ cfg.harness.seed
}

/// Sums questions and response tokens on the way through.
struct Counting<'r> {
    inner: &'r mut dyn Responder,
    questions: usize,
    tokens: usize,
}

impl Responder for Counting<'_> {
    fn ask_binary(&mut self, a: &AttributeValue) -> Result<UserAnswer, OracleError> {
        let ans = self.inner.ask_binary(a)?;
        self.questions += 1;
        self.tokens += ans.token_count;
        Ok(ans)
    }

    fn notify(&mut self, message: &str) {
        self.inner.notify(message);
    }
}

/// Runs one episode of `strategy` in `mode` with the simulated user.
pub fn run_episode(scenario: &Scenario, strategy: Strategy, mode: Mode, cfg: &Config) -> Result<EpisodeOutput, HarnessError> {
    let verifier = cfg.oracle.verifier();
    match (strategy, mode) {
        (Strategy::Comparative, Mode::InteractiveSim) => {
            let mut user = SimulatedUser::new(scenario.target(), cfg.oracle.error_rate, user_seed(scenario, cfg));
            comparative(scenario, cfg, &mut user, verifier.as_ref())
        }
        (Strategy::Comparative, Mode::Textnav) => textnav(scenario, cfg, verifier.as_ref()),
        (Strategy::Independent, Mode::InteractiveSim) => baselines::independent_match_episode(scenario, cfg, verifier.as_ref()),
        (Strategy::Pooled, Mode::InteractiveSim) => baselines::pooled_independent_episode(scenario, cfg, verifier.as_ref()),
        (s, m) => Err(HarnessError::InvalidCombination(s, m)),
    }
}

/// Runs the comparative strategy with binary questions put to a terminal.
/// End of input aborts the episode, which is then recorded as a failure.
pub fn interactive_session<R: BufRead, W: Write>(
    scenario: &Scenario,
    cfg: &Config,
    input: R,
    output: W,
) -> Result<EpisodeOutput, HarnessError> {
    let mut user = TerminalUser::new(input, output);
    let verifier = cfg.oracle.verifier();
    comparative(scenario, cfg, &mut user, verifier.as_ref())
}

fn judge_config(cfg: &Config, mode: Mode) -> JudgeConfig {
    let mut j = cfg.judge.clone();
    if let Some(b) = mode.preset().budget {
        j.budget = b.min(cfg.judge.budget);
    }
    j
}

fn comparative(
    scenario: &Scenario,
    cfg: &Config,
    user: &mut dyn Responder,
    verifier: &dyn Verifier,
) -> Result<EpisodeOutput, HarnessError> {
    let preset = Mode::InteractiveSim.preset();
    let jcfg = judge_config(cfg, Mode::InteractiveSim);
    let (mut agent, _) = Agent::new(scenario, cfg, &preset);
    agent.build_pool()?;

    let mut trace = EpisodeTrace {
        initial_pool: agent.pool.ids(),
        target_in_initial_pool: agent.target_in_pool(),
        ..EpisodeTrace::default()
    };
    let mut user = Counting {
        inner: user,
        questions: 0,
        tokens: 0,
    };
    let mut state = RoundState::new(&agent.pool);
    let mut aborted = false;
    while agent.running() {
        let t = Instant::now();
        let step = run_rcj(&agent.pool, &mut state, &mut user, verifier, &jcfg);
        agent.times.judge += t.elapsed().as_secs_f64();
        let (outcome, records) = match step {
            Ok(x) => x,
            Err(JudgeError::Oracle(OracleError::EndOfInput)) => {
                aborted = true;
                break;
            }
            Err(e) => return Err(e.into()),
        };
        let trigger = records.last().map(|r| r.event);
        trace.rounds.extend(records);
        match outcome {
            RcjOutcome::Identified(id) | RcjOutcome::BudgetExhausted(id) => {
                trace.chosen = Some(id);
                agent.navigate_to(id)?;
                break;
            }
            RcjOutcome::NeedsExploration => {
                let Some(new) = agent.reexplore()? else {
                    // Nothing left to find: commit to the best remaining guess.
                    if !state.active.is_empty() && agent.running() {
                        let id = best_guess(&agent.pool, &state.active)?;
                        trace.chosen = Some(id);
                        agent.navigate_to(id)?;
                    }
                    break;
                };
                let (added, survivors) = admit_candidates(&agent.pool, &mut state, verifier, jcfg.tau)?;
                debug_assert_eq!(added, vec![new]);
                trace.reexplorations.push(Reexploration {
                    trigger,
                    target_added: added.iter().any(|&i| agent.is_target(i)),
                    target_survived: survivors.iter().any(|&i| agent.is_target(i)),
                    added,
                    survivors,
                });
            }
        }
    }
    agent.stop()?;
    trace.target_in_pool = agent.target_in_pool();
    trace.chosen_is_target = trace.chosen.is_some_and(|id| agent.is_target(id));
    let mut result = agent.result(Strategy::Comparative, user.questions, user.tokens)?;
    if aborted {
        result.success = false;
    }
    Ok(EpisodeOutput { result, trace })
}

fn textnav(scenario: &Scenario, cfg: &Config, verifier: &dyn Verifier) -> Result<EpisodeOutput, HarnessError> {
    let preset = Mode::Textnav.preset();
    let jcfg = judge_config(cfg, Mode::Textnav);
    let goal = goal_attributes(scenario);
    let (mut agent, _) = Agent::new(scenario, cfg, &preset);
    agent.build_pool()?;

    let mut trace = EpisodeTrace {
        initial_pool: agent.pool.ids(),
        target_in_initial_pool: agent.target_in_pool(),
        ..EpisodeTrace::default()
    };
    let mut state = RoundState::new(&agent.pool);
    while agent.running() {
        let t = Instant::now();
        let (outcome, records) = textnav_round(&agent.pool, &mut state, &goal, verifier, &jcfg)?;
        agent.times.judge += t.elapsed().as_secs_f64();
        let trigger = records.last().map(|r| r.event);
        trace.rounds.extend(records);
        let missing = |agent: &Agent, id: usize| -> bool {
            agent.instance_of(id).is_none_or(|inst| {
                let truth: Vec<&AttributeValue> = scenario.instances()[inst].attribute_values().collect();
                goal.iter().any(|g| !truth.contains(&g))
            })
        };
        match outcome {
            TextNavOutcome::Accept(id) => {
                trace.verifications.push(Verification {
                    candidate: id,
                    accepted: true,
                    missing_goal: missing(&agent, id),
                });
                trace.chosen = Some(id);
                agent.navigate_to(id)?;
                break;
            }
            TextNavOutcome::Reject(id) => trace.verifications.push(Verification {
                candidate: id,
                accepted: false,
                missing_goal: missing(&agent, id),
            }),
            TextNavOutcome::NeedsExploration => {
                let Some(new) = agent.reexplore()? else { break };
                trace.reexplorations.push(Reexploration {
                    trigger,
                    added: vec![new],
                    survivors: vec![new],
                    target_added: agent.is_target(new),
                    target_survived: agent.is_target(new),
                });
            }
        }
    }
    agent.stop()?;
    trace.target_in_pool = agent.target_in_pool();
    trace.chosen_is_target = trace.chosen.is_some_and(|id| agent.is_target(id));
    let result = agent.result(Strategy::Comparative, 0, 0)?;
    Ok(EpisodeOutput { result, trace })
}
