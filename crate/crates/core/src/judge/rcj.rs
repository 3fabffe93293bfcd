//! The round loop: interactive judgment and the non-interactive variant.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::{
    extract_attributes, greedy_peel, refine, select_da, JudgeConfig, JudgeError, ScoreTable,
    SimilarityMatrix,
};
use crate::oracle::{question_text, Responder, Verifier};
use crate::pool::{Candidate, CandidatePool, CATEGORY_ATTRIBUTE};
use crate::world::AttributeValue;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Fact {
    pub attribute: AttributeValue,
    pub yes: bool,
}

/// Judgment state carried across rounds and across re-exploration.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RoundState {
    /// U_t.
    pub active: Vec<usize>,
    /// G_c of the last round, after refinement.
    pub core: Vec<usize>,
    /// G_r of the last round, after refinement.
    pub remainder: Vec<usize>,
    pub selected_attribute: Option<AttributeValue>,
    pub facts: Vec<Fact>,
    pub round_index: usize,
    pub questions_asked: usize,
    /// Candidate ids already admitted to judgment.
    pub considered: BTreeSet<usize>,
    /// Candidates rejected by verification (non-interactive mode).
    pub rejected: BTreeSet<usize>,
}

impl RoundState {
    pub fn new(pool: &CandidatePool) -> Self {
        let ids = pool.ids();
        Self {
            considered: ids.iter().copied().collect(),
            active: ids,
            ..Self::default()
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoundEvent {
    /// A question split the active set.
    Split,
    /// The answer left no candidate: resume pool construction.
    Reexplore,
    /// Every active description is identical; nothing to ask.
    NoContrast,
    /// No unasked attribute is left.
    NoAttribute,
    BudgetExhausted,
    Accept,
    Reject,
    /// Non-interactive round that narrowed the active set.
    Narrow,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredAttribute {
    pub attribute: String,
    pub contrast: f64,
}

/// One transcript line.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundRecord {
    pub round: usize,
    pub active: Vec<usize>,
    pub core: Vec<usize>,
    pub remainder: Vec<usize>,
    pub refined_core: Vec<usize>,
    pub refined_remainder: Vec<usize>,
    pub attributes: Vec<ScoredAttribute>,
    pub selected: Option<String>,
    pub question: Option<String>,
    pub answer: Option<String>,
    pub next_active: Vec<usize>,
    pub event: RoundEvent,
}

impl RoundRecord {
    fn bare(round: usize, active: &[usize], event: RoundEvent) -> Self {
        Self {
            round,
            active: active.to_vec(),
            core: Vec::new(),
            remainder: Vec::new(),
            refined_core: Vec::new(),
            refined_remainder: Vec::new(),
            attributes: Vec::new(),
            selected: None,
            question: None,
            answer: None,
            next_active: active.to_vec(),
            event,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RcjOutcome {
    Identified(usize),
    /// Budget spent with several candidates left; best guess attached.
    BudgetExhausted(usize),
    NeedsExploration,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TextNavOutcome {
    Accept(usize),
    Reject(usize),
    NeedsExploration,
}

fn lookup<'p>(pool: &'p CandidatePool, ids: &[usize]) -> Result<Vec<&'p Candidate>, JudgeError> {
    ids.iter()
        .map(|&id| pool.get(id).ok_or(JudgeError::UnknownCandidate(id)))
        .collect()
}

/// Candidate with the highest mean similarity to the rest of `active`
/// (ties: lowest id).
pub fn best_guess(pool: &CandidatePool, active: &[usize]) -> Result<usize, JudgeError> {
    let mut ids = active.to_vec();
    ids.sort_unstable();
    match ids.len() {
        0 => return Err(JudgeError::TooFew(0)),
        1 => return Ok(ids[0]),
        _ => {}
    }
    let s = SimilarityMatrix::build(&lookup(pool, &ids)?)?;
    let mut best: Option<(f64, usize)> = None;
    for &i in &ids {
        let mut total = 0.0;
        for &j in &ids {
            if i != j {
                total += s.get(i, j)?;
            }
        }
        let mean = total / (ids.len() - 1) as f64;
        if best.is_none_or(|(b, _)| mean > b + 1e-12) {
            best = Some((mean, i));
        }
    }
    Ok(best.expect("non-empty").1)
}

/// Splits the active set into core and remainder: greedy peeling for three
/// or more candidates, one candidate on each side for a pair.
fn split(pool: &CandidatePool, active: &[usize]) -> Result<(Vec<usize>, Vec<usize>), JudgeError> {
    if active.len() == 2 {
        return Ok((vec![active[0]], vec![active[1]]));
    }
    let s = SimilarityMatrix::build(&lookup(pool, active)?)?;
    let core = greedy_peel(active, &s)?;
    let remainder = active.iter().copied().filter(|i| !core.contains(i)).collect();
    Ok((core, remainder))
}

/// Applies the answer: yes keeps the core, no keeps the remainder. Returns
/// `true` when nothing is left, which signals re-exploration.
pub fn prune(state: &mut RoundState, yes: bool) -> bool {
    state.active = if yes { state.core.clone() } else { state.remainder.clone() };
    state.round_index += 1;
    state.active.is_empty()
}

/// Keeps the candidates consistent with every fact: yes-facts need a score
/// of at least `tau`, no-facts a score below it.
pub fn preprune(
    pool: &CandidatePool,
    ids: &[usize],
    facts: &[Fact],
    verifier: &dyn Verifier,
    tau: f64,
) -> Result<Vec<usize>, JudgeError> {
    if facts.is_empty() {
        return Ok(ids.to_vec());
    }
    let cands = lookup(pool, ids)?;
    let attrs: Vec<AttributeValue> = facts.iter().map(|f| f.attribute.clone()).collect();
    let scores = ScoreTable::compute(&cands, &attrs, verifier)?;
    Ok(ids
        .iter()
        .copied()
        .filter(|&i| facts.iter().all(|f| (scores.get(i, &f.attribute) >= tau) == f.yes))
        .collect())
}

/// Admits pool candidates not yet considered: pre-prunes them against the
/// recorded facts and adds the survivors to the active set. Returns
/// (admitted, survivors).
pub fn admit_candidates(
    pool: &CandidatePool,
    state: &mut RoundState,
    verifier: &dyn Verifier,
    tau: f64,
) -> Result<(Vec<usize>, Vec<usize>), JudgeError> {
    let fresh: Vec<usize> = pool
        .ids()
        .into_iter()
        .filter(|i| !state.considered.contains(i))
        .collect();
    state.considered.extend(fresh.iter().copied());
    let survivors = preprune(pool, &fresh, &state.facts, verifier, tau)?;
    state.active.extend(survivors.iter().copied());
    state.active.sort_unstable();
    state.active.dedup();
    Ok((fresh, survivors))
}

fn identical_descriptions(cands: &[&Candidate]) -> bool {
    cands.windows(2).all(|w| w[0].description == w[1].description)
}

/// Runs question rounds until one candidate is left, the budget is spent,
/// or the pool has to grow.
pub fn run_rcj(
    pool: &CandidatePool,
    state: &mut RoundState,
    user: &mut dyn Responder,
    verifier: &dyn Verifier,
    cfg: &JudgeConfig,
) -> Result<(RcjOutcome, Vec<RoundRecord>), JudgeError> {
    let mut records = Vec::new();
    loop {
        state.active.sort_unstable();
        let active = state.active.clone();
        match active.len() {
            0 => return Ok((RcjOutcome::NeedsExploration, records)),
            1 => return Ok((RcjOutcome::Identified(active[0]), records)),
            _ => {}
        }
        let cands = lookup(pool, &active)?;
        if identical_descriptions(&cands) {
            records.push(RoundRecord::bare(state.round_index, &active, RoundEvent::NoContrast));
            return Ok((RcjOutcome::NeedsExploration, records));
        }
        if state.questions_asked >= cfg.budget {
            let guess = best_guess(pool, &active)?;
            let mut r = RoundRecord::bare(state.round_index, &active, RoundEvent::BudgetExhausted);
            r.next_active = vec![guess];
            records.push(r);
            return Ok((RcjOutcome::BudgetExhausted(guess), records));
        }

        let (core, remainder) = split(pool, &active)?;
        let asked: BTreeSet<&AttributeValue> = state.facts.iter().map(|f| &f.attribute).collect();
        let source = if active.len() == 2 { &active } else { &core };
        let attrs: Vec<AttributeValue> = extract_attributes(source, pool)?
            .into_iter()
            .filter(|a| !asked.contains(a))
            .collect();
        if attrs.is_empty() {
            let mut r = RoundRecord::bare(state.round_index, &active, RoundEvent::NoAttribute);
            r.core = core;
            r.remainder = remainder;
            records.push(r);
            return Ok((RcjOutcome::NeedsExploration, records));
        }

        let scores = ScoreTable::compute(&cands, &attrs, verifier)?;
        let (idx, contrasts) = select_da(&attrs, &core, &remainder, &scores)?;
        let a = attrs[idx].clone();
        let (gc, gr) = if cfg.refine {
            refine(&core, &remainder, &a, &scores, cfg.tau)
        } else {
            (core.clone(), remainder.clone())
        };

        let answer = user.ask_binary(&a)?;
        let yes = answer.is_yes();
        state.questions_asked += 1;
        state.facts.push(Fact {
            attribute: a.clone(),
            yes,
        });
        state.core = gc.clone();
        state.remainder = gr.clone();
        state.selected_attribute = Some(a.clone());
        let round = state.round_index;
        let empty = prune(state, yes);

        records.push(RoundRecord {
            round,
            active,
            core,
            remainder,
            refined_core: gc,
            refined_remainder: gr,
            attributes: attrs
                .iter()
                .zip(&contrasts)
                .map(|(a, c)| ScoredAttribute {
                    attribute: a.key(),
                    contrast: *c,
                })
                .collect(),
            selected: Some(a.key()),
            question: Some(question_text(&a)),
            answer: Some(if yes { "yes" } else { "no" }.into()),
            next_active: state.active.clone(),
            event: if empty { RoundEvent::Reexplore } else { RoundEvent::Split },
        });
        if empty {
            user.notify("No candidate matches; re-exploring for one more.");
            return Ok((RcjOutcome::NeedsExploration, records));
        }
    }
}

/// Non-interactive judgment against a fixed goal attribute set. The active
/// set always narrows to the refined core; once nothing is left outside the
/// core the best-supported member is verified against every goal attribute.
pub fn textnav_round(
    pool: &CandidatePool,
    state: &mut RoundState,
    goal: &[AttributeValue],
    verifier: &dyn Verifier,
    cfg: &JudgeConfig,
) -> Result<(TextNavOutcome, Vec<RoundRecord>), JudgeError> {
    let goal: Vec<AttributeValue> = goal
        .iter()
        .filter(|a| a.attribute != CATEGORY_ATTRIBUTE)
        .cloned()
        .collect();
    let mut records = Vec::new();
    state.active = pool
        .ids()
        .into_iter()
        .filter(|i| !state.rejected.contains(i))
        .collect();
    state.considered.extend(state.active.iter().copied());
    loop {
        let active = state.active.clone();
        if active.is_empty() {
            return Ok((TextNavOutcome::NeedsExploration, records));
        }
        let cands = lookup(pool, &active)?;
        let scores = ScoreTable::compute(&cands, &goal, verifier)?;
        let support = |i: usize| -> f64 {
            if goal.is_empty() {
                1.0
            } else {
                goal.iter().map(|a| scores.get(i, a)).sum::<f64>() / goal.len() as f64
            }
        };

        let (chosen, mut record) = if active.len() == 1 || goal.is_empty() {
            (active[0], RoundRecord::bare(state.round_index, &active, RoundEvent::Accept))
        } else {
            let (core, remainder) = split(pool, &active)?;
            let (idx, contrasts) = select_da(&goal, &core, &remainder, &scores)?;
            let a = goal[idx].clone();
            let (gc, gr) = if cfg.refine {
                refine(&core, &remainder, &a, &scores, cfg.tau)
            } else {
                (core.clone(), remainder.clone())
            };
            state.core = gc.clone();
            state.remainder = gr.clone();
            state.selected_attribute = Some(a.clone());
            let record = RoundRecord {
                round: state.round_index,
                active: active.clone(),
                core,
                remainder,
                refined_core: gc.clone(),
                refined_remainder: gr.clone(),
                attributes: goal
                    .iter()
                    .zip(&contrasts)
                    .map(|(a, c)| ScoredAttribute {
                        attribute: a.key(),
                        contrast: *c,
                    })
                    .collect(),
                selected: Some(a.key()),
                question: None,
                answer: None,
                next_active: gc.clone(),
                event: RoundEvent::Narrow,
            };
            state.round_index += 1;
            state.active = gc.clone();
            if !gr.is_empty() || gc.is_empty() {
                records.push(record);
                continue;
            }
            let mut best: Option<(f64, usize)> = None;
            for &i in &gc {
                let s = support(i);
                if best.is_none_or(|(b, _)| s > b + 1e-12) {
                    best = Some((s, i));
                }
            }
            (best.expect("non-empty core").1, record)
        };

        let accepted = goal.iter().all(|a| scores.get(chosen, a) >= cfg.tau);
        record.event = if accepted { RoundEvent::Accept } else { RoundEvent::Reject };
        record.next_active = vec![chosen];
        records.push(record);
        if accepted {
            return Ok((TextNavOutcome::Accept(chosen), records));
        }
        state.rejected.insert(chosen);
        state.active.retain(|&i| i != chosen);
        return Ok((TextNavOutcome::Reject(chosen), records));
    }
}
