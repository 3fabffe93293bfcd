//! Recursive comparative judgment over the candidate pool.
//!
//! Each round peels the active set down to its most mutually similar core,
//! picks the attribute that best separates core from remainder by
//! entailment contrast, moves candidates across the split according to
//! their support for that attribute, and asks the user one yes/no question.
//! The answer keeps one side.

mod rcj;

use std::collections::BTreeMap;
use std::hash::Hasher;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::oracle::{OracleError, Premise, VerdictLogits, Verifier};
use crate::pool::{Candidate, CandidatePool, View};
use crate::world::AttributeValue;

pub use rcj::{
    admit_candidates, best_guess, preprune, prune, run_rcj, textnav_round, Fact, RcjOutcome, RoundEvent,
    RoundRecord, RoundState, TextNavOutcome,
};

/// Embedding dimension of the hashed bag-of-tokens encoders.
pub const EMBED_DIM: usize = 256;

/// Score tolerance used for tie detection.
const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum JudgeError {
    #[error("cannot embed an empty description")]
    EmptyDescription,
    #[error("similarity needs at least two candidates, got {0}")]
    TooFew(usize),
    #[error("no attribute to ask about")]
    NoAttribute,
    #[error("unknown candidate id {0}")]
    UnknownCandidate(usize),
    #[error(transparent)]
    Oracle(#[from] OracleError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct JudgeConfig {
    /// Refinement threshold on entailment scores.
    pub tau: f64,
    /// Question budget per episode.
    pub budget: usize,
    /// Move candidates across the split by their support for the selected
    /// attribute. Off reproduces the "no refinement" ablation.
    pub refine: bool,
}

impl Default for JudgeConfig {
    fn default() -> Self {
        Self {
            tau: 0.9,
            budget: 4,
            refine: true,
        }
    }
}

fn token_bucket(token: &str) -> usize {
    let mut h = fnv::FnvHasher::default();
    h.write(token.as_bytes());
    (h.finish() % EMBED_DIM as u64) as usize
}

/// Hashed set-of-tokens embedding, l2-normalized.
fn embed_tokens<I: IntoIterator<Item = String>>(tokens: I) -> Result<Vec<f64>, JudgeError> {
    let mut set: Vec<String> = tokens.into_iter().collect();
    set.sort();
    set.dedup();
    if set.is_empty() {
        return Err(JudgeError::EmptyDescription);
    }
    let mut v = vec![0.0; EMBED_DIM];
    for t in &set {
        v[token_bucket(t)] += 1.0;
    }
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    Ok(v.into_iter().map(|x| x / norm).collect())
}

/// Text-side embedding of a description: one token per attribute-value pair.
pub fn embed_text(description: &[AttributeValue]) -> Result<Vec<f64>, JudgeError> {
    embed_tokens(description.iter().map(|a| format!("t:{}", a.key())))
}

/// View-side embedding: a sector token per view and a token per revealed
/// attribute.
pub fn embed_view(views: &[&View]) -> Result<Vec<f64>, JudgeError> {
    embed_tokens(views.iter().flat_map(|v| {
        std::iter::once(format!("s:{}", v.sector)).chain(v.revealed.iter().map(|a| format!("v:{}", a.key())))
    }))
}

pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn candidate_embeddings(c: &Candidate) -> Result<(Vec<f64>, Vec<f64>), JudgeError> {
    let views: Vec<&View> = c.representatives().collect();
    Ok((embed_text(&c.description)?, embed_view(&views)?))
}

/// Mean of the text and view cosines.
pub fn pairwise_similarity(a: &Candidate, b: &Candidate) -> Result<f64, JudgeError> {
    let (ta, va) = candidate_embeddings(a)?;
    let (tb, vb) = candidate_embeddings(b)?;
    Ok(0.5 * (cosine(&ta, &tb) + cosine(&va, &vb)))
}

/// Symmetric similarity matrix indexed by candidate id.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    ids: Vec<usize>,
    values: Vec<Vec<f64>>,
}

impl SimilarityMatrix {
    pub fn from_values(ids: Vec<usize>, values: Vec<Vec<f64>>) -> Self {
        assert_eq!(ids.len(), values.len());
        Self { ids, values }
    }

    pub fn build(candidates: &[&Candidate]) -> Result<Self, JudgeError> {
        let emb = candidates
            .iter()
            .map(|c| candidate_embeddings(c))
            .collect::<Result<Vec<_>, _>>()?;
        let n = candidates.len();
        let mut values = vec![vec![0.0; n]; n];
        for i in 0..n {
            values[i][i] = 1.0;
            for j in i + 1..n {
                let s = 0.5 * (cosine(&emb[i].0, &emb[j].0) + cosine(&emb[i].1, &emb[j].1));
                values[i][j] = s;
                values[j][i] = s;
            }
        }
        Ok(Self {
            ids: candidates.iter().map(|c| c.id).collect(),
            values,
        })
    }

    pub fn ids(&self) -> &[usize] {
        &self.ids
    }

    fn pos(&self, id: usize) -> Result<usize, JudgeError> {
        self.ids
            .iter()
            .position(|&x| x == id)
            .ok_or(JudgeError::UnknownCandidate(id))
    }

    pub fn get(&self, a: usize, b: usize) -> Result<f64, JudgeError> {
        Ok(self.values[self.pos(a)?][self.pos(b)?])
    }
}

/// Mean pairwise similarity over ordered pairs of distinct members.
pub fn rho(subset: &[usize], s: &SimilarityMatrix) -> Result<f64, JudgeError> {
    let n = subset.len();
    if n < 2 {
        return Err(JudgeError::TooFew(n));
    }
    let pos: Vec<usize> = subset.iter().map(|&id| s.pos(id)).collect::<Result<_, _>>()?;
    let mut total = 0.0;
    for &i in &pos {
        for &j in &pos {
            if i != j {
                total += s.values[i][j];
            }
        }
    }
    Ok(total / (n * (n - 1)) as f64)
}

/// The peeling chain V_0 = active, each next set dropping the member with
/// the lowest total similarity to the rest (ties: lowest id), down to two
/// members.
pub fn peel_chain(active: &[usize], s: &SimilarityMatrix) -> Result<Vec<Vec<usize>>, JudgeError> {
    if active.len() < 2 {
        return Err(JudgeError::TooFew(active.len()));
    }
    let mut current: Vec<usize> = active.to_vec();
    current.sort_unstable();
    let mut chain = vec![current.clone()];
    while current.len() > 2 {
        let mut worst: Option<(f64, usize)> = None;
        for &i in &current {
            let mut total = 0.0;
            for &j in &current {
                if i != j {
                    total += s.get(i, j)?;
                }
            }
            if worst.is_none_or(|(w, _)| total < w - TIE_EPS) {
                worst = Some((total, i));
            }
        }
        let (_, drop) = worst.expect("non-empty set");
        current.retain(|&x| x != drop);
        chain.push(current.clone());
    }
    Ok(chain)
}

/// Core set: the peeling intermediate with the highest rho (ties: larger
/// set). When that is the whole active set the best proper intermediate is
/// returned instead, so the remainder is never empty for more than two
/// candidates.
pub fn greedy_peel(active: &[usize], s: &SimilarityMatrix) -> Result<Vec<usize>, JudgeError> {
    let chain = peel_chain(active, s)?;
    if chain[0].len() == 2 {
        return Ok(chain[0].clone());
    }
    let pick = |sets: &[Vec<usize>]| -> Result<Vec<usize>, JudgeError> {
        let mut best: Option<(f64, &Vec<usize>)> = None;
        for v in sets {
            let r = rho(v, s)?;
            if best.is_none_or(|(b, _)| r > b + TIE_EPS) {
                best = Some((r, v));
            }
        }
        Ok(best.expect("non-empty chain").1.clone())
    };
    let best = pick(&chain)?;
    if best.len() == chain[0].len() {
        pick(&chain[1..])
    } else {
        Ok(best)
    }
}

/// Candidate attributes: union of the core members' description pairs,
/// category pair excluded, canonically ordered.
pub fn extract_attributes(core: &[usize], pool: &CandidatePool) -> Result<Vec<AttributeValue>, JudgeError> {
    let mut set = std::collections::BTreeSet::new();
    for &id in core {
        let c = pool.get(id).ok_or(JudgeError::UnknownCandidate(id))?;
        set.extend(c.attributes().cloned());
    }
    Ok(set.into_iter().collect())
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// s(d, a) in (0, 1).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct EntailmentScore(pub f64);

impl EntailmentScore {
    pub fn from_logits(l: &VerdictLogits) -> Self {
        Self(sigmoid(l.entail - l.neutral.max(l.contradict)))
    }
}

pub fn entailment_score(
    candidate: &Candidate,
    attribute: &AttributeValue,
    verifier: &dyn Verifier,
) -> Result<EntailmentScore, JudgeError> {
    let premise = Premise {
        attributes: &candidate.description,
        text: &candidate.text,
    };
    Ok(EntailmentScore::from_logits(&verifier.verify(&premise, attribute)?))
}

/// Entailment scores keyed by (candidate id, attribute).
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ScoreTable(BTreeMap<(usize, AttributeValue), f64>);

impl ScoreTable {
    /// Scores every (candidate, attribute) pair. Verifier calls run in
    /// parallel; results are keyed so their order does not matter.
    pub fn compute(
        candidates: &[&Candidate],
        attributes: &[AttributeValue],
        verifier: &dyn Verifier,
    ) -> Result<Self, JudgeError> {
        let pairs: Vec<(&Candidate, &AttributeValue)> = candidates
            .iter()
            .flat_map(|c| attributes.iter().map(move |a| (*c, a)))
            .collect();
        let scored: Vec<((usize, AttributeValue), f64)> = pairs
            .par_iter()
            .map(|(c, a)| entailment_score(c, a, verifier).map(|s| ((c.id, (*a).clone()), s.0)))
            .collect::<Result<_, _>>()?;
        Ok(Self(scored.into_iter().collect()))
    }

    pub fn insert(&mut self, id: usize, a: AttributeValue, s: f64) {
        self.0.insert((id, a), s);
    }

    pub fn get(&self, id: usize, a: &AttributeValue) -> f64 {
        *self
            .0
            .get(&(id, a.clone()))
            .unwrap_or_else(|| panic!("missing score for candidate {id} / {}", a.key()))
    }

    fn mean(&self, ids: &[usize], a: &AttributeValue) -> f64 {
        if ids.is_empty() {
            0.0
        } else {
            ids.iter().map(|&i| self.get(i, a)).sum::<f64>() / ids.len() as f64
        }
    }
}

/// Contrast of `a`: mean score on the core minus mean score on the
/// remainder (an empty group contributes 0).
pub fn contrast(a: &AttributeValue, core: &[usize], remainder: &[usize], scores: &ScoreTable) -> f64 {
    scores.mean(core, a) - scores.mean(remainder, a)
}

/// Index into `attributes` of the discriminative attribute and the contrast
/// of every attribute. Ties go to the earliest attribute.
pub fn select_da(
    attributes: &[AttributeValue],
    core: &[usize],
    remainder: &[usize],
    scores: &ScoreTable,
) -> Result<(usize, Vec<f64>), JudgeError> {
    if attributes.is_empty() {
        return Err(JudgeError::NoAttribute);
    }
    let contrasts: Vec<f64> = attributes
        .iter()
        .map(|a| contrast(a, core, remainder, scores))
        .collect();
    let mut best = 0;
    for (i, c) in contrasts.iter().enumerate() {
        if *c > contrasts[best] + TIE_EPS {
            best = i;
        }
    }
    Ok((best, contrasts))
}

/// Moves remainder members supporting `a` (score >= tau) into the core and
/// core members that do not support it into the remainder. Both outputs
/// stay sorted.
pub fn refine(
    core: &[usize],
    remainder: &[usize],
    a: &AttributeValue,
    scores: &ScoreTable,
    tau: f64,
) -> (Vec<usize>, Vec<usize>) {
    let mut c2 = Vec::new();
    let mut r2 = Vec::new();
    for &i in core.iter().chain(remainder) {
        if scores.get(i, a) >= tau {
            c2.push(i);
        } else {
            r2.push(i);
        }
    }
    c2.sort_unstable();
    r2.sort_unstable();
    (c2, r2)
}
