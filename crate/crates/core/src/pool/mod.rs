//! Candidate pool construction.
//!
//! Detections of the query category are associated to candidates by region
//! overlap. Each candidate keeps every view it was seen from; views are
//! clustered and the description is synthesized from one representative
//! view per cluster.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::judge::embed_view;
use crate::world::{AgentPose, AttributeValue, Cell, Detection};

#[derive(Debug, Error, PartialEq, Eq)]
pub enum PoolError {
    #[error("overlap of an empty region is undefined")]
    EmptyRegion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PoolConfig {
    /// N_min: pool size at which judgment starts.
    pub min_size: usize,
    /// K: number of view clusters per candidate.
    pub k_views: usize,
    pub overlap_threshold: f64,
    pub epsilon_m: f64,
    pub kmeans_iters: usize,
    /// Describe each candidate from its first view only.
    pub use_first_view_only: bool,
}

impl Default for PoolConfig {
    fn default() -> Self {
        Self {
            min_size: 5,
            k_views: 6,
            overlap_threshold: 0.3,
            epsilon_m: 0.03,
            kmeans_iters: 50,
            use_first_view_only: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct View {
    pub sector: u8,
    pub revealed: Vec<AttributeValue>,
    pub pose: AgentPose,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub id: usize,
    pub category: String,
    pub region: BTreeSet<Cell>,
    pub views: Vec<View>,
    /// Indices into `views`.
    pub representative_views: Vec<usize>,
    /// Canonically ordered attribute set, category pair included.
    pub description: Vec<AttributeValue>,
    pub text: String,
    pub location: Cell,
}

impl Candidate {
    fn seed(id: usize, category: &str, cells: &[Cell], view: View) -> Self {
        let mut c = Self {
            id,
            category: category.to_owned(),
            region: cells.iter().copied().collect(),
            views: vec![view],
            representative_views: vec![0],
            description: Vec::new(),
            text: String::new(),
            location: cells[0],
        };
        c.location = centroid_cell(&c.region);
        c
    }

    pub fn representatives(&self) -> impl Iterator<Item = &View> {
        self.representative_views.iter().map(|&i| &self.views[i])
    }

    /// Description attributes other than the category pair.
    pub fn attributes(&self) -> impl Iterator<Item = &AttributeValue> {
        self.description.iter().filter(|a| a.attribute != CATEGORY_ATTRIBUTE)
    }
}

/// Attribute name of the pair every description carries for its category.
pub const CATEGORY_ATTRIBUTE: &str = "category";

pub fn category_pair(category: &str) -> AttributeValue {
    AttributeValue::new(CATEGORY_ATTRIBUTE, category, category)
}

/// Region cell closest to the region's mean position (ties: smallest cell).
fn centroid_cell(region: &BTreeSet<Cell>) -> Cell {
    let n = region.len() as f64;
    let (sx, sy) = region
        .iter()
        .fold((0.0, 0.0), |(sx, sy), c| (sx + c.x as f64, sy + c.y as f64));
    let (mx, my) = (sx / n, sy / n);
    let mut best = *region.iter().next().expect("non-empty region");
    let mut best_d = f64::INFINITY;
    for c in region {
        let d = (c.x as f64 - mx).powi(2) + (c.y as f64 - my).powi(2);
        if d < best_d - 1e-12 {
            best = *c;
            best_d = d;
        }
    }
    best
}

/// Share of `a`'s cells with a cell of `b` within Chebyshev radius `eps`.
fn directed_overlap(a: &BTreeSet<Cell>, b: &BTreeSet<Cell>, eps: i32) -> f64 {
    let hits = a
        .iter()
        .filter(|p| {
            (-eps..=eps).any(|dx| (-eps..=eps).any(|dy| b.contains(&Cell::new(p.x + dx, p.y + dy))))
        })
        .count();
    hits as f64 / a.len() as f64
}

/// Maximum of the two directed overlap fractions.
pub fn overlap_ratio(a: &BTreeSet<Cell>, b: &BTreeSet<Cell>, eps_cells: i32) -> Result<f64, PoolError> {
    if a.is_empty() || b.is_empty() {
        return Err(PoolError::EmptyRegion);
    }
    Ok(directed_overlap(a, b, eps_cells).max(directed_overlap(b, a, eps_cells)))
}

/// Grid radius standing in for the metric overlap radius.
pub fn epsilon_cells(epsilon_m: f64, cell_size: f64) -> i32 {
    ((epsilon_m / cell_size).ceil() as i32).max(1)
}

/// Representative view indices: every view when there are at most `k`
/// distinct ones, otherwise one per non-empty k-means cluster.
///
/// Views with equal embeddings are clustered as one weighted point. Centers
/// start from farthest-point seeding beginning at the first view, so the
/// result is deterministic.
pub fn cluster_views(views: &[View], k: usize, iters: usize) -> Vec<usize> {
    if views.is_empty() || k == 0 {
        return Vec::new();
    }
    // Distinct points keyed by (sector, revealed), remembering first index and weight.
    let mut index: BTreeMap<(u8, Vec<AttributeValue>), usize> = BTreeMap::new();
    let mut points: Vec<(usize, f64, Vec<f64>)> = Vec::new();
    for (i, v) in views.iter().enumerate() {
        let mut key_attrs = v.revealed.clone();
        key_attrs.sort();
        let key = (v.sector, key_attrs);
        match index.get(&key) {
            Some(&p) => points[p].1 += 1.0,
            None => {
                index.insert(key, points.len());
                let e = embed_view(std::slice::from_ref(&v)).expect("a view always has a sector token");
                points.push((i, 1.0, e));
            }
        }
    }
    if points.len() <= k {
        return points.iter().map(|p| p.0).collect();
    }

    let dist2 = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();

    let mut centers: Vec<Vec<f64>> = vec![points[0].2.clone()];
    while centers.len() < k {
        let mut best: Option<(f64, usize)> = None;
        for (p, pt) in points.iter().enumerate() {
            let d = centers
                .iter()
                .map(|c| dist2(&pt.2, c))
                .fold(f64::INFINITY, f64::min);
            if best.is_none_or(|(bd, _)| d > bd + 1e-12) {
                best = Some((d, p));
            }
        }
        match best {
            Some((d, p)) if d > 1e-12 => centers.push(points[p].2.clone()),
            _ => break,
        }
    }

    let nearest = |pt: &[f64], centers: &[Vec<f64>]| -> usize {
        let mut best = (f64::INFINITY, 0);
        for (ci, c) in centers.iter().enumerate() {
            let d = dist2(pt, c);
            if d < best.0 - 1e-12 {
                best = (d, ci);
            }
        }
        best.1
    };

    let mut assign: Vec<usize> = points.iter().map(|p| nearest(&p.2, &centers)).collect();
    for _ in 0..iters {
        let dim = centers[0].len();
        let mut sums = vec![vec![0.0; dim]; centers.len()];
        let mut weights = vec![0.0; centers.len()];
        for (p, &c) in points.iter().zip(&assign) {
            weights[c] += p.1;
            for (s, x) in sums[c].iter_mut().zip(&p.2) {
                *s += p.1 * x;
            }
        }
        for (c, (s, w)) in sums.into_iter().zip(&weights).enumerate() {
            if *w > 0.0 {
                centers[c] = s.into_iter().map(|x| x / w).collect();
            }
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(&p.2, &centers)).collect();
        if next == assign {
            break;
        }
        assign = next;
    }

    let mut reps = Vec::new();
    for (ci, c) in centers.iter().enumerate() {
        let mut best: Option<(f64, usize)> = None;
        for (p, &a) in points.iter().zip(&assign) {
            if a != ci {
                continue;
            }
            let d = dist2(&p.2, c);
            if best.is_none_or(|(bd, bi)| d < bd - 1e-12 || ((d - bd).abs() <= 1e-12 && p.0 < bi)) {
                best = Some((d, p.0));
            }
        }
        if let Some((_, i)) = best {
            reps.push(i);
        }
    }
    reps.sort_unstable();
    reps
}

/// Union of the attributes revealed by the representative views plus the
/// category pair, canonically ordered, with its rendered text.
pub fn synthesize_description(candidate: &Candidate) -> (Vec<AttributeValue>, String) {
    let mut set: BTreeSet<AttributeValue> = candidate
        .representatives()
        .flat_map(|v| v.revealed.iter().cloned())
        .collect();
    set.insert(category_pair(&candidate.category));
    let attrs: Vec<AttributeValue> = set.into_iter().collect();
    let text = render(&candidate.category, &attrs);
    (attrs, text)
}

fn render(category: &str, attrs: &[AttributeValue]) -> String {
    let mut parts = vec![category.to_owned()];
    parts.extend(
        attrs
            .iter()
            .filter(|a| a.attribute != CATEGORY_ATTRIBUTE)
            .map(|a| a.phrase.clone()),
    );
    parts.join("; ")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CandidatePool {
    pub category: String,
    pub candidates: Vec<Candidate>,
    pub min_size: usize,
    pub fallback_step: usize,
    eps_cells: i32,
    cfg: PoolConfig,
}

impl CandidatePool {
    pub fn new(category: &str, cfg: PoolConfig, fallback_step: usize, cell_size: f64) -> Self {
        Self {
            category: category.to_owned(),
            candidates: Vec::new(),
            min_size: cfg.min_size,
            fallback_step,
            eps_cells: epsilon_cells(cfg.epsilon_m, cell_size),
            cfg,
        }
    }

    pub fn len(&self) -> usize {
        self.candidates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.candidates.is_empty()
    }

    pub fn get(&self, id: usize) -> Option<&Candidate> {
        self.candidates.iter().find(|c| c.id == id)
    }

    pub fn ids(&self) -> Vec<usize> {
        self.candidates.iter().map(|c| c.id).collect()
    }

    pub fn config(&self) -> &PoolConfig {
        &self.cfg
    }

    /// Best existing candidate for `cells`: highest overlap, then lowest id,
    /// provided the overlap reaches the merge threshold.
    pub fn best_match(&self, cells: &BTreeSet<Cell>) -> Option<usize> {
        let mut best: Option<(f64, usize)> = None;
        for (pos, c) in self.candidates.iter().enumerate() {
            let r = overlap_ratio(&c.region, cells, self.eps_cells).unwrap_or(0.0);
            if r >= self.cfg.overlap_threshold && best.is_none_or(|(br, _)| r > br) {
                best = Some((r, pos));
            }
        }
        best.map(|(_, pos)| pos)
    }

    /// Associates a detection with a candidate, merging into the best
    /// overlapping one or seeding a new candidate. When `allow_new` is false
    /// a detection that would seed a candidate is dropped and `None` returned.
    pub fn assign_detection(&mut self, det: &Detection, pose: &AgentPose, allow_new: bool) -> Option<usize> {
        debug_assert_eq!(det.category, self.category);
        if det.cells.is_empty() {
            return None;
        }
        let cells: BTreeSet<Cell> = det.cells.iter().copied().collect();
        let view = View {
            sector: det.sector,
            revealed: det.revealed.clone(),
            pose: *pose,
        };
        let pos = match self.best_match(&cells) {
            Some(pos) => {
                let c = &mut self.candidates[pos];
                c.region.extend(cells);
                c.views.push(view);
                c.location = centroid_cell(&c.region);
                pos
            }
            None if allow_new => {
                let id = self.candidates.len();
                self.candidates
                    .push(Candidate::seed(id, &self.category, &det.cells, view));
                self.candidates.len() - 1
            }
            None => return None,
        };
        self.describe(pos);
        Some(self.candidates[pos].id)
    }

    fn describe(&mut self, pos: usize) {
        let k = self.cfg.k_views;
        let iters = self.cfg.kmeans_iters;
        let first_only = self.cfg.use_first_view_only;
        let c = &mut self.candidates[pos];
        c.representative_views = if first_only {
            vec![0]
        } else {
            cluster_views(&c.views, k, iters)
        };
        let (d, t) = synthesize_description(c);
        c.description = d;
        c.text = t;
    }
}

/// Judgment may start once the pool holds `min_size` candidates or the
/// fallback step is reached.
pub fn pool_ready(pool: &CandidatePool, step: usize) -> bool {
    pool.len() >= pool.min_size || step >= pool.fallback_step
}

#[cfg(test)]
mod tests;
