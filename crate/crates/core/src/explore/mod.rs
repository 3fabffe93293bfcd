//! Frontier exploration with loop escape and line-of-sight rotation.
//!
//! The policy pursues the nearest reachable frontier by path distance. Two
//! heuristics sit on top: an EMA "loopness" detector that blacklists the
//! frontier being chased when the agent stops making progress, and a full
//! in-place rotation whenever the surroundings are open enough and the agent
//! has moved away from the last rotation point.

use std::collections::{BTreeMap, BTreeSet, BinaryHeap};

use serde::{Deserialize, Serialize};

use crate::world::{
    heading_direction, Action, AgentPose, Cell, CellState, OccupancyGrid, HEADINGS, STRIDE_M,
};

/// Side of the square bucket that blacklisting applies to, in meters.
pub const BLACKLIST_BUCKET_M: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExploreConfig {
    pub alpha: f64,
    pub spread_floor: f64,
    pub loop_threshold: f64,
    pub loop_streak: usize,
    pub blacklist_ttl: usize,
    pub openness_threshold: f64,
    pub rotation_min_dist_m: f64,
}

impl Default for ExploreConfig {
    fn default() -> Self {
        Self {
            alpha: 0.1,
            spread_floor: 1e-6,
            loop_threshold: 0.9,
            loop_streak: 5,
            blacklist_ttl: 50,
            openness_threshold: 0.1,
            rotation_min_dist_m: 1.0,
        }
    }
}

/// Frontier cells of the known map plus the temporary blacklist.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrontierMap {
    pub frontiers: BTreeSet<Cell>,
    /// Blacklist bucket -> first step at which it is eligible again.
    pub blacklist: BTreeMap<Cell, usize>,
    bucket_cells: i32,
}

impl FrontierMap {
    fn bucket(&self, c: Cell) -> Cell {
        let b = self.bucket_cells.max(1);
        Cell::new(c.x.div_euclid(b), c.y.div_euclid(b))
    }

    pub fn is_blacklisted(&self, c: Cell, step: usize) -> bool {
        self.blacklist
            .get(&self.bucket(c))
            .is_some_and(|&until| step < until)
    }

    /// Recomputes the frontier set and drops expired blacklist entries.
    pub fn refresh(&mut self, known: &OccupancyGrid, step: usize) {
        let fresh = detect_frontiers(known);
        self.frontiers = fresh.frontiers;
        self.bucket_cells = fresh.bucket_cells;
        self.blacklist.retain(|_, until| step < *until);
    }

    /// Blacklists every frontier sharing `c`'s bucket until `until`.
    pub fn blacklist_bucket(&mut self, c: Cell, until: usize) {
        let b = self.bucket(c);
        self.blacklist.insert(b, until);
    }

    pub fn eligible(&self, step: usize) -> impl Iterator<Item = Cell> + '_ {
        self.frontiers
            .iter()
            .copied()
            .filter(move |c| !self.is_blacklisted(*c, step))
    }
}

/// Known-free cells with at least one unknown 4-neighbor.
pub fn detect_frontiers(known: &OccupancyGrid) -> FrontierMap {
    let frontiers = known
        .cells()
        .filter(|(c, s)| {
            *s == CellState::Free
                && c.neighbors4()
                    .iter()
                    .any(|n| known.in_bounds(*n) && known.get(*n) == CellState::Unknown)
        })
        .map(|(c, _)| c)
        .collect();
    FrontierMap {
        frontiers,
        blacklist: BTreeMap::new(),
        bucket_cells: (BLACKLIST_BUCKET_M / known.cell_size()).round().max(1.0) as i32,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopState {
    pub center: (f64, f64),
    pub spread: f64,
    pub alpha: f64,
    pub spread_floor: f64,
    pub consecutive_high: usize,
}

impl LoopState {
    pub fn new(pose: &AgentPose, cfg: &ExploreConfig) -> Self {
        Self {
            center: (pose.x, pose.y),
            spread: cfg.spread_floor,
            alpha: cfg.alpha,
            spread_floor: cfg.spread_floor,
            consecutive_high: 0,
        }
    }
}

/// One EMA update. The center moves first; the spread then uses the new
/// center.
pub fn update_loopness(state: &LoopState, pose: &AgentPose) -> (LoopState, f64) {
    let a = state.alpha;
    let center = (
        a * pose.x + (1.0 - a) * state.center.0,
        a * pose.y + (1.0 - a) * state.center.1,
    );
    let d2 = (pose.x - center.0).powi(2) + (pose.y - center.1).powi(2);
    let spread = (a * d2 + (1.0 - a) * state.spread).max(state.spread_floor);
    let next = LoopState {
        center,
        spread,
        ..*state
    };
    (next, (-d2 / spread).exp())
}

/// Advances the high-loopness streak for a step spent chasing
/// `target_frontier` and blacklists its bucket once the streak reaches
/// `loop_streak`. Returns whether the blacklist fired.
pub fn maybe_blacklist(
    state: &mut LoopState,
    loopness: f64,
    target_frontier: Cell,
    frontiers: &mut FrontierMap,
    step: usize,
    cfg: &ExploreConfig,
) -> bool {
    if loopness >= cfg.loop_threshold {
        state.consecutive_high += 1;
    } else {
        state.consecutive_high = 0;
    }
    if state.consecutive_high >= cfg.loop_streak {
        state.consecutive_high = 0;
        frontiers.blacklist_bucket(target_frontier, step + cfg.blacklist_ttl);
        true
    } else {
        false
    }
}

/// Share of the 360 one-degree bins whose ray reaches no known obstacle
/// within `range`.
pub fn compute_openness(pose: &AgentPose, known: &OccupancyGrid, range: f64) -> f64 {
    let occluded = (0..360)
        .filter(|deg| {
            let ang = (*deg as f64).to_radians();
            let mut hit = false;
            known.traverse(pose.x, pose.y, ang.cos(), ang.sin(), range, |c, _| {
                hit = known.get(c) == CellState::Obstacle;
                !hit
            });
            hit
        })
        .count();
    1.0 - occluded as f64 / 360.0
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct RotationState {
    pub last_rotation_position: Option<(f64, f64)>,
}

pub fn should_rotate(openness: f64, pose: &AgentPose, state: &RotationState, cfg: &ExploreConfig) -> bool {
    openness >= cfg.openness_threshold
        && state
            .last_rotation_position
            .is_none_or(|(x, y)| pose.distance_to(x, y) >= cfg.rotation_min_dist_m)
}

/// What the policy wants the agent to do next.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Decision {
    Act(Action),
    /// Within the requested stop radius of the navigation goal.
    Arrived,
    /// No frontier left to pursue (or the goal cannot be reached).
    Exhausted,
}

/// Navigation goal: a set of cells and the radius around their centers
/// that counts as arrival.
#[derive(Debug, Clone, PartialEq)]
pub struct Goal {
    pub cells: Vec<Cell>,
    pub radius: f64,
}

impl Goal {
    pub fn reached(&self, pose: &AgentPose, cell_size: f64) -> bool {
        crate::world::within_radius(pose, &self.cells, cell_size, self.radius)
    }
}

/// Traversal cost field from `sources` over cells allowed by `passable`,
/// 8-connected without corner cutting. `f64::INFINITY` where unreachable.
pub fn distance_field<F>(grid: &OccupancyGrid, sources: &[Cell], passable: F) -> Vec<f64>
where
    F: Fn(Cell) -> bool,
{
    #[derive(PartialEq)]
    struct Item(f64, usize);
    impl Eq for Item {}
    impl PartialOrd for Item {
        fn partial_cmp(&self, o: &Self) -> Option<std::cmp::Ordering> {
            Some(self.cmp(o))
        }
    }
    impl Ord for Item {
        fn cmp(&self, o: &Self) -> std::cmp::Ordering {
            o.0.total_cmp(&self.0).then(o.1.cmp(&self.1))
        }
    }

    let cs = grid.cell_size();
    let mut dist = vec![f64::INFINITY; grid.len()];
    let mut heap = BinaryHeap::new();
    for &s in sources {
        if grid.in_bounds(s) && passable(s) {
            let i = grid.index(s);
            dist[i] = 0.0;
            heap.push(Item(0.0, i));
        }
    }
    while let Some(Item(d, i)) = heap.pop() {
        if d > dist[i] {
            continue;
        }
        let c = grid.cell_at_index(i);
        for dx in -1..=1 {
            for dy in -1..=1 {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let n = Cell::new(c.x + dx, c.y + dy);
                if !grid.in_bounds(n) || !passable(n) {
                    continue;
                }
                let diag = dx != 0 && dy != 0;
                if diag && !(passable(Cell::new(c.x + dx, c.y)) && passable(Cell::new(c.x, c.y + dy))) {
                    continue;
                }
                let nd = d + if diag { std::f64::consts::SQRT_2 * cs } else { cs };
                let ni = grid.index(n);
                if nd < dist[ni] {
                    dist[ni] = nd;
                    heap.push(Item(nd, ni));
                }
            }
        }
    }
    dist
}

/// Outcome of a forward stride along heading `h` on the known map: the
/// landing pose, and whether every crossed cell is known free (`Some(true)`)
/// or merely not known to be blocked (`Some(false)`).
fn forward_known(known: &OccupancyGrid, pose: &AgentPose, h: u8) -> Option<(AgentPose, bool)> {
    let (dx, dy) = heading_direction(h);
    let next = AgentPose {
        x: pose.x + STRIDE_M * dx,
        y: pose.y + STRIDE_M * dy,
        heading_index: h,
    };
    let landing = known.cell_of(next.x, next.y)?;
    let mut all_free = known.get(landing) == CellState::Free;
    let mut blocked = known.get(landing) == CellState::Obstacle;
    known.traverse(pose.x, pose.y, dx, dy, STRIDE_M, |c, _| {
        match known.get(c) {
            CellState::Free => {}
            CellState::Unknown => all_free = false,
            CellState::Obstacle => blocked = true,
        }
        !blocked
    });
    (!blocked).then_some((next, all_free))
}

/// Smooth potential over positions: best field value among the 3x3 cells
/// around the position plus the straight-line distance to that cell center.
fn potential(known: &OccupancyGrid, field: &[f64], x: f64, y: f64) -> f64 {
    let Some(c) = known.cell_of(x, y) else {
        return f64::INFINITY;
    };
    let mut best = f64::INFINITY;
    for dx in -1..=1 {
        for dy in -1..=1 {
            let q = Cell::new(c.x + dx, c.y + dy);
            if !known.in_bounds(q) {
                continue;
            }
            let f = field[known.index(q)];
            if f.is_finite() {
                let (qx, qy) = known.center(q);
                best = best.min(f + (qx - x).hypot(qy - y));
            }
        }
    }
    best
}

fn turn_toward(current: u8, desired: u8) -> Action {
    let left = (desired + HEADINGS - current) % HEADINGS;
    if left <= HEADINGS / 2 {
        Action::TurnLeft
    } else {
        Action::TurnRight
    }
}

/// Greedy descent on `field`. The preferred heading is the one whose stride
/// lowers the potential most, counting unknown cells as passable; turning
/// toward it reveals them. The agent moves forward once its heading is
/// within one turn of the preferred one and the stride is known free and
/// still descends. `None` when no stride lowers the potential.
fn descend(known: &OccupancyGrid, field: &[f64], pose: &AgentPose) -> Option<Action> {
    let here = potential(known, field, pose.x, pose.y);
    let mut best_any: Option<(f64, u8)> = None;
    let mut best_free: Option<(f64, u8)> = None;
    let mut forward_value = None;
    for h in 0..HEADINGS {
        let Some((next, free)) = forward_known(known, pose, h) else {
            continue;
        };
        let v = potential(known, field, next.x, next.y);
        if !(v < here - 1e-9) {
            continue;
        }
        if h == pose.heading_index && free {
            forward_value = Some(v);
        }
        if best_any.is_none_or(|(bv, _)| v < bv - 1e-12) {
            best_any = Some((v, h));
        }
        if free && best_free.is_none_or(|(bv, _)| v < bv - 1e-12) {
            best_free = Some((v, h));
        }
    }
    let (_, mut h) = best_any?;
    if h == pose.heading_index && forward_value.is_none() {
        // Facing the preferred heading and it is still not known free.
        h = best_free?.1;
    }
    let gap = (h + HEADINGS - pose.heading_index) % HEADINGS;
    let near = gap <= 1 || gap == HEADINGS - 1;
    if near && forward_value.is_some() {
        Some(Action::MoveForward)
    } else {
        Some(turn_toward(pose.heading_index, h))
    }
}

/// Exploration policy state for one episode.
#[derive(Debug, Clone)]
pub struct ExplorePolicy {
    cfg: ExploreConfig,
    range: f64,
    loop_state: LoopState,
    rotation: RotationState,
    frontiers: FrontierMap,
    pending_turns: u8,
    final_spin_done: bool,
    target: Option<Cell>,
}

impl ExplorePolicy {
    pub fn new(cfg: ExploreConfig, start: &AgentPose, sensing_range: f64) -> Self {
        Self {
            loop_state: LoopState::new(start, &cfg),
            cfg,
            range: sensing_range,
            rotation: RotationState::default(),
            frontiers: FrontierMap::default(),
            pending_turns: 0,
            final_spin_done: false,
            target: None,
        }
    }

    pub fn frontiers(&self) -> &FrontierMap {
        &self.frontiers
    }

    pub fn loop_state(&self) -> &LoopState {
        &self.loop_state
    }

    /// Frontier currently being pursued.
    pub fn target(&self) -> Option<Cell> {
        self.target
    }

    /// Clears exhaustion so exploration can resume after the map changed.
    pub fn resume(&mut self) {
        self.final_spin_done = false;
    }

    fn start_spin(&mut self) -> Decision {
        self.pending_turns = HEADINGS - 1;
        Decision::Act(Action::TurnLeft)
    }

    /// Chooses the next action. With a `goal` the policy navigates toward it
    /// (unknown cells are planned through optimistically); otherwise it
    /// explores.
    pub fn next_action(
        &mut self,
        known: &OccupancyGrid,
        pose: &AgentPose,
        step: usize,
        goal: Option<&Goal>,
    ) -> Decision {
        let (ls, loopness) = update_loopness(&self.loop_state, pose);
        self.loop_state = ls;

        if self.pending_turns > 0 {
            self.pending_turns -= 1;
            self.loop_state.consecutive_high = 0;
            return Decision::Act(Action::TurnLeft);
        }

        if let Some(goal) = goal {
            self.loop_state.consecutive_high = 0;
            self.target = None;
            if goal.reached(pose, known.cell_size()) {
                return Decision::Arrived;
            }
            // Any pose inside a source cell must count as arrived, so the
            // radius is shrunk by half a cell diagonal where possible.
            let cs = known.cell_size();
            let inner = Goal {
                cells: goal.cells.clone(),
                radius: goal.radius - cs * std::f64::consts::FRAC_1_SQRT_2,
            };
            let sources_within = |g: &Goal| -> Vec<Cell> {
                known
                    .cells()
                    .filter(|(c, s)| *s != CellState::Obstacle && g.reached(&cell_pose(known, *c), cs))
                    .map(|(c, _)| c)
                    .collect()
            };
            let mut sources = sources_within(&inner);
            if sources.is_empty() {
                sources = sources_within(goal);
            }
            let field = distance_field(known, &sources, |c| known.get(c) != CellState::Obstacle);
            return match descend(known, &field, pose) {
                Some(a) => Decision::Act(a),
                None => Decision::Exhausted,
            };
        }

        self.frontiers.refresh(known, step);

        let openness = compute_openness(pose, known, self.range);
        if should_rotate(openness, pose, &self.rotation, &self.cfg) {
            self.rotation.last_rotation_position = Some((pose.x, pose.y));
            self.loop_state.consecutive_high = 0;
            return self.start_spin();
        }

        let Some(here) = known.cell_of(pose.x, pose.y) else {
            return Decision::Exhausted;
        };
        let reach = distance_field(known, &[here], |c| known.get(c) == CellState::Free);
        let mut chosen = self.nearest_frontier(known, &reach, step);

        if let Some(f) = chosen {
            if Some(f) == self.target
                && maybe_blacklist(&mut self.loop_state, loopness, f, &mut self.frontiers, step, &self.cfg)
            {
                log::debug!("blacklisting frontier bucket around {:?} at step {}", f, step);
                chosen = self.nearest_frontier(known, &reach, step);
            }
        }
        if chosen != self.target {
            self.loop_state.consecutive_high = 0;
        }
        self.target = chosen;

        let Some(f) = chosen else {
            let waiting = self
                .frontiers
                .frontiers
                .iter()
                .any(|c| reach[known.index(*c)].is_finite());
            if waiting {
                return Decision::Act(Action::TurnLeft);
            }
            if !self.final_spin_done {
                self.final_spin_done = true;
                return self.start_spin();
            }
            return Decision::Exhausted;
        };
        self.final_spin_done = false;

        if f == here {
            // Standing on the frontier: look around to reveal its unknown side.
            return Decision::Act(Action::TurnLeft);
        }
        let field = distance_field(known, &[f], |c| known.get(c) == CellState::Free);
        match descend(known, &field, pose) {
            Some(a) => Decision::Act(a),
            None => Decision::Act(Action::TurnLeft),
        }
    }

    fn nearest_frontier(&self, known: &OccupancyGrid, reach: &[f64], step: usize) -> Option<Cell> {
        let mut best: Option<(f64, usize, Cell)> = None;
        for c in self.frontiers.eligible(step) {
            let i = known.index(c);
            let d = reach[i];
            if !d.is_finite() {
                continue;
            }
            let better = match best {
                None => true,
                Some((bd, bi, _)) => d < bd - 1e-9 || ((d - bd).abs() <= 1e-9 && i < bi),
            };
            if better {
                best = Some((d, i, c));
            }
        }
        best.map(|(_, _, c)| c)
    }
}

fn cell_pose(grid: &OccupancyGrid, c: Cell) -> AgentPose {
    let (x, y) = grid.center(c);
    AgentPose { x, y, heading_index: 0 }
}
