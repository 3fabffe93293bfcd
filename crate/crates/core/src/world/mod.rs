//! Deterministic 2D grid world: instances with attribute ground truth, an
//! agent with a 30 degree field of view, four discrete actions and success
//! adjudication.

mod grid;
mod scenario;

use std::cmp::Ordering;
use std::collections::{BTreeMap, BinaryHeap};
use std::f64::consts::{PI, TAU};

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use grid::{heading_direction, Cell, CellState, OccupancyGrid};
pub use scenario::{GridDoc, InstanceSpec, Scenario, ScenarioDoc, SectorAttribute, StartDoc};

/// Forward stride in meters.
pub const STRIDE_M: f64 = 0.25;
/// Heading change per turn action.
pub const TURN_DEG: f64 = 30.0;
/// Number of distinct headings (`360 / TURN_DEG`).
pub const HEADINGS: u8 = 12;
/// Horizontal field of view.
pub const FOV_DEG: i32 = 30;
pub const DEFAULT_SENSING_RANGE_M: f64 = 5.0;
/// Bearing sectors used as view descriptors.
pub const SECTORS: usize = 8;
/// Longest allowed attribute phrase, in words.
pub const MAX_PHRASE_WORDS: usize = 10;

#[derive(Debug, Error)]
pub enum WorldError {
    #[error("scenario schema violation: {0}")]
    Schema(String),
    #[error("scenario has no target instance")]
    NoTarget,
    #[error("multiple targets")]
    MultipleTargets,
    #[error("out of bounds: {0}")]
    OutOfBounds(String),
    #[error("start pose is not in a free cell")]
    StartBlocked,
    #[error("action after episode termination")]
    Terminated,
    #[error("target {0} is unreachable from the start pose")]
    Unreachable(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct WorldConfig {
    pub sensing_range_m: f64,
}

impl Default for WorldConfig {
    fn default() -> Self {
        Self {
            sensing_range_m: DEFAULT_SENSING_RANGE_M,
        }
    }
}

/// An attribute-value pair such as `color = blue`, with a short rendering.
///
/// Identity (equality, ordering, hashing) is on `(attribute, value)`; the
/// phrase is presentation only.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct AttributeValue {
    pub attribute: String,
    pub value: String,
    pub phrase: String,
}

impl AttributeValue {
    pub fn new(attribute: impl Into<String>, value: impl Into<String>, phrase: impl Into<String>) -> Self {
        Self {
            attribute: attribute.into(),
            value: value.into(),
            phrase: phrase.into(),
        }
    }

    pub fn validate(&self) -> Result<(), WorldError> {
        if self.attribute.trim().is_empty() || self.value.trim().is_empty() {
            return Err(WorldError::Schema("attribute and value must be non-empty".into()));
        }
        if self.phrase.split_whitespace().count() > MAX_PHRASE_WORDS {
            return Err(WorldError::Schema(format!(
                "phrase '{}' exceeds {} words",
                self.phrase, MAX_PHRASE_WORDS
            )));
        }
        Ok(())
    }

    /// `attribute=value`, the token used for hashing and logging.
    pub fn key(&self) -> String {
        format!("{}={}", self.attribute, self.value)
    }
}

impl PartialEq for AttributeValue {
    fn eq(&self, other: &Self) -> bool {
        self.attribute == other.attribute && self.value == other.value
    }
}

impl Eq for AttributeValue {}

impl PartialOrd for AttributeValue {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for AttributeValue {
    fn cmp(&self, other: &Self) -> Ordering {
        (&self.attribute, &self.value).cmp(&(&other.attribute, &other.value))
    }
}

impl std::hash::Hash for AttributeValue {
    fn hash<H: std::hash::Hasher>(&self, state: &mut H) {
        self.attribute.hash(state);
        self.value.hash(state);
    }
}

/// Agent position in meters and heading as a multiple of [`TURN_DEG`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AgentPose {
    pub x: f64,
    pub y: f64,
    pub heading_index: u8,
}

impl AgentPose {
    pub fn heading(&self) -> f64 {
        (self.heading_index % HEADINGS) as f64 * TURN_DEG.to_radians()
    }

    pub fn distance_to(&self, x: f64, y: f64) -> f64 {
        (self.x - x).hypot(self.y - y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    MoveForward,
    TurnLeft,
    TurnRight,
    Stop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EpisodeStatus {
    Running,
    Stopped,
    Horizon,
}

impl EpisodeStatus {
    pub fn is_terminated(self) -> bool {
        self != EpisodeStatus::Running
    }
}

/// One sensed instance.
#[derive(Debug, Clone, PartialEq)]
pub struct Detection {
    pub instance: usize,
    pub category: String,
    /// Footprint cells hit by at least one ray, sorted.
    pub cells: Vec<Cell>,
    /// Bearing sector of the agent as seen from the instance centroid.
    pub sector: u8,
    /// Attributes observable from `sector`.
    pub revealed: Vec<AttributeValue>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct Observation {
    pub detections: Vec<Detection>,
    pub free: Vec<Cell>,
    pub obstacles: Vec<Cell>,
}

/// Bearing `(from -> to)` quantized to [`SECTORS`] sectors; sector 0 is
/// centered on east and sectors advance counter-clockwise.
pub fn bearing_sector(from: (f64, f64), to: (f64, f64)) -> u8 {
    let ang = (to.1 - from.1).atan2(to.0 - from.0).rem_euclid(TAU);
    let width = TAU / SECTORS as f64;
    (((ang + width / 2.0) / width).floor() as usize % SECTORS) as u8
}

/// Raycasts the field of view from `pose`: one ray per degree across the
/// 30 degree cone, each stopping at the first obstacle or instance cell.
pub fn sense(scenario: &Scenario, pose: &AgentPose, range: f64) -> Observation {
    let truth = scenario.truth();
    let mut free = Vec::new();
    let mut obstacles = Vec::new();
    let mut hits: BTreeMap<usize, Vec<Cell>> = BTreeMap::new();
    let half = FOV_DEG / 2;
    for off in -half..=half {
        let ang = pose.heading() + (off as f64).to_radians();
        truth.traverse(pose.x, pose.y, ang.cos(), ang.sin(), range, |c, _| {
            if let Some(k) = scenario.occupant(c) {
                hits.entry(k).or_default().push(c);
                obstacles.push(c);
                false
            } else if truth.get(c) == CellState::Obstacle {
                obstacles.push(c);
                false
            } else {
                free.push(c);
                true
            }
        });
    }
    free.sort();
    free.dedup();
    obstacles.sort();
    obstacles.dedup();
    let cs = scenario.cell_size();
    let detections = hits
        .into_iter()
        .map(|(k, mut cells)| {
            cells.sort();
            cells.dedup();
            let inst = &scenario.instances()[k];
            let sector = bearing_sector(inst.centroid(cs), (pose.x, pose.y));
            Detection {
                instance: k,
                category: inst.category.clone(),
                cells,
                sector,
                revealed: inst.revealed_from(sector),
            }
        })
        .collect();
    Observation {
        detections,
        free,
        obstacles,
    }
}

/// Success iff the final position is within `radius` (closed) of the center
/// of some footprint cell of the target.
pub fn within_radius(pose: &AgentPose, footprint: &[Cell], cell_size: f64, radius: f64) -> bool {
    footprint.iter().any(|c| {
        let cx = (c.x as f64 + 0.5) * cell_size;
        let cy = (c.y as f64 + 0.5) * cell_size;
        pose.distance_to(cx, cy) <= radius
    })
}

pub fn adjudicate(final_pose: &AgentPose, status: EpisodeStatus, scenario: &Scenario) -> bool {
    status == EpisodeStatus::Stopped
        && within_radius(
            final_pose,
            &scenario.target().footprint,
            scenario.cell_size(),
            scenario.success_radius(),
        )
}

#[derive(Debug, Clone, Copy, PartialEq)]
struct Cost(f64);

impl Eq for Cost {}

impl PartialOrd for Cost {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Cost {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0)
    }
}

/// Length of the shortest 8-connected path (no corner cutting) from the
/// start cell to any cell whose center is within the success radius of the
/// target footprint. Zero when the start position already qualifies.
pub fn shortest_path_length(
    scenario: &Scenario,
    from: &AgentPose,
    target: &InstanceSpec,
) -> Result<f64, WorldError> {
    let cs = scenario.cell_size();
    let r = scenario.success_radius();
    if within_radius(from, &target.footprint, cs, r) {
        return Ok(0.0);
    }
    let truth = scenario.truth();
    let start = truth
        .cell_of(from.x, from.y)
        .ok_or_else(|| WorldError::OutOfBounds("start".into()))?;
    let is_goal = |c: Cell| {
        let (x, y) = truth.center(c);
        let p = AgentPose { x, y, heading_index: 0 };
        within_radius(&p, &target.footprint, cs, r)
    };
    let mut dist = vec![f64::INFINITY; truth.len()];
    let mut heap = BinaryHeap::new();
    dist[truth.index(start)] = 0.0;
    heap.push((Cost(0.0), start));
    while let Some((Cost(d), c)) = heap.pop() {
        if d > dist[truth.index(c)] {
            continue;
        }
        if is_goal(c) {
            return Ok(d);
        }
        for dx in -1..=1 {
            for dy in -1..=1 {
                if dx == 0 && dy == 0 {
                    continue;
                }
                let n = Cell::new(c.x + dx, c.y + dy);
                if !scenario.traversable(n) {
                    continue;
                }
                let diagonal = dx != 0 && dy != 0;
                if diagonal
                    && !(scenario.traversable(Cell::new(c.x + dx, c.y))
                        && scenario.traversable(Cell::new(c.x, c.y + dy)))
                {
                    continue;
                }
                let nd = d + if diagonal { std::f64::consts::SQRT_2 * cs } else { cs };
                let ni = truth.index(n);
                if nd < dist[ni] {
                    dist[ni] = nd;
                    heap.push((Cost(nd), n));
                }
            }
        }
    }
    Err(WorldError::Unreachable(target.id.clone()))
}

#[derive(Debug, Clone)]
pub struct StepOutcome {
    pub pose: AgentPose,
    pub observation: Observation,
    pub status: EpisodeStatus,
}

/// One episode's live environment: ground truth, agent pose, step counter
/// and the agent's online map.
#[derive(Debug, Clone)]
pub struct Environment<'a> {
    scenario: &'a Scenario,
    pose: AgentPose,
    steps: usize,
    horizon: usize,
    status: EpisodeStatus,
    known: OccupancyGrid,
    path_length: f64,
    sensing_range: f64,
}

impl<'a> Environment<'a> {
    pub fn new(scenario: &'a Scenario, horizon: usize, sensing_range: f64) -> Self {
        let truth = scenario.truth();
        let mut known = OccupancyGrid::new(
            truth.width(),
            truth.height(),
            truth.cell_size(),
            CellState::Unknown,
        );
        let start = scenario.start();
        if let Some(c) = truth.cell_of(start.x, start.y) {
            known.set(c, CellState::Free);
        }
        Self {
            scenario,
            pose: start,
            steps: 0,
            horizon,
            status: EpisodeStatus::Running,
            known,
            path_length: 0.0,
            sensing_range,
        }
    }

    pub fn scenario(&self) -> &'a Scenario {
        self.scenario
    }

    pub fn pose(&self) -> AgentPose {
        self.pose
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn status(&self) -> EpisodeStatus {
        self.status
    }

    pub fn known(&self) -> &OccupancyGrid {
        &self.known
    }

    /// Sum of per-step displacements, meters.
    pub fn path_length(&self) -> f64 {
        self.path_length
    }

    /// Senses from the current pose and folds the result into the known map.
    pub fn observe(&mut self) -> Observation {
        let obs = sense(self.scenario, &self.pose, self.sensing_range);
        for &c in &obs.free {
            if self.known.get(c) == CellState::Unknown {
                self.known.set(c, CellState::Free);
            }
        }
        for &c in &obs.obstacles {
            if self.known.get(c) == CellState::Unknown {
                self.known.set(c, CellState::Obstacle);
            }
        }
        obs
    }

    /// Pose after one forward stride, or `None` when any cell crossed on the
    /// way is blocked.
    fn forward_target(&self) -> Option<AgentPose> {
        let (dx, dy) = heading_direction(self.pose.heading_index);
        let next = AgentPose {
            x: self.pose.x + STRIDE_M * dx,
            y: self.pose.y + STRIDE_M * dy,
            heading_index: self.pose.heading_index,
        };
        let mut clear = true;
        self.scenario
            .truth()
            .traverse(self.pose.x, self.pose.y, dx, dy, STRIDE_M, |c, _| {
                clear = self.scenario.traversable(c);
                clear
            });
        let landing = self.scenario.truth().cell_of(next.x, next.y);
        (clear && landing.is_some_and(|c| self.scenario.traversable(c))).then_some(next)
    }

    pub fn step(&mut self, action: Action) -> Result<StepOutcome, WorldError> {
        if self.status.is_terminated() {
            return Err(WorldError::Terminated);
        }
        match action {
            Action::MoveForward => {
                if let Some(next) = self.forward_target() {
                    self.path_length += STRIDE_M;
                    self.pose = next;
                }
            }
            Action::TurnLeft => {
                self.pose.heading_index = (self.pose.heading_index + 1) % HEADINGS;
            }
            Action::TurnRight => {
                self.pose.heading_index = (self.pose.heading_index + HEADINGS - 1) % HEADINGS;
            }
            Action::Stop => self.status = EpisodeStatus::Stopped,
        }
        self.steps += 1;
        if self.status == EpisodeStatus::Running && self.steps >= self.horizon {
            self.status = EpisodeStatus::Horizon;
        }
        let observation = self.observe();
        Ok(StepOutcome {
            pose: self.pose,
            observation,
            status: self.status,
        })
    }

    pub fn succeeded(&self) -> bool {
        adjudicate(&self.pose, self.status, self.scenario)
    }
}

/// Normalizes an angle to `(-pi, pi]`.
pub fn wrap_angle(a: f64) -> f64 {
    let w = a.rem_euclid(TAU);
    if w > PI {
        w - TAU
    } else {
        w
    }
}

#[cfg(test)]
mod tests;
