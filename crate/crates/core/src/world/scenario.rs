//! Scenario documents: the JSON ground truth an episode runs against.

use std::collections::HashSet;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::grid::{Cell, CellState, OccupancyGrid};
use super::{AgentPose, AttributeValue, WorldError, SECTORS};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridDoc {
    pub width: usize,
    pub height: usize,
    pub cell_size: f64,
    pub obstacles: Vec<Cell>,
}

/// Ground-truth attribute plus the bearing sectors from which it can be seen.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SectorAttribute {
    #[serde(flatten)]
    pub value: AttributeValue,
    pub visible_sectors: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    pub id: String,
    pub category: String,
    pub footprint: Vec<Cell>,
    pub attributes: Vec<SectorAttribute>,
    pub is_target: bool,
}

impl InstanceSpec {
    pub fn attribute_values(&self) -> impl Iterator<Item = &AttributeValue> {
        self.attributes.iter().map(|a| &a.value)
    }

    /// Attributes observable from bearing sector `sector`.
    pub fn revealed_from(&self, sector: u8) -> Vec<AttributeValue> {
        self.attributes
            .iter()
            .filter(|a| a.visible_sectors.contains(&sector))
            .map(|a| a.value.clone())
            .collect()
    }

    /// Mean footprint cell center, meters.
    pub fn centroid(&self, cell_size: f64) -> (f64, f64) {
        let n = self.footprint.len() as f64;
        let (sx, sy) = self.footprint.iter().fold((0.0, 0.0), |(sx, sy), c| {
            (sx + c.x as f64 + 0.5, sy + c.y as f64 + 0.5)
        });
        (sx / n * cell_size, sy / n * cell_size)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StartDoc {
    pub x: f64,
    pub y: f64,
    pub heading_deg: f64,
}

/// Serialized scenario, exactly as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioDoc {
    #[serde(default)]
    pub id: String,
    pub grid: GridDoc,
    pub instances: Vec<InstanceSpec>,
    pub start: StartDoc,
    pub horizon: usize,
    pub success_radius_m: f64,
}

/// A validated scenario with derived lookup structures.
#[derive(Debug, Clone)]
pub struct Scenario {
    doc: ScenarioDoc,
    truth: OccupancyGrid,
    occupant: Vec<Option<usize>>,
    target: usize,
    start: AgentPose,
}

impl PartialEq for Scenario {
    fn eq(&self, other: &Self) -> bool {
        self.doc == other.doc
    }
}

impl Scenario {
    pub fn from_doc(doc: ScenarioDoc) -> Result<Self, WorldError> {
        let g = &doc.grid;
        if g.width == 0 || g.height == 0 {
            return Err(WorldError::Schema("grid width and height must be >= 1".into()));
        }
        if !(g.cell_size > 0.0 && g.cell_size.is_finite()) {
            return Err(WorldError::Schema("cell_size must be positive".into()));
        }
        if !(doc.success_radius_m >= 0.0 && doc.success_radius_m.is_finite()) {
            return Err(WorldError::Schema("success_radius_m must be non-negative".into()));
        }
        if doc.horizon == 0 {
            return Err(WorldError::Schema("horizon must be >= 1".into()));
        }
        let mut truth = OccupancyGrid::new(g.width, g.height, g.cell_size, CellState::Free);
        for &c in &g.obstacles {
            if !truth.in_bounds(c) {
                return Err(WorldError::OutOfBounds(format!("obstacle {:?}", c)));
            }
            truth.set(c, CellState::Obstacle);
        }

        let targets: Vec<usize> = doc
            .instances
            .iter()
            .enumerate()
            .filter(|(_, i)| i.is_target)
            .map(|(k, _)| k)
            .collect();
        let target = match targets.as_slice() {
            [] => return Err(WorldError::NoTarget),
            [t] => *t,
            _ => return Err(WorldError::MultipleTargets),
        };

        let mut ids = HashSet::new();
        let mut occupant = vec![None; truth.len()];
        for (k, inst) in doc.instances.iter().enumerate() {
            if !ids.insert(inst.id.as_str()) {
                return Err(WorldError::Schema(format!("duplicate instance id {}", inst.id)));
            }
            if inst.category.is_empty() {
                return Err(WorldError::Schema(format!("instance {} has empty category", inst.id)));
            }
            if inst.footprint.is_empty() {
                return Err(WorldError::Schema(format!("instance {} has empty footprint", inst.id)));
            }
            for &c in &inst.footprint {
                if !truth.in_bounds(c) {
                    return Err(WorldError::OutOfBounds(format!(
                        "footprint cell {:?} of {}",
                        c, inst.id
                    )));
                }
                if truth.get(c) == CellState::Obstacle {
                    return Err(WorldError::Schema(format!(
                        "footprint cell {:?} of {} overlaps an obstacle",
                        c, inst.id
                    )));
                }
                let slot = &mut occupant[truth.index(c)];
                if slot.is_some() {
                    return Err(WorldError::Schema(format!(
                        "footprint cell {:?} of {} overlaps another instance",
                        c, inst.id
                    )));
                }
                *slot = Some(k);
            }
            for a in &inst.attributes {
                a.value.validate()?;
                if a.visible_sectors.iter().any(|s| *s as usize >= SECTORS) {
                    return Err(WorldError::Schema(format!(
                        "attribute {} of {} has a sector outside 0..{}",
                        a.value.attribute, inst.id, SECTORS
                    )));
                }
            }
        }

        let s = &doc.start;
        let turns = s.heading_deg / 30.0;
        if !s.heading_deg.is_finite() || (turns - turns.round()).abs() > 1e-9 {
            return Err(WorldError::Schema(
                "start heading_deg must be a multiple of 30".into(),
            ));
        }
        let heading_index = (turns.round() as i64).rem_euclid(12) as u8;
        let start = AgentPose {
            x: s.x,
            y: s.y,
            heading_index,
        };
        let start_ok = truth
            .cell_of(s.x, s.y)
            .map(|c| truth.get(c) == CellState::Free && occupant[truth.index(c)].is_none())
            .unwrap_or(false);
        if !start_ok {
            return Err(WorldError::StartBlocked);
        }

        Ok(Self {
            doc,
            truth,
            occupant,
            target,
            start,
        })
    }

    pub fn from_json(text: &str) -> Result<Self, WorldError> {
        let doc: ScenarioDoc =
            serde_json::from_str(text).map_err(|e| WorldError::Schema(e.to_string()))?;
        Self::from_doc(doc)
    }

    pub fn load(path: &Path) -> Result<Self, WorldError> {
        let text = std::fs::read_to_string(path)?;
        Self::from_json(&text)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&self.doc).expect("scenario serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), WorldError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    pub fn doc(&self) -> &ScenarioDoc {
        &self.doc
    }

    pub fn id(&self) -> &str {
        &self.doc.id
    }

    pub fn truth(&self) -> &OccupancyGrid {
        &self.truth
    }

    pub fn cell_size(&self) -> f64 {
        self.truth.cell_size()
    }

    pub fn instances(&self) -> &[InstanceSpec] {
        &self.doc.instances
    }

    pub fn target_index(&self) -> usize {
        self.target
    }

    pub fn target(&self) -> &InstanceSpec {
        &self.doc.instances[self.target]
    }

    /// The query category `c`.
    pub fn category(&self) -> &str {
        &self.target().category
    }

    /// Same-category instances (the set `O_c`).
    pub fn same_category(&self) -> impl Iterator<Item = (usize, &InstanceSpec)> {
        let c = self.category().to_owned();
        self.doc
            .instances
            .iter()
            .enumerate()
            .filter(move |(_, i)| i.category == c)
    }

    pub fn start(&self) -> AgentPose {
        self.start
    }

    pub fn horizon(&self) -> usize {
        self.doc.horizon
    }

    pub fn success_radius(&self) -> f64 {
        self.doc.success_radius_m
    }

    /// Instance occupying `c`, if any.
    pub fn occupant(&self, c: Cell) -> Option<usize> {
        if self.truth.in_bounds(c) {
            self.occupant[self.truth.index(c)]
        } else {
            None
        }
    }

    /// Free in the ground truth and not covered by an instance.
    pub fn traversable(&self, c: Cell) -> bool {
        self.truth.in_bounds(c)
            && self.truth.get(c) == CellState::Free
            && self.occupant[self.truth.index(c)].is_none()
    }
}
