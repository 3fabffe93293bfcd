//! Seeded scenario generator: rooms joined by doorways, same-category
//! instances with controlled attribute overlap, optional clutter.

use std::collections::{BTreeSet, VecDeque};

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::world::{
    shortest_path_length, AttributeValue, Cell, GridDoc, InstanceSpec, Scenario, ScenarioDoc,
    SectorAttribute, StartDoc, SECTORS,
};

/// Attribute names with their values and phrase template (`{}` is the value).
const VOCABULARY: &[(&str, &[&str], &str)] = &[
    ("color", &["white", "brown", "black", "gray", "blue"], "a {} finish"),
    ("handle", &["silver", "gold", "black", "wooden"], "{} handles"),
    ("material", &["wood", "metal", "glass", "laminate"], "a {} body"),
    ("nearby", &["plant", "tv", "lamp", "red box", "clock"], "a {} nearby"),
    ("on top", &["vase", "books", "radio", "basket"], "a {} on top"),
    ("doors", &["one", "two", "three", "four"], "{} doors"),
    ("size", &["small", "medium", "large", "tall"], "a {} build"),
    ("legs", &["short", "none", "metal", "carved"], "{} legs"),
];

const CATEGORY: &str = "cabinet";
const CLUTTER_CATEGORIES: &[&str] = &["table", "chair", "sofa"];

fn attribute(name: usize, value: usize) -> AttributeValue {
    let (n, vals, tpl) = VOCABULARY[name];
    AttributeValue::new(n, vals[value], tpl.replace("{}", vals[value]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SuiteKind {
    /// Unique attribute sets, every attribute visible from every side.
    Separable,
    /// Distractors share most of the target's pairs; attributes are only
    /// visible from an arc of sectors.
    Partial,
    /// Look-alike distractors near the start and the target far away, so
    /// the first pool misses it.
    Trap,
    /// Like `Separable`; episodes run without questions.
    Textnav,
}

impl SuiteKind {
    pub fn name(self) -> &'static str {
        match self {
            SuiteKind::Separable => "separable",
            SuiteKind::Partial => "partial",
            SuiteKind::Trap => "trap",
            SuiteKind::Textnav => "textnav",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct GeneratorConfig {
    pub suite: SuiteKind,
    pub count: usize,
    pub rooms_x: usize,
    pub rooms_y: usize,
    /// Interior side of a room, cells.
    pub room_cells: usize,
    pub cell_size: f64,
    /// Inclusive range of same-category instances (target included).
    pub min_instances: usize,
    pub max_instances: usize,
    pub n_attributes: usize,
    /// Minimum share of the target's pairs each distractor repeats; 1
    /// makes every distractor a clone.
    pub share_min: f64,
    pub full_visibility: bool,
    /// Shortest visibility arc, sectors.
    pub min_visible_sectors: usize,
    pub clutter: usize,
    pub horizon: usize,
    pub success_radius_m: f64,
}

impl Default for GeneratorConfig {
    fn default() -> Self {
        Self::preset(SuiteKind::Separable, 200)
    }
}

impl GeneratorConfig {
    pub fn preset(suite: SuiteKind, count: usize) -> Self {
        let base = Self {
            suite,
            count,
            rooms_x: 3,
            rooms_y: 2,
            room_cells: 8,
            cell_size: 0.5,
            min_instances: 5,
            max_instances: 8,
            n_attributes: 6,
            share_min: 0.0,
            full_visibility: true,
            min_visible_sectors: 8,
            clutter: 2,
            horizon: 500,
            success_radius_m: 1.0,
        };
        match suite {
            SuiteKind::Separable => base,
            SuiteKind::Partial => Self {
                share_min: 0.6,
                full_visibility: false,
                min_visible_sectors: 3,
                ..base
            },
            SuiteKind::Trap => Self {
                rooms_x: 3,
                rooms_y: 1,
                min_instances: 6,
                max_instances: 6,
                n_attributes: 5,
                clutter: 1,
                ..base
            },
            SuiteKind::Textnav => Self {
                share_min: 0.6,
                horizon: 1000,
                ..base
            },
        }
    }

    fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: &str| Err(HarnessError::Infeasible(m.to_owned()));
        if self.rooms_x == 0 || self.rooms_y == 0 || self.room_cells < 5 {
            return bad("need at least one room of side >= 5 cells");
        }
        if self.min_instances == 0 || self.min_instances > self.max_instances {
            return bad("instance range is empty");
        }
        if self.n_attributes == 0 || self.n_attributes >= VOCABULARY.len() {
            return bad("n_attributes must be in 1..vocabulary size");
        }
        if !(0.0..=1.0).contains(&self.share_min) {
            return bad("share_min must be in [0, 1]");
        }
        if !self.full_visibility && !(1..=SECTORS).contains(&self.min_visible_sectors) {
            return bad("min_visible_sectors must be in 1..=8");
        }
        if self.suite == SuiteKind::Trap && (self.rooms_x * self.rooms_y < 2 || self.min_instances < 3) {
            return bad("trap scenarios need two rooms and three instances");
        }
        // Each placement blocks roughly a 3x3 area; keep well under capacity.
        let per_room = (self.room_cells - 2) * (self.room_cells - 2) / 9;
        if self.max_instances + self.clutter > per_room * self.rooms_x * self.rooms_y {
            return bad("instances do not fit into the rooms");
        }
        Ok(())
    }
}

/// Interior bounds of a room, inclusive.
#[derive(Debug, Clone, Copy)]
struct Room {
    x0: i32,
    y0: i32,
    x1: i32,
    y1: i32,
}

struct Layout {
    width: usize,
    height: usize,
    walls: BTreeSet<Cell>,
    rooms: Vec<Room>,
    /// Cells no instance may cover: doorways, their approaches, the start.
    reserved: BTreeSet<Cell>,
}

fn build_layout(cfg: &GeneratorConfig, rng: &mut ChaCha8Rng) -> Layout {
    let r = cfg.room_cells as i32;
    let width = cfg.rooms_x * (cfg.room_cells + 1) + 1;
    let height = cfg.rooms_y * (cfg.room_cells + 1) + 1;
    let mut walls = BTreeSet::new();
    for x in 0..width as i32 {
        for y in 0..height as i32 {
            if x % (r + 1) == 0 || y % (r + 1) == 0 {
                walls.insert(Cell::new(x, y));
            }
        }
    }
    let mut rooms = Vec::new();
    for j in 0..cfg.rooms_y as i32 {
        for i in 0..cfg.rooms_x as i32 {
            let (x0, y0) = (i * (r + 1) + 1, j * (r + 1) + 1);
            rooms.push(Room {
                x0,
                y0,
                x1: x0 + r - 1,
                y1: y0 + r - 1,
            });
        }
    }
    let mut reserved = BTreeSet::new();
    let mut open = |cells: [Cell; 2], approach: [(i32, i32); 2], walls: &mut BTreeSet<Cell>| {
        for c in cells {
            walls.remove(&c);
            reserved.insert(c);
            for (dx, dy) in approach {
                reserved.insert(Cell::new(c.x + dx, c.y + dy));
            }
        }
    };
    for j in 0..cfg.rooms_y as i32 {
        for i in 0..cfg.rooms_x as i32 {
            let room = rooms[(j * cfg.rooms_x as i32 + i) as usize];
            if i + 1 < cfg.rooms_x as i32 {
                let x = room.x1 + 1;
                let y = room.y0 + rng.gen_range(1..r - 2);
                open([Cell::new(x, y), Cell::new(x, y + 1)], [(-1, 0), (1, 0)], &mut walls);
            }
            if j + 1 < cfg.rooms_y as i32 {
                let y = room.y1 + 1;
                let x = room.x0 + rng.gen_range(1..r - 2);
                open([Cell::new(x, y), Cell::new(x + 1, y)], [(0, -1), (0, 1)], &mut walls);
            }
        }
    }
    Layout {
        width,
        height,
        walls,
        rooms,
        reserved,
    }
}

fn ring(c: Cell) -> impl Iterator<Item = Cell> {
    (-1..=1).flat_map(move |dx| (-1..=1).map(move |dy| Cell::new(c.x + dx, c.y + dy)))
}

/// Places a footprint of one or two cells in `room`, keeping one free cell
/// between it, the walls, other instances and reserved cells.
fn place(room: Room, blocked: &BTreeSet<Cell>, reserved: &BTreeSet<Cell>, rng: &mut ChaCha8Rng) -> Option<Vec<Cell>> {
    for _ in 0..200 {
        let (w, h) = *[(1, 1), (2, 1), (1, 2)].choose(rng).expect("non-empty");
        if room.x1 - room.x0 - 1 < w || room.y1 - room.y0 - 1 < h {
            continue;
        }
        let x = rng.gen_range(room.x0 + 1..=room.x1 - w);
        let y = rng.gen_range(room.y0 + 1..=room.y1 - h);
        let cells: Vec<Cell> = (0..w)
            .flat_map(|dx| (0..h).map(move |dy| Cell::new(x + dx, y + dy)))
            .collect();
        let clear = cells
            .iter()
            .flat_map(|&c| ring(c))
            .all(|n| !blocked.contains(&n) && !reserved.contains(&n));
        if clear {
            return Some(cells);
        }
    }
    None
}

fn connected(width: usize, height: usize, blocked: &BTreeSet<Cell>, start: Cell) -> bool {
    let free = |c: Cell| {
        c.x >= 0 && c.y >= 0 && (c.x as usize) < width && (c.y as usize) < height && !blocked.contains(&c)
    };
    let total = width * height - blocked.len();
    let mut seen = BTreeSet::from([start]);
    let mut queue = VecDeque::from([start]);
    while let Some(c) = queue.pop_front() {
        for (dx, dy) in [(1, 0), (-1, 0), (0, 1), (0, -1)] {
            let n = Cell::new(c.x + dx, c.y + dy);
            if free(n) && seen.insert(n) {
                queue.push_back(n);
            }
        }
    }
    seen.len() == total
}

fn visibility(cfg: &GeneratorConfig, rng: &mut ChaCha8Rng) -> Vec<u8> {
    if cfg.full_visibility {
        return (0..SECTORS as u8).collect();
    }
    let len = rng.gen_range(cfg.min_visible_sectors..=SECTORS);
    let start = rng.gen_range(0..SECTORS);
    let mut s: Vec<u8> = (0..len).map(|k| ((start + k) % SECTORS) as u8).collect();
    s.sort_unstable();
    s
}

/// Value index per chosen attribute name.
type Values = Vec<usize>;

fn distractor(target: &Values, names: &[usize], share_min: f64, rng: &mut ChaCha8Rng) -> Values {
    let n = target.len();
    let lo = ((share_min * n as f64) - 1e-9).ceil().max(0.0) as usize;
    let k = rng.gen_range(lo.min(n - 1)..n);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let shared: BTreeSet<usize> = order[..k].iter().copied().collect();
    (0..n)
        .map(|i| {
            if shared.contains(&i) {
                target[i]
            } else {
                let vals = VOCABULARY[names[i]].1.len();
                let other = rng.gen_range(1..vals);
                (target[i] + other) % vals
            }
        })
        .collect()
}

fn instance(
    id: String,
    footprint: Vec<Cell>,
    pairs: Vec<AttributeValue>,
    is_target: bool,
    cfg: &GeneratorConfig,
    rng: &mut ChaCha8Rng,
) -> InstanceSpec {
    InstanceSpec {
        id,
        category: CATEGORY.into(),
        footprint,
        attributes: pairs
            .into_iter()
            .map(|value| SectorAttribute {
                value,
                visible_sectors: visibility(cfg, rng),
            })
            .collect(),
        is_target,
    }
}

/// Attribute sets for every same-category instance; the target comes first.
fn attribute_sets(cfg: &GeneratorConfig, m: usize, rng: &mut ChaCha8Rng) -> Result<Vec<Vec<AttributeValue>>, HarnessError> {
    let mut pool: Vec<usize> = (0..VOCABULARY.len()).collect();
    pool.shuffle(rng);
    let mut names: Vec<usize> = pool[..cfg.n_attributes].to_vec();
    names.sort_unstable();
    let extra = &pool[cfg.n_attributes..];
    let render = |vals: &Values| -> Vec<AttributeValue> {
        names.iter().zip(vals).map(|(&n, &v)| attribute(n, v)).collect()
    };
    let target: Values = names.iter().map(|&n| rng.gen_range(0..VOCABULARY[n].1.len())).collect();

    if cfg.suite == SuiteKind::Trap {
        // Clones disagree with the target on every pair; one of them carries
        // every unused attribute on top, which keeps it out of the clones'
        // core.
        let clone = distractor(&target, &names, 0.0, rng);
        let clone: Values = clone
            .iter()
            .zip(&target)
            .zip(&names)
            .map(|((&c, &t), &n)| if c == t { (t + 1) % VOCABULARY[n].1.len() } else { c })
            .collect();
        let mut sets = vec![render(&target)];
        for _ in 1..m - 1 {
            sets.push(render(&clone));
        }
        let mut odd = render(&clone);
        for &e in extra {
            odd.push(attribute(e, rng.gen_range(0..VOCABULARY[e].1.len())));
        }
        sets.push(odd);
        return Ok(sets);
    }

    let mut sets = vec![render(&target)];
    if cfg.share_min >= 1.0 {
        // Zero separability: every distractor is a clone of the target.
        sets.resize(m, render(&target));
        return Ok(sets);
    }
    let mut seen = BTreeSet::from([target.clone()]);
    for _ in 1..m {
        let mut found = None;
        for _ in 0..200 {
            let d = distractor(&target, &names, cfg.share_min, rng);
            if seen.insert(d.clone()) {
                found = Some(d);
                break;
            }
        }
        let d = found.ok_or_else(|| HarnessError::Infeasible("cannot draw distinct attribute sets".into()))?;
        sets.push(render(&d));
    }
    Ok(sets)
}

fn generate_one(cfg: &GeneratorConfig, index: usize, rng: &mut ChaCha8Rng) -> Result<Scenario, HarnessError> {
    let layout = build_layout(cfg, rng);
    let cs = cfg.cell_size;
    let start_room = layout.rooms[0];
    let start_cell = Cell::new(
        (start_room.x0 + start_room.x1) / 2,
        (start_room.y0 + start_room.y1) / 2,
    );
    let mut reserved = layout.reserved.clone();
    reserved.extend(ring(start_cell));

    let m = rng.gen_range(cfg.min_instances..=cfg.max_instances);
    let sets = attribute_sets(cfg, m, rng)?;
    let n_rooms = layout.rooms.len();
    let room_for = |k: usize, rng: &mut ChaCha8Rng| -> usize {
        if cfg.suite != SuiteKind::Trap {
            return rng.gen_range(0..n_rooms);
        }
        // Target in the last room, distractors in the rest.
        if k == 0 {
            n_rooms - 1
        } else {
            rng.gen_range(0..n_rooms - 1)
        }
    };

    let mut blocked = layout.walls.clone();
    let mut instances = Vec::new();
    // Same-category instances in shuffled id order so the target's position
    // in the list carries no information.
    let mut ids: Vec<usize> = (0..m).collect();
    ids.shuffle(rng);
    for (k, pairs) in sets.into_iter().enumerate() {
        let mut placed = None;
        for _ in 0..20 {
            let room = layout.rooms[room_for(k, rng)];
            if let Some(fp) = place(room, &blocked, &reserved, rng) {
                placed = Some(fp);
                break;
            }
        }
        let fp = placed.ok_or_else(|| HarnessError::Infeasible("no room left for an instance".into()))?;
        blocked.extend(fp.iter().copied());
        instances.push((ids[k], instance(String::new(), fp, pairs, k == 0, cfg, rng)));
    }
    instances.sort_by_key(|(id, _)| *id);
    let mut instances: Vec<InstanceSpec> = instances
        .into_iter()
        .map(|(id, mut inst)| {
            inst.id = format!("{CATEGORY}-{id}");
            inst
        })
        .collect();
    for c in 0..cfg.clutter {
        let room = layout.rooms[rng.gen_range(0..n_rooms)];
        let Some(fp) = place(room, &blocked, &reserved, rng) else {
            continue;
        };
        blocked.extend(fp.iter().copied());
        let cat = CLUTTER_CATEGORIES[c % CLUTTER_CATEGORIES.len()];
        let pairs = vec![attribute(0, rng.gen_range(0..VOCABULARY[0].1.len()))];
        let mut inst = instance(format!("{cat}-{c}"), fp, pairs, false, cfg, rng);
        inst.category = cat.into();
        instances.push(inst);
    }
    if !connected(layout.width, layout.height, &blocked, start_cell) {
        return Err(HarnessError::Infeasible("free space is not connected".into()));
    }

    let doc = ScenarioDoc {
        id: format!("{}-{index:04}", cfg.suite.name()),
        grid: GridDoc {
            width: layout.width,
            height: layout.height,
            cell_size: cs,
            obstacles: layout.walls.into_iter().collect(),
        },
        instances,
        start: StartDoc {
            x: (start_cell.x as f64 + 0.5) * cs,
            y: (start_cell.y as f64 + 0.5) * cs,
            heading_deg: 30.0 * rng.gen_range(0..12) as f64,
        },
        horizon: cfg.horizon,
        success_radius_m: cfg.success_radius_m,
    };
    let scenario = Scenario::from_doc(doc)?;
    for (_, inst) in scenario.same_category() {
        shortest_path_length(&scenario, &scenario.start(), inst)?;
    }
    Ok(scenario)
}

/// Scenario `index` of a suite draws from its own stream, so any subset can
/// be regenerated independently.
fn scenario_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

/// Generates `cfg.count` scenarios. Layouts that come out disconnected are
/// redrawn from the same stream.
pub fn generate_scenarios(cfg: &GeneratorConfig, seed: u64) -> Result<Vec<Scenario>, HarnessError> {
    cfg.validate()?;
    (0..cfg.count)
        .map(|i| {
            let mut rng = scenario_rng(seed, i);
            let mut last = None;
            for _ in 0..50 {
                match generate_one(cfg, i, &mut rng) {
                    Ok(s) => return Ok(s),
                    Err(e) => last = Some(e),
                }
            }
            Err(last.expect("at least one attempt"))
        })
        .collect()
}

/// The goal attribute set a non-interactive episode navigates by: every
/// pair of the target.
pub fn goal_attributes(scenario: &Scenario) -> Vec<AttributeValue> {
    let mut g: Vec<AttributeValue> = scenario.target().attribute_values().cloned().collect();
    g.sort();
    g
}
