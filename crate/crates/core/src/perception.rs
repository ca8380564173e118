//! Simulated egocentric sensing and the agent's belief state.
//!
//! The sensor is a 360° radius-limited line-of-sight test: an object is
//! observed when it is not shut inside a closed receptacle and a straight ray
//! from the agent cell reaches one of its footprint cells without crossing a
//! wall. The belief ([`Knowledge`]) only ever stores what was observed.

use std::cell::RefCell;
use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::rc::Rc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Cell, Rect};
use crate::gridworld::{CellKind, GridMap, ObjectId, Placement, ReceptacleId, Scenario, WorldState};

/// True when the straight segment between the two cell centres crosses no wall
/// strictly between its endpoints and the endpoints are within `radius`.
pub fn line_of_sight(map: &GridMap, from: Cell, to: Cell, radius: f64) -> bool {
    if from.euclidean(to) > radius + 1e-9 {
        return false;
    }
    let (mut x, mut y) = (from.x, from.y);
    let dx = (to.x - from.x).abs();
    let dy = -(to.y - from.y).abs();
    let sx = if from.x < to.x { 1 } else { -1 };
    let sy = if from.y < to.y { 1 } else { -1 };
    let mut err = dx + dy;
    loop {
        if (x, y) == (to.x, to.y) {
            return true;
        }
        if (x, y) != (from.x, from.y) && map.is_wall(Cell::new(x, y)) {
            return false;
        }
        let e2 = 2 * err;
        if e2 >= dy {
            err += dy;
            x += sx;
        }
        if e2 <= dx {
            err += dx;
            y += sy;
        }
    }
}

/// Any cell of `rect` is in sight of `from`.
pub fn rect_visible(map: &GridMap, from: Cell, rect: Rect, radius: f64) -> bool {
    rect.cells().any(|c| map.in_bounds(c) && line_of_sight(map, from, c, radius))
}

/// What one sensing pass returned.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct Observation {
    /// Observed objects with their true current placement.
    pub objects: Vec<(ObjectId, Placement)>,
    /// Cells in sight whose contents are observable (free cells and the cells
    /// of open or non-openable receptacles).
    pub cells: Vec<Cell>,
}

impl Observation {
    pub fn is_empty(&self) -> bool {
        self.objects.is_empty() && self.cells.is_empty()
    }

    pub fn merge(&mut self, other: Observation) {
        for o in other.objects {
            if !self.objects.iter().any(|(id, _)| *id == o.0) {
                self.objects.push(o);
            } else if let Some(slot) = self.objects.iter_mut().find(|(id, _)| *id == o.0) {
                slot.1 = o.1;
            }
        }
        self.cells.extend(other.cells);
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SensorConfig {
    /// Sensing radius in cells.
    pub radius: f64,
    /// Probability that a detection's label is flipped. A flipped label never
    /// matches the expected identity, so the detection is dropped.
    pub label_noise: f64,
    pub noise_seed: u64,
}

impl Default for SensorConfig {
    fn default() -> Self {
        Self { radius: 8.0, label_noise: 0.0, noise_seed: 0 }
    }
}

/// Per-episode sensor with a cache of visible cells per pose.
pub struct Perceiver<'a> {
    map: &'a GridMap,
    config: SensorConfig,
    cache: RefCell<HashMap<Cell, Rc<VisibleSet>>>,
}

struct VisibleSet {
    mask: Vec<bool>,
    cells: Vec<Cell>,
}

impl<'a> Perceiver<'a> {
    pub fn new(map: &'a GridMap, config: SensorConfig) -> Self {
        Self { map, config, cache: RefCell::new(HashMap::new()) }
    }

    pub fn config(&self) -> SensorConfig {
        self.config
    }

    fn visible_set(&self, pose: Cell) -> Rc<VisibleSet> {
        if let Some(v) = self.cache.borrow().get(&pose) {
            return Rc::clone(v);
        }
        let r = self.config.radius.floor() as i32;
        let mut mask = vec![false; self.map.len()];
        let mut cells = Vec::new();
        for y in pose.y - r..=pose.y + r {
            for x in pose.x - r..=pose.x + r {
                let c = Cell::new(x, y);
                if self.map.in_bounds(c) && line_of_sight(self.map, pose, c, self.config.radius) {
                    mask[self.map.index(c)] = true;
                    cells.push(c);
                }
            }
        }
        let v = Rc::new(VisibleSet { mask, cells });
        self.cache.borrow_mut().insert(pose, Rc::clone(&v));
        v
    }

    /// Cells in line of sight of `pose`, regardless of contents.
    pub fn cells_in_view(&self, pose: Cell) -> Vec<Cell> {
        self.visible_set(pose).cells.clone()
    }

    fn dropped(&self, id: ObjectId, pose: Cell) -> bool {
        if self.config.label_noise <= 0.0 {
            return false;
        }
        let mut h = 0xcbf2_9ce4_8422_2325u64 ^ self.config.noise_seed;
        for v in [u64::from(id.0), pose.x as u64, pose.y as u64] {
            h ^= v;
            h = h.wrapping_mul(0x0100_0000_01b3);
            h ^= h >> 29;
        }
        (h >> 11) as f64 / (1u64 << 53) as f64 <= self.config.label_noise
    }

    /// One sensing pass from `pose`. Deterministic in `(state, pose)`.
    pub fn sense(&self, scenario: &Scenario, state: &WorldState, pose: Cell) -> Observation {
        let vis = self.visible_set(pose);
        let accessible = |c: Cell| match self.map.get(c) {
            Some(CellKind::Interior(r)) => state.open[r.index()],
            Some(CellKind::Wall) | None => false,
            _ => true,
        };
        let mut obs = Observation::default();
        for o in &scenario.objects {
            if state.is_enclosed(scenario, o.id) {
                continue;
            }
            let rect = state.rect(scenario, o.id);
            let seen = rect.cells().any(|c| self.map.in_bounds(c) && vis.mask[self.map.index(c)]);
            if seen && !self.dropped(o.id, pose) {
                obs.objects.push((o.id, state.placements[o.id.index()]));
            }
        }
        obs.cells = vis.cells.iter().copied().filter(|c| accessible(*c)).collect();
        obs
    }

    /// Senses from every cell of a walk and merges the results.
    pub fn sense_along(&self, scenario: &Scenario, state: &WorldState, walk: &[Cell]) -> Observation {
        let mut obs = Observation::default();
        for c in walk {
            obs.merge(self.sense(scenario, state, *c));
        }
        obs
    }
}

/// Convenience single-shot sensing with default noise settings.
pub fn sense(scenario: &Scenario, state: &WorldState, pose: Cell) -> Observation {
    Perceiver::new(&scenario.grid, SensorConfig { radius: scenario.sensing_radius, ..Default::default() })
        .sense(scenario, state, pose)
}

/// Opens `receptacle` when the agent stands next to it; returns the objects
/// that were shut inside.
pub fn open_receptacle(scenario: &Scenario, state: &mut WorldState, receptacle: ReceptacleId) -> Result<Vec<ObjectId>> {
    let rec = scenario
        .receptacles
        .get(receptacle.index())
        .ok_or(Error::NotOpenable(receptacle))?;
    if !rec.openable {
        return Err(Error::NotOpenable(receptacle));
    }
    let adjacent = rec.surface.cells().any(|c| c.manhattan(state.agent) == 1);
    if !adjacent {
        return Err(Error::NotAdjacent(receptacle));
    }
    let was_open = state.open[receptacle.index()];
    state.open[receptacle.index()] = true;
    if was_open {
        return Ok(Vec::new());
    }
    Ok(scenario
        .object_ids()
        .filter(|id| state.placements[id.index()].receptacle == receptacle)
        .collect())
}

/// The agent's belief: what it has seen, what it is still looking for, and
/// where it plans to look.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Knowledge {
    /// Observed objects and their last observed placement.
    pub visible: BTreeMap<ObjectId, Placement>,
    /// Objects known from the goal state but not yet observed.
    pub unseen: BTreeSet<ObjectId>,
    /// Predicted receptacle and position for unseen objects.
    pub predicted: BTreeMap<ObjectId, (ReceptacleId, Cell)>,
    /// Goals after collision resolution (buffers or pinned positions).
    pub resolved_goals: BTreeMap<ObjectId, Placement>,
    /// Receptacles still worth searching, per unseen object, best first.
    pub candidates: BTreeMap<ObjectId, Vec<ReceptacleId>>,
    /// Receptacle cells observed empty (the free-receptacle map).
    pub free_map: Vec<bool>,
    /// Cells observed at least once while accessible.
    pub observed: Vec<bool>,
    /// Receptacles whose every cell has been observed.
    pub inspected: BTreeSet<ReceptacleId>,
    /// Objects whose candidate list ran dry.
    pub unfindable: BTreeSet<ObjectId>,
    /// Buffer placements committed for swap objects, kept until used.
    pub buffers: BTreeMap<ObjectId, Placement>,
    pub discovery_attempts: u32,
}

impl Knowledge {
    /// Belief before any sensing: everything unseen, every receptacle a candidate.
    pub fn new(scenario: &Scenario) -> Self {
        let all: Vec<ReceptacleId> = scenario.receptacles.iter().map(|r| r.id).collect();
        Self {
            visible: BTreeMap::new(),
            unseen: scenario.object_ids().collect(),
            predicted: BTreeMap::new(),
            resolved_goals: BTreeMap::new(),
            candidates: scenario.object_ids().map(|id| (id, all.clone())).collect(),
            free_map: vec![false; scenario.grid.len()],
            observed: vec![false; scenario.grid.len()],
            inspected: BTreeSet::new(),
            unfindable: BTreeSet::new(),
            buffers: BTreeMap::new(),
            discovery_attempts: 0,
        }
    }

    pub fn is_visible(&self, id: ObjectId) -> bool {
        self.visible.contains_key(&id)
    }

    /// Records that the agent itself moved a visible object.
    pub fn record_move(&mut self, scenario: &Scenario, id: ObjectId, to: Placement) {
        self.visible.insert(id, to);
        self.refresh_free_map(scenario);
    }

    /// Rebuilds the free-receptacle map from observed cells and known objects.
    pub fn refresh_free_map(&mut self, scenario: &Scenario) {
        let grid = &scenario.grid;
        for i in 0..grid.len() {
            self.free_map[i] = self.observed[i] && grid.cells[i].receptacle().is_some();
        }
        for (id, p) in &self.visible {
            for c in scenario.object(*id).footprint.at(p.origin).cells() {
                if grid.in_bounds(c) {
                    self.free_map[grid.index(c)] = false;
                }
            }
        }
    }
}

/// Folds an observation into the belief.
///
/// Newly observed objects move from unseen to visible and lose their
/// prediction; fully inspected receptacles can no longer hide an unseen object
/// and are dropped from every candidate list.
pub fn update_knowledge(knowledge: &mut Knowledge, scenario: &Scenario, obs: &Observation) {
    for (id, placement) in &obs.objects {
        knowledge.visible.insert(*id, *placement);
        knowledge.unseen.remove(id);
        knowledge.predicted.remove(id);
        knowledge.candidates.remove(id);
    }
    let grid = &scenario.grid;
    for c in &obs.cells {
        knowledge.observed[grid.index(*c)] = true;
    }
    for r in &scenario.receptacles {
        if knowledge.inspected.contains(&r.id) {
            continue;
        }
        if r.surface.cells().all(|c| knowledge.observed[grid.index(c)]) {
            knowledge.inspected.insert(r.id);
        }
    }
    if !knowledge.inspected.is_empty() {
        let inspected = &knowledge.inspected;
        for list in knowledge.candidates.values_mut() {
            list.retain(|r| !inspected.contains(r));
        }
        knowledge.predicted.retain(|_, (r, _)| !inspected.contains(r));
    }
    knowledge.refresh_free_map(scenario);
}
