//! Deterministic multi-room grid environment.
//!
//! A floorplan is a 2×2 grid of rooms separated by walls with 1-cell doorways.
//! Every room holds four receptacles drawn from its kind's vocabulary. Objects
//! rest on receptacle cells with rectangular footprints; each object has a goal
//! placement (the tidy state) and a current placement (the untidy state).

use std::collections::HashSet;
use std::fmt;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Cell, Footprint, Rect};
use crate::nav::Navigator;
use crate::perception;
use crate::uodm::PriorTable;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ReceptacleId(pub u32);

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct RoomId(pub u32);

impl ObjectId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl ReceptacleId {
    pub fn index(self) -> usize {
        self.0 as usize
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "o{}", self.0)
    }
}

impl fmt::Display for ReceptacleId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "r{}", self.0)
    }
}

/// Occupancy tag of a single map cell.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "t", content = "r", rename_all = "snake_case")]
pub enum CellKind {
    Free,
    Wall,
    Surface(ReceptacleId),
    Interior(ReceptacleId),
}

impl CellKind {
    pub fn receptacle(self) -> Option<ReceptacleId> {
        match self {
            CellKind::Surface(r) | CellKind::Interior(r) => Some(r),
            _ => None,
        }
    }
}

/// The 2D occupancy map. Free cells are the navigation domain.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridMap {
    pub width: u32,
    pub height: u32,
    /// Meters per cell.
    pub cell_size: f64,
    pub cells: Vec<CellKind>,
}

impl GridMap {
    /// An all-free map.
    pub fn new(width: u32, height: u32, cell_size: f64) -> Self {
        Self { width, height, cell_size, cells: vec![CellKind::Free; (width * height) as usize] }
    }

    /// An all-free map surrounded by a one-cell wall.
    pub fn walled(width: u32, height: u32, cell_size: f64) -> Self {
        let mut map = Self::new(width, height, cell_size);
        for x in 0..width as i32 {
            map.set(Cell::new(x, 0), CellKind::Wall);
            map.set(Cell::new(x, height as i32 - 1), CellKind::Wall);
        }
        for y in 0..height as i32 {
            map.set(Cell::new(0, y), CellKind::Wall);
            map.set(Cell::new(width as i32 - 1, y), CellKind::Wall);
        }
        map
    }

    pub fn len(&self) -> usize {
        self.cells.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }

    pub fn in_bounds(&self, c: Cell) -> bool {
        c.x >= 0 && c.y >= 0 && (c.x as u32) < self.width && (c.y as u32) < self.height
    }

    pub fn index(&self, c: Cell) -> usize {
        debug_assert!(self.in_bounds(c));
        c.y as usize * self.width as usize + c.x as usize
    }

    pub fn cell_at(&self, index: usize) -> Cell {
        let w = self.width as usize;
        Cell::new((index % w) as i32, (index / w) as i32)
    }

    pub fn get(&self, c: Cell) -> Option<CellKind> {
        self.in_bounds(c).then(|| self.cells[self.index(c)])
    }

    pub fn set(&mut self, c: Cell, kind: CellKind) {
        let i = self.index(c);
        self.cells[i] = kind;
    }

    pub fn is_free(&self, c: Cell) -> bool {
        self.get(c) == Some(CellKind::Free)
    }

    pub fn is_wall(&self, c: Cell) -> bool {
        self.get(c) == Some(CellKind::Wall)
    }

    pub fn bounds(&self) -> Rect {
        Rect::new(Cell::new(0, 0), self.width, self.height)
    }

    pub fn free_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        (0..self.cells.len()).filter(|&i| self.cells[i] == CellKind::Free).map(|i| self.cell_at(i))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RoomKind {
    Living,
    Bedroom,
    Bathroom,
    Kitchen,
}

impl RoomKind {
    pub const ALL: [RoomKind; 4] = [RoomKind::Living, RoomKind::Bedroom, RoomKind::Bathroom, RoomKind::Kitchen];

    pub fn name(self) -> &'static str {
        match self {
            RoomKind::Living => "living",
            RoomKind::Bedroom => "bedroom",
            RoomKind::Bathroom => "bathroom",
            RoomKind::Kitchen => "kitchen",
        }
    }

    /// Receptacle types furnished in this room: (type, long side, openable).
    fn furniture(self) -> [(&'static str, u32, bool); 4] {
        match self {
            RoomKind::Kitchen => [("countertop", 7, false), ("dining_table", 5, false), ("fridge", 3, true), ("cabinet", 3, true)],
            RoomKind::Living => [("sofa", 6, false), ("coffee_table", 4, false), ("tv_stand", 5, false), ("cabinet", 3, true)],
            RoomKind::Bedroom => [("bed", 6, false), ("nightstand", 3, false), ("desk", 5, false), ("wardrobe", 3, true)],
            RoomKind::Bathroom => [("sink", 4, false), ("bathtub", 6, false), ("shelf", 4, false), ("cabinet", 3, true)],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Room {
    pub id: RoomId,
    pub kind: RoomKind,
    /// Interior cells of the room (walls excluded).
    pub region: Rect,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Receptacle {
    pub id: ReceptacleId,
    /// `room|type`, e.g. `kitchen|fridge`.
    pub label: String,
    pub room_id: RoomId,
    pub surface: Rect,
    pub openable: bool,
    pub open: bool,
    pub centroid: Cell,
}

impl Receptacle {
    pub fn surface_cells(&self) -> impl Iterator<Item = Cell> + '_ {
        self.surface.cells()
    }

    /// Origins at which `fp` fits entirely on this receptacle.
    pub fn origins_for(&self, fp: Footprint) -> Vec<Cell> {
        if fp.w > self.surface.w || fp.h > self.surface.h {
            return Vec::new();
        }
        let mut out = Vec::new();
        for y in self.surface.y0()..=(self.surface.y1() - fp.h as i32) {
            for x in self.surface.x0()..=(self.surface.x1() - fp.w as i32) {
                out.push(Cell::new(x, y));
            }
        }
        out
    }
}

/// Where an object rests: a receptacle and the top-left cell of its footprint.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Placement {
    pub receptacle: ReceptacleId,
    pub origin: Cell,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectInstance {
    pub id: ObjectId,
    pub label: String,
    pub footprint: Footprint,
    pub current: Placement,
    pub goal: Placement,
}

impl ObjectInstance {
    pub fn current_rect(&self) -> Rect {
        self.footprint.at(self.current.origin)
    }

    pub fn goal_rect(&self) -> Rect {
        self.footprint.at(self.goal.origin)
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub n_visible: usize,
    pub n_partially_occluded: usize,
    pub n_fully_occluded: usize,
    /// Objects taking part in a swap (twice the number of pairs).
    pub n_swap: usize,
    #[serde(default)]
    pub n_blocked_pairs: usize,
}

impl Counts {
    pub fn total(&self) -> usize {
        self.n_visible + self.n_partially_occluded + self.n_fully_occluded
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scenario {
    pub seed: u64,
    pub grid: GridMap,
    pub rooms: Vec<Room>,
    pub receptacles: Vec<Receptacle>,
    pub objects: Vec<ObjectInstance>,
    pub agent_start: Cell,
    pub counts: Counts,
    #[serde(default = "default_radius")]
    pub sensing_radius: f64,
}

fn default_radius() -> f64 {
    8.0
}

impl Scenario {
    pub fn n_objects(&self) -> usize {
        self.objects.len()
    }

    pub fn object(&self, id: ObjectId) -> &ObjectInstance {
        &self.objects[id.index()]
    }

    pub fn receptacle(&self, id: ReceptacleId) -> &Receptacle {
        &self.receptacles[id.index()]
    }

    pub fn object_ids(&self) -> impl Iterator<Item = ObjectId> + '_ {
        self.objects.iter().map(|o| o.id)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text)?;
        s.validate()?;
        Ok(s)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&std::fs::read_to_string(path)?)
    }

    /// Structural checks shared by loading and generation.
    pub fn validate(&self) -> Result<()> {
        let g = &self.grid;
        if g.width < 4 || g.height < 4 || g.cells.len() != (g.width * g.height) as usize {
            return Err(Error::DegenerateConfig("grid must be at least 4x4 with a full cell table".into()));
        }
        if !g.is_free(self.agent_start) {
            return Err(Error::DegenerateConfig("agent_start is not a free cell".into()));
        }
        for (i, r) in self.receptacles.iter().enumerate() {
            if r.id.index() != i || r.surface.area() == 0 {
                return Err(Error::DegenerateConfig(format!("receptacle {} malformed", r.id)));
            }
        }
        for (i, o) in self.objects.iter().enumerate() {
            if o.id.index() != i || o.footprint.w == 0 || o.footprint.h == 0 {
                return Err(Error::DegenerateConfig(format!("object {} malformed", o.id)));
            }
            for p in [o.current, o.goal] {
                let rec = self.receptacles.get(p.receptacle.index()).ok_or(Error::DegenerateConfig(format!(
                    "object {} refers to unknown receptacle {}",
                    o.id, p.receptacle
                )))?;
                if !rec.surface.contains_rect(&o.footprint.at(p.origin)) {
                    return Err(Error::DegenerateConfig(format!("object {} does not fit its receptacle", o.id)));
                }
            }
        }
        Ok(())
    }
}

/// Knobs of the scenario generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    /// Objects in view from the start pose (includes swap and blocked-pair objects).
    pub n_visible: usize,
    /// Objects out of the initial field of view.
    pub n_partially_occluded: usize,
    /// Objects inside closed receptacles.
    pub n_fully_occluded: usize,
    /// Swap-case objects; must be even.
    pub n_swap: usize,
    /// Injected blocked-goal pairs (blocker sits on the blocked object's goal).
    pub n_blocked_pairs: usize,
    /// How many objects are shuffled away from their goal; `None` shuffles all.
    pub n_misplaced: Option<usize>,
    pub width: u32,
    pub height: u32,
    pub cell_size: f64,
    pub sensing_radius: f64,
    /// Probability that an object gets a 2×1 or 1×2 footprint instead of 1×1.
    pub large_footprint_prob: f64,
}

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            n_visible: 6,
            n_partially_occluded: 4,
            n_fully_occluded: 0,
            n_swap: 2,
            n_blocked_pairs: 0,
            n_misplaced: None,
            width: 30,
            height: 30,
            cell_size: 0.25,
            sensing_radius: 8.0,
            large_footprint_prob: 0.2,
        }
    }
}

impl ScenarioConfig {
    pub fn n_objects(&self) -> usize {
        self.n_visible + self.n_partially_occluded + self.n_fully_occluded
    }

    /// A fully observed scene with `n` visible objects and no collisions.
    pub fn fully_observed(n: usize) -> Self {
        Self { n_visible: n, n_partially_occluded: 0, n_fully_occluded: 0, n_swap: 0, ..Self::default() }
    }
}

const MAX_ATTEMPTS: u64 = 48;

/// Generates a scenario; a pure function of `(config, seed)`.
pub fn generate_scenario(config: &ScenarioConfig, seed: u64) -> Result<Scenario> {
    generate_scenario_with(config, seed, PriorTable::bundled())
}

/// As [`generate_scenario`] with an explicit placement prior.
pub fn generate_scenario_with(config: &ScenarioConfig, seed: u64, table: &PriorTable) -> Result<Scenario> {
    let n = config.n_objects();
    if n == 0 {
        return Err(Error::DegenerateConfig("scenario needs at least one object".into()));
    }
    if config.n_swap % 2 != 0 {
        return Err(Error::DegenerateConfig("n_swap must be even".into()));
    }
    let injected = config.n_swap + 2 * config.n_blocked_pairs;
    if injected > config.n_visible {
        return Err(Error::DegenerateConfig("swap and blocked objects must be visible".into()));
    }
    if let Some(m) = config.n_misplaced {
        if m < injected || m > n {
            return Err(Error::DegenerateConfig("n_misplaced out of range".into()));
        }
    }
    if config.width < 16 || config.height < 16 {
        return Err(Error::DegenerateConfig("generator needs at least a 16x16 grid".into()));
    }
    if n > table.objects().len() {
        return Err(Error::CapacityExceeded(format!(
            "{n} objects requested but the vocabulary holds {}",
            table.objects().len()
        )));
    }

    let mut saw_infeasible_swap = false;
    for attempt in 0..MAX_ATTEMPTS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_mul(0x9E37_79B9_7F4A_7C15).wrapping_add(attempt));
        let Some((grid, rooms, receptacles)) = build_floorplan(config, &mut rng) else {
            continue;
        };
        match populate(config, seed, table, grid, rooms, receptacles, &mut rng) {
            Ok(s) => return Ok(s),
            Err(Error::InfeasibleSwap) => saw_infeasible_swap = true,
            Err(Error::CapacityExceeded(_)) => {}
            Err(e) => return Err(e),
        }
    }
    if saw_infeasible_swap {
        Err(Error::InfeasibleSwap)
    } else {
        Err(Error::CapacityExceeded(format!("could not place {n} objects after {MAX_ATTEMPTS} layouts")))
    }
}

fn build_floorplan(config: &ScenarioConfig, rng: &mut ChaCha8Rng) -> Option<(GridMap, Vec<Room>, Vec<Receptacle>)> {
    let (w, h) = (config.width as i32, config.height as i32);
    let mut grid = GridMap::walled(config.width, config.height, config.cell_size);
    let (mx, my) = (w / 2, h / 2);
    for y in 0..h {
        grid.set(Cell::new(mx, y), CellKind::Wall);
    }
    for x in 0..w {
        grid.set(Cell::new(x, my), CellKind::Wall);
    }
    // one doorway per shared wall segment
    let doors = [
        Cell::new(mx, rng.random_range(2..=my - 2)),
        Cell::new(mx, rng.random_range(my + 2..=h - 3)),
        Cell::new(rng.random_range(2..=mx - 2), my),
        Cell::new(rng.random_range(mx + 2..=w - 3), my),
    ];
    for d in doors {
        grid.set(d, CellKind::Free);
    }

    let mut kinds = RoomKind::ALL;
    kinds.shuffle(rng);
    let regions = [
        Rect::new(Cell::new(1, 1), (mx - 1) as u32, (my - 1) as u32),
        Rect::new(Cell::new(mx + 1, 1), (w - mx - 2) as u32, (my - 1) as u32),
        Rect::new(Cell::new(1, my + 1), (mx - 1) as u32, (h - my - 2) as u32),
        Rect::new(Cell::new(mx + 1, my + 1), (w - mx - 2) as u32, (h - my - 2) as u32),
    ];
    let rooms: Vec<Room> = regions
        .iter()
        .zip(kinds)
        .enumerate()
        .map(|(i, (region, kind))| Room { id: RoomId(i as u32), kind, region: *region })
        .collect();

    let mut receptacles = Vec::new();
    for room in &rooms {
        let inner = Rect::new(
            Cell::new(room.region.x0() + 1, room.region.y0() + 1),
            room.region.w.saturating_sub(2),
            room.region.h.saturating_sub(2),
        );
        let mut placed: Vec<Rect> = Vec::new();
        for (kind, long, openable) in room.kind.furniture() {
            let rect = place_furniture(&inner, &placed, long, rng)?;
            placed.push(rect);
            let id = ReceptacleId(receptacles.len() as u32);
            for c in rect.cells() {
                grid.set(c, if openable { CellKind::Interior(id) } else { CellKind::Surface(id) });
            }
            receptacles.push(Receptacle {
                id,
                label: format!("{}|{}", room.kind.name(), kind),
                room_id: room.id,
                surface: rect,
                openable,
                open: !openable,
                centroid: rect.center(),
            });
        }
    }
    Some((grid, rooms, receptacles))
}

/// Places a 2-thick piece of furniture inside `inner` keeping a one-cell gap
/// (including diagonals) to everything already placed.
fn place_furniture(inner: &Rect, placed: &[Rect], long: u32, rng: &mut ChaCha8Rng) -> Option<Rect> {
    for len in (2..=long).rev() {
        for _ in 0..120 {
            let (rw, rh) = if rng.random_bool(0.5) { (len, 2) } else { (2, len) };
            if rw > inner.w || rh > inner.h {
                continue;
            }
            let x = rng.random_range(inner.x0()..=inner.x1() - rw as i32);
            let y = rng.random_range(inner.y0()..=inner.y1() - rh as i32);
            let rect = Rect::new(Cell::new(x, y), rw, rh);
            if placed.iter().all(|p| !rect.expanded(1).intersects(p)) {
                return Some(rect);
            }
        }
    }
    None
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Role {
    Swap,
    Blocker,
    Blocked,
    Visible,
    PartiallyOccluded,
    FullyOccluded,
}

/// Occupancy bookkeeping while populating a layout.
struct Placer<'a> {
    grid: &'a GridMap,
    receptacles: &'a [Receptacle],
    table: &'a PriorTable,
    agent: Cell,
    radius: f64,
    current: Vec<Option<usize>>,
    goal: Vec<Option<usize>>,
}

impl Placer<'_> {
    fn free_in(layer: &[Option<usize>], grid: &GridMap, rect: Rect, except: Option<usize>) -> bool {
        rect.cells().all(|c| match layer[grid.index(c)] {
            None => true,
            Some(o) => Some(o) == except,
        })
    }

    fn mark(layer: &mut [Option<usize>], grid: &GridMap, rect: Rect, obj: usize) {
        for c in rect.cells() {
            layer[grid.index(c)] = Some(obj);
        }
    }

    fn visible(&self, rect: Rect) -> bool {
        perception::rect_visible(self.grid, self.agent, rect, self.radius)
    }

    /// Picks a receptacle weighted by the prior score of `label`, then a
    /// uniformly random origin among those passing `ok`.
    fn choose(
        &self,
        label: &str,
        fp: Footprint,
        rng: &mut ChaCha8Rng,
        rec_ok: impl Fn(&Receptacle) -> bool,
        ok: impl Fn(&Receptacle, Rect) -> bool,
    ) -> Option<Placement> {
        let mut options: Vec<(ReceptacleId, Vec<Cell>, f64)> = Vec::new();
        for r in self.receptacles.iter().filter(|r| rec_ok(r)) {
            let origins: Vec<Cell> = r.origins_for(fp).into_iter().filter(|o| ok(r, fp.at(*o))).collect();
            if !origins.is_empty() {
                let w = self.table.score(label, &r.label).unwrap_or(0.0);
                options.push((r.id, origins, w));
            }
        }
        if options.is_empty() {
            return None;
        }
        // implausible receptacles are used only when nothing plausible fits
        if options.iter().all(|o| o.2 <= 0.0) {
            for o in &mut options {
                o.2 = 1.0;
            }
        }
        let total: f64 = options.iter().map(|o| o.2).sum();
        let mut pick = rng.random::<f64>() * total;
        let mut chosen = options.len() - 1;
        for (i, o) in options.iter().enumerate() {
            if pick < o.2 {
                chosen = i;
                break;
            }
            pick -= o.2;
        }
        let (rid, origins, _) = &options[chosen];
        let origin = origins[rng.random_range(0..origins.len())];
        Some(Placement { receptacle: *rid, origin })
    }
}

fn populate(
    config: &ScenarioConfig,
    seed: u64,
    table: &PriorTable,
    grid: GridMap,
    rooms: Vec<Room>,
    receptacles: Vec<Receptacle>,
    rng: &mut ChaCha8Rng,
) -> Result<Scenario> {
    let n = config.n_objects();
    let capacity = || Error::CapacityExceeded("layout too small".into());

    // agent starts near the middle of a random room
    let room = &rooms[rng.random_range(0..rooms.len())];
    let c = room.region.center();
    let near: Vec<Cell> = room
        .region
        .cells()
        .filter(|x| grid.is_free(*x) && x.manhattan(c) <= 3)
        .collect();
    let agent = *near.get(rng.random_range(0..near.len().max(1))).ok_or_else(capacity)?;

    let mut labels: Vec<String> = table.objects().to_vec();
    labels.shuffle(rng);
    labels.truncate(n);

    let mut roles = Vec::with_capacity(n);
    roles.extend(std::iter::repeat_n(Role::Swap, config.n_swap));
    for _ in 0..config.n_blocked_pairs {
        roles.push(Role::Blocker);
        roles.push(Role::Blocked);
    }
    roles.extend(std::iter::repeat_n(Role::Visible, config.n_visible - config.n_swap - 2 * config.n_blocked_pairs));
    roles.extend(std::iter::repeat_n(Role::PartiallyOccluded, config.n_partially_occluded));
    roles.extend(std::iter::repeat_n(Role::FullyOccluded, config.n_fully_occluded));

    let mut footprints: Vec<Footprint> = (0..n)
        .map(|_| {
            if rng.random_bool(config.large_footprint_prob) {
                if rng.random_bool(0.5) { Footprint::new(2, 1) } else { Footprint::new(1, 2) }
            } else {
                Footprint::UNIT
            }
        })
        .collect();
    // paired objects share a footprint so each fits the other's goal exactly
    for i in (0..config.n_swap + 2 * config.n_blocked_pairs).step_by(2) {
        footprints[i + 1] = footprints[i];
    }

    let mut placer = Placer {
        grid: &grid,
        receptacles: &receptacles,
        table,
        agent,
        radius: config.sensing_radius,
        current: vec![None; grid.len()],
        goal: vec![None; grid.len()],
    };
    let mut current: Vec<Option<Placement>> = vec![None; n];
    let mut goal: Vec<Option<Placement>> = vec![None; n];

    let mut i = 0;
    while i < n {
        let fp = footprints[i];
        let label = labels[i].as_str();
        match roles[i] {
            Role::Swap => {
                let (a, b) = place_swap_pair(&placer, fp, rng).ok_or_else(|| {
                    let any_fits = receptacles.iter().any(|r| {
                        let o = r.origins_for(fp);
                        o.iter().any(|x| o.iter().any(|y| !fp.at(*x).intersects(&fp.at(*y))))
                    });
                    if any_fits { capacity() } else { Error::InfeasibleSwap }
                })?;
                goal[i] = Some(a);
                goal[i + 1] = Some(b);
                current[i] = Some(b);
                current[i + 1] = Some(a);
                for (k, p) in [(i, a), (i + 1, b)] {
                    Placer::mark(&mut placer.goal, &grid, fp.at(p.origin), k);
                }
                for (k, p) in [(i, b), (i + 1, a)] {
                    Placer::mark(&mut placer.current, &grid, fp.at(p.origin), k);
                }
                i += 2;
                continue;
            }
            Role::Blocker => {
                // blocker i sits on the goal of blocked object i + 1
                let p = placer
                    .choose(label, fp, rng, |r| !r.openable, |_, rect| {
                        Placer::free_in(&placer.current, &grid, rect, None)
                            && Placer::free_in(&placer.goal, &grid, rect, None)
                            && placer.visible(rect)
                    })
                    .ok_or_else(capacity)?;
                current[i] = Some(p);
                goal[i + 1] = Some(p);
                Placer::mark(&mut placer.current, &grid, fp.at(p.origin), i);
                Placer::mark(&mut placer.goal, &grid, fp.at(p.origin), i + 1);
                let q = placer
                    .choose(&labels[i + 1], fp, rng, |r| !r.openable, |_, rect| {
                        Placer::free_in(&placer.current, &grid, rect, None)
                            && Placer::free_in(&placer.goal, &grid, rect, None)
                            && placer.visible(rect)
                    })
                    .ok_or_else(capacity)?;
                current[i + 1] = Some(q);
                Placer::mark(&mut placer.current, &grid, fp.at(q.origin), i + 1);
                i += 2;
                continue;
            }
            Role::Blocked => unreachable!("handled with its blocker"),
            role => {
                let p = placer
                    .choose(
                        label,
                        fp,
                        rng,
                        |r| match role {
                            Role::FullyOccluded => r.openable,
                            _ => !r.openable,
                        },
                        |_, rect| {
                            Placer::free_in(&placer.current, &grid, rect, None)
                                && Placer::free_in(&placer.goal, &grid, rect, None)
                                && match role {
                                    Role::Visible => placer.visible(rect),
                                    Role::PartiallyOccluded => !placer.visible(rect),
                                    _ => true,
                                }
                        },
                    )
                    .ok_or_else(capacity)?;
                current[i] = Some(p);
                Placer::mark(&mut placer.current, &grid, fp.at(p.origin), i);
            }
        }
        i += 1;
    }

    // objects left tidy keep their current placement as goal
    let free_roles: Vec<usize> = (0..n).filter(|&k| goal[k].is_none()).collect();
    let n_tidy = config.n_misplaced.map_or(0, |m| n - m);
    let mut tidy = free_roles.clone();
    tidy.shuffle(rng);
    tidy.truncate(n_tidy);
    for &k in &tidy {
        let p = current[k].expect("current placed");
        let rect = footprints[k].at(p.origin);
        if !Placer::free_in(&placer.goal, &grid, rect, None) {
            return Err(capacity());
        }
        goal[k] = Some(p);
        Placer::mark(&mut placer.goal, &grid, rect, k);
    }
    for k in free_roles {
        if goal[k].is_some() {
            continue;
        }
        let fp = footprints[k];
        let cur = current[k].expect("current placed");
        let p = placer
            .choose(&labels[k], fp, rng, |_| true, |r, rect| {
                (r.id != cur.receptacle || rect.origin != cur.origin)
                    && Placer::free_in(&placer.goal, &grid, rect, None)
                    && Placer::free_in(&placer.current, &grid, rect, Some(k))
            })
            .ok_or_else(capacity)?;
        goal[k] = Some(p);
        Placer::mark(&mut placer.goal, &grid, fp.at(p.origin), k);
    }

    // shuffle ids so roles are not recoverable from id order
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let objects: Vec<ObjectInstance> = order
        .iter()
        .enumerate()
        .map(|(new_id, &k)| ObjectInstance {
            id: ObjectId(new_id as u32),
            label: labels[k].clone(),
            footprint: footprints[k],
            current: current[k].expect("placed"),
            goal: goal[k].expect("placed"),
        })
        .collect();

    let scenario = Scenario {
        seed,
        grid,
        rooms,
        receptacles,
        objects,
        agent_start: agent,
        counts: Counts {
            n_visible: config.n_visible,
            n_partially_occluded: config.n_partially_occluded,
            n_fully_occluded: config.n_fully_occluded,
            n_swap: config.n_swap,
            n_blocked_pairs: config.n_blocked_pairs,
        },
        sensing_radius: config.sensing_radius,
    };
    scenario.validate()?;
    let nav = Navigator::new(&scenario.grid);
    if scenario.objects.iter().any(|o| nav.distance(agent, o.current.origin).is_none()) {
        return Err(capacity());
    }
    Ok(scenario)
}

fn place_swap_pair(placer: &Placer<'_>, fp: Footprint, rng: &mut ChaCha8Rng) -> Option<(Placement, Placement)> {
    let grid = placer.grid;
    let mut recs: Vec<&Receptacle> = placer.receptacles.iter().filter(|r| !r.openable).collect();
    recs.shuffle(rng);
    for r in recs {
        let origins: Vec<Cell> = r
            .origins_for(fp)
            .into_iter()
            .filter(|o| {
                let rect = fp.at(*o);
                Placer::free_in(&placer.current, grid, rect, None)
                    && Placer::free_in(&placer.goal, grid, rect, None)
                    && placer.visible(rect)
            })
            .collect();
        let mut pairs = Vec::new();
        for a in &origins {
            for b in &origins {
                if a < b && !fp.at(*a).intersects(&fp.at(*b)) {
                    pairs.push((*a, *b));
                }
            }
        }
        if let Some(&(a, b)) = pairs.get(rng.random_range(0..pairs.len().max(1))) {
            return Some((Placement { receptacle: r.id, origin: a }, Placement { receptacle: r.id, origin: b }));
        }
    }
    None
}

/// How [`shuffle_to_untidy`] disturbs a tidy scene.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShuffleSpec {
    /// Objects moved to a random other placement.
    pub n_shuffle: usize,
    /// Pairs of shuffled objects that exchange places instead.
    pub n_swap_pairs: usize,
}

/// Produces untidy current placements from the goal placements of `goal`.
///
/// Shuffled objects move to a different origin; everything else stays. Random
/// moves never overlap another object's goal or current footprint, so the only
/// goal overlaps are the injected swap pairs.
pub fn shuffle_to_untidy(goal: &Scenario, spec: ShuffleSpec, seed: u64) -> Result<Vec<Placement>> {
    let n = goal.objects.len();
    if spec.n_shuffle > n || 2 * spec.n_swap_pairs > spec.n_shuffle {
        return Err(Error::DegenerateConfig("shuffle spec exceeds object count".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut placements: Vec<Placement> = goal.objects.iter().map(|o| o.goal).collect();
    let mut chosen: Vec<usize> = (0..n).collect();
    chosen.shuffle(&mut rng);
    chosen.truncate(spec.n_shuffle);

    let rect_of = |k: usize, p: Placement| goal.objects[k].footprint.at(p.origin);
    let fits = |k: usize, p: Placement| goal.receptacle(p.receptacle).surface.contains_rect(&rect_of(k, p));

    // swap pairs: i takes j's goal and vice versa
    let mut paired = HashSet::new();
    let mut pairs_left = spec.n_swap_pairs;
    for a in 0..chosen.len() {
        for b in a + 1..chosen.len() {
            if pairs_left == 0 {
                break;
            }
            let (i, j) = (chosen[a], chosen[b]);
            if paired.contains(&i) || paired.contains(&j) {
                continue;
            }
            let (gi, gj) = (goal.objects[i].goal, goal.objects[j].goal);
            if gi.origin == gj.origin || !fits(i, gj) || !fits(j, gi) {
                continue;
            }
            let (ri, rj) = (rect_of(i, gj), rect_of(j, gi));
            let clash = ri.intersects(&rj)
                || (0..n).filter(|&k| k != i && k != j).any(|k| {
                    let rk = rect_of(k, placements[k]);
                    rk.intersects(&ri) || rk.intersects(&rj)
                });
            if clash {
                continue;
            }
            placements[i] = gj;
            placements[j] = gi;
            paired.insert(i);
            paired.insert(j);
            pairs_left -= 1;
        }
    }
    if pairs_left > 0 {
        return Err(Error::InfeasibleSwap);
    }

    for &k in chosen.iter().filter(|k| !paired.contains(k)) {
        let fp = goal.objects[k].footprint;
        let mut options = Vec::new();
        for r in &goal.receptacles {
            for origin in r.origins_for(fp) {
                let p = Placement { receptacle: r.id, origin };
                if origin == goal.objects[k].goal.origin {
                    continue;
                }
                let rect = fp.at(origin);
                let clear = (0..n).filter(|&m| m != k).all(|m| {
                    !rect.intersects(&rect_of(m, placements[m])) && !rect.intersects(&rect_of(m, goal.objects[m].goal))
                });
                if clear {
                    options.push(p);
                }
            }
        }
        if options.is_empty() {
            return Err(Error::CapacityExceeded(format!("no free placement to shuffle object {k}")));
        }
        placements[k] = options[rng.random_range(0..options.len())];
    }
    Ok(placements)
}

/// Mutable per-episode world: where objects are, which receptacles are open,
/// and where the agent stands.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WorldState {
    pub agent: Cell,
    pub placements: Vec<Placement>,
    pub open: Vec<bool>,
}

impl WorldState {
    pub fn from_scenario(s: &Scenario) -> Self {
        Self {
            agent: s.agent_start,
            placements: s.objects.iter().map(|o| o.current).collect(),
            open: s.receptacles.iter().map(|r| r.open).collect(),
        }
    }

    pub fn rect(&self, s: &Scenario, id: ObjectId) -> Rect {
        s.object(id).footprint.at(self.placements[id.index()].origin)
    }

    /// Inside a closed openable receptacle.
    pub fn is_enclosed(&self, s: &Scenario, id: ObjectId) -> bool {
        let r = self.placements[id.index()].receptacle;
        s.receptacle(r).openable && !self.open[r.index()]
    }

    pub fn at_goal(&self, s: &Scenario, id: ObjectId) -> bool {
        self.placements[id.index()] == s.object(id).goal
    }

    pub fn all_at_goal(&self, s: &Scenario) -> bool {
        s.object_ids().all(|id| self.at_goal(s, id))
    }

    /// True when `rect` on receptacle `rid` overlaps no object other than `except`.
    pub fn is_free_for(&self, s: &Scenario, rid: ReceptacleId, rect: Rect, except: Option<ObjectId>) -> bool {
        s.receptacle(rid).surface.contains_rect(&rect)
            && s.object_ids().filter(|id| Some(*id) != except).all(|id| !self.rect(s, id).intersects(&rect))
    }

    /// No two current footprints overlap.
    pub fn footprints_disjoint(&self, s: &Scenario) -> bool {
        let n = s.n_objects();
        (0..n).all(|i| {
            (i + 1..n).all(|j| !self.rect(s, ObjectId(i as u32)).intersects(&self.rect(s, ObjectId(j as u32))))
        })
    }
}

/// Result of executing one pick-and-place.
#[derive(Clone, Debug, PartialEq)]
pub struct PickPlaceOutcome {
    /// Cells travelled: agent → object plus object → destination.
    pub traversal: u32,
    /// Free cells the agent walked through, in order.
    pub walked: Vec<Cell>,
}

/// Carries `object` to `dest`, updating placements, open flags and agent pose.
pub fn apply_pick_place(
    scenario: &Scenario,
    state: &mut WorldState,
    nav: &Navigator<'_>,
    object: ObjectId,
    dest: Placement,
) -> Result<PickPlaceOutcome> {
    if object.index() >= scenario.n_objects() {
        return Err(Error::UnknownObject(object));
    }
    if state.is_enclosed(scenario, object) {
        return Err(Error::NotAccessible(object));
    }
    let src = state.placements[object.index()];
    let rect = scenario.object(object).footprint.at(dest.origin);
    if dest.receptacle.index() >= scenario.receptacles.len()
        || !state.is_free_for(scenario, dest.receptacle, rect, Some(object))
    {
        return Err(Error::DestOccupied(object));
    }
    let leg1 = nav.path(state.agent, src.origin);
    if !leg1.reachable {
        return Err(Error::UnreachableObject(object));
    }
    let mut walked: Vec<Cell> = leg1.cells.iter().copied().filter(|c| scenario.grid.is_free(*c)).collect();
    let mut pose = walked.last().copied().unwrap_or(state.agent);
    let mut traversal = leg1.length;
    if dest != src {
        let leg2 = nav.path(src.origin, dest.origin);
        if !leg2.reachable {
            return Err(Error::UnreachableObject(object));
        }
        traversal += leg2.length;
        let free2: Vec<Cell> = leg2.cells.iter().copied().filter(|c| scenario.grid.is_free(*c)).collect();
        if let Some(last) = free2.last() {
            pose = *last;
        }
        walked.extend(free2);
        state.placements[object.index()] = dest;
        if scenario.receptacle(dest.receptacle).openable {
            state.open[dest.receptacle.index()] = true;
        }
    }
    state.agent = pose;
    Ok(PickPlaceOutcome { traversal, walked })
}
