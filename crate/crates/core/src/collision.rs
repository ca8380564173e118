//! Goal collisions between visible objects and buffer search.
//!
//! Two misplaced objects collide when one sits on the other's goal footprint
//! (blocked goal) or both do (swap). A swap is broken by moving one object to
//! a temporary buffer found with the cross-entropy method, after which it is
//! an ordinary blocked goal.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Cell, Footprint, Rect};
use crate::gridworld::{GridMap, ObjectId, Placement, Scenario};
use crate::perception::Knowledge;

/// Where a projected box is anchored.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Anchor {
    Current,
    Goal,
}

/// An object's footprint projected onto the receptacle map.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProjectedBox {
    pub rect: Rect,
    pub anchor: Anchor,
}

impl ProjectedBox {
    pub fn current(rect: Rect) -> Self {
        Self { rect, anchor: Anchor::Current }
    }

    /// The same box translated so its origin is `origin`.
    pub fn moved_to(&self, origin: Cell) -> Rect {
        Rect::new(origin, self.rect.w, self.rect.h)
    }

    pub fn footprint(&self) -> Footprint {
        Footprint::new(self.rect.w, self.rect.h)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CollisionCase {
    None,
    BlockedGoal { blocked: ObjectId, blocker: ObjectId },
    Swap { a: ObjectId, b: ObjectId },
}

/// Classifies objects `i` and `j` from their current boxes and goal origins.
///
/// Condition (i): `i`'s box overlaps `j`'s box moved to `j`'s goal.
/// Condition (ii): `i`'s box moved to its goal overlaps `j`'s box.
pub fn classify_pair(
    i: ObjectId,
    box_i: &ProjectedBox,
    goal_i: Cell,
    j: ObjectId,
    box_j: &ProjectedBox,
    goal_j: Cell,
) -> CollisionCase {
    let c1 = box_i.rect.intersects(&box_j.moved_to(goal_j));
    let c2 = box_i.moved_to(goal_i).intersects(&box_j.rect);
    match (c1, c2) {
        (false, false) => CollisionCase::None,
        (true, false) => CollisionCase::BlockedGoal { blocked: j, blocker: i },
        (false, true) => CollisionCase::BlockedGoal { blocked: i, blocker: j },
        (true, true) => CollisionCase::Swap { a: i.min(j), b: i.max(j) },
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CemParams {
    /// Samples per iteration.
    pub n_samples: usize,
    /// Elite samples refit each iteration.
    pub n_elite: usize,
    pub iterations: usize,
    /// Lower bound on the sampling standard deviation, in cells.
    pub min_std: f64,
}

impl Default for CemParams {
    fn default() -> Self {
        Self { n_samples: 64, n_elite: 8, iterations: 10, min_std: 1.0 }
    }
}

impl CemParams {
    pub fn validate(&self) -> Result<()> {
        if self.n_elite == 0 || self.n_elite > self.n_samples || self.iterations == 0 || self.min_std.is_nan() {
            return Err(Error::InvalidConfig("cem needs 1 <= n_elite <= n_samples and iterations >= 1".into()));
        }
        Ok(())
    }
}

/// Free receptacle cells over a grid.
#[derive(Clone, Copy, Debug)]
pub struct FreeSpace<'a> {
    pub grid: &'a GridMap,
    pub free: &'a [bool],
}

impl FreeSpace<'_> {
    pub fn contains(&self, rect: &Rect) -> bool {
        rect.cells().all(|c| self.grid.in_bounds(c) && self.free[self.grid.index(c)])
    }

    fn cells(&self) -> Vec<Cell> {
        (0..self.grid.len()).filter(|&i| self.free[i]).map(|i| self.grid.cell_at(i)).collect()
    }
}

/// `exp(-‖p - target‖)` when the moved box fits in free space clear of the
/// target box, else 0.
pub fn cem_objective(p: Cell, moving: &ProjectedBox, target: &Rect, space: &FreeSpace<'_>) -> f64 {
    let moved = moving.moved_to(p);
    if !space.contains(&moved) || moved.intersects(target) {
        return 0.0;
    }
    (-p.euclidean(target.origin)).exp()
}

/// Best cell by exhaustive scan; ties go to the first cell in row-major order.
pub fn exhaustive_best(moving: &ProjectedBox, target: &Rect, space: &FreeSpace<'_>) -> Option<(Cell, f64)> {
    let mut best: Option<(Cell, f64)> = None;
    for c in space.cells() {
        let f = cem_objective(c, moving, target, space);
        if f > 0.0 && best.is_none_or(|(_, b)| f > b) {
            best = Some((c, f));
        }
    }
    best
}

/// Cross-entropy search for a buffer origin close to `target`.
///
/// The first batch is uniform over free cells; later batches are drawn from an
/// axis-aligned Gaussian refit to the elite samples and rounded to cells. The
/// best sample ever seen is returned; if none scores above zero an exhaustive
/// scan decides.
pub fn cem_search(
    moving: &ProjectedBox,
    target: &Rect,
    space: &FreeSpace<'_>,
    params: &CemParams,
    seed: u64,
) -> Result<Cell> {
    params.validate()?;
    let free = space.cells();
    if free.is_empty() {
        return Err(Error::NoFeasibleCell);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let grid = space.grid;
    let mut best: Option<(Cell, f64)> = None;
    let mut dist: Option<([f64; 2], [f64; 2])> = None;
    for _ in 0..params.iterations {
        let mut scored: Vec<(Cell, f64)> = (0..params.n_samples)
            .map(|_| {
                let c = match dist {
                    None => free[rng.random_range(0..free.len())],
                    Some((mu, sd)) => {
                        let x = Normal::new(mu[0], sd[0]).expect("finite std").sample(&mut rng).round() as i32;
                        let y = Normal::new(mu[1], sd[1]).expect("finite std").sample(&mut rng).round() as i32;
                        Cell::new(x.clamp(0, grid.width as i32 - 1), y.clamp(0, grid.height as i32 - 1))
                    }
                };
                (c, cem_objective(c, moving, target, space))
            })
            .collect();
        scored.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
        if scored[0].1 > 0.0 && best.is_none_or(|(_, f)| scored[0].1 > f) {
            best = Some(scored[0]);
        }
        let elite = &scored[..params.n_elite];
        if elite[0].1 <= 0.0 {
            // nothing feasible yet: keep sampling uniformly
            dist = None;
            continue;
        }
        let n = elite.len() as f64;
        let mx = elite.iter().map(|e| f64::from(e.0.x)).sum::<f64>() / n;
        let my = elite.iter().map(|e| f64::from(e.0.y)).sum::<f64>() / n;
        let sx = (elite.iter().map(|e| (f64::from(e.0.x) - mx).powi(2)).sum::<f64>() / n).sqrt();
        let sy = (elite.iter().map(|e| (f64::from(e.0.y) - my).powi(2)).sum::<f64>() / n).sqrt();
        dist = Some(([mx, my], [sx.max(params.min_std), sy.max(params.min_std)]));
    }
    match best {
        Some((c, _)) => Ok(c),
        None => exhaustive_best(moving, target, space).map(|(c, _)| c).ok_or(Error::NoFeasibleCell),
    }
}

/// Every colliding pair among `objects` (current rect, goal origin).
pub fn find_collisions(objects: &[(ObjectId, Rect, Cell)]) -> Vec<CollisionCase> {
    let mut out = Vec::new();
    for (a, (i, ri, gi)) in objects.iter().enumerate() {
        for (j, rj, gj) in &objects[a + 1..] {
            let case = classify_pair(*i, &ProjectedBox::current(*ri), *gi, *j, &ProjectedBox::current(*rj), *gj);
            if case != CollisionCase::None {
                out.push(case);
            }
        }
    }
    out
}

/// Recomputes the resolved goals of all visible objects.
///
/// Swap pairs get CEM buffers (committed until used); a goal-blocked object is
/// pinned to its current placement until the blocker leaves; everything else
/// targets its true goal. When every misplaced visible object is pinned (a
/// cycle longer than two), the lowest-id one is sent to a buffer.
pub fn resolve_collisions(
    scenario: &Scenario,
    knowledge: &mut Knowledge,
    params: &CemParams,
    seed: u64,
) -> Result<Vec<CollisionCase>> {
    let goal_of = |id: ObjectId| scenario.object(id).goal;
    let rect_at = |id: ObjectId, p: Placement| scenario.object(id).footprint.at(p.origin);

    // a buffer is spent once its object sits on it
    let visible = knowledge.visible.clone();
    knowledge.buffers.retain(|id, b| visible.get(id) != Some(b));

    let misplaced: Vec<ObjectId> = visible.iter().filter(|(id, p)| **p != goal_of(**id)).map(|(id, _)| *id).collect();
    let view: Vec<(ObjectId, Rect, Cell)> =
        visible.iter().map(|(id, p)| (*id, rect_at(*id, *p), goal_of(*id).origin)).collect();
    let cases = find_collisions(&view);

    let mut resolved: BTreeMap<ObjectId, Placement> = visible.keys().map(|id| (*id, goal_of(*id))).collect();
    let mut pinned = Vec::new();
    for case in &cases {
        match *case {
            CollisionCase::BlockedGoal { blocked, .. } => pinned.push(blocked),
            CollisionCase::Swap { a, b } => {
                if knowledge.buffers.contains_key(&a) || knowledge.buffers.contains_key(&b) {
                    continue;
                }
                for (i, j) in [(a, b), (b, a)] {
                    let buf = find_buffer(scenario, knowledge, i, rect_at(j, visible[&j]), params, seed ^ u64::from(i.0))?;
                    knowledge.buffers.insert(i, buf);
                }
            }
            CollisionCase::None => {}
        }
    }
    // once one swap partner is parked in its buffer the other no longer needs one
    let parked: Vec<ObjectId> = cases
        .iter()
        .filter_map(|c| match *c {
            CollisionCase::BlockedGoal { blocked, blocker } if knowledge.buffers.contains_key(&blocker) => {
                Some(blocker).filter(|_| !knowledge.buffers.contains_key(&blocked))
            }
            _ => None,
        })
        .collect();
    for id in parked {
        knowledge.buffers.remove(&id);
    }
    for (id, b) in &knowledge.buffers {
        if resolved.contains_key(id) {
            resolved.insert(*id, *b);
        }
    }
    for id in &pinned {
        if !knowledge.buffers.contains_key(id) {
            resolved.insert(*id, visible[id]);
        }
    }

    let movable = misplaced.iter().any(|id| resolved[id] != visible[id]);
    if !movable && !pinned.is_empty() {
        let id = *pinned.iter().min().expect("non-empty");
        let here = rect_at(id, visible[&id]);
        let buf = find_buffer(scenario, knowledge, id, here, params, seed ^ u64::from(id.0))?;
        knowledge.buffers.insert(id, buf);
        resolved.insert(id, buf);
    }
    knowledge.resolved_goals = resolved;
    Ok(cases)
}

/// Buffer placement for `object` near `near`, avoiding every goal footprint
/// and every committed buffer.
fn find_buffer(
    scenario: &Scenario,
    knowledge: &Knowledge,
    object: ObjectId,
    near: Rect,
    params: &CemParams,
    seed: u64,
) -> Result<Placement> {
    let grid = &scenario.grid;
    let mut free = knowledge.free_map.clone();
    let mut block = |r: Rect| {
        for c in r.cells() {
            if grid.in_bounds(c) {
                free[grid.index(c)] = false;
            }
        }
    };
    for o in &scenario.objects {
        block(o.goal_rect());
    }
    for (id, b) in &knowledge.buffers {
        block(scenario.object(*id).footprint.at(b.origin));
    }
    let fp = scenario.object(object).footprint;
    let moving = ProjectedBox::current(fp.at(knowledge.visible[&object].origin));
    let space = FreeSpace { grid, free: &free };
    let origin = cem_search(&moving, &near, &space, params, seed)?;
    let receptacle = grid.get(origin).and_then(|k| k.receptacle()).ok_or(Error::NoFeasibleCell)?;
    Ok(Placement { receptacle, origin })
}
