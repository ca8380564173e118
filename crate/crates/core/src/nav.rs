//! Shortest collision-free paths on the occupancy grid.
//!
//! Paths are 4-connected over free cells. Either endpoint may be a non-free
//! cell (an object resting on a receptacle): the path leaves or enters it
//! through an adjacent free cell, and that step counts toward the length.
//! Every distance, edge cost and traversal number in the crate comes from here.

use std::cell::RefCell;
use std::collections::{HashMap, VecDeque};
use std::rc::Rc;

use crate::geometry::Cell;
use crate::gridworld::GridMap;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PathResult {
    /// Path length in cells.
    pub length: u32,
    /// Cells from `from` to `to` inclusive; empty when unreachable.
    pub cells: Vec<Cell>,
    pub reachable: bool,
}

impl PathResult {
    fn unreachable() -> Self {
        Self { length: 0, cells: Vec::new(), reachable: false }
    }
}

const UNSEEN: u32 = u32::MAX;

/// BFS distances from one source over free cells.
#[derive(Clone, Debug)]
pub struct DistanceField {
    source: Cell,
    width: u32,
    dist: Vec<u32>,
    parent: Vec<u32>,
}

impl DistanceField {
    pub fn compute(map: &GridMap, source: Cell) -> Self {
        let n = map.len();
        let mut dist = vec![UNSEEN; n];
        let mut parent = vec![UNSEEN; n];
        let mut queue = VecDeque::new();
        if map.in_bounds(source) {
            let s = map.index(source);
            dist[s] = 0;
            queue.push_back(source);
        }
        while let Some(c) = queue.pop_front() {
            let d = dist[map.index(c)];
            for nb in c.neighbors4() {
                if !map.is_free(nb) {
                    continue;
                }
                let i = map.index(nb);
                if dist[i] == UNSEEN {
                    dist[i] = d + 1;
                    parent[i] = map.index(c) as u32;
                    queue.push_back(nb);
                }
            }
        }
        Self { source, width: map.width, dist, parent }
    }

    pub fn source(&self) -> Cell {
        self.source
    }

    fn idx(&self, c: Cell) -> usize {
        c.y as usize * self.width as usize + c.x as usize
    }

    /// Distance to `to`, entering it from a neighbour when it is not free.
    pub fn distance_to(&self, map: &GridMap, to: Cell) -> Option<u32> {
        if !map.in_bounds(to) {
            return None;
        }
        if to == self.source {
            return Some(0);
        }
        let direct = self.dist[self.idx(to)];
        if direct != UNSEEN {
            return Some(direct);
        }
        self.entry_neighbor(map, to).map(|(_, d)| d + 1)
    }

    /// The reached neighbour of `to` with the smallest distance (first in
    /// neighbour order on ties).
    fn entry_neighbor(&self, map: &GridMap, to: Cell) -> Option<(Cell, u32)> {
        to.neighbors4()
            .into_iter()
            .filter(|nb| map.in_bounds(*nb))
            .filter_map(|nb| {
                let d = self.dist[self.idx(nb)];
                (d != UNSEEN).then_some((nb, d))
            })
            .min_by_key(|&(_, d)| d)
    }

    pub fn path_to(&self, map: &GridMap, to: Cell) -> PathResult {
        if !map.in_bounds(to) {
            return PathResult::unreachable();
        }
        if to == self.source {
            return PathResult { length: 0, cells: vec![to], reachable: true };
        }
        let (last, extra) = if self.dist[self.idx(to)] != UNSEEN {
            (to, 0)
        } else {
            match self.entry_neighbor(map, to) {
                Some((nb, _)) => (nb, 1),
                None => return PathResult::unreachable(),
            }
        };
        let mut cells = Vec::new();
        if extra == 1 {
            cells.push(to);
        }
        let mut cur = self.idx(last);
        loop {
            cells.push(map.cell_at(cur));
            let p = self.parent[cur];
            if p == UNSEEN {
                break;
            }
            cur = p as usize;
        }
        cells.reverse();
        PathResult { length: cells.len() as u32 - 1, cells, reachable: true }
    }
}

/// BFS-optimal path between two in-bounds cells.
pub fn shortest_path(map: &GridMap, from: Cell, to: Cell) -> PathResult {
    if !map.in_bounds(from) || !map.in_bounds(to) {
        return PathResult::unreachable();
    }
    DistanceField::compute(map, from).path_to(map, to)
}

/// Caches one distance field per queried source over a fixed map.
///
/// Not `Sync`; each episode runner owns its own.
pub struct Navigator<'a> {
    map: &'a GridMap,
    fields: RefCell<HashMap<Cell, Rc<DistanceField>>>,
}

impl<'a> Navigator<'a> {
    pub fn new(map: &'a GridMap) -> Self {
        Self { map, fields: RefCell::new(HashMap::new()) }
    }

    pub fn map(&self) -> &'a GridMap {
        self.map
    }

    pub fn field(&self, from: Cell) -> Rc<DistanceField> {
        if let Some(f) = self.fields.borrow().get(&from) {
            return Rc::clone(f);
        }
        let f = Rc::new(DistanceField::compute(self.map, from));
        self.fields.borrow_mut().insert(from, Rc::clone(&f));
        f
    }

    pub fn distance(&self, from: Cell, to: Cell) -> Option<u32> {
        if !self.map.in_bounds(from) {
            return None;
        }
        self.field(from).distance_to(self.map, to)
    }

    /// Distance with unreachable pairs mapped to `width × height`.
    pub fn cost_or_sentinel(&self, from: Cell, to: Cell) -> u32 {
        self.distance(from, to).unwrap_or(self.sentinel())
    }

    pub fn sentinel(&self) -> u32 {
        self.map.width * self.map.height
    }

    pub fn path(&self, from: Cell, to: Cell) -> PathResult {
        if !self.map.in_bounds(from) || !self.map.in_bounds(to) {
            return PathResult::unreachable();
        }
        self.field(from).path_to(self.map, to)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gridworld::CellKind;
    use crate::gridworld::ReceptacleId;
    use proptest::prelude::*;
    use std::cmp::Reverse;
    use std::collections::BinaryHeap;

    /// Unit-weight Dijkstra written independently of the BFS above.
    fn dijkstra(map: &GridMap, from: Cell, to: Cell) -> Option<u32> {
        if from == to {
            return Some(0);
        }
        let mut best: HashMap<Cell, u32> = HashMap::new();
        let mut heap = BinaryHeap::new();
        best.insert(from, 0);
        heap.push(Reverse((0u32, from.y, from.x)));
        while let Some(Reverse((d, y, x))) = heap.pop() {
            let c = Cell::new(x, y);
            if c == to {
                return Some(d);
            }
            if best.get(&c).is_some_and(|b| *b < d) {
                continue;
            }
            // only the source may be non-free as an interior node
            if c != from && !map.is_free(c) {
                continue;
            }
            for (dx, dy) in [(0, 1), (1, 0), (0, -1), (-1, 0)] {
                let nb = Cell::new(x + dx, y + dy);
                if !map.in_bounds(nb) || !(map.is_free(nb) || nb == to) {
                    continue;
                }
                let nd = d + 1;
                if best.get(&nb).is_none_or(|b| nd < *b) {
                    best.insert(nb, nd);
                    heap.push(Reverse((nd, nb.y, nb.x)));
                }
            }
        }
        None
    }

    fn random_map(seed: u64) -> GridMap {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let (w, h) = (rng.random_range(4..20), rng.random_range(4..20));
        let mut m = GridMap::new(w, h, 0.25);
        for i in 0..m.len() {
            let r: f64 = rng.random();
            m.cells[i] = if r < 0.25 {
                CellKind::Wall
            } else if r < 0.32 {
                CellKind::Surface(ReceptacleId(0))
            } else {
                CellKind::Free
            };
        }
        m
    }

    #[test]
    fn identity_is_zero() {
        let m = GridMap::new(5, 5, 0.25);
        let p = shortest_path(&m, Cell::new(2, 2), Cell::new(2, 2));
        assert!(p.reachable);
        assert_eq!(p.length, 0);
    }

    #[test]
    fn straight_corridor() {
        let m = GridMap::walled(11, 3, 0.25);
        // 7 intermediate cells between the endpoints
        let p = shortest_path(&m, Cell::new(1, 1), Cell::new(9, 1));
        assert_eq!(p.length, 8);
        assert_eq!(p.cells.len(), 9);
    }

    #[test]
    fn walled_off_target_is_unreachable() {
        let mut m = GridMap::walled(7, 7, 0.25);
        for c in [Cell::new(3, 2), Cell::new(2, 3), Cell::new(4, 3), Cell::new(3, 4)] {
            m.set(c, CellKind::Wall);
        }
        let p = shortest_path(&m, Cell::new(1, 1), Cell::new(3, 3));
        assert!(!p.reachable);
    }

    #[test]
    fn receptacle_endpoints_are_entered_from_a_free_neighbor() {
        let mut m = GridMap::walled(8, 5, 0.25);
        for x in 3..=5 {
            m.set(Cell::new(x, 1), CellKind::Surface(ReceptacleId(0)));
        }
        // (3,1) -> (3,2) -> (4,2) -> (5,2) -> (5,1)
        let p = shortest_path(&m, Cell::new(3, 1), Cell::new(5, 1));
        assert_eq!(p.length, 4);
        assert_eq!(p.cells.first(), Some(&Cell::new(3, 1)));
        assert_eq!(p.cells.last(), Some(&Cell::new(5, 1)));
    }

    #[test]
    fn bfs_matches_dijkstra_on_random_maps() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        for seed in 0..100 {
            let m = random_map(seed);
            for _ in 0..20 {
                let a = m.cell_at(rng.random_range(0..m.len()));
                let b = m.cell_at(rng.random_range(0..m.len()));
                let bfs = shortest_path(&m, a, b);
                let d = dijkstra(&m, a, b);
                assert_eq!(bfs.reachable.then_some(bfs.length), d, "seed {seed} {a:?}->{b:?}");
            }
        }
    }

    fn path_is_valid(m: &GridMap, p: &PathResult) -> bool {
        let n = p.cells.len();
        p.cells.windows(2).all(|w| w[0].manhattan(w[1]) == 1)
            && p.cells.iter().enumerate().all(|(i, c)| i == 0 || i + 1 == n || m.is_free(*c))
            && p.length as usize + 1 == n
    }

    proptest! {
        #[test]
        fn symmetric_and_valid(seed in 0u64..500, a in 0usize..400, b in 0usize..400) {
            let m = random_map(seed);
            let (a, b) = (m.cell_at(a % m.len()), m.cell_at(b % m.len()));
            let ab = shortest_path(&m, a, b);
            let ba = shortest_path(&m, b, a);
            prop_assert_eq!(ab.reachable, ba.reachable);
            if ab.reachable {
                prop_assert_eq!(ab.length, ba.length);
                prop_assert!(path_is_valid(&m, &ab));
            }
        }

        #[test]
        fn triangle_inequality_through_free_cells(seed in 0u64..500, a in 0usize..400, b in 0usize..400, c in 0usize..400) {
            let m = random_map(seed);
            let (a, b, c) = (m.cell_at(a % m.len()), m.cell_at(b % m.len()), m.cell_at(c % m.len()));
            prop_assume!(m.is_free(b));
            let nav = Navigator::new(&m);
            if let (Some(ab), Some(bc)) = (nav.distance(a, b), nav.distance(b, c)) {
                let ac = nav.distance(a, c);
                prop_assert!(ac.is_some());
                prop_assert!(ac.unwrap() <= ab + bc);
            }
        }

        #[test]
        fn removing_a_wall_never_lengthens(seed in 0u64..500, a in 0usize..400, b in 0usize..400, w in 0usize..400) {
            let m = random_map(seed);
            let (a, b) = (m.cell_at(a % m.len()), m.cell_at(b % m.len()));
            let walls: Vec<usize> = (0..m.len()).filter(|&i| m.cells[i] == CellKind::Wall).collect();
            prop_assume!(!walls.is_empty());
            let mut opened = m.clone();
            opened.cells[walls[w % walls.len()]] = CellKind::Free;
            let before = shortest_path(&m, a, b);
            let after = shortest_path(&opened, a, b);
            if before.reachable {
                prop_assert!(after.reachable);
                prop_assert!(after.length <= before.length);
            }
        }
    }
}
