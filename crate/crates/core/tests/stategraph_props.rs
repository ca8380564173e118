use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use rearrange_core::stategraph::{build_graph, gcn_forward, GcnWeights, GraphObject, NODE_DIM};
use rearrange_core::{Cell, CellKind, GridMap, Navigator, ObjectId};

fn objects(n: usize, rng: &mut ChaCha8Rng) -> Vec<GraphObject> {
    (0..n)
        .map(|k| GraphObject {
            id: ObjectId(k as u32),
            label: ["cup", "plate", "lamp"][k % 3].into(),
            source: Cell::new(rng.random_range(1..8), rng.random_range(1..8)),
            goal: Cell::new(rng.random_range(1..8), rng.random_range(1..8)),
        })
        .collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn edge_law_and_finite_features(n in 0usize..25, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let map = GridMap::walled(9, 9, 0.25);
        let g = build_graph(&Navigator::new(&map), Cell::new(4, 4), &objects(n, &mut rng));
        prop_assert_eq!(g.nodes.len(), 2 * n + 1);
        prop_assert_eq!(g.edges.len(), n * n + n);
        prop_assert_eq!(g.features.len(), g.nodes.len() * NODE_DIM);
        prop_assert!(g.features.iter().all(|x| x.is_finite()));
    }

    /// Walls that change no path between graph nodes leave the embedding untouched;
    /// walls that lengthen a path change it.
    #[test]
    fn embeddings_depend_only_on_graph_contents(n in 1usize..6, seed in any::<u64>()) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let objs = objects(n, &mut rng);
        let agent = Cell::new(4, 4);
        let w = GcnWeights::new(2, 16, &mut rng);

        // same-size map; the extra room on the right is never on a shortest path
        let mut a = GridMap::walled(16, 9, 0.25);
        for y in 0..9 {
            a.set(Cell::new(8, y), CellKind::Wall);
        }
        a.set(Cell::new(8, 4), CellKind::Free);
        let mut b = a.clone();
        for y in 2..7 {
            b.set(Cell::new(12, y), CellKind::Wall);
        }
        let ga = build_graph(&Navigator::new(&a), agent, &objs);
        let gb = build_graph(&Navigator::new(&b), agent, &objs);
        prop_assert_eq!(&ga.edges, &gb.edges);
        prop_assert_eq!(gcn_forward(&ga, &w).unwrap().0, gcn_forward(&gb, &w).unwrap().0);

        // splitting the left room changes costs and therefore the embedding
        let mut c = a.clone();
        for y in 1..8 {
            c.set(Cell::new(4, y), CellKind::Wall);
        }
        c.set(agent, CellKind::Free);
        let gc = build_graph(&Navigator::new(&c), agent, &objs);
        if gc.edges != ga.edges {
            prop_assert_ne!(gcn_forward(&gc, &w).unwrap().0, gcn_forward(&ga, &w).unwrap().0);
        }
    }
}
