use proptest::prelude::*;

use rearrange_core::collision::{
    cem_objective, cem_search, classify_pair, exhaustive_best, resolve_collisions, CemParams, CollisionCase, FreeSpace,
    ProjectedBox,
};
use rearrange_core::{generate_scenario, Cell, GridMap, Knowledge, ObjectId, Rect, ScenarioConfig};

fn rect(max: i32) -> impl Strategy<Value = Rect> {
    (0..max, 0..max, 1u32..4, 1u32..4).prop_map(|(x, y, w, h)| Rect::new(Cell::new(x, y), w, h))
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn classification_is_symmetric(ri in rect(10), rj in rect(10), gi in (0..10, 0..10), gj in (0..10, 0..10)) {
        let (i, j) = (ObjectId(0), ObjectId(1));
        let gi = Cell::new(gi.0, gi.1);
        let gj = Cell::new(gj.0, gj.1);
        let ab = classify_pair(i, &ProjectedBox::current(ri), gi, j, &ProjectedBox::current(rj), gj);
        let ba = classify_pair(j, &ProjectedBox::current(rj), gj, i, &ProjectedBox::current(ri), gi);
        // roles are named, so both orders must give the same case
        prop_assert_eq!(ab, ba);
    }

    #[test]
    fn cem_results_are_always_feasible(
        free in prop::collection::vec(prop::bool::weighted(0.6), 144),
        moving in rect(12),
        target in rect(12),
        seed in any::<u64>(),
    ) {
        let grid = GridMap::new(12, 12, 0.25);
        let space = FreeSpace { grid: &grid, free: &free };
        let mv = ProjectedBox::current(moving);
        match cem_search(&mv, &target, &space, &CemParams::default(), seed) {
            Ok(p) => prop_assert!(cem_objective(p, &mv, &target, &space) > 0.0),
            Err(_) => prop_assert!(exhaustive_best(&mv, &target, &space).is_none()),
        }
    }
}

/// Once the blocker sits on its goal, the blocked object gets its true goal back.
#[test]
fn blocked_goal_is_restored_after_the_blocker_moves() {
    let cfg = ScenarioConfig { n_visible: 6, n_blocked_pairs: 2, ..ScenarioConfig::default() };
    let mut checked = 0;
    for seed in 0..40 {
        let Ok(s) = generate_scenario(&cfg, seed) else { continue };
        let mut k = Knowledge::new(&s);
        for o in &s.objects {
            k.visible.insert(o.id, o.current);
            k.unseen.remove(&o.id);
        }
        k.observed.fill(true);
        k.refresh_free_map(&s);
        let cases = resolve_collisions(&s, &mut k, &CemParams::default(), seed).unwrap();
        for case in cases {
            let CollisionCase::BlockedGoal { blocked, blocker } = case else { continue };
            assert_eq!(k.resolved_goals[&blocked], s.object(blocked).current, "pinned while blocked");
            let mut after = k.clone();
            after.visible.insert(blocker, s.object(blocker).goal);
            let again = resolve_collisions(&s, &mut after, &CemParams::default(), seed).unwrap();
            let still = again.iter().any(|c| match *c {
                CollisionCase::BlockedGoal { blocked: b, .. } => b == blocked,
                CollisionCase::Swap { a, b } => a == blocked || b == blocked,
                CollisionCase::None => false,
            });
            if !still {
                assert_eq!(after.resolved_goals[&blocked], s.object(blocked).goal);
                checked += 1;
            }
        }
    }
    assert!(checked >= 10, "only {checked} blocked pairs exercised");
}
