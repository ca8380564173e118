use std::collections::BTreeSet;

use proptest::prelude::*;
use rand::Rng;

use rearrange_core::collision::CollisionCase;
use rearrange_core::harness::{Episode, EpisodeConfig, SearchPrior};
use rearrange_core::perception::sense;
use rearrange_core::{collision, generate_scenario, CellKind, ObjectId, Scenario, ScenarioConfig, WorldState};

fn config() -> impl Strategy<Value = ScenarioConfig> {
    (2usize..8, 0usize..3, 0usize..3, 0usize..2, 0usize..2).prop_map(|(v, po, fo, swaps, blocked)| ScenarioConfig {
        n_visible: v,
        n_partially_occluded: po,
        n_fully_occluded: fo,
        n_swap: 2 * swaps.min(v / 2),
        n_blocked_pairs: blocked.min(v / 2),
        ..ScenarioConfig::default()
    })
}

fn generated() -> impl Strategy<Value = Scenario> {
    (config(), any::<u64>()).prop_filter_map("config not realizable", |(c, seed)| generate_scenario(&c, seed).ok())
}

fn ids(s: &Scenario) -> Vec<ObjectId> {
    (0..s.n_objects() as u32).map(ObjectId).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn generation_is_pure_and_round_trips((c, seed) in (config(), any::<u64>())) {
        let a = generate_scenario(&c, seed);
        let b = generate_scenario(&c, seed);
        match (a, b) {
            (Ok(a), Ok(b)) => {
                prop_assert_eq!(&a, &b);
                prop_assert_eq!(Scenario::from_json(&a.to_json().unwrap()).unwrap(), a);
            }
            (Err(_), Err(_)) => {}
            _ => prop_assert!(false, "generation disagreed with itself"),
        }
    }

    #[test]
    fn generated_scenarios_are_well_formed(s in generated()) {
        prop_assert!(s.validate().is_ok());
        prop_assert_eq!(s.counts.total(), s.n_objects());
        prop_assert_eq!(s.grid.get(s.agent_start), Some(CellKind::Free));
        let state = WorldState::from_scenario(&s);
        prop_assert!(state.footprints_disjoint(&s));
        for o in &s.objects {
            let rec = s.receptacle(o.goal.receptacle);
            prop_assert!(o.goal_rect().cells().all(|c| rec.surface.contains(c)));
        }
        for r in &s.receptacles {
            prop_assert!(r.openable || r.open);
        }
        // F.O. objects are exactly the enclosed ones
        let enclosed = ids(&s).into_iter().filter(|id| state.is_enclosed(&s, *id)).count();
        prop_assert_eq!(enclosed, s.counts.n_fully_occluded);
        // every cell of a receptacle belongs to that receptacle alone
        for r in &s.receptacles {
            for c in r.surface_cells() {
                prop_assert_eq!(s.grid.get(c).and_then(CellKind::receptacle), Some(r.id));
            }
        }
        let swaps = collision::find_collisions(
            &s.objects.iter().map(|o| (o.id, o.current_rect(), o.goal.origin)).collect::<Vec<_>>(),
        )
        .into_iter()
        .filter(|c| matches!(c, CollisionCase::Swap { .. }))
        .count();
        prop_assert!(swaps >= s.counts.n_swap / 2);
    }

    #[test]
    fn random_play_conserves_objects_and_knowledge(s in generated(), seed in any::<u64>()) {
        let mut ep = Episode::new(&s, SearchPrior::Uniform, &EpisodeConfig::default(), seed).unwrap();
        let all: BTreeSet<ObjectId> = ids(&s).into_iter().collect();
        let mut unseen_before = ep.knowledge.unseen.len();
        for _ in 0..200 {
            ep.prepare().unwrap();
            if ep.is_done() {
                break;
            }
            let valid = ep.valid_actions();
            if valid.is_empty() {
                ep.explore().unwrap();
            } else {
                let pick = valid[ep.rng().random_range(0..valid.len())];
                ep.step(pick).unwrap();
            }
            prop_assert_eq!(ep.state.placements.len(), s.n_objects());
            prop_assert!(ep.state.footprints_disjoint(&s));

            let k = &ep.knowledge;
            let visible: BTreeSet<ObjectId> = k.visible.keys().copied().collect();
            prop_assert!(visible.is_disjoint(&k.unseen));
            prop_assert_eq!(visible.union(&k.unseen).copied().collect::<BTreeSet<_>>(), all.clone());
            prop_assert!(k.predicted.keys().all(|id| k.unseen.contains(id)));
            prop_assert!(k.unseen.len() <= unseen_before);
            unseen_before = k.unseen.len();
        }
    }

    #[test]
    fn sensing_is_deterministic(s in generated()) {
        let state = WorldState::from_scenario(&s);
        let a = sense(&s, &state, s.agent_start);
        let b = sense(&s, &state, s.agent_start);
        prop_assert_eq!(a, b);
    }
}
