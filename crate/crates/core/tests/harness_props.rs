use std::collections::{HashSet, VecDeque};
use std::sync::{Arc, OnceLock};

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use rearrange_core::harness::{
    aggregate, replay, run_benchmark, table_suite, write_aggregate_csv, write_bench_csv, ActionKind, SuiteConfig,
};
use rearrange_core::perception::{Perceiver, SensorConfig};
use rearrange_core::rlplanner::{baseline_greedy_exploration, baseline_heuristic, random_receptacle, CandidateAction};
use rearrange_core::uodm::embed_orr;
use rearrange_core::{
    compute_metrics, generate_scenario, run_episode, Cell, CellKind, EpisodeConfig, GridMap, Models, Navigator, ObjectId,
    PlannerKind, PriorTable, QModel, RlConfig, ScenarioConfig, UodmConfig, UodmModel,
};

fn uodm() -> Arc<UodmModel> {
    static M: OnceLock<Arc<UodmModel>> = OnceLock::new();
    M.get_or_init(|| {
        let cfg = UodmConfig { epochs: 40, ..UodmConfig::default() };
        Arc::new(rearrange_core::train_uodm(PriorTable::bundled(), &cfg).unwrap().0)
    })
    .clone()
}

fn models() -> Models {
    let planner = QModel::new(&RlConfig::default(), &mut ChaCha8Rng::seed_from_u64(1));
    Models { uodm: Some(uodm()), planner: Some(Arc::new(planner)) }
}

/// BFS over free cells; endpoints may be non-free and are entered from a free neighbour.
fn bfs(map: &GridMap, from: Cell, to: Cell) -> Option<u32> {
    if from == to {
        return Some(0);
    }
    let mut dist = vec![u32::MAX; map.len()];
    let mut queue = VecDeque::from([from]);
    dist[map.index(from)] = 0;
    while let Some(c) = queue.pop_front() {
        let d = dist[map.index(c)];
        for nb in c.neighbors4() {
            if !map.in_bounds(nb) || dist[map.index(nb)] != u32::MAX {
                continue;
            }
            if nb == to {
                return Some(d + 1);
            }
            if map.is_free(nb) {
                dist[map.index(nb)] = d + 1;
                queue.push_back(nb);
            }
        }
    }
    None
}

#[test]
fn tidy_scenario_is_an_empty_success() {
    let cfg = ScenarioConfig { n_misplaced: Some(0), ..ScenarioConfig::fully_observed(4) };
    let s = generate_scenario(&cfg, 2).unwrap();
    for p in [PlannerKind::Hp, PlannerKind::Rs, PlannerKind::Ge] {
        let t = run_episode(&s, p, &Models::default(), &EpisodeConfig::default()).unwrap();
        let m = compute_metrics(&t);
        assert!(t.success);
        assert_eq!(t.n_steps(), 0);
        assert_eq!(m.ttl, 0.0);
        assert_eq!(m.srn, 1.0);
        assert_eq!(m.eod, None);
    }
}

#[test]
fn heuristic_resolves_a_forced_swap_through_a_buffer() {
    let cfg = ScenarioConfig { n_swap: 2, n_misplaced: Some(2), ..ScenarioConfig::fully_observed(4) };
    let mut seen = 0;
    for seed in 0..10 {
        let Ok(s) = generate_scenario(&cfg, seed) else { continue };
        let t = run_episode(&s, PlannerKind::Hp, &Models::default(), &EpisodeConfig::default()).unwrap();
        assert!(t.success, "seed {seed}");
        let moves: Vec<_> = t.records.iter().filter(|r| r.kind == ActionKind::PickPlace && r.placed.is_some()).collect();
        assert!(moves.len() >= 3, "seed {seed}: {} moves", moves.len());
        let to_buffer = moves.iter().filter(|r| r.placed != Some(s.object(r.object.unwrap()).goal)).count();
        assert!(to_buffer >= 1);
        assert!(replay(&s, &t).unwrap().all_at_goal(&s));
        seen += 1;
    }
    assert!(seen >= 5);
}

fn suite_config() -> impl Strategy<Value = ScenarioConfig> {
    (2usize..7, 0usize..3, 0usize..2, 0usize..2).prop_map(|(v, po, fo, sw)| ScenarioConfig {
        n_visible: v,
        n_partially_occluded: po,
        n_fully_occluded: fo,
        n_swap: 2 * sw.min(v / 2),
        ..ScenarioConfig::default()
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(40))]

    #[test]
    fn traces_obey_the_metric_laws(cfg in suite_config(), seed in 0u64..10_000, planner in 0usize..4) {
        let s = generate_scenario(&cfg, seed);
        prop_assume!(s.is_ok());
        let s = s.unwrap();
        let t = run_episode(&s, PlannerKind::ALL[planner], &models(), &EpisodeConfig::default()).unwrap();
        let m = compute_metrics(&t);
        let n_d = t.n_discovery();
        prop_assert!(n_d <= t.n_steps());
        prop_assert!(t.n_steps() <= 10 * s.n_objects());
        let ttl: f64 = t.records.iter().map(|r| f64::from(r.traversal)).sum::<f64>() * s.grid.cell_size;
        prop_assert!((m.ttl - ttl).abs() < 1e-9);
        prop_assert_eq!(m.eod.is_none(), n_d == 0);
        prop_assert!(m.srn >= 0.0);
        let end = replay(&s, &t).unwrap();
        prop_assert_eq!(end.all_at_goal(&s), t.success);
        if !t.success {
            prop_assert_eq!(m.srn, 0.0);
        }
    }
}

#[test]
fn random_receptacle_guesses_are_uniform() {
    let cands: Vec<u32> = (0..7).collect();
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let mut counts = [0u32; 7];
    let draws = 10_000;
    for _ in 0..draws {
        counts[random_receptacle(&cands, &mut rng).unwrap() as usize] += 1;
    }
    let e = f64::from(draws) / 7.0;
    let stat: f64 = counts.iter().map(|c| (f64::from(*c) - e).powi(2) / e).sum();
    let p = 1.0 - ChiSquared::new(6.0).unwrap().cdf(stat);
    assert!(p > 1e-3, "chi-square {stat:.2}, p {p:.2e}");
    assert_eq!(random_receptacle(&[4u32], &mut rng), Some(4));
    assert_eq!(random_receptacle::<u32>(&[], &mut rng), None);
}

#[test]
fn heuristic_matches_brute_force_on_random_states() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..100 {
        let mut map = GridMap::walled(14, 11, 0.25);
        for _ in 0..25 {
            let c = Cell::new(rng.random_range(1..13), rng.random_range(1..10));
            map.set(c, CellKind::Wall);
        }
        let free: Vec<Cell> = map.free_cells().collect();
        let agent = free[rng.random_range(0..free.len())];
        let cands: Vec<CandidateAction> = (0..rng.random_range(1..7))
            .map(|k| CandidateAction {
                id: ObjectId(k),
                source: free[rng.random_range(0..free.len())],
                goal: free[rng.random_range(0..free.len())],
                valid: rng.random_bool(0.8),
            })
            .collect();
        let sentinel = 14 * 11;
        let cost = |a, b| u64::from(bfs(&map, a, b).unwrap_or(sentinel));
        let oracle = cands.iter().filter(|c| c.valid).map(|c| (cost(agent, c.source) + cost(c.source, c.goal), c.id)).min();
        let nav = Navigator::new(&map);
        assert_eq!(baseline_heuristic(&nav, agent, &cands), oracle.map(|o| o.1));
    }
}

#[test]
fn greedy_exploration_covers_every_reachable_cell() {
    let cfg = ScenarioConfig::fully_observed(4);
    for seed in 0..50 {
        let s = generate_scenario(&cfg, 1000 + seed).unwrap();
        let map = &s.grid;
        let nav = Navigator::new(map);
        let perceiver = Perceiver::new(map, SensorConfig { radius: s.sensing_radius, ..Default::default() });
        let mut seen = vec![false; map.len()];
        for c in perceiver.cells_in_view(s.agent_start) {
            seen[map.index(c)] = true;
        }
        let waypoints = baseline_greedy_exploration(map, &nav, &seen, s.agent_start, |c| perceiver.cells_in_view(c));
        let mut pose = s.agent_start;
        for w in &waypoints {
            for c in nav.path(pose, *w).cells {
                for v in perceiver.cells_in_view(c) {
                    seen[map.index(v)] = true;
                }
            }
            pose = *w;
        }
        let reachable: HashSet<Cell> = map.free_cells().filter(|c| bfs(map, s.agent_start, *c).is_some()).collect();
        let missed = reachable.iter().filter(|c| !seen[map.index(**c)]).count();
        assert_eq!(missed, 0, "seed {seed}: {missed} of {} reachable cells unseen", reachable.len());
    }
}

#[test]
fn bench_csv_and_table_layout() {
    let suite = SuiteConfig { seeds: vec![3], ..SuiteConfig::default() };
    let planners = [PlannerKind::Cql, PlannerKind::Hp, PlannerKind::Rs, PlannerKind::Ge];
    let rows = run_benchmark(&suite, &planners, &models()).unwrap();
    assert_eq!(rows.len(), table_suite().len() * planners.len());

    let mut buf = Vec::new();
    write_bench_csv(&rows, &mut buf).unwrap();
    let mut reader = csv::Reader::from_reader(buf.as_slice());
    let header: Vec<String> = reader.headers().unwrap().iter().map(String::from).collect();
    assert_eq!(header, ["config", "planner", "n", "po", "fo", "swaps", "seed", "success", "srn", "eod", "ttl", "steps", "discovery"]);
    for (rec, row) in reader.records().zip(&rows) {
        let rec = rec.unwrap();
        assert_eq!(&rec[0], row.config);
        assert_eq!(rec[1].parse::<PlannerKind>().unwrap(), row.planner);
        assert!((rec[10].parse::<f64>().unwrap() - row.ttl).abs() < 1e-6);
        assert_eq!(&rec[9] == "NC", row.eod.is_none());
    }

    let agg = aggregate(&rows);
    assert_eq!(agg.len(), 6 * planners.len());
    let mut out = Vec::new();
    write_aggregate_csv(&agg, &mut out).unwrap();
    assert_eq!(String::from_utf8(out).unwrap().lines().count(), 1 + agg.len());
}

#[test]
fn missing_models_are_reported() {
    let suite = SuiteConfig { seeds: vec![0], ..SuiteConfig::default() };
    assert!(run_benchmark(&suite, &[PlannerKind::Cql], &Models { uodm: Some(uodm()), planner: None }).is_err());
    assert!(run_benchmark(&suite, &[PlannerKind::Hp], &Models::default()).is_err());
}

#[test]
fn checkpoints_round_trip_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let m = uodm();
    let path = dir.path().join("uodm.ckpt");
    m.save(&path).unwrap();
    let back = UodmModel::load(&path).unwrap();
    let e = embed_orr("mug", "kitchen|counter").unwrap();
    assert_eq!(back.filter_probs(&e), m.filter_probs(&e));
    assert_eq!(back.rank_score(&e), m.rank_score(&e));

    let q = models().planner.unwrap();
    let qpath = dir.path().join("planner.ckpt");
    q.save(&qpath).unwrap();
    assert_eq!(&QModel::load(&qpath).unwrap(), q.as_ref());
    // the wrong kind is refused
    assert!(QModel::load(&path).is_err());
    assert!(UodmModel::load(&qpath).is_err());
}
