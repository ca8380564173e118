use std::hint::black_box;

use criterion::{criterion_group, criterion_main, Criterion};

use rearrange_bench::{graph, model, scenario};
use rearrange_core::collision::{cem_search, CemParams, FreeSpace, ProjectedBox};
use rearrange_core::nav::DistanceField;
use rearrange_core::rlplanner::q_values;
use rearrange_core::{run_episode, Cell, EpisodeConfig, Models, PlannerKind, Rect};

fn nav(c: &mut Criterion) {
    let s = scenario();
    c.bench_function("bfs_distance_field_30x30", |b| b.iter(|| DistanceField::compute(&s.grid, black_box(s.agent_start))));
}

fn cem(c: &mut Criterion) {
    let s = scenario();
    let free: Vec<bool> = s.grid.cells.iter().map(|k| k.receptacle().is_some()).collect();
    let space = FreeSpace { grid: &s.grid, free: &free };
    let moving = ProjectedBox::current(Rect::new(Cell::new(3, 3), 2, 1));
    let target = Rect::new(Cell::new(10, 10), 2, 2);
    let params = CemParams::default();
    c.bench_function("cem_search_default", |b| b.iter(|| cem_search(&moving, &target, &space, &params, black_box(7))));
}

fn gcn(c: &mut Criterion) {
    let s = scenario();
    let g = graph(&s);
    let m = model();
    c.bench_function("q_values_10_objects", |b| b.iter(|| q_values(&m, black_box(&g)).unwrap()));
}

fn episode(c: &mut Criterion) {
    let s = scenario();
    let mut group = c.benchmark_group("episode");
    group.sample_size(20);
    for p in [PlannerKind::Rs, PlannerKind::Ge] {
        group.bench_function(p.name(), |b| {
            b.iter(|| run_episode(&s, p, &Models::default(), &EpisodeConfig::default()).unwrap())
        });
    }
    group.finish();
}

criterion_group!(benches, nav, cem, gcn, episode);
criterion_main!(benches);
