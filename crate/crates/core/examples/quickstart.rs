//! Generates a scenario with unseen objects and a swap pair, then runs every
//! baseline that needs no trained planner.

use std::sync::Arc;

use rearrange_core::{
    compute_metrics, generate_scenario, run_episode, train_uodm, EpisodeConfig, Models, PlannerKind, PriorTable,
    ScenarioConfig, UodmConfig,
};

fn main() -> rearrange_core::Result<()> {
    let cfg = ScenarioConfig { n_visible: 6, n_partially_occluded: 3, n_fully_occluded: 1, n_swap: 2, ..Default::default() };
    let scenario = generate_scenario(&cfg, 7)?;
    let (uodm, report) = train_uodm(PriorTable::bundled(), &UodmConfig::default())?;
    println!("uodm: held-out accuracy {:.3}, spearman {:.3}", report.holdout_filter_accuracy, report.holdout_spearman);

    let models = Models { uodm: Some(Arc::new(uodm)), planner: None };
    for planner in [PlannerKind::Hp, PlannerKind::Rs, PlannerKind::Ge] {
        let trace = run_episode(&scenario, planner, &models, &EpisodeConfig::default())?;
        let m = compute_metrics(&trace);
        let eod = m.eod.map_or("NC".to_string(), |e| format!("{e:.2}"));
        println!(
            "{planner}: success {} in {} steps, srn {:.2}, eod {eod}, ttl {:.2} m",
            trace.success,
            trace.n_steps(),
            m.srn,
            m.ttl
        );
    }
    Ok(())
}
