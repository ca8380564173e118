//! Multi-room object rearrangement under partial observability on a grid.

pub mod checkpoint;
pub mod collision;
pub mod config;
pub mod error;
pub mod geometry;
pub mod gridworld;
pub mod harness;
pub mod nav;
pub mod nn;
pub mod perception;
pub mod rlplanner;
pub mod stategraph;
pub mod uodm;

pub use collision::CemParams;
pub use config::RunConfig;
pub use error::{Error, Result};
pub use geometry::{Cell, Footprint, Rect};
pub use gridworld::{
    generate_scenario, CellKind, GridMap, ObjectId, Placement, ReceptacleId, Scenario, ScenarioConfig, WorldState,
};
pub use nav::Navigator;
pub use perception::Knowledge;
pub use harness::{
    compute_metrics, run_benchmark, run_episode, EpisodeConfig, EpisodeTrace, Metrics, Models, PlannerKind, SuiteConfig,
};
pub use rlplanner::{train_planner, QModel, RlConfig, TrainSetup};
pub use uodm::{train_uodm, PriorTable, UodmConfig, UodmModel};
