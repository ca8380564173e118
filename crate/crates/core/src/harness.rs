//! Episode execution, metrics and benchmark suites.
//!
//! An [`Episode`] owns the world, the agent's belief and the step log. Each
//! iteration calls [`Episode::prepare`] (location prediction and collision
//! resolution), asks a planner for an object, then [`Episode::step`]s it.

use std::io::Write;
use std::sync::Arc;
use std::time::Instant;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::collision::{resolve_collisions, CemParams};
use crate::error::{Error, Result};
use crate::geometry::Cell;
use crate::gridworld::{
    apply_pick_place, generate_scenario, ObjectId, Placement, ReceptacleId, Scenario, ScenarioConfig, WorldState,
};
use crate::nav::Navigator;
use crate::perception::{open_receptacle, update_knowledge, Knowledge, Perceiver, SensorConfig};
use crate::rlplanner::{
    baseline_heuristic, baseline_random_search, nearest_frontier, q_values, random_receptacle, select_action,
    ActionClass, CandidateAction, GraphState, QModel,
};
use crate::stategraph::{build_graph, GraphObject};
use crate::uodm::{predict_locations, prune_candidate, PairScores, UodmModel};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PlannerKind {
    Cql,
    Hp,
    Rs,
    Ge,
}

impl PlannerKind {
    pub const ALL: [PlannerKind; 4] = [PlannerKind::Cql, PlannerKind::Hp, PlannerKind::Rs, PlannerKind::Ge];

    pub fn name(self) -> &'static str {
        match self {
            PlannerKind::Cql => "cql",
            PlannerKind::Hp => "hp",
            PlannerKind::Rs => "rs",
            PlannerKind::Ge => "ge",
        }
    }
}

impl std::fmt::Display for PlannerKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for PlannerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "cql" => Ok(PlannerKind::Cql),
            "hp" | "heuristic" => Ok(PlannerKind::Hp),
            "rs" | "random-search" => Ok(PlannerKind::Rs),
            "ge" | "greedy-exploration" => Ok(PlannerKind::Ge),
            other => Err(Error::InvalidConfig(format!("unknown planner {other:?}"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeConfig {
    /// Step cap as a multiple of the object count.
    pub step_cap_factor: usize,
    pub cem: CemParams,
    pub label_noise: f64,
    pub noise_seed: u64,
}

impl Default for EpisodeConfig {
    fn default() -> Self {
        Self { step_cap_factor: 10, cem: CemParams::default(), label_noise: 0.0, noise_seed: 0 }
    }
}

/// Trained models an episode may need.
#[derive(Clone, Debug, Default)]
pub struct Models {
    pub uodm: Option<Arc<UodmModel>>,
    pub planner: Option<Arc<QModel>>,
}

/// How unseen objects get a predicted receptacle.
#[derive(Clone, Copy, Debug)]
pub enum SearchPrior<'m> {
    Uodm(&'m UodmModel),
    /// Uniform over un-pruned receptacles.
    Uniform,
    /// No predictions; unseen objects are only found by exploring.
    Disabled,
}

enum Prior {
    Scores(PairScores),
    Uniform,
    Disabled,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ActionKind {
    PickPlace,
    Search,
    Explore,
}

/// One planner step.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub kind: ActionKind,
    pub object: Option<ObjectId>,
    /// Receptacle searched.
    pub receptacle: Option<ReceptacleId>,
    /// Receptacle opened during the step.
    pub opened: Option<ReceptacleId>,
    /// Where the object was put down, if it was moved.
    pub placed: Option<Placement>,
    pub traversal: u32,
    /// Counts toward the discovery attempts.
    pub discovery: bool,
    /// The searched object was found.
    pub found: bool,
    pub end_pose: Cell,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Termination {
    /// Nothing valid left to do.
    Exhausted,
    StepCap,
    /// No collision-free buffer existed.
    Infeasible,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpisodeTrace {
    pub scenario_seed: u64,
    pub planner: PlannerKind,
    pub n_objects: usize,
    /// Objects not visible from the start pose.
    pub n_unseen_initial: usize,
    pub records: Vec<StepRecord>,
    pub success: bool,
    pub termination: Termination,
    pub cell_size: f64,
}

impl EpisodeTrace {
    pub fn n_steps(&self) -> usize {
        self.records.len()
    }

    pub fn n_discovery(&self) -> usize {
        self.records.iter().filter(|r| r.discovery).count()
    }

    pub fn traversal_cells(&self) -> u64 {
        self.records.iter().map(|r| u64::from(r.traversal)).sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub srn: f64,
    /// `None` when no discovery attempt was made.
    pub eod: Option<f64>,
    /// Meters.
    pub ttl: f64,
}

pub fn compute_metrics(trace: &EpisodeTrace) -> Metrics {
    let s = if trace.success { 1.0 } else { 0.0 };
    let srn = match trace.n_steps() {
        0 => s,
        ns => s * trace.n_objects as f64 / ns as f64,
    };
    let eod = match trace.n_discovery() {
        0 => None,
        nd => Some(trace.n_unseen_initial as f64 / nd as f64),
    };
    Metrics { srn, eod, ttl: trace.traversal_cells() as f64 * trace.cell_size }
}

/// What one [`Episode::step`] did, for reward computation.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct StepOutcome {
    pub class: ActionClass,
    pub traversal: u32,
    /// This step left every object at its goal for the first time.
    pub completes: bool,
}

/// A candidate object in the planner's view.
#[derive(Clone, Debug, PartialEq)]
pub struct EpisodeCandidate {
    pub id: ObjectId,
    pub label: String,
    pub source: Cell,
    pub goal: Cell,
    pub valid: bool,
    pub unseen: bool,
}

pub struct Episode<'a> {
    scenario: &'a Scenario,
    nav: Navigator<'a>,
    perceiver: Perceiver<'a>,
    pub state: WorldState,
    pub knowledge: Knowledge,
    prior: Prior,
    config: EpisodeConfig,
    rng: ChaCha8Rng,
    seed: u64,
    records: Vec<StepRecord>,
    n_unseen_initial: usize,
    termination: Option<Termination>,
    complete: bool,
    rounds: u64,
}

pub(crate) fn mix_seed(a: u64, b: u64) -> u64 {
    let mut z = a ^ b.wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

impl<'a> Episode<'a> {
    /// Starts an episode with one sensing pass from the start pose.
    pub fn new(scenario: &'a Scenario, prior: SearchPrior<'_>, config: &EpisodeConfig, seed: u64) -> Result<Self> {
        config.cem.validate()?;
        let sensor =
            SensorConfig { radius: scenario.sensing_radius, label_noise: config.label_noise, noise_seed: config.noise_seed };
        let prior = match prior {
            SearchPrior::Uodm(m) => Prior::Scores(PairScores::new(m, scenario)?),
            SearchPrior::Uniform => Prior::Uniform,
            SearchPrior::Disabled => Prior::Disabled,
        };
        let mut ep = Self {
            scenario,
            nav: Navigator::new(&scenario.grid),
            perceiver: Perceiver::new(&scenario.grid, sensor),
            state: WorldState::from_scenario(scenario),
            knowledge: Knowledge::new(scenario),
            prior,
            config: config.clone(),
            rng: ChaCha8Rng::seed_from_u64(seed),
            seed,
            records: Vec::new(),
            n_unseen_initial: 0,
            termination: None,
            complete: false,
            rounds: 0,
        };
        ep.sense_here();
        ep.n_unseen_initial = ep.knowledge.unseen.len();
        ep.complete = ep.state.all_at_goal(scenario);
        Ok(ep)
    }

    pub fn scenario(&self) -> &'a Scenario {
        self.scenario
    }

    pub fn navigator(&self) -> &Navigator<'a> {
        &self.nav
    }

    pub fn records(&self) -> &[StepRecord] {
        &self.records
    }

    pub fn termination(&self) -> Option<Termination> {
        self.termination
    }

    fn step_cap(&self) -> usize {
        self.config.step_cap_factor * self.scenario.n_objects()
    }

    fn sense_here(&mut self) {
        let obs = self.perceiver.sense(self.scenario, &self.state, self.state.agent);
        update_knowledge(&mut self.knowledge, self.scenario, &obs);
    }

    fn walk(&mut self, cells: &[Cell], stop_on: Option<ObjectId>) -> u32 {
        let mut moves = 0;
        for &c in cells {
            if c == self.state.agent || !self.scenario.grid.is_free(c) {
                continue;
            }
            self.state.agent = c;
            moves += 1;
            self.sense_here();
            if stop_on.is_some_and(|id| self.knowledge.is_visible(id)) {
                break;
            }
        }
        moves
    }

    /// Predicts receptacles for unseen objects and resolves collisions among
    /// visible ones. Also decides whether the episode is over.
    pub fn prepare(&mut self) -> Result<()> {
        if self.termination.is_some() {
            return Ok(());
        }
        let empty: Vec<ObjectId> = self
            .knowledge
            .unseen
            .iter()
            .filter(|id| self.knowledge.candidates.get(id).is_none_or(|l| l.is_empty()))
            .copied()
            .collect();
        for id in empty {
            self.knowledge.predicted.remove(&id);
            self.knowledge.unfindable.insert(id);
        }
        match &self.prior {
            Prior::Scores(s) => predict_locations(s, self.scenario, &mut self.knowledge),
            Prior::Uniform => {
                let unseen: Vec<ObjectId> = self.knowledge.unseen.iter().copied().collect();
                for id in unseen {
                    let list = self.knowledge.candidates.get(&id).cloned().unwrap_or_default();
                    let current = self.knowledge.predicted.get(&id).map(|p| p.0);
                    if current.is_some_and(|r| list.contains(&r)) {
                        continue;
                    }
                    if let Some(r) = random_receptacle(&list, &mut self.rng) {
                        self.knowledge.predicted.insert(id, (r, self.scenario.receptacle(r).centroid));
                    }
                }
            }
            Prior::Disabled => {}
        }
        self.rounds += 1;
        let seed = mix_seed(self.seed, self.rounds);
        match resolve_collisions(self.scenario, &mut self.knowledge, &self.config.cem, seed) {
            Ok(_) => {}
            Err(Error::NoFeasibleCell) => self.termination = Some(Termination::Infeasible),
            Err(e) => return Err(e),
        }
        if self.termination.is_none() {
            if self.valid_actions().is_empty() && !self.explore_pending() {
                self.termination = Some(Termination::Exhausted);
            } else if self.records.len() >= self.step_cap() {
                self.termination = Some(Termination::StepCap);
            }
        }
        Ok(())
    }

    pub fn is_done(&self) -> bool {
        self.termination.is_some()
    }

    /// Misplaced visible objects and findable unseen ones, by id.
    pub fn candidates(&self) -> Vec<EpisodeCandidate> {
        let mut out = Vec::new();
        for (&id, &p) in &self.knowledge.visible {
            let obj = self.scenario.object(id);
            if p == obj.goal {
                continue;
            }
            let goal = self.knowledge.resolved_goals.get(&id).copied().unwrap_or(obj.goal);
            out.push(EpisodeCandidate {
                id,
                label: obj.label.clone(),
                source: p.origin,
                goal: goal.origin,
                valid: goal != p,
                unseen: false,
            });
        }
        for &id in &self.knowledge.unseen {
            if self.knowledge.unfindable.contains(&id) {
                continue;
            }
            if let Some(&(_, cell)) = self.knowledge.predicted.get(&id) {
                let obj = self.scenario.object(id);
                out.push(EpisodeCandidate {
                    id,
                    label: obj.label.clone(),
                    source: cell,
                    goal: obj.goal.origin,
                    valid: true,
                    unseen: true,
                });
            }
        }
        out.sort_by_key(|c| c.id);
        out
    }

    pub fn valid_actions(&self) -> Vec<ObjectId> {
        self.candidates().into_iter().filter(|c| c.valid).map(|c| c.id).collect()
    }

    pub fn candidate_actions(&self) -> Vec<CandidateAction> {
        self.candidates()
            .into_iter()
            .map(|c| CandidateAction { id: c.id, source: c.source, goal: c.goal, valid: c.valid })
            .collect()
    }

    /// The state graph over the current candidates with its validity mask.
    pub fn graph_state(&self) -> GraphState {
        let cands = self.candidates();
        let objs: Vec<GraphObject> = cands
            .iter()
            .map(|c| GraphObject { id: c.id, label: c.label.clone(), source: c.source, goal: c.goal })
            .collect();
        GraphState { graph: build_graph(&self.nav, self.state.agent, &objs), valid: cands.iter().map(|c| c.valid).collect() }
    }

    /// Exploration still has somewhere to go and something to find.
    pub fn explore_pending(&self) -> bool {
        matches!(self.prior, Prior::Disabled) && !self.knowledge.unseen.is_empty() && self.frontier().is_some()
    }

    fn frontier(&self) -> Option<Cell> {
        nearest_frontier(&self.scenario.grid, &self.knowledge.observed, &self.nav, self.state.agent)
    }

    fn outcome(&mut self, class: ActionClass, traversal: u32) -> StepOutcome {
        let now = self.state.all_at_goal(self.scenario);
        let completes = now && !self.complete;
        self.complete = now;
        StepOutcome { class, traversal, completes }
    }

    /// Carries out one planner step on object `id`.
    pub fn step(&mut self, id: ObjectId) -> Result<StepOutcome> {
        if self.termination.is_some() {
            return Err(Error::EmptyValidSet);
        }
        if self.knowledge.is_visible(id) {
            let (rec, class) = self.pick_place(id)?;
            let t = rec.traversal;
            self.records.push(rec);
            Ok(self.outcome(class, t))
        } else if self.knowledge.predicted.contains_key(&id) {
            self.search(id)
        } else {
            Err(Error::UnknownObject(id))
        }
    }

    fn pick_place(&mut self, id: ObjectId) -> Result<(StepRecord, ActionClass)> {
        let current = self.knowledge.visible[&id];
        let dest = self.knowledge.resolved_goals.get(&id).copied().unwrap_or(self.scenario.object(id).goal);
        let mut rec = StepRecord {
            kind: ActionKind::PickPlace,
            object: Some(id),
            receptacle: None,
            opened: None,
            placed: None,
            traversal: 0,
            discovery: false,
            found: false,
            end_pose: self.state.agent,
        };
        if dest == current {
            return Ok((rec, ActionClass::Static));
        }
        match apply_pick_place(self.scenario, &mut self.state, &self.nav, id, dest) {
            Ok(out) => {
                let obs = self.perceiver.sense_along(self.scenario, &self.state, &out.walked);
                update_knowledge(&mut self.knowledge, self.scenario, &obs);
                self.knowledge.record_move(self.scenario, id, dest);
                rec.placed = Some(dest);
                rec.traversal = out.traversal;
                rec.end_pose = self.state.agent;
                Ok((rec, ActionClass::Misplaced))
            }
            Err(Error::DestOccupied(_)) => {
                // something unseen sits on the destination: go and look
                let path = self.nav.path(self.state.agent, dest.origin);
                rec.traversal = self.walk(&path.cells, None);
                let r = self.scenario.receptacle(dest.receptacle);
                if r.openable && !self.state.open[r.id.index()] && open_receptacle(self.scenario, &mut self.state, r.id).is_ok() {
                    rec.opened = Some(r.id);
                }
                self.sense_here();
                rec.end_pose = self.state.agent;
                Ok((rec, ActionClass::Static))
            }
            Err(e) => Err(e),
        }
    }

    fn search(&mut self, id: ObjectId) -> Result<StepOutcome> {
        let (rid, target) = self.knowledge.predicted[&id];
        let path = self.nav.path(self.state.agent, target);
        let mut traversal = if path.reachable { self.walk(&path.cells, Some(id)) } else { 0 };
        let mut opened = None;
        if !self.knowledge.is_visible(id) {
            let r = self.scenario.receptacle(rid);
            if r.openable && !self.state.open[rid.index()] && open_receptacle(self.scenario, &mut self.state, rid).is_ok() {
                opened = Some(rid);
            }
            self.sense_here();
        }
        let found = self.knowledge.is_visible(id);
        let mut placed = None;
        if found {
            self.knowledge.discovery_attempts += 1;
            self.rounds += 1;
            let seed = mix_seed(self.seed, self.rounds);
            match resolve_collisions(self.scenario, &mut self.knowledge, &self.config.cem, seed) {
                Ok(_) => {
                    let (rec, class) = self.pick_place(id)?;
                    traversal += rec.traversal;
                    if class == ActionClass::Misplaced {
                        placed = rec.placed;
                    }
                    opened = opened.or(rec.opened);
                }
                Err(Error::NoFeasibleCell) => self.termination = Some(Termination::Infeasible),
                Err(e) => return Err(e),
            }
        } else {
            prune_candidate(&mut self.knowledge, self.scenario, id, rid);
        }
        self.records.push(StepRecord {
            kind: ActionKind::Search,
            object: Some(id),
            receptacle: Some(rid),
            opened,
            placed,
            traversal,
            discovery: true,
            found,
            end_pose: self.state.agent,
        });
        Ok(self.outcome(ActionClass::Misplaced, traversal))
    }

    /// Walks to the nearest unobserved free cell, sensing on the way.
    pub fn explore(&mut self) -> Result<StepOutcome> {
        if self.termination.is_some() {
            return Err(Error::EmptyValidSet);
        }
        let Some(w) = self.frontier() else { return Err(Error::EmptyValidSet) };
        let path = self.nav.path(self.state.agent, w);
        let traversal = self.walk(&path.cells, None);
        self.sense_here();
        self.knowledge.discovery_attempts += 1;
        self.records.push(StepRecord {
            kind: ActionKind::Explore,
            object: None,
            receptacle: None,
            opened: None,
            placed: None,
            traversal,
            discovery: true,
            found: false,
            end_pose: self.state.agent,
        });
        Ok(self.outcome(ActionClass::Misplaced, traversal))
    }

    /// Shuffles a slice with the episode's own generator.
    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        items.shuffle(&mut self.rng);
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        &mut self.rng
    }

    pub fn finish(self, planner: PlannerKind) -> EpisodeTrace {
        EpisodeTrace {
            scenario_seed: self.scenario.seed,
            planner,
            n_objects: self.scenario.n_objects(),
            n_unseen_initial: self.n_unseen_initial,
            success: self.state.all_at_goal(self.scenario),
            termination: self.termination.unwrap_or(Termination::StepCap),
            records: self.records,
            cell_size: self.scenario.grid.cell_size,
        }
    }
}

/// Seed of the episode-level generator for a scenario and planner.
pub fn episode_seed(scenario: &Scenario, planner: PlannerKind) -> u64 {
    mix_seed(scenario.seed, planner as u64 + 1)
}

/// Runs one episode to completion with the chosen planner.
pub fn run_episode(scenario: &Scenario, planner: PlannerKind, models: &Models, config: &EpisodeConfig) -> Result<EpisodeTrace> {
    run_episode_seeded(scenario, planner, models, config, episode_seed(scenario, planner))
}

pub fn run_episode_seeded(
    scenario: &Scenario,
    planner: PlannerKind,
    models: &Models,
    config: &EpisodeConfig,
    seed: u64,
) -> Result<EpisodeTrace> {
    let uodm = || models.uodm.as_deref().ok_or_else(|| Error::MissingModel("uodm".into()));
    let prior = match planner {
        PlannerKind::Cql | PlannerKind::Hp => match models.uodm.as_deref() {
            Some(m) => SearchPrior::Uodm(m),
            // without unseen objects the prior is never consulted
            None if scenario_fully_visible(scenario, config) => SearchPrior::Disabled,
            None => SearchPrior::Uodm(uodm()?),
        },
        PlannerKind::Rs => SearchPrior::Uniform,
        PlannerKind::Ge => SearchPrior::Disabled,
    };
    let qmodel = match planner {
        PlannerKind::Cql => Some(models.planner.as_deref().ok_or_else(|| Error::MissingModel("planner".into()))?),
        _ => None,
    };
    let mut ep = Episode::new(scenario, prior, config, seed)?;
    loop {
        ep.prepare()?;
        if ep.is_done() {
            break;
        }
        match planner {
            PlannerKind::Ge if ep.explore_pending() => {
                ep.explore()?;
                continue;
            }
            _ => {}
        }
        let action = match planner {
            PlannerKind::Cql => {
                let gs = ep.graph_state();
                let q = q_values(qmodel.expect("checked above"), &gs.graph)?;
                select_action(&q, &gs.valid_ids(), 0.0, ep.rng())?
            }
            PlannerKind::Hp | PlannerKind::Ge => {
                baseline_heuristic(ep.navigator(), ep.state.agent, &ep.candidate_actions()).ok_or(Error::EmptyValidSet)?
            }
            PlannerKind::Rs => {
                let valid = ep.valid_actions();
                baseline_random_search(&valid, ep.rng()).ok_or(Error::EmptyValidSet)?
            }
        };
        ep.step(action)?;
    }
    Ok(ep.finish(planner))
}

fn scenario_fully_visible(scenario: &Scenario, config: &EpisodeConfig) -> bool {
    Episode::new(scenario, SearchPrior::Disabled, config, 0).is_ok_and(|e| e.knowledge.unseen.is_empty())
}

/// Re-executes the placements and openings of a trace on a fresh world.
pub fn replay(scenario: &Scenario, trace: &EpisodeTrace) -> Result<WorldState> {
    let nav = Navigator::new(&scenario.grid);
    let mut state = WorldState::from_scenario(scenario);
    for r in &trace.records {
        if let Some(rid) = r.opened {
            state.open[rid.index()] = true;
        }
        if let (Some(id), Some(p)) = (r.object, r.placed) {
            apply_pick_place(scenario, &mut state, &nav, id, p)?;
        }
        state.agent = r.end_pose;
    }
    Ok(state)
}

/// One named scenario configuration of a suite.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SuiteEntry {
    pub name: String,
    pub scenario: ScenarioConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SuiteConfig {
    pub entries: Vec<SuiteEntry>,
    pub seeds: Vec<u64>,
    pub episode: EpisodeConfig,
}

impl Default for SuiteConfig {
    fn default() -> Self {
        Self { entries: table_suite(), seeds: (0..5).collect(), episode: EpisodeConfig::default() }
    }
}

/// Two rows per object count (10, 20, 30): 60% visible with 20% in swaps, the
/// remaining 40% either out of view or inside closed receptacles.
pub fn table_suite() -> Vec<SuiteEntry> {
    let mut out = Vec::new();
    for n in [10usize, 20, 30] {
        let unseen = n * 4 / 10;
        let base = ScenarioConfig { n_visible: n - unseen, n_swap: n / 5, ..Default::default() };
        out.push(SuiteEntry {
            name: format!("n{n}-po"),
            scenario: ScenarioConfig { n_partially_occluded: unseen, n_fully_occluded: 0, ..base.clone() },
        });
        out.push(SuiteEntry {
            name: format!("n{n}-fo"),
            scenario: ScenarioConfig { n_partially_occluded: 0, n_fully_occluded: unseen, ..base },
        });
    }
    out
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BenchRow {
    pub config: String,
    pub planner: PlannerKind,
    pub n: usize,
    pub po: usize,
    pub fo: usize,
    pub swaps: usize,
    pub seed: u64,
    pub success: bool,
    pub srn: f64,
    pub eod: Option<f64>,
    pub ttl: f64,
    pub steps: usize,
    pub discovery: usize,
    #[serde(skip)]
    pub wall_ms: f64,
}

/// Every (entry × planner × seed) episode, in that order.
pub fn run_benchmark(suite: &SuiteConfig, planners: &[PlannerKind], models: &Models) -> Result<Vec<BenchRow>> {
    for p in planners {
        match p {
            PlannerKind::Cql if models.planner.is_none() => return Err(Error::MissingModel("planner".into())),
            PlannerKind::Cql | PlannerKind::Hp if models.uodm.is_none() => {
                return Err(Error::MissingModel("uodm".into()))
            }
            _ => {}
        }
    }
    let jobs: Vec<(&SuiteEntry, PlannerKind, u64)> = suite
        .entries
        .iter()
        .flat_map(|e| planners.iter().flat_map(move |p| suite.seeds.iter().map(move |s| (e, *p, *s))))
        .collect();
    jobs.par_iter()
        .map(|(entry, planner, seed)| {
            let t0 = Instant::now();
            let scenario = generate_scenario(&entry.scenario, *seed)?;
            let trace = run_episode(&scenario, *planner, models, &suite.episode)?;
            let m = compute_metrics(&trace);
            Ok(BenchRow {
                config: entry.name.clone(),
                planner: *planner,
                n: scenario.n_objects(),
                po: entry.scenario.n_partially_occluded,
                fo: entry.scenario.n_fully_occluded,
                swaps: entry.scenario.n_swap,
                seed: *seed,
                success: trace.success,
                srn: m.srn,
                eod: m.eod,
                ttl: m.ttl,
                steps: trace.n_steps(),
                discovery: trace.n_discovery(),
                wall_ms: t0.elapsed().as_secs_f64() * 1e3,
            })
        })
        .collect()
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(|| "NC".to_string(), |x| format!("{x:.6}"))
}

/// Deterministic per-episode CSV (wall time goes to [`write_timing_csv`]).
pub fn write_bench_csv(rows: &[BenchRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["config", "planner", "n", "po", "fo", "swaps", "seed", "success", "srn", "eod", "ttl", "steps", "discovery"])?;
    for r in rows {
        w.write_record([
            r.config.clone(),
            r.planner.to_string(),
            r.n.to_string(),
            r.po.to_string(),
            r.fo.to_string(),
            r.swaps.to_string(),
            r.seed.to_string(),
            u8::from(r.success).to_string(),
            format!("{:.6}", r.srn),
            fmt_opt(r.eod),
            format!("{:.6}", r.ttl),
            r.steps.to_string(),
            r.discovery.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_timing_csv(rows: &[BenchRow], out: impl Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["config", "planner", "seed", "wall_ms"])?;
    for r in rows {
        w.write_record([r.config.clone(), r.planner.to_string(), r.seed.to_string(), format!("{:.3}", r.wall_ms)])?;
    }
    w.flush()?;
    Ok(())
}

/// Mean and sample standard deviation; `None` for an empty slice.
pub fn mean_std(v: &[f64]) -> Option<(f64, f64)> {
    if v.is_empty() {
        return None;
    }
    let n = v.len() as f64;
    let m = v.iter().sum::<f64>() / n;
    let var = if v.len() > 1 { v.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1.0) } else { 0.0 };
    Some((m, var.sqrt()))
}

/// One cell group of the summary table.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AggregateRow {
    pub config: String,
    pub planner: PlannerKind,
    pub n: usize,
    pub episodes: usize,
    pub success_rate: f64,
    pub srn: (f64, f64),
    /// Over successful episodes with a discovery attempt.
    pub eod: Option<(f64, f64)>,
    /// Over successful episodes.
    pub ttl: Option<(f64, f64)>,
}

/// Groups rows by (config, planner) in first-seen order.
pub fn aggregate(rows: &[BenchRow]) -> Vec<AggregateRow> {
    let mut keys: Vec<(String, PlannerKind)> = Vec::new();
    for r in rows {
        let k = (r.config.clone(), r.planner);
        if !keys.contains(&k) {
            keys.push(k);
        }
    }
    keys.into_iter()
        .map(|(config, planner)| {
            let g: Vec<&BenchRow> = rows.iter().filter(|r| r.config == config && r.planner == planner).collect();
            let ok: Vec<&&BenchRow> = g.iter().filter(|r| r.success).collect();
            let srn: Vec<f64> = g.iter().map(|r| r.srn).collect();
            let eod: Vec<f64> = ok.iter().filter_map(|r| r.eod).collect();
            let ttl: Vec<f64> = ok.iter().map(|r| r.ttl).collect();
            AggregateRow {
                n: g[0].n,
                episodes: g.len(),
                success_rate: ok.len() as f64 / g.len() as f64,
                srn: mean_std(&srn).unwrap_or((0.0, 0.0)),
                eod: mean_std(&eod),
                ttl: mean_std(&ttl),
                config,
                planner,
            }
        })
        .collect()
}

pub fn write_aggregate_csv(rows: &[AggregateRow], out: impl Write) -> Result<()> {
    let pm = |v: Option<(f64, f64)>| v.map_or_else(|| "NC".to_string(), |(m, s)| format!("{m:.3} ± {s:.3}"));
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["config", "planner", "n", "episodes", "success", "srn", "eod", "ttl"])?;
    for r in rows {
        w.write_record([
            r.config.clone(),
            r.planner.to_string(),
            r.n.to_string(),
            r.episodes.to_string(),
            format!("{:.3}", r.success_rate),
            pm(Some(r.srn)),
            pm(r.eod),
            pm(r.ttl),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn trace(success: bool, n: usize, steps: usize, discovery: usize, unseen: usize) -> EpisodeTrace {
        let rec = |d: bool| StepRecord {
            kind: ActionKind::PickPlace,
            object: None,
            receptacle: None,
            opened: None,
            placed: None,
            traversal: 2,
            discovery: d,
            found: false,
            end_pose: Cell::new(0, 0),
        };
        EpisodeTrace {
            scenario_seed: 0,
            planner: PlannerKind::Hp,
            n_objects: n,
            n_unseen_initial: unseen,
            records: (0..steps).map(|i| rec(i < discovery)).collect(),
            success,
            termination: Termination::Exhausted,
            cell_size: 0.25,
        }
    }

    #[test]
    fn metric_formulas() {
        let m = compute_metrics(&trace(true, 10, 20, 8, 4));
        assert_eq!(m.srn, 0.5);
        assert_eq!(m.eod, Some(0.5));
        assert_eq!(m.ttl, 20.0 * 2.0 * 0.25);
        assert_eq!(compute_metrics(&trace(false, 10, 20, 0, 4)).srn, 0.0);
        assert_eq!(compute_metrics(&trace(false, 10, 20, 0, 4)).eod, None);
        assert_eq!(compute_metrics(&trace(true, 3, 0, 0, 0)).srn, 1.0);
    }

    #[test]
    fn planner_names_round_trip() {
        for p in PlannerKind::ALL {
            assert_eq!(p.name().parse::<PlannerKind>().unwrap(), p);
        }
        assert!("dqn".parse::<PlannerKind>().is_err());
    }

    #[test]
    fn mean_std_of_constant_is_zero() {
        assert_eq!(mean_std(&[2.0, 2.0, 2.0]), Some((2.0, 0.0)));
        assert_eq!(mean_std(&[]), None);
    }

    #[test]
    fn one_visible_misplaced_object() {
        let cfg = ScenarioConfig { n_misplaced: Some(1), ..ScenarioConfig::fully_observed(3) };
        let s = generate_scenario(&cfg, 5).unwrap();
        let t = run_episode(&s, PlannerKind::Hp, &Models::default(), &EpisodeConfig::default()).unwrap();
        assert!(t.success);
        assert_eq!(t.n_steps(), 1);
        assert_eq!(replay(&s, &t).unwrap().all_at_goal(&s), true);
    }
}
