//! Conservative Q-learning over the state graph, plus the baseline planners.
//!
//! Each candidate object is scored by an MLP head reading its source and goal
//! node embeddings next to the agent embedding, so one set of weights handles
//! any number of objects.

use std::collections::VecDeque;
use std::path::Path;
use std::sync::Arc;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, Tensor};
use crate::error::{Error, Result};
use crate::geometry::Cell;
use crate::gridworld::{GridMap, ObjectId};
use crate::nav::Navigator;
use crate::nn::{Adam, Mlp, MlpCache};
use crate::gridworld::{generate_scenario, ScenarioConfig};
use crate::harness::{mix_seed, Episode, EpisodeConfig, SearchPrior};
use crate::stategraph::{gcn_backward, gcn_forward, DirectedStateGraph, GcnCache, GcnWeights};
use crate::uodm::UodmModel;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RlConfig {
    pub gamma: f64,
    /// Weight of the conservative term.
    pub alpha: f64,
    pub eps_start: f64,
    pub eps_end: f64,
    /// Fraction of training over which ε decays linearly.
    pub eps_fraction: f64,
    pub tau: f64,
    pub lr: f64,
    pub batch_size: usize,
    pub buffer_capacity: usize,
    /// Environment steps.
    pub total_steps: usize,
    /// Steps collected before the first update.
    pub warmup: usize,
    /// Environment steps per gradient update.
    pub train_every: usize,
    pub grad_clip: f64,
    /// Rewards are multiplied by this before they reach the losses.
    pub reward_scale: f64,
    pub static_penalty: f64,
    pub completion_bonus: f64,
    pub gcn_layers: usize,
    pub gcn_hidden: usize,
    pub head_hidden: usize,
    /// Rows of the training curve are written this often.
    pub log_every: usize,
    pub seed: u64,
}

impl Default for RlConfig {
    fn default() -> Self {
        Self {
            gamma: 0.95,
            alpha: 1.0,
            eps_start: 1.0,
            eps_end: 0.05,
            eps_fraction: 0.5,
            tau: 0.005,
            lr: 1e-3,
            batch_size: 64,
            buffer_capacity: 50_000,
            total_steps: 30_000,
            warmup: 500,
            train_every: 1,
            grad_clip: 10.0,
            reward_scale: 0.1,
            static_penalty: -5.0,
            completion_bonus: 100.0,
            gcn_layers: 2,
            gcn_hidden: 32,
            head_hidden: 64,
            log_every: 500,
            seed: 7,
        }
    }
}

impl RlConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidConfig(m.to_string()));
        if !(self.gamma > 0.0 && self.gamma < 1.0) {
            return bad("gamma must lie in (0, 1)");
        }
        if self.alpha < 0.0 || !self.alpha.is_finite() {
            return bad("alpha must be non-negative");
        }
        if !(self.tau > 0.0 && self.tau <= 1.0) {
            return bad("tau must lie in (0, 1]");
        }
        if self.batch_size == 0 || self.buffer_capacity < self.batch_size {
            return bad("buffer must hold at least one batch");
        }
        if self.train_every == 0 || self.gcn_layers == 0 || self.gcn_hidden == 0 || self.head_hidden == 0 {
            return bad("sizes must be positive");
        }
        if !(0.0..=1.0).contains(&self.eps_end) || !(0.0..=1.0).contains(&self.eps_start) {
            return bad("epsilon must lie in [0, 1]");
        }
        Ok(())
    }

    /// ε after `step` environment steps.
    pub fn epsilon(&self, step: usize) -> f64 {
        let horizon = (self.total_steps as f64 * self.eps_fraction).max(1.0);
        let t = (step as f64 / horizon).min(1.0);
        self.eps_start + t * (self.eps_end - self.eps_start)
    }
}

/// Online network: graph convolution plus the per-object head.
#[derive(Clone, Debug, PartialEq)]
pub struct QNet {
    pub gcn: GcnWeights,
    pub head: Mlp,
}

/// Everything the backward pass needs from one forward pass.
#[derive(Clone, Debug)]
pub struct QCache {
    z: Vec<f64>,
    gcn: GcnCache,
    heads: Vec<MlpCache>,
}

/// Gradient buffers shaped like a [`QNet`].
#[derive(Clone, Debug, PartialEq)]
pub struct QGrad {
    pub gcn: Vec<f64>,
    pub head: Vec<f64>,
}

impl QGrad {
    fn zeros_like(net: &QNet) -> Self {
        Self { gcn: vec![0.0; net.gcn.params.len()], head: vec![0.0; net.head.params.len()] }
    }
}

impl QNet {
    pub fn new(config: &RlConfig, rng: &mut impl Rng) -> Self {
        let gcn = GcnWeights::new(config.gcn_layers, config.gcn_hidden, rng);
        let d = gcn.out_dim();
        let mut head = Mlp::new(&[3 * d, config.head_hidden, config.head_hidden, 1], rng);
        // a small output layer keeps early Q estimates near zero
        let n = head.params.len();
        let last = config.head_hidden + 1;
        for p in &mut head.params[n - last..] {
            *p *= 0.1;
        }
        Self { gcn, head }
    }

    fn head_input(z: &[f64], d: usize, k: usize) -> Vec<f64> {
        let s = DirectedStateGraph::source_node(k);
        let g = DirectedStateGraph::goal_node(k);
        let mut x = Vec::with_capacity(3 * d);
        x.extend_from_slice(&z[s * d..(s + 1) * d]);
        x.extend_from_slice(&z[g * d..(g + 1) * d]);
        x.extend_from_slice(&z[..d]);
        x
    }

    /// One Q-value per graph object, in graph order.
    pub fn forward(&self, g: &DirectedStateGraph) -> Result<(Vec<f64>, QCache)> {
        let (z, gcn) = gcn_forward(g, &self.gcn)?;
        let d = self.gcn.out_dim();
        let mut q = Vec::with_capacity(g.n_objects());
        let mut heads = Vec::with_capacity(g.n_objects());
        for k in 0..g.n_objects() {
            let (y, c) = self.head.forward_cached(&Self::head_input(&z, d, k));
            q.push(y[0]);
            heads.push(c);
        }
        Ok((q, QCache { z, gcn, heads }))
    }

    pub fn q(&self, g: &DirectedStateGraph) -> Result<Vec<f64>> {
        Ok(self.forward(g)?.0)
    }

    /// Accumulates gradients of `Σ dq_k · Q_k`.
    pub fn backward(&self, g: &DirectedStateGraph, cache: &QCache, dq: &[f64], grad: &mut QGrad) -> Result<()> {
        if dq.len() != cache.heads.len() {
            return Err(Error::ShapeMismatch(format!("{} upstream values for {} objects", dq.len(), cache.heads.len())));
        }
        let d = self.gcn.out_dim();
        let mut dz = vec![0.0; cache.z.len()];
        let mut any = false;
        for (k, &dv) in dq.iter().enumerate() {
            if dv == 0.0 {
                continue;
            }
            any = true;
            let dx = self.head.backward(&cache.heads[k], &[dv], &mut grad.head);
            let s = DirectedStateGraph::source_node(k);
            let gn = DirectedStateGraph::goal_node(k);
            for i in 0..d {
                dz[s * d + i] += dx[i];
                dz[gn * d + i] += dx[d + i];
                dz[i] += dx[2 * d + i];
            }
        }
        if any {
            gcn_backward(g, &self.gcn, &cache.gcn, &dz, &mut grad.gcn)?;
        }
        Ok(())
    }

    fn param_norm_diff(&self, other: &QNet) -> f64 {
        let a = self.gcn.params.iter().zip(&other.gcn.params);
        let b = self.head.params.iter().zip(&other.head.params);
        a.chain(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
    }
}

/// Online and target networks with the update counter.
#[derive(Clone, Debug, PartialEq)]
pub struct QModel {
    pub online: QNet,
    pub target: QNet,
    pub step: u64,
}

impl QModel {
    pub fn new(config: &RlConfig, rng: &mut impl Rng) -> Self {
        let online = QNet::new(config, rng);
        Self { target: online.clone(), online, step: 0 }
    }

    /// θ̄ ← τθ + (1 − τ)θ̄.
    pub fn polyak(&mut self, tau: f64) {
        let mix = |t: &mut [f64], o: &[f64]| {
            for (a, b) in t.iter_mut().zip(o) {
                *a = tau * b + (1.0 - tau) * *a;
            }
        };
        mix(&mut self.target.gcn.params, &self.online.gcn.params);
        mix(&mut self.target.head.params, &self.online.head.params);
    }

    /// ‖θ̄ − θ‖.
    pub fn target_distance(&self) -> f64 {
        self.online.param_norm_diff(&self.target)
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let mut tensors = Vec::new();
        for net in [&self.online, &self.target] {
            let g = net.gcn.to_tensors();
            let h = net.head.to_tensors();
            tensors.push(Tensor::row(vec![g.len() as f64, h.len() as f64]));
            tensors.extend(g);
            tensors.extend(h);
        }
        Checkpoint { kind: "planner".into(), tensors, step: self.step }
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        if c.kind != "planner" {
            return Err(Error::Checkpoint(format!("expected a planner checkpoint, found {}", c.kind)));
        }
        let mut rest = &c.tensors[..];
        let mut take = || -> Result<QNet> {
            let hdr = rest.first().ok_or_else(|| Error::Checkpoint("missing network header".into()))?;
            if hdr.data.len() != 2 {
                return Err(Error::Checkpoint("bad network header".into()));
            }
            let (ng, nh) = (hdr.data[0] as usize, hdr.data[1] as usize);
            if rest.len() < 1 + ng + nh {
                return Err(Error::Checkpoint("truncated network".into()));
            }
            let gcn = GcnWeights::from_tensors(&rest[1..1 + ng])?;
            let head = Mlp::from_tensors(&rest[1 + ng..1 + ng + nh])?;
            rest = &rest[1 + ng + nh..];
            if head.input_dim() != 3 * gcn.out_dim() || head.output_dim() != 1 {
                return Err(Error::ShapeMismatch("Q-head does not fit the graph embedding".into()));
            }
            Ok(QNet { gcn, head })
        };
        let online = take()?;
        let target = take()?;
        if online.gcn.dims() != target.gcn.dims() || online.head.sizes() != target.head.sizes() {
            return Err(Error::ShapeMismatch("target network shape differs from online".into()));
        }
        if !rest.is_empty() {
            return Err(Error::Checkpoint("trailing tensors".into()));
        }
        Ok(Self { online, target, step: c.step })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// Q-value per graph object, keyed by id.
pub fn q_values(model: &QModel, g: &DirectedStateGraph) -> Result<Vec<(ObjectId, f64)>> {
    let q = model.online.q(g)?;
    Ok(g.objects.iter().copied().zip(q).collect())
}

/// ε-greedy choice among `valid`; argmax ties go to the lowest id.
pub fn select_action(q: &[(ObjectId, f64)], valid: &[ObjectId], eps: f64, rng: &mut impl Rng) -> Result<ObjectId> {
    if valid.is_empty() {
        return Err(Error::EmptyValidSet);
    }
    if eps > 0.0 && rng.random::<f64>() < eps {
        return Ok(*valid.choose(rng).expect("non-empty"));
    }
    let mut best: Option<(ObjectId, f64)> = None;
    for &(id, v) in q {
        if !valid.contains(&id) {
            continue;
        }
        best = match best {
            Some((bid, bv)) if bv > v || (bv == v && bid < id) => Some((bid, bv)),
            _ => Some((id, v)),
        };
    }
    // valid objects missing from the graph fall back to the lowest id
    Ok(best.map(|b| b.0).unwrap_or_else(|| *valid.iter().min().expect("non-empty")))
}

/// What kind of object an action touched.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ActionClass {
    /// A misplaced object that could be moved toward its goal.
    Misplaced,
    /// At goal, or pinned because its goal is still occupied.
    Static,
}

/// Dense reward of one planner step.
pub fn reward(config: &RlConfig, class: ActionClass, traversal: u32, completes: bool) -> f64 {
    let base = match class {
        ActionClass::Misplaced => -f64::from(traversal),
        ActionClass::Static => config.static_penalty,
    };
    base + if completes { config.completion_bonus } else { 0.0 }
}

/// A graph together with which of its objects are valid actions.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphState {
    pub graph: DirectedStateGraph,
    /// Parallel to `graph.objects`.
    pub valid: Vec<bool>,
}

impl GraphState {
    pub fn valid_ids(&self) -> Vec<ObjectId> {
        self.graph.objects.iter().zip(&self.valid).filter(|(_, v)| **v).map(|(id, _)| *id).collect()
    }

    fn argmax_valid(&self, q: &[f64]) -> Option<usize> {
        let mut best: Option<usize> = None;
        for (k, &v) in q.iter().enumerate() {
            if !self.valid[k] {
                continue;
            }
            match best {
                Some(b) if q[b] > v || (q[b] == v && self.graph.objects[b] < self.graph.objects[k]) => {}
                _ => best = Some(k),
            }
        }
        best
    }
}

#[derive(Clone, Debug)]
pub struct Transition {
    pub state: Arc<GraphState>,
    /// Index into `state.graph.objects`.
    pub action: usize,
    pub reward: f64,
    pub next: Arc<GraphState>,
    pub terminal: bool,
}

impl Transition {
    /// Bootstrapping is skipped for terminal steps and for next states with
    /// nothing left to do.
    fn bootstraps(&self) -> bool {
        !self.terminal && self.next.valid.iter().any(|v| *v)
    }
}

/// Fixed-capacity ring of transitions.
#[derive(Clone, Debug)]
pub struct ReplayBuffer {
    capacity: usize,
    items: VecDeque<Transition>,
}

impl ReplayBuffer {
    pub fn new(capacity: usize) -> Self {
        Self { capacity: capacity.max(1), items: VecDeque::with_capacity(capacity.min(4096)) }
    }

    pub fn push(&mut self, t: Transition) {
        if self.items.len() == self.capacity {
            self.items.pop_front();
        }
        self.items.push_back(t);
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn capacity(&self) -> usize {
        self.capacity
    }

    /// Uniform sample with replacement.
    pub fn sample(&self, n: usize, rng: &mut impl Rng) -> Result<Vec<Transition>> {
        if self.items.len() < n || n == 0 {
            return Err(Error::BufferUnderfull { have: self.items.len(), need: n.max(1) });
        }
        Ok((0..n).map(|_| self.items[rng.random_range(0..self.items.len())].clone()).collect())
    }
}

/// One batch element reduced to scalars.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct TdItem {
    pub q: f64,
    pub reward: f64,
    /// `max_ā Q_θ̄(s̄, ā)`, or `None` when the step is terminal.
    pub next_max: Option<f64>,
}

/// ½ · mean (r + γ max Q̄ − Q)².
pub fn td_loss_values(items: &[TdItem], gamma: f64) -> f64 {
    if items.is_empty() {
        return 0.0;
    }
    let s: f64 = items
        .iter()
        .map(|it| {
            let y = it.reward + it.next_max.map_or(0.0, |m| gamma * m);
            (y - it.q) * (y - it.q)
        })
        .sum();
    0.5 * s / items.len() as f64
}

/// α(mean policy Q − mean dataset Q) + L_TD.
pub fn cql_loss_values(td: f64, policy_q: &[f64], data_q: &[f64], alpha: f64) -> f64 {
    let mean = |v: &[f64]| if v.is_empty() { 0.0 } else { v.iter().sum::<f64>() / v.len() as f64 };
    alpha * (mean(policy_q) - mean(data_q)) + td
}

/// Loss scalars of one batch.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Losses {
    pub td: f64,
    pub cql: f64,
}

struct BatchPass {
    losses: Losses,
    /// Per element: cache and upstream gradient on its Q vector.
    grads: Vec<(QCache, Vec<f64>)>,
}

fn batch_pass(model: &QModel, batch: &[Transition], alpha: f64, gamma: f64) -> Result<BatchPass> {
    if batch.is_empty() {
        return Err(Error::BufferUnderfull { have: 0, need: 1 });
    }
    let b = batch.len() as f64;
    let mut items = Vec::with_capacity(batch.len());
    let mut policy_q = Vec::with_capacity(batch.len());
    let mut data_q = Vec::with_capacity(batch.len());
    let mut grads = Vec::with_capacity(batch.len());
    for t in batch {
        let (q, cache) = model.online.forward(&t.state.graph)?;
        if t.action >= q.len() {
            return Err(Error::ShapeMismatch(format!("action {} on a {}-object graph", t.action, q.len())));
        }
        let next_max = if t.bootstraps() {
            let qn = model.target.q(&t.next.graph)?;
            t.next.argmax_valid(&qn).map(|k| qn[k])
        } else {
            None
        };
        let item = TdItem { q: q[t.action], reward: t.reward, next_max };
        let y = item.reward + item.next_max.map_or(0.0, |m| gamma * m);
        let pi = t.state.argmax_valid(&q).unwrap_or(t.action);
        let mut dq = vec![0.0; q.len()];
        dq[t.action] += -(y - item.q) / b - alpha / b;
        dq[pi] += alpha / b;
        items.push(item);
        policy_q.push(q[pi]);
        data_q.push(q[t.action]);
        grads.push((cache, dq));
    }
    let td = td_loss_values(&items, gamma);
    let cql = cql_loss_values(td, &policy_q, &data_q, alpha);
    Ok(BatchPass { losses: Losses { td, cql }, grads })
}

/// L_TD of the online network on `batch`.
pub fn td_loss(model: &QModel, batch: &[Transition], gamma: f64) -> Result<f64> {
    Ok(batch_pass(model, batch, 0.0, gamma)?.losses.td)
}

/// L_CQL of the online network on `batch`.
pub fn cql_loss(model: &QModel, batch: &[Transition], alpha: f64, gamma: f64) -> Result<f64> {
    Ok(batch_pass(model, batch, alpha, gamma)?.losses.cql)
}

/// Gradient of L_CQL with respect to the online parameters, target held fixed.
pub fn cql_gradient(model: &QModel, batch: &[Transition], alpha: f64, gamma: f64) -> Result<(Losses, QGrad)> {
    let pass = batch_pass(model, batch, alpha, gamma)?;
    let mut grad = QGrad::zeros_like(&model.online);
    for (t, (cache, dq)) in batch.iter().zip(&pass.grads) {
        model.online.backward(&t.state.graph, cache, dq, &mut grad)?;
    }
    Ok((pass.losses, grad))
}

/// Adam state for both parameter groups.
#[derive(Clone, Debug)]
pub struct QOptimizer {
    gcn: Adam,
    head: Adam,
}

impl QOptimizer {
    pub fn new(model: &QModel, lr: f64) -> Self {
        Self { gcn: Adam::new(model.online.gcn.params.len(), lr), head: Adam::new(model.online.head.params.len(), lr) }
    }
}

/// One gradient step on L_CQL followed by the polyak target update.
pub fn train_step(
    model: &mut QModel,
    opt: &mut QOptimizer,
    buffer: &ReplayBuffer,
    config: &RlConfig,
    rng: &mut impl Rng,
) -> Result<Losses> {
    let batch = buffer.sample(config.batch_size, rng)?;
    let (losses, mut grad) = cql_gradient(model, &batch, config.alpha, config.gamma)?;
    if config.grad_clip > 0.0 {
        // clip the joint norm without concatenating
        let n = grad.gcn.iter().chain(&grad.head).map(|g| g * g).sum::<f64>().sqrt();
        if n > config.grad_clip {
            let s = config.grad_clip / n;
            grad.gcn.iter_mut().chain(grad.head.iter_mut()).for_each(|g| *g *= s);
        }
    }
    opt.gcn.step(&mut model.online.gcn.params, &grad.gcn);
    opt.head.step(&mut model.online.head.params, &grad.head);
    model.polyak(config.tau);
    model.step += 1;
    Ok(losses)
}

/// A candidate action as the baselines see it.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct CandidateAction {
    pub id: ObjectId,
    /// Current or predicted position.
    pub source: Cell,
    /// Resolved goal origin.
    pub goal: Cell,
    pub valid: bool,
}

/// Shortest pick-place traversal first; ties by lowest id.
pub fn baseline_heuristic(nav: &Navigator<'_>, agent: Cell, candidates: &[CandidateAction]) -> Option<ObjectId> {
    candidates
        .iter()
        .filter(|c| c.valid)
        .map(|c| {
            let cost = u64::from(nav.cost_or_sentinel(agent, c.source)) + u64::from(nav.cost_or_sentinel(c.source, c.goal));
            (cost, c.id)
        })
        .min()
        .map(|(_, id)| id)
}

/// Uniform action choice for the random-search baseline.
pub fn baseline_random_search(valid: &[ObjectId], rng: &mut impl Rng) -> Option<ObjectId> {
    valid.choose(rng).copied()
}

/// Uniform receptacle guess among the still-unpruned candidates.
pub fn random_receptacle<T: Copy>(candidates: &[T], rng: &mut impl Rng) -> Option<T> {
    candidates.choose(rng).copied()
}

/// Nearest free cell not yet observed, by path length from `from`; ties by
/// row-major index.
pub fn nearest_frontier(map: &GridMap, observed: &[bool], nav: &Navigator<'_>, from: Cell) -> Option<Cell> {
    let field = nav.field(from);
    map.free_cells()
        .filter(|c| !observed[map.index(*c)])
        .filter_map(|c| field.distance_to(map, c).map(|d| (d, map.index(c), c)))
        .min()
        .map(|(_, _, c)| c)
}

/// Frontier waypoints until every reachable free cell has been seen.
/// `sense` reports the cells visible from a pose.
pub fn baseline_greedy_exploration(
    map: &GridMap,
    nav: &Navigator<'_>,
    observed: &[bool],
    agent: Cell,
    mut sense: impl FnMut(Cell) -> Vec<Cell>,
) -> Vec<Cell> {
    let mut seen = observed.to_vec();
    let mut pose = agent;
    let mut out = Vec::new();
    while let Some(w) = nearest_frontier(map, &seen, nav, pose) {
        for c in nav.path(pose, w).cells {
            for v in sense(c) {
                seen[map.index(v)] = true;
            }
        }
        seen[map.index(w)] = true;
        out.push(w);
        pose = w;
    }
    out
}

/// What the planner trains on.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainSetup {
    pub rl: RlConfig,
    /// Scenario configurations cycled through, one per episode.
    pub scenarios: Vec<ScenarioConfig>,
    pub episode: EpisodeConfig,
}

impl Default for TrainSetup {
    fn default() -> Self {
        let mix = |n: usize, po: usize, swap: usize, blocked: usize| ScenarioConfig {
            n_visible: n - po,
            n_partially_occluded: po,
            n_fully_occluded: 0,
            n_swap: swap,
            n_blocked_pairs: blocked,
            ..ScenarioConfig::default()
        };
        Self {
            rl: RlConfig::default(),
            scenarios: vec![
                ScenarioConfig::fully_observed(4),
                mix(10, 4, 0, 0),
                ScenarioConfig::fully_observed(4),
                ScenarioConfig::fully_observed(3),
                mix(6, 2, 0, 1),
                ScenarioConfig::fully_observed(4),
                ScenarioConfig::fully_observed(5),
                mix(10, 4, 2, 0),
            ],
            episode: EpisodeConfig::default(),
        }
    }
}

/// One row of the training curve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CurveRow {
    pub step: usize,
    pub td: f64,
    pub cql: f64,
    /// Mean unscaled return of the last 20 finished episodes.
    pub mean_episode_reward: f64,
}

pub fn write_curve_csv(rows: &[CurveRow], out: impl std::io::Write) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in rows {
        w.serialize(r)?;
    }
    w.flush()?;
    Ok(())
}

/// ε-greedy rollouts on freshly generated scenarios feeding the replay buffer,
/// with one CQL update every `train_every` environment steps.
pub fn train_planner(
    setup: &TrainSetup,
    uodm: Option<&UodmModel>,
    mut on_log: impl FnMut(&CurveRow),
) -> Result<(QModel, Vec<CurveRow>)> {
    let rl = &setup.rl;
    rl.validate()?;
    if setup.scenarios.is_empty() {
        return Err(Error::InvalidConfig("training needs at least one scenario configuration".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(rl.seed);
    let mut model = QModel::new(rl, &mut rng);
    let mut opt = QOptimizer::new(&model, rl.lr);
    let mut buffer = ReplayBuffer::new(rl.buffer_capacity);
    let mut curve = Vec::new();
    let mut returns: VecDeque<f64> = VecDeque::new();
    let mut window: Vec<Losses> = Vec::new();
    let mut step = 0usize;
    let mut episode = 0u64;
    while step < rl.total_steps {
        let cfg = &setup.scenarios[episode as usize % setup.scenarios.len()];
        let scenario = generate_scenario(cfg, mix_seed(rl.seed, episode))?;
        let prior = match uodm {
            Some(m) => SearchPrior::Uodm(m),
            None => SearchPrior::Uniform,
        };
        let mut ep = Episode::new(&scenario, prior, &setup.episode, mix_seed(rl.seed ^ 0x5eed, episode))?;
        episode += 1;
        ep.prepare()?;
        let mut s = Arc::new(ep.graph_state());
        let mut ret = 0.0;
        while !ep.is_done() && step < rl.total_steps {
            let q = q_values(&model, &s.graph)?;
            let a = select_action(&q, &s.valid_ids(), rl.epsilon(step), &mut rng)?;
            let out = ep.step(a)?;
            ep.prepare()?;
            let r = reward(rl, out.class, out.traversal, out.completes);
            ret += r;
            let next = Arc::new(ep.graph_state());
            let action = s.graph.object_index(a).expect("chosen among graph objects");
            buffer.push(Transition {
                state: s,
                action,
                reward: r * rl.reward_scale,
                next: next.clone(),
                terminal: ep.is_done(),
            });
            s = next;
            step += 1;
            if buffer.len() >= rl.warmup.max(rl.batch_size) && step % rl.train_every == 0 {
                window.push(train_step(&mut model, &mut opt, &buffer, rl, &mut rng)?);
            }
            if rl.log_every > 0 && step % rl.log_every == 0 {
                let n = window.len().max(1) as f64;
                let row = CurveRow {
                    step,
                    td: window.iter().map(|l| l.td).sum::<f64>() / n,
                    cql: window.iter().map(|l| l.cql).sum::<f64>() / n,
                    mean_episode_reward: if returns.is_empty() {
                        0.0
                    } else {
                        returns.iter().sum::<f64>() / returns.len() as f64
                    },
                };
                window.clear();
                on_log(&row);
                curve.push(row);
            }
        }
        if ep.is_done() {
            returns.push_back(ret);
            if returns.len() > 20 {
                returns.pop_front();
            }
        }
    }
    Ok((model, curve))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::Cell;
    use crate::gridworld::GridMap;
    use crate::stategraph::{build_graph, GraphObject};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn toy_graph(n: usize, map: &GridMap) -> DirectedStateGraph {
        let nav = Navigator::new(map);
        let objs: Vec<GraphObject> = (0..n)
            .map(|k| GraphObject {
                id: ObjectId(k as u32),
                label: ["apple", "book", "mug", "towel"][k % 4].into(),
                source: Cell::new(1 + 2 * k as i32, 2),
                goal: Cell::new(8 - k as i32, 6),
            })
            .collect();
        build_graph(&nav, Cell::new(5, 5), &objs)
    }

    fn small_config() -> RlConfig {
        RlConfig { gcn_hidden: 8, head_hidden: 8, batch_size: 2, ..RlConfig::default() }
    }

    #[test]
    fn td_worked_examples() {
        let a = TdItem { q: 2.0, reward: 1.0, next_max: Some(2.0) };
        let b = TdItem { q: 5.0, reward: 5.0, next_max: None };
        assert!((td_loss_values(&[a], 0.9) - 0.32).abs() < 1e-12);
        assert_eq!(td_loss_values(&[b], 0.9), 0.0);
        assert!((td_loss_values(&[a, b], 0.9) - 0.16).abs() < 1e-12);
        assert!((cql_loss_values(0.1, &[3.0], &[2.0], 1.0) - 1.1).abs() < 1e-12);
        assert_eq!(cql_loss_values(0.1, &[3.0], &[3.0], 1.0), 0.1);
    }

    #[test]
    fn reward_examples() {
        let c = RlConfig::default();
        assert_eq!(reward(&c, ActionClass::Misplaced, 7, false), -7.0);
        assert_eq!(reward(&c, ActionClass::Static, 12, false), -5.0);
        assert_eq!(reward(&c, ActionClass::Misplaced, 3, true), 97.0);
    }

    #[test]
    fn select_action_rules() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let q = [(ObjectId(0), 1.0), (ObjectId(1), 2.0), (ObjectId(2), 2.0)];
        let all = [ObjectId(0), ObjectId(1), ObjectId(2)];
        assert_eq!(select_action(&q, &all, 0.0, &mut rng).unwrap(), ObjectId(1));
        assert_eq!(select_action(&q, &[ObjectId(0)], 0.0, &mut rng).unwrap(), ObjectId(0));
        assert!(matches!(select_action(&q, &[], 0.5, &mut rng), Err(Error::EmptyValidSet)));
    }

    #[test]
    fn zero_head_gives_equal_q() {
        let map = GridMap::walled(10, 8, 0.25);
        let g = toy_graph(3, &map);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut model = QModel::new(&small_config(), &mut rng);
        model.online.head.params.iter_mut().for_each(|p| *p = 0.0);
        let q = model.online.q(&g).unwrap();
        assert!(q.iter().all(|v| *v == q[0]));
    }

    #[test]
    fn polyak_identity_and_geometric_drift() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut m = QModel::new(&small_config(), &mut rng);
        m.target.head.params.iter_mut().for_each(|p| *p += 1.0);
        let d0 = m.target_distance();
        m.polyak(0.1);
        assert!((m.target_distance() - 0.9 * d0).abs() < 1e-9);
        m.polyak(1.0);
        assert_eq!(m.target, m.online);
    }

    #[test]
    fn buffer_is_a_ring() {
        let map = GridMap::walled(10, 8, 0.25);
        let s = Arc::new(GraphState { graph: toy_graph(1, &map), valid: vec![true] });
        let mut buf = ReplayBuffer::new(3);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(buf.sample(1, &mut rng), Err(Error::BufferUnderfull { .. })));
        for r in 0..5 {
            buf.push(Transition { state: s.clone(), action: 0, reward: r as f64, next: s.clone(), terminal: true });
        }
        assert_eq!(buf.len(), 3);
        assert!(buf.sample(20, &mut rng).is_err());
        assert!(buf.sample(3, &mut rng).unwrap().iter().all(|t| t.reward >= 2.0));
    }

    #[test]
    fn checkpoint_round_trip() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut m = QModel::new(&small_config(), &mut rng);
        m.step = 17;
        m.target.head.params[0] += 0.5;
        assert_eq!(QModel::from_checkpoint(&m.to_checkpoint()).unwrap(), m);
    }

    #[test]
    fn heuristic_prefers_shorter_traversal() {
        let map = GridMap::walled(12, 4, 0.25);
        let nav = Navigator::new(&map);
        let agent = Cell::new(1, 1);
        let near = CandidateAction { id: ObjectId(1), source: Cell::new(3, 1), goal: Cell::new(4, 1), valid: true };
        let far = CandidateAction { id: ObjectId(0), source: Cell::new(8, 1), goal: Cell::new(9, 1), valid: true };
        assert_eq!(baseline_heuristic(&nav, agent, &[far, near]), Some(ObjectId(1)));
        let blocked = CandidateAction { valid: false, ..near };
        assert_eq!(baseline_heuristic(&nav, agent, &[far, blocked]), Some(ObjectId(0)));
        assert_eq!(baseline_heuristic(&nav, agent, &[]), None);
    }

    #[test]
    fn exploration_of_a_seen_map_is_empty() {
        let map = GridMap::walled(6, 6, 0.25);
        let nav = Navigator::new(&map);
        let seen = vec![true; map.len()];
        assert!(baseline_greedy_exploration(&map, &nav, &seen, Cell::new(2, 2), |_| Vec::new()).is_empty());
        let mut partial = vec![true; map.len()];
        partial[map.index(Cell::new(4, 4))] = false;
        let w = baseline_greedy_exploration(&map, &nav, &partial, Cell::new(1, 1), |c| vec![c]);
        assert_eq!(w, vec![Cell::new(4, 4)]);
    }
}
