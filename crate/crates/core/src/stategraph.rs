//! Directed state graph and the graph convolution that embeds it.
//!
//! Node 0 is the agent; object `k` contributes a source node `1 + 2k` (where
//! it is, or where it is predicted to be) and a goal node `2 + 2k`. Edges run
//! agent → every source, source → own goal and goal → every other source,
//! each carrying the BFS path length between its endpoints.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Cell;
use crate::gridworld::{GridMap, ObjectId};
use crate::nav::Navigator;
use crate::uodm::hash_tokens;

/// Width of the label hash features.
pub const LABEL_DIM: usize = 16;
/// Node input width: position (2), kind one-hot (3), label hash, mean incident cost (1).
pub const NODE_DIM: usize = 2 + 3 + LABEL_DIM + 1;
/// Edge input width: normalized cost split by edge type.
pub const EDGE_DIM: usize = 3;
/// Normalized costs are clamped here so sentinel edges stay bounded.
const MAX_NORM_COST: f64 = 4.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "object", rename_all = "snake_case")]
pub enum NodeKind {
    Agent,
    Source(ObjectId),
    Goal(ObjectId),
}

impl NodeKind {
    fn slot(self) -> usize {
        match self {
            NodeKind::Agent => 0,
            NodeKind::Source(_) => 1,
            NodeKind::Goal(_) => 2,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DsgNode {
    pub kind: NodeKind,
    pub position: Cell,
    pub label_feature: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Edge {
    pub from: usize,
    pub to: usize,
    /// Path length in cells (sentinel when unreachable).
    pub cost: u32,
}

impl Edge {
    fn slot(&self) -> usize {
        match (self.from, self.to % 2) {
            (0, _) => 0,
            (_, 0) => 1,
            _ => 2,
        }
    }
}

/// One object as the planner sees it.
#[derive(Clone, Debug, PartialEq)]
pub struct GraphObject {
    pub id: ObjectId,
    pub label: String,
    pub source: Cell,
    pub goal: Cell,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DirectedStateGraph {
    pub nodes: Vec<DsgNode>,
    pub edges: Vec<Edge>,
    /// Object of each source/goal node pair, in node order.
    pub objects: Vec<ObjectId>,
    pub width: u32,
    pub height: u32,
    /// Node input features, row-major `nodes × NODE_DIM`.
    pub features: Vec<f64>,
    /// Edge input features, row-major `edges × EDGE_DIM`.
    pub edge_features: Vec<f64>,
}

impl DirectedStateGraph {
    pub fn n_objects(&self) -> usize {
        self.objects.len()
    }

    pub fn source_node(k: usize) -> usize {
        1 + 2 * k
    }

    pub fn goal_node(k: usize) -> usize {
        2 + 2 * k
    }

    /// Position of an object in [`Self::objects`].
    pub fn object_index(&self, id: ObjectId) -> Option<usize> {
        self.objects.iter().position(|o| *o == id)
    }

    pub fn edge_cost(&self, from: usize, to: usize) -> Option<u32> {
        self.edges.iter().find(|e| e.from == from && e.to == to).map(|e| e.cost)
    }
}

/// Label hash features shared by nodes and tests.
pub fn label_features(label: &str) -> Vec<f64> {
    let mut v = vec![0.0; LABEL_DIM];
    if label.is_empty() {
        return v;
    }
    let toks: Vec<String> = std::iter::once(label)
        .chain(label.split(['|', '_']))
        .map(|t| format!("obj:{t}"))
        .collect();
    hash_tokens(toks.iter().map(|t| (t.as_str(), 1.0)), &mut v);
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        v.iter_mut().for_each(|x| *x /= n);
    }
    v
}

/// Builds the graph over `objects` with BFS edge costs.
pub fn build_graph(nav: &Navigator<'_>, agent: Cell, objects: &[GraphObject]) -> DirectedStateGraph {
    let map: &GridMap = nav.map();
    let n = objects.len();
    let mut nodes = Vec::with_capacity(2 * n + 1);
    nodes.push(DsgNode { kind: NodeKind::Agent, position: agent, label_feature: vec![0.0; LABEL_DIM] });
    for o in objects {
        let lf = label_features(&o.label);
        nodes.push(DsgNode { kind: NodeKind::Source(o.id), position: o.source, label_feature: lf.clone() });
        nodes.push(DsgNode { kind: NodeKind::Goal(o.id), position: o.goal, label_feature: lf });
    }
    let cost = |a: Cell, b: Cell| nav.cost_or_sentinel(a, b);
    let mut edges = Vec::with_capacity(n * n + n);
    for (k, o) in objects.iter().enumerate() {
        edges.push(Edge { from: 0, to: DirectedStateGraph::source_node(k), cost: cost(agent, o.source) });
    }
    for (k, o) in objects.iter().enumerate() {
        edges.push(Edge {
            from: DirectedStateGraph::source_node(k),
            to: DirectedStateGraph::goal_node(k),
            cost: cost(o.source, o.goal),
        });
    }
    for (i, oi) in objects.iter().enumerate() {
        for (j, oj) in objects.iter().enumerate() {
            if i != j {
                edges.push(Edge {
                    from: DirectedStateGraph::goal_node(i),
                    to: DirectedStateGraph::source_node(j),
                    cost: cost(oi.goal, oj.source),
                });
            }
        }
    }

    let norm = f64::from(map.width + map.height) / 2.0;
    let ncost = |c: u32| (f64::from(c) / norm).min(MAX_NORM_COST);
    let mut incident = vec![(0.0, 0usize); nodes.len()];
    for e in &edges {
        for v in [e.from, e.to] {
            incident[v].0 += ncost(e.cost);
            incident[v].1 += 1;
        }
    }
    let mut features = Vec::with_capacity(nodes.len() * NODE_DIM);
    for (v, node) in nodes.iter().enumerate() {
        features.push(f64::from(node.position.x) / f64::from(map.width));
        features.push(f64::from(node.position.y) / f64::from(map.height));
        let mut kind = [0.0; 3];
        kind[node.kind.slot()] = 1.0;
        features.extend_from_slice(&kind);
        features.extend_from_slice(&node.label_feature);
        let (s, c) = incident[v];
        features.push(if c == 0 { 0.0 } else { s / c as f64 });
    }
    let mut edge_features = vec![0.0; edges.len() * EDGE_DIM];
    for (k, e) in edges.iter().enumerate() {
        edge_features[k * EDGE_DIM + e.slot()] = ncost(e.cost);
    }
    DirectedStateGraph {
        nodes,
        edges,
        objects: objects.iter().map(|o| o.id).collect(),
        width: map.width,
        height: map.height,
        features,
        edge_features,
    }
}

/// Graph convolution weights. Per layer: self transform, neighbour
/// transform, edge transform and bias, stored flat.
#[derive(Clone, Debug, PartialEq)]
pub struct GcnWeights {
    dims: Vec<usize>,
    pub params: Vec<f64>,
}

#[derive(Clone, Copy)]
struct LayerLayout {
    din: usize,
    dout: usize,
    ws: usize,
    wn: usize,
    we: usize,
    b: usize,
}

impl GcnWeights {
    /// `layers` layers of width `hidden` over [`NODE_DIM`] inputs.
    pub fn new(layers: usize, hidden: usize, rng: &mut impl rand::Rng) -> Self {
        use rand_distr::{Distribution, Normal};
        let mut dims = vec![NODE_DIM];
        dims.extend(std::iter::repeat_n(hidden, layers));
        let mut w = Self::zeros(&dims);
        for l in 0..layers {
            let lay = w.layout(l);
            let std = (1.0 / (2 * lay.din + EDGE_DIM) as f64).sqrt();
            let normal = Normal::new(0.0, std).expect("positive std");
            for p in &mut w.params[lay.ws..lay.b] {
                *p = normal.sample(rng);
            }
        }
        w
    }

    pub fn zeros(dims: &[usize]) -> Self {
        let n = dims.windows(2).map(|d| 2 * d[0] * d[1] + EDGE_DIM * d[1] + d[1]).sum();
        Self { dims: dims.to_vec(), params: vec![0.0; n] }
    }

    pub fn dims(&self) -> &[usize] {
        &self.dims
    }

    pub fn layers(&self) -> usize {
        self.dims.len() - 1
    }

    pub fn out_dim(&self) -> usize {
        *self.dims.last().unwrap()
    }

    fn layout(&self, l: usize) -> LayerLayout {
        let off: usize = self.dims.windows(2).take(l).map(|d| 2 * d[0] * d[1] + EDGE_DIM * d[1] + d[1]).sum();
        let (din, dout) = (self.dims[l], self.dims[l + 1]);
        let ws = off;
        let wn = ws + din * dout;
        let we = wn + din * dout;
        let b = we + EDGE_DIM * dout;
        LayerLayout { din, dout, ws, wn, we, b }
    }

    pub fn to_tensors(&self) -> Vec<crate::checkpoint::Tensor> {
        use crate::checkpoint::Tensor;
        let mut out = Vec::new();
        for l in 0..self.layers() {
            let s = self.layout(l);
            out.push(Tensor::new(s.dout, s.din, self.params[s.ws..s.wn].to_vec()));
            out.push(Tensor::new(s.dout, s.din, self.params[s.wn..s.we].to_vec()));
            out.push(Tensor::new(s.dout, EDGE_DIM, self.params[s.we..s.b].to_vec()));
            out.push(Tensor::new(1, s.dout, self.params[s.b..s.b + s.dout].to_vec()));
        }
        out
    }

    pub fn from_tensors(t: &[crate::checkpoint::Tensor]) -> Result<Self> {
        if t.is_empty() || t.len() % 4 != 0 {
            return Err(Error::Checkpoint("gcn needs four tensors per layer".into()));
        }
        let mut dims = vec![t[0].cols];
        let mut params = Vec::new();
        for q in t.chunks_exact(4) {
            let (din, dout) = (*dims.last().unwrap(), q[0].rows);
            let shapes = [(dout, din), (dout, din), (dout, EDGE_DIM), (1, dout)];
            for (tensor, (r, c)) in q.iter().zip(shapes) {
                if tensor.rows != r || tensor.cols != c {
                    return Err(Error::ShapeMismatch(format!("gcn tensor {}x{}, expected {r}x{c}", tensor.rows, tensor.cols)));
                }
                params.extend_from_slice(&tensor.data);
            }
            dims.push(dout);
        }
        Ok(Self { dims, params })
    }
}

/// Forward activations kept for [`gcn_backward`].
#[derive(Clone, Debug, Default)]
pub struct GcnCache {
    /// Layer inputs, each `nodes × din`.
    inputs: Vec<Vec<f64>>,
    /// Pre-activations, each `nodes × dout`.
    pre: Vec<Vec<f64>>,
    n_nodes: usize,
}

/// In-degree of every node.
fn in_degrees(g: &DirectedStateGraph) -> Vec<usize> {
    let mut deg = vec![0; g.nodes.len()];
    for e in &g.edges {
        deg[e.to] += 1;
    }
    deg
}

/// Per-node embeddings, row-major `nodes × out_dim`.
pub fn gcn_forward(g: &DirectedStateGraph, w: &GcnWeights) -> Result<(Vec<f64>, GcnCache)> {
    if w.dims[0] != NODE_DIM || g.features.len() != g.nodes.len() * NODE_DIM {
        return Err(Error::ShapeMismatch(format!("gcn input width {} vs features {}", w.dims[0], NODE_DIM)));
    }
    let n = g.nodes.len();
    let deg = in_degrees(g);
    let mut h = g.features.clone();
    let mut cache = GcnCache { n_nodes: n, ..Default::default() };
    for l in 0..w.layers() {
        let s = w.layout(l);
        let p = &w.params;
        let mut a = vec![0.0; n * s.dout];
        for v in 0..n {
            let hv = &h[v * s.din..(v + 1) * s.din];
            let av = &mut a[v * s.dout..(v + 1) * s.dout];
            for o in 0..s.dout {
                let row = &p[s.ws + o * s.din..s.ws + (o + 1) * s.din];
                av[o] = p[s.b + o] + row.iter().zip(hv).map(|(x, y)| x * y).sum::<f64>();
            }
        }
        // neighbour transform once per node, then one cheap pass per edge
        let mut msg = vec![0.0; n * s.dout];
        for u in 0..n {
            let hu = &h[u * s.din..(u + 1) * s.din];
            for o in 0..s.dout {
                let rn = &p[s.wn + o * s.din..s.wn + (o + 1) * s.din];
                msg[u * s.dout + o] = rn.iter().zip(hu).map(|(x, y)| x * y).sum::<f64>();
            }
        }
        for (k, e) in g.edges.iter().enumerate() {
            let inv = 1.0 / deg[e.to] as f64;
            let ef = &g.edge_features[k * EDGE_DIM..(k + 1) * EDGE_DIM];
            for o in 0..s.dout {
                let re = &p[s.we + o * EDGE_DIM..s.we + (o + 1) * EDGE_DIM];
                let m = msg[e.from * s.dout + o] + re.iter().zip(ef).map(|(x, y)| x * y).sum::<f64>();
                a[e.to * s.dout + o] += inv * m;
            }
        }
        let out: Vec<f64> = a.iter().map(|x| x.max(0.0)).collect();
        cache.inputs.push(std::mem::replace(&mut h, out));
        cache.pre.push(a);
    }
    Ok((h, cache))
}

/// Reverse pass: accumulates weight gradients of `Σ upstream ⊙ Z` into
/// `grad` and returns the gradient with respect to the node features.
pub fn gcn_backward(
    g: &DirectedStateGraph,
    w: &GcnWeights,
    cache: &GcnCache,
    upstream: &[f64],
    grad: &mut [f64],
) -> Result<Vec<f64>> {
    if cache.pre.is_empty() {
        return Err(Error::MissingCache);
    }
    let n = g.nodes.len();
    if cache.n_nodes != n || upstream.len() != n * w.out_dim() || grad.len() != w.params.len() {
        return Err(Error::ShapeMismatch("gcn backward inputs do not match the cached forward pass".into()));
    }
    let deg = in_degrees(g);
    let p = &w.params;
    let mut dh_out = upstream.to_vec();
    for l in (0..w.layers()).rev() {
        let s = w.layout(l);
        let h = &cache.inputs[l];
        let da: Vec<f64> = dh_out.iter().zip(&cache.pre[l]).map(|(d, a)| if *a > 0.0 { *d } else { 0.0 }).collect();
        let mut dh = vec![0.0; n * s.din];
        for v in 0..n {
            let hv = &h[v * s.din..(v + 1) * s.din];
            for o in 0..s.dout {
                let d = da[v * s.dout + o];
                if d == 0.0 {
                    continue;
                }
                grad[s.b + o] += d;
                for i in 0..s.din {
                    grad[s.ws + o * s.din + i] += d * hv[i];
                    dh[v * s.din + i] += d * p[s.ws + o * s.din + i];
                }
            }
        }
        let mut dmsg = vec![0.0; n * s.dout];
        for (k, e) in g.edges.iter().enumerate() {
            let inv = 1.0 / deg[e.to] as f64;
            let ef = &g.edge_features[k * EDGE_DIM..(k + 1) * EDGE_DIM];
            for o in 0..s.dout {
                let d = da[e.to * s.dout + o] * inv;
                if d == 0.0 {
                    continue;
                }
                dmsg[e.from * s.dout + o] += d;
                for (i, x) in ef.iter().enumerate() {
                    grad[s.we + o * EDGE_DIM + i] += d * x;
                }
            }
        }
        for u in 0..n {
            let hu = &h[u * s.din..(u + 1) * s.din];
            for o in 0..s.dout {
                let d = dmsg[u * s.dout + o];
                if d == 0.0 {
                    continue;
                }
                for i in 0..s.din {
                    grad[s.wn + o * s.din + i] += d * hu[i];
                    dh[u * s.din + i] += d * p[s.wn + o * s.din + i];
                }
            }
        }
        dh_out = dh;
    }
    Ok(dh_out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn objs(n: usize) -> Vec<GraphObject> {
        (0..n)
            .map(|k| GraphObject {
                id: ObjectId(k as u32),
                label: ["apple", "book", "mug", "towel", "vase"][k % 5].into(),
                source: Cell::new(1 + (k as i32 * 3) % 10, 1 + (k as i32 * 7) % 10),
                goal: Cell::new(1 + (k as i32 * 5 + 2) % 10, 1 + (k as i32 * 2 + 4) % 10),
            })
            .collect()
    }

    fn open_map() -> GridMap {
        GridMap::walled(12, 12, 0.25)
    }

    #[test]
    fn counting_examples() {
        let m = open_map();
        let nav = Navigator::new(&m);
        let g1 = build_graph(&nav, Cell::new(5, 5), &objs(1));
        assert_eq!((g1.nodes.len(), g1.edges.len()), (3, 2));
        let g2 = build_graph(&nav, Cell::new(5, 5), &objs(2));
        assert_eq!((g2.nodes.len(), g2.edges.len()), (5, 6));
    }

    #[test]
    fn pinned_goal_edge_is_short() {
        let m = open_map();
        let nav = Navigator::new(&m);
        let mut o = objs(2);
        o[1].goal = o[1].source;
        let g = build_graph(&nav, Cell::new(5, 5), &o);
        assert!(g.edge_cost(3, 4).unwrap() <= 1);
    }

    #[test]
    fn zero_weights_give_zero_embeddings() {
        let m = open_map();
        let nav = Navigator::new(&m);
        let g = build_graph(&nav, Cell::new(5, 5), &objs(3));
        let w = GcnWeights::zeros(&[NODE_DIM, 32, 32]);
        let (z, _) = gcn_forward(&g, &w).unwrap();
        assert!(z.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn agent_only_graph_uses_the_self_chain() {
        let m = open_map();
        let nav = Navigator::new(&m);
        let g = build_graph(&nav, Cell::new(5, 5), &[]);
        let w = GcnWeights::new(2, 8, &mut ChaCha8Rng::seed_from_u64(4));
        let (z, _) = gcn_forward(&g, &w).unwrap();
        // replay the two self transforms by hand
        let mut h = g.features.clone();
        for l in 0..2 {
            let s = w.layout(l);
            h = (0..s.dout)
                .map(|o| {
                    let row = &w.params[s.ws + o * s.din..s.ws + (o + 1) * s.din];
                    (w.params[s.b + o] + row.iter().zip(&h).map(|(a, b)| a * b).sum::<f64>()).max(0.0)
                })
                .collect();
        }
        assert_eq!(z, h);
    }

    fn loss(g: &DirectedStateGraph, w: &GcnWeights, up: &[f64]) -> f64 {
        gcn_forward(g, w).unwrap().0.iter().zip(up).map(|(a, b)| a * b).sum()
    }

    #[test]
    fn backward_matches_finite_differences() {
        let m = open_map();
        let nav = Navigator::new(&m);
        let g = build_graph(&nav, Cell::new(5, 5), &objs(3));
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let w = GcnWeights::new(2, 6, &mut rng);
        let up: Vec<f64> = (0..g.nodes.len() * 6).map(|k| ((k * 37 % 11) as f64 - 5.0) / 5.0).collect();
        let (_, cache) = gcn_forward(&g, &w).unwrap();
        let mut grad = vec![0.0; w.params.len()];
        gcn_backward(&g, &w, &cache, &up, &mut grad).unwrap();
        let h = 1e-4;
        let mut worst: f64 = 0.0;
        for i in 0..w.params.len() {
            let mut a = w.clone();
            a.params[i] += h;
            let mut b = w.clone();
            b.params[i] -= h;
            let num = (loss(&g, &a, &up) - loss(&g, &b, &up)) / (2.0 * h);
            let rel = (num - grad[i]).abs() / num.abs().max(grad[i].abs()).max(1e-6);
            worst = worst.max(rel);
        }
        assert!(worst <= 1e-4, "worst relative error {worst}");
    }

    #[test]
    fn backward_is_linear_in_upstream() {
        let m = open_map();
        let nav = Navigator::new(&m);
        let g = build_graph(&nav, Cell::new(2, 3), &objs(3));
        let w = GcnWeights::new(2, 5, &mut ChaCha8Rng::seed_from_u64(8));
        let (_, cache) = gcn_forward(&g, &w).unwrap();
        let up: Vec<f64> = (0..g.nodes.len() * 5).map(|k| (k as f64).sin()).collect();
        let mut g1 = vec![0.0; w.params.len()];
        gcn_backward(&g, &w, &cache, &up, &mut g1).unwrap();
        let up2: Vec<f64> = up.iter().map(|x| 2.0 * x).collect();
        let mut g2 = vec![0.0; w.params.len()];
        gcn_backward(&g, &w, &cache, &up2, &mut g2).unwrap();
        assert!(g1.iter().zip(&g2).all(|(a, b)| (2.0 * a - b).abs() < 1e-12));
        let mut g0 = vec![0.0; w.params.len()];
        gcn_backward(&g, &w, &cache, &vec![0.0; up.len()], &mut g0).unwrap();
        assert!(g0.iter().all(|v| *v == 0.0));
        assert!(matches!(gcn_backward(&g, &w, &GcnCache::default(), &up, &mut g0), Err(Error::MissingCache)));
    }

    #[test]
    fn tensors_round_trip() {
        let w = GcnWeights::new(2, 4, &mut ChaCha8Rng::seed_from_u64(1));
        assert_eq!(GcnWeights::from_tensors(&w.to_tensors()).unwrap(), w);
    }
}
