//! Unseen-object discovery: where is an object I have not seen yet?
//!
//! An (object, room-receptacle) label pair is embedded with signed feature
//! hashing, a filter network drops implausible pairs and a ranking network
//! orders the survivors. The agent searches receptacles in that order.

use std::collections::HashMap;
use std::path::Path;
use std::sync::OnceLock;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::checkpoint::{Checkpoint, Tensor};
use crate::error::{Error, Result};
use crate::geometry::Cell;
use crate::gridworld::{ObjectId, ReceptacleId, Scenario};
use crate::nn::{sigmoid, softmax, Adam, Mlp};
use crate::perception::Knowledge;

/// Embedding width.
pub const EMBED_DIM: usize = 64;
/// Buckets each token is hashed into.
const BUCKETS_PER_TOKEN: u64 = 4;
/// Weight of a concept token relative to a surface word.
const CONCEPT_WEIGHT: f64 = 3.0;
/// Clamp for `ln p` in the cross-entropy.
pub const LOG_EPS: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OrrClass {
    Implausible,
    Probable,
}

impl OrrClass {
    /// Index into the filter's 2-way output.
    pub fn index(self) -> usize {
        match self {
            OrrClass::Implausible => 0,
            OrrClass::Probable => 1,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct OrrPair {
    pub object_label: String,
    pub room_receptacle_label: String,
    #[serde(rename = "class")]
    pub class: OrrClass,
    pub score: f64,
}

/// Object/room-receptacle placement prior.
#[derive(Clone, Debug, PartialEq)]
pub struct PriorTable {
    pairs: Vec<OrrPair>,
    objects: Vec<String>,
    receptacles: Vec<String>,
    index: HashMap<(String, String), usize>,
}

static BUNDLED: OnceLock<PriorTable> = OnceLock::new();

impl PriorTable {
    pub fn new(pairs: Vec<OrrPair>) -> Result<Self> {
        let mut objects: Vec<String> = Vec::new();
        let mut receptacles: Vec<String> = Vec::new();
        let mut index = HashMap::new();
        for (i, p) in pairs.iter().enumerate() {
            if p.object_label.is_empty() || p.room_receptacle_label.is_empty() {
                return Err(Error::EmptyLabel);
            }
            let ok = match p.class {
                OrrClass::Implausible => p.score == 0.0,
                OrrClass::Probable => p.score > 0.0 && p.score <= 1.0,
            };
            if !ok {
                return Err(Error::DegenerateTable(format!(
                    "{}/{}: score {} inconsistent with class",
                    p.object_label, p.room_receptacle_label, p.score
                )));
            }
            if !objects.contains(&p.object_label) {
                objects.push(p.object_label.clone());
            }
            if !receptacles.contains(&p.room_receptacle_label) {
                receptacles.push(p.room_receptacle_label.clone());
            }
            index.insert((p.object_label.clone(), p.room_receptacle_label.clone()), i);
        }
        Ok(Self { pairs, objects, receptacles, index })
    }

    pub fn from_csv_reader(reader: impl std::io::Read) -> Result<Self> {
        let mut rdr = csv::Reader::from_reader(reader);
        let pairs = rdr.deserialize().collect::<std::result::Result<Vec<OrrPair>, _>>()?;
        Self::new(pairs)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_csv_reader(std::fs::File::open(path)?)
    }

    /// The synthetic table shipped with the crate.
    pub fn bundled() -> &'static PriorTable {
        BUNDLED.get_or_init(|| {
            Self::from_csv_reader(include_str!("../data/orr_prior.csv").as_bytes()).expect("bundled prior table parses")
        })
    }

    pub fn pairs(&self) -> &[OrrPair] {
        &self.pairs
    }

    /// Object vocabulary in table order.
    pub fn objects(&self) -> &[String] {
        &self.objects
    }

    pub fn receptacle_labels(&self) -> &[String] {
        &self.receptacles
    }

    pub fn get(&self, object: &str, receptacle: &str) -> Option<&OrrPair> {
        self.index.get(&(object.to_string(), receptacle.to_string())).map(|&i| &self.pairs[i])
    }

    pub fn score(&self, object: &str, receptacle: &str) -> Option<f64> {
        self.get(object, receptacle).map(|p| p.score)
    }

    /// The same table with every score multiplied by `k > 0` and renormalized
    /// so the largest is 1.
    pub fn rescaled(&self, k: f64) -> Result<Self> {
        let max = self.pairs.iter().map(|p| p.score * k).fold(0.0, f64::max);
        if max <= 0.0 {
            return Err(Error::DegenerateTable("no probable pairs".into()));
        }
        Self::new(self.pairs.iter().map(|p| OrrPair { score: p.score * k / max, ..p.clone() }).collect())
    }
}

fn fnv1a(bytes: &[u8], salt: u64) -> u64 {
    let mut h = 0xcbf2_9ce4_8422_2325u64;
    for b in salt.to_le_bytes().iter().chain(bytes) {
        h ^= u64::from(*b);
        h = h.wrapping_mul(0x0100_0000_01b3);
    }
    h
}

/// Signed multi-bucket hash features of weighted tokens, accumulated into `out`.
pub fn hash_tokens<'a>(tokens: impl IntoIterator<Item = (&'a str, f64)>, out: &mut [f64]) {
    let d = out.len() as u64;
    for (t, w) in tokens {
        for k in 0..BUCKETS_PER_TOKEN {
            let h = fnv1a(t.as_bytes(), k);
            let sign = if (h >> 63) == 0 { w } else { -w };
            out[(h % d) as usize] += sign;
        }
    }
}

/// Word → concept pairs standing in for the semantic neighbourhoods a
/// pretrained text encoder would provide.
fn lexicon() -> &'static HashMap<String, String> {
    static LEXICON: OnceLock<HashMap<String, String>> = OnceLock::new();
    LEXICON.get_or_init(|| {
        let mut rdr = csv::Reader::from_reader(include_str!("../data/lexicon.csv").as_bytes());
        rdr.records()
            .map(|r| {
                let r = r.expect("bundled lexicon parses");
                (r[0].to_string(), r[1].to_string())
            })
            .collect()
    })
}

fn tokens(namespace: &str, label: &str) -> Vec<(String, f64)> {
    let mut words = vec![label];
    for part in label.split('|') {
        words.push(part);
        if part.contains('_') {
            words.extend(part.split('_').filter(|w| !w.is_empty()));
        }
    }
    words.sort_unstable();
    words.dedup();
    let mut concepts: Vec<&str> = words.iter().filter_map(|w| lexicon().get(*w).map(String::as_str)).collect();
    concepts.sort_unstable();
    concepts.dedup();
    words
        .iter()
        .map(|w| (format!("{namespace}:{w}"), 1.0))
        .chain(concepts.iter().map(|c| (format!("{namespace}:concept:{c}"), CONCEPT_WEIGHT)))
        .collect()
}

/// Unit-norm hash embedding of an (object, room-receptacle) label pair.
pub fn embed_orr(object: &str, room_receptacle: &str) -> Result<Vec<f64>> {
    if object.is_empty() || room_receptacle.is_empty() {
        return Err(Error::EmptyLabel);
    }
    let mut v = vec![0.0; EMBED_DIM];
    let toks: Vec<(String, f64)> = tokens("obj", object).into_iter().chain(tokens("rr", room_receptacle)).collect();
    hash_tokens(toks.iter().map(|(t, w)| (t.as_str(), *w)), &mut v);
    let n = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 0.0 {
        for x in &mut v {
            *x /= n;
        }
    }
    Ok(v)
}

/// Mean cross-entropy of 2-way predictions against class labels.
pub fn filter_loss(predictions: &[[f64; 2]], labels: &[OrrClass]) -> Result<f64> {
    if predictions.len() != labels.len() {
        return Err(Error::LengthMismatch { left: predictions.len(), right: labels.len() });
    }
    if predictions.is_empty() {
        return Ok(0.0);
    }
    let total: f64 = predictions.iter().zip(labels).map(|(p, y)| -p[y.index()].max(LOG_EPS).ln()).sum();
    Ok(total / predictions.len() as f64)
}

/// Mean squared error between predicted and true scores.
pub fn rank_loss(predicted: &[f64], truth: &[f64]) -> Result<f64> {
    if predicted.len() != truth.len() {
        return Err(Error::LengthMismatch { left: predicted.len(), right: truth.len() });
    }
    if predicted.is_empty() {
        return Ok(0.0);
    }
    Ok(predicted.iter().zip(truth).map(|(a, b)| (a - b) * (a - b)).sum::<f64>() / predicted.len() as f64)
}

/// Fractional ranks (ties share the average rank), 1-based.
fn ranks(v: &[f64]) -> Vec<f64> {
    let mut idx: Vec<usize> = (0..v.len()).collect();
    idx.sort_by(|&a, &b| v[a].total_cmp(&v[b]));
    let mut r = vec![0.0; v.len()];
    let mut i = 0;
    while i < idx.len() {
        let mut j = i;
        while j + 1 < idx.len() && v[idx[j + 1]] == v[idx[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &idx[i..=j] {
            r[k] = avg;
        }
        i = j + 1;
    }
    r
}

/// Spearman rank correlation with tie correction.
pub fn spearman(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let (ra, rb) = (ranks(a), ranks(b));
    let n = ra.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    if va == 0.0 || vb == 0.0 {
        return 0.0;
    }
    cov / (va * vb).sqrt()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct UodmConfig {
    pub hidden: usize,
    pub epochs: usize,
    pub lr: f64,
    pub batch: usize,
    /// Decoupled L2 shrinkage applied by the optimizer.
    pub weight_decay: f64,
    /// Fraction of pairs held out for evaluation.
    pub holdout: f64,
    /// Seeds the split independently of initialization.
    pub split_seed: u64,
    pub seed: u64,
}

impl Default for UodmConfig {
    fn default() -> Self {
        Self { hidden: 64, epochs: 150, lr: 2e-3, batch: 32, weight_decay: 0.1, holdout: 0.2, split_seed: 17, seed: 1 }
    }
}

/// Trained filter and ranking networks.
#[derive(Clone, Debug, PartialEq)]
pub struct UodmModel {
    pub filter: Mlp,
    pub ranker: Mlp,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct UodmReport {
    pub filter_epoch_loss: Vec<f64>,
    pub rank_epoch_loss: Vec<f64>,
    pub holdout_filter_accuracy: f64,
    pub holdout_spearman: f64,
    pub n_train: usize,
    pub n_holdout: usize,
}

impl UodmModel {
    pub fn filter_probs(&self, embedding: &[f64]) -> [f64; 2] {
        let p = softmax(&self.filter.forward(embedding));
        [p[0], p[1]]
    }

    pub fn rank_score(&self, embedding: &[f64]) -> f64 {
        sigmoid(self.ranker.forward(embedding)[0])
    }

    /// Argmax of the filter output; ties count as probable.
    pub fn is_probable(&self, embedding: &[f64]) -> bool {
        let p = self.filter_probs(embedding);
        p[1] >= p[0]
    }

    pub fn to_checkpoint(&self) -> Checkpoint {
        let f = self.filter.to_tensors();
        let mut tensors = vec![Tensor::row(vec![f.len() as f64])];
        tensors.extend(f);
        tensors.extend(self.ranker.to_tensors());
        Checkpoint { kind: "uodm".into(), tensors, step: 0 }
    }

    pub fn from_checkpoint(c: &Checkpoint) -> Result<Self> {
        if c.kind != "uodm" {
            return Err(Error::Checkpoint(format!("expected a uodm checkpoint, found {}", c.kind)));
        }
        let n = c.tensors.first().and_then(|t| t.data.first()).copied().unwrap_or(-1.0);
        if n < 0.0 || n as usize + 1 > c.tensors.len() {
            return Err(Error::Checkpoint("bad filter tensor count".into()));
        }
        let n = n as usize;
        Ok(Self {
            filter: Mlp::from_tensors(&c.tensors[1..1 + n])?,
            ranker: Mlp::from_tensors(&c.tensors[1 + n..])?,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(&Checkpoint::load(path)?)
    }
}

/// Fixed train/held-out split of pair indices.
pub fn split_indices(n: usize, holdout: f64, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_hold = ((n as f64) * holdout).round() as usize;
    let hold = idx[..n_hold].to_vec();
    let mut train = idx[n_hold..].to_vec();
    train.sort_unstable();
    (train, hold)
}

/// Trains both networks on the table; returns them with held-out metrics.
pub fn train_uodm(table: &PriorTable, config: &UodmConfig) -> Result<(UodmModel, UodmReport)> {
    let pairs = table.pairs();
    let n_prob = pairs.iter().filter(|p| p.class == OrrClass::Probable).count();
    if n_prob == 0 || n_prob == pairs.len() {
        return Err(Error::DegenerateTable("both classes must be present".into()));
    }
    if config.epochs == 0 || config.batch == 0 || !(0.0..1.0).contains(&config.holdout) {
        return Err(Error::InvalidConfig("uodm epochs, batch and holdout".into()));
    }
    let emb: Vec<Vec<f64>> = pairs
        .iter()
        .map(|p| embed_orr(&p.object_label, &p.room_receptacle_label))
        .collect::<Result<_>>()?;
    let (train, hold) = split_indices(pairs.len(), config.holdout, config.split_seed);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let h = config.hidden;
    let mut filter = Mlp::new(&[EMBED_DIM, h, h, 2], &mut rng);
    let mut ranker = Mlp::new(&[EMBED_DIM, h, h, 1], &mut rng);
    let mut fopt = Adam::new(filter.params.len(), config.lr).with_weight_decay(config.weight_decay);
    let mut ropt = Adam::new(ranker.params.len(), config.lr).with_weight_decay(config.weight_decay);
    let rank_train: Vec<usize> = train.iter().copied().filter(|&i| pairs[i].class == OrrClass::Probable).collect();

    let mut report = UodmReport { n_train: train.len(), n_holdout: hold.len(), ..Default::default() };
    let mut order = train.clone();
    let mut rorder = rank_train.clone();
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch) {
            let mut grad = vec![0.0; filter.params.len()];
            for &i in batch {
                let (z, cache) = filter.forward_cached(&emb[i]);
                let p = softmax(&z);
                let y = pairs[i].class.index();
                epoch_loss += -p[y].max(LOG_EPS).ln();
                // d(-ln p_y)/dz = p - onehot(y)
                let mut dz = p.clone();
                dz[y] -= 1.0;
                for v in &mut dz {
                    *v /= batch.len() as f64;
                }
                filter.backward(&cache, &dz, &mut grad);
            }
            fopt.step(&mut filter.params, &grad);
        }
        report.filter_epoch_loss.push(epoch_loss / order.len() as f64);

        rorder.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in rorder.chunks(config.batch) {
            let mut grad = vec![0.0; ranker.params.len()];
            for &i in batch {
                let (z, cache) = ranker.forward_cached(&emb[i]);
                let s = sigmoid(z[0]);
                let err = s - pairs[i].score;
                epoch_loss += err * err;
                let dz = 2.0 * err * s * (1.0 - s) / batch.len() as f64;
                ranker.backward(&cache, &[dz], &mut grad);
            }
            ropt.step(&mut ranker.params, &grad);
        }
        report.rank_epoch_loss.push(epoch_loss / rorder.len().max(1) as f64);
    }

    let model = UodmModel { filter, ranker };
    if !hold.is_empty() {
        let correct = hold
            .iter()
            .filter(|&&i| model.is_probable(&emb[i]) == (pairs[i].class == OrrClass::Probable))
            .count();
        report.holdout_filter_accuracy = correct as f64 / hold.len() as f64;
        let hp: Vec<usize> = hold.iter().copied().filter(|&i| pairs[i].class == OrrClass::Probable).collect();
        let pred: Vec<f64> = hp.iter().map(|&i| model.rank_score(&emb[i])).collect();
        let truth: Vec<f64> = hp.iter().map(|&i| pairs[i].score).collect();
        report.holdout_spearman = if hp.len() >= 2 { spearman(&pred, &truth) } else { 0.0 };
    }
    Ok((model, report))
}

/// Orders `candidates` for `object`: filter, then rank descending, ties by id.
/// Falls back to ranking everything when the filter rejects all candidates.
pub fn rank_candidates(model: &UodmModel, object: &str, candidates: &[(ReceptacleId, &str)]) -> Result<Vec<ReceptacleId>> {
    if candidates.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    let mut scored = Vec::with_capacity(candidates.len());
    for (rid, label) in candidates {
        let e = embed_orr(object, label)?;
        scored.push((*rid, model.is_probable(&e), model.rank_score(&e)));
    }
    Ok(order_scored(scored))
}

fn order_scored(mut scored: Vec<(ReceptacleId, bool, f64)>) -> Vec<ReceptacleId> {
    if scored.iter().any(|s| s.1) {
        scored.retain(|s| s.1);
    }
    scored.sort_by(|a, b| b.2.total_cmp(&a.2).then(a.0.cmp(&b.0)));
    scored.into_iter().map(|s| s.0).collect()
}

/// Filter verdicts and ranker scores for every (object, receptacle) pair of a
/// scenario, computed once per episode.
#[derive(Clone, Debug)]
pub struct PairScores {
    n_receptacles: usize,
    /// Row-major `[object][receptacle]`.
    entries: Vec<(bool, f64)>,
}

impl PairScores {
    pub fn new(model: &UodmModel, scenario: &Scenario) -> Result<Self> {
        let mut entries = Vec::with_capacity(scenario.n_objects() * scenario.receptacles.len());
        for o in &scenario.objects {
            for r in &scenario.receptacles {
                let e = embed_orr(&o.label, &r.label)?;
                entries.push((model.is_probable(&e), model.rank_score(&e)));
            }
        }
        Ok(Self { n_receptacles: scenario.receptacles.len(), entries })
    }

    pub fn get(&self, object: ObjectId, receptacle: ReceptacleId) -> (bool, f64) {
        self.entries[object.index() * self.n_receptacles + receptacle.index()]
    }
}

/// Reorders every unseen object's candidate list and sets its predicted
/// location to the top candidate's centroid.
pub fn predict_locations(scores: &PairScores, scenario: &Scenario, knowledge: &mut Knowledge) {
    let unseen: Vec<ObjectId> = knowledge.unseen.iter().copied().collect();
    for id in unseen {
        let Some(list) = knowledge.candidates.get_mut(&id) else { continue };
        if list.is_empty() {
            knowledge.predicted.remove(&id);
            continue;
        }
        let scored = list.iter().map(|&r| {
            let (p, s) = scores.get(id, r);
            (r, p, s)
        });
        *list = order_scored(scored.collect());
        let top = list[0];
        knowledge.predicted.insert(id, (top, scenario.receptacle(top).centroid));
    }
}

/// What remains after a failed search.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PruneOutcome {
    /// The next receptacle to search.
    Next(ReceptacleId),
    /// Nothing left to search.
    Unfindable,
}

/// Removes a searched-and-missed receptacle from one object's candidates.
pub fn prune_candidate(
    knowledge: &mut Knowledge,
    scenario: &Scenario,
    object: ObjectId,
    receptacle: ReceptacleId,
) -> PruneOutcome {
    knowledge.discovery_attempts += 1;
    let list = knowledge.candidates.entry(object).or_default();
    list.retain(|r| *r != receptacle);
    match list.first().copied() {
        Some(next) => {
            knowledge.predicted.insert(object, (next, scenario.receptacle(next).centroid));
            PruneOutcome::Next(next)
        }
        None => {
            knowledge.predicted.remove(&object);
            knowledge.unfindable.insert(object);
            PruneOutcome::Unfindable
        }
    }
}

/// Predicted cell for an unseen object, if any.
pub fn predicted_cell(knowledge: &Knowledge, object: ObjectId) -> Option<Cell> {
    knowledge.predicted.get(&object).map(|p| p.1)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn embedding_is_deterministic_and_unit_norm() {
        let a = embed_orr("apple", "kitchen|fridge").unwrap();
        assert_eq!(a, embed_orr("apple", "kitchen|fridge").unwrap());
        assert_ne!(a, embed_orr("vase", "kitchen|fridge").unwrap());
        assert!((a.iter().map(|x| x * x).sum::<f64>() - 1.0).abs() < 1e-12);
        assert!(matches!(embed_orr("", "x"), Err(Error::EmptyLabel)));
    }

    #[test]
    fn no_collisions_over_the_vocabulary() {
        let t = PriorTable::bundled();
        let mut seen: Vec<Vec<f64>> = Vec::new();
        for p in t.pairs() {
            let e = embed_orr(&p.object_label, &p.room_receptacle_label).unwrap();
            assert!(seen.iter().all(|s| s.iter().zip(&e).any(|(a, b)| (a - b).abs() > 1e-9)));
            seen.push(e);
        }
        assert_eq!(seen.len(), 640);
    }

    #[test]
    fn cross_entropy_examples() {
        let y = [OrrClass::Probable];
        assert!(filter_loss(&[[0.0, 1.0]], &y).unwrap().abs() < 1e-15);
        let u = filter_loss(&[[0.5, 0.5]], &y).unwrap();
        assert!((u - std::f64::consts::LN_2).abs() < 1e-12);
        let l1 = filter_loss(&[[0.2, 0.8]], &y).unwrap();
        let l2 = filter_loss(&[[0.7, 0.3]], &[OrrClass::Implausible]).unwrap();
        let both = filter_loss(&[[0.2, 0.8], [0.7, 0.3]], &[OrrClass::Probable, OrrClass::Implausible]).unwrap();
        assert!((both - (l1 + l2) / 2.0).abs() < 1e-15);
        let clamped = filter_loss(&[[1.0, 0.0]], &y).unwrap();
        assert!((clamped - (-LOG_EPS.ln())).abs() < 1e-9);
    }

    #[test]
    fn mse_examples() {
        assert_eq!(rank_loss(&[0.3, 0.4], &[0.3, 0.4]).unwrap(), 0.0);
        assert_eq!(rank_loss(&[1.0, 0.0], &[0.0, 1.0]).unwrap(), 1.0);
        assert_eq!(rank_loss(&[0.5], &[0.0]).unwrap(), 0.25);
        assert!(matches!(rank_loss(&[0.5], &[]), Err(Error::LengthMismatch { .. })));
    }

    #[test]
    fn ordering_contract() {
        let s = vec![
            (ReceptacleId(0), true, 0.9),
            (ReceptacleId(1), true, 0.2),
            (ReceptacleId(2), true, 0.4),
        ];
        assert_eq!(order_scored(s), vec![ReceptacleId(0), ReceptacleId(2), ReceptacleId(1)]);
        let tie = vec![(ReceptacleId(5), true, 0.5), (ReceptacleId(3), true, 0.5), (ReceptacleId(4), false, 0.9)];
        assert_eq!(order_scored(tie), vec![ReceptacleId(3), ReceptacleId(5)]);
        let all_out = vec![(ReceptacleId(1), false, 0.1), (ReceptacleId(0), false, 0.3)];
        assert_eq!(order_scored(all_out), vec![ReceptacleId(0), ReceptacleId(1)]);
    }

    #[test]
    fn single_class_table_is_rejected() {
        let p = vec![OrrPair {
            object_label: "a".into(),
            room_receptacle_label: "b|c".into(),
            class: OrrClass::Probable,
            score: 0.5,
        }];
        let t = PriorTable::new(p).unwrap();
        assert!(matches!(train_uodm(&t, &UodmConfig::default()), Err(Error::DegenerateTable(_))));
    }

    #[test]
    fn spearman_matches_known_values() {
        assert!((spearman(&[1.0, 2.0, 3.0], &[10.0, 20.0, 30.0]) - 1.0).abs() < 1e-12);
        assert!((spearman(&[1.0, 2.0, 3.0], &[3.0, 2.0, 1.0]) + 1.0).abs() < 1e-12);
        // tie correction: ranks (1.5, 1.5, 3) vs (1, 2, 3)
        let r = spearman(&[1.0, 1.0, 2.0], &[1.0, 2.0, 3.0]);
        assert!((r - 0.866_025_403_784_438_6).abs() < 1e-12);
    }

    #[test]
    fn bundled_table_shape() {
        let t = PriorTable::bundled();
        assert_eq!(t.objects().len(), 40);
        assert_eq!(t.receptacle_labels().len(), 16);
        let best = t
            .receptacle_labels()
            .iter()
            .max_by(|a, b| t.score("apple", a).unwrap().total_cmp(&t.score("apple", b).unwrap()))
            .unwrap();
        assert_eq!(best, "kitchen|fridge");
    }
}
