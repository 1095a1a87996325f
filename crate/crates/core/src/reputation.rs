//! Local feedback graphs and Sybil-tolerant utility scoring.
//!
//! Each node keeps a weighted directed graph of perceived utility and scores
//! peers with seeded random walks bounded by three decays: walks continue
//! with probability `transitivity_alpha` (distant nodes earn less), edge
//! weights are halved per `epoch_halflife` of age (stale feedback fades), and
//! nodes whose connection to the evaluator hangs on a single best incoming
//! edge lose `connectivity_penalty` of their score (weakly integrated regions
//! are suspect).

use std::collections::{BTreeMap, BTreeSet, HashMap, VecDeque};

use rand::Rng;

use crate::error::{Error, Result};
use crate::par::indexed_map;
use crate::rng::derive_rng;
use crate::types::NodeId;

#[derive(Debug, Clone, PartialEq)]
pub struct FeedbackEdge {
    pub from: NodeId,
    pub to: NodeId,
    pub weight: f64,
    pub epoch: i64,
}

/// Weighted directed multigraph of feedback; parallel edges carry distinct
/// epochs.
#[derive(Debug, Clone, Default)]
pub struct FeedbackGraph {
    nodes: BTreeSet<NodeId>,
    edges: Vec<FeedbackEdge>,
    outgoing: HashMap<NodeId, Vec<usize>>,
    incoming: HashMap<NodeId, Vec<usize>>,
}

impl FeedbackGraph {
    pub fn new() -> FeedbackGraph {
        FeedbackGraph::default()
    }

    pub fn ensure_node(&mut self, node: NodeId) {
        self.nodes.insert(node);
    }

    pub fn nodes(&self) -> impl Iterator<Item = NodeId> + '_ {
        self.nodes.iter().copied()
    }

    pub fn contains(&self, node: NodeId) -> bool {
        self.nodes.contains(&node)
    }

    pub fn edges(&self) -> &[FeedbackEdge] {
        &self.edges
    }

    /// Appends a feedback edge. Self-feedback and negative utility are
    /// rejected; zero utility records presence without merit.
    pub fn record_feedback(&mut self, from: NodeId, to: NodeId, utility: f64, epoch: i64) -> Result<()> {
        if from == to {
            return Err(Error::SelfFeedback);
        }
        if !utility.is_finite() || utility < 0.0 {
            return Err(Error::NegativeUtility(utility));
        }
        let idx = self.edges.len();
        self.edges.push(FeedbackEdge {
            from,
            to,
            weight: utility,
            epoch,
        });
        self.nodes.insert(from);
        self.nodes.insert(to);
        self.outgoing.entry(from).or_default().push(idx);
        self.incoming.entry(to).or_default().push(idx);
        Ok(())
    }

    /// Edge-list CSV: `from,to,weight,epoch` with a header row.
    pub fn export_csv(&self) -> String {
        let mut s = String::from("from,to,weight,epoch\n");
        for e in &self.edges {
            s.push_str(&format!("{},{},{},{}\n", e.from, e.to, e.weight, e.epoch));
        }
        s
    }

    pub fn import_csv(data: &str) -> Result<FeedbackGraph> {
        let mut graph = FeedbackGraph::new();
        for (n, line) in data.lines().enumerate() {
            if n == 0 || line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split(',').collect();
            if cols.len() != 4 {
                return Err(Error::MalformedCorpus {
                    line: n + 1,
                    reason: "feedback edge needs from,to,weight,epoch".into(),
                });
            }
            let parse = |s: &str| -> Result<u64> {
                s.parse().map_err(|_| Error::MalformedCorpus {
                    line: n + 1,
                    reason: format!("bad node id {s}"),
                })
            };
            let weight: f64 = cols[2].parse().map_err(|_| Error::MalformedCorpus {
                line: n + 1,
                reason: format!("bad weight {}", cols[2]),
            })?;
            let epoch: i64 = cols[3].parse().map_err(|_| Error::MalformedCorpus {
                line: n + 1,
                reason: format!("bad epoch {}", cols[3]),
            })?;
            graph.record_feedback(NodeId(parse(cols[0])?), NodeId(parse(cols[1])?), weight, epoch)?;
        }
        Ok(graph)
    }

    fn max_epoch(&self) -> i64 {
        self.edges.iter().map(|e| e.epoch).max().unwrap_or(0)
    }
}

/// The three decay knobs.
#[derive(Debug, Clone, Copy)]
pub struct DecayParams {
    /// Walk continuation probability, in (0, 1].
    pub transitivity_alpha: f64,
    /// Score multiplier penalty for single-cut nodes, in [0, 1].
    pub connectivity_penalty: f64,
    /// Edge weight halves per this many epochs of age.
    pub epoch_halflife: u32,
}

impl Default for DecayParams {
    fn default() -> Self {
        DecayParams {
            transitivity_alpha: 0.85,
            connectivity_penalty: 0.5,
            epoch_halflife: 10,
        }
    }
}

impl DecayParams {
    fn validate(&self) -> Result<()> {
        if !(self.transitivity_alpha > 0.0 && self.transitivity_alpha <= 1.0) {
            return Err(Error::InvalidConfig("transitivity_alpha must be in (0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.connectivity_penalty) {
            return Err(Error::InvalidConfig("connectivity_penalty must be in [0, 1]".into()));
        }
        if self.epoch_halflife == 0 {
            return Err(Error::InvalidConfig("epoch_halflife must be positive".into()));
        }
        Ok(())
    }
}

/// Utility of one interaction with a peer, fed into feedback edges: a mix of
/// the (non-negative part of the) Shapley value of data the peer shared and a
/// retrieval-hit credit earned when the peer's beams contained the clicked
/// document. `mix` weighs the data term; the default split is half and half.
pub fn edge_utility(shapley_value: f64, retrieval_hit: bool, mix: f64) -> f64 {
    let data_term = shapley_value.max(0.0);
    let hit_term = if retrieval_hit { 1.0 } else { 0.0 };
    mix * data_term + (1.0 - mix) * hit_term
}

/// Subjective utility scores from one evaluator's viewpoint, scaled to a
/// maximum of 1. The evaluator's own entry is always 0 and is excluded from
/// payout eligibility downstream.
#[derive(Debug, Clone)]
pub struct ReputationVector {
    pub evaluator: NodeId,
    pub epoch: i64,
    pub scores: BTreeMap<NodeId, f64>,
}

const WALK_STEP_CAP: usize = 10_000;

/// Computes reputation scores by seeded random walks from the evaluator.
///
/// Each walk continues with probability `transitivity_alpha` and moves along
/// outgoing edges with probability proportional to epoch-decayed weight.
/// Visit mass becomes the raw score; single-cut nodes are penalized; scores
/// are normalized to max 1. Deterministic in `(graph, params, walks, seed)`.
pub fn compute_reputation(
    graph: &FeedbackGraph,
    evaluator: NodeId,
    params: &DecayParams,
    walks: usize,
    seed: u64,
) -> Result<ReputationVector> {
    params.validate()?;
    let nodes: Vec<NodeId> = graph.nodes().collect();
    let index: HashMap<NodeId, usize> = nodes.iter().enumerate().map(|(i, n)| (*n, i)).collect();
    let ref_epoch = graph.max_epoch();
    let zero_vector = || ReputationVector {
        evaluator,
        epoch: ref_epoch,
        scores: nodes.iter().map(|n| (*n, 0.0)).collect(),
    };
    let Some(&start) = index.get(&evaluator) else {
        return Ok(zero_vector());
    };

    // per-node transition tables over epoch-decayed weights
    let mut transitions: Vec<(Vec<usize>, Vec<f64>)> = vec![(Vec::new(), Vec::new()); nodes.len()];
    for (node, edge_ids) in &graph.outgoing {
        let i = index[node];
        let mut targets = Vec::with_capacity(edge_ids.len());
        let mut cumulative = Vec::with_capacity(edge_ids.len());
        let mut acc = 0.0;
        for &eid in edge_ids {
            let e = &graph.edges()[eid];
            let age = (ref_epoch - e.epoch).max(0) as f64;
            let decayed = e.weight * 0.5f64.powf(age / params.epoch_halflife as f64);
            if decayed > 0.0 {
                acc += decayed;
                targets.push(index[&e.to]);
                cumulative.push(acc);
            }
        }
        transitions[i] = (targets, cumulative);
    }
    if transitions[start].0.is_empty() {
        return Ok(zero_vector());
    }

    // walks are independent; chunked tallies merge exactly (u64 sums commute)
    let chunks = 64.min(walks.max(1));
    let per_chunk = walks.div_ceil(chunks);
    let alpha = params.transitivity_alpha;
    let tallies: Vec<Vec<u64>> = indexed_map(chunks, |chunk| {
        let mut visits = vec![0u64; nodes.len()];
        let lo = chunk * per_chunk;
        let hi = ((chunk + 1) * per_chunk).min(walks);
        for walk in lo..hi {
            let mut rng = derive_rng(seed, &[0x3A17, walk as u64]);
            let mut cur = start;
            for _ in 0..WALK_STEP_CAP {
                if rng.random::<f64>() >= alpha {
                    break;
                }
                let (targets, cumulative) = &transitions[cur];
                let Some(&total) = cumulative.last() else {
                    break;
                };
                let draw = rng.random::<f64>() * total;
                let pos = cumulative.partition_point(|&c| c <= draw).min(targets.len() - 1);
                cur = targets[pos];
                if cur != start {
                    visits[cur] += 1;
                }
            }
        }
        visits
    });
    let mut visits = vec![0u64; nodes.len()];
    for tally in tallies {
        for (acc, v) in visits.iter_mut().zip(tally) {
            *acc += v;
        }
    }

    let mut scores: Vec<f64> = visits.iter().map(|&v| v as f64).collect();
    scores[start] = 0.0;

    // connectivity decay: penalize nodes disconnected by removing their single
    // strongest incoming edge
    for (i, node) in nodes.iter().enumerate() {
        if i == start || scores[i] == 0.0 {
            continue;
        }
        let Some(edge_ids) = graph.incoming.get(node) else {
            continue;
        };
        let best = edge_ids
            .iter()
            .copied()
            .max_by(|&a, &b| {
                let ea = &graph.edges()[a];
                let eb = &graph.edges()[b];
                ea.weight
                    .partial_cmp(&eb.weight)
                    .unwrap()
                    .then(eb.from.cmp(&ea.from))
                    .then(eb.epoch.cmp(&ea.epoch))
            })
            .expect("visited nodes have incoming edges");
        if !reachable_without(graph, &index, start, i, best) {
            scores[i] *= 1.0 - params.connectivity_penalty;
        }
    }

    let max = scores.iter().cloned().fold(0.0f64, f64::max);
    if max > 0.0 {
        for s in scores.iter_mut() {
            *s /= max;
        }
    }
    Ok(ReputationVector {
        evaluator,
        epoch: ref_epoch,
        scores: nodes.iter().copied().zip(scores).collect(),
    })
}

// Directed reachability from `start` to `goal` over positive-weight edges,
// skipping edge `removed`.
fn reachable_without(
    graph: &FeedbackGraph,
    index: &HashMap<NodeId, usize>,
    start: usize,
    goal: usize,
    removed: usize,
) -> bool {
    let nodes: Vec<NodeId> = graph.nodes().collect();
    let mut seen = vec![false; nodes.len()];
    let mut queue = VecDeque::from([start]);
    seen[start] = true;
    while let Some(cur) = queue.pop_front() {
        if cur == goal {
            return true;
        }
        if let Some(edge_ids) = graph.outgoing.get(&nodes[cur]) {
            for &eid in edge_ids {
                if eid == removed {
                    continue;
                }
                let e = &graph.edges()[eid];
                if e.weight <= 0.0 {
                    continue;
                }
                let t = index[&e.to];
                if !seen[t] {
                    seen[t] = true;
                    queue.push_back(t);
                }
            }
        }
    }
    false
}
