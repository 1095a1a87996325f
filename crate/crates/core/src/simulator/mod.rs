//! Deterministic network simulation: search fan-out over sampled agents and
//! the three experiment scenarios (data sharing, poisoning, Sybil capture).
//!
//! Rounds are discrete and globally ordered; clicklog exchange is modeled as
//! batch delivery of neighbors' training splits. Feature statistics are
//! always computed from the clicklogs a node actually possesses — a node
//! training locally sees only its own history, a node that incorporates
//! shared datasets sees those too. Every stochastic choice derives its RNG
//! from the run seed and a work-item tag, so any experiment re-run with the
//! same config and seed produces byte-identical reports.

mod poisoning_exp;
mod ranking_exp;
mod report;
mod sybil_exp;

pub use poisoning_exp::{run_poisoning_experiment, PoisonMode, PoisoningConfig, PoisoningReport, PoisonRow};
pub use ranking_exp::{run_ranking_experiment, RankMode, RankingConfig, RankingReport, RankingRow};
pub use report::format_f64;
pub use sybil_exp::{run_sybil_experiment, SybilConfig, SybilReport, SybilRow, SybilScenario};

use rand::seq::SliceRandom;

use crate::dataset::{ClickCorpus, PersonalDataset, Split, SplitPolicy};
use crate::error::{Error, Result};
use crate::ranking::{rank, DocStats, FeatureContext, LabeledExample, RankModel};
use crate::reputation::FeedbackGraph;
use crate::retrieval::{aggregate_ensembles, normalize_beams, top_k, Retriever};
use crate::rng::derive_rng;
use crate::types::{DocId, NodeId, UserId};
use crate::valuation::EvalCase;

/// Honest nodes carry real datasets and may donate; Sybil nodes never donate.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Honest,
    Sybil,
}

/// Everything one node owns: identity, data, models, feedback, and balance.
pub struct NodeState {
    pub node_id: NodeId,
    pub user_id: UserId,
    pub role: Role,
    pub dataset: Option<PersonalDataset>,
    pub retriever: Retriever,
    pub rank_model: RankModel,
    pub feedback: FeedbackGraph,
    pub balance: u64,
}

#[derive(Debug, Clone, Copy)]
pub struct SearchConfig {
    /// Agents solicited per query, in addition to the user's own retriever.
    pub agent_sample_size: usize,
    /// Result list length.
    pub k: usize,
    pub beam_width: usize,
}

impl Default for SearchConfig {
    fn default() -> Self {
        SearchConfig {
            agent_sample_size: 10,
            k: 10,
            beam_width: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SearchOutcome {
    pub results: Vec<DocId>,
    /// True when aggregation produced fewer than `k` distinct candidates and
    /// the list was padded from the user's local BM25 ranking.
    pub padded: bool,
}

/// The full search pipeline for one query: solicit beams from a uniform
/// sample of agents plus the user's own retriever, softmax-normalize each
/// set, sum equal docids, keep the top-k, then re-rank with the user's
/// relevance model.
pub fn run_search(
    nodes: &[NodeState],
    ctx: &FeatureContext<'_>,
    user_idx: usize,
    query: &str,
    cfg: &SearchConfig,
    seed: u64,
) -> Result<SearchOutcome> {
    if user_idx >= nodes.len() {
        return Err(Error::InvalidConfig(format!("no node at index {user_idx}")));
    }
    let user = &nodes[user_idx];

    let mut pool: Vec<usize> = (0..nodes.len()).filter(|&i| i != user_idx).collect();
    let mut sample_rng = derive_rng(seed, &[0xA6]);
    pool.shuffle(&mut sample_rng);
    pool.truncate(cfg.agent_sample_size);

    let mut beam_sets = Vec::with_capacity(pool.len() + 1);
    let mut own_rng = derive_rng(seed, &[0xB0]);
    let own = user.retriever.retrieve(query, cfg.beam_width, &mut own_rng);
    if !own.is_empty() {
        beam_sets.push(normalize_beams(&own));
    }
    for &agent_idx in &pool {
        let mut rng = derive_rng(seed, &[0xB1, agent_idx as u64]);
        let beams = nodes[agent_idx].retriever.retrieve(query, cfg.beam_width, &mut rng);
        if !beams.is_empty() {
            beam_sets.push(normalize_beams(&beams));
        }
    }

    let aggregated = aggregate_ensembles(&beam_sets);
    let mut candidates = top_k(&aggregated, cfg.k);
    let mut padded = false;
    if candidates.len() < cfg.k {
        padded = true;
        for doc in user.retriever.fallback_ranking(query) {
            if candidates.len() == cfg.k {
                break;
            }
            if !candidates.contains(&doc) {
                candidates.push(doc);
            }
        }
    }

    let features: Vec<_> = candidates
        .iter()
        .map(|doc| ctx.extract(&user.user_id, query, doc))
        .collect();
    let scores = rank(&user.rank_model, &features);
    // stable sort: candidates arrive in aggregation order, which equal model
    // scores must not scramble
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| scores[b].partial_cmp(&scores[a]).unwrap_or(std::cmp::Ordering::Equal));
    let results = order.into_iter().map(|i| candidates[i].clone()).collect();
    Ok(SearchOutcome { results, padded })
}

/// One experiment participant.
pub struct PreparedUser {
    pub user_id: UserId,
    pub dataset: PersonalDataset,
}

/// Shared experiment state: the eligible user population (>= 3 clicklogs,
/// 1:1:1 splits) over one corpus lexicon.
pub struct ExperimentData {
    pub doc_stats: DocStats,
    pub users: Vec<PreparedUser>,
}

impl ExperimentData {
    pub fn prepare(corpus: &ClickCorpus) -> ExperimentData {
        let doc_stats = DocStats::build(&corpus.documents);
        let users = corpus
            .personal_datasets(SplitPolicy::RatioOneOneOne)
            .into_iter()
            .map(|dataset| PreparedUser {
                user_id: dataset.user_id.clone(),
                dataset,
            })
            .collect();
        ExperimentData { doc_stats, users }
    }

    /// Feature context over the training splits of the given datasets — the
    /// clicklogs this view's owner possesses.
    pub fn context_over<'a>(
        &'a self,
        possessed: impl IntoIterator<Item = &'a PersonalDataset>,
    ) -> FeatureContext<'a> {
        FeatureContext::build(
            &self.doc_stats,
            possessed.into_iter().flat_map(|d| d.records_in(Split::Train)),
        )
    }
}

/// Labeled examples of a dataset's training split under a context.
pub fn train_examples_under(ctx: &FeatureContext<'_>, dataset: &PersonalDataset) -> Vec<LabeledExample> {
    dataset
        .records_in(Split::Train)
        .flat_map(|r| ctx.examples_for(r))
        .collect()
}

/// Eval cases for one split of a dataset under a context.
pub fn eval_cases_under(
    ctx: &FeatureContext<'_>,
    dataset: &PersonalDataset,
    split: Split,
) -> Vec<EvalCase> {
    dataset
        .records_in(split)
        .map(|r| EvalCase::from_record(ctx, r))
        .collect()
}

/// Mean reciprocal rank of a model over prepared eval cases.
pub fn evaluate_cases(model: &RankModel, cases: &[EvalCase]) -> f64 {
    if cases.is_empty() {
        return 0.0;
    }
    let total: f64 = cases
        .iter()
        .map(|case| {
            let scores = rank(model, &case.features);
            let ordered = crate::ranking::order_candidates(&case.candidates, &scores);
            let pos = ordered
                .iter()
                .position(|d| d == &case.clicked)
                .expect("eval cases contain their clicked doc");
            1.0 / (pos as f64 + 1.0)
        })
        .sum();
    total / cases.len() as f64
}

/// Samples `count` distinct other-user indices for a user, uniformly and
/// deterministically.
pub(crate) fn sample_neighbors(
    total_users: usize,
    user_idx: usize,
    count: usize,
    seed: u64,
) -> Vec<usize> {
    let mut pool: Vec<usize> = (0..total_users).filter(|&i| i != user_idx).collect();
    let mut rng = derive_rng(seed, &[0x9E16, user_idx as u64]);
    pool.shuffle(&mut rng);
    pool.truncate(count);
    pool
}

pub(crate) fn mean(values: &[f64]) -> f64 {
    if values.is_empty() {
        return 0.0;
    }
    values.iter().sum::<f64>() / values.len() as f64
}

pub(crate) fn std_dev(values: &[f64], mean: f64) -> f64 {
    if values.len() < 2 {
        return 0.0;
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (values.len() - 1) as f64;
    var.sqrt()
}
