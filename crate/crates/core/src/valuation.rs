//! Data Shapley valuation of offered datasets and the label-flip attack.
//!
//! The value `V(S)` of a coalition is the ranking quality (MRR on the user's
//! validation clicks) of a model trained on the user's own training split
//! plus the coalition's datasets. Exact enumeration handles up to 12 datasets;
//! the Monte Carlo sampler credits each permutation's marginal gain to the
//! newly added dataset and retrains fully at every step, with no truncation.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng;

use crate::dataset::{PersonalDataset, Split};
use crate::error::{Error, Result};
use crate::par::indexed_map;
use crate::ranking::{
    mrr, order_candidates, rank, train_parts, DocStats, FeatureContext, FeatureVector,
    LabeledExample, RankModel, TrainParams,
};
use crate::rng::derive_rng;
use crate::types::DocId;

/// Subset enumeration limit for [`shapley_exact`].
pub const MAX_EXACT_PLAYERS: usize = 12;

/// A coalition game over `n` datasets: `value` reports model performance when
/// training on the included subset.
pub trait CoalitionValue: Sync {
    fn players(&self) -> usize;
    /// `included[i]` selects dataset `i`. Must be a pure function.
    fn value(&self, included: &[bool]) -> f64;
}

/// Per-dataset Shapley values with Monte Carlo error estimates.
#[derive(Debug, Clone)]
pub struct ShapleyEstimate {
    pub phi: Vec<f64>,
    /// 0 for the exact method.
    pub permutations_used: usize,
    /// All zeros for the exact method.
    pub std_error: Vec<f64>,
}

fn binomial(n: usize, k: usize) -> f64 {
    let mut out = 1.0f64;
    for i in 0..k.min(n - k) {
        out = out * (n - i) as f64 / (i + 1) as f64;
    }
    out
}

fn flags_of(mask: u32, n: usize) -> Vec<bool> {
    (0..n).map(|i| mask & (1 << i) != 0).collect()
}

/// Exact Shapley values by full subset enumeration. The standard 1/n
/// normalization is applied, so efficiency holds exactly:
/// the values sum to `V(all) - V(none)`.
pub fn shapley_exact(game: &dyn CoalitionValue) -> Result<ShapleyEstimate> {
    let n = game.players();
    if n == 0 {
        return Err(Error::InvalidConfig("no datasets to value".into()));
    }
    if n > MAX_EXACT_PLAYERS {
        return Err(Error::TooManyDatasets {
            n,
            max: MAX_EXACT_PLAYERS,
        });
    }
    // evaluate every coalition once, in parallel, collected by mask
    let table = indexed_map(1usize << n, |mask| game.value(&flags_of(mask as u32, n)));
    let mut phi = vec![0.0f64; n];
    for (i, phi_i) in phi.iter_mut().enumerate() {
        let others: Vec<usize> = (0..n).filter(|&j| j != i).collect();
        for sub in 0..(1u32 << others.len()) {
            let mut mask = 0u32;
            let mut size = 0usize;
            for (bit, &j) in others.iter().enumerate() {
                if sub & (1 << bit) != 0 {
                    mask |= 1 << j;
                    size += 1;
                }
            }
            let with_i = mask | (1 << i);
            *phi_i += (table[with_i as usize] - table[mask as usize]) / binomial(n - 1, size);
        }
        *phi_i /= n as f64;
    }
    Ok(ShapleyEstimate {
        phi,
        permutations_used: 0,
        std_error: vec![0.0; n],
    })
}

/// Monte Carlo Shapley: for each sampled permutation, datasets are added in
/// order and the marginal gain is credited to the newly added dataset.
/// Deterministic given the seed, independent of evaluation order.
pub fn shapley_monte_carlo(
    game: &dyn CoalitionValue,
    permutations: usize,
    seed: u64,
) -> Result<ShapleyEstimate> {
    let n = game.players();
    if n == 0 {
        return Err(Error::InvalidConfig("no datasets to value".into()));
    }
    if permutations == 0 {
        return Err(Error::InvalidConfig("need at least one permutation".into()));
    }
    let empty_value = game.value(&vec![false; n]);
    // one independent marginal vector per permutation, collected by index
    let marginals: Vec<Vec<f64>> = indexed_map(permutations, |p| {
        let mut rng = derive_rng(seed, &[0x5A_u64, p as u64]);
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut rng);
        let mut included = vec![false; n];
        let mut prev = empty_value;
        let mut out = vec![0.0f64; n];
        for &next in &order {
            included[next] = true;
            let cur = game.value(&included);
            out[next] = cur - prev;
            prev = cur;
        }
        out
    });
    let mut phi = vec![0.0f64; n];
    for m in &marginals {
        for (acc, v) in phi.iter_mut().zip(m.iter()) {
            *acc += v;
        }
    }
    for v in phi.iter_mut() {
        *v /= permutations as f64;
    }
    let std_error = (0..n)
        .map(|i| {
            if permutations < 2 {
                return 0.0;
            }
            let mean = phi[i];
            let var: f64 = marginals
                .iter()
                .map(|m| (m[i] - mean) * (m[i] - mean))
                .sum::<f64>()
                / (permutations - 1) as f64;
            (var / permutations as f64).sqrt()
        })
        .collect();
    Ok(ShapleyEstimate {
        phi,
        permutations_used: permutations,
        std_error,
    })
}

/// The acceptance policy: keep exactly the datasets with positive value.
pub fn accept_datasets(estimate: &ShapleyEstimate) -> BTreeSet<usize> {
    estimate
        .phi
        .iter()
        .enumerate()
        .filter(|(_, phi)| **phi > 0.0)
        .map(|(i, _)| i)
        .collect()
}

/// Label-flipping poisoning: every record's click is moved to a uniformly
/// random co-displayed candidate. Record count and candidate lists are
/// unchanged, so each record still carries exactly one positive label.
pub fn poison_label_flip(dataset: &PersonalDataset, seed: u64) -> PersonalDataset {
    let mut rng = derive_rng(seed, &[0xF11]);
    let mut out = dataset.clone();
    for record in out.records.iter_mut() {
        let clicked_pos = record
            .candidates
            .iter()
            .position(|c| c == &record.clicked_doc)
            .expect("record invariant: clicked is among candidates");
        let mut pick = rng.random_range(0..record.candidates.len() - 1);
        if pick >= clicked_pos {
            pick += 1;
        }
        record.clicked_doc = record.candidates[pick].clone();
    }
    out
}

/// One validation clicklog prepared for fast repeated evaluation.
#[derive(Debug, Clone)]
pub struct EvalCase {
    pub candidates: Vec<DocId>,
    pub features: Vec<FeatureVector>,
    pub clicked: DocId,
}

impl EvalCase {
    pub fn from_record(ctx: &FeatureContext<'_>, record: &crate::dataset::QueryLogRecord) -> EvalCase {
        EvalCase {
            candidates: record.candidates.clone(),
            features: record
                .candidates
                .iter()
                .map(|c| ctx.extract(&record.user_id, &record.query, c))
                .collect(),
            clicked: record.clicked_doc.clone(),
        }
    }
}

// A clicklog prepared for coalition evaluation. Every feature except global
// popularity is independent of which datasets join the coalition (CTR is
// per-owner, and an owner's records enter or leave as one unit), so those are
// frozen at build time and only the popularity feature is filled in per
// coalition from the merged click counts.
#[derive(Debug, Clone)]
struct PreppedRecord {
    examples: Vec<LabeledExample>,
    cand_docs: Vec<DocId>,
}

#[derive(Debug, Clone)]
struct PreppedEval {
    candidates: Vec<DocId>,
    features: Vec<FeatureVector>,
    clicked: DocId,
}

const POPULARITY_FEATURE: usize = 3;

fn clicks_of<'a>(records: impl Iterator<Item = &'a crate::dataset::QueryLogRecord>) -> BTreeMap<DocId, u64> {
    let mut counts = BTreeMap::new();
    for r in records {
        *counts.entry(r.clicked_doc.clone()).or_insert(0) += 1;
    }
    counts
}

/// The concrete valuation task: `V(S)` is the MRR on the user's validation
/// clicks of the ranker the user would own after incorporating exactly the
/// coalition `S` — trained on `base_train ∪ S` with feature statistics
/// rebuilt from that same data. Valuation trains with a reduced epoch budget:
/// it ranks datasets, it does not ship the final model.
pub struct DatasetValuation {
    base: Vec<PreppedRecord>,
    offered: Vec<Vec<PreppedRecord>>,
    eval: Vec<PreppedEval>,
    base_clicks: BTreeMap<DocId, u64>,
    offered_clicks: Vec<BTreeMap<DocId, u64>>,
    pub train_params: TrainParams,
}

impl DatasetValuation {
    /// Default valuation training budget.
    pub fn valuation_params() -> TrainParams {
        TrainParams {
            epochs: 20,
            ..TrainParams::default()
        }
    }

    /// Prepares a valuation over the user's own dataset and the offered ones.
    /// The evaluation set is the user's validation split.
    pub fn new(
        docs: &DocStats,
        base: &PersonalDataset,
        offered: &[&PersonalDataset],
        train_params: TrainParams,
    ) -> DatasetValuation {
        // static features come from each record owner's own possession
        let prep_dataset = |ds: &PersonalDataset| -> Vec<PreppedRecord> {
            let ctx = FeatureContext::build(docs, ds.records_in(Split::Train));
            ds.records_in(Split::Train)
                .map(|r| PreppedRecord {
                    examples: ctx.examples_for(r),
                    cand_docs: r.candidates.clone(),
                })
                .collect()
        };
        let base_ctx = FeatureContext::build(docs, base.records_in(Split::Train));
        let eval = base
            .records_in(Split::Validation)
            .map(|r| PreppedEval {
                candidates: r.candidates.clone(),
                features: r
                    .candidates
                    .iter()
                    .map(|c| base_ctx.extract(&r.user_id, &r.query, c))
                    .collect(),
                clicked: r.clicked_doc.clone(),
            })
            .collect();
        DatasetValuation {
            base: prep_dataset(base),
            offered: offered.iter().map(|ds| prep_dataset(ds)).collect(),
            eval,
            base_clicks: clicks_of(base.records_in(Split::Train)),
            offered_clicks: offered
                .iter()
                .map(|ds| clicks_of(ds.records_in(Split::Train)))
                .collect(),
            train_params,
        }
    }
}

impl CoalitionValue for DatasetValuation {
    fn players(&self) -> usize {
        self.offered.len()
    }

    fn value(&self, included: &[bool]) -> f64 {
        if self.eval.is_empty() {
            return 0.0;
        }
        // merge click counts of the coalition's datasets
        let mut counts = self.base_clicks.clone();
        for (flag, clicks) in included.iter().zip(self.offered_clicks.iter()) {
            if *flag {
                for (doc, c) in clicks {
                    *counts.entry(doc.clone()).or_insert(0) += c;
                }
            }
        }
        let popularity =
            |doc: &DocId| (1.0 + counts.get(doc).copied().unwrap_or(0) as f64).ln();

        let mut examples: Vec<LabeledExample> = Vec::new();
        let parts = std::iter::once(&self.base).chain(
            included
                .iter()
                .zip(self.offered.iter())
                .filter(|(flag, _)| **flag)
                .map(|(_, recs)| recs),
        );
        for records in parts {
            for record in records {
                for (ex, doc) in record.examples.iter().zip(record.cand_docs.iter()) {
                    let mut ex = *ex;
                    ex.features.0[POPULARITY_FEATURE] = popularity(doc);
                    examples.push(ex);
                }
            }
        }
        // an untrainable coalition falls back to the uninformed model
        let model =
            train_parts(&[&examples], &self.train_params).unwrap_or_else(|_| RankModel::zeros());

        let rankings: Vec<(Vec<DocId>, DocId)> = self
            .eval
            .iter()
            .map(|case| {
                let features: Vec<FeatureVector> = case
                    .features
                    .iter()
                    .zip(case.candidates.iter())
                    .map(|(f, doc)| {
                        let mut f = *f;
                        f.0[POPULARITY_FEATURE] = popularity(doc);
                        f
                    })
                    .collect();
                let scores = rank(&model, &features);
                (
                    order_candidates(&case.candidates, &scores),
                    case.clicked.clone(),
                )
            })
            .collect();
        mrr(&rankings).expect("eval cases contain their clicked doc")
    }
}
