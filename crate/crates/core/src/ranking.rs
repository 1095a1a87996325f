//! Query-document features, a lightweight pointwise relevance model, and MRR.
//!
//! Each clicklog expands into exactly 10 labeled examples: the clicked
//! candidate is positive, the other nine negative. The scorer is a
//! single-layer logistic model trained by full-batch gradient descent on
//! class-weighted cross-entropy — convex, deterministic, and fast enough to
//! retrain inside a Shapley valuation loop.

use std::collections::HashMap;

use crate::dataset::{tokenize, Bm25Params, Document, QueryLogRecord, TitleIndex};
use crate::error::{Error, Result};
use crate::types::{DocId, UserId};

/// Fixed feature dimension.
pub const FEATURE_DIM: usize = 6;

/// Fixed-order query-document features:
/// BM25 of the title, query-term coverage of title and body, log global click
/// count, the record owner's historical click-through rate on the document,
/// and query length scaled by 10.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FeatureVector(pub [f64; FEATURE_DIM]);

/// One training example: features plus the clicked / shown-not-clicked label.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LabeledExample {
    pub features: FeatureVector,
    pub label: bool,
}

/// Pointwise scoring function mapping a feature vector to [0, 1].
#[derive(Debug, Clone, PartialEq)]
pub struct RankModel {
    pub weights: [f64; FEATURE_DIM],
    pub bias: f64,
}

impl RankModel {
    /// Zero-initialized model; scores everything 0.5.
    pub fn zeros() -> RankModel {
        RankModel {
            weights: [0.0; FEATURE_DIM],
            bias: 0.0,
        }
    }

    pub fn score(&self, x: &FeatureVector) -> f64 {
        let mut z = self.bias;
        for (w, v) in self.weights.iter().zip(x.0.iter()) {
            z += w * v;
        }
        sigmoid(z)
    }
}

fn sigmoid(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Training hyperparameters. The learning rate is the initial step; each
/// epoch deterministically halves it until the convex loss does not increase,
/// which keeps the loss non-increasing per epoch.
#[derive(Debug, Clone, Copy)]
pub struct TrainParams {
    pub epochs: usize,
    pub learning_rate: f64,
    pub positive_weight: f64,
}

impl Default for TrainParams {
    fn default() -> Self {
        TrainParams {
            epochs: 100,
            learning_rate: 0.1,
            // 1 positive to 9 negatives per clicklog
            positive_weight: 9.0,
        }
    }
}

fn weighted_loss(model: &RankModel, parts: &[&[LabeledExample]], pos_w: f64) -> f64 {
    let mut loss = 0.0;
    let mut total_w = 0.0;
    for part in parts {
        for ex in *part {
            let p = model.score(&ex.features).clamp(1e-12, 1.0 - 1e-12);
            let w = if ex.label { pos_w } else { 1.0 };
            loss -= w * if ex.label { p.ln() } else { (1.0 - p).ln() };
            total_w += w;
        }
    }
    loss / total_w
}

/// Trains over concatenated example slices without copying them. Errors on an
/// empty set or when all labels are identical.
pub fn train_parts(parts: &[&[LabeledExample]], params: &TrainParams) -> Result<RankModel> {
    let total: usize = parts.iter().map(|p| p.len()).sum();
    if total == 0 {
        return Err(Error::EmptyTrainingSet);
    }
    let positives: usize = parts
        .iter()
        .flat_map(|p| p.iter())
        .filter(|e| e.label)
        .count();
    if positives == 0 || positives == total {
        return Err(Error::DegenerateLabels);
    }

    let pos_w = params.positive_weight;
    let mut model = RankModel::zeros();
    let mut loss = weighted_loss(&model, parts, pos_w);
    for _ in 0..params.epochs {
        // full-batch gradient of the weighted cross-entropy
        let mut grad_w = [0.0f64; FEATURE_DIM];
        let mut grad_b = 0.0f64;
        let mut total_w = 0.0f64;
        for part in parts {
            for ex in *part {
                let p = model.score(&ex.features);
                let y = if ex.label { 1.0 } else { 0.0 };
                let w = if ex.label { pos_w } else { 1.0 };
                let err = w * (p - y);
                for (g, v) in grad_w.iter_mut().zip(ex.features.0.iter()) {
                    *g += err * v;
                }
                grad_b += err;
                total_w += w;
            }
        }
        for g in grad_w.iter_mut() {
            *g /= total_w;
        }
        grad_b /= total_w;

        // backtracking keeps the per-epoch loss non-increasing
        let mut step = params.learning_rate;
        let mut accepted = false;
        for _ in 0..40 {
            let mut candidate = model.clone();
            for (w, g) in candidate.weights.iter_mut().zip(grad_w.iter()) {
                *w -= step * g;
            }
            candidate.bias -= step * grad_b;
            let candidate_loss = weighted_loss(&candidate, parts, pos_w);
            if candidate_loss <= loss + 1e-12 {
                model = candidate;
                loss = candidate_loss;
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break; // gradient no longer improves the loss: converged
        }
    }
    Ok(model)
}

/// Trains on a single contiguous example slice.
pub fn train(examples: &[LabeledExample], params: &TrainParams) -> Result<RankModel> {
    train_parts(&[examples], params)
}

/// Scores each candidate feature vector; one score in [0, 1] per candidate.
pub fn rank(model: &RankModel, candidates: &[FeatureVector]) -> Vec<f64> {
    candidates.iter().map(|x| model.score(x)).collect()
}

/// Orders candidate docids by descending score, ties by ascending docid.
pub fn order_candidates(candidates: &[DocId], scores: &[f64]) -> Vec<DocId> {
    let mut order: Vec<usize> = (0..candidates.len()).collect();
    order.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| candidates[a].cmp(&candidates[b]))
    });
    order.into_iter().map(|i| candidates[i].clone()).collect()
}

/// Mean reciprocal rank of the clicked document over result lists. Errors if
/// a clicked document is missing from its list.
pub fn mrr(rankings: &[(Vec<DocId>, DocId)]) -> Result<f64> {
    if rankings.is_empty() {
        return Ok(0.0);
    }
    let mut total = 0.0;
    for (ranked, clicked) in rankings {
        let pos = ranked
            .iter()
            .position(|d| d == clicked)
            .ok_or(Error::ClickedNotInList)?;
        total += 1.0 / (pos as f64 + 1.0);
    }
    Ok(total / rankings.len() as f64)
}

/// Lexical statistics of the document corpus: the BM25 index plus per-doc
/// token sets. Built once and shared by every feature context over the same
/// corpus.
pub struct DocStats {
    index: TitleIndex,
    params: Bm25Params,
    body_tokens: Vec<Vec<String>>,
    title_token_sets: Vec<Vec<String>>,
}

impl DocStats {
    pub fn build(documents: &[Document]) -> DocStats {
        let index = TitleIndex::build(documents);
        let mut title_token_sets = Vec::with_capacity(documents.len());
        let mut body_tokens = Vec::with_capacity(documents.len());
        for d in documents {
            let mut t = tokenize(&d.title);
            t.sort();
            t.dedup();
            title_token_sets.push(t);
            let mut b = tokenize(&d.body);
            b.sort();
            b.dedup();
            body_tokens.push(b);
        }
        DocStats {
            index,
            params: Bm25Params::default(),
            body_tokens,
            title_token_sets,
        }
    }
}

/// Clicklog-derived statistics plus the corpus lexicon: everything feature
/// extraction needs.
///
/// A context is built from the clicklogs a node actually possesses — its own
/// history plus whatever datasets it has incorporated. Popularity and CTR
/// features therefore reflect that node's view of the network, not an
/// omniscient aggregate.
pub struct FeatureContext<'a> {
    docs: &'a DocStats,
    global_clicks: HashMap<DocId, u64>,
    user_doc_stats: HashMap<(UserId, DocId), (u32, u32)>, // (clicks, impressions)
}

impl<'a> FeatureContext<'a> {
    /// Builds click statistics from the given history over a shared corpus
    /// lexicon.
    pub fn build(
        docs: &'a DocStats,
        history: impl IntoIterator<Item = &'a QueryLogRecord>,
    ) -> FeatureContext<'a> {
        let mut global_clicks: HashMap<DocId, u64> = HashMap::new();
        let mut user_doc_stats: HashMap<(UserId, DocId), (u32, u32)> = HashMap::new();
        for record in history {
            *global_clicks.entry(record.clicked_doc.clone()).or_insert(0) += 1;
            for cand in &record.candidates {
                let entry = user_doc_stats
                    .entry((record.user_id.clone(), cand.clone()))
                    .or_insert((0, 0));
                entry.1 += 1;
                if *cand == record.clicked_doc {
                    entry.0 += 1;
                }
            }
        }
        FeatureContext {
            docs,
            global_clicks,
            user_doc_stats,
        }
    }

    /// Extracts the 6 features for a (query, document) pair in the context of
    /// `user`'s history. Unknown documents get zero lexical features; docs
    /// never clicked get zero popularity features.
    pub fn extract(&self, user: &UserId, query: &str, doc: &DocId) -> FeatureVector {
        let qtokens = tokenize(query);
        let (bm25, title_frac, body_frac) = match self.docs.index.index_of(doc) {
            Some(idx) => {
                let bm25 = self.docs.index.score_doc(query, idx, &self.docs.params);
                let in_title = qtokens
                    .iter()
                    .filter(|t| self.docs.title_token_sets[idx].binary_search(t).is_ok())
                    .count();
                let in_body = qtokens
                    .iter()
                    .filter(|t| self.docs.body_tokens[idx].binary_search(t).is_ok())
                    .count();
                let denom = qtokens.len().max(1) as f64;
                (bm25, in_title as f64 / denom, in_body as f64 / denom)
            }
            None => (0.0, 0.0, 0.0),
        };
        let clicks = self.global_clicks.get(doc).copied().unwrap_or(0);
        let ctr = match self.user_doc_stats.get(&(user.clone(), doc.clone())) {
            Some(&(c, i)) if i > 0 => c as f64 / i as f64,
            _ => 0.0,
        };
        FeatureVector([
            bm25,
            title_frac,
            body_frac,
            (1.0 + clicks as f64).ln(),
            ctr,
            qtokens.len() as f64 / 10.0,
        ])
    }

    /// Expands a clicklog into its 10 labeled examples.
    pub fn examples_for(&self, record: &QueryLogRecord) -> Vec<LabeledExample> {
        record
            .candidates
            .iter()
            .map(|cand| LabeledExample {
                features: self.extract(&record.user_id, &record.query, cand),
                label: *cand == record.clicked_doc,
            })
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{bm25_rank, Document};
    use crate::rng::derive_rng;
    use crate::types::Timestamp;
    use rand::Rng;

    fn fv(values: [f64; FEATURE_DIM]) -> FeatureVector {
        FeatureVector(values)
    }

    fn separable_set() -> Vec<LabeledExample> {
        // positives have feature 1 set, negatives do not
        let mut out = Vec::new();
        for i in 0..4 {
            out.push(LabeledExample {
                features: fv([0.0, 1.0, 0.0, 0.0, 0.0, 0.1 * i as f64]),
                label: true,
            });
            out.push(LabeledExample {
                features: fv([0.0, 0.0, 0.0, 0.0, 0.0, 0.1 * i as f64]),
                label: false,
            });
        }
        out
    }

    #[test]
    fn zero_model_scores_half() {
        let model = RankModel::zeros();
        // sigmoid(0) = 0.5 analytically
        assert_eq!(model.score(&fv([3.0, -2.0, 0.5, 0.0, 1.0, 0.9])), 0.5);
    }

    #[test]
    fn scores_stay_in_unit_interval() {
        let model = RankModel {
            weights: [50.0, -80.0, 3.0, 0.1, -7.0, 2.0],
            bias: -5.0,
        };
        let mut rng = derive_rng(11, &[]);
        for _ in 0..200 {
            let x = fv(std::array::from_fn(|_| rng.random_range(-100.0..100.0)));
            let s = model.score(&x);
            assert!((0.0..=1.0).contains(&s), "score {s}");
        }
    }

    #[test]
    fn identical_features_identical_scores() {
        let model = RankModel {
            weights: [1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
            bias: 0.5,
        };
        let x = fv([0.1, 0.2, 0.3, 0.4, 0.5, 0.6]);
        assert_eq!(model.score(&x), model.score(&x));
    }

    #[test]
    fn separable_set_reaches_perfect_mrr() {
        let examples = separable_set();
        let model = train(&examples, &TrainParams::default()).unwrap();
        // rank a 10-candidate list where only the clicked doc has the feature
        let clicked = DocId::new("09");
        let candidates: Vec<DocId> = (0..10).map(|i| DocId::new(format!("{i:02}"))).collect();
        let features: Vec<FeatureVector> = candidates
            .iter()
            .map(|c| {
                if *c == clicked {
                    fv([0.0, 1.0, 0.0, 0.0, 0.0, 0.0])
                } else {
                    fv([0.0, 0.0, 0.0, 0.0, 0.0, 0.0])
                }
            })
            .collect();
        let scores = rank(&model, &features);
        let ordered = order_candidates(&candidates, &scores);
        let value = mrr(&[(ordered, clicked)]).unwrap();
        assert_eq!(value, 1.0);
    }

    #[test]
    fn training_rejects_empty_and_degenerate_sets() {
        assert!(matches!(
            train(&[], &TrainParams::default()),
            Err(Error::EmptyTrainingSet)
        ));
        let all_positive: Vec<LabeledExample> = (0..5)
            .map(|_| LabeledExample {
                features: fv([1.0; FEATURE_DIM]),
                label: true,
            })
            .collect();
        assert!(matches!(
            train(&all_positive, &TrainParams::default()),
            Err(Error::DegenerateLabels)
        ));
    }

    #[test]
    fn training_is_bit_deterministic() {
        let examples = separable_set();
        let a = train(&examples, &TrainParams::default()).unwrap();
        let b = train(&examples, &TrainParams::default()).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn training_loss_non_increasing() {
        // record the loss trajectory by retraining with increasing epoch caps
        let examples = separable_set();
        let mut last = f64::INFINITY;
        for epochs in [1, 2, 5, 10, 50, 100] {
            let params = TrainParams {
                epochs,
                ..TrainParams::default()
            };
            let model = train(&examples, &params).unwrap();
            let loss = weighted_loss(&model, &[&examples], params.positive_weight);
            assert!(loss <= last + 1e-6, "epochs={epochs} loss={loss} last={last}");
            last = loss;
        }
    }

    #[test]
    fn duplicate_examples_keep_separability() {
        let mut examples = separable_set();
        examples.extend(separable_set());
        let model = train(&examples, &TrainParams::default()).unwrap();
        let hi = model.score(&fv([0.0, 1.0, 0.0, 0.0, 0.0, 0.0]));
        let lo = model.score(&fv([0.0, 0.0, 0.0, 0.0, 0.0, 0.0]));
        assert!(hi > lo, "positives must still outrank negatives: {hi} vs {lo}");
    }

    #[test]
    fn ordering_invariant_under_affine_rescale() {
        let candidates: Vec<DocId> = (0..6).map(|i| DocId::new(format!("{i:02}"))).collect();
        let scores = vec![0.9, 0.2, 0.5, 0.5, 0.01, 0.7];
        let rescaled: Vec<f64> = scores.iter().map(|s| 0.3 * s + 0.1).collect();
        assert_eq!(
            order_candidates(&candidates, &scores),
            order_candidates(&candidates, &rescaled)
        );
    }

    #[test]
    fn mrr_basics() {
        let list: Vec<DocId> = (0..10).map(|i| DocId::new(format!("{i:02}"))).collect();
        // clicked always first
        let first = mrr(&[(list.clone(), list[0].clone())]).unwrap();
        assert_eq!(first, 1.0);
        // clicked always last of 10
        let last = mrr(&[(list.clone(), list[9].clone())]).unwrap();
        assert!((last - 0.1).abs() < 1e-12);
        // clicked absent
        assert!(mrr(&[(list, DocId::new("zz"))]).is_err());
    }

    #[test]
    fn mrr_uniform_random_position_baselines() {
        // two random-ranking baselines for 10-slot lists: the mean reciprocal
        // rank converges to H_10/10, while the reciprocal of the mean rank
        // (the commonly quoted figure) converges to 1/5.5
        let list: Vec<DocId> = (0..10).map(|i| DocId::new(format!("{i:02}"))).collect();
        let mut rng = derive_rng(5, &[]);
        let positions: Vec<usize> = (0..20_000).map(|_| rng.random_range(0..10)).collect();
        let rankings: Vec<(Vec<DocId>, DocId)> = positions
            .iter()
            .map(|&pos| (list.clone(), list[pos].clone()))
            .collect();
        let value = mrr(&rankings).unwrap();
        let harmonic_10: f64 = (1..=10).map(|k| 1.0 / k as f64).sum();
        assert!((value - harmonic_10 / 10.0).abs() < 0.01, "mrr={value}");
        assert!((0.1..=1.0).contains(&value));

        let mean_rank =
            positions.iter().map(|&p| (p + 1) as f64).sum::<f64>() / positions.len() as f64;
        assert!((1.0 / mean_rank - 1.0 / 5.5).abs() < 0.01, "1/mean_rank={}", 1.0 / mean_rank);
    }

    fn tiny_docs() -> Vec<Document> {
        vec![
            Document {
                doc_id: DocId::new("aaa0"),
                title: "ubuntu download page".into(),
                body: "download ubuntu desktop iso".into(),
            },
            Document {
                doc_id: DocId::new("bbb0"),
                title: "water park guide".into(),
                body: "family slides".into(),
            },
        ]
    }

    #[test]
    fn full_title_overlap_feature_is_one() {
        let docs = DocStats::build(&tiny_docs());
        let ctx = FeatureContext::build(&docs, []);
        let x = ctx.extract(&UserId::new("u"), "ubuntu download page", &DocId::new("aaa0"));
        assert_eq!(x.0[1], 1.0);
    }

    #[test]
    fn cold_start_popularity_features_zero() {
        let docs = DocStats::build(&tiny_docs());
        let ctx = FeatureContext::build(&docs, []);
        let x = ctx.extract(&UserId::new("u"), "water park", &DocId::new("bbb0"));
        assert_eq!(x.0[3], 0.0);
        assert_eq!(x.0[4], 0.0);
    }

    #[test]
    fn bm25_feature_matches_bm25_rank_score() {
        // cross-module consistency: feature 1 equals the bm25_rank score for
        // the same (query, doc) pair
        let documents = tiny_docs();
        let docs = DocStats::build(&documents);
        let ctx = FeatureContext::build(&docs, []);
        let query = "ubuntu download";
        let ranked = bm25_rank(query, &documents, &Bm25Params::default());
        for (doc, score) in ranked {
            let x = ctx.extract(&UserId::new("u"), query, &doc);
            assert_eq!(x.0[0], score, "doc {doc}");
        }
    }

    #[test]
    fn history_drives_popularity_and_ctr() {
        let docs = DocStats::build(&tiny_docs());
        let user = UserId::new("u1");
        let mut candidates: Vec<DocId> = (0..9).map(|i| DocId::new(format!("x{i:03}"))).collect();
        candidates.push(DocId::new("aaa0"));
        let record = QueryLogRecord {
            user_id: user.clone(),
            time: Timestamp(0),
            query: "ubuntu".into(),
            clicked_doc: DocId::new("aaa0"),
            candidates,
        };
        let ctx = FeatureContext::build(&docs, [&record]);
        let x = ctx.extract(&user, "ubuntu", &DocId::new("aaa0"));
        assert!((x.0[3] - (2.0f64).ln()).abs() < 1e-12);
        assert_eq!(x.0[4], 1.0);
        // another user has no history on this doc
        let y = ctx.extract(&UserId::new("u2"), "ubuntu", &DocId::new("aaa0"));
        assert_eq!(y.0[4], 0.0);
    }
}
