//! Retriever interface and ensemble beam aggregation.
//!
//! Each agent answers a query with a fixed-size set of `(docid, score)` beams.
//! The querying side softmax-normalizes every agent's beam set, sums scores of
//! equal docids across agents, and keeps the top-k. Neural sequence models are
//! out of scope; two stand-in retrievers realize the same interface so the
//! aggregation math can be exercised and retriever quality swept.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::dataset::{Bm25Params, Document, TitleIndex};
use crate::types::{DocId, Timestamp, UserId};

/// A `(docid, score)` retrieval candidate. Scores are logits before
/// normalization and probabilities after.
#[derive(Debug, Clone, PartialEq)]
pub struct Beam {
    pub doc_id: DocId,
    pub score: f64,
}

/// Which stand-in backs an agent's retriever.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RetrieverKind {
    Bm25Standin,
    MemorizingStandin,
}

#[derive(Debug, Clone)]
pub struct RetrieverProfile {
    pub agent_id: UserId,
    pub beam_width: usize,
    pub kind: RetrieverKind,
}

/// An agent's local retriever.
///
/// `Bm25` scores its local corpus titles and returns positive-scoring beams.
/// `Memorizing` remembers (query -> clicked docid) pairs from its training
/// split; on a known query it returns the memorized docid with probability
/// `recall`, padded with corpus distractors, and falls back to BM25 on
/// unknown queries.
pub enum Retriever {
    Bm25 {
        index: TitleIndex,
        params: Bm25Params,
    },
    Memorizing {
        memory: BTreeMap<String, DocId>,
        recall: f64,
        index: TitleIndex,
        params: Bm25Params,
    },
}

impl Retriever {
    pub fn bm25(corpus: &[Document]) -> Retriever {
        Retriever::Bm25 {
            index: TitleIndex::build(corpus),
            params: Bm25Params::default(),
        }
    }

    /// Builds a memorizing retriever from (query, clicked) training pairs.
    /// Later pairs win on duplicate queries.
    pub fn memorizing<'a>(
        pairs: impl IntoIterator<Item = (&'a str, &'a DocId, Timestamp)>,
        recall: f64,
        corpus: &[Document],
    ) -> Retriever {
        let mut latest: BTreeMap<String, (Timestamp, DocId)> = BTreeMap::new();
        for (query, doc, time) in pairs {
            match latest.get(query) {
                Some((t, _)) if *t > time => {}
                _ => {
                    latest.insert(query.to_string(), (time, doc.clone()));
                }
            }
        }
        Retriever::Memorizing {
            memory: latest.into_iter().map(|(q, (_, d))| (q, d)).collect(),
            recall,
            index: TitleIndex::build(corpus),
            params: Bm25Params::default(),
        }
    }

    pub fn kind(&self) -> RetrieverKind {
        match self {
            Retriever::Bm25 { .. } => RetrieverKind::Bm25Standin,
            Retriever::Memorizing { .. } => RetrieverKind::MemorizingStandin,
        }
    }

    /// Complete BM25 ranking of the agent's local corpus; used to pad sparse
    /// aggregation results.
    pub fn fallback_ranking(&self, query: &str) -> Vec<DocId> {
        let (index, params) = match self {
            Retriever::Bm25 { index, params } => (index, params),
            Retriever::Memorizing { index, params, .. } => (index, params),
        };
        index
            .rank_indices(query, params)
            .into_iter()
            .map(|(i, _)| index.doc_id(i).clone())
            .collect()
    }

    /// Answers a query with at most `beam_width` beams, sorted by descending
    /// score. May be empty (nothing matched, or a recall miss on a memorized
    /// query with no BM25 fallback hits).
    pub fn retrieve(&self, query: &str, beam_width: usize, rng: &mut impl Rng) -> Vec<Beam> {
        match self {
            Retriever::Bm25 { index, params } => bm25_beams(index, params, query, beam_width),
            Retriever::Memorizing {
                memory,
                recall,
                index,
                params,
            } => {
                let Some(memorized) = memory.get(query) else {
                    return bm25_beams(index, params, query, beam_width);
                };
                let hit = rng.random_bool(*recall);
                let mut beams = Vec::with_capacity(beam_width);
                if hit {
                    beams.push(Beam {
                        doc_id: memorized.clone(),
                        score: 4.0,
                    });
                }
                // pad with distractors sampled from the local corpus
                let mut pool: Vec<usize> = (0..index.len())
                    .filter(|&i| index.doc_id(i) != memorized)
                    .collect();
                while beams.len() < beam_width && !pool.is_empty() {
                    let pick = *pool
                        .choose(rng)
                        .expect("pool checked non-empty");
                    pool.retain(|&i| i != pick);
                    beams.push(Beam {
                        doc_id: index.doc_id(pick).clone(),
                        score: 1.0 - 0.05 * (beams.len() as f64),
                    });
                }
                beams
            }
        }
    }
}

fn bm25_beams(index: &TitleIndex, params: &Bm25Params, query: &str, beam_width: usize) -> Vec<Beam> {
    index
        .rank_indices(query, params)
        .into_iter()
        .filter(|(_, s)| *s > 0.0)
        .take(beam_width)
        .map(|(i, s)| Beam {
            doc_id: index.doc_id(i).clone(),
            score: s,
        })
        .collect()
}

/// Softmax-normalizes one agent's beam scores in place-order. Uses the
/// max-subtraction form; an empty list stays empty.
pub fn normalize_beams(beams: &[Beam]) -> Vec<Beam> {
    if beams.is_empty() {
        return Vec::new();
    }
    let max = beams.iter().map(|b| b.score).fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = beams.iter().map(|b| (b.score - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    beams
        .iter()
        .zip(exps)
        .map(|(b, e)| Beam {
            doc_id: b.doc_id.clone(),
            score: e / total,
        })
        .collect()
}

/// Aggregates normalized beam sets from multiple agents: scores of equal
/// docids are summed. Sorted by descending score, ties by ascending docid.
pub fn aggregate_ensembles(beam_sets: &[Vec<Beam>]) -> Vec<(DocId, f64)> {
    let mut sums: BTreeMap<&DocId, f64> = BTreeMap::new();
    for set in beam_sets {
        for beam in set {
            *sums.entry(&beam.doc_id).or_insert(0.0) += beam.score;
        }
    }
    let mut out: Vec<(DocId, f64)> = sums.into_iter().map(|(d, s)| (d.clone(), s)).collect();
    out.sort_by(|a, b| {
        b.1.partial_cmp(&a.1)
            .unwrap_or(std::cmp::Ordering::Equal)
            .then_with(|| a.0.cmp(&b.0))
    });
    out
}

/// First `min(k, len)` docids of an aggregated ranking.
pub fn top_k(aggregated: &[(DocId, f64)], k: usize) -> Vec<DocId> {
    aggregated.iter().take(k).map(|(d, _)| d.clone()).collect()
}
