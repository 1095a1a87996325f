//! Okapi BM25 ranking over document titles.
//!
//! Candidate windows are cut from a complete BM25 ranking of the corpus, so
//! the ranker here returns a full ordering, not a top-k. Ties are broken by
//! ascending `DocId` to keep every downstream artifact reproducible.

use std::collections::HashMap;

use crate::dataset::Document;
use crate::types::DocId;

/// Okapi BM25 parameters.
#[derive(Debug, Clone, Copy)]
pub struct Bm25Params {
    pub k1: f64,
    pub b: f64,
}

impl Default for Bm25Params {
    fn default() -> Self {
        Bm25Params { k1: 1.2, b: 0.75 }
    }
}

/// Lowercase alphanumeric word splitting. No stemming, no stopword removal.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|t| !t.is_empty())
        .map(|t| t.to_lowercase())
        .collect()
}

/// Inverted index over document titles.
pub struct TitleIndex {
    postings: HashMap<String, Vec<(u32, u32)>>, // term -> (doc index, term frequency)
    doc_len: Vec<u32>,
    avg_len: f64,
    doc_ids: Vec<DocId>,
    // rank of each doc's DocId in ascending order, for cheap tie-breaking
    tie_rank: Vec<u32>,
    id_to_idx: HashMap<DocId, usize>,
}

impl TitleIndex {
    pub fn build(corpus: &[Document]) -> TitleIndex {
        let mut postings: HashMap<String, Vec<(u32, u32)>> = HashMap::new();
        let mut doc_len = Vec::with_capacity(corpus.len());
        for (i, doc) in corpus.iter().enumerate() {
            let tokens = tokenize(&doc.title);
            doc_len.push(tokens.len() as u32);
            let mut tf: HashMap<String, u32> = HashMap::new();
            for t in tokens {
                *tf.entry(t).or_insert(0) += 1;
            }
            for (term, count) in tf {
                postings.entry(term).or_default().push((i as u32, count));
            }
        }
        let total: u64 = doc_len.iter().map(|&l| l as u64).sum();
        let avg_len = if corpus.is_empty() {
            0.0
        } else {
            total as f64 / corpus.len() as f64
        };
        let doc_ids: Vec<DocId> = corpus.iter().map(|d| d.doc_id.clone()).collect();
        let mut order: Vec<u32> = (0..corpus.len() as u32).collect();
        order.sort_by(|&a, &b| doc_ids[a as usize].cmp(&doc_ids[b as usize]));
        let mut tie_rank = vec![0u32; corpus.len()];
        for (rank, &idx) in order.iter().enumerate() {
            tie_rank[idx as usize] = rank as u32;
        }
        let id_to_idx = doc_ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
        TitleIndex {
            postings,
            doc_len,
            avg_len,
            doc_ids,
            tie_rank,
            id_to_idx,
        }
    }

    pub fn len(&self) -> usize {
        self.doc_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.doc_ids.is_empty()
    }

    pub fn doc_id(&self, idx: usize) -> &DocId {
        &self.doc_ids[idx]
    }

    pub fn index_of(&self, id: &DocId) -> Option<usize> {
        self.id_to_idx.get(id).copied()
    }

    fn idf(&self, df: usize) -> f64 {
        let n = self.doc_ids.len() as f64;
        ((n - df as f64 + 0.5) / (df as f64 + 0.5) + 1.0).ln()
    }

    /// BM25 scores for all documents, indexed by corpus position.
    ///
    /// Query terms are accumulated in query order so the sum is reproducible
    /// bit-for-bit.
    pub fn score_all(&self, query: &str, params: &Bm25Params) -> Vec<f64> {
        let mut scores = vec![0.0f64; self.doc_ids.len()];
        if self.avg_len == 0.0 {
            return scores;
        }
        for term in tokenize(query) {
            if let Some(posts) = self.postings.get(&term) {
                let idf = self.idf(posts.len());
                for &(doc, tf) in posts {
                    let dl = self.doc_len[doc as usize] as f64;
                    let tf = tf as f64;
                    let norm =
                        (tf * (params.k1 + 1.0)) / (tf + params.k1 * (1.0 - params.b + params.b * dl / self.avg_len));
                    scores[doc as usize] += idf * norm;
                }
            }
        }
        scores
    }

    /// BM25 score of the query against a single document's title.
    pub fn score_doc(&self, query: &str, doc_idx: usize, params: &Bm25Params) -> f64 {
        if self.avg_len == 0.0 {
            return 0.0;
        }
        let mut score = 0.0;
        for term in tokenize(query) {
            if let Some(posts) = self.postings.get(&term) {
                if let Ok(pos) = posts.binary_search_by_key(&(doc_idx as u32), |&(d, _)| d) {
                    let tf = posts[pos].1 as f64;
                    let dl = self.doc_len[doc_idx] as f64;
                    let idf = self.idf(posts.len());
                    let norm = (tf * (params.k1 + 1.0))
                        / (tf + params.k1 * (1.0 - params.b + params.b * dl / self.avg_len));
                    score += idf * norm;
                }
            }
        }
        score
    }

    /// Complete ranking of the corpus by descending score, ties by ascending
    /// `DocId`. Returns corpus positions.
    pub fn rank_indices(&self, query: &str, params: &Bm25Params) -> Vec<(usize, f64)> {
        let scores = self.score_all(query, params);
        let mut order: Vec<usize> = (0..scores.len()).collect();
        order.sort_by(|&a, &b| {
            scores[b]
                .partial_cmp(&scores[a])
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(self.tie_rank[a].cmp(&self.tie_rank[b]))
        });
        order.into_iter().map(|i| (i, scores[i])).collect()
    }
}

/// Ranks the whole corpus for a query. Convenience form that builds a
/// throwaway index; callers ranking many queries should build a
/// [`TitleIndex`] once.
pub fn bm25_rank(query: &str, corpus: &[Document], params: &Bm25Params) -> Vec<(DocId, f64)> {
    let index = TitleIndex::build(corpus);
    index
        .rank_indices(query, params)
        .into_iter()
        .map(|(i, s)| (index.doc_id(i).clone(), s))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn doc(id: &str, title: &str) -> Document {
        Document {
            doc_id: DocId::new(id),
            title: title.to_string(),
            body: String::new(),
        }
    }

    // Independent reference: direct evaluation of the BM25 formula per
    // document, no inverted index. Kept deliberately naive.
    fn reference_bm25(query: &str, corpus: &[Document], params: &Bm25Params) -> Vec<f64> {
        let n = corpus.len() as f64;
        let titles: Vec<Vec<String>> = corpus.iter().map(|d| tokenize(&d.title)).collect();
        let avg = titles.iter().map(|t| t.len() as f64).sum::<f64>() / n;
        corpus
            .iter()
            .enumerate()
            .map(|(i, _)| {
                if avg == 0.0 {
                    return 0.0;
                }
                let mut score = 0.0;
                for term in tokenize(query) {
                    let tf = titles[i].iter().filter(|t| **t == term).count() as f64;
                    if tf == 0.0 {
                        continue;
                    }
                    let df = titles.iter().filter(|t| t.contains(&term)).count() as f64;
                    let idf = ((n - df + 0.5) / (df + 0.5) + 1.0).ln();
                    let dl = titles[i].len() as f64;
                    score += idf * (tf * (params.k1 + 1.0))
                        / (tf + params.k1 * (1.0 - params.b + params.b * dl / avg));
                }
                score
            })
            .collect()
    }

    #[test]
    fn tokenize_lowercases_and_splits() {
        assert_eq!(
            tokenize("Batman: Signal-Images 2006"),
            vec!["batman", "signal", "images", "2006"]
        );
        assert!(tokenize("  --  ").is_empty());
    }

    #[test]
    fn matches_reference_implementation() {
        use rand::Rng;
        let mut rng = crate::rng::derive_rng(404, &[]);
        let vocab = [
            "batman", "signal", "images", "head", "hunters", "water", "park", "jersey", "sale",
            "texas", "ubuntu", "download", "linux", "jamie", "farr",
        ];
        let params = Bm25Params::default();
        for _ in 0..25 {
            let n_docs = rng.random_range(2..40);
            let corpus: Vec<Document> = (0..n_docs)
                .map(|i| {
                    let len = rng.random_range(1..8);
                    let title: Vec<&str> = (0..len)
                        .map(|_| vocab[rng.random_range(0..vocab.len())])
                        .collect();
                    doc(&format!("{i:04x}"), &title.join(" "))
                })
                .collect();
            let qlen = rng.random_range(1..5);
            let query: Vec<&str> = (0..qlen)
                .map(|_| vocab[rng.random_range(0..vocab.len())])
                .collect();
            let query = query.join(" ");

            let index = TitleIndex::build(&corpus);
            let got = index.score_all(&query, &params);
            let want = reference_bm25(&query, &corpus, &params);
            for (g, w) in got.iter().zip(want.iter()) {
                assert!((g - w).abs() < 1e-12, "query={query} got={g} want={w}");
            }
        }
    }

    #[test]
    fn exact_title_match_ranks_first() {
        let mut corpus: Vec<Document> = (0..99)
            .map(|i| doc(&format!("{i:04x}"), &format!("filler title number {i}")))
            .collect();
        corpus.push(doc("ffff", "dachshunds for sale in conroe texas"));
        let ranked = bm25_rank("dachshunds for sale in conroe texas", &corpus, &Bm25Params::default());
        assert_eq!(ranked[0].0, DocId::new("ffff"));
        assert!(ranked[0].1 > ranked[1].1);
    }

    #[test]
    fn no_matching_term_gives_all_zero_and_docid_order() {
        let corpus = vec![doc("b", "alpha"), doc("a", "beta"), doc("c", "gamma")];
        let ranked = bm25_rank("zzz qqq", &corpus, &Bm25Params::default());
        assert!(ranked.iter().all(|(_, s)| *s == 0.0));
        let ids: Vec<&str> = ranked.iter().map(|(d, _)| d.as_str()).collect();
        assert_eq!(ids, vec!["a", "b", "c"]);
    }

    #[test]
    fn empty_query_falls_back_to_docid_order() {
        let corpus = vec![doc("02", "two"), doc("01", "one")];
        let ranked = bm25_rank("", &corpus, &Bm25Params::default());
        assert_eq!(ranked[0].0, DocId::new("01"));
        assert_eq!(ranked[0].1, 0.0);
    }

    #[test]
    fn singleton_corpus_always_rank_one() {
        let corpus = vec![doc("01", "anything at all")];
        let ranked = bm25_rank("unrelated query", &corpus, &Bm25Params::default());
        assert_eq!(ranked.len(), 1);
        assert_eq!(ranked[0].0, DocId::new("01"));
    }

    #[test]
    fn ranking_is_a_permutation_of_the_corpus() {
        let corpus: Vec<Document> = (0..37)
            .map(|i| doc(&format!("{i:04x}"), &format!("title {} {}", i % 5, i % 3)))
            .collect();
        let ranked = bm25_rank("title 2", &corpus, &Bm25Params::default());
        assert_eq!(ranked.len(), corpus.len());
        let mut ids: Vec<&DocId> = ranked.iter().map(|(d, _)| d).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), corpus.len());
    }

    #[test]
    fn score_doc_agrees_with_score_all() {
        let corpus = vec![
            doc("01", "ubuntu download page"),
            doc("02", "linux ubuntu forum"),
            doc("03", "cooking recipes"),
        ];
        let index = TitleIndex::build(&corpus);
        let params = Bm25Params::default();
        let all = index.score_all("ubuntu download", &params);
        for i in 0..corpus.len() {
            assert_eq!(index.score_doc("ubuntu download", i, &params), all[i]);
        }
    }
}
