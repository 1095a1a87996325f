//! Seeded synthetic query-log generator.
//!
//! Produces a document corpus and raw AOL-style logs with the statistical
//! structure the experiments need: queries drawn from document titles, clicks
//! biased toward lexically matching and popular documents, per-user topic
//! affinities, and a sprinkle of duplicate and unclicked rows so the ingest
//! filters have work to do.

use rand::seq::{IndexedRandom, SliceRandom};
use rand::Rng;

use crate::dataset::bm25::{Bm25Params, TitleIndex};
use crate::dataset::parse::RawClick;
use crate::dataset::{candidate_window, tokenize, Document};
use crate::rng::{derive_rng, derive_seed};
use crate::types::{DocId, Timestamp, UserId};

#[derive(Debug, Clone)]
pub struct SyntheticConfig {
    pub users: usize,
    pub docs: usize,
    /// Distinct interest topics; fewer topics mean more cross-user overlap,
    /// so shared clicklogs transfer better.
    pub topics: usize,
    pub min_records_per_user: usize,
    pub max_records_per_user: usize,
    /// Probability that a row repeats an earlier (user, query) pair.
    pub duplicate_rate: f64,
    /// Probability that a row carries no clicked document.
    pub unclicked_rate: f64,
    /// Probability of an idiosyncratic click on a uniformly random candidate.
    pub whim_rate: f64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            users: 250,
            docs: 240,
            topics: 12,
            min_records_per_user: 200,
            max_records_per_user: 260,
            duplicate_rate: 0.02,
            unclicked_rate: 0.03,
            whim_rate: 0.18,
        }
    }
}

const TOPICS: &[&[&str]] = &[
    &["batman", "signal", "images", "comic", "gotham", "poster", "dark", "knight"],
    &["ubuntu", "download", "linux", "install", "desktop", "server", "release", "iso"],
    &["water", "park", "jersey", "inside", "slides", "family", "resort", "tickets"],
    &["dachshund", "puppies", "sale", "texas", "conroe", "breeder", "miniature", "dogs"],
    &["head", "hunters", "jazz", "album", "band", "herbie", "funk", "records"],
    &["recipe", "chicken", "soup", "easy", "dinner", "baked", "garlic", "pasta"],
    &["mortgage", "rates", "loan", "calculator", "refinance", "credit", "bank", "payment"],
    &["weather", "forecast", "radar", "storm", "hurricane", "tracking", "temperature", "local"],
    &["movie", "times", "theater", "showtimes", "review", "trailer", "cast", "release"],
    &["baseball", "scores", "league", "standings", "playoffs", "roster", "stats", "tickets"],
    &["garden", "plants", "flowers", "seeds", "perennial", "soil", "pruning", "shade"],
    &["laptop", "battery", "replacement", "charger", "screen", "repair", "memory", "cheap"],
];

const FILLER: &[&str] = &[
    "guide", "official", "site", "home", "page", "free", "online", "best", "new", "info",
];

struct SynthDoc {
    topic: usize,
    quality: f64,
}

fn doc_hex(i: usize, seed: u64) -> String {
    format!("{:012x}", derive_seed(seed, &[0xD0C, i as u64]) & 0xffff_ffff_ffff)
}

/// Generates the document corpus and raw log rows. Deterministic in
/// `(config, seed)`.
pub fn generate(cfg: &SyntheticConfig, seed: u64) -> (Vec<Document>, Vec<RawClick>) {
    let n_topics = cfg.topics.clamp(1, TOPICS.len());
    let mut docs = Vec::with_capacity(cfg.docs);
    let mut meta = Vec::with_capacity(cfg.docs);
    for i in 0..cfg.docs {
        let mut rng = derive_rng(seed, &[1, i as u64]);
        let topic = i % n_topics;
        let pool = TOPICS[topic];
        let quality: f64 = rng.random();
        let title_len = rng.random_range(3..=6.min(pool.len()));
        let mut picks: Vec<usize> = (0..pool.len()).collect();
        picks.shuffle(&mut rng);
        let mut words: Vec<&str> = picks[..title_len].iter().map(|&w| pool[w]).collect();
        if rng.random_bool(0.5) {
            words.push(FILLER.choose(&mut rng).unwrap());
        }
        let title = words.join(" ");
        let body_extra: Vec<&str> = (0..rng.random_range(4..12))
            .map(|_| {
                if rng.random_bool(0.7) {
                    *pool.choose(&mut rng).unwrap()
                } else {
                    *FILLER.choose(&mut rng).unwrap()
                }
            })
            .collect();
        let body = format!("{} {}", title, body_extra.join(" "));
        docs.push(Document {
            doc_id: DocId::new(doc_hex(i, seed)),
            title,
            body,
        });
        meta.push(SynthDoc { topic, quality });
    }

    let index = TitleIndex::build(&docs);
    let params = Bm25Params::default();
    let mut rows = Vec::new();

    for u in 0..cfg.users {
        let mut rng = derive_rng(seed, &[2, u as u64]);
        let user_id = UserId::new(format!("{}", 1_000_000 + u));
        // mild per-user flavor for each topic
        let affinity: Vec<f64> = (0..n_topics).map(|_| rng.random_range(0.0..0.3)).collect();
        let n_records = rng.random_range(cfg.min_records_per_user..=cfg.max_records_per_user);
        let base_time = 1_141_171_200 + (u as i64) * 13; // 2006-03-01 onwards
        let mut past: Vec<(String, DocId)> = Vec::new();

        for r in 0..n_records {
            let time = Timestamp(base_time + (r as i64) * 3_607);
            // occasionally re-issue an earlier query so the dedup filter fires
            if !past.is_empty() && rng.random_bool(cfg.duplicate_rate) {
                let (q, d) = past.choose(&mut rng).unwrap().clone();
                rows.push(RawClick {
                    user_id: user_id.clone(),
                    time,
                    query: q,
                    clicked_doc: Some(d),
                });
                continue;
            }
            // every query draws its own topic: a user's history covers only
            // part of the topic space, shared histories cover it all
            let topic = skewed_topic(n_topics, &mut rng);
            let topic_docs: Vec<usize> = (0..docs.len()).filter(|&i| meta[i].topic == topic).collect();
            let target = argmax_by(&topic_docs, |&i| meta[i].quality + rng.random_range(0.0..0.05));
            let target = topic_docs[target];
            let title_tokens = tokenize(&docs[target].title);
            let qlen = rng.random_range(2..=title_tokens.len().min(3));
            let mut qwords: Vec<String> = Vec::new();
            let start = rng.random_range(0..=title_tokens.len() - qlen);
            qwords.extend(title_tokens[start..start + qlen].iter().cloned());
            let query = qwords.join(" ");

            if rng.random_bool(cfg.unclicked_rate) {
                rows.push(RawClick {
                    user_id: user_id.clone(),
                    time,
                    query,
                    clicked_doc: None,
                });
                continue;
            }

            // display window around the target, then click: mostly by
            // perceived value, sometimes idiosyncratically (a long-tail
            // whim no amount of shared data predicts)
            let ranked: Vec<DocId> = index
                .rank_indices(&query, &params)
                .into_iter()
                .map(|(i, _)| index.doc_id(i).clone())
                .collect();
            let window = candidate_window(&ranked, &docs[target].doc_id)
                .expect("synthetic corpus has >= 10 documents");
            let clicked = if rng.random_bool(cfg.whim_rate) {
                window.choose(&mut rng).unwrap().clone()
            } else {
                let appeal: Vec<f64> = window
                    .iter()
                    .map(|d| click_appeal(&query, d, &index, &meta, &affinity, &mut rng))
                    .collect();
                window[argmax_by(&appeal, |&a| a)].clone()
            };
            past.push((query.clone(), clicked.clone()));
            rows.push(RawClick {
                user_id: user_id.clone(),
                time,
                query,
                clicked_doc: Some(clicked),
            });
        }
    }
    (docs, rows)
}

// Mildly skewed topic popularity: low-index topics draw more interest.
fn skewed_topic(n_topics: usize, rng: &mut impl Rng) -> usize {
    let u: f64 = rng.random();
    let t = (n_topics as f64 * u.powf(1.5)).floor() as usize;
    t.min(n_topics - 1)
}

// Index of the element maximizing `score`; ties go to the earliest element.
fn argmax_by<T>(items: &[T], mut score: impl FnMut(&T) -> f64) -> usize {
    let mut best = 0;
    let mut best_score = f64::NEG_INFINITY;
    for (i, item) in items.iter().enumerate() {
        let s = score(item);
        if s > best_score {
            best = i;
            best_score = s;
        }
    }
    best
}

// Perceived value of a displayed candidate. Quality dominates, so clicks
// concentrate on a topic's best documents network-wide (learnable through the
// popularity feature given enough pooled data), while per-record noise keeps
// any single user's few clicklogs from pinning the pattern down.
fn click_appeal(
    query: &str,
    doc: &DocId,
    index: &TitleIndex,
    meta: &[SynthDoc],
    affinity: &[f64],
    rng: &mut impl Rng,
) -> f64 {
    let idx = index.index_of(doc).expect("window docs come from the corpus");
    let lexical = index.score_doc(query, idx, &Bm25Params::default());
    0.4 * lexical / (lexical + 3.0)
        + 2.6 * meta[idx].quality
        + 0.2 * affinity[meta[idx].topic]
        + rng.random_range(0.0..0.25)
}

/// Renders raw rows as the logs TSV the ingest subcommand consumes.
pub fn logs_tsv(rows: &[RawClick]) -> String {
    let mut s = String::from("user_id\ttime\tquery\tdoc_id\n");
    for r in rows {
        s.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            r.user_id,
            r.time,
            r.query,
            r.clicked_doc.as_ref().map(|d| d.as_str()).unwrap_or("")
        ));
    }
    s
}

/// Renders the documents TSV the ingest subcommand consumes.
pub fn docs_tsv(docs: &[Document]) -> String {
    let mut s = String::from("doc_id\ttitle\tbody\n");
    for d in docs {
        s.push_str(&format!("{}\t{}\t{}\n", d.doc_id, d.title, d.body));
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{ClickCorpus, ParsedLogs};

    #[test]
    fn generation_is_deterministic() {
        let cfg = SyntheticConfig {
            users: 12,
            docs: 60,
            min_records_per_user: 8,
            max_records_per_user: 12,
            ..SyntheticConfig::default()
        };
        let (d1, r1) = generate(&cfg, 7);
        let (d2, r2) = generate(&cfg, 7);
        assert_eq!(d1, d2);
        assert_eq!(r1, r2);
        let (_, r3) = generate(&cfg, 8);
        assert_ne!(r1, r3);
    }

    #[test]
    fn generated_rows_survive_ingest() {
        let cfg = SyntheticConfig {
            users: 20,
            docs: 80,
            min_records_per_user: 8,
            max_records_per_user: 12,
            ..SyntheticConfig::default()
        };
        let (docs, rows) = generate(&cfg, 3);
        let parsed = ParsedLogs {
            rows,
            skipped: 0,
        };
        let (corpus, report) = ClickCorpus::build(parsed, docs, &Bm25Params::default()).unwrap();
        assert!(report.records_emitted > 50);
        assert_eq!(report.rows_skipped_malformed, 0);
        assert!(report.rows_dropped_unclicked > 0);
        // every record satisfies the clicklog invariants (checked in the ctor)
        for r in &corpus.records {
            assert_eq!(r.candidates.len(), 10);
            assert!(r.candidates.contains(&r.clicked_doc));
        }
    }
}
