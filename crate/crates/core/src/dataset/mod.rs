//! Query-log ingestion, BM25 candidate windows, and per-user splits.
//!
//! The canonical corpus produced here is the input to every experiment:
//! clicklog records carrying exactly 10 candidate documents with the clicked
//! document among them.

pub mod bm25;
pub mod parse;
pub mod synthetic;

use std::collections::BTreeMap;
use std::fmt;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::types::{DocId, Timestamp, UserId};

pub use bm25::{bm25_rank, tokenize, Bm25Params, TitleIndex};
pub use parse::{apply_filters, parse_documents, parse_query_logs, ParsedLogs, RawClick};

/// Number of candidate documents displayed per query.
pub const WINDOW_SIZE: usize = 10;

/// A document known to the corpus: opaque id plus plain-text title and body.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Document {
    pub doc_id: DocId,
    pub title: String,
    pub body: String,
}

/// One user interaction: the query, the clicked document, and the 10
/// candidates that were displayed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct QueryLogRecord {
    pub user_id: UserId,
    pub time: Timestamp,
    pub query: String,
    pub clicked_doc: DocId,
    pub candidates: Vec<DocId>,
}

impl QueryLogRecord {
    /// Validates the record invariants: exactly 10 distinct candidates with
    /// the clicked document among them.
    pub fn new(
        user_id: UserId,
        time: Timestamp,
        query: String,
        clicked_doc: DocId,
        candidates: Vec<DocId>,
    ) -> Result<QueryLogRecord> {
        if candidates.len() != WINDOW_SIZE {
            return Err(Error::MalformedCorpus {
                line: 0,
                reason: format!("expected {WINDOW_SIZE} candidates, got {}", candidates.len()),
            });
        }
        let mut seen = candidates.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != WINDOW_SIZE {
            return Err(Error::MalformedCorpus {
                line: 0,
                reason: "duplicate candidates".into(),
            });
        }
        if !candidates.contains(&clicked_doc) {
            return Err(Error::MalformedCorpus {
                line: 0,
                reason: "clicked document not among candidates".into(),
            });
        }
        Ok(QueryLogRecord {
            user_id,
            time,
            query,
            clicked_doc,
            candidates,
        })
    }
}

/// Partition label for one record of a personal dataset.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Validation,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Split::Train => f.write_str("train"),
            Split::Validation => f.write_str("validation"),
            Split::Test => f.write_str("test"),
        }
    }
}

/// Split policy for a user's chronologically ordered records.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitPolicy {
    /// Contiguous thirds, earliest third is train. Needs >= 3 records.
    RatioOneOneOne,
    /// Earliest 90% (floor) train, remainder test. Needs >= 10 records.
    Chrono9010,
}

/// One user's chronologically ordered records with per-record split labels.
#[derive(Debug, Clone)]
pub struct PersonalDataset {
    pub user_id: UserId,
    pub records: Vec<QueryLogRecord>,
    pub splits: Vec<Split>,
}

impl PersonalDataset {
    pub fn records_in(&self, split: Split) -> impl Iterator<Item = &QueryLogRecord> {
        self.records
            .iter()
            .zip(self.splits.iter())
            .filter(move |(_, s)| **s == split)
            .map(|(r, _)| r)
    }

    pub fn train_records(&self) -> Vec<&QueryLogRecord> {
        self.records_in(Split::Train).collect()
    }

    pub fn validation_records(&self) -> Vec<&QueryLogRecord> {
        self.records_in(Split::Validation).collect()
    }

    pub fn test_records(&self) -> Vec<&QueryLogRecord> {
        self.records_in(Split::Test).collect()
    }
}

/// Cuts a window of exactly 10 consecutive documents from a ranked list with
/// the clicked document centered: 5 before, 4 after. Near the bounds the
/// window is clamped and extended on the other side.
pub fn candidate_window(ranked: &[DocId], clicked: &DocId) -> Result<Vec<DocId>> {
    if ranked.len() < WINDOW_SIZE {
        return Err(Error::CorpusTooSmall {
            needed: WINDOW_SIZE,
            have: ranked.len(),
        });
    }
    let pos = ranked
        .iter()
        .position(|d| d == clicked)
        .ok_or(Error::ClickedNotInList)?;
    let start = pos.saturating_sub(5).min(ranked.len() - WINDOW_SIZE);
    Ok(ranked[start..start + WINDOW_SIZE].to_vec())
}

/// Splits chronologically ordered records per the chosen policy. Records are
/// sorted by time (stable, so equal timestamps keep input order) before
/// labeling. Duplicate queries across splits are not removed.
pub fn partition_personal_dataset(
    user_id: UserId,
    mut records: Vec<QueryLogRecord>,
    policy: SplitPolicy,
) -> Result<PersonalDataset> {
    let minimum = match policy {
        SplitPolicy::RatioOneOneOne => 3,
        SplitPolicy::Chrono9010 => 10,
    };
    if records.len() < minimum {
        return Err(Error::TooFewRecords {
            needed: minimum,
            have: records.len(),
        });
    }
    records.sort_by_key(|r| r.time);
    let n = records.len();
    let splits = match policy {
        SplitPolicy::RatioOneOneOne => {
            // contiguous thirds; remainders go to train first, then validation
            let base = n / 3;
            let rem = n % 3;
            let train = base + usize::from(rem >= 1);
            let validation = base + usize::from(rem >= 2);
            let mut labels = Vec::with_capacity(n);
            labels.extend(std::iter::repeat(Split::Train).take(train));
            labels.extend(std::iter::repeat(Split::Validation).take(validation));
            labels.extend(std::iter::repeat(Split::Test).take(n - train - validation));
            labels
        }
        SplitPolicy::Chrono9010 => {
            let train = n * 9 / 10;
            let mut labels = Vec::with_capacity(n);
            labels.extend(std::iter::repeat(Split::Train).take(train));
            labels.extend(std::iter::repeat(Split::Test).take(n - train));
            labels
        }
    };
    Ok(PersonalDataset {
        user_id,
        records,
        splits,
    })
}

/// Counters emitted by the ingest pipeline for the filter report.
#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct IngestReport {
    pub rows_parsed: usize,
    pub rows_skipped_malformed: usize,
    pub rows_dropped_unclicked: usize,
    pub rows_dropped_duplicate: usize,
    pub rows_dropped_unknown_doc: usize,
    pub records_emitted: usize,
    pub users: usize,
}

impl IngestReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("metric,count\n");
        for (k, v) in [
            ("rows_parsed", self.rows_parsed),
            ("rows_skipped_malformed", self.rows_skipped_malformed),
            ("rows_dropped_unclicked", self.rows_dropped_unclicked),
            ("rows_dropped_duplicate", self.rows_dropped_duplicate),
            ("rows_dropped_unknown_doc", self.rows_dropped_unknown_doc),
            ("records_emitted", self.records_emitted),
            ("users", self.users),
        ] {
            s.push_str(&format!("{k},{v}\n"));
        }
        s
    }
}

/// The canonical ingested corpus: documents plus validated clicklog records.
#[derive(Debug, Clone)]
pub struct ClickCorpus {
    pub documents: Vec<Document>,
    pub records: Vec<QueryLogRecord>,
}

impl ClickCorpus {
    /// Runs the full ingest pipeline: filter raw rows, rank the corpus per
    /// query, and cut the 10-candidate window around each clicked document.
    /// Rows whose clicked document is not in the document corpus are dropped
    /// and counted.
    pub fn build(
        raw: ParsedLogs,
        documents: Vec<Document>,
        params: &Bm25Params,
    ) -> Result<(ClickCorpus, IngestReport)> {
        if documents.len() < WINDOW_SIZE {
            return Err(Error::CorpusTooSmall {
                needed: WINDOW_SIZE,
                have: documents.len(),
            });
        }
        let mut report = IngestReport {
            rows_parsed: raw.rows.len(),
            rows_skipped_malformed: raw.skipped,
            ..IngestReport::default()
        };
        let unclicked = raw.rows.iter().filter(|r| r.clicked_doc.is_none()).count();
        let filtered = apply_filters(raw.rows);
        report.rows_dropped_unclicked = unclicked;
        report.rows_dropped_duplicate = report.rows_parsed - unclicked - filtered.len();

        let index = TitleIndex::build(&documents);
        let mut records = Vec::with_capacity(filtered.len());
        // rank once per distinct query
        let mut ranked_cache: BTreeMap<&str, Vec<DocId>> = BTreeMap::new();
        for row in &filtered {
            let clicked = row.clicked_doc.clone().expect("filters keep clicked rows");
            if index.index_of(&clicked).is_none() {
                report.rows_dropped_unknown_doc += 1;
                continue;
            }
            let ranked = ranked_cache.entry(row.query.as_str()).or_insert_with(|| {
                index
                    .rank_indices(&row.query, params)
                    .into_iter()
                    .map(|(i, _)| index.doc_id(i).clone())
                    .collect()
            });
            let window = candidate_window(ranked, &clicked)?;
            records.push(QueryLogRecord::new(
                row.user_id.clone(),
                row.time,
                row.query.clone(),
                clicked,
                window,
            )?);
        }
        report.records_emitted = records.len();
        let corpus = ClickCorpus { documents, records };
        report.users = corpus.by_user().len();
        Ok((corpus, report))
    }

    /// Groups records by user, preserving record order.
    pub fn by_user(&self) -> BTreeMap<&UserId, Vec<&QueryLogRecord>> {
        let mut map: BTreeMap<&UserId, Vec<&QueryLogRecord>> = BTreeMap::new();
        for r in &self.records {
            map.entry(&r.user_id).or_default().push(r);
        }
        map
    }

    /// Partitions every user with enough records; users below the policy
    /// minimum are excluded.
    pub fn personal_datasets(&self, policy: SplitPolicy) -> Vec<PersonalDataset> {
        self.by_user()
            .into_iter()
            .filter_map(|(user, records)| {
                partition_personal_dataset(
                    user.clone(),
                    records.into_iter().cloned().collect(),
                    policy,
                )
                .ok()
            })
            .collect()
    }

    /// Writes the canonical corpus: `corpus.tsv` (user_id, time, query,
    /// clicked doc, comma-separated candidates) and `documents.tsv`
    /// (doc_id, title, body).
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir)?;
        let mut docs = String::from("doc_id\ttitle\tbody\n");
        for d in &self.documents {
            docs.push_str(&format!("{}\t{}\t{}\n", d.doc_id, d.title, d.body));
        }
        fs::File::create(dir.join("documents.tsv"))?.write_all(docs.as_bytes())?;

        let mut logs = String::from("user_id\ttime\tquery\tdoc_id\tcandidates\n");
        for r in &self.records {
            let cands: Vec<&str> = r.candidates.iter().map(|c| c.as_str()).collect();
            logs.push_str(&format!(
                "{}\t{}\t{}\t{}\t{}\n",
                r.user_id,
                r.time,
                r.query,
                r.clicked_doc,
                cands.join(",")
            ));
        }
        fs::File::create(dir.join("corpus.tsv"))?.write_all(logs.as_bytes())?;
        Ok(())
    }

    /// Loads and validates a canonical corpus directory.
    pub fn load(dir: &Path) -> Result<ClickCorpus> {
        let corpus_path = dir.join("corpus.tsv");
        let docs_path = dir.join("documents.tsv");
        if !corpus_path.is_file() || !docs_path.is_file() {
            return Err(Error::CorpusMissing(dir.to_path_buf()));
        }
        let documents = parse_documents(BufReader::new(fs::File::open(&docs_path)?))?;
        let mut records = Vec::new();
        let reader = BufReader::new(fs::File::open(&corpus_path)?);
        for (n, line) in reader.lines().enumerate() {
            let line = line?;
            if n == 0 || line.is_empty() {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() != 5 {
                return Err(Error::MalformedCorpus {
                    line: n + 1,
                    reason: format!("expected 5 columns, got {}", cols.len()),
                });
            }
            let time = Timestamp::parse(cols[1]).ok_or_else(|| Error::MalformedCorpus {
                line: n + 1,
                reason: "bad timestamp".into(),
            })?;
            let candidates: Vec<DocId> = cols[4].split(',').map(DocId::new).collect();
            let record = QueryLogRecord::new(
                UserId::new(cols[0]),
                time,
                cols[2].to_string(),
                DocId::new(cols[3]),
                candidates,
            )
            .map_err(|e| Error::MalformedCorpus {
                line: n + 1,
                reason: e.to_string(),
            })?;
            records.push(record);
        }
        Ok(ClickCorpus { documents, records })
    }
}

/// SHA-256 over the canonical corpus files, hex encoded. Used by run
/// manifests to pin which corpus an experiment consumed.
pub fn corpus_hash(dir: &Path) -> Result<String> {
    let mut hasher = Sha256::new();
    for name in ["documents.tsv", "corpus.tsv"] {
        let path = dir.join(name);
        if !path.is_file() {
            return Err(Error::CorpusMissing(dir.to_path_buf()));
        }
        hasher.update(fs::read(path)?);
    }
    let digest = hasher.finalize();
    Ok(digest.iter().map(|b| format!("{b:02x}")).collect())
}
