//! TSV ingestion of raw query logs and document corpora.
//!
//! Both inputs are UTF-8 tab-separated files with a header row. Fields must
//! not contain tabs or newlines. Query-log columns: user id, time, query,
//! clicked doc id (a trailing candidates column is tolerated and ignored —
//! candidate windows are always regenerated from the document corpus).

use std::io::BufRead;

use crate::dataset::Document;
use crate::error::{Error, Result};
use crate::types::{DocId, Timestamp, UserId};

/// One raw query-log row before filtering. The clicked document may be
/// absent: the original logs also contain queries with no further feedback.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RawClick {
    pub user_id: UserId,
    pub time: Timestamp,
    pub query: String,
    pub clicked_doc: Option<DocId>,
}

/// Result of parsing a query-log stream.
#[derive(Debug, Default)]
pub struct ParsedLogs {
    pub rows: Vec<RawClick>,
    /// Rows that could not be parsed (wrong column count, bad timestamp).
    pub skipped: usize,
}

/// Parses query logs from a TSV stream. Malformed rows are counted, not
/// fatal; stream errors are.
pub fn parse_query_logs<R: BufRead>(reader: R) -> Result<ParsedLogs> {
    let mut out = ParsedLogs::default();
    let mut lines = reader.lines();
    // header row
    match lines.next() {
        Some(h) => {
            h?;
        }
        None => return Ok(out),
    }
    for line in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if cols.len() < 4 {
            out.skipped += 1;
            continue;
        }
        let Some(time) = Timestamp::parse(cols[1]) else {
            out.skipped += 1;
            continue;
        };
        let clicked = if cols[3].is_empty() {
            None
        } else {
            Some(DocId::new(cols[3]))
        };
        out.rows.push(RawClick {
            user_id: UserId::new(cols[0]),
            time,
            query: cols[2].to_string(),
            clicked_doc: clicked,
        });
    }
    Ok(out)
}

/// Applies the corpus filters:
/// rows without a clicked document are removed, and for duplicate
/// (user id, query) pairs only the most recent row survives. The relative
/// order of survivors is preserved. Idempotent.
pub fn apply_filters(rows: Vec<RawClick>) -> Vec<RawClick> {
    use std::collections::HashMap;
    // best row index per (user, query): latest timestamp, ties to the later row
    let mut best: HashMap<(&UserId, &str), usize> = HashMap::new();
    for (i, row) in rows.iter().enumerate() {
        if row.clicked_doc.is_none() {
            continue;
        }
        let key = (&row.user_id, row.query.as_str());
        match best.get(&key) {
            Some(&j) if rows[j].time > row.time => {}
            _ => {
                best.insert(key, i);
            }
        }
    }
    let mut keep: Vec<usize> = best.into_values().collect();
    keep.sort_unstable();
    let mut keep_iter = keep.into_iter().peekable();
    rows.into_iter()
        .enumerate()
        .filter_map(|(i, row)| {
            if keep_iter.peek() == Some(&i) {
                keep_iter.next();
                Some(row)
            } else {
                None
            }
        })
        .collect()
}

/// Parses a document corpus TSV with columns doc id, title, body.
pub fn parse_documents<R: BufRead>(reader: R) -> Result<Vec<Document>> {
    let mut docs = Vec::new();
    let mut lines = reader.lines().enumerate();
    match lines.next() {
        Some((_, h)) => {
            h?;
        }
        None => return Ok(docs),
    }
    for (n, line) in lines {
        let line = line?;
        if line.is_empty() {
            continue;
        }
        let mut cols = line.splitn(3, '\t');
        let doc_id = cols.next().unwrap_or("");
        let title = cols.next();
        if doc_id.is_empty() || title.is_none() {
            return Err(Error::MalformedCorpus {
                line: n + 1,
                reason: "document row needs doc_id and title columns".into(),
            });
        }
        docs.push(Document {
            doc_id: DocId::new(doc_id),
            title: title.unwrap().to_string(),
            body: cols.next().unwrap_or("").to_string(),
        });
    }
    Ok(docs)
}
