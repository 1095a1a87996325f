//! Decentralized search economy toolkit.
//!
//! A protocol library plus deterministic simulator for a search network in
//! which nodes retrieve and rank documents for each other, exchange clicklog
//! training data valued by Data Shapley, and distribute voluntary donations
//! through a reputation-weighted lottery.
//!
//! The crate is organized around the lifecycle of a query:
//!
//! * [`dataset`] — query-log ingestion, BM25 candidate windows, per-user splits
//! * [`retrieval`] — the agent retriever interface and ensemble beam aggregation
//! * [`ranking`] — query-document features, the pointwise relevance model, MRR
//! * [`valuation`] — Data Shapley over offered datasets and the label-flip attack
//! * [`reputation`] — feedback graphs and decay-bounded random-walk scoring
//! * [`donation`] — the weighted lottery, exact integer allocation, mock ledger
//! * [`simulator`] — search fan-out and the experiment scenarios
//!
//! Heavy inner loops run on rayon when the default `parallel` feature is
//! enabled and fall back to sequential execution without it; results are
//! bit-identical either way.

pub mod dataset;
pub mod donation;
pub mod error;
pub mod par;
pub mod ranking;
pub mod reputation;
pub mod retrieval;
pub mod rng;
pub mod simulator;
pub mod types;
pub mod valuation;

pub use error::{Error, Result};
pub use types::{DocId, NodeId, Timestamp, UserId};
