//! Data-sharing experiment: per-user ranking accuracy with local-only
//! training versus training augmented with 10 neighbors' training splits.
//!
//! Feature statistics follow data possession: the local model extracts
//! popularity and CTR features from the user's own history alone, the shared
//! model from everything the neighbors contributed as well.

use std::fmt;

use rand::seq::SliceRandom;

use crate::dataset::{ClickCorpus, Split};
use crate::error::{Error, Result};
use crate::par::indexed_map;
use crate::ranking::{train_parts, LabeledExample, RankModel, TrainParams};
use crate::rng::derive_rng;
use crate::simulator::report::format_f64;
use crate::simulator::{
    eval_cases_under, evaluate_cases, sample_neighbors, train_examples_under, ExperimentData,
};
use crate::types::UserId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankMode {
    Local,
    Shared,
}

impl RankMode {
    pub fn parse(s: &str) -> Option<RankMode> {
        match s {
            "local" => Some(RankMode::Local),
            "shared" => Some(RankMode::Shared),
            _ => None,
        }
    }
}

impl fmt::Display for RankMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            RankMode::Local => f.write_str("local"),
            RankMode::Shared => f.write_str("shared"),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RankingConfig {
    pub neighbors: usize,
    /// Cap on experiment users; `None` runs the whole eligible population.
    pub max_users: Option<usize>,
    pub seed: u64,
    pub train: TrainParams,
}

impl Default for RankingConfig {
    fn default() -> Self {
        RankingConfig {
            neighbors: 10,
            max_users: None,
            seed: 42,
            train: TrainParams::default(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct RankingRow {
    pub user_id: UserId,
    pub mode: RankMode,
    pub mrr: f64,
    pub train_records: usize,
    pub test_records: usize,
}

#[derive(Debug, Clone)]
pub struct RankingReport {
    pub rows: Vec<RankingRow>,
    pub seed: u64,
}

impl RankingReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("user_id,mode,mrr,train_records,test_records\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{},{}\n",
                r.user_id,
                r.mode,
                format_f64(r.mrr),
                r.train_records,
                r.test_records
            ));
        }
        s
    }

    pub fn mean_mrr(&self, mode: RankMode) -> f64 {
        let values: Vec<f64> = self
            .rows
            .iter()
            .filter(|r| r.mode == mode)
            .map(|r| r.mrr)
            .collect();
        crate::simulator::mean(&values)
    }
}

/// Runs both modes for every experiment user. Shared mode augments the
/// training split with the training data of `neighbors` uniformly sampled
/// users while keeping the original validation and test sets.
pub fn run_ranking_experiment(corpus: &ClickCorpus, cfg: &RankingConfig) -> Result<RankingReport> {
    let data = ExperimentData::prepare(corpus);
    if data.users.is_empty() {
        return Err(Error::InvalidConfig(
            "no users with enough clicklogs for the 1:1:1 split".into(),
        ));
    }
    let selected = select_users(data.users.len(), cfg.max_users, cfg.seed);

    let per_user: Vec<Vec<RankingRow>> = indexed_map(selected.len(), |si| {
        let uidx = selected[si];
        let user = &data.users[uidx];
        let mut rows = Vec::with_capacity(2);

        // local-only: statistics and training data from the user's own split
        let local_ctx = data.context_over([&user.dataset]);
        let local_examples = train_examples_under(&local_ctx, &user.dataset);
        let local_model = train_or_zero(&[&local_examples], &cfg.train);
        let local_tests = eval_cases_under(&local_ctx, &user.dataset, Split::Test);
        rows.push(RankingRow {
            user_id: user.user_id.clone(),
            mode: RankMode::Local,
            mrr: evaluate_cases(&local_model, &local_tests),
            train_records: local_examples.len() / 10,
            test_records: local_tests.len(),
        });

        // shared: neighbors' training splits join both the statistics and
        // the training set
        let neighbor_idx = sample_neighbors(data.users.len(), uidx, cfg.neighbors, cfg.seed);
        let possessed: Vec<&crate::dataset::PersonalDataset> = std::iter::once(&user.dataset)
            .chain(neighbor_idx.iter().map(|&ni| &data.users[ni].dataset))
            .collect();
        let shared_ctx = data.context_over(possessed.iter().copied());
        let shared_example_sets: Vec<Vec<LabeledExample>> = possessed
            .iter()
            .map(|ds| train_examples_under(&shared_ctx, ds))
            .collect();
        let parts: Vec<&[LabeledExample]> =
            shared_example_sets.iter().map(|v| v.as_slice()).collect();
        let shared_model = train_or_zero(&parts, &cfg.train);
        let shared_tests = eval_cases_under(&shared_ctx, &user.dataset, Split::Test);
        rows.push(RankingRow {
            user_id: user.user_id.clone(),
            mode: RankMode::Shared,
            mrr: evaluate_cases(&shared_model, &shared_tests),
            train_records: parts.iter().map(|p| p.len()).sum::<usize>() / 10,
            test_records: shared_tests.len(),
        });
        rows
    });

    Ok(RankingReport {
        rows: per_user.into_iter().flatten().collect(),
        seed: cfg.seed,
    })
}

pub(crate) fn select_users(total: usize, max_users: Option<usize>, seed: u64) -> Vec<usize> {
    let mut all: Vec<usize> = (0..total).collect();
    match max_users {
        Some(cap) if cap < total => {
            let mut rng = derive_rng(seed, &[0x5E1E]);
            all.shuffle(&mut rng);
            all.truncate(cap);
            all.sort_unstable();
            all
        }
        _ => all,
    }
}

pub(crate) fn train_or_zero(parts: &[&[LabeledExample]], params: &TrainParams) -> RankModel {
    train_parts(parts, params).unwrap_or_else(|_| RankModel::zeros())
}
