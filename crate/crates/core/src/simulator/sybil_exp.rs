//! Sybil capture experiment: the share of donated funds captured by Sybil
//! nodes as their fraction of the network grows, under five scenarios.
//!
//! Honest reputations come from normalized click counts (real corpus counts
//! when available, otherwise a seeded heavy-tailed stand-in). Reputation here
//! is read directly from click activity rather than walk-computed, matching
//! the experiment setup. Each round a designated extra donor node runs the
//! weighted lottery; capture is the Sybil share of the allocated amount.

use std::collections::BTreeMap;
use std::fmt;

use rand::seq::IndexedRandom;
use rand::Rng;

use crate::donation::{allocate, sample_recipients, weights, DonationPolicy};
use crate::error::{Error, Result};
use crate::par::indexed_map;
use crate::reputation::ReputationVector;
use crate::rng::{derive_rng, derive_seed};
use crate::simulator::report::format_f64;
use crate::simulator::{mean, std_dev};
use crate::types::NodeId;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SybilScenario {
    /// alpha 0.5, epsilon 0.01; sybils drawn from the bottom decile.
    Base,
    /// Base with epsilon 0: zero-reputation sybils are never sampled.
    NoSmoothing,
    /// alpha 1.5 sharpens the merit preference.
    AggressiveWeighting,
    /// Sybils hold moderate reputations (40th-60th percentile band) via
    /// mutual feedback.
    DenseSybils,
    /// Honest reputations drawn uniformly instead of from click counts.
    Random,
}

impl SybilScenario {
    pub const ALL: [SybilScenario; 5] = [
        SybilScenario::Base,
        SybilScenario::NoSmoothing,
        SybilScenario::AggressiveWeighting,
        SybilScenario::DenseSybils,
        SybilScenario::Random,
    ];

    pub fn parse(s: &str) -> Option<SybilScenario> {
        match s {
            "base" => Some(SybilScenario::Base),
            "no_smoothing" => Some(SybilScenario::NoSmoothing),
            "aggressive_weighting" => Some(SybilScenario::AggressiveWeighting),
            "dense_sybils" => Some(SybilScenario::DenseSybils),
            "random" => Some(SybilScenario::Random),
            _ => None,
        }
    }

    pub fn policy(&self) -> DonationPolicy {
        match self {
            SybilScenario::NoSmoothing => DonationPolicy {
                epsilon: 0.0,
                alpha: 0.5,
                recipients: 50,
            },
            SybilScenario::AggressiveWeighting => DonationPolicy {
                epsilon: 0.01,
                alpha: 1.5,
                recipients: 50,
            },
            _ => DonationPolicy {
                epsilon: 0.01,
                alpha: 0.5,
                recipients: 50,
            },
        }
    }

    fn scenario_tag(&self) -> u64 {
        match self {
            SybilScenario::Base => 1,
            SybilScenario::NoSmoothing => 2,
            SybilScenario::AggressiveWeighting => 3,
            SybilScenario::DenseSybils => 4,
            SybilScenario::Random => 5,
        }
    }
}

impl fmt::Display for SybilScenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let name = match self {
            SybilScenario::Base => "base",
            SybilScenario::NoSmoothing => "no_smoothing",
            SybilScenario::AggressiveWeighting => "aggressive_weighting",
            SybilScenario::DenseSybils => "dense_sybils",
            SybilScenario::Random => "random",
        };
        f.write_str(name)
    }
}

#[derive(Debug, Clone)]
pub struct SybilConfig {
    pub scenario: SybilScenario,
    pub nodes: usize,
    pub rounds: usize,
    /// Recipients per donation round (the lottery's N).
    pub recipients: usize,
    /// Donated amount per round, integer base units.
    pub donation: u64,
    /// Sybil fractions to sweep.
    pub fractions: Vec<f64>,
    pub seed: u64,
}

impl Default for SybilConfig {
    fn default() -> Self {
        SybilConfig {
            scenario: SybilScenario::Base,
            nodes: 1000,
            rounds: 100,
            recipients: 50,
            donation: 1_000_000,
            fractions: (0..=10).map(|i| i as f64 / 10.0).collect(),
            seed: 42,
        }
    }
}

#[derive(Debug, Clone)]
pub struct SybilRow {
    pub scenario: SybilScenario,
    pub sybil_fraction: f64,
    pub mean_capture: f64,
    pub std_capture: f64,
}

#[derive(Debug, Clone)]
pub struct SybilReport {
    pub rows: Vec<SybilRow>,
    pub seed: u64,
}

impl SybilReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("scenario,sybil_fraction,mean_capture,std_capture\n");
        for r in &self.rows {
            s.push_str(&format!(
                "{},{},{},{}\n",
                r.scenario,
                format_f64(r.sybil_fraction),
                format_f64(r.mean_capture),
                format_f64(r.std_capture)
            ));
        }
        s
    }

    pub fn capture_at(&self, fraction: f64) -> Option<f64> {
        self.rows
            .iter()
            .find(|r| (r.sybil_fraction - fraction).abs() < 1e-9)
            .map(|r| r.mean_capture)
    }
}

// Heavy-tailed synthetic click counts standing in for real corpus activity.
fn synthetic_click_counts(seed: u64, n: usize) -> Vec<u64> {
    let mut rng = derive_rng(seed, &[0xC11C]);
    (0..n)
        .map(|_| {
            let u: f64 = rng.random();
            (u.powi(4) * 500.0).floor() as u64 + 1
        })
        .collect()
}

// Click counts map to [0, 1] by dividing by the maximum, so every user with
// any activity keeps a positive reputation and stays lottery-eligible.
fn normalize_counts(counts: &[u64]) -> Vec<f64> {
    let max = counts.iter().copied().max().unwrap_or(0) as f64;
    if max <= 0.0 {
        return vec![0.0; counts.len()];
    }
    counts.iter().map(|&c| c as f64 / max).collect()
}

fn quantile_band(sorted: &[f64], lo: f64, hi: f64) -> Vec<f64> {
    let n = sorted.len();
    let lo_idx = ((n as f64 * lo) as usize).min(n - 1);
    let hi_idx = ((n as f64 * hi) as usize).clamp(lo_idx + 1, n);
    sorted[lo_idx..hi_idx].to_vec()
}

/// Runs the capture sweep for one scenario. `click_counts`, when given, seeds
/// the honest reputation distribution from real per-user click activity.
pub fn run_sybil_experiment(cfg: &SybilConfig, click_counts: Option<&[u64]>) -> Result<SybilReport> {
    if cfg.nodes == 0 || cfg.rounds == 0 {
        return Err(Error::InvalidConfig("nodes and rounds must be positive".into()));
    }
    if cfg.donation < cfg.recipients as u64 {
        return Err(Error::DonationTooSmall {
            amount: cfg.donation,
            recipients: cfg.recipients,
        });
    }
    let scenario = cfg.scenario;
    let tag = scenario.scenario_tag();

    // honest reputation pool
    let pool: Vec<f64> = match (scenario, click_counts) {
        (SybilScenario::Random, _) => {
            let mut rng = derive_rng(cfg.seed, &[tag, 0xFADE]);
            (0..cfg.nodes.max(1000)).map(|_| rng.random()).collect()
        }
        (_, Some(counts)) => normalize_counts(counts),
        (_, None) => normalize_counts(&synthetic_click_counts(cfg.seed, cfg.nodes.max(1000))),
    };
    let mut sorted_pool = pool.clone();
    sorted_pool.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let bottom_decile = quantile_band(&sorted_pool, 0.0, 0.1);
    let moderate_band = quantile_band(&sorted_pool, 0.4, 0.6);

    let donor = NodeId(cfg.nodes as u64);
    let policy = DonationPolicy {
        recipients: cfg.recipients,
        ..scenario.policy()
    };

    let mut rows = Vec::with_capacity(cfg.fractions.len());
    for (fi, &fraction) in cfg.fractions.iter().enumerate() {
        if !(0.0..=1.0).contains(&fraction) {
            return Err(Error::InvalidConfig(format!("sybil fraction {fraction} out of range")));
        }
        let sybil_count = ((cfg.nodes as f64) * fraction).round() as usize;
        let honest_count = cfg.nodes - sybil_count.min(cfg.nodes);
        let mut setup_rng = derive_rng(cfg.seed, &[tag, 0x5E7, fi as u64]);

        let mut scores: BTreeMap<NodeId, f64> = BTreeMap::new();
        for i in 0..honest_count {
            let r = *pool.choose(&mut setup_rng).expect("pool is non-empty");
            scores.insert(NodeId(i as u64), r);
        }
        for i in honest_count..cfg.nodes {
            let r = match scenario {
                SybilScenario::NoSmoothing => 0.0,
                SybilScenario::DenseSybils => *moderate_band
                    .choose(&mut setup_rng)
                    .expect("moderate band is non-empty"),
                _ => *bottom_decile
                    .choose(&mut setup_rng)
                    .expect("bottom decile is non-empty"),
            };
            scores.insert(NodeId(i as u64), r);
        }
        let reputation = ReputationVector {
            evaluator: donor,
            epoch: 0,
            scores,
        };
        let is_sybil = |node: &NodeId| node.0 >= honest_count as u64 && node.0 < cfg.nodes as u64;

        // the eligible set and weights are fixed per fraction; rounds differ
        // only by their sampling stream
        let round_weights = weights(&reputation, &policy);
        let captures: Vec<Option<f64>> = match round_weights {
            Err(Error::NoEligibleRecipients) => vec![None; cfg.rounds],
            Err(e) => return Err(e),
            Ok(w) => indexed_map(cfg.rounds, |round| {
                let sample_seed = derive_seed(cfg.seed, &[tag, 0xD06, fi as u64, round as u64]);
                let sampled = sample_recipients(&w, policy.recipients, sample_seed);
                if sampled.is_empty() {
                    return None;
                }
                let payout = allocate(&sampled, &w, cfg.donation)
                    .expect("donation covers the sampled headcount");
                let sybil_amount: u64 = payout
                    .iter()
                    .filter(|(node, _)| is_sybil(node))
                    .map(|(_, a)| a)
                    .sum();
                Some(sybil_amount as f64 / cfg.donation as f64)
            }),
        };
        let effective: Vec<f64> = captures.into_iter().flatten().collect();
        let mean_capture = mean(&effective);
        let std_capture = std_dev(&effective, mean_capture);
        rows.push(SybilRow {
            scenario,
            sybil_fraction: fraction,
            mean_capture,
            std_capture,
        });
    }
    Ok(SybilReport {
        rows,
        seed: cfg.seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn quick(scenario: SybilScenario, seed: u64) -> SybilConfig {
        SybilConfig {
            scenario,
            nodes: 300,
            rounds: 40,
            seed,
            ..SybilConfig::default()
        }
    }

    #[test]
    fn no_sybils_no_capture() {
        for scenario in SybilScenario::ALL {
            let report = run_sybil_experiment(&quick(scenario, 1), None).unwrap();
            assert_eq!(report.capture_at(0.0), Some(0.0), "{scenario}");
        }
    }

    #[test]
    fn no_smoothing_excludes_zero_reputation_sybils() {
        let report = run_sybil_experiment(&quick(SybilScenario::NoSmoothing, 2), None).unwrap();
        for row in &report.rows {
            if row.sybil_fraction < 1.0 {
                assert_eq!(row.mean_capture, 0.0, "fraction {}", row.sybil_fraction);
            }
        }
    }

    #[test]
    fn dense_sybils_capture_at_least_base() {
        let base = run_sybil_experiment(&quick(SybilScenario::Base, 3), None).unwrap();
        let dense = run_sybil_experiment(&quick(SybilScenario::DenseSybils, 3), None).unwrap();
        for (b, d) in base.rows.iter().zip(dense.rows.iter()) {
            assert!(
                d.mean_capture >= b.mean_capture - 1e-9,
                "fraction {}: dense {} < base {}",
                b.sybil_fraction,
                d.mean_capture,
                b.mean_capture
            );
        }
    }

    #[test]
    fn base_capture_is_monotone_within_slack() {
        let report = run_sybil_experiment(&quick(SybilScenario::Base, 4), None).unwrap();
        for pair in report.rows.windows(2) {
            assert!(
                pair[1].mean_capture >= pair[0].mean_capture - 0.02,
                "capture dropped from {} to {} at fraction {}",
                pair[0].mean_capture,
                pair[1].mean_capture,
                pair[1].sybil_fraction
            );
        }
    }

    #[test]
    fn full_sybil_network_captures_everything() {
        let report = run_sybil_experiment(&quick(SybilScenario::Base, 5), None).unwrap();
        let last = report.capture_at(1.0).unwrap();
        assert!((last - 1.0).abs() < 1e-9, "capture at fraction 1.0 = {last}");
    }

    #[test]
    fn report_is_deterministic() {
        let a = run_sybil_experiment(&quick(SybilScenario::Random, 6), None).unwrap();
        let b = run_sybil_experiment(&quick(SybilScenario::Random, 6), None).unwrap();
        assert_eq!(a.to_csv(), b.to_csv());
    }

    #[test]
    fn real_click_counts_feed_the_distribution() {
        let counts: Vec<u64> = (1..=500).map(|i| (i % 37) + 1).collect();
        let report = run_sybil_experiment(&quick(SybilScenario::Base, 7), Some(&counts)).unwrap();
        assert_eq!(report.rows.len(), 11);
    }
}
