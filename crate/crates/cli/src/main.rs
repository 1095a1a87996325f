//! `swarmsim` — deterministic experiment runner for the decentralized search
//! economy.
//!
//! Subcommands: `ingest` builds the canonical clicklog corpus, `synth-corpus`
//! generates raw logs when no real query logs are at hand, `rank-eval` /
//! `poison-eval` / `sybil-eval` run the experiments, `donate-demo` prints a
//! worked donation allocation. Every experiment writes its CSV plus a
//! `manifest.txt` recording the command line, seed, and corpus hash.

mod config;
mod manifest;

use std::fs;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};

use swarmsearch::dataset::synthetic::{docs_tsv, generate, logs_tsv, SyntheticConfig};
use swarmsearch::dataset::{
    corpus_hash, parse_documents, parse_query_logs, Bm25Params, ClickCorpus,
};
use swarmsearch::donation::{
    allocate, sample_recipients, weights, DonationPolicy, MockLedger, PayoutMessage,
};
use swarmsearch::reputation::{compute_reputation, DecayParams, FeedbackGraph};
use swarmsearch::simulator::{
    format_f64, run_poisoning_experiment, run_ranking_experiment, run_sybil_experiment,
    PoisonMode, PoisoningConfig, RankMode, RankingConfig, SybilConfig, SybilScenario,
};
use swarmsearch::types::NodeId;

use config::{resolve, resolve_seed, FileConfig};
use manifest::RunManifest;

#[derive(Parser)]
#[command(name = "swarmsim", version, about = "Decentralized search economy simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Ingest raw query logs and documents into a canonical corpus
    Ingest {
        /// Raw query-log TSV (user_id, time, query, doc_id)
        #[arg(long)]
        logs: PathBuf,
        /// Document corpus TSV (doc_id, title, body)
        #[arg(long)]
        docs: PathBuf,
        /// Output directory for the canonical corpus and filter report
        #[arg(long)]
        out: PathBuf,
        /// key=value config file
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Generate a synthetic raw corpus (logs.tsv, docs.tsv) for ingestion
    SynthCorpus {
        #[arg(long)]
        users: Option<usize>,
        #[arg(long)]
        docs: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Per-user ranking accuracy with local-only or shared training data
    RankEval {
        #[arg(long)]
        corpus: PathBuf,
        /// local | shared
        #[arg(long, value_parser = parse_rank_mode)]
        mode: RankMode,
        #[arg(long)]
        neighbors: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Output CSV path
        #[arg(long)]
        out: PathBuf,
        /// Cap on experiment users
        #[arg(long)]
        max_users: Option<usize>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Ranking accuracy under label-flipping neighbors
    PoisonEval {
        #[arg(long)]
        corpus: PathBuf,
        /// Fraction of the 10 neighbors poisoned, in steps of 0.1
        #[arg(long)]
        adversarial_fraction: f64,
        /// naive | defense | oracle
        #[arg(long, value_parser = parse_poison_mode)]
        mode: PoisonMode,
        #[arg(long)]
        permutations: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        max_users: Option<usize>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Donation capture by Sybil nodes across attack scenarios
    SybilEval {
        /// base | no_smoothing | aggressive_weighting | dense_sybils | random
        #[arg(long, value_parser = parse_scenario)]
        scenario: SybilScenario,
        #[arg(long)]
        nodes: Option<usize>,
        #[arg(long)]
        rounds: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
        /// Canonical corpus whose per-user click counts seed honest reputations
        #[arg(long)]
        corpus: Option<PathBuf>,
        #[arg(long)]
        recipients: Option<usize>,
        #[arg(long)]
        donation: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
    /// Print a worked donation allocation end to end
    DonateDemo {
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn parse_rank_mode(s: &str) -> Result<RankMode, String> {
    RankMode::parse(s).ok_or_else(|| format!("unknown mode {s}: expected local or shared"))
}

fn parse_poison_mode(s: &str) -> Result<PoisonMode, String> {
    PoisonMode::parse(s).ok_or_else(|| format!("unknown mode {s}: expected naive, defense, or oracle"))
}

fn parse_scenario(s: &str) -> Result<SybilScenario, String> {
    SybilScenario::parse(s).ok_or_else(|| {
        format!("unknown scenario {s}: expected base, no_smoothing, aggressive_weighting, dense_sybils, or random")
    })
}

struct CliError {
    code: u8,
    message: String,
}

impl CliError {
    fn new(code: u8, message: impl Into<String>) -> CliError {
        CliError {
            code,
            message: message.into(),
        }
    }
}

impl From<swarmsearch::Error> for CliError {
    fn from(e: swarmsearch::Error) -> CliError {
        let code = match &e {
            swarmsearch::Error::CorpusMissing(_) => 3,
            _ => 1,
        };
        CliError::new(code, e.to_string())
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> CliError {
        CliError::new(1, e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message);
            ExitCode::from(e.code)
        }
    }
}

fn command_line() -> String {
    std::env::args().collect::<Vec<_>>().join(" ")
}

fn load_corpus(path: &Path) -> Result<ClickCorpus, CliError> {
    if !path.is_dir() {
        return Err(CliError::new(3, format!("corpus not found at {}", path.display())));
    }
    Ok(ClickCorpus::load(path)?)
}

fn write_manifest(
    dir: &Path,
    file_config: &FileConfig,
    seed: u64,
    hash: Option<String>,
    started: Instant,
) -> Result<(), CliError> {
    RunManifest {
        command_line: command_line(),
        config: file_config.snapshot(),
        seed,
        corpus_hash: hash,
        duration: started.elapsed(),
    }
    .write(dir)?;
    Ok(())
}

fn out_dir(out_csv: &Path) -> PathBuf {
    out_csv.parent().map(Path::to_path_buf).unwrap_or_else(|| PathBuf::from("."))
}

fn run(cli: Cli) -> Result<(), CliError> {
    let started = Instant::now();
    match cli.command {
        Command::Ingest {
            logs,
            docs,
            out,
            config,
        } => {
            let file_config = FileConfig::load(config.as_deref()).map_err(|m| CliError::new(1, m))?;
            let raw = parse_query_logs(BufReader::new(fs::File::open(&logs)?))?;
            let documents = parse_documents(BufReader::new(fs::File::open(&docs)?))?;
            let (corpus, report) = ClickCorpus::build(raw, documents, &Bm25Params::default())?;
            corpus.save(&out)?;
            fs::write(out.join("filter_report.csv"), report.to_csv())?;
            let hash = corpus_hash(&out)?;
            write_manifest(&out, &file_config, 0, Some(hash), started)?;
            println!(
                "ingested {} records from {} users ({} rows dropped)",
                report.records_emitted,
                report.users,
                report.rows_dropped_unclicked + report.rows_dropped_duplicate
                    + report.rows_dropped_unknown_doc
            );
            Ok(())
        }
        Command::SynthCorpus {
            users,
            docs,
            seed,
            out,
            config,
        } => {
            let file_config = FileConfig::load(config.as_deref()).map_err(|m| CliError::new(1, m))?;
            let seed = resolve_seed(seed, file_config.get("seed").map_err(|m| CliError::new(1, m))?);
            let cfg = SyntheticConfig {
                users: resolve(users, file_config.get("users").map_err(|m| CliError::new(1, m))?, 250),
                docs: resolve(docs, file_config.get("docs").map_err(|m| CliError::new(1, m))?, 240),
                ..SyntheticConfig::default()
            };
            let (documents, rows) = generate(&cfg, seed);
            fs::create_dir_all(&out)?;
            fs::write(out.join("logs.tsv"), logs_tsv(&rows))?;
            fs::write(out.join("docs.tsv"), docs_tsv(&documents))?;
            write_manifest(&out, &file_config, seed, None, started)?;
            println!(
                "generated {} raw rows over {} documents into {}",
                rows.len(),
                documents.len(),
                out.display()
            );
            Ok(())
        }
        Command::RankEval {
            corpus,
            mode,
            neighbors,
            seed,
            out,
            max_users,
            config,
        } => {
            let file_config = FileConfig::load(config.as_deref()).map_err(|m| CliError::new(1, m))?;
            let seed = resolve_seed(seed, file_config.get("seed").map_err(|m| CliError::new(1, m))?);
            let corpus_data = load_corpus(&corpus)?;
            let cfg = RankingConfig {
                neighbors: resolve(
                    neighbors,
                    file_config.get("neighbors").map_err(|m| CliError::new(1, m))?,
                    10,
                ),
                max_users: max_users
                    .or(file_config.get("max_users").map_err(|m| CliError::new(1, m))?),
                seed,
                ..RankingConfig::default()
            };
            let report = run_ranking_experiment(&corpus_data, &cfg)?;
            let mut csv = String::from("user_id,mode,mrr,train_records,test_records\n");
            for row in report.rows.iter().filter(|r| r.mode == mode) {
                csv.push_str(&format!(
                    "{},{},{},{},{}\n",
                    row.user_id,
                    row.mode,
                    format_f64(row.mrr),
                    row.train_records,
                    row.test_records
                ));
            }
            fs::create_dir_all(out_dir(&out))?;
            fs::write(&out, csv)?;
            write_manifest(&out_dir(&out), &file_config, seed, Some(corpus_hash(&corpus)?), started)?;
            println!("mean {mode} MRR: {}", format_f64(report.mean_mrr(mode)));
            Ok(())
        }
        Command::PoisonEval {
            corpus,
            adversarial_fraction,
            mode,
            permutations,
            seed,
            out,
            max_users,
            config,
        } => {
            let file_config = FileConfig::load(config.as_deref()).map_err(|m| CliError::new(1, m))?;
            let seed = resolve_seed(seed, file_config.get("seed").map_err(|m| CliError::new(1, m))?);
            let scaled = adversarial_fraction * 10.0;
            if !(0.0..=10.0).contains(&scaled) || (scaled - scaled.round()).abs() > 1e-9 {
                return Err(CliError::new(
                    2,
                    format!("adversarial fraction {adversarial_fraction} must lie in 0..1 in steps of 0.1"),
                ));
            }
            let adversarial = scaled.round() as usize;
            let corpus_data = load_corpus(&corpus)?;
            let cfg = PoisoningConfig {
                adversarial_counts: vec![adversarial],
                modes: vec![mode],
                permutations: resolve(
                    permutations,
                    file_config.get("permutations").map_err(|m| CliError::new(1, m))?,
                    100,
                ),
                max_users: max_users
                    .or(file_config.get("max_users").map_err(|m| CliError::new(1, m))?),
                seed,
                ..PoisoningConfig::default()
            };
            let report = run_poisoning_experiment(&corpus_data, &cfg)?;
            fs::create_dir_all(out_dir(&out))?;
            fs::write(&out, report.to_csv())?;
            write_manifest(&out_dir(&out), &file_config, seed, Some(corpus_hash(&corpus)?), started)?;
            println!(
                "mean {mode} MRR at {adversarial}/10 adversarial: {}",
                format_f64(report.mean_mrr(mode, adversarial))
            );
            Ok(())
        }
        Command::SybilEval {
            scenario,
            nodes,
            rounds,
            seed,
            out,
            corpus,
            recipients,
            donation,
            config,
        } => {
            let file_config = FileConfig::load(config.as_deref()).map_err(|m| CliError::new(1, m))?;
            let seed = resolve_seed(seed, file_config.get("seed").map_err(|m| CliError::new(1, m))?);
            let click_counts: Option<Vec<u64>> = match &corpus {
                Some(path) => {
                    let corpus_data = load_corpus(path)?;
                    Some(
                        corpus_data
                            .by_user()
                            .values()
                            .map(|records| records.len() as u64)
                            .collect(),
                    )
                }
                None => None,
            };
            let cfg = SybilConfig {
                scenario,
                nodes: resolve(nodes, file_config.get("nodes").map_err(|m| CliError::new(1, m))?, 1000),
                rounds: resolve(rounds, file_config.get("rounds").map_err(|m| CliError::new(1, m))?, 100),
                recipients: resolve(
                    recipients,
                    file_config.get("recipients").map_err(|m| CliError::new(1, m))?,
                    50,
                ),
                donation: resolve(
                    donation,
                    file_config.get("donation").map_err(|m| CliError::new(1, m))?,
                    1_000_000,
                ),
                seed,
                ..SybilConfig::default()
            };
            let report = run_sybil_experiment(&cfg, click_counts.as_deref())?;
            fs::create_dir_all(out_dir(&out))?;
            fs::write(&out, report.to_csv())?;
            let hash = match &corpus {
                Some(path) => Some(corpus_hash(path)?),
                None => None,
            };
            write_manifest(&out_dir(&out), &file_config, seed, hash, started)?;
            println!(
                "{scenario}: capture at fraction 0.5 = {}",
                format_f64(report.capture_at(0.5).unwrap_or(0.0))
            );
            Ok(())
        }
        Command::DonateDemo { seed, config } => {
            let file_config = FileConfig::load(config.as_deref()).map_err(|m| CliError::new(1, m))?;
            let seed = resolve_seed(seed, file_config.get("seed").map_err(|m| CliError::new(1, m))?);
            donate_demo(seed)?;
            Ok(())
        }
    }
}

// A worked allocation: feedback graph -> reputation -> weights -> lottery ->
// exact split -> signed payout executed on the mock ledger.
fn donate_demo(seed: u64) -> Result<(), CliError> {
    let donor = NodeId(0);
    let mut graph = FeedbackGraph::new();
    // the donor's view: direct feedback plus second-hop entries
    let direct: [(u64, f64); 5] = [(1, 0.9), (2, 0.6), (3, 0.4), (4, 0.2), (5, 0.05)];
    for (node, utility) in direct {
        graph.record_feedback(donor, NodeId(node), utility, 10)?;
    }
    graph.record_feedback(NodeId(1), NodeId(6), 0.8, 9)?;
    graph.record_feedback(NodeId(2), NodeId(6), 0.5, 10)?;
    graph.record_feedback(NodeId(3), NodeId(7), 0.7, 4)?;

    let reputation = compute_reputation(&graph, donor, &DecayParams::default(), 20_000, seed)?;
    let policy = DonationPolicy {
        recipients: 4,
        ..DonationPolicy::default()
    };
    let lottery_weights = weights(&reputation, &policy)?;
    println!("node  reputation  weight");
    for (node, w) in &lottery_weights {
        println!(
            "{:<5} {:<11} {}",
            node.to_string(),
            format_f64(reputation.scores[node]),
            format_f64(*w)
        );
    }

    let sampled = sample_recipients(&lottery_weights, policy.recipients, seed);
    let names: Vec<String> = sampled.iter().map(|n| n.to_string()).collect();
    println!("sampled {} recipients: {}", sampled.len(), names.join(", "));

    let total = 100_000u64;
    let entries = allocate(&sampled, &lottery_weights, total)?;
    let mut ledger = MockLedger::new();
    let key = [7u8; 32];
    ledger.register(donor, key, total);
    let message = PayoutMessage::build(donor, entries.clone(), 10, &key);
    ledger.execute_payout(&message)?;

    println!("allocation of {total} units:");
    let mut sum = 0;
    for (node, amount) in &entries {
        println!("  node {node}: {amount}");
        sum += amount;
    }
    println!("total allocated: {sum}");
    println!(
        "payout executed; donor balance {} -> {}",
        total,
        ledger.balance(donor)
    );
    Ok(())
}
