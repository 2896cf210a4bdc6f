//! Pipeline CLI: each subcommand runs one stage, writes its artifacts
//! atomically, and prints a one-line JSON result to stdout. Exit codes:
//! 0 success, 2 missing or corrupt artifact, 3 invalid configuration or
//! arguments.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use serde_json::{json, Value};

use gct::alignment::{remap_policy, AlignMethod};
use gct::analysis::{ablate, intervene, k_sweep};
use gct::artifact::{
    load_agent, load_alignment, load_concept_model, load_dataset, load_encoder, read_artifact,
    save_agent, save_alignment, save_bytes, save_concept_model, save_dataset, save_encoder,
    save_json, save_policy, ArtifactError,
};
use gct::bottleneck::{
    evaluate, finetune_reinforce, train_bottleneck, Agent, OpponentKind,
};
use gct::concepts::{collect_features, fit_kmeans};
use gct::config::RunConfig;
use gct::encoder::{collect_demos, train_encoder};

#[derive(Parser)]
#[command(name = "gct", version, about = "Concept-bottleneck Go 7x7 pipeline")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Collect heuristic self-play demonstrations.
    Collect {
        #[arg(long)]
        games: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the feature encoder by behavioral cloning.
    TrainEncoder {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 20)]
        epochs: usize,
        #[arg(long, default_value_t = 0.05)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Discover concepts by K-means over collected features.
    Discover {
        #[arg(long)]
        encoder: PathBuf,
        #[arg(long)]
        games: usize,
        #[arg(long, default_value_t = 64)]
        k: usize,
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Train the concept-bottleneck policy by behavioral cloning.
    TrainBottleneck {
        #[arg(long)]
        encoder: PathBuf,
        #[arg(long)]
        concepts: PathBuf,
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value_t = 20)]
        epochs: usize,
        #[arg(long, default_value_t = 0.05)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Align two concept models.
    Align {
        #[arg(long)]
        source: PathBuf,
        #[arg(long)]
        target: PathBuf,
        #[arg(long)]
        method: String,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Zero-shot transfer: remap the source policy into the target agent.
    Transfer {
        #[arg(long)]
        source_agent: PathBuf,
        #[arg(long)]
        target_agent: PathBuf,
        #[arg(long)]
        alignment: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Greedy evaluation against a scripted opponent; writes a CSV.
    Evaluate {
        #[arg(long)]
        agent: PathBuf,
        #[arg(long, default_value = "heuristic")]
        opponent: String,
        #[arg(long, default_value_t = 5)]
        seeds: usize,
        #[arg(long, default_value_t = 100)]
        games: usize,
        #[arg(long, default_value_t = 0)]
        base_seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Concept-override intervention experiment.
    Intervene {
        #[arg(long)]
        agent: PathBuf,
        #[arg(long, default_value_t = 500)]
        states: usize,
        #[arg(long, default_value_t = 5)]
        alternatives: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-concept ablation experiment.
    Ablate {
        #[arg(long)]
        agent: PathBuf,
        #[arg(long, default_value = "all")]
        concepts: String,
        #[arg(long, default_value_t = 500)]
        games: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// REINFORCE fine-tuning against the heuristic opponent.
    Finetune {
        #[arg(long)]
        agent: PathBuf,
        #[arg(long)]
        generations: usize,
        #[arg(long)]
        games_per_gen: usize,
        #[arg(long, default_value_t = 0.01)]
        lr: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Direct vs transferred win rate across a list of K values.
    SweepK {
        #[arg(long)]
        k: String,
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

enum CliError {
    /// Missing or corrupt artifact: exit 2.
    Artifact(String),
    /// Invalid configuration or arguments: exit 3.
    Invalid(String),
}

impl From<ArtifactError> for CliError {
    fn from(e: ArtifactError) -> Self {
        CliError::Artifact(e.to_string())
    }
}

fn invalid(e: impl std::fmt::Display) -> CliError {
    CliError::Invalid(e.to_string())
}

fn parse_opponent(s: &str) -> Result<OpponentKind, CliError> {
    match s {
        "heuristic" => Ok(OpponentKind::Heuristic),
        "random" => Ok(OpponentKind::Random),
        _ => Err(CliError::Invalid(format!(
            "unknown opponent {s:?}: expected heuristic or random"
        ))),
    }
}

fn run(cmd: Command) -> Result<Value, CliError> {
    match cmd {
        Command::Collect { games, seed, out } => {
            let data = collect_demos(games, seed).map_err(invalid)?;
            let hash = save_dataset(&out, &data, games, seed)?;
            Ok(json!({
                "command": "collect",
                "games": games,
                "samples": data.samples.len(),
                "out": out,
                "hash": hash,
            }))
        }
        Command::TrainEncoder {
            data,
            epochs,
            lr,
            seed,
            out,
        } => {
            let demos = load_dataset(&data)?;
            let enc = train_encoder(&demos, epochs, lr, seed).map_err(invalid)?;
            let hash = save_encoder(&out, &enc)?;
            Ok(json!({
                "command": "train-encoder",
                "samples": demos.samples.len(),
                "epochs": epochs,
                "final_loss": enc.loss_history.last(),
                "out": out,
                "hash": hash,
            }))
        }
        Command::Discover {
            encoder,
            games,
            k,
            seed,
            out,
        } => {
            let (enc_manifest, _) = read_artifact(&encoder)?;
            let enc = load_encoder(&encoder)?;
            let features = collect_features(&enc, games, seed).map_err(invalid)?;
            let model = fit_kmeans(&features, k, seed).map_err(invalid)?;
            let hash = save_concept_model(&out, &model, vec![enc_manifest.blob_hash])?;
            Ok(json!({
                "command": "discover",
                "features": features.len(),
                "k": k,
                "inertia": model.inertia,
                "out": out,
                "hash": hash,
            }))
        }
        Command::TrainBottleneck {
            encoder,
            concepts,
            data,
            epochs,
            lr,
            seed,
            out,
        } => {
            let (enc_manifest, _) = read_artifact(&encoder)?;
            let (cm_manifest, _) = read_artifact(&concepts)?;
            let enc = load_encoder(&encoder)?;
            let cm = load_concept_model(&concepts)?;
            let demos = load_dataset(&data)?;
            let policy = train_bottleneck(&enc, &cm, &demos, epochs, lr, seed).map_err(invalid)?;
            let hash = save_policy(
                &out,
                &policy,
                vec![enc_manifest.blob_hash, cm_manifest.blob_hash],
            )?;
            Ok(json!({
                "command": "train-bottleneck",
                "samples": demos.samples.len(),
                "k": policy.k,
                "out": out,
                "hash": hash,
            }))
        }
        Command::Align {
            source,
            target,
            method,
            seed,
            out,
        } => {
            let method = AlignMethod::parse(&method)
                .ok_or_else(|| CliError::Invalid(format!("unknown alignment method {method:?}")))?;
            let a = load_concept_model(&source)?;
            let b = load_concept_model(&target)?;
            let map = gct::alignment::align(&a, &b, method, seed).map_err(invalid)?;
            save_alignment(&out, &map)?;
            Ok(json!({
                "command": "align",
                "method": map.method,
                "k": map.k,
                "mean_matched_similarity": map.mean_matched_similarity,
                "out": out,
            }))
        }
        Command::Transfer {
            source_agent,
            target_agent,
            alignment,
            out,
        } => {
            let src = load_agent(&source_agent)?;
            let tgt = load_agent(&target_agent)?;
            let map = load_alignment(&alignment)?;
            let policy = remap_policy(&src.policy, &map).map_err(invalid)?;
            let agent = Agent {
                encoder: tgt.encoder,
                concept_model: tgt.concept_model,
                policy,
            };
            save_agent(&out, &agent)?;
            Ok(json!({
                "command": "transfer",
                "method": map.method,
                "k": map.k,
                "out": out,
            }))
        }
        Command::Evaluate {
            agent,
            opponent,
            seeds,
            games,
            base_seed,
            out,
        } => {
            let opponent = parse_opponent(&opponent)?;
            if seeds == 0 || games == 0 {
                return Err(CliError::Invalid(
                    "seeds and games must be >= 1".to_string(),
                ));
            }
            let ag = load_agent(&agent)?;
            let report = evaluate(&ag, opponent, seeds, games, base_seed);
            let mut csv = String::from("seed,wins,games,win_rate\n");
            for (i, wr) in report.per_seed_win_rates.iter().enumerate() {
                let wins = (wr * games as f64).round() as usize;
                csv.push_str(&format!("{i},{wins},{games},{wr}\n"));
            }
            save_bytes(&out, csv.as_bytes())?;
            Ok(json!({
                "command": "evaluate",
                "report": report,
                "out": out,
            }))
        }
        Command::Intervene {
            agent,
            states,
            alternatives,
            seed,
            out,
        } => {
            let ag = load_agent(&agent)?;
            let report = intervene(&ag, states, alternatives, seed).map_err(invalid)?;
            save_json(&out, &report)?;
            Ok(json!({
                "command": "intervene",
                "change_rate": report.change_rate,
                "null_p0": report.null_p0,
                "p_value": report.p_value,
                "out": out,
            }))
        }
        Command::Ablate {
            agent,
            concepts,
            games,
            seed,
            out,
        } => {
            let ag = load_agent(&agent)?;
            let list: Option<Vec<usize>> = if concepts == "all" {
                None
            } else {
                Some(
                    concepts
                        .split(',')
                        .map(|s| {
                            s.trim().parse::<usize>().map_err(|_| {
                                CliError::Invalid(format!("bad concept id {s:?}"))
                            })
                        })
                        .collect::<Result<_, _>>()?,
                )
            };
            if let Some(ids) = &list {
                if let Some(&bad) = ids.iter().find(|&&c| c >= ag.policy.k) {
                    return Err(CliError::Invalid(format!(
                        "concept {bad} out of range for k={}",
                        ag.policy.k
                    )));
                }
            }
            let report = ablate(&ag, list.as_deref(), games, seed).map_err(invalid)?;
            save_json(&out, &report)?;
            let max_drop = report
                .rows
                .iter()
                .map(|r| r.drop)
                .fold(f64::NEG_INFINITY, f64::max);
            Ok(json!({
                "command": "ablate",
                "baseline_win_rate": report.baseline_win_rate,
                "max_drop": max_drop,
                "out": out,
            }))
        }
        Command::Finetune {
            agent,
            generations,
            games_per_gen,
            lr,
            seed,
            out,
        } => {
            if generations == 0 || games_per_gen == 0 {
                return Err(CliError::Invalid(
                    "generations and games-per-gen must be >= 1".to_string(),
                ));
            }
            let ag = load_agent(&agent)?;
            let (policy, curve) = finetune_reinforce(&ag, generations, games_per_gen, lr, seed);
            let tuned = Agent {
                encoder: ag.encoder,
                concept_model: ag.concept_model,
                policy,
            };
            save_agent(&out, &tuned)?;
            save_json(&out.join("curve.json"), &curve)?;
            Ok(json!({
                "command": "finetune",
                "generations": generations,
                "final_win_rate": curve.last(),
                "curve": curve,
                "out": out,
            }))
        }
        Command::SweepK { k, config, out } => {
            let cfg = match config {
                Some(path) => RunConfig::from_file(&path).map_err(invalid)?,
                None => RunConfig::default(),
            };
            let ks: Vec<usize> = k
                .split(',')
                .map(|s| {
                    s.trim()
                        .parse::<usize>()
                        .ok()
                        .filter(|&x| x >= 1)
                        .ok_or_else(|| CliError::Invalid(format!("bad k value {s:?}")))
                })
                .collect::<Result<_, _>>()?;
            let rows = k_sweep(&ks, &cfg.budget(), cfg.eval_seeds, cfg.eval_games, cfg.seed)
                .map_err(invalid)?;
            let mut csv = String::from("k,direct_win_rate,transfer_win_rate\n");
            for row in &rows {
                csv.push_str(&format!(
                    "{},{},{}\n",
                    row.k, row.direct_win_rate, row.transfer_win_rate
                ));
            }
            save_bytes(&out, csv.as_bytes())?;
            Ok(json!({
                "command": "sweep-k",
                "rows": rows,
                "out": out,
            }))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(result) => {
            println!("{result}");
            ExitCode::SUCCESS
        }
        Err(CliError::Artifact(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(CliError::Invalid(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(3)
        }
    }
}
