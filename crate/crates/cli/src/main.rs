//! Command-line front end: train, evaluate, split, diagnose, generate synthetic graphs and
//! check gradients.

mod config;
mod manifest;
mod run;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use simpair::checkpoint::Checkpoint;
use simpair::diagnostics::{CollapseReport, CollapseThresholds};
use simpair::encoder::Mapping;
use simpair::evaluation::{evaluate_model, EvalProtocol, UserScoring};
use simpair::interactions::{
    cold_start_split, count_components, gen_synthetic_components, leave_one_out_split, ColdSplit,
    InteractionDataset, InteractionFormat, ItemFeatures, WarmSplit, DEFAULT_COLD_NEGATIVES,
    DEFAULT_WARM_CANDIDATES,
};
use simpair::objective::terms::{check_terms, TermCheckConfig};

use config::{KList, Preset, ResolvedTrain, TrainFlags};
use manifest::SynthSettings;

#[derive(Parser)]
#[command(name = "simpair", version, about = "Similar-pair embedding training with collapse diagnostics")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train on an interaction file and write checkpoints, diagnostics and metrics.
    Train {
        /// Interaction file; may also come from --config or --manifest.
        #[arg(long)]
        data: Option<PathBuf>,
        #[arg(long, default_value = "simpair-run")]
        out_dir: PathBuf,
        /// Defaults to the output directory's name.
        #[arg(long)]
        run_id: Option<String>,
        #[command(flatten)]
        flags: TrainFlags,
    },
    /// Score a checkpoint on a saved split.
    Eval {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Split file written by `split` or `train`.
        #[arg(long)]
        split: PathBuf,
        /// Item features, required for cold-start splits.
        #[arg(long)]
        features: Option<PathBuf>,
        #[arg(long, default_value = "10")]
        k: KList,
        #[arg(long, default_value = "dot")]
        mapping: Mapping,
        #[arg(long, default_value = "table")]
        user_scoring: UserScoring,
        /// Metrics file (JSON lines); overwritten.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value = "eval")]
        run_id: String,
    },
    /// Build a warm or cold evaluation split and save it as JSON.
    Split {
        #[arg(long)]
        data: PathBuf,
        #[arg(long, default_value = "pair-list")]
        format: InteractionFormat,
        #[arg(long, value_enum, default_value = "warm")]
        kind: SplitKind,
        #[arg(long, default_value_t = DEFAULT_WARM_CANDIDATES)]
        candidates: usize,
        /// Defaults to a tenth of the items.
        #[arg(long)]
        cold_items: Option<usize>,
        #[arg(long, default_value_t = DEFAULT_COLD_NEGATIVES)]
        cold_negatives: usize,
        #[arg(long, default_value = "0")]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Collapse diagnostics of a checkpoint.
    Diagnose {
        #[arg(long)]
        checkpoint: PathBuf,
        /// Also write the report here.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate disjoint random bipartite components, optionally training on them.
    Synth {
        #[arg(long, default_value = "4")]
        components: usize,
        #[arg(long, default_value = "50")]
        users_per: usize,
        #[arg(long, default_value = "50")]
        items_per: usize,
        #[arg(long, default_value = "0.1")]
        edge_prob: f64,
        /// Generator seed; also the training seed unless --seed is given.
        #[arg(long = "graph-seed", default_value = "0")]
        graph_seed: u64,
        #[arg(long, default_value = "simpair-synth")]
        out_dir: PathBuf,
        #[arg(long)]
        run_id: Option<String>,
        /// Train on the generated graph (implied by --ablate).
        #[arg(long)]
        train: bool,
        #[command(flatten)]
        flags: TrainFlags,
    },
    /// Compare analytic gradients of every loss term against central differences.
    Gradcheck {
        #[arg(long, default_value = "1e-5")]
        eps: f64,
        #[arg(long, default_value = "5")]
        dim: usize,
        #[arg(long, default_value = "0")]
        seed: u64,
        #[arg(long, value_enum, default_value = "both")]
        mapping: MappingChoice,
        #[arg(long, default_value = "1e-4")]
        tolerance: f64,
        #[arg(long, hide = true)]
        corrupt_term: Option<String>,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum SplitKind {
    Warm,
    Cold,
}

#[derive(Clone, Copy, ValueEnum)]
enum MappingChoice {
    Dot,
    Cosine,
    Both,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match dispatch(Cli::parse().command) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn dispatch(command: Command) -> Result<ExitCode> {
    match command {
        Command::Train {
            data,
            out_dir,
            run_id,
            flags,
        } => {
            let cfg = ResolvedTrain::resolve(data, &flags, Preset::Standard)?;
            let run_id = run_id.unwrap_or_else(|| default_run_id(&out_dir));
            let report = run::run_training(&cfg, &out_dir, &run_id, "train", None)?;
            print_outcome(&report, &out_dir);
        }
        Command::Eval {
            checkpoint,
            split,
            features,
            k,
            mapping,
            user_scoring,
            out,
            run_id,
        } => eval(&checkpoint, &split, features.as_deref(), k.0, mapping, user_scoring, out.as_deref(), &run_id)?,
        Command::Split {
            data,
            format,
            kind,
            candidates,
            cold_items,
            cold_negatives,
            seed,
            out,
        } => {
            let ds = InteractionDataset::load(&data, format)
                .with_context(|| format!("loading dataset {}", data.display()))?;
            match kind {
                SplitKind::Warm => {
                    let s = leave_one_out_split(&ds, candidates, seed)?;
                    s.save(&out)?;
                    println!("{} test cases, {} training pairs", s.test_cases.len(), s.train.num_pairs());
                }
                SplitKind::Cold => {
                    let n = cold_items.unwrap_or((ds.num_items() / 10).max(1));
                    let s = cold_start_split(&ds, n, cold_negatives, seed)?;
                    s.save(&out)?;
                    println!("{} cold items, {} training pairs", s.cold_items.len(), s.train.num_pairs());
                }
            }
        }
        Command::Diagnose { checkpoint, out } => {
            let ck = Checkpoint::load(&checkpoint)?;
            let report = CollapseReport::compute(ck.model.joint_matrix().view(), &CollapseThresholds::default())?;
            let text = serde_json::to_string_pretty(&report)?;
            if let Some(out) = out {
                std::fs::write(&out, text.clone() + "\n")?;
            }
            println!("{text}");
        }
        Command::Synth {
            components,
            users_per,
            items_per,
            edge_prob,
            graph_seed,
            out_dir,
            run_id,
            train,
            mut flags,
        } => {
            let settings = SynthSettings {
                components,
                users_per_component: users_per,
                items_per_component: items_per,
                edge_prob,
                seed: graph_seed,
            };
            let graph = gen_synthetic_components(components, users_per, items_per, edge_prob, graph_seed)?;
            std::fs::create_dir_all(&out_dir)?;
            let pairs = out_dir.join("pairs.txt");
            graph.dataset.save_pair_list(&pairs)?;
            write_components(&out_dir.join("components.csv"), &graph)?;
            println!(
                "{} users, {} items, {} pairs, {} components",
                graph.dataset.num_users(),
                graph.dataset.num_items(),
                graph.dataset.num_pairs(),
                count_components(&graph.dataset)
            );
            if train || flags.ablate.is_some() {
                flags.seed = flags.seed.or(Some(graph_seed));
                let cfg = ResolvedTrain::resolve(Some(pairs), &flags, Preset::Synthetic)?;
                let run_id = run_id.unwrap_or_else(|| default_run_id(&out_dir));
                let report = run::run_training(&cfg, &out_dir, &run_id, "synth", Some(settings))?;
                print_outcome(&report, &out_dir);
            }
        }
        Command::Gradcheck {
            eps,
            dim,
            seed,
            mapping,
            tolerance,
            corrupt_term,
        } => return gradcheck(eps, dim, seed, mapping, tolerance, corrupt_term),
    }
    Ok(ExitCode::SUCCESS)
}

fn default_run_id(out_dir: &Path) -> String {
    out_dir
        .file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into())
}

fn print_outcome(report: &run::RunReport, out_dir: &Path) {
    let c = &report.collapse;
    println!(
        "run {} ({}): {} epochs, verdict {}, d_p {:.6}, mean variance {:.6}, mean |corr| {:.4}",
        report.run_id,
        report.ablation,
        report.epochs_completed,
        c.verdict.as_str(),
        c.d_p,
        c.mean_dim_variance,
        c.mean_abs_correlation
    );
    for m in &report.metrics {
        println!("{}@{} = {:.4} over {} cases", m.metric, m.k, m.value, m.num_cases);
    }
    println!("artifacts in {}", out_dir.display());
}

#[derive(Serialize)]
struct ComponentRow<'a> {
    kind: &'static str,
    id: &'a str,
    component: usize,
}

fn write_components(path: &Path, graph: &simpair::interactions::SyntheticGraph) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    let ds = &graph.dataset;
    for (u, &c) in graph.user_component.iter().enumerate() {
        let id = ds.user_ids().id(u).unwrap_or_default();
        w.serialize(ComponentRow { kind: "user", id, component: c })?;
    }
    for (i, &c) in graph.item_component.iter().enumerate() {
        let id = ds.item_ids().id(i).unwrap_or_default();
        w.serialize(ComponentRow { kind: "item", id, component: c })?;
    }
    w.flush()?;
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn eval(
    checkpoint: &Path,
    split_path: &Path,
    features: Option<&Path>,
    ks: Vec<usize>,
    mapping: Mapping,
    user_scoring: UserScoring,
    out: Option<&Path>,
    run_id: &str,
) -> Result<()> {
    let ck = Checkpoint::load(checkpoint)?;
    let text = std::fs::read_to_string(split_path)
        .with_context(|| format!("reading split {}", split_path.display()))?;
    let value: serde_json::Value = serde_json::from_str(&text)?;
    let mut protocol = EvalProtocol {
        ks,
        mapping,
        warm: None,
        cold: None,
        user_scoring,
    };
    let train = if value.get("test_cases").is_some() {
        let split: WarmSplit = serde_json::from_value(value)?;
        let train = split.train.clone();
        protocol.warm = Some(split);
        train
    } else {
        let split: ColdSplit = serde_json::from_value(value)?;
        let Some(fp) = features else {
            bail!("a cold-start split needs --features");
        };
        let feats = ItemFeatures::load(fp, &split.train)?;
        let train = split.train.clone();
        protocol.cold = Some((split, feats));
        train
    };
    if train.num_users() != ck.model.num_users() || train.num_items() != ck.model.num_items() {
        bail!(
            "checkpoint has {} users and {} items but the split has {} and {}",
            ck.model.num_users(),
            ck.model.num_items(),
            train.num_users(),
            train.num_items()
        );
    }
    let results = evaluate_model(&ck.model, ck.epoch, &protocol)?;
    if let Some(out) = out {
        if out.exists() {
            std::fs::remove_file(out)?;
        }
        simpair::evaluation::append_metrics_jsonl(out, run_id, &results)?;
    }
    for m in &results {
        println!("{}@{} = {:.4} over {} cases", m.metric, m.k, m.value, m.num_cases);
    }
    Ok(())
}

fn gradcheck(
    eps: f64,
    dim: usize,
    seed: u64,
    mapping: MappingChoice,
    tolerance: f64,
    corrupt: Option<String>,
) -> Result<ExitCode> {
    let mappings: &[Mapping] = match mapping {
        MappingChoice::Dot => &[Mapping::Dot],
        MappingChoice::Cosine => &[Mapping::Cosine],
        MappingChoice::Both => &[Mapping::Dot, Mapping::Cosine],
    };
    let mut worst = 0.0f64;
    for &m in mappings {
        let config = TermCheckConfig {
            dim,
            seed,
            eps,
            mapping: m,
            corrupt: corrupt.clone(),
            ..TermCheckConfig::default()
        };
        for check in check_terms(&config)? {
            let status = if check.skipped_kink {
                "skipped (kink)"
            } else if check.max_rel_error < tolerance {
                "ok"
            } else {
                "FAIL"
            };
            println!(
                "{:<7} {:<24} max rel error {:.3e} over {} coords  {status}",
                format!("{m:?}").to_lowercase(),
                check.term,
                check.max_rel_error,
                check.coords_checked
            );
            if !check.skipped_kink {
                worst = worst.max(check.max_rel_error);
            }
        }
    }
    if worst.is_nan() || worst >= tolerance {
        eprintln!("gradient check failed: worst relative error {worst:.3e} >= {tolerance:e}");
        return Ok(ExitCode::FAILURE);
    }
    println!("all terms within {tolerance:e} (worst {worst:.3e})");
    Ok(ExitCode::SUCCESS)
}
