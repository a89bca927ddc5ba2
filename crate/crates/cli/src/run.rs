//! The training pipeline behind `train` and `synth`.

use std::fs::File;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;
use simpair::checkpoint::CheckpointWriter;
use simpair::diagnostics::{CollapseReport, Verdict};
use simpair::evaluation::{append_metrics_jsonl, evaluate_model, EvalProtocol, MetricResult};
use simpair::interactions::{cold_start_split, leave_one_out_split, InteractionDataset, ItemFeatures};
use simpair::trainer::{fit_with, Control, EpochReport, TrainObserver, TrainState};

use crate::config::{Holdout, ResolvedTrain};
use crate::manifest::{Artifacts, DatasetSummary, RunManifest, Seeds, SynthSettings};

pub const MANIFEST_FILE: &str = "manifest.json";
pub const DIAGNOSTICS_FILE: &str = "diagnostics.csv";
pub const METRICS_FILE: &str = "metrics.jsonl";
pub const SPLIT_FILE: &str = "split.json";
pub const REPORT_FILE: &str = "report.json";
pub const CHECKPOINT_DIR: &str = "checkpoints";

#[derive(Serialize)]
struct DiagnosticsRow {
    epoch: usize,
    num_batches: usize,
    total: f64,
    base: f64,
    cont: f64,
    hinge: f64,
    orth: f64,
    batch_d_p: f64,
    d_p: f64,
    mean_dim_variance: f64,
    mean_abs_correlation: Option<f64>,
    verdict: Option<&'static str>,
    validation: Option<f64>,
}

impl From<&EpochReport> for DiagnosticsRow {
    fn from(r: &EpochReport) -> Self {
        DiagnosticsRow {
            epoch: r.epoch,
            num_batches: r.num_batches,
            total: r.loss.total,
            base: r.loss.base,
            cont: r.loss.cont,
            hinge: r.loss.hinge,
            orth: r.loss.orth,
            batch_d_p: r.loss.d_p,
            d_p: r.d_p,
            mean_dim_variance: r.mean_dim_variance,
            mean_abs_correlation: r.mean_abs_correlation,
            verdict: r.verdict.map(Verdict::as_str),
            validation: r.validation,
        }
    }
}

/// Final state of a run, written as the report file.
#[derive(Serialize)]
pub struct RunReport {
    pub run_id: String,
    pub ablation: &'static str,
    pub epochs_completed: usize,
    pub collapse: CollapseReport,
    pub metrics: Vec<MetricResult>,
}

struct RunObserver {
    checkpoints: CheckpointWriter,
    csv: csv::Writer<File>,
    protocol: Option<EvalProtocol>,
    metrics_path: PathBuf,
    run_id: String,
    patience: Option<usize>,
    best: f64,
    since_best: usize,
    last_metrics: Vec<MetricResult>,
}

impl TrainObserver for RunObserver {
    fn on_epoch(&mut self, state: &TrainState, report: &mut EpochReport) -> simpair::Result<Control> {
        let mut control = Control::Continue;
        if let Some(protocol) = &self.protocol {
            let first = EvalProtocol {
                ks: protocol.ks[..1].to_vec(),
                ..protocol.clone()
            };
            let value = evaluate_model(&state.model, state.epoch, &first)?[0].value;
            report.validation = Some(value);
            if value > self.best {
                self.best = value;
                self.since_best = 0;
            } else {
                self.since_best += 1;
            }
            if self.patience.is_some_and(|p| self.since_best >= p) {
                control = Control::Stop;
            }
        }
        self.csv
            .serialize(DiagnosticsRow::from(&*report))
            .and_then(|_| self.csv.flush().map_err(csv::Error::from))
            .map_err(|e| simpair::Error::Io(std::io::Error::other(e)))?;
        Ok(control)
    }

    fn on_snapshot(&mut self, state: &TrainState) -> simpair::Result<()> {
        self.checkpoints.on_snapshot(state)?;
        if let Some(protocol) = &self.protocol {
            let metrics = evaluate_model(&state.model, state.epoch, protocol)?;
            append_metrics_jsonl(&self.metrics_path, &self.run_id, &metrics)?;
            self.last_metrics = metrics;
        }
        Ok(())
    }
}

/// Loads the data, splits it, trains, and writes every artifact into `out_dir`.
/// Nothing is written when loading fails.
pub fn run_training(
    cfg: &ResolvedTrain,
    out_dir: &Path,
    run_id: &str,
    command: &str,
    synthetic: Option<SynthSettings>,
) -> Result<RunReport> {
    let ds = InteractionDataset::load(&cfg.data, cfg.format)
        .with_context(|| format!("loading dataset {}", cfg.data.display()))?;
    let features = cfg
        .features
        .as_deref()
        .map(|p| ItemFeatures::load(p, &ds).with_context(|| format!("loading features {}", p.display())))
        .transpose()?;

    let mut protocol = None;
    let mut split = None;
    let train_ds = match cfg.holdout {
        Holdout::None => ds.clone(),
        Holdout::Warm => {
            let warm = leave_one_out_split(&ds, cfg.candidates, cfg.split_seed)
                .context("building the leave-one-out split")?;
            let train = warm.train.clone();
            split = Some(serde_json::to_string(&warm)?);
            protocol = Some(EvalProtocol {
                ks: cfg.ks.clone(),
                mapping: cfg.train.objective.mapping,
                warm: Some(warm),
                cold: None,
                user_scoring: cfg.user_scoring,
            });
            train
        }
        Holdout::Cold => {
            let feats = features.clone().expect("checked during resolution");
            let num_cold = cfg.cold_items.unwrap_or((ds.num_items() / 10).max(1));
            let cold = cold_start_split(&ds, num_cold, cfg.cold_negatives, cfg.split_seed)
                .context("building the cold-start split")?;
            let train = cold.train.clone();
            split = Some(serde_json::to_string(&cold)?);
            protocol = Some(EvalProtocol {
                ks: cfg.ks.clone(),
                mapping: cfg.train.objective.mapping,
                warm: None,
                cold: Some((cold, feats)),
                user_scoring: cfg.user_scoring,
            });
            train
        }
    };

    std::fs::create_dir_all(out_dir).with_context(|| format!("creating {}", out_dir.display()))?;
    let split_path = match split {
        Some(json) => {
            std::fs::write(out_dir.join(SPLIT_FILE), json)?;
            Some(PathBuf::from(SPLIT_FILE))
        }
        None => None,
    };
    let metrics_path = out_dir.join(METRICS_FILE);
    if metrics_path.exists() {
        std::fs::remove_file(&metrics_path)?;
    }
    let mut observer = RunObserver {
        checkpoints: CheckpointWriter::new(out_dir.join(CHECKPOINT_DIR)),
        csv: csv::Writer::from_path(out_dir.join(DIAGNOSTICS_FILE))?,
        protocol,
        metrics_path,
        run_id: run_id.to_string(),
        patience: cfg.patience,
        best: f64::NEG_INFINITY,
        since_best: 0,
        last_metrics: Vec::new(),
    };
    let state = fit_with(&train_ds, features.as_ref(), &cfg.train, &mut observer)?;
    let collapse = CollapseReport::compute(state.model.joint_matrix().view(), &cfg.train.thresholds)?;

    let report = RunReport {
        run_id: run_id.to_string(),
        ablation: cfg.ablation.name(),
        epochs_completed: state.epoch,
        collapse,
        metrics: observer.last_metrics.clone(),
    };
    std::fs::write(out_dir.join(REPORT_FILE), serde_json::to_string_pretty(&report)? + "\n")?;

    let checkpoints = observer
        .checkpoints
        .written()
        .iter()
        .map(|p| p.strip_prefix(out_dir).unwrap_or(p).to_path_buf())
        .collect();
    let manifest = RunManifest {
        run_id: run_id.to_string(),
        command: command.to_string(),
        tool_version: env!("CARGO_PKG_VERSION").to_string(),
        config: cfg.clone(),
        seeds: Seeds {
            train: cfg.train.seed,
            split: cfg.split_seed,
            synthetic: synthetic.as_ref().map(|s| s.seed),
        },
        synthetic,
        dataset: DatasetSummary {
            num_users: ds.num_users(),
            num_items: ds.num_items(),
            num_pairs: ds.num_pairs(),
            train_pairs: train_ds.num_pairs(),
        },
        epochs_completed: state.epoch,
        artifacts: Artifacts {
            checkpoints,
            diagnostics_csv: DIAGNOSTICS_FILE.into(),
            metrics_jsonl: split_path.as_ref().map(|_| PathBuf::from(METRICS_FILE)),
            split: split_path,
            report: REPORT_FILE.into(),
        },
    };
    manifest.save(&out_dir.join(MANIFEST_FILE))?;
    Ok(report)
}
