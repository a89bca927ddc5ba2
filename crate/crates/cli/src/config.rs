//! Flat `key = value` config files and resolution of training settings.
//!
//! Precedence: command-line flags, then the config file, then a previous run's
//! manifest, then built-in defaults.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::{Deserialize, Serialize};
use simpair::encoder::{Mapping, DEFAULT_INIT_SCALE};
use simpair::interactions::{InteractionFormat, DEFAULT_COLD_NEGATIVES, DEFAULT_WARM_CANDIDATES};
use simpair::objective::{Ablation, BaseLoss, ObjectiveConfig, OrthForm};
use simpair::trainer::{synthetic_config, TrainConfig};

#[derive(Debug, Default)]
pub struct ConfigFile {
    path: PathBuf,
    values: BTreeMap<String, String>,
}

impl ConfigFile {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config file {}", path.display()))?;
        Self::parse(&text, path)
    }

    pub fn parse(text: &str, path: &Path) -> Result<Self> {
        let mut values = BTreeMap::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((k, v)) = line.split_once('=') else {
                bail!("{}:{}: expected key = value", path.display(), n + 1);
            };
            let key = k.trim().replace('_', "-");
            if !KNOWN_KEYS.contains(&key.as_str()) {
                bail!("{}:{}: unknown key {key:?}", path.display(), n + 1);
            }
            values.insert(key, v.trim().to_string());
        }
        Ok(ConfigFile {
            path: path.to_path_buf(),
            values,
        })
    }

    pub fn get<T: FromStr>(&self, key: &str) -> Result<Option<T>>
    where
        T::Err: std::fmt::Display,
    {
        debug_assert!(KNOWN_KEYS.contains(&key), "{key}");
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => v
                .parse()
                .map(Some)
                .map_err(|e| anyhow::anyhow!("{}: {key} = {v}: {e}", self.path.display())),
        }
    }
}

const KNOWN_KEYS: &[&str] = &[
    "data",
    "format",
    "features",
    "dim",
    "batch",
    "lr",
    "epochs",
    "lambda1",
    "lambda2",
    "lambda3",
    "margin-p",
    "margin-d",
    "base",
    "mapping",
    "seed",
    "ablate",
    "init-scale",
    "snapshot-every",
    "orth-form",
    "negatives",
    "neg-weight",
    "holdout",
    "candidates",
    "cold-items",
    "cold-negatives",
    "split-seed",
    "k",
    "patience",
    "full-diagnostics",
    "user-scoring",
];

/// How the data is split before training.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Holdout {
    /// Train on everything.
    None,
    /// Leave one item out per user, ranked against sampled candidates.
    Warm,
    /// Hold out whole items, ranked against users from their features.
    Cold,
}

impl FromStr for Holdout {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        <Holdout as clap::ValueEnum>::from_str(s, true)
    }
}

/// Comma-separated list of cutoffs.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct KList(pub Vec<usize>);

impl FromStr for KList {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        let ks = s
            .split(',')
            .map(|p| p.trim().parse::<usize>().map_err(|e| format!("{p:?}: {e}")))
            .collect::<std::result::Result<Vec<_>, _>>()?;
        if ks.is_empty() || ks.contains(&0) {
            return Err("cutoffs must be positive".into());
        }
        Ok(KList(ks))
    }
}

/// Training flags shared by `train` and `synth`. Every flag is optional so that unset
/// flags fall through to the config file and defaults.
#[derive(Args, Clone, Debug, Default)]
pub struct TrainFlags {
    /// Flat key = value file with any of the settings below.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Manifest of a previous run whose resolved settings serve as defaults.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long)]
    pub format: Option<InteractionFormat>,
    /// Item side information, one `item_id v1 .. vf` line per item; enables the feature
    /// encoder.
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lambda1: Option<f64>,
    #[arg(long)]
    pub lambda2: Option<f64>,
    #[arg(long)]
    pub lambda3: Option<f64>,
    #[arg(long)]
    pub margin_p: Option<f64>,
    #[arg(long)]
    pub margin_d: Option<f64>,
    /// cont, mse, bce, bpr or contrastive-neg.
    #[arg(long)]
    pub base: Option<BaseLoss>,
    /// dot or cosine.
    #[arg(long)]
    pub mapping: Option<Mapping>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// none, no-orth, no-hinge or only-cont.
    #[arg(long)]
    pub ablate: Option<Ablation>,
    #[arg(long)]
    pub init_scale: Option<f64>,
    /// Checkpoint period in epochs; 0 keeps only the final snapshot.
    #[arg(long)]
    pub snapshot_every: Option<usize>,
    /// squared or raw.
    #[arg(long)]
    pub orth_form: Option<OrthForm>,
    /// Sampled negatives per similar pair for the baselines.
    #[arg(long)]
    pub negatives: Option<usize>,
    #[arg(long)]
    pub neg_weight: Option<f64>,
    #[arg(long)]
    pub holdout: Option<Holdout>,
    /// Sampled unobserved candidates per warm test case.
    #[arg(long)]
    pub candidates: Option<usize>,
    /// Items held out for the cold-start split.
    #[arg(long)]
    pub cold_items: Option<usize>,
    /// Sampled non-interacting users per cold item.
    #[arg(long)]
    pub cold_negatives: Option<usize>,
    #[arg(long)]
    pub split_seed: Option<u64>,
    /// Cutoffs, comma separated; the first one is the per-epoch validation metric.
    #[arg(long)]
    pub k: Option<KList>,
    /// Stop after this many epochs without validation improvement.
    #[arg(long)]
    pub patience: Option<usize>,
    /// Correlation and verdict every epoch (true/false).
    #[arg(long)]
    pub full_diagnostics: Option<bool>,
    /// table or aggregate: user representation for cold-start scoring.
    #[arg(long)]
    pub user_scoring: Option<simpair::evaluation::UserScoring>,
}

/// Every setting of a training run after resolution; recorded in the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResolvedTrain {
    pub data: PathBuf,
    pub format: InteractionFormat,
    pub features: Option<PathBuf>,
    pub ablation: Ablation,
    pub train: TrainConfig,
    pub holdout: Holdout,
    pub candidates: usize,
    pub cold_items: Option<usize>,
    pub cold_negatives: usize,
    pub split_seed: u64,
    pub ks: Vec<usize>,
    pub patience: Option<usize>,
    pub user_scoring: simpair::evaluation::UserScoring,
}

/// Which built-in defaults apply.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Preset {
    /// Benchmark-scale defaults.
    Standard,
    /// Small synthetic component graphs.
    Synthetic,
}

/// Picks the flag, then the file value, then the previous manifest's value.
fn pick<T: FromStr + Clone>(
    flag: &Option<T>,
    file: Option<&ConfigFile>,
    key: &str,
    previous: Option<T>,
) -> Result<Option<T>>
where
    T::Err: std::fmt::Display,
{
    if let Some(v) = flag {
        return Ok(Some(v.clone()));
    }
    if let Some(f) = file {
        if let Some(v) = f.get(key)? {
            return Ok(Some(v));
        }
    }
    Ok(previous)
}

impl ResolvedTrain {
    pub fn resolve(data: Option<PathBuf>, flags: &TrainFlags, preset: Preset) -> Result<Self> {
        let file = flags.config.as_deref().map(ConfigFile::load).transpose()?;
        let file = file.as_ref();
        let prev: Option<ResolvedTrain> = match &flags.manifest {
            Some(p) => Some(crate::manifest::RunManifest::load(p)?.config),
            None => None,
        };
        let p = prev.as_ref();
        let pt = p.map(|r| &r.train);
        let po = pt.map(|t| &t.objective);

        let data = match data {
            Some(d) => Some(d),
            None => pick(&None, file, "data", p.map(|r| r.data.clone()))?,
        };
        let Some(data) = data else {
            bail!("no dataset given (--data or `data =` in the config file)");
        };
        let format = pick(&flags.format, file, "format", p.map(|r| r.format))?
            .unwrap_or(InteractionFormat::PairList);
        let features = pick(&flags.features, file, "features", p.and_then(|r| r.features.clone()))?;
        let feature_mode = features.is_some();
        let base_loss = pick(&flags.base, file, "base", po.map(|o| o.base_loss))?.unwrap_or_default();
        let baseline = base_loss.needs_negatives();

        let synth = synthetic_config(0);
        let (d_lambda1, d_lambda2, d_lambda3) = match (preset, baseline) {
            (_, true) => (1.0, 0.0, 0.0),
            (Preset::Synthetic, false) => (
                synth.objective.lambda1,
                synth.objective.lambda2,
                synth.objective.lambda3,
            ),
            (Preset::Standard, false) => {
                let o = ObjectiveConfig::default();
                (o.lambda1, o.lambda2, o.lambda3)
            }
        };
        let d_margin_p = if feature_mode { 0.1 } else { ObjectiveConfig::default().margin_p };
        let (d_dim, d_batch) = match preset {
            Preset::Synthetic => (synth.dim, synth.batch_size),
            Preset::Standard if feature_mode => (100, 32),
            Preset::Standard => (1000, 128),
        };
        let defaults = ObjectiveConfig::default();
        let objective = ObjectiveConfig {
            base_loss,
            lambda1: pick(&flags.lambda1, file, "lambda1", po.map(|o| o.lambda1))?.unwrap_or(d_lambda1),
            lambda2: pick(&flags.lambda2, file, "lambda2", po.map(|o| o.lambda2))?.unwrap_or(d_lambda2),
            lambda3: pick(&flags.lambda3, file, "lambda3", po.map(|o| o.lambda3))?.unwrap_or(d_lambda3),
            margin_p: pick(&flags.margin_p, file, "margin-p", po.map(|o| o.margin_p))?.unwrap_or(d_margin_p),
            margin_d: pick(&flags.margin_d, file, "margin-d", po.map(|o| o.margin_d))?
                .unwrap_or(defaults.margin_d),
            mapping: pick(&flags.mapping, file, "mapping", po.map(|o| o.mapping))?.unwrap_or_default(),
            neg_weight: pick(&flags.neg_weight, file, "neg-weight", po.map(|o| o.neg_weight))?
                .unwrap_or(defaults.neg_weight),
            orth_form: pick(&flags.orth_form, file, "orth-form", po.map(|o| o.orth_form))?.unwrap_or_default(),
            negatives_per_positive: pick(
                &flags.negatives,
                file,
                "negatives",
                po.map(|o| o.negatives_per_positive),
            )?
            .unwrap_or(defaults.negatives_per_positive),
        };
        let ablation = pick(&flags.ablate, file, "ablate", p.map(|r| r.ablation))?.unwrap_or_default();
        let mut objective = objective;
        ablation.apply(&mut objective);

        let seed = pick(&flags.seed, file, "seed", pt.map(|t| t.seed))?.unwrap_or(0);
        let train = TrainConfig {
            epochs: pick(&flags.epochs, file, "epochs", pt.map(|t| t.epochs))?.unwrap_or(50),
            learning_rate: pick(&flags.lr, file, "lr", pt.map(|t| t.learning_rate))?.unwrap_or(0.5),
            batch_size: pick(&flags.batch, file, "batch", pt.map(|t| t.batch_size))?.unwrap_or(d_batch),
            objective,
            seed,
            snapshot_every: pick(&flags.snapshot_every, file, "snapshot-every", pt.map(|t| t.snapshot_every))?
                .unwrap_or(10),
            dim: pick(&flags.dim, file, "dim", pt.map(|t| t.dim))?.unwrap_or(d_dim),
            init_scale: pick(&flags.init_scale, file, "init-scale", pt.map(|t| t.init_scale))?
                .unwrap_or(DEFAULT_INIT_SCALE),
            full_diagnostics: pick(
                &flags.full_diagnostics,
                file,
                "full-diagnostics",
                pt.map(|t| t.full_diagnostics),
            )?
            .unwrap_or(true),
            thresholds: pt.map(|t| t.thresholds).unwrap_or_default(),
        };
        train.validate()?;

        let d_holdout = match (preset, feature_mode) {
            (Preset::Synthetic, _) => Holdout::None,
            (Preset::Standard, true) => Holdout::Cold,
            (Preset::Standard, false) => Holdout::Warm,
        };
        let holdout = pick(&flags.holdout, file, "holdout", p.map(|r| r.holdout))?.unwrap_or(d_holdout);
        if holdout == Holdout::Cold && !feature_mode {
            bail!("a cold-start holdout needs item features (--features)");
        }
        let ks = pick(&flags.k, file, "k", p.map(|r| KList(r.ks.clone())))?
            .unwrap_or_else(|| KList(vec![if feature_mode { 100 } else { 10 }]))
            .0;
        let candidates = pick(&flags.candidates, file, "candidates", p.map(|r| r.candidates))?
            .unwrap_or(DEFAULT_WARM_CANDIDATES);
        if holdout == Holdout::Warm && ks.iter().any(|&k| k > candidates + 1) {
            bail!("K must not exceed the {} candidates per test case", candidates + 1);
        }
        Ok(ResolvedTrain {
            data,
            format,
            features,
            ablation,
            train,
            holdout,
            candidates,
            cold_items: pick(&flags.cold_items, file, "cold-items", p.and_then(|r| r.cold_items))?,
            cold_negatives: pick(&flags.cold_negatives, file, "cold-negatives", p.map(|r| r.cold_negatives))?
                .unwrap_or(DEFAULT_COLD_NEGATIVES),
            split_seed: pick(&flags.split_seed, file, "split-seed", p.map(|r| r.split_seed))?.unwrap_or(seed),
            ks,
            patience: pick(&flags.patience, file, "patience", p.and_then(|r| r.patience))?,
            user_scoring: pick(&flags.user_scoring, file, "user-scoring", p.map(|r| r.user_scoring))?
                .unwrap_or_default(),
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn file(text: &str) -> ConfigFile {
        ConfigFile::parse(text, Path::new("test.cfg")).unwrap()
    }

    #[test]
    fn parses_flat_files() {
        let f = file("# comment\nlambda2 = 0.5\nmargin_p=0.2 # trailing\n\n");
        assert_eq!(f.get::<f64>("lambda2").unwrap(), Some(0.5));
        assert_eq!(f.get::<f64>("margin-p").unwrap(), Some(0.2));
        assert_eq!(f.get::<f64>("lambda1").unwrap(), None);
        assert!(ConfigFile::parse("nonsense", Path::new("x")).is_err());
        assert!(ConfigFile::parse("colour = red", Path::new("x")).is_err());
        assert!(file("dim = many").get::<usize>("dim").is_err());
    }

    #[test]
    fn flags_beat_file_beat_defaults() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = dir.path().join("run.cfg");
        std::fs::write(&cfg, "lambda2 = 0.5\nlambda3 = 0.25\ndim = 16\n").unwrap();
        let flags = TrainFlags {
            config: Some(cfg),
            lambda2: Some(2.0),
            ..Default::default()
        };
        let r = ResolvedTrain::resolve(Some("d.txt".into()), &flags, Preset::Standard).unwrap();
        assert_eq!(r.train.objective.lambda2, 2.0);
        assert_eq!(r.train.objective.lambda3, 0.25);
        assert_eq!(r.train.dim, 16);
        assert_eq!(r.train.objective.lambda1, 0.01);
        assert_eq!(r.train.learning_rate, 0.5);
        assert_eq!(r.train.epochs, 50);
        assert_eq!(r.train.objective.margin_p, 0.01);
        assert_eq!(r.holdout, Holdout::Warm);
    }

    #[test]
    fn feature_mode_and_baseline_defaults() {
        let flags = TrainFlags {
            features: Some("f.txt".into()),
            ..Default::default()
        };
        let r = ResolvedTrain::resolve(Some("d.txt".into()), &flags, Preset::Standard).unwrap();
        assert_eq!(r.train.objective.margin_p, 0.1);
        assert_eq!((r.train.dim, r.train.batch_size), (100, 32));
        assert_eq!(r.holdout, Holdout::Cold);

        let flags = TrainFlags {
            base: Some(BaseLoss::Bpr),
            ..Default::default()
        };
        let r = ResolvedTrain::resolve(Some("d.txt".into()), &flags, Preset::Standard).unwrap();
        assert_eq!(r.train.objective.lambda2, 0.0);
        assert_eq!(r.train.objective.lambda3, 0.0);
    }

    #[test]
    fn ablation_zeroes_weights() {
        let flags = TrainFlags {
            ablate: Some(Ablation::OnlyCont),
            lambda2: Some(3.0),
            ..Default::default()
        };
        let r = ResolvedTrain::resolve(Some("d.txt".into()), &flags, Preset::Synthetic).unwrap();
        assert_eq!(r.train.objective.lambda2, 0.0);
        assert_eq!(r.train.objective.lambda3, 0.0);
        assert_eq!(r.train.objective.lambda1, 1.0);
    }

    #[test]
    fn invalid_values_are_rejected() {
        let flags = TrainFlags {
            epochs: Some(0),
            ..Default::default()
        };
        assert!(ResolvedTrain::resolve(Some("d.txt".into()), &flags, Preset::Standard).is_err());
        assert!(ResolvedTrain::resolve(None, &TrainFlags::default(), Preset::Standard).is_err());
        assert!("5,0".parse::<KList>().is_err());
        assert_eq!("5, 10".parse::<KList>().unwrap(), KList(vec![5, 10]));
    }
}
