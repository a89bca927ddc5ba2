//! Mini-batch SGD over the similar pairs.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::diagnostics::{mean_dim_variance, CollapseReport, CollapseThresholds, Verdict};
use crate::encoder::{init_model, row_slice_mut, EmbeddingModel, DEFAULT_INIT_SCALE};
use crate::error::{Error, Result};
use crate::interactions::{make_batches, sample_complement, InteractionDataset, ItemFeatures};
use crate::objective::{total_objective, LossBreakdown, ObjectiveConfig, RowGrads, Triple, TrainingBatch};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub objective: ObjectiveConfig,
    pub seed: u64,
    /// Snapshot period in epochs; 0 disables snapshots.
    pub snapshot_every: usize,
    pub dim: usize,
    pub init_scale: f64,
    /// Compute the correlation and verdict at the end of every epoch; these cost
    /// O((m + n) d²).
    pub full_diagnostics: bool,
    pub thresholds: CollapseThresholds,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 50,
            learning_rate: 0.5,
            batch_size: 128,
            objective: ObjectiveConfig::default(),
            seed: 0,
            snapshot_every: 0,
            dim: 64,
            init_scale: DEFAULT_INIT_SCALE,
            full_diagnostics: true,
            thresholds: CollapseThresholds::default(),
        }
    }
}

/// Settings for the small synthetic component graphs: the default weight ratios
/// `λ1 : λ2 : λ3 = 0.01 : 1 : 1` scaled by 100, since a graph of a few thousand pairs
/// gives far fewer SGD steps per epoch than the benchmark datasets.
pub fn synthetic_config(seed: u64) -> TrainConfig {
    TrainConfig {
        epochs: 50,
        learning_rate: 0.5,
        batch_size: 32,
        dim: 8,
        seed,
        objective: ObjectiveConfig {
            lambda1: 1.0,
            lambda2: 100.0,
            lambda3: 100.0,
            margin_p: 0.01,
            ..Default::default()
        },
        ..Default::default()
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::InvalidArgument("epochs must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            )));
        }
        if self.batch_size == 0 {
            return Err(Error::InvalidArgument("batch_size must be at least 1".into()));
        }
        if self.dim == 0 {
            return Err(Error::InvalidArgument("dim must be at least 1".into()));
        }
        self.objective.validate()
    }
}

/// Loss terms averaged over the batches of one epoch, plus end-of-epoch indicators on
/// the full representation matrix.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochReport {
    /// 1-based.
    pub epoch: usize,
    pub num_batches: usize,
    pub loss: LossBreakdown,
    pub d_p: f64,
    pub mean_dim_variance: f64,
    pub mean_abs_correlation: Option<f64>,
    pub verdict: Option<Verdict>,
    pub validation: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub model: EmbeddingModel,
    /// Completed epochs.
    pub epoch: usize,
    pub history: Vec<EpochReport>,
}

impl TrainState {
    pub fn new(model: EmbeddingModel) -> Self {
        TrainState {
            model,
            epoch: 0,
            history: Vec::new(),
        }
    }
}

/// What the observer wants after an epoch.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Control {
    Continue,
    Stop,
}

/// Callbacks from [`fit_with`]. Both hooks receive the state after the epoch's report
/// was appended to the history.
pub trait TrainObserver {
    /// Called after every epoch. May fill `report.validation`, which is written back to
    /// the history.
    fn on_epoch(&mut self, _state: &TrainState, _report: &mut EpochReport) -> Result<Control> {
        Ok(Control::Continue)
    }

    /// Called every `snapshot_every` epochs and after the last one.
    fn on_snapshot(&mut self, _state: &TrainState) -> Result<()> {
        Ok(())
    }
}

impl TrainObserver for () {}

/// Stops when the validation metric has not improved for `patience` epochs.
#[derive(Clone, Debug)]
pub struct EarlyStopping<F> {
    pub patience: usize,
    metric: F,
    best: f64,
    since_best: usize,
}

impl<F> EarlyStopping<F>
where
    F: FnMut(&EmbeddingModel) -> Result<f64>,
{
    /// `metric` is higher-is-better.
    pub fn new(patience: usize, metric: F) -> Self {
        EarlyStopping {
            patience,
            metric,
            best: f64::NEG_INFINITY,
            since_best: 0,
        }
    }
}

impl<F> TrainObserver for EarlyStopping<F>
where
    F: FnMut(&EmbeddingModel) -> Result<f64>,
{
    fn on_epoch(&mut self, state: &TrainState, report: &mut EpochReport) -> Result<Control> {
        let value = (self.metric)(&state.model)?;
        report.validation = Some(value);
        if value > self.best {
            self.best = value;
            self.since_best = 0;
        } else {
            self.since_best += 1;
        }
        Ok(if self.since_best >= self.patience {
            Control::Stop
        } else {
            Control::Continue
        })
    }
}

/// Fresh model for `ds`, with an encoder when `features` are given.
pub fn initial_model(
    ds: &InteractionDataset,
    features: Option<&ItemFeatures>,
    config: &TrainConfig,
) -> Result<EmbeddingModel> {
    let mut model = init_model(ds.num_users(), ds.num_items(), config.dim, config.init_scale, config.seed)?;
    if let Some(f) = features {
        model = model.with_feature_encoder(f.num_features(), config.init_scale)?;
        model.materialize_item_table(f)?;
    }
    Ok(model)
}

fn epoch_rng(seed: u64, epoch: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    // stream 0 is used for initialization
    rng.set_stream(epoch as u64 + 1);
    rng
}

fn with_negatives<R: rand::Rng>(
    pairs: Vec<(usize, usize)>,
    ds: &InteractionDataset,
    per_positive: usize,
    rng: &mut R,
) -> Result<TrainingBatch> {
    let mut negatives = Vec::with_capacity(pairs.len() * per_positive);
    for &(user, pos_item) in &pairs {
        for neg_item in sample_complement(ds.user_items(user), ds.num_items(), per_positive, rng)? {
            negatives.push(Triple {
                user,
                pos_item,
                neg_item,
            });
        }
    }
    Ok(TrainingBatch {
        positives: pairs,
        negatives,
    })
}

/// Applies `θ ← θ − lr·g` to the touched rows. In feature mode the item gradients are
/// pushed through the encoder instead of into the item table.
fn apply_update(
    model: &mut EmbeddingModel,
    grads: &RowGrads,
    lr: f64,
    features: Option<&ItemFeatures>,
) {
    for (u, g) in grads.users() {
        for (w, gv) in row_slice_mut(&mut model.user_table, u).iter_mut().zip(g) {
            *w -= lr * gv;
        }
    }
    match (features, model.feature_encoder.as_mut()) {
        (Some(feats), Some(enc)) => {
            for (i, g) in grads.items() {
                for (x, mut w_row) in feats.row(i).iter().zip(enc.weight.rows_mut()) {
                    if *x == 0.0 {
                        continue;
                    }
                    for (w, gv) in w_row.iter_mut().zip(g) {
                        *w -= lr * x * gv;
                    }
                }
                for (b, gv) in enc.bias.iter_mut().zip(g) {
                    *b -= lr * gv;
                }
            }
        }
        _ => {
            for (i, g) in grads.items() {
                for (w, gv) in row_slice_mut(&mut model.item_table, i).iter_mut().zip(g) {
                    *w -= lr * gv;
                }
            }
        }
    }
}

/// Re-encodes the listed items so the table matches the current encoder.
fn refresh_items(model: &mut EmbeddingModel, items: &[usize], features: &ItemFeatures) -> Result<()> {
    for &i in items {
        let rep = model.encode_item_features(features.row(i))?;
        row_slice_mut(&mut model.item_table, i).copy_from_slice(&rep);
    }
    Ok(())
}

fn epoch_diagnostics(model: &EmbeddingModel, config: &TrainConfig) -> Result<(f64, Option<f64>, Option<Verdict>)> {
    let z = model.joint_matrix();
    if config.full_diagnostics {
        let r = CollapseReport::compute(z.view(), &config.thresholds)?;
        Ok((r.mean_dim_variance, Some(r.mean_abs_correlation), Some(r.verdict)))
    } else {
        Ok((mean_dim_variance(z.view())?, None, None))
    }
}

/// One pass over the shuffled similar set. `state.epoch` is advanced and the report is
/// appended to the history.
pub fn train_epoch(
    state: &mut TrainState,
    ds: &InteractionDataset,
    features: Option<&ItemFeatures>,
    config: &TrainConfig,
) -> Result<EpochReport> {
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if !(config.learning_rate >= 0.0 && config.learning_rate.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "learning_rate must be nonnegative, got {}",
            config.learning_rate
        )));
    }
    if config.batch_size == 0 {
        return Err(Error::InvalidArgument("batch_size must be at least 1".into()));
    }
    config.objective.validate()?;
    let model = &mut state.model;
    if model.num_users() != ds.num_users() || model.num_items() != ds.num_items() {
        return Err(Error::DimensionMismatch(format!(
            "model is {}x{}, dataset {}x{}",
            model.num_users(),
            model.num_items(),
            ds.num_users(),
            ds.num_items()
        )));
    }
    if features.is_some() && model.feature_encoder().is_none() {
        return Err(Error::MissingEncoder);
    }
    let epoch = state.epoch + 1;
    let mut rng = epoch_rng(config.seed, epoch);
    let batches = make_batches(ds, config.batch_size, &mut rng);
    let obj = &config.objective;

    let mut sum = LossBreakdown::default();
    for (b, batch) in batches.iter().enumerate() {
        let tb = if obj.base_loss.needs_negatives() {
            with_negatives(batch.pairs.clone(), ds, obj.negatives_per_positive, &mut rng)?
        } else {
            TrainingBatch::from_pairs(batch.pairs.clone())
        };
        if let Some(f) = features {
            let (_, items) = tb.members();
            refresh_items(model, &items, f)?;
        }
        let (loss, grads) = total_objective(obj, &tb, &*model)?;
        if !loss.total.is_finite() {
            return Err(Error::NonFinite {
                epoch,
                batch: b,
                what: "loss".into(),
            });
        }
        if !grads.is_finite() {
            return Err(Error::NonFinite {
                epoch,
                batch: b,
                what: "gradient".into(),
            });
        }
        apply_update(model, &grads, config.learning_rate, features);
        sum.cont += loss.cont;
        sum.base += loss.base;
        sum.hinge += loss.hinge;
        sum.orth += loss.orth;
        sum.total += loss.total;
        sum.d_p += loss.d_p;
    }
    if let Some(f) = features {
        model.materialize_item_table(f)?;
    }
    if !model.is_finite() {
        return Err(Error::NonFinite {
            epoch,
            batch: batches.len().saturating_sub(1),
            what: "model parameters".into(),
        });
    }

    let nb = batches.len() as f64;
    let mean = LossBreakdown {
        cont: sum.cont / nb,
        base: sum.base / nb,
        hinge: sum.hinge / nb,
        orth: sum.orth / nb,
        total: sum.total / nb,
        d_p: sum.d_p / nb,
    };
    let (var, corr, verdict) = epoch_diagnostics(model, config)?;
    let report = EpochReport {
        epoch,
        num_batches: batches.len(),
        loss: mean,
        d_p: 2.0 * model.dim() as f64 * var,
        mean_dim_variance: var,
        mean_abs_correlation: corr,
        verdict,
        validation: None,
    };
    state.epoch = epoch;
    state.history.push(report.clone());
    Ok(report)
}

/// Trains a fresh model for `config.epochs` epochs.
pub fn fit(ds: &InteractionDataset, config: &TrainConfig) -> Result<TrainState> {
    fit_with(ds, None, config, &mut ())
}

/// [`fit`] with optional item features and an observer for snapshots, validation and
/// early stopping.
pub fn fit_with(
    ds: &InteractionDataset,
    features: Option<&ItemFeatures>,
    config: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<TrainState> {
    config.validate()?;
    if ds.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut state = TrainState::new(initial_model(ds, features, config)?);
    resume(&mut state, ds, features, config, observer)?;
    Ok(state)
}

/// Continues training `state` until `config.epochs` epochs are completed.
pub fn resume(
    state: &mut TrainState,
    ds: &InteractionDataset,
    features: Option<&ItemFeatures>,
    config: &TrainConfig,
    observer: &mut dyn TrainObserver,
) -> Result<()> {
    config.validate()?;
    while state.epoch < config.epochs {
        let mut report = train_epoch(state, ds, features, config)?;
        let control = observer.on_epoch(state, &mut report)?;
        *state.history.last_mut().expect("epoch just pushed") = report.clone();
        log::info!(
            "epoch {}: total {:.6} d_p {:.6} var {:.3e}",
            report.epoch,
            report.loss.total,
            report.d_p,
            report.mean_dim_variance
        );
        let last = state.epoch == config.epochs || control == Control::Stop;
        if last || (config.snapshot_every > 0 && state.epoch.is_multiple_of(config.snapshot_every)) {
            observer.on_snapshot(state)?;
        }
        if control == Control::Stop {
            log::info!("stopping early after epoch {}", state.epoch);
            break;
        }
    }
    Ok(())
}
