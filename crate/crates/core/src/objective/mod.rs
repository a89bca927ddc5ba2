//! Loss terms and their analytic gradients.
//!
//! The main objective is trained on similar pairs only:
//!
//! ```text
//! total = λ1·base + λ2·max(0, m_p − d_p)² + λ3·orth
//! ```
//!
//! where `base` is the mean squared distance between paired representations (`cont`) or
//! the mean squared error of their score against 1 (`mse`), `d_p` is the average
//! squared distance between all representations of the batch (twice the summed column
//! variances) and `orth` aggregates the off-diagonal centered cross-products between
//! dimensions. The baselines trained with sampled negatives (BCE, BPR, contrastive with
//! margin) are available as alternative base losses.

mod gradcheck;
mod grads;
mod pairwise;
mod regularizers;
pub mod terms;

use serde::{Deserialize, Serialize};

use crate::encoder::{Mapping, Representations};
use crate::error::{Error, Result};

pub use gradcheck::{
    finite_difference_check, GradCheckReport, LossEval, GRAD_FLOOR, KINK_TOLERANCE,
};
pub use grads::RowGrads;
pub use pairwise::{
    loss_bce, loss_bpr, loss_cont, loss_contrastive_neg, loss_mse_similar, LabeledPair,
    Triple,
};
pub(crate) use pairwise::contrastive_kink_distance;
pub use regularizers::{
    batch_stats, loss_hinge_pairwise, loss_orth, BatchStats, OrthForm, RepBlock,
};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum BaseLoss {
    /// Squared distance between similar pairs.
    #[default]
    Cont,
    /// Squared error of the similar-pair score against 1.
    Mse,
    /// Binary cross-entropy with sampled negatives.
    Bce,
    /// Bayesian personalized ranking with sampled negatives.
    Bpr,
    /// Contrastive loss with a margin on sampled negatives.
    ContrastiveNeg,
}

impl BaseLoss {
    pub fn needs_negatives(self) -> bool {
        matches!(self, BaseLoss::Bce | BaseLoss::Bpr | BaseLoss::ContrastiveNeg)
    }

    pub fn name(self) -> &'static str {
        match self {
            BaseLoss::Cont => "cont",
            BaseLoss::Mse => "mse",
            BaseLoss::Bce => "bce",
            BaseLoss::Bpr => "bpr",
            BaseLoss::ContrastiveNeg => "contrastive-neg",
        }
    }
}

impl std::str::FromStr for BaseLoss {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "cont" => BaseLoss::Cont,
            "mse" => BaseLoss::Mse,
            "bce" => BaseLoss::Bce,
            "bpr" => BaseLoss::Bpr,
            "contrastive-neg" => BaseLoss::ContrastiveNeg,
            other => return Err(Error::InvalidArgument(format!("unknown base loss {other:?}"))),
        })
    }
}

/// Terms switched off for an ablation run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Ablation {
    #[default]
    None,
    NoOrth,
    NoHinge,
    OnlyCont,
}

impl Ablation {
    pub fn name(self) -> &'static str {
        match self {
            Ablation::None => "none",
            Ablation::NoOrth => "no-orth",
            Ablation::NoHinge => "no-hinge",
            Ablation::OnlyCont => "only-cont",
        }
    }

    /// Zeroes the weights of the removed terms.
    pub fn apply(self, config: &mut ObjectiveConfig) {
        match self {
            Ablation::None => {}
            Ablation::NoOrth => config.lambda3 = 0.0,
            Ablation::NoHinge => config.lambda2 = 0.0,
            Ablation::OnlyCont => {
                config.base_loss = BaseLoss::Cont;
                config.lambda2 = 0.0;
                config.lambda3 = 0.0;
            }
        }
    }
}

impl std::str::FromStr for Ablation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "none" => Ablation::None,
            "no-orth" => Ablation::NoOrth,
            "no-hinge" => Ablation::NoHinge,
            "only-cont" => Ablation::OnlyCont,
            other => return Err(Error::InvalidArgument(format!("unknown ablation {other:?}"))),
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectiveConfig {
    pub base_loss: BaseLoss,
    pub lambda1: f64,
    pub lambda2: f64,
    pub lambda3: f64,
    /// Margin of the hinge on the average pairwise distance.
    pub margin_p: f64,
    /// Margin of the contrastive baseline on negative pairs.
    pub margin_d: f64,
    pub mapping: Mapping,
    /// Weight of the negative term in the contrastive baseline.
    pub neg_weight: f64,
    pub orth_form: OrthForm,
    /// Sampled negatives per similar pair, baselines only.
    pub negatives_per_positive: usize,
}

impl Default for ObjectiveConfig {
    fn default() -> Self {
        ObjectiveConfig {
            base_loss: BaseLoss::Cont,
            lambda1: 0.01,
            lambda2: 1.0,
            lambda3: 1.0,
            margin_p: 0.01,
            margin_d: 1.0,
            mapping: Mapping::Dot,
            neg_weight: 1.0,
            orth_form: OrthForm::Squared,
            negatives_per_positive: 1,
        }
    }
}

impl ObjectiveConfig {
    pub fn validate(&self) -> Result<()> {
        let lambdas = [self.lambda1, self.lambda2, self.lambda3];
        if lambdas.iter().any(|l| !(l.is_finite() && *l >= 0.0)) {
            return Err(Error::InvalidArgument(format!(
                "lambdas must be finite and nonnegative, got {lambdas:?}"
            )));
        }
        if lambdas.iter().all(|&l| l == 0.0) {
            return Err(Error::InvalidArgument("at least one lambda must be positive".into()));
        }
        if !(self.margin_p >= 0.0 && self.margin_d >= 0.0) {
            return Err(Error::InvalidArgument("margins must be nonnegative".into()));
        }
        if !(self.neg_weight >= 0.0) {
            return Err(Error::InvalidArgument("neg_weight must be nonnegative".into()));
        }
        if self.base_loss.needs_negatives() && self.negatives_per_positive == 0 {
            return Err(Error::InvalidArgument(format!(
                "base loss {} needs negatives_per_positive >= 1",
                self.base_loss.name()
            )));
        }
        if self.base_loss == BaseLoss::ContrastiveNeg && self.margin_d <= 0.0 {
            return Err(Error::InvalidArgument(
                "contrastive-neg needs a positive margin_d".into(),
            ));
        }
        Ok(())
    }
}

/// Per-term values of one objective evaluation.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    /// Squared-distance term on the similar pairs, whatever the base loss.
    pub cont: f64,
    pub base: f64,
    pub hinge: f64,
    pub orth: f64,
    pub total: f64,
    pub d_p: f64,
}

/// Similar pairs of a batch, plus sampled negatives when the base loss needs them.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct TrainingBatch {
    pub positives: Vec<(usize, usize)>,
    pub negatives: Vec<Triple>,
}

impl TrainingBatch {
    pub fn from_pairs(positives: Vec<(usize, usize)>) -> Self {
        TrainingBatch {
            positives,
            negatives: Vec::new(),
        }
    }

    /// Distinct users and items over positives and negatives, ascending.
    pub fn members(&self) -> (Vec<usize>, Vec<usize>) {
        let mut users: Vec<usize> = self.positives.iter().map(|p| p.0).collect();
        users.extend(self.negatives.iter().map(|t| t.user));
        users.sort_unstable();
        users.dedup();
        let mut items: Vec<usize> = self.positives.iter().map(|p| p.1).collect();
        items.extend(self.negatives.iter().map(|t| t.neg_item));
        items.sort_unstable();
        items.dedup();
        (users, items)
    }

    fn labeled(&self) -> Vec<LabeledPair> {
        let pos = self.positives.iter().map(|&(user, item)| LabeledPair {
            user,
            item,
            positive: true,
        });
        let neg = self.negatives.iter().map(|t| LabeledPair {
            user: t.user,
            item: t.neg_item,
            positive: false,
        });
        pos.chain(neg).collect()
    }
}

/// Weighted objective over one batch, with gradients accumulated per touched row.
pub fn total_objective<R: Representations + ?Sized>(
    config: &ObjectiveConfig,
    batch: &TrainingBatch,
    reps: &R,
) -> Result<(LossBreakdown, RowGrads)> {
    Ok(evaluate_objective(config, batch, reps)?.into_parts())
}

pub(crate) struct ObjectiveEval {
    breakdown: LossBreakdown,
    grads: RowGrads,
    kink_distance: Option<f64>,
}

impl ObjectiveEval {
    fn into_parts(self) -> (LossBreakdown, RowGrads) {
        (self.breakdown, self.grads)
    }
}

pub(crate) fn evaluate_objective<R: Representations + ?Sized>(
    config: &ObjectiveConfig,
    batch: &TrainingBatch,
    reps: &R,
) -> Result<ObjectiveEval> {
    if batch.positives.is_empty() {
        return Err(Error::InvalidArgument("empty batch".into()));
    }
    if config.base_loss.needs_negatives() && batch.negatives.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "base loss {} needs sampled negatives",
            config.base_loss.name()
        )));
    }
    let mut grads = RowGrads::new(reps.dim());
    let mut kinks: Vec<f64> = Vec::new();

    let (cont, cont_grads) = loss_cont(&batch.positives, reps);
    let (base, base_grads) = match config.base_loss {
        BaseLoss::Cont => (cont, cont_grads),
        BaseLoss::Mse => loss_mse_similar(&batch.positives, reps, config.mapping)?,
        BaseLoss::Bce => loss_bce(&batch.labeled(), reps, config.mapping)?,
        BaseLoss::Bpr => loss_bpr(&batch.negatives, reps, config.mapping)?,
        BaseLoss::ContrastiveNeg => {
            let samples = batch.labeled();
            if config.lambda1 != 0.0 {
                kinks.extend(contrastive_kink_distance(&samples, reps, config.margin_d));
            }
            loss_contrastive_neg(&samples, reps, config.margin_d, config.neg_weight)
        }
    };
    if config.lambda1 != 0.0 {
        grads.accumulate(config.lambda1, &base_grads);
    }

    let (users, items) = batch.members();
    let block = RepBlock::gather(reps, users, items);
    let stats = batch_stats(block.rows.view())?;
    let d_p = stats.d_p();
    if config.lambda2 != 0.0 {
        kinks.push((d_p - config.margin_p).abs());
    }

    let (hinge, hinge_grad) = loss_hinge_pairwise(&stats, config.margin_p);
    if config.lambda2 != 0.0 {
        block.scatter(&hinge_grad, config.lambda2, &mut grads);
    }
    let (orth, orth_grad) = loss_orth(&stats, config.orth_form);
    if config.lambda3 != 0.0 {
        block.scatter(&orth_grad, config.lambda3, &mut grads);
    }

    let total = config.lambda1 * base + config.lambda2 * hinge + config.lambda3 * orth;
    Ok(ObjectiveEval {
        breakdown: LossBreakdown {
            cont,
            base,
            hinge,
            orth,
            total,
            d_p,
        },
        grads,
        kink_distance: kinks.into_iter().reduce(f64::min),
    })
}

/// The objective as a [`LossEval`] for the finite-difference harness.
pub fn objective_loss_eval<R: Representations + ?Sized>(
    config: &ObjectiveConfig,
    batch: &TrainingBatch,
    reps: &R,
) -> Result<LossEval> {
    let eval = evaluate_objective(config, batch, reps)?;
    Ok(LossEval {
        value: eval.breakdown.total,
        grads: eval.grads,
        kink_distance: eval.kink_distance,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::{init_model, EmbeddingModel};
    use ndarray::Array2;

    fn toy_batch() -> TrainingBatch {
        TrainingBatch::from_pairs(vec![(0, 0), (0, 1), (1, 1), (2, 2), (3, 0)])
    }

    #[test]
    fn degenerate_weights_reduce_to_base() {
        let model = init_model(4, 3, 5, 0.3, 8).unwrap();
        let cfg = ObjectiveConfig {
            lambda1: 1.0,
            lambda2: 0.0,
            lambda3: 0.0,
            ..Default::default()
        };
        let (b, g) = total_objective(&cfg, &toy_batch(), &model).unwrap();
        let (base, bg) = loss_cont(&toy_batch().positives, &model);
        assert_eq!(b.total, base);
        assert_eq!(g, bg);
    }

    #[test]
    fn collapsed_model_total() {
        let model =
            EmbeddingModel::from_tables(Array2::from_elem((4, 3), 0.2), Array2::from_elem((3, 3), 0.2), 0)
                .unwrap();
        let cfg = ObjectiveConfig {
            lambda1: 0.5,
            lambda2: 2.0,
            lambda3: 3.0,
            margin_p: 0.1,
            ..Default::default()
        };
        let (b, _) = total_objective(&cfg, &toy_batch(), &model).unwrap();
        // the column mean of equal entries carries roundoff
        assert_eq!(b.cont, 0.0);
        assert!(b.orth < 1e-30);
        assert!(b.d_p < 1e-30);
        assert!((b.total - 2.0 * 0.01).abs() < 1e-15);
    }

    #[test]
    fn breakdown_total_is_weighted_sum() {
        let model = init_model(4, 3, 6, 0.05, 3).unwrap();
        let cfg = ObjectiveConfig {
            lambda1: 0.3,
            lambda2: 1.7,
            lambda3: 0.9,
            margin_p: 1.0,
            ..Default::default()
        };
        let (b, _) = total_objective(&cfg, &toy_batch(), &model).unwrap();
        assert!(b.hinge > 0.0);
        let expect = 0.3 * b.base + 1.7 * b.hinge + 0.9 * b.orth;
        assert!((b.total - expect).abs() < 1e-10);
    }

    #[test]
    fn config_validation() {
        assert!(ObjectiveConfig::default().validate().is_ok());
        let zero = ObjectiveConfig {
            lambda1: 0.0,
            lambda2: 0.0,
            lambda3: 0.0,
            ..Default::default()
        };
        assert!(zero.validate().is_err());
        let neg = ObjectiveConfig {
            margin_p: -1.0,
            ..Default::default()
        };
        assert!(neg.validate().is_err());
        let bpr = ObjectiveConfig {
            base_loss: BaseLoss::Bpr,
            negatives_per_positive: 0,
            ..Default::default()
        };
        assert!(bpr.validate().is_err());
    }

    #[test]
    fn baselines_require_negatives() {
        let model = init_model(4, 3, 2, 0.1, 0).unwrap();
        let cfg = ObjectiveConfig {
            base_loss: BaseLoss::Bpr,
            ..Default::default()
        };
        assert!(total_objective(&cfg, &toy_batch(), &model).is_err());
    }
}
