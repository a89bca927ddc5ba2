//! Finite-difference checks of every loss term on a small seeded problem.

use serde::Serialize;

use crate::encoder::{init_model, EmbeddingModel, Mapping, Representations};
use crate::error::Result;
use crate::objective::{
    batch_stats, finite_difference_check, loss_bce, loss_bpr, loss_cont, loss_contrastive_neg,
    loss_hinge_pairwise, loss_mse_similar, loss_orth, objective_loss_eval, BaseLoss,
    GradCheckReport, LabeledPair, LossEval, ObjectiveConfig, OrthForm, RepBlock, RowGrads,
    TrainingBatch, Triple,
};

/// Hinge margin for the checks; well above the toy's d_p, so the hinge is active and
/// far from its kink.
pub const TOY_MARGIN_P: f64 = 10.0;
pub const TOY_MARGIN_D: f64 = 1.0;

#[derive(Clone, Debug)]
pub struct TermCheckConfig {
    pub num_users: usize,
    pub num_items: usize,
    pub dim: usize,
    pub init_scale: f64,
    pub seed: u64,
    pub eps: f64,
    pub mapping: Mapping,
    /// Adds 0.5 to one gradient coordinate of the named term; for exercising the checker.
    pub corrupt: Option<String>,
}

impl Default for TermCheckConfig {
    fn default() -> Self {
        TermCheckConfig {
            num_users: 6,
            num_items: 6,
            dim: 5,
            init_scale: 0.5,
            seed: 0,
            eps: 1e-5,
            mapping: Mapping::Dot,
            corrupt: None,
        }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct TermCheck {
    pub term: String,
    pub max_rel_error: f64,
    pub coords_checked: usize,
    pub skipped_kink: bool,
}

type TermFn = Box<dyn Fn(&EmbeddingModel) -> Result<LossEval>>;

/// Similar pairs over a `m x n` toy, each with one negative, touching every row.
pub fn toy_batch(num_users: usize, num_items: usize) -> TrainingBatch {
    let count = num_users.max(num_items) + 2;
    let mut positives = Vec::with_capacity(count);
    let mut negatives = Vec::with_capacity(count);
    for k in 0..count {
        let user = k % num_users;
        let pos_item = (k * 5 + 1) % num_items;
        let neg_item = (pos_item + 1 + k % (num_items.max(2) - 1)) % num_items;
        positives.push((user, pos_item));
        negatives.push(Triple { user, pos_item, neg_item });
    }
    TrainingBatch { positives, negatives }
}

fn labeled(batch: &TrainingBatch) -> Vec<LabeledPair> {
    let mut out: Vec<LabeledPair> = batch
        .positives
        .iter()
        .map(|&(user, item)| LabeledPair { user, item, positive: true })
        .collect();
    out.extend(batch.negatives.iter().map(|t| LabeledPair {
        user: t.user,
        item: t.neg_item,
        positive: false,
    }));
    out
}

fn distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn block_term(batch: &TrainingBatch, which: BlockTerm) -> TermFn {
    let (users, items) = batch.members();
    Box::new(move |m| {
        let block = RepBlock::gather(m, users.clone(), items.clone());
        let stats = batch_stats(block.rows.view())?;
        let mut grads = RowGrads::new(m.dim());
        let (value, g, kink) = match which {
            BlockTerm::Hinge => {
                let (v, g) = loss_hinge_pairwise(&stats, TOY_MARGIN_P);
                (v, g, Some((stats.d_p() - TOY_MARGIN_P).abs()))
            }
            BlockTerm::Orth(form) => {
                let (v, g) = loss_orth(&stats, form);
                (v, g, None)
            }
        };
        block.scatter(&g, 1.0, &mut grads);
        Ok(LossEval { value, grads, kink_distance: kink })
    })
}

#[derive(Clone, Copy)]
enum BlockTerm {
    Hinge,
    Orth(OrthForm),
}

/// Every term by name: the five base losses, the hinge, both orthogonality forms and the
/// weighted total under each base loss.
pub fn term_evaluators(batch: &TrainingBatch, mapping: Mapping) -> Vec<(String, TermFn)> {
    let mut out: Vec<(String, TermFn)> = Vec::new();
    let pos = batch.positives.clone();
    out.push((
        "cont".into(),
        Box::new(move |m| {
            let (v, g) = loss_cont(&pos, m);
            Ok(LossEval::smooth(v, g))
        }),
    ));
    let pos = batch.positives.clone();
    out.push((
        "mse-similar".into(),
        Box::new(move |m| {
            let (v, g) = loss_mse_similar(&pos, m, mapping)?;
            Ok(LossEval::smooth(v, g))
        }),
    ));
    let samples = labeled(batch);
    out.push((
        "bce".into(),
        Box::new(move |m| {
            let (v, g) = loss_bce(&samples, m, mapping)?;
            Ok(LossEval::smooth(v, g))
        }),
    ));
    let triples = batch.negatives.clone();
    out.push((
        "bpr".into(),
        Box::new(move |m| {
            let (v, g) = loss_bpr(&triples, m, mapping)?;
            Ok(LossEval::smooth(v, g))
        }),
    ));
    let samples = labeled(batch);
    out.push((
        "contrastive-neg".into(),
        Box::new(move |m| {
            let (v, g) = loss_contrastive_neg(&samples, m, TOY_MARGIN_D, 1.0);
            let kink = samples
                .iter()
                .filter(|s| !s.positive)
                .map(|s| (distance(m.user(s.user), m.item(s.item)) - TOY_MARGIN_D).abs())
                .fold(f64::INFINITY, f64::min);
            Ok(LossEval { value: v, grads: g, kink_distance: Some(kink) })
        }),
    ));
    out.push(("hinge-pairwise".into(), block_term(batch, BlockTerm::Hinge)));
    out.push(("orth-squared".into(), block_term(batch, BlockTerm::Orth(OrthForm::Squared))));
    out.push(("orth-raw".into(), block_term(batch, BlockTerm::Orth(OrthForm::Raw))));
    for base in [BaseLoss::Cont, BaseLoss::Mse, BaseLoss::Bce, BaseLoss::Bpr, BaseLoss::ContrastiveNeg] {
        let cfg = ObjectiveConfig {
            base_loss: base,
            lambda1: 0.7,
            lambda2: 1.3,
            lambda3: 0.9,
            margin_p: TOY_MARGIN_P,
            margin_d: TOY_MARGIN_D,
            mapping,
            ..Default::default()
        };
        let b = batch.clone();
        out.push((format!("total-{}", base.name()), Box::new(move |m| objective_loss_eval(&cfg, &b, m))));
    }
    out
}

/// Runs [`finite_difference_check`] on every term of [`term_evaluators`].
pub fn check_terms(config: &TermCheckConfig) -> Result<Vec<TermCheck>> {
    let model = init_model(config.num_users, config.num_items, config.dim, config.init_scale, config.seed)?;
    let batch = toy_batch(config.num_users, config.num_items);
    let mut out = Vec::new();
    for (name, f) in term_evaluators(&batch, config.mapping) {
        let report: GradCheckReport = if config.corrupt.as_deref() == Some(name.as_str()) {
            let corrupted = |m: &EmbeddingModel| {
                let mut e = f(m)?;
                let first = e.grads.users().next().map(|(u, _)| u);
                if let Some(u) = first {
                    e.grads.user_mut(u)[0] += 0.5;
                }
                Ok(e)
            };
            finite_difference_check(corrupted, &model, config.eps)?
        } else {
            finite_difference_check(&f, &model, config.eps)?
        };
        out.push(TermCheck {
            term: name,
            max_rel_error: report.max_rel_error,
            coords_checked: report.coords_checked,
            skipped_kink: report.skipped_kink,
        });
    }
    Ok(out)
}
