use crate::encoder::{row_slice_mut, EmbeddingModel};
use crate::error::{Error, Result};
use crate::objective::RowGrads;

/// Gradients smaller than this are compared in absolute rather than relative terms.
pub const GRAD_FLOOR: f64 = 1e-5;
/// Evaluations this close to a non-differentiable point are reported as skipped.
pub const KINK_TOLERANCE: f64 = 1e-3;

/// A loss value with its analytic gradient and, for piecewise losses, the distance of
/// the current point to the nearest kink.
#[derive(Clone, Debug)]
pub struct LossEval {
    pub value: f64,
    pub grads: RowGrads,
    pub kink_distance: Option<f64>,
}

impl LossEval {
    pub fn smooth(value: f64, grads: RowGrads) -> Self {
        LossEval {
            value,
            grads,
            kink_distance: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct GradCheckReport {
    /// Worst `|analytic - numeric| / max(|analytic|, |numeric|, GRAD_FLOOR)`.
    pub max_rel_error: f64,
    pub coords_checked: usize,
    /// The point sits on a kink; no coordinates were compared.
    pub skipped_kink: bool,
}

#[derive(Clone, Copy)]
enum Table {
    User,
    Item,
}

/// Compares the analytic gradient against central differences
/// `(f(θ + εe) − f(θ − εe)) / 2ε` on every coordinate the loss reports as touched.
pub fn finite_difference_check<F>(
    loss: F,
    model: &EmbeddingModel,
    eps: f64,
) -> Result<GradCheckReport>
where
    F: Fn(&EmbeddingModel) -> Result<LossEval>,
{
    if !(eps > 0.0) {
        return Err(Error::InvalidArgument(format!("eps must be positive, got {eps}")));
    }
    let base = loss(model)?;
    if !base.value.is_finite() || !base.grads.is_finite() {
        return Err(Error::NonFiniteLoss);
    }
    if base.kink_distance.is_some_and(|k| k < KINK_TOLERANCE) {
        return Ok(GradCheckReport {
            max_rel_error: 0.0,
            coords_checked: 0,
            skipped_kink: true,
        });
    }

    let mut probe = model.clone();
    let mut worst = 0.0f64;
    let mut checked = 0;
    let coords = base
        .grads
        .users()
        .map(|(u, g)| (Table::User, u, g))
        .chain(base.grads.items().map(|(i, g)| (Table::Item, i, g)));
    for (table, row, grad) in coords {
        for (q, &analytic) in grad.iter().enumerate() {
            let original = entry(&mut probe, table, row)[q];
            entry(&mut probe, table, row)[q] = original + eps;
            let plus = loss(&probe)?.value;
            entry(&mut probe, table, row)[q] = original - eps;
            let minus = loss(&probe)?.value;
            entry(&mut probe, table, row)[q] = original;
            if !plus.is_finite() || !minus.is_finite() {
                return Err(Error::NonFiniteLoss);
            }
            let numeric = (plus - minus) / (2.0 * eps);
            let denom = analytic.abs().max(numeric.abs()).max(GRAD_FLOOR);
            worst = worst.max((analytic - numeric).abs() / denom);
            checked += 1;
        }
    }
    Ok(GradCheckReport {
        max_rel_error: worst,
        coords_checked: checked,
        skipped_kink: false,
    })
}

fn entry(model: &mut EmbeddingModel, table: Table, row: usize) -> &mut [f64] {
    match table {
        Table::User => row_slice_mut(&mut model.user_table, row),
        Table::Item => row_slice_mut(&mut model.item_table, row),
    }
}
