//! Batch-level terms over the stacked block of distinct user and item representations:
//! the hinge on the average pairwise distance and the orthogonality (decorrelation) term.

use std::cell::OnceCell;

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::encoder::Representations;
use crate::error::{Error, Result};
use crate::objective::RowGrads;

/// Aggregation of the off-diagonal centered cross-products.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OrthForm {
    /// Sum of squared off-diagonal entries; cannot cancel across signs.
    #[default]
    Squared,
    /// Plain sum of the upper-triangular entries.
    Raw,
}

impl std::str::FromStr for OrthForm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "squared" => Ok(OrthForm::Squared),
            "raw" => Ok(OrthForm::Raw),
            other => Err(Error::InvalidArgument(format!("unknown orth form {other:?}"))),
        }
    }
}

/// Column moments of a b x d block. The centered Gram matrix is computed on first use.
#[derive(Clone, Debug)]
pub struct BatchStats {
    centered: Array2<f64>,
    mean: Array1<f64>,
    var: Array1<f64>,
    gram: OnceCell<Array2<f64>>,
}

pub fn batch_stats(block: ArrayView2<'_, f64>) -> Result<BatchStats> {
    let b = block.nrows();
    if b < 2 {
        return Err(Error::InvalidArgument(format!(
            "batch statistics need at least 2 rows, got {b}"
        )));
    }
    let mean = block.mean_axis(Axis(0)).expect("non-empty block");
    let centered = &block - &mean;
    let var = centered.map_axis(Axis(0), |col| col.iter().map(|v| v * v).sum::<f64>() / b as f64);
    Ok(BatchStats {
        centered,
        mean,
        var,
        gram: OnceCell::new(),
    })
}

impl BatchStats {
    pub fn rows(&self) -> usize {
        self.centered.nrows()
    }

    pub fn dim(&self) -> usize {
        self.centered.ncols()
    }

    pub fn per_dim_mean(&self) -> &Array1<f64> {
        &self.mean
    }

    /// Population variance per column.
    pub fn per_dim_var(&self) -> &Array1<f64> {
        &self.var
    }

    pub fn centered(&self) -> &Array2<f64> {
        &self.centered
    }

    /// `Ẑᵀ Ẑ`, d x d; the diagonal is `b * var`.
    pub fn centered_gram(&self) -> &Array2<f64> {
        self.gram.get_or_init(|| self.centered.t().dot(&self.centered))
    }

    /// Mean squared distance over all ordered row pairs, via `2 * Σ var`.
    pub fn d_p(&self) -> f64 {
        2.0 * self.var.sum()
    }
}

/// `max(0, margin - d_p)^2` and its gradient with respect to the block. The gradient at
/// the kink `d_p == margin` is taken as zero.
pub fn loss_hinge_pairwise(stats: &BatchStats, margin: f64) -> (f64, Array2<f64>) {
    let gap = margin - stats.d_p();
    if gap <= 0.0 {
        return (0.0, Array2::zeros(stats.centered.raw_dim()));
    }
    // d d_p / d z_lq = (4 / b) (z_lq - mean_q)
    let coeff = -2.0 * gap * 4.0 / stats.rows() as f64;
    (gap * gap, &stats.centered * coeff)
}

/// Off-diagonal centered cross-products, normalized by the number of dimension pairs.
/// Zero for d < 2.
pub fn loss_orth(stats: &BatchStats, form: OrthForm) -> (f64, Array2<f64>) {
    let d = stats.dim();
    if d < 2 {
        return (0.0, Array2::zeros(stats.centered.raw_dim()));
    }
    let pairs = (d * (d - 1) / 2) as f64;
    let gram = stats.centered_gram();
    match form {
        OrthForm::Raw => {
            let mut value = 0.0;
            for q in 0..d {
                for s in q + 1..d {
                    value += gram[[q, s]];
                }
            }
            // d/dz_lr = Σ_{s != r} ẑ_ls
            let mut grad = stats.centered.clone();
            for mut row in grad.rows_mut() {
                let total: f64 = row.sum();
                row.mapv_inplace(|v| (total - v) / pairs);
            }
            (value / pairs, grad)
        }
        OrthForm::Squared => {
            let mut off = gram.clone();
            let mut value = 0.0;
            for q in 0..d {
                off[[q, q]] = 0.0;
                for s in q + 1..d {
                    value += gram[[q, s]] * gram[[q, s]];
                }
            }
            // d/dz_lr = 2 Σ_{s != r} G_rs ẑ_ls
            let grad = stats.centered.dot(&off) * (2.0 / pairs);
            (value / pairs, grad)
        }
    }
}

/// The stacked block of distinct users (ascending) followed by distinct items
/// (ascending), as used by the batch-level terms.
#[derive(Clone, Debug)]
pub struct RepBlock {
    pub users: Vec<usize>,
    pub items: Vec<usize>,
    pub rows: Array2<f64>,
}

impl RepBlock {
    pub fn gather<R: Representations + ?Sized>(
        reps: &R,
        users: Vec<usize>,
        items: Vec<usize>,
    ) -> Self {
        let d = reps.dim();
        let mut rows = Array2::zeros((users.len() + items.len(), d));
        for (r, &u) in users.iter().enumerate() {
            rows.row_mut(r)
                .as_slice_mut()
                .expect("fresh array is contiguous")
                .copy_from_slice(reps.user(u));
        }
        for (r, &i) in items.iter().enumerate() {
            rows.row_mut(users.len() + r)
                .as_slice_mut()
                .expect("fresh array is contiguous")
                .copy_from_slice(reps.item(i));
        }
        RepBlock { users, items, rows }
    }

    /// Adds `alpha * block_grad` to the corresponding rows of `grads`.
    pub fn scatter(&self, block_grad: &Array2<f64>, alpha: f64, grads: &mut RowGrads) {
        for (r, &u) in self.users.iter().enumerate() {
            let g = block_grad.row(r);
            grads.add_user(u, alpha, g.as_slice().expect("standard layout"));
        }
        let offset = self.users.len();
        for (r, &i) in self.items.iter().enumerate() {
            let g = block_grad.row(offset + r);
            grads.add_item(i, alpha, g.as_slice().expect("standard layout"));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn two_point_identity() {
        let stats = batch_stats(array![[0.0], [2.0]].view()).unwrap();
        assert_eq!(stats.per_dim_var()[0], 1.0);
        assert_eq!(stats.d_p(), 2.0);
        // brute force over the 4 ordered pairs
        let brute = (0.0 + 4.0 + 4.0 + 0.0) / 4.0;
        assert_eq!(stats.d_p(), brute);
    }

    #[test]
    fn collapsed_block() {
        let block = Array2::from_elem((5, 3), 0.7);
        let stats = batch_stats(block.view()).unwrap();
        assert!(stats.per_dim_var().iter().all(|&v| v == 0.0));
        assert_eq!(stats.d_p(), 0.0);
        let (h, _) = loss_hinge_pairwise(&stats, 0.01);
        assert!((h - 1e-4).abs() < 1e-18);
        assert_eq!(loss_orth(&stats, OrthForm::Squared).0, 0.0);
        assert_eq!(loss_orth(&stats, OrthForm::Raw).0, 0.0);
    }

    #[test]
    fn too_few_rows() {
        assert!(batch_stats(array![[1.0, 2.0]].view()).is_err());
    }

    #[test]
    fn gram_is_symmetric_with_scaled_variance_diagonal() {
        let block = array![[1.0, 2.0, 0.5], [0.0, -1.0, 3.0], [2.0, 2.0, 2.0], [1.5, 0.0, -1.0]];
        let stats = batch_stats(block.view()).unwrap();
        let g = stats.centered_gram();
        for q in 0..3 {
            assert!((g[[q, q]] - 4.0 * stats.per_dim_var()[q]).abs() < 1e-12);
            for s in 0..3 {
                assert_eq!(g[[q, s]], g[[s, q]]);
            }
        }
    }

    #[test]
    fn hinge_inactive_above_margin() {
        let stats = batch_stats(array![[0.0], [2.0]].view()).unwrap();
        let (v, g) = loss_hinge_pairwise(&stats, 1.5);
        assert_eq!(v, 0.0);
        assert!(g.iter().all(|&x| x == 0.0));
        // exactly at the kink: zero subgradient
        let (v, g) = loss_hinge_pairwise(&stats, 2.0);
        assert_eq!(v, 0.0);
        assert!(g.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn duplicated_column_gives_its_squared_norm() {
        let c = [1.0, 4.0, -2.0, 0.5];
        let block = Array2::from_shape_fn((4, 2), |(l, _)| c[l]);
        let stats = batch_stats(block.view()).unwrap();
        let mean = c.iter().sum::<f64>() / 4.0;
        let sq: f64 = c.iter().map(|v| (v - mean) * (v - mean)).sum();
        let (raw, _) = loss_orth(&stats, OrthForm::Raw);
        assert!((raw - sq).abs() < 1e-12);
        let (squared, _) = loss_orth(&stats, OrthForm::Squared);
        assert!((squared - sq * sq).abs() < 1e-9);
    }

    #[test]
    fn orthogonal_centered_columns() {
        let block = array![[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]];
        let stats = batch_stats(block.view()).unwrap();
        assert_eq!(loss_orth(&stats, OrthForm::Raw).0, 0.0);
        assert_eq!(loss_orth(&stats, OrthForm::Squared).0, 0.0);
    }

    #[test]
    fn single_dimension_orth_is_zero() {
        let stats = batch_stats(array![[1.0], [3.0], [0.0]].view()).unwrap();
        assert_eq!(loss_orth(&stats, OrthForm::Squared).0, 0.0);
    }
}
