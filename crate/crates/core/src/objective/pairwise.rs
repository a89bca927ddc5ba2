//! Losses over explicit (user, item) pairs. All values are means over the pairs given.

use crate::encoder::{Mapping, Representations};
use crate::error::Result;
use crate::objective::RowGrads;

/// A (user, item) pair with a binary label: 1 for observed, 0 for a sampled negative.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct LabeledPair {
    pub user: usize,
    pub item: usize,
    pub positive: bool,
}

/// (user, observed item, sampled unobserved item)
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Triple {
    pub user: usize,
    pub pos_item: usize,
    pub neg_item: usize,
}

fn diff(a: &[f64], b: &[f64]) -> Vec<f64> {
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

fn sq_norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum()
}

/// ln(1 + e^x) without overflow.
pub(crate) fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Mean squared distance between the representations of similar pairs.
pub fn loss_cont<R: Representations + ?Sized>(
    pairs: &[(usize, usize)],
    reps: &R,
) -> (f64, RowGrads) {
    let mut grads = RowGrads::new(reps.dim());
    if pairs.is_empty() {
        return (0.0, grads);
    }
    let scale = 1.0 / pairs.len() as f64;
    let mut value = 0.0;
    for &(u, i) in pairs {
        let delta = diff(reps.user(u), reps.item(i));
        value += sq_norm(&delta);
        grads.add_user(u, 2.0 * scale, &delta);
        grads.add_item(i, -2.0 * scale, &delta);
    }
    (value * scale, grads)
}

/// Mean of (score - 1)^2 over similar pairs.
pub fn loss_mse_similar<R: Representations + ?Sized>(
    pairs: &[(usize, usize)],
    reps: &R,
    mapping: Mapping,
) -> Result<(f64, RowGrads)> {
    let mut grads = RowGrads::new(reps.dim());
    if pairs.is_empty() {
        return Ok((0.0, grads));
    }
    let scale = 1.0 / pairs.len() as f64;
    let mut value = 0.0;
    for &(u, i) in pairs {
        let (s, gu, gi) = mapping.score_grad(reps.user(u), reps.item(i))?;
        let r = s - 1.0;
        value += r * r;
        grads.add_user(u, 2.0 * r * scale, &gu);
        grads.add_item(i, 2.0 * r * scale, &gi);
    }
    Ok((value * scale, grads))
}

/// Mean binary cross-entropy of sigmoid(score) against the pair labels.
pub fn loss_bce<R: Representations + ?Sized>(
    samples: &[LabeledPair],
    reps: &R,
    mapping: Mapping,
) -> Result<(f64, RowGrads)> {
    let mut grads = RowGrads::new(reps.dim());
    if samples.is_empty() {
        return Ok((0.0, grads));
    }
    let scale = 1.0 / samples.len() as f64;
    let mut value = 0.0;
    for p in samples {
        let (s, gu, gi) = mapping.score_grad(reps.user(p.user), reps.item(p.item))?;
        let (y, term) = if p.positive {
            (1.0, softplus(-s))
        } else {
            (0.0, softplus(s))
        };
        value += term;
        let g = (sigmoid(s) - y) * scale;
        grads.add_user(p.user, g, &gu);
        grads.add_item(p.item, g, &gi);
    }
    Ok((value * scale, grads))
}

/// Mean of -ln sigmoid(score(u, pos) - score(u, neg)).
pub fn loss_bpr<R: Representations + ?Sized>(
    triples: &[Triple],
    reps: &R,
    mapping: Mapping,
) -> Result<(f64, RowGrads)> {
    let mut grads = RowGrads::new(reps.dim());
    if triples.is_empty() {
        return Ok((0.0, grads));
    }
    let scale = 1.0 / triples.len() as f64;
    let mut value = 0.0;
    for t in triples {
        let user = reps.user(t.user);
        let (sp, gu_p, gi_p) = mapping.score_grad(user, reps.item(t.pos_item))?;
        let (sn, gu_n, gi_n) = mapping.score_grad(user, reps.item(t.neg_item))?;
        let x = sp - sn;
        value += softplus(-x);
        let g = -sigmoid(-x) * scale;
        grads.add_user(t.user, g, &gu_p);
        grads.add_user(t.user, -g, &gu_n);
        grads.add_item(t.pos_item, g, &gi_p);
        grads.add_item(t.neg_item, -g, &gi_n);
    }
    Ok((value * scale, grads))
}

/// Contrastive loss with negatives: squared distance for positives, weighted squared
/// hinge `max(0, margin - dist)^2` for negatives. Mean over samples.
pub fn loss_contrastive_neg<R: Representations + ?Sized>(
    samples: &[LabeledPair],
    reps: &R,
    margin: f64,
    neg_weight: f64,
) -> (f64, RowGrads) {
    let mut grads = RowGrads::new(reps.dim());
    if samples.is_empty() {
        return (0.0, grads);
    }
    let scale = 1.0 / samples.len() as f64;
    let mut value = 0.0;
    for p in samples {
        let delta = diff(reps.user(p.user), reps.item(p.item));
        if p.positive {
            value += sq_norm(&delta);
            grads.add_user(p.user, 2.0 * scale, &delta);
            grads.add_item(p.item, -2.0 * scale, &delta);
        } else {
            let dist = sq_norm(&delta).sqrt();
            let gap = margin - dist;
            if gap > 0.0 {
                value += neg_weight * gap * gap;
                // identical reps: the direction is undefined, subgradient 0
                if dist > 0.0 {
                    let g = -2.0 * neg_weight * gap / dist * scale;
                    grads.add_user(p.user, g, &delta);
                    grads.add_item(p.item, -g, &delta);
                }
            }
        }
    }
    (value * scale, grads)
}

/// Smallest |dist - margin| over the negative samples, for kink detection.
pub(crate) fn contrastive_kink_distance<R: Representations + ?Sized>(
    samples: &[LabeledPair],
    reps: &R,
    margin: f64,
) -> Option<f64> {
    samples
        .iter()
        .filter(|p| !p.positive)
        .map(|p| (sq_norm(&diff(reps.user(p.user), reps.item(p.item))).sqrt() - margin).abs())
        .reduce(f64::min)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::encoder::EmbeddingModel;
    use ndarray::array;

    fn model(users: ndarray::Array2<f64>, items: ndarray::Array2<f64>) -> EmbeddingModel {
        EmbeddingModel::from_tables(users, items, 0).unwrap()
    }

    #[test]
    fn cont_examples() {
        let m = model(array![[1.0, 0.0]], array![[0.0, 1.0]]);
        let (v, g) = loss_cont(&[(0, 0)], &m);
        assert_eq!(v, 2.0);
        assert_eq!(g.user(0).unwrap(), &[2.0, -2.0]);
        assert_eq!(g.item(0).unwrap(), &[-2.0, 2.0]);
        let same = model(array![[0.3, 0.3], [0.3, 0.3]], array![[0.3, 0.3]]);
        assert_eq!(loss_cont(&[(0, 0), (1, 0)], &same).0, 0.0);
    }

    #[test]
    fn mse_examples() {
        let s = 0.5f64.sqrt();
        let m = model(array![[s, s], [0.0, 0.0]], array![[s, s]]);
        let (v, _) = loss_mse_similar(&[(0, 0)], &m, Mapping::Dot).unwrap();
        assert!(v.abs() < 1e-15);
        let (v, _) = loss_mse_similar(&[(1, 0)], &m, Mapping::Dot).unwrap();
        assert_eq!(v, 1.0);
    }

    #[test]
    fn bce_examples() {
        let m = model(array![[0.0, 0.0], [100.0, 0.0]], array![[1.0, 0.0]]);
        let pos = |user| LabeledPair {
            user,
            item: 0,
            positive: true,
        };
        let (v, _) = loss_bce(&[pos(0)], &m, Mapping::Dot).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
        let (v, _) = loss_bce(&[pos(1)], &m, Mapping::Dot).unwrap();
        assert!(v < 1e-40);
        let neg = LabeledPair {
            user: 1,
            item: 0,
            positive: false,
        };
        let (v, _) = loss_bce(&[neg], &m, Mapping::Dot).unwrap();
        assert!((v - 100.0).abs() < 1e-12 && v.is_finite());
    }

    #[test]
    fn bpr_examples() {
        let m = model(array![[1.0, 1.0]], array![[0.5, 0.0], [0.0, 0.5], [-50.0, -50.0]]);
        let t = |neg_item| Triple {
            user: 0,
            pos_item: 0,
            neg_item,
        };
        let (v, _) = loss_bpr(&[t(1)], &m, Mapping::Dot).unwrap();
        assert!((v - std::f64::consts::LN_2).abs() < 1e-15);
        let (v, _) = loss_bpr(&[t(2)], &m, Mapping::Dot).unwrap();
        assert!(v < 1e-40);
    }

    #[test]
    fn contrastive_neg_examples() {
        let m = model(array![[0.0, 0.0]], array![[3.0, 4.0], [0.0, 0.0]]);
        let neg = |item| LabeledPair {
            user: 0,
            item,
            positive: false,
        };
        // distance 5 >= margin 2: inactive
        let (v, g) = loss_contrastive_neg(&[neg(0)], &m, 2.0, 0.7);
        assert_eq!(v, 0.0);
        assert_eq!(g.max_abs(), 0.0);
        let (v, _) = loss_contrastive_neg(&[neg(1)], &m, 2.0, 0.7);
        assert!((v - 0.7 * 4.0).abs() < 1e-15);
        let pos = LabeledPair {
            user: 0,
            item: 0,
            positive: true,
        };
        assert_eq!(loss_contrastive_neg(&[pos], &m, 2.0, 0.7).0, 25.0);
    }

    #[test]
    fn softplus_stable() {
        assert_eq!(softplus(1000.0), 1000.0);
        assert!(softplus(-1000.0) >= 0.0 && softplus(-1000.0) < 1e-300);
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-16);
        assert_eq!(sigmoid(0.0), 0.5);
    }
}
