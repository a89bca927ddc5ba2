//! Learnable user/item representations and the score mappings over them.

use ndarray::{Array1, Array2};
use rand::distributions::{Distribution, Uniform};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interactions::ItemFeatures;

pub const DEFAULT_INIT_SCALE: f64 = 0.1;

/// Stream of the init rng used for the feature encoder, so that tables and encoder draw
/// from independent sequences.
const ENCODER_STREAM: u64 = 0x656e63;

/// How a (user, item) pair of representations becomes a predicted interaction score.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mapping {
    #[default]
    Dot,
    Cosine,
}

impl Mapping {
    pub fn score(self, user: &[f64], item: &[f64]) -> Result<f64> {
        predict_score(user, item, self)
    }

    /// Score and its gradients with respect to both inputs.
    pub(crate) fn score_grad(
        self,
        user: &[f64],
        item: &[f64],
    ) -> Result<(f64, Vec<f64>, Vec<f64>)> {
        match self {
            Mapping::Dot => Ok((dot(user, item), item.to_vec(), user.to_vec())),
            Mapping::Cosine => {
                let (nu, ni) = (norm(user), norm(item));
                if nu == 0.0 || ni == 0.0 {
                    return Err(Error::ZeroNorm);
                }
                let c = dot(user, item) / (nu * ni);
                // d cos / du = i/(|u||i|) - cos * u/|u|^2
                let gu = user
                    .iter()
                    .zip(item)
                    .map(|(&u, &i)| i / (nu * ni) - c * u / (nu * nu))
                    .collect();
                let gi = user
                    .iter()
                    .zip(item)
                    .map(|(&u, &i)| u / (nu * ni) - c * i / (ni * ni))
                    .collect();
                Ok((c, gu, gi))
            }
        }
    }
}

impl std::str::FromStr for Mapping {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dot" => Ok(Mapping::Dot),
            "cosine" => Ok(Mapping::Cosine),
            other => Err(Error::InvalidArgument(format!("unknown mapping {other:?}"))),
        }
    }
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn predict_score(user: &[f64], item: &[f64], mapping: Mapping) -> Result<f64> {
    if user.len() != item.len() {
        return Err(Error::DimensionMismatch(format!(
            "user rep has {} dims, item rep {}",
            user.len(),
            item.len()
        )));
    }
    match mapping {
        Mapping::Dot => Ok(dot(user, item)),
        Mapping::Cosine => {
            let (nu, ni) = (norm(user), norm(item));
            if nu == 0.0 || ni == 0.0 {
                return Err(Error::ZeroNorm);
            }
            Ok(dot(user, item) / (nu * ni))
        }
    }
}

/// Linear map from item side information to the representation space.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FeatureEncoder {
    /// f x d
    pub weight: Array2<f64>,
    /// d
    pub bias: Array1<f64>,
}

impl FeatureEncoder {
    pub fn num_features(&self) -> usize {
        self.weight.nrows()
    }

    pub fn encode(&self, features: &[f64]) -> Result<Vec<f64>> {
        if features.len() != self.num_features() {
            return Err(Error::DimensionMismatch(format!(
                "encoder expects {} features, got {}",
                self.num_features(),
                features.len()
            )));
        }
        let mut out = self.bias.to_vec();
        for (x, w_row) in features.iter().zip(self.weight.rows()) {
            if *x == 0.0 {
                continue;
            }
            for (o, w) in out.iter_mut().zip(w_row) {
                *o += x * w;
            }
        }
        Ok(out)
    }
}

/// User table (m x d), item table (n x d) and an optional item feature encoder.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingModel {
    pub(crate) user_table: Array2<f64>,
    pub(crate) item_table: Array2<f64>,
    pub(crate) feature_encoder: Option<FeatureEncoder>,
    pub(crate) seed: u64,
}

/// Read access to the representations a loss needs.
pub trait Representations {
    fn dim(&self) -> usize;
    fn user(&self, user: usize) -> &[f64];
    fn item(&self, item: usize) -> &[f64];
}

impl Representations for EmbeddingModel {
    fn dim(&self) -> usize {
        self.user_table.ncols()
    }

    fn user(&self, user: usize) -> &[f64] {
        row_slice(&self.user_table, user)
    }

    fn item(&self, item: usize) -> &[f64] {
        row_slice(&self.item_table, item)
    }
}

pub(crate) fn row_slice(table: &Array2<f64>, row: usize) -> &[f64] {
    let d = table.ncols();
    &table.as_slice().expect("tables are standard layout")[row * d..(row + 1) * d]
}

pub(crate) fn row_slice_mut(table: &mut Array2<f64>, row: usize) -> &mut [f64] {
    let d = table.ncols();
    &mut table.as_slice_mut().expect("tables are standard layout")[row * d..(row + 1) * d]
}

/// Draws both tables i.i.d. uniform in `[-init_scale, init_scale]`, users first.
pub fn init_model(
    num_users: usize,
    num_items: usize,
    dim: usize,
    init_scale: f64,
    seed: u64,
) -> Result<EmbeddingModel> {
    if dim == 0 {
        return Err(Error::InvalidArgument("dim must be at least 1".into()));
    }
    if !(init_scale > 0.0 && init_scale.is_finite()) {
        return Err(Error::InvalidArgument(format!(
            "init_scale must be positive, got {init_scale}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dist = Uniform::new_inclusive(-init_scale, init_scale);
    let user_table = Array2::from_shape_simple_fn((num_users, dim), || dist.sample(&mut rng));
    let item_table = Array2::from_shape_simple_fn((num_items, dim), || dist.sample(&mut rng));
    Ok(EmbeddingModel {
        user_table,
        item_table,
        feature_encoder: None,
        seed,
    })
}

impl EmbeddingModel {
    pub fn from_tables(
        user_table: Array2<f64>,
        item_table: Array2<f64>,
        seed: u64,
    ) -> Result<Self> {
        if user_table.ncols() != item_table.ncols() || user_table.ncols() == 0 {
            return Err(Error::DimensionMismatch(format!(
                "user table has {} columns, item table {}",
                user_table.ncols(),
                item_table.ncols()
            )));
        }
        Ok(EmbeddingModel {
            user_table: user_table.as_standard_layout().into_owned(),
            item_table: item_table.as_standard_layout().into_owned(),
            feature_encoder: None,
            seed,
        })
    }

    /// Attaches a linear encoder with weights uniform in `[-init_scale, init_scale]` and
    /// zero bias.
    pub fn with_feature_encoder(mut self, num_features: usize, init_scale: f64) -> Result<Self> {
        if num_features == 0 || !(init_scale > 0.0) {
            return Err(Error::InvalidArgument(
                "encoder needs at least one feature and a positive init scale".into(),
            ));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(ENCODER_STREAM);
        let dist = Uniform::new_inclusive(-init_scale, init_scale);
        let weight =
            Array2::from_shape_simple_fn((num_features, self.dim()), || dist.sample(&mut rng));
        self.feature_encoder = Some(FeatureEncoder {
            weight,
            bias: Array1::zeros(self.dim()),
        });
        Ok(self)
    }

    pub fn set_feature_encoder(&mut self, encoder: FeatureEncoder) -> Result<()> {
        if encoder.weight.ncols() != self.dim() || encoder.bias.len() != self.dim() {
            return Err(Error::DimensionMismatch(
                "encoder output dimension differs from model dim".into(),
            ));
        }
        self.feature_encoder = Some(encoder);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.user_table.ncols()
    }

    pub fn num_users(&self) -> usize {
        self.user_table.nrows()
    }

    pub fn num_items(&self) -> usize {
        self.item_table.nrows()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn user_table(&self) -> &Array2<f64> {
        &self.user_table
    }

    pub fn item_table(&self) -> &Array2<f64> {
        &self.item_table
    }

    pub fn user_table_mut(&mut self) -> &mut Array2<f64> {
        &mut self.user_table
    }

    pub fn item_table_mut(&mut self) -> &mut Array2<f64> {
        &mut self.item_table
    }

    pub fn feature_encoder(&self) -> Option<&FeatureEncoder> {
        self.feature_encoder.as_ref()
    }

    pub fn user_rep(&self, user: usize) -> Result<&[f64]> {
        if user >= self.num_users() {
            return Err(Error::IndexOutOfRange {
                kind: "user",
                index: user,
                size: self.num_users(),
            });
        }
        Ok(row_slice(&self.user_table, user))
    }

    pub fn item_rep(&self, item: usize) -> Result<&[f64]> {
        if item >= self.num_items() {
            return Err(Error::IndexOutOfRange {
                kind: "item",
                index: item,
                size: self.num_items(),
            });
        }
        Ok(row_slice(&self.item_table, item))
    }

    /// Mean of the item-table rows in `history`.
    pub fn aggregate_user_rep(&self, history: &[usize]) -> Result<Vec<f64>> {
        if history.is_empty() {
            return Err(Error::InvalidArgument("empty history".into()));
        }
        let mut acc = vec![0.0; self.dim()];
        for &k in history {
            for (a, v) in acc.iter_mut().zip(self.item_rep(k)?) {
                *a += v;
            }
        }
        let len = history.len() as f64;
        acc.iter_mut().for_each(|a| *a /= len);
        Ok(acc)
    }

    pub fn encode_item_features(&self, features: &[f64]) -> Result<Vec<f64>> {
        self.feature_encoder
            .as_ref()
            .ok_or(Error::MissingEncoder)?
            .encode(features)
    }

    /// Overwrites the item table with encoder outputs for every item.
    pub fn materialize_item_table(&mut self, features: &ItemFeatures) -> Result<()> {
        let encoder = self.feature_encoder.as_ref().ok_or(Error::MissingEncoder)?;
        if features.num_items() != self.num_items() {
            return Err(Error::DimensionMismatch(format!(
                "{} feature rows for {} items",
                features.num_items(),
                self.num_items()
            )));
        }
        let mut table = Array2::zeros(self.item_table.raw_dim());
        for k in 0..self.num_items() {
            let rep = encoder.encode(features.row(k))?;
            row_slice_mut(&mut table, k).copy_from_slice(&rep);
        }
        self.item_table = table;
        Ok(())
    }

    /// Users stacked on top of items, (m + n) x d.
    pub fn joint_matrix(&self) -> Array2<f64> {
        ndarray::concatenate(
            ndarray::Axis(0),
            &[self.user_table.view(), self.item_table.view()],
        )
        .expect("tables share the column count")
    }

    pub fn is_finite(&self) -> bool {
        let enc_ok = self.feature_encoder.as_ref().is_none_or(|e| {
            e.weight.iter().all(|v| v.is_finite()) && e.bias.iter().all(|v| v.is_finite())
        });
        enc_ok
            && self.user_table.iter().all(|v| v.is_finite())
            && self.item_table.iter().all(|v| v.is_finite())
    }
}
