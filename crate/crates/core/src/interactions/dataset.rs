use std::collections::HashMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Line format of an interaction file.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InteractionFormat {
    /// `user_id<whitespace>item_id[<whitespace>extra...]`, one interaction per line.
    PairList,
    /// `user_id: item1,item2,item3`
    MatrixRows,
}

impl InteractionFormat {
    pub fn name(self) -> &'static str {
        match self {
            InteractionFormat::PairList => "pair-list",
            InteractionFormat::MatrixRows => "matrix-rows",
        }
    }
}

impl std::str::FromStr for InteractionFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pair-list" | "pairs" => Ok(InteractionFormat::PairList),
            "matrix-rows" | "matrix" => Ok(InteractionFormat::MatrixRows),
            other => Err(Error::InvalidArgument(format!("unknown interaction format {other:?}"))),
        }
    }
}

/// Bidirectional map between external string ids and dense indices.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct IdMap {
    ids: Vec<String>,
    #[serde(skip)]
    index: HashMap<String, usize>,
}

impl IdMap {
    pub fn from_ids(ids: Vec<String>) -> Self {
        let index = ids.iter().enumerate().map(|(i, id)| (id.clone(), i)).collect();
        IdMap { ids, index }
    }

    fn intern(&mut self, id: &str) -> usize {
        if let Some(&i) = self.index.get(id) {
            return i;
        }
        let i = self.ids.len();
        self.ids.push(id.to_string());
        self.index.insert(id.to_string(), i);
        i
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn id(&self, index: usize) -> Option<&str> {
        self.ids.get(index).map(String::as_str)
    }

    pub fn index_of(&self, id: &str) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn ids(&self) -> &[String] {
        &self.ids
    }

    fn rebuild_index(&mut self) {
        self.index = self
            .ids
            .iter()
            .enumerate()
            .map(|(i, id)| (id.clone(), i))
            .collect();
    }
}

/// The similar set: observed (user, item) pairs with dense indices and adjacency in both
/// directions. Immutable once built.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InteractionDataset {
    num_users: usize,
    num_items: usize,
    pairs: Vec<(usize, usize)>,
    user_items: Vec<Vec<usize>>,
    item_users: Vec<Vec<usize>>,
    user_ids: IdMap,
    item_ids: IdMap,
}

#[derive(Serialize, Deserialize)]
struct DatasetRepr {
    num_users: usize,
    num_items: usize,
    user_ids: Vec<String>,
    item_ids: Vec<String>,
    pairs: Vec<(usize, usize)>,
}

impl Serialize for InteractionDataset {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        DatasetRepr {
            num_users: self.num_users,
            num_items: self.num_items,
            user_ids: self.user_ids.ids.clone(),
            item_ids: self.item_ids.ids.clone(),
            pairs: self.pairs.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for InteractionDataset {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let repr = DatasetRepr::deserialize(d)?;
        InteractionDataset::from_parts(
            repr.num_users,
            repr.num_items,
            repr.pairs,
            IdMap::from_ids(repr.user_ids),
            IdMap::from_ids(repr.item_ids),
        )
        .map_err(serde::de::Error::custom)
    }
}

impl InteractionDataset {
    /// Builds a dataset over fixed index spaces. Pairs are deduplicated and sorted; indices
    /// that never occur are kept as isolated users or items.
    pub fn from_parts(
        num_users: usize,
        num_items: usize,
        mut pairs: Vec<(usize, usize)>,
        mut user_ids: IdMap,
        mut item_ids: IdMap,
    ) -> Result<Self> {
        for &(u, i) in &pairs {
            if u >= num_users {
                return Err(Error::IndexOutOfRange {
                    kind: "user",
                    index: u,
                    size: num_users,
                });
            }
            if i >= num_items {
                return Err(Error::IndexOutOfRange {
                    kind: "item",
                    index: i,
                    size: num_items,
                });
            }
        }
        if user_ids.len() != num_users || item_ids.len() != num_items {
            return Err(Error::DimensionMismatch(format!(
                "id maps have {}/{} entries for {} users and {} items",
                user_ids.len(),
                item_ids.len(),
                num_users,
                num_items
            )));
        }
        user_ids.rebuild_index();
        item_ids.rebuild_index();

        pairs.sort_unstable();
        pairs.dedup();

        let mut user_items = vec![Vec::new(); num_users];
        let mut item_users = vec![Vec::new(); num_items];
        for &(u, i) in &pairs {
            user_items[u].push(i);
            item_users[i].push(u);
        }
        // pairs are sorted by (user, item), so user rows are already sorted; item columns
        // are filled in ascending user order as well.
        Ok(InteractionDataset {
            num_users,
            num_items,
            pairs,
            user_items,
            item_users,
            user_ids,
            item_ids,
        })
    }

    /// Builds a dataset from dense index pairs, relabelling indices into canonical order
    /// (the order in which they first occur when pairs are listed by user). Ids are
    /// `u<index>` / `i<index>` of the canonical indices. Returns the dataset together with the
    /// old-to-new user and item relabelling.
    pub fn from_index_pairs(
        num_users: usize,
        num_items: usize,
        pairs: Vec<(usize, usize)>,
    ) -> Result<(Self, Vec<usize>, Vec<usize>)> {
        for &(u, i) in &pairs {
            if u >= num_users || i >= num_items {
                return Err(Error::InvalidArgument(format!(
                    "pair ({u}, {i}) outside {num_users}x{num_items}"
                )));
            }
        }
        let (pairs, user_perm, item_perm) = canonicalize(num_users, num_items, pairs);
        let user_ids = IdMap::from_ids((0..num_users).map(|u| format!("u{u}")).collect());
        let item_ids = IdMap::from_ids((0..num_items).map(|i| format!("i{i}")).collect());
        let ds = Self::from_parts(num_users, num_items, pairs, user_ids, item_ids)?;
        Ok((ds, user_perm, item_perm))
    }

    /// Builds a dataset from external-id pairs in file order.
    pub fn from_id_pairs<'a, I>(pairs: I) -> Result<Self>
    where
        I: IntoIterator<Item = (&'a str, &'a str)>,
    {
        let mut users = IdMap::default();
        let mut items = IdMap::default();
        let mut raw = Vec::new();
        for (u, i) in pairs {
            raw.push((users.intern(u), items.intern(i)));
        }
        if raw.is_empty() {
            return Err(Error::EmptyDataset);
        }
        let (m, n) = (users.len(), items.len());
        let (pairs, user_perm, item_perm) = canonicalize(m, n, raw);
        let users = IdMap::from_ids(permute_ids(users.ids, &user_perm));
        let items = IdMap::from_ids(permute_ids(items.ids, &item_perm));
        Self::from_parts(m, n, pairs, users, items)
    }

    pub fn load(path: &Path, format: InteractionFormat) -> Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        let mut raw: Vec<(String, String)> = Vec::new();
        let mut lines_read = 0usize;
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            lines_read += 1;
            let content = match line.find('#') {
                Some(pos) => &line[..pos],
                None => line.as_str(),
            };
            let content = content.trim();
            if content.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                message,
            };
            match format {
                InteractionFormat::PairList => {
                    let mut fields = content.split_whitespace();
                    match (fields.next(), fields.next()) {
                        (Some(u), Some(i)) => raw.push((u.to_string(), i.to_string())),
                        _ => {
                            return Err(parse_err(format!(
                                "expected `user item`, found {content:?}"
                            )))
                        }
                    }
                }
                InteractionFormat::MatrixRows => {
                    let (user, items) = content.split_once(':').ok_or_else(|| {
                        parse_err(format!("expected `user: item,item,...`, found {content:?}"))
                    })?;
                    let user = user.trim();
                    if user.is_empty() || user.contains(char::is_whitespace) {
                        return Err(parse_err(format!("bad user id {user:?}")));
                    }
                    for item in items.split(',') {
                        let item = item.trim();
                        if item.is_empty() {
                            if items.trim().is_empty() {
                                continue;
                            }
                            return Err(parse_err("empty item id".to_string()));
                        }
                        if item.contains(char::is_whitespace) {
                            return Err(parse_err(format!("bad item id {item:?}")));
                        }
                        raw.push((user.to_string(), item.to_string()));
                    }
                }
            }
        }
        let ds = Self::from_id_pairs(raw.iter().map(|(u, i)| (u.as_str(), i.as_str())))?;
        log::info!(
            "loaded {}: {} lines, {} users, {} items, {} interactions, sparsity {:.4}%",
            path.display(),
            lines_read,
            ds.num_users,
            ds.num_items,
            ds.pairs.len(),
            100.0 * ds.sparsity()
        );
        Ok(ds)
    }

    /// Writes the dataset as a pair list. Loading the file again reproduces the same
    /// index structure.
    pub fn save_pair_list(&self, path: &Path) -> Result<()> {
        let mut w = BufWriter::new(File::create(path)?);
        for &(u, i) in &self.pairs {
            writeln!(w, "{}\t{}", self.user_ids.ids[u], self.item_ids.ids[i])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Same index spaces and id maps, keeping only pairs accepted by `keep`.
    pub fn filter_pairs(&self, mut keep: impl FnMut(usize, usize) -> bool) -> Self {
        let pairs = self
            .pairs
            .iter()
            .copied()
            .filter(|&(u, i)| keep(u, i))
            .collect();
        Self::from_parts(
            self.num_users,
            self.num_items,
            pairs,
            self.user_ids.clone(),
            self.item_ids.clone(),
        )
        .expect("subset of a valid dataset is valid")
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn num_pairs(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Observed pairs sorted by (user, item).
    pub fn pairs(&self) -> &[(usize, usize)] {
        &self.pairs
    }

    pub fn user_items(&self, user: usize) -> &[usize] {
        &self.user_items[user]
    }

    pub fn item_users(&self, item: usize) -> &[usize] {
        &self.item_users[item]
    }

    pub fn contains(&self, user: usize, item: usize) -> bool {
        self.user_items
            .get(user)
            .is_some_and(|items| items.binary_search(&item).is_ok())
    }

    pub fn user_ids(&self) -> &IdMap {
        &self.user_ids
    }

    pub fn item_ids(&self) -> &IdMap {
        &self.item_ids
    }

    pub fn sparsity(&self) -> f64 {
        let cells = self.num_users as f64 * self.num_items as f64;
        if cells == 0.0 {
            return 1.0;
        }
        1.0 - self.pairs.len() as f64 / cells
    }
}

fn permute_ids(ids: Vec<String>, perm: &[usize]) -> Vec<String> {
    let mut out = vec![String::new(); ids.len()];
    for (old, id) in ids.into_iter().enumerate() {
        out[perm[old]] = id;
    }
    out
}

/// Relabels users and items by first occurrence when pairs are listed in (user, item)
/// order. The fixed point of this map is what makes save/load round trips exact.
/// Unused indices are appended after the used ones, preserving their relative order.
fn canonicalize(
    num_users: usize,
    num_items: usize,
    mut pairs: Vec<(usize, usize)>,
) -> (Vec<(usize, usize)>, Vec<usize>, Vec<usize>) {
    const UNSET: usize = usize::MAX;
    // users: order of first appearance in the input sequence
    let mut user_perm = vec![UNSET; num_users];
    let mut next = 0;
    for &(u, _) in &pairs {
        if user_perm[u] == UNSET {
            user_perm[u] = next;
            next += 1;
        }
    }
    for slot in user_perm.iter_mut().filter(|s| **s == UNSET) {
        *slot = next;
        next += 1;
    }
    // stable sort keeps the input order of items within a user
    for p in pairs.iter_mut() {
        p.0 = user_perm[p.0];
    }
    pairs.sort_by_key(|p| p.0);

    let mut item_perm = vec![UNSET; num_items];
    let mut next = 0;
    for &(_, i) in &pairs {
        if item_perm[i] == UNSET {
            item_perm[i] = next;
            next += 1;
        }
    }
    for slot in item_perm.iter_mut().filter(|s| **s == UNSET) {
        *slot = next;
        next += 1;
    }
    for p in pairs.iter_mut() {
        p.1 = item_perm[p.1];
    }
    pairs.sort_unstable();
    pairs.dedup();
    (pairs, user_perm, item_perm)
}

/// Dense item side-information, one row per item index.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ItemFeatures {
    num_features: usize,
    values: Vec<f64>,
}

impl ItemFeatures {
    pub fn new(num_items: usize, num_features: usize, values: Vec<f64>) -> Result<Self> {
        if values.len() != num_items * num_features {
            return Err(Error::DimensionMismatch(format!(
                "{} feature values for {num_items} items x {num_features} features",
                values.len()
            )));
        }
        Ok(ItemFeatures {
            num_features,
            values,
        })
    }

    /// Reads `item_id v1 v2 ... vf` lines. Every item of `ds` must have a row; rows for
    /// unknown ids are ignored.
    pub fn load(path: &Path, ds: &InteractionDataset) -> Result<Self> {
        let reader = BufReader::new(File::open(path)?);
        let mut rows: Vec<Option<Vec<f64>>> = vec![None; ds.num_items()];
        let mut width = None;
        for (lineno, line) in reader.lines().enumerate() {
            let line = line?;
            let content = line.split('#').next().unwrap_or("").trim();
            if content.is_empty() {
                continue;
            }
            let parse_err = |message: String| Error::Parse {
                path: path.to_path_buf(),
                line: lineno + 1,
                message,
            };
            let mut fields = content.split_whitespace();
            let id = fields.next().expect("non-empty line has a field");
            let values = fields
                .map(|v| {
                    v.parse::<f64>()
                        .map_err(|e| parse_err(format!("bad feature value {v:?}: {e}")))
                })
                .collect::<Result<Vec<f64>>>()?;
            match width {
                None => width = Some(values.len()),
                Some(w) if w != values.len() => {
                    return Err(parse_err(format!(
                        "expected {w} feature values, found {}",
                        values.len()
                    )))
                }
                _ => {}
            }
            if let Some(k) = ds.item_ids().index_of(id) {
                rows[k] = Some(values);
            }
        }
        let width = width.ok_or(Error::EmptyDataset)?;
        let mut values = Vec::with_capacity(ds.num_items() * width);
        for (k, row) in rows.into_iter().enumerate() {
            match row {
                Some(r) => values.extend(r),
                None => {
                    return Err(Error::InvalidArgument(format!(
                        "no features for item {}",
                        ds.item_ids().id(k).unwrap_or("?")
                    )))
                }
            }
        }
        Self::new(ds.num_items(), width, values)
    }

    pub fn num_features(&self) -> usize {
        self.num_features
    }

    pub fn num_items(&self) -> usize {
        self.values.len().checked_div(self.num_features).unwrap_or(0)
    }

    pub fn row(&self, item: usize) -> &[f64] {
        &self.values[item * self.num_features..(item + 1) * self.num_features]
    }
}
