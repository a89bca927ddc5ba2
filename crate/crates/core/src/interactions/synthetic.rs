use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interactions::InteractionDataset;

/// Re-sampling budget per component before giving up on connectivity.
pub const MAX_COMPONENT_ATTEMPTS: usize = 1000;

/// Disjoint-set forest with path halving and union by size.
#[derive(Clone, Debug)]
pub struct UnionFind {
    parent: Vec<usize>,
    size: Vec<usize>,
    sets: usize,
}

impl UnionFind {
    pub fn new(n: usize) -> Self {
        UnionFind {
            parent: (0..n).collect(),
            size: vec![1; n],
            sets: n,
        }
    }

    pub fn find(&mut self, mut x: usize) -> usize {
        while self.parent[x] != x {
            self.parent[x] = self.parent[self.parent[x]];
            x = self.parent[x];
        }
        x
    }

    /// Returns true if `a` and `b` were in different sets.
    pub fn union(&mut self, a: usize, b: usize) -> bool {
        let (mut ra, mut rb) = (self.find(a), self.find(b));
        if ra == rb {
            return false;
        }
        if self.size[ra] < self.size[rb] {
            std::mem::swap(&mut ra, &mut rb);
        }
        self.parent[rb] = ra;
        self.size[ra] += self.size[rb];
        self.sets -= 1;
        true
    }

    pub fn num_sets(&self) -> usize {
        self.sets
    }
}

/// Number of connected components of the user-item graph (users and items as nodes).
pub fn count_components(ds: &InteractionDataset) -> usize {
    let m = ds.num_users();
    let mut uf = UnionFind::new(m + ds.num_items());
    for &(u, i) in ds.pairs() {
        uf.union(u, m + i);
    }
    uf.num_sets()
}

/// A generated dataset with the component label of every user and item.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SyntheticGraph {
    pub dataset: InteractionDataset,
    pub user_component: Vec<usize>,
    pub item_component: Vec<usize>,
}

/// Generates `num_components` disjoint bipartite Erdős–Rényi blocks of
/// `users_per` x `items_per` nodes. Each block is re-drawn until it is connected, so
/// the result has exactly `num_components` components.
pub fn gen_synthetic_components(
    num_components: usize,
    users_per: usize,
    items_per: usize,
    edge_prob: f64,
    seed: u64,
) -> Result<SyntheticGraph> {
    if num_components == 0 || users_per == 0 || items_per == 0 {
        return Err(Error::InvalidArgument(
            "components, users_per and items_per must be positive".into(),
        ));
    }
    if !(edge_prob > 0.0 && edge_prob <= 1.0) {
        return Err(Error::InvalidArgument(format!(
            "edge_prob must lie in (0, 1], got {edge_prob}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut pairs = Vec::new();
    for v in 0..num_components {
        let block = connected_block(users_per, items_per, edge_prob, &mut rng)?;
        pairs.extend(
            block
                .into_iter()
                .map(|(u, i)| (v * users_per + u, v * items_per + i)),
        );
    }
    let (m, n) = (num_components * users_per, num_components * items_per);
    let (dataset, user_perm, item_perm) = InteractionDataset::from_index_pairs(m, n, pairs)?;
    let mut user_component = vec![0; m];
    for (old, &new) in user_perm.iter().enumerate() {
        user_component[new] = old / users_per;
    }
    let mut item_component = vec![0; n];
    for (old, &new) in item_perm.iter().enumerate() {
        item_component[new] = old / items_per;
    }
    Ok(SyntheticGraph {
        dataset,
        user_component,
        item_component,
    })
}

fn connected_block<R: Rng + ?Sized>(
    users: usize,
    items: usize,
    edge_prob: f64,
    rng: &mut R,
) -> Result<Vec<(usize, usize)>> {
    for _ in 0..MAX_COMPONENT_ATTEMPTS {
        let mut edges = Vec::new();
        let mut uf = UnionFind::new(users + items);
        for u in 0..users {
            for i in 0..items {
                if rng.gen_bool(edge_prob) {
                    edges.push((u, i));
                    uf.union(u, users + i);
                }
            }
        }
        if uf.num_sets() == 1 {
            return Ok(edges);
        }
    }
    Err(Error::ConnectivityUnattainable {
        attempts: MAX_COMPONENT_ATTEMPTS,
    })
}
