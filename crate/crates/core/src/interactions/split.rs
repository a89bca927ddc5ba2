use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Write};
use std::path::Path;

use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::interactions::sampling::{sample_unobserved, Anchor};
use crate::interactions::InteractionDataset;

/// Default number of sampled unobserved items per warm-start test case.
pub const DEFAULT_WARM_CANDIDATES: usize = 99;
/// Default number of sampled non-interacting users per cold-start item.
pub const DEFAULT_COLD_NEGATIVES: usize = 1000;

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct WarmCase {
    pub user: usize,
    pub held_out: usize,
    /// Held-out item plus sampled unobserved items, ascending.
    pub candidates: Vec<usize>,
}

/// Leave-one-out split: one held-out item per eligible user, ranked against sampled
/// unobserved items.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WarmSplit {
    pub seed: u64,
    pub candidates_per_case: usize,
    pub train: InteractionDataset,
    pub test_cases: Vec<WarmCase>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ColdSplit {
    pub seed: u64,
    pub negatives_per_item: usize,
    /// Training data over the full index space; cold items have no pairs.
    pub train: InteractionDataset,
    pub cold_items: Vec<usize>,
    /// Per cold item, ascending.
    pub ground_truth: Vec<Vec<usize>>,
    /// Per cold item: ground truth plus sampled non-interacting users, ascending.
    pub candidate_users: Vec<Vec<usize>>,
}

/// Holds out one uniformly chosen item for every user with at least two interactions and
/// attaches `candidates_per_case` items that user never interacted with. Users with a
/// single interaction stay in training and get no test case.
pub fn leave_one_out_split(
    ds: &InteractionDataset,
    candidates_per_case: usize,
    seed: u64,
) -> Result<WarmSplit> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut test_cases = Vec::new();
    let mut held: HashSet<(usize, usize)> = HashSet::new();
    for user in 0..ds.num_users() {
        let items = ds.user_items(user);
        if items.len() < 2 {
            continue;
        }
        let held_out = items[rng.gen_range(0..items.len())];
        let mut candidates = sample_unobserved(ds, Anchor::User(user), candidates_per_case, &mut rng)?;
        candidates.push(held_out);
        candidates.sort_unstable();
        held.insert((user, held_out));
        test_cases.push(WarmCase {
            user,
            held_out,
            candidates,
        });
    }
    let train = ds.filter_pairs(|u, i| !held.contains(&(u, i)));
    Ok(WarmSplit {
        seed,
        candidates_per_case,
        train,
        test_cases,
    })
}

/// Removes `num_cold` randomly chosen items (among those with interactions) from training.
/// Each cold item is ranked against its true users plus up to `negatives_per_item`
/// sampled users that never interacted with it.
pub fn cold_start_split(
    ds: &InteractionDataset,
    num_cold: usize,
    negatives_per_item: usize,
    seed: u64,
) -> Result<ColdSplit> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let eligible: Vec<usize> = (0..ds.num_items())
        .filter(|&i| !ds.item_users(i).is_empty())
        .collect();
    if num_cold == 0 || num_cold >= eligible.len() {
        return Err(Error::InvalidArgument(format!(
            "num_cold must be in 1..{}, got {num_cold}",
            eligible.len()
        )));
    }
    let mut cold_items: Vec<usize> = index::sample(&mut rng, eligible.len(), num_cold)
        .into_iter()
        .map(|r| eligible[r])
        .collect();
    cold_items.sort_unstable();

    let mut ground_truth = Vec::with_capacity(num_cold);
    let mut candidate_users = Vec::with_capacity(num_cold);
    for &item in &cold_items {
        let truth = ds.item_users(item).to_vec();
        let available = ds.num_users() - truth.len();
        let mut candidates = sample_unobserved(
            ds,
            Anchor::Item(item),
            negatives_per_item.min(available),
            &mut rng,
        )?;
        candidates.extend_from_slice(&truth);
        candidates.sort_unstable();
        ground_truth.push(truth);
        candidate_users.push(candidates);
    }
    let cold: HashSet<usize> = cold_items.iter().copied().collect();
    let train = ds.filter_pairs(|_, i| !cold.contains(&i));
    Ok(ColdSplit {
        seed,
        negatives_per_item,
        train,
        cold_items,
        ground_truth,
        candidate_users,
    })
}

pub(crate) fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let mut w = BufWriter::new(File::create(path)?);
    serde_json::to_writer(&mut w, value)?;
    w.flush()?;
    Ok(())
}

pub(crate) fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    Ok(serde_json::from_reader(BufReader::new(File::open(path)?))?)
}

impl WarmSplit {
    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(self, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

impl ColdSplit {
    pub fn save(&self, path: &Path) -> Result<()> {
        write_json(self, path)
    }

    pub fn load(path: &Path) -> Result<Self> {
        read_json(path)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> InteractionDataset {
        // user 0: {0,1,2}; user 1: {3}; user 2: {0,4}; 20 items total
        let mut pairs = vec![(0, 0), (0, 1), (0, 2), (1, 3), (2, 0), (2, 4)];
        pairs.extend((5..20).map(|i| (3, i)));
        InteractionDataset::from_index_pairs(4, 20, pairs).unwrap().0
    }

    #[test]
    fn holds_out_exactly_one_observed_item() {
        let ds = toy();
        let split = leave_one_out_split(&ds, 5, 11).unwrap();
        let case0 = split.test_cases.iter().find(|c| c.user == 0).unwrap();
        assert!(ds.user_items(0).contains(&case0.held_out));
        assert_eq!(split.train.user_items(0).len(), 2);
        assert!(!split.train.contains(0, case0.held_out));
        // single-interaction user keeps its pair and has no case
        assert!(split.test_cases.iter().all(|c| c.user != 1));
        assert!(split.train.contains(1, ds.user_items(1)[0]));
    }

    #[test]
    fn candidates_contain_target_once_and_only_unobserved_otherwise() {
        let ds = toy();
        let split = leave_one_out_split(&ds, 5, 3).unwrap();
        for case in &split.test_cases {
            assert_eq!(case.candidates.len(), 6);
            let hits = case.candidates.iter().filter(|&&c| c == case.held_out).count();
            assert_eq!(hits, 1);
            for &c in &case.candidates {
                if c != case.held_out {
                    assert!(!ds.contains(case.user, c));
                }
            }
        }
    }

    #[test]
    fn train_and_held_out_partition_the_pairs() {
        let ds = toy();
        let split = leave_one_out_split(&ds, 2, 5).unwrap();
        let mut all: Vec<(usize, usize)> = split.train.pairs().to_vec();
        for c in &split.test_cases {
            assert!(!split.train.contains(c.user, c.held_out));
            all.push((c.user, c.held_out));
        }
        all.sort_unstable();
        assert_eq!(all, ds.pairs());
    }

    #[test]
    fn deterministic_for_fixed_seed() {
        let ds = toy();
        assert_eq!(
            leave_one_out_split(&ds, 4, 9).unwrap(),
            leave_one_out_split(&ds, 4, 9).unwrap()
        );
    }

    #[test]
    fn too_many_candidates_is_an_error() {
        let ds = toy();
        // user 3 has 5 unobserved items
        assert!(leave_one_out_split(&ds, 5, 0).is_ok());
        assert!(matches!(
            leave_one_out_split(&ds, 6, 0),
            Err(Error::InsufficientPool { .. })
        ));
    }

    #[test]
    fn cold_split_removes_items_and_builds_candidates() {
        let ds = toy();
        let split = cold_start_split(&ds, 2, 2, 4).unwrap();
        assert_eq!(split.cold_items.len(), 2);
        for (n, &item) in split.cold_items.iter().enumerate() {
            assert!(split.train.item_users(item).is_empty());
            assert_eq!(split.ground_truth[n], ds.item_users(item));
            for u in &split.ground_truth[n] {
                assert!(split.candidate_users[n].contains(u));
            }
            let available = ds.num_users() - ds.item_users(item).len();
            assert_eq!(
                split.candidate_users[n].len(),
                ds.item_users(item).len() + available.min(2)
            );
        }
        assert!(split
            .train
            .pairs()
            .iter()
            .all(|(_, i)| !split.cold_items.contains(i)));
    }

    #[test]
    fn split_json_round_trip() {
        let ds = toy();
        let split = leave_one_out_split(&ds, 3, 1).unwrap();
        let f = tempfile::NamedTempFile::new().unwrap();
        split.save(f.path()).unwrap();
        assert_eq!(WarmSplit::load(f.path()).unwrap(), split);
    }
}
