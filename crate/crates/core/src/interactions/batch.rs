use rand::seq::SliceRandom;
use rand::Rng;

use crate::interactions::InteractionDataset;

/// A mini-batch of similar pairs plus the distinct users and items it touches.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    pub pairs: Vec<(usize, usize)>,
    /// Ascending.
    pub unique_users: Vec<usize>,
    /// Ascending.
    pub unique_items: Vec<usize>,
}

impl Batch {
    pub fn new(pairs: Vec<(usize, usize)>) -> Self {
        let mut unique_users: Vec<usize> = pairs.iter().map(|p| p.0).collect();
        unique_users.sort_unstable();
        unique_users.dedup();
        let mut unique_items: Vec<usize> = pairs.iter().map(|p| p.1).collect();
        unique_items.sort_unstable();
        unique_items.dedup();
        Batch {
            pairs,
            unique_users,
            unique_items,
        }
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

/// Shuffles the similar set and cuts it into consecutive batches; the last one may be
/// short.
///
/// # Panics
/// If `batch_size` is zero.
pub fn make_batches<R: Rng + ?Sized>(
    ds: &InteractionDataset,
    batch_size: usize,
    rng: &mut R,
) -> Vec<Batch> {
    assert!(batch_size >= 1, "batch_size must be positive");
    let mut order: Vec<(usize, usize)> = ds.pairs().to_vec();
    order.shuffle(rng);
    order
        .chunks(batch_size)
        .map(|chunk| Batch::new(chunk.to_vec()))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn ten_pairs() -> InteractionDataset {
        let pairs = (0..10).map(|k| (k % 4, k)).collect();
        InteractionDataset::from_index_pairs(4, 10, pairs).unwrap().0
    }

    #[test]
    fn sizes() {
        let ds = ten_pairs();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let sizes: Vec<usize> = make_batches(&ds, 3, &mut rng)
            .iter()
            .map(Batch::len)
            .collect();
        assert_eq!(sizes, vec![3, 3, 3, 1]);
        let single = make_batches(&ds, 64, &mut rng);
        assert_eq!(single.len(), 1);
        assert_eq!(single[0].len(), 10);
    }

    #[test]
    fn epoch_is_a_partition() {
        let ds = ten_pairs();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut all: Vec<(usize, usize)> = make_batches(&ds, 4, &mut rng)
            .into_iter()
            .flat_map(|b| b.pairs)
            .collect();
        all.sort_unstable();
        assert_eq!(all, ds.pairs());
    }

    #[test]
    fn unique_members() {
        let b = Batch::new(vec![(2, 5), (1, 5), (2, 3)]);
        assert_eq!(b.unique_users, vec![1, 2]);
        assert_eq!(b.unique_items, vec![3, 5]);
    }
}
