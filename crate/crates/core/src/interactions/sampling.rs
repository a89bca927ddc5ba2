use rand::seq::index;
use rand::Rng;

use crate::error::{Error, Result};
use crate::interactions::InteractionDataset;

/// The side of the bipartite graph a sample is anchored on.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Anchor {
    /// Sample items the user has not interacted with.
    User(usize),
    /// Sample users that have not interacted with the item.
    Item(usize),
}

/// Uniform sample without replacement of counterparts with no observed interaction.
pub fn sample_unobserved<R: Rng + ?Sized>(
    ds: &InteractionDataset,
    anchor: Anchor,
    count: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let (observed, universe) = match anchor {
        Anchor::User(u) => {
            check_index("user", u, ds.num_users())?;
            (ds.user_items(u), ds.num_items())
        }
        Anchor::Item(i) => {
            check_index("item", i, ds.num_items())?;
            (ds.item_users(i), ds.num_users())
        }
    };
    sample_complement(observed, universe, count, rng)
}

/// Samples `count` distinct indices of `0..universe` missing from the sorted slice
/// `observed`.
pub(crate) fn sample_complement<R: Rng + ?Sized>(
    observed: &[usize],
    universe: usize,
    count: usize,
    rng: &mut R,
) -> Result<Vec<usize>> {
    let available = universe - observed.len();
    if count > available {
        return Err(Error::InsufficientPool {
            requested: count,
            available,
        });
    }
    if count == 0 {
        return Ok(Vec::new());
    }
    // rank r in the complement maps to r plus the number of observed indices at or
    // below the result
    let picks = index::sample(rng, available, count);
    Ok(picks
        .into_iter()
        .map(|r| complement_at(observed, r))
        .collect())
}

/// The `rank`-th (0-based) element of `0..` that is not in sorted `observed`.
fn complement_at(observed: &[usize], rank: usize) -> usize {
    // smallest x with x - |{o <= x}| == rank and x not observed
    let (mut lo, mut hi) = (0usize, observed.len());
    while lo < hi {
        let mid = (lo + hi) / 2;
        // observed[mid] - mid unobserved values lie below observed[mid]
        if observed[mid] - mid <= rank {
            lo = mid + 1;
        } else {
            hi = mid;
        }
    }
    rank + lo
}

fn check_index(kind: &'static str, index: usize, size: usize) -> Result<()> {
    if index >= size {
        Err(Error::IndexOutOfRange { kind, index, size })
    } else {
        Ok(())
    }
}
