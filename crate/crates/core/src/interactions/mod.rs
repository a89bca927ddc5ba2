//! Interaction data: loading, id maps, adjacency, splits, sampling and batching.

mod batch;
mod dataset;
mod sampling;
mod split;
mod synthetic;

pub use batch::{make_batches, Batch};
pub use dataset::{IdMap, InteractionDataset, InteractionFormat, ItemFeatures};
pub use sampling::{sample_unobserved, Anchor};
pub(crate) use sampling::sample_complement;
pub use split::{
    cold_start_split, leave_one_out_split, ColdSplit, WarmCase, WarmSplit,
    DEFAULT_COLD_NEGATIVES, DEFAULT_WARM_CANDIDATES,
};
pub(crate) use split::{read_json, write_json};
pub use synthetic::{
    count_components, gen_synthetic_components, SyntheticGraph, UnionFind,
    MAX_COMPONENT_ATTEMPTS,
};
