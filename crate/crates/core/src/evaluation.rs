//! Ranking metrics over frozen model snapshots.

use std::fs::OpenOptions;
use std::io::{BufWriter, Write};
use std::path::Path;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::encoder::{EmbeddingModel, Mapping, Representations};
use crate::error::{Error, Result};
use crate::interactions::{ColdSplit, ItemFeatures, WarmSplit};
use crate::trainer::TrainState;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricResult {
    /// `hr` or `recall`.
    pub metric: String,
    pub k: usize,
    /// `total / num_cases`
    pub value: f64,
    pub num_cases: usize,
    /// Sum of per-case scores (hits, or per-item recall fractions).
    pub total: f64,
    /// Seed the candidates were sampled with.
    pub seed: u64,
    pub epoch: usize,
}

/// Whether `target` lands in the top `k` of `candidates` under `score`, ranking by
/// descending score and breaking ties by ascending index.
fn in_top_k<F>(target: usize, candidates: &[usize], k: usize, score: F) -> Result<bool>
where
    F: Fn(usize) -> Result<f64>,
{
    let target_score = score(target)?;
    if target_score.is_nan() {
        return Err(Error::InvalidArgument("NaN score".into()));
    }
    let mut ahead = 0;
    for &c in candidates {
        if c == target {
            continue;
        }
        let s = score(c)?;
        if s.is_nan() {
            return Err(Error::InvalidArgument("NaN score".into()));
        }
        if s > target_score || (s == target_score && c < target) {
            ahead += 1;
            if ahead >= k {
                return Ok(false);
            }
        }
    }
    Ok(true)
}

/// Top `k` of `candidates` under the same ordering as [`in_top_k`].
fn top_k<F>(candidates: &[usize], k: usize, score: F) -> Result<Vec<usize>>
where
    F: Fn(usize) -> Result<f64>,
{
    let mut scored = candidates
        .iter()
        .map(|&c| Ok((score(c)?, c)))
        .collect::<Result<Vec<(f64, usize)>>>()?;
    if scored.iter().any(|(s, _)| s.is_nan()) {
        return Err(Error::InvalidArgument("NaN score".into()));
    }
    scored.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)));
    Ok(scored.into_iter().take(k).map(|(_, c)| c).collect())
}

/// Hit ratio with an arbitrary `score(user, item)`.
pub fn hit_ratio_with<F>(split: &WarmSplit, k: usize, score: F) -> Result<MetricResult>
where
    F: Fn(usize, usize) -> Result<f64> + Sync,
{
    if k == 0 {
        return Err(Error::InvalidArgument("K must be positive".into()));
    }
    if let Some(short) = split.test_cases.iter().find(|c| c.candidates.len() < k) {
        return Err(Error::InvalidArgument(format!(
            "K = {k} exceeds the {} candidates of user {}",
            short.candidates.len(),
            short.user
        )));
    }
    let hits = split
        .test_cases
        .par_iter()
        .map(|case| in_top_k(case.held_out, &case.candidates, k, |i| score(case.user, i)))
        .collect::<Result<Vec<bool>>>()?;
    let total = hits.iter().filter(|&&h| h).count() as f64;
    let num_cases = hits.len();
    Ok(MetricResult {
        metric: "hr".into(),
        k,
        value: if num_cases == 0 { 0.0 } else { total / num_cases as f64 },
        num_cases,
        total,
        seed: split.seed,
        epoch: 0,
    })
}

/// Leave-one-out hit ratio: the share of test cases whose held-out item ranks within the
/// top `k` of its candidates.
pub fn hit_ratio_at_k<R: Representations + Sync + ?Sized>(
    reps: &R,
    split: &WarmSplit,
    k: usize,
    mapping: Mapping,
) -> Result<MetricResult> {
    hit_ratio_with(split, k, |u, i| mapping.score(reps.user(u), reps.item(i)))
}

/// Recall with an arbitrary `score(cold_item_position, user)`.
pub fn recall_with<F>(split: &ColdSplit, k: usize, score: F) -> Result<MetricResult>
where
    F: Fn(usize, usize) -> Result<f64> + Sync,
{
    if k == 0 {
        return Err(Error::InvalidArgument("K must be positive".into()));
    }
    let per_item = (0..split.cold_items.len())
        .into_par_iter()
        .map(|pos| {
            let truth = &split.ground_truth[pos];
            if truth.is_empty() {
                return Ok(None);
            }
            let top = top_k(&split.candidate_users[pos], k, |u| score(pos, u))?;
            let found = top.iter().filter(|u| truth.binary_search(u).is_ok()).count();
            Ok(Some(found as f64 / truth.len() as f64))
        })
        .collect::<Result<Vec<Option<f64>>>>()?;
    let skipped = per_item.iter().filter(|r| r.is_none()).count();
    if skipped > 0 {
        log::warn!("{skipped} cold items without ground truth excluded from recall");
    }
    let scores: Vec<f64> = per_item.into_iter().flatten().collect();
    let total: f64 = scores.iter().sum();
    Ok(MetricResult {
        metric: "recall".into(),
        k,
        value: if scores.is_empty() { 0.0 } else { total / scores.len() as f64 },
        num_cases: scores.len(),
        total,
        seed: split.seed,
        epoch: 0,
    })
}

/// Where a user representation comes from when scoring cold items.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum UserScoring {
    /// The user's row of the user table.
    #[default]
    Table,
    /// Mean of the item representations in the user's training history; users with no
    /// history fall back to their table row.
    Aggregate,
}

impl std::str::FromStr for UserScoring {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "table" => Ok(UserScoring::Table),
            "aggregate" => Ok(UserScoring::Aggregate),
            other => Err(Error::InvalidArgument(format!("unknown user scoring {other:?}"))),
        }
    }
}

/// Cold-start recall: each cold item is encoded from its features and ranks its candidate
/// users; recall is the share of true users found in the top `k`, averaged over items.
pub fn recall_at_k(
    model: &EmbeddingModel,
    split: &ColdSplit,
    features: &ItemFeatures,
    k: usize,
    mapping: Mapping,
    user_scoring: UserScoring,
) -> Result<MetricResult> {
    if features.num_items() != model.num_items() {
        return Err(Error::DimensionMismatch(format!(
            "{} feature rows for {} items",
            features.num_items(),
            model.num_items()
        )));
    }
    let item_reps = split
        .cold_items
        .iter()
        .map(|&i| model.encode_item_features(features.row(i)))
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let user_reps: Vec<Vec<f64>> = (0..model.num_users())
        .map(|u| {
            let history = split.train.user_items(u);
            match user_scoring {
                UserScoring::Aggregate if !history.is_empty() => model.aggregate_user_rep(history),
                _ => model.user_rep(u).map(<[f64]>::to_vec),
            }
        })
        .collect::<Result<_>>()?;
    recall_with(split, k, |pos, u| mapping.score(&user_reps[u], &item_reps[pos]))
}

/// Splits and settings to evaluate a snapshot against.
#[derive(Clone, Debug)]
pub struct EvalProtocol {
    pub ks: Vec<usize>,
    pub mapping: Mapping,
    pub warm: Option<WarmSplit>,
    pub cold: Option<(ColdSplit, ItemFeatures)>,
    pub user_scoring: UserScoring,
}

/// Metrics for one snapshot: HR@K for every K on the warm split and recall@K on the
/// cold split, whichever are present.
pub fn evaluate_model(
    model: &EmbeddingModel,
    epoch: usize,
    protocol: &EvalProtocol,
) -> Result<Vec<MetricResult>> {
    let mut out = Vec::new();
    if let Some(warm) = &protocol.warm {
        for &k in &protocol.ks {
            let mut r = hit_ratio_at_k(model, warm, k, protocol.mapping)?;
            r.epoch = epoch;
            out.push(r);
        }
    }
    if let Some((cold, features)) = &protocol.cold {
        for &k in &protocol.ks {
            let mut r = recall_at_k(model, cold, features, k, protocol.mapping, protocol.user_scoring)?;
            r.epoch = epoch;
            out.push(r);
        }
    }
    Ok(out)
}

/// Metrics of the final snapshot of a run.
pub fn evaluate_run(state: &TrainState, protocol: &EvalProtocol) -> Result<Vec<MetricResult>> {
    evaluate_model(&state.model, state.epoch, protocol)
}

#[derive(Serialize)]
struct MetricLine<'a> {
    run_id: &'a str,
    epoch: usize,
    metric: &'a str,
    k: usize,
    value: f64,
    num_cases: usize,
    seed: u64,
}

/// Appends one JSON object per result to `path`.
pub fn append_metrics_jsonl(path: &Path, run_id: &str, results: &[MetricResult]) -> Result<()> {
    let file = OpenOptions::new().create(true).append(true).open(path)?;
    let mut w = BufWriter::new(file);
    for r in results {
        let line = MetricLine {
            run_id,
            epoch: r.epoch,
            metric: &r.metric,
            k: r.k,
            value: r.value,
            num_cases: r.num_cases,
            seed: r.seed,
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}
