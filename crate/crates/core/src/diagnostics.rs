//! Collapse indicators over a full representation matrix.

use ndarray::{Array1, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Count at which the distinct-row estimate stops.
pub const UNIQUE_ROW_CAP: usize = 16;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Verdict {
    Healthy,
    Collapsed,
    PartiallyCollapsed,
    Shrinking,
}

impl Verdict {
    pub fn as_str(self) -> &'static str {
        match self {
            Verdict::Healthy => "healthy",
            Verdict::Collapsed => "collapsed",
            Verdict::PartiallyCollapsed => "partially_collapsed",
            Verdict::Shrinking => "shrinking",
        }
    }
}

impl std::fmt::Display for Verdict {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollapseThresholds {
    pub var_floor: f64,
    pub corr_ceiling: f64,
    pub shrink_floor: f64,
    /// Rows closer than this, relative to the larger norm, count as the same row.
    pub unique_tolerance: f64,
    /// Shrinking needs the centroid norm at most this multiple of the spread; a tight
    /// cluster around a point away from the origin is a collapse instead.
    pub shrink_center_ratio: f64,
}

impl Default for CollapseThresholds {
    fn default() -> Self {
        CollapseThresholds {
            var_floor: 1e-4,
            corr_ceiling: 0.95,
            shrink_floor: 1e-6,
            unique_tolerance: 1e-6,
            shrink_center_ratio: 1.0,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct CollapseReport {
    pub mean_dim_variance: f64,
    pub mean_abs_correlation: f64,
    pub d_p: f64,
    /// Distinct rows under the relative tolerance, saturating at [`UNIQUE_ROW_CAP`].
    pub unique_rep_estimate: usize,
    /// Norm of the mean row.
    pub centroid_norm: f64,
    pub verdict: Verdict,
}

fn column_variances(z: ArrayView2<'_, f64>) -> Array1<f64> {
    let n = z.nrows() as f64;
    let mean = z.mean_axis(Axis(0)).expect("rows checked by caller");
    let centered = &z - &mean;
    centered.map_axis(Axis(0), |c| c.iter().map(|v| v * v).sum::<f64>() / n)
}

/// Average over columns of the population variance.
pub fn mean_dim_variance(z: ArrayView2<'_, f64>) -> Result<f64> {
    if z.nrows() < 2 {
        return Err(Error::InvalidArgument("need at least 2 rows".into()));
    }
    if z.ncols() == 0 {
        return Err(Error::InvalidArgument("need at least 1 column".into()));
    }
    Ok(column_variances(z).mean().expect("non-empty"))
}

/// Mean of |Pearson correlation| over column pairs q < s. Columns with no spread
/// contribute 0.
pub fn mean_abs_correlation(z: ArrayView2<'_, f64>) -> Result<f64> {
    let (n, d) = z.dim();
    if n < 2 {
        return Err(Error::InvalidArgument("need at least 2 rows".into()));
    }
    if d < 2 {
        return Err(Error::InvalidArgument("need at least 2 columns".into()));
    }
    let mean = z.mean_axis(Axis(0)).expect("non-empty");
    let centered = &z - &mean;
    let gram = centered.t().dot(&centered);
    // a column counts as constant when its spread is at roundoff level of its magnitude
    let constant: Vec<bool> = (0..d)
        .map(|q| {
            let scale = z.column(q).iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let sd = (gram[[q, q]] / n as f64).sqrt();
            sd <= 1e-12 * scale || gram[[q, q]] == 0.0
        })
        .collect();
    let mut total = 0.0;
    for q in 0..d {
        for s in q + 1..d {
            if constant[q] || constant[s] {
                continue;
            }
            let r = gram[[q, s]] / (gram[[q, q]] * gram[[s, s]]).sqrt();
            total += r.abs().min(1.0);
        }
    }
    Ok(total / (d * (d - 1) / 2) as f64)
}

/// `(1/N²) Σ_l Σ_s ‖z_l − z_s‖²` by direct enumeration; quadratic in N.
pub fn pairwise_distance_bruteforce(z: ArrayView2<'_, f64>) -> f64 {
    let n = z.nrows();
    if n < 2 {
        return 0.0;
    }
    let mut total = 0.0;
    for l in 0..n {
        for s in 0..n {
            let (a, b) = (z.row(l), z.row(s));
            total += a.iter().zip(b.iter()).map(|(x, y)| (x - y) * (x - y)).sum::<f64>();
        }
    }
    total / (n * n) as f64
}

/// Distinct rows, where two rows are the same if `‖a − b‖ ≤ tol · max(‖a‖, ‖b‖)`.
/// Stops counting at `cap`.
pub fn unique_rows(z: ArrayView2<'_, f64>, tolerance: f64, cap: usize) -> usize {
    let mut reps: Vec<(ndarray::ArrayView1<'_, f64>, f64)> = Vec::new();
    for row in z.rows() {
        let norm = row.dot(&row).sqrt();
        let seen = reps.iter().any(|(r, rn)| {
            let dist = r.iter().zip(row.iter()).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
            dist <= tolerance * norm.max(*rn)
        });
        if !seen {
            reps.push((row, norm));
            if reps.len() >= cap {
                break;
            }
        }
    }
    reps.len()
}

/// Decision order: exact single/two-point structure first, then tiny uncorrelated
/// spread around the origin (shrinking), then low variance (collapsed), then high
/// correlation (partially collapsed). The `verdict` field of `report` is ignored.
pub fn classify_collapse(report: &CollapseReport, thresholds: &CollapseThresholds) -> Verdict {
    if report.unique_rep_estimate <= 1 {
        return Verdict::Collapsed;
    }
    if report.unique_rep_estimate == 2 {
        return Verdict::PartiallyCollapsed;
    }
    let correlated = report.mean_abs_correlation > thresholds.corr_ceiling;
    let spread = (report.d_p / 2.0).sqrt();
    let centered = report.centroid_norm <= thresholds.shrink_center_ratio * spread;
    if report.mean_dim_variance < thresholds.shrink_floor && !correlated && centered {
        return Verdict::Shrinking;
    }
    if report.mean_dim_variance < thresholds.var_floor {
        return Verdict::Collapsed;
    }
    if correlated {
        return Verdict::PartiallyCollapsed;
    }
    Verdict::Healthy
}

impl CollapseReport {
    pub fn compute(z: ArrayView2<'_, f64>, thresholds: &CollapseThresholds) -> Result<Self> {
        let mean_dim_variance = mean_dim_variance(z)?;
        let mean_abs_correlation = if z.ncols() >= 2 {
            mean_abs_correlation(z)?
        } else {
            0.0
        };
        let centroid = z.mean_axis(Axis(0)).expect("rows checked");
        let mut report = CollapseReport {
            mean_dim_variance,
            mean_abs_correlation,
            d_p: 2.0 * z.ncols() as f64 * mean_dim_variance,
            unique_rep_estimate: unique_rows(z, thresholds.unique_tolerance, UNIQUE_ROW_CAP),
            centroid_norm: centroid.dot(&centroid).sqrt(),
            verdict: Verdict::Healthy,
        };
        report.verdict = classify_collapse(&report, thresholds);
        Ok(report)
    }
}
