//! Feature ranking by squared projection correlation with the response.

use std::collections::BTreeSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::{projection_correlation_sq, response_cache_for, ResponseCache};
use crate::matrix::SampleMatrix;

/// Default memory budget for response slice caching (1 GiB).
pub const DEFAULT_MEMORY_BUDGET: u64 = 1 << 30;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankedFeature {
    pub feature: usize,
    pub omega_hat: f64,
}

/// Features sorted by `omega_hat` descending, ties broken by ascending index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureRanking {
    pub entries: Vec<RankedFeature>,
    pub n_used: usize,
}

impl FeatureRanking {
    /// Sorts raw per-feature scores (indexed by feature) into a ranking.
    pub fn from_scores(scores: &[f64], n_used: usize) -> Self {
        let mut entries: Vec<RankedFeature> = scores
            .iter()
            .enumerate()
            .map(|(feature, &omega_hat)| RankedFeature { feature, omega_hat })
            .collect();
        entries.sort_by(|a, b| {
            b.omega_hat
                .total_cmp(&a.omega_hat)
                .then(a.feature.cmp(&b.feature))
        });
        Self { entries, n_used }
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Score of every feature, indexed by feature id.
    pub fn scores_by_feature(&self) -> Vec<f64> {
        let mut out = vec![0.0; self.entries.len()];
        for e in &self.entries {
            out[e.feature] = e.omega_hat;
        }
        out
    }

    /// 1-based rank of every feature, indexed by feature id.
    pub fn ranks_by_feature(&self) -> Vec<usize> {
        let mut out = vec![0; self.entries.len()];
        for (pos, e) in self.entries.iter().enumerate() {
            out[e.feature] = pos + 1;
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum SelectionRule {
    Threshold { delta: f64 },
    TopD { d: usize },
}

/// Selected features, sorted by ascending index.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveSetEstimate {
    pub indices: Vec<usize>,
    pub rule: SelectionRule,
}

impl ActiveSetEstimate {
    pub fn contains(&self, feature: usize) -> bool {
        self.indices.binary_search(&feature).is_ok()
    }
}

/// Options for [`rank_features`].
#[derive(Debug, Clone, Copy)]
pub struct RankOptions {
    pub threads: usize,
    pub memory_budget_bytes: u64,
}

impl Default for RankOptions {
    fn default() -> Self {
        Self {
            threads: 1,
            memory_budget_bytes: DEFAULT_MEMORY_BUDGET,
        }
    }
}

/// Runs `f` on a pool with exactly `threads` workers (`0` means rayon's default).
pub(crate) fn with_threads<T: Send>(threads: usize, f: impl FnOnce() -> T + Send) -> T {
    if threads == 1 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(threads).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

/// Computes `PC(X_j, Y)^2` for every column `j` of `x`.
///
/// Parallel over features; every score is computed independently, so the
/// result does not depend on the thread count.
pub fn feature_scores(
    x: &SampleMatrix,
    y: &SampleMatrix,
    cache: Option<&ResponseCache>,
    threads: usize,
) -> Result<Vec<f64>> {
    if x.nrows() != y.nrows() {
        return Err(Error::DimensionMismatch {
            what: "observation count of x and y",
            expected: x.nrows(),
            got: y.nrows(),
        });
    }
    let score = |j: usize| projection_correlation_sq(&x.column_matrix(j), y, cache);
    if threads == 1 {
        (0..x.ncols()).map(score).collect()
    } else {
        with_threads(threads, || (0..x.ncols()).into_par_iter().map(score).collect())
    }
}

/// Ranks all features of `x` by squared sample projection correlation with `y`.
pub fn rank_features(
    x: &SampleMatrix,
    y: &SampleMatrix,
    opts: RankOptions,
) -> Result<FeatureRanking> {
    if x.nrows() != y.nrows() {
        return Err(Error::DimensionMismatch {
            what: "observation count of x and y",
            expected: x.nrows(),
            got: y.nrows(),
        });
    }
    if x.ncols() == 0 {
        return Err(Error::InvalidParameter("no features to rank".into()));
    }
    let cache = response_cache_for(y, opts.memory_budget_bytes);
    let scores = feature_scores(x, y, cache.as_ref(), opts.threads)?;
    Ok(FeatureRanking::from_scores(&scores, x.nrows()))
}

/// `{j : omega_hat_j >= delta}`.
pub fn select_by_threshold(ranking: &FeatureRanking, delta: f64) -> ActiveSetEstimate {
    let indices: BTreeSet<usize> = ranking
        .entries
        .iter()
        .filter(|e| e.omega_hat >= delta)
        .map(|e| e.feature)
        .collect();
    ActiveSetEstimate {
        indices: indices.into_iter().collect(),
        rule: SelectionRule::Threshold { delta },
    }
}

/// The first `min(d, p)` entries of the ranking.
pub fn select_top_d(ranking: &FeatureRanking, d: usize) -> ActiveSetEstimate {
    let mut indices: Vec<usize> = ranking.entries.iter().take(d).map(|e| e.feature).collect();
    indices.sort_unstable();
    ActiveSetEstimate {
        indices,
        rule: SelectionRule::TopD { d },
    }
}

/// Smallest prefix length of the ranking that contains every true active feature.
pub fn minimum_model_size(ranking: &FeatureRanking, true_active: &[usize]) -> Result<usize> {
    let p = ranking.len();
    if true_active.is_empty() {
        return Err(Error::InvalidParameter("true active set is empty".into()));
    }
    if let Some(&bad) = true_active.iter().find(|&&j| j >= p) {
        return Err(Error::UnknownFeature(bad));
    }
    let ranks = ranking.ranks_by_feature();
    Ok(true_active.iter().map(|&j| ranks[j]).max().unwrap_or(0))
}

/// One row of the sorted-score diagnostic.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GapRow {
    /// 1-based rank.
    pub rank: usize,
    pub feature: usize,
    pub omega_hat: f64,
    /// `omega_hat(rank) - omega_hat(rank + 1)`; `None` for the last rank.
    pub successive_gap: Option<f64>,
}

/// Sorted scores with consecutive differences, for eyeballing where the
/// signal features end. Makes no decision itself.
pub fn signal_gap_diagnostic(ranking: &FeatureRanking) -> Vec<GapRow> {
    let e = &ranking.entries;
    (0..e.len())
        .map(|i| GapRow {
            rank: i + 1,
            feature: e[i].feature,
            omega_hat: e[i].omega_hat,
            successive_gap: e.get(i + 1).map(|next| e[i].omega_hat - next.omega_hat),
        })
        .collect()
}

/// Rank of the largest successive gap (1-based), if any.
pub fn largest_gap_rank(rows: &[GapRow]) -> Option<usize> {
    rows.iter()
        .filter_map(|r| r.successive_gap.map(|g| (r.rank, g)))
        .fold(None, |best: Option<(usize, f64)>, (rank, g)| match best {
            Some((_, bg)) if bg >= g => best,
            _ => Some((rank, g)),
        })
        .map(|(rank, _)| rank)
}

/// Sample Pearson correlation; 0 when either side has zero variance.
pub fn pearson_correlation(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (dx, dy) = (x - ma, y - mb);
        sab += dx * dy;
        saa += dx * dx;
        sbb += dy * dy;
    }
    if saa > 0.0 && sbb > 0.0 {
        sab / (saa.sqrt() * sbb.sqrt())
    } else {
        0.0
    }
}

/// Ranks features by absolute Pearson correlation with a univariate response.
pub fn pearson_sis_rank(x: &SampleMatrix, y: &SampleMatrix) -> Result<FeatureRanking> {
    if y.ncols() != 1 {
        return Err(Error::MultivariateResponseUnsupported(y.ncols()));
    }
    if x.nrows() != y.nrows() {
        return Err(Error::DimensionMismatch {
            what: "observation count of x and y",
            expected: x.nrows(),
            got: y.nrows(),
        });
    }
    let yc = y.column(0);
    let scores: Vec<f64> = x
        .columns()
        .map(|col| pearson_correlation(col, yc).abs())
        .collect();
    Ok(FeatureRanking::from_scores(&scores, x.nrows()))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ranking(scores: &[f64]) -> FeatureRanking {
        FeatureRanking::from_scores(scores, 10)
    }

    #[test]
    fn threshold_extremes() {
        let r = ranking(&[0.8, 0.5, 0.1]);
        assert_eq!(select_by_threshold(&r, -1.0).indices, vec![0, 1, 2]);
        assert!(select_by_threshold(&r, 2.0).indices.is_empty());
        assert_eq!(select_by_threshold(&r, 0.5).indices, vec![0, 1]);
    }

    #[test]
    fn top_d_basics_and_ties() {
        let r = ranking(&[0.2, 0.9, 0.5, 0.5, 0.1]);
        assert_eq!(select_top_d(&r, 1).indices, vec![1]);
        assert_eq!(select_top_d(&r, 10).indices, vec![0, 1, 2, 3, 4]);
        // 2 and 3 tie at the boundary, lower index wins
        assert_eq!(select_top_d(&r, 2).indices, vec![1, 2]);
    }

    #[test]
    fn minimum_model_size_cases() {
        // ranking order 3, 1, 4, 0, 2
        let r = ranking(&[0.2, 0.8, 0.1, 0.9, 0.5]);
        let order: Vec<usize> = r.entries.iter().map(|e| e.feature).collect();
        assert_eq!(order, vec![3, 1, 4, 0, 2]);
        assert_eq!(minimum_model_size(&r, &[0, 1]).unwrap(), 4);
        assert_eq!(minimum_model_size(&r, &[3, 1]).unwrap(), 2);
        assert_eq!(minimum_model_size(&r, &[2]).unwrap(), 5);
        assert!(matches!(
            minimum_model_size(&r, &[7]),
            Err(Error::UnknownFeature(7))
        ));
    }

    #[test]
    fn gap_diagnostic() {
        let mut scores = vec![0.9; 5];
        scores.extend(vec![0.01; 95]);
        let rows = signal_gap_diagnostic(&ranking(&scores));
        assert_eq!(rows.len(), 100);
        assert_eq!(largest_gap_rank(&rows), Some(5));
        assert!(rows[99].successive_gap.is_none());

        let rows = signal_gap_diagnostic(&ranking(&[0.4, 0.3, 0.2, 0.1]));
        assert!(rows.iter().filter_map(|r| r.successive_gap).all(|g| g > 0.0));

        let rows = signal_gap_diagnostic(&ranking(&[0.3; 4]));
        assert!(rows.iter().filter_map(|r| r.successive_gap).all(|g| g == 0.0));
    }

    #[test]
    fn pearson_baseline() {
        let x = SampleMatrix::from_columns(&[
            vec![1.0, 2.0, 3.0, 4.0],
            vec![2.0, 1.0, 4.0, 3.0],
            vec![5.0, 5.0, 5.0, 5.0],
        ])
        .unwrap();
        let y = x.column_matrix(0);
        let r = pearson_sis_rank(&x, &y).unwrap();
        assert_eq!(r.entries[0].feature, 0);
        assert!((r.entries[0].omega_hat - 1.0).abs() < 1e-15);
        assert_eq!(r.scores_by_feature()[2], 0.0);

        let y2 = x.select_columns(&[0, 1]).unwrap();
        assert!(matches!(
            pearson_sis_rank(&x, &y2),
            Err(Error::MultivariateResponseUnsupported(2))
        ));
    }
}
