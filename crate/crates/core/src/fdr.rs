//! Knockoff statistics and knockoff+ selection.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::kernel::response_cache_for;
use crate::matrix::SampleMatrix;
use crate::screening::{feature_scores, DEFAULT_MEMORY_BUDGET};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WEntry {
    pub feature: usize,
    pub w_hat: f64,
}

/// Knockoff statistics `W_j = PC(X_j, Y)^2 - PC(X~_j, Y)^2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WVector {
    pub entries: Vec<WEntry>,
    pub n_used: usize,
}

impl WVector {
    /// Builds a vector with features numbered `0..values.len()`.
    pub fn from_values(values: &[f64], n_used: usize) -> Self {
        Self {
            entries: values
                .iter()
                .enumerate()
                .map(|(feature, &w_hat)| WEntry { feature, w_hat })
                .collect(),
            n_used,
        }
    }

    pub fn values(&self) -> Vec<f64> {
        self.entries.iter().map(|e| e.w_hat).collect()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Renumbers features through `map` (local index -> global index).
    pub fn relabel(&self, map: &[usize]) -> WVector {
        WVector {
            entries: self
                .entries
                .iter()
                .map(|e| WEntry {
                    feature: map[e.feature],
                    w_hat: e.w_hat,
                })
                .collect(),
            n_used: self.n_used,
        }
    }
}

/// Threshold, selected set and FDP estimate for one `alpha`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    /// `None` stands for `+inf` (no feasible threshold, empty selection).
    pub t_alpha: Option<f64>,
    pub selected: Vec<usize>,
    pub fdp_hat: f64,
    pub alpha: f64,
    pub candidate_count: usize,
}

impl SelectionResult {
    pub fn t_alpha_or_inf(&self) -> f64 {
        self.t_alpha.unwrap_or(f64::INFINITY)
    }
}

/// Computes `W_j` for every column pair of `x` / `x_knock` against `y`,
/// sharing one response cache across all `2d` projection correlations.
pub fn w_statistics(
    x: &SampleMatrix,
    x_knock: &SampleMatrix,
    y: &SampleMatrix,
    threads: usize,
) -> Result<WVector> {
    w_statistics_with_budget(x, x_knock, y, threads, DEFAULT_MEMORY_BUDGET)
}

pub fn w_statistics_with_budget(
    x: &SampleMatrix,
    x_knock: &SampleMatrix,
    y: &SampleMatrix,
    threads: usize,
    memory_budget_bytes: u64,
) -> Result<WVector> {
    if x.ncols() != x_knock.ncols() {
        return Err(Error::DimensionMismatch {
            what: "knockoff column count",
            expected: x.ncols(),
            got: x_knock.ncols(),
        });
    }
    if x.nrows() != x_knock.nrows() || x.nrows() != y.nrows() {
        return Err(Error::DimensionMismatch {
            what: "observation count",
            expected: x.nrows(),
            got: if x.nrows() != x_knock.nrows() {
                x_knock.nrows()
            } else {
                y.nrows()
            },
        });
    }
    let d = x.ncols();
    let cache = response_cache_for(y, memory_budget_bytes);
    let both = x.hstack(x_knock)?;
    let scores = feature_scores(&both, y, cache.as_ref(), threads)?;
    let values: Vec<f64> = (0..d).map(|j| scores[j] - scores[j + d]).collect();
    Ok(WVector::from_values(&values, x.nrows()))
}

fn count_at_least(w: &[f64], t: f64) -> usize {
    w.iter().filter(|&&v| v >= t).count()
}

fn count_at_most_neg(w: &[f64], t: f64) -> usize {
    w.iter().filter(|&&v| v <= -t).count()
}

/// `#{W_j <= -t} / #{W_j >= t}` with `0/0 = 0` (denominator floored at 1).
pub fn estimate_fdp(w: &WVector, t: f64) -> f64 {
    let vals = w.values();
    let neg = count_at_most_neg(&vals, t);
    let pos = count_at_least(&vals, t);
    neg as f64 / pos.max(1) as f64
}

/// Knockoff+ threshold: the smallest nonzero `|W_j|` with
/// `(1 + #{W <= -t}) / #{W >= t} <= alpha`; `+inf` if none qualifies.
pub fn knockoff_plus_threshold(w: &WVector, alpha: f64) -> Result<SelectionResult> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::InvalidAlpha(alpha));
    }
    let vals = w.values();
    let mut candidates: Vec<f64> = vals.iter().map(|v| v.abs()).filter(|&v| v > 0.0).collect();
    candidates.sort_by(f64::total_cmp);
    candidates.dedup();

    // sweep candidates ascending with two pointers over sorted W
    let mut sorted = vals.clone();
    sorted.sort_by(f64::total_cmp);
    let total = sorted.len();
    let mut t_alpha = None;
    for &t in &candidates {
        let pos = total - sorted.partition_point(|&v| v < t);
        let neg = sorted.partition_point(|&v| v <= -t);
        if pos > 0 && (1 + neg) as f64 / pos as f64 <= alpha {
            t_alpha = Some(t);
            break;
        }
    }

    let (selected, fdp_hat) = match t_alpha {
        Some(t) => {
            let selected: BTreeSet<usize> = w
                .entries
                .iter()
                .filter(|e| e.w_hat >= t)
                .map(|e| e.feature)
                .collect();
            (selected.into_iter().collect(), estimate_fdp(w, t))
        }
        None => (Vec::new(), 0.0),
    };
    Ok(SelectionResult {
        t_alpha,
        selected,
        fdp_hat,
        alpha,
        candidate_count: candidates.len(),
    })
}

/// Fraction of selected features that are not truly active; 0 for an empty selection.
pub fn empirical_fdp(selected: &[usize], true_active: &[usize]) -> f64 {
    if selected.is_empty() {
        return 0.0;
    }
    let active: BTreeSet<usize> = true_active.iter().copied().collect();
    let false_hits = selected.iter().filter(|j| !active.contains(j)).count();
    false_hits as f64 / selected.len() as f64
}

/// One row of [`phase_transition_probabilities`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhaseRow {
    pub k: usize,
    pub a_k: f64,
    pub b_k: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseTransition {
    pub s: usize,
    pub rows: Vec<PhaseRow>,
    /// `sum_k b_k` over the computed range.
    pub partial_c: f64,
}

/// `ln C(k, i)`.
fn ln_binomial(k: usize, i: usize) -> f64 {
    let i = i.min(k - i);
    (0..i).map(|j| ((k - j) as f64).ln() - ((j + 1) as f64).ln()).sum()
}

/// `P(Binomial(k, 1/2) <= floor((k - 1) / (s + 1)))`.
pub fn phase_a_k(s: usize, k: usize) -> f64 {
    if k == 0 {
        return 0.0;
    }
    let max_neg = (k - 1) / (s + 1);
    if k <= 50 {
        // exact: all binomials up to C(50, 25) fit in u64 and in f64's mantissa
        let mut c: u64 = 1;
        let mut acc: u64 = 0;
        for i in 0..=max_neg {
            if i > 0 {
                c = c * (k - i + 1) as u64 / i as u64;
            }
            acc += c;
        }
        acc as f64 / 2f64.powi(k as i32)
    } else {
        let ln_half_k = k as f64 * std::f64::consts::LN_2;
        (0..=max_neg)
            .map(|i| (ln_binomial(k, i) - ln_half_k).exp())
            .sum()
    }
}

/// `a_k` and `b_k = a_k * (1 - a_{k-1} - ... - a_0)` for `k = 1..=k_max`,
/// with `a_0 = 0`.
///
/// The survival factor is floored at zero: the `a_k` are not probabilities
/// of disjoint events, so their running sum can exceed one (for `s = 10`
/// it does from `k = 12` on).
pub fn phase_transition_probabilities(s: usize, k_max: usize) -> Result<PhaseTransition> {
    if s == 0 || k_max == 0 {
        return Err(Error::InvalidParameter("s and k_max must be at least 1".into()));
    }
    let mut rows = Vec::with_capacity(k_max);
    let mut a_sum = 0.0_f64;
    let mut partial_c = 0.0;
    for k in 1..=k_max {
        let a_k = phase_a_k(s, k);
        let b_k = a_k * (1.0 - a_sum).max(0.0);
        a_sum += a_k;
        partial_c += b_k;
        rows.push(PhaseRow { k, a_k, b_k });
    }
    Ok(PhaseTransition { s, rows, partial_c })
}

/// Default alpha grid for [`estimate_active_count`]: 0.01 to 0.30 in steps of 0.005.
pub fn default_alpha_grid() -> Vec<f64> {
    (0..=58).map(|i| (10 + 5 * i) as f64 / 1000.0).collect()
}

/// Rule-of-thumb estimate of the number of active features: find the largest
/// grid `alpha*` whose selection is empty and return `floor(1 / alpha*)`.
pub fn estimate_active_count<F>(mut select: F, alpha_grid: &[f64]) -> Result<Option<usize>>
where
    F: FnMut(f64) -> Result<SelectionResult>,
{
    if alpha_grid.windows(2).any(|w| w[0] >= w[1])
        || alpha_grid.iter().any(|&a| !(a > 0.0 && a < 1.0))
    {
        return Err(Error::InvalidParameter(
            "alpha grid must be strictly increasing within (0, 1)".into(),
        ));
    }
    let mut best = None;
    for &alpha in alpha_grid {
        if select(alpha)?.selected.is_empty() {
            best = Some(alpha);
        }
    }
    Ok(best.map(|a| (1.0 / a + 1e-9).floor() as usize))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn wv(v: &[f64]) -> WVector {
        WVector::from_values(v, 10)
    }

    #[test]
    fn threshold_worked_example() {
        let r = knockoff_plus_threshold(&wv(&[3.0, 2.0, 1.0, -1.0]), 0.5).unwrap();
        assert_eq!(r.t_alpha, Some(2.0));
        assert_eq!(r.selected, vec![0, 1]);
        assert_eq!(r.fdp_hat, 0.0);
        assert_eq!(r.candidate_count, 3);
    }

    #[test]
    fn all_positive_selects_everything() {
        let w = wv(&[0.5, 0.2, 0.9, 0.1]);
        let r = knockoff_plus_threshold(&w, 0.25).unwrap();
        assert_eq!(r.t_alpha, Some(0.1));
        assert_eq!(r.selected, vec![0, 1, 2, 3]);
    }

    #[test]
    fn all_negative_selects_nothing() {
        let r = knockoff_plus_threshold(&wv(&[-0.5, -0.2]), 1.0).unwrap();
        assert_eq!(r.t_alpha, None);
        assert!(r.selected.is_empty());
    }

    #[test]
    fn zeros_are_never_candidates() {
        let r = knockoff_plus_threshold(&wv(&[0.0, 0.0, 0.3]), 1.0).unwrap();
        assert_eq!(r.candidate_count, 1);
        assert_eq!(r.selected, vec![2]);
    }

    #[test]
    fn invalid_alpha() {
        for a in [0.0, -0.1, 1.5, f64::NAN] {
            assert!(matches!(
                knockoff_plus_threshold(&wv(&[1.0]), a),
                Err(Error::InvalidAlpha(_))
            ));
        }
    }

    #[test]
    fn fdp_estimates() {
        let w = wv(&[3.0, 2.0, 1.0, -1.0]);
        assert!((estimate_fdp(&w, 1.0) - 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(estimate_fdp(&w, 10.0), 0.0);
        assert_eq!(estimate_fdp(&wv(&[1.0, -1.0]), 1.0), 1.0);
    }

    #[test]
    fn empirical_fdp_cases() {
        assert_eq!(empirical_fdp(&[1, 2], &[1, 2]), 0.0);
        assert_eq!(empirical_fdp(&[5, 6], &[1, 2]), 1.0);
        assert_eq!(empirical_fdp(&[], &[1, 2]), 0.0);
        let sel: Vec<usize> = (1..=12).collect();
        let act: Vec<usize> = (1..=10).collect();
        assert!((empirical_fdp(&sel, &act) - 2.0 / 12.0).abs() < 1e-15);
    }

    #[test]
    fn phase_first_terms() {
        let pt = phase_transition_probabilities(1, 3).unwrap();
        assert_eq!(pt.rows[0].a_k, 0.5);
        assert_eq!(pt.rows[0].b_k, 0.5);
        for s in [2, 5, 10, 40] {
            let pt = phase_transition_probabilities(s, 60).unwrap();
            assert_eq!(pt.rows[0].a_k, 0.5);
            assert!(pt.rows.iter().all(|r| r.b_k >= 0.0));
            assert!(pt.partial_c <= 1.0);
        }
        assert!(phase_transition_probabilities(0, 3).is_err());
    }

    #[test]
    fn log_space_matches_exact_near_the_switch() {
        // k = 50 exact vs the log-space branch evaluated by hand
        let s = 3;
        let k = 50;
        let exact = phase_a_k(s, k);
        let max_neg = (k - 1) / (s + 1);
        let log: f64 = (0..=max_neg)
            .map(|i| (ln_binomial(k, i) - k as f64 * std::f64::consts::LN_2).exp())
            .sum();
        assert!((exact - log).abs() < 1e-12 * exact.max(1e-300) + 1e-18);
    }

    #[test]
    fn active_count_rule() {
        let grid: Vec<f64> = (1..=30).map(|i| i as f64 / 100.0).collect();
        let provider = |alpha: f64| -> Result<SelectionResult> {
            Ok(SelectionResult {
                t_alpha: None,
                selected: if alpha <= 0.09 + 1e-12 { vec![] } else { vec![0] },
                fdp_hat: 0.0,
                alpha,
                candidate_count: 0,
            })
        };
        assert_eq!(estimate_active_count(provider, &grid).unwrap(), Some(11));

        let never = |alpha: f64| -> Result<SelectionResult> {
            Ok(SelectionResult {
                t_alpha: Some(0.1),
                selected: vec![1],
                fdp_hat: 0.0,
                alpha,
                candidate_count: 1,
            })
        };
        assert_eq!(estimate_active_count(never, &grid).unwrap(), None);

        let always = |alpha: f64| -> Result<SelectionResult> {
            Ok(SelectionResult {
                t_alpha: None,
                selected: vec![],
                fdp_hat: 0.0,
                alpha,
                candidate_count: 0,
            })
        };
        assert_eq!(estimate_active_count(always, &grid).unwrap(), Some(3));
        assert!(estimate_active_count(always, &[0.2, 0.1]).is_err());
    }

    #[test]
    fn default_grid_shape() {
        let g = default_alpha_grid();
        assert_eq!(g.first(), Some(&0.01));
        assert_eq!(g.last(), Some(&0.3));
        assert!(g.windows(2).all(|w| w[0] < w[1]));
    }
}
