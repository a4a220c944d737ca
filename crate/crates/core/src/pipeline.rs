//! Two-step screening + knockoff selection on a random sample split.
//!
//! 1. Split the rows into `n1` screening rows and `n2 = n - n1` knockoff rows.
//! 2. Rank all features by `PC^2` on the screening rows and keep the top `d`.
//! 3. On the knockoff rows, build second-order knockoffs for the survivors,
//!    compute `W_j`, and apply the knockoff+ threshold.

use std::time::Instant;

use rand::seq::SliceRandom;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fdr::{knockoff_plus_threshold, w_statistics_with_budget, SelectionResult, WVector};
use crate::knockoff::{
    build_knockoff_model, equicorrelated_h, estimate_covariance, sample_knockoffs, sdp_h,
    Construction, SdpOptions,
};
use crate::matrix::SampleMatrix;
use crate::screening::{
    rank_features, select_top_d, ActiveSetEstimate, FeatureRanking, RankOptions,
    DEFAULT_MEMORY_BUDGET,
};

/// A random partition of `0..n` into a screening part and a knockoff part.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub n1: usize,
    pub n2: usize,
    pub perm: Vec<usize>,
    pub seed: u64,
}

impl SplitPlan {
    pub fn first(&self) -> &[usize] {
        &self.perm[..self.n1]
    }

    pub fn second(&self) -> &[usize] {
        &self.perm[self.n1..]
    }
}

/// Uniformly random split, deterministic in `(n, n1, seed)`.
pub fn split_sample(n: usize, n1: usize, seed: u64) -> Result<SplitPlan> {
    if n1 < 2 || n < 4 || n1 > n - 2 {
        return Err(Error::InvalidSplit { n, n1 });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut rng);
    Ok(SplitPlan {
        n1,
        n2: n - n1,
        perm,
        seed,
    })
}

/// `ceil(n / 4)`.
pub fn default_n1(n: usize) -> usize {
    n.div_ceil(4)
}

/// `min(floor(n2 / 2) - 1, 100)`.
pub fn default_d(n: usize, n1: usize) -> usize {
    ((n.saturating_sub(n1)) / 2).saturating_sub(1).min(100)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct PcKnockoffConfig {
    pub alpha: f64,
    pub n1: usize,
    pub d: usize,
    pub construction: Construction,
    pub seed: u64,
    pub threads: usize,
    pub memory_budget_bytes: u64,
}

impl PcKnockoffConfig {
    /// Defaults for a sample of size `n`: `n1 = ceil(n/4)`, `d = min(n2/2 - 1, 100)`.
    pub fn for_sample_size(n: usize, alpha: f64, seed: u64) -> Self {
        let n1 = default_n1(n);
        Self {
            alpha,
            n1,
            d: default_d(n, n1),
            construction: Construction::Equicorrelated,
            seed,
            threads: 1,
            memory_budget_bytes: DEFAULT_MEMORY_BUDGET,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageTimings {
    pub screening_secs: f64,
    pub knockoff_secs: f64,
    pub statistics_secs: f64,
}

/// Everything produced by the knockoff step.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct KnockoffStepReport {
    /// `W` labelled with the original feature indices.
    pub w: WVector,
    pub construction_used: Construction,
    pub fallback_flag: bool,
    pub jitter: f64,
    pub clip: f64,
    pub h: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PcKnockoffReport {
    pub split: SplitPlan,
    /// Scores on the screening rows.
    pub screening_ranking: FeatureRanking,
    /// The `d` survivors of the screening step.
    pub a_hat_1: ActiveSetEstimate,
    pub w: WVector,
    pub selection: SelectionResult,
    pub construction_used: Construction,
    pub fallback_flag: bool,
    pub jitter: f64,
    pub clip: f64,
    pub timings: StageTimings,
}

impl PcKnockoffReport {
    /// Re-applies the knockoff+ rule at another level without recomputing `W`.
    pub fn reselect(&self, alpha: f64) -> Result<SelectionResult> {
        knockoff_plus_threshold(&self.w, alpha)
    }
}

/// Knockoff step on already-split data: standardize the `survivors` columns of
/// `x2`, build knockoffs, and compute `W` against `y2`.
pub fn knockoff_step(
    x2: &SampleMatrix,
    y2: &SampleMatrix,
    survivors: &[usize],
    construction: Construction,
    knockoff_seed: u64,
    threads: usize,
    memory_budget_bytes: u64,
) -> Result<KnockoffStepReport> {
    let block = x2.select_columns(survivors)?;
    let cov = estimate_covariance(&block)?;
    let z = cov.standardize(&block)?;

    let (h, construction_used, fallback_flag) = match construction {
        Construction::Equicorrelated => (equicorrelated_h(&cov), Construction::Equicorrelated, false),
        Construction::Sdp => match sdp_h(&cov, SdpOptions::default()) {
            Ok(h) => (h, Construction::Sdp, false),
            Err(Error::SolverFailure(_)) => {
                (equicorrelated_h(&cov), Construction::Equicorrelated, true)
            }
            Err(e) => return Err(e),
        },
    };
    let model = build_knockoff_model(&cov, &h, construction_used)?;
    let knock = sample_knockoffs(&z, &model, knockoff_seed)?;
    let w = w_statistics_with_budget(&z, &knock, y2, threads, memory_budget_bytes)?;
    Ok(KnockoffStepReport {
        w: w.relabel(survivors),
        construction_used,
        fallback_flag,
        jitter: cov.jitter_applied,
        clip: model.clip_magnitude,
        h,
    })
}

/// The full two-step procedure. Deterministic given `cfg.seed`.
pub fn pc_knockoff(
    x: &SampleMatrix,
    y: &SampleMatrix,
    cfg: &PcKnockoffConfig,
) -> Result<PcKnockoffReport> {
    let n = x.nrows();
    if y.nrows() != n {
        return Err(Error::DimensionMismatch {
            what: "observation count of x and y",
            expected: n,
            got: y.nrows(),
        });
    }
    if !(cfg.alpha > 0.0 && cfg.alpha <= 1.0) {
        return Err(Error::InvalidAlpha(cfg.alpha));
    }
    if n < 4 || cfg.n1 < 2 || cfg.n1 > n - 2 {
        return Err(Error::InvalidSplit { n, n1: cfg.n1 });
    }
    let n2 = n - cfg.n1;
    if cfg.d == 0 || 2 * cfg.d >= n2 {
        return Err(Error::InvalidParameter(format!(
            "need 1 <= d and 2d < n2 (d = {}, n2 = {n2})",
            cfg.d
        )));
    }

    let mut master = ChaCha8Rng::seed_from_u64(cfg.seed);
    let split_seed = master.next_u64();
    let knockoff_seed = master.next_u64();
    let split = split_sample(n, cfg.n1, split_seed)?;

    let t0 = Instant::now();
    let x1 = x.select_rows(split.first())?;
    let y1 = y.select_rows(split.first())?;
    let ranking = rank_features(
        &x1,
        &y1,
        RankOptions {
            threads: cfg.threads,
            memory_budget_bytes: cfg.memory_budget_bytes,
        },
    )?;
    let a_hat_1 = select_top_d(&ranking, cfg.d);
    let screening_secs = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let x2 = x.select_rows(split.second())?;
    let y2 = y.select_rows(split.second())?;
    let step = knockoff_step(
        &x2,
        &y2,
        &a_hat_1.indices,
        cfg.construction,
        knockoff_seed,
        cfg.threads,
        cfg.memory_budget_bytes,
    )?;
    let knockoff_secs = t1.elapsed().as_secs_f64();

    let t2 = Instant::now();
    let selection = knockoff_plus_threshold(&step.w, cfg.alpha)?;
    let statistics_secs = t2.elapsed().as_secs_f64();

    Ok(PcKnockoffReport {
        split,
        screening_ranking: ranking,
        a_hat_1,
        w: step.w,
        selection,
        construction_used: step.construction_used,
        fallback_flag: step.fallback_flag,
        jitter: step.jitter,
        clip: step.clip,
        timings: StageTimings {
            screening_secs,
            knockoff_secs,
            statistics_secs,
        },
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_split_covers_everything() {
        let plan = split_sample(4, 2, 1).unwrap();
        let mut all: Vec<usize> = plan.perm.clone();
        all.sort_unstable();
        assert_eq!(all, vec![0, 1, 2, 3]);
        assert_eq!(plan.first().len(), 2);
        assert_eq!(plan.second().len(), 2);
        assert_eq!(plan, split_sample(4, 2, 1).unwrap());
    }

    #[test]
    fn invalid_splits() {
        assert!(split_sample(4, 1, 0).is_err());
        assert!(split_sample(4, 3, 0).is_err());
        assert!(split_sample(3, 2, 0).is_err());
    }

    #[test]
    fn defaults_follow_the_thousand_row_setting() {
        assert_eq!(default_n1(1000), 250);
        assert_eq!(default_d(1000, 250), 100);
        assert_eq!(default_d(100, 25), 36);
        let cfg = PcKnockoffConfig::for_sample_size(600, 0.2, 0);
        assert!(2 * cfg.d < 600 - cfg.n1);
    }
}
