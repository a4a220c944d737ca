//! Second-order Gaussian knockoffs.
//!
//! Features are standardized to correlation scale, `h` is chosen by the
//! equicorrelated rule or a small SDP, and knockoffs are drawn from the
//! Gaussian conditional law
//!
//! ```text
//! X~ | X ~ N((S - D) S^-1 X, 2D - D S^-1 D),   D = diag(h)
//! ```
//!
//! which gives `cov([X, X~]) = [[S, S - D], [S - D, S]]`.

use nalgebra::{Cholesky, DMatrix, DVector, SymmetricEigen};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::SampleMatrix;

/// Smallest eigenvalue kept in the estimated correlation matrix.
pub const MIN_EIGENVALUE: f64 = 1e-8;
/// Tolerance for the PSD checks on `2S - D` and the joint covariance.
pub const PSD_TOL: f64 = 1e-8;
pub const SDP_DEFAULT_TOL: f64 = 1e-8;
pub const SDP_DEFAULT_MAX_ITER: usize = 10_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Construction {
    Equicorrelated,
    Sdp,
}

impl std::str::FromStr for Construction {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "equi" | "equicorrelated" => Ok(Self::Equicorrelated),
            "sdp" => Ok(Self::Sdp),
            other => Err(Error::InvalidParameter(format!(
                "unknown knockoff construction `{other}` (expected equi or sdp)"
            ))),
        }
    }
}

/// Correlation-scale covariance of a feature block.
#[derive(Debug, Clone)]
pub struct CovarianceEstimate {
    pub mu: Vec<f64>,
    pub sigma: DMatrix<f64>,
    pub scale: Vec<f64>,
    pub jitter_applied: f64,
}

impl CovarianceEstimate {
    /// Wraps a known correlation matrix (unit diagonal) with zero mean and unit scale.
    pub fn from_correlation(sigma: DMatrix<f64>) -> Result<Self> {
        let d = sigma.nrows();
        if sigma.ncols() != d {
            return Err(Error::DimensionMismatch {
                what: "correlation matrix columns",
                expected: d,
                got: sigma.ncols(),
            });
        }
        Ok(Self {
            mu: vec![0.0; d],
            sigma,
            scale: vec![1.0; d],
            jitter_applied: 0.0,
        })
    }

    pub fn dim(&self) -> usize {
        self.sigma.nrows()
    }

    /// `(x - mu) / scale`, column by column.
    pub fn standardize(&self, x: &SampleMatrix) -> Result<SampleMatrix> {
        if x.ncols() != self.dim() {
            return Err(Error::DimensionMismatch {
                what: "feature count",
                expected: self.dim(),
                got: x.ncols(),
            });
        }
        Ok(x.map_unchecked(|_, j, v| (v - self.mu[j]) / self.scale[j]))
    }

    pub fn lambda_min(&self) -> f64 {
        lambda_min(&self.sigma)
    }
}

pub(crate) fn lambda_min(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return f64::INFINITY;
    }
    SymmetricEigen::new(m.clone()).eigenvalues.min()
}

/// Standardizes columns and forms the sample correlation matrix.
///
/// If the smallest eigenvalue is below [`MIN_EIGENVALUE`] the matrix is
/// replaced by `(S + eps I) / (1 + eps)` with the smallest `eps` that lifts
/// it to the bound; this keeps a unit diagonal.
pub fn estimate_covariance(x: &SampleMatrix) -> Result<CovarianceEstimate> {
    let n = x.nrows();
    let d = x.ncols();
    if n < 2 {
        return Err(Error::TooFewObservations { needed: 2, got: n });
    }
    if d == 0 {
        return Err(Error::InvalidParameter("no columns to estimate".into()));
    }
    let nf = n as f64;
    let mut mu = Vec::with_capacity(d);
    let mut scale = Vec::with_capacity(d);
    let mut z = DMatrix::<f64>::zeros(n, d);
    for j in 0..d {
        let col = x.column(j);
        let m = col.iter().sum::<f64>() / nf;
        let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (nf - 1.0);
        let sd = var.sqrt();
        if !(sd > 0.0) || !sd.is_finite() {
            return Err(Error::DegenerateColumn(j));
        }
        for (i, v) in col.iter().enumerate() {
            z[(i, j)] = (v - m) / sd;
        }
        mu.push(m);
        scale.push(sd);
    }
    let mut sigma = (z.transpose() * &z) / (nf - 1.0);
    for i in 0..d {
        sigma[(i, i)] = 1.0;
        for j in 0..i {
            let v = 0.5 * (sigma[(i, j)] + sigma[(j, i)]);
            sigma[(i, j)] = v;
            sigma[(j, i)] = v;
        }
    }

    let mut jitter = 0.0;
    let mut lmin = lambda_min(&sigma);
    let mut target = MIN_EIGENVALUE;
    let base = sigma.clone();
    while lmin < MIN_EIGENVALUE {
        // (lmin + eps) / (1 + eps) = target
        let eps = (target - lmin.min(target)) / (1.0 - target) + jitter;
        jitter = eps;
        sigma = &base / (1.0 + eps);
        for i in 0..d {
            sigma[(i, i)] = 1.0;
        }
        lmin = lambda_min(&sigma);
        target *= 2.0;
    }

    Ok(CovarianceEstimate {
        mu,
        sigma,
        scale,
        jitter_applied: jitter,
    })
}

/// Equicorrelated choice `h_j = min(2 lambda_min(S), 1)`.
pub fn equicorrelated_h(cov: &CovarianceEstimate) -> Vec<f64> {
    let h = (2.0 * cov.lambda_min()).clamp(0.0, 1.0);
    vec![h; cov.dim()]
}

/// `sum_j |1 - h_j|`, the quantity the SDP minimizes.
pub fn h_objective(h: &[f64]) -> f64 {
    h.iter().map(|v| (1.0 - v).abs()).sum()
}

/// `lambda_min(2 S - diag(h))`.
pub fn feasibility_margin(sigma: &DMatrix<f64>, h: &[f64]) -> f64 {
    lambda_min(&two_sigma_minus(sigma, h))
}

fn two_sigma_minus(sigma: &DMatrix<f64>, h: &[f64]) -> DMatrix<f64> {
    let mut s = sigma * 2.0;
    for (i, v) in h.iter().enumerate() {
        s[(i, i)] -= v;
    }
    s
}

/// Options for [`sdp_h`].
#[derive(Debug, Clone, Copy)]
pub struct SdpOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self {
            tol: SDP_DEFAULT_TOL,
            max_iter: SDP_DEFAULT_MAX_ITER,
        }
    }
}

/// Solves `min sum_j |1 - h_j|` s.t. `h >= 0`, `diag(h) <= 2 S`.
///
/// Since any `h_j > 1` can be lowered to 1 without losing feasibility, this is
/// `max sum h` over `0 <= h <= 1`. A log-barrier Newton method finds an
/// interior near-optimum; the result is then pushed toward `1` along the
/// segment to the unconstrained optimum as far as feasibility allows. The
/// equicorrelated point is returned instead whenever it scores better.
pub fn sdp_h(cov: &CovarianceEstimate, opts: SdpOptions) -> Result<Vec<f64>> {
    if !(opts.tol > 0.0) {
        return Err(Error::InvalidParameter("SDP tolerance must be positive".into()));
    }
    let d = cov.dim();
    let sigma = &cov.sigma;
    let feasible = |h: &[f64]| {
        h.iter().all(|&v| v >= 0.0) && feasibility_margin(sigma, h) >= -0.1 * opts.tol
    };

    let lmin = cov.lambda_min();
    if !(lmin > 0.0) {
        return Err(Error::SolverFailure(format!(
            "correlation matrix is not positive definite (lambda_min = {lmin:e})"
        )));
    }
    let mut h = vec![lmin.min(0.5); d];
    let mut t = 1.0;
    let barrier_terms = 3.0 * d as f64;
    let mut iters = 0usize;

    'outer: loop {
        // Newton on  f(h) = -t sum h - logdet(2S - D) - sum log h - sum log(1 - h)
        loop {
            iters += 1;
            if iters > opts.max_iter {
                break 'outer;
            }
            let s = two_sigma_minus(sigma, &h);
            let chol = match Cholesky::new(s) {
                Some(c) => c,
                None => return Err(Error::SolverFailure("lost strict feasibility".into())),
            };
            let s_inv = chol.inverse();
            let mut grad = DVector::<f64>::zeros(d);
            let mut hess = DMatrix::<f64>::zeros(d, d);
            for i in 0..d {
                grad[i] = -t + s_inv[(i, i)] - 1.0 / h[i] + 1.0 / (1.0 - h[i]);
                for j in 0..d {
                    hess[(i, j)] = s_inv[(i, j)] * s_inv[(i, j)];
                }
                hess[(i, i)] += 1.0 / (h[i] * h[i]) + 1.0 / ((1.0 - h[i]) * (1.0 - h[i]));
            }
            let step = match Cholesky::new(hess) {
                Some(c) => -c.solve(&grad),
                None => return Err(Error::SolverFailure("singular Newton system".into())),
            };
            let decrement = -grad.dot(&step);
            if !decrement.is_finite() {
                return Err(Error::SolverFailure("non-finite Newton decrement".into()));
            }
            if decrement / 2.0 <= 1e-10 {
                break;
            }
            // backtracking: stay strictly inside, then Armijo
            let f0 = barrier_value(sigma, &h, t).unwrap_or(f64::INFINITY);
            let mut alpha = 1.0;
            loop {
                let cand: Vec<f64> = h.iter().zip(step.iter()).map(|(a, b)| a + alpha * b).collect();
                if let Some(f1) = barrier_value(sigma, &cand, t) {
                    if f1 <= f0 - 0.25 * alpha * decrement {
                        h = cand;
                        break;
                    }
                }
                alpha *= 0.5;
                if alpha < 1e-14 {
                    break;
                }
            }
            if alpha < 1e-14 {
                break;
            }
        }
        if barrier_terms / t < opts.tol {
            break;
        }
        t *= 8.0;
    }

    if iters > opts.max_iter && !feasible(&h) {
        return Err(Error::SolverFailure(format!(
            "no feasible iterate within {} iterations",
            opts.max_iter
        )));
    }

    // push toward the all-ones vector while feasible
    let toward = |theta: f64| -> Vec<f64> { h.iter().map(|v| v + theta * (1.0 - v)).collect() };
    let mut best = h.clone();
    if feasible(&toward(1.0)) {
        best = toward(1.0);
    } else {
        let (mut lo, mut hi) = (0.0, 1.0);
        for _ in 0..60 {
            let mid = 0.5 * (lo + hi);
            if feasible(&toward(mid)) {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let polished = toward(lo);
        if feasible(&polished) {
            best = polished;
        }
    }
    if !feasible(&best) {
        return Err(Error::SolverFailure("solution failed the feasibility check".into()));
    }

    let equi = equicorrelated_h(cov);
    if feasible(&equi) && h_objective(&equi) <= h_objective(&best) {
        return Ok(equi);
    }
    Ok(best)
}

fn barrier_value(sigma: &DMatrix<f64>, h: &[f64], t: f64) -> Option<f64> {
    if h.iter().any(|&v| !(v > 0.0 && v < 1.0)) {
        return None;
    }
    let chol = Cholesky::new(two_sigma_minus(sigma, h))?;
    let logdet: f64 = chol.l().diagonal().iter().map(|v| 2.0 * v.ln()).sum();
    let logs: f64 = h.iter().map(|v| v.ln() + (1.0 - v).ln()).sum();
    let total: f64 = h.iter().sum();
    Some(-t * total - logdet - logs)
}

/// Everything needed to draw knockoffs for one standardized feature block.
#[derive(Debug, Clone)]
pub struct KnockoffModel {
    pub cov: CovarianceEstimate,
    pub h: Vec<f64>,
    pub construction: Construction,
    /// `(S - D) S^-1`.
    pub cond_mean_factor: DMatrix<f64>,
    /// `R` with `R R^T = 2D - D S^-1 D` (after clipping negative eigenvalues).
    pub cond_cov_root: DMatrix<f64>,
    /// Largest magnitude of a negative eigenvalue clipped from the conditional covariance.
    pub clip_magnitude: f64,
    /// `lambda_min` of the joint covariance `G`.
    pub g_lambda_min: f64,
}

impl KnockoffModel {
    /// Joint covariance `G = [[S, S - D], [S - D, S]]`.
    pub fn joint_covariance(&self) -> DMatrix<f64> {
        joint_covariance(&self.cov.sigma, &self.h)
    }
}

pub fn joint_covariance(sigma: &DMatrix<f64>, h: &[f64]) -> DMatrix<f64> {
    let d = sigma.nrows();
    let mut g = DMatrix::<f64>::zeros(2 * d, 2 * d);
    for i in 0..d {
        for j in 0..d {
            let s = sigma[(i, j)];
            let off = if i == j { s - h[i] } else { s };
            g[(i, j)] = s;
            g[(i + d, j + d)] = s;
            g[(i, j + d)] = off;
            g[(i + d, j)] = off;
        }
    }
    g
}

/// Assembles the conditional sampling factors for a given `h`.
pub fn build_knockoff_model(
    cov: &CovarianceEstimate,
    h: &[f64],
    construction: Construction,
) -> Result<KnockoffModel> {
    let d = cov.dim();
    if h.len() != d {
        return Err(Error::DimensionMismatch {
            what: "h length",
            expected: d,
            got: h.len(),
        });
    }
    // eig(G) = eig(2S - D) ∪ eig(D)
    let h_min = h.iter().copied().fold(f64::INFINITY, f64::min);
    let g_lambda_min = feasibility_margin(&cov.sigma, h).min(h_min);
    if g_lambda_min < -PSD_TOL {
        return Err(Error::InfeasibleH {
            lambda_min: g_lambda_min,
        });
    }

    let sigma_inv = Cholesky::new(cov.sigma.clone())
        .ok_or_else(|| Error::InfeasibleH {
            lambda_min: cov.lambda_min(),
        })?
        .inverse();
    let diag_h = DMatrix::from_diagonal(&DVector::from_column_slice(h));
    let d_sinv = &diag_h * &sigma_inv;
    let cond_mean_factor = DMatrix::<f64>::identity(d, d) - &d_sinv;
    let mut v = &diag_h * 2.0 - &d_sinv * &diag_h;
    v = (&v + v.transpose()) * 0.5;

    let eig = SymmetricEigen::new(v);
    let mut clip = 0.0f64;
    let mut root = eig.eigenvectors.clone();
    for (j, &lam) in eig.eigenvalues.iter().enumerate() {
        if lam < 0.0 {
            clip = clip.max(-lam);
        }
        let s = lam.max(0.0).sqrt();
        for i in 0..d {
            root[(i, j)] *= s;
        }
    }

    Ok(KnockoffModel {
        cov: cov.clone(),
        h: h.to_vec(),
        construction,
        cond_mean_factor,
        cond_cov_root: root,
        clip_magnitude: clip,
        g_lambda_min,
    })
}

/// Draws `x~_i = F x_i + R z_i` for every row, `z_i` standard normal from a
/// ChaCha stream seeded with `seed`. `x` must already be standardized.
pub fn sample_knockoffs(x: &SampleMatrix, model: &KnockoffModel, seed: u64) -> Result<SampleMatrix> {
    let d = model.h.len();
    if x.ncols() != d {
        return Err(Error::DimensionMismatch {
            what: "feature count",
            expected: d,
            got: x.ncols(),
        });
    }
    let n = x.nrows();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let f = &model.cond_mean_factor;
    let r = &model.cond_cov_root;
    let mut out = vec![0.0; n * d];
    let mut row = vec![0.0; d];
    let mut z = vec![0.0; d];
    for i in 0..n {
        for j in 0..d {
            row[j] = x.get(i, j);
            z[j] = StandardNormal.sample(&mut rng);
        }
        for a in 0..d {
            let mut acc = 0.0;
            for b in 0..d {
                acc += f[(a, b)] * row[b];
            }
            for b in 0..d {
                acc += r[(a, b)] * z[b];
            }
            out[a * n + i] = acc;
        }
    }
    SampleMatrix::from_col_major(n, d, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corr2(rho: f64) -> CovarianceEstimate {
        CovarianceEstimate::from_correlation(DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]))
            .unwrap()
    }

    #[test]
    fn equicorrelated_hand_cases() {
        let id = CovarianceEstimate::from_correlation(DMatrix::identity(3, 3)).unwrap();
        assert_eq!(equicorrelated_h(&id), vec![1.0; 3]);

        let h = equicorrelated_h(&corr2(0.5));
        assert!(h.iter().all(|v| (v - 1.0).abs() < 1e-12));
        assert!(feasibility_margin(&corr2(0.5).sigma, &h).abs() < 1e-12);

        let h = equicorrelated_h(&corr2(0.9));
        assert!(h.iter().all(|v| (v - 0.2).abs() < 1e-12));
    }

    #[test]
    fn sdp_identity_and_two_by_two() {
        let id = CovarianceEstimate::from_correlation(DMatrix::identity(4, 4)).unwrap();
        let h = sdp_h(&id, SdpOptions::default()).unwrap();
        assert_eq!(h, vec![1.0; 4]);
        assert_eq!(h_objective(&h), 0.0);

        let h = sdp_h(&corr2(0.5), SdpOptions::default()).unwrap();
        assert!(h_objective(&h) < 1e-9);
    }

    #[test]
    fn sdp_rejects_bad_tolerance() {
        let id = CovarianceEstimate::from_correlation(DMatrix::identity(2, 2)).unwrap();
        let opts = SdpOptions { tol: 0.0, ..Default::default() };
        assert!(sdp_h(&id, opts).is_err());
    }

    #[test]
    fn sdp_dominates_equicorrelated_on_ar() {
        let d = 3;
        let sigma = DMatrix::from_fn(d, d, |i, j| 0.9f64.powi((i as i32 - j as i32).abs()));
        let cov = CovarianceEstimate::from_correlation(sigma).unwrap();
        let h = sdp_h(&cov, SdpOptions::default()).unwrap();
        assert!(h.iter().all(|&v| v >= 0.0));
        assert!(feasibility_margin(&cov.sigma, &h) >= -1e-8);
        assert!(h_objective(&h) <= h_objective(&equicorrelated_h(&cov)));
    }

    #[test]
    fn independence_and_copy_models() {
        let id = CovarianceEstimate::from_correlation(DMatrix::identity(3, 3)).unwrap();
        let m = build_knockoff_model(&id, &[1.0; 3], Construction::Equicorrelated).unwrap();
        assert!(m.cond_mean_factor.iter().all(|v| *v == 0.0));
        let rrt = &m.cond_cov_root * m.cond_cov_root.transpose();
        assert!((rrt - DMatrix::<f64>::identity(3, 3)).abs().max() < 1e-12);

        let cov = corr2(0.5);
        let m = build_knockoff_model(&cov, &[0.0, 0.0], Construction::Equicorrelated).unwrap();
        assert_eq!(m.cond_mean_factor, DMatrix::identity(2, 2));
        let x = SampleMatrix::from_columns(&[vec![0.3, -1.2, 2.0], vec![1.0, 0.5, -0.7]]).unwrap();
        let xk = sample_knockoffs(&x, &m, 3).unwrap();
        assert_eq!(xk, x);
    }

    #[test]
    fn infeasible_h_is_rejected() {
        let err = build_knockoff_model(&corr2(0.9), &[1.0, 1.0], Construction::Equicorrelated);
        assert!(matches!(err, Err(Error::InfeasibleH { .. })));
    }

    #[test]
    fn joint_covariance_is_psd_for_equicorrelated() {
        let cov = corr2(0.5);
        let h = equicorrelated_h(&cov);
        let m = build_knockoff_model(&cov, &h, Construction::Equicorrelated).unwrap();
        let lmin = SymmetricEigen::new(m.joint_covariance()).eigenvalues.min();
        assert!(lmin >= -1e-10);
    }

    #[test]
    fn degenerate_column_detected() {
        let x = SampleMatrix::from_columns(&[vec![1.0, 2.0, 3.0], vec![4.0, 4.0, 4.0]]).unwrap();
        assert!(matches!(estimate_covariance(&x), Err(Error::DegenerateColumn(1))));
    }

    #[test]
    fn duplicated_columns_get_jitter() {
        let a = vec![0.1, -0.4, 1.3, 0.7, -2.0, 0.2];
        let x = SampleMatrix::from_columns(&[a.clone(), a, vec![1.0, 0.0, 2.0, -1.0, 0.5, 0.3]])
            .unwrap();
        let cov = estimate_covariance(&x).unwrap();
        assert!(cov.jitter_applied > 0.0);
        assert!(cov.lambda_min() >= MIN_EIGENVALUE * 0.999);
        for i in 0..3 {
            assert_eq!(cov.sigma[(i, i)], 1.0);
        }
    }

    #[test]
    fn single_column_estimate() {
        let x = SampleMatrix::from_column(&[1.0, 2.0, 4.0]).unwrap();
        let cov = estimate_covariance(&x).unwrap();
        assert_eq!(cov.sigma, DMatrix::from_element(1, 1, 1.0));
        assert_eq!(cov.jitter_applied, 0.0);
    }

    #[test]
    fn sampling_is_deterministic() {
        let cov = corr2(0.3);
        let h = equicorrelated_h(&cov);
        let m = build_knockoff_model(&cov, &h, Construction::Equicorrelated).unwrap();
        let x = SampleMatrix::from_columns(&[vec![0.3, -1.2, 2.0], vec![1.0, 0.5, -0.7]]).unwrap();
        assert_eq!(sample_knockoffs(&x, &m, 9).unwrap(), sample_knockoffs(&x, &m, 9).unwrap());
        assert_ne!(sample_knockoffs(&x, &m, 9).unwrap(), sample_knockoffs(&x, &m, 10).unwrap());
    }
}
