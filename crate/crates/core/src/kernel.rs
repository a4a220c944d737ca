//! Squared sample projection covariance and correlation.
//!
//! For observations `x_1..x_n` the angle `a_klr` is the angle at `x_r`
//! between `x_k - x_r` and `x_l - x_r`, with `a_klr = 0` whenever `k = r`,
//! `l = r`, or either difference vanishes. Each slice `a_..r` is double
//! centered into `A_..r`, and
//!
//! ```text
//! Pcov(X, Y)^2 = n^-3 * sum_{k,l,r} A_klr * B_klr
//! PC(X, Y)^2   = Pcov(X, Y)^2 / sqrt(Pcov(X, X)^2 * Pcov(Y, Y)^2)
//! ```
//!
//! The fast path streams over `r` and never holds more than two `n x n`
//! slices. When a variable is univariate its centered slice is constant on
//! the blocks given by the sign of `x_k - x_r`, which turns the slice sums
//! into small contingency sums: exact integers when both sides are
//! univariate, nine block sums of `B` when only one is. [`naive_pcov_stats`] is an independent literal implementation used
//! as a test oracle.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::SampleMatrix;
use crate::sum::{block_dot, Neumaier};

/// Largest `n` accepted by the naive oracle.
pub const NAIVE_MAX_N: usize = 64;

/// Angles `a_klr` for one fixed `r`, stored row-major `n x n`.
#[derive(Debug, Clone, PartialEq)]
pub struct AngleSlice {
    pub r: usize,
    pub n: usize,
    pub values: Vec<f64>,
}

impl AngleSlice {
    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.values[k * self.n + l]
    }
}

/// Double-centered angle slice `A_klr`, row-major `n x n`.
#[derive(Debug, Clone, PartialEq)]
pub struct CenteredSlice {
    pub r: usize,
    pub n: usize,
    pub values: Vec<f64>,
}

impl CenteredSlice {
    pub fn get(&self, k: usize, l: usize) -> f64 {
        self.values[k * self.n + l]
    }
}

/// Accumulated sums from which squared projection covariance and
/// correlation are formed. All three are already divided by `n^3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PcStats {
    pub s_xy: f64,
    pub s_xx: f64,
    pub s_yy: f64,
    pub n: usize,
}

impl PcStats {
    /// `s_xy / sqrt(s_xx * s_yy)`, with `0/0 = 0`. Not clamped at zero.
    pub fn correlation_sq(&self) -> f64 {
        let denom = self.s_xx * self.s_yy;
        if denom > 0.0 {
            self.s_xy / denom.sqrt()
        } else {
            0.0
        }
    }

    fn swapped(self) -> Self {
        Self {
            s_xx: self.s_yy,
            s_yy: self.s_xx,
            ..self
        }
    }
}

/// Centered slices of a response matrix, shared across many feature
/// evaluations. Immutable once built.
#[derive(Debug, Clone)]
pub struct ResponseCache {
    n: usize,
    slices: Option<Vec<CenteredSlice>>,
    slice_sq: Vec<f64>,
    memory_budget_bytes: u64,
}

impl ResponseCache {
    pub fn is_materialized(&self) -> bool {
        self.slices.is_some()
    }

    pub fn slices(&self) -> Option<&[CenteredSlice]> {
        self.slices.as_deref()
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn memory_budget_bytes(&self) -> u64 {
        self.memory_budget_bytes
    }

    /// Bytes needed to materialize all `n` slices of an `n`-row response.
    pub fn required_bytes(n: usize) -> u64 {
        8u64.saturating_mul((n as u64).saturating_pow(3))
    }
}

/// Reusable per-call buffers so the hot loop never allocates.
struct Workspace {
    n: usize,
    diffs: Vec<f64>,
    norms: Vec<f64>,
    signs: Vec<f64>,
    row_means: Vec<f64>,
}

impl Workspace {
    fn new(n: usize, dim: usize) -> Self {
        Self {
            n,
            diffs: vec![0.0; n * dim],
            norms: vec![0.0; n],
            signs: vec![0.0; n],
            row_means: vec![0.0; n],
        }
    }

    /// Writes the angles of slice `r` into `out` (row-major `n x n`).
    fn fill_angles(&mut self, points: &SampleMatrix, r: usize, out: &mut [f64]) {
        let n = self.n;
        let dim = points.ncols();
        if dim == 1 {
            // In one dimension the cosine is exactly +1 or -1, so the angle
            // is pi iff the two differences have opposite signs.
            let col = points.column(0);
            let xr = col[r];
            for (s, &v) in self.signs.iter_mut().zip(col) {
                let d = v - xr;
                *s = if d > 0.0 {
                    1.0
                } else if d < 0.0 {
                    -1.0
                } else {
                    0.0
                };
            }
            for k in 0..n {
                let sk = self.signs[k];
                let row = &mut out[k * n..(k + 1) * n];
                for (o, &sl) in row.iter_mut().zip(&self.signs) {
                    *o = if sk * sl < 0.0 { PI } else { 0.0 };
                }
            }
            return;
        }

        // diffs is row-major n x dim, each nonzero row scaled to unit length
        for k in 0..n {
            let mut sq = 0.0;
            for j in 0..dim {
                let d = points.get(k, j) - points.get(r, j);
                self.diffs[k * dim + j] = d;
                sq += d * d;
            }
            let norm = sq.sqrt();
            self.norms[k] = norm;
            if norm > 0.0 {
                for d in &mut self.diffs[k * dim..(k + 1) * dim] {
                    *d /= norm;
                }
            }
        }
        for k in 0..n {
            out[k * n + k] = 0.0;
            let nk = self.norms[k];
            for l in (k + 1)..n {
                let nl = self.norms[l];
                let angle = if nk == 0.0 || nl == 0.0 {
                    0.0
                } else {
                    let dk = &self.diffs[k * dim..(k + 1) * dim];
                    let dl = &self.diffs[l * dim..(l + 1) * dim];
                    // half-angle form; acos of the cosine loses ~1e-8 near 0 and pi
                    let mut minus = 0.0;
                    let mut plus = 0.0;
                    for (a, b) in dk.iter().zip(dl) {
                        minus += (a - b) * (a - b);
                        plus += (a + b) * (a + b);
                    }
                    2.0 * minus.sqrt().atan2(plus.sqrt())
                };
                out[k * n + l] = angle;
                out[l * n + k] = angle;
            }
        }
    }

    /// Double-centers a symmetric slice in place.
    fn center_in_place(&mut self, values: &mut [f64]) {
        let n = self.n;
        let inv_n = 1.0 / n as f64;
        let mut grand = Neumaier::default();
        for k in 0..n {
            let row_sum: f64 = values[k * n..(k + 1) * n].iter().sum();
            let mean = row_sum * inv_n;
            self.row_means[k] = mean;
            grand.add(mean);
        }
        let grand_mean = grand.total() * inv_n;
        for k in 0..n {
            let shift = grand_mean - self.row_means[k];
            let row = &mut values[k * n..(k + 1) * n];
            for (v, &ml) in row.iter_mut().zip(&self.row_means) {
                *v = *v + shift - ml;
            }
        }
    }
}

fn check_not_degenerate_n(n: usize) -> Result<()> {
    if n < 2 {
        return Err(Error::TooFewObservations { needed: 2, got: n });
    }
    Ok(())
}

/// Angles `a_klr` for a fixed `r`.
pub fn angle_slice(points: &SampleMatrix, r: usize) -> Result<AngleSlice> {
    let n = points.nrows();
    if r >= n {
        return Err(Error::InvalidParameter(format!(
            "slice index {r} out of range for {n} observations"
        )));
    }
    let mut ws = Workspace::new(n, points.ncols());
    let mut values = vec![0.0; n * n];
    ws.fill_angles(points, r, &mut values);
    Ok(AngleSlice { r, n, values })
}

/// `A_kl = a_kl - mean_k. - mean_.l + mean_..` for one slice.
///
/// Assumes the slice is symmetric, which every slice produced by
/// [`angle_slice`] is.
pub fn center_slice(slice: &AngleSlice) -> CenteredSlice {
    let mut ws = Workspace::new(slice.n, 1);
    let mut values = slice.values.clone();
    ws.center_in_place(&mut values);
    CenteredSlice {
        r: slice.r,
        n: slice.n,
        values,
    }
}

/// Precomputes centered response slices if `8 n^3` bytes fit in the budget.
///
/// When the budget is too small the cache stays empty and [`pcov_stats`]
/// recomputes response slices on every call.
pub fn build_response_cache(y: &SampleMatrix, memory_budget_bytes: u64) -> ResponseCache {
    let n = y.nrows();
    if n < 2 || ResponseCache::required_bytes(n) > memory_budget_bytes {
        return ResponseCache {
            n,
            slices: None,
            slice_sq: Vec::new(),
            memory_budget_bytes,
        };
    }
    let mut ws = Workspace::new(n, y.ncols());
    let mut slices = Vec::with_capacity(n);
    let mut slice_sq = Vec::with_capacity(n);
    for r in 0..n {
        let mut values = vec![0.0; n * n];
        ws.fill_angles(y, r, &mut values);
        ws.center_in_place(&mut values);
        slice_sq.push(block_dot(&values, &values));
        slices.push(CenteredSlice { r, n, values });
    }
    ResponseCache {
        n,
        slices: Some(slices),
        slice_sq,
        memory_budget_bytes,
    }
}

/// A cache for `y` when it would be used: univariate responses take the
/// class-block path, which never reads response slices.
pub fn response_cache_for(y: &SampleMatrix, memory_budget_bytes: u64) -> Option<ResponseCache> {
    (y.ncols() > 1).then(|| build_response_cache(y, memory_budget_bytes))
}

/// Squared sample projection covariance sums, streamed over `r`.
///
/// Accumulation order is fixed (ascending `r`, row-major within a slice), so
/// repeated calls on the same machine are bitwise reproducible, with or
/// without a cache.
pub fn pcov_stats(
    x: &SampleMatrix,
    y: &SampleMatrix,
    cache: Option<&ResponseCache>,
) -> Result<PcStats> {
    let n = x.nrows();
    if y.nrows() != n {
        return Err(Error::DimensionMismatch {
            what: "observation count of x and y",
            expected: n,
            got: y.nrows(),
        });
    }
    check_not_degenerate_n(n)?;
    let cached = match cache {
        Some(c) if c.is_materialized() => {
            if c.n != n {
                return Err(Error::DimensionMismatch {
                    what: "response cache size",
                    expected: n,
                    got: c.n,
                });
            }
            Some(c)
        }
        _ => None,
    };

    match (x.ncols(), y.ncols()) {
        (1, 1) => Ok(univariate_stats(x.column(0), y.column(0))),
        (1, _) => Ok(mixed_stats(x.column(0), y, cached)),
        (_, 1) => Ok(mixed_stats(y.column(0), x, None).swapped()),
        _ => Ok(general_stats(x, y, cached)),
    }
}

/// Sign class of every observation relative to `col[r]`: 0 below, 1 tied
/// (including `r` itself), 2 above. Returns the class counts.
fn sign_classes(col: &[f64], r: usize, out: &mut [u8]) -> [i64; 3] {
    let xr = col[r];
    let mut counts = [0i64; 3];
    for (c, &v) in out.iter_mut().zip(col) {
        *c = if v < xr {
            0
        } else if v > xr {
            2
        } else {
            1
        };
        counts[*c as usize] += 1;
    }
    counts
}

/// `n^2 A_klr / pi` for a univariate slice. It only depends on the classes
/// of `k` and `l`, and is an integer.
fn class_blocks(counts: [i64; 3], n: i64) -> [[i128; 3]; 3] {
    let (below, above) = (counts[0], counts[2]);
    // row sums of a / pi by class
    let row = [above, 0, below];
    let grand = 2 * below * above;
    let mut out = [[0i128; 3]; 3];
    for c in 0..3 {
        for d in 0..3 {
            let a = i64::from((c == 0 && d == 2) || (c == 2 && d == 0));
            out[c][d] = i128::from(n * n * a - n * (row[c] + row[d]) + grand);
        }
    }
    out
}

/// Both variables univariate: every slice is constant on the 3 x 3 class
/// blocks, so the slice sums reduce to a 9 x 9 contingency computation in
/// exact integer arithmetic. O(n^2) per call.
fn univariate_stats(x: &[f64], y: &[f64]) -> PcStats {
    let n = x.len();
    let ni = n as i64;
    let mut cx = vec![0u8; n];
    let mut cy = vec![0u8; n];
    let (mut xy, mut xx, mut yy) = (0i128, 0i128, 0i128);
    for r in 0..n {
        let bx = class_blocks(sign_classes(x, r, &mut cx), ni);
        let by = class_blocks(sign_classes(y, r, &mut cy), ni);
        let mut joint = [[0i128; 3]; 3];
        for (a, b) in cx.iter().zip(&cy) {
            joint[*a as usize][*b as usize] += 1;
        }
        let mut mx = [0i128; 3];
        let mut my = [0i128; 3];
        for c in 0..3 {
            for d in 0..3 {
                mx[c] += joint[c][d];
                my[d] += joint[c][d];
            }
        }
        for c in 0..3 {
            for d in 0..3 {
                xx += mx[c] * mx[d] * bx[c][d] * bx[c][d];
                yy += my[c] * my[d] * by[c][d] * by[c][d];
            }
        }
        for (c1, row1) in joint.iter().enumerate() {
            for (d1, &n1) in row1.iter().enumerate() {
                if n1 == 0 {
                    continue;
                }
                for (c2, row2) in joint.iter().enumerate() {
                    for (d2, &n2) in row2.iter().enumerate() {
                        xy += n1 * n2 * bx[c1][c2] * by[d1][d2];
                    }
                }
            }
        }
    }
    let scale = PI * PI / (n as f64).powi(4) / (n as f64).powi(3);
    PcStats {
        s_xy: xy as f64 * scale,
        s_xx: xx as f64 * scale,
        s_yy: yy as f64 * scale,
        n,
    }
}

/// `x` univariate, `y` multivariate: `sum_kl A_kl B_kl` is a weighted sum of
/// the nine class-block sums of `B`.
fn mixed_stats(x: &[f64], y: &SampleMatrix, cached: Option<&ResponseCache>) -> PcStats {
    let n = x.len();
    let ni = n as i64;
    let mut cx = vec![0u8; n];
    let mut ws_y = Workspace::new(n, y.ncols());
    let mut buf_y = if cached.is_some() {
        Vec::new()
    } else {
        vec![0.0; n * n]
    };
    let mut xy = Neumaier::default();
    let mut xx = 0i128;
    let mut yy = Neumaier::default();
    for r in 0..n {
        let counts = sign_classes(x, r, &mut cx);
        let bx = class_blocks(counts, ni);
        let (b, b_sq) = match cached {
            Some(c) => {
                let slices = c.slices.as_ref().expect("materialized cache");
                (slices[r].values.as_slice(), c.slice_sq[r])
            }
            None => {
                ws_y.fill_angles(y, r, &mut buf_y);
                ws_y.center_in_place(&mut buf_y);
                (buf_y.as_slice(), block_dot(&buf_y, &buf_y))
            }
        };
        let mut blocks = [[0.0f64; 3]; 3];
        for k in 0..n {
            let mut row = [0.0f64; 3];
            for (v, &c) in b[k * n..(k + 1) * n].iter().zip(&cx) {
                row[c as usize] += v;
            }
            let ck = cx[k] as usize;
            for d in 0..3 {
                blocks[ck][d] += row[d];
            }
        }
        let mut slice = 0.0;
        for c in 0..3 {
            for d in 0..3 {
                slice += bx[c][d] as f64 * blocks[c][d];
                xx += i128::from(counts[c] * counts[d]) * bx[c][d] * bx[c][d];
            }
        }
        xy.add(slice);
        yy.add(b_sq);
    }
    let nf = n as f64;
    let n3 = nf.powi(3);
    PcStats {
        s_xy: xy.total() * (PI / (nf * nf)) / n3,
        s_xx: xx as f64 * (PI * PI / nf.powi(4)) / n3,
        s_yy: yy.total() / n3,
        n,
    }
}

fn general_stats(x: &SampleMatrix, y: &SampleMatrix, cached: Option<&ResponseCache>) -> PcStats {
    let n = x.nrows();
    let mut ws_x = Workspace::new(n, x.ncols());
    let mut buf_x = vec![0.0; n * n];
    let mut ws_y = Workspace::new(n, y.ncols());
    let mut buf_y = if cached.is_some() {
        Vec::new()
    } else {
        vec![0.0; n * n]
    };

    let mut xy = Neumaier::default();
    let mut xx = Neumaier::default();
    let mut yy = Neumaier::default();
    for r in 0..n {
        ws_x.fill_angles(x, r, &mut buf_x);
        ws_x.center_in_place(&mut buf_x);
        let (b, b_sq) = match cached {
            Some(c) => {
                let slices = c.slices.as_ref().expect("materialized cache");
                (slices[r].values.as_slice(), c.slice_sq[r])
            }
            None => {
                ws_y.fill_angles(y, r, &mut buf_y);
                ws_y.center_in_place(&mut buf_y);
                (buf_y.as_slice(), block_dot(&buf_y, &buf_y))
            }
        };
        xy.add(block_dot(&buf_x, b));
        xx.add(block_dot(&buf_x, &buf_x));
        yy.add(b_sq);
    }
    let n3 = (n as f64).powi(3);
    PcStats {
        s_xy: xy.total() / n3,
        s_xx: xx.total() / n3,
        s_yy: yy.total() / n3,
        n,
    }
}

/// Squared sample projection correlation. Returns 0 when either variance
/// term is 0. The value lies in `[-1, 1]` and may be negative.
pub fn projection_correlation_sq(
    x: &SampleMatrix,
    y: &SampleMatrix,
    cache: Option<&ResponseCache>,
) -> Result<f64> {
    Ok(pcov_stats(x, y, cache)?.correlation_sq())
}

/// Literal triple-loop evaluation: materializes every `a_klr`, every mean and
/// every `A_klr` before summing. Shares no code with [`pcov_stats`].
pub fn naive_pcov_stats(x: &SampleMatrix, y: &SampleMatrix) -> Result<PcStats> {
    let n = x.nrows();
    if y.nrows() != n {
        return Err(Error::DimensionMismatch {
            what: "observation count of x and y",
            expected: n,
            got: y.nrows(),
        });
    }
    if n > NAIVE_MAX_N {
        return Err(Error::InputTooLarge {
            n,
            limit: NAIVE_MAX_N,
        });
    }
    check_not_degenerate_n(n)?;

    fn point(m: &SampleMatrix, i: usize) -> Vec<f64> {
        (0..m.ncols()).map(|j| m.get(i, j)).collect()
    }

    fn angles(m: &SampleMatrix) -> Vec<Vec<Vec<f64>>> {
        let n = m.nrows();
        let pts: Vec<Vec<f64>> = (0..n).map(|i| point(m, i)).collect();
        let mut a = vec![vec![vec![0.0; n]; n]; n];
        for k in 0..n {
            for l in 0..n {
                for r in 0..n {
                    if k == r || l == r {
                        continue;
                    }
                    // angle between u and v via 2 atan2(|u^ - v^|, |u^ + v^|),
                    // accurate near 0 and pi where arccos is ill-conditioned
                    let u: Vec<f64> = (0..pts[k].len()).map(|j| pts[k][j] - pts[r][j]).collect();
                    let v: Vec<f64> = (0..pts[l].len()).map(|j| pts[l][j] - pts[r][j]).collect();
                    let nu = u.iter().map(|t| t * t).sum::<f64>().sqrt();
                    let nv = v.iter().map(|t| t * t).sum::<f64>().sqrt();
                    a[k][l][r] = if nu == 0.0 || nv == 0.0 {
                        0.0
                    } else {
                        let mut diff = 0.0;
                        let mut sum = 0.0;
                        for j in 0..u.len() {
                            let (p, q) = (u[j] / nu, v[j] / nv);
                            diff += (p - q) * (p - q);
                            sum += (p + q) * (p + q);
                        }
                        2.0 * diff.sqrt().atan2(sum.sqrt())
                    };
                }
            }
        }
        a
    }

    fn centered(a: &[Vec<Vec<f64>>]) -> Vec<Vec<Vec<f64>>> {
        let n = a.len();
        let nf = n as f64;
        let mut out = vec![vec![vec![0.0; n]; n]; n];
        for r in 0..n {
            let mut row_mean = vec![0.0; n];
            let mut col_mean = vec![0.0; n];
            let mut all = 0.0;
            for k in 0..n {
                for l in 0..n {
                    row_mean[k] += a[k][l][r] / nf;
                    col_mean[l] += a[k][l][r] / nf;
                    all += a[k][l][r] / (nf * nf);
                }
            }
            for k in 0..n {
                for l in 0..n {
                    out[k][l][r] = a[k][l][r] - row_mean[k] - col_mean[l] + all;
                }
            }
        }
        out
    }

    let big_a = centered(&angles(x));
    let big_b = centered(&angles(y));
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for k in 0..n {
        for l in 0..n {
            for r in 0..n {
                sxy += big_a[k][l][r] * big_b[k][l][r];
                sxx += big_a[k][l][r] * big_a[k][l][r];
                syy += big_b[k][l][r] * big_b[k][l][r];
            }
        }
    }
    let n3 = (n * n * n) as f64;
    Ok(PcStats {
        s_xy: sxy / n3,
        s_xx: sxx / n3,
        s_yy: syy / n3,
        n,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn random_matrix(n: usize, m: usize, seed: u64) -> SampleMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let data: Vec<f64> = (0..n * m).map(|_| StandardNormal.sample(&mut rng)).collect();
        SampleMatrix::from_col_major(n, m, data).unwrap()
    }

    fn close(a: PcStats, b: PcStats, tol: f64) {
        for (u, v) in [(a.s_xy, b.s_xy), (a.s_xx, b.s_xx), (a.s_yy, b.s_yy)] {
            assert!((u - v).abs() <= tol, "{u} vs {v}");
        }
    }

    #[test]
    fn class_block_paths_match_slice_path() {
        for seed in 0..4 {
            let x = random_matrix(90, 1, seed);
            // rounding creates ties
            let y = random_matrix(90, 1, seed + 100).map_unchecked(|_, _, v| (v * 2.0).round());
            let y2 = random_matrix(90, 2, seed + 200);
            close(univariate_stats(x.column(0), y.column(0)), general_stats(&x, &y, None), 1e-12);
            close(mixed_stats(x.column(0), &y2, None), general_stats(&x, &y2, None), 1e-12);
            close(
                mixed_stats(x.column(0), &y2, None).swapped(),
                general_stats(&y2, &x, None),
                1e-12,
            );
        }
    }

    #[test]
    fn collinear_opposite_directions_give_pi() {
        let x = SampleMatrix::from_column(&[0.0, 1.0, 2.0]).unwrap();
        let s = angle_slice(&x, 1).unwrap();
        assert_eq!(s.get(0, 2), PI);
        assert_eq!(s.get(2, 0), PI);
        assert_eq!(s.get(0, 0), 0.0);
        assert_eq!(s.get(2, 2), 0.0);
    }

    #[test]
    fn entries_touching_r_are_zero() {
        let x = random_matrix(7, 3, 1);
        for r in 0..7 {
            let s = angle_slice(&x, r).unwrap();
            for k in 0..7 {
                assert_eq!(s.get(k, r), 0.0);
                assert_eq!(s.get(r, k), 0.0);
            }
        }
    }

    #[test]
    fn duplicate_observation_gets_zero_angle() {
        let x = SampleMatrix::from_row_major(4, 2, &[0.0, 0.0, 1.0, 1.0, 1.0, 1.0, -2.0, 3.0])
            .unwrap();
        let s = angle_slice(&x, 1).unwrap();
        for l in 0..4 {
            assert_eq!(s.get(2, l), 0.0);
        }
    }

    #[test]
    fn slices_are_symmetric_and_in_range() {
        let x = random_matrix(9, 2, 2);
        for r in 0..9 {
            let s = angle_slice(&x, r).unwrap();
            for k in 0..9 {
                for l in 0..9 {
                    assert_eq!(s.get(k, l), s.get(l, k));
                    assert!((0.0..=PI).contains(&s.get(k, l)));
                }
            }
        }
    }

    #[test]
    fn angle_slice_rejects_bad_r() {
        let x = random_matrix(4, 1, 3);
        assert!(angle_slice(&x, 4).is_err());
    }

    #[test]
    fn centering_annihilates_constants() {
        let slice = AngleSlice {
            r: 0,
            n: 1,
            values: vec![0.0],
        };
        assert_eq!(center_slice(&slice).values, vec![0.0]);
        let slice = AngleSlice {
            r: 0,
            n: 3,
            values: vec![1.5; 9],
        };
        assert!(center_slice(&slice).values.iter().all(|v| v.abs() < 1e-15));
    }

    #[test]
    fn centering_matches_four_term_formula_on_symmetric_spike() {
        // symmetric synthetic input: v at (0, 2) and (2, 0)
        let n = 4;
        let v = 2.5;
        let mut values = vec![0.0; n * n];
        values[2] = v;
        values[2 * n] = v;
        let c = center_slice(&AngleSlice { r: 1, n, values: values.clone() });
        let nf = n as f64;
        for k in 0..n {
            for l in 0..n {
                let row: f64 = (0..n).map(|j| values[k * n + j]).sum::<f64>() / nf;
                let col: f64 = (0..n).map(|j| values[j * n + l]).sum::<f64>() / nf;
                let all: f64 = values.iter().sum::<f64>() / (nf * nf);
                let expected = values[k * n + l] - row - col + all;
                assert!((c.get(k, l) - expected).abs() < 1e-14);
            }
        }
        // the spike entry: v - v/n - v/n + 2v/n^2
        assert!((c.get(0, 2) - (v - 2.0 * v / nf + 2.0 * v / (nf * nf))).abs() < 1e-14);
    }

    #[test]
    fn centered_real_slices_have_zero_margins() {
        let x = random_matrix(12, 3, 4);
        let n = 12;
        for r in 0..n {
            let c = center_slice(&angle_slice(&x, r).unwrap());
            for k in 0..n {
                let row: f64 = (0..n).map(|l| c.get(k, l)).sum();
                let col: f64 = (0..n).map(|l| c.get(l, k)).sum();
                assert!(row.abs() <= 1e-9 * n as f64 * PI);
                assert!(col.abs() <= 1e-9 * n as f64 * PI);
            }
        }
    }

    #[test]
    fn identical_inputs_give_identical_sums() {
        let x = random_matrix(10, 2, 5);
        let s = pcov_stats(&x, &x, None).unwrap();
        assert_eq!(s.s_xy, s.s_xx);
        assert_eq!(s.s_xx, s.s_yy);
        assert_eq!(s.correlation_sq(), 1.0);
    }

    #[test]
    fn constant_column_gives_zero() {
        let x = SampleMatrix::from_column(&[3.0; 8]).unwrap();
        let y = random_matrix(8, 1, 6);
        let s = pcov_stats(&x, &y, None).unwrap();
        assert_eq!(s.s_xx, 0.0);
        assert_eq!(s.s_xy, 0.0);
        assert_eq!(projection_correlation_sq(&x, &y, None).unwrap(), 0.0);
        let naive = naive_pcov_stats(&x, &y).unwrap();
        assert_eq!(naive.s_xx, 0.0);
        assert_eq!(naive.correlation_sq(), 0.0);
    }

    #[test]
    fn mismatched_rows_are_rejected() {
        let x = random_matrix(5, 1, 7);
        let y = random_matrix(6, 1, 8);
        assert!(matches!(
            pcov_stats(&x, &y, None),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            naive_pcov_stats(&x, &y),
            Err(Error::DimensionMismatch { .. })
        ));
    }

    #[test]
    fn naive_oracle_refuses_large_inputs() {
        let x = random_matrix(65, 1, 9);
        assert!(matches!(
            naive_pcov_stats(&x, &x),
            Err(Error::InputTooLarge { n: 65, .. })
        ));
    }

    #[test]
    fn fast_path_matches_naive_on_small_case() {
        let x = random_matrix(15, 2, 10);
        let y = random_matrix(15, 1, 11);
        let fast = pcov_stats(&x, &y, None).unwrap();
        let slow = naive_pcov_stats(&x, &y).unwrap();
        assert!((fast.s_xy - slow.s_xy).abs() <= 1e-10);
        assert!((fast.s_xx - slow.s_xx).abs() <= 1e-10);
        assert!((fast.s_yy - slow.s_yy).abs() <= 1e-10);
        let v = fast.correlation_sq();
        assert!(v.abs() <= 1.0);
    }

    #[test]
    fn cache_budget_arithmetic() {
        assert_eq!(ResponseCache::required_bytes(100), 8_000_000);
        assert!(ResponseCache::required_bytes(100) <= 64 << 20);
        assert!(ResponseCache::required_bytes(1000) > 1 << 30);
        let y = random_matrix(20, 1, 12);
        assert!(build_response_cache(&y, 1 << 20).is_materialized());
        assert!(!build_response_cache(&y, 1000).is_materialized());
    }

    #[test]
    fn cache_is_transparent() {
        let y = random_matrix(20, 2, 13);
        let cache = build_response_cache(&y, 1 << 30);
        for seed in 0..5 {
            let x = random_matrix(20, 1, 100 + seed);
            let a = pcov_stats(&x, &y, Some(&cache)).unwrap();
            let b = pcov_stats(&x, &y, None).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn symmetric_in_roles() {
        let x = random_matrix(14, 2, 14);
        let y = random_matrix(14, 1, 15);
        let a = projection_correlation_sq(&x, &y, None).unwrap();
        let b = projection_correlation_sq(&y, &x, None).unwrap();
        assert_eq!(a.to_bits(), b.to_bits());
    }
}
