use nalgebra::DMatrix;
use pcscreen::kernel::{
    angle_slice, build_response_cache, center_slice, naive_pcov_stats, pcov_stats,
    projection_correlation_sq, AngleSlice,
};
use pcscreen::SampleMatrix;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use std::f64::consts::PI;

fn gaussian(n: usize, p: usize, rng: &mut ChaCha8Rng) -> SampleMatrix {
    let data: Vec<f64> = (0..n * p).map(|_| StandardNormal.sample(rng)).collect();
    SampleMatrix::from_col_major(n, p, data).unwrap()
}

/// Values on a coarse grid so that ties (and zero differences) show up.
fn gridded(n: usize, p: usize, rng: &mut ChaCha8Rng) -> SampleMatrix {
    let data: Vec<f64> = (0..n * p).map(|_| rng.random_range(-2..=2) as f64).collect();
    SampleMatrix::from_col_major(n, p, data).unwrap()
}

fn instance(seed: u64, n: usize, p: usize, q: usize, ties: bool) -> (SampleMatrix, SampleMatrix) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    if ties {
        (gridded(n, p, &mut rng), gridded(n, q, &mut rng))
    } else {
        let x = gaussian(n, p, &mut rng);
        // y depends on x so that s_xy is not just noise
        let noise = gaussian(n, q, &mut rng);
        let y = noise.map_values(|i, j, v| v + x.get(i, j % p).powi(2));
        (x, y)
    }
}

trait MapValues {
    fn map_values(&self, f: impl Fn(usize, usize, f64) -> f64) -> SampleMatrix;
}

impl MapValues for SampleMatrix {
    fn map_values(&self, f: impl Fn(usize, usize, f64) -> f64) -> SampleMatrix {
        let (n, p) = (self.nrows(), self.ncols());
        let mut data = Vec::with_capacity(n * p);
        for j in 0..p {
            for i in 0..n {
                data.push(f(i, j, self.get(i, j)));
            }
        }
        SampleMatrix::from_col_major(n, p, data).unwrap()
    }
}

/// Scalar arccos reference for one angle.
fn reference_angle(m: &SampleMatrix, k: usize, l: usize, r: usize) -> f64 {
    if k == r || l == r {
        return 0.0;
    }
    let u: Vec<f64> = (0..m.ncols()).map(|j| m.get(k, j) - m.get(r, j)).collect();
    let v: Vec<f64> = (0..m.ncols()).map(|j| m.get(l, j) - m.get(r, j)).collect();
    let nu = u.iter().map(|a| a * a).sum::<f64>().sqrt();
    let nv = v.iter().map(|a| a * a).sum::<f64>().sqrt();
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    let c = u.iter().zip(&v).map(|(a, b)| a * b).sum::<f64>() / (nu * nv);
    // acos is ill-conditioned near +-1; use the chord there instead
    let chord = |sign: f64| {
        u.iter()
            .zip(&v)
            .map(|(a, b)| (a / nu - sign * b / nv).powi(2))
            .sum::<f64>()
            .sqrt()
    };
    if c > 0.5 {
        2.0 * (chord(1.0) / 2.0).asin()
    } else if c < -0.5 {
        PI - 2.0 * (chord(-1.0) / 2.0).asin()
    } else {
        c.acos()
    }
}

fn reference_centering(a: &AngleSlice) -> Vec<f64> {
    let n = a.n;
    let row: Vec<f64> = (0..n).map(|k| (0..n).map(|l| a.get(k, l)).sum::<f64>() / n as f64).collect();
    let col: Vec<f64> = (0..n).map(|l| (0..n).map(|k| a.get(k, l)).sum::<f64>() / n as f64).collect();
    let grand = row.iter().sum::<f64>() / n as f64;
    let mut out = vec![0.0; n * n];
    for k in 0..n {
        for l in 0..n {
            out[k * n + l] = a.get(k, l) - row[k] - col[l] + grand;
        }
    }
    out
}

fn random_orthogonal(p: usize, rng: &mut ChaCha8Rng) -> DMatrix<f64> {
    let m = DMatrix::<f64>::from_fn(p, p, |_, _| StandardNormal.sample(rng));
    m.qr().q()
}

fn similarity(m: &SampleMatrix, rng: &mut ChaCha8Rng) -> SampleMatrix {
    let p = m.ncols();
    let q = random_orthogonal(p, rng);
    let c: f64 = rng.random_range(0.2..5.0);
    let t: Vec<f64> = (0..p).map(|_| rng.random_range(-10.0..10.0)).collect();
    m.map_values(|i, j, _| {
        let rot: f64 = (0..p).map(|a| q[(j, a)] * m.get(i, a)).sum();
        c * rot + t[j]
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn fast_kernel_matches_triple_loop(
        seed in any::<u64>(), n in 5usize..=20, p in 1usize..=3, q in 1usize..=3, ties in any::<bool>()
    ) {
        let (x, y) = instance(seed, n, p, q, ties);
        let fast = pcov_stats(&x, &y, None).unwrap();
        let naive = naive_pcov_stats(&x, &y).unwrap();
        prop_assert!((fast.s_xy - naive.s_xy).abs() <= 1e-10, "s_xy {} vs {}", fast.s_xy, naive.s_xy);
        prop_assert!((fast.s_xx - naive.s_xx).abs() <= 1e-10, "s_xx {} vs {}", fast.s_xx, naive.s_xx);
        prop_assert!((fast.s_yy - naive.s_yy).abs() <= 1e-10, "s_yy {} vs {}", fast.s_yy, naive.s_yy);
    }

    #[test]
    fn stats_satisfy_cauchy_schwarz(
        seed in any::<u64>(), n in 3usize..=30, p in 1usize..=3, q in 1usize..=3, ties in any::<bool>()
    ) {
        let (x, y) = instance(seed, n, p, q, ties);
        let s = pcov_stats(&x, &y, None).unwrap();
        prop_assert!(s.s_xx >= 0.0 && s.s_yy >= 0.0);
        prop_assert!(s.s_xy.abs() <= (s.s_xx * s.s_yy).sqrt() * (1.0 + 1e-12) + 1e-15);
        let pc = s.correlation_sq();
        prop_assert!(pc.abs() <= 1.0 + 1e-12);
    }

    #[test]
    fn angle_slice_matches_scalar_reference(
        seed in any::<u64>(), n in 2usize..=15, p in 1usize..=3, ties in any::<bool>()
    ) {
        let (m, _) = instance(seed, n, p, 1, ties);
        for r in 0..n {
            let a = angle_slice(&m, r).unwrap();
            for k in 0..n {
                for l in 0..n {
                    let v = a.get(k, l);
                    prop_assert!((v - reference_angle(&m, k, l, r)).abs() <= 1e-12);
                    prop_assert_eq!(v, a.get(l, k));
                    prop_assert!((0.0..=PI).contains(&v));
                }
                prop_assert_eq!(a.get(k, r), 0.0);
                prop_assert_eq!(a.get(r, k), 0.0);
            }
        }
    }

    #[test]
    fn centering_matches_reference_and_has_zero_margins(
        seed in any::<u64>(), n in 2usize..=15, p in 1usize..=3
    ) {
        let (m, _) = instance(seed, n, p, 1, false);
        let r = (seed % n as u64) as usize;
        let a = angle_slice(&m, r).unwrap();
        let c = center_slice(&a);
        let oracle = reference_centering(&a);
        let tol = 1e-9 * n as f64 * PI;
        for k in 0..n {
            let row: f64 = (0..n).map(|l| c.get(k, l)).sum();
            let col: f64 = (0..n).map(|l| c.get(l, k)).sum();
            prop_assert!(row.abs() <= tol && col.abs() <= tol);
            for l in 0..n {
                prop_assert!((c.get(k, l) - oracle[k * n + l]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn cache_is_transparent(seed in any::<u64>(), n in 3usize..=20, p in 1usize..=3, q in 2usize..=3) {
        let (x, y) = instance(seed, n, p, q, seed % 2 == 0);
        let plain = pcov_stats(&x, &y, None).unwrap();
        let cache = build_response_cache(&y, 1 << 30);
        prop_assert!(cache.is_materialized());
        prop_assert_eq!(cache.slices().unwrap().len(), n);
        let cached = pcov_stats(&x, &y, Some(&cache)).unwrap();
        prop_assert_eq!(plain, cached);
        let tiny = build_response_cache(&y, 8);
        prop_assert!(!tiny.is_materialized());
        prop_assert_eq!(plain, pcov_stats(&x, &y, Some(&tiny)).unwrap());
    }
}

#[test]
fn single_entry_slice_centers_as_expected() {
    // a symmetric slice that is zero except for a_{12} = a_{21} = v
    let n = 5;
    let v = 1.7;
    let mut values = vec![0.0; n * n];
    values[n + 2] = v;
    values[2 * n + 1] = v;
    let c = center_slice(&AngleSlice { r: 0, n, values });
    let nf = n as f64;
    let row = |k: usize| if k == 1 || k == 2 { v / nf } else { 0.0 };
    let grand = 2.0 * v / (nf * nf);
    for k in 0..n {
        for l in 0..n {
            let a = if (k, l) == (1, 2) || (k, l) == (2, 1) { v } else { 0.0 };
            let expected = a - row(k) - row(l) + grand;
            assert!((c.get(k, l) - expected).abs() < 1e-15, "({k},{l})");
        }
    }
}

#[test]
fn kernel_invariants_over_fifty_instances() {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for case in 0..50u64 {
        let n = 8 + (case as usize % 25);
        let p = 1 + (case as usize % 3);
        let q = 1 + (case as usize / 3 % 3);
        let (x, y) = instance(1000 + case, n, p, q, false);

        assert_eq!(projection_correlation_sq(&x, &x, None).unwrap(), 1.0);
        let constant = SampleMatrix::from_column(&vec![3.5; n]).unwrap();
        assert_eq!(projection_correlation_sq(&constant, &y, None).unwrap(), 0.0);

        let base = projection_correlation_sq(&x, &y, None).unwrap();
        assert!(base.abs() <= 1.0);

        let moved = projection_correlation_sq(&similarity(&x, &mut rng), &y, None).unwrap();
        assert!((moved - base).abs() <= 1e-9, "similarity: {moved} vs {base}");

        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.random_range(0..=i));
        }
        let xp = x.select_rows(&perm).unwrap();
        let yp = y.select_rows(&perm).unwrap();
        let permuted = projection_correlation_sq(&xp, &yp, None).unwrap();
        assert!((permuted - base).abs() <= 1e-12, "permutation: {permuted} vs {base}");

        let forward = pcov_stats(&x, &y, None).unwrap();
        let backward = pcov_stats(&y, &x, None).unwrap();
        assert_eq!(forward.s_xy.to_bits(), backward.s_xy.to_bits());
        assert_eq!(forward.s_xx.to_bits(), backward.s_yy.to_bits());
    }
}

#[test]
fn independent_statistic_shrinks_with_n() {
    let mean_abs = |n: usize| {
        let mut total = 0.0;
        for rep in 0..200u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(n as u64 * 1_000_003 + rep);
            let x = gaussian(n, 1, &mut rng);
            let y = gaussian(n, 1, &mut rng);
            total += projection_correlation_sq(&x, &y, None).unwrap().abs();
        }
        total / 200.0
    };
    let small = mean_abs(100);
    let large = mean_abs(400);
    assert!(large < small, "mean |PC^2| at n=400 ({large}) not below n=100 ({small})");
}

#[test]
fn tiny_and_mismatched_inputs_are_rejected() {
    let one = SampleMatrix::from_column(&[1.0]).unwrap();
    assert!(pcov_stats(&one, &one, None).is_err());
    let a = SampleMatrix::from_column(&[1.0, 2.0, 3.0]).unwrap();
    let b = SampleMatrix::from_column(&[1.0, 2.0]).unwrap();
    assert!(pcov_stats(&a, &b, None).is_err());
}
