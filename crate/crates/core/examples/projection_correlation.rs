//! Squared projection correlation for a few dependent and independent pairs,
//! checked against the literal triple-loop evaluation.

use pcscreen::kernel::{naive_pcov_stats, pcov_stats, projection_correlation_sq};
use pcscreen::SampleMatrix;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn main() -> pcscreen::Result<()> {
    let n = 40;
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let mut draw = || -> f64 { StandardNormal.sample(&mut rng) };
    let x: Vec<f64> = (0..n).map(|_| draw()).collect();
    let noise: Vec<f64> = (0..n).map(|_| draw()).collect();

    let xm = SampleMatrix::from_column(&x)?;
    let cases: Vec<(&str, Vec<f64>)> = vec![
        ("independent", noise.clone()),
        ("linear", x.iter().zip(&noise).map(|(a, e)| a + 0.3 * e).collect()),
        ("quadratic", x.iter().zip(&noise).map(|(a, e)| a * a + 0.3 * e).collect()),
        ("absolute", x.iter().zip(&noise).map(|(a, e)| a.abs() + 0.3 * e).collect()),
    ];
    for (name, y) in cases {
        let ym = SampleMatrix::from_column(&y)?;
        let fast = pcov_stats(&xm, &ym, None)?;
        let naive = naive_pcov_stats(&xm, &ym)?;
        println!(
            "{name:>12}: PC^2 = {:+.5}  (naive s_xy differs by {:.1e})",
            fast.correlation_sq(),
            (fast.s_xy - naive.s_xy).abs()
        );
    }

    // bivariate response: (x, x^2) against x
    let pair = SampleMatrix::from_columns(&[x.clone(), x.iter().map(|a| a * a).collect()])?;
    println!(
        "  bivariate: PC^2(x, (x, x^2)) = {:.5}",
        projection_correlation_sq(&xm, &pair, None)?
    );
    println!("  self: PC^2(x, x) = {}", projection_correlation_sq(&xm, &xm, None)?);
    Ok(())
}
