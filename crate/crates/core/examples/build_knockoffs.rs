//! Second-order knockoffs for an AR(0.5) block: equicorrelated and SDP h,
//! and an empirical check of the joint covariance.

use pcscreen::knockoff::{
    build_knockoff_model, equicorrelated_h, estimate_covariance, feasibility_margin, h_objective,
    sample_knockoffs, sdp_h, Construction, SdpOptions,
};
use pcscreen::models::{generate_dataset, ModelId, ModelSpec};

fn main() -> pcscreen::Result<()> {
    let data = generate_dataset(&ModelSpec::new(ModelId::M4a, 5000, 10), 1)?;
    let block = data.x.select_columns(&[0, 1, 2, 3, 4])?;
    let cov = estimate_covariance(&block)?;
    println!("lambda_min(S) = {:.4}, jitter = {}", cov.lambda_min(), cov.jitter_applied);

    let equi = equicorrelated_h(&cov);
    let sdp = sdp_h(&cov, SdpOptions::default())?;
    for (name, h) in [("equi", &equi), ("sdp", &sdp)] {
        println!(
            "{name:>4}: h = {:.3?}  objective {:.4}  margin {:+.2e}",
            h,
            h_objective(h),
            feasibility_margin(&cov.sigma, h)
        );
    }

    let model = build_knockoff_model(&cov, &sdp, Construction::Sdp)?;
    let z = cov.standardize(&block)?;
    let knock = sample_knockoffs(&z, &model, 7)?;
    let joint = z.hstack(&knock)?;
    let g = model.joint_covariance();
    let n = joint.nrows() as f64;
    let mut worst = 0.0f64;
    for a in 0..10 {
        for b in 0..10 {
            let emp: f64 = joint
                .column(a)
                .iter()
                .zip(joint.column(b))
                .map(|(u, v)| u * v)
                .sum::<f64>()
                / n;
            worst = worst.max((emp - g[(a, b)]).abs());
        }
    }
    println!("max |empirical cov - G| = {worst:.4}");
    Ok(())
}
