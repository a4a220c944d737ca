//! Ranks 1000 features of nonlinear Model 2.a by projection correlation and
//! compares against Pearson correlation screening.

use pcscreen::models::{generate_dataset, ModelId, ModelSpec};
use pcscreen::screening::{
    largest_gap_rank, minimum_model_size, pearson_sis_rank, rank_features, select_by_threshold,
    select_top_d, signal_gap_diagnostic, RankOptions,
};

fn main() -> pcscreen::Result<()> {
    let data = generate_dataset(&ModelSpec::new(ModelId::M2a, 100, 1000), 3)?;
    let ranking = rank_features(&data.x, &data.y, RankOptions::default())?;
    let sis = pearson_sis_rank(&data.x, &data.y)?;

    println!("top 8 by PC^2:");
    for e in ranking.entries.iter().take(8) {
        println!("  x{:<4} {:.4}", e.feature, e.omega_hat);
    }
    println!(
        "minimum model size: PC-Screen {}, Pearson SIS {}",
        minimum_model_size(&ranking, &data.true_active)?,
        minimum_model_size(&sis, &data.true_active)?
    );

    let gaps = signal_gap_diagnostic(&ranking);
    if let Some(rank) = largest_gap_rank(&gaps[..20]) {
        println!("largest gap among the top 20 is after rank {rank}");
    }
    let top = select_top_d(&ranking, 10);
    let thr = select_by_threshold(&ranking, 0.05);
    println!("top-10 set {:?}", top.indices);
    println!("PC^2 >= 0.05 keeps {} features", thr.indices.len());
    Ok(())
}
