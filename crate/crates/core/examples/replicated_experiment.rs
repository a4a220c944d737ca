//! Small replicated studies: minimum-model-size quantiles and an FDR table.

use pcscreen::harness::{
    run_fdr_experiment, run_quantile_experiment, ExperimentConfig, ExperimentKind,
};
use pcscreen::models::ModelId;

fn main() -> pcscreen::Result<()> {
    let cfg = ExperimentConfig {
        models: vec![ModelId::M1a, ModelId::M1b],
        n: 100,
        p: 300,
        replications: 20,
        base_seed: 100,
        ..Default::default()
    };
    let table = run_quantile_experiment(&cfg)?;
    println!("levels {:?}", table.levels);
    for row in &table.rows {
        println!("{} {:>12} {:?}", row.model, row.method.name(), row.quantiles);
    }

    let cfg = ExperimentConfig {
        kind: ExperimentKind::Fdr,
        models: vec![ModelId::M4a],
        n: 400,
        p: 300,
        n1: Some(100),
        d: Some(40),
        replications: 10,
        alphas: vec![0.1, 0.2],
        ..Default::default()
    };
    for row in run_fdr_experiment(&cfg)?.rows {
        println!(
            "alpha {:.2}: mean |A| {:.2}, all {:.2}, FDR {:.3}",
            row.alpha, row.mean_size, row.all_frequency, row.empirical_fdr
        );
    }
    Ok(())
}
