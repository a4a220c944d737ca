//! Draws one dataset from every simulation design and prints a summary.

use pcscreen::models::{generate_dataset, ModelId, ModelSpec};

fn main() -> pcscreen::Result<()> {
    println!("model  q  active      max|x|     max|y|  clamps");
    for id in ModelId::ALL {
        let data = generate_dataset(&ModelSpec::new(id, 200, 50), 9)?;
        let max_abs = |v: &[f64]| v.iter().fold(0.0f64, |m, a| m.max(a.abs()));
        println!(
            "{:>5} {:>2} {:>7} {:>11.3e} {:>10.3e} {:>7}",
            id,
            data.y.ncols(),
            data.true_active.len(),
            max_abs(data.x.as_col_major()),
            max_abs(data.y.as_col_major()),
            data.diagnostics.poisson_clamps
        );
    }
    Ok(())
}
