//! Knockoff+ thresholding on a hand-made W vector, the rule-of-thumb active
//! count, and the phase-transition probabilities.

use pcscreen::fdr::{
    default_alpha_grid, estimate_active_count, knockoff_plus_threshold,
    phase_transition_probabilities, WVector,
};

fn main() -> pcscreen::Result<()> {
    // ten strong signals followed by symmetric noise
    let mut values: Vec<f64> = (0..10).map(|j| 0.30 + 0.01 * j as f64).collect();
    values.extend([0.02, -0.015, 0.011, -0.03, 0.004, -0.008, 0.025, -0.001]);
    let w = WVector::from_values(&values, 450);

    for alpha in [0.05, 0.1, 0.2] {
        let sel = knockoff_plus_threshold(&w, alpha)?;
        match sel.t_alpha {
            Some(t) => println!(
                "alpha {alpha:.2}: T = {t:.3}, {} selected, estimated FDP {:.3}",
                sel.selected.len(),
                sel.fdp_hat
            ),
            None => println!("alpha {alpha:.2}: no feasible threshold, nothing selected"),
        }
    }

    let s_hat = estimate_active_count(|a| knockoff_plus_threshold(&w, a), &default_alpha_grid())?;
    println!("rule-of-thumb active count: {s_hat:?}");

    let phase = phase_transition_probabilities(10, 40)?;
    for row in phase.rows.iter().take(5) {
        println!("k = {:>2}: a_k = {:.5}  b_k = {:.5}", row.k, row.a_k, row.b_k);
    }
    println!("partial C(10) over k <= 40: {:.4}", phase.partial_c);
    Ok(())
}
