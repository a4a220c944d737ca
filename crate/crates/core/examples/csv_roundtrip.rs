//! Writes a simulated design to CSV, reads it back and screens it.

use pcscreen::harness::{default_names, read_design_csv, screen_design, write_design_csv, ResponseColumns};
use pcscreen::models::{generate_dataset, ModelId, ModelSpec};
use pcscreen::screening::RankOptions;

fn main() -> pcscreen::Result<()> {
    let dir = std::env::temp_dir().join("pcscreen-csv-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("design.csv");

    let data = generate_dataset(&ModelSpec::new(ModelId::M3a, 80, 30), 2)?;
    write_design_csv(
        &path,
        &data.x,
        &data.y,
        &default_names("x", 30),
        &["y1".to_string(), "y2".to_string()],
    )?;
    let design = read_design_csv(&path, &"y1,y2".parse::<ResponseColumns>()?)?;
    assert_eq!(design.x, data.x);
    assert_eq!(design.y, data.y);
    println!("read back {} x {} design, bit-identical", design.x.nrows(), design.x.ncols());

    let ranking = screen_design(&design, RankOptions::default(), &dir)?;
    let top: Vec<&str> = ranking
        .entries
        .iter()
        .take(4)
        .map(|e| design.x_names[e.feature].as_str())
        .collect();
    println!("top features against the bivariate response: {top:?}");
    println!("wrote {}", dir.join("ranking.csv").display());
    Ok(())
}
