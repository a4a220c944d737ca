use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pcscreen::harness::{
    read_design_csv, run_experiment, screen_design, table_preset, ExperimentConfig,
    ExperimentKind, Method, ResponseColumns, Scale, pcknockoff_design,
};
use pcscreen::knockoff::Construction;
use pcscreen::models::ModelId;
use pcscreen::pipeline::{default_d, default_n1, PcKnockoffConfig};
use pcscreen::screening::RankOptions;

#[derive(Parser)]
#[command(name = "pcscreen", version, about = "Projection-correlation screening and knockoff selection")]
struct Cli {
    #[command(flatten)]
    globals: Globals,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Globals {
    /// Base random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Memory budget for the response-slice cache, in MiB.
    #[arg(long, global = true)]
    mem_budget_mb: Option<u64>,
    /// Output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Rank the features of a CSV design; writes ranking.csv and gap.csv.
    Screen(DesignArgs),
    /// Screen on one half of a split, knockoff-select on the other; writes selection.json.
    Pcknockoff {
        #[command(flatten)]
        design: DesignArgs,
        #[arg(long, default_value_t = 0.2)]
        alpha: f64,
        /// Screening sample size (default ceil(n/4)).
        #[arg(long)]
        n1: Option<usize>,
        /// Number of screening survivors (default min(n2/2 - 1, 100)).
        #[arg(long)]
        d: Option<usize>,
        #[arg(long, default_value = "equi")]
        construction: Construction,
    },
    /// Run an experiment from a JSON config and/or flags.
    Simulate(SimulateArgs),
    /// Run one of the table presets.
    Reproduce {
        #[arg(long, value_parser = clap::value_parser!(u8).range(1..=4))]
        table: u8,
        #[arg(long, default_value = "desk")]
        scale: Scale,
        /// Override the preset replication count.
        #[arg(long)]
        reps: Option<usize>,
    },
}

#[derive(Args)]
struct DesignArgs {
    /// Input CSV with a header row.
    #[arg(long)]
    input: PathBuf,
    /// Response columns: comma-separated names, or a trailing column count.
    #[arg(long)]
    response_cols: ResponseColumns,
}

#[derive(Args)]
struct SimulateArgs {
    /// Flat JSON config; flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_parser = ["quantile", "fdr", "phase"])]
    kind: Option<String>,
    /// Model ids, comma separated (e.g. 1a,2c).
    #[arg(long = "model", value_delimiter = ',')]
    models: Vec<ModelId>,
    #[arg(long = "methods", value_delimiter = ',')]
    methods: Vec<Method>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    s: Option<usize>,
    #[arg(long)]
    reps: Option<usize>,
    #[arg(long, value_delimiter = ',')]
    alphas: Vec<f64>,
    #[arg(long, value_delimiter = ',')]
    quantiles: Vec<f64>,
    #[arg(long)]
    n1: Option<usize>,
    #[arg(long)]
    d: Option<usize>,
    #[arg(long)]
    construction: Option<Construction>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            let mut source = std::error::Error::source(&e);
            while let Some(s) = source {
                eprintln!("  caused by: {s}");
                source = s.source();
            }
            ExitCode::from(if e.is_data_error() { 2 } else { 3 })
        }
    }
}

fn run(cli: Cli) -> pcscreen::Result<()> {
    let g = cli.globals;
    let threads = g.threads.unwrap_or(1);
    let budget_mb = g.mem_budget_mb.unwrap_or(1024);
    let out = g.out.clone().unwrap_or_else(|| PathBuf::from("pcscreen-out"));
    match cli.command {
        Command::Screen(args) => {
            let design = read_design_csv(&args.input, &args.response_cols)?;
            let opts = RankOptions {
                threads,
                memory_budget_bytes: budget_mb << 20,
            };
            let ranking = screen_design(&design, opts, &out)?;
            println!("ranked {} features; wrote {}", ranking.len(), out.display());
        }
        Command::Pcknockoff {
            design,
            alpha,
            n1,
            d,
            construction,
        } => {
            let data = read_design_csv(&design.input, &design.response_cols)?;
            let n = data.x.nrows();
            let n1 = n1.unwrap_or_else(|| default_n1(n));
            let cfg = PcKnockoffConfig {
                alpha,
                n1,
                d: d.unwrap_or_else(|| default_d(n, n1)),
                construction,
                seed: g.seed.unwrap_or(0),
                threads,
                memory_budget_bytes: budget_mb << 20,
            };
            let doc = pcknockoff_design(&data, &cfg, &out)?;
            println!(
                "selected {} of {} survivors; wrote {}",
                doc.selected.len(),
                doc.survivors.len(),
                out.join("selection.json").display()
            );
        }
        Command::Simulate(args) => {
            let mut cfg = match &args.config {
                Some(path) => ExperimentConfig::from_json_file(path)?,
                None => ExperimentConfig::default(),
            };
            if let Some(kind) = &args.kind {
                cfg.kind = match kind.as_str() {
                    "fdr" => ExperimentKind::Fdr,
                    "phase" => ExperimentKind::Phase,
                    _ => ExperimentKind::Quantile,
                };
            }
            if !args.models.is_empty() {
                cfg.models = args.models;
            }
            if !args.methods.is_empty() {
                cfg.methods = args.methods;
            }
            if !args.alphas.is_empty() {
                cfg.alphas = args.alphas;
            }
            if !args.quantiles.is_empty() {
                cfg.quantile_levels = args.quantiles;
            }
            cfg.n = args.n.unwrap_or(cfg.n);
            cfg.p = args.p.unwrap_or(cfg.p);
            cfg.s = args.s.or(cfg.s);
            cfg.replications = args.reps.unwrap_or(cfg.replications);
            cfg.n1 = args.n1.or(cfg.n1);
            cfg.d = args.d.or(cfg.d);
            cfg.construction = args.construction.unwrap_or(cfg.construction);
            run_config(cfg, &g)?;
        }
        Command::Reproduce { table, scale, reps } => {
            let mut cfg = table_preset(table, scale)?;
            cfg.replications = reps.unwrap_or(cfg.replications);
            run_config(cfg, &g)?;
        }
    }
    Ok(())
}

fn run_config(mut cfg: ExperimentConfig, cli: &Globals) -> pcscreen::Result<()> {
    cfg.base_seed = cli.seed.unwrap_or(cfg.base_seed);
    cfg.threads = cli.threads.unwrap_or(cfg.threads);
    cfg.memory_budget_mb = cli.mem_budget_mb.unwrap_or(cfg.memory_budget_mb);
    if cli.out.is_some() || cfg.out_dir.is_none() {
        cfg.out_dir = Some(cli.out.clone().unwrap_or_else(|| PathBuf::from("pcscreen-out")));
    }
    cfg.validate()?;
    run_experiment(&cfg)?;
    let dir = cfg.out_dir.as_ref().map(|d| d.display().to_string()).unwrap_or_default();
    println!("wrote {dir}");
    Ok(())
}
