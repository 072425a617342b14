use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, bail, Context};
use clap::{Args, Parser, Subcommand};
use odflow::gravity::GravityMethod;
use odflow::io::{load_dataset, synth_dataset, write_dataset, DatasetPaths, SynthOptions};
use odflow::pipeline::{run_pipeline, PipelineConfig, Stage};
use odflow::regression::RegressionMethod;
use odflow::report::write_json;
use odflow::{validate, Error, VehicleClass};

/// Regional highway flow and GDP analysis.
#[derive(Parser)]
#[command(name = "odflow", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check the dataset files and list any problems.
    Validate(Common),
    /// Per-city flow features.
    Features(Common),
    /// GDP regression on flow features.
    Regress(Common),
    /// Gravity-model calibration.
    Gravity(Common),
    /// Centrality measures and their correlation with GDP.
    Network(Common),
    /// Principal components of the flow matrices and dominant sub-networks.
    Pca(Common),
    /// Distribution fits of city GDP.
    Distfit(Common),
    /// Every stage in order.
    Run(Common),
    /// Write a synthetic dataset with a ground-truth sidecar.
    Synth(SynthArgs),
}

#[derive(Args)]
struct Common {
    /// TOML pipeline configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory holding cities.csv, flows.csv, distances.csv and gdp.csv.
    #[arg(long)]
    data: Option<PathBuf>,
    /// A single year (`2015`) or an inclusive range (`2014-2017`).
    #[arg(long)]
    year: Option<String>,
    /// `carbus` or `truck`.
    #[arg(long)]
    class: Option<String>,
    /// Regression (`ols`, `glm`, `ridge`, `lasso`) or gravity (`loglinear`, `minimax`, `null`) method.
    #[arg(long)]
    method: Option<String>,
    /// Output directory for reports.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SynthArgs {
    #[arg(long, default_value = "synth")]
    out: PathBuf,
    #[arg(long, default_value_t = 13)]
    cities: usize,
    /// Comma-separated years.
    #[arg(long, default_value = "2014,2015,2016,2017", value_delimiter = ',')]
    years: Vec<i32>,
    /// Car and bus decay exponent per year, comma-separated.
    #[arg(long, default_value = "1.2,1.15,1.1,1.05", value_delimiter = ',')]
    beta: Vec<f64>,
    #[arg(long, default_value_t = 42)]
    seed: u64,
    /// Log-normal sigma on intercity flows.
    #[arg(long, default_value_t = 0.0)]
    flow_noise: f64,
    /// Normal sd on GDP (billion CNY).
    #[arg(long, default_value_t = 0.0)]
    gdp_noise: f64,
}

fn parse_years(s: &str) -> anyhow::Result<[i32; 2]> {
    let parse = |t: &str| t.trim().parse::<i32>().with_context(|| format!("bad year `{t}`"));
    match s.split_once('-') {
        Some((a, b)) => Ok([parse(a)?, parse(b)?]),
        None => {
            let y = parse(s)?;
            Ok([y, y])
        }
    }
}

fn build_config(args: &Common, stages: &[Stage]) -> anyhow::Result<PipelineConfig> {
    let mut cfg = match (&args.config, &args.data) {
        (Some(path), _) => PipelineConfig::from_toml_file(path)?,
        (None, Some(dir)) => PipelineConfig::for_data_dir(dir),
        (None, None) => PipelineConfig::for_data_dir(Path::new(".")),
    };
    if let Some(dir) = &args.data {
        let p = DatasetPaths::in_dir(dir);
        (cfg.cities, cfg.flows, cfg.distances, cfg.gdp) = (p.cities, p.flows, p.distances, p.gdp);
    }
    if args.config.is_none() || !stages.is_empty() {
        cfg.stages = stages.to_vec();
    }
    if let Some(y) = &args.year {
        cfg.years = Some(parse_years(y)?);
    }
    if let Some(c) = &args.class {
        let class = VehicleClass::parse(c).ok_or_else(|| anyhow!("unknown vehicle class `{c}`"))?;
        cfg.classes = vec![class];
    }
    if let Some(m) = &args.method {
        let regression = RegressionMethod::parse(m);
        let gravity = GravityMethod::parse(m);
        if regression.is_none() && gravity.is_none() {
            bail!("unknown method `{m}`");
        }
        if let Some(r) = regression {
            cfg.regression_methods = vec![r];
        }
        if let Some(g) = gravity {
            cfg.gravity_methods = vec![g];
        }
    }
    if let Some(out) = &args.out {
        cfg.out = out.clone();
    }
    if let Some(seed) = args.seed {
        cfg.seed = seed;
    }
    Ok(cfg)
}

fn run_stages(args: &Common, stages: &[Stage]) -> anyhow::Result<i32> {
    let cfg = build_config(args, stages)?;
    let outcome = run_pipeline(&cfg)?;
    for path in &outcome.written {
        println!("wrote {}", path.display());
    }
    for f in &outcome.failures {
        eprintln!("failed {}: {}", f.cell, f.message);
    }
    Ok(outcome.exit_code())
}

fn cmd_validate(args: &Common) -> anyhow::Result<i32> {
    let cfg = build_config(args, &[])?;
    let dataset = load_dataset(&cfg.paths())?;
    let report = validate(&dataset);
    println!(
        "{} cities, {} flow matrices, {} GDP records",
        dataset.cities.len(),
        dataset.flows.len(),
        dataset.gdp.len()
    );
    for u in &report.undefined_ratios {
        println!("undefined in/out ratio: {} {} {}", u.city, u.year, u.class);
    }
    Ok(0)
}

fn cmd_synth(args: &SynthArgs) -> anyhow::Result<i32> {
    let mut options = SynthOptions::new(args.cities, args.years.clone(), args.beta.clone(), args.seed);
    options.flow_noise = args.flow_noise;
    options.gdp_noise = args.gdp_noise;
    let (dataset, truth) = synth_dataset(&options)?;
    let paths = write_dataset(&dataset, &args.out)?;
    let sidecar = args.out.join("ground_truth.json");
    write_json(&sidecar, &truth)?;
    for p in [&paths.cities, &paths.gdp, &paths.distances, &paths.flows, &sidecar] {
        println!("wrote {}", p.display());
    }
    Ok(0)
}

fn dispatch(cli: &Cli) -> anyhow::Result<i32> {
    match &cli.command {
        Command::Validate(a) => cmd_validate(a),
        Command::Features(a) => run_stages(a, &[Stage::Features]),
        Command::Regress(a) => run_stages(a, &[Stage::Regression]),
        Command::Gravity(a) => run_stages(a, &[Stage::Gravity]),
        Command::Network(a) => run_stages(a, &[Stage::Network]),
        Command::Pca(a) => run_stages(a, &[Stage::Pca]),
        Command::Distfit(a) => run_stages(a, &[Stage::Distfit]),
        Command::Run(a) => run_stages(a, if a.config.is_some() { &[] } else { &Stage::ALL }),
        Command::Synth(a) => cmd_synth(a),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match dispatch(&cli) {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e:#}");
            let code = e.downcast_ref::<Error>().map_or(1, Error::exit_code);
            ExitCode::from(code as u8)
        }
    }
}
