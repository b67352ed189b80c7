use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use geoattract::attractiveness::DenominatorMode;
use geoattract::covariates::Axis;
use geoattract::pipeline::{self, PipelineConfig, PipelineError, RunReport};
use geoattract::synth::{generate_world, SynthConfig};

#[derive(Parser)]
#[command(name = "geoattract", version, about = "Country attractiveness scaling from geotagged media metadata")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Check a config against the filesystem.
    Validate(ConfigArgs),
    /// Run every stage, reusing cached ones.
    Run(ConfigArgs),
    /// Re-run fits and correlations from persisted tables.
    Fit(ConfigArgs),
    /// Generate a synthetic world plus a matching pipeline config.
    Synth(SynthArgs),
    /// Re-emit plot data from an existing report.
    Report {
        #[arg(long, default_value = "out")]
        output_dir: PathBuf,
    },
}

#[derive(Args)]
struct ConfigArgs {
    /// TOML config; flags below override its values.
    #[arg(short, long)]
    config: Option<PathBuf>,
    #[arg(long)]
    metadata: Option<PathBuf>,
    #[arg(long)]
    boundaries: Option<PathBuf>,
    #[arg(long)]
    population: Option<PathBuf>,
    #[arg(long)]
    area: Option<PathBuf>,
    #[arg(long)]
    covariates: Option<PathBuf>,
    #[arg(long)]
    regions: Option<PathBuf>,
    #[arg(long)]
    aliases: Option<PathBuf>,
    #[arg(long)]
    epsilon: Option<f64>,
    /// foreign_only or all_objects
    #[arg(long)]
    denominator: Option<String>,
    #[arg(long)]
    classify_tolerance: Option<f64>,
    /// population or area
    #[arg(long)]
    correlation_axis: Option<Axis>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long)]
    output_dir: Option<PathBuf>,
}

#[derive(Args)]
struct SynthArgs {
    /// Directory receiving the generated inputs and pipeline.toml.
    #[arg(long)]
    out: PathBuf,
    /// TOML generator config; flags below override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    users: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    non_geotag_rate: Option<f64>,
    #[arg(long)]
    bad_date_rate: Option<f64>,
}

fn load_config(args: ConfigArgs) -> Result<PipelineConfig, String> {
    let mut cfg = match &args.config {
        Some(p) => PipelineConfig::load(p).map_err(|e| e.to_string())?,
        None => PipelineConfig::default(),
    };
    let i = &mut cfg.inputs;
    for (slot, flag) in [
        (&mut i.metadata, args.metadata),
        (&mut i.boundaries, args.boundaries),
        (&mut i.population, args.population),
        (&mut i.area, args.area),
        (&mut i.covariates, args.covariates),
        (&mut i.regions, args.regions),
    ] {
        if let Some(p) = flag {
            *slot = p;
        }
    }
    if args.aliases.is_some() {
        i.aliases = args.aliases;
    }
    let a = &mut cfg.analysis;
    if let Some(e) = args.epsilon {
        a.epsilon = e;
    }
    if let Some(d) = args.denominator {
        a.denominator = match d.as_str() {
            "foreign_only" => DenominatorMode::ForeignOnly,
            "all_objects" => DenominatorMode::AllObjects,
            other => return Err(format!("unknown denominator {other:?}")),
        };
    }
    if let Some(t) = args.classify_tolerance {
        a.classify_tolerance = t;
    }
    if let Some(ax) = args.correlation_axis {
        a.correlation_axis = ax;
    }
    if let Some(w) = args.workers {
        cfg.workers = w;
    }
    if let Some(o) = args.output_dir {
        cfg.output_dir = o;
    }
    Ok(cfg)
}

fn summarize(report: &RunReport) {
    if let Some(p) = &report.prune {
        println!("lines {} kept {} dropped {}", p.total_lines, p.kept, p.dropped());
    }
    if let Some(g) = &report.geocode {
        println!("geocoded {} unassigned {} rescued {}", g.assigned, g.unassigned, g.epsilon_rescued);
    }
    if let Some(h) = &report.homes {
        println!("users {} homes {}", h.users, h.homes_found);
    }
    for w in &report.world_fits {
        match (&w.fit, &w.error) {
            (Some(f), _) => println!(
                "world {}: beta {:.4} R2 {:.4} n {} ({})",
                w.axis, f.beta, f.r_squared, f.n_points, f.regime
            ),
            (None, Some(e)) => println!("world {}: {e}", w.axis),
            _ => {}
        }
    }
}

fn finish(result: Result<RunReport, PipelineError>) -> ExitCode {
    match result {
        Ok(report) => {
            summarize(&report);
            ExitCode::SUCCESS
        }
        Err(PipelineError::Invalid(problems)) => {
            for p in problems {
                eprintln!("{p}");
            }
            ExitCode::from(1)
        }
        Err(e @ PipelineError::Stage { .. }) => {
            eprintln!("{e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn synth(args: SynthArgs) -> Result<(), String> {
    let mut cfg: SynthConfig = match &args.config {
        Some(p) => {
            let text = std::fs::read_to_string(p).map_err(|e| format!("{}: {e}", p.display()))?;
            toml::from_str(&text).map_err(|e| format!("{}: {e}", p.display()))?
        }
        None => SynthConfig::default(),
    };
    if let Some(s) = args.seed {
        cfg.seed = s;
    }
    if let Some(u) = args.users {
        cfg.n_users = u;
    }
    if let Some(n) = args.noise {
        cfg.noise_sigma = n;
    }
    if let Some(r) = args.non_geotag_rate {
        cfg.non_geotag_rate = r;
    }
    if let Some(r) = args.bad_date_rate {
        cfg.bad_date_rate = r;
    }
    let world = generate_world(&cfg).map_err(|e| e.to_string())?;
    let paths = world.write_files(&args.out).map_err(|e| e.to_string())?;
    let rel = |p: &Path| PathBuf::from(p.file_name().unwrap());
    let mut pc = PipelineConfig::default();
    pc.inputs.metadata = rel(&paths.metadata);
    pc.inputs.boundaries = rel(&paths.boundaries);
    pc.inputs.population = rel(&paths.population);
    pc.inputs.area = rel(&paths.area);
    pc.inputs.covariates = rel(&paths.statics);
    pc.inputs.regions = rel(&paths.regions);
    pc.output_dir = PathBuf::from("out");
    let cfg_path = args.out.join("pipeline.toml");
    std::fs::write(&cfg_path, pc.to_toml()).map_err(|e| e.to_string())?;
    println!(
        "{} lines, {} countries, {} users -> {}",
        world.metadata_lines.len(),
        world.truth.countries.len(),
        world.truth.homes.len(),
        cfg_path.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match cli.command {
        Command::Validate(args) => match load_config(args) {
            Err(e) => {
                eprintln!("{e}");
                ExitCode::from(1)
            }
            Ok(cfg) => {
                let problems = pipeline::validate(&cfg);
                if problems.is_empty() {
                    println!("ok");
                    ExitCode::SUCCESS
                } else {
                    for p in problems {
                        println!("{p}");
                    }
                    ExitCode::from(1)
                }
            }
        },
        Command::Run(args) => match load_config(args) {
            Err(e) => {
                eprintln!("{e}");
                ExitCode::from(1)
            }
            Ok(cfg) => finish(pipeline::run(&cfg)),
        },
        Command::Fit(args) => match load_config(args) {
            Err(e) => {
                eprintln!("{e}");
                ExitCode::from(1)
            }
            Ok(cfg) => finish(pipeline::refit(&cfg)),
        },
        Command::Synth(args) => match synth(args) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("{e}");
                ExitCode::from(1)
            }
        },
        Command::Report { output_dir } => match pipeline::reemit_plots(&output_dir) {
            Ok((report, files)) => {
                summarize(&report);
                for f in files {
                    println!("{}", f.display());
                }
                ExitCode::SUCCESS
            }
            Err(e) => {
                eprintln!("{e}");
                ExitCode::from(2)
            }
        },
    }
}
