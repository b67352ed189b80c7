//! Full cached pipeline on a synthetic world: every stage on disk, a report,
//! and plot-ready tables.
//!
//! Usage: end_to_end [work-dir]

use std::path::PathBuf;

use geoattract::covariates::Axis;
use geoattract::pipeline::{self, PipelineConfig};
use geoattract::synth::{generate_world, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("end_to_end"));
    let world = generate_world(&SynthConfig {
        seed: 7,
        non_geotag_rate: 0.15,
        ..SynthConfig::default()
    })?;
    let paths = world.write_files(&dir.join("inputs"))?;

    let mut cfg = PipelineConfig::default();
    cfg.inputs.metadata = paths.metadata;
    cfg.inputs.boundaries = paths.boundaries;
    cfg.inputs.population = paths.population;
    cfg.inputs.area = paths.area;
    cfg.inputs.covariates = paths.statics;
    cfg.inputs.regions = paths.regions;
    cfg.output_dir = dir.join("out");
    cfg.workers = 2;

    let problems = pipeline::validate(&cfg);
    if !problems.is_empty() {
        for p in problems {
            eprintln!("{p}");
        }
        std::process::exit(1);
    }

    for attempt in ["first", "second"] {
        let report = pipeline::run(&cfg)?;
        let cached = report.runtime.stages.iter().filter(|s| s.cached).count();
        println!("{attempt} run: {cached}/{} stages cached", report.runtime.stages.len());
        if attempt == "second" {
            let fits = report.region_fits(Axis::Population).unwrap();
            for r in &fits.regions {
                if let Some(f) = r.outcome.fit() {
                    println!("  {}: beta {:.4} R2 {:.4} {}", r.region, f.beta, f.r_squared, f.regime);
                }
            }
        }
    }

    let (_, files) = pipeline::reemit_plots(&cfg.output_dir)?;
    for f in files {
        println!("{}", f.display());
    }
    Ok(())
}
