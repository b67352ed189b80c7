//! Generate a synthetic world with planted power laws and write it to disk.
//!
//! Usage: synth_world [output-dir]

use std::path::PathBuf;

use geoattract::synth::{generate_world, LineLabel, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = SynthConfig {
        seed: 42,
        non_geotag_rate: 0.1,
        bad_date_rate: 0.02,
        ..SynthConfig::default()
    };
    let world = generate_world(&config)?;
    let truth = &world.truth;

    let count = |f: fn(&LineLabel) -> bool| truth.labels.iter().filter(|l| f(l)).count();
    println!(
        "{} lines: {} events, {} without coordinates, {} with bad dates",
        world.metadata_lines.len(),
        count(|l| matches!(l, LineLabel::Event(_))),
        count(|l| matches!(l, LineLabel::NotGeotagged)),
        count(|l| matches!(l, LineLabel::BadDate)),
    );
    for (region, beta) in &truth.region_betas {
        println!("{region}: beta {beta} ln(a) {:.3}", truth.region_log_intercepts[region]);
    }
    for c in truth.countries.iter().take(5) {
        println!("{} {} population {:.0} foreign objects {}", c.code, c.region, c.population, c.foreign_objects);
    }

    let dir = std::env::args().nth(1).map(PathBuf::from).unwrap_or_else(|| std::env::temp_dir().join("synth_world"));
    let paths = world.write_files(&dir)?;
    println!("wrote {}", paths.metadata.parent().unwrap().display());
    Ok(())
}
