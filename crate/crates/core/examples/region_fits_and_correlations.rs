//! Per-region fits on a synthetic world, then correlation of fit quality
//! with aggregated regional covariates.
//!
//! Geocoding is skipped here: the planted events and homes are used directly.

use std::collections::BTreeMap;

use geoattract::attractiveness::{compute_attractiveness, normalized_stats, DenominatorMode, GeocodedRecord};
use geoattract::covariates::{
    aggregate_regions, join_covariates, load_static_covariates, load_yearly_series, AliasTable, Axis, CovariateSources,
    RegionSpec, StaticColumns, TableFormat,
};
use geoattract::home::HomeOutcome;
use geoattract::scaling::{correlate_fit_quality, fit_by_region};
use geoattract::synth::{generate_world, PlantedRegion, SynthConfig};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let config = SynthConfig {
        seed: 3,
        noise_sigma: 0.3,
        n_users: 800,
        regions: [0.6, 0.8, 1.0, 1.2, 1.4]
            .iter()
            .enumerate()
            .map(|(i, &beta)| PlantedRegion {
                name: format!("R{i}"),
                countries: 15,
                beta,
            })
            .collect(),
        ..SynthConfig::default()
    };
    let world = generate_world(&config)?;
    let truth = &world.truth;

    let records: Vec<GeocodedRecord> = truth
        .events
        .iter()
        .map(|e| GeocodedRecord {
            object_id: e.object_id.clone(),
            user_id: e.user_id.clone(),
            day: e.taken_at.date(),
            country: e.country.clone(),
        })
        .collect();
    let homes: BTreeMap<String, HomeOutcome> =
        truth.homes.iter().map(|(u, c)| (u.clone(), HomeOutcome::Home(c.clone()))).collect();
    let mut table = compute_attractiveness(&records, &homes, world.boundaries.codes(), DenominatorMode::ForeignOnly)?;

    let fmt = TableFormat::default();
    let sources = CovariateSources {
        population: load_yearly_series(world.population_table.as_bytes(), &fmt, "population", 2004, 2014)?,
        area: load_yearly_series(world.area_table.as_bytes(), &fmt, "area", 2004, 2014)?,
        statics: load_static_covariates(world.static_table.as_bytes(), &fmt, &StaticColumns::default(), "static")?,
        gdp_column: "gdp".into(),
    };
    let aliases = AliasTable::default();
    let regions = RegionSpec::load(world.region_table.as_bytes(), &fmt, "region", &aliases)?;
    let (covariates, _) = join_covariates(world.boundaries.codes(), &sources, &regions, &aliases)?;
    normalized_stats(&mut table, &covariates);

    let fits = fit_by_region(&table, &covariates, &regions, Axis::Population, 0.05);
    for r in &fits.regions {
        match r.outcome.fit() {
            Some(f) => println!(
                "{}: planted {:.2} fitted {:.3} R2 {:.3} ({} countries)",
                r.region, truth.region_betas[&r.region], f.beta, f.r_squared, r.country_count
            ),
            None => println!("{}: {:?}", r.region, r.outcome),
        }
    }

    let aggregates = aggregate_regions(&covariates, &regions, &BTreeMap::new());
    for c in correlate_fit_quality(&fits, &aggregates) {
        match c.r {
            Some(r) => println!("corr(R2, {}) = {r:.3} over {} regions", c.variable, c.n),
            None => println!("corr(R2, {}) unavailable: {:?}", c.variable, c.error),
        }
    }
    Ok(())
}
