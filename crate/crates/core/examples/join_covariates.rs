//! Average yearly covariates, resolve country names through aliases, and
//! join everything onto the known country list.

use std::collections::BTreeMap;

use geoattract::covariates::{
    aggregate_regions, join_covariates, load_static_covariates, load_yearly_series, AliasTable, Axis, CovariateSources,
    RegionSpec, StaticColumns, TableFormat,
};

const POPULATION: &str = "\
country,2003,2004,2005,2006
FRA,60.1e6,61.0e6,,63.0e6
Italia,57e6,57.5e6,58e6,58.5e6
ESP,,,,
Atlantis,1,1,1,1
";
const AREA: &str = "country,2004\nFRA,551695\nITA,301340\nESP,505990\nPRT,0\n";
const STATIC: &str = "\
country,gdp,density,coastline,urban_population
FRA,2.8e12,118,4853,50.1e6
ITA,2.1e12,200,7600,40.2e6
ESP,1.4e12,93,4964,36.5e6
";
const REGIONS: &str = "country,region\nFRA,West\nESP,South\nItalia,South\n";
const ALIASES: &str = "alias,code\nItalia,ITA\n";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fmt = TableFormat::default();
    let aliases = AliasTable::load(ALIASES.as_bytes(), ',')?;
    let sources = CovariateSources {
        population: load_yearly_series(POPULATION.as_bytes(), &fmt, "population", 2004, 2014)?,
        area: load_yearly_series(AREA.as_bytes(), &fmt, "area", 2004, 2014)?,
        statics: load_static_covariates(STATIC.as_bytes(), &fmt, &StaticColumns::default(), "static")?,
        gdp_column: "gdp".into(),
    };
    let regions = RegionSpec::load(REGIONS.as_bytes(), &fmt, "region", &aliases)?;
    let (table, report) = join_covariates(["ESP", "FRA", "ITA", "PRT"], &sources, &regions, &aliases)?;

    for row in table.rows() {
        println!(
            "{} population {:?} area {:?} gdp {:?} region {:?}",
            row.country_code, row.population_avg, row.area_avg, row.gdp, row.region
        );
    }
    println!("unmatched keys: {:?}", report.unmatched_keys);
    println!("not in any region: {:?}", report.region_uncovered);
    for axis in Axis::BOTH {
        for d in report.dropped(axis) {
            println!("dropped from {axis} fit: {} ({:?})", d.country_code, d.reason);
        }
    }
    for agg in aggregate_regions(&table, &regions, &BTreeMap::new()) {
        println!("{}: {:?}", agg.region, agg.values);
    }
    Ok(())
}
