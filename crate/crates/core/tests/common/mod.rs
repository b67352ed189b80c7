#![allow(dead_code)]

use std::collections::BTreeMap;
use std::path::Path;

use geoattract::attractiveness::{compute_attractiveness, normalized_stats, AttractivenessTable, DenominatorMode, GeocodedRecord};
use geoattract::covariates::{
    join_covariates, load_static_covariates, load_yearly_series, AliasTable, CovariateSources, CovariateTable, RegionSpec,
    StaticColumns, TableFormat,
};
use geoattract::geo::{GeoIndex, DEFAULT_EPSILON};
use geoattract::home::{ActivityStore, HomeOutcome};
use geoattract::ingest::{prune_batch_parallel, ColumnMap, PruneStats};
use geoattract::pipeline::PipelineConfig;
use geoattract::synth::{SynthPaths, SynthWorld};

/// Every stage of the pipeline, run in memory on a synthetic world.
pub struct InMemoryRun {
    pub prune: PruneStats,
    pub geocoded: Vec<GeocodedRecord>,
    pub activity: ActivityStore,
    pub homes: BTreeMap<String, HomeOutcome>,
    pub table: AttractivenessTable,
    pub covariates: CovariateTable,
    pub regions: RegionSpec,
}

pub fn run_in_memory(world: &SynthWorld) -> InMemoryRun {
    let (records, prune) = prune_batch_parallel(&world.metadata_lines, &ColumnMap::default());
    let index = GeoIndex::build(world.boundaries.clone());
    let points: Vec<(f64, f64)> = records.iter().map(|r| (r.lon, r.lat)).collect();
    let locs = index.locate_batch(&points, DEFAULT_EPSILON);
    let mut activity = ActivityStore::new();
    let mut geocoded = Vec::with_capacity(records.len());
    for (r, loc) in records.iter().zip(locs) {
        if let Some(id) = loc.country() {
            let country = index.code(id).to_string();
            activity.accumulate(&r.user_id, &country, r.taken_at);
            geocoded.push(GeocodedRecord {
                object_id: r.object_id.clone(),
                user_id: r.user_id.clone(),
                day: r.day(),
                country,
            });
        }
    }
    let homes = activity.infer_all();
    let mut table = compute_attractiveness(&geocoded, &homes, world.boundaries.codes(), DenominatorMode::ForeignOnly).unwrap();

    let fmt = TableFormat::default();
    let sources = CovariateSources {
        population: load_yearly_series(world.population_table.as_bytes(), &fmt, "population", 2004, 2014).unwrap(),
        area: load_yearly_series(world.area_table.as_bytes(), &fmt, "area", 2004, 2014).unwrap(),
        statics: load_static_covariates(world.static_table.as_bytes(), &fmt, &StaticColumns::default(), "static").unwrap(),
        gdp_column: "gdp".into(),
    };
    let aliases = AliasTable::default();
    let regions = RegionSpec::load(world.region_table.as_bytes(), &fmt, "region", &aliases).unwrap();
    let (covariates, _) = join_covariates(world.boundaries.codes(), &sources, &regions, &aliases).unwrap();
    normalized_stats(&mut table, &covariates);
    InMemoryRun {
        prune,
        geocoded,
        activity,
        homes,
        table,
        covariates,
        regions,
    }
}

/// Pipeline config pointing at files written by `SynthWorld::write_files`.
pub fn config_for(paths: &SynthPaths, out: &Path, workers: usize) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.inputs.metadata = paths.metadata.clone();
    cfg.inputs.boundaries = paths.boundaries.clone();
    cfg.inputs.population = paths.population.clone();
    cfg.inputs.area = paths.area.clone();
    cfg.inputs.covariates = paths.statics.clone();
    cfg.inputs.regions = paths.regions.clone();
    cfg.output_dir = out.to_path_buf();
    cfg.workers = workers;
    cfg
}

/// Relative path → bytes for every file under `root`.
pub fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, std::fs::read(&p).unwrap());
            }
        }
    }
    out
}
