//! Staged batch run: ingest → geocode → home → attractiveness → covariates
//! → fits → correlations, each persisted under its own directory with a
//! checksum manifest so unchanged stages are skipped on rerun.

pub mod config;
pub mod plot;
pub mod report;
pub mod store;
pub mod validate;

use std::collections::BTreeMap;
use std::fmt;
use std::fs::File;
use std::io::BufReader;
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Instant;

use serde::{Deserialize, Serialize};
use serde_json::json;
use thiserror::Error;

pub use config::{AnalysisConfig, ConfigError, InputPaths, PipelineConfig, TableConfig};
pub use plot::emit_plot_data;
pub use report::{Failure, GeocodeStats, ReportMetadata, RunReport, Runtime, StageTiming, WorldFit};
pub use validate::{validate, Problem};

use crate::attractiveness::{compute_attractiveness, normalized_stats, AttractivenessTable, GeocodedRecord};
use crate::covariates::{
    aggregate_regions, join_covariates, load_static_covariates, load_yearly_series, AliasTable, Axis, CovariateSources,
    CovariateTable, JoinReport, RegionAggregate, RegionSpec,
};
use crate::geo::{BoundarySet, GeoIndex, Location};
use crate::home::{ActivityStore, HomeOutcome, HomeStats};
use crate::ingest::{prune_reader, PruneStats};
use crate::scaling::{correlate_fit_quality, filter_fit_inputs, fit_by_region, fit_points, CorrelationResult, RegionFitTable};
use store::{sha256_file, Manifest, MatchKind};

#[derive(Debug, Clone, Error, PartialEq, Eq)]
#[error("stage {stage} failed: {message}")]
pub struct StageError {
    pub stage: String,
    pub message: String,
}

impl StageError {
    pub fn new(stage: &str, message: impl Into<String>) -> Self {
        StageError {
            stage: stage.to_string(),
            message: message.into(),
        }
    }

    pub fn io(stage: &str, path: PathBuf, err: std::io::Error) -> Self {
        Self::new(stage, format!("{}: {err}", path.display()))
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("configuration has {} problem(s)", .0.len())]
    Invalid(Vec<Problem>),
    #[error("{error}")]
    Stage {
        error: StageError,
        /// Everything completed before the failure; also written to disk.
        report: Box<RunReport>,
    },
}

impl PipelineError {
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Invalid(_) => 1,
            PipelineError::Stage { .. } => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Geocode,
    Home,
    Attractiveness,
    Covariates,
    Fits,
    Correlations,
}

impl Stage {
    pub const ALL: [Stage; 7] = [
        Stage::Ingest,
        Stage::Geocode,
        Stage::Home,
        Stage::Attractiveness,
        Stage::Covariates,
        Stage::Fits,
        Stage::Correlations,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Geocode => "geocode",
            Stage::Home => "home",
            Stage::Attractiveness => "attractiveness",
            Stage::Covariates => "covariates",
            Stage::Fits => "fits",
            Stage::Correlations => "correlations",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Stage::ALL
            .into_iter()
            .find(|st| st.name() == s)
            .ok_or_else(|| format!("unknown stage {s:?}"))
    }
}

pub const REPORT_FILE: &str = "report.json";
pub const PLOT_DIR: &str = "plots";

const RECORDS: &str = "records.tsv";
const STATS: &str = "stats.json";
const GEOCODED: &str = "geocoded.tsv";
const ACTIVITY: &str = "activity.tsv";
const HOMES: &str = "homes.tsv";
const COUNTS: &str = "counts.tsv";
const COVARIATES: &str = "covariates.tsv";
const JOIN: &str = "join_report.json";
const NORMALIZED: &str = "attractiveness.tsv";
const FITS: &str = "fits.json";
const CORRELATIONS: &str = "correlations.json";

#[derive(Debug, Clone, Serialize, Deserialize)]
struct FitsFile {
    world: Vec<WorldFit>,
    regions: Vec<RegionFitTable>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CorrelationsFile {
    axis: Axis,
    aggregates: Vec<RegionAggregate>,
    correlations: Vec<CorrelationResult>,
}

/// Config as echoed in reports and stage keys: worker count and output
/// location never influence results.
pub fn config_echo(cfg: &PipelineConfig) -> serde_json::Value {
    let mut v = serde_json::to_value(cfg).expect("config serializes");
    if let Some(o) = v.as_object_mut() {
        o.remove("workers");
        o.remove("output_dir");
    }
    v
}

struct Runner<'a> {
    cfg: &'a PipelineConfig,
    out: PathBuf,
    /// Stages before this one are loaded from disk without key checks.
    start: Stage,
    checksums: BTreeMap<String, String>,
    report: RunReport,
}

struct StageOutput<T> {
    value: T,
    sums: BTreeMap<String, String>,
}

impl<'a> Runner<'a> {
    fn new(cfg: &'a PipelineConfig, start: Stage) -> Self {
        let report = RunReport {
            metadata: ReportMetadata::new(cfg.analysis.denominator, &cfg.tables.static_columns.gdp),
            config: config_echo(cfg),
            input_checksums: BTreeMap::new(),
            prune: None,
            geocode: None,
            homes: None,
            attractiveness: None,
            join: None,
            world_fits: Vec::new(),
            region_fits: Vec::new(),
            correlation_axis: cfg.analysis.correlation_axis,
            aggregation: cfg.analysis.aggregation_modes(),
            region_aggregates: Vec::new(),
            correlations: Vec::new(),
            failure: None,
            runtime: Runtime {
                workers: cfg.workers,
                ..Runtime::default()
            },
        };
        Runner {
            cfg,
            out: cfg.output_dir.clone(),
            start,
            checksums: BTreeMap::new(),
            report,
        }
    }

    fn input(&self, name: &str) -> String {
        self.checksums.get(name).cloned().unwrap_or_default()
    }

    /// Runs or reuses one stage. `compute` writes `files` into the stage
    /// directory; `load` reads them back.
    fn stage<T>(
        &mut self,
        stage: Stage,
        inputs: BTreeMap<String, String>,
        config: serde_json::Value,
        files: &[&str],
        compute: impl FnOnce(&Path) -> Result<T, StageError>,
        load: impl FnOnce(&Path) -> Result<T, StageError>,
    ) -> Result<StageOutput<T>, StageError> {
        let name = stage.name();
        let dir = self.out.join(name);
        let started = Instant::now();
        let manifest = Manifest::new(name, inputs, &config);

        let (value, sealed, cached) = if stage < self.start {
            let old: Manifest = store::read_json(name, &dir.join(store::MANIFEST_FILE))?;
            (load(&dir)?, old, true)
        } else if let Some(old) = manifest.cached(&dir) {
            log::info!("{name}: inputs unchanged, reusing {}", dir.display());
            (load(&dir)?, old, true)
        } else {
            std::fs::create_dir_all(&dir).map_err(|e| StageError::io(name, dir.clone(), e))?;
            let stale = dir.join(store::MANIFEST_FILE);
            if stale.exists() {
                std::fs::remove_file(&stale).map_err(|e| StageError::io(name, stale.clone(), e))?;
            }
            let value = compute(&dir)?;
            (value, manifest.seal(&dir, files)?, false)
        };

        let seconds = started.elapsed().as_secs_f64();
        log::info!("{name}: done in {seconds:.3}s{}", if cached { " (cached)" } else { "" });
        self.report.runtime.stages.push(StageTiming {
            stage: name.to_string(),
            seconds,
            cached,
        });
        let sums = sealed
            .outputs
            .into_iter()
            .map(|(file, sum)| (format!("{name}/{file}"), sum))
            .collect();
        Ok(StageOutput { value, sums })
    }

    fn run(&mut self) -> Result<(), StageError> {
        let cfg = self.cfg;
        for (name, path) in cfg.named_inputs() {
            let sum = sha256_file(path).map_err(|e| StageError::io("inputs", path.to_path_buf(), e))?;
            self.checksums.insert(name.to_string(), sum);
        }
        self.report.input_checksums = self.checksums.clone();

        // ingest
        let ingest = self.stage(
            Stage::Ingest,
            [("metadata".to_string(), self.input("metadata"))].into(),
            json!({ "columns": cfg.columns }),
            &[RECORDS, STATS],
            |dir| {
                let path = &cfg.inputs.metadata;
                let f = File::open(path).map_err(|e| StageError::io("ingest", path.clone(), e))?;
                let (records, stats) = prune_reader(BufReader::with_capacity(1 << 20, f), &cfg.columns)
                    .map_err(|e| StageError::new("ingest", e.to_string()))?;
                store::write_records("ingest", &dir.join(RECORDS), &records)?;
                store::write_json("ingest", &dir.join(STATS), &stats)?;
                Ok((records, stats))
            },
            |dir| {
                Ok((
                    store::read_records("ingest", &dir.join(RECORDS))?,
                    store::read_json::<PruneStats>("ingest", &dir.join(STATS))?,
                ))
            },
        )?;
        let (records, prune) = ingest.value;
        self.report.prune = Some(prune);

        let boundaries = {
            let path = &cfg.inputs.boundaries;
            let text = std::fs::read_to_string(path).map_err(|e| StageError::io("geocode", path.clone(), e))?;
            BoundarySet::from_geojson_str(&text, &cfg.boundary_keys).map_err(|e| StageError::new("geocode", e.to_string()))?
        };
        let universe: Vec<String> = boundaries.codes().map(str::to_string).collect();

        // geocode
        let mut inputs = ingest.sums.clone();
        inputs.insert("boundaries".into(), self.input("boundaries"));
        let eps = cfg.analysis.epsilon;
        let geocode = self.stage(
            Stage::Geocode,
            inputs,
            json!({ "epsilon": eps, "boundary_keys": cfg.boundary_keys }),
            &[GEOCODED, STATS],
            move |dir| {
                let index = GeoIndex::build(boundaries);
                let points: Vec<(f64, f64)> = records.iter().map(|r| (r.lon, r.lat)).collect();
                let locs = index.locate_batch(&points, eps);
                let mut stats = GeocodeStats {
                    records: records.len() as u64,
                    ..GeocodeStats::default()
                };
                let mut out = Vec::with_capacity(records.len());
                for (rec, loc) in records.into_iter().zip(locs) {
                    let (id, kind) = match loc {
                        Location::Inside(id) => (id, MatchKind::Inside),
                        Location::Near(id) => {
                            stats.epsilon_rescued += 1;
                            (id, MatchKind::Near)
                        }
                        Location::Unassigned => {
                            stats.unassigned += 1;
                            continue;
                        }
                    };
                    stats.assigned += 1;
                    let day = rec.day();
                    out.push((
                        GeocodedRecord {
                            object_id: rec.object_id,
                            user_id: rec.user_id,
                            day,
                            country: index.code(id).to_string(),
                        },
                        kind,
                    ));
                }
                store::write_geocoded("geocode", &dir.join(GEOCODED), &out)?;
                store::write_json("geocode", &dir.join(STATS), &stats)?;
                Ok((out.into_iter().map(|(r, _)| r).collect::<Vec<_>>(), stats))
            },
            |dir| {
                Ok((
                    store::read_geocoded("geocode", &dir.join(GEOCODED))?,
                    store::read_json::<GeocodeStats>("geocode", &dir.join(STATS))?,
                ))
            },
        )?;
        let (geocoded, geo_stats) = geocode.value;
        self.report.geocode = Some(geo_stats);

        // home
        let home = self.stage(
            Stage::Home,
            geocode.sums.clone(),
            json!({}),
            &[ACTIVITY, HOMES, STATS],
            |dir| {
                let mut store = ActivityStore::new();
                for r in &geocoded {
                    store.accumulate(&r.user_id, &r.country, r.day.and_hms_opt(0, 0, 0).unwrap());
                }
                let homes = store.infer_all();
                let stats = HomeStats::from_outcomes(homes.values());
                store::write_activity("home", &dir.join(ACTIVITY), &store)?;
                store::write_homes("home", &dir.join(HOMES), &homes)?;
                store::write_json("home", &dir.join(STATS), &stats)?;
                Ok((homes, stats))
            },
            |dir| {
                Ok((
                    store::read_homes("home", &dir.join(HOMES))?,
                    store::read_json::<HomeStats>("home", &dir.join(STATS))?,
                ))
            },
        )?;
        let (homes, home_stats): (BTreeMap<String, HomeOutcome>, HomeStats) = home.value;
        self.report.homes = Some(home_stats);

        // attractiveness
        let mut inputs = geocode.sums.clone();
        inputs.extend(home.sums.clone());
        inputs.insert("boundaries".into(), self.input("boundaries"));
        let denominator = cfg.analysis.denominator;
        let attractiveness = self.stage(
            Stage::Attractiveness,
            inputs,
            json!({ "denominator": denominator }),
            &[COUNTS],
            |dir| {
                let table = compute_attractiveness(&geocoded, &homes, universe.iter().map(String::as_str), denominator)
                    .map_err(|e| StageError::new("attractiveness", e.to_string()))?;
                store::write_attractiveness("attractiveness", &dir.join(COUNTS), &table)?;
                Ok(table)
            },
            |dir| store::read_attractiveness("attractiveness", &dir.join(COUNTS), denominator),
        )?;
        drop(geocoded);

        // covariates
        let regions = load_regions(cfg)?;
        let mut inputs = attractiveness.sums.clone();
        for name in ["population", "area", "covariates", "regions", "aliases", "boundaries"] {
            if let Some(sum) = self.checksums.get(name) {
                inputs.insert(name.into(), sum.clone());
            }
        }
        let raw_table = attractiveness.value;
        let covariates = self.stage(
            Stage::Covariates,
            inputs,
            json!({ "tables": cfg.tables }),
            &[COVARIATES, JOIN, NORMALIZED],
            |dir| {
                let (table, join) = join_inputs(cfg, &universe, &regions)?;
                let mut attr = raw_table;
                normalized_stats(&mut attr, &table);
                store::write_covariates("covariates", &dir.join(COVARIATES), &table)?;
                store::write_json("covariates", &dir.join(JOIN), &join)?;
                store::write_attractiveness("covariates", &dir.join(NORMALIZED), &attr)?;
                Ok((table, join, attr))
            },
            |dir| {
                Ok((
                    store::read_covariates("covariates", &dir.join(COVARIATES))?,
                    store::read_json::<JoinReport>("covariates", &dir.join(JOIN))?,
                    store::read_attractiveness("covariates", &dir.join(NORMALIZED), denominator)?,
                ))
            },
        )?;
        let (cov_table, join, attr) = covariates.value;
        self.report.metadata.gdp_column = join.gdp_column.clone();
        self.report.metadata.denominator = attr.denominator;
        self.report.join = Some(join);

        // fits
        let mut inputs = covariates.sums.clone();
        inputs.insert("regions".into(), self.input("regions"));
        let tol = cfg.analysis.classify_tolerance;
        let fits = self.stage(
            Stage::Fits,
            inputs,
            json!({ "classify_tolerance": tol }),
            &[FITS],
            |dir| {
                let file = compute_fits(&attr, &cov_table, &regions, tol);
                store::write_json("fits", &dir.join(FITS), &file)?;
                Ok(file)
            },
            |dir| store::read_json::<FitsFile>("fits", &dir.join(FITS)),
        )?;
        self.report.attractiveness = Some(attr);
        let FitsFile { world, regions: region_fits } = fits.value;
        self.report.world_fits = world;
        self.report.region_fits = region_fits;

        // correlations
        let mut inputs = fits.sums.clone();
        inputs.extend(covariates.sums.clone());
        inputs.insert("regions".into(), self.input("regions"));
        let axis = cfg.analysis.correlation_axis;
        let modes = cfg.analysis.aggregation_modes();
        let region_fits = self.report.region_fits.clone();
        let corr = self.stage(
            Stage::Correlations,
            inputs,
            json!({ "axis": axis, "aggregation": modes }),
            &[CORRELATIONS],
            |dir| {
                let aggregates = aggregate_regions(&cov_table, &regions, &modes);
                let correlations = match region_fits.iter().find(|t| t.axis == axis) {
                    Some(t) => correlate_fit_quality(t, &aggregates),
                    None => Vec::new(),
                };
                let file = CorrelationsFile {
                    axis,
                    aggregates,
                    correlations,
                };
                store::write_json("correlations", &dir.join(CORRELATIONS), &file)?;
                Ok(file)
            },
            |dir| store::read_json::<CorrelationsFile>("correlations", &dir.join(CORRELATIONS)),
        )?;
        self.report.region_aggregates = corr.value.aggregates;
        self.report.correlations = corr.value.correlations;
        Ok(())
    }
}

fn load_regions(cfg: &PipelineConfig) -> Result<RegionSpec, StageError> {
    let err = |e: String| StageError::new("covariates", e);
    let aliases = load_aliases(cfg)?;
    let f = File::open(&cfg.inputs.regions).map_err(|e| StageError::io("covariates", cfg.inputs.regions.clone(), e))?;
    RegionSpec::load(f, &cfg.tables.format(), &cfg.tables.region_column, &aliases).map_err(|e| err(e.to_string()))
}

fn load_aliases(cfg: &PipelineConfig) -> Result<AliasTable, StageError> {
    match &cfg.inputs.aliases {
        None => Ok(AliasTable::default()),
        Some(p) => {
            let f = File::open(p).map_err(|e| StageError::io("covariates", p.clone(), e))?;
            AliasTable::load(f, cfg.tables.delimiter).map_err(|e| StageError::new("covariates", e.to_string()))
        }
    }
}

fn join_inputs(cfg: &PipelineConfig, universe: &[String], regions: &RegionSpec) -> Result<(CovariateTable, JoinReport), StageError> {
    let err = |e: crate::covariates::CovariateError| StageError::new("covariates", e.to_string());
    let open = |p: &PathBuf| File::open(p).map_err(|e| StageError::io("covariates", p.clone(), e));
    let t = &cfg.tables;
    let fmt = t.format();
    let sources = CovariateSources {
        population: load_yearly_series(open(&cfg.inputs.population)?, &fmt, "population", t.first_year, t.last_year)
            .map_err(err)?,
        area: load_yearly_series(open(&cfg.inputs.area)?, &fmt, "area", t.first_year, t.last_year).map_err(err)?,
        statics: load_static_covariates(open(&cfg.inputs.covariates)?, &fmt, &t.static_columns, "covariates")
            .map_err(err)?,
        gdp_column: t.static_columns.gdp.clone(),
    };
    let aliases = load_aliases(cfg)?;
    join_covariates(universe.iter().map(String::as_str), &sources, regions, &aliases).map_err(err)
}

fn compute_fits(attr: &AttractivenessTable, cov: &CovariateTable, regions: &RegionSpec, tol: f64) -> FitsFile {
    let world = Axis::BOTH
        .into_iter()
        .map(|axis| {
            let (points, exclusions) = filter_fit_inputs(attr, cov, axis);
            let (fit, error) = match fit_points(&points, tol) {
                Ok(f) => (Some(f), None),
                Err(e) => (None, Some(e)),
            };
            WorldFit {
                axis,
                fit,
                error,
                exclusions,
                points,
            }
        })
        .collect();
    let regions = Axis::BOTH
        .into_iter()
        .map(|axis| fit_by_region(attr, cov, regions, axis, tol))
        .collect();
    FitsFile { world, regions }
}

fn execute(cfg: &PipelineConfig, start: Stage) -> Result<RunReport, PipelineError> {
    let problems = validate(cfg);
    if !problems.is_empty() {
        return Err(PipelineError::Invalid(problems));
    }
    let started = Instant::now();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| PipelineError::Invalid(vec![Problem::InvalidSetting {
            name: "workers".into(),
            message: e.to_string(),
        }]))?;

    let mut runner = Runner::new(cfg, start);
    let outcome = std::fs::create_dir_all(&runner.out)
        .map_err(|e| StageError::io("setup", runner.out.clone(), e))
        .and_then(|_| pool.install(|| runner.run()));
    runner.report.runtime.total_seconds = started.elapsed().as_secs_f64();
    let mut report = runner.report;

    let finish = |report: &RunReport| -> Result<(), StageError> {
        store::write_json("report", &cfg.output_dir.join(REPORT_FILE), report)?;
        if report.failure.is_none() {
            emit_plot_data(report, &cfg.output_dir.join(PLOT_DIR))?;
        }
        Ok(())
    };
    match outcome {
        Ok(()) => match finish(&report) {
            Ok(()) => Ok(report),
            Err(error) => Err(PipelineError::Stage {
                error,
                report: Box::new(report),
            }),
        },
        Err(error) => {
            log::error!("{error}");
            report.failure = Some(Failure {
                stage: error.stage.clone(),
                message: error.message.clone(),
            });
            if let Err(e) = finish(&report) {
                log::error!("could not write partial report: {e}");
            }
            Err(PipelineError::Stage {
                error,
                report: Box::new(report),
            })
        }
    }
}

/// Runs every stage, reusing persisted ones whose inputs are unchanged,
/// then writes `report.json` and the plot-data files.
pub fn run(cfg: &PipelineConfig) -> Result<RunReport, PipelineError> {
    execute(cfg, Stage::Ingest)
}

/// Re-runs the fit and correlation stages from the persisted attractiveness
/// and covariate tables of a previous run.
pub fn refit(cfg: &PipelineConfig) -> Result<RunReport, PipelineError> {
    execute(cfg, Stage::Fits)
}

/// Reads `report.json` from a previous run and writes the plot data again.
pub fn reemit_plots(output_dir: &Path) -> Result<(RunReport, Vec<PathBuf>), StageError> {
    let report: RunReport = store::read_json("report", &output_dir.join(REPORT_FILE))?;
    let files = emit_plot_data(&report, &output_dir.join(PLOT_DIR))?;
    Ok((report, files))
}
