//! Flat-file intermediates with checksum manifests.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use chrono::{NaiveDate, NaiveDateTime};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::StageError;
use crate::attractiveness::{AttractivenessTable, CountryAttractiveness, CovariateStatus, DenominatorMode, GeocodedRecord};
use crate::covariates::{CountryCovariates, CovariateTable};
use crate::home::{ActivityStore, HomeOutcome};
use crate::ingest::{MediaRecord, CANONICAL_TIME_FORMAT};

pub fn sha256_file(path: &Path) -> std::io::Result<String> {
    let mut f = BufReader::new(File::open(path)?);
    let mut h = Sha256::new();
    let mut buf = vec![0u8; 1 << 16];
    loop {
        let n = f.read(&mut buf)?;
        if n == 0 {
            break;
        }
        h.update(&buf[..n]);
    }
    Ok(hex::encode(h.finalize()))
}

pub fn sha256_bytes(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Sidecar written next to a stage's outputs.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Manifest {
    pub stage: String,
    /// Digest over every upstream checksum and the config that affects the stage.
    pub input_key: String,
    pub inputs: BTreeMap<String, String>,
    pub outputs: BTreeMap<String, String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

impl Manifest {
    pub fn new(stage: &str, inputs: BTreeMap<String, String>, config: &serde_json::Value) -> Self {
        let mut h = Sha256::new();
        h.update(stage.as_bytes());
        for (k, v) in &inputs {
            h.update(k.as_bytes());
            h.update([0]);
            h.update(v.as_bytes());
            h.update([0]);
        }
        h.update(config.to_string().as_bytes());
        Manifest {
            stage: stage.to_string(),
            input_key: hex::encode(h.finalize()),
            inputs,
            outputs: BTreeMap::new(),
        }
    }

    /// Previously written manifest with the same key whose outputs are intact.
    pub fn cached(&self, dir: &Path) -> Option<Manifest> {
        let text = std::fs::read_to_string(dir.join(MANIFEST_FILE)).ok()?;
        let old: Manifest = serde_json::from_str(&text).ok()?;
        if old.input_key != self.input_key {
            return None;
        }
        for (file, sum) in &old.outputs {
            if sha256_file(&dir.join(file)).ok()? != *sum {
                return None;
            }
        }
        Some(old)
    }

    pub fn seal(mut self, dir: &Path, files: &[&str]) -> Result<Manifest, StageError> {
        for f in files {
            let sum = sha256_file(&dir.join(f)).map_err(|e| StageError::io(&self.stage, dir.join(f), e))?;
            self.outputs.insert(f.to_string(), sum);
        }
        write_json(&self.stage.clone(), &dir.join(MANIFEST_FILE), &self)?;
        Ok(self)
    }
}

pub fn write_json<T: Serialize>(stage: &str, path: &Path, value: &T) -> Result<(), StageError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| StageError::new(stage, e.to_string()))?;
    text.push('\n');
    std::fs::write(path, text).map_err(|e| StageError::io(stage, path.to_path_buf(), e))
}

pub fn read_json<T: DeserializeOwned>(stage: &str, path: &Path) -> Result<T, StageError> {
    let text = std::fs::read_to_string(path).map_err(|e| StageError::io(stage, path.to_path_buf(), e))?;
    serde_json::from_str(&text).map_err(|e| StageError::new(stage, format!("{}: {e}", path.display())))
}

fn tsv_writer(stage: &str, path: &Path) -> Result<csv::Writer<BufWriter<File>>, StageError> {
    let f = File::create(path).map_err(|e| StageError::io(stage, path.to_path_buf(), e))?;
    Ok(csv::WriterBuilder::new()
        .delimiter(b'\t')
        .from_writer(BufWriter::with_capacity(1 << 20, f)))
}

fn tsv_reader(stage: &str, path: &Path) -> Result<csv::Reader<BufReader<File>>, StageError> {
    let f = File::open(path).map_err(|e| StageError::io(stage, path.to_path_buf(), e))?;
    Ok(csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .from_reader(BufReader::with_capacity(1 << 20, f)))
}

/// Writes rows as a headed TSV. An empty slice yields a header-only file.
pub fn write_rows<T: Serialize>(stage: &str, path: &Path, header: &[&str], rows: &[T]) -> Result<(), StageError> {
    let csv_err = |e: csv::Error| StageError::new(stage, format!("{}: {e}", path.display()));
    let mut w = tsv_writer(stage, path)?;
    if rows.is_empty() {
        w.write_record(header).map_err(csv_err)?;
    } else {
        for r in rows {
            w.serialize(r).map_err(csv_err)?;
        }
    }
    let mut inner = w.into_inner().map_err(|e| StageError::new(stage, e.to_string()))?;
    inner.flush().map_err(|e| StageError::io(stage, path.to_path_buf(), e))
}

pub fn read_rows<T: DeserializeOwned>(stage: &str, path: &Path) -> Result<Vec<T>, StageError> {
    let mut r = tsv_reader(stage, path)?;
    r.deserialize()
        .map(|row| row.map_err(|e| StageError::new(stage, format!("{}: {e}", path.display()))))
        .collect()
}

// --- ingest ---------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct RecordRow {
    object_id: String,
    user_id: String,
    taken_at: String,
    lon: f64,
    lat: f64,
}

pub const RECORD_HEADER: &[&str] = &["object_id", "user_id", "taken_at", "lon", "lat"];

pub fn write_records(stage: &str, path: &Path, records: &[MediaRecord]) -> Result<(), StageError> {
    let rows: Vec<RecordRow> = records
        .iter()
        .map(|r| RecordRow {
            object_id: r.object_id.clone(),
            user_id: r.user_id.clone(),
            taken_at: r.taken_at.format(CANONICAL_TIME_FORMAT).to_string(),
            lon: r.lon,
            lat: r.lat,
        })
        .collect();
    write_rows(stage, path, RECORD_HEADER, &rows)
}

pub fn read_records(stage: &str, path: &Path) -> Result<Vec<MediaRecord>, StageError> {
    read_rows::<RecordRow>(stage, path)?
        .into_iter()
        .map(|r| {
            let taken_at = NaiveDateTime::parse_from_str(&r.taken_at, CANONICAL_TIME_FORMAT)
                .map_err(|e| StageError::new(stage, format!("{}: {e}", path.display())))?;
            Ok(MediaRecord {
                object_id: r.object_id,
                user_id: r.user_id,
                taken_at,
                lon: r.lon,
                lat: r.lat,
            })
        })
        .collect()
}

// --- geocode --------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatchKind {
    Inside,
    Near,
}

#[derive(Debug, Serialize, Deserialize)]
struct GeocodedRow {
    object_id: String,
    user_id: String,
    day: NaiveDate,
    country: String,
    #[serde(rename = "match")]
    kind: MatchKind,
}

pub const GEOCODED_HEADER: &[&str] = &["object_id", "user_id", "day", "country", "match"];

pub fn write_geocoded(stage: &str, path: &Path, records: &[(GeocodedRecord, MatchKind)]) -> Result<(), StageError> {
    let rows: Vec<GeocodedRow> = records
        .iter()
        .map(|(r, k)| GeocodedRow {
            object_id: r.object_id.clone(),
            user_id: r.user_id.clone(),
            day: r.day,
            country: r.country.clone(),
            kind: *k,
        })
        .collect();
    write_rows(stage, path, GEOCODED_HEADER, &rows)
}

pub fn read_geocoded(stage: &str, path: &Path) -> Result<Vec<GeocodedRecord>, StageError> {
    Ok(read_rows::<GeocodedRow>(stage, path)?
        .into_iter()
        .map(|r| GeocodedRecord {
            object_id: r.object_id,
            user_id: r.user_id,
            day: r.day,
            country: r.country,
        })
        .collect())
}

// --- home -----------------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct ActivityRow {
    user_id: String,
    country: String,
    objects: u64,
    days: u64,
}

pub const ACTIVITY_HEADER: &[&str] = &["user_id", "country", "objects", "days"];

pub fn write_activity(stage: &str, path: &Path, store: &ActivityStore) -> Result<(), StageError> {
    let rows: Vec<ActivityRow> = store
        .users()
        .flat_map(|(u, act)| {
            act.countries.iter().map(move |(c, a)| ActivityRow {
                user_id: u.to_string(),
                country: c.clone(),
                objects: a.object_count,
                days: a.day_count(),
            })
        })
        .collect();
    write_rows(stage, path, ACTIVITY_HEADER, &rows)
}

#[derive(Debug, Serialize, Deserialize)]
struct HomeRow {
    user_id: String,
    outcome: String,
    country: String,
    reason: String,
}

pub const HOME_HEADER: &[&str] = &["user_id", "outcome", "country", "reason"];

pub fn write_homes(stage: &str, path: &Path, homes: &BTreeMap<String, HomeOutcome>) -> Result<(), StageError> {
    let rows: Vec<HomeRow> = homes
        .iter()
        .map(|(u, o)| match o {
            HomeOutcome::Home(c) => HomeRow {
                user_id: u.clone(),
                outcome: "home".into(),
                country: c.clone(),
                reason: String::new(),
            },
            HomeOutcome::Undetermined(r) => HomeRow {
                user_id: u.clone(),
                outcome: "undetermined".into(),
                country: String::new(),
                reason: r.to_string(),
            },
        })
        .collect();
    write_rows(stage, path, HOME_HEADER, &rows)
}

pub fn read_homes(stage: &str, path: &Path) -> Result<BTreeMap<String, HomeOutcome>, StageError> {
    read_rows::<HomeRow>(stage, path)?
        .into_iter()
        .map(|r| {
            let outcome = match r.outcome.as_str() {
                "home" => HomeOutcome::Home(r.country),
                "undetermined" => HomeOutcome::Undetermined(r.reason.parse().map_err(|e: String| StageError::new(stage, e))?),
                other => return Err(StageError::new(stage, format!("unknown outcome {other:?}"))),
            };
            Ok((r.user_id, outcome))
        })
        .collect()
}

// --- attractiveness -------------------------------------------------------

#[derive(Debug, Serialize, Deserialize)]
struct AttractivenessRow {
    country: String,
    foreign_object_count: u64,
    foreign_user_count: u64,
    total_object_count: u64,
    total_user_count: u64,
    fraction_of_total: Option<f64>,
    users_per_resident: Option<f64>,
    objects_per_km2: Option<f64>,
    objects_per_user: Option<f64>,
    denominator: DenominatorMode,
    population: CovariateStatus,
    area: CovariateStatus,
}

pub const ATTRACTIVENESS_HEADER: &[&str] = &[
    "country",
    "foreign_object_count",
    "foreign_user_count",
    "total_object_count",
    "total_user_count",
    "fraction_of_total",
    "users_per_resident",
    "objects_per_km2",
    "objects_per_user",
    "denominator",
    "population",
    "area",
];

pub fn write_attractiveness(stage: &str, path: &Path, table: &AttractivenessTable) -> Result<(), StageError> {
    let rows: Vec<AttractivenessRow> = table
        .rows
        .iter()
        .map(|r| AttractivenessRow {
            country: r.country_code.clone(),
            foreign_object_count: r.foreign_object_count,
            foreign_user_count: r.foreign_user_count,
            total_object_count: r.total_object_count,
            total_user_count: r.total_user_count,
            fraction_of_total: r.fraction_of_total,
            users_per_resident: r.users_per_resident,
            objects_per_km2: r.objects_per_km2,
            objects_per_user: r.objects_per_user,
            denominator: table.denominator,
            population: r.population_status,
            area: r.area_status,
        })
        .collect();
    write_rows(stage, path, ATTRACTIVENESS_HEADER, &rows)
}

/// Reads a persisted attractiveness table. An empty file carries no
/// denominator column value; `fallback` fills it.
pub fn read_attractiveness(stage: &str, path: &Path, fallback: DenominatorMode) -> Result<AttractivenessTable, StageError> {
    let rows = read_rows::<AttractivenessRow>(stage, path)?;
    let denominator = rows.first().map(|r| r.denominator).unwrap_or(fallback);
    let mut rows: Vec<CountryAttractiveness> = rows
        .into_iter()
        .map(|r| CountryAttractiveness {
            country_code: r.country,
            foreign_object_count: r.foreign_object_count,
            foreign_user_count: r.foreign_user_count,
            total_object_count: r.total_object_count,
            total_user_count: r.total_user_count,
            fraction_of_total: r.fraction_of_total,
            users_per_resident: r.users_per_resident,
            objects_per_km2: r.objects_per_km2,
            objects_per_user: r.objects_per_user,
            population_status: r.population,
            area_status: r.area,
        })
        .collect();
    rows.sort_by(|a, b| a.country_code.cmp(&b.country_code));
    Ok(AttractivenessTable { denominator, rows })
}

// --- covariates -----------------------------------------------------------

pub const COVARIATE_HEADER: &[&str] = &[
    "country_code",
    "population_avg",
    "area_avg",
    "gdp",
    "density",
    "coastline",
    "urban_population",
    "region",
];

pub fn write_covariates(stage: &str, path: &Path, table: &CovariateTable) -> Result<(), StageError> {
    let rows: Vec<&CountryCovariates> = table.rows().collect();
    write_rows(stage, path, COVARIATE_HEADER, &rows)
}

pub fn read_covariates(stage: &str, path: &Path) -> Result<CovariateTable, StageError> {
    Ok(CovariateTable::from_rows(read_rows::<CountryCovariates>(stage, path)?))
}

pub fn stage_dir(root: &Path, stage: &str) -> PathBuf {
    root.join(stage)
}
