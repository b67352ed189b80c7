//! Per-country attractiveness counts and normalized statistics.
//!
//! Attractiveness of a country is the number of objects created there by
//! users whose inferred home is another country. Totals over all users
//! (including undetermined ones) are kept alongside for the descriptive
//! statistics.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::covariates::CovariateTable;
use crate::home::HomeOutcome;

/// One reverse-geocoded object.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeocodedRecord {
    pub object_id: String,
    pub user_id: String,
    pub day: NaiveDate,
    pub country: String,
}

/// Denominator of `fraction_of_total`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DenominatorMode {
    /// Σ foreign objects over all countries.
    #[default]
    ForeignOnly,
    /// Σ all objects over all countries.
    AllObjects,
}

impl fmt::Display for DenominatorMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DenominatorMode::ForeignOnly => "foreign_only",
            DenominatorMode::AllObjects => "all_objects",
        })
    }
}

/// Availability of a normalizing covariate for one country.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CovariateStatus {
    #[default]
    Unchecked,
    Present,
    Missing,
    NonPositive,
}

impl fmt::Display for CovariateStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CovariateStatus::Unchecked => "unchecked",
            CovariateStatus::Present => "present",
            CovariateStatus::Missing => "missing",
            CovariateStatus::NonPositive => "non_positive",
        })
    }
}

impl FromStr for CovariateStatus {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Ok(match s {
            "unchecked" => CovariateStatus::Unchecked,
            "present" => CovariateStatus::Present,
            "missing" => CovariateStatus::Missing,
            "non_positive" => CovariateStatus::NonPositive,
            other => return Err(format!("unknown covariate status {other:?}")),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountryAttractiveness {
    pub country_code: String,
    pub foreign_object_count: u64,
    pub foreign_user_count: u64,
    pub total_object_count: u64,
    pub total_user_count: u64,
    pub fraction_of_total: Option<f64>,
    pub users_per_resident: Option<f64>,
    pub objects_per_km2: Option<f64>,
    pub objects_per_user: Option<f64>,
    pub population_status: CovariateStatus,
    pub area_status: CovariateStatus,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct AttractivenessTable {
    pub denominator: DenominatorMode,
    pub rows: Vec<CountryAttractiveness>,
}

impl AttractivenessTable {
    pub fn get(&self, code: &str) -> Option<&CountryAttractiveness> {
        self.rows
            .binary_search_by(|r| r.country_code.as_str().cmp(code))
            .ok()
            .map(|i| &self.rows[i])
    }

    pub fn total_foreign_objects(&self) -> u64 {
        self.rows.iter().map(|r| r.foreign_object_count).sum()
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum AttractivenessError {
    #[error("record {object_id:?} belongs to user {user_id:?} who has no home assignment")]
    UnknownUser { object_id: String, user_id: String },
    #[error("unknown metric {0:?}")]
    UnknownMetric(String),
    #[error("k must be at least 1")]
    ZeroK,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct CountryCounts {
    foreign_objects: u64,
    total_objects: u64,
    foreign_users: BTreeSet<String>,
    users: BTreeSet<String>,
}

/// Partial per-country tallies; merging is associative and commutative.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
struct Tally(BTreeMap<String, CountryCounts>);

impl Tally {
    fn add(&mut self, rec: &GeocodedRecord, home: &HomeOutcome) {
        let c = self.0.entry(rec.country.clone()).or_default();
        c.total_objects += 1;
        if !c.users.contains(&rec.user_id) {
            c.users.insert(rec.user_id.clone());
        }
        if matches!(home, HomeOutcome::Home(h) if *h != rec.country) {
            c.foreign_objects += 1;
            if !c.foreign_users.contains(&rec.user_id) {
                c.foreign_users.insert(rec.user_id.clone());
            }
        }
    }

    fn merge(mut self, other: Tally) -> Tally {
        for (code, o) in other.0 {
            let c = self.0.entry(code).or_default();
            c.foreign_objects += o.foreign_objects;
            c.total_objects += o.total_objects;
            c.foreign_users.extend(o.foreign_users);
            c.users.extend(o.users);
        }
        self
    }
}

/// Counts foreign and total activity per country.
///
/// `countries` seeds rows that should appear even with no records (the
/// whole boundary universe, typically); countries seen only in records are
/// added as well.
pub fn compute_attractiveness<'a>(
    records: &[GeocodedRecord],
    assignments: &BTreeMap<String, HomeOutcome>,
    countries: impl IntoIterator<Item = &'a str>,
    denominator: DenominatorMode,
) -> Result<AttractivenessTable, AttractivenessError> {
    let tally = records
        .par_chunks(16_384)
        .map(|chunk| {
            let mut t = Tally::default();
            for rec in chunk {
                let home = assignments.get(&rec.user_id).ok_or_else(|| AttractivenessError::UnknownUser {
                    object_id: rec.object_id.clone(),
                    user_id: rec.user_id.clone(),
                })?;
                t.add(rec, home);
            }
            Ok(t)
        })
        .try_reduce(Tally::default, |a, b| Ok(a.merge(b)))?;

    let mut counts = tally.0;
    for code in countries {
        counts.entry(code.to_string()).or_default();
    }

    let mut rows: Vec<CountryAttractiveness> = counts
        .into_iter()
        .map(|(code, c)| CountryAttractiveness {
            country_code: code,
            foreign_object_count: c.foreign_objects,
            foreign_user_count: c.foreign_users.len() as u64,
            total_object_count: c.total_objects,
            total_user_count: c.users.len() as u64,
            fraction_of_total: None,
            users_per_resident: None,
            objects_per_km2: None,
            objects_per_user: (!c.users.is_empty()).then(|| c.total_objects as f64 / c.users.len() as f64),
            population_status: CovariateStatus::Unchecked,
            area_status: CovariateStatus::Unchecked,
        })
        .collect();

    let denom: u64 = match denominator {
        DenominatorMode::ForeignOnly => rows.iter().map(|r| r.foreign_object_count).sum(),
        DenominatorMode::AllObjects => rows.iter().map(|r| r.total_object_count).sum(),
    };
    if denom > 0 {
        for r in &mut rows {
            r.fraction_of_total = Some(r.foreign_object_count as f64 / denom as f64);
        }
    }
    Ok(AttractivenessTable { denominator, rows })
}

fn status(v: Option<f64>) -> CovariateStatus {
    match v {
        None => CovariateStatus::Missing,
        Some(x) if x > 0.0 => CovariateStatus::Present,
        Some(_) => CovariateStatus::NonPositive,
    }
}

/// Fills the per-resident, per-km² and per-user ratios. Countries whose
/// denominator is missing or not positive keep `None` and are flagged.
pub fn normalized_stats(table: &mut AttractivenessTable, covariates: &CovariateTable) {
    for r in &mut table.rows {
        let cov = covariates.get(&r.country_code);
        let pop = cov.and_then(|c| c.population_avg);
        let area = cov.and_then(|c| c.area_avg);
        r.population_status = status(pop);
        r.area_status = status(area);
        r.users_per_resident = pop.filter(|&p| p > 0.0).map(|p| r.total_user_count as f64 / p);
        r.objects_per_km2 = area.filter(|&a| a > 0.0).map(|a| r.total_object_count as f64 / a);
        r.objects_per_user = (r.total_user_count > 0).then(|| r.total_object_count as f64 / r.total_user_count as f64);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    ForeignObjectCount,
    ForeignUserCount,
    TotalObjectCount,
    TotalUserCount,
    FractionOfTotal,
    UsersPerResident,
    ObjectsPerKm2,
    ObjectsPerUser,
}

impl Metric {
    const NAMES: [(&'static str, Metric); 8] = [
        ("foreign_object_count", Metric::ForeignObjectCount),
        ("foreign_user_count", Metric::ForeignUserCount),
        ("total_object_count", Metric::TotalObjectCount),
        ("total_user_count", Metric::TotalUserCount),
        ("fraction_of_total", Metric::FractionOfTotal),
        ("users_per_resident", Metric::UsersPerResident),
        ("objects_per_km2", Metric::ObjectsPerKm2),
        ("objects_per_user", Metric::ObjectsPerUser),
    ];

    pub fn value(self, r: &CountryAttractiveness) -> Option<f64> {
        match self {
            Metric::ForeignObjectCount => Some(r.foreign_object_count as f64),
            Metric::ForeignUserCount => Some(r.foreign_user_count as f64),
            Metric::TotalObjectCount => Some(r.total_object_count as f64),
            Metric::TotalUserCount => Some(r.total_user_count as f64),
            Metric::FractionOfTotal => r.fraction_of_total,
            Metric::UsersPerResident => r.users_per_resident,
            Metric::ObjectsPerKm2 => r.objects_per_km2,
            Metric::ObjectsPerUser => r.objects_per_user,
        }
    }
}

impl FromStr for Metric {
    type Err = AttractivenessError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Metric::NAMES
            .iter()
            .find(|(n, _)| *n == s)
            .map(|&(_, m)| m)
            .ok_or_else(|| AttractivenessError::UnknownMetric(s.to_string()))
    }
}

/// Highest `k` countries by `metric`, ties broken by ascending code.
/// Countries where the metric is missing are not ranked.
pub fn top_k(table: &AttractivenessTable, metric: &str, k: usize) -> Result<Vec<(String, f64)>, AttractivenessError> {
    let metric: Metric = metric.parse()?;
    if k == 0 {
        return Err(AttractivenessError::ZeroK);
    }
    let mut ranked: Vec<(String, f64)> = table
        .rows
        .iter()
        .filter_map(|r| metric.value(r).map(|v| (r.country_code.clone(), v)))
        .collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    ranked.truncate(k);
    Ok(ranked)
}
