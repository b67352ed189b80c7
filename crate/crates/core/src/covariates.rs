//! Country covariates, region membership and the per-analysis join.
//!
//! Values are never imputed: a cell that is blank in the input stays
//! `None` all the way to the fits, and every country left out of an
//! analysis is listed in the [`JoinReport`] with a reason.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::io::Read;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const DEFAULT_FIRST_YEAR: i32 = 2004;
pub const DEFAULT_LAST_YEAR: i32 = 2014;

#[derive(Debug, Error)]
pub enum CovariateError {
    #[error("{source_name}: {source}")]
    Csv {
        source_name: String,
        #[source]
        source: csv::Error,
    },
    #[error("{source_name}: missing column {column:?}")]
    MissingColumn { source_name: String, column: String },
    #[error("{source_name}: row {row}, column {column:?}: cannot parse {value:?} as a non-negative number")]
    BadNumber {
        source_name: String,
        row: u64,
        column: String,
        value: String,
    },
    #[error("{source_name}: conflicting rows for {key:?}")]
    ConflictingRows { source_name: String, key: String },
    #[error("region file is empty")]
    MissingRegions,
    #[error("country {code:?} listed in both {first:?} and {second:?}")]
    OverlappingRegions { code: String, first: String, second: String },
}

/// How a delimited covariate table is laid out.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableFormat {
    pub delimiter: char,
    /// Column holding the country key (code or name, resolved via aliases).
    pub key_column: String,
}

impl Default for TableFormat {
    fn default() -> Self {
        TableFormat {
            delimiter: ',',
            key_column: "country".to_string(),
        }
    }
}

fn reader<R: Read>(input: R, delimiter: char) -> csv::Reader<R> {
    csv::ReaderBuilder::new()
        .delimiter(delimiter as u8)
        .trim(csv::Trim::All)
        .flexible(false)
        .from_reader(input)
}

fn parse_cell(source: &str, row: u64, column: &str, raw: &str) -> Result<Option<f64>, CovariateError> {
    let raw = raw.trim();
    if raw.is_empty() || raw == ".." || raw.eq_ignore_ascii_case("na") {
        return Ok(None);
    }
    match raw.parse::<f64>() {
        Ok(v) if v.is_finite() && v >= 0.0 => Ok(Some(v)),
        _ => Err(CovariateError::BadNumber {
            source_name: source.to_string(),
            row,
            column: column.to_string(),
            value: raw.to_string(),
        }),
    }
}

fn column_index(headers: &csv::StringRecord, source: &str, column: &str) -> Result<usize, CovariateError> {
    headers
        .iter()
        .position(|h| h == column)
        .ok_or_else(|| CovariateError::MissingColumn {
            source_name: source.to_string(),
            column: column.to_string(),
        })
}

/// Mean of each country's non-missing yearly values within `[from, to]`.
///
/// The table is wide: one key column plus one column per year, headed by
/// the year number. Countries with no value in range are left out.
pub fn load_yearly_series<R: Read>(
    input: R,
    format: &TableFormat,
    source: &str,
    from: i32,
    to: i32,
) -> Result<BTreeMap<String, f64>, CovariateError> {
    let csv_err = |source_err| CovariateError::Csv {
        source_name: source.to_string(),
        source: source_err,
    };
    let mut rdr = reader(input, format.delimiter);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let key_idx = column_index(&headers, source, &format.key_column)?;
    let year_cols: Vec<(usize, i32)> = headers
        .iter()
        .enumerate()
        .filter_map(|(i, h)| h.parse::<i32>().ok().map(|y| (i, y)))
        .filter(|&(_, y)| (from..=to).contains(&y))
        .collect();

    let mut rows: BTreeMap<String, Vec<Option<f64>>> = BTreeMap::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let row_no = n as u64 + 2;
        let key = rec.get(key_idx).unwrap_or_default().to_string();
        if key.is_empty() {
            continue;
        }
        let values = year_cols
            .iter()
            .map(|&(i, _)| parse_cell(source, row_no, &headers[i], rec.get(i).unwrap_or_default()))
            .collect::<Result<Vec<_>, _>>()?;
        match rows.get(&key) {
            Some(prev) if *prev != values => {
                return Err(CovariateError::ConflictingRows {
                    source_name: source.to_string(),
                    key,
                })
            }
            Some(_) => {}
            None => {
                rows.insert(key, values);
            }
        }
    }

    Ok(rows
        .into_iter()
        .filter_map(|(key, values)| {
            let present: Vec<f64> = values.into_iter().flatten().collect();
            if present.is_empty() {
                None
            } else {
                Some((key, present.iter().sum::<f64>() / present.len() as f64))
            }
        })
        .collect())
}

/// Per-country scalar covariates.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Covariate {
    Area,
    Population,
    Gdp,
    Density,
    Coastline,
    UrbanPopulation,
}

impl Covariate {
    pub const ALL: [Covariate; 6] = [
        Covariate::Area,
        Covariate::Population,
        Covariate::Gdp,
        Covariate::Density,
        Covariate::Coastline,
        Covariate::UrbanPopulation,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Covariate::Area => "area",
            Covariate::Population => "population",
            Covariate::Gdp => "gdp",
            Covariate::Density => "density",
            Covariate::Coastline => "coastline",
            Covariate::UrbanPopulation => "urban_population",
        }
    }

    /// Extensive quantities add up over a region; density does not.
    pub fn default_aggregation(self) -> AggregationMode {
        match self {
            Covariate::Density => AggregationMode::PopulationWeightedMean,
            _ => AggregationMode::Sum,
        }
    }
}

impl fmt::Display for Covariate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Covariate {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Covariate::ALL
            .into_iter()
            .find(|c| c.name() == s)
            .ok_or_else(|| format!("unknown covariate {s:?}"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AggregationMode {
    Sum,
    PopulationWeightedMean,
}

/// Column names of the static covariate table.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct StaticColumns {
    pub gdp: String,
    pub density: String,
    pub coastline: String,
    pub urban_population: String,
}

impl Default for StaticColumns {
    fn default() -> Self {
        StaticColumns {
            gdp: "gdp".into(),
            density: "density".into(),
            coastline: "coastline".into(),
            urban_population: "urban_population".into(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StaticCovariates {
    pub gdp: Option<f64>,
    pub density: Option<f64>,
    pub coastline: Option<f64>,
    pub urban_population: Option<f64>,
}

pub fn load_static_covariates<R: Read>(
    input: R,
    format: &TableFormat,
    columns: &StaticColumns,
    source: &str,
) -> Result<BTreeMap<String, StaticCovariates>, CovariateError> {
    let csv_err = |e| CovariateError::Csv {
        source_name: source.to_string(),
        source: e,
    };
    let mut rdr = reader(input, format.delimiter);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    let key_idx = column_index(&headers, source, &format.key_column)?;
    let idx = [
        column_index(&headers, source, &columns.gdp)?,
        column_index(&headers, source, &columns.density)?,
        column_index(&headers, source, &columns.coastline)?,
        column_index(&headers, source, &columns.urban_population)?,
    ];
    let mut out = BTreeMap::new();
    for (n, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(csv_err)?;
        let row_no = n as u64 + 2;
        let key = rec.get(key_idx).unwrap_or_default().to_string();
        if key.is_empty() {
            continue;
        }
        let v = |i: usize| parse_cell(source, row_no, &headers[i], rec.get(i).unwrap_or_default());
        let row = StaticCovariates {
            gdp: v(idx[0])?,
            density: v(idx[1])?,
            coastline: v(idx[2])?,
            urban_population: v(idx[3])?,
        };
        if let Some(prev) = out.get(&key) {
            if *prev != row {
                return Err(CovariateError::ConflictingRows {
                    source_name: source.to_string(),
                    key,
                });
            }
        }
        out.insert(key, row);
    }
    Ok(out)
}

/// Region name → member country codes. Regions are disjoint.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RegionSpec {
    regions: BTreeMap<String, BTreeSet<String>>,
}

impl RegionSpec {
    pub fn from_pairs<I, A, B>(pairs: I) -> Result<Self, CovariateError>
    where
        I: IntoIterator<Item = (A, B)>,
        A: Into<String>,
        B: Into<String>,
    {
        let mut regions: BTreeMap<String, BTreeSet<String>> = BTreeMap::new();
        let mut owner: BTreeMap<String, String> = BTreeMap::new();
        for (code, region) in pairs {
            let (code, region) = (code.into(), region.into());
            if let Some(first) = owner.get(&code) {
                if *first != region {
                    return Err(CovariateError::OverlappingRegions {
                        code,
                        first: first.clone(),
                        second: region,
                    });
                }
                continue;
            }
            owner.insert(code.clone(), region.clone());
            regions.entry(region).or_default().insert(code);
        }
        if regions.is_empty() {
            return Err(CovariateError::MissingRegions);
        }
        Ok(RegionSpec { regions })
    }

    /// Region table with a country-key column and a region column.
    pub fn load<R: Read>(
        input: R,
        format: &TableFormat,
        region_column: &str,
        aliases: &AliasTable,
    ) -> Result<Self, CovariateError> {
        let source = "regions";
        let csv_err = |e| CovariateError::Csv {
            source_name: source.to_string(),
            source: e,
        };
        let mut rdr = reader(input, format.delimiter);
        let headers = rdr.headers().map_err(csv_err)?.clone();
        let key_idx = column_index(&headers, source, &format.key_column)?;
        let region_idx = column_index(&headers, source, region_column)?;
        let mut pairs = Vec::new();
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err)?;
            let key = rec.get(key_idx).unwrap_or_default();
            let region = rec.get(region_idx).unwrap_or_default();
            if key.is_empty() || region.is_empty() {
                continue;
            }
            pairs.push((aliases.resolve(key).to_string(), region.to_string()));
        }
        Self::from_pairs(pairs)
    }

    pub fn region_of(&self, code: &str) -> Option<&str> {
        self.regions
            .iter()
            .find(|(_, members)| members.contains(code))
            .map(|(name, _)| name.as_str())
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &BTreeSet<String>)> {
        self.regions.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    pub fn members(&self) -> BTreeSet<&str> {
        self.regions.values().flatten().map(String::as_str).collect()
    }
}

/// Explicit name → code reconciliation. Unknown keys pass through verbatim.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AliasTable {
    map: BTreeMap<String, String>,
}

impl AliasTable {
    pub fn new(map: BTreeMap<String, String>) -> Self {
        AliasTable { map }
    }

    /// Two-column table: `alias`, `code`.
    pub fn load<R: Read>(input: R, delimiter: char) -> Result<Self, CovariateError> {
        let source = "aliases";
        let csv_err = |e| CovariateError::Csv {
            source_name: source.to_string(),
            source: e,
        };
        let mut rdr = reader(input, delimiter);
        let headers = rdr.headers().map_err(csv_err)?.clone();
        let a = column_index(&headers, source, "alias")?;
        let c = column_index(&headers, source, "code")?;
        let mut map = BTreeMap::new();
        for rec in rdr.records() {
            let rec = rec.map_err(csv_err)?;
            let (alias, code) = (rec.get(a).unwrap_or_default(), rec.get(c).unwrap_or_default());
            if !alias.is_empty() && !code.is_empty() {
                map.insert(alias.to_string(), code.to_string());
            }
        }
        Ok(AliasTable { map })
    }

    pub fn resolve<'a>(&'a self, key: &'a str) -> &'a str {
        self.map.get(key).map(String::as_str).unwrap_or(key)
    }

    pub fn targets(&self) -> impl Iterator<Item = (&str, &str)> {
        self.map.iter().map(|(a, c)| (a.as_str(), c.as_str()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountryCovariates {
    pub country_code: String,
    pub population_avg: Option<f64>,
    pub area_avg: Option<f64>,
    pub gdp: Option<f64>,
    pub density: Option<f64>,
    pub coastline: Option<f64>,
    pub urban_population: Option<f64>,
    pub region: Option<String>,
}

impl CountryCovariates {
    pub fn empty(code: &str) -> Self {
        CountryCovariates {
            country_code: code.to_string(),
            population_avg: None,
            area_avg: None,
            gdp: None,
            density: None,
            coastline: None,
            urban_population: None,
            region: None,
        }
    }

    pub fn get(&self, c: Covariate) -> Option<f64> {
        match c {
            Covariate::Area => self.area_avg,
            Covariate::Population => self.population_avg,
            Covariate::Gdp => self.gdp,
            Covariate::Density => self.density,
            Covariate::Coastline => self.coastline,
            Covariate::UrbanPopulation => self.urban_population,
        }
    }
}

/// Abscissa of a power-law fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    Population,
    Area,
}

impl Axis {
    pub const BOTH: [Axis; 2] = [Axis::Population, Axis::Area];

    pub fn covariate(self) -> Covariate {
        match self {
            Axis::Population => Covariate::Population,
            Axis::Area => Covariate::Area,
        }
    }

    pub fn name(self) -> &'static str {
        self.covariate().name()
    }
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Axis {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "population" => Ok(Axis::Population),
            "area" => Ok(Axis::Area),
            other => Err(format!("unknown axis {other:?}")),
        }
    }
}

/// Frozen per-country covariates keyed by boundary country code.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct CovariateTable {
    rows: BTreeMap<String, CountryCovariates>,
}

impl CovariateTable {
    pub fn from_rows(rows: impl IntoIterator<Item = CountryCovariates>) -> Self {
        CovariateTable {
            rows: rows.into_iter().map(|r| (r.country_code.clone(), r)).collect(),
        }
    }

    pub fn get(&self, code: &str) -> Option<&CountryCovariates> {
        self.rows.get(code)
    }

    pub fn rows(&self) -> impl Iterator<Item = &CountryCovariates> {
        self.rows.values()
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Countries with a positive value on `axis`.
    pub fn fit_set(&self, axis: Axis) -> Vec<&str> {
        self.rows
            .values()
            .filter(|r| r.get(axis.covariate()).is_some_and(|v| v > 0.0))
            .map(|r| r.country_code.as_str())
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DropReason {
    MissingCovariate,
    NonPositiveCovariate,
    NoRegion,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DroppedCountry {
    pub country_code: String,
    pub reason: DropReason,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct JoinReport {
    /// Input keys that resolved to no known country, by source.
    pub unmatched_keys: BTreeMap<String, Vec<String>>,
    pub population_fit_dropped: Vec<DroppedCountry>,
    pub area_fit_dropped: Vec<DroppedCountry>,
    /// Known countries absent from the region file.
    pub region_uncovered: Vec<String>,
    /// Countries lacking each covariate.
    pub missing_by_covariate: BTreeMap<String, Vec<String>>,
    pub gdp_column: String,
}

impl JoinReport {
    pub fn dropped(&self, axis: Axis) -> &[DroppedCountry] {
        match axis {
            Axis::Population => &self.population_fit_dropped,
            Axis::Area => &self.area_fit_dropped,
        }
    }
}

/// Raw loaded covariate sources, keyed by whatever the files use.
#[derive(Debug, Clone, Default)]
pub struct CovariateSources {
    pub population: BTreeMap<String, f64>,
    pub area: BTreeMap<String, f64>,
    pub statics: BTreeMap<String, StaticCovariates>,
    pub gdp_column: String,
}

/// Joins every source onto the known country universe.
pub fn join_covariates<'a>(
    universe: impl IntoIterator<Item = &'a str>,
    sources: &CovariateSources,
    regions: &RegionSpec,
    aliases: &AliasTable,
) -> Result<(CovariateTable, JoinReport), CovariateError> {
    if regions.is_empty() {
        return Err(CovariateError::MissingRegions);
    }
    let mut rows: BTreeMap<String, CountryCovariates> = universe
        .into_iter()
        .map(|c| (c.to_string(), CountryCovariates::empty(c)))
        .collect();
    let mut report = JoinReport {
        gdp_column: sources.gdp_column.clone(),
        ..JoinReport::default()
    };

    let mut unmatched = |source: &str, key: &str| {
        report
            .unmatched_keys
            .entry(source.to_string())
            .or_default()
            .push(key.to_string());
    };
    for (key, &v) in &sources.population {
        match rows.get_mut(aliases.resolve(key)) {
            Some(r) => r.population_avg = Some(v),
            None => unmatched("population", key),
        }
    }
    for (key, &v) in &sources.area {
        match rows.get_mut(aliases.resolve(key)) {
            Some(r) => r.area_avg = Some(v),
            None => unmatched("area", key),
        }
    }
    for (key, s) in &sources.statics {
        match rows.get_mut(aliases.resolve(key)) {
            Some(r) => {
                r.gdp = s.gdp;
                r.density = s.density;
                r.coastline = s.coastline;
                r.urban_population = s.urban_population;
            }
            None => unmatched("static", key),
        }
    }
    for (region, members) in regions.iter() {
        for code in members {
            match rows.get_mut(code.as_str()) {
                Some(r) => r.region = Some(region.to_string()),
                None => unmatched("regions", code),
            }
        }
    }

    for r in rows.values() {
        for axis in Axis::BOTH {
            let reason = match r.get(axis.covariate()) {
                None => Some(DropReason::MissingCovariate),
                Some(v) if v <= 0.0 => Some(DropReason::NonPositiveCovariate),
                Some(_) => None,
            };
            if let Some(reason) = reason {
                let list = match axis {
                    Axis::Population => &mut report.population_fit_dropped,
                    Axis::Area => &mut report.area_fit_dropped,
                };
                list.push(DroppedCountry {
                    country_code: r.country_code.clone(),
                    reason,
                });
            }
        }
        if r.region.is_none() {
            report.region_uncovered.push(r.country_code.clone());
        }
        for c in Covariate::ALL {
            if r.get(c).is_none() {
                report
                    .missing_by_covariate
                    .entry(c.name().to_string())
                    .or_default()
                    .push(r.country_code.clone());
            }
        }
    }

    Ok((CovariateTable { rows }, report))
}

/// One region's aggregated covariates.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionAggregate {
    pub region: String,
    pub values: BTreeMap<Covariate, Option<f64>>,
}

/// Aggregates member covariates per region using `modes` (falling back to
/// each covariate's default). Members lacking a value are skipped; a region
/// with no contributing member gets `None`.
pub fn aggregate_regions(
    table: &CovariateTable,
    regions: &RegionSpec,
    modes: &BTreeMap<Covariate, AggregationMode>,
) -> Vec<RegionAggregate> {
    regions
        .iter()
        .map(|(name, members)| {
            let rows: Vec<&CountryCovariates> = members.iter().filter_map(|c| table.get(c)).collect();
            let values = Covariate::ALL
                .into_iter()
                .map(|cov| {
                    let mode = modes.get(&cov).copied().unwrap_or_else(|| cov.default_aggregation());
                    let v = match mode {
                        AggregationMode::Sum => {
                            let vals: Vec<f64> = rows.iter().filter_map(|r| r.get(cov)).collect();
                            (!vals.is_empty()).then(|| vals.iter().sum())
                        }
                        AggregationMode::PopulationWeightedMean => {
                            let (num, den) = rows
                                .iter()
                                .filter_map(|r| Some((r.get(cov)?, r.population_avg?)))
                                .fold((0.0, 0.0), |(n, d), (v, p)| (n + v * p, d + p));
                            (den > 0.0).then(|| num / den)
                        }
                    };
                    (cov, v)
                })
                .collect();
            RegionAggregate {
                region: name.to_string(),
                values,
            }
        })
        .collect()
}
