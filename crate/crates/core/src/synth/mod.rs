//! Synthetic worlds with planted ground truth.
//!
//! Countries are disjoint axis-aligned boxes laid out on a lon/lat grid.
//! Every user lives in one country and strictly dominates it in both
//! objects and distinct days; foreign object totals per country follow
//! `A = a·p^β·exp(ε)` with a planted `β` per region and `ε ~ N(0, σ²)`.
//!
//! Randomness comes from a single ChaCha8 stream seeded with `seed`, so a
//! seed reproduces byte-identical output.

pub mod oracle;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use chrono::{Duration, NaiveDate, NaiveDateTime};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geo::{BoundarySet, Country, Polygon, PropertyKeys};

pub use oracle::{
    oracle_edge_distance, oracle_normal_equations, oracle_pearson, oracle_point_in_polygon, oracle_recount,
    OracleCountryCounts, OracleEvent, OracleRecount,
};

const FIRST_YEAR: i32 = 2004;
const LAST_YEAR: i32 = 2014;
const SYNTH_TIME_FORMAT: &str = "%Y-%m-%d %H:%M:%S.0";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedRegion {
    pub name: String,
    pub countries: usize,
    pub beta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthConfig {
    pub seed: u64,
    pub regions: Vec<PlantedRegion>,
    pub n_users: usize,
    /// Log-uniform population range.
    pub population_range: (f64, f64),
    /// Smallest expected foreign-object count, reached at the lower
    /// population bound; fixes each region's prefactor.
    pub min_foreign_objects: f64,
    /// σ of the log-normal attractiveness noise; 0 for exact power laws.
    pub noise_sigma: f64,
    /// Share of users that ever travel abroad.
    pub foreign_trip_probability: f64,
    pub objects_per_trip: (u32, u32),
    pub days_per_trip: (u32, u32),
    /// Baseline home activity before dominance is enforced.
    pub home_objects: (u32, u32),
    pub home_days: (u32, u32),
    pub non_geotag_rate: f64,
    pub bad_date_rate: f64,
    /// Grid cell holding one country box, degrees.
    pub cell_deg: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            seed: 1,
            regions: vec![
                PlantedRegion {
                    name: "Region A".into(),
                    countries: 20,
                    beta: 0.7,
                },
                PlantedRegion {
                    name: "Region B".into(),
                    countries: 20,
                    beta: 1.2,
                },
            ],
            n_users: 400,
            population_range: (1e5, 1e7),
            min_foreign_objects: 5.0,
            noise_sigma: 0.0,
            foreign_trip_probability: 0.6,
            objects_per_trip: (1, 6),
            days_per_trip: (1, 4),
            home_objects: (5, 30),
            home_days: (2, 10),
            non_geotag_rate: 0.0,
            bad_date_rate: 0.0,
            cell_deg: 2.0,
        }
    }
}

#[derive(Debug, Error, PartialEq)]
pub enum SynthError {
    #[error("{0} countries do not fit a grid of {1} cells")]
    TooManyCountries(usize, usize),
    #[error("invalid config: {0}")]
    Invalid(String),
}

impl SynthConfig {
    pub fn n_countries(&self) -> usize {
        self.regions.iter().map(|r| r.countries).sum()
    }

    fn grid(&self) -> (usize, usize) {
        ((360.0 / self.cell_deg).floor() as usize, (180.0 / self.cell_deg).floor() as usize)
    }

    pub fn validate(&self) -> Result<(), SynthError> {
        let bad = |m: &str| Err(SynthError::Invalid(m.to_string()));
        for (name, r) in [
            ("non_geotag_rate", self.non_geotag_rate),
            ("bad_date_rate", self.bad_date_rate),
            ("foreign_trip_probability", self.foreign_trip_probability),
        ] {
            if !(0.0..=1.0).contains(&r) {
                return bad(&format!("{name} must lie in [0, 1]"));
            }
        }
        if self.non_geotag_rate + self.bad_date_rate >= 1.0 {
            return bad("decoy rates must sum below 1");
        }
        for (name, (lo, hi)) in [
            ("objects_per_trip", self.objects_per_trip),
            ("days_per_trip", self.days_per_trip),
            ("home_objects", self.home_objects),
            ("home_days", self.home_days),
        ] {
            if lo == 0 || lo > hi {
                return bad(&format!("{name} must be a non-empty range of positive values"));
            }
        }
        let (pmin, pmax) = self.population_range;
        if !(pmin > 0.0 && pmin <= pmax && pmax.is_finite()) {
            return bad("population_range must be positive and ordered");
        }
        if !(self.noise_sigma >= 0.0 && self.min_foreign_objects >= 1.0) {
            return bad("noise_sigma must be >= 0 and min_foreign_objects >= 1");
        }
        if !(self.cell_deg > 0.0 && self.cell_deg <= 90.0) {
            return bad("cell_deg must lie in (0, 90]");
        }
        if self.n_countries() < 2 || self.n_users < 2 {
            return bad("need at least two countries and two users");
        }
        let (cols, rows) = self.grid();
        if self.n_countries() > cols * rows {
            return Err(SynthError::TooManyCountries(self.n_countries(), cols * rows));
        }
        Ok(())
    }
}

/// What each emitted metadata line is.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum LineLabel {
    /// Index into [`GroundTruth::events`].
    Event(usize),
    NotGeotagged,
    BadDate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrueEvent {
    pub object_id: String,
    pub user_id: String,
    pub country: String,
    pub taken_at: NaiveDateTime,
    pub lon: f64,
    pub lat: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlantedCountry {
    pub code: String,
    pub region: String,
    pub population: f64,
    pub area: f64,
    pub foreign_objects: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct GroundTruth {
    pub homes: BTreeMap<String, String>,
    pub countries: Vec<PlantedCountry>,
    pub region_betas: BTreeMap<String, f64>,
    pub region_log_intercepts: BTreeMap<String, f64>,
    pub events: Vec<TrueEvent>,
    pub labels: Vec<LineLabel>,
}

impl GroundTruth {
    pub fn oracle_events(&self) -> Vec<OracleEvent> {
        self.events
            .iter()
            .map(|e| OracleEvent {
                user_id: e.user_id.clone(),
                country: e.country.clone(),
                day: e.taken_at.date(),
            })
            .collect()
    }
}

/// Everything a pipeline run consumes, plus the truth behind it.
#[derive(Debug, Clone)]
pub struct SynthWorld {
    pub metadata_lines: Vec<String>,
    pub boundaries: BoundarySet,
    pub population_table: String,
    pub area_table: String,
    pub static_table: String,
    pub region_table: String,
    pub truth: GroundTruth,
}

/// Paths written by [`SynthWorld::write_files`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SynthPaths {
    pub metadata: PathBuf,
    pub boundaries: PathBuf,
    pub population: PathBuf,
    pub area: PathBuf,
    pub statics: PathBuf,
    pub regions: PathBuf,
    pub truth: PathBuf,
}

impl SynthWorld {
    pub fn metadata_text(&self) -> String {
        let mut s = String::with_capacity(self.metadata_lines.iter().map(|l| l.len() + 1).sum());
        for l in &self.metadata_lines {
            s.push_str(l);
            s.push('\n');
        }
        s
    }

    pub fn write_files(&self, dir: &Path) -> std::io::Result<SynthPaths> {
        std::fs::create_dir_all(dir)?;
        let paths = SynthPaths {
            metadata: dir.join("metadata.tsv"),
            boundaries: dir.join("boundaries.geojson"),
            population: dir.join("population.csv"),
            area: dir.join("area.csv"),
            statics: dir.join("covariates.csv"),
            regions: dir.join("regions.csv"),
            truth: dir.join("truth.json"),
        };
        std::fs::write(&paths.metadata, self.metadata_text())?;
        std::fs::write(
            &paths.boundaries,
            serde_json::to_string(&self.boundaries.to_geojson(&PropertyKeys::default()))?,
        )?;
        std::fs::write(&paths.population, &self.population_table)?;
        std::fs::write(&paths.area, &self.area_table)?;
        std::fs::write(&paths.statics, &self.static_table)?;
        std::fs::write(&paths.regions, &self.region_table)?;
        let summary = serde_json::json!({
            "homes": self.truth.homes.len(),
            "events": self.truth.events.len(),
            "region_betas": self.truth.region_betas,
            "region_log_intercepts": self.truth.region_log_intercepts,
            "countries": self.truth.countries,
        });
        std::fs::write(&paths.truth, serde_json::to_string_pretty(&summary)?)?;
        Ok(paths)
    }

    /// `n` extra well-formed lines at random points inside random countries,
    /// for throughput runs. Independent of the planted world's stream.
    pub fn random_lines(&self, n: usize, seed: u64) -> Vec<String> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let boxes: Vec<[f64; 4]> = self
            .boundaries
            .countries()
            .iter()
            .map(|c| c.polygons[0].bbox())
            .collect();
        (0..n)
            .map(|i| {
                let b = boxes[rng.random_range(0..boxes.len())];
                let (lon, lat) = point_in_box(&mut rng, b);
                let day = rng.random_range(0..4000);
                let t = base_date() + Duration::days(day) + Duration::seconds(rng.random_range(0..86_400));
                metadata_line(&format!("r{i}"), &format!("ru{}", rng.random_range(0..50_000)), &t.format(SYNTH_TIME_FORMAT).to_string(), Some((lon, lat)))
            })
            .collect()
    }
}

fn base_date() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2004, 1, 1).unwrap().and_hms_opt(0, 0, 0).unwrap()
}

/// Three-letter uppercase code for country `i`.
pub fn country_code(i: usize) -> String {
    let l = |k: usize| (b'A' + (k % 26) as u8) as char;
    [l(i / 676), l(i / 26), l(i)].iter().collect()
}

fn point_in_box(rng: &mut ChaCha8Rng, [x0, y0, x1, y1]: [f64; 4]) -> (f64, f64) {
    // keep clear of the edges so epsilon never matters
    let (mx, my) = ((x1 - x0) * 0.02, (y1 - y0) * 0.02);
    (rng.random_range(x0 + mx..x1 - mx), rng.random_range(y0 + my..y1 - my))
}

/// Row in the default tab-separated dump layout (23 columns).
pub fn metadata_line(object_id: &str, user_id: &str, taken_at: &str, coords: Option<(f64, f64)>) -> String {
    let mut s = String::with_capacity(96);
    let (lon, lat) = match coords {
        Some((lon, lat)) => (lon.to_string(), lat.to_string()),
        None => (String::new(), String::new()),
    };
    let _ = write!(s, "{object_id}\t{user_id}\t\t{taken_at}\t\t\t\t\t\t\t{lon}\t{lat}");
    for _ in 12..23 {
        s.push('\t');
    }
    s
}

fn range_u32(rng: &mut ChaCha8Rng, (lo, hi): (u32, u32)) -> u32 {
    rng.random_range(lo..=hi)
}

pub fn generate_world(config: &SynthConfig) -> Result<SynthWorld, SynthError> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let noise = Normal::new(0.0, config.noise_sigma.max(f64::MIN_POSITIVE)).expect("finite sigma");
    let (cols, _) = config.grid();
    let cell = config.cell_deg;
    let margin = cell * 0.1;

    // Countries, boxes, populations and planted foreign totals.
    let mut countries = Vec::new();
    let mut planted = Vec::new();
    let mut region_betas = BTreeMap::new();
    let mut region_log_intercepts = BTreeMap::new();
    let (pmin, pmax) = config.population_range;
    for region in &config.regions {
        let log_a = config.min_foreign_objects.ln() - region.beta * pmin.ln();
        region_betas.insert(region.name.clone(), region.beta);
        region_log_intercepts.insert(region.name.clone(), log_a);
        for _ in 0..region.countries {
            let i = countries.len();
            let (c, r) = (i % cols, i / cols);
            let lon0 = -180.0 + c as f64 * cell;
            let lat0 = -90.0 + r as f64 * cell;
            let code = country_code(i);
            countries.push(Country {
                code: code.clone(),
                name: format!("Country {code}"),
                polygons: vec![Polygon::rect(lon0 + margin, lat0 + margin, lon0 + cell - margin, lat0 + cell - margin)],
            });

            let log_p = rng.random_range(pmin.ln()..=pmax.ln());
            let eps = if config.noise_sigma > 0.0 { noise.sample(&mut rng) } else { 0.0 };
            let target = (log_a + region.beta * log_p + eps).exp();
            let foreign = target.round().max(1.0);
            // Back-solve the population so the planted law holds exactly
            // for the integer count.
            let population = ((foreign.ln() - log_a - eps) / region.beta).exp();
            let area = rng.random_range(1e3f64.ln()..1e6f64.ln()).exp();
            planted.push(PlantedCountry {
                code,
                region: region.name.clone(),
                population,
                area,
                foreign_objects: foreign as u64,
            });
        }
    }
    let boundaries = BoundarySet::new(countries).expect("generated boxes are valid");
    let boxes: Vec<[f64; 4]> = boundaries.countries().iter().map(|c| c.polygons[0].bbox()).collect();
    let n_countries = planted.len();

    // Users and travellers.
    let user_home: Vec<usize> = (0..config.n_users).map(|u| u % n_countries).collect();
    let user_id = |u: usize| format!("{:08x}@N{:02}", u, config.seed % 100);
    let mut travellers: Vec<usize> = (0..config.n_users)
        .filter(|_| rng.random_bool(config.foreign_trip_probability))
        .collect();
    if travellers.is_empty() {
        travellers = (0..config.n_users).collect();
    }

    struct Draft {
        user: usize,
        country: usize,
        taken_at: NaiveDateTime,
    }
    let mut drafts: Vec<Draft> = Vec::new();
    let span_days = (NaiveDate::from_ymd_opt(LAST_YEAR, 12, 31).unwrap()
        - NaiveDate::from_ymd_opt(FIRST_YEAR, 1, 1).unwrap())
    .num_days();
    let stamp = |rng: &mut ChaCha8Rng, day: i64| {
        base_date() + Duration::days(day) + Duration::seconds(rng.random_range(0..86_400))
    };

    // Foreign trips.
    let mut foreign_objects: Vec<BTreeMap<usize, u64>> = vec![BTreeMap::new(); config.n_users];
    let mut foreign_days: Vec<BTreeMap<usize, BTreeSet<i64>>> = vec![BTreeMap::new(); config.n_users];
    for (c, pc) in planted.iter().enumerate() {
        let mut remaining = pc.foreign_objects as u32;
        while remaining > 0 {
            let k = range_u32(&mut rng, config.objects_per_trip).min(remaining);
            let user = loop {
                let u = travellers[rng.random_range(0..travellers.len())];
                if user_home[u] != c {
                    break u;
                }
                if travellers.iter().all(|&t| user_home[t] == c) {
                    break (0..config.n_users).find(|&u| user_home[u] != c).expect("two countries");
                }
            };
            let days = range_u32(&mut rng, config.days_per_trip).min(k) as i64;
            let start = rng.random_range(0..span_days - days);
            for j in 0..k as i64 {
                let day = start + if j < days { j } else { rng.random_range(0..days) };
                foreign_days[user].entry(c).or_default().insert(day);
                drafts.push(Draft {
                    user,
                    country: c,
                    taken_at: stamp(&mut rng, day),
                });
            }
            *foreign_objects[user].entry(c).or_default() += k as u64;
            remaining -= k;
        }
    }

    // Home activity, strictly dominating every foreign country.
    let mut homes = BTreeMap::new();
    for u in 0..config.n_users {
        let max_obj = foreign_objects[u].values().copied().max().unwrap_or(0);
        let max_days = foreign_days[u].values().map(|d| d.len() as u64).max().unwrap_or(0);
        let days = (range_u32(&mut rng, config.home_days) as u64).max(max_days + 1) as i64;
        let objects = (range_u32(&mut rng, config.home_objects) as u64)
            .max(max_obj + 1)
            .max(days as u64);
        let start = rng.random_range(0..(span_days - days).max(1));
        for j in 0..objects as i64 {
            let day = start + if j < days { j } else { rng.random_range(0..days) };
            drafts.push(Draft {
                user: u,
                country: user_home[u],
                taken_at: stamp(&mut rng, day),
            });
        }
        homes.insert(user_id(u), planted[user_home[u]].code.clone());
    }

    drafts.shuffle(&mut rng);
    let events: Vec<TrueEvent> = drafts
        .into_iter()
        .enumerate()
        .map(|(i, d)| {
            let (lon, lat) = point_in_box(&mut rng, boxes[d.country]);
            TrueEvent {
                object_id: format!("{}", 10_000_000 + i),
                user_id: user_id(d.user),
                country: planted[d.country].code.clone(),
                taken_at: d.taken_at,
                lon,
                lat,
            }
        })
        .collect();

    // Decoys at exact rounded proportions.
    let keep = 1.0 - config.non_geotag_rate - config.bad_date_rate;
    let total = (events.len() as f64 / keep).round() as usize;
    let n_ng = (config.non_geotag_rate * total as f64).round() as usize;
    let n_bd = (config.bad_date_rate * total as f64).round() as usize;
    let mut labels: Vec<LineLabel> = (0..events.len()).map(LineLabel::Event).collect();
    labels.extend(std::iter::repeat_n(LineLabel::NotGeotagged, n_ng));
    labels.extend(std::iter::repeat_n(LineLabel::BadDate, n_bd));
    labels.shuffle(&mut rng);

    const BAD_DATES: [&str; 4] = ["not-a-date", "2010-13-45 99:00:00", "0000-00-00 00:00:00", "31/12/2009"];
    let mut decoy = 0usize;
    let metadata_lines: Vec<String> = labels
        .iter()
        .map(|label| match *label {
            LineLabel::Event(i) => {
                let e = &events[i];
                metadata_line(&e.object_id, &e.user_id, &e.taken_at.format(SYNTH_TIME_FORMAT).to_string(), Some((e.lon, e.lat)))
            }
            LineLabel::NotGeotagged => {
                decoy += 1;
                let d = rng.random_range(0..span_days);
                let t = stamp(&mut rng, d);
                metadata_line(&format!("d{decoy}"), &user_id(rng.random_range(0..config.n_users)), &t.format(SYNTH_TIME_FORMAT).to_string(), None)
            }
            LineLabel::BadDate => {
                decoy += 1;
                let b = boxes[rng.random_range(0..n_countries)];
                let (lon, lat) = point_in_box(&mut rng, b);
                let bad = BAD_DATES[rng.random_range(0..BAD_DATES.len())];
                metadata_line(&format!("d{decoy}"), &user_id(rng.random_range(0..config.n_users)), bad, Some((lon, lat)))
            }
        })
        .collect();

    // Covariate tables.
    let years: Vec<String> = (FIRST_YEAR..=LAST_YEAR).map(|y| y.to_string()).collect();
    let mut population_table = format!("country,{}\n", years.join(","));
    let mut area_table = population_table.clone();
    let mut static_table = String::from("country,gdp,density,coastline,urban_population\n");
    let mut region_table = String::from("country,region\n");
    for pc in &planted {
        let row = |v: f64| vec![v.to_string(); years.len()].join(",");
        let _ = writeln!(population_table, "{},{}", pc.code, row(pc.population));
        let _ = writeln!(area_table, "{},{}", pc.code, row(pc.area));
        let gdp = pc.population * rng.random_range(500.0..60_000.0);
        let coast = rng.random_range(0.0..20_000.0);
        let urban = pc.population * rng.random_range(0.2..0.95);
        let _ = writeln!(static_table, "{},{},{},{},{}", pc.code, gdp, pc.population / pc.area, coast, urban);
        let _ = writeln!(region_table, "{},{}", pc.code, pc.region);
    }

    Ok(SynthWorld {
        metadata_lines,
        boundaries,
        population_table,
        area_table,
        static_table,
        region_table,
        truth: GroundTruth {
            homes,
            countries: planted,
            region_betas,
            region_log_intercepts,
            events,
            labels,
        },
    })
}

/// Shape of a random test polygon.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PolygonKind {
    Convex,
    Concave,
    Holed,
}

/// `n` random polygons cycling through convex, concave (star) and holed
/// shapes, centred anywhere that keeps them inside ±170°/±80°.
pub fn random_polygons(n: usize, seed: u64) -> Vec<(PolygonKind, Polygon)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let kind = [PolygonKind::Convex, PolygonKind::Concave, PolygonKind::Holed][i % 3];
            let cx = rng.random_range(-170.0..170.0);
            let cy = rng.random_range(-80.0..80.0);
            let radius: f64 = rng.random_range(0.5..5.0);
            let vertices = rng.random_range(5..24usize);
            let mut angles: Vec<f64> = (0..vertices).map(|_| rng.random_range(0.0..std::f64::consts::TAU)).collect();
            angles.sort_by(f64::total_cmp);
            let ring = |rng: &mut ChaCha8Rng, scale: f64, jitter: bool, angles: &[f64]| {
                let mut r: Vec<[f64; 2]> = angles
                    .iter()
                    .map(|&a| {
                        let rr = if jitter { scale * rng.random_range(0.3..1.0) } else { scale };
                        [cx + rr * a.cos(), cy + rr * a.sin()]
                    })
                    .collect();
                r.push(r[0]);
                r
            };
            let poly = match kind {
                PolygonKind::Convex => Polygon::new(ring(&mut rng, radius, false, &angles), vec![]),
                PolygonKind::Concave => Polygon::new(ring(&mut rng, radius, true, &angles), vec![]),
                PolygonKind::Holed => {
                    let outer = ring(&mut rng, radius, false, &angles);
                    let hole_angles: Vec<f64> = (0..6).map(|k| k as f64 * std::f64::consts::TAU / 6.0 + 0.1).collect();
                    let hole = ring(&mut rng, radius * 0.4, false, &hole_angles);
                    Polygon::new(outer, vec![hole])
                }
            };
            (kind, poly)
        })
        .collect()
}
