//! Delimited plot-data files derived from a finished report.

use std::path::{Path, PathBuf};

use serde::Serialize;

use super::report::RunReport;
use super::store::write_rows;
use super::StageError;
use crate::covariates::Axis;
use crate::scaling::{PowerLawFit, RegionFitOutcome, RegionFitTable};

pub const FIT_SAMPLES: usize = 32;
const STAGE: &str = "plots";

#[derive(Debug, Serialize)]
struct ShareRow<'a> {
    country: &'a str,
    total_objects: u64,
    share: f64,
}

#[derive(Debug, Serialize)]
struct PerUserRow<'a> {
    country: &'a str,
    users: u64,
    objects_per_user: Option<f64>,
}

#[derive(Debug, Serialize)]
struct ScatterRow<'a> {
    scope: &'a str,
    country: &'a str,
    x: f64,
    y: f64,
}

#[derive(Debug, Clone, Serialize, PartialEq)]
pub struct LineRow {
    pub scope: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Serialize)]
struct RegionRow<'a> {
    rank: usize,
    region: &'a str,
    countries: usize,
    aggregate_population: f64,
    status: &'static str,
    beta: Option<f64>,
    log_intercept: Option<f64>,
    r_squared: Option<f64>,
    regime: Option<String>,
    negative_exponent: Option<bool>,
}

/// `samples` log-spaced points of `a·x^β` over `[lo, hi]`.
pub fn sample_fit_line(scope: &str, fit: &PowerLawFit, lo: f64, hi: f64, samples: usize) -> Vec<LineRow> {
    if !(lo > 0.0 && hi >= lo) || samples == 0 {
        return Vec::new();
    }
    let (a, b) = (lo.ln(), hi.ln());
    (0..samples)
        .map(|i| {
            let t = if samples == 1 { 0.0 } else { i as f64 / (samples - 1) as f64 };
            let x = (a + t * (b - a)).exp();
            LineRow {
                scope: scope.to_string(),
                x,
                y: fit.predict(x),
            }
        })
        .collect()
}

fn x_range(points: impl Iterator<Item = f64>) -> Option<(f64, f64)> {
    points.fold(None, |acc, x| match acc {
        None => Some((x, x)),
        Some((lo, hi)) => Some((lo.min(x), hi.max(x))),
    })
}

fn region_rows(table: &RegionFitTable) -> Vec<RegionRow<'_>> {
    table
        .regions
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let fit = r.outcome.fit();
            RegionRow {
                rank: i + 1,
                region: &r.region,
                countries: r.country_count,
                aggregate_population: r.aggregate_population,
                status: match r.outcome {
                    RegionFitOutcome::Fitted(_) => "fitted",
                    RegionFitOutcome::Unfittable { .. } => "unfittable",
                    RegionFitOutcome::Degenerate => "degenerate",
                },
                beta: fit.map(|f| f.beta),
                log_intercept: fit.map(|f| f.log_intercept),
                r_squared: fit.map(|f| f.r_squared),
                regime: fit.map(|f| f.regime.to_string()),
                negative_exponent: fit.map(|f| f.negative_exponent),
            }
        })
        .collect()
}

/// Writes every plot-data file into `dir` and returns their paths.
pub fn emit_plot_data(report: &RunReport, dir: &Path) -> Result<Vec<PathBuf>, StageError> {
    std::fs::create_dir_all(dir).map_err(|e| StageError::io(STAGE, dir.to_path_buf(), e))?;
    let mut written = Vec::new();
    let empty = Vec::new();
    let rows = report.attractiveness.as_ref().map(|t| &t.rows).unwrap_or(&empty);

    let total: u64 = rows.iter().map(|r| r.total_object_count).sum();
    let mut share: Vec<ShareRow> = rows
        .iter()
        .map(|r| ShareRow {
            country: &r.country_code,
            total_objects: r.total_object_count,
            share: if total == 0 { 0.0 } else { r.total_object_count as f64 / total as f64 },
        })
        .collect();
    share.sort_by(|a, b| b.total_objects.cmp(&a.total_objects).then(a.country.cmp(b.country)));
    let p = dir.join("fig1_country_distribution.tsv");
    write_rows(STAGE, &p, &["country", "total_objects", "share"], &share)?;
    written.push(p);

    let per_user: Vec<PerUserRow> = rows
        .iter()
        .map(|r| PerUserRow {
            country: &r.country_code,
            users: r.total_user_count,
            objects_per_user: r.objects_per_user,
        })
        .collect();
    let p = dir.join("fig2_objects_per_user.tsv");
    write_rows(STAGE, &p, &["country", "users", "objects_per_user"], &per_user)?;
    written.push(p);

    for axis in Axis::BOTH {
        let mut scatter: Vec<ScatterRow> = Vec::new();
        let mut lines: Vec<LineRow> = Vec::new();
        if let Some(w) = report.world_fit(axis) {
            scatter.extend(w.points.iter().map(|p| ScatterRow {
                scope: "world",
                country: &p.country_code,
                x: p.x,
                y: p.y,
            }));
            if let (Some(fit), Some((lo, hi))) = (&w.fit, x_range(w.points.iter().map(|p| p.x))) {
                lines.extend(sample_fit_line("world", fit, lo, hi, FIT_SAMPLES));
            }
        }
        if let Some(t) = report.region_fits(axis) {
            for r in &t.regions {
                scatter.extend(r.points.iter().map(|p| ScatterRow {
                    scope: &r.region,
                    country: &p.country_code,
                    x: p.x,
                    y: p.y,
                }));
                if let (Some(fit), Some((lo, hi))) = (r.outcome.fit(), x_range(r.points.iter().map(|p| p.x))) {
                    lines.extend(sample_fit_line(&r.region, fit, lo, hi, FIT_SAMPLES));
                }
            }
        }
        let p = dir.join(format!("fig3_scatter_{}.tsv", axis.name()));
        write_rows(STAGE, &p, &["scope", "country", "x", "y"], &scatter)?;
        written.push(p);
        let p = dir.join(format!("fig3_fit_{}.tsv", axis.name()));
        write_rows(STAGE, &p, &["scope", "x", "y"], &lines)?;
        written.push(p);

        let table_rows = report.region_fits(axis).map(region_rows).unwrap_or_default();
        let p = dir.join(format!("table1_{}.tsv", axis.name()));
        write_rows(
            STAGE,
            &p,
            &[
                "rank",
                "region",
                "countries",
                "aggregate_population",
                "status",
                "beta",
                "log_intercept",
                "r_squared",
                "regime",
                "negative_exponent",
            ],
            &table_rows,
        )?;
        written.push(p);
    }
    Ok(written)
}
