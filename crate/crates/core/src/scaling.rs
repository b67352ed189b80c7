//! Power-law fits in log-log space, regime classification, per-region fits
//! and correlation of fit quality with region covariates.
//!
//! All logarithms are natural. `log_intercept` is `ln a` in `A = a·x^β`.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attractiveness::AttractivenessTable;
use crate::covariates::{Axis, Covariate, CovariateTable, RegionAggregate, RegionSpec};

/// Minimum number of points for a reported fit.
pub const MIN_FIT_POINTS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Regime {
    Sublinear,
    Linear,
    Superlinear,
}

impl fmt::Display for Regime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Regime::Sublinear => "sublinear",
            Regime::Linear => "linear",
            Regime::Superlinear => "superlinear",
        })
    }
}

/// Linear iff `|β − 1| ≤ tolerance`; otherwise by side of 1.
pub fn classify(beta: f64, tolerance: f64) -> Regime {
    if (beta - 1.0).abs() <= tolerance {
        Regime::Linear
    } else if beta < 1.0 {
        Regime::Sublinear
    } else {
        Regime::Superlinear
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub beta: f64,
    pub log_intercept: f64,
    pub r_squared: f64,
    pub n_points: usize,
    pub regime: Regime,
    /// Sublinear but with a decreasing trend.
    pub negative_exponent: bool,
}

impl PowerLawFit {
    pub fn reclassify(&mut self, tolerance: f64) {
        self.regime = classify(self.beta, tolerance);
    }

    /// `a·x^β`.
    pub fn predict(&self, x: f64) -> f64 {
        (self.log_intercept + self.beta * x.ln()).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitError {
    #[error("need at least 3 points, got {0}")]
    InsufficientPoints(usize),
    #[error("all abscissae are identical")]
    DegenerateAbscissa,
    #[error("point {0} is not strictly positive")]
    NonPositive(usize),
}

/// Ordinary least squares of `ln y` on `ln x`.
pub fn fit_power_law(pairs: &[(f64, f64)]) -> Result<PowerLawFit, FitError> {
    fit_power_law_with(pairs, 0.0)
}

pub fn fit_power_law_with(pairs: &[(f64, f64)], tolerance: f64) -> Result<PowerLawFit, FitError> {
    let n = pairs.len();
    if n < MIN_FIT_POINTS {
        return Err(FitError::InsufficientPoints(n));
    }
    if let Some(i) = pairs.iter().position(|&(x, y)| !(x > 0.0 && y > 0.0 && x.is_finite() && y.is_finite())) {
        return Err(FitError::NonPositive(i));
    }
    let logs: Vec<(f64, f64)> = pairs.iter().map(|&(x, y)| (x.ln(), y.ln())).collect();
    let nf = n as f64;
    let mean_x = logs.iter().map(|p| p.0).sum::<f64>() / nf;
    let mean_y = logs.iter().map(|p| p.1).sum::<f64>() / nf;
    let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
    for &(lx, ly) in &logs {
        let (dx, dy) = (lx - mean_x, ly - mean_y);
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    if sxx == 0.0 {
        return Err(FitError::DegenerateAbscissa);
    }
    let beta = sxy / sxx;
    let log_intercept = mean_y - beta * mean_x;
    let sse: f64 = logs
        .iter()
        .map(|&(lx, ly)| {
            let r = ly - mean_y - beta * (lx - mean_x);
            r * r
        })
        .sum();
    let r_squared = if syy == 0.0 { 1.0 } else { (1.0 - sse / syy).clamp(0.0, 1.0) };
    Ok(PowerLawFit {
        beta,
        log_intercept,
        r_squared,
        n_points: n,
        regime: classify(beta, tolerance),
        negative_exponent: beta < 0.0,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitPoint {
    pub country_code: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    MissingCovariate,
    NonPositiveCovariate,
    ZeroAttractiveness,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Exclusion {
    pub country_code: String,
    pub reason: ExclusionReason,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExclusionReport {
    pub excluded: Vec<Exclusion>,
}

impl ExclusionReport {
    pub fn count(&self, reason: ExclusionReason) -> usize {
        self.excluded.iter().filter(|e| e.reason == reason).count()
    }
}

/// `(covariate, fraction_of_total)` for every country usable on `axis`.
pub fn filter_fit_inputs(
    table: &AttractivenessTable,
    covariates: &CovariateTable,
    axis: Axis,
) -> (Vec<FitPoint>, ExclusionReport) {
    let mut points = Vec::new();
    let mut report = ExclusionReport::default();
    for row in &table.rows {
        let x = covariates.get(&row.country_code).and_then(|c| c.get(axis.covariate()));
        let reason = match (x, row.fraction_of_total) {
            (None, _) => Some(ExclusionReason::MissingCovariate),
            (Some(x), _) if x <= 0.0 => Some(ExclusionReason::NonPositiveCovariate),
            (_, None) => Some(ExclusionReason::ZeroAttractiveness),
            (_, Some(y)) if y <= 0.0 => Some(ExclusionReason::ZeroAttractiveness),
            _ => None,
        };
        match reason {
            Some(reason) => report.excluded.push(Exclusion {
                country_code: row.country_code.clone(),
                reason,
            }),
            None => points.push(FitPoint {
                country_code: row.country_code.clone(),
                x: x.unwrap(),
                y: row.fraction_of_total.unwrap(),
            }),
        }
    }
    (points, report)
}

pub fn fit_points(points: &[FitPoint], tolerance: f64) -> Result<PowerLawFit, FitError> {
    let pairs: Vec<(f64, f64)> = points.iter().map(|p| (p.x, p.y)).collect();
    fit_power_law_with(&pairs, tolerance)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum RegionFitOutcome {
    Fitted(PowerLawFit),
    Unfittable { n_points: usize },
    Degenerate,
}

impl RegionFitOutcome {
    pub fn fit(&self) -> Option<&PowerLawFit> {
        match self {
            RegionFitOutcome::Fitted(f) => Some(f),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionFit {
    pub region: String,
    /// Countries actually fitted (or available, for unfittable regions).
    pub country_count: usize,
    /// Σ population_avg over those countries.
    pub aggregate_population: f64,
    pub outcome: RegionFitOutcome,
    pub points: Vec<FitPoint>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionFitTable {
    pub axis: Axis,
    /// Fitted regions by descending R², then the rest by name.
    pub regions: Vec<RegionFit>,
}

impl RegionFitTable {
    pub fn get(&self, region: &str) -> Option<&RegionFit> {
        self.regions.iter().find(|r| r.region == region)
    }
}

pub fn fit_by_region(
    table: &AttractivenessTable,
    covariates: &CovariateTable,
    regions: &RegionSpec,
    axis: Axis,
    tolerance: f64,
) -> RegionFitTable {
    let (points, _) = filter_fit_inputs(table, covariates, axis);
    let mut out: Vec<RegionFit> = regions
        .iter()
        .map(|(name, members)| {
            let pts: Vec<FitPoint> = points
                .iter()
                .filter(|p| members.contains(&p.country_code))
                .cloned()
                .collect();
            let outcome = match fit_points(&pts, tolerance) {
                Ok(f) => RegionFitOutcome::Fitted(f),
                Err(FitError::InsufficientPoints(n)) => RegionFitOutcome::Unfittable { n_points: n },
                Err(_) => RegionFitOutcome::Degenerate,
            };
            let aggregate_population = pts
                .iter()
                .filter_map(|p| covariates.get(&p.country_code)?.population_avg)
                .sum();
            RegionFit {
                region: name.to_string(),
                country_count: pts.len(),
                aggregate_population,
                outcome,
                points: pts,
            }
        })
        .collect();
    out.sort_by(|a, b| match (a.outcome.fit(), b.outcome.fit()) {
        (Some(fa), Some(fb)) => fb
            .r_squared
            .total_cmp(&fa.r_squared)
            .then_with(|| a.region.cmp(&b.region)),
        (Some(_), None) => Ordering::Less,
        (None, Some(_)) => Ordering::Greater,
        (None, None) => a.region.cmp(&b.region),
    });
    RegionFitTable { axis, regions: out }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Error, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CorrelationError {
    #[error("sequences differ in length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("need at least 2 pairs, got {0}")]
    TooFewPoints(usize),
    #[error("one of the sequences has zero variance")]
    DegenerateVariance,
}

/// Sample Pearson correlation coefficient.
pub fn pearson(xs: &[f64], ys: &[f64]) -> Result<f64, CorrelationError> {
    if xs.len() != ys.len() {
        return Err(CorrelationError::LengthMismatch(xs.len(), ys.len()));
    }
    let n = xs.len();
    if n < 2 {
        return Err(CorrelationError::TooFewPoints(n));
    }
    let mx = xs.iter().sum::<f64>() / n as f64;
    let my = ys.iter().sum::<f64>() / n as f64;
    let (mut sxx, mut syy, mut sxy) = (0.0, 0.0, 0.0);
    for (&x, &y) in xs.iter().zip(ys) {
        let (dx, dy) = (x - mx, y - my);
        sxx += dx * dx;
        syy += dy * dy;
        sxy += dx * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(CorrelationError::DegenerateVariance);
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub variable: String,
    pub r: Option<f64>,
    pub n: usize,
    pub error: Option<CorrelationError>,
}

/// Correlates each fitted region's R² with its aggregated covariates.
/// Regions without a fit or without the covariate are skipped for that
/// covariate; failures stay local to one covariate.
pub fn correlate_fit_quality(fits: &RegionFitTable, aggregates: &[RegionAggregate]) -> Vec<CorrelationResult> {
    let by_region: BTreeMap<&str, &RegionAggregate> = aggregates.iter().map(|a| (a.region.as_str(), a)).collect();
    Covariate::ALL
        .into_iter()
        .map(|cov| {
            let (xs, ys): (Vec<f64>, Vec<f64>) = fits
                .regions
                .iter()
                .filter_map(|rf| {
                    let fit = rf.outcome.fit()?;
                    let v = by_region.get(rf.region.as_str())?.values.get(&cov).copied().flatten()?;
                    Some((fit.r_squared, v))
                })
                .unzip();
            let n = xs.len();
            let (r, error) = match pearson(&xs, &ys) {
                Ok(r) => (Some(r), None),
                Err(e) => (None, Some(e)),
            };
            CorrelationResult {
                variable: cov.name().to_string(),
                r,
                n,
                error,
            }
        })
        .collect()
}
