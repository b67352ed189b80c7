use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::attractiveness::{AttractivenessTable, DenominatorMode};
use crate::covariates::{AggregationMode, Axis, Covariate, JoinReport, RegionAggregate};
use crate::home::HomeStats;
use crate::ingest::PruneStats;
use crate::scaling::{CorrelationResult, ExclusionReport, FitError, FitPoint, PowerLawFit, RegionFitTable};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct GeocodeStats {
    pub records: u64,
    pub assigned: u64,
    pub unassigned: u64,
    /// Assigned through the epsilon fallback rather than containment.
    pub epsilon_rescued: u64,
}

/// A whole-world fit on one axis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WorldFit {
    pub axis: Axis,
    pub fit: Option<PowerLawFit>,
    pub error: Option<FitError>,
    pub exclusions: ExclusionReport,
    pub points: Vec<FitPoint>,
}

/// Conventions needed to read the numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMetadata {
    pub log_base: String,
    pub r_squared_space: String,
    pub attractiveness_measure: String,
    pub denominator: DenominatorMode,
    pub gdp_column: String,
}

impl ReportMetadata {
    pub fn new(denominator: DenominatorMode, gdp_column: &str) -> Self {
        ReportMetadata {
            log_base: "e".into(),
            r_squared_space: "log-log".into(),
            attractiveness_measure: "fraction_of_total".into(),
            denominator,
            gdp_column: gdp_column.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Failure {
    pub stage: String,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageTiming {
    pub stage: String,
    pub seconds: f64,
    pub cached: bool,
}

/// Execution details that may differ between otherwise identical runs.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Runtime {
    pub workers: usize,
    pub stages: Vec<StageTiming>,
    pub total_seconds: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub metadata: ReportMetadata,
    /// The configuration minus worker count and output location.
    pub config: serde_json::Value,
    pub input_checksums: BTreeMap<String, String>,
    pub prune: Option<PruneStats>,
    pub geocode: Option<GeocodeStats>,
    pub homes: Option<HomeStats>,
    pub attractiveness: Option<AttractivenessTable>,
    pub join: Option<JoinReport>,
    pub world_fits: Vec<WorldFit>,
    pub region_fits: Vec<RegionFitTable>,
    pub correlation_axis: Axis,
    pub aggregation: BTreeMap<Covariate, AggregationMode>,
    pub region_aggregates: Vec<RegionAggregate>,
    pub correlations: Vec<CorrelationResult>,
    pub failure: Option<Failure>,
    pub runtime: Runtime,
}

impl RunReport {
    pub fn world_fit(&self, axis: Axis) -> Option<&WorldFit> {
        self.world_fits.iter().find(|w| w.axis == axis)
    }

    pub fn region_fits(&self, axis: Axis) -> Option<&RegionFitTable> {
        self.region_fits.iter().find(|t| t.axis == axis)
    }

    /// JSON form with the runtime section removed, for run-to-run comparison.
    pub fn without_runtime(&self) -> serde_json::Value {
        let mut v = serde_json::to_value(self).expect("report serializes");
        if let Some(obj) = v.as_object_mut() {
            obj.remove("runtime");
        }
        v
    }
}
