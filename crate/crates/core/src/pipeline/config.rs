use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::attractiveness::DenominatorMode;
use crate::covariates::{AggregationMode, Axis, Covariate, StaticColumns, TableFormat, DEFAULT_FIRST_YEAR, DEFAULT_LAST_YEAR};
use crate::geo::{PropertyKeys, DEFAULT_EPSILON};
use crate::ingest::ColumnMap;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read config {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("invalid config {path}: {source}")]
    Parse {
        path: PathBuf,
        #[source]
        source: toml::de::Error,
    },
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct InputPaths {
    pub metadata: PathBuf,
    pub boundaries: PathBuf,
    pub population: PathBuf,
    pub area: PathBuf,
    pub covariates: PathBuf,
    pub regions: PathBuf,
    pub aliases: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct TableConfig {
    pub delimiter: char,
    pub key_column: String,
    pub region_column: String,
    pub first_year: i32,
    pub last_year: i32,
    pub static_columns: StaticColumns,
}

impl Default for TableConfig {
    fn default() -> Self {
        TableConfig {
            delimiter: ',',
            key_column: "country".into(),
            region_column: "region".into(),
            first_year: DEFAULT_FIRST_YEAR,
            last_year: DEFAULT_LAST_YEAR,
            static_columns: StaticColumns::default(),
        }
    }
}

impl TableConfig {
    pub fn format(&self) -> TableFormat {
        TableFormat {
            delimiter: self.delimiter,
            key_column: self.key_column.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    /// Coastal rescue distance in degrees.
    pub epsilon: f64,
    pub denominator: DenominatorMode,
    pub classify_tolerance: f64,
    /// Which region fits feed the R² correlations.
    pub correlation_axis: Axis,
    /// Overrides of the per-covariate default aggregation.
    pub aggregation: BTreeMap<Covariate, AggregationMode>,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        AnalysisConfig {
            epsilon: DEFAULT_EPSILON,
            denominator: DenominatorMode::ForeignOnly,
            classify_tolerance: 0.0,
            correlation_axis: Axis::Population,
            aggregation: BTreeMap::new(),
        }
    }
}

impl AnalysisConfig {
    pub fn aggregation_modes(&self) -> BTreeMap<Covariate, AggregationMode> {
        Covariate::ALL
            .into_iter()
            .map(|c| (c, self.aggregation.get(&c).copied().unwrap_or_else(|| c.default_aggregation())))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineConfig {
    pub inputs: InputPaths,
    pub columns: ColumnMap,
    pub boundary_keys: PropertyKeys,
    pub tables: TableConfig,
    pub analysis: AnalysisConfig,
    pub workers: usize,
    pub output_dir: PathBuf,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            inputs: InputPaths::default(),
            columns: ColumnMap::default(),
            boundary_keys: PropertyKeys::default(),
            tables: TableConfig::default(),
            analysis: AnalysisConfig::default(),
            workers: 1,
            output_dir: PathBuf::from("out"),
        }
    }
}

impl PipelineConfig {
    /// Loads a TOML config; relative paths resolve against the file's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let mut cfg: PipelineConfig = toml::from_str(&text).map_err(|source| ConfigError::Parse {
            path: path.to_path_buf(),
            source,
        })?;
        if let Some(base) = path.parent() {
            cfg.resolve_relative(base);
        }
        Ok(cfg)
    }

    pub fn resolve_relative(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if !p.as_os_str().is_empty() && p.is_relative() {
                *p = base.join(&*p);
            }
        };
        let i = &mut self.inputs;
        for p in [
            &mut i.metadata,
            &mut i.boundaries,
            &mut i.population,
            &mut i.area,
            &mut i.covariates,
            &mut i.regions,
        ] {
            fix(p);
        }
        if let Some(a) = i.aliases.as_mut() {
            fix(a);
        }
        fix(&mut self.output_dir);
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    /// Named input files, aliases included when configured.
    pub fn named_inputs(&self) -> Vec<(&'static str, &Path)> {
        let i = &self.inputs;
        let mut v: Vec<(&'static str, &Path)> = vec![
            ("metadata", &i.metadata),
            ("boundaries", &i.boundaries),
            ("population", &i.population),
            ("area", &i.area),
            ("covariates", &i.covariates),
            ("regions", &i.regions),
        ];
        if let Some(a) = &i.aliases {
            v.push(("aliases", a));
        }
        v
    }
}
