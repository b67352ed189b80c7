use std::collections::BTreeSet;
use std::fmt;
use std::io::{BufRead, BufReader};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::PipelineConfig;
use crate::covariates::AliasTable;
use crate::geo::BoundarySet;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Problem {
    MissingPath { input: String, path: PathBuf },
    Unreadable { input: String, message: String },
    InvalidColumnMap { message: String },
    BadColumn { field: String, index: usize, columns: usize },
    MissingTableColumn { input: String, column: String },
    UnknownAliasTarget { alias: String, code: String },
    InvalidSetting { name: String, message: String },
}

impl fmt::Display for Problem {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Problem::MissingPath { input, path } => write!(f, "missing {input} file: {}", path.display()),
            Problem::Unreadable { input, message } => write!(f, "cannot read {input}: {message}"),
            Problem::InvalidColumnMap { message } => write!(f, "invalid column map: {message}"),
            Problem::BadColumn { field, index, columns } => {
                write!(f, "column {index} for {field} is beyond the {columns} columns of the first metadata line")
            }
            Problem::MissingTableColumn { input, column } => write!(f, "{input} has no column {column:?}"),
            Problem::UnknownAliasTarget { alias, code } => {
                write!(f, "alias {alias:?} points at {code:?}, which is not a boundary code")
            }
            Problem::InvalidSetting { name, message } => write!(f, "{name}: {message}"),
        }
    }
}

fn first_line(path: &Path) -> std::io::Result<Option<String>> {
    let mut r = BufReader::new(std::fs::File::open(path)?);
    let mut buf = Vec::new();
    loop {
        buf.clear();
        if r.read_until(b'\n', &mut buf)? == 0 {
            return Ok(None);
        }
        let line = String::from_utf8_lossy(&buf);
        let line = line.trim_end_matches(['\n', '\r']);
        if !line.is_empty() {
            return Ok(Some(line.to_string()));
        }
    }
}

fn header_of(path: &Path, delimiter: char) -> std::io::Result<Option<BTreeSet<String>>> {
    Ok(first_line(path)?.map(|l| l.split(delimiter).map(|s| s.trim().to_string()).collect()))
}

/// Checks a config against the filesystem without touching anything.
/// An empty list means the config is usable.
pub fn validate(config: &PipelineConfig) -> Vec<Problem> {
    let mut problems = Vec::new();

    if config.workers == 0 {
        problems.push(Problem::InvalidSetting {
            name: "workers".into(),
            message: "must be at least 1".into(),
        });
    }
    let eps = config.analysis.epsilon;
    if !(eps >= 0.0 && eps.is_finite()) {
        problems.push(Problem::InvalidSetting {
            name: "analysis.epsilon".into(),
            message: format!("must be a finite value >= 0, got {eps}"),
        });
    }
    if config.tables.first_year > config.tables.last_year {
        problems.push(Problem::InvalidSetting {
            name: "tables.first_year".into(),
            message: "must not exceed tables.last_year".into(),
        });
    }

    let mut present = BTreeSet::new();
    for (name, path) in config.named_inputs() {
        if path.is_file() {
            present.insert(name);
        } else {
            problems.push(Problem::MissingPath {
                input: name.into(),
                path: path.to_path_buf(),
            });
        }
    }

    let columns = &config.columns;
    match columns.validate() {
        Err(e) => problems.push(Problem::InvalidColumnMap { message: e.to_string() }),
        Ok(()) if present.contains("metadata") => match first_line(&config.inputs.metadata) {
            Ok(Some(line)) => {
                let n = line.split(columns.delimiter).count();
                for (field, index) in ["object_id", "user_id", "taken_at", "lon", "lat"].into_iter().zip(columns.indices()) {
                    if index >= n {
                        problems.push(Problem::BadColumn {
                            field: field.into(),
                            index,
                            columns: n,
                        });
                    }
                }
            }
            Ok(None) => {}
            Err(e) => problems.push(Problem::Unreadable {
                input: "metadata".into(),
                message: e.to_string(),
            }),
        },
        Ok(()) => {}
    }

    let t = &config.tables;
    let s = &t.static_columns;
    let required: [(&str, Vec<&str>); 4] = [
        ("population", vec![&t.key_column]),
        ("area", vec![&t.key_column]),
        ("covariates", vec![&t.key_column, &s.gdp, &s.density, &s.coastline, &s.urban_population]),
        ("regions", vec![&t.key_column, &t.region_column]),
    ];
    let mut inputs: Vec<(&str, &Path, Vec<&str>)> = required
        .into_iter()
        .map(|(name, cols)| {
            let path = config.named_inputs().into_iter().find(|(n, _)| *n == name).unwrap().1;
            (name, path, cols)
        })
        .collect();
    if let Some(a) = &config.inputs.aliases {
        inputs.push(("aliases", a, vec!["alias", "code"]));
    }
    for (name, path, cols) in inputs {
        if !present.contains(name) {
            continue;
        }
        match header_of(path, t.delimiter) {
            Ok(header) => {
                let header = header.unwrap_or_default();
                for c in cols {
                    if !header.contains(c) {
                        problems.push(Problem::MissingTableColumn {
                            input: name.into(),
                            column: c.into(),
                        });
                    }
                }
            }
            Err(e) => problems.push(Problem::Unreadable {
                input: name.into(),
                message: e.to_string(),
            }),
        }
    }

    if present.contains("boundaries") {
        let loaded = std::fs::read_to_string(&config.inputs.boundaries)
            .map_err(|e| e.to_string())
            .and_then(|text| BoundarySet::from_geojson_str(&text, &config.boundary_keys).map_err(|e| e.to_string()));
        match loaded {
            Err(message) => problems.push(Problem::Unreadable {
                input: "boundaries".into(),
                message,
            }),
            Ok(set) => {
                if let (Some(path), true) = (&config.inputs.aliases, present.contains("aliases")) {
                    let codes: BTreeSet<&str> = set.codes().collect();
                    match std::fs::File::open(path).map_err(|e| e.to_string()).and_then(|f| {
                        AliasTable::load(f, t.delimiter).map_err(|e| e.to_string())
                    }) {
                        Ok(aliases) => {
                            for (alias, code) in aliases.targets() {
                                if !codes.contains(code) {
                                    problems.push(Problem::UnknownAliasTarget {
                                        alias: alias.into(),
                                        code: code.into(),
                                    });
                                }
                            }
                        }
                        Err(message) => problems.push(Problem::Unreadable {
                            input: "aliases".into(),
                            message,
                        }),
                    }
                }
            }
        }
    }

    problems
}
