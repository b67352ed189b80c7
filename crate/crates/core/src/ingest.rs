//! Parsing and pruning of delimited media metadata.
//!
//! Every input line is classified exactly once: it either becomes a
//! [`MediaRecord`] or is counted under one [`SkipReason`]. Parsing never
//! fails on bad content; only I/O on the underlying source is an error.

use std::fmt;
use std::io::BufRead;
use std::ops::AddAssign;

use chrono::{NaiveDate, NaiveDateTime};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Canonical timestamp layout used for persisted records.
pub const CANONICAL_TIME_FORMAT: &str = "%Y-%m-%dT%H:%M:%S";

/// One geotagged media object that survived pruning.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MediaRecord {
    pub object_id: String,
    pub user_id: String,
    /// Taken verbatim from the source, interpreted as UTC.
    pub taken_at: NaiveDateTime,
    pub lon: f64,
    pub lat: f64,
}

impl MediaRecord {
    pub fn day(&self) -> NaiveDate {
        self.taken_at.date()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SkipReason {
    NotGeotagged,
    BadDate,
    Malformed,
}

impl fmt::Display for SkipReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            SkipReason::NotGeotagged => "not_geotagged",
            SkipReason::BadDate => "bad_date",
            SkipReason::Malformed => "malformed",
        };
        f.write_str(s)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PruneStats {
    pub total_lines: u64,
    pub kept: u64,
    pub dropped_not_geotagged: u64,
    pub dropped_bad_date: u64,
    pub dropped_malformed: u64,
}

impl PruneStats {
    pub fn dropped(&self) -> u64 {
        self.dropped_not_geotagged + self.dropped_bad_date + self.dropped_malformed
    }

    pub fn is_balanced(&self) -> bool {
        self.total_lines == self.kept + self.dropped()
    }

    fn record(&mut self, outcome: &Result<MediaRecord, SkipReason>) {
        self.total_lines += 1;
        match outcome {
            Ok(_) => self.kept += 1,
            Err(SkipReason::NotGeotagged) => self.dropped_not_geotagged += 1,
            Err(SkipReason::BadDate) => self.dropped_bad_date += 1,
            Err(SkipReason::Malformed) => self.dropped_malformed += 1,
        }
    }
}

impl AddAssign for PruneStats {
    fn add_assign(&mut self, rhs: Self) {
        self.total_lines += rhs.total_lines;
        self.kept += rhs.kept;
        self.dropped_not_geotagged += rhs.dropped_not_geotagged;
        self.dropped_bad_date += rhs.dropped_bad_date;
        self.dropped_malformed += rhs.dropped_malformed;
    }
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum ColumnMapError {
    #[error("column indices must be distinct")]
    DuplicateIndex,
    #[error("at least one date format is required")]
    NoDateFormat,
    #[error("delimiter must be a single ASCII character, got {0:?}")]
    BadDelimiter(char),
}

/// Which columns of a delimited row hold the fields we need.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ColumnMap {
    pub delimiter: char,
    pub object_id: usize,
    pub user_id: usize,
    pub taken_at: usize,
    pub lon: usize,
    pub lat: usize,
    /// Tried in order; the first format that parses wins.
    pub date_formats: Vec<String>,
}

impl Default for ColumnMap {
    /// Layout of the public tab-separated metadata dump.
    fn default() -> Self {
        ColumnMap {
            delimiter: '\t',
            object_id: 0,
            user_id: 1,
            taken_at: 3,
            lon: 10,
            lat: 11,
            date_formats: vec![
                "%Y-%m-%d %H:%M:%S%.f".to_string(),
                "%Y-%m-%d %H:%M:%S".to_string(),
            ],
        }
    }
}

impl ColumnMap {
    /// A compact five-column layout: id, user, taken_at, lon, lat.
    pub fn compact(delimiter: char) -> Self {
        ColumnMap {
            delimiter,
            object_id: 0,
            user_id: 1,
            taken_at: 2,
            lon: 3,
            lat: 4,
            ..ColumnMap::default()
        }
    }

    pub fn validate(&self) -> Result<(), ColumnMapError> {
        if !self.delimiter.is_ascii() {
            return Err(ColumnMapError::BadDelimiter(self.delimiter));
        }
        let mut idx = self.indices();
        idx.sort_unstable();
        if idx.windows(2).any(|w| w[0] == w[1]) {
            return Err(ColumnMapError::DuplicateIndex);
        }
        if self.date_formats.is_empty() {
            return Err(ColumnMapError::NoDateFormat);
        }
        Ok(())
    }

    pub fn indices(&self) -> [usize; 5] {
        [self.object_id, self.user_id, self.taken_at, self.lon, self.lat]
    }

    /// Minimum number of fields a row must have.
    pub fn required_fields(&self) -> usize {
        self.indices().into_iter().max().unwrap_or(0) + 1
    }
}

/// Parses one row. Never panics and never fails hard: every problem maps
/// to a [`SkipReason`].
pub fn parse_line(line: &str, map: &ColumnMap) -> Result<MediaRecord, SkipReason> {
    let line = line.strip_suffix('\n').unwrap_or(line);
    let line = line.strip_suffix('\r').unwrap_or(line);

    let needed = map.required_fields();
    let mut fields: [&str; 5] = [""; 5];
    let wanted = map.indices();
    let mut seen = 0;
    for (i, field) in line.split(map.delimiter).enumerate() {
        if let Some(slot) = wanted.iter().position(|&w| w == i) {
            fields[slot] = field;
        }
        seen = i + 1;
        if seen >= needed {
            break;
        }
    }
    if seen < needed {
        return Err(SkipReason::Malformed);
    }
    let [object_id, user_id, taken_at, lon, lat] = fields.map(str::trim);
    if object_id.is_empty() || user_id.is_empty() {
        return Err(SkipReason::Malformed);
    }

    if lon.is_empty() || lat.is_empty() {
        return Err(SkipReason::NotGeotagged);
    }
    let (lon, lat) = match (lon.parse::<f64>(), lat.parse::<f64>()) {
        (Ok(lon), Ok(lat)) => (lon, lat),
        _ => return Err(SkipReason::Malformed),
    };
    if !(lon.is_finite() && lat.is_finite()) {
        return Err(SkipReason::Malformed);
    }
    if !(-180.0..=180.0).contains(&lon) || !(-90.0..=90.0).contains(&lat) {
        return Err(SkipReason::NotGeotagged);
    }

    let taken_at = map
        .date_formats
        .iter()
        .find_map(|fmt| NaiveDateTime::parse_from_str(taken_at, fmt).ok())
        .ok_or(SkipReason::BadDate)?;

    Ok(MediaRecord {
        object_id: object_id.to_string(),
        user_id: user_id.to_string(),
        taken_at,
        lon,
        lat,
    })
}

#[derive(Debug, Error)]
#[error("read failed at line {line}: {source}")]
pub struct IngestError {
    /// Zero-based index of the line that could not be read.
    pub line: u64,
    #[source]
    pub source: std::io::Error,
}

/// Parses and prunes a line source in one pass, keeping input order.
pub fn prune_stream<I, S>(lines: I, map: &ColumnMap) -> Result<(Vec<MediaRecord>, PruneStats), IngestError>
where
    I: IntoIterator<Item = std::io::Result<S>>,
    S: AsRef<str>,
{
    let mut kept = Vec::new();
    let mut stats = PruneStats::default();
    for (n, line) in lines.into_iter().enumerate() {
        let line = line.map_err(|source| IngestError {
            line: n as u64,
            source,
        })?;
        let outcome = parse_line(line.as_ref(), map);
        stats.record(&outcome);
        if let Ok(rec) = outcome {
            kept.push(rec);
        }
    }
    Ok((kept, stats))
}

/// Parses an in-memory batch of lines on the current rayon pool.
///
/// Output order and stats are identical to [`prune_stream`] on the same
/// lines, for any pool size.
pub fn prune_batch_parallel<S>(lines: &[S], map: &ColumnMap) -> (Vec<MediaRecord>, PruneStats)
where
    S: AsRef<str> + Sync,
{
    const CHUNK: usize = 8192;
    let parts: Vec<(Vec<MediaRecord>, PruneStats)> = lines
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut kept = Vec::with_capacity(chunk.len());
            let mut stats = PruneStats::default();
            for line in chunk {
                let outcome = parse_line(line.as_ref(), map);
                stats.record(&outcome);
                if let Ok(rec) = outcome {
                    kept.push(rec);
                }
            }
            (kept, stats)
        })
        .collect();

    let mut kept = Vec::with_capacity(parts.iter().map(|p| p.0.len()).sum());
    let mut stats = PruneStats::default();
    for (part, part_stats) in parts {
        kept.extend(part);
        stats += part_stats;
    }
    (kept, stats)
}

/// Reads a whole source, splitting on `\n`, then prunes it in parallel.
/// Lines that are not valid UTF-8 are counted as malformed.
pub fn prune_reader<R: BufRead>(mut reader: R, map: &ColumnMap) -> Result<(Vec<MediaRecord>, PruneStats), IngestError> {
    let mut lines: Vec<String> = Vec::new();
    let mut buf = Vec::new();
    let mut invalid = PruneStats::default();
    loop {
        buf.clear();
        let n = reader
            .read_until(b'\n', &mut buf)
            .map_err(|source| IngestError {
                line: lines.len() as u64 + invalid.total_lines,
                source,
            })?;
        if n == 0 {
            break;
        }
        match std::str::from_utf8(&buf) {
            Ok(s) => lines.push(s.to_string()),
            Err(_) => {
                invalid.total_lines += 1;
                invalid.dropped_malformed += 1;
            }
        }
    }
    let (kept, mut stats) = prune_batch_parallel(&lines, map);
    stats += invalid;
    Ok((kept, stats))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn compact() -> ColumnMap {
        ColumnMap::compact('\t')
    }

    #[test]
    fn parses_well_formed_row() {
        let rec = parse_line("id1\tuserA\t2010-06-01 12:00:00\t13.40\t52.52", &compact()).unwrap();
        assert_eq!(rec.object_id, "id1");
        assert_eq!(rec.user_id, "userA");
        assert_eq!(
            rec.taken_at,
            NaiveDate::from_ymd_opt(2010, 6, 1).unwrap().and_hms_opt(12, 0, 0).unwrap()
        );
        assert_eq!(rec.lon, 13.40);
        assert_eq!(rec.lat, 52.52);
    }

    #[test]
    fn empty_coordinates_are_not_geotagged() {
        let r = parse_line("id1\tuserA\t2010-06-01 12:00:00\t\t", &compact());
        assert_eq!(r, Err(SkipReason::NotGeotagged));
    }

    #[test]
    fn bad_date_is_categorized() {
        let r = parse_line("id1\tuserA\tnot-a-date\t13.4\t52.5", &compact());
        assert_eq!(r, Err(SkipReason::BadDate));
    }

    #[test]
    fn out_of_range_coordinates_are_not_geotagged() {
        let r = parse_line("id1\tuserA\t2010-06-01 12:00:00\t200\t10", &compact());
        assert_eq!(r, Err(SkipReason::NotGeotagged));
        let r = parse_line("id1\tuserA\t2010-06-01 12:00:00\t10\t-90.5", &compact());
        assert_eq!(r, Err(SkipReason::NotGeotagged));
    }

    #[test]
    fn garbage_is_malformed() {
        let map = compact();
        assert_eq!(parse_line("", &map), Err(SkipReason::Malformed));
        assert_eq!(parse_line("a\tb\tc", &map), Err(SkipReason::Malformed));
        assert_eq!(
            parse_line("id\tu\t2010-06-01 12:00:00\tx\t1", &map),
            Err(SkipReason::Malformed)
        );
        assert_eq!(
            parse_line("id\tu\t2010-06-01 12:00:00\tNaN\t1", &map),
            Err(SkipReason::Malformed)
        );
        assert_eq!(
            parse_line("\tu\t2010-06-01 12:00:00\t1\t1", &map),
            Err(SkipReason::Malformed)
        );
    }

    #[test]
    fn default_layout_accepts_fractional_seconds() {
        let mut fields = vec![""; 23];
        fields[0] = "6985418911";
        fields[1] = "4e2f7a26a1dfbf165a7e30bdabf7e72a";
        fields[3] = "2012-02-16 09:56:37.0";
        fields[10] = "-0.1275";
        fields[11] = "51.5072";
        let line = fields.join("\t");
        let rec = parse_line(&line, &ColumnMap::default()).unwrap();
        assert_eq!(rec.taken_at.to_string(), "2012-02-16 09:56:37");
    }

    #[test]
    fn crlf_line_endings_are_stripped() {
        let rec = parse_line("id1\tuserA\t2010-06-01 12:00:00\t13.40\t52.52\r\n", &compact()).unwrap();
        assert_eq!(rec.lat, 52.52);
    }

    #[test]
    fn stream_counts_balance() {
        let lines = [
            "a\tu\t2010-06-01 12:00:00\t1\t1",
            "b\tu\t2010-06-01 12:00:00\t\t",
            "c\tu\t2010-06-01 12:00:00\t\t1",
            "d\tu\tnope\t1\t1",
            "e\tu\t2010-06-02 12:00:00\t2\t2",
        ];
        let (kept, stats) = prune_stream(lines.iter().map(|l| Ok::<_, std::io::Error>(*l)), &compact()).unwrap();
        assert_eq!(kept.len(), 2);
        assert_eq!(kept[0].object_id, "a");
        assert_eq!(kept[1].object_id, "e");
        assert_eq!(
            stats,
            PruneStats {
                total_lines: 5,
                kept: 2,
                dropped_not_geotagged: 2,
                dropped_bad_date: 1,
                dropped_malformed: 0
            }
        );
    }

    #[test]
    fn empty_stream() {
        let (kept, stats) = prune_stream(std::iter::empty::<std::io::Result<String>>(), &compact()).unwrap();
        assert!(kept.is_empty());
        assert_eq!(stats, PruneStats::default());
    }

    #[test]
    fn io_error_carries_line_offset() {
        let lines: Vec<std::io::Result<String>> = vec![
            Ok("a\tu\t2010-06-01 12:00:00\t1\t1".into()),
            Err(std::io::Error::other("disk gone")),
        ];
        let err = prune_stream(lines, &compact()).unwrap_err();
        assert_eq!(err.line, 1);
    }

    #[test]
    fn column_map_validation() {
        assert!(ColumnMap::default().validate().is_ok());
        let mut m = compact();
        m.lat = m.lon;
        assert_eq!(m.validate(), Err(ColumnMapError::DuplicateIndex));
        let mut m = compact();
        m.date_formats.clear();
        assert_eq!(m.validate(), Err(ColumnMapError::NoDateFormat));
    }

    #[test]
    fn reader_counts_invalid_utf8_as_malformed() {
        let mut bytes = b"a\tu\t2010-06-01 12:00:00\t1\t1\n".to_vec();
        bytes.extend_from_slice(&[0xff, 0xfe, b'\n']);
        bytes.extend_from_slice(b"b\tu\t2010-06-01 12:00:00\t1\t1");
        let (kept, stats) = prune_reader(&bytes[..], &compact()).unwrap();
        assert_eq!(kept.len(), 2);
        assert_eq!(stats.dropped_malformed, 1);
        assert_eq!(stats.total_lines, 3);
    }
}
