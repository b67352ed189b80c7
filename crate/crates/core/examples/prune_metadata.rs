//! Prune a raw metadata dump down to geotagged, well-dated records.
//!
//! Reads the file given as the first argument, or a small built-in sample.

use std::fs::File;
use std::io::BufReader;

use geoattract::ingest::{prune_reader, ColumnMap};

const SAMPLE: &str = "\
1\tu1\t\t2012-05-01 10:00:00.0\t\t\t\t\t\t\t2.35\t48.85\t\t\t\t\t\t\t\t\t\t\t
2\tu1\t\t2012-05-02 11:30:00.0\t\t\t\t\t\t\t\t\t\t\t\t\t\t\t\t\t\t\t
3\tu2\t\tnot a date\t\t\t\t\t\t\t13.40\t52.52\t\t\t\t\t\t\t\t\t\t\t
4\tu2\t\t2013-07-14 08:15:00\t\t\t\t\t\t\t-0.12\t51.50\t\t\t\t\t\t\t\t\t\t\t
truncated line
";

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let map = ColumnMap::default();
    let (records, stats) = match std::env::args().nth(1) {
        Some(path) => prune_reader(BufReader::new(File::open(path)?), &map)?,
        None => prune_reader(SAMPLE.as_bytes(), &map)?,
    };
    for r in &records {
        println!("{}\t{}\t{}\t{:.4}\t{:.4}", r.object_id, r.user_id, r.taken_at, r.lon, r.lat);
    }
    println!(
        "total {} kept {} not_geotagged {} bad_date {} malformed {}",
        stats.total_lines, stats.kept, stats.dropped_not_geotagged, stats.dropped_bad_date, stats.dropped_malformed
    );
    assert!(stats.is_balanced());
    Ok(())
}
