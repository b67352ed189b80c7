//! Count foreign activity per country and rank countries by it.

use std::collections::BTreeMap;

use chrono::NaiveDate;

use geoattract::attractiveness::{compute_attractiveness, top_k, DenominatorMode, GeocodedRecord};
use geoattract::home::HomeOutcome;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let day = NaiveDate::from_ymd_opt(2013, 5, 4).unwrap();
    let events = [
        ("a", "FRA"), ("a", "FRA"), ("a", "ITA"), ("a", "ITA"), ("a", "ESP"),
        ("b", "ITA"), ("b", "FRA"), ("b", "FRA"),
        ("c", "ESP"), ("c", "ITA"),
    ];
    let records: Vec<GeocodedRecord> = events
        .iter()
        .enumerate()
        .map(|(i, (u, c))| GeocodedRecord {
            object_id: i.to_string(),
            user_id: u.to_string(),
            day,
            country: c.to_string(),
        })
        .collect();
    let homes: BTreeMap<String, HomeOutcome> = [
        ("a", HomeOutcome::Home("FRA".into())),
        ("b", HomeOutcome::Home("ITA".into())),
        ("c", HomeOutcome::Home("DEU".into())),
    ]
    .into_iter()
    .map(|(u, h)| (u.to_string(), h))
    .collect();

    let universe = ["DEU", "ESP", "FRA", "ITA"];
    for mode in [DenominatorMode::ForeignOnly, DenominatorMode::AllObjects] {
        let table = compute_attractiveness(&records, &homes, universe, mode)?;
        println!("denominator {mode:?}");
        for r in &table.rows {
            println!(
                "  {} foreign_objects {} foreign_users {} fraction {:?}",
                r.country_code, r.foreign_object_count, r.foreign_user_count, r.fraction_of_total
            );
        }
        for (code, v) in top_k(&table, "foreign_object_count", 2)? {
            println!("  top: {code} {v}");
        }
    }
    Ok(())
}
