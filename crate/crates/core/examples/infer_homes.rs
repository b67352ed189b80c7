//! Home country inference: the country leading in both objects and distinct days.

use chrono::NaiveDate;

use geoattract::home::{ActivityStore, HomeStats};

fn at(y: i32, m: u32, d: u32) -> chrono::NaiveDateTime {
    NaiveDate::from_ymd_opt(y, m, d).unwrap().and_hms_opt(12, 0, 0).unwrap()
}

fn main() {
    let mut store = ActivityStore::new();
    // Resident of FRA with one trip to ITA.
    for d in 1..=6 {
        store.accumulate("alice", "FRA", at(2012, 3, d));
    }
    store.accumulate("alice", "ITA", at(2012, 8, 1));
    store.accumulate("alice", "ITA", at(2012, 8, 1));

    // Many objects in ESP on one day, but more days in PRT: no consistent winner.
    for _ in 0..10 {
        store.accumulate("bruno", "ESP", at(2011, 6, 1));
    }
    for d in 1..=3 {
        store.accumulate("bruno", "PRT", at(2011, 7, d));
    }

    // Exact tie on objects.
    store.accumulate("chen", "JPN", at(2010, 1, 1));
    store.accumulate("chen", "KOR", at(2010, 1, 2));

    let homes = store.infer_all();
    for (user, outcome) in &homes {
        println!("{user}: {outcome:?}");
    }
    let stats = HomeStats::from_outcomes(homes.values());
    println!(
        "users {} homes {} object_tie {} day_tie {} argmax_mismatch {}",
        stats.users, stats.homes_found, stats.undetermined_object_tie, stats.undetermined_day_tie, stats.undetermined_argmax_mismatch
    );
}
