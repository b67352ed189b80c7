//! Per-user activity accumulation and home-country inference.
//!
//! A user's home is the country where they made strictly the most objects
//! and were active on strictly the most distinct calendar days. Users for
//! whom the two maxima are not both unique and equal stay undetermined.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use chrono::{NaiveDate, NaiveDateTime};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CountryActivity {
    pub object_count: u64,
    /// Distinct UTC calendar dates with at least one object.
    pub active_days: BTreeSet<NaiveDate>,
}

impl CountryActivity {
    pub fn day_count(&self) -> u64 {
        self.active_days.len() as u64
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct UserActivity {
    pub countries: BTreeMap<String, CountryActivity>,
}

impl UserActivity {
    pub fn record(&mut self, country: &str, taken_at: NaiveDateTime) {
        let entry = match self.countries.get_mut(country) {
            Some(e) => e,
            None => self.countries.entry(country.to_string()).or_default(),
        };
        entry.object_count += 1;
        entry.active_days.insert(taken_at.date());
    }

    pub fn total_objects(&self) -> u64 {
        self.countries.values().map(|c| c.object_count).sum()
    }

    fn merge(&mut self, other: UserActivity) {
        for (code, act) in other.countries {
            let e = self.countries.entry(code).or_default();
            e.object_count += act.object_count;
            e.active_days.extend(act.active_days);
        }
    }
}

/// All users' activity, keyed by user id.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ActivityStore {
    users: BTreeMap<String, UserActivity>,
}

impl ActivityStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Counts one geocoded object.
    pub fn accumulate(&mut self, user_id: &str, country: &str, taken_at: NaiveDateTime) {
        let user = match self.users.get_mut(user_id) {
            Some(u) => u,
            None => self.users.entry(user_id.to_string()).or_default(),
        };
        user.record(country, taken_at);
    }

    /// Folds another shard in; associative and commutative.
    pub fn merge(&mut self, other: ActivityStore) {
        for (user, act) in other.users {
            self.users.entry(user).or_default().merge(act);
        }
    }

    pub fn get(&self, user_id: &str) -> Option<&UserActivity> {
        self.users.get(user_id)
    }

    pub fn users(&self) -> impl Iterator<Item = (&str, &UserActivity)> {
        self.users.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn len(&self) -> usize {
        self.users.len()
    }

    pub fn is_empty(&self) -> bool {
        self.users.is_empty()
    }

    /// Infers every user's home, in user-id order.
    pub fn infer_all(&self) -> BTreeMap<String, HomeOutcome> {
        let users: Vec<(&String, &UserActivity)> = self.users.iter().collect();
        users
            .par_iter()
            .map(|(id, act)| {
                let outcome = infer_home(act).expect("stored users always have activity");
                ((*id).clone(), outcome)
            })
            .collect::<Vec<_>>()
            .into_iter()
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum UndeterminedReason {
    ObjectTie,
    DayTie,
    ArgmaxMismatch,
}

impl fmt::Display for UndeterminedReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            UndeterminedReason::ObjectTie => "object_tie",
            UndeterminedReason::DayTie => "day_tie",
            UndeterminedReason::ArgmaxMismatch => "argmax_mismatch",
        })
    }
}

impl std::str::FromStr for UndeterminedReason {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "object_tie" => Ok(UndeterminedReason::ObjectTie),
            "day_tie" => Ok(UndeterminedReason::DayTie),
            "argmax_mismatch" => Ok(UndeterminedReason::ArgmaxMismatch),
            other => Err(format!("unknown undetermined reason {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum HomeOutcome {
    Home(String),
    Undetermined(UndeterminedReason),
}

impl HomeOutcome {
    pub fn home(&self) -> Option<&str> {
        match self {
            HomeOutcome::Home(c) => Some(c),
            HomeOutcome::Undetermined(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HomeAssignment {
    pub user_id: String,
    pub outcome: HomeOutcome,
}

#[derive(Debug, Error, PartialEq, Eq)]
pub enum HomeError {
    #[error("cannot infer a home from empty activity")]
    EmptyActivity,
}

/// Unique maximizer of `key`, or `None` on a tie.
fn unique_argmax(act: &UserActivity, key: impl Fn(&CountryActivity) -> u64) -> Option<&str> {
    let mut best: Option<(&str, u64)> = None;
    let mut tied = false;
    for (code, c) in &act.countries {
        let v = key(c);
        match best {
            Some((_, bv)) if v < bv => {}
            Some((_, bv)) if v == bv => tied = true,
            _ => {
                best = Some((code, v));
                tied = false;
            }
        }
    }
    if tied {
        None
    } else {
        best.map(|(c, _)| c)
    }
}

pub fn infer_home(activity: &UserActivity) -> Result<HomeOutcome, HomeError> {
    if activity.countries.is_empty() {
        return Err(HomeError::EmptyActivity);
    }
    let Some(by_objects) = unique_argmax(activity, |c| c.object_count) else {
        return Ok(HomeOutcome::Undetermined(UndeterminedReason::ObjectTie));
    };
    let Some(by_days) = unique_argmax(activity, CountryActivity::day_count) else {
        return Ok(HomeOutcome::Undetermined(UndeterminedReason::DayTie));
    };
    if by_objects == by_days {
        Ok(HomeOutcome::Home(by_objects.to_string()))
    } else {
        Ok(HomeOutcome::Undetermined(UndeterminedReason::ArgmaxMismatch))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Foreignness {
    ForeignUser,
    DomesticUser,
    Unknown,
}

pub fn foreignness(outcome: &HomeOutcome, country: &str) -> Foreignness {
    match outcome {
        HomeOutcome::Home(c) if c == country => Foreignness::DomesticUser,
        HomeOutcome::Home(_) => Foreignness::ForeignUser,
        HomeOutcome::Undetermined(_) => Foreignness::Unknown,
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct HomeStats {
    pub users: u64,
    pub homes_found: u64,
    pub undetermined_object_tie: u64,
    pub undetermined_day_tie: u64,
    pub undetermined_argmax_mismatch: u64,
}

impl HomeStats {
    pub fn from_outcomes<'a>(outcomes: impl IntoIterator<Item = &'a HomeOutcome>) -> Self {
        let mut s = HomeStats::default();
        for o in outcomes {
            s.users += 1;
            match o {
                HomeOutcome::Home(_) => s.homes_found += 1,
                HomeOutcome::Undetermined(UndeterminedReason::ObjectTie) => s.undetermined_object_tie += 1,
                HomeOutcome::Undetermined(UndeterminedReason::DayTie) => s.undetermined_day_tie += 1,
                HomeOutcome::Undetermined(UndeterminedReason::ArgmaxMismatch) => {
                    s.undetermined_argmax_mismatch += 1
                }
            }
        }
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at(y: i32, m: u32, d: u32, h: u32) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(y, m, d).unwrap().and_hms_opt(h, 0, 0).unwrap()
    }

    fn activity(spec: &[(&str, u64, u64)]) -> UserActivity {
        // (country, objects, days): objects spread over `days` distinct dates
        let mut act = UserActivity::default();
        for &(code, objects, days) in spec {
            for i in 0..objects {
                let day = (i % days) as u32 + 1;
                act.record(code, at(2010, 1, day, 12));
            }
        }
        act
    }

    #[test]
    fn same_day_objects_share_one_active_day() {
        let mut store = ActivityStore::new();
        store.accumulate("u", "FR", at(2010, 6, 1, 10));
        store.accumulate("u", "FR", at(2010, 6, 1, 18));
        let fr = &store.get("u").unwrap().countries["FR"];
        assert_eq!(fr.object_count, 2);
        assert_eq!(fr.active_days.len(), 1);
    }

    #[test]
    fn two_countries_two_entries() {
        let mut store = ActivityStore::new();
        store.accumulate("u", "FR", at(2010, 6, 1, 10));
        store.accumulate("u", "DE", at(2010, 6, 2, 10));
        let u = store.get("u").unwrap();
        assert_eq!(u.countries.len(), 2);
        assert!(u.countries.values().all(|c| c.object_count == 1 && c.day_count() == 1));
    }

    #[test]
    fn single_country_is_home() {
        assert_eq!(infer_home(&activity(&[("JP", 4, 2)])), Ok(HomeOutcome::Home("JP".into())));
    }

    #[test]
    fn argmax_mismatch() {
        let act = activity(&[("US", 10, 2), ("FR", 3, 3)]);
        // FR needs 5 days with 3 objects: build by hand
        let mut act2 = act.clone();
        act2.countries.get_mut("FR").unwrap().active_days.extend([
            NaiveDate::from_ymd_opt(2011, 1, 1).unwrap(),
            NaiveDate::from_ymd_opt(2011, 1, 2).unwrap(),
        ]);
        assert_eq!(act2.countries["FR"].day_count(), 5);
        assert_eq!(
            infer_home(&act2),
            Ok(HomeOutcome::Undetermined(UndeterminedReason::ArgmaxMismatch))
        );
    }

    #[test]
    fn object_tie_reported_first() {
        let act = activity(&[("US", 5, 3), ("FR", 5, 1)]);
        assert_eq!(infer_home(&act), Ok(HomeOutcome::Undetermined(UndeterminedReason::ObjectTie)));
    }

    #[test]
    fn day_tie() {
        let act = activity(&[("US", 6, 2), ("FR", 5, 2)]);
        assert_eq!(infer_home(&act), Ok(HomeOutcome::Undetermined(UndeterminedReason::DayTie)));
    }

    #[test]
    fn empty_activity_is_an_error() {
        assert_eq!(infer_home(&UserActivity::default()), Err(HomeError::EmptyActivity));
    }

    #[test]
    fn foreignness_cases() {
        let home = HomeOutcome::Home("FR".into());
        assert_eq!(foreignness(&home, "FR"), Foreignness::DomesticUser);
        assert_eq!(foreignness(&home, "DE"), Foreignness::ForeignUser);
        assert_eq!(
            foreignness(&HomeOutcome::Undetermined(UndeterminedReason::DayTie), "DE"),
            Foreignness::Unknown
        );
    }

    #[test]
    fn merge_equals_single_store() {
        let events = [("a", "FR", 1), ("b", "DE", 2), ("a", "FR", 1), ("a", "DE", 3), ("b", "DE", 2)];
        let mut whole = ActivityStore::new();
        let mut left = ActivityStore::new();
        let mut right = ActivityStore::new();
        for (i, &(u, c, d)) in events.iter().enumerate() {
            whole.accumulate(u, c, at(2012, 3, d, 9));
            let shard = if i % 2 == 0 { &mut left } else { &mut right };
            shard.accumulate(u, c, at(2012, 3, d, 9));
        }
        right.merge(left);
        assert_eq!(right, whole);
    }

    #[test]
    fn stats_count_reasons() {
        let outcomes = [
            HomeOutcome::Home("A".into()),
            HomeOutcome::Undetermined(UndeterminedReason::ObjectTie),
            HomeOutcome::Undetermined(UndeterminedReason::ArgmaxMismatch),
            HomeOutcome::Undetermined(UndeterminedReason::ArgmaxMismatch),
        ];
        let s = HomeStats::from_outcomes(&outcomes);
        assert_eq!(s.users, 4);
        assert_eq!(s.homes_found, 1);
        assert_eq!(s.undetermined_argmax_mismatch, 2);
        assert_eq!(s.undetermined_day_tie, 0);
    }
}
