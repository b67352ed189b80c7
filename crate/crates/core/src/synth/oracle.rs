//! Brute-force reference implementations.
//!
//! Nothing here calls into the production geometry, counting or regression
//! code; each routine is a separate, deliberately naive formulation.

use std::collections::{BTreeMap, HashMap, HashSet};

use chrono::NaiveDate;

use crate::geo::Polygon;

fn is_left(a: [f64; 2], b: [f64; 2], p: (f64, f64)) -> f64 {
    (b[0] - a[0]) * (p.1 - a[1]) - (p.0 - a[0]) * (b[1] - a[1])
}

fn ring_crossings(ring: &[[f64; 2]], p: (f64, f64)) -> usize {
    let mut count = 0;
    for i in 0..ring.len() - 1 {
        let (a, b) = (ring[i], ring[i + 1]);
        let upward = a[1] <= p.1 && b[1] > p.1;
        let downward = a[1] > p.1 && b[1] <= p.1;
        if (upward && is_left(a, b, p) > 0.0) || (downward && is_left(a, b, p) < 0.0) {
            count += 1;
        }
    }
    count
}

/// Even-odd ray casting toward +x; every ring (outer and holes) flips
/// parity, so points in holes come out as outside.
pub fn oracle_point_in_polygon(polygon: &Polygon, point: (f64, f64)) -> bool {
    let mut crossings = ring_crossings(&polygon.outer, point);
    for hole in &polygon.holes {
        crossings += ring_crossings(hole, point);
    }
    crossings % 2 == 1
}

/// Smallest planar distance from `point` to any edge of the polygon.
pub fn oracle_edge_distance(polygon: &Polygon, point: (f64, f64)) -> f64 {
    let mut best = f64::INFINITY;
    for ring in std::iter::once(&polygon.outer).chain(&polygon.holes) {
        for w in ring.windows(2) {
            let (ax, ay, bx, by) = (w[0][0], w[0][1], w[1][0], w[1][1]);
            let (vx, vy) = (bx - ax, by - ay);
            let (wx, wy) = (point.0 - ax, point.1 - ay);
            let c1 = vx * wx + vy * wy;
            let c2 = vx * vx + vy * vy;
            let d = if c1 <= 0.0 {
                wx.hypot(wy)
            } else if c2 <= c1 {
                (point.0 - bx).hypot(point.1 - by)
            } else {
                let t = c1 / c2;
                (point.0 - (ax + t * vx)).hypot(point.1 - (ay + t * vy))
            };
            best = best.min(d);
        }
    }
    best
}

/// One event as the oracle sees it.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleEvent {
    pub user_id: String,
    pub country: String,
    pub day: NaiveDate,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OracleCountryCounts {
    pub foreign_objects: u64,
    pub foreign_users: u64,
    pub total_objects: u64,
    pub total_users: u64,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OracleRecount {
    pub per_country: BTreeMap<String, OracleCountryCounts>,
    /// `(user, country)` → (objects, distinct days).
    pub per_user_country: BTreeMap<(String, String), (u64, u64)>,
}

/// Naive recount of an event log. `homes` maps users to their home country
/// (`None` for undetermined); users absent from `homes` count as
/// undetermined.
pub fn oracle_recount(events: &[OracleEvent], homes: &HashMap<String, Option<String>>) -> OracleRecount {
    let mut objects: HashMap<(String, String), u64> = HashMap::new();
    let mut days: HashMap<(String, String), HashSet<NaiveDate>> = HashMap::new();
    for e in events {
        let key = (e.user_id.clone(), e.country.clone());
        *objects.entry(key.clone()).or_insert(0) += 1;
        days.entry(key).or_default().insert(e.day);
    }

    let mut out = OracleRecount::default();
    for ((user, country), n) in &objects {
        let d = days[&(user.clone(), country.clone())].len() as u64;
        out.per_user_country.insert((user.clone(), country.clone()), (*n, d));

        let c = out.per_country.entry(country.clone()).or_default();
        c.total_objects += n;
        c.total_users += 1;
        let foreign = matches!(homes.get(user), Some(Some(h)) if h != country);
        if foreign {
            c.foreign_objects += n;
            c.foreign_users += 1;
        }
    }
    out
}

/// Slope and intercept of `ln y` on `ln x` by solving the 2×2 normal
/// equations from raw sums with Cramer's rule.
pub fn oracle_normal_equations(pairs: &[(f64, f64)]) -> (f64, f64) {
    let n = pairs.len() as f64;
    let (mut sx, mut sy, mut sxx, mut sxy) = (0.0, 0.0, 0.0, 0.0);
    for &(x, y) in pairs {
        let (u, v) = (x.ln(), y.ln());
        sx += u;
        sy += v;
        sxx += u * u;
        sxy += u * v;
    }
    let det = n * sxx - sx * sx;
    let slope = (n * sxy - sx * sy) / det;
    let intercept = (sxx * sy - sx * sxy) / det;
    (slope, intercept)
}

/// Pearson r from the raw-moment formula.
pub fn oracle_pearson(xs: &[f64], ys: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let sx: f64 = xs.iter().sum();
    let sy: f64 = ys.iter().sum();
    let sxx: f64 = xs.iter().map(|x| x * x).sum();
    let syy: f64 = ys.iter().map(|y| y * y).sum();
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| x * y).sum();
    (n * sxy - sx * sy) / ((n * sxx - sx * sx).sqrt() * (n * syy - sy * sy).sqrt())
}
