//! Assign points to countries, with an epsilon band for points just offshore.

use geoattract::geo::{BoundarySet, Country, GeoIndex, Location, Polygon};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    // Two neighbours sharing the x = 10 border, the second with a lake.
    let west = Country {
        code: "WES".into(),
        name: "Westland".into(),
        polygons: vec![Polygon::rect(0.0, 0.0, 10.0, 10.0)],
    };
    let lake = vec![[13.0, 3.0], [17.0, 3.0], [17.0, 7.0], [13.0, 7.0], [13.0, 3.0]];
    let outer = vec![[10.0, 0.0], [20.0, 0.0], [20.0, 10.0], [10.0, 10.0], [10.0, 0.0]];
    let east = Country {
        code: "EAS".into(),
        name: "Eastland".into(),
        polygons: vec![Polygon::new(outer, vec![lake])],
    };
    let index = GeoIndex::build(BoundarySet::new(vec![west, east])?);

    let points = [(5.0, 5.0), (15.0, 1.0), (15.0, 5.0), (10.0, 5.0), (13.05, 5.0), (20.05, 5.0), (25.0, 5.0)];
    for eps in [0.0, 0.1] {
        println!("epsilon {eps}");
        for (&(lon, lat), loc) in points.iter().zip(index.locate_batch(&points, eps)) {
            let label = match loc {
                Location::Inside(id) => format!("inside {}", index.code(id)),
                Location::Near(id) => format!("near {}", index.code(id)),
                Location::Unassigned => "unassigned".to_string(),
            };
            println!("  ({lon:>5}, {lat:>4}) {label}");
        }
    }
    Ok(())
}
