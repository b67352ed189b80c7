//! Country boundaries and point-to-country lookup.

mod boundary;
mod index;

pub use boundary::{load_boundaries, BoundaryError, BoundarySet, Coord, Country, Polygon, PropertyKeys, Ring};
pub use index::{CountryId, GeoIndex, Location, DEFAULT_EPSILON};
