use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::boundary::{BoundarySet, Coord, Polygon};

/// Default epsilon for coastal rescue, in degrees.
pub const DEFAULT_EPSILON: f64 = 0.01;

/// Position of a country inside the [`BoundarySet`] the index was built from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct CountryId(pub u32);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Location {
    /// A polygon of this country contains the point (edges count as inside).
    Inside(CountryId),
    /// No polygon contains the point, but this country's boundary is the
    /// nearest one within epsilon.
    Near(CountryId),
    Unassigned,
}

impl Location {
    pub fn country(self) -> Option<CountryId> {
        match self {
            Location::Inside(id) | Location::Near(id) => Some(id),
            Location::Unassigned => None,
        }
    }
}

struct PreparedPolygon {
    country: CountryId,
    bbox: [f64; 4],
    /// Ring vertex runs; ring `i` spans `vertices[ring_starts[i]..ring_starts[i + 1]]`.
    vertices: Vec<Coord>,
    ring_starts: Vec<usize>,
}

impl PreparedPolygon {
    fn new(country: CountryId, poly: &Polygon) -> Self {
        let mut vertices = Vec::with_capacity(poly.vertex_count());
        let mut ring_starts = vec![0];
        for ring in poly.rings() {
            vertices.extend_from_slice(ring);
            ring_starts.push(vertices.len());
        }
        PreparedPolygon {
            country,
            bbox: poly.bbox(),
            vertices,
            ring_starts,
        }
    }

    fn edges(&self) -> impl Iterator<Item = (Coord, Coord)> + '_ {
        self.ring_starts.windows(2).flat_map(move |w| {
            self.vertices[w[0]..w[1]].windows(2).map(|e| (e[0], e[1]))
        })
    }

    fn bbox_contains(&self, x: f64, y: f64) -> bool {
        x >= self.bbox[0] && x <= self.bbox[2] && y >= self.bbox[1] && y <= self.bbox[3]
    }

    /// Even-odd rule across all rings; a point on any edge is inside.
    fn contains(&self, x: f64, y: f64) -> bool {
        if !self.bbox_contains(x, y) {
            return false;
        }
        let mut inside = false;
        for ([ax, ay], [bx, by]) in self.edges() {
            if on_segment(x, y, ax, ay, bx, by) {
                return true;
            }
            if (ay > y) != (by > y) {
                let cross_x = ax + (y - ay) * (bx - ax) / (by - ay);
                if x < cross_x {
                    inside = !inside;
                }
            }
        }
        inside
    }

    fn boundary_distance(&self, x: f64, y: f64) -> f64 {
        self.edges()
            .map(|(a, b)| wrapped_segment_distance(x, y, a, b))
            .fold(f64::INFINITY, f64::min)
    }
}

fn on_segment(x: f64, y: f64, ax: f64, ay: f64, bx: f64, by: f64) -> bool {
    let cross = (bx - ax) * (y - ay) - (by - ay) * (x - ax);
    cross == 0.0 && x >= ax.min(bx) && x <= ax.max(bx) && y >= ay.min(by) && y <= ay.max(by)
}

fn segment_distance(x: f64, y: f64, [ax, ay]: Coord, [bx, by]: Coord) -> f64 {
    let (dx, dy) = (bx - ax, by - ay);
    let len2 = dx * dx + dy * dy;
    let t = if len2 > 0.0 {
        (((x - ax) * dx + (y - ay) * dy) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    let (px, py) = (ax + t * dx, ay + t * dy);
    ((x - px).powi(2) + (y - py).powi(2)).sqrt()
}

/// Planar distance with longitude wrapping at ±180.
fn wrapped_segment_distance(x: f64, y: f64, a: Coord, b: Coord) -> f64 {
    [x - 360.0, x, x + 360.0]
        .into_iter()
        .map(|sx| segment_distance(sx, y, a, b))
        .fold(f64::INFINITY, f64::min)
}

/// Immutable grid index over polygon bounding boxes.
///
/// The lon/lat plane is cut into square cells; each cell lists every
/// polygon whose bbox touches it, so a point's cell always holds a
/// superset of the polygons containing it.
pub struct GeoIndex {
    set: BoundarySet,
    polygons: Vec<PreparedPolygon>,
    cell_deg: f64,
    cols: usize,
    rows: usize,
    cell_offsets: Vec<u32>,
    cell_items: Vec<u32>,
}

impl GeoIndex {
    pub fn build(set: BoundarySet) -> Self {
        Self::with_cell_size(set, 1.0)
    }

    pub fn with_cell_size(set: BoundarySet, cell_deg: f64) -> Self {
        assert!(cell_deg > 0.0 && cell_deg.is_finite(), "cell size must be positive");
        let cols = (360.0 / cell_deg).ceil() as usize;
        let rows = (180.0 / cell_deg).ceil() as usize;

        let mut polygons = Vec::new();
        for (i, country) in set.countries().iter().enumerate() {
            for poly in &country.polygons {
                polygons.push(PreparedPolygon::new(CountryId(i as u32), poly));
            }
        }

        let mut buckets: Vec<Vec<u32>> = vec![Vec::new(); cols * rows];
        for (pid, poly) in polygons.iter().enumerate() {
            let [x0, y0, x1, y1] = poly.bbox;
            let (c0, c1) = (col_of(x0, cell_deg, cols), col_of(x1, cell_deg, cols));
            let (r0, r1) = (row_of(y0, cell_deg, rows), row_of(y1, cell_deg, rows));
            for r in r0..=r1 {
                for c in c0..=c1 {
                    buckets[r * cols + c].push(pid as u32);
                }
            }
        }
        let mut cell_offsets = Vec::with_capacity(buckets.len() + 1);
        let mut cell_items = Vec::new();
        cell_offsets.push(0);
        for b in buckets {
            cell_items.extend(b);
            cell_offsets.push(cell_items.len() as u32);
        }

        GeoIndex {
            set,
            polygons,
            cell_deg,
            cols,
            rows,
            cell_offsets,
            cell_items,
        }
    }

    pub fn boundaries(&self) -> &BoundarySet {
        &self.set
    }

    pub fn code(&self, id: CountryId) -> &str {
        &self.set.countries()[id.0 as usize].code
    }

    pub fn polygon_count(&self) -> usize {
        self.polygons.len()
    }

    fn cell(&self, c: usize, r: usize) -> &[u32] {
        let i = r * self.cols + c;
        &self.cell_items[self.cell_offsets[i] as usize..self.cell_offsets[i + 1] as usize]
    }

    /// Polygon ids (flattened over countries, in load order) whose bbox
    /// may contain the point.
    pub fn candidates(&self, lon: f64, lat: f64) -> &[u32] {
        let c = col_of(lon, self.cell_deg, self.cols);
        let r = row_of(lat, self.cell_deg, self.rows);
        self.cell(c, r)
    }

    /// Country that owns polygon `pid` as numbered by [`candidates`](Self::candidates).
    pub fn polygon_country(&self, pid: u32) -> CountryId {
        self.polygons[pid as usize].country
    }

    /// Reverse-geocodes one point.
    pub fn locate(&self, lon: f64, lat: f64, epsilon: f64) -> Location {
        for &pid in self.candidates(lon, lat) {
            let poly = &self.polygons[pid as usize];
            if poly.contains(lon, lat) {
                return Location::Inside(poly.country);
            }
        }
        if epsilon > 0.0 {
            if let Some(id) = self.nearest_within(lon, lat, epsilon) {
                return Location::Near(id);
            }
        }
        Location::Unassigned
    }

    fn nearest_within(&self, lon: f64, lat: f64, epsilon: f64) -> Option<CountryId> {
        let r0 = row_of(lat - epsilon, self.cell_deg, self.rows);
        let r1 = row_of(lat + epsilon, self.cell_deg, self.rows);
        let span = ((2.0 * epsilon) / self.cell_deg).ceil() as usize + 1;
        let cols: Vec<usize> = if span >= self.cols {
            (0..self.cols).collect()
        } else {
            let start = ((lon - epsilon + 180.0) / self.cell_deg).floor() as isize;
            (0..=span as isize)
                .map(|k| (start + k).rem_euclid(self.cols as isize) as usize)
                .collect()
        };

        let mut seen: Vec<u32> = Vec::new();
        for r in r0..=r1 {
            for &c in &cols {
                seen.extend_from_slice(self.cell(c, r));
            }
        }
        seen.sort_unstable();
        seen.dedup();

        let mut best: Option<(f64, CountryId)> = None;
        for pid in seen {
            let poly = &self.polygons[pid as usize];
            let d = poly.boundary_distance(lon, lat);
            if d > epsilon {
                continue;
            }
            best = match best {
                Some((bd, bid)) if bd < d || (bd == d && bid <= poly.country) => Some((bd, bid)),
                _ => Some((d, poly.country)),
            };
        }
        best.map(|(_, id)| id)
    }

    /// Elementwise [`locate`](Self::locate) on the current rayon pool; output
    /// order follows input order.
    pub fn locate_batch(&self, points: &[(f64, f64)], epsilon: f64) -> Vec<Location> {
        points
            .par_iter()
            .with_min_len(4096)
            .map(|&(lon, lat)| self.locate(lon, lat, epsilon))
            .collect()
    }
}

fn col_of(lon: f64, cell: f64, cols: usize) -> usize {
    (((lon + 180.0) / cell).floor().max(0.0) as usize).min(cols - 1)
}

fn row_of(lat: f64, cell: f64, rows: usize) -> usize {
    (((lat + 90.0) / cell).floor().max(0.0) as usize).min(rows - 1)
}
