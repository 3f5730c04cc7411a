//! Great-circle distances and nearest-neighbour search over venue coordinates.

use rayon::prelude::*;

/// Mean Earth radius in meters.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Point {
    pub lat: f64,
    pub lon: f64,
}

impl Point {
    pub fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }
}

/// Haversine distance in meters.
pub fn haversine(a: Point, b: Point) -> f64 {
    let (phi1, phi2) = (a.lat.to_radians(), b.lat.to_radians());
    let dphi = phi2 - phi1;
    let dlambda = (b.lon - a.lon).to_radians();
    let h = (dphi / 2.0).sin().powi(2) + phi1.cos() * phi2.cos() * (dlambda / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_M * h.sqrt().min(1.0).asin()
}

/// O(n²) nearest-other-point distances. Requires at least two points.
pub fn nearest_brute_force(points: &[Point]) -> Vec<f64> {
    points
        .par_iter()
        .enumerate()
        .map(|(i, &p)| {
            points
                .iter()
                .enumerate()
                .filter(|&(j, _)| j != i)
                .map(|(_, &q)| haversine(p, q))
                .fold(f64::INFINITY, f64::min)
        })
        .collect()
}

/// Uniform lat/lon bucket grid with expanding-ring search.
///
/// The ring search stops once every point outside the searched block is
/// provably farther than the best candidate, so results equal
/// [`nearest_brute_force`] exactly: both take the minimum of the same
/// `haversine` values.
pub struct GridIndex<'a> {
    points: &'a [Point],
    lat0: f64,
    lon0: f64,
    cell_lat: f64,
    cell_lon: f64,
    rows: usize,
    cols: usize,
    // Bucket start offsets into `order` (CSR layout), rows * cols + 1 entries.
    starts: Vec<usize>,
    order: Vec<usize>,
    cos_max_lat: f64,
}

impl<'a> GridIndex<'a> {
    /// Returns `None` when the points span more than 180° of longitude; the
    /// ring bound assumes no antimeridian wrap.
    pub fn build(points: &'a [Point]) -> Option<Self> {
        if points.is_empty() {
            return None;
        }
        let (mut lat_min, mut lat_max) = (f64::INFINITY, f64::NEG_INFINITY);
        let (mut lon_min, mut lon_max) = (f64::INFINITY, f64::NEG_INFINITY);
        for p in points {
            lat_min = lat_min.min(p.lat);
            lat_max = lat_max.max(p.lat);
            lon_min = lon_min.min(p.lon);
            lon_max = lon_max.max(p.lon);
        }
        if lon_max - lon_min > 180.0 {
            return None;
        }
        // About two points per cell on average.
        let target_cells = (points.len() / 2).max(1) as f64;
        let span_lat = (lat_max - lat_min).max(1e-9);
        let span_lon = (lon_max - lon_min).max(1e-9);
        let side = (span_lat * span_lon / target_cells).sqrt().max(1e-9);
        let rows = ((span_lat / side).ceil() as usize).clamp(1, 4096);
        let cols = ((span_lon / side).ceil() as usize).clamp(1, 4096);
        let cell_lat = span_lat / rows as f64;
        let cell_lon = span_lon / cols as f64;

        let cell_of = |p: &Point| {
            let r = (((p.lat - lat_min) / cell_lat) as usize).min(rows - 1);
            let c = (((p.lon - lon_min) / cell_lon) as usize).min(cols - 1);
            r * cols + c
        };
        let mut starts = vec![0usize; rows * cols + 1];
        for p in points {
            starts[cell_of(p) + 1] += 1;
        }
        for i in 1..starts.len() {
            starts[i] += starts[i - 1];
        }
        let mut fill = starts.clone();
        let mut order = vec![0usize; points.len()];
        for (i, p) in points.iter().enumerate() {
            let cell = cell_of(p);
            order[fill[cell]] = i;
            fill[cell] += 1;
        }
        let max_abs_lat = lat_min.abs().max(lat_max.abs()).min(90.0);
        Some(Self {
            points,
            lat0: lat_min,
            lon0: lon_min,
            cell_lat,
            cell_lon,
            rows,
            cols,
            starts,
            order,
            cos_max_lat: max_abs_lat.to_radians().cos(),
        })
    }

    fn cell_coords(&self, p: Point) -> (usize, usize) {
        let r = (((p.lat - self.lat0) / self.cell_lat).max(0.0) as usize).min(self.rows - 1);
        let c = (((p.lon - self.lon0) / self.cell_lon).max(0.0) as usize).min(self.cols - 1);
        (r, c)
    }

    /// Lower bound on the distance from a point to anything outside the
    /// (2·ring+1)² block of cells centred on its cell.
    fn ring_bound(&self, ring: usize) -> f64 {
        let r = ring as f64;
        let lat_bound = EARTH_RADIUS_M * (r * self.cell_lat).to_radians();
        // hav(d/R) >= cos²(φmax) hav(Δλ) for points with |φ| <= φmax.
        let dlon = (r * self.cell_lon).min(180.0).to_radians();
        let lon_bound =
            2.0 * EARTH_RADIUS_M * (self.cos_max_lat * (dlon / 2.0).sin()).min(1.0).asin();
        lat_bound.min(lon_bound)
    }

    fn bucket(&self, r: usize, c: usize) -> &[usize] {
        let cell = r * self.cols + c;
        &self.order[self.starts[cell]..self.starts[cell + 1]]
    }

    /// Distance from point `i` to its nearest other point.
    pub fn nearest(&self, i: usize) -> f64 {
        let p = self.points[i];
        let (r0, c0) = self.cell_coords(p);
        let max_ring = self.rows.max(self.cols);
        let mut best = f64::INFINITY;
        for ring in 0..=max_ring {
            let r_lo = r0.saturating_sub(ring);
            let r_hi = (r0 + ring).min(self.rows - 1);
            let c_lo = c0.saturating_sub(ring);
            let c_hi = (c0 + ring).min(self.cols - 1);
            for r in r_lo..=r_hi {
                for c in c_lo..=c_hi {
                    // only the perimeter of the ring is new
                    if ring > 0
                        && r != r0.wrapping_sub(ring)
                        && r != r0 + ring
                        && c != c0.wrapping_sub(ring)
                        && c != c0 + ring
                    {
                        continue;
                    }
                    for &j in self.bucket(r, c) {
                        if j != i {
                            best = best.min(haversine(p, self.points[j]));
                        }
                    }
                }
            }
            // Small relative margin absorbs rounding in the bound itself.
            if best <= self.ring_bound(ring) * (1.0 - 1e-9) {
                break;
            }
        }
        best
    }
}

/// Nearest-other-point distances via the grid index, falling back to brute
/// force when the grid does not apply.
pub fn nearest_grid(points: &[Point]) -> Vec<f64> {
    match GridIndex::build(points) {
        Some(index) => (0..points.len())
            .into_par_iter()
            .map(|i| index.nearest(i))
            .collect(),
        None => nearest_brute_force(points),
    }
}
