use std::collections::{BTreeMap, HashMap};

use serde::{Deserialize, Serialize};

use super::{GeoPoint, GeolocError, LatLon, Projection};

/// One row of a walk-test survey.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurveyPoint {
    pub lat: f64,
    pub lon: f64,
    pub beam_idx: u8,
    pub rsrp_dbm: f64,
    pub ta: u32,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FingerprintParams {
    /// Points of one beam further apart than this start a new area.
    pub gap_threshold_m: f64,
    /// Hulls closer than this are adjacent.
    pub adjacency_distance_m: f64,
    pub min_points: usize,
    /// Numerology the survey TA values were taken at.
    pub mu: u8,
}

impl Default for FingerprintParams {
    fn default() -> Self {
        Self { gap_threshold_m: 30.0, adjacency_distance_m: 5.0, min_points: 3, mu: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BeamArea {
    pub id: usize,
    pub beam_idx: u8,
    /// Convex hull, counter-clockwise.
    pub polygon: Vec<GeoPoint>,
    pub centroid: GeoPoint,
    /// Unit direction of the ray from the BS through the centroid.
    pub bisector: GeoPoint,
    pub ta_histogram: BTreeMap<u32, u32>,
    pub points: usize,
    /// Radial extent of the surveyed points.
    pub r_min: f64,
    pub r_max: f64,
    pub mean_rsrp_dbm: f64,
}

impl BeamArea {
    pub fn ta_total(&self) -> u32 {
        self.ta_histogram.values().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FingerprintMap {
    pub bs: LatLon,
    pub params: FingerprintParams,
    pub areas: Vec<BeamArea>,
    /// Adjacent area pairs `(a, b)` with `a < b`, sorted.
    pub adjacency: Vec<(usize, usize)>,
}

impl FingerprintMap {
    pub fn projection(&self) -> Projection {
        Projection::new(self.bs)
    }

    pub fn areas_of(&self, beam: u8) -> impl Iterator<Item = &BeamArea> {
        self.areas.iter().filter(move |a| a.beam_idx == beam)
    }

    pub fn are_adjacent(&self, a: usize, b: usize) -> bool {
        a != b && self.adjacency.binary_search(&(a.min(b), a.max(b))).is_ok()
    }

    pub fn neighbours(&self, a: usize) -> impl Iterator<Item = usize> + '_ {
        self.adjacency.iter().filter_map(move |&(i, j)| match (i == a, j == a) {
            (true, _) => Some(j),
            (_, true) => Some(i),
            _ => None,
        })
    }

    pub fn beam_count(&self) -> usize {
        let mut b: Vec<u8> = self.areas.iter().map(|a| a.beam_idx).collect();
        b.sort_unstable();
        b.dedup();
        b.len()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("map serializes")
    }

    pub fn from_json(text: &str) -> Result<Self, GeolocError> {
        let m: Self = serde_json::from_str(text).map_err(|e| GeolocError::Schema(format!("fingerprint map: {e}")))?;
        let n = m.areas.len();
        let sorted = m.adjacency.windows(2).all(|w| w[0] < w[1]);
        if !sorted || m.adjacency.iter().any(|&(a, b)| a >= b || b >= n) {
            return Err(GeolocError::Schema("fingerprint map: malformed adjacency".into()));
        }
        if m.areas.iter().enumerate().any(|(i, a)| a.id != i) {
            return Err(GeolocError::Schema("fingerprint map: area ids out of order".into()));
        }
        Ok(m)
    }
}

/// Andrew's monotone chain; counter-clockwise, collinear points dropped.
pub fn convex_hull(points: &[GeoPoint]) -> Vec<GeoPoint> {
    let mut p: Vec<GeoPoint> = points.to_vec();
    p.sort_by(|a, b| a.x.total_cmp(&b.x).then(a.y.total_cmp(&b.y)));
    p.dedup();
    if p.len() < 3 {
        return p;
    }
    let turn = |o: GeoPoint, a: GeoPoint, b: GeoPoint| (a - o).cross(b - o);
    let mut hull: Vec<GeoPoint> = Vec::with_capacity(2 * p.len());
    for pass in 0..2 {
        let start = hull.len();
        let iter: Box<dyn Iterator<Item = &GeoPoint>> =
            if pass == 0 { Box::new(p.iter()) } else { Box::new(p.iter().rev()) };
        for &q in iter {
            while hull.len() >= start + 2 && turn(hull[hull.len() - 2], hull[hull.len() - 1], q) <= 0.0 {
                hull.pop();
            }
            hull.push(q);
        }
        hull.pop();
    }
    hull
}

fn polygon_area_centroid(poly: &[GeoPoint]) -> (f64, GeoPoint) {
    let n = poly.len();
    let (mut a, mut cx, mut cy) = (0.0, 0.0, 0.0);
    for i in 0..n {
        let (p, q) = (poly[i], poly[(i + 1) % n]);
        let c = p.cross(q);
        a += c;
        cx += (p.x + q.x) * c;
        cy += (p.y + q.y) * c;
    }
    let a = a / 2.0;
    if a.abs() < 1e-12 {
        return (0.0, GeoPoint::ORIGIN);
    }
    (a, GeoPoint::new(cx / (6.0 * a), cy / (6.0 * a)))
}

fn point_segment_dist(p: GeoPoint, a: GeoPoint, b: GeoPoint) -> f64 {
    let ab = b - a;
    let len2 = ab.dot(ab);
    if len2 == 0.0 {
        return p.dist(a);
    }
    let t = ((p - a).dot(ab) / len2).clamp(0.0, 1.0);
    p.dist(a + ab.scale(t))
}

fn inside_convex(p: GeoPoint, poly: &[GeoPoint]) -> bool {
    let n = poly.len();
    n >= 3 && (0..n).all(|i| (poly[(i + 1) % n] - poly[i]).cross(p - poly[i]) >= 0.0)
}

fn segments_cross(a: GeoPoint, b: GeoPoint, c: GeoPoint, d: GeoPoint) -> bool {
    let o = |p: GeoPoint, q: GeoPoint, r: GeoPoint| (q - p).cross(r - p);
    let (d1, d2, d3, d4) = (o(c, d, a), o(c, d, b), o(a, b, c), o(a, b, d));
    (d1 * d2 < 0.0) && (d3 * d4 < 0.0)
}

/// Separation between two convex polygons; zero when they overlap.
fn hull_distance(p: &[GeoPoint], q: &[GeoPoint]) -> f64 {
    if p.iter().any(|&v| inside_convex(v, q)) || q.iter().any(|&v| inside_convex(v, p)) {
        return 0.0;
    }
    let edges = |poly: &[GeoPoint]| -> Vec<(GeoPoint, GeoPoint)> {
        (0..poly.len()).map(|i| (poly[i], poly[(i + 1) % poly.len()])).collect()
    };
    let (ep, eq) = (edges(p), edges(q));
    if ep.iter().any(|&(a, b)| eq.iter().any(|&(c, d)| segments_cross(a, b, c, d))) {
        return 0.0;
    }
    let d1 = p.iter().flat_map(|&v| eq.iter().map(move |&(c, d)| point_segment_dist(v, c, d)));
    let d2 = q.iter().flat_map(|&v| ep.iter().map(move |&(a, b)| point_segment_dist(v, a, b)));
    d1.chain(d2).fold(f64::INFINITY, f64::min)
}

/// Single-linkage clusters at distance `gap`, ordered by first member.
fn cluster(points: &[GeoPoint], gap: f64) -> Vec<Vec<usize>> {
    let mut parent: Vec<usize> = (0..points.len()).collect();
    fn find(parent: &mut [usize], mut i: usize) -> usize {
        while parent[i] != i {
            parent[i] = parent[parent[i]];
            i = parent[i];
        }
        i
    }
    let cell = |p: GeoPoint| ((p.x / gap).floor() as i64, (p.y / gap).floor() as i64);
    let mut grid: HashMap<(i64, i64), Vec<usize>> = HashMap::new();
    for (i, &p) in points.iter().enumerate() {
        grid.entry(cell(p)).or_default().push(i);
    }
    for (i, &p) in points.iter().enumerate() {
        let (cx, cy) = cell(p);
        for dx in -1..=1 {
            for dy in -1..=1 {
                let Some(members) = grid.get(&(cx + dx, cy + dy)) else { continue };
                for &j in members {
                    if j > i && p.dist(points[j]) <= gap {
                        let (a, b) = (find(&mut parent, i), find(&mut parent, j));
                        if a != b {
                            parent[a.max(b)] = a.min(b);
                        }
                    }
                }
            }
        }
    }
    let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for i in 0..points.len() {
        let r = find(&mut parent, i);
        groups.entry(r).or_default().push(i);
    }
    groups.into_values().collect()
}

pub fn build_fingerprint(
    survey: &[SurveyPoint],
    bs: LatLon,
    params: FingerprintParams,
) -> Result<FingerprintMap, GeolocError> {
    if params.gap_threshold_m.is_nan()
        || params.gap_threshold_m <= 0.0
        || params.adjacency_distance_m.is_nan()
        || params.adjacency_distance_m < 0.0
        || params.min_points < 3
    {
        return Err(GeolocError::InvalidParams("need gap > 0, adjacency >= 0, min_points >= 3".into()));
    }
    let proj = Projection::new(bs);
    let mut rows: Vec<SurveyPoint> = survey.to_vec();
    rows.sort_by(|a, b| a.lat.total_cmp(&b.lat).then(a.lon.total_cmp(&b.lon)).then(a.beam_idx.cmp(&b.beam_idx)));

    let mut by_beam: BTreeMap<u8, Vec<(GeoPoint, SurveyPoint)>> = BTreeMap::new();
    for r in rows {
        let p = proj.to_local(LatLon::new(r.lat, r.lon));
        if !p.is_finite() {
            return Err(GeolocError::Schema(format!("non-finite survey coordinate {},{}", r.lat, r.lon)));
        }
        by_beam.entry(r.beam_idx).or_default().push((p, r));
    }

    let mut areas = Vec::new();
    for (beam, pts) in by_beam {
        let xy: Vec<GeoPoint> = pts.iter().map(|p| p.0).collect();
        for members in cluster(&xy, params.gap_threshold_m) {
            if members.len() < params.min_points {
                continue;
            }
            let cpts: Vec<GeoPoint> = members.iter().map(|&i| xy[i]).collect();
            let polygon = convex_hull(&cpts);
            let (area, centroid) = polygon_area_centroid(&polygon);
            if polygon.len() < 3 || area <= 1e-9 {
                continue;
            }
            let norm = centroid.norm();
            let bisector = if norm > 0.0 { centroid.scale(1.0 / norm) } else { GeoPoint::new(0.0, 1.0) };
            let mut ta_histogram = BTreeMap::new();
            for &i in &members {
                *ta_histogram.entry(pts[i].1.ta).or_insert(0) += 1;
            }
            let radii = cpts.iter().map(|p| p.norm());
            let r_min = radii.clone().fold(f64::INFINITY, f64::min);
            let r_max = radii.fold(0.0, f64::max);
            let mean_rsrp_dbm = members.iter().map(|&i| pts[i].1.rsrp_dbm).sum::<f64>() / members.len() as f64;
            areas.push(BeamArea {
                id: areas.len(),
                beam_idx: beam,
                polygon,
                centroid,
                bisector,
                ta_histogram,
                points: members.len(),
                r_min,
                r_max,
                mean_rsrp_dbm,
            });
        }
    }
    if areas.is_empty() {
        return Err(GeolocError::InsufficientSurvey(params.min_points));
    }

    let reach: Vec<f64> =
        areas.iter().map(|a| a.polygon.iter().map(|v| v.dist(a.centroid)).fold(0.0, f64::max)).collect();
    let mut adjacency = Vec::new();
    for i in 0..areas.len() {
        for j in i + 1..areas.len() {
            let gap = areas[i].centroid.dist(areas[j].centroid) - reach[i] - reach[j];
            if gap <= params.adjacency_distance_m
                && hull_distance(&areas[i].polygon, &areas[j].polygon) <= params.adjacency_distance_m
            {
                adjacency.push((i, j));
            }
        }
    }
    Ok(FingerprintMap { bs, params, areas, adjacency })
}
