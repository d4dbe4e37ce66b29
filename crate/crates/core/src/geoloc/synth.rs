//! Synthetic urban cell used to exercise the geolocation pipeline.
//!
//! A BS at the origin serves a 120 degree wedge facing north with 48 beams.
//! Pedestrians move on east-west streets, which the BS sees in line of sight,
//! and on short north-south connectors between them. Connectors are shadowed
//! by buildings; a UE there is served by a reflection arriving on an
//! unrelated beam, so those beams own more than one area.
//!
//! [`World::open_wedge`] is the same fan over open ground: every beam owns
//! exactly one area and all positions are in line of sight.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use std::fs;
use std::path::{Path, PathBuf};

use super::io::{parse_csv, write_csv, write_csv_file, TruthPoint, SURVEY_HEADER};
use super::{build_fingerprint, FingerprintParams, GeoPoint, GeolocError, LatLon, Projection, SurveyPoint};
use crate::attacker::{ObservedCsi, ObservedRa};
use crate::time::{ta_for_distance, Rnti};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Layout {
    Streets,
    /// Everything between `r_min` and the coverage edge is open ground.
    Open {
        r_min: f64,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct World {
    pub layout: Layout,
    pub bs: LatLon,
    pub mu: u8,
    pub beams: u8,
    pub span_deg: f64,
    /// Radius at which a beam is 20 m wide.
    pub r_max: f64,
    pub streets_y: Vec<f64>,
    pub connectors_x: Vec<f64>,
    pub street_half_width: f64,
    pub rsrp_at_100m_dbm: f64,
    pub reflection_loss_db: f64,
}

impl Default for World {
    fn default() -> Self {
        let beams = 48u8;
        let span_deg = 120.0;
        let beam_rad = (span_deg / f64::from(beams)).to_radians();
        Self {
            layout: Layout::Streets,
            bs: LatLon::new(40.4168, -3.7038),
            mu: 3,
            beams,
            span_deg,
            r_max: 20.0 / beam_rad,
            streets_y: vec![130.0, 190.0, 250.0, 310.0, 370.0, 430.0],
            connectors_x: vec![-150.0, -90.0, -30.0, 30.0, 90.0, 150.0],
            street_half_width: 6.0,
            rsrp_at_100m_dbm: -70.0,
            reflection_loss_db: 4.0,
        }
    }
}

/// How a position is served.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Serving {
    pub beam: u8,
    pub rsrp_dbm: f64,
    pub los: bool,
}

/// Survey rows sit this far either side of a street or connector axis.
const ROW_OFFSETS: [f64; 4] = [-4.5, -1.5, 1.5, 4.5];
/// Grid pitch of the open-ground survey.
const OPEN_GRID_M: f64 = 3.0;

impl World {
    /// Open ground from 130 m out. Beams there are wider than the adjacency
    /// distance, so only neighbouring indices end up adjacent.
    pub fn open_wedge() -> Self {
        Self { layout: Layout::Open { r_min: 130.0 }, streets_y: vec![], connectors_x: vec![], ..Self::default() }
    }

    pub fn beam_width_rad(&self) -> f64 {
        (self.span_deg / f64::from(self.beams)).to_radians()
    }

    pub fn projection(&self) -> Projection {
        Projection::new(self.bs)
    }

    pub fn fingerprint_params(&self) -> FingerprintParams {
        FingerprintParams { mu: self.mu, ..FingerprintParams::default() }
    }

    /// Beam whose sector contains `p`, if the BS covers it.
    pub fn los_beam(&self, p: GeoPoint) -> Option<u8> {
        let r = p.norm();
        let half = (self.span_deg / 2.0).to_radians();
        let az = p.azimuth();
        if r <= 0.0 || r > self.r_max || az.abs() >= half {
            return None;
        }
        Some((((az + half) / self.beam_width_rad()).floor() as u8).min(self.beams - 1))
    }

    fn los_rsrp(&self, p: GeoPoint) -> f64 {
        self.rsrp_at_100m_dbm - 20.0 * (p.norm() / 100.0).log10()
    }

    fn covered(&self, p: GeoPoint) -> bool {
        self.los_beam(p).is_some()
    }

    /// Connector `(column, gap)` exists when both its ends are covered.
    fn connector_exists(&self, col: usize, gap: usize) -> bool {
        let x = self.connectors_x[col];
        let w = self.street_half_width;
        let (y0, y1) = (self.streets_y[gap], self.streets_y[gap + 1]);
        [(x - w, y0), (x + w, y0), (x - w, y1), (x + w, y1)].iter().all(|&(a, b)| self.covered(GeoPoint::new(a, b)))
    }

    fn connector_mid(&self, col: usize, gap: usize) -> GeoPoint {
        GeoPoint::new(self.connectors_x[col], (self.streets_y[gap] + self.streets_y[gap + 1]) / 2.0)
    }

    /// Beam a shadowed connector is reached by: roughly the opposite side
    /// of the fan, kept distinct from the connector just below.
    pub fn reflection_beam(&self, col: usize, gap: usize) -> u8 {
        let los = self.los_beam(self.connector_mid(col, gap)).expect("connector is covered");
        let mut b = (los + self.beams / 2) % self.beams;
        if gap > 0 && self.connector_exists(col, gap - 1) && self.reflection_beam(col, gap - 1) == b {
            b = (b + 1) % self.beams;
        }
        b
    }

    fn street_at(&self, p: GeoPoint) -> Option<usize> {
        self.streets_y.iter().position(|&y| (p.y - y).abs() <= self.street_half_width)
    }

    fn connector_at(&self, p: GeoPoint) -> Option<(usize, usize)> {
        let col = self.connectors_x.iter().position(|&x| (p.x - x).abs() <= self.street_half_width)?;
        let w = self.street_half_width;
        let gap = self.streets_y.windows(2).position(|s| p.y > s[0] + w && p.y < s[1] - w)?;
        self.connector_exists(col, gap).then_some((col, gap))
    }

    pub fn serving(&self, p: GeoPoint) -> Option<Serving> {
        if let Layout::Open { r_min } = self.layout {
            if p.norm() < r_min {
                return None;
            }
            return self.los_beam(p).map(|beam| Serving { beam, rsrp_dbm: self.los_rsrp(p), los: true });
        }
        if self.street_at(p).is_some() {
            return self.los_beam(p).map(|beam| Serving { beam, rsrp_dbm: self.los_rsrp(p), los: true });
        }
        let (col, gap) = self.connector_at(p)?;
        Some(Serving {
            beam: self.reflection_beam(col, gap),
            rsrp_dbm: self.los_rsrp(p) - self.reflection_loss_db,
            los: false,
        })
    }

    /// Walkable x-range of a street, keeping `margin` from the coverage edge.
    pub fn street_extent(&self, street: usize, margin: f64) -> (f64, f64) {
        let y = self.streets_y[street];
        let w = self.street_half_width;
        let half = (self.span_deg / 2.0).to_radians();
        let lim = [y - w, y + w]
            .iter()
            .map(|&yy| (yy * half.tan()).min((self.r_max * self.r_max - yy * yy).max(0.0).sqrt()))
            .fold(f64::INFINITY, f64::min);
        (-lim + margin, lim - margin)
    }

    /// A walk-test over every street and connector, one point per metre,
    /// or a regular grid over open ground.
    pub fn survey(&self) -> Vec<SurveyPoint> {
        let proj = self.projection();
        let mut pts = Vec::new();
        let mut push = |p: GeoPoint| {
            if let Some(s) = self.serving(p) {
                let ll = proj.to_latlon(p);
                pts.push(SurveyPoint {
                    lat: ll.lat,
                    lon: ll.lon,
                    beam_idx: s.beam,
                    rsrp_dbm: s.rsrp_dbm,
                    ta: ta_for_distance(p.norm(), self.mu),
                });
            }
        };
        if let Layout::Open { .. } = self.layout {
            let n = (self.r_max / OPEN_GRID_M).ceil() as i32;
            for j in 0..=n {
                for i in -n..=n {
                    push(GeoPoint::new((f64::from(i) + 0.5) * OPEN_GRID_M, (f64::from(j) + 0.5) * OPEN_GRID_M));
                }
            }
            return pts;
        }
        for &y in &self.streets_y {
            for o in ROW_OFFSETS {
                for i in -460..=460 {
                    push(GeoPoint::new(f64::from(i) + 0.5, y + o));
                }
            }
        }
        let w = self.street_half_width;
        for col in 0..self.connectors_x.len() {
            for gap in 0..self.streets_y.len() - 1 {
                if !self.connector_exists(col, gap) {
                    continue;
                }
                let (y0, y1) = (self.streets_y[gap] + w + 0.5, self.streets_y[gap + 1] - w);
                for o in ROW_OFFSETS {
                    let mut y = y0;
                    while y < y1 {
                        push(GeoPoint::new(self.connectors_x[col] + o, y));
                        y += 1.0;
                    }
                }
            }
        }
        pts
    }

    /// `n` points uniform over the walkable, covered area.
    pub fn test_points(&self, n: usize, seed: u64) -> Vec<GeoPoint> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let (x0, x1) = (-self.r_max, self.r_max);
        let (y0, y1) = match self.layout {
            Layout::Open { .. } => (0.0, self.r_max),
            Layout::Streets => (
                self.streets_y[0] - self.street_half_width,
                self.streets_y[self.streets_y.len() - 1] + self.street_half_width,
            ),
        };
        let mut out = Vec::with_capacity(n);
        while out.len() < n {
            let p = GeoPoint::new(rng.random_range(x0..x1), rng.random_range(y0..y1));
            if self.serving(p).is_some() {
                out.push(p);
            }
        }
        out
    }

    /// What a passive listener extracts from each point's RA exchange.
    pub fn ra_log(&self, points: &[GeoPoint]) -> Vec<ObservedRa> {
        points
            .iter()
            .enumerate()
            .map(|(i, &p)| ObservedRa {
                t_ms: 1000.0 * i as f64,
                beam_idx: self.serving(p).expect("test point covered").beam,
                ta: ta_for_distance(p.norm(), self.mu),
            })
            .collect()
    }

    /// A pedestrian walk of about `length_m` metres: along streets, turning
    /// through connectors or at the end of a street.
    pub fn walk(&self, length_m: f64, rng: &mut impl Rng) -> Vec<GeoPoint> {
        let margin = 3.0;
        let mut street = rng.random_range(0..self.streets_y.len());
        let lateral = |rng: &mut dyn rand::RngCore| rng.random_range(-3.0..3.0);
        let (lo, hi) = self.street_extent(street, margin);
        let mut y = self.streets_y[street] + lateral(rng);
        let mut pos = GeoPoint::new(rng.random_range(lo..hi), y);
        let mut east = rng.random_bool(0.5);
        let mut left = length_m;
        let mut out = vec![pos];
        while left > 1e-9 {
            let (lo, hi) = self.street_extent(street, margin);
            // Next connector column ahead on this street, with somewhere to go.
            let ahead = self
                .connectors_x
                .iter()
                .enumerate()
                .filter(|&(_, &x)| if east { x > pos.x + 1.0 && x <= hi } else { x < pos.x - 1.0 && x >= lo })
                .min_by(|a, b| (a.1 - pos.x).abs().total_cmp(&(b.1 - pos.x).abs()));
            let end = if east { hi } else { lo };
            let target_x = ahead.map_or(end, |(_, &x)| x);
            let step = (target_x - pos.x).abs().min(left);
            pos = GeoPoint::new(pos.x + if east { step } else { -step }, y);
            left -= step;
            out.push(pos);
            if left <= 1e-9 {
                break;
            }
            let Some((col, _)) = ahead else {
                east = !east;
                continue;
            };
            let mut gaps = Vec::new();
            if street > 0 && self.connector_exists(col, street - 1) {
                gaps.push(street - 1);
            }
            if street + 1 < self.streets_y.len() && self.connector_exists(col, street) {
                gaps.push(street + 1);
            }
            if gaps.is_empty() || !rng.random_bool(0.5) {
                continue;
            }
            let next = gaps[rng.random_range(0..gaps.len())];
            let x = self.connectors_x[col] + lateral(rng);
            let ny = self.streets_y[next] + lateral(rng);
            let corner = GeoPoint::new(x, y);
            let leg = [corner, GeoPoint::new(x, ny)];
            for q in leg {
                let d = pos.dist(q).min(left);
                if d > 0.0 {
                    pos = pos + (q - pos).scale(d / pos.dist(q));
                    left -= d;
                    out.push(pos);
                }
                if left <= 1e-9 {
                    break;
                }
            }
            street = next;
            y = ny;
            east = rng.random_bool(0.5);
        }
        out
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseModel {
    pub period_ms: f64,
    pub speed_mps: f64,
    /// Within this lateral distance of a beam edge the neighbour beam is
    /// reported some of the time.
    pub flicker_m: f64,
    pub outlier_prob: f64,
    pub outlier_drop_db: f64,
    pub rsrp_sigma_db: f64,
}

impl Default for NoiseModel {
    fn default() -> Self {
        Self {
            period_ms: 40.0,
            speed_mps: 1.4,
            flicker_m: 2.0,
            outlier_prob: 0.03,
            outlier_drop_db: 25.0,
            rsrp_sigma_db: 1.0,
        }
    }
}

/// Positions every `period_ms` along a polyline walked at `speed_mps`.
pub fn sample_walk(truth: &[GeoPoint], noise: &NoiseModel) -> Vec<(f64, GeoPoint)> {
    let step = noise.speed_mps * noise.period_ms / 1000.0;
    let mut out = Vec::new();
    let mut t = 0.0;
    let mut carry = 0.0;
    for w in truth.windows(2) {
        let len = w[0].dist(w[1]);
        let mut s = carry;
        while s < len {
            out.push((t, w[0] + (w[1] - w[0]).scale(s / len)));
            t += noise.period_ms;
            s += step;
        }
        carry = s - len;
    }
    if let Some(&last) = truth.last() {
        out.push((t, last));
    }
    out
}

impl World {
    /// CSI reports a UE walking `truth` would send, with noise.
    pub fn csi_trace(
        &self,
        truth: &[GeoPoint],
        rnti: Rnti,
        noise: &NoiseModel,
        rng: &mut impl Rng,
    ) -> Vec<ObservedCsi> {
        let gauss = Normal::new(0.0, noise.rsrp_sigma_db).expect("finite sigma");
        let bw = self.beam_width_rad();
        let half = (self.span_deg / 2.0).to_radians();
        let mut out = Vec::new();
        for (t_ms, p) in sample_walk(truth, noise) {
            let Some(s) = self.serving(p) else { continue };
            let mut beam = s.beam;
            let mut rsrp = s.rsrp_dbm + gauss.sample(rng);
            if s.los {
                let frac = (p.azimuth() + half) / bw - f64::from(beam);
                let (edge_m, neighbour) = if frac < 0.5 {
                    (frac * bw * p.norm(), beam.checked_sub(1))
                } else {
                    ((1.0 - frac) * bw * p.norm(), Some(beam + 1))
                };
                if let Some(nb) = neighbour.filter(|&b| b < self.beams) {
                    if edge_m < noise.flicker_m && rng.random_bool(0.5 * (1.0 - edge_m / noise.flicker_m)) {
                        beam = nb;
                    }
                }
            }
            if rng.random_bool(noise.outlier_prob) {
                let shift = rng.random_range(1..=6u8);
                beam =
                    if rng.random_bool(0.5) { beam.saturating_sub(shift) } else { (beam + shift).min(self.beams - 1) };
                rsrp -= noise.outlier_drop_db;
            }
            out.push(ObservedCsi { t_ms, rnti, beam_idx: beam, rsrp_dbm: rsrp });
        }
        out
    }

    /// Ground truth for a walk, timestamped like its CSI trace.
    pub fn truth_log(&self, truth: &[GeoPoint], noise: &NoiseModel) -> Vec<TruthPoint> {
        let proj = self.projection();
        let mut rows: Vec<TruthPoint> = Vec::new();
        let mut t = 0.0;
        for (i, &p) in truth.iter().enumerate() {
            if i > 0 {
                t += truth[i - 1].dist(p) / noise.speed_mps * 1000.0;
            }
            let ll = proj.to_latlon(p);
            rows.push(TruthPoint { t_ms: t, lat: ll.lat, lon: ll.lon });
        }
        rows
    }
}

/// One synthetic walk with its CSI reports.
#[derive(Debug, Clone, PartialEq)]
pub struct Walk {
    pub truth: Vec<GeoPoint>,
    pub reports: Vec<ObservedCsi>,
}

/// `count` walks of 20 to 150 m, one RNG stream per walk.
pub fn walks(world: &World, count: usize, seed: u64, noise: &NoiseModel) -> Vec<Walk> {
    (0..count)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(i as u64 + 1);
            let length = rng.random_range(20.0..=150.0);
            let truth = world.walk(length, &mut rng);
            let reports = world.csi_trace(&truth, Rnti(0x4601), noise, &mut rng);
            Walk { truth, reports }
        })
        .collect()
}

fn round_to(x: f64, decimals: i32) -> f64 {
    let k = 10f64.powi(decimals);
    (x * k).round() / k
}

fn rounded_latlon(ll: LatLon) -> (f64, f64) {
    (round_to(ll.lat, 7), round_to(ll.lon, 7))
}

fn rounded_survey(world: &World) -> Vec<SurveyPoint> {
    world
        .survey()
        .into_iter()
        .map(|s| {
            let (lat, lon) = rounded_latlon(LatLon::new(s.lat, s.lon));
            SurveyPoint { lat, lon, rsrp_dbm: round_to(s.rsrp_dbm, 2), ..s }
        })
        .collect()
}

fn mkdir(dir: &Path) -> Result<(), GeolocError> {
    fs::create_dir_all(dir).map_err(|e| GeolocError::Io(format!("{}: {e}", dir.display())))
}

fn write_text(path: &Path, text: &str) -> Result<(), GeolocError> {
    fs::write(path, text).map_err(|e| GeolocError::Io(format!("{}: {e}", path.display())))
}

/// Survey, map, RA log and truth for one synthetic cell.
fn write_cell(world: &World, dir: &Path, seed: u64, out: &mut Vec<PathBuf>) -> Result<(), GeolocError> {
    mkdir(dir)?;
    let survey = rounded_survey(world);
    let mut buf = Vec::new();
    write_csv(&mut buf, &survey)?;
    // The map is built from the file as written, so rebuilding it from
    // survey.csv gives the same bytes.
    let survey: Vec<SurveyPoint> = parse_csv(buf.as_slice(), &SURVEY_HEADER, "survey")?;
    let map = build_fingerprint(&survey, world.bs, world.fingerprint_params())?;
    let proj = world.projection();
    let pts = world.test_points(183, seed);
    let truth: Vec<TruthPoint> = world
        .ra_log(&pts)
        .iter()
        .zip(&pts)
        .map(|(ra, p)| {
            let (lat, lon) = rounded_latlon(proj.to_latlon(*p));
            TruthPoint { t_ms: ra.t_ms, lat, lon }
        })
        .collect();
    let files = [dir.join("survey.csv"), dir.join("map.json"), dir.join("ra_log.csv"), dir.join("truth.csv")];
    write_text(&files[0], std::str::from_utf8(&buf).expect("csv is utf-8"))?;
    write_text(&files[1], &(map.to_json() + "\n"))?;
    write_csv_file(&files[2], &world.ra_log(&pts))?;
    write_csv_file(&files[3], &truth)?;
    out.extend(files);
    Ok(())
}

/// Regenerate the bundled data set under `dir`.
///
/// * `wedge/`, `streets/`: survey, fingerprint map, 183-point RA log and
///   its ground truth for the open wedge and the street cell.
/// * `walks/NN/`: 30 noisy CSI traces over the street cell with truth.
/// * `flicker/csi.csv`: beams 20 and 21 of the wedge, `A x10, ABABAB, B x10`.
pub fn write_fixtures(dir: &Path) -> Result<Vec<PathBuf>, GeolocError> {
    let mut out = Vec::new();
    write_cell(&World::open_wedge(), &dir.join("wedge"), 2024, &mut out)?;
    let streets = World::default();
    write_cell(&streets, &dir.join("streets"), 2024, &mut out)?;

    let noise = NoiseModel::default();
    for (i, w) in walks(&streets, 30, 0, &noise).iter().enumerate() {
        let d = dir.join("walks").join(format!("{i:02}"));
        mkdir(&d)?;
        let csi: Vec<ObservedCsi> =
            w.reports.iter().map(|r| ObservedCsi { rsrp_dbm: round_to(r.rsrp_dbm, 2), ..*r }).collect();
        let truth: Vec<TruthPoint> = streets
            .truth_log(&w.truth, &noise)
            .into_iter()
            .map(|t| {
                let (lat, lon) = rounded_latlon(t.latlon());
                TruthPoint { t_ms: round_to(t.t_ms, 1), lat, lon }
            })
            .collect();
        write_csv_file(&d.join("csi.csv"), &csi)?;
        write_csv_file(&d.join("truth.csv"), &truth)?;
        out.extend([d.join("csi.csv"), d.join("truth.csv")]);
    }

    let d = dir.join("flicker");
    mkdir(&d)?;
    let beams: Vec<u8> = [vec![20u8; 10], vec![20, 21, 20, 21, 20, 21], vec![21u8; 10]].concat();
    let csi: Vec<ObservedCsi> = beams
        .iter()
        .enumerate()
        .map(|(i, &beam_idx)| ObservedCsi { t_ms: 40.0 * i as f64, rnti: Rnti(0x4601), beam_idx, rsrp_dbm: -80.0 })
        .collect();
    write_csv_file(&d.join("csi.csv"), &csi)?;
    out.push(d.join("csi.csv"));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn beam_geometry() {
        let w = World::default();
        assert!((w.r_max - 458.366).abs() < 0.01);
        assert!((w.beam_width_rad() * w.r_max - 20.0).abs() < 1e-9);
        assert_eq!(w.los_beam(GeoPoint::new(0.0, 100.0)), Some(24));
        assert_eq!(w.los_beam(GeoPoint::new(-0.01, 100.0)), Some(23));
        assert_eq!(w.los_beam(GeoPoint::new(0.0, -100.0)), None);
        assert_eq!(w.los_beam(GeoPoint::new(0.0, 460.0)), None);
    }

    #[test]
    fn connectors_are_reflected() {
        let w = World::default();
        let s = w.serving(GeoPoint::new(30.0, 160.0)).unwrap();
        assert!(!s.los);
        assert_ne!(Some(s.beam), w.los_beam(GeoPoint::new(30.0, 160.0)));
        assert!(w.serving(GeoPoint::new(60.0, 160.0)).is_none());
        assert!(w.serving(GeoPoint::new(60.0, 190.0)).unwrap().los);
    }

    #[test]
    fn open_wedge_is_all_line_of_sight() {
        let w = World::open_wedge();
        assert!(w.serving(GeoPoint::new(0.0, 100.0)).is_none());
        assert!(w.serving(GeoPoint::new(100.0, 160.0)).unwrap().los);
        let pts = w.test_points(50, 1);
        assert!(pts.iter().all(|p| p.norm() >= 130.0 && p.norm() <= w.r_max));
    }

    #[test]
    fn walks_stay_walkable_and_hit_length() {
        let w = World::default();
        for walk in walks(&w, 30, 5, &NoiseModel::default()) {
            let len: f64 = walk.truth.windows(2).map(|s| s[0].dist(s[1])).sum();
            assert!((20.0 - 1e-6..=150.0 + 1e-6).contains(&len), "{len}");
            for (_, p) in sample_walk(&walk.truth, &NoiseModel::default()) {
                assert!(w.serving(p).is_some(), "{p:?} not covered");
            }
        }
    }
}
