use serde::{Deserialize, Serialize};

use super::{FingerprintMap, GeoPoint, GeolocError};
use crate::attacker::ObservedCsi;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackerParams {
    /// Reference RSRP; `None` takes the median of the first 10 reports.
    pub rsrp_base: Option<f64>,
    /// Reports further than this from the reference are skipped.
    pub p_thres: f64,
    /// A beam run must exceed this many repeats to be appended.
    pub c_thres: u32,
    /// `false` also accepts non-adjacent areas after `3 * c_thres` repeats.
    pub strict_literal: bool,
    pub spacing_m: f64,
}

impl TrackerParams {
    pub fn new(p_thres: f64, c_thres: u32) -> Self {
        Self { rsrp_base: None, p_thres, c_thres, strict_literal: true, spacing_m: 1.0 }
    }

    fn validate(&self) -> Result<(), GeolocError> {
        if self.p_thres.is_nan()
            || self.p_thres <= 0.0
            || self.c_thres < 1
            || self.spacing_m.is_nan()
            || self.spacing_m <= 0.0
        {
            return Err(GeolocError::InvalidParams("need p_thres > 0, c_thres >= 1, spacing > 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackResult {
    pub rsrp_base: f64,
    /// Appended areas, in order.
    pub areas: Vec<usize>,
    /// Their centroids.
    pub anchors: Vec<GeoPoint>,
    /// Anchors linearly interpolated at `spacing_m`.
    pub path: Vec<GeoPoint>,
}

#[derive(Debug, Clone)]
struct Hypothesis {
    cost: f64,
    areas: Vec<usize>,
}

impl Hypothesis {
    fn last(&self) -> usize {
        *self.areas.last().expect("hypotheses are nonempty")
    }
}

/// Cheapest hypothesis per end area, best first.
fn prune(mut hs: Vec<Hypothesis>) -> Vec<Hypothesis> {
    hs.sort_by(|a, b| a.cost.total_cmp(&b.cost).then_with(|| a.areas.cmp(&b.areas)));
    let mut seen = std::collections::BTreeSet::new();
    hs.retain(|h| seen.insert(h.last()));
    hs
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    }
}

/// Infer a walked path from one UE's CSI reports.
pub fn beam_to_path(
    reports: &[ObservedCsi],
    params: &TrackerParams,
    map: &FingerprintMap,
) -> Result<TrackResult, GeolocError> {
    params.validate()?;
    if reports.windows(2).any(|w| w[1].t_ms < w[0].t_ms) {
        return Err(GeolocError::InvalidParams("reports are not time-ordered".into()));
    }
    if reports.windows(2).any(|w| w[1].rnti != w[0].rnti) {
        return Err(GeolocError::InvalidParams("reports mix several RNTIs".into()));
    }
    if reports.is_empty() {
        return Err(GeolocError::EmptyPath);
    }
    let base = match params.rsrp_base {
        Some(b) => b,
        None => median(&mut reports.iter().take(10).map(|r| r.rsrp_dbm).collect::<Vec<_>>()),
    };
    // Power filtering.
    let kept: Vec<&ObservedCsi> = reports.iter().filter(|r| (r.rsrp_dbm - base).abs() <= params.p_thres).collect();

    // A beam may own several areas, so every adjacency-consistent sequence
    // is carried along; only the cheapest one per end area survives. Cost is
    // the accumulated distance between run RSRP and the area's survey RSRP.
    let mut hyps: Vec<Hypothesis> = Vec::new();
    let mut count: u32 = 0;
    let mut run_start = 0;
    for n in 0..kept.len() {
        if n + 1 < kept.len() && kept[n].beam_idx == kept[n + 1].beam_idx {
            count += 1;
            continue;
        }
        let beam = kept[n].beam_idx;
        let run_rsrp = kept[run_start..=n].iter().map(|r| r.rsrp_dbm).sum::<f64>() / (n + 1 - run_start) as f64;
        run_start = n + 1;
        if count <= params.c_thres {
            continue;
        }
        let relaxed = !params.strict_literal && count > 3 * params.c_thres;
        let cost = |a: &super::BeamArea| (a.mean_rsrp_dbm - run_rsrp).abs();
        let next: Vec<Hypothesis> = if hyps.is_empty() {
            map.areas_of(beam).map(|a| Hypothesis { cost: cost(a), areas: vec![a.id] }).collect()
        } else {
            let step = |adjacent_only: bool| -> Vec<Hypothesis> {
                let mut out = Vec::new();
                for h in &hyps {
                    let last = h.last();
                    if map.areas[last].beam_idx == beam {
                        // Still inside the last appended area.
                        out.push(h.clone());
                        continue;
                    }
                    for a in map.areas_of(beam).filter(|a| !adjacent_only || map.are_adjacent(a.id, last)) {
                        let mut areas = h.areas.clone();
                        areas.push(a.id);
                        out.push(Hypothesis { cost: h.cost + cost(a), areas });
                    }
                }
                out
            };
            let strict = step(true);
            if strict.is_empty() && relaxed {
                step(false)
            } else {
                strict
            }
        };
        if !next.is_empty() {
            hyps = prune(next);
            count = 0;
        }
    }
    let Some(best) = hyps.into_iter().next() else {
        return Err(GeolocError::EmptyPath);
    };
    let areas = best.areas;
    let anchors: Vec<GeoPoint> = areas.iter().map(|&a| map.areas[a].centroid).collect();
    let path = interpolate(&anchors, params.spacing_m);
    Ok(TrackResult { rsrp_base: base, areas, anchors, path })
}

/// Points every `spacing` metres along the polyline, vertices included.
pub fn interpolate(points: &[GeoPoint], spacing: f64) -> Vec<GeoPoint> {
    let mut out = Vec::new();
    for w in points.windows(2) {
        let (p, q) = (w[0], w[1]);
        let len = p.dist(q);
        let steps = (len / spacing).ceil() as usize;
        for k in 0..steps {
            out.push(p + (q - p).scale(k as f64 / steps as f64));
        }
    }
    if let Some(&last) = points.last() {
        out.push(last);
    }
    out
}

fn dist_to_polyline(p: GeoPoint, line: &[GeoPoint]) -> f64 {
    if line.len() == 1 {
        return p.dist(line[0]);
    }
    line.windows(2)
        .map(|w| {
            let ab = w[1] - w[0];
            let len2 = ab.dot(ab);
            let t = if len2 == 0.0 { 0.0 } else { ((p - w[0]).dot(ab) / len2).clamp(0.0, 1.0) };
            p.dist(w[0] + ab.scale(t))
        })
        .fold(f64::INFINITY, f64::min)
}

fn deviations(estimate: &[GeoPoint], truth: &[GeoPoint]) -> Result<Vec<f64>, GeolocError> {
    if estimate.is_empty() || truth.is_empty() {
        return Err(GeolocError::InvalidParams("deviation needs two nonempty paths".into()));
    }
    Ok(estimate.iter().map(|&p| dist_to_polyline(p, truth)).collect())
}

/// Directed Hausdorff distance from the estimate to the truth polyline.
pub fn path_max_deviation(estimate: &[GeoPoint], truth: &[GeoPoint]) -> Result<f64, GeolocError> {
    Ok(deviations(estimate, truth)?.into_iter().fold(0.0, f64::max))
}

/// Mean distance from estimate points to the truth polyline.
pub fn path_mean_deviation(estimate: &[GeoPoint], truth: &[GeoPoint]) -> Result<f64, GeolocError> {
    let d = deviations(estimate, truth)?;
    Ok(d.iter().sum::<f64>() / d.len() as f64)
}

/// Right-continuous empirical CDF.
#[derive(Debug, Clone, PartialEq)]
pub struct Ecdf {
    sorted: Vec<f64>,
}

impl Ecdf {
    pub fn eval(&self, t: f64) -> f64 {
        self.sorted.partition_point(|&x| x <= t) as f64 / self.sorted.len() as f64
    }

    /// One `(value, fraction)` row per distinct value.
    pub fn table(&self) -> Vec<(f64, f64)> {
        let n = self.sorted.len() as f64;
        let mut out: Vec<(f64, f64)> = Vec::new();
        for (i, &x) in self.sorted.iter().enumerate() {
            let f = (i + 1) as f64 / n;
            match out.last_mut() {
                Some(last) if last.0 == x => last.1 = f,
                _ => out.push((x, f)),
            }
        }
        out
    }

    pub fn len(&self) -> usize {
        self.sorted.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sorted.is_empty()
    }
}

pub fn error_ecdf(errors: &[f64]) -> Result<Ecdf, GeolocError> {
    if errors.is_empty() || errors.iter().any(|e| e.is_nan()) {
        return Err(GeolocError::InvalidParams("ECDF needs a nonempty list of numbers".into()));
    }
    let mut sorted = errors.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(Ecdf { sorted })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geoloc::{BeamArea, FingerprintParams, LatLon};
    use crate::time::Rnti;

    /// Three areas in a row: A(1) - B(2) - C(3); D(9) far away.
    fn line_map() -> FingerprintMap {
        let mk = |id: usize, beam: u8, x: f64| BeamArea {
            id,
            beam_idx: beam,
            polygon: vec![GeoPoint::new(x, 100.0)],
            centroid: GeoPoint::new(x, 100.0),
            bisector: GeoPoint::new(x, 100.0).scale(1.0 / GeoPoint::new(x, 100.0).norm()),
            ta_histogram: Default::default(),
            points: 10,
            r_min: 90.0,
            r_max: 110.0,
            mean_rsrp_dbm: -80.0,
        };
        FingerprintMap {
            bs: LatLon::new(0.0, 0.0),
            params: FingerprintParams::default(),
            areas: vec![mk(0, 1, 0.0), mk(1, 2, 10.0), mk(2, 3, 20.0), mk(3, 9, 80.0)],
            adjacency: vec![(0, 1), (1, 2)],
        }
    }

    fn reports(beams: &[u8]) -> Vec<ObservedCsi> {
        beams
            .iter()
            .enumerate()
            .map(|(i, &b)| ObservedCsi { t_ms: 20.0 * i as f64, rnti: Rnti(7), beam_idx: b, rsrp_dbm: -80.0 })
            .collect()
    }

    fn run(beams: &[u8]) -> Result<TrackResult, GeolocError> {
        beam_to_path(&reports(beams), &TrackerParams::new(15.0, 3), &line_map())
    }

    #[test]
    fn single_beam_single_point() {
        let r = run(&[2; 100]).unwrap();
        assert_eq!(r.path, vec![GeoPoint::new(10.0, 100.0)]);
    }

    #[test]
    fn flicker_is_smoothed() {
        let mut b = vec![1; 10];
        b.extend([1, 2, 1, 2, 1, 2]);
        b.extend([2; 10]);
        let r = run(&b).unwrap();
        assert_eq!(r.areas, vec![0, 1]);
        assert_eq!(r.path, interpolate(&[GeoPoint::new(0.0, 100.0), GeoPoint::new(10.0, 100.0)], 1.0));
        assert_eq!(r.path.len(), 11);
    }

    #[test]
    fn outlier_is_skipped() {
        let clean = reports(&[1; 20]);
        let mut noisy = clean.clone();
        noisy.insert(7, ObservedCsi { rsrp_dbm: -110.0, beam_idx: 3, ..noisy[7] });
        let p = TrackerParams::new(15.0, 3);
        let (a, b) = (beam_to_path(&clean, &p, &line_map()).unwrap(), beam_to_path(&noisy, &p, &line_map()).unwrap());
        assert_eq!(a.path, b.path);
    }

    #[test]
    fn impossible_transition_dropped() {
        let mut b = vec![1; 10];
        b.extend([9; 12]);
        b.extend([2; 10]);
        assert_eq!(run(&b).unwrap().areas, vec![0, 1]);
        let relaxed = TrackerParams { strict_literal: false, ..TrackerParams::new(15.0, 3) };
        assert_eq!(beam_to_path(&reports(&b), &relaxed, &line_map()).unwrap().areas, vec![0, 3]);
    }

    #[test]
    fn nothing_survives() {
        assert_eq!(run(&[1, 2, 1, 2]), Err(GeolocError::EmptyPath));
        assert_eq!(run(&[]), Err(GeolocError::EmptyPath));
    }

    #[test]
    fn deviation_geometry() {
        let truth = [GeoPoint::new(0.0, 0.0), GeoPoint::new(100.0, 0.0)];
        let shifted: Vec<GeoPoint> = (0..=10).map(|i| GeoPoint::new(10.0 * f64::from(i), 5.0)).collect();
        assert!((path_max_deviation(&shifted, &truth).unwrap() - 5.0).abs() < 1e-12);
        assert_eq!(path_max_deviation(&truth, &truth).unwrap(), 0.0);
        assert_eq!(path_max_deviation(&[GeoPoint::new(42.0, 0.0)], &truth).unwrap(), 0.0);
        assert!(path_max_deviation(&[], &truth).is_err());
    }

    #[test]
    fn ecdf_counts() {
        let e = error_ecdf(&[5.0, 15.0, 25.0]).unwrap();
        assert!((e.eval(20.0) - 2.0 / 3.0).abs() < 1e-12);
        assert_eq!(e.eval(4.9), 0.0);
        assert_eq!(e.eval(25.0), 1.0);
        assert!(error_ecdf(&[]).is_err());
    }
}
