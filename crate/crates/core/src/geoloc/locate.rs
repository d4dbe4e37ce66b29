use serde::{Deserialize, Serialize};

use super::{ta_to_distance_range, FingerprintMap, GeoPoint, GeolocError, TimingAdvance, MAX_TA};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub point: GeoPoint,
    /// Area whose bisector carries the estimate.
    pub area: usize,
    pub distance_m: f64,
    /// The TA annulus missed the area's surveyed extent and the distance was
    /// clamped onto it.
    pub clamped: bool,
}

/// Locate a UE from the beam it used for RA and the TA in the response.
pub fn localize_ssb_ra(beam: u8, ta: TimingAdvance, map: &FingerprintMap) -> Result<Estimate, GeolocError> {
    if ta.mu() != map.params.mu {
        return Err(GeolocError::InvalidParams(format!(
            "TA at mu={} but map surveyed at mu={}",
            ta.mu(),
            map.params.mu
        )));
    }
    let (lo, hi) = ta_to_distance_range(ta);
    let mid = (lo + hi) / 2.0;
    // Laplace-smoothed likelihood over every representable TA value.
    let vocab = f64::from(MAX_TA + 1);
    let seen = |h: &super::BeamArea| h.ta_histogram.get(&ta.value()).copied().unwrap_or(0);
    // A TA no candidate has seen carries no evidence; smoothing alone would
    // favour the least-surveyed area, so that case is a tie.
    let any_seen = map.areas_of(beam).any(|a| seen(a) > 0);
    let likelihood = |h: &super::BeamArea| {
        if any_seen {
            (f64::from(seen(h)) + 1.0) / (f64::from(h.ta_total()) + vocab)
        } else {
            0.0
        }
    };
    let area = map
        .areas_of(beam)
        .map(|a| (a, likelihood(a), (a.centroid.norm() - mid).abs()))
        .reduce(|best, c| if c.1 > best.1 || (c.1 == best.1 && c.2 < best.2) { c } else { best })
        .map(|(a, _, _)| a)
        .ok_or(GeolocError::UnknownBeam(beam))?;

    if ta.value() == 0 {
        return Ok(Estimate { point: GeoPoint::ORIGIN, area: area.id, distance_m: 0.0, clamped: false });
    }
    let (d, clamped) =
        if hi < area.r_min || lo > area.r_max { (mid.clamp(area.r_min, area.r_max), true) } else { (mid, false) };
    Ok(Estimate { point: area.bisector.scale(d), area: area.id, distance_m: d, clamped })
}
