//! Passive localization from beam indices and timing advance, and path
//! tracking from CSI reports.
//!
//! Everything works in a local planar frame centred on the BS: `x` east,
//! `y` north, metres. Survey and truth files carry lat/lon and are projected
//! with an equirectangular approximation at the BS latitude.

mod fingerprint;
pub mod io;
mod locate;
pub mod synth;
mod track;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::time::{ta_step_m, MAX_MU};

pub use fingerprint::{build_fingerprint, convex_hull, BeamArea, FingerprintMap, FingerprintParams, SurveyPoint};
pub use locate::{localize_ssb_ra, Estimate};
pub use track::{
    beam_to_path, error_ecdf, interpolate, path_max_deviation, path_mean_deviation, Ecdf, TrackResult, TrackerParams,
};

/// Mean Earth radius used by the projection.
pub const EARTH_RADIUS_M: f64 = 6_371_008.8;
/// Largest timing-advance command carried in a RAR.
pub const MAX_TA: u32 = 3846;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeolocError {
    #[error("survey leaves no area with at least {0} points")]
    InsufficientSurvey(usize),
    #[error("beam {0} is not in the fingerprint map")]
    UnknownBeam(u8),
    #[error("no beam run survived filtering")]
    EmptyPath,
    #[error("timing advance {ta} invalid for mu={mu}")]
    InvalidTa { ta: u32, mu: u8 },
    #[error("invalid parameter: {0}")]
    InvalidParams(String),
    #[error("{0}")]
    Schema(String),
    #[error("{0}")]
    Io(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct GeoPoint {
    pub x: f64,
    pub y: f64,
}

impl GeoPoint {
    pub const ORIGIN: GeoPoint = GeoPoint { x: 0.0, y: 0.0 };

    pub fn new(x: f64, y: f64) -> Self {
        Self { x, y }
    }

    pub fn polar(r: f64, azimuth_rad: f64) -> Self {
        // Azimuth is clockwise from north.
        Self { x: r * azimuth_rad.sin(), y: r * azimuth_rad.cos() }
    }

    pub fn norm(self) -> f64 {
        self.x.hypot(self.y)
    }

    pub fn azimuth(self) -> f64 {
        self.x.atan2(self.y)
    }

    pub fn dist(self, o: GeoPoint) -> f64 {
        (self.x - o.x).hypot(self.y - o.y)
    }

    pub fn scale(self, k: f64) -> GeoPoint {
        GeoPoint::new(self.x * k, self.y * k)
    }

    pub fn dot(self, o: GeoPoint) -> f64 {
        self.x * o.x + self.y * o.y
    }

    pub fn cross(self, o: GeoPoint) -> f64 {
        self.x * o.y - self.y * o.x
    }

    pub fn is_finite(self) -> bool {
        self.x.is_finite() && self.y.is_finite()
    }
}

impl std::ops::Add for GeoPoint {
    type Output = GeoPoint;

    fn add(self, o: GeoPoint) -> GeoPoint {
        GeoPoint::new(self.x + o.x, self.y + o.y)
    }
}

impl std::ops::Sub for GeoPoint {
    type Output = GeoPoint;

    fn sub(self, o: GeoPoint) -> GeoPoint {
        GeoPoint::new(self.x - o.x, self.y - o.y)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LatLon {
    pub lat: f64,
    pub lon: f64,
}

impl LatLon {
    pub fn new(lat: f64, lon: f64) -> Self {
        Self { lat, lon }
    }
}

/// Equirectangular projection anchored at the BS.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Projection {
    origin: LatLon,
    cos_lat: f64,
}

impl Projection {
    pub fn new(origin: LatLon) -> Self {
        Self { origin, cos_lat: origin.lat.to_radians().cos() }
    }

    pub fn origin(&self) -> LatLon {
        self.origin
    }

    pub fn to_local(&self, p: LatLon) -> GeoPoint {
        GeoPoint {
            x: EARTH_RADIUS_M * (p.lon - self.origin.lon).to_radians() * self.cos_lat,
            y: EARTH_RADIUS_M * (p.lat - self.origin.lat).to_radians(),
        }
    }

    pub fn to_latlon(&self, p: GeoPoint) -> LatLon {
        LatLon {
            lat: self.origin.lat + (p.y / EARTH_RADIUS_M).to_degrees(),
            lon: self.origin.lon + (p.x / (EARTH_RADIUS_M * self.cos_lat)).to_degrees(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimingAdvance {
    ta: u32,
    mu: u8,
}

impl TimingAdvance {
    pub fn new(ta: u32, mu: u8) -> Result<Self, GeolocError> {
        if ta > MAX_TA || mu > MAX_MU {
            return Err(GeolocError::InvalidTa { ta, mu });
        }
        Ok(Self { ta, mu })
    }

    pub fn value(self) -> u32 {
        self.ta
    }

    pub fn mu(self) -> u8 {
        self.mu
    }
}

/// Distance interval `[f(TA-1), f(TA)]` consistent with a TA command.
pub fn ta_to_distance_range(ta: TimingAdvance) -> (f64, f64) {
    let step = ta_step_m(ta.mu);
    (step * f64::from(ta.ta.saturating_sub(1)), step * f64::from(ta.ta))
}
