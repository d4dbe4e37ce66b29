//! CSV and GeoJSON formats used by the geolocation pipeline.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{GeolocError, LatLon, SurveyPoint};
use crate::attacker::{ObservedCsi, ObservedRa};

pub const SURVEY_HEADER: [&str; 5] = ["lat", "lon", "beam_idx", "rsrp_dbm", "ta"];
pub const CSI_HEADER: [&str; 4] = ["t_ms", "rnti", "beam_idx", "rsrp_dbm"];
pub const RA_HEADER: [&str; 3] = ["t_ms", "beam_idx", "ta"];
pub const TRUTH_HEADER: [&str; 3] = ["t_ms", "lat", "lon"];

/// Ground-truth position at a time.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TruthPoint {
    pub t_ms: f64,
    pub lat: f64,
    pub lon: f64,
}

impl TruthPoint {
    pub fn latlon(&self) -> LatLon {
        LatLon::new(self.lat, self.lon)
    }
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> GeolocError + '_ {
    move |e| GeolocError::Io(format!("{}: {e}", path.display()))
}

/// Parse CSV with an exact header.
pub fn parse_csv<T: DeserializeOwned>(r: impl Read, header: &[&str], what: &str) -> Result<Vec<T>, GeolocError> {
    let mut rdr = csv::Reader::from_reader(r);
    let got = rdr.headers().map_err(|e| GeolocError::Schema(format!("{what}: {e}")))?.clone();
    if got.iter().map(str::trim).ne(header.iter().copied()) {
        return Err(GeolocError::Schema(format!(
            "{what}: expected header {}, got {}",
            header.join(","),
            got.iter().collect::<Vec<_>>().join(",")
        )));
    }
    rdr.deserialize()
        .enumerate()
        .map(|(i, row)| row.map_err(|e| GeolocError::Schema(format!("{what} row {}: {e}", i + 2))))
        .collect()
}

pub fn read_csv<T: DeserializeOwned>(path: &Path, header: &[&str]) -> Result<Vec<T>, GeolocError> {
    let f = File::open(path).map_err(io_err(path))?;
    parse_csv(f, header, &path.display().to_string())
}

pub fn write_csv<T: Serialize>(w: impl Write, rows: &[T]) -> Result<(), GeolocError> {
    let mut out = csv::Writer::from_writer(w);
    for r in rows {
        out.serialize(r).map_err(|e| GeolocError::Io(e.to_string()))?;
    }
    out.flush().map_err(|e| GeolocError::Io(e.to_string()))
}

pub fn write_csv_file<T: Serialize>(path: &Path, rows: &[T]) -> Result<(), GeolocError> {
    write_csv(File::create(path).map_err(io_err(path))?, rows)
}

pub fn read_survey(path: &Path) -> Result<Vec<SurveyPoint>, GeolocError> {
    read_csv(path, &SURVEY_HEADER)
}

pub fn read_csi_log(path: &Path) -> Result<Vec<ObservedCsi>, GeolocError> {
    read_csv(path, &CSI_HEADER)
}

pub fn read_ra_log(path: &Path) -> Result<Vec<ObservedRa>, GeolocError> {
    read_csv(path, &RA_HEADER)
}

pub fn read_truth(path: &Path) -> Result<Vec<TruthPoint>, GeolocError> {
    read_csv(path, &TRUTH_HEADER)
}

/// A GeoJSON Feature holding one LineString (or a Point for a single vertex).
pub fn geojson_path(points: &[LatLon], properties: serde_json::Value) -> serde_json::Value {
    let coords: Vec<[f64; 2]> = points.iter().map(|p| [p.lon, p.lat]).collect();
    let geometry = if coords.len() == 1 {
        serde_json::json!({"type": "Point", "coordinates": coords[0]})
    } else {
        serde_json::json!({"type": "LineString", "coordinates": coords})
    };
    serde_json::json!({"type": "Feature", "geometry": geometry, "properties": properties})
}
