//! Python bindings: scenarios and reports, the message codecs and the
//! geolocation pipeline. Structured codec values cross the boundary as JSON
//! strings in the same shape the scenario files use.

use std::path::PathBuf;

use llsim_core::attacker::ObservedCsi;
use llsim_core::codec::bits::to_bytes;
use llsim_core::codec::hexdump::bits_from_hex;
use llsim_core::codec::{self, CodecError as CoreCodecError, DciLayout, DciMessage, MacPdu, SibRaConfig};
use llsim_core::geoloc::{self, io as geo_io, GeolocError as CoreGeolocError, LatLon, TimingAdvance, TrackerParams};
use llsim_core::simkit::{self, MetricsReport, ReportFormat, ScenarioConfig, SimError};
use llsim_core::time::Rnti;
use pyo3::create_exception;
use pyo3::exceptions::{PyIOError, PyKeyError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::{PyBytes, PyDict};

create_exception!(llsim, ConfigError, PyValueError, "Invalid scenario or input file.");
create_exception!(llsim, CodecError, PyValueError, "Message failed to encode or decode.");
create_exception!(llsim, GeolocError, PyValueError, "Geolocation failure.");
create_exception!(llsim, EmptyPathError, GeolocError, "No beam run survived filtering.");

fn sim_err(e: SimError) -> PyErr {
    match e {
        SimError::Io(m) => PyIOError::new_err(m),
        SimError::ConfigInvalid(_) => ConfigError::new_err(e.to_string()),
    }
}

fn geo_err(e: CoreGeolocError) -> PyErr {
    match e {
        CoreGeolocError::Io(m) => PyIOError::new_err(m),
        CoreGeolocError::EmptyPath => EmptyPathError::new_err(e.to_string()),
        CoreGeolocError::Schema(m) => ConfigError::new_err(m),
        e => GeolocError::new_err(e.to_string()),
    }
}

fn codec_err(e: CoreCodecError) -> PyErr {
    CodecError::new_err(e.to_string())
}

fn json_err(e: serde_json::Error) -> PyErr {
    ConfigError::new_err(e.to_string())
}

fn format_of(name: &str) -> PyResult<ReportFormat> {
    match name {
        "json" => Ok(ReportFormat::JsonDoc),
        "csv" => Ok(ReportFormat::CsvTables),
        _ => Err(PyValueError::new_err(format!("format must be 'json' or 'csv', not {name:?}"))),
    }
}

/// A scenario: cell, UEs, attacker schedule, seed.
#[pyclass(module = "llsim")]
struct Scenario {
    cfg: ScenarioConfig,
}

#[pymethods]
impl Scenario {
    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        ScenarioConfig::load(&path).map(|cfg| Self { cfg }).map_err(sim_err)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        ScenarioConfig::from_json(text).map(|cfg| Self { cfg }).map_err(sim_err)
    }

    fn to_json(&self) -> String {
        self.cfg.to_json()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.cfg.seed
    }

    #[setter]
    fn set_seed(&mut self, seed: u64) {
        self.cfg.seed = seed;
    }

    #[getter]
    fn mitigation_enabled(&self) -> bool {
        self.cfg.mitigation_enabled
    }

    #[setter]
    fn set_mitigation_enabled(&mut self, on: bool) {
        self.cfg.mitigation_enabled = on;
    }

    #[getter]
    fn duration_ms(&self) -> u64 {
        self.cfg.duration_ms
    }

    #[getter]
    fn has_attacks(&self) -> bool {
        self.cfg.has_attacks()
    }

    /// The same scenario with the attack schedule removed.
    fn baseline(&self) -> Self {
        Self { cfg: self.cfg.baseline() }
    }

    fn run(&self, py: Python<'_>) -> PyResult<Report> {
        let cfg = self.cfg.clone();
        py.detach(move || simkit::run(&cfg)).map(|m| Report { m }).map_err(sim_err)
    }

    fn __repr__(&self) -> String {
        format!("Scenario(ues={}, duration_ms={}, seed={})", self.cfg.ues.len(), self.cfg.duration_ms, self.cfg.seed)
    }
}

/// Metrics of one run.
#[pyclass(module = "llsim")]
struct Report {
    m: MetricsReport,
}

impl Report {
    fn ue(&self, rnti: u16) -> PyResult<&simkit::UeMetrics> {
        self.m.ue(rnti).ok_or_else(|| PyKeyError::new_err(rnti))
    }
}

#[pymethods]
impl Report {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        serde_json::from_str(text).map(|m| Self { m }).map_err(json_err)
    }

    fn to_json(&self) -> String {
        self.m.to_json()
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.m.meta.seed
    }

    #[getter]
    fn mitigation_enabled(&self) -> bool {
        self.m.meta.mitigation_enabled
    }

    #[getter]
    fn rntis(&self) -> Vec<u16> {
        self.m.ues.iter().map(|u| u.rnti.0).collect()
    }

    /// Goodput per second, downlink plus uplink.
    fn throughput_mbps(&self, rnti: u16) -> PyResult<Vec<f64>> {
        Ok(self.ue(rnti)?.throughput_mbps.clone())
    }

    fn ra_attempts(&self, rnti: u16) -> PyResult<Vec<u32>> {
        Ok(self.ue(rnti)?.ra_attempts.clone())
    }

    fn energy_units(&self, rnti: u16) -> PyResult<Vec<f64>> {
        Ok(self.ue(rnti)?.energy_units.clone())
    }

    fn rlf_times_ms(&self, rnti: u16) -> PyResult<Vec<f64>> {
        Ok(self.ue(rnti)?.rlf_times_ms.clone())
    }

    #[getter]
    fn injections(&self) -> usize {
        self.m.injections().count()
    }

    #[getter]
    fn conservation_violations(&self) -> u64 {
        self.m.cell.conservation_violations
    }

    /// Equal metrics, ignoring the event log, sniffer output and the
    /// mitigation flag.
    fn metrics_equal(&self, other: &Report) -> bool {
        let norm = |r: &MetricsReport| {
            let mut m = r.metrics_only();
            m.meta.mitigation_enabled = false;
            m
        };
        norm(&self.m) == norm(&other.m)
    }

    /// Write report files into `dir`; returns their paths.
    #[pyo3(signature = (dir, format = "json"))]
    fn write(&self, dir: PathBuf, format: &str) -> PyResult<Vec<PathBuf>> {
        simkit::emit_report(&self.m, format_of(format)?, &dir).map_err(sim_err)
    }

    fn __eq__(&self, other: &Report) -> bool {
        self.m == other.m
    }
}

/// Beam areas learned from a survey.
#[pyclass(module = "llsim")]
struct FingerprintMap {
    map: geoloc::FingerprintMap,
}

impl FingerprintMap {
    fn area(&self, id: usize) -> PyResult<&geoloc::BeamArea> {
        self.map.areas.get(id).ok_or_else(|| PyKeyError::new_err(id))
    }

    fn latlon(&self, p: geoloc::GeoPoint) -> (f64, f64) {
        let ll = self.map.projection().to_latlon(p);
        (ll.lat, ll.lon)
    }
}

#[pymethods]
impl FingerprintMap {
    /// Build from a survey CSV (lat,lon,beam_idx,rsrp_dbm,ta).
    #[staticmethod]
    #[pyo3(signature = (survey_csv, bs_lat, bs_lon, mu = 3, gap_m = 30.0, adjacency_m = 5.0, min_points = 3))]
    fn build(
        survey_csv: PathBuf,
        bs_lat: f64,
        bs_lon: f64,
        mu: u8,
        gap_m: f64,
        adjacency_m: f64,
        min_points: usize,
    ) -> PyResult<Self> {
        let survey = geo_io::read_survey(&survey_csv).map_err(geo_err)?;
        let params =
            geoloc::FingerprintParams { gap_threshold_m: gap_m, adjacency_distance_m: adjacency_m, min_points, mu };
        geoloc::build_fingerprint(&survey, LatLon::new(bs_lat, bs_lon), params).map(|map| Self { map }).map_err(geo_err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        let text =
            std::fs::read_to_string(&path).map_err(|e| PyIOError::new_err(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        geoloc::FingerprintMap::from_json(text).map(|map| Self { map }).map_err(geo_err)
    }

    fn to_json(&self) -> String {
        self.map.to_json()
    }

    #[getter]
    fn area_count(&self) -> usize {
        self.map.areas.len()
    }

    #[getter]
    fn beam_count(&self) -> usize {
        self.map.beam_count()
    }

    #[getter]
    fn adjacency(&self) -> Vec<(usize, usize)> {
        self.map.adjacency.clone()
    }

    fn areas_of(&self, beam: u8) -> Vec<usize> {
        self.map.areas_of(beam).map(|a| a.id).collect()
    }

    fn beam_of(&self, area: usize) -> PyResult<u8> {
        Ok(self.area(area)?.beam_idx)
    }

    /// `(lat, lon)` of an area's centroid.
    fn centroid(&self, area: usize) -> PyResult<(f64, f64)> {
        Ok(self.latlon(self.area(area)?.centroid))
    }

    /// Position estimate for one sniffed RA response.
    fn localize<'py>(&self, py: Python<'py>, beam: u8, ta: u32) -> PyResult<Bound<'py, PyDict>> {
        let ta = TimingAdvance::new(ta, self.map.params.mu).map_err(geo_err)?;
        let est = geoloc::localize_ssb_ra(beam, ta, &self.map).map_err(geo_err)?;
        let (lat, lon) = self.latlon(est.point);
        let d = PyDict::new(py);
        d.set_item("lat", lat)?;
        d.set_item("lon", lon)?;
        d.set_item("area", est.area)?;
        d.set_item("distance_m", est.distance_m)?;
        d.set_item("clamped", est.clamped)?;
        Ok(d)
    }

    /// Path from one UE's CSI reports, given as `(t_ms, rnti, beam_idx,
    /// rsrp_dbm)` tuples.
    #[pyo3(signature = (reports, p_thres, c_thres, rsrp_base = None, spacing_m = 1.0))]
    fn track<'py>(
        &self,
        py: Python<'py>,
        reports: Vec<(f64, u16, u8, f64)>,
        p_thres: f64,
        c_thres: u32,
        rsrp_base: Option<f64>,
        spacing_m: f64,
    ) -> PyResult<Bound<'py, PyDict>> {
        let reports: Vec<ObservedCsi> = reports
            .into_iter()
            .map(|(t_ms, rnti, beam_idx, rsrp_dbm)| ObservedCsi { t_ms, rnti: Rnti(rnti), beam_idx, rsrp_dbm })
            .collect();
        let params = TrackerParams { rsrp_base, spacing_m, ..TrackerParams::new(p_thres, c_thres) };
        let r = geoloc::beam_to_path(&reports, &params, &self.map).map_err(geo_err)?;
        let d = PyDict::new(py);
        d.set_item("areas", r.areas)?;
        d.set_item("path", r.path.iter().map(|p| self.latlon(*p)).collect::<Vec<_>>())?;
        d.set_item("rsrp_base_dbm", r.rsrp_base)?;
        Ok(d)
    }

    /// Largest distance from a `(lat, lon)` path to a truth polyline (m).
    fn max_deviation(&self, path: Vec<(f64, f64)>, truth: Vec<(f64, f64)>) -> PyResult<f64> {
        let proj = self.map.projection();
        let local =
            |v: Vec<(f64, f64)>| v.into_iter().map(|(a, b)| proj.to_local(LatLon::new(a, b))).collect::<Vec<_>>();
        geoloc::path_max_deviation(&local(path), &local(truth)).map_err(geo_err)
    }
}

/// CSI log CSV as `(t_ms, rnti, beam_idx, rsrp_dbm)` tuples.
#[pyfunction]
fn read_csi_log(path: PathBuf) -> PyResult<Vec<(f64, u16, u8, f64)>> {
    let rows = geo_io::read_csi_log(&path).map_err(geo_err)?;
    Ok(rows.into_iter().map(|c| (c.t_ms, c.rnti.0, c.beam_idx, c.rsrp_dbm)).collect())
}

/// RA log CSV as `(t_ms, beam_idx, ta)` tuples.
#[pyfunction]
fn read_ra_log(path: PathBuf) -> PyResult<Vec<(f64, u8, u32)>> {
    let rows = geo_io::read_ra_log(&path).map_err(geo_err)?;
    Ok(rows.into_iter().map(|r| (r.t_ms, r.beam_idx, r.ta)).collect())
}

#[pyfunction]
#[pyo3(signature = (bandwidth_rb = 106))]
fn dci_payload_bits(bandwidth_rb: u16) -> usize {
    DciLayout::new(bandwidth_rb).payload_bits()
}

/// Encode a DCI given as JSON; returns `(bytes, n_bits)` including the CRC.
#[pyfunction]
#[pyo3(signature = (message, bandwidth_rb = 106))]
fn encode_dci<'py>(py: Python<'py>, message: &str, bandwidth_rb: u16) -> PyResult<(Bound<'py, PyBytes>, usize)> {
    let d: DciMessage = serde_json::from_str(message).map_err(json_err)?;
    let bits = codec::encode_dci(&d, &DciLayout::new(bandwidth_rb)).map_err(codec_err)?;
    Ok((PyBytes::new(py, &to_bytes(&bits)), bits.len()))
}

/// Blind-decode against candidate RNTIs; returns the DCI as JSON.
#[pyfunction]
#[pyo3(signature = (data, n_bits, rntis, bandwidth_rb = 106))]
fn decode_dci(data: &[u8], n_bits: usize, rntis: Vec<u16>, bandwidth_rb: u16) -> PyResult<String> {
    let rntis: Vec<Rnti> = rntis.into_iter().map(Rnti).collect();
    let d =
        codec::decode_dci(&bits_from_hex(data, n_bits), &rntis, &DciLayout::new(bandwidth_rb)).map_err(codec_err)?;
    Ok(serde_json::to_string(&d).expect("dci serializes"))
}

#[pyfunction]
fn encode_mac_pdu<'py>(py: Python<'py>, pdu: &str) -> PyResult<Bound<'py, PyBytes>> {
    let p: MacPdu = serde_json::from_str(pdu).map_err(json_err)?;
    Ok(PyBytes::new(py, &codec::encode_mac_pdu(&p).map_err(codec_err)?))
}

#[pyfunction]
fn decode_mac_pdu(data: &[u8]) -> PyResult<String> {
    let p = codec::decode_mac_pdu(data).map_err(codec_err)?;
    Ok(serde_json::to_string(&p).expect("pdu serializes"))
}

#[pyfunction]
fn encode_sib_ra<'py>(py: Python<'py>, sib: &str) -> PyResult<(Bound<'py, PyBytes>, usize)> {
    let s: SibRaConfig = serde_json::from_str(sib).map_err(json_err)?;
    let bits = codec::encode_sib_ra(&s).map_err(codec_err)?;
    Ok((PyBytes::new(py, &to_bytes(&bits)), bits.len()))
}

#[pyfunction]
fn decode_sib_ra(data: &[u8], n_bits: usize) -> PyResult<String> {
    let s = codec::decode_sib_ra(&bits_from_hex(data, n_bits)).map_err(codec_err)?;
    Ok(serde_json::to_string(&s).expect("sib serializes"))
}

#[pymodule]
fn llsim(m: &Bound<'_, PyModule>) -> PyResult<()> {
    let py = m.py();
    m.add_class::<Scenario>()?;
    m.add_class::<Report>()?;
    m.add_class::<FingerprintMap>()?;
    m.add_function(wrap_pyfunction!(read_csi_log, m)?)?;
    m.add_function(wrap_pyfunction!(read_ra_log, m)?)?;
    m.add_function(wrap_pyfunction!(dci_payload_bits, m)?)?;
    m.add_function(wrap_pyfunction!(encode_dci, m)?)?;
    m.add_function(wrap_pyfunction!(decode_dci, m)?)?;
    m.add_function(wrap_pyfunction!(encode_mac_pdu, m)?)?;
    m.add_function(wrap_pyfunction!(decode_mac_pdu, m)?)?;
    m.add_function(wrap_pyfunction!(encode_sib_ra, m)?)?;
    m.add_function(wrap_pyfunction!(decode_sib_ra, m)?)?;
    m.add("ConfigError", py.get_type::<ConfigError>())?;
    m.add("CodecError", py.get_type::<CodecError>())?;
    m.add("GeolocError", py.get_type::<GeolocError>())?;
    m.add("EmptyPathError", py.get_type::<EmptyPathError>())?;
    Ok(())
}
