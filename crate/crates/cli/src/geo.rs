use std::collections::{BTreeMap, BTreeSet};
use std::path::{Path, PathBuf};

use clap::Args;
use llsim_core::geoloc::io::{geojson_path, read_csi_log, read_ra_log, read_survey, read_truth, write_csv};
use llsim_core::geoloc::{
    beam_to_path, build_fingerprint, error_ecdf, localize_ssb_ra, path_max_deviation, FingerprintMap,
    FingerprintParams, GeoPoint, LatLon, TimingAdvance, TrackerParams,
};
use serde::Serialize;
use serde_json::json;

use crate::{parse_latlon, write_file, CliError};

#[derive(Debug, Args)]
pub struct FingerprintArgs {
    /// Survey CSV: lat,lon,beam_idx,rsrp_dbm,ta.
    #[arg(long, value_name = "FILE")]
    pub survey: PathBuf,
    /// Base station position as LAT,LON in degrees.
    #[arg(long, value_name = "LAT,LON", value_parser = parse_latlon)]
    pub bs: LatLon,
    /// Map JSON to write.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Numerology of the survey TA values.
    #[arg(long, default_value_t = 3)]
    pub mu: u8,
    /// Same-beam points further apart than this start a new area (m).
    #[arg(long, value_name = "M", default_value_t = 30.0)]
    pub gap_m: f64,
    /// Areas whose hulls are closer than this are adjacent (m).
    #[arg(long, value_name = "M", default_value_t = 5.0)]
    pub adjacency_m: f64,
    /// Smallest cluster kept as an area.
    #[arg(long, value_name = "N", default_value_t = 3)]
    pub min_points: usize,
}

#[derive(Debug, Args)]
pub struct LocalizeArgs {
    /// Map JSON written by `fingerprint`.
    #[arg(long, value_name = "FILE")]
    pub map: PathBuf,
    /// RA log CSV: t_ms,beam_idx,ta.
    #[arg(long, value_name = "FILE")]
    pub ra_log: PathBuf,
    /// Per-RA estimates CSV to write.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Ground truth CSV (t_ms,lat,lon) matched to RAs by t_ms.
    #[arg(long, value_name = "FILE")]
    pub truth: Option<PathBuf>,
    /// Error ECDF CSV to write with --truth (default: OUT with extension
    /// ecdf.csv).
    #[arg(long, value_name = "FILE", requires = "truth")]
    pub ecdf_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct TrackArgs {
    /// Map JSON written by `fingerprint`.
    #[arg(long, value_name = "FILE")]
    pub map: PathBuf,
    /// CSI log CSV: t_ms,rnti,beam_idx,rsrp_dbm.
    #[arg(long, value_name = "FILE")]
    pub csi_log: PathBuf,
    /// Reports further than this from the reference RSRP are skipped (dB).
    #[arg(long, value_name = "DB")]
    pub p_thres: f64,
    /// A beam must repeat more than this many times to join the path.
    #[arg(long, value_name = "N")]
    pub c_thres: u32,
    /// GeoJSON path to write.
    #[arg(long, value_name = "FILE")]
    pub out: PathBuf,
    /// Ground truth CSV (t_ms,lat,lon); adds the max deviation.
    #[arg(long, value_name = "FILE")]
    pub truth: Option<PathBuf>,
    /// UE to track when the log holds several.
    #[arg(long, value_name = "RNTI")]
    pub rnti: Option<u16>,
    /// Reference RSRP (default: median of the first 10 reports).
    #[arg(long, value_name = "DBM", allow_negative_numbers = true)]
    pub rsrp_base: Option<f64>,
    /// Interpolation step along the path (m).
    #[arg(long, value_name = "M", default_value_t = 1.0)]
    pub spacing_m: f64,
}

fn read_map(path: &Path) -> Result<FingerprintMap, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    FingerprintMap::from_json(&text).map_err(|e| CliError::from(e).context(path))
}

fn csv_text<T: Serialize>(rows: &[T]) -> Result<String, CliError> {
    let mut buf = Vec::new();
    write_csv(&mut buf, rows)?;
    Ok(String::from_utf8(buf).expect("csv is utf-8"))
}

fn json_text(v: &impl Serialize) -> String {
    serde_json::to_string_pretty(v).expect("value serializes") + "\n"
}

pub fn fingerprint(args: FingerprintArgs) -> Result<(), CliError> {
    let survey = read_survey(&args.survey)?;
    let params = FingerprintParams {
        gap_threshold_m: args.gap_m,
        adjacency_distance_m: args.adjacency_m,
        min_points: args.min_points,
        mu: args.mu,
    };
    let map = build_fingerprint(&survey, args.bs, params)?;
    write_file(&args.out, &(map.to_json() + "\n"))?;
    println!("{} areas over {} beams, {} adjacent pairs", map.areas.len(), map.beam_count(), map.adjacency.len());
    Ok(())
}

#[derive(Debug, Serialize)]
struct EstimateRow {
    t_ms: f64,
    beam_idx: u8,
    ta: u32,
    lat: f64,
    lon: f64,
    area: usize,
    distance_m: f64,
    clamped: bool,
    error_m: Option<f64>,
}

#[derive(Debug, Serialize)]
struct EcdfRow {
    threshold_m: f64,
    fraction: f64,
}

pub fn localize(args: LocalizeArgs) -> Result<(), CliError> {
    let map = read_map(&args.map)?;
    let proj = map.projection();
    let ras = read_ra_log(&args.ra_log)?;
    let truth: Option<BTreeMap<u64, GeoPoint>> = match &args.truth {
        Some(p) => Some(read_truth(p)?.iter().map(|t| (t.t_ms.to_bits(), proj.to_local(t.latlon()))).collect()),
        None => None,
    };
    let mut rows = Vec::with_capacity(ras.len());
    for ra in &ras {
        let est = localize_ssb_ra(ra.beam_idx, TimingAdvance::new(ra.ta, map.params.mu)?, &map)
            .map_err(|e| CliError::from(e).context(&args.ra_log))?;
        let error_m = match &truth {
            Some(t) => Some(
                t.get(&ra.t_ms.to_bits())
                    .ok_or_else(|| CliError::Config(format!("no truth row for the RA at t_ms={}", ra.t_ms)))?
                    .dist(est.point),
            ),
            None => None,
        };
        let p = proj.to_latlon(est.point);
        rows.push(EstimateRow {
            t_ms: ra.t_ms,
            beam_idx: ra.beam_idx,
            ta: ra.ta,
            lat: p.lat,
            lon: p.lon,
            area: est.area,
            distance_m: est.distance_m,
            clamped: est.clamped,
            error_m,
        });
    }
    write_file(&args.out, &csv_text(&rows)?)?;
    println!("{} estimates", rows.len());
    if args.truth.is_some() {
        let errors: Vec<f64> = rows.iter().filter_map(|r| r.error_m).collect();
        let ecdf = error_ecdf(&errors)?;
        let table: Vec<EcdfRow> =
            ecdf.table().into_iter().map(|(threshold_m, fraction)| EcdfRow { threshold_m, fraction }).collect();
        let path = args.ecdf_out.clone().unwrap_or_else(|| args.out.with_extension("ecdf.csv"));
        write_file(&path, &csv_text(&table)?)?;
        println!("within 10 m: {:.2}%, within 20 m: {:.2}%", 100.0 * ecdf.eval(10.0), 100.0 * ecdf.eval(20.0));
    }
    Ok(())
}

pub fn track(args: TrackArgs) -> Result<(), CliError> {
    let map = read_map(&args.map)?;
    let proj = map.projection();
    let mut reports = read_csi_log(&args.csi_log)?;
    match args.rnti {
        Some(r) => reports.retain(|c| c.rnti.0 == r),
        None => {
            let ues: BTreeSet<u16> = reports.iter().map(|c| c.rnti.0).collect();
            if ues.len() > 1 {
                return Err(CliError::Config(format!(
                    "{} holds {} UEs; pick one with --rnti",
                    args.csi_log.display(),
                    ues.len()
                )));
            }
        }
    }
    let params = TrackerParams {
        rsrp_base: args.rsrp_base,
        spacing_m: args.spacing_m,
        ..TrackerParams::new(args.p_thres, args.c_thres)
    };
    let r = beam_to_path(&reports, &params, &map)?;
    let mut props = json!({"areas": r.areas, "rsrp_base_dbm": r.rsrp_base});
    if let Some(t) = &args.truth {
        let truth: Vec<GeoPoint> = read_truth(t)?.iter().map(|p| proj.to_local(p.latlon())).collect();
        let dev = path_max_deviation(&r.path, &truth)?;
        props["max_deviation_m"] = json!(dev);
        println!("max deviation {dev:.2} m");
    }
    let latlons: Vec<LatLon> = r.path.iter().map(|p| proj.to_latlon(*p)).collect();
    write_file(&args.out, &json_text(&geojson_path(&latlons, props)))?;
    println!("{} areas, {} path points", r.areas.len(), r.path.len());
    Ok(())
}
