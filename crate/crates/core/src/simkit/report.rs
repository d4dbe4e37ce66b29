//! Metrics collected by a run and their JSON/CSV serializations.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::SimError;
use crate::attacker::SnifferView;
use crate::procedures::RaCause;
use crate::time::Rnti;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub scenario: String,
    pub seed: u64,
    pub duration_ms: u64,
    pub mu: u8,
    pub bandwidth_rb: u16,
    pub mitigation_enabled: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RaResult {
    Completed,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RaOutcomeRecord {
    pub t_ms: f64,
    pub result: RaResult,
    pub attempts: u32,
    pub cause: RaCause,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UeMetrics {
    pub rnti: Rnti,
    /// Goodput per 1 s interval, downlink plus uplink.
    pub throughput_mbps: Vec<f64>,
    pub dl_mbps: Vec<f64>,
    pub ul_mbps: Vec<f64>,
    /// Msg1 transmissions per interval.
    pub ra_attempts: Vec<u32>,
    pub ra_outcomes: Vec<RaOutcomeRecord>,
    /// Cumulative energy at the end of each interval.
    pub energy_units: Vec<f64>,
    pub harq_failures: Vec<u32>,
    /// UE-side radio link failures.
    pub rlf_times_ms: Vec<f64>,
    /// Context releases by the BS after persistent feedback failure.
    pub bs_rlf_times_ms: Vec<f64>,
    pub release_times_ms: Vec<f64>,
    pub csi_reports: u64,
    /// Time the UE and BS disagreed about active SCells.
    pub scell_divergence_ms: f64,
    pub final_active_scells: Vec<u8>,
    pub final_bs_scell_view: Vec<u8>,
    pub connected_at_end: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CellMetrics {
    /// Preambles received per interval.
    pub rach_load: Vec<u32>,
    pub cbra_preambles: Vec<u32>,
    pub rar_emissions: Vec<u32>,
    /// Preambles or RARs dropped for lack of capacity.
    pub rach_overload_drops: Vec<u32>,
    /// Slots whose scheduled RBs exceeded the carrier.
    pub conservation_violations: u64,
    pub peak_reserved_rb: u16,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InjectionOutcome {
    /// Accepted by the victim's decoder and acted upon.
    Accepted,
    /// Reached the receiver but failed CRC or format checks.
    Rejected,
    /// Below sensitivity, lost in a collision or nobody listening.
    NotReceived,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum EventKind {
    Injection { action_id: usize, target: Option<Rnti>, message: String, outcome: InjectionOutcome },
    RaStarted { rnti: Rnti, cause: RaCause },
    RaCompleted { rnti: Rnti, attempts: u32 },
    RaFailed { rnti: Rnti, attempts: u32 },
    UeRlf { rnti: Rnti },
    BsRlf { rnti: Rnti },
    Released { rnti: Rnti },
    Connected { rnti: Rnti },
    ScellExpired { rnti: Rnti, carrier: u8 },
    RachOverload { preamble: u8 },
    RarDropped { rar_id: u64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Event {
    pub t_ms: f64,
    pub slot: u64,
    pub seq: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricsReport {
    pub meta: ReportMeta,
    pub ues: Vec<UeMetrics>,
    pub cell: CellMetrics,
    pub events: Vec<Event>,
    pub sniffer: Option<SnifferView>,
}

impl MetricsReport {
    pub fn ue(&self, rnti: u16) -> Option<&UeMetrics> {
        self.ues.iter().find(|u| u.rnti.0 == rnti)
    }

    /// The report without the event log and sniffer output: the part that
    /// must not depend on whether attacks were attempted.
    pub fn metrics_only(&self) -> MetricsReport {
        MetricsReport { events: Vec::new(), sniffer: None, ..self.clone() }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("report serializes")
    }

    pub fn injections(&self) -> impl Iterator<Item = &Event> {
        self.events.iter().filter(|e| matches!(e.kind, EventKind::Injection { .. }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    JsonDoc,
    CsvTables,
}

/// Right-continuous empirical CDF: one `(value, fraction <= value)` per
/// distinct value.
pub fn ecdf(values: &[f64]) -> Vec<(f64, f64)> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| !x.is_nan()).collect();
    v.sort_by(f64::total_cmp);
    let n = v.len() as f64;
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (i, x) in v.iter().enumerate() {
        let f = (i + 1) as f64 / n;
        match out.last_mut() {
            Some(last) if last.0 == *x => last.1 = f,
            _ => out.push((*x, f)),
        }
    }
    out
}

fn io(path: &Path) -> impl Fn(std::io::Error) -> SimError + '_ {
    move |e| SimError::Io(format!("{}: {e}", path.display()))
}

fn csv_io(path: &Path) -> impl Fn(csv::Error) -> SimError + '_ {
    move |e| SimError::Io(format!("{}: {e}", path.display()))
}

fn write_csv(path: &Path, header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<(), SimError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_io(path))?;
    w.write_record(header).map_err(csv_io(path))?;
    for r in rows {
        w.write_record(&r).map_err(csv_io(path))?;
    }
    w.flush().map_err(io(path))
}

/// Write the report into `dir`; returns the files written.
pub fn emit_report(m: &MetricsReport, format: ReportFormat, dir: &Path) -> Result<Vec<PathBuf>, SimError> {
    fs::create_dir_all(dir).map_err(io(dir))?;
    let mut written = Vec::new();
    match format {
        ReportFormat::JsonDoc => {
            let p = dir.join("report.json");
            fs::write(&p, m.to_json() + "\n").map_err(io(&p))?;
            written.push(p);
        }
        ReportFormat::CsvTables => {
            for u in &m.ues {
                let p = dir.join(format!("ue_{}.csv", u.rnti.0));
                let rows = (0..u.throughput_mbps.len()).map(|s| {
                    vec![
                        s.to_string(),
                        u.throughput_mbps[s].to_string(),
                        u.dl_mbps[s].to_string(),
                        u.ul_mbps[s].to_string(),
                        u.ra_attempts[s].to_string(),
                        u.energy_units[s].to_string(),
                        u.harq_failures[s].to_string(),
                    ]
                });
                let header =
                    ["second", "throughput_mbps", "dl_mbps", "ul_mbps", "ra_attempts", "energy_units", "harq_failures"];
                write_csv(&p, &header, rows)?;
                written.push(p);
            }
            let c = &m.cell;
            let p = dir.join("cell.csv");
            let rows = (0..c.rach_load.len()).map(|s| {
                vec![
                    s.to_string(),
                    c.rach_load[s].to_string(),
                    c.cbra_preambles[s].to_string(),
                    c.rar_emissions[s].to_string(),
                    c.rach_overload_drops[s].to_string(),
                ]
            });
            write_csv(&p, &["second", "rach_load", "cbra_preambles", "rar_emissions", "rach_overload_drops"], rows)?;
            written.push(p);

            let p = dir.join("throughput_ecdf.csv");
            let rows = m.ues.iter().flat_map(|u| {
                ecdf(&u.throughput_mbps)
                    .into_iter()
                    .map(move |(v, f)| vec![u.rnti.0.to_string(), v.to_string(), f.to_string()])
            });
            write_csv(&p, &["rnti", "throughput_mbps", "fraction"], rows)?;
            written.push(p);

            let p = dir.join("events.csv");
            let rows = m.events.iter().map(|e| {
                let kind = serde_json::to_value(&e.kind).expect("event serializes");
                let name = kind["event"].as_str().unwrap_or_default().to_string();
                vec![e.t_ms.to_string(), e.slot.to_string(), e.seq.to_string(), name, kind.to_string()]
            });
            write_csv(&p, &["t_ms", "slot", "seq", "event", "detail"], rows)?;
            written.push(p);

            if let Some(s) = &m.sniffer {
                let p = dir.join("ra_log.csv");
                let f = fs::File::create(&p).map_err(io(&p))?;
                s.write_ra_csv(f).map_err(csv_io(&p))?;
                written.push(p);
                let p = dir.join("csi_log.csv");
                let f = fs::File::create(&p).map_err(io(&p))?;
                s.write_csi_csv(f).map_err(csv_io(&p))?;
                written.push(p);
            }
        }
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ecdf_is_right_continuous() {
        let e = ecdf(&[3.0, 1.0, 3.0, 2.0]);
        assert_eq!(e, vec![(1.0, 0.25), (2.0, 0.5), (3.0, 1.0)]);
        assert!(ecdf(&[]).is_empty());
    }
}
