use std::path::{Path, PathBuf};

use llsim_core::simkit::{emit_report, run, ReportFormat, ScenarioConfig, Simulation};
use proptest::prelude::*;
use serde_json::json;
use sha2::{Digest, Sha256};

fn scenario(name: &str) -> ScenarioConfig {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../scenarios").join(format!("{name}.json"));
    ScenarioConfig::load(&p).unwrap()
}

fn small() -> ScenarioConfig {
    ScenarioConfig::from_json(
        r#"{"cell": {"bandwidth_rb": 25, "scell_count": 1},
            "ues": [{"rnti": 100, "path_loss_db": 125, "traffic": "full_buffer_dl", "active_scells": [1]},
                    {"rnti": 101, "path_loss_db": 118, "traffic": "full_buffer_ul"},
                    {"rnti": 102, "path_loss_db": 130, "connected": false}],
            "duration_ms": 2500, "seed": 11}"#,
    )
    .unwrap()
}

#[test]
fn same_seed_same_bytes() {
    let cfg = small();
    assert_eq!(run(&cfg).unwrap().to_json(), run(&cfg).unwrap().to_json());
    let mut other = cfg.clone();
    other.seed = 12;
    let (a, b) = (run(&cfg).unwrap(), run(&other).unwrap());
    assert_eq!(a.ues.len(), b.ues.len());
}

#[test]
fn series_cover_partial_seconds() {
    let r = run(&small()).unwrap();
    for u in &r.ues {
        assert_eq!(u.throughput_mbps.len(), 3);
        assert_eq!(u.energy_units.len(), 3);
        assert_eq!(u.ra_attempts.len(), 3);
    }
    assert_eq!(r.cell.rach_load.len(), 3);
    assert!(r.ue(102).unwrap().connected_at_end);
    let events = &r.events;
    assert!(events.windows(2).all(|w| (w[0].slot, w[0].seq) < (w[1].slot, w[1].seq)));
}

#[test]
fn empty_attacker_matches_absent_attacker() {
    let mut with = small();
    with.attacker = Some(serde_json::from_value(json!({"actions": []})).unwrap());
    let without = small();
    // An idle attacker only adds its own passive capture.
    let mut a = run(&with).unwrap();
    assert!(a.sniffer.take().is_some());
    assert_eq!(a.to_json(), run(&without).unwrap().to_json());
}

#[test]
fn csv_rows_match_series_length() {
    let mut cfg = scenario("csi_activation");
    cfg.duration_ms = 3000;
    let r = run(&cfg).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let files = emit_report(&r, ReportFormat::CsvTables, dir.path()).unwrap();
    let names: Vec<String> = files.iter().map(|f| f.file_name().unwrap().to_string_lossy().into_owned()).collect();
    for n in ["ue_17921.csv", "cell.csv", "throughput_ecdf.csv", "events.csv", "ra_log.csv", "csi_log.csv"] {
        assert!(names.iter().any(|x| x == n), "{n} missing from {names:?}");
    }
    let rows = |f: &str| std::fs::read_to_string(dir.path().join(f)).unwrap().lines().count() - 1;
    assert_eq!(rows("ue_17921.csv"), 3);
    assert_eq!(rows("cell.csv"), 3);
    assert_eq!(rows("events.csv"), r.events.len());
    assert_eq!(rows("csi_log.csv"), r.sniffer.as_ref().unwrap().observed_csi_reports.len());

    let json = emit_report(&r, ReportFormat::JsonDoc, dir.path()).unwrap();
    let back: llsim_core::simkit::MetricsReport =
        serde_json::from_str(&std::fs::read_to_string(&json[0]).unwrap()).unwrap();
    assert_eq!(back.to_json(), r.to_json());
}

#[test]
fn one_second_run_has_one_sample() {
    let mut cfg = small();
    cfg.duration_ms = 1000;
    let r = run(&cfg).unwrap();
    assert!(r.ues.iter().all(|u| u.throughput_mbps.len() == 1));
}

fn golden_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/golden/v1")
}

fn check_golden(path: &Path, text: &str) {
    if std::env::var_os("UPDATE_GOLDEN").is_some() {
        std::fs::write(path, text).unwrap();
    }
    let golden = std::fs::read_to_string(path).expect("golden file present; regenerate with UPDATE_GOLDEN=1");
    assert!(golden == text, "output differs from {}", path.display());
}

// The sniffer capture runs to megabytes, so it is pinned by digest only.
#[test]
fn fig8_report_matches_golden() {
    let mut r = run(&scenario("fig8_po_amplification")).unwrap();
    let digest = hex::encode(Sha256::digest(r.to_json().as_bytes()));
    r.sniffer = None;
    check_golden(&golden_dir().join("fig8_po_amplification.json"), &(r.to_json() + "\n"));
    check_golden(&golden_dir().join("fig8_po_amplification.sha256"), &(digest + "\n"));
}

fn random_config() -> impl Strategy<Value = ScenarioConfig> {
    let ue = (100.0f64..146.0, 0u8..3, any::<bool>(), 0u8..2);
    (
        prop::sample::select(vec![6u16, 15, 25, 50, 106]),
        0u8..2,
        0u8..3,
        0u16..9,
        prop::collection::vec(ue, 1..7),
        any::<u64>(),
        prop::option::of((0usize..6, 100u64..1500)),
    )
        .prop_map(|(bw, mu, scells, ctx, ues, seed, po)| {
            let traffic = ["none", "full_buffer_ul", "full_buffer_dl"];
            let n = ues.len();
            let ues: Vec<_> = ues
                .into_iter()
                .enumerate()
                .map(|(i, (pl, t, connected, sc))| {
                    let active: Vec<u8> = if sc == 1 && scells > 0 { vec![1] } else { vec![] };
                    json!({"rnti": 200 + i, "path_loss_db": pl, "traffic": traffic[t as usize],
                           "connected": connected || i == 0, "active_scells": active})
                })
                .collect();
            let mut actions = vec![json!({"at_ms": 300, "action": {"type": "overshadow_sib",
                "sib": {"ra_response_window_sf": "sf2", "preamble_trans_max": "n200", "power_ramping_step_db": "db0"}}})];
            if let Some((target, at)) = po {
                actions.push(json!({"at_ms": at, "action": {"type": "inject_dci",
                    "dci": {"kind": "pdcch_order", "rnti": 200 + target % n}}}));
            }
            let v = json!({
                "cell": {"bandwidth_rb": bw, "mu": mu, "scell_count": scells},
                "bs": {"ra_context_rb": ctx},
                "ues": ues,
                "attacker": {"actions": actions},
                "duration_ms": 1500,
                "seed": seed,
            });
            ScenarioConfig::from_json(&v.to_string()).unwrap()
        })
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 50, ..ProptestConfig::default() })]

    #[test]
    fn rbs_are_conserved(cfg in random_config()) {
        let bw = cfg.cell.bandwidth_rb;
        let mut sim = Simulation::new(cfg).unwrap();
        while !sim.done() {
            let st = sim.step();
            prop_assert!(st.dl_rb[0] + st.reserved_rb <= bw, "slot {} pcell {}+{} > {bw}", st.slot, st.dl_rb[0], st.reserved_rb);
            for &rb in &st.dl_rb[1..] {
                prop_assert!(rb <= bw);
            }
        }
        prop_assert_eq!(sim.finish().cell.conservation_violations, 0);
    }
}
