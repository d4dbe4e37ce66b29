#![allow(dead_code)]

use llsim_core::codec::{
    DciAllocation, DciKind, DciLayout, DciMessage, MacElement, MacPdu, PowerRampingStep, PreambleTransMax, RaWindow,
    ScellBitmap, SibRaConfig,
};
use llsim_core::simkit::ScenarioConfig;
use llsim_core::time::Rnti;
use rand::seq::IndexedRandom;
use rand::Rng;
use serde_json::json;

pub const BANDWIDTHS: [u16; 7] = [6, 15, 25, 50, 52, 106, 273];

pub fn random_dci(rng: &mut impl Rng) -> (DciMessage, DciLayout) {
    let layout = DciLayout::new(*BANDWIDTHS.choose(rng).unwrap());
    let bw = layout.bandwidth_rb;
    let kind = *[DciKind::UlGrant, DciKind::DlAssignment, DciKind::PdcchOrder, DciKind::BwpSwitch].choose(rng).unwrap();
    let alloc = match kind {
        DciKind::PdcchOrder => None,
        DciKind::BwpSwitch if rng.random_bool(0.5) => None,
        _ => {
            let start = rng.random_range(0..bw);
            Some(DciAllocation::new(start, rng.random_range(1..=bw - start), rng.random_range(0..8)))
        }
    };
    let d = DciMessage {
        rnti: Rnti(rng.random_range(1..=0xFFEF)),
        kind,
        alloc,
        tpc: rng.random_range(0..4),
        dai: rng.random_range(0..4),
        harq_feedback_timing: rng.random_range(0..8),
        bwp_indicator: rng.random_range(0..4),
        mcs: rng.random_range(0..32),
        ndi: rng.random_range(0..2),
        rv: rng.random_range(0..4),
        harq_pid: rng.random_range(0..16),
    };
    (d, layout)
}

pub fn random_mac_element(rng: &mut impl Rng) -> MacElement {
    match rng.random_range(0..7) {
        0 => MacElement::ScellActDeact { bitmap: ScellBitmap(rng.random::<u8>() & 0xFE) },
        1 => MacElement::TimingAdvanceCmd { tag_id: rng.random_range(0..4), ta: rng.random_range(0..64) },
        2 => MacElement::SpSrsActDeact { active: rng.random(), resource_id: rng.random_range(0..64) },
        3 => MacElement::CsiReportingActDeact { active: rng.random() },
        4 => MacElement::BeamFailureRecovery { new_beam_idx: rng.random_range(0..64) },
        5 => MacElement::RecommendedBitRate { kbps: rng.random() },
        _ => {
            let len = if rng.random_bool(0.1) { rng.random_range(256..700) } else { rng.random_range(0..256) };
            MacElement::Sdu { bytes: (0..len).map(|_| rng.random()).collect() }
        }
    }
}

pub fn random_mac_pdu(rng: &mut impl Rng) -> MacPdu {
    let n = rng.random_range(0..6);
    let pdu = MacPdu::new((0..n).map(|_| random_mac_element(rng)).collect());
    let padding = if rng.random_bool(0.5) { 0 } else { rng.random_range(1..8) };
    pdu.with_padding(padding)
}

pub fn random_sib(rng: &mut impl Rng) -> SibRaConfig {
    SibRaConfig {
        ra_response_window_sf: *RaWindow::ALL.choose(rng).unwrap(),
        preamble_trans_max: *PreambleTransMax::ALL.choose(rng).unwrap(),
        power_ramping_step_db: *PowerRampingStep::ALL.choose(rng).unwrap(),
        num_preambles: rng.random_range(1..=64),
    }
}

pub fn all_sibs() -> impl Iterator<Item = SibRaConfig> {
    RaWindow::ALL.iter().flat_map(|&w| {
        PreambleTransMax::ALL
            .iter()
            .flat_map(move |&t| PowerRampingStep::ALL.iter().map(move |&s| SibRaConfig::new(w, t, s)))
    })
}

/// A small random cell under a SIB overshadow and an optional PDCCH order.
pub fn random_scenario(rng: &mut impl Rng) -> ScenarioConfig {
    let bw = *[6u16, 15, 25, 50, 106].choose(rng).unwrap();
    let scells = rng.random_range(0..3u8);
    let n = rng.random_range(1..7usize);
    let traffic = ["none", "full_buffer_ul", "full_buffer_dl"];
    let ues: Vec<_> = (0..n)
        .map(|i| {
            let active: Vec<u8> = if scells > 0 && rng.random_bool(0.5) { vec![1] } else { vec![] };
            json!({"rnti": 200 + i, "path_loss_db": rng.random_range(100.0..146.0),
                   "traffic": traffic.choose(rng).unwrap(), "connected": i == 0 || rng.random_bool(0.5),
                   "active_scells": active})
        })
        .collect();
    let mut actions = vec![json!({"at_ms": 300, "action": {"type": "overshadow_sib",
        "sib": {"ra_response_window_sf": "sf2", "preamble_trans_max": "n200", "power_ramping_step_db": "db0"}}})];
    if rng.random_bool(0.5) {
        actions.push(json!({"at_ms": rng.random_range(100..1500), "action": {"type": "inject_dci",
            "dci": {"kind": "pdcch_order", "rnti": 200 + rng.random_range(0..n)}}}));
    }
    let v = json!({
        "cell": {"bandwidth_rb": bw, "mu": rng.random_range(0..2), "scell_count": scells},
        "bs": {"ra_context_rb": rng.random_range(0..9)},
        "ues": ues,
        "attacker": {"actions": actions},
        "duration_ms": 1500,
        "seed": rng.random::<u64>(),
    });
    ScenarioConfig::from_json(&v.to_string()).unwrap()
}
