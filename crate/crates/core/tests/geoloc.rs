use std::sync::OnceLock;

use llsim_core::attacker::ObservedCsi;
use llsim_core::geoloc::synth::{walks, NoiseModel, World};
use llsim_core::geoloc::*;
use llsim_core::time::ta_step_m;
use proptest::prelude::*;

fn wedge() -> &'static (World, FingerprintMap) {
    static CELL: OnceLock<(World, FingerprintMap)> = OnceLock::new();
    CELL.get_or_init(|| {
        let w = World::open_wedge();
        let map = build_fingerprint(&w.survey(), w.bs, w.fingerprint_params()).unwrap();
        (w, map)
    })
}

fn streets() -> &'static (World, FingerprintMap) {
    static CELL: OnceLock<(World, FingerprintMap)> = OnceLock::new();
    CELL.get_or_init(|| {
        let w = World::default();
        let map = build_fingerprint(&w.survey(), w.bs, w.fingerprint_params()).unwrap();
        (w, map)
    })
}

#[test]
fn wedge_has_one_area_per_beam_and_neighbours_touch() {
    let (w, map) = wedge();
    assert_eq!(map.areas.len(), 48);
    assert_eq!(map.beam_count(), 48);
    let id = |b: u8| map.areas_of(b).next().unwrap().id;
    for b in 0..47u8 {
        assert!(map.are_adjacent(id(b), id(b + 1)), "beams {b} and {}", b + 1);
    }
    assert_eq!(map.adjacency.len(), 47);
    // Every survey point ends up in exactly one area.
    let owned: usize = map.areas.iter().map(|a| a.points).sum();
    assert_eq!(owned, w.survey().len());
}

#[test]
fn street_map_has_reflection_areas() {
    let (_, map) = streets();
    assert_eq!(map.beam_count(), 48);
    assert!(map.areas.len() > 48);
    for &(a, b) in &map.adjacency {
        assert!(a < b);
        assert!(map.are_adjacent(b, a));
    }
    assert!((0..map.areas.len()).all(|a| !map.are_adjacent(a, a)));
}

#[test]
fn map_json_round_trips() {
    let (_, map) = streets();
    let back = FingerprintMap::from_json(&map.to_json()).unwrap();
    assert_eq!(&back, map);
}

#[test]
fn wedge_localization_within_geometric_bound() {
    let (w, map) = wedge();
    let half_step = ta_step_m(w.mu) / 2.0;
    for seed in 0..5 {
        let pts = w.test_points(183, seed);
        for (p, ra) in pts.iter().zip(w.ra_log(&pts)) {
            let est = localize_ssb_ra(ra.beam_idx, TimingAdvance::new(ra.ta, w.mu).unwrap(), map).unwrap();
            let bound = p.norm() * w.beam_width_rad() / 2.0 + half_step;
            assert!(est.point.dist(*p) <= bound, "seed {seed} {p:?}: {} > {bound}", est.point.dist(*p));
        }
    }
}

#[test]
fn tracked_areas_are_chained_by_adjacency() {
    let (w, map) = streets();
    for walk in walks(w, 30, 3, &NoiseModel::default()) {
        let r = beam_to_path(&walk.reports, &TrackerParams::new(15.0, 5), map).unwrap();
        for pair in r.areas.windows(2) {
            assert!(map.are_adjacent(pair[0], pair[1]), "{:?}", r.areas);
        }
        assert_eq!(r.anchors.len(), r.areas.len());
    }
}

#[test]
fn unknown_beam_is_an_error() {
    let (_, map) = wedge();
    let ta = TimingAdvance::new(3, 3).unwrap();
    assert_eq!(localize_ssb_ra(48, ta, map), Err(GeolocError::UnknownBeam(48)));
}

proptest! {
    #[test]
    fn ta_intervals_tile(ta in 1u32..MAX_TA, mu in 0u8..=3) {
        let (_, hi) = ta_to_distance_range(TimingAdvance::new(ta, mu).unwrap());
        let (lo, _) = ta_to_distance_range(TimingAdvance::new(ta + 1, mu).unwrap());
        prop_assert_eq!(hi, lo);
    }

    #[test]
    fn estimate_on_bisector_within_annulus(beam in 0u8..48, ta in 0u32..=MAX_TA) {
        let (_, map) = wedge();
        let t = TimingAdvance::new(ta, 3).unwrap();
        let est = localize_ssb_ra(beam, t, map).unwrap();
        let area = &map.areas[est.area];
        prop_assert_eq!(area.beam_idx, beam);
        if ta > 0 {
            prop_assert!(est.point.cross(area.bisector).abs() < 1e-6);
            prop_assert!(est.point.dot(area.bisector) >= 0.0);
        }
        let (lo, hi) = ta_to_distance_range(t);
        prop_assert!(est.clamped || (lo - 1e-9..=hi + 1e-9).contains(&est.point.norm()));
    }

    #[test]
    fn filtered_reports_do_not_change_path(
        seed in 0u64..40,
        inserts in prop::collection::vec((any::<prop::sample::Index>(), 0u8..48, 16.0f64..60.0, any::<bool>()), 1..20),
    ) {
        let (w, map) = streets();
        let walk = walks(w, 1, seed, &NoiseModel::default()).remove(0);
        let params = TrackerParams { rsrp_base: Some(-80.0), ..TrackerParams::new(15.0, 5) };
        let base = beam_to_path(&walk.reports, &params, map);
        let mut noisy = walk.reports.clone();
        for (at, beam, off, above) in inserts {
            let i = at.index(noisy.len() + 1);
            let t_ms = if i == 0 { noisy[0].t_ms } else { noisy[i - 1].t_ms };
            let rsrp_dbm = if above { -80.0 + off } else { -80.0 - off };
            noisy.insert(i, ObservedCsi { t_ms, rnti: noisy[0].rnti, beam_idx: beam, rsrp_dbm });
        }
        prop_assert_eq!(beam_to_path(&noisy, &params, map), base);
    }
}
