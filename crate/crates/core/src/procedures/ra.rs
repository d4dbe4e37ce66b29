//! UE side of the random-access procedure.
//!
//! Msg1 goes out at `now`; the RAR must arrive no later than
//! `msg1 + 3 + window` subframes. After a timeout or a lost contention the
//! UE backs off `backoff_sf` subframes and waits for the next PRACH
//! occasion, ramping its power each time.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::codec::sib::SibRaConfig;
use crate::time::{PowerDbm, SlotTime};

/// Subframes between the end of Msg1 and the opening of the RAR window.
pub const RAR_WINDOW_OFFSET_SF: u64 = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RaTiming {
    pub backoff_sf: u32,
    pub prach_period_sf: u32,
    pub prach_offset_sf: u32,
    /// Delay from RAR to Msg3.
    pub msg3_delay_sf: u32,
    /// ra-ContentionResolutionTimer.
    pub contention_resolution_sf: u32,
}

impl Default for RaTiming {
    fn default() -> Self {
        Self { backoff_sf: 2, prach_period_sf: 10, prach_offset_sf: 0, msg3_delay_sf: 3, contention_resolution_sf: 64 }
    }
}

impl RaTiming {
    /// First PRACH occasion at or after `t`.
    pub fn next_occasion(&self, t: SlotTime) -> SlotTime {
        let sps = u64::from(t.slots_per_subframe());
        let idx = t.cycle_index();
        let mut sf = idx.div_ceil(sps);
        let period = u64::from(self.prach_period_sf.max(1));
        let off = u64::from(self.prach_offset_sf) % period;
        sf += (off + period - sf % period) % period;
        SlotTime::from_index(sf * sps, t.mu())
    }

    /// Upper bound on the length of a full failing attempt sequence.
    pub fn liveness_bound_sf(&self, cfg: &SibRaConfig) -> u64 {
        let per_attempt = RAR_WINDOW_OFFSET_SF
            + u64::from(cfg.window_sf())
            + 1
            + u64::from(self.backoff_sf)
            + u64::from(self.prach_period_sf)
            + u64::from(self.msg3_delay_sf + self.contention_resolution_sf);
        u64::from(cfg.trans_max()) * per_attempt
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "phase", rename_all = "snake_case")]
pub enum RaPhase {
    Idle,
    /// Waiting for the PRACH occasion that carries the next Msg1.
    PendingMsg1 {
        at: SlotTime,
    },
    WaitingRar {
        deadline: SlotTime,
    },
    WaitingMsg4 {
        deadline: SlotTime,
    },
    Done,
    Failed,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "cause", rename_all = "snake_case")]
pub enum RaCause {
    InitialAccess,
    PdcchOrder { preamble_index: u8 },
}

impl RaCause {
    pub fn contention_free(self) -> bool {
        matches!(self, RaCause::PdcchOrder { preamble_index } if preamble_index != 0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RaState {
    pub phase: RaPhase,
    pub attempt: u32,
    pub preamble: u8,
    pub window_cfg: SibRaConfig,
    pub cause: RaCause,
    pub msg1_at: Option<SlotTime>,
    pub started_at: Option<SlotTime>,
}

impl Default for RaState {
    fn default() -> Self {
        Self {
            phase: RaPhase::Idle,
            attempt: 0,
            preamble: 0,
            window_cfg: SibRaConfig::default(),
            cause: RaCause::InitialAccess,
            msg1_at: None,
            started_at: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "event", rename_all = "snake_case")]
pub enum RaEvent {
    /// Msg1 transmitted with this preamble and power.
    Msg1 { preamble: u8, attempt: u32, power: PowerDbm, contention_free: bool },
    /// Attempt failed (RAR timeout or lost contention); retry pending.
    Retry { attempt: u32 },
    /// Attempts exhausted.
    Failed { attempts: u32 },
    /// Procedure completed.
    Completed { attempts: u32 },
}

impl RaState {
    pub fn in_progress(&self) -> bool {
        matches!(self.phase, RaPhase::PendingMsg1 { .. } | RaPhase::WaitingRar { .. } | RaPhase::WaitingMsg4 { .. })
    }

    fn draw_preamble(&mut self, rng: &mut impl Rng) {
        self.preamble = match self.cause {
            RaCause::PdcchOrder { preamble_index } if preamble_index != 0 => preamble_index,
            _ => rng.random_range(0..self.window_cfg.num_preambles.max(1)),
        };
    }

    fn send_msg1(&mut self, now: SlotTime, power: PowerDbm) -> RaEvent {
        let window = RAR_WINDOW_OFFSET_SF + u64::from(self.window_cfg.window_sf());
        self.phase = RaPhase::WaitingRar { deadline: now.advance_subframes(window) };
        self.msg1_at = Some(now);
        RaEvent::Msg1 {
            preamble: self.preamble,
            attempt: self.attempt,
            power,
            contention_free: self.cause.contention_free(),
        }
    }

    /// Handle a failed attempt: ramp power, then either schedule a retry
    /// or give up.
    fn fail_attempt(&mut self, now: SlotTime, timing: &RaTiming, power: &mut PowerDbm, max_dbm: f64) -> RaEvent {
        self.attempt += 1;
        *power = PowerDbm::ue_tx(power.0 + self.window_cfg.ramp_db(), max_dbm);
        if self.attempt > self.window_cfg.trans_max() {
            self.phase = RaPhase::Failed;
            return RaEvent::Failed { attempts: self.attempt - 1 };
        }
        let earliest = now.advance_subframes(u64::from(timing.backoff_sf));
        self.phase = RaPhase::PendingMsg1 { at: timing.next_occasion(earliest) };
        RaEvent::Retry { attempt: self.attempt }
    }
}

/// Start a random-access procedure; Msg1 goes out at `now`.
pub fn ra_start(
    ra: &mut RaState,
    cfg: SibRaConfig,
    cause: RaCause,
    now: SlotTime,
    power: PowerDbm,
    rng: &mut impl Rng,
) -> RaEvent {
    *ra = RaState { window_cfg: cfg, cause, attempt: 1, started_at: Some(now), ..RaState::default() };
    ra.draw_preamble(rng);
    ra.send_msg1(now, power)
}

/// Advance timers. `power` is the UE's transmit power, ramped on failure.
pub fn ra_tick(
    ra: &mut RaState,
    now: SlotTime,
    timing: &RaTiming,
    power: &mut PowerDbm,
    max_dbm: f64,
    rng: &mut impl Rng,
) -> Option<RaEvent> {
    match ra.phase {
        RaPhase::PendingMsg1 { at } if now.has_reached(&at) => {
            ra.draw_preamble(rng);
            Some(ra.send_msg1(now, *power))
        }
        RaPhase::WaitingRar { deadline } | RaPhase::WaitingMsg4 { deadline } if now.is_after(&deadline) => {
            Some(ra.fail_attempt(now, timing, power, max_dbm))
        }
        _ => None,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RarOutcome {
    Ignored,
    /// Contention-free access completed.
    Completed,
    /// Contention-based: Msg3 goes out at the given time.
    SendMsg3 {
        at: SlotTime,
    },
}

/// RAR carrying `rapid` received at `now`.
pub fn ra_on_rar(ra: &mut RaState, rapid: u8, now: SlotTime, timing: &RaTiming) -> RarOutcome {
    let RaPhase::WaitingRar { deadline } = ra.phase else {
        return RarOutcome::Ignored;
    };
    if now.is_after(&deadline) || rapid != ra.preamble {
        return RarOutcome::Ignored;
    }
    if ra.cause.contention_free() {
        ra.phase = RaPhase::Done;
        return RarOutcome::Completed;
    }
    let at = now.advance_subframes(u64::from(timing.msg3_delay_sf));
    ra.phase = RaPhase::WaitingMsg4 { deadline: at.advance_subframes(u64::from(timing.contention_resolution_sf)) };
    RarOutcome::SendMsg3 { at }
}

/// Contention resolution result. Losing counts as a failed attempt.
pub fn ra_on_msg4(
    ra: &mut RaState,
    won: bool,
    now: SlotTime,
    timing: &RaTiming,
    power: &mut PowerDbm,
    max_dbm: f64,
) -> Option<RaEvent> {
    if !matches!(ra.phase, RaPhase::WaitingMsg4 { .. }) {
        return None;
    }
    if won {
        ra.phase = RaPhase::Done;
        Some(RaEvent::Completed { attempts: ra.attempt })
    } else {
        Some(ra.fail_attempt(now, timing, power, max_dbm))
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::codec::sib::{PowerRampingStep, PreambleTransMax, RaWindow};
    use proptest::prelude::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn attack_cfg() -> SibRaConfig {
        SibRaConfig::new(RaWindow::Sf2, PreambleTransMax::N200, PowerRampingStep::Db0)
    }

    /// Run until Done/Failed, delivering every RAR `rtt_sf` after its Msg1.
    /// Returns the final state, the event trace and the elapsed slot count.
    fn run(cfg: SibRaConfig, cause: RaCause, rtt_sf: u64, start: SlotTime) -> (RaState, Vec<(SlotTime, RaEvent)>, u64) {
        let timing = RaTiming::default();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut ra = RaState::default();
        let mut power = PowerDbm(0.0);
        let mut events = vec![(start, ra_start(&mut ra, cfg, cause, start, power, &mut rng))];
        let mut rars: Vec<(SlotTime, u8)> = vec![(start.advance_subframes(rtt_sf), ra.preamble)];
        let mut now = start;
        let mut elapsed = 0;
        for _ in 0..100_000 {
            now = now.advance(1);
            elapsed += 1;
            if let Some(i) = rars.iter().position(|(t, _)| *t == now) {
                let (_, p) = rars.remove(i);
                if let RarOutcome::Completed = ra_on_rar(&mut ra, p, now, &timing) {
                    events.push((now, RaEvent::Completed { attempts: ra.attempt }));
                }
            }
            if let Some(ev) = ra_tick(&mut ra, now, &timing, &mut power, 23.0, &mut rng) {
                if let RaEvent::Msg1 { preamble, .. } = ev {
                    rars.push((now.advance_subframes(rtt_sf), preamble));
                }
                events.push((now, ev));
            }
            if matches!(ra.phase, RaPhase::Done | RaPhase::Failed) {
                break;
            }
        }
        (ra, events, elapsed)
    }

    #[test]
    fn deadlines_follow_window() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let now = SlotTime::zero(0);
        let mut ra = RaState::default();
        ra_start(&mut ra, attack_cfg(), RaCause::InitialAccess, now, PowerDbm(0.0), &mut rng);
        assert_eq!(ra.phase, RaPhase::WaitingRar { deadline: now.advance(5) });
        ra_start(&mut ra, SibRaConfig::default(), RaCause::InitialAccess, now, PowerDbm(0.0), &mut rng);
        assert_eq!(ra.phase, RaPhase::WaitingRar { deadline: now.advance(13) });
        assert_eq!(ra.attempt, 1);
    }

    #[test]
    fn late_rar_fails_all_200_attempts() {
        let (ra, events, ms) = run(attack_cfg(), RaCause::PdcchOrder { preamble_index: 17 }, 7, SlotTime::zero(0));
        assert_eq!(ra.phase, RaPhase::Failed);
        let msg1 = events.iter().filter(|(_, e)| matches!(e, RaEvent::Msg1 { .. })).count();
        assert_eq!(msg1, 200);
        assert!(matches!(events.last().unwrap().1, RaEvent::Failed { attempts: 200 }));
        assert!((1890..=2310).contains(&ms), "storm lasted {ms} ms");
    }

    #[test]
    fn timely_rar_completes_contention_free() {
        let cfg = SibRaConfig::default();
        let (ra, events, _) = run(cfg, RaCause::PdcchOrder { preamble_index: 5 }, 7, SlotTime::zero(0));
        assert_eq!(ra.phase, RaPhase::Done);
        assert_eq!(events.len(), 2);
    }

    #[test]
    fn power_ramp_clamps() {
        let cfg = SibRaConfig::new(RaWindow::Sf2, PreambleTransMax::N20, PowerRampingStep::Db6);
        let timing = RaTiming::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut ra = RaState::default();
        let mut power = PowerDbm(0.0);
        let mut now = SlotTime::zero(0);
        ra_start(&mut ra, cfg, RaCause::InitialAccess, now, power, &mut rng);
        let mut failures = 0;
        while ra.phase != RaPhase::Failed {
            now = now.advance(1);
            if let Some(RaEvent::Retry { .. } | RaEvent::Failed { .. }) =
                ra_tick(&mut ra, now, &timing, &mut power, 23.0, &mut rng)
            {
                failures += 1;
                assert_eq!(power.0, (6.0 * failures as f64).min(23.0));
            }
        }
        assert_eq!(failures, 20);
    }

    #[test]
    fn contention_loss_retries() {
        let timing = RaTiming::default();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let now = SlotTime::zero(0);
        let mut power = PowerDbm(10.0);
        let mut ra = RaState::default();
        ra_start(&mut ra, SibRaConfig::default(), RaCause::InitialAccess, now, power, &mut rng);
        let t = now.advance(7);
        let p = ra.preamble;
        assert!(matches!(ra_on_rar(&mut ra, p, t, &timing), RarOutcome::SendMsg3 { .. }));
        let ev = ra_on_msg4(&mut ra, false, t.advance(7), &timing, &mut power, 23.0);
        assert_eq!(ev, Some(RaEvent::Retry { attempt: 2 }));
        assert!(matches!(ra.phase, RaPhase::PendingMsg1 { .. }));
        assert_eq!(power.0, 12.0);
    }

    #[test]
    fn prach_occasions() {
        let t = RaTiming::default();
        assert_eq!(t.next_occasion(SlotTime::from_index(0, 0)), SlotTime::from_index(0, 0));
        assert_eq!(t.next_occasion(SlotTime::from_index(1, 0)), SlotTime::from_index(10, 0));
        assert_eq!(t.next_occasion(SlotTime::from_index(9, 1)), SlotTime::from_index(10 * 2, 1));
        assert_eq!(t.next_occasion(SlotTime::from_index(10235, 0)), SlotTime::from_index(0, 0));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]
        #[test]
        fn terminates_within_bound(w in 0usize..9, n in 0usize..11, rtt in 1u64..20, start in 0u64..10_240, cf in any::<bool>()) {
            let cfg = SibRaConfig::new(RaWindow::ALL[w], PreambleTransMax::ALL[n], PowerRampingStep::Db2);
            let cause = if cf { RaCause::PdcchOrder { preamble_index: 9 } } else { RaCause::InitialAccess };
            let t0 = SlotTime::from_index(start, 0);
            let (ra, _, elapsed) = run(cfg, cause, rtt, t0);
            prop_assert!(matches!(ra.phase, RaPhase::Done | RaPhase::Failed));
            prop_assert!(elapsed <= RaTiming::default().liveness_bound_sf(&cfg));
        }
    }
}
