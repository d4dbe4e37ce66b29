//! Time, identity, resource and power vocabulary shared by every module.
//!
//! Simulation time is kept at slot granularity. A [`SlotTime`] is the
//! over-the-air label of a slot (SFN, subframe, slot) and wraps every 1024
//! frames; the engine keeps an absolute slot counter and converts with
//! [`SlotTime::from_index`].

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Number of frames before the SFN wraps.
pub const SFN_CYCLE: u32 = 1024;
pub const SUBFRAMES_PER_FRAME: u32 = 10;
/// Largest numerology index supported (120 kHz subcarrier spacing).
pub const MAX_MU: u8 = 3;

pub const UE_MAX_TX_DBM: f64 = 23.0;
pub const UE_MIN_TX_DBM: f64 = -60.0;
/// Distance covered by one timing-advance step at numerology 3.
pub const TA_STEP_M_MU3: f64 = 9.77;

/// Metres per timing-advance step at numerology `mu`.
pub fn ta_step_m(mu: u8) -> f64 {
    TA_STEP_M_MU3 * f64::from(1u32 << (MAX_MU - mu.min(MAX_MU)))
}

/// Timing advance reported for a UE `distance_m` from the BS.
pub fn ta_for_distance(distance_m: f64, mu: u8) -> u32 {
    (distance_m.max(0.0) / ta_step_m(mu)).ceil() as u32
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TimeError {
    #[error("invalid slot time field {field}={value} for mu={mu}")]
    InvalidField { field: &'static str, value: u32, mu: u8 },
    #[error("numerology mu={0} is not supported")]
    InvalidNumerology(u8),
    #[error("separation of {frames} frames exceeds the unambiguous half SFN range")]
    AmbiguousWrap { frames: u32 },
}

/// Frame / subframe / slot label of one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SlotTime {
    sfn: u16,
    subframe: u8,
    slot: u8,
    mu: u8,
}

impl SlotTime {
    pub fn new(sfn: u16, subframe: u8, slot: u8, mu: u8) -> Result<Self, TimeError> {
        if mu > MAX_MU {
            return Err(TimeError::InvalidNumerology(mu));
        }
        if u32::from(sfn) >= SFN_CYCLE {
            return Err(TimeError::InvalidField { field: "sfn", value: sfn.into(), mu });
        }
        if u32::from(subframe) >= SUBFRAMES_PER_FRAME {
            return Err(TimeError::InvalidField { field: "subframe", value: subframe.into(), mu });
        }
        if u32::from(slot) >= 1 << mu {
            return Err(TimeError::InvalidField { field: "slot", value: slot.into(), mu });
        }
        Ok(Self { sfn, subframe, slot, mu })
    }

    pub fn zero(mu: u8) -> Self {
        Self { sfn: 0, subframe: 0, slot: 0, mu }
    }

    pub fn sfn(&self) -> u16 {
        self.sfn
    }

    pub fn subframe(&self) -> u8 {
        self.subframe
    }

    pub fn slot(&self) -> u8 {
        self.slot
    }

    pub fn mu(&self) -> u8 {
        self.mu
    }

    pub fn slots_per_subframe(&self) -> u32 {
        slots_per_subframe(self.mu)
    }

    /// Slots in one full SFN cycle for this numerology.
    pub fn cycle_slots(&self) -> u64 {
        cycle_slots(self.mu)
    }

    /// Position of this slot inside the SFN cycle.
    pub fn cycle_index(&self) -> u64 {
        let sps = u64::from(self.slots_per_subframe());
        (u64::from(self.sfn) * u64::from(SUBFRAMES_PER_FRAME) + u64::from(self.subframe)) * sps + u64::from(self.slot)
    }

    /// Label of the `index`-th slot since SFN 0 (wraps modulo the SFN cycle).
    pub fn from_index(index: u64, mu: u8) -> Self {
        let sps = u64::from(slots_per_subframe(mu));
        let idx = index % cycle_slots(mu);
        let slot = (idx % sps) as u8;
        let sf_total = idx / sps;
        let subframe = (sf_total % u64::from(SUBFRAMES_PER_FRAME)) as u8;
        let sfn = (sf_total / u64::from(SUBFRAMES_PER_FRAME)) as u16;
        Self { sfn, subframe, slot, mu }
    }

    /// Advance by `n_slots`, carrying into subframe and SFN; SFN wraps mod 1024.
    pub fn advance(self, n_slots: u64) -> Self {
        let cycle = self.cycle_slots();
        Self::from_index((self.cycle_index() + n_slots % cycle) % cycle, self.mu)
    }

    pub fn advance_subframes(self, n: u64) -> Self {
        self.advance(n * u64::from(self.slots_per_subframe()))
    }

    /// Signed slot distance from `self` to `other`, resolved to the nearest
    /// wrap (result lies in `(-cycle/2, cycle/2]`).
    pub fn slots_until(&self, other: &SlotTime) -> i64 {
        let cycle = self.cycle_slots() as i64;
        let d = (other.cycle_index() as i64 - self.cycle_index() as i64).rem_euclid(cycle);
        if d > cycle / 2 {
            d - cycle
        } else {
            d
        }
    }

    /// Wrap-aware ordering, valid while both labels are within half an SFN
    /// cycle of each other.
    pub fn wrapping_cmp(&self, other: &SlotTime) -> Ordering {
        0.cmp(&self.slots_until(other))
    }

    /// `true` once `self` is at or past `deadline` (wrap-aware).
    pub fn has_reached(&self, deadline: &SlotTime) -> bool {
        deadline.slots_until(self) >= 0
    }

    /// `true` when `self` is strictly after `deadline` (wrap-aware).
    pub fn is_after(&self, deadline: &SlotTime) -> bool {
        deadline.slots_until(self) > 0
    }

    /// Duration of one slot in milliseconds.
    pub fn slot_ms(&self) -> f64 {
        1.0 / f64::from(self.slots_per_subframe())
    }
}

/// Lexicographic ordering on (sfn, subframe, slot); use
/// [`SlotTime::wrapping_cmp`] for comparisons that may straddle a wrap.
impl Ord for SlotTime {
    fn cmp(&self, other: &Self) -> Ordering {
        (self.mu, self.sfn, self.subframe, self.slot).cmp(&(other.mu, other.sfn, other.subframe, other.slot))
    }
}

impl PartialOrd for SlotTime {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl fmt::Display for SlotTime {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}.{}.{}", self.sfn, self.subframe, self.slot)
    }
}

pub fn slots_per_subframe(mu: u8) -> u32 {
    1 << mu
}

pub fn cycle_slots(mu: u8) -> u64 {
    u64::from(SFN_CYCLE) * u64::from(SUBFRAMES_PER_FRAME) * u64::from(slots_per_subframe(mu))
}

/// `t` advanced by `n_slots`.
pub fn slot_advance(t: SlotTime, n_slots: u64) -> SlotTime {
    t.advance(n_slots)
}

/// Whole subframes from `a` to `b`, where `b` is at or after `a` within half
/// the SFN space.
pub fn subframes_between(a: SlotTime, b: SlotTime) -> Result<u64, TimeError> {
    let cycle = a.cycle_slots();
    let d = (b.cycle_index() + cycle - a.cycle_index()) % cycle;
    let slots_per_frame = u64::from(SUBFRAMES_PER_FRAME) * u64::from(a.slots_per_subframe());
    let frames = d / slots_per_frame;
    if frames > u64::from(SFN_CYCLE / 2) {
        return Err(TimeError::AmbiguousWrap { frames: frames as u32 });
    }
    Ok(d / u64::from(a.slots_per_subframe()))
}

/// 16-bit radio network temporary identifier.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Rnti(pub u16);

impl Rnti {
    /// RNTI usable for a connected UE (nonzero).
    pub fn connected(value: u16) -> Option<Self> {
        (value != 0).then_some(Self(value))
    }

    pub fn value(self) -> u16 {
        self.0
    }
}

impl fmt::Display for Rnti {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "0x{:04x}", self.0)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    Dl,
    Ul,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum AllocationError {
    #[error("allocation must span at least one resource block")]
    Empty,
    #[error("allocation {start}+{len} exceeds bandwidth of {bandwidth} RBs")]
    OutOfBand { start: u16, len: u16, bandwidth: u16 },
}

/// Contiguous block of resource blocks in one slot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ResourceAllocation {
    pub start_rb: u16,
    pub num_rb: u16,
    pub slot: SlotTime,
    pub direction: Direction,
}

impl ResourceAllocation {
    pub fn new(
        start_rb: u16,
        num_rb: u16,
        slot: SlotTime,
        direction: Direction,
        bandwidth_rb: u16,
    ) -> Result<Self, AllocationError> {
        let alloc = Self { start_rb, num_rb, slot, direction };
        alloc.validate(bandwidth_rb)?;
        Ok(alloc)
    }

    pub fn validate(&self, bandwidth_rb: u16) -> Result<(), AllocationError> {
        if self.num_rb == 0 {
            return Err(AllocationError::Empty);
        }
        if u32::from(self.start_rb) + u32::from(self.num_rb) > u32::from(bandwidth_rb) {
            return Err(AllocationError::OutOfBand { start: self.start_rb, len: self.num_rb, bandwidth: bandwidth_rb });
        }
        Ok(())
    }

    pub fn end_rb(&self) -> u16 {
        self.start_rb + self.num_rb
    }

    pub fn overlap_rb(&self, other: &ResourceAllocation) -> u16 {
        let lo = self.start_rb.max(other.start_rb);
        let hi = self.end_rb().min(other.end_rb());
        hi.saturating_sub(lo)
    }
}

/// Power level in dBm.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct PowerDbm(pub f64);

impl PowerDbm {
    pub fn new(value: f64) -> Self {
        Self(value)
    }

    /// UE transmit power clamped to `[UE_MIN_TX_DBM, max_dbm]`.
    pub fn ue_tx(value: f64, max_dbm: f64) -> Self {
        Self(value.clamp(UE_MIN_TX_DBM, max_dbm))
    }

    pub fn dbm(self) -> f64 {
        self.0
    }

    pub fn milliwatts(self) -> f64 {
        10f64.powf(self.0 / 10.0)
    }

    pub fn from_milliwatts(mw: f64) -> Self {
        Self(10.0 * mw.log10())
    }
}

impl fmt::Display for PowerDbm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:.2} dBm", self.0)
    }
}
