//! Control-procedure state machines for UE and BS.

pub mod bs;
pub mod harq;
pub mod ra;
pub mod ue;

pub use bs::{
    bs_inactive, bs_on_ack_bitmap, bs_on_bfr, bs_on_feedback, bs_on_msg3, bs_on_preamble, bs_on_rar_sent, bs_on_sr,
    bs_resolve_contention, bs_rlf_due, round_robin, BsConfig, BsError, BsState, BsUe, Msg4, PreambleOutcome, Rar,
    RttDist,
};
pub use harq::{
    bs_verdict, feedback_slot, harq_on_assignment, BsHarq, FeedbackResult, HarqTracker, HarqVerdict, PendingTb,
};
pub use ra::{ra_on_msg4, ra_on_rar, ra_start, ra_tick, RaCause, RaEvent, RaPhase, RaState, RaTiming, RarOutcome};
pub use ue::{
    apply_mac_ce, energy_tick, scell_timer_tick, ue_on_dci, CsiSchedule, DciRx, Traffic, UeAction, UeConfig, UeState,
};
