//! Operator parameter profiles observed in deployed LTE networks.

use serde::Serialize;

use super::config::CellConfig;
use crate::codec::sib::{PowerRampingStep, PreambleTransMax, RaWindow, SibRaConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Profile {
    pub name: &'static str,
    /// Aggregated carriers, PCell included.
    pub max_ca: u8,
    pub preamble_trans_max: PreambleTransMax,
    pub ra_window: RaWindow,
    /// `None`: the deactivation timer is left unset (infinite).
    pub scell_deactivation_timer_ms: Option<u32>,
}

const fn mno(name: &'static str, max_ca: u8, preamble_trans_max: PreambleTransMax) -> Profile {
    Profile { name, max_ca, preamble_trans_max, ra_window: RaWindow::Sf10, scell_deactivation_timer_ms: None }
}

pub const PROFILES: [Profile; 6] = [
    mno("MNO-A1", 3, PreambleTransMax::N10),
    mno("MNO-A2", 4, PreambleTransMax::N5),
    mno("MNO-A3", 5, PreambleTransMax::N10),
    mno("MNO-B1", 3, PreambleTransMax::N10),
    mno("MNO-B2", 3, PreambleTransMax::N10),
    mno("MNO-C1", 3, PreambleTransMax::N10),
];

impl Profile {
    pub fn by_name(name: &str) -> Option<Profile> {
        PROFILES.iter().copied().find(|p| p.name.eq_ignore_ascii_case(name))
    }

    pub fn sib(&self) -> SibRaConfig {
        SibRaConfig::new(self.ra_window, self.preamble_trans_max, PowerRampingStep::Db2)
    }

    pub fn apply(&self, cell: &mut CellConfig) {
        cell.sib = SibRaConfig { num_preambles: cell.sib.num_preambles, ..self.sib() };
        cell.scell_count = self.max_ca - 1;
        cell.scell_deactivation_timer_ms = self.scell_deactivation_timer_ms;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn all_profiles_leave_timer_infinite() {
        assert!(PROFILES.iter().all(|p| p.scell_deactivation_timer_ms.is_none()));
        assert!(PROFILES.iter().all(|p| p.ra_window == RaWindow::Sf10));
        assert_eq!(Profile::by_name("mno-a3").unwrap().max_ca, 5);
    }
}
