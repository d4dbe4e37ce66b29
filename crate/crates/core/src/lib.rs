//! Deterministic simulator of unprotected PHY/MAC control procedures, with
//! an injection harness and passive beam-based geolocation.

pub mod attacker;
pub mod channel;
pub mod codec;
pub mod geoloc;
pub mod procedures;
pub mod simkit;
pub mod time;
