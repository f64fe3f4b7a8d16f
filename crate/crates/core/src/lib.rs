//! Deterministic simulation of Ethereum's attestation-subnet gossip layer
//! together with the observation and analysis pipeline that tries to locate
//! validators on the peers hosting them, verify the findings against entity
//! labels, and score everything against the simulator's ground truth.

pub mod config;
pub mod deanon;
pub mod gossip;
pub mod observation;
pub mod scenario;
pub mod score;
pub mod protocol;
pub mod rng;
pub mod verify;
