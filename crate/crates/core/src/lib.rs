//! Simulator and analysis toolkit for online network coding with feedback
//! over broadcast packet-erasure channels.

pub mod analysis;
pub mod channel;
pub mod field;
pub mod protocol;
pub mod rng;
pub mod sim;
