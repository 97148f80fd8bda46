//! Desk-scale testbed for ledger-mediated robot control.
//!
//! A simulated pick-and-place cell reports robot events and camera frames to
//! a tamper-evident ledger. A trusted Oracle counts balls in each frame and
//! reports the count to a velocity contract, whose emitted operations drive
//! the robot.

pub mod codec;
pub mod contract;
pub mod harness;
pub mod kv;
pub mod ledger;
pub mod oracle;
pub mod sim;
