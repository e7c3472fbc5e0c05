//! Verification workbench for authentication protocols.
//!
//! Three engines share one term language and one protocol front-end:
//!
//! * [`checker`]: bounded attack search against a Dolev-Yao intruder,
//! * [`ban`]: forward-chaining BAN belief inference over an idealized protocol,
//! * [`strand`]: strand-space bundles lifted from traces, with origination
//!   and responder-guarantee checks.
//!
//! [`engine`] registers the engines by name and [`report`] drives them from a
//! run configuration.

pub mod ban;
pub mod checker;
pub mod dsl;
pub mod engine;
pub mod fixtures;
pub mod intruder;
pub mod report;
pub mod strand;
pub mod term;
