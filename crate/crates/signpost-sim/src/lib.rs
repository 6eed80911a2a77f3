//! Discrete-event simulator of a solar-harvesting, multi-tenant sensing
//! platform.
//!
//! The simulator models a pole-mounted platform that powers up to five
//! tenant sensor applications from a vertically mounted solar panel and a
//! shared battery. It reproduces, at desk scale, the platform's energy
//! pipeline and sharing policies:
//!
//! - [`solar`] — irradiance-to-power conversion for a tilted panel and the
//!   weekly per-application budget distribution (CCDF) pipeline.
//! - [`ledger`] — battery state, charging/regulation losses, the platform
//!   tax, and per-application virtual energy allocations with isolation
//!   guarantees and depletion gating.
//! - [`comm`] — the shared radio module: LoRaWAN primary path, cellular
//!   escalation when the outbound queue fills, and BLE advertisements.
//! - [`bus`] — unslotted-ALOHA contention on the shared inter-module bus.
//! - [`services`] — time/location (GPS + PPS), storage, processing offload,
//!   and inter-module messaging, with energy attributed to callers.
//! - [`profile`] — scripted application profiles (the built-in weather,
//!   vehicle-counting, RF-spectrum, duty-cycled, greedy, and adaptive apps).
//! - [`scenario`] / [`sim`] — scenario files, the deterministic event loop,
//!   trace emission, and the end-of-run energy audit.
//!
//! Start with the runnable examples (`cargo run --example energy_isolation`)
//! or drive everything from the `signpost-sim` binary.

pub mod bus;
pub mod cli;
pub mod comm;
pub mod io;
pub mod ledger;
pub mod profile;
pub mod report;
pub mod rng;
pub mod scenario;
pub mod services;
pub mod sim;
pub mod solar;

pub use scenario::Scenario;
pub use sim::{run, RunSummary};
