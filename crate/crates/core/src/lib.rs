//! Deterministic conservative parallel discrete-event simulation of
//! IPv4/UDP networks.
//!
//! The crate is `no_std` (it needs `alloc`) and contains everything that is
//! pure computation: the sequential kernel, the logical-process runtime
//! driven through an abstract [`transport::Transport`], distributed
//! multi-stage initialization, the network-stack models, per-module random
//! streams and the scenario/topology description. Transports, file formats
//! and the command line live in the `parsim` companion crate.
//!
//! Results are a function of `(scenario, seed)` only. Events are ordered by
//! `(time, target path, sender path, sender sequence)`, every module owns its
//! random stream, and all initialization-time sharing goes through DMSI
//! tokens, so a run split over any number of logical processes replays the
//! sequential run event for event.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod build;
pub mod channel;
pub mod codec;
pub mod dmsi;
pub mod error;
pub mod event;
pub mod kernel;
pub mod lp;
pub mod message;
pub mod netstack;
pub mod partition;
pub mod path;
pub mod rng;
pub mod scenario;
pub mod time;
pub mod trace;
pub mod transport;

pub use error::{Error, Result};
pub use event::{Event, FutureEventSet, OrderKey};
pub use kernel::{Kernel, Module, ModuleId};
pub use path::ModulePath;
pub use time::SimTime;
