//! Transmit-power and reflection-coefficient allocation for a primary link
//! shared with an ambient backscatter tag.
//!
//! The primary transmitter (PT) serves its receiver (PR); a passive tag (ST)
//! harvests part of the PT signal to power its circuit and reflects the rest,
//! modulated with its own data, towards a reader (SR). Every solver works on
//! block-level channel power gains and returns a per-block [`BlockDecision`].
//!
//! | regime | power budget | reflection | primary protection | energy model |
//! |--------|--------------|------------|--------------------|--------------|
//! | P1     | peak         | per block  | rate               | ideal        |
//! | P2     | peak         | per block  | rate               | practical    |
//! | P3     | average      | fixed      | rate               | ideal        |
//! | P4     | average      | fixed      | rate               | practical    |
//! | P5     | peak         | fixed      | outage             | ideal        |
//! | P6     | average      | fixed      | outage             | ideal        |
//!
//! Expectations are sample averages over a fixed, seeded set of fading
//! blocks (see [`experiments::sample_blocks`]).

// `!(x > 0.0)` is used on purpose so that NaN takes the rejecting branch.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod allocation;
pub mod average;
pub mod cli;
pub mod config;
mod error;
pub mod experiments;
pub mod model;
pub mod numerics;
pub mod oracle;
pub mod outage;
pub mod par;
pub mod peak;
pub mod verify;

pub use error::{Error, Result};
pub use model::{BlockDecision, ChannelState, EnergyModel, SystemParams};
