//! Simulation and solver toolkit for power trading in two-hop amplify-and-forward
//! relay networks.
//!
//! A source buys transmit power from one of `K` candidate relays at a per-watt
//! price the relay announces. The crate provides three complementary views of
//! that interaction:
//!
//! * [`channel`] — Rayleigh block fading with first-order Gauss–Markov memory,
//!   per-link SNR quantities, and end-to-end capacity.
//! * [`game`] — exact leader/follower (Stackelberg) solutions for a relay
//!   alliance and for mutually competing relays, plus a brute-force grid
//!   oracle used to cross-check the closed forms.
//! * [`rl`] — two actor-critic agents (leader prices, follower buys) trained
//!   on outdated channel observations with prioritized experience replay,
//!   built on the small dense-network toolkit in [`nn`].
//!
//! [`baselines`] adds reference policies (instantaneous-CSI game solution,
//! learning-leader/game-follower hybrid, discrete Q-learning, random), and
//! [`harness`] wires everything to config files, CSV metrics, and the CLI.

pub mod baselines;
pub mod channel;
pub mod error;
pub mod game;
pub mod harness;
pub mod nn;
pub mod rl;

pub use error::{Error, Result};
