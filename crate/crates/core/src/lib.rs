//! Deterministic multi-agent pursuit simulation paired with a convergent
//! cross mapping (CCM) engine.
//!
//! Three predators chase a faster prey in a bounded 2D particle world under
//! fixed strategies (Chaser or Spring). At analysis time one predator can be
//! replaced by a double-pendulum driver; cross-mapping its motion against
//! the remaining predators' motion quantifies how strongly the team's
//! behavior is causally coupled.

pub mod ccm;
pub mod config;
pub mod harness;
pub mod pendulum;
pub mod physics;
pub mod seeds;
pub mod selftest;
pub mod stats;
pub mod strategies;
pub mod trajectory_io;
pub mod vec2;

pub use vec2::Vec2;
