//! Ping-pong verification for Moebius groups on the Riemann sphere.
//!
//! Given two factor groups (amalgamated product) or a vertex group with a
//! stable letter (HNN extension), together with candidate ping-pong caps,
//! this crate checks the ping-pong hypotheses to a bounded word length,
//! manipulates normal forms, builds nested covers of the limit set, codes
//! limit points and renders point clouds.

pub mod diagnostics;
pub mod limitset;
pub mod pingpong;
pub mod sphere;
pub mod words;
