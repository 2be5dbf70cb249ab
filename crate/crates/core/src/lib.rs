//! Analysis toolkit for passive-scheme QKD with an untrusted source.

pub mod confidence;
pub mod keyrate;
pub mod montecarlo;
pub mod noise_bounds;
pub mod photon_stats;
pub mod special;
pub mod worstcase;
