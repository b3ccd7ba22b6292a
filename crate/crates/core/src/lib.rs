//! Simulation and occurrence/exposure estimation of transition intensities
//! for censored Markov and semi-Markov multi-state jump processes.

pub mod intensity;
pub mod sim;
pub mod oe;
pub mod regularized;
pub mod experiments;
pub mod io;
