//! Occurrence/exposure aggregation and rate estimation on equidistant grids.

mod grid;
mod rates;
mod table;

use thiserror::Error;

use crate::intensity::StateId;
use crate::sim::{Trajectory, TrajectoryError};

pub use grid::{GridSpec, TimeDurationGrid, TimeGrid};
pub use rates::{
    diagonal_slice, normal_quantile, oe_rates, theorem_scale_variance, wald, Estimate, IntervalScale, Method, RateFit, TransitionFit,
};
pub use table::{aggregate_1d, aggregate_2d, CompensatedSum, Layout, OETable};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum OeError {
    #[error("invalid grid: t0={t0}, t_max={t_max}, bins={bins}")]
    BadGrid { t0: f64, t_max: f64, bins: usize },
    #[error("invalid trajectory: {0}")]
    Trajectory(#[from] TrajectoryError),
    #[error("subject {subject}: state index {state} is not in the layout")]
    UnknownState { subject: u64, state: usize },
    #[error("subject {subject}: transition {from} -> {to} is not tabulated")]
    UnknownTransition { subject: u64, from: String, to: String },
    #[error("unknown transition {0}")]
    NoSuchTransition(String),
    #[error("table shapes do not match")]
    Shape,
    #[error("confidence level must lie in (0, 1), got {0}")]
    BadLevel(f64),
    #[error("fit is not on a time-by-duration grid")]
    NotTwoDimensional,
    #[error("diagonal offset must be finite and >= 0, got {0}")]
    BadOffset(f64),
    #[error("fit is not on a time grid")]
    NotOneDimensional,
    #[error("time {0} is outside the grid")]
    OutsideGrid(f64),
    #[error("bin {0} has no exposure")]
    EmptyBin(usize),
    #[error("state index {0} is outside the state space")]
    BadState(usize),
}

/// Empirical `P(Z_t = j, t <= R)`: the fraction of the cohort in state `j`
/// at `t` and still under observation.
pub fn occupation_probability(
    cohort: &[Trajectory],
    n_states: usize,
    state: StateId,
    t: f64,
) -> Result<f64, OeError> {
    if state.index() >= n_states {
        return Err(OeError::BadState(state.index()));
    }
    if cohort.is_empty() {
        return Ok(0.0);
    }
    let hits = cohort.iter().filter(|tr| tr.occupies(state, t)).count();
    Ok(hits as f64 / cohort.len() as f64)
}

/// Empirical `P(Z_t = j, U_t <= u, t <= R)` with `U_t` the time since the
/// last jump (since 0 before the first jump).
pub fn occupation_probability_duration(
    cohort: &[Trajectory],
    n_states: usize,
    state: StateId,
    t: f64,
    u: f64,
) -> Result<f64, OeError> {
    if state.index() >= n_states {
        return Err(OeError::BadState(state.index()));
    }
    if cohort.is_empty() {
        return Ok(0.0);
    }
    let hits = cohort
        .iter()
        .filter(|tr| {
            if !tr.occupies(state, t) {
                return false;
            }
            let k = tr.jumps.partition_point(|j| j.time <= t);
            let entry = if k == 0 { 0.0 } else { tr.jumps[k - 1].time };
            t - entry <= u
        })
        .count();
    Ok(hits as f64 / cohort.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::Jump;

    #[test]
    fn occupation_at_time_zero() {
        let cohort: Vec<_> = (0..10).map(|i| Trajectory::new(i, StateId(0), 5.0)).collect();
        assert_eq!(occupation_probability(&cohort, 3, StateId(0), 0.0).unwrap(), 1.0);
        assert_eq!(occupation_probability(&cohort, 3, StateId(1), 0.0).unwrap(), 0.0);
        assert_eq!(occupation_probability(&cohort, 3, StateId(0), 6.0).unwrap(), 0.0);
        assert!(occupation_probability(&cohort, 3, StateId(3), 0.0).is_err());
    }

    #[test]
    fn duration_occupation_counts_time_since_entry() {
        let tr = Trajectory {
            subject_id: 0,
            initial_state: StateId(0),
            jumps: vec![Jump { time: 2.0, from: StateId(0), to: StateId(1) }],
            censor_time: 10.0,
        };
        let cohort = [tr];
        assert_eq!(occupation_probability_duration(&cohort, 2, StateId(1), 5.0, 3.0).unwrap(), 1.0);
        assert_eq!(occupation_probability_duration(&cohort, 2, StateId(1), 5.0, 2.9).unwrap(), 0.0);
        assert_eq!(occupation_probability_duration(&cohort, 2, StateId(0), 1.0, 1.0).unwrap(), 1.0);
    }
}
