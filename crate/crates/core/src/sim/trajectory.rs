use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::intensity::{IntensityModel, StateId};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Jump {
    pub time: f64,
    pub from: StateId,
    pub to: StateId,
}

/// One subject's censored event history, observed on `[0, censor_time]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub subject_id: u64,
    pub initial_state: StateId,
    pub jumps: Vec<Jump>,
    pub censor_time: f64,
}

/// A maximal stay in one state, clipped to the observation window.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Sojourn {
    pub state: StateId,
    /// Time the state was entered (duration origin).
    pub entry: f64,
    /// Exclusive end: next jump or censoring.
    pub exit: f64,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum TrajectoryError {
    #[error("subject {id}: jump {index} at {time} is not after the previous event")]
    NotIncreasing { id: u64, index: usize, time: f64 },
    #[error("subject {id}: jump {index} departs {found:?} but the process is in {expected:?}")]
    BrokenChain { id: u64, index: usize, expected: StateId, found: StateId },
    #[error("subject {id}: jump {index} is a self-transition")]
    SelfJump { id: u64, index: usize },
    #[error("subject {id}: jump {index} at {time} is not before the censoring time {censor}")]
    AfterCensoring { id: u64, index: usize, time: f64, censor: f64 },
    #[error("subject {id}: jump {index} leaves absorbing state {state:?}")]
    FromAbsorbing { id: u64, index: usize, state: StateId },
    #[error("subject {id}: unknown state {state:?}")]
    UnknownState { id: u64, state: StateId },
    #[error("subject {id}: invalid time value {time}")]
    BadTime { id: u64, time: f64 },
}

impl Trajectory {
    pub fn new(subject_id: u64, initial_state: StateId, censor_time: f64) -> Self {
        Trajectory {
            subject_id,
            initial_state,
            jumps: Vec::new(),
            censor_time,
        }
    }

    /// Checks ordering, chain consistency and the censoring bound. Pass a
    /// model to also check state indices and absorbing states.
    pub fn validate(&self, model: Option<&IntensityModel>) -> Result<(), TrajectoryError> {
        let id = self.subject_id;
        if !(self.censor_time.is_finite() && self.censor_time >= 0.0) {
            return Err(TrajectoryError::BadTime { id, time: self.censor_time });
        }
        let check_state = |s: StateId| match model {
            Some(m) if s.index() >= m.n_states() => Err(TrajectoryError::UnknownState { id, state: s }),
            _ => Ok(()),
        };
        check_state(self.initial_state)?;
        let mut current = self.initial_state;
        let mut last = 0.0f64;
        for (index, j) in self.jumps.iter().enumerate() {
            if !j.time.is_finite() {
                return Err(TrajectoryError::BadTime { id, time: j.time });
            }
            let ordered = if index == 0 { j.time >= 0.0 } else { j.time > last };
            if !ordered {
                return Err(TrajectoryError::NotIncreasing { id, index, time: j.time });
            }
            if j.from != current {
                return Err(TrajectoryError::BrokenChain { id, index, expected: current, found: j.from });
            }
            if j.from == j.to {
                return Err(TrajectoryError::SelfJump { id, index });
            }
            check_state(j.to)?;
            if j.time >= self.censor_time {
                return Err(TrajectoryError::AfterCensoring {
                    id,
                    index,
                    time: j.time,
                    censor: self.censor_time,
                });
            }
            if let Some(m) = model {
                if m.is_absorbing(j.from) {
                    return Err(TrajectoryError::FromAbsorbing { id, index, state: j.from });
                }
            }
            current = j.to;
            last = j.time;
        }
        Ok(())
    }

    /// State at time `t`, right-continuous: a jump at `t` is already taken.
    pub fn state_at(&self, t: f64) -> StateId {
        let k = self.jumps.partition_point(|j| j.time <= t);
        if k == 0 {
            self.initial_state
        } else {
            self.jumps[k - 1].to
        }
    }

    /// True when the subject is in state `j` at `t` and still under
    /// observation (`t <= censor_time`).
    pub fn occupies(&self, j: StateId, t: f64) -> bool {
        t <= self.censor_time && t >= 0.0 && self.state_at(t) == j
    }

    pub fn final_state(&self) -> StateId {
        self.jumps.last().map_or(self.initial_state, |j| j.to)
    }

    /// Sojourns on `[0, censor_time)`, in order. The first sojourn is entered
    /// at time 0.
    pub fn sojourns(&self) -> impl Iterator<Item = Sojourn> + '_ {
        let n = self.jumps.len();
        (0..=n).map(move |k| {
            let (state, entry) = if k == 0 {
                (self.initial_state, 0.0)
            } else {
                (self.jumps[k - 1].to, self.jumps[k - 1].time)
            };
            let exit = if k < n { self.jumps[k].time } else { self.censor_time };
            Sojourn { state, entry, exit }
        })
    }
}
