//! Thinning simulation of censored Markov and semi-Markov jump processes.

mod seed;
mod trajectory;

use std::sync::OnceLock;

use rand::Rng;
use rand_distr::{Distribution, Exp1};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::intensity::{BoundError, IntensityModel, ModelError, ModelKind, StateId};

pub use seed::{derive_seed, splitmix64, tag, Purpose, SubjectRng, SubjectStreams};
pub use trajectory::{Jump, Sojourn, Trajectory, TrajectoryError};

/// Default look-ahead window for the thinning bounds, in years.
pub const DEFAULT_WINDOW: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SimError {
    #[error("thinning bound violated in state {state:?} at t={time}: rate {rate} > bound {bound}")]
    BoundViolated { state: StateId, time: f64, rate: f64, bound: f64 },
    #[error("bounding failed: {0}")]
    Bound(#[from] BoundError),
    #[error("invalid model: {0}")]
    Model(#[from] ModelError),
    #[error("invalid simulation config: {0}")]
    Config(String),
}

/// Law of the independent right-censoring time R.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "law", rename_all = "snake_case", deny_unknown_fields)]
pub enum CensoringSpec {
    Uniform { lo: f64, hi: f64 },
    Fixed { r: f64 },
    /// Administrative censoring at the horizon only.
    None { horizon: f64 },
}

impl CensoringSpec {
    pub fn validate(&self) -> Result<(), SimError> {
        let ok = match *self {
            CensoringSpec::Uniform { lo, hi } => lo.is_finite() && hi.is_finite() && lo >= 0.0 && lo < hi,
            CensoringSpec::Fixed { r } => r.is_finite() && r > 0.0,
            CensoringSpec::None { horizon } => horizon.is_finite() && horizon > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(SimError::Config(format!("invalid censoring law {self:?}")))
        }
    }

    /// Largest censoring time the law can produce.
    pub fn upper(&self) -> f64 {
        match *self {
            CensoringSpec::Uniform { hi, .. } => hi,
            CensoringSpec::Fixed { r } => r,
            CensoringSpec::None { horizon } => horizon,
        }
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            CensoringSpec::Uniform { lo, hi } => lo + (hi - lo) * rng.random::<f64>(),
            CensoringSpec::Fixed { r } => r,
            CensoringSpec::None { horizon } => horizon,
        }
    }

    /// P(R >= t).
    pub fn survival(&self, t: f64) -> f64 {
        match *self {
            CensoringSpec::Uniform { lo, hi } => ((hi - t) / (hi - lo)).clamp(0.0, 1.0),
            CensoringSpec::Fixed { r } | CensoringSpec::None { horizon: r } => {
                if t <= r {
                    1.0
                } else {
                    0.0
                }
            }
        }
    }
}

/// Draws R and truncates the trajectory: jumps at or after R are dropped.
pub fn apply_censoring<R: Rng + ?Sized>(mut traj: Trajectory, spec: &CensoringSpec, rng: &mut R) -> Trajectory {
    let r = spec.draw(rng);
    let keep = traj.jumps.partition_point(|j| j.time < r);
    traj.jumps.truncate(keep);
    traj.censor_time = r;
    traj
}

#[derive(Debug, Clone)]
pub struct SimConfig {
    pub model: IntensityModel,
    pub initial_state: StateId,
    pub n: usize,
    pub horizon: f64,
    pub censoring: CensoringSpec,
    pub master_seed: u64,
    pub window: f64,
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        if self.n == 0 {
            return Err(SimError::Config("n must be at least 1".into()));
        }
        if !(self.window.is_finite() && self.window > 0.0) {
            return Err(SimError::Config(format!("window must be positive, got {}", self.window)));
        }
        if self.initial_state.index() >= self.model.n_states() {
            return Err(SimError::Config("initial state not in model".into()));
        }
        self.censoring.validate()?;
        if self.censoring.upper() > self.horizon {
            return Err(SimError::Config(format!(
                "horizon {} is shorter than the censoring upper bound {}",
                self.horizon,
                self.censoring.upper()
            )));
        }
        self.model.validate(self.horizon)?;
        Ok(())
    }
}

/// Counters from a thinning run.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct ThinningStats {
    pub proposals: u64,
    pub accepted: u64,
    /// Largest observed `rate / bound` ratio.
    pub max_ratio: f64,
}

/// Thinning simulator with cached window bounds.
///
/// The time axis is cut into windows `[i*w, (i+1)*w)`. Within a window the
/// summed exit intensity of the current state is dominated by a constant
/// bound taken from [`crate::intensity::IntensityExpr::local_upper_bound`];
/// for duration-dependent models the bound is taken over the duration cells
/// of width `w` that the sojourn can reach inside the window. Bounds are
/// computed lazily and cached per `(state, window, duration cell)`.
pub struct Simulator<'m> {
    model: &'m IntensityModel,
    horizon: f64,
    window: f64,
    n_windows: usize,
    n_cells: usize,
    bounds: Vec<OnceLock<Result<f64, BoundError>>>,
}

impl<'m> Simulator<'m> {
    pub fn new(model: &'m IntensityModel, horizon: f64, window: f64) -> Result<Self, SimError> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(SimError::Config(format!("horizon must be positive, got {horizon}")));
        }
        if !(window.is_finite() && window > 0.0) {
            return Err(SimError::Config(format!("window must be positive, got {window}")));
        }
        let n_windows = (horizon / window).ceil().max(1.0) as usize;
        let n_cells = match model.kind() {
            ModelKind::Markov => 1,
            ModelKind::SemiMarkov => n_windows,
        };
        let total = model.n_states() * n_windows * n_cells;
        Ok(Simulator {
            model,
            horizon,
            window,
            n_windows,
            n_cells,
            bounds: (0..total).map(|_| OnceLock::new()).collect(),
        })
    }

    pub fn model(&self) -> &IntensityModel {
        self.model
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    fn window_end(&self, i: usize) -> f64 {
        if i + 1 >= self.n_windows {
            self.horizon
        } else {
            (i + 1) as f64 * self.window
        }
    }

    fn cell_bound(&self, state: StateId, win: usize, cell: usize) -> Result<f64, BoundError> {
        let idx = (state.index() * self.n_windows + win) * self.n_cells + cell;
        self.bounds[idx]
            .get_or_init(|| {
                let expr = self.model.exit_total(state);
                let t_lo = win as f64 * self.window;
                let t_hi = self.window_end(win);
                let (u_lo, u_hi) = if self.n_cells == 1 {
                    (0.0, 0.0)
                } else {
                    (cell as f64 * self.window, (cell + 1) as f64 * self.window)
                };
                expr.local_upper_bound(t_lo, t_hi, u_lo, u_hi)
            })
            .clone()
    }

    /// Bound on the exit intensity of `state` for `s` in window `win` while
    /// the duration stays within `[u_lo, u_hi]`.
    fn bound(&self, state: StateId, win: usize, u_lo: f64, u_hi: f64) -> Result<f64, BoundError> {
        if self.n_cells == 1 {
            return self.cell_bound(state, win, 0);
        }
        let last = self.n_cells - 1;
        let lo = ((u_lo / self.window).floor().max(0.0) as usize).min(last);
        let hi = ((u_hi / self.window).floor().max(0.0) as usize).min(last);
        let mut b: f64 = 0.0;
        for cell in lo..=hi {
            b = b.max(self.cell_bound(state, win, cell)?);
        }
        Ok(b)
    }

    /// Simulates one uncensored path on `[0, horizon]`; the returned
    /// trajectory carries `censor_time = horizon`.
    pub fn simulate_path<R: Rng + ?Sized>(
        &self,
        subject_id: u64,
        initial: StateId,
        rng: &mut R,
    ) -> Result<Trajectory, SimError> {
        let mut stats = ThinningStats::default();
        self.simulate_path_with_stats(subject_id, initial, rng, &mut stats)
    }

    pub fn simulate_path_with_stats<R: Rng + ?Sized>(
        &self,
        subject_id: u64,
        initial: StateId,
        rng: &mut R,
        stats: &mut ThinningStats,
    ) -> Result<Trajectory, SimError> {
        let model = self.model;
        let transitions = model.transitions();
        let mut traj = Trajectory::new(subject_id, initial, self.horizon);
        let mut state = initial;
        let mut entry = 0.0;
        let mut t = 0.0;
        let mut win = 0;
        while win < self.n_windows {
            let exits = model.exits(state);
            if exits.is_empty() || model.is_absorbing(state) {
                break;
            }
            let w_end = self.window_end(win);
            let bound = self.bound(state, win, t - entry, w_end - entry)?;
            if bound <= 0.0 {
                t = w_end;
                win += 1;
                continue;
            }
            let wait: f64 = Exp1.sample(rng);
            let s = t + wait / bound;
            if s >= w_end {
                t = w_end;
                win += 1;
                continue;
            }
            t = s;
            stats.proposals += 1;
            let u = s - entry;
            let total: f64 = exits.iter().map(|&i| transitions[i].expr.value(s, u)).sum();
            let ratio = total / bound;
            if ratio > stats.max_ratio {
                stats.max_ratio = ratio;
            }
            if !(total <= bound) {
                return Err(SimError::BoundViolated { state, time: s, rate: total, bound });
            }
            // Conditionally on acceptance, `level` is uniform on [0, total)
            // and doubles as the destination draw.
            let level = rng.random::<f64>() * bound;
            if level >= total {
                continue;
            }
            stats.accepted += 1;
            let mut acc = 0.0;
            let mut dest = transitions[*exits.last().expect("non-empty")].to;
            for &i in exits {
                acc += transitions[i].expr.value(s, u);
                if level < acc {
                    dest = transitions[i].to;
                    break;
                }
            }
            traj.jumps.push(Jump { time: s, from: state, to: dest });
            state = dest;
            entry = s;
        }
        Ok(traj)
    }

    /// Path plus independent censoring for subject `i` of a cohort.
    pub fn simulate_subject(
        &self,
        streams: &SubjectStreams,
        subject: u64,
        initial: StateId,
        censoring: &CensoringSpec,
    ) -> Result<Trajectory, SimError> {
        let mut rng = streams.stream(subject, Purpose::Path);
        let path = self.simulate_path(subject, initial, &mut rng)?;
        let mut crng = streams.stream(subject, Purpose::Censoring);
        Ok(apply_censoring(path, censoring, &mut crng))
    }

    /// Serial cohort; identical output to [`simulate_cohort`] for the same seed.
    pub fn cohort_serial(
        &self,
        n: usize,
        master_seed: u64,
        initial: StateId,
        censoring: &CensoringSpec,
    ) -> Result<Vec<Trajectory>, SimError> {
        let streams = SubjectStreams::new(master_seed);
        (0..n as u64)
            .map(|i| self.simulate_subject(&streams, i, initial, censoring))
            .collect()
    }

    /// Parallel cohort via an indexed map over subjects.
    pub fn cohort_parallel(
        &self,
        n: usize,
        master_seed: u64,
        initial: StateId,
        censoring: &CensoringSpec,
    ) -> Result<Vec<Trajectory>, SimError> {
        let streams = SubjectStreams::new(master_seed);
        (0..n as u64)
            .into_par_iter()
            .map(|i| self.simulate_subject(&streams, i, initial, censoring))
            .collect()
    }
}

/// Simulates `config.n` iid censored trajectories. Subject `i` draws from
/// streams keyed on `(master_seed, i)` only, so the output does not depend
/// on the thread count.
pub fn simulate_cohort(config: &SimConfig) -> Result<Vec<Trajectory>, SimError> {
    config.validate()?;
    let sim = Simulator::new(&config.model, config.horizon, config.window)?;
    sim.cohort_parallel(config.n, config.master_seed, config.initial_state, &config.censoring)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::intensity::IntensityExpr;
    use rand::SeedableRng;

    fn two_state(rate: &str) -> IntensityModel {
        IntensityModel::new(
            ModelKind::Markov,
            &["a", "b"],
            &["b"],
            vec![("a".into(), "b".into(), IntensityExpr::parse(rate).unwrap())],
        )
        .unwrap()
    }

    #[test]
    fn absorbing_start_never_jumps() {
        let m = two_state("0.5");
        let sim = Simulator::new(&m, 40.0, 1.0).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(1);
        let tr = sim.simulate_path(0, StateId(1), &mut rng).unwrap();
        assert!(tr.jumps.is_empty());
        assert_eq!(tr.censor_time, 40.0);
    }

    #[test]
    fn exponential_first_jump_mean() {
        let m = two_state("0.5");
        let sim = Simulator::new(&m, 100.0, 1.0).unwrap();
        let streams = SubjectStreams::new(11);
        let reps = 10_000;
        let mut sum = 0.0;
        for i in 0..reps {
            let mut rng = streams.stream(i, Purpose::Path);
            let tr = sim.simulate_path(i, StateId(0), &mut rng).unwrap();
            // P(no jump by 100) = e^-50, negligible.
            sum += tr.jumps[0].time;
        }
        let mean = sum / reps as f64;
        assert!((mean - 2.0).abs() < 0.05, "mean first jump {mean}");
    }

    #[test]
    fn censoring_truncates_and_sets_time() {
        let traj = Trajectory {
            subject_id: 0,
            initial_state: StateId(0),
            jumps: vec![
                Jump { time: 3.0, from: StateId(0), to: StateId(1) },
                Jump { time: 12.0, from: StateId(1), to: StateId(0) },
            ],
            censor_time: 40.0,
        };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(0);
        let c = apply_censoring(traj.clone(), &CensoringSpec::Fixed { r: 10.0 }, &mut rng);
        assert_eq!(c.jumps.len(), 1);
        assert_eq!(c.censor_time, 10.0);
        let c = apply_censoring(traj.clone(), &CensoringSpec::None { horizon: 40.0 }, &mut rng);
        assert_eq!(c.jumps, traj.jumps);
        assert_eq!(c.censor_time, 40.0);
    }

    #[test]
    fn uniform_censoring_mean() {
        let spec = CensoringSpec::Uniform { lo: 10.0, hi: 40.0 };
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(99);
        let n = 100_000;
        let mean = (0..n).map(|_| spec.draw(&mut rng)).sum::<f64>() / n as f64;
        assert!((mean - 25.0).abs() < 0.1, "{mean}");
    }

    #[test]
    fn config_validation() {
        let m = two_state("0.5");
        let mut cfg = SimConfig {
            model: m,
            initial_state: StateId(0),
            n: 0,
            horizon: 40.0,
            censoring: CensoringSpec::Uniform { lo: 10.0, hi: 40.0 },
            master_seed: 1,
            window: 1.0,
        };
        assert!(simulate_cohort(&cfg).is_err());
        cfg.n = 5;
        cfg.horizon = 30.0;
        assert!(simulate_cohort(&cfg).is_err());
        cfg.horizon = 40.0;
        cfg.censoring = CensoringSpec::Uniform { lo: 20.0, hi: 10.0 };
        assert!(simulate_cohort(&cfg).is_err());
        cfg.censoring = CensoringSpec::Fixed { r: 40.0 };
        assert_eq!(simulate_cohort(&cfg).unwrap().len(), 5);
    }

    #[test]
    fn detects_bound_violation() {
        // A spike narrower than the scan spacing escapes the grid bound.
        let m = two_state("0.01 + 1000*exp(-40000*(t - 0.3)*(t - 0.3))");
        let sim = Simulator::new(&m, 1.0, 1.0).unwrap();
        let mut saw_violation = false;
        for seed in 0..200 {
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            if let Err(SimError::BoundViolated { .. }) = sim.simulate_path(0, StateId(0), &mut rng) {
                saw_violation = true;
                break;
            }
        }
        assert!(saw_violation);
    }
}
