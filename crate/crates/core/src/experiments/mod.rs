//! Monte-Carlo studies of the occurrence/exposure estimator.
//!
//! Every study draws its replications from seeds derived from
//! `(master_seed, study tag, mesh, replication)`, runs the replications as an
//! indexed parallel map and reduces them in index order, so results are
//! bit-identical for any thread count.

mod independence;
mod lemma;
mod presets;
mod single;
mod stats;
mod surface;
mod sweep;

use rayon::prelude::*;
use thiserror::Error;

use crate::intensity::{IntensityModel, StateId};
use crate::oe::{aggregate_1d, Layout, OeError, OETable, TimeGrid};
use crate::sim::{derive_seed, tag, CensoringSpec, SimConfig, SimError, Simulator, Trajectory};

pub use independence::{independence_check, IndependenceConfig, IndependenceResult};
pub use lemma::{variance_lemma_check, LemmaConfig, LemmaReport, MomentRow};
pub use presets::{PAPER_MARKOV_RATES, PAPER_SEMI_MARKOV_RATES};
pub use single::{single_sample_illustration, truth_curves, SingleSample, SingleSampleConfig, TruthRow};
pub use stats::{fisher_interval, ks_distance_normal, pearson};
pub use surface::{section, semimarkov_surface, BoxTruth, Slice, SlicePoint, SliceSpec, SurfaceConfig, SurfaceResult};
pub use sweep::{
    bias_variance_sweep, clt_study, consistency_study, CltConfig, CltSample, ConsistencyConfig, ConsistencyRow,
    SweepConfig, SweepRow,
};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Sim(#[from] SimError),
    #[error(transparent)]
    Oe(#[from] OeError),
    #[error("unknown state {0}")]
    UnknownState(String),
    #[error("model has no transition {0}")]
    UnknownTransition(String),
    #[error("invalid experiment setting: {0}")]
    Invalid(String),
}

fn invalid(msg: impl Into<String>) -> ExperimentError {
    ExperimentError::Invalid(msg.into())
}

/// Model, starting state and observation scheme shared by all studies.
#[derive(Debug, Clone)]
pub struct Scenario {
    pub model: IntensityModel,
    pub initial_state: StateId,
    pub horizon: f64,
    pub censoring: CensoringSpec,
    pub window: f64,
}

/// A transition named by its state labels, resolved against a model.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionRef {
    pub from: String,
    pub to: String,
}

impl TransitionRef {
    pub fn new(from: &str, to: &str) -> Self {
        TransitionRef { from: from.to_string(), to: to.to_string() }
    }

    pub fn label(&self) -> String {
        format!("{}->{}", self.from, self.to)
    }
}

impl Scenario {
    /// Three-state illness-death model with sinusoidal Markov intensities,
    /// start in state 1 and `R ~ Unif(10, 40)`.
    pub fn paper_markov() -> Self {
        presets::scenario(crate::intensity::ModelKind::Markov, &PAPER_MARKOV_RATES)
    }

    /// Same state space with a duration-dependent recovery-to-death rate.
    pub fn paper_semi_markov() -> Self {
        presets::scenario(crate::intensity::ModelKind::SemiMarkov, &PAPER_SEMI_MARKOV_RATES)
    }

    pub fn sim_config(&self, n: usize, master_seed: u64) -> SimConfig {
        SimConfig {
            model: self.model.clone(),
            initial_state: self.initial_state,
            n,
            horizon: self.horizon,
            censoring: self.censoring,
            master_seed,
            window: self.window,
        }
    }

    pub fn validate(&self) -> Result<(), ExperimentError> {
        self.sim_config(1, 0).validate()?;
        Ok(())
    }

    pub fn simulator(&self) -> Result<Simulator<'_>, ExperimentError> {
        Ok(Simulator::new(&self.model, self.horizon, self.window)?)
    }

    pub fn resolve(&self, tr: &TransitionRef) -> Result<(StateId, StateId), ExperimentError> {
        let from = self.model.state(&tr.from).ok_or_else(|| ExperimentError::UnknownState(tr.from.clone()))?;
        let to = self.model.state(&tr.to).ok_or_else(|| ExperimentError::UnknownState(tr.to.clone()))?;
        if self.model.transition(from, to).is_none() {
            return Err(ExperimentError::UnknownTransition(tr.label()));
        }
        Ok((from, to))
    }

    /// True intensity of `tr` at `(t, u)`.
    pub fn truth(&self, tr: &TransitionRef, t: f64, u: f64) -> Result<f64, ExperimentError> {
        let (from, to) = self.resolve(tr)?;
        let expr = &self.model.transition(from, to).expect("resolved").expr;
        Ok(expr.value(t, u))
    }
}

/// Seed for replication `rep` at mesh `m` of study `study`.
pub fn replication_seed(master: u64, study: &str, m: usize, rep: usize) -> u64 {
    derive_seed(master, &[tag(study), m as u64, rep as u64])
}

/// Runs `reps` independent replications in parallel, gathering results by
/// index.
pub(crate) fn run_replications<T, F>(reps: usize, f: F) -> Result<Vec<T>, ExperimentError>
where
    T: Send,
    F: Fn(usize) -> Result<T, ExperimentError> + Sync + Send,
{
    (0..reps).into_par_iter().map(f).collect()
}

/// Serial cohort for one replication; parallelism lives at the
/// replication level.
pub(crate) fn rep_cohort(
    sim: &Simulator<'_>,
    scenario: &Scenario,
    n: usize,
    seed: u64,
) -> Result<Vec<Trajectory>, ExperimentError> {
    Ok(sim.cohort_serial(n, seed, scenario.initial_state, &scenario.censoring)?)
}

/// Occurrence and exposure of `tr` in the bin of `grid` holding `t`.
pub(crate) fn bin_counts(
    cohort: &[Trajectory],
    layout: &Layout,
    grid: TimeGrid,
    tr_index: usize,
    t: f64,
) -> Result<(u64, f64), ExperimentError> {
    let table: OETable = aggregate_1d(cohort, grid, layout)?;
    let m = grid.bin_of(t).ok_or_else(|| invalid(format!("time {t} lies outside the grid")))?;
    Ok((table.occurrence(tr_index, m), table.transition_exposure(tr_index, m)))
}

pub(crate) fn layout_index(layout: &Layout, scenario: &Scenario, tr: &TransitionRef) -> Result<usize, ExperimentError> {
    let (from, to) = scenario.resolve(tr)?;
    layout.index_of(from, to).ok_or_else(|| ExperimentError::UnknownTransition(tr.label()))
}
