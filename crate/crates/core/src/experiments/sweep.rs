//! Replicated single-bin studies: mesh sweep, normal approximation of the
//! normalised error and consistency along a shrinking mesh.

use serde::Serialize;

use super::stats::{ks_distance_normal, mean, variance};
use super::{bin_counts, invalid, layout_index, rep_cohort, replication_seed, run_replications, ExperimentError, Scenario, TransitionRef};
use crate::oe::{Layout, TimeGrid};

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub scenario: Scenario,
    pub transition: TransitionRef,
    pub n: usize,
    pub reps: usize,
    pub meshes: Vec<usize>,
    /// Time at which the estimate is read off.
    pub t0: f64,
    pub grid_t0: f64,
    pub grid_t_max: f64,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SweepRow {
    pub m: usize,
    pub delta: f64,
    pub n: usize,
    /// Replications with a defined estimate.
    pub reps: usize,
    pub dropped: usize,
    pub truth: f64,
    pub mean_rate: f64,
    /// Sample variance of `Z = sqrt(n delta) (rate - truth)`.
    pub var_z: f64,
    /// `n delta` times the sample variance of the rate.
    pub var_z_alt: f64,
    pub scaled_abs_bias: f64,
}

#[derive(Debug, Clone)]
pub struct CltConfig {
    pub scenario: Scenario,
    pub transition: TransitionRef,
    pub n: usize,
    pub reps: usize,
    pub meshes: Vec<usize>,
    pub t0: f64,
    pub grid_t0: f64,
    pub grid_t_max: f64,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CltSample {
    pub m: usize,
    pub delta: f64,
    pub z_values: Vec<f64>,
    pub matched_sd: f64,
    pub ks_distance: f64,
    pub sample_variance: f64,
    /// True rate over the pooled occupation estimate.
    pub theory_variance: f64,
    /// Pooled estimate of the occupation probability at `t0`.
    pub p_hat: f64,
    pub dropped: usize,
}

#[derive(Debug, Clone)]
pub struct ConsistencyConfig {
    pub scenario: Scenario,
    pub transition: TransitionRef,
    pub t0: f64,
    pub grid_t0: f64,
    pub grid_t_max: f64,
    /// Sample sizes with their replication counts.
    pub plan: Vec<(usize, usize)>,
    /// Bin width is `width_constant / sqrt(n)`.
    pub width_constant: f64,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConsistencyRow {
    pub n: usize,
    pub m: usize,
    pub delta: f64,
    pub reps: usize,
    pub dropped: usize,
    pub truth: f64,
    pub bias: f64,
    pub sd: f64,
    pub rmse: f64,
}

/// One replication: occurrence and exposure in the bin holding `t0`.
struct BinDraw {
    occurrence: u64,
    exposure: f64,
    /// Subjects in the origin state and uncensored at `t0`.
    occupied: usize,
}

impl BinDraw {
    fn rate(&self) -> Option<f64> {
        (self.exposure > 0.0).then(|| self.occurrence as f64 / self.exposure)
    }
}

struct Design<'a> {
    scenario: &'a Scenario,
    transition: &'a TransitionRef,
    t0: f64,
    grid_t0: f64,
    grid_t_max: f64,
    master_seed: u64,
    study: &'static str,
}

impl Design<'_> {
    fn check(&self, n: usize, reps: usize, min_reps: usize) -> Result<(), ExperimentError> {
        self.scenario.validate()?;
        self.scenario.resolve(self.transition)?;
        if n == 0 {
            return Err(invalid("n must be at least 1"));
        }
        if reps < min_reps {
            return Err(invalid(format!("at least {min_reps} replications are needed, got {reps}")));
        }
        if !(self.t0 >= self.grid_t0 && self.t0 < self.grid_t_max) {
            return Err(invalid(format!("t0 = {} is outside [{}, {})", self.t0, self.grid_t0, self.grid_t_max)));
        }
        Ok(())
    }

    fn grid(&self, m: usize) -> Result<TimeGrid, ExperimentError> {
        if m == 0 {
            return Err(invalid("mesh must have at least one bin"));
        }
        Ok(TimeGrid::new(self.grid_t0, self.grid_t_max, m)?)
    }

    fn draws(&self, n: usize, reps: usize, m: usize) -> Result<(TimeGrid, Vec<BinDraw>), ExperimentError> {
        let grid = self.grid(m)?;
        let sim = self.scenario.simulator()?;
        let layout = Layout::from_model(&self.scenario.model);
        let tr = layout_index(&layout, self.scenario, self.transition)?;
        let draws = run_replications(reps, |rep| {
            let seed = replication_seed(self.master_seed, self.study, m, rep);
            let cohort = rep_cohort(&sim, self.scenario, n, seed)?;
            let (occurrence, exposure) = bin_counts(&cohort, &layout, grid, tr, self.t0)?;
            let from = layout.transitions[tr].0;
            let occupied = cohort.iter().filter(|t| t.occupies(from, self.t0)).count();
            Ok(BinDraw { occurrence, exposure, occupied })
        })?;
        Ok((grid, draws))
    }

    fn truth(&self) -> Result<f64, ExperimentError> {
        self.scenario.truth(self.transition, self.t0, 0.0)
    }
}

/// Variance and scaled bias of the normalised error in the bin holding
/// `t0` across meshes.
pub fn bias_variance_sweep(cfg: &SweepConfig) -> Result<Vec<SweepRow>, ExperimentError> {
    let design = Design {
        scenario: &cfg.scenario,
        transition: &cfg.transition,
        t0: cfg.t0,
        grid_t0: cfg.grid_t0,
        grid_t_max: cfg.grid_t_max,
        master_seed: cfg.master_seed,
        study: "sweep",
    };
    design.check(cfg.n, cfg.reps, 2)?;
    let truth = design.truth()?;
    let mut rows = Vec::with_capacity(cfg.meshes.len());
    for &m in &cfg.meshes {
        let (grid, draws) = design.draws(cfg.n, cfg.reps, m)?;
        let rates: Vec<f64> = draws.iter().filter_map(BinDraw::rate).collect();
        if rates.len() < 2 {
            return Err(invalid(format!("mesh {m}: fewer than two replications with exposure")));
        }
        let scale = (cfg.n as f64 * grid.width()).sqrt();
        let z: Vec<f64> = rates.iter().map(|r| scale * (r - truth)).collect();
        let mean_rate = mean(&rates);
        rows.push(SweepRow {
            m,
            delta: grid.width(),
            n: cfg.n,
            reps: rates.len(),
            dropped: draws.len() - rates.len(),
            truth,
            mean_rate,
            var_z: variance(&z),
            var_z_alt: scale * scale * variance(&rates),
            scaled_abs_bias: scale * (mean_rate - truth).abs(),
        });
    }
    Ok(rows)
}

/// Normalised errors per mesh with their distance to the matched normal.
pub fn clt_study(cfg: &CltConfig) -> Result<Vec<CltSample>, ExperimentError> {
    let design = Design {
        scenario: &cfg.scenario,
        transition: &cfg.transition,
        t0: cfg.t0,
        grid_t0: cfg.grid_t0,
        grid_t_max: cfg.grid_t_max,
        master_seed: cfg.master_seed,
        study: "clt",
    };
    design.check(cfg.n, cfg.reps, 2)?;
    let truth = design.truth()?;
    let mut out = Vec::with_capacity(cfg.meshes.len());
    for &m in &cfg.meshes {
        let (grid, draws) = design.draws(cfg.n, cfg.reps, m)?;
        let scale = (cfg.n as f64 * grid.width()).sqrt();
        let z: Vec<f64> = draws.iter().filter_map(BinDraw::rate).map(|r| scale * (r - truth)).collect();
        if z.len() < 2 {
            return Err(invalid(format!("mesh {m}: fewer than two replications with exposure")));
        }
        let sample_variance = variance(&z);
        let matched_sd = sample_variance.sqrt();
        let occupied: usize = draws.iter().map(|d| d.occupied).sum();
        let p_hat = occupied as f64 / (draws.len() * cfg.n) as f64;
        out.push(CltSample {
            m,
            delta: grid.width(),
            ks_distance: ks_distance_normal(&z, matched_sd),
            dropped: draws.len() - z.len(),
            z_values: z,
            matched_sd,
            sample_variance,
            theory_variance: truth / p_hat,
            p_hat,
        });
    }
    Ok(out)
}

/// Root mean squared error of the estimate at `t0` with the bin width
/// shrinking like `1/sqrt(n)`.
pub fn consistency_study(cfg: &ConsistencyConfig) -> Result<Vec<ConsistencyRow>, ExperimentError> {
    if !(cfg.width_constant > 0.0 && cfg.width_constant.is_finite()) {
        return Err(invalid("width constant must be positive"));
    }
    let design = Design {
        scenario: &cfg.scenario,
        transition: &cfg.transition,
        t0: cfg.t0,
        grid_t0: cfg.grid_t0,
        grid_t_max: cfg.grid_t_max,
        master_seed: cfg.master_seed,
        study: "consistency",
    };
    let truth = design.truth()?;
    let span = cfg.grid_t_max - cfg.grid_t0;
    let mut rows = Vec::with_capacity(cfg.plan.len());
    for &(n, reps) in &cfg.plan {
        design.check(n, reps, 2)?;
        let target = cfg.width_constant / (n as f64).sqrt();
        let m = ((span / target).round() as usize).max(1);
        let (grid, draws) = design.draws(n, reps, m)?;
        let rates: Vec<f64> = draws.iter().filter_map(BinDraw::rate).collect();
        if rates.len() < 2 {
            return Err(invalid(format!("n = {n}: fewer than two replications with exposure")));
        }
        let mse = rates.iter().map(|r| (r - truth).powi(2)).sum::<f64>() / rates.len() as f64;
        rows.push(ConsistencyRow {
            n,
            m,
            delta: grid.width(),
            reps: rates.len(),
            dropped: draws.len() - rates.len(),
            truth,
            bias: mean(&rates) - truth,
            sd: variance(&rates).sqrt(),
            rmse: mse.sqrt(),
        });
    }
    Ok(rows)
}
