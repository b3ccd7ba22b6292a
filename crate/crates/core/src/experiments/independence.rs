use serde::Serialize;

use super::stats::{fisher_interval, pearson};
use super::{invalid, layout_index, rep_cohort, replication_seed, run_replications, ExperimentError, Scenario, TransitionRef};
use crate::oe::{aggregate_1d, aggregate_2d, normal_quantile, Layout, OETable, TimeDurationGrid, TimeGrid};

#[derive(Debug, Clone)]
pub struct IndependenceConfig {
    pub scenario: Scenario,
    pub transition: TransitionRef,
    pub n: usize,
    pub reps: usize,
    /// Bins on the time axis, and on the duration axis when `u` is set.
    pub m: usize,
    pub s: f64,
    pub t: f64,
    /// Duration shared by both points; switches to a time-by-duration grid.
    pub u: Option<f64>,
    pub grid_t_max: f64,
    pub level: f64,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct IndependenceResult {
    pub s: f64,
    pub t: f64,
    pub u: Option<f64>,
    pub m: usize,
    pub reps: usize,
    pub dropped: usize,
    pub correlation: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
    pub level: f64,
}

/// Correlation across replications of the estimates at two distinct time
/// bins (optionally sharing one duration bin).
pub fn independence_check(cfg: &IndependenceConfig) -> Result<IndependenceResult, ExperimentError> {
    cfg.scenario.validate()?;
    if cfg.n == 0 || cfg.reps < 4 {
        return Err(invalid("need n >= 1 and at least 4 replications"));
    }
    let z = normal_quantile(cfg.level)?;
    let time = TimeGrid::new(0.0, cfg.grid_t_max, cfg.m)?;
    let (bs, bt) = match (time.bin_of(cfg.s), time.bin_of(cfg.t)) {
        (Some(a), Some(b)) => (a, b),
        _ => return Err(invalid("both time points must lie on the grid")),
    };
    if bs == bt {
        return Err(invalid(format!("s = {} and t = {} fall in the same bin", cfg.s, cfg.t)));
    }
    let grid2 = TimeDurationGrid::new(time, time);
    let bu = match cfg.u {
        Some(u) => Some(time.bin_of(u).ok_or_else(|| invalid(format!("duration {u} lies outside the grid")))?),
        None => None,
    };
    let sim = cfg.scenario.simulator()?;
    let layout = Layout::from_model(&cfg.scenario.model);
    let tr = layout_index(&layout, &cfg.scenario, &cfg.transition)?;
    let study = if bu.is_some() { "independence-2d" } else { "independence" };

    let pairs = run_replications(cfg.reps, |rep| {
        let seed = replication_seed(cfg.master_seed, study, cfg.m, rep);
        let cohort = rep_cohort(&sim, &cfg.scenario, cfg.n, seed)?;
        let (a, b) = match bu {
            None => {
                let table = aggregate_1d(&cohort, time, &layout)?;
                (bin_rate(&table, tr, bs), bin_rate(&table, tr, bt))
            }
            Some(ub) => {
                let table = aggregate_2d(&cohort, grid2, &layout)?;
                (bin_rate(&table, tr, grid2.flat(bs, ub)), bin_rate(&table, tr, grid2.flat(bt, ub)))
            }
        };
        Ok(a.zip(b))
    })?;
    let (x, y): (Vec<f64>, Vec<f64>) = pairs.iter().flatten().copied().unzip();
    if x.len() < 4 {
        return Err(invalid("fewer than four replications with exposure at both points"));
    }
    let r = pearson(&x, &y);
    let (ci_lo, ci_hi) = fisher_interval(r, x.len(), z);
    Ok(IndependenceResult {
        s: cfg.s,
        t: cfg.t,
        u: cfg.u,
        m: cfg.m,
        reps: x.len(),
        dropped: cfg.reps - x.len(),
        correlation: r,
        ci_lo,
        ci_hi,
        level: cfg.level,
    })
}

fn bin_rate(table: &OETable, tr: usize, bin: usize) -> Option<f64> {
    let e = table.transition_exposure(tr, bin);
    (e > 0.0).then(|| table.occurrence(tr, bin) as f64 / e)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn same_bin_is_rejected() {
        let cfg = IndependenceConfig {
            scenario: Scenario::paper_markov(),
            transition: TransitionRef::new("1", "2"),
            n: 50,
            reps: 10,
            m: 15,
            s: 20.0,
            t: 20.5,
            u: None,
            grid_t_max: 40.0,
            level: 0.95,
            master_seed: 3,
        };
        assert!(independence_check(&cfg).is_err());
    }
}
