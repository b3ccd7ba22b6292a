use serde::Serialize;

use super::{ExperimentError, Scenario};
use crate::intensity::IntensityModel;
use crate::oe::{aggregate_1d, oe_rates, IntervalScale, Layout, OETable, RateFit, TimeGrid};
use crate::sim::simulate_cohort;

#[derive(Debug, Clone)]
pub struct SingleSampleConfig {
    pub scenario: Scenario,
    pub n: usize,
    pub grid: TimeGrid,
    pub level: f64,
    pub scale: IntervalScale,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TruthRow {
    pub transition: String,
    pub bin: usize,
    pub t: f64,
    pub rate: f64,
}

#[derive(Debug, Clone)]
pub struct SingleSample {
    pub table: OETable,
    pub fit: RateFit,
    /// True intensities at bin midpoints; duration-dependent rates have no
    /// single curve and are left out.
    pub truth: Vec<TruthRow>,
}

/// One cohort, its occurrence/exposure fit for every transition and the
/// true curves for overlay.
pub fn single_sample_illustration(cfg: &SingleSampleConfig) -> Result<SingleSample, ExperimentError> {
    let cohort = simulate_cohort(&cfg.scenario.sim_config(cfg.n, cfg.master_seed))?;
    let layout = Layout::from_model(&cfg.scenario.model);
    let table = aggregate_1d(&cohort, cfg.grid, &layout)?;
    let fit = oe_rates(&table, cfg.level, cfg.scale)?;
    let truth = truth_curves(&cfg.scenario.model, &cfg.grid);
    Ok(SingleSample { table, fit, truth })
}

/// True intensities at bin midpoints for every duration-free transition.
pub fn truth_curves(model: &IntensityModel, grid: &TimeGrid) -> Vec<TruthRow> {
    let mut truth = Vec::new();
    for tr in model.transitions() {
        if tr.expr.uses_duration() {
            continue;
        }
        let label = model.transition_label(tr);
        for m in 0..grid.bins() {
            let t = grid.midpoint(m);
            truth.push(TruthRow { transition: label.clone(), bin: m, t, rate: tr.expr.value(t, 0.0) });
        }
    }
    truth
}
