use serde::Serialize;

use super::{invalid, layout_index, ExperimentError, Scenario, TransitionRef};
use crate::intensity::IntensityExpr;
use crate::oe::{
    aggregate_2d, diagonal_slice, oe_rates, GridSpec, IntervalScale, Layout, OETable, RateFit, TimeDurationGrid, TimeGrid,
};
use crate::sim::simulate_cohort;

#[derive(Debug, Clone, PartialEq)]
pub struct SliceSpec {
    pub transition: TransitionRef,
    /// Offset `d` of the line `t - u = d`.
    pub d: f64,
}

#[derive(Debug, Clone)]
pub struct SurfaceConfig {
    pub scenario: Scenario,
    pub n: usize,
    pub t_max: f64,
    /// Box side on both axes.
    pub mesh: f64,
    pub level: f64,
    pub scale: IntervalScale,
    pub slices: Vec<SliceSpec>,
    pub master_seed: u64,
}

impl SurfaceConfig {
    /// Entry-rate slices on the main diagonal and four recovery-to-death
    /// sections.
    pub fn default_slices() -> Vec<SliceSpec> {
        let mut out = vec![
            SliceSpec { transition: TransitionRef::new("1", "2"), d: 0.0 },
            SliceSpec { transition: TransitionRef::new("1", "3"), d: 0.0 },
        ];
        for d in [1.0, 5.0, 10.0, 20.0] {
            out.push(SliceSpec { transition: TransitionRef::new("2", "3"), d });
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxTruth {
    pub transition: String,
    pub m1: usize,
    pub m2: usize,
    pub t: f64,
    pub u: f64,
    pub truth: f64,
    pub fitted: Option<f64>,
    pub exposure: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SlicePoint {
    pub t: f64,
    pub u: f64,
    pub fitted: f64,
    pub truth: f64,
    pub exposure: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Slice {
    pub transition: String,
    pub d: f64,
    pub points: Vec<SlicePoint>,
}

#[derive(Debug, Clone)]
pub struct SurfaceResult {
    pub table: OETable,
    pub fit: RateFit,
    /// Box-centre truth on the admissible region `u <= t`.
    pub truth: Vec<BoxTruth>,
    pub slices: Vec<Slice>,
}

/// Time-by-duration occurrence/exposure fit of every transition with truth
/// at box centres and diagonal sections.
pub fn semimarkov_surface(cfg: &SurfaceConfig) -> Result<SurfaceResult, ExperimentError> {
    if !(cfg.mesh > 0.0 && cfg.t_max > 0.0) {
        return Err(invalid("mesh and t_max must be positive"));
    }
    let bins = (cfg.t_max / cfg.mesh).round().max(1.0) as usize;
    let axis = TimeGrid::new(0.0, cfg.t_max, bins)?;
    let grid = TimeDurationGrid::new(axis, axis);
    let cohort = simulate_cohort(&cfg.scenario.sim_config(cfg.n, cfg.master_seed))?;
    let layout = Layout::from_model(&cfg.scenario.model);
    let table = aggregate_2d(&cohort, grid, &layout)?;
    let fit = oe_rates(&table, cfg.level, cfg.scale)?;

    let model = &cfg.scenario.model;
    let mut truth = Vec::new();
    for (idx, &(from, to)) in layout.transitions.iter().enumerate() {
        let expr = &model.transition(from, to).expect("layout follows the model").expr;
        let label = layout.transition_label(idx);
        for m1 in 0..bins {
            for m2 in 0..bins {
                let (t, u) = (axis.midpoint(m1), axis.midpoint(m2));
                if u > t {
                    continue;
                }
                let flat = grid.flat(m1, m2);
                truth.push(BoxTruth {
                    transition: label.clone(),
                    m1,
                    m2,
                    t,
                    u,
                    truth: expr.value(t, u),
                    fitted: fit.transitions[idx].bins[flat].map(|e| e.rate),
                    exposure: table.transition_exposure(idx, flat),
                });
            }
        }
    }

    let mut slices = Vec::with_capacity(cfg.slices.len());
    for spec in &cfg.slices {
        let idx = layout_index(&layout, &cfg.scenario, &spec.transition)?;
        let (from, to) = layout.transitions[idx];
        let expr = &model.transition(from, to).expect("layout follows the model").expr;
        slices.push(section(&table, &fit, idx, spec.d, Some(expr))?);
    }
    Ok(SurfaceResult { table, fit, truth, slices })
}

/// Fitted rates along `t - u = d` for transition `idx` of a time-by-duration
/// fit, with the box exposure and, when `truth` is given, the true rate
/// (NaN otherwise).
pub fn section(
    table: &OETable,
    fit: &RateFit,
    idx: usize,
    d: f64,
    truth: Option<&IntensityExpr>,
) -> Result<Slice, ExperimentError> {
    let GridSpec::TimeDuration(grid) = *table.grid() else {
        return Err(invalid("sections need a time-by-duration grid"));
    };
    let points = diagonal_slice(fit, idx, d)?
        .into_iter()
        .map(|(t, fitted)| {
            let u = t - d;
            let exposure = match (grid.time.bin_of(t), grid.duration.bin_of(u)) {
                (Some(m1), Some(m2)) => table.transition_exposure(idx, grid.flat(m1, m2)),
                _ => 0.0,
            };
            SlicePoint { t, u, fitted, truth: truth.map_or(f64::NAN, |e| e.value(t, u)), exposure }
        })
        .collect();
    Ok(Slice { transition: table.layout().transition_label(idx), d, points })
}
