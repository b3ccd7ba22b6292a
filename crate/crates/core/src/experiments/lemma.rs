//! Per-subject occurrence and exposure moments in one small bin, compared
//! with their first-order expansions.
//!
//! The bin is centred on `t` (and on `u` for the time-by-duration case) so
//! that the comparison point is interior.

use serde::Serialize;

use super::{invalid, ExperimentError, Scenario, TransitionRef};
use crate::intensity::StateId;
use crate::oe::{occupation_probability, occupation_probability_duration};
use crate::sim::{simulate_cohort, Trajectory};

#[derive(Debug, Clone)]
pub struct LemmaConfig {
    pub scenario: Scenario,
    pub transition: TransitionRef,
    pub n: usize,
    pub t: f64,
    pub delta: f64,
    /// Duration point and duration width; `None` for the time-only case.
    pub duration: Option<(f64, f64)>,
    pub master_seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MomentRow {
    pub quantity: &'static str,
    pub estimate: f64,
    pub std_error: f64,
    pub prediction: f64,
    pub relative_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LemmaReport {
    pub n: usize,
    pub t: f64,
    pub delta: f64,
    pub u: Option<f64>,
    pub delta_u: Option<f64>,
    /// True intensity at the comparison point.
    pub mu: f64,
    /// Empirical occupation probability (time-only case) or its duration
    /// derivative by central differences.
    pub occupation: f64,
    pub rows: Vec<MomentRow>,
}

impl LemmaReport {
    pub fn row(&self, quantity: &str) -> Option<&MomentRow> {
        self.rows.iter().find(|r| r.quantity == quantity)
    }
}

#[derive(Clone, Copy)]
struct Window {
    t_lo: f64,
    t_hi: f64,
    /// Duration range; unbounded in the time-only case.
    u_lo: f64,
    u_hi: f64,
}

/// Jumps `from -> to` and exposure in `from` inside the window.
fn subject_xy(tr: &Trajectory, from: StateId, to: StateId, w: Window) -> (f64, f64) {
    let mut x = 0.0;
    let mut y = 0.0;
    for (k, soj) in tr.sojourns().enumerate() {
        if soj.state != from {
            continue;
        }
        let lo = w.t_lo.max(soj.entry + w.u_lo);
        let hi = w.t_hi.min(soj.entry + w.u_hi).min(soj.exit);
        if hi > lo {
            y += hi - lo;
        }
        if let Some(j) = tr.jumps.get(k) {
            let d = j.time - soj.entry;
            if j.to == to && j.time >= w.t_lo && j.time < w.t_hi && d >= w.u_lo && d < w.u_hi {
                x += 1.0;
            }
        }
    }
    (x, y)
}

/// Mean, unbiased variance and their standard errors.
fn moments(v: &[f64]) -> (f64, f64, f64, f64) {
    let n = v.len() as f64;
    let mean = v.iter().sum::<f64>() / n;
    let (mut m2, mut m4) = (0.0, 0.0);
    for x in v {
        let d = x - mean;
        m2 += d * d;
        m4 += d * d * d * d;
    }
    let var = m2 / (n - 1.0);
    let m2p = m2 / n;
    let m4p = m4 / n;
    (mean, var, (var / n).sqrt(), ((m4p - m2p * m2p).max(0.0) / n).sqrt())
}

fn row(quantity: &'static str, estimate: f64, std_error: f64, prediction: f64) -> MomentRow {
    MomentRow { quantity, estimate, std_error, prediction, relative_error: estimate / prediction - 1.0 }
}

pub fn variance_lemma_check(cfg: &LemmaConfig) -> Result<LemmaReport, ExperimentError> {
    if cfg.n < 2 {
        return Err(invalid("need at least two subjects"));
    }
    if !(cfg.delta > 0.0 && cfg.t - cfg.delta / 2.0 >= 0.0 && cfg.t + cfg.delta / 2.0 <= cfg.scenario.horizon) {
        return Err(invalid("the bin around t must lie inside the horizon"));
    }
    let (from, to) = cfg.scenario.resolve(&cfg.transition)?;
    let cohort = simulate_cohort(&cfg.scenario.sim_config(cfg.n, cfg.master_seed))?;
    let half = cfg.delta / 2.0;
    let n_states = cfg.scenario.model.n_states();

    let (window, occupation, area, y_var_scale, u) = match cfg.duration {
        None => {
            let p = occupation_probability(&cohort, n_states, from, cfg.t)?;
            let w = Window { t_lo: cfg.t - half, t_hi: cfg.t + half, u_lo: 0.0, u_hi: f64::INFINITY };
            (w, p, cfg.delta, cfg.delta, None)
        }
        Some((u, du)) => {
            let h = du / 2.0;
            if !(du > 0.0 && u - h >= 0.0 && u + h <= cfg.t - half) {
                return Err(invalid("the duration bin must lie inside [0, t - delta/2]"));
            }
            let hi = occupation_probability_duration(&cohort, n_states, from, cfg.t, u + h)?;
            let lo = occupation_probability_duration(&cohort, n_states, from, cfg.t, u - h)?;
            let dp = (hi - lo) / (2.0 * h);
            let w = Window { t_lo: cfg.t - half, t_hi: cfg.t + half, u_lo: u - h, u_hi: u + h };
            (w, dp, cfg.delta * du, cfg.delta, Some((u, du)))
        }
    };
    let mu = cfg.scenario.truth(&cfg.transition, cfg.t, u.map_or(0.0, |p| p.0))?;

    let (xs, ys): (Vec<f64>, Vec<f64>) = cohort.iter().map(|tr| subject_xy(tr, from, to, window)).unzip();
    let (mx, vx, se_mx, se_vx) = moments(&xs);
    let (my, vy, se_my, se_vy) = moments(&ys);
    let rows = vec![
        row("mean_x", mx, se_mx, area * occupation * mu),
        row("var_x", vx, se_vx, area * occupation * mu),
        row("mean_y", my, se_my, area * occupation),
        row("var_y", vy, se_vy, y_var_scale * area * occupation),
    ];
    Ok(LemmaReport {
        n: cfg.n,
        t: cfg.t,
        delta: cfg.delta,
        u: u.map(|p| p.0),
        delta_u: u.map(|p| p.1),
        mu,
        occupation,
        rows,
    })
}
