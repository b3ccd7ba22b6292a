use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::grid::GridSpec;
use super::table::{Layout, OETable};
use super::OeError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Oe,
    Lasso,
    Tree,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Oe => "oe",
            Method::Lasso => "lasso",
            Method::Tree => "tree",
        }
    }
}

/// Scale on which the Wald interval is symmetric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum IntervalScale {
    #[default]
    Raw,
    Log,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Estimate {
    pub rate: f64,
    pub variance: f64,
    pub ci_lo: f64,
    pub ci_hi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransitionFit {
    pub label: String,
    /// `None` marks an undefined bin (zero exposure).
    pub bins: Vec<Option<Estimate>>,
}

/// Piecewise-constant intensity estimates with per-bin variance and
/// pointwise intervals.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RateFit {
    pub grid: GridSpec,
    pub method: Method,
    pub level: f64,
    /// Bands without asymptotic backing (tree and lasso fits).
    pub heuristic: bool,
    pub transitions: Vec<TransitionFit>,
}

/// Two-sided standard normal quantile for coverage `level`.
pub fn normal_quantile(level: f64) -> Result<f64, OeError> {
    if !(level > 0.0 && level < 1.0) {
        return Err(OeError::BadLevel(level));
    }
    let n = Normal::standard();
    Ok(n.inverse_cdf(0.5 + 0.5 * level))
}

/// Estimate from a rate, its variance and the count that drives the
/// log-scale interval.
pub fn wald(rate: f64, variance: f64, count: f64, z: f64, scale: IntervalScale) -> Estimate {
    let sd = variance.max(0.0).sqrt();
    let (ci_lo, ci_hi) = match scale {
        IntervalScale::Raw => ((rate - z * sd).max(0.0), rate + z * sd),
        IntervalScale::Log if rate > 0.0 && count > 0.0 => {
            let half = z / count.sqrt();
            (rate * (-half).exp(), rate * half.exp())
        }
        IntervalScale::Log => (rate, rate),
    };
    Estimate { rate, variance, ci_lo, ci_hi }
}

/// Occurrence/exposure rates `O/E` with plug-in variance `O/E^2` and Wald
/// intervals. Bins with zero exposure are undefined.
pub fn oe_rates(table: &OETable, level: f64, scale: IntervalScale) -> Result<RateFit, OeError> {
    let z = normal_quantile(level)?;
    let layout: &Layout = table.layout();
    let transitions = (0..layout.transitions.len())
        .map(|tr| {
            let bins = (0..table.n_bins())
                .map(|m| {
                    let o = table.occurrence(tr, m) as f64;
                    let e = table.transition_exposure(tr, m);
                    (e > 0.0).then(|| wald(o / e, o / (e * e), o, z, scale))
                })
                .collect();
            TransitionFit { label: layout.transition_label(tr), bins }
        })
        .collect();
    Ok(RateFit {
        grid: *table.grid(),
        method: Method::Oe,
        level,
        heuristic: false,
        transitions,
    })
}

/// Plug-in limit variance of `sqrt(n * width) * (rate - true rate)` in the
/// bin holding `t`: `mu / p` with `mu = O/E` and `p = E/(n * width)`.
pub fn theorem_scale_variance(table: &OETable, transition: usize, t: f64) -> Result<f64, OeError> {
    let GridSpec::Time(g) = table.grid() else {
        return Err(OeError::NotOneDimensional);
    };
    if transition >= table.layout().transitions.len() {
        return Err(OeError::NoSuchTransition(transition.to_string()));
    }
    let m = g.bin_of(t).ok_or(OeError::OutsideGrid(t))?;
    let e = table.transition_exposure(transition, m);
    if e <= 0.0 {
        return Err(OeError::EmptyBin(m));
    }
    let o = table.occurrence(transition, m) as f64;
    let p = e / (table.n_subjects() as f64 * g.width());
    Ok((o / e) / p)
}

impl RateFit {
    pub fn transition(&self, label: &str) -> Option<&TransitionFit> {
        self.transitions.iter().find(|t| t.label == label)
    }

    /// Step-function value at `(t, u)`; `u` is ignored on a 1D grid.
    pub fn lookup(&self, transition: usize, t: f64, u: f64) -> Option<Estimate> {
        let bins = &self.transitions.get(transition)?.bins;
        let idx = match &self.grid {
            GridSpec::Time(g) => g.bin_of(t)?,
            GridSpec::TimeDuration(g) => g.flat(g.time.bin_of(t)?, g.duration.bin_of(u)?),
        };
        bins[idx]
    }
}

/// Samples a 2D fit along the line `t - u = d` at time-bin midpoints,
/// skipping inadmissible points (`u < 0`) and undefined boxes.
pub fn diagonal_slice(fit: &RateFit, transition: usize, d: f64) -> Result<Vec<(f64, f64)>, OeError> {
    let GridSpec::TimeDuration(g) = fit.grid else {
        return Err(OeError::NotTwoDimensional);
    };
    if !(d >= 0.0 && d.is_finite()) {
        return Err(OeError::BadOffset(d));
    }
    if transition >= fit.transitions.len() {
        return Err(OeError::NoSuchTransition(transition.to_string()));
    }
    Ok((0..g.time.bins())
        .filter_map(|m1| {
            let t = g.time.midpoint(m1);
            let u = t - d;
            if u < 0.0 || u > t {
                return None;
            }
            fit.lookup(transition, t, u).map(|e| (t, e.rate))
        })
        .collect())
}
