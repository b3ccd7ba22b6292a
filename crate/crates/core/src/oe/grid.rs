use serde::{Deserialize, Serialize};

use super::OeError;

/// Equidistant grid `t0 < t1 < ... < tM = t_max` with right-open bins
/// `[t_{m-1}, t_m)`. Bin indices are 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    t0: f64,
    t_max: f64,
    bins: usize,
}

impl TimeGrid {
    pub fn new(t0: f64, t_max: f64, bins: usize) -> Result<Self, OeError> {
        if bins == 0 || !t0.is_finite() || !t_max.is_finite() || t_max <= t0 {
            return Err(OeError::BadGrid { t0, t_max, bins });
        }
        Ok(TimeGrid { t0, t_max, bins })
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    pub fn t_max(&self) -> f64 {
        self.t_max
    }

    pub fn bins(&self) -> usize {
        self.bins
    }

    pub fn width(&self) -> f64 {
        (self.t_max - self.t0) / self.bins as f64
    }

    /// Left edge of bin `m`; `edge(bins) == t_max` exactly.
    #[inline]
    pub fn edge(&self, m: usize) -> f64 {
        if m >= self.bins {
            self.t_max
        } else {
            self.t0 + (self.t_max - self.t0) * m as f64 / self.bins as f64
        }
    }

    pub fn bounds(&self, m: usize) -> (f64, f64) {
        (self.edge(m), self.edge(m + 1))
    }

    pub fn midpoint(&self, m: usize) -> f64 {
        let (lo, hi) = self.bounds(m);
        0.5 * (lo + hi)
    }

    /// Bin containing `t`, consistent with [`TimeGrid::edge`]: `edge(m) <= t <
    /// edge(m + 1)`. `None` outside `[t0, t_max)`.
    #[inline]
    pub fn bin_of(&self, t: f64) -> Option<usize> {
        if !(t >= self.t0 && t < self.t_max) {
            return None;
        }
        let mut m = (((t - self.t0) / self.width()).floor() as usize).min(self.bins - 1);
        while m > 0 && t < self.edge(m) {
            m -= 1;
        }
        while m + 1 < self.bins && t >= self.edge(m + 1) {
            m += 1;
        }
        Some(m)
    }
}

/// Product grid over calendar time and duration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeDurationGrid {
    pub time: TimeGrid,
    pub duration: TimeGrid,
}

impl TimeDurationGrid {
    pub fn new(time: TimeGrid, duration: TimeGrid) -> Self {
        TimeDurationGrid { time, duration }
    }

    pub fn boxes(&self) -> usize {
        self.time.bins() * self.duration.bins()
    }

    #[inline]
    pub fn flat(&self, m1: usize, m2: usize) -> usize {
        m1 * self.duration.bins() + m2
    }

    pub fn unflat(&self, idx: usize) -> (usize, usize) {
        (idx / self.duration.bins(), idx % self.duration.bins())
    }
}

/// Either grid flavour; bins of a 2D grid are flattened time-major.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum GridSpec {
    Time(TimeGrid),
    TimeDuration(TimeDurationGrid),
}

impl GridSpec {
    pub fn n_bins(&self) -> usize {
        match self {
            GridSpec::Time(g) => g.bins(),
            GridSpec::TimeDuration(g) => g.boxes(),
        }
    }

    pub fn time(&self) -> &TimeGrid {
        match self {
            GridSpec::Time(g) => g,
            GridSpec::TimeDuration(g) => &g.time,
        }
    }

    pub fn duration(&self) -> Option<&TimeGrid> {
        match self {
            GridSpec::Time(_) => None,
            GridSpec::TimeDuration(g) => Some(&g.duration),
        }
    }

    /// `(t_lo, t_hi, Some((u_lo, u_hi)))` for a flat bin index.
    pub fn cell_bounds(&self, idx: usize) -> (f64, f64, Option<(f64, f64)>) {
        match self {
            GridSpec::Time(g) => {
                let (lo, hi) = g.bounds(idx);
                (lo, hi, None)
            }
            GridSpec::TimeDuration(g) => {
                let (m1, m2) = g.unflat(idx);
                let (lo, hi) = g.time.bounds(m1);
                (lo, hi, Some(g.duration.bounds(m2)))
            }
        }
    }
}
