use rayon::prelude::*;
use serde::Serialize;

use super::grid::{GridSpec, TimeDurationGrid, TimeGrid};
use super::OeError;
use crate::intensity::{IntensityModel, StateId};
use crate::sim::Trajectory;

/// Trajectories per aggregation chunk. Chunks are merged in index order,
/// which keeps exposure sums independent of the thread count.
const CHUNK: usize = 2048;

/// Neumaier-compensated accumulator.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct CompensatedSum {
    sum: f64,
    comp: f64,
}

impl CompensatedSum {
    #[inline]
    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn merge(&mut self, other: &CompensatedSum) {
        self.add(other.sum);
        self.add(other.comp);
    }

    #[inline]
    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

/// State labels and the transitions tabulated.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Layout {
    pub states: Vec<String>,
    pub transitions: Vec<(StateId, StateId)>,
}

impl Layout {
    pub fn from_model(model: &IntensityModel) -> Self {
        Layout {
            states: model.states().to_vec(),
            transitions: model.transitions().iter().map(|t| (t.from, t.to)).collect(),
        }
    }

    /// Transitions that actually occur in the cohort, sorted by (from, to).
    pub fn discover(states: Vec<String>, cohort: &[Trajectory]) -> Self {
        let mut transitions: Vec<(StateId, StateId)> = cohort
            .iter()
            .flat_map(|t| t.jumps.iter().map(|j| (j.from, j.to)))
            .collect();
        transitions.sort();
        transitions.dedup();
        Layout { states, transitions }
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn index_of(&self, from: StateId, to: StateId) -> Option<usize> {
        self.transitions.iter().position(|&(f, t)| f == from && t == to)
    }

    pub fn find(&self, from: &str, to: &str) -> Option<usize> {
        let f = self.states.iter().position(|s| s == from)?;
        let t = self.states.iter().position(|s| s == to)?;
        self.index_of(StateId(f), StateId(t))
    }

    pub fn transition_label(&self, idx: usize) -> String {
        let (f, t) = self.transitions[idx];
        format!("{}->{}", self.states[f.index()], self.states[t.index()])
    }
}

/// Occurrences per transition and exposures per state on a 1D or 2D grid.
#[derive(Debug, Clone, PartialEq)]
pub struct OETable {
    grid: GridSpec,
    layout: Layout,
    occurrence: Vec<Vec<u64>>,
    exposure: Vec<Vec<CompensatedSum>>,
    n_subjects: usize,
}

impl OETable {
    pub fn empty(grid: GridSpec, layout: Layout) -> Self {
        let bins = grid.n_bins();
        OETable {
            occurrence: vec![vec![0; bins]; layout.transitions.len()],
            exposure: vec![vec![CompensatedSum::default(); bins]; layout.n_states()],
            grid,
            layout,
            n_subjects: 0,
        }
    }

    /// Builds a table from raw arrays (used by tests and by ingestion of
    /// pre-aggregated data).
    pub fn from_parts(
        grid: GridSpec,
        layout: Layout,
        occurrence: Vec<Vec<u64>>,
        exposure: Vec<Vec<f64>>,
        n_subjects: usize,
    ) -> Result<Self, OeError> {
        let bins = grid.n_bins();
        let shape_ok = occurrence.len() == layout.transitions.len()
            && exposure.len() == layout.n_states()
            && occurrence.iter().all(|o| o.len() == bins)
            && exposure.iter().all(|e| e.len() == bins);
        if !shape_ok {
            return Err(OeError::Shape);
        }
        if exposure.iter().flatten().any(|e| !(e.is_finite() && *e >= 0.0)) {
            return Err(OeError::Shape);
        }
        let exposure = exposure
            .into_iter()
            .map(|row| row.into_iter().map(|x| CompensatedSum { sum: x, comp: 0.0 }).collect())
            .collect();
        Ok(OETable { grid, layout, occurrence, exposure, n_subjects })
    }

    pub fn grid(&self) -> &GridSpec {
        &self.grid
    }

    pub fn layout(&self) -> &Layout {
        &self.layout
    }

    pub fn n_subjects(&self) -> usize {
        self.n_subjects
    }

    pub fn n_bins(&self) -> usize {
        self.grid.n_bins()
    }

    pub fn occurrence(&self, transition: usize, bin: usize) -> u64 {
        self.occurrence[transition][bin]
    }

    pub fn occurrences(&self, transition: usize) -> &[u64] {
        &self.occurrence[transition]
    }

    pub fn exposure(&self, state: StateId, bin: usize) -> f64 {
        self.exposure[state.index()][bin].value()
    }

    pub fn exposures(&self, state: StateId) -> Vec<f64> {
        self.exposure[state.index()].iter().map(|c| c.value()).collect()
    }

    /// Exposure of the origin state of `transition`.
    pub fn transition_exposure(&self, transition: usize, bin: usize) -> f64 {
        let from = self.layout.transitions[transition].0;
        self.exposure(from, bin)
    }

    /// Bin-wise sum; grids and layouts must match.
    pub fn merge(&mut self, other: &OETable) -> Result<(), OeError> {
        if self.grid != other.grid || self.layout != other.layout {
            return Err(OeError::Shape);
        }
        for (a, b) in self.occurrence.iter_mut().zip(&other.occurrence) {
            for (x, y) in a.iter_mut().zip(b) {
                *x += *y;
            }
        }
        for (a, b) in self.exposure.iter_mut().zip(&other.exposure) {
            for (x, y) in a.iter_mut().zip(b) {
                x.merge(y);
            }
        }
        self.n_subjects += other.n_subjects;
        Ok(())
    }

    /// Multiplies every exposure by `c` (tests of scale equivariance).
    pub fn scale_exposure(&mut self, c: f64) {
        for row in &mut self.exposure {
            for cell in row {
                cell.sum *= c;
                cell.comp *= c;
            }
        }
    }

    /// Collapses a time-by-duration table onto its time axis.
    pub fn marginalize_duration(&self) -> Option<OETable> {
        let GridSpec::TimeDuration(g2) = self.grid else {
            return None;
        };
        let mut out = OETable::empty(GridSpec::Time(g2.time), self.layout.clone());
        out.n_subjects = self.n_subjects;
        for idx in 0..g2.boxes() {
            let (m1, _) = g2.unflat(idx);
            for (tr, row) in self.occurrence.iter().enumerate() {
                out.occurrence[tr][m1] += row[idx];
            }
            for (s, row) in self.exposure.iter().enumerate() {
                out.exposure[s][m1].merge(&row[idx]);
            }
        }
        Some(out)
    }

    fn check(&self, traj: &Trajectory) -> Result<(), OeError> {
        traj.validate(None)?;
        let n = self.layout.n_states();
        let bad = std::iter::once(traj.initial_state)
            .chain(traj.jumps.iter().map(|j| j.to))
            .find(|s| s.index() >= n);
        if let Some(s) = bad {
            return Err(OeError::UnknownState { subject: traj.subject_id, state: s.index() });
        }
        Ok(())
    }

    fn transition_slot(&self, traj: &Trajectory, from: StateId, to: StateId) -> Result<usize, OeError> {
        self.layout.index_of(from, to).ok_or_else(|| OeError::UnknownTransition {
            subject: traj.subject_id,
            from: self.layout.states[from.index()].clone(),
            to: self.layout.states[to.index()].clone(),
        })
    }

    fn add_1d(&mut self, grid: &TimeGrid, traj: &Trajectory) -> Result<(), OeError> {
        self.check(traj)?;
        for j in &traj.jumps {
            let slot = self.transition_slot(traj, j.from, j.to)?;
            if j.time < traj.censor_time {
                if let Some(m) = grid.bin_of(j.time) {
                    self.occurrence[slot][m] += 1;
                }
            }
        }
        for s in traj.sojourns() {
            let mut a = s.entry.max(grid.t0());
            let b = s.exit.min(grid.t_max());
            if a >= b {
                continue;
            }
            let Some(mut m) = grid.bin_of(a) else { continue };
            let row = &mut self.exposure[s.state.index()];
            while a < b && m < grid.bins() {
                let hi = grid.edge(m + 1);
                let end = b.min(hi);
                row[m].add(end - a);
                a = end;
                m += 1;
            }
        }
        self.n_subjects += 1;
        Ok(())
    }

    fn add_2d(&mut self, grid: &TimeDurationGrid, traj: &Trajectory) -> Result<(), OeError> {
        self.check(traj)?;
        let (tg, dg) = (&grid.time, &grid.duration);
        let mut entry = 0.0;
        for j in &traj.jumps {
            let slot = self.transition_slot(traj, j.from, j.to)?;
            if j.time < traj.censor_time {
                if let (Some(m1), Some(m2)) = (tg.bin_of(j.time), dg.bin_of(j.time - entry)) {
                    self.occurrence[slot][grid.flat(m1, m2)] += 1;
                }
            }
            entry = j.time;
        }
        for s in traj.sojourns() {
            let s0 = s.entry;
            let b = s.exit.min(tg.t_max()).min(s0 + dg.t_max());
            let mut a = s.entry.max(tg.t0()).max(s0 + dg.t0());
            if a >= b {
                continue;
            }
            // `a - s0` can round below the first duration edge.
            let (Some(mut m1), Some(mut m2)) = (tg.bin_of(a), dg.bin_of((a - s0).max(dg.t0()))) else {
                continue;
            };
            let row = &mut self.exposure[s.state.index()];
            while a < b && m1 < tg.bins() && m2 < dg.bins() {
                let tb = tg.edge(m1 + 1);
                let db = s0 + dg.edge(m2 + 1);
                let next = b.min(tb).min(db);
                row[grid.flat(m1, m2)].add(next - a);
                a = next;
                if next >= tb {
                    m1 += 1;
                }
                if next >= db {
                    m2 += 1;
                }
            }
        }
        self.n_subjects += 1;
        Ok(())
    }

    fn add(&mut self, traj: &Trajectory) -> Result<(), OeError> {
        match self.grid {
            GridSpec::Time(g) => self.add_1d(&g, traj),
            GridSpec::TimeDuration(g) => self.add_2d(&g, traj),
        }
    }
}

fn aggregate(cohort: &[Trajectory], grid: GridSpec, layout: &Layout) -> Result<OETable, OeError> {
    let parts: Vec<OETable> = cohort
        .par_chunks(CHUNK)
        .map(|chunk| {
            let mut table = OETable::empty(grid, layout.clone());
            for traj in chunk {
                table.add(traj)?;
            }
            Ok(table)
        })
        .collect::<Result<_, OeError>>()?;
    let mut total = OETable::empty(grid, layout.clone());
    for part in &parts {
        total.merge(part)?;
    }
    Ok(total)
}

/// Occurrence counts and exposure per time bin. Jumps count only when they
/// happen before the censoring time; exposure is the exact length of each
/// sojourn's intersection with each bin, up to censoring.
pub fn aggregate_1d(cohort: &[Trajectory], grid: TimeGrid, layout: &Layout) -> Result<OETable, OeError> {
    aggregate(cohort, GridSpec::Time(grid), layout)
}

/// As [`aggregate_1d`] on time-by-duration boxes. The duration is the time
/// since the last jump, or since 0 before the first jump; a sojourn's
/// exposure is split exactly where it crosses time or duration edges.
pub fn aggregate_2d(cohort: &[Trajectory], grid: TimeDurationGrid, layout: &Layout) -> Result<OETable, OeError> {
    aggregate(cohort, GridSpec::TimeDuration(grid), layout)
}
