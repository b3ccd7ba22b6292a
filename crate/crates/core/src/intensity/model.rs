use std::collections::HashMap;
use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::IntensityExpr;

/// Points scanned per transition when checking non-negativity at load time.
pub const NONNEG_SCAN_POINTS: usize = 4096;

/// Dense index of a state label.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct StateId(pub usize);

impl StateId {
    #[inline]
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    Markov,
    SemiMarkov,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("model has no states")]
    NoStates,
    #[error("state `{0}` declared more than once")]
    DuplicateState(String),
    #[error("unknown state `{0}`")]
    UnknownState(String),
    #[error("transition {0} -> {0} is a self-loop")]
    SelfLoop(String),
    #[error("transition {from} -> {to} declared more than once")]
    DuplicateTransition { from: String, to: String },
    #[error("transition {from} -> {to} leaves absorbing state {from}")]
    ExitFromAbsorbing { from: String, to: String },
    #[error("markov model, but the intensity {from} -> {to} depends on duration u")]
    DurationInMarkov { from: String, to: String },
    #[error("intensity {from} -> {to} is {value} at t={t}, u={u} (must be finite and >= 0)")]
    InvalidRate { from: String, to: String, t: f64, u: f64, value: f64 },
    #[error("horizon must be positive and finite, got {0}")]
    BadHorizon(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct Transition {
    pub from: StateId,
    pub to: StateId,
    pub expr: IntensityExpr,
}

/// State space plus per-transition intensities.
#[derive(Debug, Clone)]
pub struct IntensityModel {
    kind: ModelKind,
    states: Vec<String>,
    absorbing: Vec<bool>,
    transitions: Vec<Transition>,
    exits: Vec<Vec<usize>>,
    exit_totals: Vec<IntensityExpr>,
}

impl IntensityModel {
    /// Builds a model from labelled parts. Structural rules are checked here;
    /// the numerical scan lives in [`IntensityModel::validate`].
    pub fn new<S: AsRef<str>>(
        kind: ModelKind,
        states: &[S],
        absorbing: &[S],
        transitions: Vec<(String, String, IntensityExpr)>,
    ) -> Result<Self, ModelError> {
        if states.is_empty() {
            return Err(ModelError::NoStates);
        }
        let mut index = HashMap::new();
        let labels: Vec<String> = states.iter().map(|s| s.as_ref().to_string()).collect();
        for (i, s) in labels.iter().enumerate() {
            if index.insert(s.clone(), StateId(i)).is_some() {
                return Err(ModelError::DuplicateState(s.clone()));
            }
        }
        let lookup = |s: &str| {
            index
                .get(s)
                .copied()
                .ok_or_else(|| ModelError::UnknownState(s.to_string()))
        };
        let mut absorbing_flags = vec![false; labels.len()];
        for s in absorbing {
            absorbing_flags[lookup(s.as_ref())?.index()] = true;
        }
        let mut out = Vec::with_capacity(transitions.len());
        let mut exits = vec![Vec::new(); labels.len()];
        for (from, to, expr) in transitions {
            let (f, t) = (lookup(&from)?, lookup(&to)?);
            if f == t {
                return Err(ModelError::SelfLoop(from));
            }
            if absorbing_flags[f.index()] {
                return Err(ModelError::ExitFromAbsorbing { from, to });
            }
            if kind == ModelKind::Markov && expr.uses_duration() {
                return Err(ModelError::DurationInMarkov { from, to });
            }
            if out.iter().any(|tr: &Transition| tr.from == f && tr.to == t) {
                return Err(ModelError::DuplicateTransition { from, to });
            }
            exits[f.index()].push(out.len());
            out.push(Transition { from: f, to: t, expr });
        }
        let exit_totals = exits
            .iter()
            .map(|idx| IntensityExpr::sum(idx.iter().map(|&i| &out[i].expr)))
            .collect();
        Ok(IntensityModel {
            kind,
            states: labels,
            absorbing: absorbing_flags,
            transitions: out,
            exits,
            exit_totals,
        })
    }

    /// Scans every intensity on `[0, horizon]` (and the admissible duration
    /// triangle `0 <= u <= t` for semi-Markov models) for finite,
    /// non-negative values.
    pub fn validate(&self, horizon: f64) -> Result<(), ModelError> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(ModelError::BadHorizon(horizon));
        }
        for tr in &self.transitions {
            for (t, u) in scan_points(horizon, tr.expr.uses_duration()) {
                let value = tr.expr.value(t, u);
                if !value.is_finite() || value < 0.0 {
                    return Err(ModelError::InvalidRate {
                        from: self.label(tr.from).to_string(),
                        to: self.label(tr.to).to_string(),
                        t,
                        u,
                        value,
                    });
                }
            }
        }
        Ok(())
    }

    pub fn kind(&self) -> ModelKind {
        self.kind
    }

    pub fn n_states(&self) -> usize {
        self.states.len()
    }

    pub fn states(&self) -> &[String] {
        &self.states
    }

    pub fn label(&self, s: StateId) -> &str {
        &self.states[s.index()]
    }

    pub fn state(&self, label: &str) -> Option<StateId> {
        self.states.iter().position(|s| s == label).map(StateId)
    }

    pub fn is_absorbing(&self, s: StateId) -> bool {
        self.absorbing[s.index()]
    }

    pub fn transitions(&self) -> &[Transition] {
        &self.transitions
    }

    pub fn transition(&self, from: StateId, to: StateId) -> Option<&Transition> {
        self.transitions.iter().find(|t| t.from == from && t.to == to)
    }

    /// Indices into [`IntensityModel::transitions`] of the exits of `s`.
    pub fn exits(&self, s: StateId) -> &[usize] {
        &self.exits[s.index()]
    }

    /// Summed exit intensity of `s`.
    pub fn exit_total(&self, s: StateId) -> &IntensityExpr {
        &self.exit_totals[s.index()]
    }

    pub fn transition_label(&self, tr: &Transition) -> String {
        format!("{}->{}", self.label(tr.from), self.label(tr.to))
    }
}

impl fmt::Display for IntensityModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "{:?} model on states {:?}", self.kind, self.states)?;
        for tr in &self.transitions {
            writeln!(f, "  {}: {}", self.transition_label(tr), tr.expr)?;
        }
        Ok(())
    }
}

fn scan_points(horizon: f64, with_duration: bool) -> Vec<(f64, f64)> {
    if with_duration {
        let side = (NONNEG_SCAN_POINTS as f64).sqrt() as usize;
        let mut pts = Vec::with_capacity(side * side);
        for i in 0..side {
            let t = horizon * i as f64 / (side - 1) as f64;
            for j in 0..side {
                pts.push((t, t * j as f64 / (side - 1) as f64));
            }
        }
        pts
    } else {
        (0..NONNEG_SCAN_POINTS)
            .map(|i| (horizon * i as f64 / (NONNEG_SCAN_POINTS - 1) as f64, 0.0))
            .collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn expr(s: &str) -> IntensityExpr {
        IntensityExpr::parse(s).unwrap()
    }

    fn tr(a: &str, b: &str, e: &str) -> (String, String, IntensityExpr) {
        (a.into(), b.into(), expr(e))
    }

    #[test]
    fn structural_rules() {
        let states = ["1", "2", "3"];
        let err = IntensityModel::new(ModelKind::Markov, &states, &["3"], vec![tr("3", "1", "0.1")]);
        assert!(matches!(err, Err(ModelError::ExitFromAbsorbing { .. })));
        let err = IntensityModel::new(ModelKind::Markov, &states, &["3"], vec![tr("1", "2", "u")]);
        assert!(matches!(err, Err(ModelError::DurationInMarkov { .. })));
        let err = IntensityModel::new(ModelKind::Markov, &states, &["3"], vec![tr("1", "1", "1")]);
        assert!(matches!(err, Err(ModelError::SelfLoop(_))));
        let err = IntensityModel::new(ModelKind::Markov, &states, &["4"], vec![]);
        assert!(matches!(err, Err(ModelError::UnknownState(_))));
        let err = IntensityModel::new(
            ModelKind::Markov,
            &states,
            &[],
            vec![tr("1", "2", "1"), tr("1", "2", "2")],
        );
        assert!(matches!(err, Err(ModelError::DuplicateTransition { .. })));
        let ok = IntensityModel::new(ModelKind::SemiMarkov, &states, &["3"], vec![tr("1", "2", "u")]);
        assert!(ok.is_ok());
    }

    #[test]
    fn negative_rates_fail_validation() {
        let m = IntensityModel::new(
            ModelKind::Markov,
            &["a", "b"],
            &[],
            vec![tr("a", "b", "0.1 - 0.01*t")],
        )
        .unwrap();
        assert!(m.validate(5.0).is_ok());
        assert!(matches!(m.validate(40.0), Err(ModelError::InvalidRate { .. })));
        let m = IntensityModel::new(
            ModelKind::SemiMarkov,
            &["a", "b"],
            &[],
            vec![tr("a", "b", "0.5 - 0.1*u")],
        )
        .unwrap();
        assert!(m.validate(10.0).is_err());
    }

    #[test]
    fn exit_total_sums_destinations() {
        let m = IntensityModel::new(
            ModelKind::Markov,
            &["1", "2", "3"],
            &["3"],
            vec![tr("1", "2", "0.3"), tr("1", "3", "0.1*t"), tr("2", "3", "1")],
        )
        .unwrap();
        let total = m.exit_total(StateId(0));
        assert!((total.value(2.0, 0.0) - 0.5).abs() < 1e-15);
        assert_eq!(m.exit_total(StateId(2)).value(1.0, 0.0), 0.0);
        assert_eq!(m.exits(StateId(0)), &[0, 1]);
        assert_eq!(m.transition_label(&m.transitions()[2]), "2->3");
    }
}
