use crate::intensity::{IntensityExpr, IntensityModel, ModelKind, StateId};
use crate::sim::{CensoringSpec, DEFAULT_WINDOW};

use super::Scenario;

/// Markov illness-death rates as `(from, to, expression)`; exits from
/// state 1 split the total rate 9:1 between states 2 and 3.
pub const PAPER_MARKOV_RATES: [(&str, &str, &str); 3] = [
    ("1", "2", "0.09 + 0.0018*t + 0.045*sin(t/2)"),
    ("1", "3", "0.01 + 0.0002*t + 0.005*sin(t/2)"),
    ("2", "3", "0.06 + 0.002*t + 0.05*sin(t/2)"),
];

/// Semi-Markov rates; only the 2 -> 3 rate depends on duration.
pub const PAPER_SEMI_MARKOV_RATES: [(&str, &str, &str); 3] = [
    ("1", "2", "0.09 + 0.0018*t"),
    ("1", "3", "0.01 + 0.0002*t"),
    ("2", "3", "0.09 + 0.001*t*(1 + 0.1*u) + 0.2/(1 + exp(0.5*(u - 4)))"),
];

pub(super) fn scenario(kind: ModelKind, rates: &[(&str, &str, &str)]) -> Scenario {
    let transitions = rates
        .iter()
        .map(|(a, b, e)| (a.to_string(), b.to_string(), IntensityExpr::parse(e).expect("preset parses")))
        .collect();
    let model = IntensityModel::new(kind, &["1", "2", "3"], &["3"], transitions).expect("preset is well formed");
    Scenario {
        model,
        initial_state: StateId(0),
        horizon: 40.0,
        censoring: CensoringSpec::Uniform { lo: 10.0, hi: 40.0 },
        window: DEFAULT_WINDOW,
    }
}
