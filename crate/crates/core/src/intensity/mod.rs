//! Transition-intensity expressions in calendar time `t` and duration `u`.
//!
//! The grammar is ordinary arithmetic (`+ - * /`, unary minus, parentheses)
//! over numeric literals, the variables `t` and `u`, and the functions
//! `sin`, `cos`, `exp` and `log`.

mod expr;
mod model;
mod parser;

use std::fmt;
use std::str::FromStr;

use thiserror::Error;

pub use expr::{BinOp, Expr, Func, Var};
pub use model::{ModelError, ModelKind, IntensityModel, StateId, Transition, NONNEG_SCAN_POINTS};
pub use parser::{ParseError, ParseErrorKind};

/// Multiplier applied to the scanned maximum in [`IntensityExpr::local_upper_bound`].
pub const BOUND_SAFETY_FACTOR: f64 = 1.2;
/// Number of scan intervals per axis in [`IntensityExpr::local_upper_bound`].
pub const BOUND_SCAN_STEPS: usize = 64;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("expression depends on duration u but no duration was supplied")]
    MissingDuration,
    #[error("expression evaluated to a negative rate {value} at t={t}, u={u:?}")]
    Negative { value: f64, t: f64, u: Option<f64> },
    #[error("expression evaluated to a non-finite value at t={t}, u={u:?}")]
    NonFinite { t: f64, u: Option<f64> },
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BoundError {
    #[error("empty or inverted box: t in [{t_lo}, {t_hi}], u in [{u_lo}, {u_hi}]")]
    InvalidBox { t_lo: f64, t_hi: f64, u_lo: f64, u_hi: f64 },
    #[error("non-finite value during bound scan at t={t}, u={u}")]
    NonFinite { t: f64, u: f64 },
}

/// A parsed intensity expression.
#[derive(Debug, Clone, PartialEq)]
pub struct IntensityExpr {
    ast: Expr,
    uses_duration: bool,
}

impl IntensityExpr {
    pub fn parse(text: &str) -> Result<Self, ParseError> {
        parser::parse_expr(text).map(Self::from_ast)
    }

    pub fn from_ast(ast: Expr) -> Self {
        let uses_duration = ast.mentions(Var::U);
        IntensityExpr { ast, uses_duration }
    }

    pub fn constant(value: f64) -> Self {
        Self::from_ast(Expr::Const(value))
    }

    /// Sum of several expressions (the total exit intensity of a state).
    /// An empty slice gives the constant 0.
    pub fn sum<'a>(parts: impl IntoIterator<Item = &'a IntensityExpr>) -> Self {
        let ast = parts
            .into_iter()
            .map(|p| p.ast.clone())
            .reduce(|acc, e| Expr::binary(BinOp::Add, acc, e))
            .unwrap_or(Expr::Const(0.0));
        Self::from_ast(ast)
    }

    pub fn ast(&self) -> &Expr {
        &self.ast
    }

    pub fn uses_duration(&self) -> bool {
        self.uses_duration
    }

    /// True when the expression contains a division and therefore needs a
    /// domain scan before it can be trusted to stay finite.
    pub fn has_division(&self) -> bool {
        self.ast.has_division()
    }

    /// Unchecked evaluation used in hot loops; `u` is ignored by expressions
    /// that do not reference it.
    #[inline]
    pub fn value(&self, t: f64, u: f64) -> f64 {
        self.ast.value(t, u)
    }

    /// Checked evaluation: the duration must be present when the expression
    /// uses it, and the result must be a finite non-negative rate.
    pub fn eval(&self, t: f64, u: Option<f64>) -> Result<f64, EvalError> {
        let du = match (self.uses_duration, u) {
            (true, None) => return Err(EvalError::MissingDuration),
            (_, Some(u)) => u,
            (false, None) => 0.0,
        };
        let value = self.ast.value(t, du);
        if !value.is_finite() {
            return Err(EvalError::NonFinite { t, u });
        }
        if value < 0.0 {
            return Err(EvalError::Negative { value, t, u });
        }
        Ok(value)
    }

    /// Upper bound of the expression over `[t_lo, t_hi] x [u_lo, u_hi]`:
    /// the maximum over a 65-point scan per axis, times the safety factor.
    /// The duration axis is collapsed to `u_lo` when `u` is not referenced.
    pub fn local_upper_bound(
        &self,
        t_lo: f64,
        t_hi: f64,
        u_lo: f64,
        u_hi: f64,
    ) -> Result<f64, BoundError> {
        let valid = t_lo.is_finite() && t_hi.is_finite() && t_lo < t_hi;
        let valid = valid && u_lo.is_finite() && u_hi.is_finite() && u_lo <= u_hi;
        if !valid {
            return Err(BoundError::InvalidBox { t_lo, t_hi, u_lo, u_hi });
        }
        let steps = BOUND_SCAN_STEPS;
        let u_steps = if self.uses_duration && u_hi > u_lo { steps } else { 0 };
        let mut sup = f64::NEG_INFINITY;
        for i in 0..=steps {
            let t = scan_point(t_lo, t_hi, i, steps);
            for j in 0..=u_steps {
                let u = if u_steps == 0 { u_lo } else { scan_point(u_lo, u_hi, j, u_steps) };
                let v = self.ast.value(t, u);
                if !v.is_finite() {
                    return Err(BoundError::NonFinite { t, u });
                }
                sup = sup.max(v);
            }
        }
        Ok(if sup > 0.0 { sup * BOUND_SAFETY_FACTOR } else { 0.0 })
    }
}

fn scan_point(lo: f64, hi: f64, i: usize, steps: usize) -> f64 {
    if i == steps {
        hi
    } else {
        lo + (hi - lo) * (i as f64) / (steps as f64)
    }
}

impl fmt::Display for IntensityExpr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        self.ast.fmt(f)
    }
}

impl FromStr for IntensityExpr {
    type Err = ParseError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    const MU12_MARKOV: &str = "0.09 + 0.0018*t + 0.045*sin(t/2)";
    const MU23_SEMI: &str = "0.09 + 0.001*t*(1 + 0.1*u) + 0.2/(1 + exp(0.5*(u - 4)))";

    #[test]
    fn parses_markov_intensity_without_duration() {
        let e = IntensityExpr::parse(MU12_MARKOV).unwrap();
        assert!(!e.uses_duration());
        assert_eq!(e.to_string(), MU12_MARKOV);
    }

    #[test]
    fn parses_logistic_duration_term() {
        let e = IntensityExpr::parse("0.2/(1+exp(0.5*(u-4)))").unwrap();
        assert!(e.uses_duration());
        assert!(e.has_division());
        assert_eq!(e.to_string(), "0.2/(1 + exp(0.5*(u - 4)))");
    }

    #[test]
    fn dangling_operator_reports_end_offset() {
        let err = IntensityExpr::parse("0.1 +").unwrap_err();
        assert_eq!(err.offset, 5);
        assert_eq!(err.kind, ParseErrorKind::UnexpectedEnd);
    }

    #[test]
    fn unknown_identifiers_are_rejected() {
        let err = IntensityExpr::parse("0.1 + x").unwrap_err();
        assert_eq!(err.offset, 6);
        assert!(matches!(err.kind, ParseErrorKind::UnknownIdentifier(ref s) if s == "x"));
        let err = IntensityExpr::parse("tan(t)").unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::UnknownIdentifier(_)));
        let err = IntensityExpr::parse("sin t").unwrap_err();
        assert!(matches!(err.kind, ParseErrorKind::MissingCallParen(_)));
        let err = IntensityExpr::parse("(t").unwrap_err();
        assert_eq!(err.kind, ParseErrorKind::UnexpectedEnd);
        let err = IntensityExpr::parse("t $").unwrap_err();
        assert_eq!(err.offset, 2);
    }

    #[test]
    fn precedence_and_associativity() {
        let e = IntensityExpr::parse("2 - 3 - 4").unwrap();
        assert_eq!(e.value(0.0, 0.0), -5.0);
        let e = IntensityExpr::parse("8/2/2").unwrap();
        assert_eq!(e.value(0.0, 0.0), 2.0);
        let e = IntensityExpr::parse("-2*3 + 1").unwrap();
        assert_eq!(e.value(0.0, 0.0), -5.0);
        let e = IntensityExpr::parse("2*(3 + t)").unwrap();
        assert_eq!(e.value(1.0, 0.0), 8.0);
        assert_eq!(e.to_string(), "2*(3 + t)");
        let e = IntensityExpr::parse("1.5e-2 * t").unwrap();
        assert_eq!(e.to_string(), "0.015*t");
    }

    #[test]
    fn markov_mu12_at_twenty() {
        // Hand evaluation: 0.09 + 0.036 + 0.045*sin(10).
        let e = IntensityExpr::parse("0.9*(0.1 + 0.002*t + 0.05*sin(t/2))").unwrap();
        let expected = 0.126 + 0.045 * 10f64.sin();
        let v = e.eval(20.0, None).unwrap();
        assert!((v - expected).abs() < 1e-15);
        assert!((v - 0.101519).abs() < 5e-7);
    }

    #[test]
    fn semi_markov_mu23_hand_value() {
        let e = IntensityExpr::parse(MU23_SEMI).unwrap();
        // 0.09 + 0.001*10*1.4 + 0.2/(1 + e^0) = 0.204
        let v = e.eval(10.0, Some(4.0)).unwrap();
        assert!((v - 0.204).abs() < 1e-15);
        assert_eq!(e.eval(10.0, None), Err(EvalError::MissingDuration));
    }

    #[test]
    fn constant_and_negative_evaluation() {
        let e = IntensityExpr::parse("0.1").unwrap();
        assert_eq!(e.eval(3.0, None).unwrap(), 0.1);
        assert_eq!(e.eval(3.0, Some(1.0)).unwrap(), 0.1);
        let e = IntensityExpr::parse("0.1 - 0.01*t").unwrap();
        assert!(matches!(e.eval(20.0, None), Err(EvalError::Negative { .. })));
        let e = IntensityExpr::parse("1/t").unwrap();
        assert!(matches!(e.eval(0.0, None), Err(EvalError::NonFinite { .. })));
    }

    #[test]
    fn upper_bound_examples() {
        let c = IntensityExpr::parse("0.1").unwrap();
        let b = c.local_upper_bound(3.0, 7.0, 0.0, 1.0).unwrap();
        assert!((b - 0.12).abs() < 1e-15);
        let lin = IntensityExpr::parse("t").unwrap();
        assert!((lin.local_upper_bound(0.0, 2.0, 0.0, 0.0).unwrap() - 2.4).abs() < 1e-15);
        let zero = IntensityExpr::parse("0*t").unwrap();
        assert_eq!(zero.local_upper_bound(0.0, 1.0, 0.0, 0.0).unwrap(), 0.0);
        assert!(lin.local_upper_bound(2.0, 2.0, 0.0, 0.0).is_err());
        let pole = IntensityExpr::parse("1/(t - 1)").unwrap();
        assert!(matches!(
            pole.local_upper_bound(0.0, 2.0, 0.0, 0.0),
            Err(BoundError::NonFinite { .. })
        ));
    }

    #[test]
    fn upper_bound_dominates_dense_scan_for_total_exit_intensity() {
        let lambda1 = IntensityExpr::parse("0.1 + 0.002*t + 0.05*sin(t/2)").unwrap();
        let bound = lambda1.local_upper_bound(0.0, 40.0, 0.0, 0.0).unwrap();
        // Oracle: a 10^4-point scan of the closed form.
        let sup = (0..=10_000)
            .map(|i| {
                let t = 40.0 * i as f64 / 10_000.0;
                0.1 + 0.002 * t + 0.05 * (t / 2.0).sin()
            })
            .fold(f64::NEG_INFINITY, f64::max);
        // Dense-scan supremum sits at the right endpoint, lambda1(40) = 0.225647...
        assert!((sup - 0.225_647).abs() < 1e-6);
        assert!(bound >= sup);
        assert!(bound <= 1.2 * (0.1 + 0.08 + 0.05));
    }

    fn arb_expr() -> impl Strategy<Value = Expr> {
        let leaf = prop_oneof![
            (0u32..10_000).prop_map(|k| Expr::Const(k as f64 / 100.0)),
            Just(Expr::Var(Var::T)),
            Just(Expr::Var(Var::U)),
        ];
        leaf.prop_recursive(5, 48, 2, |inner| {
            let op = prop_oneof![
                Just(BinOp::Add),
                Just(BinOp::Sub),
                Just(BinOp::Mul),
                Just(BinOp::Div)
            ];
            let func = prop_oneof![
                Just(Func::Sin),
                Just(Func::Cos),
                Just(Func::Exp),
                Just(Func::Log)
            ];
            prop_oneof![
                inner.clone().prop_map(Expr::neg),
                (func, inner.clone()).prop_map(|(f, e)| Expr::call(f, e)),
                (op, inner.clone(), inner).prop_map(|(op, a, b)| Expr::binary(op, a, b)),
            ]
        })
    }

    proptest! {
        #[test]
        fn print_then_parse_is_identity(ast in arb_expr()) {
            let printed = ast.to_string();
            let reparsed = IntensityExpr::parse(&printed).unwrap();
            prop_assert_eq!(reparsed.ast(), &ast);
            prop_assert_eq!(reparsed.to_string(), printed);
        }

        #[test]
        fn evaluation_is_bit_deterministic(ast in arb_expr(), t in 0.0f64..40.0, u in 0.0f64..40.0) {
            let e = IntensityExpr::from_ast(ast);
            prop_assert_eq!(e.value(t, u).to_bits(), e.value(t, u).to_bits());
        }

        #[test]
        fn bound_dominates_random_points(
            t_lo in 0.0f64..35.0,
            width in 0.05f64..5.0,
            u_lo in 0.0f64..20.0,
            u_width in 0.0f64..5.0,
            seed in any::<u64>(),
        ) {
            use rand::{Rng, SeedableRng};
            let exprs = [
                "0.1 + 0.002*t + 0.05*sin(t/2)",
                "0.09 + 0.001*t*(1 + 0.1*u) + 0.2/(1 + exp(0.5*(u - 4)))",
                "0.01 + 0.0002*t",
                "0.3*exp(-0.2*u) + 0.05*cos(t)*cos(t)",
            ];
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
            for text in exprs {
                let e = IntensityExpr::parse(text).unwrap();
                let t_hi = t_lo + width;
                let u_hi = u_lo + u_width;
                let b = e.local_upper_bound(t_lo, t_hi, u_lo, u_hi).unwrap();
                for _ in 0..1000 {
                    let t = rng.random_range(t_lo..=t_hi);
                    let u = if e.uses_duration() { rng.random_range(u_lo..=u_hi) } else { u_lo };
                    prop_assert!(b >= e.value(t, u));
                }
            }
        }
    }
}
