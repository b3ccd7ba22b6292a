//! Regularised alternatives to the raw occurrence/exposure estimate for
//! one transition on a time grid: fused LASSO on log-rates and a Poisson
//! deviance regression tree.

pub mod lasso;
pub mod tree;
pub mod tv;

use thiserror::Error;

use crate::oe::OeError;

pub use lasso::{fused_lasso_fit, lasso_path, lasso_to_ratefit, optimality_gap, FusedLassoFit};
pub use tree::{tree_fit, tree_predict, tree_to_ratefit, PoissonTree, Segment, TreeNode, TreeParams};
pub use tv::tv_prox_weighted;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum RegularizedError {
    #[error("occurrence and exposure vectors differ in length or are empty")]
    LengthMismatch,
    #[error("bin {0}: exposure must be finite and >= 0")]
    BadExposure(usize),
    #[error("bin {0}: events recorded without exposure")]
    EventsWithoutExposure(usize),
    #[error("every bin has zero exposure")]
    NoExposure,
    #[error("no events in any bin; the log-rate is unbounded below")]
    NoEvents,
    #[error("penalty must be finite and >= 0, got {0}")]
    BadLambda(f64),
    #[error("invalid tree parameters: {0}")]
    BadTreeParams(&'static str),
    #[error(transparent)]
    Oe(#[from] OeError),
}

pub(crate) fn validate_counts(o: &[u64], e: &[f64]) -> Result<(), RegularizedError> {
    if o.len() != e.len() {
        return Err(RegularizedError::LengthMismatch);
    }
    for (m, (&o, &e)) in o.iter().zip(e).enumerate() {
        if !(e >= 0.0 && e.is_finite()) {
            return Err(RegularizedError::BadExposure(m));
        }
        if e == 0.0 && o > 0 {
            return Err(RegularizedError::EventsWithoutExposure(m));
        }
    }
    Ok(())
}
