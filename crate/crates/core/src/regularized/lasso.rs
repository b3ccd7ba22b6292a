//! Fused-LASSO penalised Poisson log-likelihood on log-rates.
//!
//! Minimises `sum_m (E_m exp(a_m) - O_m a_m) + lambda * sum_m |a_m - a_{m-1}|`
//! over bins with positive exposure. Bins without exposure are left out and
//! the fusion chain links their nearest included neighbours.
//!
//! The solver is a proximal Newton iteration: the smooth part has a diagonal
//! Hessian, so each subproblem is a weighted TV denoising problem which
//! [`super::tv::tv_prox_weighted`] solves exactly. A backtracking line search
//! on the true objective keeps the iteration monotone.

use serde::Serialize;

use super::tv::tv_prox_weighted;
use super::{validate_counts, RegularizedError};
use crate::oe::{normal_quantile, wald, GridSpec, IntervalScale, Method, RateFit, TimeGrid, TransitionFit};

/// Floor on fitted rates; only reachable at `lambda = 0` for bins with no
/// events.
pub const RATE_FLOOR: f64 = 1e-12;
/// Iteration cap of the outer loop.
pub const MAX_ITERATIONS: usize = 100_000;
/// Required subgradient optimality gap.
pub const GAP_TOLERANCE: f64 = 1e-6;
/// Default relative objective-decrease tolerance.
pub const DEFAULT_TOL: f64 = 1e-10;
/// Consecutive full steps allowed once the objective stops resolving
/// progress.
const MAX_FLAT_STEPS: usize = 50;
/// Adjacent log-rates closer than this are treated as fused.
pub const FUSE_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FusedLassoFit {
    pub lambda: f64,
    /// Log-rate per bin; `None` for bins with zero exposure.
    pub alpha: Vec<Option<f64>>,
    pub objective_value: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Largest violation of the subgradient optimality conditions.
    pub optimality_gap: f64,
}

impl FusedLassoFit {
    pub fn included(&self) -> Vec<f64> {
        self.alpha.iter().flatten().copied().collect()
    }

    pub fn rates(&self) -> Vec<Option<f64>> {
        self.alpha.iter().map(|a| a.map(f64::exp)).collect()
    }

    pub fn total_variation(&self) -> f64 {
        total_variation(&self.included())
    }

    pub fn penalty(&self) -> f64 {
        self.lambda * self.total_variation()
    }

    /// Number of distinct levels: runs of fused neighbours among included bins.
    pub fn degrees_of_freedom(&self) -> usize {
        let a = self.included();
        if a.is_empty() {
            return 0;
        }
        1 + a.windows(2).filter(|p| (p[1] - p[0]).abs() > FUSE_TOLERANCE).count()
    }
}

fn total_variation(a: &[f64]) -> f64 {
    a.windows(2).map(|p| (p[1] - p[0]).abs()).sum()
}

fn smooth_part(a: &[f64], o: &[f64], e: &[f64]) -> f64 {
    a.iter().zip(o).zip(e).map(|((&a, &o), &e)| e * a.exp() - o * a).sum()
}

/// Objective on the included bins.
pub fn objective(a: &[f64], o: &[f64], e: &[f64], lambda: f64) -> f64 {
    smooth_part(a, o, e) + lambda * total_variation(a)
}

/// Largest violation of the optimality conditions. With cumulative
/// gradients `C_m = sum_{i<=m} (E_i e^{a_i} - O_i)`, an optimum has
/// `C_last = 0`, `|C_m| <= lambda` where neighbours are fused and
/// `C_m = lambda * sign(a_{m+1} - a_m)` elsewhere.
pub fn optimality_gap(a: &[f64], o: &[f64], e: &[f64], lambda: f64) -> f64 {
    let mut c = 0.0;
    let mut worst: f64 = 0.0;
    for m in 0..a.len() {
        c += e[m] * a[m].exp() - o[m];
        let v = if m + 1 == a.len() {
            c.abs()
        } else {
            let d = a[m + 1] - a[m];
            if d.abs() <= FUSE_TOLERANCE {
                (c.abs() - lambda).max(0.0)
            } else if d > 0.0 {
                (c - lambda).abs()
            } else {
                (c + lambda).abs()
            }
        };
        worst = worst.max(v);
    }
    worst
}

struct Compressed {
    index: Vec<usize>,
    o: Vec<f64>,
    e: Vec<f64>,
}

fn compress(o: &[u64], e: &[f64]) -> Result<Compressed, RegularizedError> {
    validate_counts(o, e)?;
    let index: Vec<usize> = (0..e.len()).filter(|&m| e[m] > 0.0).collect();
    if index.is_empty() {
        return Err(RegularizedError::NoExposure);
    }
    if index.iter().all(|&m| o[m] == 0) {
        return Err(RegularizedError::NoEvents);
    }
    Ok(Compressed {
        o: index.iter().map(|&m| o[m] as f64).collect(),
        e: index.iter().map(|&m| e[m]).collect(),
        index,
    })
}

fn expand(c: &Compressed, a: &[f64], n_bins: usize) -> Vec<Option<f64>> {
    let mut out = vec![None; n_bins];
    for (&m, &v) in c.index.iter().zip(a) {
        out[m] = Some(v);
    }
    out
}

struct Solution {
    alpha: Vec<f64>,
    objective: f64,
    iterations: usize,
    converged: bool,
    gap: f64,
}

fn solve(o: &[f64], e: &[f64], lambda: f64, tol: f64, start: Vec<f64>) -> Solution {
    let n = o.len();
    if lambda == 0.0 {
        let alpha: Vec<f64> = o
            .iter()
            .zip(e)
            .map(|(&o, &e)| if o > 0.0 { (o / e).ln() } else { RATE_FLOOR.ln() })
            .collect();
        return Solution {
            objective: objective(&alpha, o, e, 0.0),
            gap: optimality_gap(&alpha, o, e, 0.0),
            alpha,
            iterations: 0,
            converged: true,
        };
    }
    let mut alpha = start;
    let mut f = objective(&alpha, o, e, lambda);
    let mut gap = optimality_gap(&alpha, o, e, lambda);
    let mut converged = gap < GAP_TOLERANCE * 1e-3;
    let mut iterations = 0;
    let mut grad = vec![0.0; n];
    let mut hess = vec![0.0; n];
    let mut target = vec![0.0; n];
    let mut flat_steps = 0;
    while !converged && iterations < MAX_ITERATIONS {
        iterations += 1;
        for m in 0..n {
            let mu = e[m] * alpha[m].exp();
            grad[m] = mu - o[m];
            hess[m] = mu.max(f64::MIN_POSITIVE);
            target[m] = alpha[m] - grad[m] / hess[m];
        }
        let proposal = tv_prox_weighted(&target, &hess, lambda);
        let dir: Vec<f64> = proposal.iter().zip(&alpha).map(|(x, a)| x - a).collect();
        let predicted: f64 = grad.iter().zip(&dir).map(|(g, d)| g * d).sum::<f64>()
            + lambda * (total_variation(&proposal) - total_variation(&alpha));
        let max_step = dir.iter().fold(0.0f64, |m, d| m.max(d.abs()));
        if max_step == 0.0 || predicted >= 0.0 {
            break;
        }
        // Below the resolution of the objective the Armijo test is noise;
        // the quadratic model is exact enough to take the full step.
        let resolved = -predicted > 1e-12 * f.abs().max(1.0);
        if !resolved {
            flat_steps += 1;
            if flat_steps > MAX_FLAT_STEPS {
                break;
            }
            let f_new = objective(&proposal, o, e, lambda);
            alpha = proposal;
            f = f_new.min(f);
            gap = optimality_gap(&alpha, o, e, lambda);
            converged = gap < GAP_TOLERANCE;
            continue;
        }
        flat_steps = 0;
        let mut step = if max_step > 20.0 { 20.0 / max_step } else { 1.0 };
        let mut candidate;
        let mut f_new;
        let mut halvings = 0;
        loop {
            candidate = if step == 1.0 {
                proposal.clone()
            } else {
                alpha.iter().zip(&dir).map(|(a, d)| a + step * d).collect()
            };
            f_new = objective(&candidate, o, e, lambda);
            if f_new.is_finite() && f_new <= f + 1e-4 * step * predicted {
                break;
            }
            halvings += 1;
            if halvings > 80 {
                break;
            }
            step *= 0.5;
        }
        if halvings > 80 {
            break;
        }
        let decrease = (f - f_new) / f.abs().max(1.0);
        alpha = candidate;
        f = f_new;
        gap = optimality_gap(&alpha, o, e, lambda);
        converged = gap < GAP_TOLERANCE && decrease < tol;
    }
    converged = converged || gap < GAP_TOLERANCE;
    f = objective(&alpha, o, e, lambda);
    Solution { alpha, objective: f, iterations, converged, gap }
}

fn pooled_start(c: &Compressed) -> Vec<f64> {
    let rate = c.o.iter().sum::<f64>() / c.e.iter().sum::<f64>();
    vec![rate.ln(); c.o.len()]
}

fn check_lambda(lambda: f64) -> Result<(), RegularizedError> {
    if lambda.is_finite() && lambda >= 0.0 {
        Ok(())
    } else {
        Err(RegularizedError::BadLambda(lambda))
    }
}

/// Fits the fused-LASSO log-rates for one penalty weight.
pub fn fused_lasso_fit(o: &[u64], e: &[f64], lambda: f64, tol: f64) -> Result<FusedLassoFit, RegularizedError> {
    check_lambda(lambda)?;
    let c = compress(o, e)?;
    let sol = solve(&c.o, &c.e, lambda, tol, pooled_start(&c));
    Ok(FusedLassoFit {
        lambda,
        alpha: expand(&c, &sol.alpha, o.len()),
        objective_value: sol.objective,
        iterations: sol.iterations,
        converged: sol.converged,
        optimality_gap: sol.gap,
    })
}

/// Warm-started fits in decreasing-lambda order.
pub fn lasso_path(o: &[u64], e: &[f64], lambdas: &[f64], tol: f64) -> Result<Vec<FusedLassoFit>, RegularizedError> {
    for &l in lambdas {
        check_lambda(l)?;
    }
    let c = compress(o, e)?;
    let mut order = lambdas.to_vec();
    order.sort_by(|a, b| b.total_cmp(a));
    let mut start = pooled_start(&c);
    let mut out = Vec::with_capacity(order.len());
    for lambda in order {
        let sol = solve(&c.o, &c.e, lambda, tol, start.clone());
        if lambda > 0.0 {
            start = sol.alpha.clone();
        }
        out.push(FusedLassoFit {
            lambda,
            alpha: expand(&c, &sol.alpha, o.len()),
            objective_value: sol.objective,
            iterations: sol.iterations,
            converged: sol.converged,
            optimality_gap: sol.gap,
        });
    }
    Ok(out)
}

/// Rate fit with heuristic bands from the local Poisson variance
/// `exp(a_m) / E_m`.
pub fn lasso_to_ratefit(
    fit: &FusedLassoFit,
    exposure: &[f64],
    grid: TimeGrid,
    label: &str,
    level: f64,
) -> Result<RateFit, RegularizedError> {
    if exposure.len() != fit.alpha.len() || grid.bins() != fit.alpha.len() {
        return Err(RegularizedError::LengthMismatch);
    }
    let z = normal_quantile(level)?;
    let bins = fit
        .alpha
        .iter()
        .zip(exposure)
        .map(|(a, &e)| {
            a.map(|a| {
                let rate = a.exp();
                wald(rate, rate / e, rate * e, z, IntervalScale::Raw)
            })
        })
        .collect();
    Ok(RateFit {
        grid: GridSpec::Time(grid),
        method: Method::Lasso,
        level,
        heuristic: true,
        transitions: vec![TransitionFit { label: label.to_string(), bins }],
    })
}
