//! Exact weighted 1D total-variation denoising,
//!
//! `argmin_x  sum_i w_i/2 (x_i - y_i)^2 + lambda * sum_i |x_{i+1} - x_i|`,
//!
//! by forward dynamic programming over the piecewise-linear derivative of
//! the message functions, followed by back-pointer clamping.

use std::collections::VecDeque;

#[derive(Debug, Clone, Copy)]
struct Knot {
    x: f64,
    da: f64,
    db: f64,
}

/// Solves the weighted TV problem exactly. Weights must be positive.
pub fn tv_prox_weighted(y: &[f64], w: &[f64], lambda: f64) -> Vec<f64> {
    let n = y.len();
    assert_eq!(n, w.len(), "weights and data differ in length");
    if n == 0 {
        return Vec::new();
    }
    if n == 1 || lambda <= 0.0 {
        return y.to_vec();
    }
    // The derivative of the current message is a*x + b left of the first
    // knot; crossing a knot adds (da, db). `right` tracks the coefficients
    // right of the last knot.
    let mut knots: VecDeque<Knot> = VecDeque::with_capacity(2 * n);
    let mut left = (w[0], -w[0] * y[0]);
    let mut right = left;
    let mut lower = vec![0.0; n - 1];
    let mut upper = vec![0.0; n - 1];

    for k in 0..n - 1 {
        // Point where the derivative reaches -lambda.
        let (mut a, mut b) = left;
        while let Some(front) = knots.front() {
            if a * front.x + b > -lambda {
                break;
            }
            a += front.da;
            b += front.db;
            knots.pop_front();
        }
        let lo = (-lambda - b) / a;
        knots.push_front(Knot { x: lo, da: a, db: b + lambda });
        left = (0.0, -lambda);

        // Point where the derivative reaches +lambda.
        let (mut a, mut b) = right;
        while let Some(back) = knots.back() {
            if a * back.x + b < lambda {
                break;
            }
            a -= back.da;
            b -= back.db;
            knots.pop_back();
        }
        let hi = (lambda - b) / a;
        knots.push_back(Knot { x: hi, da: -a, db: lambda - b });
        right = (0.0, lambda);

        lower[k] = lo;
        upper[k] = hi.max(lo);

        let (wa, wb) = (w[k + 1], -w[k + 1] * y[k + 1]);
        left = (left.0 + wa, left.1 + wb);
        right = (right.0 + wa, right.1 + wb);
    }

    // Root of the final derivative.
    let (mut a, mut b) = left;
    for knot in &knots {
        if a * knot.x + b > 0.0 {
            break;
        }
        a += knot.da;
        b += knot.db;
    }
    let mut x = vec![0.0; n];
    x[n - 1] = -b / a;
    for k in (0..n - 1).rev() {
        x[k] = x[k + 1].clamp(lower[k], upper[k]);
    }
    x
}
