use statrs::distribution::{ContinuousCDF, Normal};
use statrs::statistics::Statistics;

/// Kolmogorov-Smirnov distance between the empirical law of `values` and a
/// centred normal with standard deviation `sd`.
pub fn ks_distance_normal(values: &[f64], sd: f64) -> f64 {
    if values.is_empty() || !(sd > 0.0) {
        return 1.0;
    }
    let normal = Normal::new(0.0, sd).expect("positive sd");
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = normal.cdf(x);
            (((i + 1) as f64 / n) - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

/// Sample Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let cov = x.iter().covariance(y.iter());
    cov / (x.iter().std_dev() * y.iter().std_dev())
}

/// Fisher-z interval for a correlation estimated from `n` pairs.
pub fn fisher_interval(r: f64, n: usize, z: f64) -> (f64, f64) {
    if n <= 3 {
        return (-1.0, 1.0);
    }
    let centre = r.clamp(-0.999_999_999, 0.999_999_999).atanh();
    let half = z / ((n - 3) as f64).sqrt();
    ((centre - half).tanh(), (centre + half).tanh())
}

pub(crate) fn mean(x: &[f64]) -> f64 {
    x.iter().mean()
}

/// Unbiased sample variance.
pub(crate) fn variance(x: &[f64]) -> f64 {
    x.iter().variance()
}
