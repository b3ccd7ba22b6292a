//! Greedy binary segmentation of a binned rate by Poisson deviance.

use serde::Serialize;

use super::{validate_counts, RegularizedError};
use crate::oe::{normal_quantile, wald, GridSpec, IntervalScale, Method, RateFit, TimeGrid, TransitionFit};

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TreeParams {
    pub max_depth: usize,
    /// Each child of a split needs at least this much exposure.
    pub min_exposure: f64,
    /// Smallest deviance reduction worth a split.
    pub min_gain: f64,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self { max_depth: 4, min_exposure: 1.0, min_gain: 0.0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Segment {
    /// Half-open bin range `[lo, hi)`.
    pub lo: usize,
    pub hi: usize,
    pub occurrence: u64,
    pub exposure: f64,
    pub deviance: f64,
}

impl Segment {
    /// Pooled rate, `None` without exposure.
    pub fn rate(&self) -> Option<f64> {
        (self.exposure > 0.0).then(|| self.occurrence as f64 / self.exposure)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum TreeNode {
    Leaf(Segment),
    Split {
        segment: Segment,
        /// First bin of the right child.
        boundary: usize,
        gain: f64,
        left: Box<TreeNode>,
        right: Box<TreeNode>,
    },
}

impl TreeNode {
    pub fn segment(&self) -> &Segment {
        match self {
            TreeNode::Leaf(s) | TreeNode::Split { segment: s, .. } => s,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PoissonTree {
    pub params: TreeParams,
    pub root: TreeNode,
}

impl PoissonTree {
    /// Leaves from left to right.
    pub fn leaves(&self) -> Vec<&Segment> {
        fn walk<'a>(n: &'a TreeNode, out: &mut Vec<&'a Segment>) {
            match n {
                TreeNode::Leaf(s) => out.push(s),
                TreeNode::Split { left, right, .. } => {
                    walk(left, out);
                    walk(right, out);
                }
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut out);
        out
    }

    /// Split gains in pre-order.
    pub fn gains(&self) -> Vec<f64> {
        fn walk(n: &TreeNode, out: &mut Vec<f64>) {
            if let TreeNode::Split { gain, left, right, .. } = n {
                out.push(*gain);
                walk(left, out);
                walk(right, out);
            }
        }
        let mut out = Vec::new();
        walk(&self.root, &mut out);
        out
    }

    pub fn n_bins(&self) -> usize {
        self.root.segment().hi
    }

    /// Index of the leaf holding bin `m`.
    pub fn leaf_of(&self, m: usize) -> Option<usize> {
        self.leaves().iter().position(|s| s.lo <= m && m < s.hi)
    }

    /// Piecewise-constant rate per bin.
    pub fn bin_rates(&self) -> Vec<Option<f64>> {
        let mut out = vec![None; self.n_bins()];
        for s in self.leaves() {
            let r = s.rate();
            out[s.lo..s.hi].iter_mut().for_each(|v| *v = r);
        }
        out
    }
}

/// Poisson deviance of bins `[lo, hi)` against their pooled rate.
pub fn segment_deviance(o: &[u64], e: &[f64], lo: usize, hi: usize) -> f64 {
    let total_o: u64 = o[lo..hi].iter().sum();
    let total_e: f64 = e[lo..hi].iter().sum();
    if total_e <= 0.0 {
        return 0.0;
    }
    let r = total_o as f64 / total_e;
    let sum: f64 = (lo..hi)
        .map(|m| {
            let fitted = e[m] * r;
            let oi = o[m] as f64;
            let log_term = if o[m] > 0 { oi * (oi / fitted).ln() } else { 0.0 };
            log_term - (oi - fitted)
        })
        .sum();
    (2.0 * sum).max(0.0)
}

fn segment(o: &[u64], e: &[f64], lo: usize, hi: usize) -> Segment {
    Segment {
        lo,
        hi,
        occurrence: o[lo..hi].iter().sum(),
        exposure: e[lo..hi].iter().sum(),
        deviance: segment_deviance(o, e, lo, hi),
    }
}

fn grow(o: &[u64], e: &[f64], lo: usize, hi: usize, depth: usize, p: &TreeParams) -> TreeNode {
    let seg = segment(o, e, lo, hi);
    if depth >= p.max_depth || hi - lo < 2 {
        return TreeNode::Leaf(seg);
    }
    let mut best: Option<(usize, f64)> = None;
    let mut left_e = 0.0;
    for s in lo + 1..hi {
        left_e += e[s - 1];
        let right_e = seg.exposure - left_e;
        if left_e < p.min_exposure || right_e < p.min_exposure {
            continue;
        }
        let gain = seg.deviance - segment_deviance(o, e, lo, s) - segment_deviance(o, e, s, hi);
        // Strict comparison keeps the smallest boundary on ties.
        if best.is_none_or(|(_, g)| gain > g) {
            best = Some((s, gain));
        }
    }
    match best {
        Some((s, gain)) if gain > 0.0 && gain >= p.min_gain => TreeNode::Split {
            segment: seg,
            boundary: s,
            gain,
            left: Box::new(grow(o, e, lo, s, depth + 1, p)),
            right: Box::new(grow(o, e, s, hi, depth + 1, p)),
        },
        _ => TreeNode::Leaf(seg),
    }
}

/// Grows the deviance tree over bins `0..o.len()`.
pub fn tree_fit(o: &[u64], e: &[f64], params: TreeParams) -> Result<PoissonTree, RegularizedError> {
    validate_counts(o, e)?;
    if o.is_empty() {
        return Err(RegularizedError::LengthMismatch);
    }
    if e.iter().sum::<f64>() <= 0.0 {
        return Err(RegularizedError::NoExposure);
    }
    if !(params.min_exposure >= 0.0 && params.min_exposure.is_finite()) {
        return Err(RegularizedError::BadTreeParams("min_exposure must be finite and >= 0"));
    }
    if !(params.min_gain >= 0.0 && params.min_gain.is_finite()) {
        return Err(RegularizedError::BadTreeParams("min_gain must be finite and >= 0"));
    }
    Ok(PoissonTree { params, root: grow(o, e, 0, o.len(), 0, &params) })
}

/// Rate at time `t` on `grid`; `None` outside the grid or in a leaf without
/// exposure.
pub fn tree_predict(tree: &PoissonTree, grid: &TimeGrid, t: f64) -> Option<f64> {
    let m = grid.bin_of(t)?;
    let leaf = tree.leaf_of(m)?;
    tree.leaves()[leaf].rate()
}

/// Rate fit with heuristic per-leaf bands `O_leaf / E_leaf^2`.
pub fn tree_to_ratefit(tree: &PoissonTree, grid: TimeGrid, label: &str, level: f64) -> Result<RateFit, RegularizedError> {
    if grid.bins() != tree.n_bins() {
        return Err(RegularizedError::LengthMismatch);
    }
    let z = normal_quantile(level)?;
    let mut bins = vec![None; grid.bins()];
    for s in tree.leaves() {
        if let Some(rate) = s.rate() {
            let est = wald(rate, s.occurrence as f64 / (s.exposure * s.exposure), s.occurrence as f64, z, IntervalScale::Raw);
            bins[s.lo..s.hi].iter_mut().for_each(|b| *b = Some(est));
        }
    }
    Ok(RateFit {
        grid: GridSpec::Time(grid),
        method: Method::Tree,
        level,
        heuristic: true,
        transitions: vec![TransitionFit { label: label.to_string(), bins }],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn splits_where_the_rate_jumps() {
        let o = [10, 10, 1, 1];
        let e = [10.0; 4];
        let tree = tree_fit(&o, &e, TreeParams { max_depth: 1, min_exposure: 1.0, min_gain: 0.0 }).unwrap();
        let TreeNode::Split { boundary, gain, .. } = &tree.root else { panic!("expected a split") };
        assert_eq!(*boundary, 2);
        // Root deviance 2*(20 ln(20/11) + 2 ln(2/11)); children are exact fits.
        let expected = 2.0 * (20.0 * (20.0f64 / 11.0).ln() + 2.0 * (2.0f64 / 11.0).ln());
        assert!((gain - expected).abs() < 1e-12);
        let rates: Vec<f64> = tree.bin_rates().into_iter().flatten().collect();
        assert_eq!(rates, vec![1.0, 1.0, 0.1, 0.1]);
    }

    #[test]
    fn depth_zero_is_a_single_leaf() {
        let tree = tree_fit(&[1, 5], &[2.0, 2.0], TreeParams { max_depth: 0, ..Default::default() }).unwrap();
        assert_eq!(tree.leaves().len(), 1);
        assert_eq!(tree.bin_rates(), vec![Some(1.5), Some(1.5)]);
    }

    #[test]
    fn homogeneous_data_never_splits() {
        let tree = tree_fit(&[2, 2, 2, 2], &[1.0; 4], TreeParams::default()).unwrap();
        assert_eq!(tree.leaves().len(), 1);
    }

    #[test]
    fn ties_take_the_smallest_boundary() {
        // Symmetric profile: boundaries 1 and 3 give equal gain.
        let tree = tree_fit(&[5, 1, 1, 5], &[1.0; 4], TreeParams { max_depth: 1, min_exposure: 0.5, min_gain: 0.0 }).unwrap();
        let TreeNode::Split { boundary, .. } = tree.root else { panic!("expected a split") };
        assert_eq!(boundary, 1);
    }

    #[test]
    fn exposure_floor_blocks_splits() {
        let p = TreeParams { max_depth: 3, min_exposure: 25.0, min_gain: 0.0 };
        let tree = tree_fit(&[10, 10, 1, 1], &[10.0; 4], p).unwrap();
        assert_eq!(tree.leaves().len(), 1);
    }

    #[test]
    fn zero_exposure_is_rejected() {
        assert!(matches!(tree_fit(&[0, 0], &[0.0, 0.0], TreeParams::default()), Err(RegularizedError::NoExposure)));
    }

    #[test]
    fn ratefit_and_prediction() {
        let tree = tree_fit(&[10, 10, 1, 1], &[10.0; 4], TreeParams::default()).unwrap();
        let grid = TimeGrid::new(0.0, 4.0, 4).unwrap();
        assert_eq!(tree_predict(&tree, &grid, 3.5), Some(0.1));
        assert_eq!(tree_predict(&tree, &grid, 9.0), None);
        let fit = tree_to_ratefit(&tree, grid, "1->2", 0.95).unwrap();
        let b = fit.transitions[0].bins[0].unwrap();
        assert!((b.variance - 20.0 / 400.0).abs() < 1e-15);
    }
}
