//! Kernel evaluation and data-driven bandwidth selection.
//!
//! All RBF kernels use the convention `k(x, y) = exp(-||x - y||^2 / (2 sigma^2))`.
//! Bandwidths are either fixed or a quantile (linear interpolation between order
//! statistics) of the pairwise Euclidean distances of previously observed points.

use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::Reverse;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KernelFamily {
    Linear,
    Rbf,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum BandwidthRule {
    Fixed(f64),
    /// Quantile `q` in `(0, 1]` of the pairwise distances of the history.
    Quantile(f64),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KernelSpec {
    pub family: KernelFamily,
    pub bandwidth_rule: BandwidthRule,
    /// Used whenever the history is too short or degenerate to give a bandwidth.
    pub fallback_bandwidth: f64,
}

impl KernelSpec {
    pub const DEFAULT_FALLBACK: f64 = 1.0;

    pub fn linear() -> Self {
        KernelSpec {
            family: KernelFamily::Linear,
            bandwidth_rule: BandwidthRule::Quantile(0.5),
            fallback_bandwidth: Self::DEFAULT_FALLBACK,
        }
    }

    /// RBF kernel with the median heuristic.
    pub fn rbf_median() -> Self {
        Self::rbf_quantile(0.5)
    }

    pub fn rbf_quantile(q: f64) -> Self {
        KernelSpec {
            family: KernelFamily::Rbf,
            bandwidth_rule: BandwidthRule::Quantile(q),
            fallback_bandwidth: Self::DEFAULT_FALLBACK,
        }
    }

    pub fn rbf_fixed(sigma: f64) -> Self {
        KernelSpec {
            family: KernelFamily::Rbf,
            bandwidth_rule: BandwidthRule::Fixed(sigma),
            fallback_bandwidth: Self::DEFAULT_FALLBACK,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self.bandwidth_rule {
            BandwidthRule::Fixed(s) if !(s > 0.0 && s.is_finite()) => {
                return Err(Error::invalid(
                    "bandwidth",
                    "fixed bandwidth must be positive",
                ))
            }
            BandwidthRule::Quantile(q) if !(q > 0.0 && q <= 1.0) => {
                return Err(Error::invalid("quantile", "must lie in (0, 1]"))
            }
            _ => {}
        }
        if !(self.fallback_bandwidth > 0.0 && self.fallback_bandwidth.is_finite()) {
            return Err(Error::invalid(
                "fallback_bandwidth",
                "must be positive and finite",
            ));
        }
        Ok(())
    }

    /// Binds a bandwidth to this spec.
    pub fn with_bandwidth(&self, bandwidth: f64) -> Result<Kernel> {
        Kernel::new(self.family, bandwidth)
    }
}

/// A kernel with a fixed bandwidth, ready for evaluation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Kernel {
    family: KernelFamily,
    bandwidth: f64,
    neg_inv_two_var: f64,
}

impl Kernel {
    pub fn new(family: KernelFamily, bandwidth: f64) -> Result<Self> {
        if family == KernelFamily::Rbf && !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(Error::NonPositiveBandwidth(bandwidth));
        }
        Ok(Kernel {
            family,
            bandwidth,
            neg_inv_two_var: -1.0 / (2.0 * bandwidth * bandwidth),
        })
    }

    pub fn family(&self) -> KernelFamily {
        self.family
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    /// Evaluates the kernel on two vectors of equal length (not checked).
    #[inline]
    pub fn eval(&self, x: &[f64], y: &[f64]) -> f64 {
        debug_assert_eq!(x.len(), y.len());
        match self.family {
            KernelFamily::Linear => x.iter().zip(y).map(|(a, b)| a * b).sum(),
            KernelFamily::Rbf => {
                let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b) * (a - b)).sum();
                libm::exp(sq * self.neg_inv_two_var)
            }
        }
    }

    #[inline]
    pub fn eval_scalar(&self, x: f64, y: f64) -> f64 {
        match self.family {
            KernelFamily::Linear => x * y,
            KernelFamily::Rbf => libm::exp((x - y) * (x - y) * self.neg_inv_two_var),
        }
    }
}

/// Evaluates `spec`'s kernel at `(x, y)` with the given bandwidth.
pub fn eval_kernel(spec: &KernelSpec, bandwidth: f64, x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            found: y.len(),
        });
    }
    if x.is_empty() {
        return Err(Error::invalid("x", "vectors must have dimension >= 1"));
    }
    Ok(spec.with_bandwidth(bandwidth)?.eval(x, y))
}

/// Index of the lower order statistic and the interpolation weight for the
/// `q`-quantile of `n` sorted values.
#[inline]
fn quantile_position(q: f64, n: usize) -> (usize, f64) {
    let pos = q * (n - 1) as f64;
    let lo = libm::floor(pos);
    let lo_idx = (lo as usize).min(n - 1);
    (lo_idx, pos - lo)
}

/// `q`-quantile of an ascending slice with linear interpolation. `sorted` must be non-empty.
pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let (lo, frac) = quantile_position(q, sorted.len());
    match sorted.get(lo + 1) {
        Some(&hi) if frac > 0.0 => sorted[lo] + frac * (hi - sorted[lo]),
        _ => sorted[lo],
    }
}

#[inline]
fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    let sq: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    libm::sqrt(sq)
}

fn resolve(spec: &KernelSpec, quantile: Option<f64>) -> f64 {
    match spec.bandwidth_rule {
        BandwidthRule::Fixed(s) => s,
        BandwidthRule::Quantile(_) => match quantile {
            Some(v) if v > 0.0 && v.is_finite() => v,
            _ => spec.fallback_bandwidth,
        },
    }
}

/// Bandwidth from the full set of pairwise distances of `history`.
///
/// Recomputes everything from scratch; [`BandwidthTracker`] gives the same
/// value incrementally.
pub fn bandwidth_from_history<P: AsRef<[f64]>>(spec: &KernelSpec, history: &[P]) -> f64 {
    let q = match spec.bandwidth_rule {
        BandwidthRule::Fixed(s) => return s,
        BandwidthRule::Quantile(q) => q,
    };
    if history.len() < 2 {
        return spec.fallback_bandwidth;
    }
    let mut dists = Vec::with_capacity(history.len() * (history.len() - 1) / 2);
    for (i, a) in history.iter().enumerate() {
        for b in &history[i + 1..] {
            dists.push(euclidean(a.as_ref(), b.as_ref()));
        }
    }
    dists.sort_unstable_by(f64::total_cmp);
    resolve(spec, Some(quantile_sorted(&dists, q)))
}

/// Running `q`-quantile of a growing multiset of non-negative values.
///
/// Two heaps split the values at the lower order statistic of the quantile
/// position: `lower` holds exactly that many smallest values, so each insertion
/// costs `O(log n)`. Values are keyed by their bit pattern, which orders
/// non-negative finite floats correctly.
#[derive(Debug, Clone)]
pub struct QuantileTracker {
    q: f64,
    lower: BinaryHeap<u64>,
    upper: BinaryHeap<Reverse<u64>>,
}

impl QuantileTracker {
    pub fn new(q: f64) -> Self {
        QuantileTracker {
            q,
            lower: BinaryHeap::new(),
            upper: BinaryHeap::new(),
        }
    }

    pub fn len(&self) -> usize {
        self.lower.len() + self.upper.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn insert(&mut self, value: f64) {
        debug_assert!(value >= 0.0 && value.is_finite());
        // normalizes -0.0
        let key = (value + 0.0).to_bits();
        match self.lower.peek() {
            Some(&top) if key < top => self.lower.push(key),
            _ => self.upper.push(Reverse(key)),
        }
        self.rebalance();
    }

    fn rebalance(&mut self) {
        let n = self.len();
        let target = quantile_position(self.q, n).0 + 1;
        while self.lower.len() > target {
            let v = self.lower.pop().unwrap();
            self.upper.push(Reverse(v));
        }
        while self.lower.len() < target {
            let Reverse(v) = self.upper.pop().unwrap();
            self.lower.push(v);
        }
    }

    /// Current quantile, or `None` when empty.
    pub fn quantile(&self) -> Option<f64> {
        let n = self.len();
        if n == 0 {
            return None;
        }
        let (_, frac) = quantile_position(self.q, n);
        let lo = f64::from_bits(*self.lower.peek()?);
        match self.upper.peek() {
            Some(&Reverse(hi)) if frac > 0.0 => Some(lo + frac * (f64::from_bits(hi) - lo)),
            _ => Some(lo),
        }
    }
}

/// Incrementally maintained bandwidth over a growing history of points.
#[derive(Debug, Clone)]
pub struct BandwidthTracker {
    spec: KernelSpec,
    dim: usize,
    points: Vec<f64>,
    quantile: Option<QuantileTracker>,
}

impl BandwidthTracker {
    pub fn new(spec: KernelSpec, dim: usize) -> Self {
        // Linear kernels never read the bandwidth, so skip the distance bookkeeping.
        let quantile = match (spec.family, spec.bandwidth_rule) {
            (KernelFamily::Rbf, BandwidthRule::Quantile(q)) => Some(QuantileTracker::new(q)),
            _ => None,
        };
        BandwidthTracker {
            spec,
            dim,
            points: Vec::new(),
            quantile,
        }
    }

    pub fn spec(&self) -> &KernelSpec {
        &self.spec
    }

    pub fn push(&mut self, point: &[f64]) {
        debug_assert_eq!(point.len(), self.dim);
        let Some(tracker) = self.quantile.as_mut() else {
            return;
        };
        for prev in self.points.chunks_exact(self.dim.max(1)) {
            tracker.insert(euclidean(prev, point));
        }
        self.points.extend_from_slice(point);
    }

    pub fn bandwidth(&self) -> f64 {
        let q = self.quantile.as_ref().and_then(QuantileTracker::quantile);
        resolve(&self.spec, q)
    }

    /// Kernel bound to the current bandwidth.
    pub fn kernel(&self) -> Kernel {
        let bw = self.bandwidth();
        // resolve() only yields positive finite values for validated specs
        Kernel::new(self.spec.family, bw).expect("validated kernel spec")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_is_dot_product() {
        let v = eval_kernel(&KernelSpec::linear(), 1.0, &[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert_eq!(v, 11.0);
    }

    #[test]
    fn rbf_identity_and_half() {
        let spec = KernelSpec::rbf_fixed(1.0);
        assert_eq!(eval_kernel(&spec, 1.0, &[0.7], &[0.7]).unwrap(), 1.0);
        let x = libm::sqrt(2.0 * core::f64::consts::LN_2);
        let v = eval_kernel(&spec, 1.0, &[0.0], &[x]).unwrap();
        assert!((v - 0.5).abs() < 1e-15);
    }

    #[test]
    fn kernel_errors() {
        let spec = KernelSpec::rbf_median();
        assert!(matches!(
            eval_kernel(&spec, 1.0, &[1.0], &[1.0, 2.0]),
            Err(Error::DimensionMismatch { .. })
        ));
        assert!(matches!(
            eval_kernel(&spec, 0.0, &[1.0], &[1.0]),
            Err(Error::NonPositiveBandwidth(_))
        ));
        assert!(matches!(
            eval_kernel(&spec, -2.0, &[1.0], &[1.0]),
            Err(Error::NonPositiveBandwidth(_))
        ));
        // linear kernels ignore the bandwidth
        assert!(eval_kernel(&KernelSpec::linear(), 0.0, &[1.0], &[1.0]).is_ok());
    }

    #[test]
    fn spec_validation() {
        assert!(KernelSpec::rbf_quantile(0.0).validate().is_err());
        assert!(KernelSpec::rbf_quantile(1.2).validate().is_err());
        assert!(KernelSpec::rbf_quantile(1.0).validate().is_ok());
        assert!(KernelSpec::rbf_fixed(-1.0).validate().is_err());
    }

    #[test]
    fn bandwidth_examples() {
        let spec = KernelSpec::rbf_median();
        assert_eq!(bandwidth_from_history(&spec, &[[0.0], [2.0]]), 2.0);
        assert_eq!(bandwidth_from_history(&spec, &[[0.0], [1.0], [3.0]]), 2.0);
        assert_eq!(bandwidth_from_history(&spec, &[[5.0]]), 1.0);
        let empty: [[f64; 1]; 0] = [];
        assert_eq!(bandwidth_from_history(&spec, &empty), 1.0);
        // all points equal: quantile 0 falls back
        assert_eq!(bandwidth_from_history(&spec, &[[1.0], [1.0], [1.0]]), 1.0);
        assert_eq!(
            bandwidth_from_history(&KernelSpec::rbf_fixed(0.3), &[[0.0], [9.0]]),
            0.3
        );
    }

    #[test]
    fn interpolated_quantile() {
        // distances {1, 2, 3}: q = 0.9 -> position 1.8 -> 2.8
        let spec = KernelSpec::rbf_quantile(0.9);
        let v = bandwidth_from_history(&spec, &[[0.0], [1.0], [3.0]]);
        assert!((v - 2.8).abs() < 1e-12);
    }

    #[test]
    fn tracker_matches_recompute_small() {
        let spec = KernelSpec::rbf_quantile(0.9);
        let pts = [[0.0, 1.0], [2.0, -1.0], [0.5, 0.5], [3.0, 3.0], [0.0, 1.0]];
        let mut tracker = BandwidthTracker::new(spec, 2);
        assert_eq!(tracker.bandwidth(), 1.0);
        for k in 0..pts.len() {
            tracker.push(&pts[k]);
            let expected = bandwidth_from_history(&spec, &pts[..=k]);
            assert_eq!(tracker.bandwidth(), expected, "after {} points", k + 1);
        }
    }
}
