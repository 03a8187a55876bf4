//! MMD plug-in payoffs.
//!
//! Each state stores the observations seen before the current round. The witness
//! function `rho` is the difference of two empirical mean embeddings evaluated at a
//! point (simple V-statistic means, no diagonal removal), and the payoff is
//! `tanh` of an anti-symmetric combination of `rho` values, so it has zero
//! conditional mean whenever the two compared samples are exchangeable.
//!
//! Bandwidths are read from the stored history before the new observations are
//! appended, so the payoff of round `t` only depends on data from rounds `< t`.
//! With an empty history every `rho` is zero.

use alloc::vec::Vec;

use crate::kernels::{BandwidthTracker, Kernel, KernelFamily, KernelSpec};
use crate::{Error, Result};

/// Largest magnitude a payoff may take.
///
/// `tanh` rounds to exactly `+-1` for large arguments (possible with linear
/// kernels), which would allow a bet to wipe out the wealth. Clipping is odd, so
/// the payoff stays anti-symmetric.
pub const MAX_PAYOFF: f64 = 1.0 - 1e-12;

#[inline]
pub fn bounded_tanh(x: f64) -> f64 {
    libm::tanh(x).clamp(-MAX_PAYOFF, MAX_PAYOFF)
}

#[inline]
fn mean(sum: f64, n: usize) -> f64 {
    sum / n as f64
}

/// History for the marginal independence test between a response and one concept.
#[derive(Debug, Clone)]
pub struct SkitPayoff {
    ys: Vec<f64>,
    zs: Vec<f64>,
    y_bw: BandwidthTracker,
    z_bw: BandwidthTracker,
}

impl SkitPayoff {
    pub fn new(kernel_y: KernelSpec, kernel_z: KernelSpec) -> Result<Self> {
        kernel_y.validate()?;
        kernel_z.validate()?;
        Ok(SkitPayoff {
            ys: Vec::new(),
            zs: Vec::new(),
            y_bw: BandwidthTracker::new(kernel_y, 1),
            z_bw: BandwidthTracker::new(kernel_z, 1),
        })
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn history(&self) -> (&[f64], &[f64]) {
        (&self.ys, &self.zs)
    }

    pub fn kernel_specs(&self) -> (KernelSpec, KernelSpec) {
        (*self.y_bw.spec(), *self.z_bw.spec())
    }

    /// Current `(response, concept)` bandwidths.
    pub fn bandwidths(&self) -> (f64, f64) {
        (self.y_bw.bandwidth(), self.z_bw.bandwidth())
    }

    fn kernel_sums(&self, ky: &Kernel, kz: &Kernel, y: f64, z: f64) -> (f64, f64, f64) {
        let mut joint = 0.0;
        let mut sy = 0.0;
        let mut sz = 0.0;
        for (&yi, &zi) in self.ys.iter().zip(&self.zs) {
            let a = ky.eval_scalar(yi, y);
            let b = kz.eval_scalar(zi, z);
            joint += a * b;
            sy += a;
            sz += b;
        }
        (joint, sy, sz)
    }

    /// Joint mean embedding minus the product of the marginal embeddings, at `(y, z)`.
    pub fn rho(&self, y: f64, z: f64) -> f64 {
        let n = self.len();
        if n == 0 {
            return 0.0;
        }
        let (joint, sy, sz) = self.kernel_sums(&self.y_bw.kernel(), &self.z_bw.kernel(), y, z);
        mean(joint, n) - mean(sy, n) * mean(sz, n)
    }

    /// Payoff for the pair `(d1, d2)`; their concept values are swapped to
    /// simulate the product of marginals. Both observations are then stored.
    pub fn step_kappa(&mut self, d1: (f64, f64), d2: (f64, f64)) -> f64 {
        let n = self.len();
        let kappa = if n == 0 {
            0.0
        } else {
            let ky = self.y_bw.kernel();
            let kz = self.z_bw.kernel();
            // rho(y_a, z_b) for a, b in {1, 2} from per-point kernel values
            let (mut j11, mut j22, mut j12, mut j21) = (0.0, 0.0, 0.0, 0.0);
            let (mut sy1, mut sy2, mut sz1, mut sz2) = (0.0, 0.0, 0.0, 0.0);
            for (&yi, &zi) in self.ys.iter().zip(&self.zs) {
                let a1 = ky.eval_scalar(yi, d1.0);
                let a2 = ky.eval_scalar(yi, d2.0);
                let b1 = kz.eval_scalar(zi, d1.1);
                let b2 = kz.eval_scalar(zi, d2.1);
                j11 += a1 * b1;
                j22 += a2 * b2;
                j12 += a1 * b2;
                j21 += a2 * b1;
                sy1 += a1;
                sy2 += a2;
                sz1 += b1;
                sz2 += b2;
            }
            let nf = n as f64;
            let rho = |j: f64, sy: f64, sz: f64| j / nf - (sy / nf) * (sz / nf);
            let observed = rho(j11, sy1, sz1) + rho(j22, sy2, sz2);
            let swapped = rho(j12, sy1, sz2) + rho(j21, sy2, sz1);
            bounded_tanh(observed - swapped)
        };
        for (y, z) in [d1, d2] {
            self.ys.push(y);
            self.zs.push(z);
            self.y_bw.push(&[y]);
            self.z_bw.push(&[z]);
        }
        kappa
    }
}

/// History for the conditional test of one concept given the remaining ones.
#[derive(Debug, Clone)]
pub struct CskitPayoff {
    rest_dim: usize,
    ys: Vec<f64>,
    zs: Vec<f64>,
    zs_tilde: Vec<f64>,
    rest: Vec<f64>,
    y_bw: BandwidthTracker,
    z_bw: BandwidthTracker,
    rest_bw: BandwidthTracker,
}

impl CskitPayoff {
    pub fn new(
        kernel_y: KernelSpec,
        kernel_z: KernelSpec,
        kernel_rest: KernelSpec,
        rest_dim: usize,
    ) -> Result<Self> {
        kernel_y.validate()?;
        kernel_z.validate()?;
        kernel_rest.validate()?;
        Ok(CskitPayoff {
            rest_dim,
            ys: Vec::new(),
            zs: Vec::new(),
            zs_tilde: Vec::new(),
            rest: Vec::new(),
            y_bw: BandwidthTracker::new(kernel_y, 1),
            z_bw: BandwidthTracker::new(kernel_z, 1),
            rest_bw: BandwidthTracker::new(kernel_rest, rest_dim),
        })
    }

    pub fn len(&self) -> usize {
        self.ys.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ys.is_empty()
    }

    pub fn rest_dim(&self) -> usize {
        self.rest_dim
    }

    pub fn kernel_specs(&self) -> (KernelSpec, KernelSpec, KernelSpec) {
        (*self.y_bw.spec(), *self.z_bw.spec(), *self.rest_bw.spec())
    }

    /// Current `(response, concept, rest)` bandwidths.
    pub fn bandwidths(&self) -> (f64, f64, f64) {
        (
            self.y_bw.bandwidth(),
            self.z_bw.bandwidth(),
            self.rest_bw.bandwidth(),
        )
    }

    /// Observed triples `(y, z_j, z_rest)` in arrival order.
    pub fn history(&self) -> impl Iterator<Item = (f64, f64, &[f64])> {
        self.ys
            .iter()
            .zip(&self.zs)
            .zip(self.rest.chunks_exact(self.rest_dim.max(1)))
            .map(|((&y, &z), r)| (y, z, r))
    }

    /// Resampled concept values, aligned with [`history`](Self::history).
    pub fn tilde_history(&self) -> &[f64] {
        &self.zs_tilde
    }

    fn check_rest(&self, zrest: &[f64]) -> Result<()> {
        if zrest.len() != self.rest_dim {
            return Err(Error::DimensionMismatch {
                expected: self.rest_dim,
                found: zrest.len(),
            });
        }
        Ok(())
    }

    /// Whether the joint kernel is the plain inner product on `(y, z_j, z_rest)`.
    ///
    /// A product of linear kernels is not linear in the joint vector, so when all
    /// three blocks are linear the joint kernel is the sum of the block inner
    /// products instead. The `y` and `z_rest` terms are shared by both embeddings
    /// and cancel, leaving a witness that only sees the concept marginal.
    pub fn is_joint_linear(&self) -> bool {
        let (a, b, c) = self.kernel_specs();
        [a, b, c].iter().all(|s| s.family == KernelFamily::Linear)
    }

    /// `k_y * k_rest` for every stored point, or all ones for the joint linear kernel.
    fn shared_factors(&self, y: f64, zrest: &[f64]) -> Vec<f64> {
        if self.is_joint_linear() {
            return alloc::vec![1.0; self.len()];
        }
        let ky = self.y_bw.kernel();
        let kr = self.rest_bw.kernel();
        let chunk = self.rest_dim.max(1);
        self.ys
            .iter()
            .zip(self.rest.chunks_exact(chunk))
            .map(|(&yi, ri)| ky.eval_scalar(yi, y) * kr.eval(ri, zrest))
            .collect()
    }

    fn rho_with(&self, factors: &[f64], kz: &Kernel, zj: f64) -> f64 {
        let mut sum = 0.0;
        for ((&f, &zi), &zt) in factors.iter().zip(&self.zs).zip(&self.zs_tilde) {
            sum += f * (kz.eval_scalar(zi, zj) - kz.eval_scalar(zt, zj));
        }
        mean(sum, self.len())
    }

    /// Observed triple embedding minus the resampled triple embedding, at `(y, z_j, z_rest)`.
    pub fn rho(&self, y: f64, zj: f64, zrest: &[f64]) -> Result<f64> {
        self.check_rest(zrest)?;
        if self.is_empty() {
            return Ok(0.0);
        }
        let factors = self.shared_factors(y, zrest);
        Ok(self.rho_with(&factors, &self.z_bw.kernel(), zj))
    }

    /// Payoff comparing the observed concept value with a draw from its
    /// conditional given the rest; then stores both triples.
    pub fn step_kappa(&mut self, y: f64, zj: f64, zrest: &[f64], zj_tilde: f64) -> Result<f64> {
        self.check_rest(zrest)?;
        let kappa = if self.is_empty() {
            0.0
        } else {
            let factors = self.shared_factors(y, zrest);
            let kz = self.z_bw.kernel();
            bounded_tanh(self.rho_with(&factors, &kz, zj) - self.rho_with(&factors, &kz, zj_tilde))
        };
        self.ys.push(y);
        self.zs.push(zj);
        self.zs_tilde.push(zj_tilde);
        self.rest.extend_from_slice(zrest);
        self.y_bw.push(&[y]);
        self.z_bw.push(&[zj]);
        self.rest_bw.push(zrest);
        Ok(kappa)
    }
}

/// History for the local two-sample test between responses with and without
/// the observed concept value.
#[derive(Debug, Clone)]
pub struct XskitPayoff {
    test: Vec<f64>,
    null: Vec<f64>,
    y_bw: BandwidthTracker,
}

impl XskitPayoff {
    pub fn new(kernel_y: KernelSpec) -> Result<Self> {
        kernel_y.validate()?;
        Ok(XskitPayoff {
            test: Vec::new(),
            null: Vec::new(),
            y_bw: BandwidthTracker::new(kernel_y, 1),
        })
    }

    pub fn len(&self) -> usize {
        self.test.len()
    }

    pub fn is_empty(&self) -> bool {
        self.test.is_empty()
    }

    pub fn kernel_spec(&self) -> KernelSpec {
        *self.y_bw.spec()
    }

    /// Bandwidth from the pooled test and null responses.
    pub fn bandwidth(&self) -> f64 {
        self.y_bw.bandwidth()
    }

    pub fn history(&self) -> (&[f64], &[f64]) {
        (&self.test, &self.null)
    }

    fn rho_with(&self, k: &Kernel, y: f64) -> f64 {
        let n = self.len();
        if n == 0 {
            return 0.0;
        }
        let st: f64 = self.test.iter().map(|&t| k.eval_scalar(t, y)).sum();
        let sn: f64 = self.null.iter().map(|&t| k.eval_scalar(t, y)).sum();
        mean(st, n) - mean(sn, n)
    }

    pub fn rho(&self, y: f64) -> f64 {
        self.rho_with(&self.y_bw.kernel(), y)
    }

    pub fn step_kappa(&mut self, y_test: f64, y_null: f64) -> f64 {
        let kappa = if self.is_empty() {
            0.0
        } else {
            let k = self.y_bw.kernel();
            bounded_tanh(self.rho_with(&k, y_test) - self.rho_with(&k, y_null))
        };
        self.test.push(y_test);
        self.null.push(y_null);
        self.y_bw.push(&[y_test]);
        self.y_bw.push(&[y_null]);
        kappa
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rbf1() -> KernelSpec {
        KernelSpec::rbf_fixed(1.0)
    }

    #[test]
    fn skit_empty_and_single() {
        let mut p = SkitPayoff::new(KernelSpec::linear(), KernelSpec::linear()).unwrap();
        assert_eq!(p.rho(0.3, -2.0), 0.0);
        assert_eq!(p.step_kappa((1.0, 2.0), (-3.0, 0.5)), 0.0);
        let mut single = SkitPayoff::new(KernelSpec::linear(), KernelSpec::linear()).unwrap();
        single.ys.push(0.7);
        single.zs.push(-1.3);
        for (y, z) in [(0.0, 1.0), (2.5, -4.0), (-1.0, 3.3)] {
            assert!(single.rho(y, z).abs() < 1e-15);
        }
    }

    #[test]
    fn skit_equal_concepts_give_zero() {
        let mut p = SkitPayoff::new(rbf1(), rbf1()).unwrap();
        p.step_kappa((0.1, 0.2), (0.5, -0.4));
        assert_eq!(p.step_kappa((1.0, 0.3), (-2.0, 0.3)), 0.0);
    }

    #[test]
    fn skit_swap_negates() {
        let mut p = SkitPayoff::new(KernelSpec::rbf_median(), KernelSpec::rbf_median()).unwrap();
        for (a, b) in [((0.1, 0.2), (0.5, -0.4)), ((1.2, 0.9), (-0.3, 0.1))] {
            p.step_kappa(a, b);
        }
        let mut q = p.clone();
        let k1 = p.step_kappa((0.4, 0.8), (-0.2, -0.6));
        let k2 = q.step_kappa((0.4, -0.6), (-0.2, 0.8));
        assert!(k1 != 0.0);
        assert!((k1 + k2).abs() < 1e-15);
    }

    #[test]
    fn cskit_edge_cases() {
        let mut p = CskitPayoff::new(rbf1(), rbf1(), rbf1(), 2).unwrap();
        assert_eq!(p.rho(0.1, 0.2, &[0.3, 0.4]).unwrap(), 0.0);
        assert_eq!(p.step_kappa(0.1, 0.2, &[0.3, 0.4], 0.9).unwrap(), 0.0);
        assert!(matches!(
            p.rho(0.1, 0.2, &[0.3]),
            Err(Error::DimensionMismatch {
                expected: 2,
                found: 1
            })
        ));
        assert!(p.step_kappa(0.1, 0.2, &[0.3, 0.4, 0.5], 0.0).is_err());
        assert_eq!(p.step_kappa(0.5, 0.7, &[0.0, 1.0], 0.7).unwrap(), 0.0);

        let mut q = p.clone();
        let k1 = p.step_kappa(0.2, 0.9, &[0.1, 0.1], -0.4).unwrap();
        let k2 = q.step_kappa(0.2, -0.4, &[0.1, 0.1], 0.9).unwrap();
        assert!(k1 != 0.0);
        assert!((k1 + k2).abs() < 1e-15);
    }

    #[test]
    fn cskit_identical_tilde_history_cancels() {
        let mut p = CskitPayoff::new(rbf1(), rbf1(), rbf1(), 1).unwrap();
        for (y, z) in [(0.1, 0.5), (0.9, -0.2), (0.4, 0.4)] {
            p.step_kappa(y, z, &[z * 0.5], z).unwrap();
        }
        for (y, z, r) in [(0.0, 0.0, 0.0), (1.0, -1.0, 2.0)] {
            assert_eq!(p.rho(y, z, &[r]).unwrap(), 0.0);
        }
    }

    #[test]
    fn cskit_all_linear_is_joint_inner_product() {
        let lin = KernelSpec::linear();
        let mut p = CskitPayoff::new(lin, lin, lin, 2).unwrap();
        assert!(p.is_joint_linear());
        let obs = [(0.3, 1.2, [0.5, -1.0], -0.7), (-2.0, 0.4, [1.5, 0.1], 0.9)];
        for (y, z, r, zt) in obs {
            p.step_kappa(y, z, &r, zt).unwrap();
        }
        let (y, z, r) = (0.8, -0.6, [2.0, 1.0]);
        let joint = |a: (f64, f64, [f64; 2])| a.0 * y + a.1 * z + a.2[0] * r[0] + a.2[1] * r[1];
        let mut want = 0.0;
        for (yi, zi, ri, zti) in obs {
            want += joint((yi, zi, ri)) - joint((yi, zti, ri));
        }
        want /= obs.len() as f64;
        assert!((p.rho(y, z, &r).unwrap() - want).abs() < 1e-12);

        let mixed = CskitPayoff::new(lin, KernelSpec::rbf_median(), lin, 2).unwrap();
        assert!(!mixed.is_joint_linear());
    }

    #[test]
    fn xskit_edge_cases() {
        let mut p = XskitPayoff::new(KernelSpec::rbf_median()).unwrap();
        assert_eq!(p.rho(0.4), 0.0);
        assert_eq!(p.step_kappa(0.1, 0.9), 0.0);
        assert_eq!(p.step_kappa(0.3, 0.3), 0.0);
        // same multiset in both histories
        let mut same = XskitPayoff::new(rbf1()).unwrap();
        same.step_kappa(0.1, 0.2);
        same.step_kappa(0.2, 0.1);
        for y in [-1.0, 0.0, 0.15, 3.0] {
            assert!(same.rho(y).abs() < 1e-15);
        }
    }

    #[test]
    fn bounded_tanh_is_strict() {
        assert!(bounded_tanh(50.0) < 1.0);
        assert!(bounded_tanh(-50.0) > -1.0);
        assert_eq!(bounded_tanh(-3.0), -bounded_tanh(3.0));
    }
}
