//! Conditional samplers.
//!
//! Two interfaces are used by the test drivers:
//!
//! - [`ConditionalSampler`] draws one concept given the values of all others
//!   (the resampling step of the conditional test).
//! - [`SubsetSampler`] fixes the values of a subset of concepts and then
//!   produces model inputs (concept vectors or embeddings) from the induced
//!   conditional (the local test draws from two such conditionals).
//!
//! The nonparametric samplers weight each dataset row by a Gaussian kernel of
//! its distance to the conditioning point, with the kernel width tuned to reach
//! a target effective sample size, and then perform a smoothed bootstrap.

use alloc::vec::Vec;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::Rng;
use rand_distr::StandardNormal;

use crate::{Error, Matrix, Result};

/// Draws a replacement value for one concept given the remaining concepts.
pub trait ConditionalSampler {
    fn sample_zj<R: Rng + ?Sized>(&self, zrest: &[f64], rng: &mut R) -> Result<f64>;
}

/// A conditional distribution fixed by [`SubsetSampler::condition`].
pub trait ConditionalDraw {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>>;
}

/// Samplers of model inputs given the values of a subset of concepts.
pub trait SubsetSampler {
    type Conditional<'a>: ConditionalDraw
    where
        Self: 'a;

    /// Prepares the conditional for `subset` (concept indices) set to `values`.
    fn condition<'a>(&'a self, subset: &[usize], values: &[f64]) -> Result<Self::Conditional<'a>>;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianConditionalParams {
    pub mu1: f64,
    pub sigma1: f64,
    pub sigma3: f64,
}

/// Mean and variance of `Z1 | Z3 = z3` when `Z1 ~ N(mu1, sigma1^2)` and
/// `Z3 | Z1 ~ N(Z1, sigma3^2)`.
pub fn gaussian_conditional(params: &GaussianConditionalParams, z3: f64) -> (f64, f64) {
    let v1 = params.sigma1 * params.sigma1;
    let v3 = params.sigma3 * params.sigma3;
    let mean = v1 / (v1 + v3) * z3 + v3 / (v1 + v3) * params.mu1;
    let var = 1.0 / (1.0 / v1 + 1.0 / v3);
    (mean, var)
}

/// Default effective sample size of the weighted KDE.
pub const DEFAULT_TARGET_NEFF: f64 = 2000.0;

const LOG_NU_MIN: f64 = -13.815_510_557_964_274; // ln 1e-6
const LOG_NU_MAX: f64 = 13.815_510_557_964_274; // ln 1e6
const MAX_BISECTIONS: usize = 200;
const NEFF_TOLERANCE: f64 = 0.01;

/// `(sum w)^2 / sum w^2`.
pub fn effective_sample_size(weights: &[f64]) -> f64 {
    let s: f64 = weights.iter().sum();
    let s2: f64 = weights.iter().map(|w| w * w).sum();
    if s2 > 0.0 {
        s * s / s2
    } else {
        0.0
    }
}

/// Weights `exp(-(d_i - d_min) / (2 nu^2))`; shifting by the smallest squared
/// distance leaves normalized weights unchanged and keeps the largest at 1.
fn shifted_weights(sq_dists: &[f64], min_sq: f64, nu: f64, out: &mut Vec<f64>) {
    let scale = -0.5 / (nu * nu);
    out.clear();
    out.extend(sq_dists.iter().map(|&d| libm::exp((d - min_sq) * scale)));
}

/// Result of tuning the weight kernel for one conditioning point.
#[derive(Debug, Clone, PartialEq)]
pub struct KdeFit {
    pub nu: f64,
    pub n_eff: f64,
    /// Normalized row weights.
    pub weights: Vec<f64>,
}

/// Tunes `nu` so that the effective sample size of the row weights is within
/// 1% of `min(target, n)`, by bisection on `ln nu` over `[1e-6, 1e6]`.
///
/// `sq_dists[i]` is the squared distance of row `i` to the conditioning point.
pub fn fit_weights(sq_dists: &[f64], target: f64) -> Result<KdeFit> {
    let n = sq_dists.len();
    if n == 0 {
        return Err(Error::invalid("data", "must contain at least one row"));
    }
    if target.is_nan() || target <= 1.0 {
        return Err(Error::invalid("target_neff", "must be greater than 1"));
    }
    if sq_dists.iter().any(|d| !d.is_finite()) {
        return Err(Error::OutsideSupport);
    }
    let goal = target.min(n as f64);
    let min_sq = sq_dists.iter().copied().fold(f64::INFINITY, f64::min);
    let mut w = Vec::with_capacity(n);
    let neff_at = |log_nu: f64, w: &mut Vec<f64>| {
        shifted_weights(sq_dists, min_sq, libm::exp(log_nu), w);
        effective_sample_size(w)
    };
    let close = |neff: f64| libm::fabs(neff - goal) <= NEFF_TOLERANCE * goal;

    let mut lo = LOG_NU_MIN;
    let mut hi = LOG_NU_MAX;
    let mut log_nu = hi;
    let mut neff = neff_at(hi, &mut w);
    if neff > goal && !close(neff) {
        let low_neff = neff_at(lo, &mut w);
        if low_neff >= goal || close(low_neff) {
            log_nu = lo;
            neff = low_neff;
        } else {
            for _ in 0..MAX_BISECTIONS {
                log_nu = 0.5 * (lo + hi);
                neff = neff_at(log_nu, &mut w);
                if close(neff) {
                    break;
                }
                if neff < goal {
                    lo = log_nu;
                } else {
                    hi = log_nu;
                }
            }
        }
    }
    let nu = libm::exp(log_nu);
    // raw weights must not all underflow
    let scale = -0.5 / (nu * nu);
    if !sq_dists.iter().any(|&d| libm::exp(d * scale) > 0.0) {
        return Err(Error::OutsideSupport);
    }
    shifted_weights(sq_dists, min_sq, nu, &mut w);
    let total: f64 = w.iter().sum();
    for x in w.iter_mut() {
        *x /= total;
    }
    Ok(KdeFit {
        nu,
        n_eff: neff,
        weights: w,
    })
}

fn weighted_std(weights: &[f64], values: impl Iterator<Item = f64> + Clone) -> f64 {
    let mean: f64 = weights.iter().zip(values.clone()).map(|(w, v)| w * v).sum();
    let var: f64 = weights
        .iter()
        .zip(values)
        .map(|(w, v)| w * (v - mean) * (v - mean))
        .sum();
    libm::sqrt(var.max(0.0))
}

fn check_subset(subset: &[usize], values: &[f64], m: usize) -> Result<()> {
    if subset.len() != values.len() {
        return Err(Error::DimensionMismatch {
            expected: subset.len(),
            found: values.len(),
        });
    }
    for (k, &c) in subset.iter().enumerate() {
        if c >= m {
            return Err(Error::IndexOutOfRange { index: c, len: m });
        }
        if subset[..k].contains(&c) {
            return Err(Error::invalid("subset", "indices must be distinct"));
        }
    }
    Ok(())
}

/// Smoothed weighted bootstrap over a matrix of concept values.
#[derive(Debug, Clone)]
pub struct WeightedKdeSampler {
    data: Matrix,
    target_neff: f64,
    smoothing: bool,
}

impl WeightedKdeSampler {
    pub fn new(data: Matrix, target_neff: f64) -> Result<Self> {
        if data.rows() < 1 || data.cols() < 1 {
            return Err(Error::invalid("data", "must be a nonempty matrix"));
        }
        if target_neff.is_nan() || target_neff <= 1.0 {
            return Err(Error::invalid("target_neff", "must be greater than 1"));
        }
        Ok(WeightedKdeSampler {
            data,
            target_neff,
            smoothing: true,
        })
    }

    /// Turns the Scott-rule jitter on or off (on by default).
    pub fn with_smoothing(mut self, smoothing: bool) -> Self {
        self.smoothing = smoothing;
        self
    }

    pub fn data(&self) -> &Matrix {
        &self.data
    }

    pub fn target_neff(&self) -> f64 {
        self.target_neff
    }

    fn sq_dists(&self, subset: &[usize], values: &[f64]) -> Vec<f64> {
        self.data
            .iter_rows()
            .map(|row| {
                subset
                    .iter()
                    .zip(values)
                    .map(|(&c, &v)| (row[c] - v) * (row[c] - v))
                    .sum()
            })
            .collect()
    }

    /// Kernel width reaching the target effective sample size at `values` of the
    /// coordinates in `subset`.
    pub fn fit_bandwidth_for_neff(
        &self,
        subset: &[usize],
        values: &[f64],
        target: f64,
    ) -> Result<f64> {
        check_subset(subset, values, self.data.cols())?;
        fit_weights(&self.sq_dists(subset, values), target).map(|f| f.nu)
    }

    /// Row weights and kernel width for a conditioning point.
    pub fn fit(&self, subset: &[usize], values: &[f64]) -> Result<KdeFit> {
        check_subset(subset, values, self.data.cols())?;
        fit_weights(&self.sq_dists(subset, values), self.target_neff)
    }

    /// Prepares `P(Z | Z_subset = values)`.
    pub fn conditional(&self, subset: &[usize], values: &[f64]) -> Result<KdeConditional<'_>> {
        let fit = self.fit(subset, values)?;
        let m = self.data.cols();
        let mut fixed = alloc::vec![None; m];
        for (&c, &v) in subset.iter().zip(values) {
            fixed[c] = Some(v);
        }
        let shrink = libm::pow(fit.n_eff.max(1.0), -0.2);
        let noise = (0..m)
            .map(|k| {
                if fixed[k].is_some() || !self.smoothing {
                    0.0
                } else {
                    weighted_std(
                        &fit.weights,
                        (0..self.data.rows()).map(|i| self.data.get(i, k)),
                    ) * shrink
                }
            })
            .collect();
        let index = WeightedIndex::new(&fit.weights).map_err(|_| Error::OutsideSupport)?;
        Ok(KdeConditional {
            data: &self.data,
            fixed,
            noise,
            index,
            fit,
        })
    }

    /// Draws concept `j` given all other concepts (`zrest` in index order, `j` skipped).
    pub fn sample_zj_given_rest<R: Rng + ?Sized>(
        &self,
        j: usize,
        zrest: &[f64],
        rng: &mut R,
    ) -> Result<f64> {
        let m = self.data.cols();
        if j >= m {
            return Err(Error::IndexOutOfRange { index: j, len: m });
        }
        let subset: Vec<usize> = (0..m).filter(|&k| k != j).collect();
        let cond = self.conditional(&subset, zrest)?;
        Ok(cond.draw_row(rng)[j])
    }

    /// Draws a full concept vector with the coordinates in `subset` fixed to `values`.
    pub fn sample_full_z_given_subset<R: Rng + ?Sized>(
        &self,
        subset: &[usize],
        values: &[f64],
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        Ok(self.conditional(subset, values)?.draw_row(rng))
    }

    /// Binds the sampler to concept `j` for use in the conditional test.
    pub fn for_concept(&self, j: usize) -> Result<KdeConceptSampler<'_>> {
        if j >= self.data.cols() {
            return Err(Error::IndexOutOfRange {
                index: j,
                len: self.data.cols(),
            });
        }
        Ok(KdeConceptSampler { kde: self, j })
    }
}

impl SubsetSampler for WeightedKdeSampler {
    type Conditional<'a> = KdeConditional<'a>;

    fn condition<'a>(&'a self, subset: &[usize], values: &[f64]) -> Result<KdeConditional<'a>> {
        self.conditional(subset, values)
    }
}

/// A fitted KDE conditional; drawing is cheap once this is built.
#[derive(Debug, Clone)]
pub struct KdeConditional<'a> {
    data: &'a Matrix,
    fixed: Vec<Option<f64>>,
    noise: Vec<f64>,
    index: WeightedIndex<f64>,
    fit: KdeFit,
}

impl KdeConditional<'_> {
    pub fn fit(&self) -> &KdeFit {
        &self.fit
    }

    /// Scott-rule jitter scale per coordinate (0 on fixed coordinates).
    pub fn noise_scales(&self) -> &[f64] {
        &self.noise
    }

    /// Weighted mean of coordinate `k` (the conditional mean implied by the KDE).
    pub fn mean(&self, k: usize) -> f64 {
        match self.fixed[k] {
            Some(v) => v,
            None => self
                .fit
                .weights
                .iter()
                .zip(self.data.iter_rows())
                .map(|(w, r)| w * r[k])
                .sum(),
        }
    }

    /// Samples a row index and returns it with the smoothed row.
    pub fn draw_indexed<R: Rng + ?Sized>(&self, rng: &mut R) -> (usize, Vec<f64>) {
        let i = self.index.sample(rng);
        let row = self.data.row(i);
        let z = self
            .fixed
            .iter()
            .zip(&self.noise)
            .zip(row)
            .map(|((fixed, &s), &x)| match fixed {
                Some(v) => *v,
                None if s > 0.0 => {
                    let g: f64 = rng.sample(StandardNormal);
                    x + s * g
                }
                None => x,
            })
            .collect();
        (i, z)
    }

    pub fn draw_row<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.draw_indexed(rng).1
    }
}

impl ConditionalDraw for KdeConditional<'_> {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        Ok(self.draw_row(rng))
    }
}

/// [`WeightedKdeSampler`] restricted to resampling one concept.
#[derive(Debug, Clone, Copy)]
pub struct KdeConceptSampler<'a> {
    kde: &'a WeightedKdeSampler,
    j: usize,
}

impl ConditionalSampler for KdeConceptSampler<'_> {
    fn sample_zj<R: Rng + ?Sized>(&self, zrest: &[f64], rng: &mut R) -> Result<f64> {
        self.kde.sample_zj_given_rest(self.j, zrest, rng)
    }
}

/// Index of the row of `data` closest to `target`, lowest index on ties.
pub fn nearest_row(data: &Matrix, target: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (i, row) in data.iter_rows().enumerate() {
        let d: f64 = row.iter().zip(target).map(|(a, b)| (a - b) * (a - b)).sum();
        if d < best_d {
            best_d = d;
            best = i;
        }
    }
    best
}

/// Draws dataset embeddings whose concept values follow a KDE conditional.
#[derive(Debug, Clone)]
pub struct EmbeddingSampler {
    embeddings: Matrix,
    kde: WeightedKdeSampler,
}

impl EmbeddingSampler {
    pub fn new(embeddings: Matrix, kde: WeightedKdeSampler) -> Result<Self> {
        if embeddings.rows() != kde.data().rows() {
            return Err(Error::DimensionMismatch {
                expected: kde.data().rows(),
                found: embeddings.rows(),
            });
        }
        Ok(EmbeddingSampler { embeddings, kde })
    }

    pub fn embeddings(&self) -> &Matrix {
        &self.embeddings
    }

    pub fn kde(&self) -> &WeightedKdeSampler {
        &self.kde
    }

    /// Draws concept values from the conditional, then returns the index of the
    /// dataset row whose concepts are nearest to them.
    pub fn sample_index_given_zc<R: Rng + ?Sized>(
        &self,
        subset: &[usize],
        values: &[f64],
        rng: &mut R,
    ) -> Result<usize> {
        let cond = self.condition(subset, values)?;
        cond.draw_index(rng)
    }

    pub fn sample_embedding_given_zc<R: Rng + ?Sized>(
        &self,
        subset: &[usize],
        values: &[f64],
        rng: &mut R,
    ) -> Result<Vec<f64>> {
        let i = self.sample_index_given_zc(subset, values, rng)?;
        Ok(self.embeddings.row(i).to_vec())
    }
}

impl SubsetSampler for EmbeddingSampler {
    type Conditional<'a> = EmbeddingConditional<'a>;

    fn condition<'a>(
        &'a self,
        subset: &[usize],
        values: &[f64],
    ) -> Result<EmbeddingConditional<'a>> {
        Ok(EmbeddingConditional {
            embeddings: &self.embeddings,
            concepts: self.kde.data(),
            inner: self.kde.conditional(subset, values)?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct EmbeddingConditional<'a> {
    embeddings: &'a Matrix,
    concepts: &'a Matrix,
    inner: KdeConditional<'a>,
}

impl EmbeddingConditional<'_> {
    pub fn draw_index<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<usize> {
        let z = self.inner.draw_row(rng);
        Ok(nearest_row(self.concepts, &z))
    }
}

impl ConditionalDraw for EmbeddingConditional<'_> {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        let i = self.draw_index(rng)?;
        Ok(self.embeddings.row(i).to_vec())
    }
}

/// Uniform draws among rows whose binary concepts match the conditioning vector.
#[derive(Debug, Clone)]
pub struct BinaryMatchSampler {
    embeddings: Matrix,
    concepts: Matrix,
}

impl BinaryMatchSampler {
    pub fn new(embeddings: Matrix, concepts: Matrix) -> Result<Self> {
        if embeddings.rows() != concepts.rows() {
            return Err(Error::DimensionMismatch {
                expected: concepts.rows(),
                found: embeddings.rows(),
            });
        }
        if concepts.as_slice().iter().any(|&v| v != 0.0 && v != 1.0) {
            return Err(Error::invalid("concepts", "entries must be 0 or 1"));
        }
        Ok(BinaryMatchSampler {
            embeddings,
            concepts,
        })
    }

    /// Rows whose concepts in `subset` equal `values`.
    pub fn matching_rows(&self, subset: &[usize], values: &[f64]) -> Result<Vec<usize>> {
        check_subset(subset, values, self.concepts.cols())?;
        let rows: Vec<usize> = self
            .concepts
            .iter_rows()
            .enumerate()
            .filter(|(_, r)| subset.iter().zip(values).all(|(&c, &v)| r[c] == v))
            .map(|(i, _)| i)
            .collect();
        if rows.is_empty() {
            return Err(Error::NoMatchingRows);
        }
        Ok(rows)
    }
}

/// Draws one embedding uniformly among the rows matching `values` on `subset`.
pub fn sample_matching_binary<R: Rng + ?Sized>(
    sampler: &BinaryMatchSampler,
    subset: &[usize],
    values: &[f64],
    rng: &mut R,
) -> Result<Vec<f64>> {
    sampler.condition(subset, values)?.draw(rng)
}

impl SubsetSampler for BinaryMatchSampler {
    type Conditional<'a> = MatchConditional<'a>;

    fn condition<'a>(&'a self, subset: &[usize], values: &[f64]) -> Result<MatchConditional<'a>> {
        Ok(MatchConditional {
            embeddings: &self.embeddings,
            rows: self.matching_rows(subset, values)?,
        })
    }
}

#[derive(Debug, Clone)]
pub struct MatchConditional<'a> {
    embeddings: &'a Matrix,
    rows: Vec<usize>,
}

impl MatchConditional<'_> {
    pub fn rows(&self) -> &[usize] {
        &self.rows
    }

    pub fn draw_index<R: Rng + ?Sized>(&self, rng: &mut R) -> usize {
        self.rows[rng.random_range(0..self.rows.len())]
    }
}

impl ConditionalDraw for MatchConditional<'_> {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        Ok(self.embeddings.row(self.draw_index(rng)).to_vec())
    }
}
