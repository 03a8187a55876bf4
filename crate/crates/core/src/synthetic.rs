//! Synthetic data-generating processes with known conditionals.
//!
//! - A three-concept Gaussian model with a sigmoid response.
//! - A digit-counting model over six concepts, with an oracle predictor of the
//!   red-threes count standing in for a trained network.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::StandardNormal;

use crate::samplers::{
    gaussian_conditional, ConditionalDraw, ConditionalSampler, GaussianConditionalParams,
    SubsetSampler,
};
use crate::testers::Predictor;
use crate::{Error, Matrix, Result};

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + libm::exp(-x))
}

fn normal<R: Rng + ?Sized>(rng: &mut R, mean: f64, sd: f64) -> f64 {
    let g: f64 = rng.sample(StandardNormal);
    mean + sd * g
}

/// `Z1 ~ N(mu1, sigma1^2)`, `Z2 ~ N(mu2, sigma2^2)`, `Z3 | Z1 ~ N(Z1, sigma3^2)`,
/// `Y = sigmoid(b1 Z1 + b2 Z2 Z3 + b3 Z3) + N(0, sigma0^2)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GaussianDgpParams {
    pub mu1: f64,
    pub sigma1: f64,
    pub mu2: f64,
    pub sigma2: f64,
    pub sigma3: f64,
    pub sigma0: f64,
    pub beta: [f64; 3],
}

impl Default for GaussianDgpParams {
    /// All coefficients default to 1; experiments override the one they vary.
    fn default() -> Self {
        GaussianDgpParams {
            mu1: 1.0,
            sigma1: 1.0,
            mu2: -1.0,
            sigma2: 1.0,
            sigma3: 1.0,
            sigma0: 0.01,
            beta: [1.0, 1.0, 1.0],
        }
    }
}

impl GaussianDgpParams {
    pub fn with_beta(mut self, beta: [f64; 3]) -> Self {
        self.beta = beta;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let sigmas = [self.sigma0, self.sigma1, self.sigma2, self.sigma3];
        if sigmas.iter().all(|&s| s > 0.0 && s.is_finite()) {
            Ok(())
        } else {
            Err(Error::invalid(
                "sigma",
                "standard deviations must be positive",
            ))
        }
    }

    pub fn conditional_params(&self) -> GaussianConditionalParams {
        GaussianConditionalParams {
            mu1: self.mu1,
            sigma1: self.sigma1,
            sigma3: self.sigma3,
        }
    }

    /// One concept vector.
    pub fn sample_z<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 3] {
        let z1 = normal(rng, self.mu1, self.sigma1);
        let z2 = normal(rng, self.mu2, self.sigma2);
        let z3 = normal(rng, z1, self.sigma3);
        [z1, z2, z3]
    }

    /// One `(z, y)` draw.
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> ([f64; 3], f64) {
        let z = self.sample_z(rng);
        let y = gaussian_response(self, &z) + normal(rng, 0.0, self.sigma0);
        (z, y)
    }
}

/// Noiseless response `E[Y | Z = z]`.
pub fn gaussian_response(params: &GaussianDgpParams, z: &[f64]) -> f64 {
    let [b1, b2, b3] = params.beta;
    sigmoid(b1 * z[0] + b2 * z[1] * z[2] + b3 * z[2])
}

/// `n` draws: concepts as an `n x 3` matrix and the responses.
pub fn sample_gaussian_dgp<R: Rng + ?Sized>(
    params: &GaussianDgpParams,
    n: usize,
    rng: &mut R,
) -> Result<(Matrix, Vec<f64>)> {
    params.validate()?;
    let mut z = Matrix::zeros(n, 3);
    let mut y = Vec::with_capacity(n);
    for i in 0..n {
        let (zi, yi) = params.sample(rng);
        z.row_mut(i).copy_from_slice(&zi);
        y.push(yi);
    }
    Ok((z, y))
}

/// The noiseless Gaussian response as a [`Predictor`] on concept vectors.
#[derive(Debug, Clone, Copy)]
pub struct GaussianResponse(pub GaussianDgpParams);

impl Predictor for GaussianResponse {
    fn predict<R: Rng + ?Sized>(&self, input: &[f64], _rng: &mut R) -> f64 {
        gaussian_response(&self.0, input)
    }
}

/// Exact draw of `Z1` given `(z2, z3)`; only `z3` is informative.
#[derive(Debug, Clone, Copy)]
pub struct GaussianZ1Sampler(pub GaussianDgpParams);

impl ConditionalSampler for GaussianZ1Sampler {
    fn sample_zj<R: Rng + ?Sized>(&self, zrest: &[f64], rng: &mut R) -> Result<f64> {
        if zrest.len() != 2 {
            return Err(Error::DimensionMismatch {
                expected: 2,
                found: zrest.len(),
            });
        }
        let (mean, var) = gaussian_conditional(&self.0.conditional_params(), zrest[1]);
        Ok(normal(rng, mean, libm::sqrt(var)))
    }
}

/// Exact draws of the full concept vector with any subset of coordinates fixed.
#[derive(Debug, Clone, Copy)]
pub struct GaussianSubsetSampler(pub GaussianDgpParams);

#[derive(Debug, Clone, Copy)]
pub struct GaussianConditional {
    params: GaussianDgpParams,
    fixed: [Option<f64>; 3],
}

impl SubsetSampler for GaussianSubsetSampler {
    type Conditional<'a> = GaussianConditional;

    fn condition(&self, subset: &[usize], values: &[f64]) -> Result<GaussianConditional> {
        if subset.len() != values.len() {
            return Err(Error::DimensionMismatch {
                expected: subset.len(),
                found: values.len(),
            });
        }
        let mut fixed = [None; 3];
        for (&c, &v) in subset.iter().zip(values) {
            if c >= 3 {
                return Err(Error::IndexOutOfRange { index: c, len: 3 });
            }
            fixed[c] = Some(v);
        }
        Ok(GaussianConditional {
            params: self.0,
            fixed,
        })
    }
}

impl GaussianConditional {
    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 3] {
        let p = &self.params;
        let z2 = self.fixed[1].unwrap_or_else(|| normal(rng, p.mu2, p.sigma2));
        let (z1, z3) = match (self.fixed[0], self.fixed[2]) {
            (Some(z1), Some(z3)) => (z1, z3),
            (Some(z1), None) => (z1, normal(rng, z1, p.sigma3)),
            (None, Some(z3)) => {
                let (mean, var) = gaussian_conditional(&p.conditional_params(), z3);
                (normal(rng, mean, libm::sqrt(var)), z3)
            }
            (None, None) => {
                let z1 = normal(rng, p.mu1, p.sigma1);
                (z1, normal(rng, z1, p.sigma3))
            }
        };
        [z1, z2, z3]
    }
}

impl ConditionalDraw for GaussianConditional {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        Ok(self.sample(rng).to_vec())
    }
}

pub const BLUE_ZEROS: usize = 0;
pub const ORANGE_THREES: usize = 1;
pub const GREEN_FIVES: usize = 2;
pub const RED_THREES: usize = 3;
pub const BLUE_TWOS: usize = 4;
pub const PURPLE_SEVENS: usize = 5;

pub const COUNTING_CONCEPTS: [&str; 6] = [
    "blue zeros",
    "orange threes",
    "green fives",
    "red threes",
    "blue twos",
    "purple sevens",
];

/// Count support of each concept.
const SUPPORT: [&[i64]; 6] = [
    &[0, 1, 2],
    &[0, 1, 2],
    &[1, 2, 3],
    &[2, 3],
    &[1, 2],
    &[1, 2],
];

const FIVES_GIVEN_ZEROS: [[f64; 3]; 3] = [
    [0.75, 0.125, 0.125],
    [0.125, 0.75, 0.125],
    [0.125, 0.125, 0.75],
];

/// Digit-counting model: counts plus independent `U(-0.5, 0.5)` noise.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CountingDgpParams {
    /// Probability of three red threes when `orange * fives >= 3`.
    pub alpha_flip: f64,
}

impl Default for CountingDgpParams {
    fn default() -> Self {
        CountingDgpParams { alpha_flip: 0.9 }
    }
}

fn dither<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    rng.random::<f64>() - 0.5
}

/// Nearest integer count.
pub fn count_of(z: f64) -> i64 {
    libm::round(z) as i64
}

impl CountingDgpParams {
    pub fn validate(&self) -> Result<()> {
        if self.alpha_flip > 0.5 && self.alpha_flip < 1.0 {
            Ok(())
        } else {
            Err(Error::invalid("alpha_flip", "must lie in (0.5, 1)"))
        }
    }

    fn red_probability(&self, orange: i64, fives: i64) -> f64 {
        if orange * fives >= 3 {
            self.alpha_flip
        } else {
            1.0 - self.alpha_flip
        }
    }

    /// Probability of a vector of counts.
    pub fn count_probability(&self, n: &[i64; 6]) -> f64 {
        if !n.iter().zip(SUPPORT).all(|(v, s)| s.contains(v)) {
            return 0.0;
        }
        let p_fives = FIVES_GIVEN_ZEROS[n[BLUE_ZEROS] as usize][(n[GREEN_FIVES] - 1) as usize];
        let p = self.red_probability(n[ORANGE_THREES], n[GREEN_FIVES]);
        let p_red = if n[RED_THREES] == 3 { p } else { 1.0 - p };
        (1.0 / 3.0) * (1.0 / 3.0) * p_fives * p_red * 0.5 * 0.5
    }

    /// One vector of counts.
    pub fn sample_counts<R: Rng + ?Sized>(&self, rng: &mut R) -> [i64; 6] {
        let zeros = rng.random_range(0..3i64);
        let orange = rng.random_range(0..3i64);
        let u: f64 = rng.random();
        let row = &FIVES_GIVEN_ZEROS[zeros as usize];
        let fives = if u < row[0] {
            1
        } else if u < row[0] + row[1] {
            2
        } else {
            3
        };
        let red = 2 + i64::from(rng.random::<f64>() < self.red_probability(orange, fives));
        let twos = rng.random_range(1..3i64);
        let sevens = rng.random_range(1..3i64);
        [zeros, orange, fives, red, twos, sevens]
    }

    /// One concept vector (counts plus noise).
    pub fn sample_z<R: Rng + ?Sized>(&self, rng: &mut R) -> [f64; 6] {
        let n = self.sample_counts(rng);
        let mut z = [0.0; 6];
        for (zi, &ni) in z.iter_mut().zip(&n) {
            *zi = ni as f64 + dither(rng);
        }
        z
    }
}

/// `n` concept vectors as an `n x 6` matrix.
pub fn sample_counting_dgp<R: Rng + ?Sized>(
    params: &CountingDgpParams,
    n: usize,
    rng: &mut R,
) -> Result<Matrix> {
    params.validate()?;
    let mut z = Matrix::zeros(n, 6);
    for i in 0..n {
        z.row_mut(i).copy_from_slice(&params.sample_z(rng));
    }
    Ok(z)
}

fn all_counts() -> impl Iterator<Item = [i64; 6]> {
    let mut out = Vec::with_capacity(216);
    for &a in SUPPORT[0] {
        for &b in SUPPORT[1] {
            for &c in SUPPORT[2] {
                for &d in SUPPORT[3] {
                    for &e in SUPPORT[4] {
                        for &f in SUPPORT[5] {
                            out.push([a, b, c, d, e, f]);
                        }
                    }
                }
            }
        }
    }
    out.into_iter()
}

fn check_given(subset: &[usize], values: &[f64]) -> Result<Vec<(usize, i64)>> {
    if subset.len() != values.len() {
        return Err(Error::DimensionMismatch {
            expected: subset.len(),
            found: values.len(),
        });
    }
    subset
        .iter()
        .zip(values)
        .map(|(&c, &v)| {
            if c >= 6 {
                Err(Error::IndexOutOfRange { index: c, len: 6 })
            } else {
                Ok((c, count_of(v)))
            }
        })
        .collect()
}

/// Posterior over count vectors consistent with the rounded conditioning values.
fn posterior(params: &CountingDgpParams, given: &[(usize, i64)]) -> Result<Vec<([i64; 6], f64)>> {
    let table: Vec<([i64; 6], f64)> = all_counts()
        .filter(|n| given.iter().all(|&(c, v)| n[c] == v))
        .map(|n| (n, params.count_probability(&n)))
        .filter(|&(_, p)| p > 0.0)
        .collect();
    if table.is_empty() {
        return Err(Error::ZeroProbability);
    }
    Ok(table)
}

/// Exact conditional distribution of the count of concept `j`, as `(count, probability)`.
pub fn counting_conditional_distribution(
    params: &CountingDgpParams,
    j: usize,
    subset: &[usize],
    values: &[f64],
) -> Result<Vec<(i64, f64)>> {
    if j >= 6 {
        return Err(Error::IndexOutOfRange { index: j, len: 6 });
    }
    let table = posterior(params, &check_given(subset, values)?)?;
    let total: f64 = table.iter().map(|(_, p)| p).sum();
    Ok(SUPPORT[j]
        .iter()
        .map(|&k| {
            let mass: f64 = table
                .iter()
                .filter(|(n, _)| n[j] == k)
                .map(|(_, p)| p)
                .sum();
            (k, mass / total)
        })
        .collect())
}

fn pick<R: Rng + ?Sized, T: Copy>(items: &[(T, f64)], rng: &mut R) -> T {
    let total: f64 = items.iter().map(|(_, p)| p).sum();
    let mut u = rng.random::<f64>() * total;
    for &(item, p) in items {
        if u < p {
            return item;
        }
        u -= p;
    }
    items[items.len() - 1].0
}

/// Draws concept `j` from its exact conditional given the concepts in `subset`
/// (values are rounded to counts), with uniform dither.
pub fn counting_conditional_sample<R: Rng + ?Sized>(
    params: &CountingDgpParams,
    j: usize,
    subset: &[usize],
    values: &[f64],
    rng: &mut R,
) -> Result<f64> {
    let dist = counting_conditional_distribution(params, j, subset, values)?;
    Ok(pick(&dist, rng) as f64 + dither(rng))
}

/// Exact resampler of one counting concept given the other five (in index order).
#[derive(Debug, Clone, Copy)]
pub struct CountingConceptSampler {
    pub params: CountingDgpParams,
    pub j: usize,
}

impl ConditionalSampler for CountingConceptSampler {
    fn sample_zj<R: Rng + ?Sized>(&self, zrest: &[f64], rng: &mut R) -> Result<f64> {
        let subset: Vec<usize> = (0..6).filter(|&k| k != self.j).collect();
        counting_conditional_sample(&self.params, self.j, &subset, zrest, rng)
    }
}

/// Exact draws of full concept vectors given a subset of concepts.
#[derive(Debug, Clone, Copy, Default)]
pub struct CountingSubsetSampler(pub CountingDgpParams);

#[derive(Debug, Clone)]
pub struct CountingConditional {
    table: Vec<([i64; 6], f64)>,
    fixed: [Option<f64>; 6],
}

impl SubsetSampler for CountingSubsetSampler {
    type Conditional<'a> = CountingConditional;

    fn condition(&self, subset: &[usize], values: &[f64]) -> Result<CountingConditional> {
        let given = check_given(subset, values)?;
        let mut fixed = [None; 6];
        for (&c, &v) in subset.iter().zip(values) {
            fixed[c] = Some(v);
        }
        Ok(CountingConditional {
            table: posterior(&self.0, &given)?,
            fixed,
        })
    }
}

impl ConditionalDraw for CountingConditional {
    fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Result<Vec<f64>> {
        let n = pick(&self.table, rng);
        Ok(n.iter()
            .zip(&self.fixed)
            .map(|(&k, f)| match f {
                Some(v) => *v,
                None => k as f64 + dither(rng),
            })
            .collect())
    }
}

/// Oracle for the red-threes count: `round(z_red) + U(-0.5, 0.5)`.
#[derive(Debug, Clone, Copy, Default)]
pub struct CountingOracle;

pub fn counting_oracle_predictor<R: Rng + ?Sized>(z: &[f64], rng: &mut R) -> f64 {
    libm::round(z[RED_THREES]) + dither(rng)
}

impl Predictor for CountingOracle {
    fn predict<R: Rng + ?Sized>(&self, input: &[f64], rng: &mut R) -> f64 {
        counting_oracle_predictor(input, rng)
    }
}
