//! Sequential test drivers.
//!
//! Each driver wires a stream (or a pair of samplers) into a payoff state and a
//! betting session, and stops at rejection or when the sample budget runs out.
//! Randomness needed by the driver itself (conditional resampling, predictor
//! dither) comes from a ChaCha stream seeded by [`TestConfig::seed`].

use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::betting::{BettingStrategy, WealthState};

use crate::kernels::KernelSpec;
use crate::payoffs::{CskitPayoff, SkitPayoff, XskitPayoff};
use crate::samplers::{ConditionalDraw, ConditionalSampler, SubsetSampler};
use crate::{Error, Matrix, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TestConfig {
    pub alpha: f64,
    /// Sample budget. The marginal test consumes two samples per round, the
    /// conditional test one, and the local test one pair of draws.
    pub tau_max: usize,
    pub kernel_response: KernelSpec,
    pub kernel_concept: KernelSpec,
    /// Kernel on the remaining concepts (conditional test only).
    pub kernel_rest: KernelSpec,
    pub strategy: BettingStrategy,
    pub seed: u64,
    /// Number of hypotheses tested together. With `m > 1` betting continues
    /// past `1/alpha` up to `m/alpha`, so the trajectory can feed the FDR
    /// post-processor; `rejected` still refers to the single-test level.
    pub multiplicity: usize,
}

impl Default for TestConfig {
    fn default() -> Self {
        TestConfig {
            alpha: 0.05,
            tau_max: 1000,
            kernel_response: KernelSpec::rbf_median(),
            kernel_concept: KernelSpec::rbf_median(),
            kernel_rest: KernelSpec::rbf_median(),
            strategy: BettingStrategy::Ons,
            seed: 0,
            multiplicity: 1,
        }
    }
}

impl TestConfig {
    /// Same kernel family and rule for every coordinate.
    pub fn with_kernel(mut self, kernel: KernelSpec) -> Self {
        self.kernel_response = kernel;
        self.kernel_concept = kernel;
        self.kernel_rest = kernel;
        self
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_tau_max(mut self, tau_max: usize) -> Self {
        self.tau_max = tau_max;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid("alpha", "must lie in (0, 1)"));
        }
        if self.tau_max < 2 {
            return Err(Error::invalid("tau_max", "must be at least 2"));
        }
        if self.multiplicity < 1 {
            return Err(Error::invalid("multiplicity", "must be at least 1"));
        }
        self.kernel_response.validate()?;
        self.kernel_concept.validate()?;
        self.kernel_rest.validate()?;
        self.strategy.validate()
    }

    fn rng(&self) -> ChaCha8Rng {
        ChaCha8Rng::seed_from_u64(self.seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TestOutcome {
    pub rejected: bool,
    /// Samples consumed up to rejection, or in total when not rejected.
    pub samples_used: usize,
    pub tau_max: usize,
    /// `samples_used / tau_max` on rejection, otherwise 1.
    pub normalized_tau: f64,
    /// Log-wealth after each round.
    pub wealth_trajectory: Vec<f64>,
    /// Round at which the wealth first reached `1/alpha`.
    pub rejection_round: Option<usize>,
}

impl TestOutcome {
    pub fn final_log_wealth(&self) -> f64 {
        self.wealth_trajectory.last().copied().unwrap_or(0.0)
    }
}

/// Betting session plus the bookkeeping shared by all drivers.
struct Session {
    wealth: WealthState,
    level: f64,
    samples_per_round: usize,
    tau_max: usize,
    trajectory: Vec<f64>,
    rejection_round: Option<usize>,
}

impl Session {
    fn new(config: &TestConfig, samples_per_round: usize) -> Result<Self> {
        config.validate()?;
        let m = config.multiplicity as f64;
        Ok(Session {
            wealth: WealthState::new(config.alpha / m, config.strategy)?,
            level: -libm::log(config.alpha),
            samples_per_round,
            tau_max: config.tau_max,
            trajectory: Vec::new(),
            rejection_round: None,
        })
    }

    fn rounds(&self) -> usize {
        self.tau_max / self.samples_per_round
    }

    /// Returns `true` when betting should stop.
    fn bet(&mut self, kappa: f64) -> Result<bool> {
        self.wealth.wealth_step(kappa)?;
        let lw = self.wealth.log_wealth();
        self.trajectory.push(lw);
        if self.rejection_round.is_none() && lw >= self.level {
            self.rejection_round = Some(self.trajectory.len());
        }
        Ok(self.wealth.is_rejected())
    }

    fn finish(self) -> TestOutcome {
        let rounds = self.trajectory.len();
        let (rejected, samples_used, normalized_tau) = match self.rejection_round {
            Some(t) => {
                let used = t * self.samples_per_round;
                (true, used, used as f64 / self.tau_max as f64)
            }
            None => (false, rounds * self.samples_per_round, 1.0),
        };
        TestOutcome {
            rejected,
            samples_used,
            tau_max: self.tau_max,
            normalized_tau,
            wealth_trajectory: self.trajectory,
            rejection_round: self.rejection_round,
        }
    }
}

/// Marginal test of `response` against one concept on a stream of `(y, z)` pairs.
pub fn run_skit<I>(stream: I, config: &TestConfig) -> Result<TestOutcome>
where
    I: IntoIterator<Item = (f64, f64)>,
{
    let mut session = Session::new(config, 2)?;
    let mut payoff = SkitPayoff::new(config.kernel_response, config.kernel_concept)?;
    let mut it = stream.into_iter();
    for _ in 0..session.rounds() {
        let (Some(d1), Some(d2)) = (it.next(), it.next()) else {
            break;
        };
        if session.bet(payoff.step_kappa(d1, d2))? {
            break;
        }
    }
    Ok(session.finish())
}

/// Conditional test of one concept given the rest, on a stream of
/// `(y, z_j, z_rest)` triples; `sampler` draws the null replacement for `z_j`.
pub fn run_cskit<I, Z, S>(stream: I, sampler: &S, config: &TestConfig) -> Result<TestOutcome>
where
    I: IntoIterator<Item = (f64, f64, Z)>,
    Z: AsRef<[f64]>,
    S: ConditionalSampler + ?Sized,
{
    let mut session = Session::new(config, 1)?;
    let mut rng = config.rng();
    let mut payoff: Option<CskitPayoff> = None;
    for (y, zj, zrest) in stream.into_iter().take(session.rounds()) {
        let zrest = zrest.as_ref();
        let state = match payoff.as_mut() {
            Some(p) => p,
            None => payoff.insert(CskitPayoff::new(
                config.kernel_response,
                config.kernel_concept,
                config.kernel_rest,
                zrest.len(),
            )?),
        };
        let zj_tilde = sampler.sample_zj(zrest, &mut rng)?;
        if session.bet(state.step_kappa(y, zj, zrest, zj_tilde)?)? {
            break;
        }
    }
    Ok(session.finish())
}

/// Maps a model input (concept vector or embedding) to a scalar response.
pub trait Predictor {
    fn predict<R: Rng + ?Sized>(&self, input: &[f64], rng: &mut R) -> f64;
}

impl<F: Fn(&[f64]) -> f64> Predictor for F {
    fn predict<R: Rng + ?Sized>(&self, input: &[f64], _rng: &mut R) -> f64 {
        self(input)
    }
}

/// Local test of concept `j` at the observation `z_obs`, given the concepts in
/// `subset`: compares responses on inputs drawn with `z_{subset + j}` fixed to
/// responses with only `z_subset` fixed.
pub fn run_xskit<S, P>(
    z_obs: &[f64],
    j: usize,
    subset: &[usize],
    sampler: &S,
    predictor: &P,
    config: &TestConfig,
) -> Result<TestOutcome>
where
    S: SubsetSampler + ?Sized,
    P: Predictor + ?Sized,
{
    let m = z_obs.len();
    if j >= m {
        return Err(Error::IndexOutOfRange { index: j, len: m });
    }
    if subset.contains(&j) {
        return Err(Error::invalid(
            "subset",
            "must not contain the tested concept",
        ));
    }
    if let Some(&c) = subset.iter().find(|&&c| c >= m) {
        return Err(Error::IndexOutOfRange { index: c, len: m });
    }
    let mut session = Session::new(config, 1)?;
    let mut rng = config.rng();
    let mut payoff = XskitPayoff::new(config.kernel_response)?;

    let null_values: Vec<f64> = subset.iter().map(|&c| z_obs[c]).collect();
    let mut test_subset = subset.to_vec();
    test_subset.push(j);
    let mut test_values = null_values.clone();
    test_values.push(z_obs[j]);
    let test_dist = sampler.condition(&test_subset, &test_values)?;
    let null_dist = sampler.condition(subset, &null_values)?;

    for _ in 0..session.rounds() {
        let h_test = test_dist.draw(&mut rng)?;
        let h_null = null_dist.draw(&mut rng)?;
        let y_test = predictor.predict(&h_test, &mut rng);
        let y_null = predictor.predict(&h_null, &mut rng);
        if session.bet(payoff.step_kappa(y_test, y_null))? {
            break;
        }
    }
    Ok(session.finish())
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ScoreMode {
    Logit,
    Softmax { temperature: f64 },
}

/// Linear zero-shot classifier with unit-norm class vectors.
#[derive(Debug, Clone, PartialEq)]
pub struct Classifier {
    weights: Matrix,
    class_names: Vec<String>,
    score_mode: ScoreMode,
    target_class: usize,
}

impl Classifier {
    /// Rows of `weights` are normalized to unit length.
    pub fn new(
        mut weights: Matrix,
        class_names: Vec<String>,
        score_mode: ScoreMode,
        target_class: usize,
    ) -> Result<Self> {
        if class_names.len() != weights.rows() {
            return Err(Error::DimensionMismatch {
                expected: weights.rows(),
                found: class_names.len(),
            });
        }
        if target_class >= weights.rows() {
            return Err(Error::IndexOutOfRange {
                index: target_class,
                len: weights.rows(),
            });
        }
        if let ScoreMode::Softmax { temperature } = score_mode {
            if temperature.is_nan() || temperature <= 0.0 {
                return Err(Error::invalid("temperature", "must be positive"));
            }
        }
        weights.normalize_rows();
        Ok(Classifier {
            weights,
            class_names,
            score_mode,
            target_class,
        })
    }

    pub fn weights(&self) -> &Matrix {
        &self.weights
    }

    pub fn class_names(&self) -> &[String] {
        &self.class_names
    }

    pub fn score_mode(&self) -> ScoreMode {
        self.score_mode
    }

    pub fn target_class(&self) -> usize {
        self.target_class
    }

    pub fn with_target_class(mut self, target_class: usize) -> Result<Self> {
        if target_class >= self.weights.rows() {
            return Err(Error::IndexOutOfRange {
                index: target_class,
                len: self.weights.rows(),
            });
        }
        self.target_class = target_class;
        Ok(self)
    }

    pub fn dim(&self) -> usize {
        self.weights.cols()
    }

    fn logit(&self, class: usize, h: &[f64]) -> f64 {
        self.weights
            .row(class)
            .iter()
            .zip(h)
            .map(|(w, x)| w * x)
            .sum()
    }

    /// Score of the target class for the embedding `h`.
    pub fn score(&self, h: &[f64]) -> Result<f64> {
        if h.len() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                found: h.len(),
            });
        }
        Ok(self.score_unchecked(h))
    }

    fn score_unchecked(&self, h: &[f64]) -> f64 {
        match self.score_mode {
            ScoreMode::Logit => self.logit(self.target_class, h),
            ScoreMode::Softmax { temperature } => {
                let logits: Vec<f64> = (0..self.weights.rows())
                    .map(|k| self.logit(k, h) / temperature)
                    .collect();
                let top = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
                let denom: f64 = logits.iter().map(|l| libm::exp(l - top)).sum();
                libm::exp(logits[self.target_class] - top) / denom
            }
        }
    }
}

impl Predictor for Classifier {
    fn predict<R: Rng + ?Sized>(&self, input: &[f64], _rng: &mut R) -> f64 {
        self.score_unchecked(input)
    }
}
