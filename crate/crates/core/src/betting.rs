//! Wealth processes and betting strategies.
//!
//! A session starts with wealth `K_0 = 1` and multiplies it by `1 + v_t * kappa_t`
//! each round, where the fraction `v_t` is fixed before the payoff `kappa_t` is
//! revealed. The null is rejected the first time `K_t >= 1 / alpha`.

use alloc::vec::Vec;

use crate::{Error, Result};

const LN_3: f64 = 1.098_612_288_668_109_8;

/// Step-size constant `2 / (2 - ln 3)` of the online Newton step bettor.
pub const ONS_STEP: f64 = 2.0 / (2.0 - LN_3);

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum BettingStrategy {
    /// Online Newton step.
    #[default]
    Ons,
    /// Fixed fraction in `[0, 1]`.
    Constant(f64),
}

impl BettingStrategy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            BettingStrategy::Constant(v) if !(0.0..=1.0).contains(&v) => {
                Err(Error::invalid("betting_fraction", "must lie in [0, 1]"))
            }
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OnsState {
    /// Running sum `1 + sum z_t^2`.
    pub a: f64,
    /// Fraction to bet on the next round.
    pub v: f64,
}

impl Default for OnsState {
    fn default() -> Self {
        ons_init()
    }
}

pub fn ons_init() -> OnsState {
    OnsState { a: 1.0, v: 0.0 }
}

fn check_payoff(kappa: f64) -> Result<()> {
    if kappa > -1.0 && kappa < 1.0 {
        Ok(())
    } else {
        Err(Error::PayoffOutOfRange(kappa))
    }
}

/// One online Newton step after observing `kappa`.
///
/// The fraction moves along the gradient of `log(1 + v * kappa)` scaled by the
/// accumulated curvature, then is clipped to `[0, 1]`.
pub fn ons_update(state: OnsState, kappa: f64) -> Result<OnsState> {
    check_payoff(kappa)?;
    let z = kappa / (1.0 + state.v * kappa);
    let a = state.a + z * z;
    let v = (state.v + ONS_STEP * z / a).clamp(0.0, 1.0);
    Ok(OnsState { a, v })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SessionStatus {
    Running,
    Rejected { tau: usize },
}

/// A single betting session against one null hypothesis.
#[derive(Debug, Clone, PartialEq)]
pub struct WealthState {
    log_wealth: f64,
    step: usize,
    alpha: f64,
    log_threshold: f64,
    strategy: BettingStrategy,
    ons: OnsState,
    status: SessionStatus,
}

impl WealthState {
    pub fn new(alpha: f64, strategy: BettingStrategy) -> Result<Self> {
        if !(alpha > 0.0 && alpha < 1.0) {
            return Err(Error::invalid("alpha", "must lie in (0, 1)"));
        }
        strategy.validate()?;
        Ok(WealthState {
            log_wealth: 0.0,
            step: 0,
            alpha,
            log_threshold: -libm::log(alpha),
            strategy,
            ons: ons_init(),
            status: SessionStatus::Running,
        })
    }

    pub fn log_wealth(&self) -> f64 {
        self.log_wealth
    }

    pub fn wealth(&self) -> f64 {
        libm::exp(self.log_wealth)
    }

    pub fn step(&self) -> usize {
        self.step
    }

    pub fn alpha(&self) -> f64 {
        self.alpha
    }

    /// `log(1 / alpha)`.
    pub fn log_threshold(&self) -> f64 {
        self.log_threshold
    }

    pub fn status(&self) -> SessionStatus {
        self.status
    }

    pub fn is_rejected(&self) -> bool {
        matches!(self.status, SessionStatus::Rejected { .. })
    }

    pub fn ons(&self) -> OnsState {
        self.ons
    }

    /// Fraction that will be wagered on the next payoff.
    pub fn betting_fraction(&self) -> f64 {
        match self.strategy {
            BettingStrategy::Ons => self.ons.v,
            BettingStrategy::Constant(v) => v,
        }
    }

    /// Bets on `kappa`, updates the wealth and, afterwards, the strategy.
    pub fn wealth_step(&mut self, kappa: f64) -> Result<SessionStatus> {
        if let SessionStatus::Rejected { tau } = self.status {
            return Err(Error::SessionClosed(tau));
        }
        check_payoff(kappa)?;
        let factor = 1.0 + self.betting_fraction() * kappa;
        if factor.is_nan() || factor <= 0.0 {
            return Err(Error::NonPositiveWealthFactor(factor));
        }
        self.log_wealth += libm::log(factor);
        self.step += 1;
        if self.log_wealth >= self.log_threshold {
            self.status = SessionStatus::Rejected { tau: self.step };
        }
        if self.strategy == BettingStrategy::Ons {
            self.ons = ons_update(self.ons, kappa)?;
        }
        Ok(self.status)
    }
}

/// Log-wealth trajectory produced by feeding `payoffs` to a fresh session,
/// continuing past rejection (no early stop).
pub fn log_wealth_path(payoffs: &[f64], strategy: BettingStrategy) -> Result<Vec<f64>> {
    strategy.validate()?;
    let mut ons = ons_init();
    let mut log_wealth = 0.0;
    let mut path = Vec::with_capacity(payoffs.len());
    for &kappa in payoffs {
        check_payoff(kappa)?;
        let v = match strategy {
            BettingStrategy::Ons => ons.v,
            BettingStrategy::Constant(v) => v,
        };
        log_wealth += libm::log(1.0 + v * kappa);
        path.push(log_wealth);
        ons = ons_update(ons, kappa)?;
    }
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn init_values() {
        assert_eq!(ons_init(), OnsState { a: 1.0, v: 0.0 });
        assert_eq!(ons_update(ons_init(), 0.0).unwrap(), ons_init());
    }

    #[test]
    fn ons_step_constant() {
        assert!((ONS_STEP - 2.218_80).abs() < 1e-5);
    }

    #[test]
    fn ons_positive_payoff() {
        let s = ons_update(ons_init(), 0.5).unwrap();
        assert_eq!(s.a, 1.25);
        // v' = 2/(2 - ln 3) * 0.5 / 1.25
        assert!((s.v - ONS_STEP * 0.4).abs() < 1e-15);
        assert!((s.v - 0.8878).abs() < 1e-3);
    }

    #[test]
    fn ons_negative_payoff_clips() {
        let s = ons_update(ons_init(), -0.5).unwrap();
        assert_eq!(s.v, 0.0);
        assert_eq!(s.a, 1.25);
    }

    #[test]
    fn ons_rejects_out_of_range() {
        assert!(matches!(
            ons_update(ons_init(), 1.0),
            Err(Error::PayoffOutOfRange(_))
        ));
        assert!(ons_update(ons_init(), f64::NAN).is_err());
    }

    #[test]
    fn first_step_leaves_wealth() {
        let mut w = WealthState::new(0.05, BettingStrategy::Ons).unwrap();
        w.wealth_step(0.9).unwrap();
        assert_eq!(w.log_wealth(), 0.0);
        assert_eq!(w.step(), 1);
        assert!(w.betting_fraction() > 0.0);
    }

    #[test]
    fn constant_strategy_arithmetic() {
        let mut w = WealthState::new(0.05, BettingStrategy::Constant(1.0)).unwrap();
        w.wealth_step(0.5).unwrap();
        assert!((w.wealth() - 1.5).abs() < 1e-12);
    }

    #[test]
    fn rejects_at_threshold_and_closes() {
        let mut w = WealthState::new(0.05, BettingStrategy::Constant(1.0)).unwrap();
        assert!((w.log_threshold() - 20f64.ln()).abs() < 1e-12);
        let mut tau = None;
        for _ in 0..100 {
            if let SessionStatus::Rejected { tau: t } = w.wealth_step(0.5).unwrap() {
                tau = Some(t);
                break;
            }
        }
        // 1.5^t >= 20 first at t = 8
        assert_eq!(tau, Some(8));
        assert!(w.log_wealth() >= 20f64.ln());
        assert!(matches!(w.wealth_step(0.1), Err(Error::SessionClosed(8))));
    }

    #[test]
    fn invalid_configs() {
        assert!(WealthState::new(0.0, BettingStrategy::Ons).is_err());
        assert!(WealthState::new(1.0, BettingStrategy::Ons).is_err());
        assert!(WealthState::new(0.05, BettingStrategy::Constant(1.5)).is_err());
    }

    #[test]
    fn bet_uses_previous_fraction() {
        let mut w = WealthState::new(0.05, BettingStrategy::Ons).unwrap();
        w.wealth_step(0.5).unwrap();
        let v = w.betting_fraction();
        let before = w.log_wealth();
        w.wealth_step(-0.3).unwrap();
        assert!((w.log_wealth() - before - (1.0 - 0.3 * v).ln()).abs() < 1e-15);
    }

    #[test]
    fn path_matches_session() {
        let payoffs = [0.1, -0.4, 0.7, 0.2, -0.9, 0.3];
        let path = log_wealth_path(&payoffs, BettingStrategy::Ons).unwrap();
        let mut w = WealthState::new(0.01, BettingStrategy::Ons).unwrap();
        for (k, p) in payoffs.iter().zip(&path) {
            w.wealth_step(*k).unwrap();
            assert_eq!(w.log_wealth(), *p);
        }
    }
}
