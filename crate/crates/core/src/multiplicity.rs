//! Greedy FDR post-processing of several betting sessions, outcome aggregation
//! and agreement metrics between importance rankings.

use alloc::vec;
use alloc::vec::Vec;

use crate::testers::TestOutcome;
use crate::{Error, Result};

/// Concepts rejected by the greedy procedure, in acceptance order.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOutput {
    /// `(concept, round)` pairs; `round` is 1-based and is the first round at
    /// which the concept's wealth reached the threshold it was accepted under.
    pub order: Vec<(usize, usize)>,
    /// Per-concept rejection status.
    pub rejected: Vec<bool>,
}

impl RankOutput {
    pub fn rejected_count(&self) -> usize {
        self.order.len()
    }

    pub fn is_rejected(&self, concept: usize) -> bool {
        self.rejected.get(concept).copied().unwrap_or(false)
    }

    /// All concepts: rejected ones in acceptance order, then the others by
    /// decreasing `scores` (ties by index).
    pub fn full_order(&self, scores: &[f64]) -> Vec<usize> {
        let mut out: Vec<usize> = self.order.iter().map(|&(j, _)| j).collect();
        let mut rest: Vec<usize> = (0..self.rejected.len())
            .filter(|&j| !self.rejected[j])
            .collect();
        rest.sort_by(|&a, &b| {
            let sa = scores.get(a).copied().unwrap_or(f64::NEG_INFINITY);
            let sb = scores.get(b).copied().unwrap_or(f64::NEG_INFINITY);
            sb.total_cmp(&sa).then(a.cmp(&b))
        });
        out.extend(rest);
        out
    }
}

fn first_crossing(path: &[f64], log_threshold: f64) -> Option<usize> {
    path.iter().position(|&w| w >= log_threshold)
}

/// Greedy post-processor over log-wealth trajectories (one per concept).
///
/// Round `s` accepts, among concepts not yet rejected, the one whose wealth
/// first reaches `m / (alpha * s)` earliest. Ties go to the larger wealth at
/// that round and then to the lower index. Stops at the first round with no
/// crossing.
pub fn greedy_fdr<P: AsRef<[f64]>>(log_wealth: &[P], alpha: f64) -> Result<RankOutput> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid("alpha", "must lie in (0, 1)"));
    }
    let m = log_wealth.len();
    let mut rejected = vec![false; m];
    let mut order = Vec::new();
    for s in 1..=m {
        let threshold = libm::log(m as f64 / (alpha * s as f64));
        let mut best: Option<(usize, usize, f64)> = None;
        for (j, path) in log_wealth.iter().enumerate() {
            if rejected[j] {
                continue;
            }
            let path = path.as_ref();
            let Some(t) = first_crossing(path, threshold) else {
                continue;
            };
            let better = match best {
                None => true,
                Some((_, bt, bw)) => t < bt || (t == bt && path[t] > bw),
            };
            if better {
                best = Some((j, t, path[t]));
            }
        }
        let Some((j, t, _)) = best else { break };
        rejected[j] = true;
        order.push((j, t + 1));
    }
    Ok(RankOutput { order, rejected })
}

/// Every rejected concept's wealth at its round is at least `m / (alpha |S|)`.
pub fn is_self_consistent<P: AsRef<[f64]>>(out: &RankOutput, log_wealth: &[P], alpha: f64) -> bool {
    let m = log_wealth.len() as f64;
    let k = out.rejected_count();
    if k == 0 {
        return true;
    }
    let threshold = libm::log(m / (alpha * k as f64));
    out.order.iter().all(|&(j, t)| {
        log_wealth
            .get(j)
            .and_then(|p| p.as_ref().get(t.wrapping_sub(1)))
            .is_some_and(|&w| w >= threshold)
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aggregate {
    pub rejection_rate: f64,
    pub mean_normalized_tau: f64,
}

/// Rejection rate and mean normalized rejection time over repetitions
/// (non-rejections count as 1).
pub fn aggregate_outcomes(outcomes: &[TestOutcome]) -> Aggregate {
    if outcomes.is_empty() {
        return Aggregate {
            rejection_rate: 0.0,
            mean_normalized_tau: 1.0,
        };
    }
    let n = outcomes.len() as f64;
    let rejections = outcomes.iter().filter(|o| o.rejected).count() as f64;
    let tau: f64 = outcomes
        .iter()
        .map(|o| if o.rejected { o.normalized_tau } else { 1.0 })
        .sum();
    Aggregate {
        rejection_rate: rejections / n,
        mean_normalized_tau: tau / n,
    }
}

/// Position of each item in an ordered list of item ids.
fn positions(ranking: &[usize]) -> Result<Vec<usize>> {
    let m = ranking.len();
    let mut pos = vec![usize::MAX; m];
    for (r, &item) in ranking.iter().enumerate() {
        if item >= m || pos[item] != usize::MAX {
            return Err(Error::NotAPermutation(m));
        }
        pos[item] = r;
    }
    Ok(pos)
}

/// Weighted Kendall tau between two rankings given as ordered lists of items
/// (most important first).
///
/// A pair of items with reference positions `r`, `s` (0-based) carries weight
/// `1/(r+1) + 1/(s+1)`; the result is the weighted share of concordant pairs
/// minus the share of discordant ones. Weights come from the reference, so the
/// measure is not symmetric.
pub fn weighted_kendall_tau(reference: &[usize], other: &[usize]) -> Result<f64> {
    if reference.len() != other.len() {
        return Err(Error::DimensionMismatch {
            expected: reference.len(),
            found: other.len(),
        });
    }
    let pr = positions(reference)?;
    let po = positions(other)?;
    let m = reference.len();
    let mut num = 0.0;
    let mut den = 0.0;
    for a in 0..m {
        for b in a + 1..m {
            let w = 1.0 / (pr[a] + 1) as f64 + 1.0 / (pr[b] + 1) as f64;
            let concordant = (pr[a] < pr[b]) == (po[a] < po[b]);
            num += if concordant { w } else { -w };
            den += w;
        }
    }
    Ok(if den > 0.0 { num / den } else { 1.0 })
}

/// Fraction of concepts on which the two rate vectors agree about `rate > alpha`.
pub fn importance_agreement(rates_a: &[f64], rates_b: &[f64], alpha: f64) -> Result<f64> {
    if rates_a.len() != rates_b.len() {
        return Err(Error::DimensionMismatch {
            expected: rates_a.len(),
            found: rates_b.len(),
        });
    }
    if rates_a.is_empty() {
        return Err(Error::invalid("rates", "must be nonempty"));
    }
    let same = rates_a
        .iter()
        .zip(rates_b)
        .filter(|(a, b)| (**a > alpha) == (**b > alpha))
        .count();
    Ok(same as f64 / rates_a.len() as f64)
}

/// F1 score of the predicted important set against the ground truth over
/// `universe` concepts. Two empty sets score 1.
pub fn importance_f1(predicted: &[usize], truth: &[usize], universe: usize) -> Result<f64> {
    let mut p = vec![false; universe];
    let mut t = vec![false; universe];
    for (set, mask) in [(predicted, &mut p), (truth, &mut t)] {
        for &j in set {
            if j >= universe {
                return Err(Error::IndexOutOfRange {
                    index: j,
                    len: universe,
                });
            }
            mask[j] = true;
        }
    }
    let tp = (0..universe).filter(|&j| p[j] && t[j]).count() as f64;
    let np = p.iter().filter(|&&x| x).count() as f64;
    let nt = t.iter().filter(|&&x| x).count() as f64;
    if np == 0.0 && nt == 0.0 {
        return Ok(1.0);
    }
    if tp == 0.0 {
        return Ok(0.0);
    }
    let precision = tp / np;
    let recall = tp / nt;
    Ok(2.0 * precision * recall / (precision + recall))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ln(x: f64) -> f64 {
        x.ln()
    }

    #[test]
    fn single_concept_uses_plain_level() {
        let path = [0.0, 1.0, ln(19.9), ln(20.0), ln(25.0)];
        let out = greedy_fdr(&[path], 0.05).unwrap();
        assert_eq!(out.order, vec![(0, 4)]);
    }

    #[test]
    fn flat_trajectories_reject_nothing() {
        let out = greedy_fdr(&[vec![0.0; 10], vec![0.0; 3]], 0.05).unwrap();
        assert!(out.order.is_empty());
        assert_eq!(out.rejected, vec![false, false]);
    }

    #[test]
    fn hand_trace() {
        // concept 1 (0-based) reaches 60 at round 4; concept 0 reaches 30 at round 7
        let c0 = vec![0.0, 0.5, 1.0, 2.0, 2.5, 3.0, ln(31.0), ln(35.0)];
        let c1 = vec![0.0, 1.0, 3.0, ln(61.0), ln(70.0)];
        let c2 = vec![0.0, 1.0, ln(19.0), ln(19.5)];
        let out = greedy_fdr(&[c0.clone(), c1.clone(), c2.clone()], 0.05).unwrap();
        assert_eq!(out.order, vec![(1, 4), (0, 7)]);
        assert!(is_self_consistent(&out, &[c0, c1, c2], 0.05));
    }

    #[test]
    fn ties_prefer_larger_wealth_then_index() {
        let a = vec![0.0, ln(50.0)];
        let b = vec![0.0, ln(80.0)];
        let out = greedy_fdr(&[a.clone(), b.clone()], 0.05).unwrap();
        assert_eq!(out.order, vec![(1, 2), (0, 2)]);
        let out = greedy_fdr(&[b.clone(), b], 0.05).unwrap();
        assert_eq!(out.order[0].0, 0);
    }

    #[test]
    fn full_order_appends_unrejected() {
        let out = RankOutput {
            order: vec![(2, 3)],
            rejected: vec![false, false, true, false],
        };
        assert_eq!(out.full_order(&[0.1, 0.5, 9.0, 0.5]), vec![2, 1, 3, 0]);
    }

    fn outcome(rejected: bool, tau: f64) -> TestOutcome {
        TestOutcome {
            rejected,
            samples_used: 0,
            tau_max: 100,
            normalized_tau: if rejected { tau } else { 1.0 },
            wealth_trajectory: Vec::new(),
            rejection_round: None,
        }
    }

    #[test]
    fn aggregation() {
        let all: Vec<_> = (0..4).map(|_| outcome(true, 0.5)).collect();
        assert_eq!(
            aggregate_outcomes(&all),
            Aggregate {
                rejection_rate: 1.0,
                mean_normalized_tau: 0.5
            }
        );
        let none: Vec<_> = (0..4).map(|_| outcome(false, 1.0)).collect();
        assert_eq!(
            aggregate_outcomes(&none),
            Aggregate {
                rejection_rate: 0.0,
                mean_normalized_tau: 1.0
            }
        );
        let mixed = vec![outcome(true, 0.2), outcome(false, 1.0)];
        let agg = aggregate_outcomes(&mixed);
        assert_eq!(agg.rejection_rate, 0.5);
        assert!((agg.mean_normalized_tau - 0.6).abs() < 1e-15);
    }

    #[test]
    fn kendall_examples() {
        assert_eq!(weighted_kendall_tau(&[2, 0, 1], &[2, 0, 1]).unwrap(), 1.0);
        assert_eq!(
            weighted_kendall_tau(&[0, 1, 2, 3], &[3, 2, 1, 0]).unwrap(),
            -1.0
        );
        let t = weighted_kendall_tau(&[0, 1, 2], &[1, 0, 2]).unwrap();
        let expected = (-1.5 + 4.0 / 3.0 + 5.0 / 6.0) / (1.5 + 4.0 / 3.0 + 5.0 / 6.0);
        assert!((t - expected).abs() < 1e-15);
        assert!((t - 0.1818).abs() < 1e-4);
        let back = weighted_kendall_tau(&[1, 0, 2], &[0, 1, 2]).unwrap();
        assert!((back - t).abs() < 1e-15);
        let u = weighted_kendall_tau(&[0, 1, 2], &[0, 2, 1]).unwrap();
        let v = weighted_kendall_tau(&[0, 2, 1], &[0, 1, 2]).unwrap();
        assert!((u - v).abs() < 1e-15);
        assert!(weighted_kendall_tau(&[0, 1], &[0, 1, 2]).is_err());
        assert!(weighted_kendall_tau(&[0, 0], &[0, 1]).is_err());
    }

    #[test]
    fn asymmetric_pair() {
        let a = weighted_kendall_tau(&[0, 1, 2, 3], &[1, 2, 0, 3]).unwrap();
        let b = weighted_kendall_tau(&[1, 2, 0, 3], &[0, 1, 2, 3]).unwrap();
        assert!((a - b).abs() > 1e-3);
    }

    #[test]
    fn agreement_and_f1() {
        let a = [0.9, 0.02, 0.6, 0.01];
        let b = [0.8, 0.5, 0.04, 0.02];
        assert_eq!(importance_agreement(&a, &a, 0.05).unwrap(), 1.0);
        assert_eq!(importance_agreement(&a, &b, 0.05).unwrap(), 0.5);
        assert_eq!(
            importance_agreement(&[0.9, 0.0], &[0.0, 0.9], 0.05).unwrap(),
            0.0
        );
        assert!(importance_agreement(&a, &b[..2], 0.05).is_err());

        assert_eq!(importance_f1(&[1, 2], &[1, 2], 4).unwrap(), 1.0);
        assert_eq!(importance_f1(&[0], &[1, 2], 4).unwrap(), 0.0);
        assert!((importance_f1(&[1, 2, 3], &[2, 3, 4], 5).unwrap() - 2.0 / 3.0).abs() < 1e-15);
        assert!(importance_f1(&[7], &[1], 5).is_err());
    }
}
