use betkit_core::betting::{log_wealth_path, ons_init, ons_update, BettingStrategy, WealthState};
use betkit_core::kernels::{
    bandwidth_from_history, BandwidthTracker, Kernel, KernelFamily, KernelSpec,
};
use betkit_core::multiplicity::{greedy_fdr, is_self_consistent, weighted_kendall_tau};
use betkit_core::payoffs::{CskitPayoff, SkitPayoff, XskitPayoff, MAX_PAYOFF};
use betkit_core::samplers::{effective_sample_size, fit_weights};
use proptest::prelude::*;

fn coord() -> impl Strategy<Value = f64> {
    -5.0..5.0f64
}

fn spec() -> impl Strategy<Value = KernelSpec> {
    prop_oneof![
        Just(KernelSpec::linear()),
        (0.05..0.95f64).prop_map(KernelSpec::rbf_quantile),
        (0.1..4.0f64).prop_map(KernelSpec::rbf_fixed),
    ]
}

proptest! {
    #[test]
    fn rbf_symmetric_and_bounded(bw in 0.01..10.0f64, x in prop::collection::vec(coord(), 3), y in prop::collection::vec(coord(), 3)) {
        let k = Kernel::new(KernelFamily::Rbf, bw).unwrap();
        let a = k.eval(&x, &y);
        prop_assert_eq!(a, k.eval(&y, &x));
        prop_assert!((0.0..=1.0).contains(&a));
        prop_assert_eq!(k.eval(&x, &x), 1.0);
    }

    #[test]
    fn linear_symmetric(x in prop::collection::vec(coord(), 4), y in prop::collection::vec(coord(), 4)) {
        let k = Kernel::new(KernelFamily::Linear, 1.0).unwrap();
        prop_assert_eq!(k.eval(&x, &y), k.eval(&y, &x));
    }

    #[test]
    fn bandwidth_permutation_invariant_and_monotone(pts in prop::collection::vec(prop::collection::vec(coord(), 2), 2..20), q1 in 0.05..0.95f64, q2 in 0.05..0.95f64) {
        let (lo, hi) = if q1 <= q2 { (q1, q2) } else { (q2, q1) };
        let a = bandwidth_from_history(&KernelSpec::rbf_quantile(lo), &pts);
        let b = bandwidth_from_history(&KernelSpec::rbf_quantile(hi), &pts);
        let mut rev = pts.clone();
        rev.reverse();
        prop_assert_eq!(a, bandwidth_from_history(&KernelSpec::rbf_quantile(lo), &rev));
        // the fallback of 1 applies only when every distance is zero
        if pts.windows(2).any(|w| w[0] != w[1]) {
            prop_assert!(a <= b);
        }
        let mut tracker = BandwidthTracker::new(KernelSpec::rbf_quantile(lo), 2);
        for p in &pts {
            tracker.push(p);
        }
        prop_assert!((tracker.bandwidth() - a).abs() <= 1e-12 * a.max(1.0));
    }

    #[test]
    fn wealth_stays_positive(payoffs in prop::collection::vec(-MAX_PAYOFF..MAX_PAYOFF, 1..300), c in 0.0..1.0f64) {
        for s in [BettingStrategy::Ons, BettingStrategy::Constant(c)] {
            let path = log_wealth_path(&payoffs, s).unwrap();
            prop_assert!(path.iter().all(|w| w.is_finite()));
        }
        let mut ons = ons_init();
        for &k in &payoffs {
            ons = ons_update(ons, k).unwrap();
            prop_assert!((0.0..=1.0).contains(&ons.v));
        }
    }

    #[test]
    fn wealth_rejects_only_above_threshold(payoffs in prop::collection::vec(-0.99..0.99f64, 1..200)) {
        let mut w = WealthState::new(0.05, BettingStrategy::Ons).unwrap();
        for &k in &payoffs {
            if w.is_rejected() {
                prop_assert!(w.wealth_step(k).is_err());
                break;
            }
            w.wealth_step(k).unwrap();
            prop_assert_eq!(w.is_rejected(), w.log_wealth() >= (1.0 / 0.05f64).ln());
        }
    }

    #[test]
    fn payoffs_bounded_and_predictable(
        ky in spec(), kz in spec(),
        hist in prop::collection::vec((coord(), coord(), coord(), coord()), 0..12),
        next in (coord(), coord(), coord(), coord()),
    ) {
        let mut skit = SkitPayoff::new(ky, kz).unwrap();
        let mut cskit = CskitPayoff::new(ky, kz, ky, 1).unwrap();
        let mut xskit = XskitPayoff::new(ky).unwrap();
        for &(a, b, c, d) in &hist {
            skit.step_kappa((a, b), (c, d));
            cskit.step_kappa(a, b, &[c], d).unwrap();
            xskit.step_kappa(a, b);
        }
        // the payoff of a round is fixed by the history and the round's own data
        let (a, b, c, d) = next;
        let k1 = skit.clone().step_kappa((a, b), (c, d));
        prop_assert_eq!(k1, skit.clone().step_kappa((a, b), (c, d)));
        prop_assert!(k1.abs() <= MAX_PAYOFF);
        let k2 = cskit.clone().step_kappa(a, b, &[c], d).unwrap();
        prop_assert!(k2.abs() <= MAX_PAYOFF);
        let k3 = xskit.clone().step_kappa(a, b);
        prop_assert!(k3.abs() <= MAX_PAYOFF);
        // swapping the two draws of a round negates the payoff
        prop_assert_eq!(xskit.clone().step_kappa(b, a), -k3);
        prop_assert_eq!(cskit.clone().step_kappa(a, d, &[c], b).unwrap(), -k2);
    }

    #[test]
    fn xskit_stream_swap(ky in spec(), pairs in prop::collection::vec((coord(), coord()), 1..15)) {
        // Exchanging the streams flips the witness and the evaluation order
        // together, so every payoff is unchanged; exchanging only the current
        // round's draws negates it.
        let mut p = XskitPayoff::new(ky).unwrap();
        let mut q = XskitPayoff::new(ky).unwrap();
        for &(a, b) in &pairs {
            prop_assert_eq!(p.clone().step_kappa(b, a), -p.clone().step_kappa(a, b));
            prop_assert_eq!(p.step_kappa(a, b), q.step_kappa(b, a));
        }
    }

    #[test]
    fn neff_monotone_in_bandwidth(d in prop::collection::vec(0.0..25.0f64, 2..40), nu1 in 0.05..20.0f64, nu2 in 0.05..20.0f64) {
        let (lo, hi) = if nu1 <= nu2 { (nu1, nu2) } else { (nu2, nu1) };
        let dmin = d.iter().cloned().fold(f64::INFINITY, f64::min);
        let neff = |nu: f64| {
            let w: Vec<f64> = d.iter().map(|x| (-(x - dmin) / (2.0 * nu * nu)).exp()).collect();
            effective_sample_size(&w)
        };
        prop_assert!(neff(lo) <= neff(hi) + 1e-9);
    }

    #[test]
    fn bisection_hits_target(d in prop::collection::vec(0.0..25.0f64, 20..200), frac in 0.05..1.0f64) {
        let target = (d.len() as f64 * frac).max(1.5);
        let fit = fit_weights(&d, target).unwrap();
        let goal = target.min(d.len() as f64);
        prop_assert!((fit.n_eff - goal).abs() <= 0.01 * goal + 1e-9 || fit.n_eff >= goal,
            "n_eff {} goal {}", fit.n_eff, goal);
        prop_assert!((fit.weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn fdr_monotone_in_alpha(paths in prop::collection::vec(prop::collection::vec(-1.0..0.3f64, 30), 1..8), a1 in 0.01..0.3f64, a2 in 0.01..0.3f64) {
        let cum: Vec<Vec<f64>> = paths.iter().map(|p| p.iter().scan(0.0, |s, x| { *s += x; Some(*s) }).collect()).collect();
        let (lo, hi) = if a1 <= a2 { (a1, a2) } else { (a2, a1) };
        let r_lo = greedy_fdr(&cum, lo).unwrap();
        let r_hi = greedy_fdr(&cum, hi).unwrap();
        prop_assert!(r_lo.rejected_count() <= r_hi.rejected_count());
        prop_assert!(is_self_consistent(&r_lo, &cum, lo));
        prop_assert!(is_self_consistent(&r_hi, &cum, hi));
    }

    #[test]
    fn kendall_bounded(perm in Just((0..8usize).collect::<Vec<_>>()).prop_shuffle(), other in Just((0..8usize).collect::<Vec<_>>()).prop_shuffle()) {
        let t = weighted_kendall_tau(&perm, &other).unwrap();
        prop_assert!((-1.0 - 1e-12..=1.0 + 1e-12).contains(&t));
        prop_assert!((weighted_kendall_tau(&perm, &perm).unwrap() - 1.0).abs() < 1e-12);
        let rev: Vec<usize> = perm.iter().rev().cloned().collect();
        prop_assert!((weighted_kendall_tau(&perm, &rev).unwrap() + 1.0).abs() < 1e-12);
    }
}
