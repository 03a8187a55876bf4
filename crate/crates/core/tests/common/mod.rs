//! Brute-force reference computations shared by the integration tests.
//!
//! Everything here is recomputed from the raw history on every call, with
//! explicit sample sets instead of the factored sums used by the library.
#![allow(dead_code)]

use betkit_core::kernels::{BandwidthRule, KernelFamily, KernelSpec};

pub fn type7_quantile(mut v: Vec<f64>, q: f64) -> f64 {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let h = q * (v.len() - 1) as f64;
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(v.len() - 1);
    v[lo] + (h - lo as f64) * (v[hi] - v[lo])
}

/// Bandwidth from every pairwise distance of `points`.
pub fn bandwidth(spec: &KernelSpec, points: &[Vec<f64>]) -> f64 {
    let q = match spec.bandwidth_rule {
        BandwidthRule::Fixed(s) => return s,
        BandwidthRule::Quantile(q) => q,
    };
    let mut d = Vec::new();
    for i in 0..points.len() {
        for j in 0..i {
            let sq: f64 = points[i]
                .iter()
                .zip(&points[j])
                .map(|(a, b)| (a - b).powi(2))
                .sum();
            d.push(sq.sqrt());
        }
    }
    if d.is_empty() {
        return spec.fallback_bandwidth;
    }
    let b = type7_quantile(d, q);
    if b > 0.0 {
        b
    } else {
        spec.fallback_bandwidth
    }
}

pub fn kernel(spec: &KernelSpec, bw: f64, x: &[f64], y: &[f64]) -> f64 {
    match spec.family {
        KernelFamily::Linear => x.iter().zip(y).map(|(a, b)| a * b).sum(),
        KernelFamily::Rbf => {
            let sq: f64 = x.iter().zip(y).map(|(a, b)| (a - b).powi(2)).sum();
            (-sq / (2.0 * bw * bw)).exp()
        }
    }
}

pub fn clamp_tanh(x: f64) -> f64 {
    x.tanh().clamp(-(1.0 - 1e-12), 1.0 - 1e-12)
}

/// Marginal-test witness at `(y, z)`: joint embedding minus the embedding of
/// all `n^2` recombined pairs.
pub fn skit_rho(ky: &KernelSpec, kz: &KernelSpec, hist: &[(f64, f64)], y: f64, z: f64) -> f64 {
    let n = hist.len();
    if n == 0 {
        return 0.0;
    }
    let ys: Vec<Vec<f64>> = hist.iter().map(|p| vec![p.0]).collect();
    let zs: Vec<Vec<f64>> = hist.iter().map(|p| vec![p.1]).collect();
    let (by, bz) = (bandwidth(ky, &ys), bandwidth(kz, &zs));
    let k = |yi: f64, zi: f64| kernel(ky, by, &[yi], &[y]) * kernel(kz, bz, &[zi], &[z]);
    let joint: f64 = hist.iter().map(|&(a, b)| k(a, b)).sum::<f64>() / n as f64;
    let mut prod = 0.0;
    for &(a, _) in hist {
        for &(_, b) in hist {
            prod += k(a, b);
        }
    }
    joint - prod / (n * n) as f64
}

pub fn skit_kappa(
    ky: &KernelSpec,
    kz: &KernelSpec,
    hist: &[(f64, f64)],
    d1: (f64, f64),
    d2: (f64, f64),
) -> f64 {
    if hist.is_empty() {
        return 0.0;
    }
    let r = |y, z| skit_rho(ky, kz, hist, y, z);
    clamp_tanh(r(d1.0, d1.1) + r(d2.0, d2.1) - r(d1.0, d2.1) - r(d2.0, d1.1))
}

/// One stored conditional-test observation.
#[derive(Debug, Clone)]
pub struct Triple {
    pub y: f64,
    pub zj: f64,
    pub rest: Vec<f64>,
    pub zj_tilde: f64,
}

/// Joint kernel on `(y, z_j, z_rest)`: a product of block kernels, or the
/// inner product of the concatenated vector when every block is linear.
pub fn cskit_joint(
    specs: &[KernelSpec; 3],
    bws: [f64; 3],
    a: (f64, f64, &[f64]),
    b: (f64, f64, &[f64]),
) -> f64 {
    if specs.iter().all(|s| s.family == KernelFamily::Linear) {
        let mut va = vec![a.0, a.1];
        va.extend_from_slice(a.2);
        let mut vb = vec![b.0, b.1];
        vb.extend_from_slice(b.2);
        return va.iter().zip(&vb).map(|(x, y)| x * y).sum();
    }
    kernel(&specs[0], bws[0], &[a.0], &[b.0])
        * kernel(&specs[1], bws[1], &[a.1], &[b.1])
        * kernel(&specs[2], bws[2], a.2, b.2)
}

pub fn cskit_rho(specs: &[KernelSpec; 3], hist: &[Triple], y: f64, zj: f64, rest: &[f64]) -> f64 {
    let n = hist.len();
    if n == 0 {
        return 0.0;
    }
    let bws = [
        bandwidth(
            &specs[0],
            &hist.iter().map(|t| vec![t.y]).collect::<Vec<_>>(),
        ),
        bandwidth(
            &specs[1],
            &hist.iter().map(|t| vec![t.zj]).collect::<Vec<_>>(),
        ),
        bandwidth(
            &specs[2],
            &hist.iter().map(|t| t.rest.clone()).collect::<Vec<_>>(),
        ),
    ];
    let at = (y, zj, rest);
    let obs: f64 = hist
        .iter()
        .map(|t| cskit_joint(specs, bws, (t.y, t.zj, &t.rest), at))
        .sum();
    let null: f64 = hist
        .iter()
        .map(|t| cskit_joint(specs, bws, (t.y, t.zj_tilde, &t.rest), at))
        .sum();
    (obs - null) / n as f64
}

pub fn cskit_kappa(specs: &[KernelSpec; 3], hist: &[Triple], next: &Triple) -> f64 {
    if hist.is_empty() {
        return 0.0;
    }
    clamp_tanh(
        cskit_rho(specs, hist, next.y, next.zj, &next.rest)
            - cskit_rho(specs, hist, next.y, next.zj_tilde, &next.rest),
    )
}

pub fn xskit_kappa(spec: &KernelSpec, hist: &[(f64, f64)], y_test: f64, y_null: f64) -> f64 {
    let n = hist.len();
    if n == 0 {
        return 0.0;
    }
    let pooled: Vec<Vec<f64>> = hist.iter().flat_map(|p| [vec![p.0], vec![p.1]]).collect();
    let bw = bandwidth(spec, &pooled);
    let rho = |y: f64| {
        hist.iter()
            .map(|p| kernel(spec, bw, &[p.0], &[y]) - kernel(spec, bw, &[p.1], &[y]))
            .sum::<f64>()
            / n as f64
    };
    clamp_tanh(rho(y_test) - rho(y_null))
}

/// Log-wealth path of the online Newton step bettor, written out directly.
pub fn ons_log_wealth(payoffs: &[f64]) -> Vec<f64> {
    let step = 2.0 / (2.0 - 3f64.ln());
    let (mut v, mut a, mut lw) = (0.0f64, 1.0f64, 0.0f64);
    let mut out = Vec::new();
    for &k in payoffs {
        lw += (1.0 + v * k).ln();
        out.push(lw);
        let z = k / (1.0 + v * k);
        a += z * z;
        v = (v + step * z / a).clamp(0.0, 1.0);
    }
    out
}

fn random_spec<R: rand::Rng>(rng: &mut R) -> KernelSpec {
    match rng.random_range(0..4) {
        0 => KernelSpec::linear(),
        1 => KernelSpec::rbf_median(),
        2 => KernelSpec::rbf_quantile(rng.random_range(0.1..0.9)),
        _ => KernelSpec::rbf_fixed(rng.random_range(0.2..3.0)),
    }
}

/// Largest gap between library payoffs and the brute-force ones over `reps`
/// random histories of at most 10 points per test, with random kernel choices.
pub fn payoff_oracle_max_error(reps: usize, seed: u64) -> f64 {
    use betkit_core::payoffs::{CskitPayoff, SkitPayoff, XskitPayoff};
    use rand::{Rng, SeedableRng};
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0f64;
    let g = |rng: &mut rand_chacha::ChaCha8Rng| rng.random_range(-2.0..2.0);
    for _ in 0..reps {
        let n = rng.random_range(1..=10);

        let (ky, kz) = (random_spec(&mut rng), random_spec(&mut rng));
        let mut lib = SkitPayoff::new(ky, kz).unwrap();
        let mut hist = Vec::new();
        for _ in 0..n {
            let d1 = (g(&mut rng), g(&mut rng));
            let d2 = (g(&mut rng), g(&mut rng));
            let want = skit_kappa(&ky, &kz, &hist, d1, d2);
            worst = worst.max((lib.step_kappa(d1, d2) - want).abs());
            hist.extend([d1, d2]);
        }

        let specs = [
            random_spec(&mut rng),
            random_spec(&mut rng),
            random_spec(&mut rng),
        ];
        let specs = if rng.random_bool(0.25) {
            [KernelSpec::linear(); 3]
        } else {
            specs
        };
        let dim = rng.random_range(1..=3);
        let mut lib = CskitPayoff::new(specs[0], specs[1], specs[2], dim).unwrap();
        let mut hist: Vec<Triple> = Vec::new();
        for _ in 0..n {
            let t = Triple {
                y: g(&mut rng),
                zj: g(&mut rng),
                rest: (0..dim).map(|_| g(&mut rng)).collect(),
                zj_tilde: g(&mut rng),
            };
            let want = cskit_kappa(&specs, &hist, &t);
            let got = lib.step_kappa(t.y, t.zj, &t.rest, t.zj_tilde).unwrap();
            worst = worst.max((got - want).abs());
            hist.push(t);
        }

        let k = random_spec(&mut rng);
        let mut lib = XskitPayoff::new(k).unwrap();
        let mut hist = Vec::new();
        for _ in 0..n {
            let (a, b) = (g(&mut rng), g(&mut rng));
            worst = worst.max((lib.step_kappa(a, b) - xskit_kappa(&k, &hist, a, b)).abs());
            hist.push((a, b));
        }
    }
    worst
}
