//! Small synthetic dataset in the manifest format, for smoke runs without a model.
//!
//! Concepts are random unit directions. Each sample activates every concept
//! independently with probability 0.3; its embedding is the sum of the active
//! directions plus isotropic noise. Class `k` weighs concepts
//! `5k .. 5k + 5`, so those drive its score and the rest do not.

use betkit_core::testers::{Classifier, ScoreMode};
use betkit_core::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::datastore::{DataResult, Dataset};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToySpec {
    pub rows: usize,
    pub dim: usize,
    pub concepts: usize,
    pub classes: usize,
    pub seed: u64,
}

impl Default for ToySpec {
    fn default() -> Self {
        ToySpec {
            rows: 2000,
            dim: 32,
            concepts: 20,
            classes: 3,
            seed: 0,
        }
    }
}

const ACTIVE_PROB: f64 = 0.3;
const NOISE: f64 = 0.3;
const CONCEPTS_PER_CLASS: usize = 5;

pub fn make_toy(spec: &ToySpec) -> DataResult<Dataset> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let gauss = |rng: &mut ChaCha8Rng| -> f64 { rng.sample(StandardNormal) };
    let mut c = Matrix::zeros(spec.dim, spec.concepts);
    for i in 0..spec.dim {
        for j in 0..spec.concepts {
            c.set(i, j, gauss(&mut rng));
        }
    }
    c.normalize_columns();

    let mut h = Matrix::zeros(spec.rows, spec.dim);
    for r in 0..spec.rows {
        let row = h.row_mut(r);
        for j in 0..spec.concepts {
            if rng.random_bool(ACTIVE_PROB) {
                let strength = rng.random_range(0.5..1.5);
                for (i, x) in row.iter_mut().enumerate() {
                    *x += strength * c.get(i, j);
                }
            }
        }
        for x in row.iter_mut() {
            *x += NOISE * gauss(&mut rng);
        }
    }

    let mut w = Matrix::zeros(spec.classes, spec.dim);
    for k in 0..spec.classes {
        for j in
            (k * CONCEPTS_PER_CLASS..(k + 1) * CONCEPTS_PER_CLASS).filter(|&j| j < spec.concepts)
        {
            for i in 0..spec.dim {
                w.set(k, i, w.get(k, i) + c.get(i, j));
            }
        }
    }
    let classes = (0..spec.classes).map(|k| format!("class_{k}")).collect();
    let classifier = Classifier::new(w, classes, ScoreMode::Logit, 0)?;
    let names = (0..spec.concepts)
        .map(|j| format!("concept_{j:02}"))
        .collect();
    let ids = (0..spec.rows).map(|r| format!("sample_{r:04}")).collect();
    Dataset::new(h, Some(ids), c, names, classifier)
}
