//! Experiment runner: repetitions of one test per row, FDR ranking within
//! groups of rows, and result files.
//!
//! Every `(row, repetition)` task draws its randomness from
//! [`task_seed`]`(master, rep, row)` and results are collected in task order,
//! so output does not depend on the thread count.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use betkit_core::betting::BettingStrategy;
use betkit_core::kernels::KernelSpec;
use betkit_core::multiplicity::{aggregate_outcomes, greedy_fdr};
use betkit_core::samplers::{EmbeddingSampler, WeightedKdeSampler, DEFAULT_TARGET_NEFF};
use betkit_core::synthetic::{
    CountingConceptSampler, CountingDgpParams, CountingOracle, GaussianDgpParams, GaussianResponse,
    GaussianSubsetSampler, GaussianZ1Sampler, COUNTING_CONCEPTS,
};
use betkit_core::testers::{
    run_cskit, run_skit, run_xskit, Classifier, Predictor, TestConfig, TestOutcome,
};
use betkit_core::Matrix;
use rand::seq::index::sample as sample_indices;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::datastore::{load_dataset, stream_global, stream_global_cond, DataError, Dataset};

#[derive(Debug, thiserror::Error)]
pub enum HarnessError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("test failed: {0}")]
    Test(#[from] betkit_core::Error),
    #[error("cannot write {path}: {source}")]
    Output {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("cannot read results {path}: {reason}")]
    Results { path: PathBuf, reason: String },
}

impl HarnessError {
    /// 2 for configuration problems, 3 for data and I/O problems.
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Test(betkit_core::Error::InvalidParameter { .. }) => 2,
            _ => 3,
        }
    }
}

pub type HarnessResult<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    /// Marginal, conditional and local tests on the three-concept Gaussian model.
    SyntheticGaussian,
    /// Marginal and conditional tests of the six counting concepts.
    SyntheticCounting,
    /// Marginal test of each dataset concept against the class score.
    Global,
    /// Conditional test of each dataset concept given the others.
    GlobalCond,
    /// Local test of each concept for one sample, with random conditioning sets.
    Local,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum KernelChoice {
    Rbf,
    Linear,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub alpha: f64,
    pub tau_max: usize,
    pub kernel: KernelChoice,
    /// Quantile of pairwise distances used as the RBF bandwidth.
    pub bandwidth_q: f64,
    /// `None` for online Newton step betting, otherwise a constant fraction.
    pub constant_bet: Option<f64>,
    pub reps: usize,
    pub seed: u64,
    /// Coefficients swept by the Gaussian marginal and conditional tests.
    pub betas: Vec<f64>,
    /// Values of `z3` swept by the Gaussian local test.
    pub z3_values: Vec<f64>,
    /// Conditioning-set size for the local test.
    pub cond_size: usize,
    /// Effective sample size of the KDE samplers.
    pub target_neff: f64,
    pub manifest: Option<PathBuf>,
    /// Concepts to test; all when empty.
    pub concepts: Vec<String>,
    pub class: Option<String>,
    pub sample_id: Option<String>,
    pub out: PathBuf,
    pub plot: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        ExperimentConfig {
            experiment: Experiment::SyntheticGaussian,
            alpha: 0.05,
            tau_max: 1000,
            kernel: KernelChoice::Rbf,
            bandwidth_q: 0.5,
            constant_bet: None,
            reps: 100,
            seed: 0,
            betas: vec![0.0, 0.5, 1.0, 2.0],
            z3_values: vec![-1.0, -0.5, 0.0, 0.5, 1.0],
            cond_size: 1,
            target_neff: DEFAULT_TARGET_NEFF,
            manifest: None,
            concepts: Vec::new(),
            class: None,
            sample_id: None,
            out: PathBuf::from("results"),
            plot: false,
        }
    }
}

impl ExperimentConfig {
    pub fn validate(&self) -> HarnessResult<()> {
        let fail = |msg: &str| Err(HarnessError::Config(msg.into()));
        if self.reps == 0 {
            return fail("reps must be at least 1");
        }
        if self.tau_max == 0 {
            return fail("tau-max must be at least 1");
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return fail("alpha must lie in (0, 1)");
        }
        if !(self.bandwidth_q > 0.0 && self.bandwidth_q <= 1.0) {
            return fail("bandwidth-q must lie in (0, 1]");
        }
        if let Some(v) = self.constant_bet {
            if !(0.0..=1.0).contains(&v) {
                return fail("a constant betting fraction must lie in [0, 1]");
            }
        }
        if self.target_neff.is_nan() || self.target_neff <= 1.0 {
            return fail("target n_eff must exceed 1");
        }
        match self.experiment {
            Experiment::SyntheticGaussian => {
                if self.betas.is_empty() || self.z3_values.is_empty() {
                    return fail("sweep grids must be nonempty");
                }
            }
            Experiment::SyntheticCounting => {}
            Experiment::Global | Experiment::GlobalCond | Experiment::Local => {
                if self.manifest.is_none() {
                    return fail("this experiment needs --manifest");
                }
                if self.experiment == Experiment::Local && self.sample_id.is_none() {
                    return fail("the local experiment needs --sample-id");
                }
            }
        }
        Ok(())
    }

    pub fn kernel_spec(&self) -> KernelSpec {
        match self.kernel {
            KernelChoice::Rbf => KernelSpec::rbf_quantile(self.bandwidth_q),
            KernelChoice::Linear => KernelSpec::linear(),
        }
    }

    fn test_config(&self, seed: u64, multiplicity: usize) -> TestConfig {
        let mut cfg = TestConfig::default()
            .with_kernel(self.kernel_spec())
            .with_seed(seed)
            .with_tau_max(self.tau_max);
        cfg.alpha = self.alpha;
        cfg.multiplicity = multiplicity;
        cfg.strategy = match self.constant_bet {
            None => BettingStrategy::Ons,
            Some(v) => BettingStrategy::Constant(v),
        };
        cfg
    }
}

/// Seed of repetition `rep` of row `row`: the first 8 bytes of
/// `SHA-256(master || rep || row)`, all little-endian `u64`.
pub fn task_seed(master: u64, rep: u64, row: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(rep.to_le_bytes());
    h.update(row.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

#[derive(Debug, Clone, Copy)]
enum Task {
    GaussSkit { beta2: f64 },
    GaussCskit { beta1: f64 },
    GaussXskit { z3: f64 },
    CountSkit { j: usize },
    CountCskit { j: usize },
    Global { j: usize },
    GlobalCond { j: usize },
    Local { j: usize },
}

#[derive(Debug, Clone)]
struct RowSpec {
    label: String,
    /// Rows in the same group are ranked together by the FDR post-processor.
    group: Option<usize>,
    task: Task,
}

/// Data shared by the real-data tasks.
struct RealData {
    dataset: Dataset,
    classifier: Classifier,
    z: Matrix,
    scores: Vec<f64>,
    kde: Option<WeightedKdeSampler>,
    embedding_sampler: Option<EmbeddingSampler>,
    sample: Option<usize>,
}

impl RealData {
    fn load(cfg: &ExperimentConfig) -> HarnessResult<Self> {
        let path = cfg.manifest.as_ref().expect("validated");
        let dataset = load_dataset(path)?;
        let class = match &cfg.class {
            Some(name) => dataset.class_index(name)?,
            None => 0,
        };
        let classifier = dataset.classifier.clone().with_target_class(class)?;
        let z = dataset.project();
        let scores = dataset
            .embeddings
            .h
            .iter_rows()
            .map(|h| classifier.score(h))
            .collect::<Result<Vec<_>, _>>()?;
        let needs_kde = matches!(cfg.experiment, Experiment::GlobalCond | Experiment::Local);
        let kde = if needs_kde {
            Some(WeightedKdeSampler::new(z.clone(), cfg.target_neff)?)
        } else {
            None
        };
        let (embedding_sampler, sample) = if cfg.experiment == Experiment::Local {
            let s = dataset
                .embeddings
                .resolve_sample(cfg.sample_id.as_deref().expect("validated"))?;
            let es = EmbeddingSampler::new(
                dataset.embeddings.h.clone(),
                kde.clone().expect("built above"),
            )?;
            (Some(es), Some(s))
        } else {
            (None, None)
        };
        Ok(RealData {
            dataset,
            classifier,
            z,
            scores,
            kde,
            embedding_sampler,
            sample,
        })
    }

    fn tested_concepts(&self, cfg: &ExperimentConfig) -> HarnessResult<Vec<usize>> {
        if cfg.concepts.is_empty() {
            return Ok((0..self.dataset.concepts.len()).collect());
        }
        cfg.concepts
            .iter()
            .map(|n| self.dataset.concepts.index_of(n).map_err(Into::into))
            .collect()
    }
}

fn fmt_value(v: f64) -> String {
    format!("{v}")
}

fn plan(cfg: &ExperimentConfig, data: Option<&RealData>) -> HarnessResult<Vec<RowSpec>> {
    let mut rows = Vec::new();
    match cfg.experiment {
        Experiment::SyntheticGaussian => {
            for &b in &cfg.betas {
                rows.push(RowSpec {
                    label: format!("skit:z2:beta={}", fmt_value(b)),
                    group: None,
                    task: Task::GaussSkit { beta2: b },
                });
            }
            for &b in &cfg.betas {
                rows.push(RowSpec {
                    label: format!("cskit:z1:beta={}", fmt_value(b)),
                    group: None,
                    task: Task::GaussCskit { beta1: b },
                });
            }
            for &z3 in &cfg.z3_values {
                rows.push(RowSpec {
                    label: format!("xskit:z2:z3={}", fmt_value(z3)),
                    group: None,
                    task: Task::GaussXskit { z3 },
                });
            }
        }
        Experiment::SyntheticCounting => {
            for (j, name) in COUNTING_CONCEPTS.iter().enumerate() {
                rows.push(RowSpec {
                    label: format!("skit:{name}"),
                    group: Some(0),
                    task: Task::CountSkit { j },
                });
            }
            for (j, name) in COUNTING_CONCEPTS.iter().enumerate() {
                rows.push(RowSpec {
                    label: format!("cskit:{name}"),
                    group: Some(1),
                    task: Task::CountCskit { j },
                });
            }
        }
        Experiment::Global | Experiment::GlobalCond | Experiment::Local => {
            let data = data.expect("loaded for real-data experiments");
            let m = data.dataset.concepts.len();
            if cfg.experiment == Experiment::GlobalCond && m < 2 {
                return Err(HarnessError::Config(
                    "the conditional test needs at least two concepts".into(),
                ));
            }
            if cfg.experiment == Experiment::Local && cfg.cond_size >= m {
                return Err(HarnessError::Config(format!(
                    "cond-size must be below the number of concepts ({m})"
                )));
            }
            for j in data.tested_concepts(cfg)? {
                let task = match cfg.experiment {
                    Experiment::Global => Task::Global { j },
                    Experiment::GlobalCond => Task::GlobalCond { j },
                    _ => Task::Local { j },
                };
                rows.push(RowSpec {
                    label: data.dataset.concepts.names[j].clone(),
                    group: Some(0),
                    task,
                });
            }
        }
    }
    Ok(rows)
}

fn run_task(
    cfg: &ExperimentConfig,
    data: Option<&RealData>,
    task: Task,
    seed: u64,
    multiplicity: usize,
) -> HarnessResult<TestOutcome> {
    let tc = cfg.test_config(seed, multiplicity);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = cfg.tau_max;
    let out = match task {
        Task::GaussSkit { beta2 } => {
            let p = GaussianDgpParams::default().with_beta([1.0, beta2, 1.0]);
            let stream: Vec<(f64, f64)> = (0..n)
                .map(|_| {
                    let (z, y) = p.sample(&mut rng);
                    (y, z[1])
                })
                .collect();
            run_skit(stream, &tc)?
        }
        Task::GaussCskit { beta1 } => {
            let p = GaussianDgpParams::default().with_beta([beta1, 1.0, 1.0]);
            let stream: Vec<(f64, f64, [f64; 2])> = (0..n)
                .map(|_| {
                    let (z, y) = p.sample(&mut rng);
                    (y, z[0], [z[1], z[2]])
                })
                .collect();
            run_cskit(stream, &GaussianZ1Sampler(p), &tc)?
        }
        Task::GaussXskit { z3 } => {
            let p = GaussianDgpParams::default();
            run_xskit(
                &[1.0, 1.0, z3],
                1,
                &[2],
                &GaussianSubsetSampler(p),
                &GaussianResponse(p),
                &tc,
            )?
        }
        Task::CountSkit { j } => {
            let p = CountingDgpParams::default();
            let stream: Vec<(f64, f64)> = (0..n)
                .map(|_| {
                    let z = p.sample_z(&mut rng);
                    (CountingOracle.predict(&z, &mut rng), z[j])
                })
                .collect();
            run_skit(stream, &tc)?
        }
        Task::CountCskit { j } => {
            let p = CountingDgpParams::default();
            let stream: Vec<(f64, f64, Vec<f64>)> = (0..n)
                .map(|_| {
                    let z = p.sample_z(&mut rng);
                    let y = CountingOracle.predict(&z, &mut rng);
                    let rest = (0..6).filter(|&k| k != j).map(|k| z[k]).collect();
                    (y, z[j], rest)
                })
                .collect();
            run_cskit(stream, &CountingConceptSampler { params: p, j }, &tc)?
        }
        Task::Global { j } => {
            let d = data.expect("real data");
            run_skit(stream_global(&d.z, &d.scores, j, &mut rng), &tc)?
        }
        Task::GlobalCond { j } => {
            let d = data.expect("real data");
            let kde = d.kde.as_ref().expect("built for this experiment");
            let stream = stream_global_cond(&d.z, &d.scores, j, &mut rng);
            run_cskit(stream, &kde.for_concept(j)?, &tc)?
        }
        Task::Local { j } => {
            let d = data.expect("real data");
            let sampler = d
                .embedding_sampler
                .as_ref()
                .expect("built for this experiment");
            let i = d.sample.expect("resolved on load");
            let others: Vec<usize> = (0..d.z.cols()).filter(|&k| k != j).collect();
            let mut subset: Vec<usize> = sample_indices(&mut rng, others.len(), cfg.cond_size)
                .into_iter()
                .map(|k| others[k])
                .collect();
            subset.sort_unstable();
            run_xskit(d.z.row(i), j, &subset, sampler, &d.classifier, &tc)?
        }
    };
    Ok(out)
}

/// Aggregated result of one row.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RowResult {
    pub concept: String,
    pub rejection_rate: f64,
    pub mean_normalized_tau: f64,
    /// Most frequent 1-based position in the per-repetition FDR ranking
    /// (smallest position on ties); `None` for rows without a group.
    pub fdr_rank: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct ExperimentOutput {
    pub rows: Vec<RowResult>,
    /// `outcomes[row][rep]`.
    pub outcomes: Vec<Vec<TestOutcome>>,
}

fn modal(positions: &[usize]) -> Option<usize> {
    let mut counts = BTreeMap::new();
    for &p in positions {
        *counts.entry(p).or_insert(0usize) += 1;
    }
    // BTreeMap iterates by position, so max_by_key keeps the last maximum;
    // iterate in reverse to prefer the smallest position
    counts
        .into_iter()
        .rev()
        .max_by_key(|&(_, c)| c)
        .map(|(p, _)| p)
}

/// Runs every `(row, repetition)` task on a pool of `threads` workers
/// (0 means available parallelism) and aggregates the results.
pub fn run_experiment(cfg: &ExperimentConfig, threads: usize) -> HarnessResult<ExperimentOutput> {
    cfg.validate()?;
    let data = match cfg.experiment {
        Experiment::Global | Experiment::GlobalCond | Experiment::Local => {
            Some(RealData::load(cfg)?)
        }
        _ => None,
    };
    let rows = plan(cfg, data.as_ref())?;
    let mut group_sizes: BTreeMap<usize, usize> = BTreeMap::new();
    for r in &rows {
        if let Some(g) = r.group {
            *group_sizes.entry(g).or_default() += 1;
        }
    }
    let tasks: Vec<(usize, usize)> = (0..rows.len())
        .flat_map(|r| (0..cfg.reps).map(move |k| (r, k)))
        .collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| HarnessError::Config(format!("cannot start worker pool: {e}")))?;
    let flat: Vec<TestOutcome> = pool.install(|| {
        tasks
            .par_iter()
            .map(|&(r, k)| {
                let row = &rows[r];
                let m = row.group.map_or(1, |g| group_sizes[&g]);
                let seed = task_seed(cfg.seed, k as u64, r as u64);
                run_task(cfg, data.as_ref(), row.task, seed, m)
            })
            .collect::<HarnessResult<Vec<_>>>()
    })?;
    let mut outcomes: Vec<Vec<TestOutcome>> = vec![Vec::with_capacity(cfg.reps); rows.len()];
    for (&(r, _), o) in tasks.iter().zip(flat) {
        outcomes[r].push(o);
    }

    let mut positions: Vec<Vec<usize>> = vec![Vec::new(); rows.len()];
    for &g in group_sizes.keys() {
        let members: Vec<usize> = (0..rows.len())
            .filter(|&r| rows[r].group == Some(g))
            .collect();
        #[allow(clippy::needless_range_loop)]
        for k in 0..cfg.reps {
            let paths: Vec<&[f64]> = members
                .iter()
                .map(|&r| outcomes[r][k].wealth_trajectory.as_slice())
                .collect();
            let terminal: Vec<f64> = members
                .iter()
                .map(|&r| outcomes[r][k].final_log_wealth())
                .collect();
            let ranked = greedy_fdr(&paths, cfg.alpha)?;
            for (pos, local) in ranked.full_order(&terminal).into_iter().enumerate() {
                positions[members[local]].push(pos + 1);
            }
        }
    }

    let results = rows
        .iter()
        .enumerate()
        .map(|(r, spec)| {
            let agg = aggregate_outcomes(&outcomes[r]);
            RowResult {
                concept: spec.label.clone(),
                rejection_rate: agg.rejection_rate,
                mean_normalized_tau: agg.mean_normalized_tau,
                fdr_rank: modal(&positions[r]),
            }
        })
        .collect();
    Ok(ExperimentOutput {
        rows: results,
        outcomes,
    })
}

fn output_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Output {
        path: path.to_path_buf(),
        source,
    }
}

/// `concept,rejection_rate,mean_normalized_tau,fdr_rank` with one row per
/// tested concept or grid point; `fdr_rank` is empty for ungrouped rows.
pub fn results_csv(rows: &[RowResult]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "concept",
        "rejection_rate",
        "mean_normalized_tau",
        "fdr_rank",
    ])
    .expect("in-memory write");
    for r in rows {
        w.write_record([
            r.concept.clone(),
            format!("{}", r.rejection_rate),
            format!("{}", r.mean_normalized_tau),
            r.fdr_rank.map(|p| p.to_string()).unwrap_or_default(),
        ])
        .expect("in-memory write");
    }
    String::from_utf8(w.into_inner().expect("in-memory flush")).expect("utf-8 fields")
}

#[derive(Serialize)]
struct RunRecord<'a> {
    config: &'a ExperimentConfig,
    threads: usize,
    versions: BTreeMap<&'static str, &'static str>,
    rows: &'a [RowResult],
}

/// Log-wealth of the first repetition of each row, as an SVG line chart.
pub fn wealth_svg(labels: &[String], outcomes: &[Vec<TestOutcome>], log_threshold: f64) -> String {
    const W: f64 = 640.0;
    const H: f64 = 360.0;
    const PAD: f64 = 40.0;
    let paths: Vec<&[f64]> = outcomes
        .iter()
        .map(|o| {
            o.first()
                .map_or(&[][..], |o| o.wealth_trajectory.as_slice())
        })
        .collect();
    let len = paths.iter().map(|p| p.len()).max().unwrap_or(1).max(1) as f64;
    let (mut lo, mut hi) = (0.0f64, log_threshold);
    for p in &paths {
        for &v in p.iter() {
            lo = lo.min(v);
            hi = hi.max(v);
        }
    }
    if hi - lo < 1e-9 {
        hi = lo + 1.0;
    }
    let x = |i: f64| PAD + (W - 2.0 * PAD) * i / len;
    let y = |v: f64| H - PAD - (H - 2.0 * PAD) * (v - lo) / (hi - lo);
    let palette = [
        "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
        "#bcbd22", "#17becf",
    ];
    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" font-family="sans-serif" font-size="10">"#
    );
    let _ = writeln!(s, r#"<rect width="100%" height="100%" fill="white"/>"#);
    let _ = writeln!(
        s,
        r#"<line x1="{}" y1="{:.2}" x2="{}" y2="{:.2}" stroke="black" stroke-dasharray="4 3"/>"#,
        PAD,
        y(log_threshold),
        W - PAD,
        y(log_threshold)
    );
    let _ = writeln!(
        s,
        r#"<text x="{}" y="{:.2}">log(1/alpha)</text>"#,
        W - PAD - 60.0,
        y(log_threshold) - 4.0
    );
    for (k, (p, label)) in paths.iter().zip(labels).enumerate() {
        let color = palette[k % palette.len()];
        let mut pts = format!("{:.2},{:.2}", x(0.0), y(0.0));
        for (i, &v) in p.iter().enumerate() {
            let _ = write!(pts, " {:.2},{:.2}", x(i as f64 + 1.0), y(v));
        }
        let _ = writeln!(
            s,
            r#"<polyline fill="none" stroke="{color}" points="{pts}"><title>{}</title></polyline>"#,
            xml_escape(label)
        );
    }
    let _ = writeln!(s, r#"<text x="{PAD}" y="{}">round</text>"#, H - 10.0);
    let _ = writeln!(s, r#"<text x="4" y="{}">log-wealth</text>"#, PAD - 10.0);
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;")
        .replace('<', "&lt;")
        .replace('>', "&gt;")
}

/// Runs the experiment and writes `results.csv`, `run.json` and, when
/// requested, `wealth.svg` into `cfg.out`.
pub fn run_and_write(cfg: &ExperimentConfig, threads: usize) -> HarnessResult<ExperimentOutput> {
    cfg.validate()?;
    std::fs::create_dir_all(&cfg.out).map_err(output_err(&cfg.out))?;
    let output = run_experiment(cfg, threads)?;
    let csv_path = cfg.out.join("results.csv");
    std::fs::write(&csv_path, results_csv(&output.rows)).map_err(output_err(&csv_path))?;
    let record = RunRecord {
        config: cfg,
        threads,
        versions: BTreeMap::from([
            ("betkit", env!("CARGO_PKG_VERSION")),
            ("results_schema", "1"),
        ]),
        rows: &output.rows,
    };
    let json_path = cfg.out.join("run.json");
    let json = serde_json::to_string_pretty(&record).expect("config serializes");
    std::fs::write(&json_path, json + "\n").map_err(output_err(&json_path))?;
    if cfg.plot {
        let labels: Vec<String> = output.rows.iter().map(|r| r.concept.clone()).collect();
        let svg = wealth_svg(&labels, &output.outcomes, (1.0 / cfg.alpha).ln());
        let svg_path = cfg.out.join("wealth.svg");
        std::fs::write(&svg_path, svg).map_err(output_err(&svg_path))?;
    }
    Ok(output)
}

/// One row of a `results.csv` file as read back.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ResultRecord {
    pub concept: String,
    pub rejection_rate: f64,
    pub mean_normalized_tau: f64,
    pub fdr_rank: Option<usize>,
}

pub fn read_results(path: &Path) -> HarnessResult<Vec<ResultRecord>> {
    let err = |reason: String| HarnessError::Results {
        path: path.to_path_buf(),
        reason,
    };
    let mut r = csv::Reader::from_path(path).map_err(|e| err(e.to_string()))?;
    r.deserialize()
        .collect::<Result<Vec<ResultRecord>, _>>()
        .map_err(|e| err(e.to_string()))
}

/// Importance order: FDR rank, then higher rejection rate, then shorter
/// rejection time, then name.
pub fn ranking(records: &[ResultRecord]) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..records.len()).collect();
    idx.sort_by(|&a, &b| {
        let (ra, rb) = (&records[a], &records[b]);
        ra.fdr_rank
            .unwrap_or(usize::MAX)
            .cmp(&rb.fdr_rank.unwrap_or(usize::MAX))
            .then(rb.rejection_rate.total_cmp(&ra.rejection_rate))
            .then(ra.mean_normalized_tau.total_cmp(&rb.mean_normalized_tau))
            .then(ra.concept.cmp(&rb.concept))
    });
    idx
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CompareReport {
    /// Weighted Kendall tau with the first file as reference.
    pub tau_ab: f64,
    /// Weighted Kendall tau with the second file as reference.
    pub tau_ba: f64,
    pub importance_agreement: f64,
    /// F1 of the first file's important set against a ground truth, when given.
    pub f1: Option<f64>,
}

/// Rank and importance agreement between two results files over the same concepts.
pub fn compare_ranks(
    a: &[ResultRecord],
    b: &[ResultRecord],
    alpha: f64,
    truth: Option<&[String]>,
) -> HarnessResult<CompareReport> {
    use betkit_core::multiplicity::{importance_agreement, importance_f1, weighted_kendall_tau};
    let index: BTreeMap<&str, usize> = a
        .iter()
        .enumerate()
        .map(|(i, r)| (r.concept.as_str(), i))
        .collect();
    if a.len() != b.len() || b.iter().any(|r| !index.contains_key(r.concept.as_str())) {
        return Err(HarnessError::Config(
            "the two results files must list the same concepts".into(),
        ));
    }
    // express both rankings in the first file's concept indices
    let order_a = ranking(a);
    let order_b: Vec<usize> = ranking(b)
        .into_iter()
        .map(|k| index[b[k].concept.as_str()])
        .collect();
    let mut rates_b = vec![0.0; a.len()];
    for r in b {
        rates_b[index[r.concept.as_str()]] = r.rejection_rate;
    }
    let rates_a: Vec<f64> = a.iter().map(|r| r.rejection_rate).collect();
    let f1 = match truth {
        None => None,
        Some(names) => {
            let truth_idx = names
                .iter()
                .map(|n| {
                    index.get(n.as_str()).copied().ok_or_else(|| {
                        HarnessError::Config(format!(
                            "ground-truth concept {n:?} is not in the results"
                        ))
                    })
                })
                .collect::<HarnessResult<Vec<_>>>()?;
            let predicted: Vec<usize> = (0..a.len()).filter(|&i| rates_a[i] > alpha).collect();
            Some(importance_f1(&predicted, &truth_idx, a.len())?)
        }
    };
    Ok(CompareReport {
        tau_ab: weighted_kendall_tau(&order_a, &order_b)?,
        tau_ba: weighted_kendall_tau(&order_b, &order_a)?,
        importance_agreement: importance_agreement(&rates_a, &rates_b, alpha)?,
        f1,
    })
}
