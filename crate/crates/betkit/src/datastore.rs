//! NPY arrays plus a JSON manifest describing an embedding dataset, a concept
//! dictionary and a linear zero-shot classifier.
//!
//! Manifest layout (paths are relative to the manifest's directory):
//!
//! ```json
//! {"version": 1,
//!  "embeddings": {"path": "embeddings.npy", "rows": 2000, "dim": 32},
//!  "concepts": {"path": "concepts.npy", "dim": 32, "names": ["stripes", "..."]},
//!  "classifier": {"path": "classifier.npy", "classes": ["zebra", "..."],
//!                 "score_mode": "logit", "temperature": 1.0}}
//! ```
//!
//! Embeddings are `n x d`, concepts `d x m` and classifier weights `k x d`.
//! Arrays are little-endian `f8` on write; `f4` and big-endian files are
//! accepted on read.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter};
use std::path::{Path, PathBuf};

use betkit_core::testers::{Classifier, ScoreMode};
use betkit_core::Matrix;
use npyz::{NpyFile, Order, TypeChar, WriterBuilder};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

pub const MANIFEST_VERSION: u32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum DataError {
    #[error("file not found: {0}")]
    MissingFile(PathBuf),
    #[error("cannot read or write {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("invalid manifest {path}: {reason}")]
    Manifest { path: PathBuf, reason: String },
    #[error("unsupported array in {path}: {reason}")]
    Format { path: PathBuf, reason: String },
    #[error("shape mismatch for {what}: expected {expected}, found {found}")]
    Shape {
        what: String,
        expected: String,
        found: String,
    },
    #[error("non-finite value in {what}")]
    NonFinite { what: String },
    #[error("duplicate name {name:?} in {what}")]
    DuplicateName { what: String, name: String },
    #[error("unknown {what} {name:?}")]
    UnknownName { what: String, name: String },
    #[error(transparent)]
    Core(#[from] betkit_core::Error),
}

pub type DataResult<T> = std::result::Result<T, DataError>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub version: u32,
    pub embeddings: EmbeddingsEntry,
    pub concepts: ConceptsEntry,
    pub classifier: ClassifierEntry,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingsEntry {
    pub path: String,
    pub rows: usize,
    pub dim: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub ids: Option<Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConceptsEntry {
    pub path: String,
    pub dim: usize,
    pub names: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassifierEntry {
    pub path: String,
    pub classes: Vec<String>,
    #[serde(default = "default_score_mode")]
    pub score_mode: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
}

fn default_score_mode() -> String {
    "logit".into()
}

/// Unit-norm embeddings, one per row.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingDataset {
    pub h: Matrix,
    pub ids: Option<Vec<String>>,
}

/// Unit-norm concept vectors, one per column.
#[derive(Debug, Clone, PartialEq)]
pub struct ConceptDictionary {
    pub c: Matrix,
    pub names: Vec<String>,
}

impl ConceptDictionary {
    pub fn len(&self) -> usize {
        self.names.len()
    }

    pub fn is_empty(&self) -> bool {
        self.names.is_empty()
    }

    pub fn index_of(&self, name: &str) -> DataResult<usize> {
        self.names
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| DataError::UnknownName {
                what: "concept".into(),
                name: name.into(),
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub embeddings: EmbeddingDataset,
    pub concepts: ConceptDictionary,
    pub classifier: Classifier,
}

impl Dataset {
    /// Builds a dataset from raw arrays, normalizing and checking shapes.
    pub fn new(
        h: Matrix,
        ids: Option<Vec<String>>,
        c: Matrix,
        names: Vec<String>,
        classifier: Classifier,
    ) -> DataResult<Self> {
        let embeddings = EmbeddingDataset::new(h, ids)?;
        let concepts = ConceptDictionary::new(c, names)?;
        check_shape(
            "concepts",
            embeddings.h.cols(),
            concepts.c.rows(),
            "rows (d)",
        )?;
        check_shape(
            "classifier",
            embeddings.h.cols(),
            classifier.dim(),
            "columns (d)",
        )?;
        Ok(Dataset {
            embeddings,
            concepts,
            classifier,
        })
    }

    /// `n x m` concept activations.
    pub fn project(&self) -> Matrix {
        project_concepts(&self.embeddings, &self.concepts)
    }

    pub fn class_index(&self, name: &str) -> DataResult<usize> {
        self.classifier
            .class_names()
            .iter()
            .position(|n| n == name)
            .ok_or_else(|| DataError::UnknownName {
                what: "class".into(),
                name: name.into(),
            })
    }

    /// Target-class scores of every embedding.
    pub fn scores(&self) -> Vec<f64> {
        self.embeddings
            .h
            .iter_rows()
            .map(|h| {
                self.classifier
                    .score(h)
                    .expect("dimensions checked on load")
            })
            .collect()
    }
}

fn check_shape(what: &str, expected: usize, found: usize, axis: &str) -> DataResult<()> {
    if expected != found {
        return Err(DataError::Shape {
            what: what.into(),
            expected: format!("{expected} {axis}"),
            found: found.to_string(),
        });
    }
    Ok(())
}

fn check_finite(what: &str, m: &Matrix) -> DataResult<()> {
    if m.as_slice().iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(DataError::NonFinite { what: what.into() })
    }
}

fn check_unique(what: &str, names: &[String]) -> DataResult<()> {
    let mut seen = HashSet::new();
    for n in names {
        if !seen.insert(n) {
            return Err(DataError::DuplicateName {
                what: what.into(),
                name: n.clone(),
            });
        }
    }
    Ok(())
}

fn check_nonempty(what: &str, m: &Matrix) -> DataResult<()> {
    if m.rows() == 0 || m.cols() == 0 {
        return Err(DataError::Shape {
            what: what.into(),
            expected: "at least 1 x 1".into(),
            found: format!("{} x {}", m.rows(), m.cols()),
        });
    }
    Ok(())
}

impl EmbeddingDataset {
    pub fn new(mut h: Matrix, ids: Option<Vec<String>>) -> DataResult<Self> {
        check_nonempty("embeddings", &h)?;
        check_finite("embeddings", &h)?;
        if let Some(ids) = &ids {
            check_shape("embedding ids", h.rows(), ids.len(), "ids")?;
        }
        h.normalize_rows();
        Ok(EmbeddingDataset { h, ids })
    }

    pub fn len(&self) -> usize {
        self.h.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.h.rows() == 0
    }

    /// Row index of a sample given either its id or its position.
    pub fn resolve_sample(&self, key: &str) -> DataResult<usize> {
        if let Some(ids) = &self.ids {
            if let Some(i) = ids.iter().position(|id| id == key) {
                return Ok(i);
            }
        }
        match key.parse::<usize>() {
            Ok(i) if i < self.len() => Ok(i),
            _ => Err(DataError::UnknownName {
                what: "sample".into(),
                name: key.into(),
            }),
        }
    }
}

impl ConceptDictionary {
    pub fn new(mut c: Matrix, names: Vec<String>) -> DataResult<Self> {
        check_nonempty("concepts", &c)?;
        check_finite("concepts", &c)?;
        check_shape("concept names", c.cols(), names.len(), "names")?;
        check_unique("concept names", &names)?;
        c.normalize_columns();
        Ok(ConceptDictionary { c, names })
    }
}

/// `Z = H c`: cosine similarity of every embedding with every concept.
pub fn project_concepts(h: &EmbeddingDataset, c: &ConceptDictionary) -> Matrix {
    let (n, d, m) = (h.h.rows(), h.h.cols(), c.c.cols());
    let mut z = Matrix::zeros(n, m);
    for i in 0..n {
        let row = h.h.row(i);
        for j in 0..m {
            let v: f64 = (0..d).map(|k| row[k] * c.c.get(k, j)).sum();
            z.set(i, j, v.clamp(-1.0, 1.0));
        }
    }
    z
}

/// Rows in a seeded random order: `(score, z_j)` pairs, one pass without replacement.
pub fn stream_global<R: Rng + ?Sized>(
    z: &Matrix,
    scores: &[f64],
    j: usize,
    rng: &mut R,
) -> Vec<(f64, f64)> {
    permutation(z.rows(), rng)
        .into_iter()
        .map(|i| (scores[i], z.get(i, j)))
        .collect()
}

/// Like [`stream_global`] but also carries the remaining concepts.
pub fn stream_global_cond<R: Rng + ?Sized>(
    z: &Matrix,
    scores: &[f64],
    j: usize,
    rng: &mut R,
) -> Vec<(f64, f64, Vec<f64>)> {
    permutation(z.rows(), rng)
        .into_iter()
        .map(|i| {
            let row = z.row(i);
            let rest = row
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != j)
                .map(|(_, &v)| v)
                .collect();
            (scores[i], row[j], rest)
        })
        .collect()
}

fn permutation<R: Rng + ?Sized>(n: usize, rng: &mut R) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(rng);
    idx
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> DataError + '_ {
    move |source| {
        if source.kind() == std::io::ErrorKind::NotFound {
            DataError::MissingFile(path.to_path_buf())
        } else {
            DataError::Io {
                path: path.to_path_buf(),
                source,
            }
        }
    }
}

fn format_err(path: &Path, reason: impl Into<String>) -> DataError {
    DataError::Format {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

/// Reads a 2-d floating-point NPY array, widening `f4` to `f64`.
pub fn read_npy(path: &Path) -> DataResult<Matrix> {
    let file = File::open(path).map_err(io_err(path))?;
    let npy = NpyFile::new(BufReader::new(file)).map_err(|e| format_err(path, e.to_string()))?;
    let shape = npy.shape().to_vec();
    if shape.len() != 2 {
        return Err(format_err(
            path,
            format!("expected a 2-d array, shape {shape:?}"),
        ));
    }
    let (rows, cols) = (shape[0] as usize, shape[1] as usize);
    let order = npy.order();
    let width = match npy.dtype() {
        npyz::DType::Plain(ts) if ts.type_char() == TypeChar::Float => ts.size_field(),
        other => {
            return Err(format_err(
                path,
                format!("dtype {} is not a float", other.descr()),
            ))
        }
    };
    let data: Vec<f64> = match width {
        8 => npy.into_vec::<f64>(),
        4 => npy
            .into_vec::<f32>()
            .map(|v| v.into_iter().map(f64::from).collect()),
        w => return Err(format_err(path, format!("unsupported float width {w}"))),
    }
    .map_err(|e| format_err(path, e.to_string()))?;
    let m = match order {
        Order::C => Matrix::from_vec(rows, cols, data)?,
        Order::Fortran => Matrix::from_vec(cols, rows, data)?.transpose(),
    };
    Ok(m)
}

/// Writes a matrix as a C-order little-endian `f8` NPY file.
pub fn write_npy(path: &Path, m: &Matrix) -> DataResult<()> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut w = npyz::WriteOptions::new()
        .default_dtype()
        .shape(&[m.rows() as u64, m.cols() as u64])
        .writer(BufWriter::new(file))
        .begin_nd()
        .map_err(io_err(path))?;
    w.extend(m.as_slice().iter().copied())
        .map_err(io_err(path))?;
    w.finish().map_err(io_err(path))
}

fn manifest_err(path: &Path, reason: impl Into<String>) -> DataError {
    DataError::Manifest {
        path: path.to_path_buf(),
        reason: reason.into(),
    }
}

pub fn read_manifest(path: &Path) -> DataResult<Manifest> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    let manifest: Manifest =
        serde_json::from_str(&text).map_err(|e| manifest_err(path, e.to_string()))?;
    if manifest.version != MANIFEST_VERSION {
        return Err(manifest_err(
            path,
            format!("unsupported version {}", manifest.version),
        ));
    }
    Ok(manifest)
}

fn score_mode(path: &Path, entry: &ClassifierEntry) -> DataResult<ScoreMode> {
    match entry.score_mode.as_str() {
        "logit" => Ok(ScoreMode::Logit),
        "softmax" => Ok(ScoreMode::Softmax {
            temperature: entry.temperature.unwrap_or(1.0),
        }),
        other => Err(manifest_err(path, format!("unknown score_mode {other:?}"))),
    }
}

fn expect_dims(what: &str, m: &Matrix, rows: usize, cols: usize) -> DataResult<()> {
    if m.rows() != rows || m.cols() != cols {
        return Err(DataError::Shape {
            what: what.into(),
            expected: format!("{rows} x {cols}"),
            found: format!("{} x {}", m.rows(), m.cols()),
        });
    }
    Ok(())
}

/// Loads, normalizes and dimension-checks everything a manifest references.
/// The classifier targets its first class.
pub fn load_dataset(manifest_path: &Path) -> DataResult<Dataset> {
    let manifest = read_manifest(manifest_path)?;
    let base = manifest_path.parent().unwrap_or(Path::new("."));
    let e = &manifest.embeddings;
    let h = read_npy(&base.join(&e.path))?;
    expect_dims("embeddings", &h, e.rows, e.dim)?;
    let c = read_npy(&base.join(&manifest.concepts.path))?;
    expect_dims(
        "concepts",
        &c,
        manifest.concepts.dim,
        manifest.concepts.names.len(),
    )?;
    let k = &manifest.classifier;
    let mut w = read_npy(&base.join(&k.path))?;
    expect_dims("classifier", &w, k.classes.len(), e.dim)?;
    check_finite("classifier", &w)?;
    check_unique("classes", &k.classes)?;
    w.normalize_rows();
    let classifier = Classifier::new(w, k.classes.clone(), score_mode(manifest_path, k)?, 0)?;
    Dataset::new(
        h,
        e.ids.clone(),
        c,
        manifest.concepts.names.clone(),
        classifier,
    )
}

/// Writes `embeddings.npy`, `concepts.npy`, `classifier.npy` and
/// `manifest.json` into `dir` and returns the manifest path.
pub fn save_dataset(dir: &Path, data: &Dataset) -> DataResult<PathBuf> {
    std::fs::create_dir_all(dir).map_err(io_err(dir))?;
    write_npy(&dir.join("embeddings.npy"), &data.embeddings.h)?;
    write_npy(&dir.join("concepts.npy"), &data.concepts.c)?;
    write_npy(&dir.join("classifier.npy"), data.classifier.weights())?;
    let (score_mode, temperature) = match data.classifier.score_mode() {
        ScoreMode::Logit => ("logit", None),
        ScoreMode::Softmax { temperature } => ("softmax", Some(temperature)),
    };
    let manifest = Manifest {
        version: MANIFEST_VERSION,
        embeddings: EmbeddingsEntry {
            path: "embeddings.npy".into(),
            rows: data.embeddings.h.rows(),
            dim: data.embeddings.h.cols(),
            ids: data.embeddings.ids.clone(),
        },
        concepts: ConceptsEntry {
            path: "concepts.npy".into(),
            dim: data.concepts.c.rows(),
            names: data.concepts.names.clone(),
        },
        classifier: ClassifierEntry {
            path: "classifier.npy".into(),
            classes: data.classifier.class_names().to_vec(),
            score_mode: score_mode.into(),
            temperature,
        },
    };
    let path = dir.join("manifest.json");
    let text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    std::fs::write(&path, text + "\n").map_err(io_err(&path))?;
    Ok(path)
}
