//! Sample characterization scores. Higher always means harder.
//!
//! Learning-based scores read a surrogate's softmax outputs (EL2N,
//! Uncertainty) or its per-epoch correctness log (Forgetting).
//! Embedding-based scores measure distances in a feature space (SelfSup via
//! k-means, SupProto via class centers).

use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;
use crate::seed;
use crate::trainer::DynamicsLog;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ScoreMethod {
    El2n,
    Uncertainty,
    Forgetting,
    SelfSup,
    SupProto,
}

impl ScoreMethod {
    pub const ALL: [ScoreMethod; 5] = [
        ScoreMethod::El2n,
        ScoreMethod::Uncertainty,
        ScoreMethod::Forgetting,
        ScoreMethod::SelfSup,
        ScoreMethod::SupProto,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ScoreMethod::El2n => "el2n",
            ScoreMethod::Uncertainty => "uncertainty",
            ScoreMethod::Forgetting => "forgetting",
            ScoreMethod::SelfSup => "selfsup",
            ScoreMethod::SupProto => "supproto",
        }
    }

    pub fn is_embedding_based(self) -> bool {
        matches!(self, ScoreMethod::SelfSup | ScoreMethod::SupProto)
    }
}

impl fmt::Display for ScoreMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ScoreMethod {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        ScoreMethod::ALL
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s.trim()))
            .ok_or_else(|| Error::InvalidConfig(format!("unknown score method {s:?}")))
    }
}

/// One finite score per sample, in canonical sample order.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreVector {
    method: ScoreMethod,
    values: Vec<f64>,
}

impl ScoreVector {
    pub fn new(method: ScoreMethod, values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "scores",
                index: i,
            });
        }
        Ok(Self { method, values })
    }

    pub fn method(&self) -> ScoreMethod {
        self.method
    }

    /// Every method ranks harder samples higher.
    pub fn higher_is_harder(&self) -> bool {
        true
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        io::write_ssf(path, &self.values)
    }

    /// Load an SSF v1 file; SSF carries no method tag, so the caller names it.
    pub fn load(path: impl AsRef<Path>, method: ScoreMethod) -> Result<Self> {
        Self::new(method, io::read_ssf(path)?)
    }

    /// Check against a dataset of `n` samples.
    pub fn expect_len(&self, n: usize) -> Result<()> {
        if self.values.len() != n {
            return Err(Error::LengthMismatch {
                declared: n,
                found: self.values.len(),
            });
        }
        Ok(())
    }
}

/// Row-major `n x k` embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingMatrix {
    dim: usize,
    values: Vec<f64>,
}

impl EmbeddingMatrix {
    pub fn new(dim: usize, values: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidDataset("embedding dimension is zero".into()));
        }
        if !values.len().is_multiple_of(dim) {
            return Err(Error::ShapeMismatch {
                what: "embedding matrix",
                expected: values.len() / dim * dim,
                found: values.len(),
            });
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "embeddings",
                index: i / dim,
            });
        }
        Ok(Self { dim, values })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let dim = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != dim) {
            return Err(Error::InvalidDataset("ragged embedding rows".into()));
        }
        Self::new(dim, rows.concat())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.values.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.values[i * self.dim..(i + 1) * self.dim]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        io::write_emb(path, self.len(), self.dim, &self.values)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (_, dim, values) = io::read_emb(path)?;
        Self::new(dim, values)
    }
}

fn check_probs(probs: &[f64], num_classes: usize) -> Result<()> {
    if num_classes == 0 || !probs.len().is_multiple_of(num_classes) {
        return Err(Error::ShapeMismatch {
            what: "probability matrix",
            expected: probs.len() / num_classes.max(1) * num_classes,
            found: probs.len(),
        });
    }
    if let Some(i) = probs.iter().position(|p| !p.is_finite() || *p < 0.0) {
        return Err(Error::InvalidDataset(format!(
            "sample {}: probabilities must be finite and nonnegative",
            i / num_classes
        )));
    }
    Ok(())
}

/// EL2N: Euclidean distance between the predicted distribution and the
/// one-hot label.
pub fn el2n(probs: &[f64], num_classes: usize, labels: &[u32]) -> Result<ScoreVector> {
    check_probs(probs, num_classes)?;
    let n = probs.len() / num_classes;
    if labels.len() != n {
        return Err(Error::ShapeMismatch {
            what: "labels",
            expected: n,
            found: labels.len(),
        });
    }
    let mut values = Vec::with_capacity(n);
    for (row, &y) in probs.chunks_exact(num_classes).zip(labels) {
        if y as usize >= num_classes {
            return Err(Error::InvalidDataset(format!(
                "label {y} outside [0, {num_classes})"
            )));
        }
        let sq: f64 = row
            .iter()
            .enumerate()
            .map(|(c, &p)| {
                let t = if c == y as usize { 1.0 } else { 0.0 };
                (p - t) * (p - t)
            })
            .sum();
        values.push(sq.sqrt());
    }
    ScoreVector::new(ScoreMethod::El2n, values)
}

/// Natural-log entropy of each probability row, with `0 ln 0 = 0`.
pub fn uncertainty(probs: &[f64], num_classes: usize) -> Result<ScoreVector> {
    check_probs(probs, num_classes)?;
    let values = probs
        .chunks_exact(num_classes)
        .map(|row| {
            -row.iter()
                .filter(|&&p| p > 0.0)
                .map(|&p| p * p.ln())
                .sum::<f64>()
        })
        .collect();
    ScoreVector::new(ScoreMethod::Uncertainty, values)
}

/// Number of learned-then-forgotten transitions per logged sample. Samples
/// never classified correctly get the epoch count, the hardest value.
pub fn forgetting(log: &DynamicsLog) -> Result<ScoreVector> {
    let epochs = log.epochs();
    if epochs == 0 || log.sample_ids.is_empty() {
        return Err(Error::InvalidDataset("dynamics log is empty".into()));
    }
    if epochs < 2 {
        return Err(Error::InvalidDataset(
            "forgetting needs at least 2 logged epochs".into(),
        ));
    }
    let values = (0..log.sample_ids.len())
        .map(|col| {
            let mut ever = false;
            let mut prev = false;
            let mut events = 0u32;
            for c in log.history(col) {
                if prev && !c {
                    events += 1;
                }
                ever |= c;
                prev = c;
            }
            if ever {
                f64::from(events)
            } else {
                epochs as f64
            }
        })
        .collect();
    ScoreVector::new(ScoreMethod::Forgetting, values)
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// Index and squared distance of the nearest centroid; ties go to the lower index.
fn nearest(x: &[f64], centroids: &[f64], dim: usize) -> (usize, f64) {
    let mut best = (0, f64::INFINITY);
    for (j, c) in centroids.chunks_exact(dim).enumerate() {
        let d = sq_dist(x, c);
        if d < best.1 {
            best = (j, d);
        }
    }
    best
}

pub const KMEANS_TOL: f64 = 1e-6;
pub const KMEANS_MAX_ITER: usize = 300;

/// Result of Lloyd's algorithm.
#[derive(Debug, Clone, PartialEq)]
pub struct KMeans {
    pub centroids: Vec<f64>,
    pub assignments: Vec<usize>,
    pub iterations: usize,
}

/// Seeded k-means++ initialization followed by Lloyd iterations until the
/// largest centroid shift drops below [`KMEANS_TOL`] or [`KMEANS_MAX_ITER`]
/// iterations. Empty clusters keep their previous centroid.
pub fn kmeans(emb: &EmbeddingMatrix, k: usize, seed: u64) -> Result<KMeans> {
    let n = emb.len();
    let dim = emb.dim();
    if k == 0 {
        return Err(Error::InvalidConfig("k must be at least 1".into()));
    }
    if k > n {
        return Err(Error::InvalidConfig(format!(
            "k = {k} exceeds the {n} samples"
        )));
    }
    let mut rng = seed::stage_rng(seed, "kmeans++");
    let mut centroids = Vec::with_capacity(k * dim);
    centroids.extend_from_slice(emb.row(rng.random_range(0..n)));
    let mut d2: Vec<f64> = (0..n).map(|i| sq_dist(emb.row(i), &centroids)).collect();
    while centroids.len() < k * dim {
        let total: f64 = d2.iter().sum();
        let pick = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut chosen = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 && target < w {
                    chosen = i;
                    break;
                }
                target -= w;
            }
            if d2[chosen] == 0.0 {
                // float round-off ran past the last positive weight
                chosen = d2.iter().rposition(|&w| w > 0.0).expect("total > 0");
            }
            chosen
        } else {
            rng.random_range(0..n)
        };
        let start = centroids.len();
        centroids.extend_from_slice(emb.row(pick));
        for (i, w) in d2.iter_mut().enumerate() {
            *w = w.min(sq_dist(emb.row(i), &centroids[start..]));
        }
    }

    let mut assignments = vec![0usize; n];
    let mut sums = vec![0.0; k * dim];
    let mut counts = vec![0usize; k];
    let mut iterations = 0;
    while iterations < KMEANS_MAX_ITER {
        iterations += 1;
        sums.iter_mut().for_each(|s| *s = 0.0);
        counts.iter_mut().for_each(|c| *c = 0);
        for (i, a) in assignments.iter_mut().enumerate() {
            let x = emb.row(i);
            *a = nearest(x, &centroids, dim).0;
            counts[*a] += 1;
            for (s, v) in sums[*a * dim..(*a + 1) * dim].iter_mut().zip(x) {
                *s += v;
            }
        }
        let mut shift: f64 = 0.0;
        for j in 0..k {
            if counts[j] == 0 {
                continue;
            }
            let c = &mut centroids[j * dim..(j + 1) * dim];
            let mut moved = 0.0;
            for (cv, s) in c.iter_mut().zip(&sums[j * dim..(j + 1) * dim]) {
                let next = s / counts[j] as f64;
                moved += (next - *cv) * (next - *cv);
                *cv = next;
            }
            shift = shift.max(moved.sqrt());
        }
        if shift < KMEANS_TOL {
            break;
        }
    }
    for (i, a) in assignments.iter_mut().enumerate() {
        *a = nearest(emb.row(i), &centroids, dim).0;
    }
    Ok(KMeans {
        centroids,
        assignments,
        iterations,
    })
}

/// Distance of each embedding to its nearest k-means centroid.
pub fn selfsup_score(emb: &EmbeddingMatrix, k: usize, seed: u64) -> Result<ScoreVector> {
    let km = kmeans(emb, k, seed)?;
    let values = (0..emb.len())
        .map(|i| nearest(emb.row(i), &km.centroids, emb.dim()).1.sqrt())
        .collect();
    ScoreVector::new(ScoreMethod::SelfSup, values)
}

/// Distance of each embedding to the mean embedding of its own class.
pub fn supproto_score(
    emb: &EmbeddingMatrix,
    class_labels: &[u32],
    num_classes: u32,
) -> Result<ScoreVector> {
    let n = emb.len();
    let dim = emb.dim();
    if class_labels.len() != n {
        return Err(Error::ShapeMismatch {
            what: "class labels",
            expected: n,
            found: class_labels.len(),
        });
    }
    let c = num_classes as usize;
    let mut centers = vec![0.0; c * dim];
    let mut counts = vec![0usize; c];
    for (i, &y) in class_labels.iter().enumerate() {
        let y = y as usize;
        if y >= c {
            return Err(Error::InvalidDataset(format!(
                "label {y} outside [0, {num_classes})"
            )));
        }
        counts[y] += 1;
        for (s, v) in centers[y * dim..(y + 1) * dim].iter_mut().zip(emb.row(i)) {
            *s += v;
        }
    }
    if let Some(y) = counts.iter().position(|&k| k == 0) {
        return Err(Error::EmptyClass(y as u32));
    }
    for (y, center) in centers.chunks_exact_mut(dim).enumerate() {
        center.iter_mut().for_each(|v| *v /= counts[y] as f64);
    }
    let values = class_labels
        .iter()
        .enumerate()
        .map(|(i, &y)| {
            let y = y as usize;
            sq_dist(emb.row(i), &centers[y * dim..(y + 1) * dim]).sqrt()
        })
        .collect();
    ScoreVector::new(ScoreMethod::SupProto, values)
}
