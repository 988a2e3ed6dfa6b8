//! Desk-scale softmax classifier trained with mini-batch SGD.
//!
//! The model is either linear (`hidden_units == 0`) or has one tanh hidden
//! layer. It serves both as the surrogate that produces learning-based scores
//! and as the downstream model trained on a coreset.

use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::io::{read_file, read_magic, read_u32, write_file};
use crate::seed;

pub const CHECKPOINT_MAGIC: &[u8; 8] = b"CKPTv1\0\0";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    /// Epochs on the full training set; the coreset run uses `base_epochs / rate`.
    pub base_epochs: usize,
    pub selection_rate: f64,
    pub learning_rate: f64,
    pub momentum: f64,
    pub batch_size: usize,
    pub weight_decay: f64,
    /// 0 selects the linear model.
    pub hidden_units: usize,
    pub seed: u64,
    pub record_dynamics: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            base_epochs: 20,
            selection_rate: 1.0,
            learning_rate: 0.01,
            momentum: 0.9,
            batch_size: 32,
            weight_decay: 0.01,
            hidden_units: 0,
            seed: 0,
            record_dynamics: false,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        if self.base_epochs == 0 {
            return bad("base_epochs must be at least 1".into());
        }
        if !(self.selection_rate > 0.0 && self.selection_rate <= 1.0) {
            return bad(format!(
                "selection_rate = {} must lie in (0, 1]",
                self.selection_rate
            ));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning_rate = {} must be > 0",
                self.learning_rate
            ));
        }
        if !(0.0..1.0).contains(&self.momentum) {
            return bad(format!("momentum = {} must lie in [0, 1)", self.momentum));
        }
        if self.batch_size == 0 {
            return bad("batch_size must be at least 1".into());
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad(format!("weight_decay = {} must be >= 0", self.weight_decay));
        }
        Ok(())
    }

    pub fn epochs(&self) -> Result<usize> {
        scaled_epochs(self.base_epochs, self.selection_rate)
    }
}

/// Epoch count that keeps the number of optimization steps equal to
/// `base_epochs` passes over the full dataset: `round(base / rate)`.
pub fn scaled_epochs(base_epochs: usize, rate: f64) -> Result<usize> {
    if !(rate > 0.0 && rate <= 1.0) {
        return Err(Error::InvalidConfig(format!(
            "selection rate {rate} must lie in (0, 1]"
        )));
    }
    Ok((base_epochs as f64 / rate).round() as usize)
}

/// Per-epoch correctness of every training sample.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicsLog {
    /// Dataset indices covered by the log, in column order.
    pub sample_ids: Vec<usize>,
    /// One row per completed epoch, one column per entry of `sample_ids`.
    pub correct: Vec<Vec<bool>>,
}

impl DynamicsLog {
    pub fn epochs(&self) -> usize {
        self.correct.len()
    }

    /// Correctness history of the sample in column `col`.
    pub fn history(&self, col: usize) -> impl Iterator<Item = bool> + '_ {
        self.correct.iter().map(move |row| row[col])
    }

    /// CSV with header `epoch,sample_id,correct`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::file(path, e))?;
        let mut w = std::io::BufWriter::new(file);
        writeln!(w, "epoch,sample_id,correct")?;
        for (e, row) in self.correct.iter().enumerate() {
            for (&id, &c) in self.sample_ids.iter().zip(row) {
                writeln!(w, "{e},{id},{}", u8::from(c))?;
            }
        }
        w.flush()?;
        Ok(())
    }

    pub fn read_csv(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
        let mut r = csv::Reader::from_reader(std::io::BufReader::new(file));
        if r.headers()?.iter().collect::<Vec<_>>() != ["epoch", "sample_id", "correct"] {
            return Err(Error::Format(
                "expected header epoch,sample_id,correct".into(),
            ));
        }
        let mut sample_ids: Vec<usize> = Vec::new();
        let mut correct: Vec<Vec<bool>> = Vec::new();
        for (line, rec) in r.records().enumerate() {
            let rec = rec?;
            let bad = || Error::Format(format!("dynamics row {line} is malformed"));
            let epoch: usize = rec[0].trim().parse().map_err(|_| bad())?;
            let id: usize = rec[1].trim().parse().map_err(|_| bad())?;
            let c = match rec[2].trim() {
                "0" => false,
                "1" => true,
                _ => return Err(bad()),
            };
            if epoch == correct.len() {
                correct.push(Vec::with_capacity(sample_ids.len()));
            } else if epoch + 1 != correct.len() {
                return Err(Error::Format(format!(
                    "dynamics row {line}: epochs out of order"
                )));
            }
            let row = correct.last_mut().expect("row pushed");
            let col = row.len();
            if epoch == 0 {
                sample_ids.push(id);
            } else if sample_ids.get(col) != Some(&id) {
                return Err(Error::Format(format!(
                    "dynamics row {line}: sample order differs from epoch 0"
                )));
            }
            row.push(c);
        }
        if let Some((e, row)) = correct
            .iter()
            .enumerate()
            .find(|(_, r)| r.len() != sample_ids.len())
        {
            return Err(Error::Format(format!(
                "epoch {e} logs {} samples, epoch 0 logs {}",
                row.len(),
                sample_ids.len()
            )));
        }
        Ok(Self {
            sample_ids,
            correct,
        })
    }
}

/// Classifier parameters, flattened. Layout: linear `W (C x d), b (C)`;
/// hidden `W1 (h x d), b1 (h), W2 (C x h), b2 (C)`.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    input_dim: usize,
    hidden_units: usize,
    num_classes: usize,
    params: Vec<f64>,
    dynamics: Option<DynamicsLog>,
}

impl TrainedModel {
    /// Zero-initialized model. Hidden-layer weights need [`TrainedModel::init`]
    /// to break symmetry.
    pub fn zeros(input_dim: usize, hidden_units: usize, num_classes: usize) -> Self {
        let mut m = Self {
            input_dim,
            hidden_units,
            num_classes,
            params: Vec::new(),
            dynamics: None,
        };
        m.params = vec![0.0; m.param_count()];
        m
    }

    /// Linear layers start at zero; hidden layers use seeded Glorot-uniform weights.
    pub fn init(input_dim: usize, hidden_units: usize, num_classes: usize, seed: u64) -> Self {
        let mut m = Self::zeros(input_dim, hidden_units, num_classes);
        if hidden_units > 0 {
            let mut rng = seed::stage_rng(seed, "init");
            let mut offset = 0;
            for (rows, cols) in m.layer_shapes() {
                let limit = (6.0 / (rows + cols) as f64).sqrt();
                for w in &mut m.params[offset..offset + rows * cols] {
                    *w = rng.random_range(-limit..limit);
                }
                offset += rows * cols + rows;
            }
        }
        m
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn hidden_units(&self) -> usize {
        self.hidden_units
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn dynamics(&self) -> Option<&DynamicsLog> {
        self.dynamics.as_ref()
    }

    /// `(out, in)` shape of each weight matrix; each layer also has `out` biases.
    pub fn layer_shapes(&self) -> Vec<(usize, usize)> {
        if self.hidden_units == 0 {
            vec![(self.num_classes, self.input_dim)]
        } else {
            vec![
                (self.hidden_units, self.input_dim),
                (self.num_classes, self.hidden_units),
            ]
        }
    }

    fn param_count(&self) -> usize {
        self.layer_shapes().iter().map(|(r, c)| r * c + r).sum()
    }

    /// Logits for one sample. `hidden` receives the tanh activations when the
    /// model has a hidden layer.
    fn forward(&self, x: &[f64], hidden: &mut [f64], logits: &mut [f64]) {
        let (input, in_dim) = if self.hidden_units == 0 {
            (x, self.input_dim)
        } else {
            let h = self.hidden_units;
            let (w1, rest) = self.params.split_at(h * self.input_dim);
            let b1 = &rest[..h];
            for k in 0..h {
                let row = &w1[k * self.input_dim..(k + 1) * self.input_dim];
                hidden[k] = (dot(row, x) + b1[k]).tanh();
            }
            (&hidden[..], h)
        };
        let offset = self.last_layer_offset();
        let w = &self.params[offset..offset + self.num_classes * in_dim];
        let b = &self.params[offset + self.num_classes * in_dim..];
        for c in 0..self.num_classes {
            logits[c] = dot(&w[c * in_dim..(c + 1) * in_dim], input) + b[c];
        }
    }

    fn last_layer_offset(&self) -> usize {
        if self.hidden_units == 0 {
            0
        } else {
            self.hidden_units * self.input_dim + self.hidden_units
        }
    }

    fn check_dim(&self, dim: usize) -> Result<()> {
        if dim != self.input_dim {
            return Err(Error::ShapeMismatch {
                what: "feature dimension",
                expected: self.input_dim,
                found: dim,
            });
        }
        Ok(())
    }

    /// Row-stochastic `n x C` class probabilities for row-major `features`.
    pub fn predict_proba(&self, features: &[f64], dim: usize) -> Result<Vec<f64>> {
        self.check_dim(dim)?;
        if !features.len().is_multiple_of(dim) {
            return Err(Error::ShapeMismatch {
                what: "feature matrix",
                expected: features.len() / dim * dim,
                found: features.len(),
            });
        }
        let c = self.num_classes;
        let mut hidden = vec![0.0; self.hidden_units];
        let mut out = vec![0.0; features.len() / dim * c];
        for (x, p) in features.chunks_exact(dim).zip(out.chunks_exact_mut(c)) {
            self.forward(x, &mut hidden, p);
            softmax_in_place(p);
        }
        Ok(out)
    }

    pub fn predict_proba_dataset(&self, ds: &LabeledDataset) -> Result<Vec<f64>> {
        self.predict_proba(ds.features(), ds.dim())
    }

    /// Argmax class per row of `features`; ties go to the lower class.
    pub fn predict(&self, features: &[f64], dim: usize) -> Result<Vec<u32>> {
        let probs = self.predict_proba(features, dim)?;
        Ok(probs.chunks_exact(self.num_classes).map(argmax).collect())
    }

    /// Penultimate representation: hidden activations, or the raw features
    /// for a linear model. Returns `(dim, row-major values)`.
    pub fn embed(&self, ds: &LabeledDataset) -> Result<(usize, Vec<f64>)> {
        self.check_dim(ds.dim())?;
        if self.hidden_units == 0 {
            return Ok((ds.dim(), ds.features().to_vec()));
        }
        let h = self.hidden_units;
        let mut out = vec![0.0; ds.len() * h];
        let mut logits = vec![0.0; self.num_classes];
        for (i, row) in out.chunks_exact_mut(h).enumerate() {
            self.forward(ds.row(i), row, &mut logits);
        }
        Ok((h, out))
    }

    pub fn write_checkpoint(&self, path: impl AsRef<Path>) -> Result<()> {
        write_file(path.as_ref(), &self.encode_checkpoint())
    }

    pub fn read_checkpoint(path: impl AsRef<Path>) -> Result<Self> {
        Self::decode_checkpoint(&read_file(path.as_ref())?)
    }

    /// Magic `CKPTv1\0\0`; u32 input dim, hidden units, classes, layer count;
    /// then per layer u32 rows, u32 cols, `rows * cols` weights and `rows`
    /// biases as f32, all little-endian.
    pub fn encode_checkpoint(&self) -> Vec<u8> {
        let mut out = CHECKPOINT_MAGIC.to_vec();
        let shapes = self.layer_shapes();
        for v in [
            self.input_dim,
            self.hidden_units,
            self.num_classes,
            shapes.len(),
        ] {
            out.extend_from_slice(&(v as u32).to_le_bytes());
        }
        let mut offset = 0;
        for (rows, cols) in shapes {
            out.extend_from_slice(&(rows as u32).to_le_bytes());
            out.extend_from_slice(&(cols as u32).to_le_bytes());
            for &p in &self.params[offset..offset + rows * cols + rows] {
                out.extend_from_slice(&(p as f32).to_le_bytes());
            }
            offset += rows * cols + rows;
        }
        out
    }

    pub fn decode_checkpoint(bytes: &[u8]) -> Result<Self> {
        read_magic(bytes, CHECKPOINT_MAGIC, "checkpoint")?;
        let input_dim = read_u32(bytes, 8, "input dim")? as usize;
        let hidden = read_u32(bytes, 12, "hidden units")? as usize;
        let classes = read_u32(bytes, 16, "class count")? as usize;
        let layers = read_u32(bytes, 20, "layer count")? as usize;
        let mut model = Self::zeros(input_dim, hidden, classes);
        let shapes = model.layer_shapes();
        if layers != shapes.len() {
            return Err(Error::Format(format!(
                "checkpoint declares {layers} layers, architecture has {}",
                shapes.len()
            )));
        }
        let mut at = 24;
        let mut offset = 0;
        for (rows, cols) in shapes {
            let r = read_u32(bytes, at, "layer rows")? as usize;
            let c = read_u32(bytes, at + 4, "layer cols")? as usize;
            if (r, c) != (rows, cols) {
                return Err(Error::Format(format!(
                    "layer shape {r}x{c} does not match expected {rows}x{cols}"
                )));
            }
            at += 8;
            let count = rows * cols + rows;
            let body = bytes
                .get(at..at + 4 * count)
                .ok_or_else(|| Error::Format("checkpoint truncated".into()))?;
            for (i, chunk) in body.chunks_exact(4).enumerate() {
                let v = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        what: "checkpoint parameters",
                        index: offset + i,
                    });
                }
                model.params[offset + i] = f64::from(v);
            }
            at += 4 * count;
            offset += count;
        }
        if at != bytes.len() {
            return Err(Error::Format("trailing bytes after checkpoint".into()));
        }
        Ok(model)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn argmax(p: &[f64]) -> u32 {
    let mut best = 0;
    for (c, &v) in p.iter().enumerate() {
        if v > p[best] {
            best = c;
        }
    }
    best as u32
}

/// Numerically stable softmax, overwriting logits with probabilities.
pub fn softmax_in_place(v: &mut [f64]) {
    let max = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut sum = 0.0;
    for x in v.iter_mut() {
        *x = (*x - max).exp();
        sum += *x;
    }
    for x in v.iter_mut() {
        *x /= sum;
    }
}

/// Mean cross-entropy over `indices` plus `0.5 * weight_decay * |params|^2`,
/// with its analytic gradient accumulated into `grad` (overwritten).
fn objective_into(
    model: &TrainedModel,
    ds: &LabeledDataset,
    indices: &[usize],
    weight_decay: f64,
    grad: &mut [f64],
) -> f64 {
    let c = model.num_classes;
    let d = model.input_dim;
    let h = model.hidden_units;
    grad.iter_mut().for_each(|g| *g = 0.0);
    let mut hidden = vec![0.0; h];
    let mut dhidden = vec![0.0; h];
    let mut p = vec![0.0; c];
    let scale = 1.0 / indices.len() as f64;
    let last = model.last_layer_offset();
    let mut loss = 0.0;
    for &i in indices {
        let x = ds.row(i);
        let y = ds.class_labels()[i] as usize;
        model.forward(x, &mut hidden, &mut p);
        let max = p.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + p.iter().map(|z| (z - max).exp()).sum::<f64>().ln();
        loss += lse - p[y];
        softmax_in_place(&mut p);
        p[y] -= 1.0;
        let (input, in_dim) = if h == 0 { (x, d) } else { (&hidden[..], h) };
        let (gw, gb) = grad[last..].split_at_mut(c * in_dim);
        for k in 0..c {
            let delta = p[k] * scale;
            for (g, &xi) in gw[k * in_dim..(k + 1) * in_dim].iter_mut().zip(input) {
                *g += delta * xi;
            }
            gb[k] += delta;
        }
        if h > 0 {
            let w2 = &model.params[last..last + c * h];
            for j in 0..h {
                let back: f64 = (0..c).map(|k| p[k] * w2[k * h + j]).sum();
                dhidden[j] = back * (1.0 - hidden[j] * hidden[j]) * scale;
            }
            let (gw1, rest) = grad[..last].split_at_mut(h * d);
            for j in 0..h {
                for (g, &xi) in gw1[j * d..(j + 1) * d].iter_mut().zip(x) {
                    *g += dhidden[j] * xi;
                }
                rest[j] += dhidden[j];
            }
        }
    }
    loss *= scale;
    if weight_decay > 0.0 {
        let mut sq = 0.0;
        for (g, &w) in grad.iter_mut().zip(&model.params) {
            *g += weight_decay * w;
            sq += w * w;
        }
        loss += 0.5 * weight_decay * sq;
    }
    loss
}

/// Training objective and its analytic gradient over `indices`.
pub fn loss_and_gradient(
    model: &TrainedModel,
    ds: &LabeledDataset,
    indices: &[usize],
    weight_decay: f64,
) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; model.params.len()];
    let loss = objective_into(model, ds, indices, weight_decay, &mut grad);
    (loss, grad)
}

/// Training objective only.
pub fn loss(
    model: &TrainedModel,
    ds: &LabeledDataset,
    indices: &[usize],
    weight_decay: f64,
) -> f64 {
    loss_and_gradient(model, ds, indices, weight_decay).0
}

/// Train on `subset` (all samples when `None`) for `cfg.epochs()` epochs of
/// momentum SGD. Batches come from a seeded Fisher-Yates shuffle each epoch;
/// the last partial batch is kept.
pub fn train(
    ds: &LabeledDataset,
    subset: Option<&[usize]>,
    cfg: &TrainConfig,
) -> Result<TrainedModel> {
    cfg.validate()?;
    let all: Vec<usize>;
    let subset = match subset {
        Some(s) => s,
        None => {
            all = (0..ds.len()).collect();
            &all
        }
    };
    if subset.is_empty() {
        return Err(Error::EmptySubset);
    }
    if let Some(&bad) = subset.iter().find(|&&i| i >= ds.len()) {
        return Err(Error::InvalidDataset(format!(
            "subset index {bad} out of range for {} samples",
            ds.len()
        )));
    }
    let epochs = cfg.epochs()?;
    let mut model = TrainedModel::init(
        ds.dim(),
        cfg.hidden_units,
        ds.num_classes() as usize,
        cfg.seed,
    );
    let mut rng = seed::stage_rng(cfg.seed, "shuffle");
    let mut order = subset.to_vec();
    let mut velocity = vec![0.0; model.params.len()];
    let mut grad = vec![0.0; model.params.len()];
    let mut log = cfg.record_dynamics.then(|| DynamicsLog {
        sample_ids: subset.to_vec(),
        correct: Vec::with_capacity(epochs),
    });
    let mut sub_features = Vec::new();
    if log.is_some() {
        sub_features.reserve(subset.len() * ds.dim());
        for &i in subset {
            sub_features.extend_from_slice(ds.row(i));
        }
    }
    for epoch in 0..epochs {
        order.shuffle(&mut rng);
        for batch in order.chunks(cfg.batch_size) {
            let l = objective_into(&model, ds, batch, cfg.weight_decay, &mut grad);
            if !l.is_finite() {
                return Err(Error::Diverged { epoch });
            }
            for ((w, v), g) in model.params.iter_mut().zip(&mut velocity).zip(&grad) {
                *v = cfg.momentum * *v + g;
                *w -= cfg.learning_rate * *v;
            }
        }
        if let Some(log) = log.as_mut() {
            let preds = model.predict(&sub_features, ds.dim())?;
            log.correct.push(
                preds
                    .iter()
                    .zip(subset)
                    .map(|(&p, &i)| p == ds.class_labels()[i])
                    .collect(),
            );
        }
    }
    model.dynamics = log;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> LabeledDataset {
        LabeledDataset::new(
            "toy",
            2,
            vec![-2.0, -1.0, -1.5, 0.5, 2.0, 1.0, 1.5, -0.5],
            vec![0, 0, 1, 1],
            vec![0, 0, 0, 0],
            2,
            1,
        )
        .unwrap()
    }

    #[test]
    fn scaled_epoch_examples() {
        assert_eq!(scaled_epochs(100, 0.02).unwrap(), 5000);
        assert_eq!(scaled_epochs(100, 1.0).unwrap(), 100);
        assert_eq!(scaled_epochs(50, 0.4).unwrap(), 125);
        assert!(scaled_epochs(10, 0.0).is_err());
        assert!(scaled_epochs(10, -0.5).is_err());
    }

    #[test]
    fn separable_toy_is_fit() {
        let cfg = TrainConfig {
            base_epochs: 200,
            batch_size: 2,
            ..Default::default()
        };
        let model = train(&toy(), None, &cfg).unwrap();
        let preds = model.predict(toy().features(), 2).unwrap();
        assert_eq!(preds, vec![0, 0, 1, 1]);
    }

    #[test]
    fn training_is_bitwise_deterministic() {
        for hidden in [0, 4] {
            let cfg = TrainConfig {
                base_epochs: 30,
                hidden_units: hidden,
                seed: 9,
                batch_size: 3,
                ..Default::default()
            };
            let a = train(&toy(), None, &cfg).unwrap();
            let b = train(&toy(), None, &cfg).unwrap();
            let bits =
                |m: &TrainedModel| m.params().iter().map(|p| p.to_bits()).collect::<Vec<_>>();
            assert_eq!(bits(&a), bits(&b));
        }
    }

    #[test]
    fn zero_model_is_uniform() {
        let m = TrainedModel::zeros(3, 0, 2);
        let p = m.predict_proba(&[5.0, -1.0, 2.0], 3).unwrap();
        assert_eq!(p, vec![0.5, 0.5]);
    }

    #[test]
    fn softmax_closed_forms() {
        let mut v = [0.0, 3f64.ln()];
        softmax_in_place(&mut v);
        assert!((v[0] - 0.25).abs() < 1e-12 && (v[1] - 0.75).abs() < 1e-12);
        let mut v = [800.0, 0.0];
        softmax_in_place(&mut v);
        assert!((v[0] - 1.0).abs() < 1e-12 && v[1] >= 0.0);
    }

    #[test]
    fn dimension_mismatch_is_rejected() {
        let m = TrainedModel::zeros(3, 0, 2);
        assert!(matches!(
            m.predict_proba(&[1.0, 2.0], 2),
            Err(Error::ShapeMismatch { .. })
        ));
    }

    #[test]
    fn empty_subset_and_divergence() {
        let cfg = TrainConfig::default();
        assert!(matches!(
            train(&toy(), Some(&[]), &cfg),
            Err(Error::EmptySubset)
        ));
        let huge =
            LabeledDataset::new("h", 1, vec![1e200, -1e200], vec![0, 1], vec![0, 0], 2, 1).unwrap();
        let cfg = TrainConfig {
            learning_rate: 1e6,
            ..Default::default()
        };
        assert!(matches!(
            train(&huge, None, &cfg),
            Err(Error::Diverged { .. })
        ));
    }

    #[test]
    fn dynamics_cover_subset_only() {
        let cfg = TrainConfig {
            base_epochs: 7,
            record_dynamics: true,
            ..Default::default()
        };
        let m = train(&toy(), Some(&[1, 3]), &cfg).unwrap();
        let log = m.dynamics().unwrap();
        assert_eq!(log.epochs(), 7);
        assert_eq!(log.sample_ids, vec![1, 3]);
        assert!(log.correct.iter().all(|r| r.len() == 2));
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = TrainedModel::init(3, 2, 2, 4);
        let back = TrainedModel::decode_checkpoint(&m.encode_checkpoint()).unwrap();
        for (a, b) in m.params().iter().zip(back.params()) {
            assert_eq!(*a as f32, *b as f32);
        }
        let mut bytes = m.encode_checkpoint();
        bytes.pop();
        assert!(TrainedModel::decode_checkpoint(&bytes).is_err());
    }

    #[test]
    fn dynamics_csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("dyn.csv");
        let log = DynamicsLog {
            sample_ids: vec![4, 2],
            correct: vec![vec![true, false], vec![false, false], vec![true, true]],
        };
        log.write_csv(&path).unwrap();
        assert_eq!(DynamicsLog::read_csv(&path).unwrap(), log);
    }
}
