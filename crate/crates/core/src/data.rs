//! Labeled datasets, (class, attribute) groups and the synthetic
//! spurious-correlation generator.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

/// A (class label, spurious attribute label) pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct GroupKey {
    pub class: u32,
    pub attr: u32,
}

impl GroupKey {
    pub fn new(class: u32, attr: u32) -> Self {
        Self { class, attr }
    }
}

impl fmt::Display for GroupKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.class, self.attr)
    }
}

/// Samples with dense features, class labels and spurious-attribute labels.
///
/// Sample order is canonical: every index handed out by the toolkit refers to
/// a row of this table.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    name: String,
    dim: usize,
    features: Vec<f64>,
    class_labels: Vec<u32>,
    attr_labels: Vec<u32>,
    num_classes: u32,
    num_attrs: u32,
}

impl LabeledDataset {
    /// Build a dataset from row-major features. `num_classes` and `num_attrs`
    /// declare the label space, which may contain labels with no samples.
    pub fn new(
        name: impl Into<String>,
        dim: usize,
        features: Vec<f64>,
        class_labels: Vec<u32>,
        attr_labels: Vec<u32>,
        num_classes: u32,
        num_attrs: u32,
    ) -> Result<Self> {
        let n = class_labels.len();
        if n == 0 {
            return Err(Error::InvalidDataset("dataset has no samples".into()));
        }
        if dim == 0 {
            return Err(Error::InvalidDataset("feature dimension is zero".into()));
        }
        if attr_labels.len() != n {
            return Err(Error::ShapeMismatch {
                what: "attribute labels",
                expected: n,
                found: attr_labels.len(),
            });
        }
        if features.len() != n * dim {
            return Err(Error::ShapeMismatch {
                what: "feature matrix",
                expected: n * dim,
                found: features.len(),
            });
        }
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite {
                what: "features",
                index: i / dim,
            });
        }
        if let Some(i) = class_labels.iter().position(|&y| y >= num_classes) {
            return Err(Error::InvalidDataset(format!(
                "sample {i}: class label {} outside [0, {num_classes})",
                class_labels[i]
            )));
        }
        if let Some(i) = attr_labels.iter().position(|&a| a >= num_attrs) {
            return Err(Error::InvalidDataset(format!(
                "sample {i}: attribute label {} outside [0, {num_attrs})",
                attr_labels[i]
            )));
        }
        Ok(Self {
            name: name.into(),
            dim,
            features,
            class_labels,
            attr_labels,
            num_classes,
            num_attrs,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn len(&self) -> usize {
        self.class_labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.class_labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn num_classes(&self) -> u32 {
        self.num_classes
    }

    pub fn num_attrs(&self) -> u32 {
        self.num_attrs
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.dim..(i + 1) * self.dim]
    }

    pub fn class_labels(&self) -> &[u32] {
        &self.class_labels
    }

    pub fn attr_labels(&self) -> &[u32] {
        &self.attr_labels
    }

    pub fn group(&self, i: usize) -> GroupKey {
        GroupKey::new(self.class_labels[i], self.attr_labels[i])
    }

    /// Sample indices of each class, in canonical order.
    pub fn class_indices(&self) -> Vec<Vec<usize>> {
        let mut out = vec![Vec::new(); self.num_classes as usize];
        for (i, &y) in self.class_labels.iter().enumerate() {
            out[y as usize].push(i);
        }
        out
    }

    /// Sample indices of each non-empty group, in canonical order.
    pub fn group_indices(&self) -> BTreeMap<GroupKey, Vec<usize>> {
        let mut out: BTreeMap<GroupKey, Vec<usize>> = BTreeMap::new();
        for i in 0..self.len() {
            out.entry(self.group(i)).or_default().push(i);
        }
        out
    }

    /// A new dataset holding the given rows, in the given order.
    pub fn select(&self, indices: &[usize]) -> Result<Self> {
        let mut features = Vec::with_capacity(indices.len() * self.dim);
        for &i in indices {
            if i >= self.len() {
                return Err(Error::InvalidDataset(format!("index {i} out of range")));
            }
            features.extend_from_slice(self.row(i));
        }
        Self::new(
            self.name.clone(),
            self.dim,
            features,
            indices.iter().map(|&i| self.class_labels[i]).collect(),
            indices.iter().map(|&i| self.attr_labels[i]).collect(),
            self.num_classes,
            self.num_attrs,
        )
    }

    /// Write as CSV with header `id,class,attr,f0,...,f{d-1}`.
    pub fn write_csv(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let file = std::fs::File::create(path).map_err(|e| Error::file(path, e))?;
        let mut w = csv::Writer::from_writer(std::io::BufWriter::new(file));
        let mut header = vec!["id".to_string(), "class".into(), "attr".into()];
        header.extend((0..self.dim).map(|j| format!("f{j}")));
        w.write_record(&header)?;
        let mut record = Vec::with_capacity(self.dim + 3);
        for i in 0..self.len() {
            record.clear();
            record.push(i.to_string());
            record.push(self.class_labels[i].to_string());
            record.push(self.attr_labels[i].to_string());
            record.extend(self.row(i).iter().map(|v| v.to_string()));
            w.write_record(&record)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read a dataset CSV. The label space is inferred as one past the largest
    /// label seen unless a wider one is declared.
    pub fn read_csv(
        path: impl AsRef<Path>,
        declared_classes: Option<u32>,
        declared_attrs: Option<u32>,
    ) -> Result<Self> {
        let path = path.as_ref();
        let file = std::fs::File::open(path).map_err(|e| Error::file(path, e))?;
        let mut r = csv::Reader::from_reader(std::io::BufReader::new(file));
        let header = r.headers()?.clone();
        if header.len() < 4 || &header[0] != "id" || &header[1] != "class" || &header[2] != "attr" {
            return Err(Error::Format(format!(
                "{}: expected header id,class,attr,f0,...",
                path.display()
            )));
        }
        let dim = header.len() - 3;
        for (j, h) in header.iter().skip(3).enumerate() {
            if h != format!("f{j}") {
                return Err(Error::Format(format!("feature column {j} is named {h:?}")));
            }
        }
        let mut features = Vec::new();
        let mut classes = Vec::new();
        let mut attrs = Vec::new();
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let parse_err = |col: &str| Error::Format(format!("row {row}: bad {col} value"));
            let id: usize = rec[0].trim().parse().map_err(|_| parse_err("id"))?;
            if id != row {
                return Err(Error::Format(format!(
                    "ids must be contiguous from 0: row {row} has id {id}"
                )));
            }
            classes.push(
                rec[1]
                    .trim()
                    .parse::<u32>()
                    .map_err(|_| parse_err("class"))?,
            );
            attrs.push(
                rec[2]
                    .trim()
                    .parse::<u32>()
                    .map_err(|_| parse_err("attr"))?,
            );
            for j in 0..dim {
                let v: f64 = rec[3 + j]
                    .trim()
                    .parse()
                    .map_err(|_| parse_err("feature"))?;
                if !v.is_finite() {
                    return Err(Error::NonFinite {
                        what: "features",
                        index: row,
                    });
                }
                features.push(v);
            }
        }
        let seen_c = classes.iter().max().map_or(0, |m| m + 1);
        let seen_a = attrs.iter().max().map_or(0, |m| m + 1);
        let name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Self::new(
            name,
            dim,
            features,
            classes,
            attrs,
            declared_classes.unwrap_or(seen_c).max(seen_c),
            declared_attrs.unwrap_or(seen_a).max(seen_a),
        )
    }
}

/// Sample counts for every group of a C×A label space.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GroupTable {
    num_classes: u32,
    num_attrs: u32,
    counts: BTreeMap<GroupKey, u64>,
}

impl GroupTable {
    /// All-zero table over the full label space.
    pub fn empty(num_classes: u32, num_attrs: u32) -> Self {
        let mut counts = BTreeMap::new();
        for y in 0..num_classes {
            for a in 0..num_attrs {
                counts.insert(GroupKey::new(y, a), 0);
            }
        }
        Self {
            num_classes,
            num_attrs,
            counts,
        }
    }

    pub fn from_counts(
        num_classes: u32,
        num_attrs: u32,
        counts: impl IntoIterator<Item = (GroupKey, u64)>,
    ) -> Result<Self> {
        let mut t = Self::empty(num_classes, num_attrs);
        for (k, c) in counts {
            match t.counts.get_mut(&k) {
                Some(slot) => *slot += c,
                None => {
                    return Err(Error::InvalidDataset(format!(
                        "group {k} outside {num_classes}x{num_attrs} label space"
                    )))
                }
            }
        }
        Ok(t)
    }

    /// Table over the given subset of `ds`.
    pub fn of_indices(ds: &LabeledDataset, indices: &[usize]) -> Self {
        let mut t = Self::empty(ds.num_classes(), ds.num_attrs());
        for &i in indices {
            *t.counts.get_mut(&ds.group(i)).expect("label space") += 1;
        }
        t
    }

    pub fn num_classes(&self) -> u32 {
        self.num_classes
    }

    pub fn num_attrs(&self) -> u32 {
        self.num_attrs
    }

    pub fn counts(&self) -> &BTreeMap<GroupKey, u64> {
        &self.counts
    }

    pub fn count(&self, key: GroupKey) -> u64 {
        self.counts.get(&key).copied().unwrap_or(0)
    }

    pub fn total(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn class_count(&self, class: u32) -> u64 {
        (0..self.num_attrs)
            .map(|a| self.count(GroupKey::new(class, a)))
            .sum()
    }

    pub fn attr_count(&self, attr: u32) -> u64 {
        (0..self.num_classes)
            .map(|y| self.count(GroupKey::new(y, attr)))
            .sum()
    }

    /// Empirical P(a).
    pub fn p_attr(&self, attr: u32) -> f64 {
        self.attr_count(attr) as f64 / self.total() as f64
    }

    /// Empirical P(a | y).
    pub fn p_attr_given_class(&self, attr: u32, class: u32) -> f64 {
        self.count(GroupKey::new(class, attr)) as f64 / self.class_count(class) as f64
    }

    /// Compact `y:a=count;...` rendering over the full label space.
    pub fn encode(&self) -> String {
        self.counts
            .iter()
            .map(|(k, c)| format!("{k}={c}"))
            .collect::<Vec<_>>()
            .join(";")
    }
}

/// Per-group sample counts of a dataset; groups with no samples are kept at 0.
pub fn group_table(ds: &LabeledDataset) -> GroupTable {
    let mut t = GroupTable::empty(ds.num_classes(), ds.num_attrs());
    for i in 0..ds.len() {
        *t.counts.get_mut(&ds.group(i)).expect("label space") += 1;
    }
    t
}

/// Parameters of the synthetic spurious-correlation generator.
///
/// Class `y` is drawn uniformly. The attribute equals `y` with probability
/// `rho` and is otherwise uniform over the other attributes. Features are
/// `core_sep * u_y + spur_sep * v_a + N(0, noise_sigma^2)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthConfig {
    pub n: usize,
    pub dim: usize,
    pub num_classes: u32,
    pub rho: f64,
    pub core_sep: f64,
    pub spur_sep: f64,
    pub noise_sigma: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            n: 5000,
            dim: 10,
            num_classes: 2,
            rho: 0.95,
            core_sep: 1.0,
            spur_sep: 2.0,
            noise_sigma: 0.5,
            seed: 0,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidConfig(msg));
        if self.n == 0 {
            return bad("n must be at least 1".into());
        }
        if self.num_classes < 2 {
            return bad(format!(
                "num_classes = {} must be at least 2",
                self.num_classes
            ));
        }
        let min_dim = if self.num_classes == 2 {
            2
        } else {
            2 * self.num_classes as usize
        };
        if self.dim < min_dim {
            return bad(format!(
                "dim = {} must be at least {min_dim} for {} classes",
                self.dim, self.num_classes
            ));
        }
        let lo = 1.0 / f64::from(self.num_classes);
        if !(self.rho >= lo && self.rho <= 1.0) {
            return bad(format!("rho = {} must lie in [{lo}, 1]", self.rho));
        }
        if !(self.core_sep > 0.0 && self.core_sep.is_finite()) {
            return bad(format!("core_sep = {} must be > 0", self.core_sep));
        }
        if !(self.spur_sep > 0.0 && self.spur_sep.is_finite()) {
            return bad(format!("spur_sep = {} must be > 0", self.spur_sep));
        }
        if self.spur_sep <= self.core_sep {
            return bad(format!(
                "spur_sep = {} must exceed core_sep = {}",
                self.spur_sep, self.core_sep
            ));
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma = {} must be > 0", self.noise_sigma));
        }
        Ok(())
    }
}

/// Add `scale` times the unit direction of `label` within coordinate block
/// `block`. Two labels share one signed axis; more labels get one axis each.
fn direction(out: &mut [f64], num_labels: u32, block: usize, label: u32, scale: f64) {
    if num_labels == 2 {
        out[block] += if label == 1 { scale } else { -scale };
    } else {
        out[block * num_labels as usize + label as usize] += scale;
    }
}

/// Draw a synthetic dataset. Attribute count equals class count; class `y`
/// is aligned with attribute `y`. With two classes the core and spurious
/// directions are the first two coordinate axes; with C > 2 classes they are
/// the one-hot blocks `[0, C)` and `[C, 2C)`. Remaining coordinates are noise.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<LabeledDataset> {
    cfg.validate()?;
    let c = cfg.num_classes;
    let mut rng = seed::stage_rng(cfg.seed, "synthetic");
    let noise = Normal::new(0.0, cfg.noise_sigma)
        .map_err(|e| Error::InvalidConfig(format!("noise_sigma: {e}")))?;
    let mut features = vec![0.0; cfg.n * cfg.dim];
    let mut classes = Vec::with_capacity(cfg.n);
    let mut attrs = Vec::with_capacity(cfg.n);
    for i in 0..cfg.n {
        let y = rng.random_range(0..c);
        let a = if rng.random::<f64>() < cfg.rho {
            y
        } else {
            let r = rng.random_range(0..c - 1);
            if r < y {
                r
            } else {
                r + 1
            }
        };
        let row = &mut features[i * cfg.dim..(i + 1) * cfg.dim];
        for v in row.iter_mut() {
            *v = noise.sample(&mut rng);
        }
        direction(row, c, 0, y, cfg.core_sep);
        direction(row, c, 1, a, cfg.spur_sep);
        classes.push(y);
        attrs.push(a);
    }
    LabeledDataset::new(
        format!("synth-rho{}", cfg.rho),
        cfg.dim,
        features,
        classes,
        attrs,
        c,
        c,
    )
}
