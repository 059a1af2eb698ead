//! Feature datasets, synthetic class worlds, holdout splits and word-vector
//! ingestion.
//!
//! # SEAF layout
//!
//! All integers little-endian.
//!
//! ```text
//! "SEAF" | u32 version (=1) | u32 n | u32 F | u32 C
//! | u8 partition[n]      0 = train, 1 = test
//! | f64 features[n*F]    row-major
//! | u32 labels[n]
//! | u32 crc32            over every preceding byte
//! ```

use std::collections::{HashMap, HashSet};
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array2, ArrayView1};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::binio::{dim_u32, verify_crc, Reader, Writer};
use crate::gated_net::{Symbol, SymbolBank};
use crate::{Error, Result};

const SEAF_MAGIC: &[u8; 4] = b"SEAF";
const SEAF_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Partition {
    Train,
    Test,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FeatureDataset {
    features: Array2<f64>,
    labels: Vec<u32>,
    partition: Vec<Partition>,
    num_classes: u32,
    class_names: Option<Vec<String>>,
}

impl FeatureDataset {
    pub fn new(
        features: Array2<f64>,
        labels: Vec<u32>,
        partition: Vec<Partition>,
        num_classes: u32,
    ) -> Result<Self> {
        let n = features.nrows();
        if labels.len() != n || partition.len() != n {
            return Err(Error::Shape(format!(
                "{n} feature rows, {} labels, {} partition flags",
                labels.len(),
                partition.len()
            )));
        }
        if let Some(i) = features.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("feature element {i}")));
        }
        let mut seen = vec![[false; 2]; num_classes as usize];
        for (i, (&l, &p)) in labels.iter().zip(&partition).enumerate() {
            if l >= num_classes {
                return Err(Error::Invalid(format!(
                    "row {i}: label {l} out of range for {num_classes} classes"
                )));
            }
            seen[l as usize][(p == Partition::Test) as usize] = true;
        }
        if let Some(c) = seen.iter().position(|s| !(s[0] && s[1])) {
            return Err(Error::Invalid(format!(
                "class {c} must have samples in both train and test partitions"
            )));
        }
        Ok(Self {
            features: features.as_standard_layout().into_owned(),
            labels,
            partition,
            num_classes,
            class_names: None,
        })
    }

    pub fn with_class_names(mut self, names: Vec<String>) -> Result<Self> {
        if names.len() != self.num_classes as usize {
            return Err(Error::Shape(format!(
                "{} names for {} classes",
                names.len(),
                self.num_classes
            )));
        }
        self.class_names = Some(names);
        Ok(self)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn feature_dim(&self) -> usize {
        self.features.ncols()
    }

    pub fn num_classes(&self) -> u32 {
        self.num_classes
    }

    pub fn class_names(&self) -> Option<&[String]> {
        self.class_names.as_deref()
    }

    pub fn features(&self) -> &Array2<f64> {
        &self.features
    }

    pub fn row(&self, i: usize) -> ArrayView1<'_, f64> {
        self.features.row(i)
    }

    pub fn label(&self, i: usize) -> u32 {
        self.labels[i]
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    pub fn partition(&self, i: usize) -> Partition {
        self.partition[i]
    }

    /// A view over every class and sample.
    pub fn view(&self) -> DatasetView<'_> {
        let (train, test) = (0..self.len()).partition(|&i| self.partition[i] == Partition::Train);
        DatasetView {
            data: self,
            train,
            test,
            classes: (0..self.num_classes).collect(),
        }
    }

    /// Stacks the given rows into a matrix.
    pub fn gather(&self, rows: &[usize]) -> Array2<f64> {
        let f = self.feature_dim();
        let mut out = Array2::zeros((rows.len(), f));
        for (k, &i) in rows.iter().enumerate() {
            out.row_mut(k).assign(&self.features.row(i));
        }
        out
    }

    /// Per-class mean of the training rows, `C × F`.
    pub fn train_class_means(&self) -> Array2<f64> {
        let (c, f) = (self.num_classes as usize, self.feature_dim());
        let mut sums = Array2::<f64>::zeros((c, f));
        let mut counts = vec![0usize; c];
        for i in 0..self.len() {
            if self.partition[i] == Partition::Train {
                let k = self.labels[i] as usize;
                sums.row_mut(k).scaled_add(1.0, &self.features.row(i));
                counts[k] += 1;
            }
        }
        for (mut row, n) in sums.rows_mut().into_iter().zip(counts) {
            row /= n as f64;
        }
        sums
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut w = Writer::default();
        w.raw(SEAF_MAGIC);
        w.u32(SEAF_VERSION);
        w.u32(dim_u32(self.len(), "sample count")?);
        w.u32(dim_u32(self.feature_dim(), "feature width")?);
        w.u32(self.num_classes);
        for p in &self.partition {
            w.u8(match p {
                Partition::Train => 0,
                Partition::Test => 1,
            });
        }
        w.f64s(self.features.iter());
        for &l in &self.labels {
            w.u32(l);
        }
        Ok(w.finish_with_crc())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader::new(bytes);
        if r.bytes(4, "magic")? != SEAF_MAGIC {
            return Err(Error::Format {
                offset: 0,
                msg: "bad magic, expected SEAF".into(),
            });
        }
        let version = r.u32("version")?;
        if version != SEAF_VERSION {
            return Err(Error::Format {
                offset: 4,
                msg: format!("unsupported version {version}"),
            });
        }
        let n = r.u32("sample count")? as usize;
        let f = r.u32("feature width")? as usize;
        let c = r.u32("class count")?;
        if f == 0 || c == 0 {
            return r.fail("feature width and class count must be positive");
        }
        let expected = n
            .checked_mul(f)
            .and_then(|v| v.checked_mul(8))
            .and_then(|v| v.checked_add(n * 5 + 4));
        if expected != Some(r.remaining()) {
            return r.fail(format!(
                "declared n={n}, F={f} needs {} more bytes, file has {}",
                expected.map_or("overflowing".to_string(), |e| e.to_string()),
                r.remaining()
            ));
        }
        let body = verify_crc(bytes)?;
        let mut r = Reader::new(body);
        r.bytes(20, "header")?;
        let mut partition = Vec::with_capacity(n);
        for _ in 0..n {
            partition.push(match r.u8("partition flag")? {
                0 => Partition::Train,
                1 => Partition::Test,
                other => {
                    return Err(Error::Format {
                        offset: r.offset() - 1,
                        msg: format!("partition flag {other} is not 0 or 1"),
                    })
                }
            });
        }
        let features = r.f64s(n * f, "feature")?;
        let label_start = r.offset();
        let mut labels = Vec::with_capacity(n);
        for i in 0..n {
            let l = r.u32("label")?;
            if l >= c {
                return Err(Error::Format {
                    offset: label_start + 4 * i,
                    msg: format!("label {l} out of range for {c} classes"),
                });
            }
            labels.push(l);
        }
        let features = Array2::from_shape_vec((n, f), features).expect("length checked");
        Self::new(features, labels, partition, c).map_err(|e| Error::Format {
            offset: label_start,
            msg: e.to_string(),
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }
}

pub fn load_features(path: impl AsRef<Path>) -> Result<FeatureDataset> {
    FeatureDataset::from_bytes(&std::fs::read(path)?)
}

/// Borrowed subset of a dataset restricted to some classes.
#[derive(Debug, Clone)]
pub struct DatasetView<'a> {
    data: &'a FeatureDataset,
    train: Vec<usize>,
    test: Vec<usize>,
    classes: Vec<u32>,
}

impl<'a> DatasetView<'a> {
    pub fn data(&self) -> &'a FeatureDataset {
        self.data
    }

    pub fn train(&self) -> &[usize] {
        &self.train
    }

    pub fn test(&self) -> &[usize] {
        &self.test
    }

    pub fn classes(&self) -> &[u32] {
        &self.classes
    }

    pub fn feature_dim(&self) -> usize {
        self.data.feature_dim()
    }

    /// Restricts the view to the listed classes.
    pub fn restrict(&self, classes: &[u32]) -> DatasetView<'a> {
        let keep: HashSet<u32> = classes.iter().copied().collect();
        let filt = |idx: &[usize]| idx.iter().copied().filter(|&i| keep.contains(&self.data.label(i))).collect();
        DatasetView {
            data: self.data,
            train: filt(&self.train),
            test: filt(&self.test),
            classes: self.classes.iter().copied().filter(|c| keep.contains(c)).collect(),
        }
    }

    /// Train-partition sample indices of one class.
    pub fn train_of(&self, class: u32) -> Vec<usize> {
        self.train.iter().copied().filter(|&i| self.data.label(i) == class).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub holdout_class: u32,
}

/// Splits a view into the trained-class part and the single holdout class.
pub fn split<'a>(view: &DatasetView<'a>, spec: SplitSpec) -> Result<(DatasetView<'a>, DatasetView<'a>)> {
    if !view.classes.contains(&spec.holdout_class) {
        return Err(Error::MissingClass(spec.holdout_class));
    }
    let rest: Vec<u32> = view.classes.iter().copied().filter(|&c| c != spec.holdout_class).collect();
    Ok((view.restrict(&rest), view.restrict(&[spec.holdout_class])))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Hierarchy {
    pub super_classes: u32,
    /// Sub-class means are the super-class center plus `offset_scale·U[-1,1]^F`.
    pub offset_scale: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub classes: u32,
    pub dim: usize,
    pub train_per_class: usize,
    pub test_per_class: usize,
    pub spread: f64,
    pub hierarchy: Option<Hierarchy>,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            classes: 10,
            dim: 512,
            train_per_class: 200,
            test_per_class: 100,
            spread: 0.3,
            hierarchy: Some(Hierarchy {
                super_classes: 2,
                offset_scale: 0.5,
            }),
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.classes < 2 {
            return Err(Error::config("classes", "need at least 2 classes"));
        }
        if self.dim < 2 {
            return Err(Error::config("dim", "need at least 2 feature dimensions"));
        }
        if self.train_per_class == 0 || self.test_per_class == 0 {
            return Err(Error::config("train_per_class", "every class needs train and test samples"));
        }
        if !(self.spread >= 0.0 && self.spread.is_finite()) {
            return Err(Error::config("spread", "must be finite and >= 0"));
        }
        if let Some(h) = &self.hierarchy {
            if h.super_classes == 0 || h.super_classes > self.classes {
                return Err(Error::config("hierarchy.super_classes", "must be in 1..=classes"));
            }
            if !(h.offset_scale >= 0.0 && h.offset_scale.is_finite()) {
                return Err(Error::config("hierarchy.offset_scale", "must be finite and >= 0"));
            }
        }
        Ok(())
    }
}

/// A generated dataset together with the class means it was sampled around.
#[derive(Debug, Clone)]
pub struct SyntheticWorld {
    pub dataset: FeatureDataset,
    pub class_means: Array2<f64>,
}

/// Gaussian blobs around per-class means; deterministic in `seed`.
pub fn generate_synthetic_world(spec: &SyntheticSpec, seed: u64) -> Result<SyntheticWorld> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (c, f) = (spec.classes as usize, spec.dim);
    let means = match &spec.hierarchy {
        None => Array2::from_shape_fn((c, f), |_| rng.random_range(-1.0..=1.0)),
        Some(h) => {
            let s = h.super_classes as usize;
            let centers = Array2::from_shape_fn((s, f), |_| rng.random_range(-1.0..=1.0));
            Array2::from_shape_fn((c, f), |(k, j)| {
                centers[[k * s / c, j]] + h.offset_scale * rng.random_range(-1.0..=1.0)
            })
        }
    };
    let per = spec.train_per_class + spec.test_per_class;
    let n = c * per;
    let mut features = Array2::zeros((n, f));
    let mut labels = Vec::with_capacity(n);
    let mut partition = Vec::with_capacity(n);
    for k in 0..c {
        for s in 0..per {
            let row = k * per + s;
            for j in 0..f {
                let z: f64 = rng.sample(StandardNormal);
                features[[row, j]] = means[[k, j]] + spec.spread * z;
            }
            labels.push(k as u32);
            partition.push(if s < spec.train_per_class {
                Partition::Train
            } else {
                Partition::Test
            });
        }
    }
    Ok(SyntheticWorld {
        dataset: FeatureDataset::new(features, labels, partition, spec.classes)?,
        class_means: means,
    })
}

pub fn generate_synthetic(spec: &SyntheticSpec, seed: u64) -> Result<FeatureDataset> {
    Ok(generate_synthetic_world(spec, seed)?.dataset)
}

/// Name → vector table with a uniform vector length.
#[derive(Debug, Clone, PartialEq)]
pub struct WordVectorTable {
    dim: usize,
    entries: HashMap<String, Vec<f64>>,
}

impl WordVectorTable {
    pub fn new(entries: Vec<(String, Vec<f64>)>) -> Result<Self> {
        let dim = entries.first().map_or(0, |e| e.1.len());
        let mut map = HashMap::with_capacity(entries.len());
        for (name, v) in entries {
            if v.len() != dim {
                return Err(Error::Shape(format!("`{name}` has length {}, expected {dim}", v.len())));
            }
            if map.insert(name.clone(), v).is_some() {
                return Err(Error::Invalid(format!("duplicate word `{name}`")));
            }
        }
        Ok(Self { dim, entries: map })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, name: &str) -> Option<&[f64]> {
        self.entries.get(name).map(Vec::as_slice)
    }
}

/// Parses whitespace-separated `token v1 v2 ...` lines, keeping only the
/// requested names. A leading `count dim` header line is skipped. Every
/// line is validated; a requested name appearing twice is an error.
pub fn parse_word_vectors<S: AsRef<str>>(text: &str, source: &Path, names: &[S]) -> Result<WordVectorTable> {
    let wanted: HashSet<&str> = names.iter().map(AsRef::as_ref).collect();
    let err = |line: usize, msg: String| Error::Parse {
        path: source.to_path_buf(),
        line,
        msg,
    };
    let mut dim: Option<usize> = None;
    let mut found: HashMap<String, Vec<f64>> = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        let lineno = i + 1;
        let mut toks = line.split_whitespace();
        let Some(token) = toks.next() else {
            continue;
        };
        let rest: Vec<&str> = toks.collect();
        if i == 0 && rest.len() == 1 && token.parse::<usize>().is_ok() && rest[0].parse::<usize>().is_ok() {
            continue;
        }
        if rest.is_empty() {
            return Err(err(lineno, format!("token `{token}` has no values")));
        }
        let values = rest
            .iter()
            .map(|t| t.parse::<f64>().ok().filter(|v| v.is_finite()))
            .collect::<Option<Vec<f64>>>()
            .ok_or_else(|| err(lineno, "non-numeric or non-finite value".into()))?;
        match dim {
            None => dim = Some(values.len()),
            Some(d) if d != values.len() => {
                return Err(err(lineno, format!("{} values, expected {d}", values.len())));
            }
            _ => {}
        }
        if wanted.contains(token) && found.insert(token.to_string(), values).is_some() {
            return Err(err(lineno, format!("duplicate token `{token}`")));
        }
    }
    let missing: Vec<String> = names
        .iter()
        .map(AsRef::as_ref)
        .filter(|n| !found.contains_key(*n))
        .map(str::to_string)
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingNames(missing));
    }
    WordVectorTable::new(found.into_iter().collect())
}

pub fn load_word_vectors<S: AsRef<str>>(path: impl AsRef<Path>, names: &[S]) -> Result<WordVectorTable> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path)?;
    parse_word_vectors(&text, path, names)
}

/// Principal-component projection fit on a set of row vectors.
#[derive(Debug, Clone)]
pub struct PcaProjection {
    mean: Vec<f64>,
    /// `k × D`, rows are orthonormal principal axes.
    components: Array2<f64>,
    /// Every eigenvalue of the covariance, descending.
    eigenvalues: Vec<f64>,
}

impl PcaProjection {
    pub fn fit(rows: &Array2<f64>, target_dim: usize) -> Result<Self> {
        let (n, d) = rows.dim();
        if n == 0 || target_dim == 0 || target_dim > d {
            return Err(Error::Invalid(format!(
                "cannot project {n} vectors of length {d} to {target_dim} dimensions"
            )));
        }
        let mean: Vec<f64> = (0..d).map(|j| rows.column(j).sum() / n as f64).collect();
        let centered = DMatrix::from_fn(n, d, |i, j| rows[[i, j]] - mean[j]);
        let cov = centered.transpose() * &centered / n as f64;
        let eig = SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..d).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
        let mut components = Array2::zeros((target_dim, d));
        for (k, &col) in order.iter().take(target_dim).enumerate() {
            let v = eig.eigenvectors.column(col);
            let pivot = (0..d).max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs())).unwrap_or(0);
            let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
            for j in 0..d {
                components[[k, j]] = sign * v[j];
            }
        }
        let eigenvalues = order.iter().map(|&i| eig.eigenvalues[i].max(0.0)).collect();
        Ok(Self {
            mean,
            components,
            eigenvalues,
        })
    }

    pub fn target_dim(&self) -> usize {
        self.components.nrows()
    }

    pub fn project(&self, v: &[f64]) -> Vec<f64> {
        self.components
            .rows()
            .into_iter()
            .map(|axis| axis.iter().zip(v).zip(&self.mean).map(|((a, x), m)| a * (x - m)).sum())
            .collect()
    }

    /// Fraction of total variance captured by the first `k` axes.
    pub fn explained_variance_ratio(&self, k: usize) -> f64 {
        let total: f64 = self.eigenvalues.iter().sum();
        if total == 0.0 {
            return 0.0;
        }
        self.eigenvalues.iter().take(k).sum::<f64>() / total
    }
}

/// Stand-in word vectors: `scale · P·meanᵢ + noise·N(0,1)` for a random
/// Gaussian projection `P` with `N(0, 1/F)` entries, so that vector geometry
/// follows the class-mean geometry. Entry `i` is keyed by `names[i]`.
pub fn synthetic_word_vectors<S: AsRef<str>, R: Rng + ?Sized>(
    class_means: &Array2<f64>,
    names: &[S],
    dim: usize,
    scale: f64,
    noise: f64,
    rng: &mut R,
) -> Result<WordVectorTable> {
    if names.len() != class_means.nrows() {
        return Err(Error::Shape(format!(
            "{} names for {} classes",
            names.len(),
            class_means.nrows()
        )));
    }
    let f = class_means.ncols();
    let sd = 1.0 / (f.max(1) as f64).sqrt();
    let proj = Array2::from_shape_fn((dim, f), |_| sd * rng.sample::<f64, _>(StandardNormal));
    let entries = names
        .iter()
        .zip(class_means.rows())
        .map(|(name, mean)| {
            let v = proj.dot(&mean).mapv(|x| scale * x + noise * rng.sample::<f64, _>(StandardNormal));
            (name.as_ref().to_string(), v.to_vec())
        })
        .collect();
    WordVectorTable::new(entries)
}

/// Projects the named vectors onto their top principal axes and scales by
/// `amplify`. Class id `i` is assigned to `names[i]`.
pub fn reduce_word_vectors<S: AsRef<str>>(
    table: &WordVectorTable,
    names: &[S],
    target_dim: usize,
    amplify: f64,
) -> Result<SymbolBank> {
    let missing: Vec<String> = names
        .iter()
        .map(AsRef::as_ref)
        .filter(|n| table.get(n).is_none())
        .map(str::to_string)
        .collect();
    if !missing.is_empty() {
        return Err(Error::MissingNames(missing));
    }
    if target_dim > table.dim() {
        return Err(Error::Invalid(format!(
            "target length {target_dim} exceeds source length {}",
            table.dim()
        )));
    }
    if names.len() < target_dim {
        return Err(Error::Invalid(format!(
            "{} names cannot determine {target_dim} principal axes",
            names.len()
        )));
    }
    let rows = Array2::from_shape_fn((names.len(), table.dim()), |(i, j)| {
        table.get(names[i].as_ref()).expect("checked")[j]
    });
    let pca = PcaProjection::fit(&rows, target_dim)?;
    let mut bank = SymbolBank::new(target_dim);
    for (i, name) in names.iter().enumerate() {
        let v: Vec<f64> = pca
            .project(table.get(name.as_ref()).expect("checked"))
            .into_iter()
            .map(|x| x * amplify)
            .collect();
        bank.insert(i as u32, Symbol::new(v)?)?;
    }
    Ok(bank)
}
