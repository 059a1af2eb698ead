//! Structure analysis of symbol sets.
//!
//! Leaves are numbered `0..n`; the `k`-th merge creates node `n + k`.

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::io::Write;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-12;

/// Symmetric, nonnegative, zero-diagonal `n × n` matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    /// Row-major `n × n` values.
    pub fn new(n: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != n * n {
            return Err(Error::Shape(format!("{} values for a {n}x{n} matrix", data.len())));
        }
        for i in 0..n {
            if data[i * n + i] != 0.0 {
                return Err(Error::Invalid(format!("diagonal entry {i} is {}", data[i * n + i])));
            }
            for j in 0..n {
                let v = data[i * n + j];
                if !v.is_finite() || v < 0.0 {
                    return Err(Error::Invalid(format!("entry ({i}, {j}) = {v}")));
                }
                if (v - data[j * n + i]).abs() > SYMMETRY_TOL {
                    return Err(Error::Invalid(format!("asymmetric at ({i}, {j})")));
                }
            }
        }
        Ok(Self { n, data })
    }

    /// Builds from `f(i, j)` for `i < j`, mirrored.
    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> f64) -> Result<Self> {
        let mut data = vec![0.0; n * n];
        for i in 0..n {
            for j in i + 1..n {
                let v = f(i, j);
                data[i * n + j] = v;
                data[j * n + i] = v;
            }
        }
        Self::new(n, data)
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.n + j]
    }

    /// Entries `(i, j)` with `i < j`, row by row.
    pub fn upper_triangle(&self) -> Vec<f64> {
        let n = self.n;
        (0..n).flat_map(|i| (i + 1..n).map(move |j| (i, j))).map(|(i, j)| self.get(i, j)).collect()
    }

    pub fn write_csv<W: Write>(&self, w: W, labels: &[String]) -> Result<()> {
        check_labels(labels, self.n)?;
        let mut out = csv::Writer::from_writer(w);
        out.write_record(std::iter::once("").chain(labels.iter().map(String::as_str)))?;
        for (i, label) in labels.iter().enumerate() {
            let row = (0..self.n).map(|j| format!("{:.17e}", self.get(i, j)));
            out.write_record(std::iter::once(label.clone()).chain(row))?;
        }
        out.flush()?;
        Ok(())
    }
}

fn check_labels(labels: &[String], n: usize) -> Result<()> {
    if labels.len() != n {
        return Err(Error::Shape(format!("{} labels for {n} leaves", labels.len())));
    }
    Ok(())
}

/// `1 − cos(sᵢ, sⱼ)`, clamped at 0 against rounding.
pub fn cosine_distance_matrix<V: AsRef<[f64]>>(symbols: &[V]) -> Result<DistanceMatrix> {
    let dim = symbols.first().map_or(0, |s| s.as_ref().len());
    let mut norms = Vec::with_capacity(symbols.len());
    for (i, s) in symbols.iter().enumerate() {
        let s = s.as_ref();
        if s.len() != dim {
            return Err(Error::Dimension {
                layer: i,
                what: "symbol",
                expected: dim,
                got: s.len(),
            });
        }
        let norm = s.iter().map(|v| v * v).sum::<f64>().sqrt();
        if !(norm > 0.0) || !norm.is_finite() {
            return Err(Error::Invalid(format!("symbol {i} has norm {norm}")));
        }
        norms.push(norm);
    }
    DistanceMatrix::from_fn(symbols.len(), |i, j| {
        let dot: f64 = symbols[i].as_ref().iter().zip(symbols[j].as_ref()).map(|(a, b)| a * b).sum();
        (1.0 - dot / (norms[i] * norms[j])).max(0.0)
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Merge {
    /// Smaller node id of the merged pair.
    pub left: usize,
    pub right: usize,
    pub height: f64,
    /// Leaf count of the new cluster.
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Dendrogram {
    leaves: usize,
    merges: Vec<Merge>,
}

impl Dendrogram {
    pub fn new(leaves: usize, merges: Vec<Merge>) -> Result<Self> {
        if leaves < 2 || merges.len() != leaves - 1 {
            return Err(Error::Invalid(format!("{} merges for {leaves} leaves", merges.len())));
        }
        let mut used = vec![false; 2 * leaves - 1];
        let mut sizes = vec![1usize; 2 * leaves - 1];
        let mut last = f64::NEG_INFINITY;
        for (k, m) in merges.iter().enumerate() {
            let id = leaves + k;
            if m.left >= m.right || m.right >= id || used[m.left] || used[m.right] {
                return Err(Error::Invalid(format!("merge {k} joins invalid nodes {} and {}", m.left, m.right)));
            }
            if !(m.height >= last) || !m.height.is_finite() {
                return Err(Error::Invalid(format!("merge {k} height {} below {last}", m.height)));
            }
            sizes[id] = sizes[m.left] + sizes[m.right];
            if m.size != sizes[id] {
                return Err(Error::Invalid(format!("merge {k} size {} should be {}", m.size, sizes[id])));
            }
            used[m.left] = true;
            used[m.right] = true;
            last = m.height;
        }
        Ok(Self { leaves, merges })
    }

    pub fn leaves(&self) -> usize {
        self.leaves
    }

    pub fn merges(&self) -> &[Merge] {
        &self.merges
    }

    pub fn root(&self) -> usize {
        2 * self.leaves - 2
    }

    pub fn height(&self, node: usize) -> f64 {
        if node < self.leaves {
            0.0
        } else {
            self.merges[node - self.leaves].height
        }
    }

    /// Leaves under `node`, ascending.
    pub fn members(&self, node: usize) -> Vec<usize> {
        let mut out = Vec::new();
        let mut stack = vec![node];
        while let Some(x) = stack.pop() {
            if x < self.leaves {
                out.push(x);
            } else {
                let m = &self.merges[x - self.leaves];
                stack.push(m.left);
                stack.push(m.right);
            }
        }
        out.sort_unstable();
        out
    }

    /// Newick text with branch length = parent height − child height.
    pub fn to_newick(&self, labels: &[String]) -> Result<String> {
        check_labels(labels, self.leaves)?;
        let mut s = String::new();
        self.write_node(&mut s, self.root(), labels);
        s.push(';');
        Ok(s)
    }

    fn write_node(&self, out: &mut String, node: usize, labels: &[String]) {
        if node < self.leaves {
            out.push_str(&newick_label(&labels[node]));
            return;
        }
        let m = self.merges[node - self.leaves];
        out.push('(');
        for (i, child) in [m.left, m.right].into_iter().enumerate() {
            if i > 0 {
                out.push(',');
            }
            self.write_node(out, child, labels);
            write!(out, ":{}", m.height - self.height(child)).expect("string write");
        }
        out.push(')');
    }
}

fn newick_label(label: &str) -> String {
    if label.chars().any(|c| " ():;,[]'\t\n".contains(c)) {
        format!("'{}'", label.replace('\'', "''"))
    } else {
        label.to_string()
    }
}

/// Average-linkage agglomerative clustering. Among equal distances the pair
/// with the lexicographically smallest `(i, j)` node ids merges first.
pub fn upgma(d: &DistanceMatrix) -> Result<Dendrogram> {
    let n = d.len();
    if n < 2 {
        return Err(Error::Invalid(format!("clustering needs at least 2 points, got {n}")));
    }
    let total = 2 * n - 1;
    let mut dist = vec![f64::NAN; total * total];
    for i in 0..n {
        for j in 0..n {
            dist[i * total + j] = d.get(i, j);
        }
    }
    let mut size = vec![1usize; total];
    let mut active: Vec<usize> = (0..n).collect();
    let mut merges = Vec::with_capacity(n - 1);
    for k in 0..n - 1 {
        let mut best = (f64::INFINITY, usize::MAX, usize::MAX);
        for (a, &i) in active.iter().enumerate() {
            for &j in &active[a + 1..] {
                let v = dist[i * total + j];
                if v < best.0 {
                    best = (v, i, j);
                }
            }
        }
        let (height, i, j) = best;
        let id = n + k;
        size[id] = size[i] + size[j];
        active.retain(|&x| x != i && x != j);
        let (wi, wj) = (size[i] as f64, size[j] as f64);
        for &x in &active {
            let v = (wi * dist[i * total + x] + wj * dist[j * total + x]) / (wi + wj);
            // Rounding may place the average an ulp under the current height.
            let v = v.max(height);
            dist[id * total + x] = v;
            dist[x * total + id] = v;
        }
        active.push(id);
        merges.push(Merge {
            left: i,
            right: j,
            height,
            size: size[id],
        });
    }
    Dendrogram::new(n, merges)
}

/// Height of the lowest common ancestor for every leaf pair.
pub fn cophenetic_distances(dend: &Dendrogram) -> DistanceMatrix {
    let n = dend.leaves();
    let mut data = vec![0.0; n * n];
    let mut members: Vec<Vec<usize>> = (0..n).map(|i| vec![i]).collect();
    for m in dend.merges() {
        for &a in &members[m.left] {
            for &b in &members[m.right] {
                data[a * n + b] = m.height;
                data[b * n + a] = m.height;
            }
        }
        let mut joined = members[m.left].clone();
        joined.extend_from_slice(&members[m.right]);
        members.push(joined);
    }
    DistanceMatrix { n, data }
}

/// Pearson correlation of the upper-triangle entries of `t` and `d`.
pub fn cophenetic_correlation(t: &DistanceMatrix, d: &DistanceMatrix) -> Result<f64> {
    if t.len() != d.len() {
        return Err(Error::Shape(format!("{}x{} vs {}x{}", t.len(), t.len(), d.len(), d.len())));
    }
    if t.len() < 3 {
        return Err(Error::Invalid(format!("correlation needs n >= 3, got {}", t.len())));
    }
    let x = t.upper_triangle();
    let y = d.upper_triangle();
    let m = x.len() as f64;
    let mx = x.iter().sum::<f64>() / m;
    let my = y.iter().sum::<f64>() / m;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(&y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Invalid("zero variance; correlation undefined".into()));
    }
    Ok(sxy / (sxx * syy).sqrt())
}

/// Cophenetic correlation of the symbols' cosine/UPGMA tree against `reference`.
pub fn symbol_correlation<V: AsRef<[f64]>>(symbols: &[V], reference: &DistanceMatrix) -> Result<f64> {
    let t = cophenetic_distances(&upgma(&cosine_distance_matrix(symbols)?)?);
    cophenetic_correlation(&t, reference)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ShuffleTest {
    pub observed: f64,
    pub null: Vec<f64>,
}

impl ShuffleTest {
    /// Fraction of null values at or above the observed coefficient.
    pub fn p_value(&self) -> f64 {
        let hits = self.null.iter().filter(|&&c| c >= self.observed).count();
        (hits + 1) as f64 / (self.null.len() + 1) as f64
    }

    /// Linear-interpolated quantile of the null distribution.
    pub fn null_quantile(&self, q: f64) -> f64 {
        let mut v = self.null.clone();
        v.sort_by(f64::total_cmp);
        let pos = q.clamp(0.0, 1.0) * (v.len() - 1) as f64;
        let (lo, hi) = (pos.floor() as usize, pos.ceil() as usize);
        v[lo] + (v[hi] - v[lo]) * (pos - lo as f64)
    }
}

/// Observed coefficient plus a null from permuting each symbol's elements
/// independently and reclustering. Trial `k` uses its own stream derived
/// from one draw of `rng`, so results do not depend on scheduling.
pub fn shuffle_significance<V, R>(
    symbols: &[V],
    reference: &DistanceMatrix,
    trials: usize,
    rng: &mut R,
) -> Result<ShuffleTest>
where
    V: AsRef<[f64]> + Sync,
    R: Rng + ?Sized,
{
    if trials == 0 {
        return Err(Error::Invalid("trials must be >= 1".into()));
    }
    let observed = symbol_correlation(symbols, reference)?;
    let base = rng.next_u64();
    let null = (0..trials)
        .into_par_iter()
        .map(|k| {
            let mut trial_rng = ChaCha8Rng::seed_from_u64(base);
            trial_rng.set_stream(k as u64);
            let shuffled: Vec<Vec<f64>> = symbols
                .iter()
                .map(|s| {
                    let mut v = s.as_ref().to_vec();
                    v.shuffle(&mut trial_rng);
                    v
                })
                .collect();
            symbol_correlation(&shuffled, reference)
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(ShuffleTest { observed, null })
}

/// One edge per merge, joining the closest leaf pair across its two
/// branches; duplicates removed, sorted.
pub fn semantic_network(dend: &Dendrogram, d: &DistanceMatrix) -> Result<Vec<(usize, usize)>> {
    if dend.leaves() != d.len() {
        return Err(Error::Shape(format!(
            "dendrogram has {} leaves, matrix {}",
            dend.leaves(),
            d.len()
        )));
    }
    let mut edges = BTreeSet::new();
    for m in dend.merges() {
        let mut best = (f64::INFINITY, usize::MAX, usize::MAX);
        for a in dend.members(m.left) {
            for b in dend.members(m.right) {
                let (i, j) = (a.min(b), a.max(b));
                let v = d.get(i, j);
                if v < best.0 || (v == best.0 && (i, j) < (best.1, best.2)) {
                    best = (v, i, j);
                }
            }
        }
        edges.insert((best.1, best.2));
    }
    Ok(edges.into_iter().collect())
}

pub fn write_edges_csv<W: Write>(w: W, edges: &[(usize, usize)], d: &DistanceMatrix, labels: &[String]) -> Result<()> {
    check_labels(labels, d.len())?;
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["source", "target", "source_label", "target_label", "distance"])?;
    for &(i, j) in edges {
        out.write_record([
            i.to_string(),
            j.to_string(),
            labels[i].clone(),
            labels[j].clone(),
            format!("{:.17e}", d.get(i, j)),
        ])?;
    }
    out.flush()?;
    Ok(())
}
