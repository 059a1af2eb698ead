//! Acquiring a class by optimizing its symbol against a frozen network.
//!
//! The objective combines a Yes cross-entropy on a couple of new-class
//! samples, a weighted No cross-entropy on one exemplar of every learned
//! class, and a repelling term `Σ exp(−‖Sᵢ − S‖² / τ)` that keeps the new
//! symbol away from the learned ones.

use std::io::{Read, Write};

use ndarray::{Array2, Axis};
use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data_io::DatasetView;
use crate::gated_net::{cross_entropy, sea_backward, sea_forward_batch, Agent, Decision, Symbol, SymbolBank};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SymbolicHyper {
    pub alpha: f64,
    pub beta: f64,
    pub tau: f64,
    pub lr: f64,
    pub epochs: usize,
}

impl Default for SymbolicHyper {
    fn default() -> Self {
        Self {
            alpha: 0.5,
            beta: 0.001,
            tau: 0.01,
            lr: 0.01,
            epochs: 1000,
        }
    }
}

impl SymbolicHyper {
    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return Err(Error::config("tau", "must be > 0"));
        }
        if !(self.alpha >= 0.0 && self.alpha.is_finite()) {
            return Err(Error::config("alpha", "must be >= 0"));
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return Err(Error::config("beta", "must be >= 0"));
        }
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::config("lr", "must be finite and >= 0"));
        }
        Ok(())
    }
}

/// Two samples of the new class and one exemplar of each learned class.
#[derive(Debug, Clone, PartialEq)]
pub struct FewShotSample {
    new_images: Array2<f64>,
    old_exemplars: Array2<f64>,
    old_classes: Vec<u32>,
}

impl FewShotSample {
    pub fn new(new_images: Array2<f64>, old_exemplars: Array2<f64>, old_classes: Vec<u32>) -> Result<Self> {
        if new_images.nrows() != 2 {
            return Err(Error::Invalid(format!("need exactly 2 new samples, got {}", new_images.nrows())));
        }
        if old_exemplars.nrows() != old_classes.len() {
            return Err(Error::Shape(format!(
                "{} exemplars for {} classes",
                old_exemplars.nrows(),
                old_classes.len()
            )));
        }
        let mut sorted = old_classes.clone();
        sorted.sort_unstable();
        sorted.dedup();
        if sorted.len() != old_classes.len() {
            return Err(Error::Invalid("exactly one exemplar per learned class".into()));
        }
        if new_images.ncols() != old_exemplars.ncols() && !old_classes.is_empty() {
            return Err(Error::Shape("new and old samples differ in width".into()));
        }
        Ok(Self {
            new_images,
            old_exemplars,
            old_classes,
        })
    }

    /// Draws two distinct train samples of `new_class` and one train sample
    /// of every other class in the view.
    pub fn draw<R: Rng + ?Sized>(view: &DatasetView, new_class: u32, rng: &mut R) -> Result<Self> {
        let data = view.data();
        let pool = view.train_of(new_class);
        if pool.len() < 2 {
            return Err(Error::Empty(format!("class {new_class} has fewer than 2 train samples")));
        }
        let picked: Vec<usize> = pool.choose_multiple(rng, 2).copied().collect();
        let mut old_idx = Vec::new();
        let mut old_classes = Vec::new();
        for &c in view.classes().iter().filter(|&&c| c != new_class) {
            let pool = view.train_of(c);
            let &i = pool
                .choose(rng)
                .ok_or_else(|| Error::Empty(format!("class {c} has no train samples")))?;
            old_idx.push(i);
            old_classes.push(c);
        }
        Self::new(data.gather(&picked), data.gather(&old_idx), old_classes)
    }

    pub fn new_images(&self) -> &Array2<f64> {
        &self.new_images
    }

    pub fn old_exemplars(&self) -> &Array2<f64> {
        &self.old_exemplars
    }

    pub fn old_classes(&self) -> &[u32] {
        &self.old_classes
    }
}

fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

/// `Σᵢ exp(−‖Sᵢ − s‖² / τ)` over the anchors; 0 for an empty bank.
pub fn repelling_loss(s: &Symbol, anchors: &SymbolBank, tau: f64) -> Result<f64> {
    Ok(repelling_with_grad(s, anchors, tau)?.0)
}

fn repelling_with_grad(s: &Symbol, anchors: &SymbolBank, tau: f64) -> Result<(f64, Vec<f64>)> {
    if !(tau > 0.0) {
        return Err(Error::Invalid(format!("tau must be > 0, got {tau}")));
    }
    if !anchors.is_empty() && anchors.symbol_len() != s.len() {
        return Err(Error::Dimension {
            layer: 0,
            what: "symbol",
            expected: anchors.symbol_len(),
            got: s.len(),
        });
    }
    let mut loss = 0.0;
    let mut grad = vec![0.0; s.len()];
    for (_, a) in anchors.iter() {
        let e = (-sq_dist(a.as_slice(), s.as_slice()) / tau).exp();
        loss += e;
        for ((g, x), y) in grad.iter_mut().zip(s.as_slice()).zip(a.as_slice()) {
            *g -= 2.0 / tau * e * (x - y);
        }
    }
    Ok((loss, grad))
}

/// Value of the combined objective, its three terms, and `∂L/∂s`.
#[derive(Debug, Clone, PartialEq)]
pub struct CombinedLoss {
    pub total: f64,
    pub ce_new: f64,
    pub ce_old: f64,
    pub repel: f64,
    pub grad: Vec<f64>,
}

/// `CE(new → Yes | s) + α·CE(old → No | s) + β·repel(s)`, each cross-entropy
/// averaged over its sample set. `anchors` are the learned classes' symbols.
pub fn combined_loss(
    agent: &Agent,
    s: &Symbol,
    few_shot: &FewShotSample,
    anchors: &SymbolBank,
    hyper: &SymbolicHyper,
) -> Result<CombinedLoss> {
    if s.len() != agent.symbol_len() {
        return Err(Error::Dimension {
            layer: 0,
            what: "symbol",
            expected: agent.symbol_len(),
            got: s.len(),
        });
    }
    let n_new = few_shot.new_images.nrows();
    let n_old = few_shot.old_exemplars.nrows();
    let rows = n_new + n_old;
    let mut features = Array2::zeros((rows, agent.feature_dim()));
    features.slice_mut(ndarray::s![..n_new, ..]).assign(&few_shot.new_images);
    if n_old > 0 {
        features.slice_mut(ndarray::s![n_new.., ..]).assign(&few_shot.old_exemplars);
    }
    let sym_row = ndarray::aview1(s.as_slice());
    let symbols = sym_row.broadcast((rows, s.len())).expect("row broadcast").to_owned();
    let (logits, tape) = sea_forward_batch(agent, symbols.view(), features.view())?;

    let (ce_new, g_new) = cross_entropy(logits.slice(ndarray::s![..n_new, ..]), &vec![Decision::Yes; n_new])?;
    let (ce_old, g_old) = cross_entropy(logits.slice(ndarray::s![n_new.., ..]), &vec![Decision::No; n_old])?;
    let (repel, g_rep) = repelling_with_grad(s, anchors, hyper.tau)?;
    let total = ce_new + hyper.alpha * ce_old + hyper.beta * repel;
    if !total.is_finite() {
        return Err(Error::NonFinite(format!(
            "combined loss (ce_new={ce_new}, ce_old={ce_old}, repel={repel})"
        )));
    }

    let mut logit_grad = Array2::zeros((rows, 2));
    logit_grad.slice_mut(ndarray::s![..n_new, ..]).assign(&g_new);
    if n_old > 0 {
        logit_grad
            .slice_mut(ndarray::s![n_new.., ..])
            .assign(&(g_old * hyper.alpha));
    }
    let grads = sea_backward(agent, tape, logit_grad.view())?;
    let ce_grad = grads.symbols.sum_axis(Axis(0));
    let grad = ce_grad
        .iter()
        .zip(&g_rep)
        .map(|(c, r)| c + hyper.beta * r)
        .collect();
    Ok(CombinedLoss {
        total,
        ce_new,
        ce_old,
        repel,
        grad,
    })
}

/// The bank without `class_id`.
pub fn anchors_excluding(bank: &SymbolBank, class_id: u32) -> SymbolBank {
    let mut a = bank.clone();
    a.remove(class_id);
    a
}

/// Uniform draw inside the per-element `[min, max]` envelope of a bank.
pub fn sample_in_envelope<R: Rng + ?Sized>(bank: &SymbolBank, rng: &mut R) -> Result<Symbol> {
    let (lo, hi) = bank.envelope()?;
    Symbol::new(
        lo.iter()
            .zip(&hi)
            .map(|(&a, &b)| if a == b { a } else { rng.random_range(a..=b) })
            .collect(),
    )
}

/// Gradient descent on a fresh symbol for `class_id`, network frozen.
/// The symbol starts uniformly inside the envelope of the other classes'
/// symbols. Returns the symbol and the final objective value.
pub fn infer_symbol<R: Rng + ?Sized>(
    agent: &Agent,
    class_id: u32,
    few_shot: &FewShotSample,
    hyper: &SymbolicHyper,
    rng: &mut R,
) -> Result<(Symbol, f64)> {
    hyper.validate()?;
    let anchors = anchors_excluding(&agent.bank, class_id);
    let mut s = sample_in_envelope(&anchors, rng)?;
    let mut trace: Vec<f64> = Vec::with_capacity(hyper.epochs + 1);
    for _ in 0..hyper.epochs {
        let step = combined_loss(agent, &s, few_shot, &anchors, hyper).map_err(|e| diverged(e, &trace))?;
        trace.push(step.total);
        for (v, g) in s.as_mut_slice().iter_mut().zip(&step.grad) {
            *v -= hyper.lr * g;
        }
        if s.as_slice().iter().any(|v| !v.is_finite()) {
            return Err(diverged(Error::NonFinite("symbol element".into()), &trace));
        }
    }
    let last = combined_loss(agent, &s, few_shot, &anchors, hyper).map_err(|e| diverged(e, &trace))?;
    Ok((s, last.total))
}

fn diverged(e: Error, trace: &[f64]) -> Error {
    let tail = &trace[trace.len().saturating_sub(5)..];
    Error::Diverged(format!("{e}; after {} steps, last losses {tail:?}", trace.len()))
}

/// `count` additional symbols for `class_id`, each from its own few-shot
/// draw and random start.
pub fn extend_symbol_set<R: Rng + ?Sized>(
    agent: &Agent,
    view: &DatasetView,
    class_id: u32,
    count: usize,
    hyper: &SymbolicHyper,
    rng: &mut R,
) -> Result<Vec<Symbol>> {
    (0..count)
        .map(|_| {
            let shot = FewShotSample::draw(view, class_id, rng)?;
            Ok(infer_symbol(agent, class_id, &shot, hyper, rng)?.0)
        })
        .collect()
}

/// Rows of `class_id, variant_index, v0, v1, ...`.
pub fn write_symbol_sets<W: Write>(w: W, sets: &[(u32, Vec<Symbol>)]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    let len = sets.iter().flat_map(|s| s.1.first()).map(Symbol::len).next().unwrap_or(0);
    let mut header = vec!["class_id".to_string(), "variant_index".to_string()];
    header.extend((0..len).map(|i| format!("s{i}")));
    out.write_record(&header)?;
    for (class, symbols) in sets {
        for (k, s) in symbols.iter().enumerate() {
            let mut rec = vec![class.to_string(), k.to_string()];
            rec.extend(s.as_slice().iter().map(|v| format!("{v:.17e}")));
            out.write_record(&rec)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_symbol_sets<R: Read>(r: R) -> Result<Vec<(u32, Vec<Symbol>)>> {
    let mut rdr = csv::Reader::from_reader(r);
    let mut sets: Vec<(u32, Vec<Symbol>)> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let bad = |msg: &str| Error::Parse {
            path: "<symbol csv>".into(),
            line,
            msg: msg.to_string(),
        };
        let class: u32 = rec.get(0).and_then(|v| v.parse().ok()).ok_or_else(|| bad("bad class_id"))?;
        let values = rec
            .iter()
            .skip(2)
            .map(|v| v.parse::<f64>().ok())
            .collect::<Option<Vec<_>>>()
            .ok_or_else(|| bad("bad symbol value"))?;
        let sym = Symbol::new(values).map_err(|e| bad(&e.to_string()))?;
        match sets.last_mut() {
            Some((c, v)) if *c == class => v.push(sym),
            _ => sets.push((class, vec![sym])),
        }
    }
    Ok(sets)
}
