//! Symbol-gated identification network.
//!
//! A context-dependent processing (CDP) network maps a symbol to one gain
//! vector per gated layer of a task-solving (TS) classifier. The TS network
//! reads a feature vector through an identity layer, runs it through ReLU
//! hidden layers and emits two logits, `[No, Yes]`. Every CDP layer is a
//! sigmoid layer whose output width matches exactly one TS layer:
//!
//! ```text
//! symbol(L) -> cdp[0](F) -> cdp[1](h1) -> ... -> cdp[k](hk)
//!                 |            |                    |
//! features(F) -> id(F) ---> relu(h1) -> ... ---> relu(hk) -> logits(2)
//! ```
//!
//! The output layer is never gated.

use std::collections::BTreeMap;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::binio::{dim_u32, verify_crc, Reader, Writer};
use crate::grad_core::{self, Activation, DenseLayer, Gradients, Tape};
use crate::{Error, Result};

const AGENT_MAGIC: &[u8; 4] = b"SEA1";

/// A class identifier vector fed to the CDP network.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Symbol(Vec<f64>);

impl Symbol {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Invalid("symbol must not be empty".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("symbol element".into()));
        }
        Ok(Self(values))
    }

    pub fn random<R: Rng + ?Sized>(len: usize, rng: &mut R) -> Self {
        Self((0..len).map(|_| rng.random_range(-1.0..=1.0)).collect())
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub(crate) fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    /// True when every element has the same bit pattern.
    pub fn bit_eq(&self, other: &Symbol) -> bool {
        self.0.len() == other.0.len()
            && self.0.iter().zip(&other.0).all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Class id → symbol association. All symbols share one length.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SymbolBank {
    symbol_len: usize,
    symbols: BTreeMap<u32, Symbol>,
}

impl SymbolBank {
    pub fn new(symbol_len: usize) -> Self {
        Self {
            symbol_len,
            symbols: BTreeMap::new(),
        }
    }

    pub fn random<R: Rng + ?Sized>(symbol_len: usize, classes: &[u32], rng: &mut R) -> Self {
        let mut bank = Self::new(symbol_len);
        for &c in classes {
            bank.symbols.insert(c, Symbol::random(symbol_len, rng));
        }
        bank
    }

    pub fn insert(&mut self, class_id: u32, symbol: Symbol) -> Result<Option<Symbol>> {
        if symbol.len() != self.symbol_len {
            return Err(Error::Dimension {
                layer: 0,
                what: "symbol",
                expected: self.symbol_len,
                got: symbol.len(),
            });
        }
        Ok(self.symbols.insert(class_id, symbol))
    }

    pub fn remove(&mut self, class_id: u32) -> Option<Symbol> {
        self.symbols.remove(&class_id)
    }

    pub fn get(&self, class_id: u32) -> Result<&Symbol> {
        self.symbols.get(&class_id).ok_or(Error::MissingClass(class_id))
    }

    pub(crate) fn get_mut(&mut self, class_id: u32) -> Result<&mut Symbol> {
        self.symbols.get_mut(&class_id).ok_or(Error::MissingClass(class_id))
    }

    pub fn contains(&self, class_id: u32) -> bool {
        self.symbols.contains_key(&class_id)
    }

    pub fn symbol_len(&self) -> usize {
        self.symbol_len
    }

    pub fn len(&self) -> usize {
        self.symbols.len()
    }

    pub fn is_empty(&self) -> bool {
        self.symbols.is_empty()
    }

    pub fn class_ids(&self) -> Vec<u32> {
        self.symbols.keys().copied().collect()
    }

    pub fn iter(&self) -> impl Iterator<Item = (u32, &Symbol)> {
        self.symbols.iter().map(|(&c, s)| (c, s))
    }

    /// Per-element `[min, max]` over every symbol in the bank.
    pub fn envelope(&self) -> Result<(Vec<f64>, Vec<f64>)> {
        if self.is_empty() {
            return Err(Error::Empty("symbol bank".into()));
        }
        let mut lo = vec![f64::INFINITY; self.symbol_len];
        let mut hi = vec![f64::NEG_INFINITY; self.symbol_len];
        for s in self.symbols.values() {
            for (i, &v) in s.as_slice().iter().enumerate() {
                lo[i] = lo[i].min(v);
                hi[i] = hi[i].max(v);
            }
        }
        Ok((lo, hi))
    }

    /// Bitwise equality, including class ids.
    pub fn bit_eq(&self, other: &SymbolBank) -> bool {
        self.symbol_len == other.symbol_len
            && self.symbols.len() == other.symbols.len()
            && self
                .symbols
                .iter()
                .zip(&other.symbols)
                .all(|((ca, a), (cb, b))| ca == cb && a.bit_eq(b))
    }
}

/// Layer widths of an agent. `layers[0]` is the feature width `F`, the rest
/// are TS hidden widths; every entry is gated by a CDP layer of equal width.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetGeometry {
    pub symbol_len: usize,
    pub layers: Vec<usize>,
}

impl Default for NetGeometry {
    fn default() -> Self {
        Self {
            symbol_len: 20,
            layers: vec![512, 100, 10],
        }
    }
}

impl NetGeometry {
    pub fn new(symbol_len: usize, layers: Vec<usize>) -> Result<Self> {
        let g = Self { symbol_len, layers };
        g.validate()?;
        Ok(g)
    }

    pub fn validate(&self) -> Result<()> {
        if self.symbol_len == 0 {
            return Err(Error::Invalid("symbol length must be > 0".into()));
        }
        if self.layers.is_empty() || self.layers.contains(&0) {
            return Err(Error::Invalid(format!(
                "layer widths must be non-empty and positive, got {:?}",
                self.layers
            )));
        }
        Ok(())
    }

    pub fn feature_dim(&self) -> usize {
        self.layers[0]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CdpModule {
    layers: Vec<DenseLayer>,
}

impl CdpModule {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        if layers.is_empty() {
            return Err(Error::Invalid("CDP module needs at least one layer".into()));
        }
        for (i, l) in layers.iter().enumerate() {
            if l.activation() != Activation::Sigmoid {
                return Err(Error::Invalid(format!("CDP layer {i} must be sigmoid")));
            }
            if i > 0 && layers[i - 1].out_dim() != l.in_dim() {
                return Err(Error::Dimension {
                    layer: i,
                    what: "CDP input",
                    expected: layers[i - 1].out_dim(),
                    got: l.in_dim(),
                });
            }
        }
        Ok(Self { layers })
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    pub fn symbol_len(&self) -> usize {
        self.layers[0].in_dim()
    }

    /// Width of every gain vector produced, in TS order.
    pub fn gain_widths(&self) -> Vec<usize> {
        self.layers.iter().map(|l| l.out_dim()).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TsClassifier {
    feature_dim: usize,
    layers: Vec<DenseLayer>,
}

impl TsClassifier {
    /// `layers` are the trainable layers after the identity feature layer:
    /// ReLU hidden layers followed by an identity output layer of width 2.
    pub fn new(feature_dim: usize, layers: Vec<DenseLayer>) -> Result<Self> {
        let Some(out) = layers.last() else {
            return Err(Error::Invalid("TS classifier needs an output layer".into()));
        };
        if out.out_dim() != 2 || out.activation() != Activation::Identity {
            return Err(Error::Invalid("TS output layer must be 2 identity units".into()));
        }
        let mut width = feature_dim;
        for (i, l) in layers.iter().enumerate() {
            if l.in_dim() != width {
                return Err(Error::Dimension {
                    layer: i,
                    what: "TS input",
                    expected: width,
                    got: l.in_dim(),
                });
            }
            if i + 1 < layers.len() && l.activation() != Activation::Relu {
                return Err(Error::Invalid(format!("TS hidden layer {i} must be ReLU")));
            }
            width = l.out_dim();
        }
        Ok(Self { feature_dim, layers })
    }

    pub fn feature_dim(&self) -> usize {
        self.feature_dim
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [DenseLayer] {
        &mut self.layers
    }

    /// Widths of the gated layers: the identity layer then every hidden layer.
    pub fn gated_widths(&self) -> Vec<usize> {
        std::iter::once(self.feature_dim)
            .chain(self.layers[..self.layers.len() - 1].iter().map(|l| l.out_dim()))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Agent {
    pub cdp: CdpModule,
    pub ts: TsClassifier,
    pub bank: SymbolBank,
}

impl Agent {
    /// Randomly initialized agent with one random symbol per class.
    pub fn new<R: Rng + ?Sized>(geometry: &NetGeometry, classes: &[u32], rng: &mut R) -> Result<Self> {
        geometry.validate()?;
        let widths = &geometry.layers;
        let mut cdp = Vec::with_capacity(widths.len());
        let mut prev = geometry.symbol_len;
        for &w in widths {
            cdp.push(DenseLayer::init(prev, w, Activation::Sigmoid, rng));
            prev = w;
        }
        let mut ts = Vec::with_capacity(widths.len());
        for pair in widths.windows(2) {
            ts.push(DenseLayer::init(pair[0], pair[1], Activation::Relu, rng));
        }
        ts.push(DenseLayer::init(*widths.last().unwrap(), 2, Activation::Identity, rng));
        let bank = SymbolBank::random(geometry.symbol_len, classes, rng);
        Self::from_parts(CdpModule::new(cdp)?, TsClassifier::new(widths[0], ts)?, bank)
    }

    /// Assembles an agent, checking the one-to-one gating binding.
    pub fn from_parts(cdp: CdpModule, ts: TsClassifier, bank: SymbolBank) -> Result<Self> {
        let gains = cdp.gain_widths();
        let gated = ts.gated_widths();
        if gains.len() != gated.len() {
            return Err(Error::Invalid(format!(
                "CDP has {} layers but TS has {} gated layers",
                gains.len(),
                gated.len()
            )));
        }
        for (i, (g, t)) in gains.iter().zip(&gated).enumerate() {
            if g != t {
                return Err(Error::Dimension {
                    layer: i,
                    what: "CDP gain",
                    expected: *t,
                    got: *g,
                });
            }
        }
        if bank.symbol_len() != cdp.symbol_len() {
            return Err(Error::Dimension {
                layer: 0,
                what: "bank symbol",
                expected: cdp.symbol_len(),
                got: bank.symbol_len(),
            });
        }
        Ok(Self { cdp, ts, bank })
    }

    pub fn symbol_len(&self) -> usize {
        self.cdp.symbol_len()
    }

    pub fn feature_dim(&self) -> usize {
        self.ts.feature_dim()
    }

    pub fn geometry(&self) -> NetGeometry {
        NetGeometry {
            symbol_len: self.symbol_len(),
            layers: self.ts.gated_widths(),
        }
    }

    /// Bitwise equality of every CDP and TS parameter (bank excluded).
    pub fn params_bit_eq(&self, other: &Agent) -> bool {
        fn same(a: &[DenseLayer], b: &[DenseLayer]) -> bool {
            a.len() == b.len()
                && a.iter().zip(b).all(|(x, y)| {
                    x.weights().shape() == y.weights().shape()
                        && x.weights().iter().zip(y.weights()).all(|(p, q)| p.to_bits() == q.to_bits())
                        && x.biases().iter().zip(y.biases()).all(|(p, q)| p.to_bits() == q.to_bits())
                })
        }
        same(self.cdp.layers(), other.cdp.layers()) && same(self.ts.layers(), other.ts.layers())
    }

    /// Serializes to the `SEA1` binary layout.
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let g = self.geometry();
        let mut w = Writer::default();
        w.raw(AGENT_MAGIC);
        w.u32(dim_u32(g.symbol_len, "symbol length")?);
        w.u32(dim_u32(g.layers.len(), "layer count")?);
        for &width in &g.layers {
            w.u32(dim_u32(width, "layer width")?);
        }
        for layer in self.cdp.layers().iter().chain(self.ts.layers()) {
            w.f64s(layer.weights().iter());
            w.f64s(layer.biases().iter());
        }
        w.u32(dim_u32(self.bank.len(), "class count")?);
        for (class, sym) in self.bank.iter() {
            w.u32(class);
            w.f64s(sym.as_slice());
        }
        Ok(w.finish_with_crc())
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let body = verify_crc(bytes)?;
        let mut r = Reader::new(body);
        if r.bytes(4, "magic")? != AGENT_MAGIC {
            return Err(Error::Format {
                offset: 0,
                msg: "bad magic, expected SEA1".into(),
            });
        }
        let symbol_len = r.u32("symbol length")? as usize;
        let n_layers = r.u32("layer count")? as usize;
        if symbol_len == 0 || n_layers == 0 || n_layers > 64 {
            return r.fail(format!("implausible geometry: L={symbol_len}, layers={n_layers}"));
        }
        let mut widths = Vec::with_capacity(n_layers);
        for _ in 0..n_layers {
            let w = r.u32("layer width")? as usize;
            if w == 0 {
                return r.fail("zero layer width");
            }
            widths.push(w);
        }
        let read_layer = |r: &mut Reader, n_in: usize, n_out: usize, act: Activation| -> Result<DenseLayer> {
            let need = n_in
                .checked_mul(n_out)
                .and_then(|v| v.checked_add(n_out))
                .and_then(|v| v.checked_mul(8));
            match need {
                Some(n) if n <= r.remaining() => {}
                _ => return r.fail("truncated layer parameters"),
            }
            let w = r.f64s(n_in * n_out, "weight")?;
            let b = r.f64s(n_out, "bias")?;
            DenseLayer::new(
                Array2::from_shape_vec((n_out, n_in), w).expect("shape checked"),
                b.into(),
                act,
            )
        };
        let mut cdp = Vec::with_capacity(n_layers);
        let mut prev = symbol_len;
        for &w in &widths {
            cdp.push(read_layer(&mut r, prev, w, Activation::Sigmoid)?);
            prev = w;
        }
        let mut ts = Vec::with_capacity(n_layers);
        for pair in widths.windows(2) {
            ts.push(read_layer(&mut r, pair[0], pair[1], Activation::Relu)?);
        }
        ts.push(read_layer(&mut r, prev, 2, Activation::Identity)?);
        let n_classes = r.u32("class count")? as usize;
        let mut bank = SymbolBank::new(symbol_len);
        for _ in 0..n_classes {
            let at = r.offset();
            let class = r.u32("class id")?;
            let sym = Symbol(r.f64s(symbol_len, "symbol element")?);
            if bank.insert(class, sym)?.is_some() {
                return Err(Error::Format {
                    offset: at,
                    msg: format!("duplicate class id {class}"),
                });
            }
        }
        if r.remaining() != 0 {
            return r.fail(format!("{} trailing bytes", r.remaining()));
        }
        Self::from_parts(CdpModule::new(cdp)?, TsClassifier::new(widths[0], ts)?, bank)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, self.to_bytes()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_bytes(&std::fs::read(path)?)
    }
}

/// CDP output: one gain matrix (`batch × width`) per gated TS layer.
pub fn cdp_forward(cdp: &CdpModule, symbols: ArrayView2<f64>) -> Result<(Vec<Array2<f64>>, Tape)> {
    if symbols.ncols() != cdp.symbol_len() {
        return Err(Error::Dimension {
            layer: 0,
            what: "symbol",
            expected: cdp.symbol_len(),
            got: symbols.ncols(),
        });
    }
    let (_, tape) = grad_core::forward_batch(cdp.layers(), symbols, None)?;
    let gains = (0..tape.len()).map(|l| tape.activation(l).clone()).collect();
    Ok((gains, tape))
}

/// Gains for a single symbol.
pub fn cdp_gains(cdp: &CdpModule, symbol: &Symbol) -> Result<Vec<Vec<f64>>> {
    let row = ArrayView2::from_shape((1, symbol.len()), symbol.as_slice()).expect("row");
    let (gains, _) = cdp_forward(cdp, row)?;
    Ok(gains.into_iter().map(|g| g.into_raw_vec_and_offset().0).collect())
}

struct TsTape {
    features: Array2<f64>,
    gate0: Array2<f64>,
    tape: Tape,
}

fn ts_forward(ts: &TsClassifier, gains: &[Array2<f64>], features: ArrayView2<f64>) -> Result<(Array2<f64>, TsTape)> {
    if features.ncols() != ts.feature_dim() {
        return Err(Error::Dimension {
            layer: 0,
            what: "feature",
            expected: ts.feature_dim(),
            got: features.ncols(),
        });
    }
    let widths = ts.gated_widths();
    if gains.len() != widths.len() {
        return Err(Error::Invalid(format!(
            "{} gain vectors for {} gated layers",
            gains.len(),
            widths.len()
        )));
    }
    for (i, (g, &w)) in gains.iter().zip(&widths).enumerate() {
        if g.dim() != (features.nrows(), w) {
            return Err(Error::Dimension {
                layer: i,
                what: "gain",
                expected: w,
                got: g.ncols(),
            });
        }
    }
    let gated_input = &features * &gains[0];
    let mut layer_gains: Vec<Option<Array2<f64>>> = gains[1..].iter().cloned().map(Some).collect();
    layer_gains.push(None);
    let (logits, tape) = grad_core::forward_batch(ts.layers(), gated_input.view(), Some(&layer_gains))?;
    Ok((
        logits,
        TsTape {
            features: features.to_owned(),
            gate0: gains[0].clone(),
            tape,
        },
    ))
}

/// TS forward pass with externally supplied gains (one matrix per gated layer).
pub fn ts_forward_with_gains(
    ts: &TsClassifier,
    gains: &[Array2<f64>],
    features: ArrayView2<f64>,
) -> Result<Array2<f64>> {
    if gains.iter().flatten().any(|v| !(0.0..=1.0).contains(v)) {
        return Err(Error::GainRange { layer: 0 });
    }
    Ok(ts_forward(ts, gains, features)?.0)
}

/// Ungated TS forward pass.
pub fn ts_forward_plain(ts: &TsClassifier, features: ArrayView2<f64>) -> Result<Array2<f64>> {
    if features.ncols() != ts.feature_dim() {
        return Err(Error::Dimension {
            layer: 0,
            what: "feature",
            expected: ts.feature_dim(),
            got: features.ncols(),
        });
    }
    Ok(grad_core::forward_batch(ts.layers(), features, None)?.0)
}

/// Intermediate values of a joint CDP + TS forward pass.
pub struct JointTape {
    cdp: Tape,
    ts: TsTape,
    geometry: NetGeometry,
}

impl JointTape {
    pub fn gains(&self) -> Vec<&Array2<f64>> {
        (0..self.cdp.len()).map(|l| self.cdp.activation(l)).collect()
    }
}

/// Batched joint forward pass: row `i` of `symbols` gates row `i` of `features`.
pub fn sea_forward_batch(
    agent: &Agent,
    symbols: ArrayView2<f64>,
    features: ArrayView2<f64>,
) -> Result<(Array2<f64>, JointTape)> {
    if symbols.nrows() != features.nrows() {
        return Err(Error::Shape(format!(
            "{} symbols for {} feature rows",
            symbols.nrows(),
            features.nrows()
        )));
    }
    let (gains, cdp_tape) = cdp_forward(&agent.cdp, symbols)?;
    let (logits, ts_tape) = ts_forward(&agent.ts, &gains, features)?;
    Ok((
        logits,
        JointTape {
            cdp: cdp_tape,
            ts: ts_tape,
            geometry: agent.geometry(),
        },
    ))
}

pub fn sea_forward(agent: &Agent, symbol: &Symbol, features: &[f64]) -> Result<([f64; 2], JointTape)> {
    let s = ArrayView2::from_shape((1, symbol.len()), symbol.as_slice()).expect("row");
    let x = ArrayView2::from_shape((1, features.len()), features).expect("row");
    let (logits, tape) = sea_forward_batch(agent, s, x)?;
    Ok(([logits[[0, 0]], logits[[0, 1]]], tape))
}

/// Gradients of a joint backward pass. Parameter gradients are summed over
/// the batch; `symbols` holds one gradient row per batch row.
pub struct SeaGradients {
    pub cdp: Gradients,
    pub ts: Gradients,
    pub symbols: Array2<f64>,
}

pub fn sea_backward(agent: &Agent, tape: JointTape, logit_grad: ArrayView2<f64>) -> Result<SeaGradients> {
    if tape.geometry != agent.geometry() {
        return Err(Error::TapeMismatch(format!(
            "tape geometry {:?} differs from agent geometry {:?}",
            tape.geometry,
            agent.geometry()
        )));
    }
    let TsTape { features, gate0, tape: ts_tape } = tape.ts;
    let ts = grad_core::backward(agent.ts.layers(), ts_tape, logit_grad)?;
    let n_gated = agent.cdp.layers().len();
    // ∂loss/∂gain for every CDP output, in layer order.
    let mut gain_grads: Vec<Option<Array2<f64>>> = Vec::with_capacity(n_gated);
    gain_grads.push(Some(&ts.input * &features));
    for l in 0..n_gated - 1 {
        gain_grads.push(ts.gains[l].clone());
    }
    let last = gain_grads.pop().flatten().expect("every gated layer has a gain gradient");
    gain_grads.push(None);
    let cdp = grad_core::backward_with_taps(agent.cdp.layers(), tape.cdp, last.view(), &gain_grads)?;
    let symbols = cdp.input.clone();
    let mut ts = ts;
    // Input gradient of the TS net is taken with respect to the raw features.
    ts.input = &ts.input * &gate0;
    Ok(SeaGradients { cdp, ts, symbols })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Decision {
    No,
    Yes,
}

impl Decision {
    /// Target index in the `[No, Yes]` logit pair.
    pub fn index(self) -> usize {
        match self {
            Decision::No => 0,
            Decision::Yes => 1,
        }
    }
}

/// `Yes` iff the Yes logit is strictly larger.
pub fn decide(logits: &[f64]) -> Decision {
    assert_eq!(logits.len(), 2, "decide expects exactly two logits");
    if logits[1] > logits[0] {
        Decision::Yes
    } else {
        Decision::No
    }
}

/// Mean softmax cross-entropy over rows, with its gradient w.r.t. the logits.
pub fn cross_entropy(logits: ArrayView2<f64>, targets: &[Decision]) -> Result<(f64, Array2<f64>)> {
    if logits.ncols() != 2 || logits.nrows() != targets.len() {
        return Err(Error::Shape(format!(
            "{:?} logits for {} targets",
            logits.dim(),
            targets.len()
        )));
    }
    if targets.is_empty() {
        return Ok((0.0, Array2::zeros((0, 2))));
    }
    let n = targets.len() as f64;
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut loss = 0.0;
    for (i, (row, t)) in logits.axis_iter(Axis(0)).zip(targets).enumerate() {
        let m = row[0].max(row[1]);
        let lse = m + ((row[0] - m).exp() + (row[1] - m).exp()).ln();
        let k = t.index();
        loss += lse - row[k];
        for j in 0..2 {
            let p = (row[j] - lse).exp();
            grad[[i, j]] = (p - if j == k { 1.0 } else { 0.0 }) / n;
        }
    }
    Ok((loss / n, grad))
}
