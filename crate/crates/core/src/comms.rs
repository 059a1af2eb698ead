//! Symbol translation between two agents and the communication game.
//!
//! A translator MLP is regressed from speaker symbols onto listener symbols
//! for the classes both agents know. The listener then evaluates a class it
//! never learned using the translated speaker symbol, against a control
//! that uses a random symbol from the listener's own envelope.

use std::collections::BTreeMap;
use std::io::Write;

use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data_io::DatasetView;
use crate::gated_net::{Agent, Symbol, SymbolBank};
use crate::grad_core::{backward, run_forward, tensor_lens, Activation, DenseLayer, Optimizer, OptimizerKind};
use crate::symbolic::sample_in_envelope;
use crate::trainer::evaluate_with_symbol;
use crate::{Error, Result};

pub const TI_HIDDEN_LAYERS: usize = 10;
pub const TI_HIDDEN_WIDTH: usize = 500;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TiSchedule {
    pub lr0: f64,
    pub decay: f64,
    pub decay_every: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub dropout: f64,
}

impl Default for TiSchedule {
    fn default() -> Self {
        Self {
            lr0: 1e-4,
            decay: 0.5,
            decay_every: 10,
            epochs: 200,
            batch_size: 16,
            dropout: 0.3,
        }
    }
}

impl TiSchedule {
    pub fn validate(&self) -> Result<()> {
        if !(self.lr0 > 0.0 && self.lr0.is_finite()) {
            return Err(Error::config("lr0", "must be > 0"));
        }
        if !(self.decay > 0.0 && self.decay <= 1.0) {
            return Err(Error::config("decay", "must lie in (0, 1]"));
        }
        if self.decay_every == 0 {
            return Err(Error::config("decay_every", "must be >= 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be >= 1"));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::config("dropout", "must lie in [0, 1)"));
        }
        Ok(())
    }

    /// Learning rate for the zero-based epoch index: halved at 10, 20, ...
    pub fn lr_at(&self, epoch_idx: usize) -> f64 {
        self.lr0 * self.decay.powi((epoch_idx / self.decay_every) as i32)
    }
}

/// Translator MLP: `L → 500 × 10 (ReLU) → L`.
#[derive(Debug, Clone, PartialEq)]
pub struct TiModule {
    layers: Vec<DenseLayer>,
}

impl TiModule {
    pub fn new(layers: Vec<DenseLayer>) -> Result<Self> {
        let (first, last) = match (layers.first(), layers.last()) {
            (Some(f), Some(l)) if layers.len() >= 2 => (f, l),
            _ => return Err(Error::Invalid("translator needs at least two layers".into())),
        };
        if first.in_dim() != last.out_dim() {
            return Err(Error::Shape(format!(
                "translator maps {} to {}",
                first.in_dim(),
                last.out_dim()
            )));
        }
        for (i, w) in layers.windows(2).enumerate() {
            if w[0].out_dim() != w[1].in_dim() {
                return Err(Error::Dimension {
                    layer: i + 1,
                    what: "input",
                    expected: w[0].out_dim(),
                    got: w[1].in_dim(),
                });
            }
        }
        Ok(Self { layers })
    }

    pub fn symbol_len(&self) -> usize {
        self.layers[0].in_dim()
    }

    pub fn layers(&self) -> &[DenseLayer] {
        &self.layers
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(DenseLayer::param_count).sum()
    }

    fn hidden_count(&self) -> usize {
        self.layers.len() - 1
    }
}

/// Fresh translator for symbols of length `symbol_len`.
pub fn build_ti<R: Rng + ?Sized>(symbol_len: usize, rng: &mut R) -> Result<TiModule> {
    build_ti_with(symbol_len, TI_HIDDEN_LAYERS, TI_HIDDEN_WIDTH, rng)
}

/// Translator with `hidden_layers` ReLU layers of `width` units, weights and
/// biases uniform in `±1/√fan_in`.
pub fn build_ti_with<R: Rng + ?Sized>(
    symbol_len: usize,
    hidden_layers: usize,
    width: usize,
    rng: &mut R,
) -> Result<TiModule> {
    if symbol_len == 0 || hidden_layers == 0 || width == 0 {
        return Err(Error::Invalid("translator dimensions must be positive".into()));
    }
    let mut layers = Vec::with_capacity(hidden_layers + 1);
    let mut fan_in = symbol_len;
    for _ in 0..hidden_layers {
        layers.push(DenseLayer::init(fan_in, width, Activation::Relu, rng));
        fan_in = width;
    }
    layers.push(DenseLayer::init(fan_in, symbol_len, Activation::Identity, rng));
    TiModule::new(layers)
}

#[derive(Debug, Clone, PartialEq)]
pub struct TranslationPair {
    pub class_id: u32,
    pub speaker: Symbol,
    pub listener: Symbol,
}

fn stack(symbols: &[&Symbol]) -> Array2<f64> {
    let l = symbols.first().map_or(0, |s| s.len());
    Array2::from_shape_fn((symbols.len(), l), |(i, j)| symbols[i].as_slice()[j])
}

fn dropout_masks<R: Rng + ?Sized>(ti: &TiModule, rows: usize, rate: f64, rng: &mut R) -> Vec<Option<Array2<f64>>> {
    let keep = 1.0 - rate;
    let mut masks: Vec<Option<Array2<f64>>> = ti.layers[..ti.hidden_count()]
        .iter()
        .map(|layer| {
            Some(Array2::from_shape_fn((rows, layer.out_dim()), |_| {
                if rng.random::<f64>() < keep {
                    1.0 / keep
                } else {
                    0.0
                }
            }))
        })
        .collect();
    masks.push(None);
    masks
}

fn mse(pred: &Array2<f64>, target: ArrayView2<f64>) -> (f64, Array2<f64>) {
    let n = pred.len() as f64;
    let diff = pred - &target;
    let loss = diff.iter().map(|d| d * d).sum::<f64>() / n;
    (loss, diff * (2.0 / n))
}

/// Mean squared error of the translator (inference mode) on `pairs`.
pub fn ti_mse(ti: &TiModule, pairs: &[TranslationPair]) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::Empty("translation pairs".into()));
    }
    let xs = stack(&pairs.iter().map(|p| &p.speaker).collect::<Vec<_>>());
    let ys = stack(&pairs.iter().map(|p| &p.listener).collect::<Vec<_>>());
    let (out, _) = run_forward(&ti.layers, xs.view(), None, false)?;
    Ok(mse(&out, ys.view()).0)
}

/// Adam on the mean squared error with dropout on every hidden layer.
/// Returns the mean training loss of each epoch.
pub fn train_ti<R: Rng + ?Sized>(
    ti: &mut TiModule,
    pairs: &[TranslationPair],
    schedule: &TiSchedule,
    rng: &mut R,
) -> Result<Vec<f64>> {
    schedule.validate()?;
    if pairs.is_empty() {
        return Err(Error::Empty("translation pairs".into()));
    }
    let l = ti.symbol_len();
    if let Some(p) = pairs.iter().find(|p| p.speaker.len() != l || p.listener.len() != l) {
        return Err(Error::Dimension {
            layer: 0,
            what: "symbol",
            expected: l,
            got: if p.speaker.len() != l { p.speaker.len() } else { p.listener.len() },
        });
    }
    let mut opt = Optimizer::new(OptimizerKind::Adam, &tensor_lens(&ti.layers));
    let mut order: Vec<usize> = (0..pairs.len()).collect();
    let mut losses = Vec::with_capacity(schedule.epochs);
    for epoch in 0..schedule.epochs {
        let lr = schedule.lr_at(epoch);
        order.shuffle(rng);
        let mut total = 0.0;
        for chunk in order.chunks(schedule.batch_size) {
            let xs = stack(&chunk.iter().map(|&i| &pairs[i].speaker).collect::<Vec<_>>());
            let ys = stack(&chunk.iter().map(|&i| &pairs[i].listener).collect::<Vec<_>>());
            let masks = (schedule.dropout > 0.0).then(|| dropout_masks(ti, chunk.len(), schedule.dropout, rng));
            let (out, tape) = run_forward(&ti.layers, xs.view(), masks.as_deref(), false)?;
            let (loss, grad) = mse(&out, ys.view());
            if !loss.is_finite() {
                return Err(Error::Diverged(format!("translator loss {loss} at epoch {}", epoch + 1)));
            }
            total += loss * chunk.len() as f64;
            let grads = backward(&ti.layers, tape, grad.view())?;
            opt.step_layers(0, &mut ti.layers, &grads, lr)?;
        }
        losses.push(total / pairs.len() as f64);
    }
    Ok(losses)
}

/// Inference-mode forward pass; dropout is off.
pub fn translate(ti: &TiModule, s: &Symbol) -> Result<Symbol> {
    if s.len() != ti.symbol_len() {
        return Err(Error::Dimension {
            layer: 0,
            what: "symbol",
            expected: ti.symbol_len(),
            got: s.len(),
        });
    }
    let x = ArrayView2::from_shape((1, s.len()), s.as_slice()).expect("row vector");
    let (out, _) = run_forward(&ti.layers, x, None, false)?;
    Symbol::new(out.into_raw_vec_and_offset().0)
}

/// Uniform draw inside the listener bank's per-element envelope.
pub fn random_symbol<R: Rng + ?Sized>(bank: &SymbolBank, rng: &mut R) -> Result<Symbol> {
    sample_in_envelope(bank, rng)
}

/// One translation pair per speaker variant of every class both agents share,
/// excluding `holdout`. Classes without listed variants use the speaker's own
/// bank symbol.
pub fn translation_pairs(
    speaker: &Agent,
    speaker_variants: &BTreeMap<u32, Vec<Symbol>>,
    listener: &Agent,
    holdout: u32,
) -> Result<Vec<TranslationPair>> {
    let mut pairs = Vec::new();
    for (class_id, target) in listener.bank.iter().filter(|(c, _)| *c != holdout) {
        if !speaker.bank.contains(class_id) {
            continue;
        }
        let own = [speaker.bank.get(class_id)?.clone()];
        let variants = speaker_variants.get(&class_id).map_or(&own[..], |v| &v[..]);
        pairs.extend(variants.iter().map(|s| TranslationPair {
            class_id,
            speaker: s.clone(),
            listener: target.clone(),
        }));
    }
    if pairs.is_empty() {
        return Err(Error::Empty("no classes shared by speaker and listener".into()));
    }
    Ok(pairs)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GameOutcome {
    pub holdout_class: u32,
    pub accuracy: f64,
    pub control_accuracy: f64,
    pub ti_train_mse: f64,
}

/// One round: train a translator on the shared classes, then evaluate the
/// listener on `holdout` with the translated speaker symbol and with a
/// random control symbol.
pub fn run_game<R: Rng + ?Sized>(
    speaker: &Agent,
    speaker_variants: &BTreeMap<u32, Vec<Symbol>>,
    listener: &Agent,
    holdout: u32,
    view: &DatasetView,
    schedule: &TiSchedule,
    rng: &mut R,
) -> Result<GameOutcome> {
    if !speaker.bank.contains(holdout) {
        return Err(Error::Invalid(format!("speaker has not learned class {holdout}")));
    }
    if listener.bank.contains(holdout) {
        return Err(Error::Invalid(format!("listener already knows class {holdout}")));
    }
    if speaker.symbol_len() != listener.symbol_len() {
        return Err(Error::Shape(format!(
            "speaker symbols have length {}, listener {}",
            speaker.symbol_len(),
            listener.symbol_len()
        )));
    }
    let pairs = translation_pairs(speaker, speaker_variants, listener, holdout)?;
    let mut ti = build_ti(speaker.symbol_len(), rng)?;
    train_ti(&mut ti, &pairs, schedule, rng)?;
    let translated = translate(&ti, speaker.bank.get(holdout)?)?;
    let control = random_symbol(&listener.bank, rng)?;
    Ok(GameOutcome {
        holdout_class: holdout,
        accuracy: evaluate_with_symbol(listener, view, holdout, &translated)?,
        control_accuracy: evaluate_with_symbol(listener, view, holdout, &control)?,
        ti_train_mse: ti_mse(&ti, &pairs)?,
    })
}

/// Rows of `round, holdout_class, accuracy, control_accuracy`.
pub fn write_game_csv<W: Write>(w: W, rounds: &[GameOutcome]) -> Result<()> {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["round", "holdout_class", "accuracy", "control_accuracy"])?;
    for (i, r) in rounds.iter().enumerate() {
        out.write_record([
            i.to_string(),
            r.holdout_class.to_string(),
            format!("{:.17e}", r.accuracy),
            format!("{:.17e}", r.control_accuracy),
        ])?;
    }
    out.flush()?;
    Ok(())
}
