//! Alternating two-phase training.
//!
//! Odd epochs update the CDP and TS parameters with symbols held fixed; even
//! epochs update only the symbols that were fed, with every parameter held
//! fixed. Each batch draws a negative-sampling probability `p` and flips
//! every sample to a wrong class's symbol with that probability.

use std::collections::BTreeMap;
use std::io::Write;

use ndarray::{Array2, Axis};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data_io::DatasetView;
use crate::gated_net::{
    cdp_forward, cross_entropy, decide, sea_backward, sea_forward_batch, ts_forward_with_gains, Agent,
    Decision, Symbol, SymbolBank,
};
use crate::grad_core::{adam_step, sgd_step, tensor_lens, AdamState, Optimizer, OptimizerKind};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub epochs: usize,
    pub lr_net: f64,
    pub lr_symbol: f64,
    pub noise_amp: f64,
    pub batch_size: usize,
    pub optimizer: OptimizerKind,
    /// When false every epoch is a network epoch (fixed, predefined symbols).
    pub train_symbols: bool,
    /// Test accuracy is recorded every this many epochs and on the last one.
    pub eval_every: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 2000,
            lr_net: 1e-4,
            lr_symbol: 1e-4,
            noise_amp: 0.1,
            batch_size: 64,
            optimizer: OptimizerKind::Sgd,
            train_symbols: true,
            eval_every: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs < 2 {
            return Err(Error::config("epochs", "must be at least 2"));
        }
        for (name, lr) in [("lr_net", self.lr_net), ("lr_symbol", self.lr_symbol)] {
            if !(lr >= 0.0 && lr.is_finite()) {
                return Err(Error::config(name, "must be finite and >= 0"));
            }
        }
        if !(self.noise_amp >= 0.0 && self.noise_amp.is_finite()) {
            return Err(Error::config("noise_amp", "must be finite and >= 0"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("batch_size", "must be > 0"));
        }
        if self.eval_every == 0 {
            return Err(Error::config("eval_every", "must be > 0"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum NegativeSamplingPolicy {
    /// `p ~ U[0, 1]`, redrawn for every batch.
    UniformPerBatch,
    Fixed(f64),
}

impl NegativeSamplingPolicy {
    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        match *self {
            NegativeSamplingPolicy::UniformPerBatch => rng.random_range(0.0..=1.0),
            NegativeSamplingPolicy::Fixed(p) => p,
        }
    }
}

/// One training pair. `fed_class` names the bank symbol fed to the CDP.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LabeledPair {
    pub sample: usize,
    pub true_class: u32,
    pub fed_class: u32,
    pub target: Decision,
}

/// Pairs each sample with its own symbol, or with probability `p` with the
/// symbol of a different class drawn uniformly from the view's classes.
pub fn make_batch<R: Rng + ?Sized>(
    view: &DatasetView,
    samples: &[usize],
    bank: &SymbolBank,
    p: f64,
    rng: &mut R,
) -> Result<Vec<LabeledPair>> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::Invalid(format!("negative-sampling probability {p} outside [0, 1]")));
    }
    let classes = view.classes();
    if let Some(&c) = classes.iter().find(|&&c| !bank.contains(c)) {
        return Err(Error::MissingClass(c));
    }
    let data = view.data();
    samples
        .iter()
        .map(|&i| {
            let true_class = data.label(i);
            if !bank.contains(true_class) {
                return Err(Error::MissingClass(true_class));
            }
            if p > 0.0 && rng.random_bool(p) {
                if classes.len() < 2 {
                    return Err(Error::Invalid("negative samples need at least two classes".into()));
                }
                let others: Vec<u32> = classes.iter().copied().filter(|&c| c != true_class).collect();
                let fed_class = others[rng.random_range(0..others.len())];
                Ok(LabeledPair {
                    sample: i,
                    true_class,
                    fed_class,
                    target: Decision::No,
                })
            } else {
                Ok(LabeledPair {
                    sample: i,
                    true_class,
                    fed_class: true_class,
                    target: Decision::Yes,
                })
            }
        })
        .collect()
}

/// Adds independent `U[-amp, amp]` noise to every element.
pub fn inject_noise<R: Rng + ?Sized>(symbol: &Symbol, noise_amp: f64, rng: &mut R) -> Symbol {
    if noise_amp == 0.0 {
        return symbol.clone();
    }
    let v = symbol
        .as_slice()
        .iter()
        .map(|&x| x + rng.random_range(-noise_amp..=noise_amp))
        .collect();
    Symbol::new(v).expect("finite symbol plus bounded noise")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Phase {
    Network,
    Symbol,
}

impl Phase {
    pub fn as_str(self) -> &'static str {
        match self {
            Phase::Network => "network",
            Phase::Symbol => "symbol",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochStats {
    pub loss: f64,
    pub train_acc: f64,
    pub samples: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub phase: Phase,
    pub loss: f64,
    pub train_acc: f64,
    pub test_acc: Option<f64>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct History {
    pub records: Vec<EpochRecord>,
}

impl History {
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(["epoch", "phase", "loss", "train_acc", "test_acc"])?;
        for r in &self.records {
            out.write_record([
                r.epoch.to_string(),
                r.phase.as_str().to_string(),
                format!("{:.17e}", r.loss),
                format!("{:.17e}", r.train_acc),
                r.test_acc.map(|a| format!("{a:.17e}")).unwrap_or_default(),
            ])?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn last_test_acc(&self) -> Option<f64> {
        self.records.iter().rev().find_map(|r| r.test_acc)
    }
}

/// Owns the optimizer state and random stream of one training run.
pub struct Trainer {
    config: TrainConfig,
    policy: NegativeSamplingPolicy,
    net_opt: Optimizer,
    symbol_opt: BTreeMap<u32, AdamState>,
    rng: ChaCha8Rng,
}

impl Trainer {
    pub fn new(agent: &Agent, config: TrainConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut lens = tensor_lens(agent.cdp.layers());
        lens.extend(tensor_lens(agent.ts.layers()));
        Ok(Self {
            net_opt: Optimizer::new(config.optimizer, &lens),
            symbol_opt: BTreeMap::new(),
            policy: NegativeSamplingPolicy::UniformPerBatch,
            config,
            rng: ChaCha8Rng::seed_from_u64(seed),
        })
    }

    pub fn with_policy(mut self, policy: NegativeSamplingPolicy) -> Self {
        self.policy = policy;
        self
    }

    pub fn config(&self) -> &TrainConfig {
        &self.config
    }

    pub fn network_phase_epoch(&mut self, agent: &mut Agent, view: &DatasetView) -> Result<EpochStats> {
        #[cfg(debug_assertions)]
        let bank_before = agent.bank.clone();
        let stats = self.run_epoch(agent, view, Phase::Network)?;
        #[cfg(debug_assertions)]
        assert!(agent.bank.bit_eq(&bank_before), "network phase modified the symbol bank");
        Ok(stats)
    }

    pub fn symbol_phase_epoch(&mut self, agent: &mut Agent, view: &DatasetView) -> Result<EpochStats> {
        #[cfg(debug_assertions)]
        let (cdp_before, ts_before) = (agent.cdp.clone(), agent.ts.clone());
        let stats = self.run_epoch(agent, view, Phase::Symbol)?;
        #[cfg(debug_assertions)]
        assert!(
            agent.cdp == cdp_before && agent.ts == ts_before,
            "symbol phase modified network parameters"
        );
        Ok(stats)
    }

    fn run_epoch(&mut self, agent: &mut Agent, view: &DatasetView, phase: Phase) -> Result<EpochStats> {
        if view.feature_dim() != agent.feature_dim() {
            return Err(Error::Dimension {
                layer: 0,
                what: "feature",
                expected: agent.feature_dim(),
                got: view.feature_dim(),
            });
        }
        if view.train().is_empty() {
            return Err(Error::Empty("training partition".into()));
        }
        let mut order = view.train().to_vec();
        order.shuffle(&mut self.rng);
        let data = view.data();
        let l = agent.symbol_len();
        let (mut loss_sum, mut correct) = (0.0, 0usize);
        for chunk in order.chunks(self.config.batch_size) {
            let p = self.policy.draw(&mut self.rng);
            let pairs = make_batch(view, chunk, &agent.bank, p, &mut self.rng)?;
            let mut symbols = Array2::zeros((pairs.len(), l));
            for (row, pair) in pairs.iter().enumerate() {
                let fed = inject_noise(agent.bank.get(pair.fed_class)?, self.config.noise_amp, &mut self.rng);
                symbols.row_mut(row).assign(&ndarray::aview1(fed.as_slice()));
            }
            let features = data.gather(chunk);
            let (logits, tape) = sea_forward_batch(agent, symbols.view(), features.view())?;
            let targets: Vec<Decision> = pairs.iter().map(|p| p.target).collect();
            let (loss, grad) = cross_entropy(logits.view(), &targets)?;
            if !loss.is_finite() {
                return Err(Error::Diverged(format!(
                    "{} phase produced loss {loss} on a batch of {}",
                    phase.as_str(),
                    pairs.len()
                )));
            }
            loss_sum += loss * pairs.len() as f64;
            correct += logits
                .axis_iter(Axis(0))
                .zip(&targets)
                .filter(|(row, t)| decide(row.as_slice().expect("row")) == **t)
                .count();
            let grads = sea_backward(agent, tape, grad.view())?;
            match phase {
                Phase::Network => {
                    let lr = self.config.lr_net;
                    let offset = 2 * agent.cdp.layers().len();
                    self.net_opt.step_layers(0, agent.cdp.layers_mut(), &grads.cdp, lr)?;
                    self.net_opt.step_layers(offset, agent.ts.layers_mut(), &grads.ts, lr)?;
                }
                Phase::Symbol => {
                    let mut per_class: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
                    for (row, pair) in pairs.iter().enumerate() {
                        let acc = per_class.entry(pair.fed_class).or_insert_with(|| vec![0.0; l]);
                        for (a, g) in acc.iter_mut().zip(grads.symbols.row(row)) {
                            *a += g;
                        }
                    }
                    for (class, g) in per_class {
                        let sym = agent.bank.get_mut(class)?;
                        match self.config.optimizer {
                            OptimizerKind::Sgd => sgd_step(sym.as_mut_slice(), &g, self.config.lr_symbol)?,
                            OptimizerKind::Adam => {
                                let st = self.symbol_opt.entry(class).or_insert_with(|| AdamState::new(l));
                                adam_step(st, sym.as_mut_slice(), &g, self.config.lr_symbol)?
                            }
                        }
                    }
                }
            }
        }
        let n = order.len();
        Ok(EpochStats {
            loss: loss_sum / n as f64,
            train_acc: correct as f64 / n as f64,
            samples: n,
        })
    }
}

/// Runs the full alternating schedule on the view's classes.
pub fn train(agent: &mut Agent, view: &DatasetView, config: &TrainConfig, seed: u64) -> Result<History> {
    let mut trainer = Trainer::new(agent, config.clone(), seed)?;
    let mut history = History::default();
    for epoch in 1..=config.epochs {
        let phase = if config.train_symbols && epoch % 2 == 0 {
            Phase::Symbol
        } else {
            Phase::Network
        };
        let stats = match phase {
            Phase::Network => trainer.network_phase_epoch(agent, view)?,
            Phase::Symbol => trainer.symbol_phase_epoch(agent, view)?,
        };
        let test_acc = if epoch % config.eval_every == 0 || epoch == config.epochs {
            Some(mean_test_accuracy(agent, view)?)
        } else {
            None
        };
        history.records.push(EpochRecord {
            epoch,
            phase,
            loss: stats.loss,
            train_acc: stats.train_acc,
            test_acc,
        });
    }
    Ok(history)
}

/// Mean of true-positive and true-negative rates over `(predicted, is_positive)` pairs.
pub fn balanced_accuracy(outcomes: impl IntoIterator<Item = (Decision, bool)>) -> Result<f64> {
    let (mut tp, mut pos, mut tn, mut neg) = (0usize, 0usize, 0usize, 0usize);
    for (pred, positive) in outcomes {
        if positive {
            pos += 1;
            tp += (pred == Decision::Yes) as usize;
        } else {
            neg += 1;
            tn += (pred == Decision::No) as usize;
        }
    }
    if pos == 0 || neg == 0 {
        return Err(Error::Empty(format!("{pos} positive and {neg} negative test samples")));
    }
    Ok(0.5 * (tp as f64 / pos as f64 + tn as f64 / neg as f64))
}

/// Balanced accuracy of identifying `class_id` among the view's test samples
/// when the CDP is fed `symbol` (no noise).
pub fn evaluate_with_symbol(agent: &Agent, view: &DatasetView, class_id: u32, symbol: &Symbol) -> Result<f64> {
    if view.test().is_empty() {
        return Err(Error::Empty("test partition".into()));
    }
    let row = ndarray::ArrayView2::from_shape((1, symbol.len()), symbol.as_slice()).expect("row");
    let (gains, _) = cdp_forward(&agent.cdp, row)?;
    let data = view.data();
    let mut outcomes = Vec::with_capacity(view.test().len());
    for chunk in view.test().chunks(512) {
        let features = data.gather(chunk);
        let n = chunk.len();
        let batch_gains: Vec<Array2<f64>> = gains
            .iter()
            .map(|g| g.broadcast((n, g.ncols())).expect("row broadcast").to_owned())
            .collect();
        let logits = ts_forward_with_gains(&agent.ts, &batch_gains, features.view())?;
        for (row, &i) in logits.axis_iter(Axis(0)).zip(chunk) {
            outcomes.push((decide(row.as_slice().expect("row")), data.label(i) == class_id));
        }
    }
    balanced_accuracy(outcomes)
}

/// Balanced accuracy for `class_id` using the agent's own clean symbol.
pub fn evaluate(agent: &Agent, view: &DatasetView, class_id: u32) -> Result<f64> {
    evaluate_with_symbol(agent, view, class_id, agent.bank.get(class_id)?)
}

/// Per-class balanced test accuracy for every class of the view.
pub fn class_accuracies(agent: &Agent, view: &DatasetView) -> Result<Vec<(u32, f64)>> {
    view.classes().iter().map(|&c| Ok((c, evaluate(agent, view, c)?))).collect()
}

pub fn mean_test_accuracy(agent: &Agent, view: &DatasetView) -> Result<f64> {
    let accs = class_accuracies(agent, view)?;
    Ok(accs.iter().map(|a| a.1).sum::<f64>() / accs.len().max(1) as f64)
}
