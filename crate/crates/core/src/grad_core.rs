//! Dense reverse-mode gradient engine for gated multilayer perceptrons.
//!
//! A layer computes `z = g ⊙ act(W x + b)` where the gain vector `g` is
//! optional. The forward pass records a [`Tape`]; [`backward`] consumes it and
//! returns gradients for weights, biases, the network input and every applied
//! gain vector. All computation is batched: rows of the input matrix are
//! independent samples, and gradients are summed over the batch.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Relu,
    Sigmoid,
    Identity,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the pre-activation and the activation value.
    #[inline]
    fn derivative(self, pre: f64, act: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => act * (1.0 - act),
            Activation::Identity => 1.0,
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// A fully connected layer. Weights are stored `out × in`.
#[derive(Debug, Clone, PartialEq)]
pub struct DenseLayer {
    weights: Array2<f64>,
    biases: Array1<f64>,
    activation: Activation,
}

impl DenseLayer {
    pub fn new(weights: Array2<f64>, biases: Array1<f64>, activation: Activation) -> Result<Self> {
        if weights.nrows() != biases.len() {
            return Err(Error::Shape(format!(
                "weights have {} rows but biases have {} entries",
                weights.nrows(),
                biases.len()
            )));
        }
        if weights.iter().chain(biases.iter()).any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("layer parameters".into()));
        }
        Ok(Self {
            weights: weights.as_standard_layout().into_owned(),
            biases,
            activation,
        })
    }

    pub fn zeros(in_dim: usize, out_dim: usize, activation: Activation) -> Self {
        Self {
            weights: Array2::zeros((out_dim, in_dim)),
            biases: Array1::zeros(out_dim),
            activation,
        }
    }

    /// Weights and biases drawn uniformly from `±1/√in_dim`.
    pub fn init<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        rng: &mut R,
    ) -> Self {
        let bound = 1.0 / (in_dim.max(1) as f64).sqrt();
        Self::init_uniform(in_dim, out_dim, activation, bound, rng)
    }

    pub fn init_uniform<R: Rng + ?Sized>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        bound: f64,
        rng: &mut R,
    ) -> Self {
        let weights = Array2::from_shape_fn((out_dim, in_dim), |_| rng.random_range(-bound..=bound));
        let biases = Array1::from_shape_fn(out_dim, |_| rng.random_range(-bound..=bound));
        Self {
            weights,
            biases,
            activation,
        }
    }

    pub fn in_dim(&self) -> usize {
        self.weights.ncols()
    }

    pub fn out_dim(&self) -> usize {
        self.weights.nrows()
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn weights(&self) -> &Array2<f64> {
        &self.weights
    }

    pub fn biases(&self) -> &Array1<f64> {
        &self.biases
    }

    pub fn weights_mut(&mut self) -> &mut [f64] {
        self.weights.as_slice_mut().expect("weights are contiguous")
    }

    pub fn biases_mut(&mut self) -> &mut [f64] {
        self.biases.as_slice_mut().expect("biases are contiguous")
    }

    pub fn param_count(&self) -> usize {
        self.weights.len() + self.biases.len()
    }
}

/// Intermediate values of one forward pass, one entry per layer.
#[derive(Debug, Clone)]
pub struct Tape {
    shapes: Vec<(usize, usize)>,
    inputs: Vec<Array2<f64>>,
    pre: Vec<Array2<f64>>,
    act: Vec<Array2<f64>>,
    gains: Vec<Option<Array2<f64>>>,
    output: Array2<f64>,
}

impl Tape {
    /// Number of layers traversed.
    pub fn len(&self) -> usize {
        self.shapes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.shapes.is_empty()
    }

    pub fn batch_size(&self) -> usize {
        self.output.nrows()
    }

    pub fn output(&self) -> &Array2<f64> {
        &self.output
    }

    /// Ungated activation of layer `l`.
    pub fn activation(&self, l: usize) -> &Array2<f64> {
        &self.act[l]
    }

    /// Recomputes the network output from the recorded inputs and gains.
    pub fn replay(&self, layers: &[DenseLayer]) -> Result<Array2<f64>> {
        check_shapes(layers, &self.shapes)?;
        let (out, _) = run_forward(layers, self.inputs[0].view(), Some(&self.gains), false)?;
        Ok(out)
    }
}

/// Parameter gradients mirroring the network's shapes, plus the input and gain gradients.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Array2<f64>>,
    pub biases: Vec<Array1<f64>>,
    pub input: Array2<f64>,
    /// `Some` for every layer that was gated in the forward pass.
    pub gains: Vec<Option<Array2<f64>>>,
}

impl Gradients {
    pub fn zeros_like(layers: &[DenseLayer]) -> Self {
        Self {
            weights: layers.iter().map(|l| Array2::zeros(l.weights.raw_dim())).collect(),
            biases: layers.iter().map(|l| Array1::zeros(l.out_dim())).collect(),
            input: Array2::zeros((0, layers.first().map_or(0, |l| l.in_dim()))),
            gains: vec![None; layers.len()],
        }
    }

    /// Accumulates the parameter gradients of `other` into `self`.
    pub fn accumulate(&mut self, other: &Gradients) {
        for (a, b) in self.weights.iter_mut().zip(&other.weights) {
            *a += b;
        }
        for (a, b) in self.biases.iter_mut().zip(&other.biases) {
            *a += b;
        }
    }

    pub fn scale(&mut self, factor: f64) {
        for w in &mut self.weights {
            *w *= factor;
        }
        for b in &mut self.biases {
            *b *= factor;
        }
    }
}

fn check_shapes(layers: &[DenseLayer], shapes: &[(usize, usize)]) -> Result<()> {
    if layers.len() != shapes.len() {
        return Err(Error::TapeMismatch(format!(
            "tape has {} layers, network has {}",
            shapes.len(),
            layers.len()
        )));
    }
    for (i, (layer, &(o, n))) in layers.iter().zip(shapes).enumerate() {
        if layer.out_dim() != o || layer.in_dim() != n {
            return Err(Error::TapeMismatch(format!(
                "layer {i} is {}x{}, tape recorded {o}x{n}",
                layer.out_dim(),
                layer.in_dim()
            )));
        }
    }
    Ok(())
}

pub(crate) fn run_forward(
    layers: &[DenseLayer],
    input: ArrayView2<f64>,
    gains: Option<&[Option<Array2<f64>>]>,
    check_gain_range: bool,
) -> Result<(Array2<f64>, Tape)> {
    if layers.is_empty() {
        return Err(Error::Invalid("network has no layers".into()));
    }
    if let Some(g) = gains {
        if g.len() != layers.len() {
            return Err(Error::Invalid(format!(
                "{} gain entries supplied for {} layers",
                g.len(),
                layers.len()
            )));
        }
    }
    let batch = input.nrows();
    let mut tape = Tape {
        shapes: Vec::with_capacity(layers.len()),
        inputs: Vec::with_capacity(layers.len()),
        pre: Vec::with_capacity(layers.len()),
        act: Vec::with_capacity(layers.len()),
        gains: Vec::with_capacity(layers.len()),
        output: Array2::zeros((0, 0)),
    };
    let mut x = input.to_owned();
    for (l, layer) in layers.iter().enumerate() {
        if x.ncols() != layer.in_dim() {
            return Err(Error::Dimension {
                layer: l,
                what: "input",
                expected: layer.in_dim(),
                got: x.ncols(),
            });
        }
        let mut pre = x.dot(&layer.weights.t());
        pre += &layer.biases;
        let act = pre.mapv(|v| layer.activation.apply(v));
        let gain = gains.and_then(|g| g[l].clone());
        let z = match &gain {
            Some(g) => {
                if g.dim() != (batch, layer.out_dim()) {
                    return Err(Error::Dimension {
                        layer: l,
                        what: "gain",
                        expected: layer.out_dim(),
                        got: g.ncols(),
                    });
                }
                if check_gain_range && g.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::GainRange { layer: l });
                }
                &act * g
            }
            None => act.clone(),
        };
        tape.shapes.push((layer.out_dim(), layer.in_dim()));
        tape.inputs.push(x);
        tape.pre.push(pre);
        tape.act.push(act);
        tape.gains.push(gain);
        x = z;
    }
    tape.output = x.clone();
    Ok((x, tape))
}

/// Batched forward pass. `gains[l]`, when present, is a `batch × out_l` matrix
/// applied to layer `l`'s activation.
pub fn forward_batch(
    layers: &[DenseLayer],
    input: ArrayView2<f64>,
    gains: Option<&[Option<Array2<f64>>]>,
) -> Result<(Array2<f64>, Tape)> {
    run_forward(layers, input, gains, true)
}

/// Single-sample forward pass.
pub fn forward(
    layers: &[DenseLayer],
    input: &[f64],
    gains: Option<&[Option<Vec<f64>>]>,
) -> Result<(Vec<f64>, Tape)> {
    let x = ArrayView2::from_shape((1, input.len()), input).expect("row vector");
    let gains: Option<Vec<Option<Array2<f64>>>> = gains.map(|gs| {
        gs.iter()
            .map(|g| g.as_ref().map(|v| Array2::from_shape_vec((1, v.len()), v.clone()).expect("row")))
            .collect()
    });
    let (out, tape) = forward_batch(layers, x, gains.as_deref())?;
    Ok((out.into_raw_vec_and_offset().0, tape))
}

/// Reverse pass. The tape is consumed, so it cannot be replayed into a
/// second backward call.
pub fn backward(layers: &[DenseLayer], tape: Tape, output_grad: ArrayView2<f64>) -> Result<Gradients> {
    backward_with_taps(layers, tape, output_grad, &[])
}

/// Reverse pass with extra upstream gradients injected at intermediate
/// layer outputs. `taps[l]`, when present, is added to `∂loss/∂z_l`, where
/// `z_l` is layer `l`'s (gated) output. Used when intermediate activations
/// are consumed elsewhere, e.g. as gains for another network.
pub fn backward_with_taps(
    layers: &[DenseLayer],
    tape: Tape,
    output_grad: ArrayView2<f64>,
    taps: &[Option<Array2<f64>>],
) -> Result<Gradients> {
    check_shapes(layers, &tape.shapes)?;
    if output_grad.dim() != tape.output.dim() {
        return Err(Error::Shape(format!(
            "output gradient is {:?}, forward output was {:?}",
            output_grad.dim(),
            tape.output.dim()
        )));
    }
    if !taps.is_empty() && taps.len() != layers.len() {
        return Err(Error::Invalid(format!(
            "{} taps supplied for {} layers",
            taps.len(),
            layers.len()
        )));
    }
    let n = layers.len();
    let mut weights = vec![Array2::zeros((0, 0)); n];
    let mut biases = vec![Array1::zeros(0); n];
    let mut gain_grads = vec![None; n];
    let mut dz = output_grad.to_owned();
    let Tape {
        inputs,
        pre,
        act,
        gains,
        ..
    } = tape;
    for l in (0..n).rev() {
        let layer = &layers[l];
        if let Some(Some(tap)) = taps.get(l) {
            if tap.dim() != dz.dim() {
                return Err(Error::Dimension {
                    layer: l,
                    what: "tap gradient",
                    expected: dz.ncols(),
                    got: tap.ncols(),
                });
            }
            dz += tap;
        }
        let dact = match &gains[l] {
            Some(g) => {
                gain_grads[l] = Some(&dz * &act[l]);
                dz * g
            }
            None => dz,
        };
        let mut dpre = dact;
        ndarray::Zip::from(&mut dpre)
            .and(&pre[l])
            .and(&act[l])
            .for_each(|d, &p, &a| *d *= layer.activation.derivative(p, a));
        weights[l] = dpre.t().dot(&inputs[l]);
        biases[l] = dpre.sum_axis(Axis(0));
        dz = dpre.dot(&layer.weights);
    }
    Ok(Gradients {
        weights,
        biases,
        input: dz,
        gains: gain_grads,
    })
}

/// Central-difference gradient estimate of a scalar function.
pub fn finite_difference_gradient<F>(mut f: F, x: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: FnMut(&[f64]) -> f64,
{
    if !(step > 0.0 && step.is_finite()) {
        return Err(Error::Invalid(format!("finite-difference step must be > 0, got {step}")));
    }
    let mut probe = x.to_vec();
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        probe[i] = x[i] + step;
        let plus = f(&probe);
        probe[i] = x[i] - step;
        let minus = f(&probe);
        probe[i] = x[i];
        if !plus.is_finite() || !minus.is_finite() {
            return Err(Error::NonFinite(format!("function value at coordinate {i}")));
        }
        grad.push((plus - minus) / (2.0 * step));
    }
    Ok(grad)
}

fn check_step_args(params: &[f64], grads: &[f64], lr: f64) -> Result<()> {
    if params.len() != grads.len() {
        return Err(Error::Shape(format!(
            "{} parameters but {} gradients",
            params.len(),
            grads.len()
        )));
    }
    if !(lr >= 0.0 && lr.is_finite()) {
        return Err(Error::Invalid(format!("learning rate must be finite and >= 0, got {lr}")));
    }
    Ok(())
}

/// `p ← p − lr·g`.
pub fn sgd_step(params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
    check_step_args(params, grads, lr)?;
    for (p, g) in params.iter_mut().zip(grads) {
        *p -= lr * g;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    m: Vec<f64>,
    v: Vec<f64>,
    t: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamState {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![0.0; len],
            v: vec![0.0; len],
            t: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    pub fn steps(&self) -> u64 {
        self.t
    }
}

/// One bias-corrected Adam update.
pub fn adam_step(state: &mut AdamState, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
    check_step_args(params, grads, lr)?;
    if state.len() != params.len() {
        return Err(Error::Shape(format!(
            "optimizer state has {} entries, parameters have {}",
            state.len(),
            params.len()
        )));
    }
    state.t += 1;
    let t = state.t as i32;
    let (b1, b2, eps) = (state.beta1, state.beta2, state.eps);
    let step = lr / (1.0 - b1.powi(t));
    let v_scale = 1.0 / (1.0 - b2.powi(t));
    for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut state.m).zip(&mut state.v) {
        *m = b1 * *m + (1.0 - b1) * g;
        *v = b2 * *v + (1.0 - b2) * g * g;
        *p -= step * *m / ((*v * v_scale).sqrt() + eps);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    #[default]
    Sgd,
    Adam,
}

/// Per-tensor optimizer state for a flat list of parameter tensors.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    adam: Vec<AdamState>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, tensor_lens: &[usize]) -> Self {
        let adam = match kind {
            OptimizerKind::Sgd => Vec::new(),
            OptimizerKind::Adam => tensor_lens.iter().map(|&n| AdamState::new(n)).collect(),
        };
        Self { kind, adam }
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    /// Steps tensor `index` of the list this optimizer was built for.
    pub fn step(&mut self, index: usize, params: &mut [f64], grads: &[f64], lr: f64) -> Result<()> {
        match self.kind {
            OptimizerKind::Sgd => sgd_step(params, grads, lr),
            OptimizerKind::Adam => {
                let state = self
                    .adam
                    .get_mut(index)
                    .ok_or_else(|| Error::Invalid(format!("no optimizer state for tensor {index}")))?;
                adam_step(state, params, grads, lr)
            }
        }
    }

    /// Steps every layer of `layers` with the matching entries of `grads`.
    /// Tensor order is `[w0, b0, w1, b1, ...]` starting at `offset`.
    pub fn step_layers(
        &mut self,
        offset: usize,
        layers: &mut [DenseLayer],
        grads: &Gradients,
        lr: f64,
    ) -> Result<()> {
        for (l, layer) in layers.iter_mut().enumerate() {
            let gw = grads.weights[l].as_slice().expect("contiguous");
            let gb = grads.biases[l].as_slice().expect("contiguous");
            self.step(offset + 2 * l, layer.weights_mut(), gw, lr)?;
            self.step(offset + 2 * l + 1, layer.biases_mut(), gb, lr)?;
        }
        Ok(())
    }
}

/// Tensor lengths in `[w0, b0, w1, b1, ...]` order.
pub fn tensor_lens(layers: &[DenseLayer]) -> Vec<usize> {
    layers
        .iter()
        .flat_map(|l| [l.weights.len(), l.biases.len()])
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn random_net(rng: &mut ChaCha8Rng, dims: &[usize], acts: &[Activation]) -> Vec<DenseLayer> {
        dims.windows(2)
            .zip(acts)
            .map(|(w, &a)| DenseLayer::init(w[0], w[1], a, rng))
            .collect()
    }

    #[test]
    fn single_layer_gain_scales_output() {
        let layer = DenseLayer::new(array![[2.0]], array![0.0], Activation::Identity).unwrap();
        let (out, _) = forward(&[layer], &[3.0], Some(&[Some(vec![0.5])])).unwrap();
        assert_eq!(out, vec![3.0]);
    }

    #[test]
    fn single_layer_gain_gradient_is_pre_gain_output() {
        let layer = DenseLayer::new(array![[2.0]], array![0.0], Activation::Identity).unwrap();
        let layers = [layer];
        let (_, tape) = forward(&layers, &[3.0], Some(&[Some(vec![0.5])])).unwrap();
        let g = backward(&layers, tape, array![[1.0]].view()).unwrap();
        assert_eq!(g.gains[0].as_ref().unwrap()[[0, 0]], 6.0);
        assert_eq!(g.input[[0, 0]], 1.0);
        assert_eq!(g.weights[0][[0, 0]], 1.5);
    }

    #[test]
    fn ones_gain_is_bit_identical_to_ungated() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let acts = [Activation::Relu, Activation::Sigmoid, Activation::Identity];
        let net = random_net(&mut rng, &[5, 7, 4, 3], &acts);
        let x: Vec<f64> = (0..5).map(|i| i as f64 * 0.3 - 0.7).collect();
        let ones: Vec<Option<Vec<f64>>> = net.iter().map(|l| Some(vec![1.0; l.out_dim()])).collect();
        let (a, _) = forward(&net, &x, None).unwrap();
        let (b, _) = forward(&net, &x, Some(&ones)).unwrap();
        assert_eq!(
            a.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn zero_gain_annihilates_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let acts = [Activation::Sigmoid, Activation::Identity];
        let net = random_net(&mut rng, &[3, 4, 2], &acts);
        let gains = vec![Some(vec![0.0; 4]), None];
        let (_, tape) = forward(&net, &[0.1, 0.2, 0.3], Some(&gains)).unwrap();
        let next_input = &tape.inputs[1];
        assert!(next_input.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn dimension_errors_name_the_layer() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let net = random_net(&mut rng, &[3, 4, 2], &[Activation::Relu, Activation::Identity]);
        match forward(&net, &[1.0, 2.0], None) {
            Err(Error::Dimension { layer: 0, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        let gains = vec![None, Some(vec![0.5; 3])];
        match forward(&net, &[1.0, 2.0, 3.0], Some(&gains)) {
            Err(Error::Dimension { layer: 1, .. }) => {}
            other => panic!("unexpected {other:?}"),
        }
        let gains = vec![Some(vec![1.5; 4]), None];
        assert!(matches!(
            forward(&net, &[1.0, 2.0, 3.0], Some(&gains)),
            Err(Error::GainRange { layer: 0 })
        ));
    }

    #[test]
    fn mismatched_tape_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let a = random_net(&mut rng, &[3, 4, 2], &[Activation::Relu, Activation::Identity]);
        let b = random_net(&mut rng, &[3, 5, 2], &[Activation::Relu, Activation::Identity]);
        let (_, tape) = forward(&a, &[1.0, 2.0, 3.0], None).unwrap();
        assert!(matches!(
            backward(&b, tape, array![[1.0, 1.0]].view()),
            Err(Error::TapeMismatch(_))
        ));
    }

    #[test]
    fn tape_replay_and_length() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let acts = [Activation::Relu, Activation::Sigmoid, Activation::Identity];
        let net = random_net(&mut rng, &[4, 6, 5, 2], &acts);
        let gains = vec![Some(vec![0.3; 6]), None, Some(vec![0.9; 2])];
        let (out, tape) = forward(&net, &[0.5, -0.5, 1.0, 2.0], Some(&gains)).unwrap();
        assert_eq!(tape.len(), 3);
        let replay = tape.replay(&net).unwrap();
        assert_eq!(replay.as_slice().unwrap(), out.as_slice());
    }

    #[test]
    fn zero_output_grad_gives_zero_gradients() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let acts = [Activation::Relu, Activation::Sigmoid, Activation::Identity];
        let net = random_net(&mut rng, &[4, 6, 5, 2], &acts);
        let gains = vec![Some(vec![0.3; 6]), Some(vec![0.7; 5]), None];
        let (_, tape) = forward(&net, &[0.5, -0.5, 1.0, 2.0], Some(&gains)).unwrap();
        let g = backward(&net, tape, Array2::zeros((1, 2)).view()).unwrap();
        assert!(g.weights.iter().all(|w| w.iter().all(|&v| v == 0.0)));
        assert!(g.biases.iter().all(|b| b.iter().all(|&v| v == 0.0)));
        assert!(g.input.iter().all(|&v| v == 0.0));
        assert!(g.gains.iter().flatten().all(|gg| gg.iter().all(|&v| v == 0.0)));
    }

    #[test]
    fn finite_difference_examples() {
        let g = finite_difference_gradient(|x| x.iter().map(|v| v * v).sum(), &[1.0, 2.0], 1e-5).unwrap();
        assert!((g[0] - 2.0).abs() < 1e-8 && (g[1] - 4.0).abs() < 1e-8);
        let g = finite_difference_gradient(|_| 7.0, &[1.0, 2.0, 3.0], 1e-5).unwrap();
        assert_eq!(g, vec![0.0; 3]);
        let g = finite_difference_gradient(|x| sigmoid(x[0]), &[0.0], 1e-5).unwrap();
        assert!((g[0] - 0.25).abs() < 1e-10);
        assert!(finite_difference_gradient(|_| f64::NAN, &[1.0], 1e-5).is_err());
        assert!(finite_difference_gradient(|_| 0.0, &[1.0], 0.0).is_err());
    }

    #[test]
    fn sgd_examples() {
        let mut p = [1.0];
        sgd_step(&mut p, &[2.0], 0.1).unwrap();
        assert!((p[0] - 0.8).abs() < 1e-15);
        let mut p = [1.5, -2.0];
        sgd_step(&mut p, &[0.0, 0.0], 0.1).unwrap();
        assert_eq!(p, [1.5, -2.0]);
        let (mut a, mut b) = ([0.25], [0.25]);
        sgd_step(&mut a, &[0.5], 0.125).unwrap();
        sgd_step(&mut a, &[0.5], 0.125).unwrap();
        sgd_step(&mut b, &[1.0], 0.125).unwrap();
        assert_eq!(a, b);
        assert!(sgd_step(&mut [0.0; 2], &[0.0], 0.1).is_err());
    }

    #[test]
    fn adam_first_step_is_lr_sized() {
        for g in [1e-6, 0.3, 250.0, -4.0] {
            let mut st = AdamState::new(1);
            let mut p = [0.0];
            adam_step(&mut st, &mut p, &[g], 0.01).unwrap();
            assert!((p[0].abs() - 0.01).abs() < 1e-4, "g={g}: {}", p[0]);
        }
    }

    #[test]
    fn adam_zero_gradient_is_stationary() {
        let mut st = AdamState::new(2);
        let mut p = [1.0, -3.0];
        for _ in 0..50 {
            adam_step(&mut st, &mut p, &[0.0, 0.0], 0.1).unwrap();
        }
        assert_eq!(p, [1.0, -3.0]);
        assert!(adam_step(&mut AdamState::new(3), &mut p, &[0.0, 0.0], 0.1).is_err());
    }

    #[test]
    fn adam_minimizes_shifted_quadratic() {
        let mut st = AdamState::new(1);
        let mut p = [0.0];
        for _ in 0..100 {
            let g = 2.0 * (p[0] - 3.0);
            adam_step(&mut st, &mut p, &[g], 0.1).unwrap();
        }
        assert!((p[0] - 3.0).abs() < 0.5, "p = {}", p[0]);
    }
}
