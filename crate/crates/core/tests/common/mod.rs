//! Helpers shared by the integration test targets: independent oracles and
//! the desk-scale experiment configuration.
#![allow(dead_code)]

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use seanet::data_io::SyntheticSpec;
use seanet::gated_net::{cross_entropy, sea_backward, sea_forward_batch, Agent, Decision, NetGeometry};
use seanet::grad_core::OptimizerKind;
use seanet::trainer::TrainConfig;

pub const FD_STEP: f64 = 1e-6;
pub const REL_TOL: f64 = 1e-4;
pub const ABS_TOL: f64 = 1e-6;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// F = 16, TS widths [16, 8, 4], symbol length 8.
pub fn shrunken_agent(seed: u64) -> Agent {
    let g = NetGeometry::new(8, vec![16, 8, 4]).unwrap();
    Agent::new(&g, &[0, 1, 2], &mut rng(seed)).unwrap()
}

pub fn desk_spec() -> SyntheticSpec {
    SyntheticSpec {
        dim: 32,
        ..SyntheticSpec::default()
    }
}

pub const DESK_DATA_SEED: u64 = 7;

pub fn desk_geometry() -> NetGeometry {
    NetGeometry::new(20, vec![32, 16, 8]).unwrap()
}

pub fn desk_train() -> TrainConfig {
    TrainConfig {
        epochs: 400,
        lr_net: 1e-3,
        lr_symbol: 1e-3,
        optimizer: OptimizerKind::Adam,
        eval_every: 400,
        ..TrainConfig::default()
    }
}

/// `|a − n| < ABS_TOL` or relative error below `REL_TOL`.
pub fn grad_close(analytic: f64, numeric: f64) -> bool {
    let diff = (analytic - numeric).abs();
    diff < ABS_TOL || diff / analytic.abs().max(numeric.abs()) < REL_TOL
}

#[derive(Clone, Copy, Debug)]
enum Slot {
    CdpW(usize),
    CdpB(usize),
    TsW(usize),
    TsB(usize),
}

fn slot_mut(agent: &mut Agent, slot: Slot) -> &mut [f64] {
    match slot {
        Slot::CdpW(l) => agent.cdp.layers_mut()[l].weights_mut(),
        Slot::CdpB(l) => agent.cdp.layers_mut()[l].biases_mut(),
        Slot::TsW(l) => agent.ts.layers_mut()[l].weights_mut(),
        Slot::TsB(l) => agent.ts.layers_mut()[l].biases_mut(),
    }
}

fn batch_loss(agent: &Agent, symbols: &Array2<f64>, features: &Array2<f64>, targets: &[Decision]) -> f64 {
    let (logits, _) = sea_forward_batch(agent, symbols.view(), features.view()).unwrap();
    cross_entropy(logits.view(), targets).unwrap().0
}

/// Outcome of one finite-difference sweep.
#[derive(Debug, Default)]
pub struct GradCheck {
    pub checked: usize,
    pub failures: Vec<String>,
}

/// Compares every parameter and symbol gradient of `sea_backward` with
/// central differences of the mean cross-entropy on a random batch.
pub fn sea_gradient_check(seed: u64, batch: usize) -> GradCheck {
    let mut agent = shrunken_agent(seed);
    let mut r = rng(seed ^ 0x5eed);
    let l = agent.symbol_len();
    let f = agent.feature_dim();
    let mut symbols = Array2::from_shape_fn((batch, l), |_| r.random_range(-1.0..1.0));
    let features = Array2::from_shape_fn((batch, f), |_| r.sample::<f64, _>(StandardNormal));
    let targets: Vec<Decision> = (0..batch)
        .map(|_| if r.random_bool(0.5) { Decision::Yes } else { Decision::No })
        .collect();

    let (logits, tape) = sea_forward_batch(&agent, symbols.view(), features.view()).unwrap();
    let (_, grad) = cross_entropy(logits.view(), &targets).unwrap();
    let g = sea_backward(&agent, tape, grad.view()).unwrap();

    let mut out = GradCheck::default();
    let mut record = |name: String, analytic: f64, numeric: f64| {
        out.checked += 1;
        if !grad_close(analytic, numeric) {
            out.failures.push(format!("{name}: analytic {analytic:e} numeric {numeric:e}"));
        }
    };

    let mut slots = Vec::new();
    for l in 0..agent.cdp.layers().len() {
        slots.push((Slot::CdpW(l), g.cdp.weights[l].iter().copied().collect::<Vec<_>>()));
        slots.push((Slot::CdpB(l), g.cdp.biases[l].to_vec()));
    }
    for l in 0..agent.ts.layers().len() {
        slots.push((Slot::TsW(l), g.ts.weights[l].iter().copied().collect()));
        slots.push((Slot::TsB(l), g.ts.biases[l].to_vec()));
    }
    for (slot, analytic) in slots {
        let n = slot_mut(&mut agent, slot).len();
        assert_eq!(n, analytic.len(), "{slot:?} gradient length");
        for i in 0..n {
            let orig = slot_mut(&mut agent, slot)[i];
            slot_mut(&mut agent, slot)[i] = orig + FD_STEP;
            let plus = batch_loss(&agent, &symbols, &features, &targets);
            slot_mut(&mut agent, slot)[i] = orig - FD_STEP;
            let minus = batch_loss(&agent, &symbols, &features, &targets);
            slot_mut(&mut agent, slot)[i] = orig;
            record(format!("seed {seed} {slot:?}[{i}]"), analytic[i], (plus - minus) / (2.0 * FD_STEP));
        }
    }
    for row in 0..batch {
        for j in 0..l {
            let orig = symbols[[row, j]];
            symbols[[row, j]] = orig + FD_STEP;
            let plus = batch_loss(&agent, &symbols, &features, &targets);
            symbols[[row, j]] = orig - FD_STEP;
            let minus = batch_loss(&agent, &symbols, &features, &targets);
            symbols[[row, j]] = orig;
            record(
                format!("seed {seed} symbol[{row},{j}]"),
                g.symbols[[row, j]],
                (plus - minus) / (2.0 * FD_STEP),
            );
        }
    }
    out
}

/// Average linkage computed from scratch at every step: the distance
/// between two clusters is the mean of all leaf-pair distances. Ties go to
/// the smallest `(i, j)` node ids; merged node `k` gets id `n + k`.
pub fn brute_force_upgma(d: &[Vec<f64>]) -> Vec<(usize, usize, f64)> {
    let n = d.len();
    let mut clusters: Vec<(usize, Vec<usize>)> = (0..n).map(|i| (i, vec![i])).collect();
    let mut merges = Vec::new();
    for k in 0..n - 1 {
        let mut best: Option<(f64, usize, usize)> = None;
        for a in 0..clusters.len() {
            for b in a + 1..clusters.len() {
                let (ca, cb) = (&clusters[a].1, &clusters[b].1);
                let mut sum = 0.0;
                for &x in ca {
                    for &y in cb {
                        sum += d[x][y];
                    }
                }
                let avg = sum / (ca.len() * cb.len()) as f64;
                let ids = (clusters[a].0.min(clusters[b].0), clusters[a].0.max(clusters[b].0));
                let better = match best {
                    None => true,
                    Some((v, i, j)) => avg < v || (avg == v && ids < (i, j)),
                };
                if better {
                    best = Some((avg, ids.0, ids.1));
                }
            }
        }
        let (h, i, j) = best.unwrap();
        let mut joined = Vec::new();
        clusters.retain(|(id, members)| {
            if *id == i || *id == j {
                joined.extend_from_slice(members);
                false
            } else {
                true
            }
        });
        clusters.push((n + k, joined));
        merges.push((i, j, h));
    }
    merges
}

/// Textbook two-pass Pearson correlation.
pub fn pearson(x: &[f64], y: &[f64]) -> f64 {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let cov: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let vx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let vy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    cov / (vx.sqrt() * vy.sqrt())
}

/// Random symmetric matrix with zero diagonal and entries in (0, 1).
pub fn random_distances(n: usize, r: &mut impl Rng) -> Vec<Vec<f64>> {
    let mut d = vec![vec![0.0; n]; n];
    for i in 0..n {
        for j in i + 1..n {
            let v = r.random_range(0.01..1.0);
            d[i][j] = v;
            d[j][i] = v;
        }
    }
    d
}

/// Small configuration that exercises every CLI pipeline in seconds.
pub const TINY_CONFIG: &str = r#"
seed = 4

[data.synthetic]
classes = 4
dim = 8
train_per_class = 20
test_per_class = 10

[geometry]
symbol_len = 4
layers = [8, 8, 4]

[train]
epochs = 10
eval_every = 5

[symbolic]
epochs = 20

[infer]
rounds = 2
realizations = 2

[communicate]
rounds = 2
variants = 2

[communicate.ti]
epochs = 2

[analyze]
trials = 50

[wordvec]
stand_in_dim = 8
rounds = 2
"#;

pub const KINDS: [&str; 6] = ["gendata", "train", "infer", "communicate", "analyze", "wordvec"];

/// Runs the binary; returns the exit code and captured stderr.
pub fn run_cli(args: &[&str]) -> (i32, String) {
    let out = std::process::Command::new(env!("CARGO_BIN_EXE_seanet"))
        .args(args)
        .output()
        .expect("binary runs");
    (out.status.code().unwrap_or(-1), String::from_utf8_lossy(&out.stderr).into_owned())
}

/// Names and contents of every `.csv` file in `dir`, sorted by name.
pub fn csv_files(dir: &std::path::Path) -> Vec<(String, Vec<u8>)> {
    let mut files: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    files.sort();
    files
}
