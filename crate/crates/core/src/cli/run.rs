//! Experiment pipelines behind the subcommands.
//!
//! Output files (all under the output directory):
//!
//! | kind        | files |
//! |-------------|-------|
//! | every run   | `config.resolved.toml`, `summary.json` |
//! | gendata     | `features.seaf`, `class_means.csv` |
//! | train       | `history.csv`, `class_accuracy.csv`, `symbols.csv`, `agent.sea` |
//! | infer       | `infer.csv`, `inferred_symbols.csv` |
//! | communicate | `game.csv` |
//! | analyze     | `distances.csv`, `reference_distances.csv`, `cophenetic.csv`, `dendrogram.nwk`, `edges.csv`, `cophenetic_report.csv`, `null_distribution.csv` |
//! | wordvec     | `wordvec.csv`, `symbols.csv` |

use std::collections::BTreeMap;
use std::fs::File;
use std::io::BufWriter;
use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;

use super::config::{ExperimentConfig, ExperimentKind, ReferenceKind};
use crate::analysis::{
    cophenetic_correlation, cophenetic_distances, cosine_distance_matrix, semantic_network, shuffle_significance,
    upgma, write_edges_csv,
};
use crate::comms::{run_game, write_game_csv, GameOutcome};
use crate::data_io::{
    generate_synthetic_world, load_features, load_word_vectors, reduce_word_vectors, split, synthetic_word_vectors,
    DatasetView, FeatureDataset, SplitSpec, WordVectorTable,
};
use crate::gated_net::{Agent, Symbol, SymbolBank};
use crate::symbolic::{extend_symbol_set, infer_symbol, write_symbol_sets, FewShotSample};
use crate::trainer::{class_accuracies, evaluate_with_symbol, train, History, TrainConfig};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunSummary {
    pub kind: ExperimentKind,
    pub config_hash: String,
    pub seed: u64,
    pub wall_time_secs: f64,
    pub metrics: BTreeMap<String, f64>,
    pub artifacts: Vec<String>,
}

// Stream ids keep the random draws of different stages independent.
const STREAM_DATA: u64 = 1;
const STREAM_AGENT: u64 = 2;
const STREAM_INFER: u64 = 4;
const STREAM_SPEAKER: u64 = 5;
const STREAM_LISTENER: u64 = 6;
const STREAM_GAME: u64 = 7;
const STREAM_SHUFFLE: u64 = 8;
const STREAM_WORDVEC: u64 = 9;

/// Counter-based split of the master seed: one ChaCha stream per
/// `(stage, round)`.
pub fn stage_rng(seed: u64, stage: u64, round: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((stage << 32) | round);
    rng
}

struct Outputs<'a> {
    dir: &'a Path,
    written: Vec<String>,
}

impl<'a> Outputs<'a> {
    fn create(&mut self, name: &str) -> Result<BufWriter<File>> {
        self.written.push(name.to_string());
        Ok(BufWriter::new(File::create(self.dir.join(name))?))
    }

    fn path(&mut self, name: &str) -> std::path::PathBuf {
        self.written.push(name.to_string());
        self.dir.join(name)
    }
}

fn stage<T>(name: &str, r: Result<T>) -> Result<T> {
    r.map_err(|e| e.in_stage(name))
}

/// Runs one experiment and writes its artifacts under `out`.
pub fn run(kind: ExperimentKind, config: &ExperimentConfig, out: &Path) -> Result<RunSummary> {
    config.validate(kind)?;
    let start = Instant::now();
    std::fs::create_dir_all(out)?;
    let mut outputs = Outputs {
        dir: out,
        written: Vec::new(),
    };
    std::fs::write(outputs.path("config.resolved.toml"), config.to_toml()?)?;
    let metrics = match kind {
        ExperimentKind::Gendata => run_gendata(config, &mut outputs)?,
        ExperimentKind::Train => run_train(config, &mut outputs)?,
        ExperimentKind::Infer => run_infer(config, &mut outputs)?,
        ExperimentKind::Communicate => run_communicate(config, &mut outputs)?,
        ExperimentKind::Analyze => run_analyze(config, &mut outputs)?,
        ExperimentKind::Wordvec => run_wordvec(config, &mut outputs)?,
    };
    outputs.written.push("summary.json".into());
    let summary = RunSummary {
        kind,
        config_hash: config.hash(kind),
        seed: config.seed,
        wall_time_secs: start.elapsed().as_secs_f64(),
        metrics,
        artifacts: outputs.written,
    };
    let text = serde_json::to_string_pretty(&summary).map_err(|e| Error::Invalid(e.to_string()))?;
    std::fs::write(out.join("summary.json"), text + "\n")?;
    Ok(summary)
}

fn load_dataset(config: &ExperimentConfig) -> Result<FeatureDataset> {
    let data = match &config.data.path {
        Some(p) => stage("load data", load_features(p))?,
        None => stage(
            "generate data",
            generate_synthetic_world(&config.data.synthetic, stage_rng(config.seed, STREAM_DATA, 0).random()).map(|w| w.dataset),
        )?,
    };
    if data.feature_dim() != config.geometry.feature_dim() {
        return Err(Error::config(
            "geometry.layers",
            format!(
                "first width {} does not match the dataset feature dimension {}",
                config.geometry.feature_dim(),
                data.feature_dim()
            ),
        ));
    }
    Ok(data)
}

fn class_labels(data: &FeatureDataset) -> Vec<String> {
    match data.class_names() {
        Some(names) => names.to_vec(),
        None => (0..data.num_classes()).map(|c| format!("class{c}")).collect(),
    }
}

fn train_agent(config: &ExperimentConfig, view: &DatasetView, stream: u64, round: u64) -> Result<(Agent, History)> {
    let mut rng = stage_rng(config.seed, stream, round);
    let mut agent = Agent::new(&config.geometry, view.classes(), &mut rng)?;
    let history = train(&mut agent, view, &config.train, rng.random())?;
    Ok((agent, history))
}

fn holdout_of(round: usize, classes: &[u32]) -> u32 {
    classes[round % classes.len()]
}

fn rounds_or_classes(rounds: usize, classes: usize) -> usize {
    if rounds == 0 {
        classes
    } else {
        rounds
    }
}

fn median(values: &mut [f64]) -> f64 {
    values.sort_by(f64::total_cmp);
    let n = values.len();
    if n % 2 == 1 {
        values[n / 2]
    } else {
        0.5 * (values[n / 2 - 1] + values[n / 2])
    }
}

fn fmt_f(v: f64) -> String {
    format!("{v:.17e}")
}

fn run_gendata(config: &ExperimentConfig, out: &mut Outputs) -> Result<BTreeMap<String, f64>> {
    let data = load_dataset(config)?;
    data.save(out.path("features.seaf"))?;
    let means = data.train_class_means();
    let mut w = csv::Writer::from_writer(out.create("class_means.csv")?);
    let mut header = vec!["class_id".to_string()];
    header.extend((0..means.ncols()).map(|j| format!("f{j}")));
    w.write_record(&header)?;
    for (c, row) in means.rows().into_iter().enumerate() {
        w.write_record(std::iter::once(c.to_string()).chain(row.iter().map(|&v| fmt_f(v))))?;
    }
    w.flush()?;
    Ok(BTreeMap::from([
        ("samples".into(), data.len() as f64),
        ("classes".into(), data.num_classes() as f64),
        ("feature_dim".into(), data.feature_dim() as f64),
    ]))
}

fn write_bank(out: &mut Outputs, name: &str, bank: &SymbolBank) -> Result<()> {
    let sets: Vec<(u32, Vec<Symbol>)> = bank.iter().map(|(c, s)| (c, vec![s.clone()])).collect();
    write_symbol_sets(out.create(name)?, &sets)
}

fn run_train(config: &ExperimentConfig, out: &mut Outputs) -> Result<BTreeMap<String, f64>> {
    let data = load_dataset(config)?;
    let view = data.view();
    let (agent, history) = stage("train", train_agent(config, &view, STREAM_AGENT, 0))?;
    history.write_csv(out.create("history.csv")?)?;
    let accs = class_accuracies(&agent, &view)?;
    let mut w = csv::Writer::from_writer(out.create("class_accuracy.csv")?);
    w.write_record(["class_id", "balanced_accuracy"])?;
    for (c, a) in &accs {
        w.write_record([c.to_string(), fmt_f(*a)])?;
    }
    w.flush()?;
    write_bank(out, "symbols.csv", &agent.bank)?;
    agent.save(out.path("agent.sea"))?;
    let mean = accs.iter().map(|a| a.1).sum::<f64>() / accs.len() as f64;
    let final_loss = history.records.last().map_or(f64::NAN, |r| r.loss);
    Ok(BTreeMap::from([
        ("mean_test_accuracy".into(), mean),
        ("final_loss".into(), final_loss),
    ]))
}

struct InferRound {
    holdout: u32,
    accuracies: Vec<f64>,
    losses: Vec<f64>,
    symbols: Vec<Symbol>,
}

fn run_infer(config: &ExperimentConfig, out: &mut Outputs) -> Result<BTreeMap<String, f64>> {
    let data = load_dataset(config)?;
    let view = data.view();
    let rounds = rounds_or_classes(config.infer.rounds, view.classes().len());
    let results = (0..rounds)
        .into_par_iter()
        .map(|r| {
            let holdout = holdout_of(r, view.classes());
            let (d99, _) = split(&view, SplitSpec { holdout_class: holdout })?;
            let (agent, _) = stage("train", train_agent(config, &d99, STREAM_INFER, r as u64))?;
            let mut rng = stage_rng(config.seed, STREAM_INFER, (1 << 31) | r as u64);
            let mut round = InferRound {
                holdout,
                accuracies: Vec::new(),
                losses: Vec::new(),
                symbols: Vec::new(),
            };
            for _ in 0..config.infer.realizations {
                let shot = FewShotSample::draw(&view, holdout, &mut rng)?;
                let (s, loss) = stage("infer", infer_symbol(&agent, holdout, &shot, &config.symbolic, &mut rng))?;
                round.accuracies.push(evaluate_with_symbol(&agent, &view, holdout, &s)?);
                round.losses.push(loss);
                round.symbols.push(s);
            }
            Ok(round)
        })
        .collect::<Result<Vec<_>>>()?;

    let mut w = csv::Writer::from_writer(out.create("infer.csv")?);
    w.write_record(["round", "holdout_class", "realization", "accuracy", "final_loss"])?;
    let mut medians = Vec::with_capacity(results.len());
    for (r, round) in results.iter().enumerate() {
        for (k, (a, l)) in round.accuracies.iter().zip(&round.losses).enumerate() {
            w.write_record([r.to_string(), round.holdout.to_string(), k.to_string(), fmt_f(*a), fmt_f(*l)])?;
        }
        medians.push(median(&mut round.accuracies.clone()));
    }
    w.flush()?;
    let sets: Vec<(u32, Vec<Symbol>)> = results.iter().map(|r| (r.holdout, r.symbols.clone())).collect();
    write_symbol_sets(out.create("inferred_symbols.csv")?, &sets)?;
    Ok(BTreeMap::from([
        ("rounds".into(), rounds as f64),
        ("mean_median_accuracy".into(), medians.iter().sum::<f64>() / medians.len() as f64),
    ]))
}

fn run_communicate(config: &ExperimentConfig, out: &mut Outputs) -> Result<BTreeMap<String, f64>> {
    let data = load_dataset(config)?;
    let view = data.view();
    let (speaker, _) = stage("train speaker", train_agent(config, &view, STREAM_SPEAKER, 0))?;
    let variants: BTreeMap<u32, Vec<Symbol>> = view
        .classes()
        .par_iter()
        .map(|&c| {
            let mut rng = stage_rng(config.seed, STREAM_SPEAKER, 1 + c as u64);
            let mut set = vec![speaker.bank.get(c)?.clone()];
            let extra = config.communicate.variants - 1;
            set.extend(stage(
                "extend symbols",
                extend_symbol_set(&speaker, &view, c, extra, &config.symbolic, &mut rng),
            )?);
            Ok((c, set))
        })
        .collect::<Result<_>>()?;
    let rounds: Vec<GameOutcome> = (0..config.communicate.rounds)
        .into_par_iter()
        .map(|r| {
            let holdout = holdout_of(r, view.classes());
            let (d99, _) = split(&view, SplitSpec { holdout_class: holdout })?;
            let (listener, _) = stage("train listener", train_agent(config, &d99, STREAM_LISTENER, r as u64))?;
            let mut rng = stage_rng(config.seed, STREAM_GAME, r as u64);
            stage(
                "game",
                run_game(&speaker, &variants, &listener, holdout, &view, &config.communicate.ti, &mut rng),
            )
        })
        .collect::<Result<_>>()?;
    write_game_csv(out.create("game.csv")?, &rounds)?;
    let n = rounds.len() as f64;
    let wins = rounds.iter().filter(|r| r.accuracy > r.control_accuracy).count();
    Ok(BTreeMap::from([
        ("rounds".into(), n),
        ("wins_over_control".into(), wins as f64),
        ("mean_accuracy".into(), rounds.iter().map(|r| r.accuracy).sum::<f64>() / n),
        ("mean_control_accuracy".into(), rounds.iter().map(|r| r.control_accuracy).sum::<f64>() / n),
    ]))
}

fn class_names_for(config: &ExperimentConfig, data: &FeatureDataset) -> Vec<String> {
    if config.wordvec.names.is_empty() {
        class_labels(data)
    } else {
        config.wordvec.names.clone()
    }
}

fn word_vectors(config: &ExperimentConfig, data: &FeatureDataset, names: &[String]) -> Result<WordVectorTable> {
    if names.len() != data.num_classes() as usize {
        return Err(Error::config(
            "wordvec.names",
            format!("{} names for {} classes", names.len(), data.num_classes()),
        ));
    }
    let w = &config.wordvec;
    match &w.path {
        Some(p) => stage("load word vectors", load_word_vectors(p, names)),
        None => {
            let mut rng = stage_rng(config.seed, STREAM_WORDVEC, 0);
            let means = data.train_class_means();
            synthetic_word_vectors(&means, names, w.stand_in_dim, w.stand_in_scale, w.stand_in_noise, &mut rng)
        }
    }
}

fn run_analyze(config: &ExperimentConfig, out: &mut Outputs) -> Result<BTreeMap<String, f64>> {
    let data = load_dataset(config)?;
    let agent = match &config.analyze.agent {
        Some(p) => stage("load agent", Agent::load(p))?,
        None => stage("train", train_agent(config, &data.view(), STREAM_AGENT, 0))?.0,
    };
    let all = class_labels(&data);
    let ids = agent.bank.class_ids();
    let labels: Vec<String> = ids.iter().map(|&c| all.get(c as usize).cloned().unwrap_or(format!("class{c}"))).collect();
    let symbols: Vec<&[f64]> = agent.bank.iter().map(|(_, s)| s.as_slice()).collect();

    let reference = match config.analyze.reference {
        ReferenceKind::ClassMeans => {
            let means = data.train_class_means();
            let rows: Vec<Vec<f64>> = ids.iter().map(|&c| means.row(c as usize).to_vec()).collect();
            cosine_distance_matrix(&rows)?
        }
        ReferenceKind::WordVectors => {
            let names = class_names_for(config, &data);
            let table = word_vectors(config, &data, &names)?;
            let rows: Vec<Vec<f64>> = ids
                .iter()
                .map(|&c| table.get(&names[c as usize]).expect("table holds every name").to_vec())
                .collect();
            cosine_distance_matrix(&rows)?
        }
    };

    let d = stage("distances", cosine_distance_matrix(&symbols))?;
    let dend = stage("cluster", upgma(&d))?;
    let coph = cophenetic_distances(&dend);
    d.write_csv(out.create("distances.csv")?, &labels)?;
    reference.write_csv(out.create("reference_distances.csv")?, &labels)?;
    coph.write_csv(out.create("cophenetic.csv")?, &labels)?;
    std::fs::write(out.path("dendrogram.nwk"), dend.to_newick(&labels)? + "\n")?;
    let edges = semantic_network(&dend, &d)?;
    write_edges_csv(out.create("edges.csv")?, &edges, &d, &labels)?;

    let mut rng = stage_rng(config.seed, STREAM_SHUFFLE, 0);
    let test = stage(
        "shuffle test",
        shuffle_significance(&symbols, &reference, config.analyze.trials, &mut rng),
    )?;
    let mut w = csv::Writer::from_writer(out.create("null_distribution.csv")?);
    w.write_record(["trial", "coefficient"])?;
    for (k, c) in test.null.iter().enumerate() {
        w.write_record([k.to_string(), fmt_f(*c)])?;
    }
    w.flush()?;
    let mut w = csv::Writer::from_writer(out.create("cophenetic_report.csv")?);
    w.write_record(["observed", "null_mean", "null_q99", "p_value", "trials"])?;
    let null_mean = test.null.iter().sum::<f64>() / test.null.len() as f64;
    w.write_record([
        fmt_f(test.observed),
        fmt_f(null_mean),
        fmt_f(test.null_quantile(0.99)),
        fmt_f(test.p_value()),
        test.null.len().to_string(),
    ])?;
    w.flush()?;
    Ok(BTreeMap::from([
        ("cophenetic_correlation".into(), test.observed),
        ("self_correlation".into(), cophenetic_correlation(&coph, &coph)?),
        ("p_value".into(), test.p_value()),
        ("edges".into(), edges.len() as f64),
    ]))
}

fn run_wordvec(config: &ExperimentConfig, out: &mut Outputs) -> Result<BTreeMap<String, f64>> {
    let data = load_dataset(config)?;
    let view = data.view();
    let names = class_names_for(config, &data);
    let table = word_vectors(config, &data, &names)?;
    let bank = stage(
        "reduce word vectors",
        reduce_word_vectors(&table, &names, config.geometry.symbol_len, config.wordvec.amplify),
    )?;
    write_bank(out, "symbols.csv", &bank)?;
    let fixed = TrainConfig {
        train_symbols: false,
        ..config.train.clone()
    };
    let rounds = rounds_or_classes(config.wordvec.rounds, view.classes().len());
    let results: Vec<(u32, f64)> = (0..rounds)
        .into_par_iter()
        .map(|r| {
            let holdout = holdout_of(r, view.classes());
            let (d99, _) = split(&view, SplitSpec { holdout_class: holdout })?;
            let mut rng = stage_rng(config.seed, STREAM_WORDVEC, 1 + r as u64);
            let mut agent = Agent::new(&config.geometry, d99.classes(), &mut rng)?;
            let mut own = bank.clone();
            own.remove(holdout);
            agent.bank = own;
            stage("train", train(&mut agent, &d99, &fixed, rng.random()))?;
            Ok((holdout, evaluate_with_symbol(&agent, &view, holdout, bank.get(holdout)?)?))
        })
        .collect::<Result<_>>()?;
    let mut w = csv::Writer::from_writer(out.create("wordvec.csv")?);
    w.write_record(["round", "holdout_class", "accuracy"])?;
    for (r, (h, a)) in results.iter().enumerate() {
        w.write_record([r.to_string(), h.to_string(), fmt_f(*a)])?;
    }
    w.flush()?;
    let mut accs: Vec<f64> = results.iter().map(|r| r.1).collect();
    Ok(BTreeMap::from([
        ("rounds".into(), rounds as f64),
        ("median_holdout_accuracy".into(), median(&mut accs)),
        ("mean_holdout_accuracy".into(), accs.iter().sum::<f64>() / accs.len() as f64),
    ]))
}
