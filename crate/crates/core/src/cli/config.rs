//! Declarative experiment configuration (TOML).
//!
//! Every section is optional and falls back to the defaults below. Unknown
//! keys are rejected with their dotted path.
//!
//! ```toml
//! seed = 0
//!
//! [data]                 # `path` to a SEAF file, or a synthetic world
//! path = "features.seaf"
//! [data.synthetic]
//! classes = 10
//! dim = 512
//!
//! [geometry]             # symbol length and TS widths (layers[0] = F)
//! [train]                # two-phase training
//! [symbolic]             # symbol inference objective
//! [infer]                # rounds, realizations
//! [communicate]          # rounds, variants, [communicate.ti]
//! [analyze]              # agent, reference, trials
//! [wordvec]              # path, names, amplify, stand-in vectors
//! ```

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::comms::TiSchedule;
use crate::data_io::SyntheticSpec;
use crate::gated_net::NetGeometry;
use crate::symbolic::SymbolicHyper;
use crate::trainer::TrainConfig;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ExperimentKind {
    Gendata,
    Train,
    Infer,
    Communicate,
    Analyze,
    Wordvec,
}

impl ExperimentKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Gendata => "gendata",
            Self::Train => "train",
            Self::Infer => "infer",
            Self::Communicate => "communicate",
            Self::Analyze => "analyze",
            Self::Wordvec => "wordvec",
        }
    }
}

impl fmt::Display for ExperimentKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    pub synthetic: SyntheticSpec,
}

/// Holdout rounds. `rounds = 0` means one round per class.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InferConfig {
    pub rounds: usize,
    pub realizations: usize,
}

impl Default for InferConfig {
    fn default() -> Self {
        Self {
            rounds: 0,
            realizations: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct CommunicateConfig {
    pub rounds: usize,
    /// Speaker symbols per class: its own plus `variants − 1` inferred ones.
    pub variants: usize,
    pub ti: TiSchedule,
}

impl Default for CommunicateConfig {
    fn default() -> Self {
        Self {
            rounds: 100,
            variants: 97,
            ti: TiSchedule::default(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReferenceKind {
    /// Cosine distances between per-class mean training features.
    #[default]
    ClassMeans,
    /// Cosine distances between the raw word vectors of `[wordvec]`.
    WordVectors,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct AnalyzeConfig {
    /// Trained agent to analyse; trained from the config when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub agent: Option<PathBuf>,
    pub reference: ReferenceKind,
    pub trials: usize,
}

impl Default for AnalyzeConfig {
    fn default() -> Self {
        Self {
            agent: None,
            reference: ReferenceKind::ClassMeans,
            trials: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct WordvecConfig {
    /// Text file of `token v1 v2 ...` lines; stand-in vectors when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub path: Option<PathBuf>,
    /// One name per class id; dataset class names or `class<i>` when empty.
    pub names: Vec<String>,
    pub amplify: f64,
    pub rounds: usize,
    pub stand_in_dim: usize,
    pub stand_in_scale: f64,
    pub stand_in_noise: f64,
}

impl Default for WordvecConfig {
    fn default() -> Self {
        Self {
            path: None,
            names: Vec::new(),
            amplify: 10.0,
            rounds: 0,
            stand_in_dim: 300,
            stand_in_scale: 0.01,
            stand_in_noise: 0.001,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub data: DataConfig,
    pub geometry: NetGeometry,
    pub train: TrainConfig,
    pub symbolic: SymbolicHyper,
    pub infer: InferConfig,
    pub communicate: CommunicateConfig,
    pub analyze: AnalyzeConfig,
    pub wordvec: WordvecConfig,
}

fn within(section: &str, e: Error) -> Error {
    match e {
        Error::Config { path, msg } => Error::config(format!("{section}.{path}"), msg),
        other => Error::config(section, other.to_string()),
    }
}

impl ExperimentConfig {
    /// Checks every constraint that does not need the dataset loaded.
    pub fn validate(&self, kind: ExperimentKind) -> Result<()> {
        if self.data.path.is_none() {
            self.data.synthetic.validate().map_err(|e| within("data.synthetic", e))?;
        }
        self.geometry.validate().map_err(|e| within("geometry", e))?;
        if self.data.path.is_none() && self.geometry.feature_dim() != self.data.synthetic.dim {
            return Err(Error::config(
                "geometry.layers",
                format!(
                    "first width {} must equal the feature dimension {}",
                    self.geometry.feature_dim(),
                    self.data.synthetic.dim
                ),
            ));
        }
        self.train.validate().map_err(|e| within("train", e))?;
        self.symbolic.validate().map_err(|e| within("symbolic", e))?;
        self.communicate.ti.validate().map_err(|e| within("communicate.ti", e))?;
        if self.infer.realizations == 0 {
            return Err(Error::config("infer.realizations", "must be >= 1"));
        }
        if self.communicate.rounds == 0 {
            return Err(Error::config("communicate.rounds", "must be >= 1"));
        }
        if self.communicate.variants == 0 {
            return Err(Error::config("communicate.variants", "must be >= 1"));
        }
        if self.analyze.trials == 0 {
            return Err(Error::config("analyze.trials", "must be >= 1"));
        }
        let w = &self.wordvec;
        if !(w.amplify > 0.0 && w.amplify.is_finite()) {
            return Err(Error::config("wordvec.amplify", "must be > 0"));
        }
        if w.stand_in_dim < self.geometry.symbol_len {
            return Err(Error::config("wordvec.stand_in_dim", "must be >= geometry.symbol_len"));
        }
        if !(w.stand_in_scale > 0.0 && w.stand_in_noise >= 0.0) {
            return Err(Error::config("wordvec.stand_in_scale", "scale must be > 0 and noise >= 0"));
        }
        if kind == ExperimentKind::Wordvec
            && self.data.path.is_none()
            && (self.data.synthetic.classes as usize) < self.geometry.symbol_len
        {
            return Err(Error::config(
                "geometry.symbol_len",
                format!(
                    "{} word vectors cannot determine {} principal axes",
                    self.data.synthetic.classes, self.geometry.symbol_len
                ),
            ));
        }
        let needs_vectors = kind == ExperimentKind::Wordvec
            || (kind == ExperimentKind::Analyze && self.analyze.reference == ReferenceKind::WordVectors);
        if needs_vectors && self.data.path.is_none() && !w.names.is_empty() {
            let classes = self.data.synthetic.classes as usize;
            if w.names.len() != classes {
                return Err(Error::config(
                    "wordvec.names",
                    format!("{} names for {classes} classes", w.names.len()),
                ));
            }
        }
        Ok(())
    }

    /// SHA-256 of the canonical JSON form; independent of key order.
    pub fn hash(&self, kind: ExperimentKind) -> String {
        let value = serde_json::json!({ "kind": kind, "config": self });
        let text = serde_json::to_string(&value).expect("config serializes");
        hex::encode(Sha256::digest(text.as_bytes()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::config("<root>", e.to_string()))
    }
}

/// Parses TOML into a config; errors carry the offending key path.
pub fn parse_config(text: &str) -> Result<ExperimentConfig> {
    let de = toml::Deserializer::parse(text).map_err(|e| Error::config("<root>", e.message().to_string()))?;
    serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        Error::config(if path == "." { "<root>".into() } else { path }, e.inner().message().to_string())
    })
}

pub fn load_config(path: &Path) -> Result<ExperimentConfig> {
    parse_config(&std::fs::read_to_string(path)?)
}
