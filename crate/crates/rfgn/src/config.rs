//! Flat JSON run configuration.

use std::fs;
use std::path::{Path, PathBuf};

use rfgn_core::cache::{ClearUnit, LayerBudget};
use rfgn_core::dynamics::{GradConvention, OptimizerKind};
use rfgn_core::eval::{Protocol, RankMode};
use rfgn_core::scoring::ScoreKind;
use rfgn_core::train::{CandidateStrategy, Mode, TrainConfig};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModeKey {
    Refactor,
    PureFm,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScoreKey {
    Distmult,
    Complex,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CandidateKey {
    InBatch,
    Full,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClearKey {
    Pass,
    Batch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKey {
    Sgd,
    Adagrad,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConventionKey {
    PaperSubjectSlot,
    StrictAutograd,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ProtocolKey {
    Full,
    Partial,
}

/// Every training, layer and evaluation knob plus data paths. Relative
/// paths are resolved against the directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub train: Option<PathBuf>,
    pub valid: Option<PathBuf>,
    pub test: Option<PathBuf>,
    /// Feature file for training entities (`label,f1,...,fK` lines).
    pub features: Option<PathBuf>,
    /// Graph of unseen entities used for inductive message passing.
    pub inductive_graph: Option<PathBuf>,
    pub inductive_valid: Option<PathBuf>,
    pub inductive_test: Option<PathBuf>,
    pub inductive_features: Option<PathBuf>,
    pub out_dir: PathBuf,

    pub mode: ModeKey,
    pub score: ScoreKey,
    pub dim: usize,
    pub beta: f64,
    pub eta: Option<f64>,
    pub epochs: usize,
    pub batch_size: usize,
    pub candidates: CandidateKey,
    pub in_batch_negatives: Option<usize>,
    pub global_negatives: usize,
    /// Layer budget L; `null` never clears the cache.
    pub layers: Option<usize>,
    /// Layers run at inductive inference; defaults to `layers`.
    pub inference_layers: Option<usize>,
    pub clear_unit: ClearKey,
    pub lambda: f64,
    pub optimizer: OptimizerKey,
    pub adagrad_eps: f64,
    pub include_global_term: bool,
    pub convention: ConventionKey,
    pub relation_init_std: Option<f64>,
    /// Standard deviation of random features; defaults to 1/√K.
    pub feature_std: Option<f64>,
    pub patience: Option<usize>,
    pub valid_every: usize,
    pub seed: u64,
    pub reciprocals: bool,

    pub protocol: ProtocolKey,
    pub negatives: usize,
    pub filtered: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        let t = TrainConfig::default();
        Self {
            train: None,
            valid: None,
            test: None,
            features: None,
            inductive_graph: None,
            inductive_valid: None,
            inductive_test: None,
            inductive_features: None,
            out_dir: PathBuf::from("runs/default"),
            mode: ModeKey::Refactor,
            score: ScoreKey::Distmult,
            dim: t.dim,
            beta: t.beta,
            eta: None,
            epochs: t.epochs,
            batch_size: t.batch_size,
            candidates: CandidateKey::InBatch,
            in_batch_negatives: None,
            global_negatives: t.global_negatives,
            layers: None,
            inference_layers: None,
            clear_unit: ClearKey::Pass,
            lambda: 0.0,
            optimizer: OptimizerKey::Sgd,
            adagrad_eps: 1e-10,
            include_global_term: true,
            convention: ConventionKey::PaperSubjectSlot,
            relation_init_std: None,
            feature_std: None,
            patience: t.patience,
            valid_every: t.valid_every,
            seed: 0,
            reciprocals: true,
            protocol: ProtocolKey::Full,
            negatives: 50,
            filtered: true,
        }
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self, CliError> {
        serde_json::from_str(text).map_err(|e| CliError::Config(format!("config: {e}")))
    }

    /// Reads a config file, resolving relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self, CliError> {
        let text =
            fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_json(&text)?;
        cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
        Ok(cfg)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("config serialises")
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        let base = std::path::absolute(base).unwrap_or_else(|_| base.to_path_buf());
        for p in [
            &mut self.train,
            &mut self.valid,
            &mut self.test,
            &mut self.features,
            &mut self.inductive_graph,
            &mut self.inductive_valid,
            &mut self.inductive_test,
            &mut self.inductive_features,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        if self.out_dir.is_relative() {
            self.out_dir = base.join(&self.out_dir);
        }
    }

    pub fn layer_budget(&self) -> Result<LayerBudget, CliError> {
        match self.layers {
            None => Ok(LayerBudget::Infinite),
            Some(l) => LayerBudget::finite(l).ok_or_else(|| CliError::Config("layers must be >= 1 or null".into())),
        }
    }

    pub fn train_config(&self) -> Result<TrainConfig, CliError> {
        let cfg = TrainConfig {
            mode: match self.mode {
                ModeKey::Refactor => Mode::Refactor,
                ModeKey::PureFm => Mode::PureFm,
            },
            kind: match self.score {
                ScoreKey::Distmult => ScoreKind::DistMult,
                ScoreKey::Complex => ScoreKind::ComplEx,
            },
            dim: self.dim,
            beta: self.beta,
            eta: self.eta,
            epochs: self.epochs,
            batch_size: self.batch_size,
            candidates: match self.candidates {
                CandidateKey::InBatch => CandidateStrategy::InBatch,
                CandidateKey::Full => CandidateStrategy::Full,
            },
            in_batch_negatives: self.in_batch_negatives,
            global_negatives: self.global_negatives,
            layers: self.layer_budget()?,
            clear_unit: match self.clear_unit {
                ClearKey::Pass => ClearUnit::Pass,
                ClearKey::Batch => ClearUnit::Batch,
            },
            lambda: self.lambda,
            optimizer: match self.optimizer {
                OptimizerKey::Sgd => OptimizerKind::Sgd,
                OptimizerKey::Adagrad => OptimizerKind::AdaGrad { eps: self.adagrad_eps },
            },
            include_global_term: self.include_global_term,
            convention: match self.convention {
                ConventionKey::PaperSubjectSlot => GradConvention::PaperSubjectSlot,
                ConventionKey::StrictAutograd => GradConvention::StrictAutograd,
            },
            relation_init_std: self.relation_init_std,
            patience: self.patience,
            valid_every: self.valid_every,
            seed: self.seed,
        };
        cfg.validate().map_err(|e| CliError::Config(e.to_string()))?;
        Ok(cfg)
    }

    pub fn protocol(&self) -> Result<Protocol, CliError> {
        let mode = match self.protocol {
            ProtocolKey::Full => RankMode::Full,
            ProtocolKey::Partial if self.negatives >= 1 => RankMode::Partial {
                negatives: self.negatives,
            },
            ProtocolKey::Partial => return Err(CliError::Config("negatives must be >= 1".into())),
        };
        Ok(Protocol {
            mode,
            filtered: self.filtered,
        })
    }

    /// Checks knob consistency and that every referenced file exists.
    pub fn validate(&self) -> Result<(), CliError> {
        self.train_config()?;
        self.protocol()?;
        if self.train.is_none() {
            return Err(CliError::Config("`train` path is required".into()));
        }
        if self.inductive_graph.is_none()
            && (self.inductive_valid.is_some() || self.inductive_test.is_some() || self.inductive_features.is_some())
        {
            return Err(CliError::Config("inductive splits need `inductive_graph`".into()));
        }
        if self.inductive_graph.is_some() && self.inference_layers.or(self.layers).is_none() {
            return Err(CliError::Config(
                "inductive inference needs a finite `layers` or `inference_layers`".into(),
            ));
        }
        if let (ModeKey::PureFm, Some(_)) = (self.mode, self.inductive_graph.as_ref()) {
            return Err(CliError::Config("pure_fm models cannot run on unseen entities".into()));
        }
        for p in [
            &self.train,
            &self.valid,
            &self.test,
            &self.features,
            &self.inductive_graph,
            &self.inductive_valid,
            &self.inductive_test,
            &self.inductive_features,
        ]
        .into_iter()
        .flatten()
        {
            if !p.is_file() {
                return Err(CliError::Config(format!("file not found: {}", p.display())));
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(matches!(RunConfig::from_json(r#"{"dimm": 4}"#), Err(CliError::Config(_))));
        let cfg = RunConfig::from_json(r#"{"dim": 4, "score": "complex", "layers": 3}"#).unwrap();
        assert_eq!(cfg.dim, 4);
        assert_eq!(cfg.layer_budget().unwrap().layers(), Some(3));
    }

    #[test]
    fn odd_complex_dimension_is_a_config_error() {
        let cfg = RunConfig::from_json(r#"{"dim": 5, "score": "complex"}"#).unwrap();
        assert!(matches!(cfg.train_config(), Err(CliError::Config(_))));
    }

    #[test]
    fn json_round_trip() {
        let cfg = RunConfig {
            layers: Some(6),
            optimizer: OptimizerKey::Adagrad,
            ..RunConfig::default()
        };
        assert_eq!(RunConfig::from_json(&cfg.to_json()).unwrap(), cfg);
    }
}
