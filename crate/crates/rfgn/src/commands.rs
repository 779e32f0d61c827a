//! The four verbs: train, eval, verify and ablate.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use rfgn_core::dynamics::GradConvention;
use rfgn_core::eval::{evaluate, FilterIndex, Metrics, Protocol};
use rfgn_core::graph::{KnowledgeGraph, Triple};
use rfgn_core::train::{fit, inductive_infer, EpochRecord, Monitor, TrainedModel};
use rfgn_core::verify::{equivalence_sweep, SweepConfig, SweepReport};
use rfgn_core::NodeStates;

use crate::config::RunConfig;
use crate::data::{load, Loaded};
use crate::metrics::emit_metrics;
use crate::{artifact, CliError};

pub const VERIFY_TOLERANCE: f64 = 1e-9;

struct WallClock(Instant);

impl Monitor for WallClock {
    fn seconds(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }

    fn on_epoch(&self, r: &EpochRecord) {
        match r.valid_mrr {
            Some(m) => log::info!("epoch {} loss {:.4} valid mrr {:.4} ({:.1}s)", r.epoch, r.loss, m, r.seconds),
            None => log::info!("epoch {} loss {:.4} ({:.1}s)", r.epoch, r.loss, r.seconds),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Valid,
    Test,
}

fn offset(g: &KnowledgeGraph) -> Option<usize> {
    g.is_reciprocal().then(|| g.base_relations())
}

fn rank_split(
    model: &TrainedModel,
    graph: &KnowledgeGraph,
    states: &NodeStates,
    splits: [&[Triple]; 2],
    split: Split,
    protocol: &Protocol,
) -> Result<Option<Metrics>, CliError> {
    let triples = match split {
        Split::Valid => splits[0],
        Split::Test => splits[1],
    };
    if triples.is_empty() {
        return Ok(None);
    }
    let mut filter = FilterIndex::new();
    filter.extend(graph.triples(), None);
    filter.extend(splits[0].iter().chain(splits[1]), offset(graph));
    let m = evaluate(
        model.config.kind,
        states,
        &model.relations,
        triples,
        offset(graph),
        protocol,
        &filter,
        model.config.seed,
    )?;
    Ok(Some(m))
}

/// Ranks a split: on the inductive graph after L layers when one is
/// configured, otherwise on the training graph.
pub fn evaluate_model(
    model: &TrainedModel,
    data: &Loaded,
    cfg: &RunConfig,
    split: Split,
) -> Result<Option<Metrics>, CliError> {
    let protocol = cfg.protocol()?;
    match (&data.bundle.inductive, &data.inductive_features) {
        (Some(ind), Some(features)) => {
            let layers = cfg.inference_layers.or(cfg.layers).expect("validated");
            let states = inductive_infer(model, &ind.graph, features, layers)?;
            rank_split(model, &ind.graph, &states, [&ind.valid, &ind.test], split, &protocol)
        }
        _ => {
            let b = &data.bundle;
            let states = model.transductive_states(&b.train)?;
            rank_split(model, &b.train, &states, [&b.valid, &b.test], split, &protocol)
        }
    }
}

pub struct TrainOutcome {
    pub model: TrainedModel,
    pub valid: Option<Metrics>,
    pub test: Option<Metrics>,
}

/// Trains, writes the artifact directory and `metrics.json` (test) /
/// `valid_metrics.json` into `cfg.out_dir`.
pub fn train(cfg: &RunConfig) -> Result<TrainOutcome, CliError> {
    let data = load(cfg)?;
    let tcfg = cfg.train_config()?;
    log::info!(
        "training on {} entities, {} relations, {} triples",
        data.bundle.train.num_entities(),
        data.bundle.train.num_relations(),
        data.bundle.train.triples().len()
    );
    let model = fit(&data.bundle, &data.features, &tcfg, &WallClock(Instant::now()))?;
    artifact::save(&cfg.out_dir, cfg, &model)?;
    let protocol = cfg.protocol()?;
    let valid = evaluate_model(&model, &data, cfg, Split::Valid)?;
    let test = evaluate_model(&model, &data, cfg, Split::Test)?;
    for (m, name) in [(valid, "valid_metrics.json"), (test, "metrics.json")] {
        if let Some(m) = m {
            let path = cfg.out_dir.join(name);
            emit_metrics(&m, &protocol, &path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
        }
    }
    Ok(TrainOutcome { model, valid, test })
}

/// Re-evaluates a saved model on its test split; writes `metrics.json` into
/// `out` (default: the model directory).
pub fn eval(model_dir: &Path, out: Option<&Path>) -> Result<Metrics, CliError> {
    let (cfg, model) = artifact::load(model_dir)?;
    let data = load(&cfg)?;
    let m = evaluate_model(&model, &data, &cfg, Split::Test)?
        .ok_or_else(|| CliError::Config("config has no test split".into()))?;
    let path = out.unwrap_or(model_dir).join("metrics.json");
    emit_metrics(&m, &cfg.protocol()?, &path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(m)
}

pub fn verify(seed: u64, graphs: usize, steps: usize) -> Result<SweepReport, CliError> {
    let cfg = SweepConfig {
        graphs,
        steps,
        ..SweepConfig::default()
    };
    Ok(equivalence_sweep(seed, &cfg, GradConvention::PaperSubjectSlot)?)
}

pub struct Ablation {
    pub with_global: Metrics,
    pub without_global: Metrics,
}

impl Ablation {
    pub fn delta(&self) -> f64 {
        self.with_global.mrr - self.without_global.mrr
    }

    pub fn summary_json(&self) -> String {
        format!(
            "{{\n  \"delta_mrr\": {:.6},\n  \"mrr_with_global_term\": {:.6},\n  \"mrr_without_global_term\": {:.6}\n}}\n",
            self.delta(),
            self.with_global.mrr,
            self.without_global.mrr
        )
    }
}

/// Trains twice, with and without the global term, into
/// `out_dir/with_global_term` and `out_dir/without_global_term`, and writes
/// `out_dir/ablation.json`.
pub fn ablate(cfg: &RunConfig) -> Result<Ablation, CliError> {
    let run = |include: bool, name: &str| -> Result<Metrics, CliError> {
        let sub = RunConfig {
            include_global_term: include,
            out_dir: cfg.out_dir.join(name),
            ..cfg.clone()
        };
        train(&sub)?
            .test
            .ok_or_else(|| CliError::Config("ablation needs a test split".into()))
    };
    let result = Ablation {
        with_global: run(true, "with_global_term")?,
        without_global: run(false, "without_global_term")?,
    };
    let path: PathBuf = cfg.out_dir.join("ablation.json");
    fs::write(&path, result.summary_json()).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    Ok(result)
}
