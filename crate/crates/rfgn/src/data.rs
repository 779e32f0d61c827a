//! Reading triple splits and feature files named by a [`RunConfig`].

use std::fs;
use std::path::Path;

use rfgn_core::graph::{
    init_std, DatasetBundle, InductiveTest, KnowledgeGraph, NodeFeatures, Triple, VocabPolicy, Vocabulary,
};

use crate::config::RunConfig;
use crate::CliError;

/// Offset between a seed and the seed of the inductive graph's features.
const INDUCTIVE_FEATURE_SALT: u64 = 0x9e37_79b9_7f4a_7c15;

pub struct Loaded {
    pub bundle: DatasetBundle,
    pub features: NodeFeatures,
    pub inductive_features: Option<NodeFeatures>,
}

fn read(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn data_err(path: &Path) -> impl Fn(rfgn_core::Error) -> CliError + '_ {
    move |e| CliError::Data(format!("{}: {e}", path.display()))
}

fn split(graph: &KnowledgeGraph, path: Option<&Path>) -> Result<Vec<Triple>, CliError> {
    match path {
        None => Ok(Vec::new()),
        Some(p) => graph.parse_split(&read(p)?).map_err(data_err(p)),
    }
}

fn load_features(
    graph: &KnowledgeGraph,
    path: Option<&Path>,
    cfg: &RunConfig,
    seed: u64,
) -> Result<NodeFeatures, CliError> {
    match path {
        Some(p) => NodeFeatures::parse(&read(p)?, graph.vocab(), cfg.dim, &p.display().to_string(), None)
            .map_err(data_err(p)),
        None => Ok(NodeFeatures::random_scaled(
            graph.num_entities(),
            cfg.dim,
            seed,
            cfg.feature_std.unwrap_or_else(|| init_std(cfg.dim)),
        )),
    }
}

pub fn load(cfg: &RunConfig) -> Result<Loaded, CliError> {
    cfg.validate()?;
    let train_path = cfg.train.as_deref().expect("validated");
    let mut train = KnowledgeGraph::parse(&read(train_path)?).map_err(data_err(train_path))?;
    if cfg.reciprocals {
        train = train.add_reciprocals().map_err(data_err(train_path))?;
    }
    let valid = split(&train, cfg.valid.as_deref())?;
    let test = split(&train, cfg.test.as_deref())?;
    let mut bundle = DatasetBundle::transductive(train, valid, test).map_err(|e| CliError::Data(e.to_string()))?;
    let features = load_features(&bundle.train, cfg.features.as_deref(), cfg, cfg.seed)?;

    let mut inductive_features = None;
    if let Some(p) = cfg.inductive_graph.as_deref() {
        let vocab = Vocabulary::with_relations(bundle.train.base_relation_labels());
        let mut graph = KnowledgeGraph::parse_with(&read(p)?, vocab, VocabPolicy::FROZEN_RELATIONS).map_err(data_err(p))?;
        if cfg.reciprocals {
            graph = graph.add_reciprocals().map_err(data_err(p))?;
        }
        let valid = split(&graph, cfg.inductive_valid.as_deref())?;
        let test = split(&graph, cfg.inductive_test.as_deref())?;
        inductive_features = Some(load_features(
            &graph,
            cfg.inductive_features.as_deref(),
            cfg,
            cfg.seed.wrapping_add(INDUCTIVE_FEATURE_SALT),
        )?);
        bundle = bundle
            .with_inductive(InductiveTest { graph, valid, test })
            .map_err(|e| CliError::Data(e.to_string()))?;
    }
    Ok(Loaded {
        bundle,
        features,
        inductive_features,
    })
}
