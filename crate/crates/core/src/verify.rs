//! Randomised check that ReFactor layers reproduce gradient descent on node
//! embeddings.

use alloc::vec::Vec;

use rand::Rng;

use crate::dynamics::{GradConvention, OptimizerKind};
use crate::graph::{KnowledgeGraph, Triple};
use crate::matrix::{Embeddings, NodeStates, RelationTable};
use crate::refactor::{verify_gd_equivalence, RefactorConfig};
use crate::rng::indexed_stream;
use crate::scoring::ScoreKind;
use crate::Result;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepConfig {
    pub graphs: usize,
    pub steps: usize,
    pub max_entities: usize,
    pub max_relations: usize,
    pub max_triples: usize,
    pub max_dim: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            graphs: 100,
            steps: 5,
            max_entities: 12,
            max_relations: 4,
            max_triples: 40,
            max_dim: 8,
        }
    }
}

/// A small random problem: graph, node states and relation table.
#[derive(Debug, Clone)]
pub struct Instance {
    pub graph: KnowledgeGraph,
    pub phi: NodeStates,
    pub psi: RelationTable,
    pub beta: f64,
}

/// Random graph without self-loops (duplicates dropped), with entries of
/// φ and ψ uniform in [-1, 1]. ComplEx instances get an even dimension.
pub fn random_instance<R: Rng + ?Sized>(rng: &mut R, cfg: &SweepConfig, kind: ScoreKind) -> Result<Instance> {
    let ne = rng.random_range(2..=cfg.max_entities.max(2));
    let nr = rng.random_range(1..=cfg.max_relations.max(1));
    let nt = rng.random_range(1..=cfg.max_triples.max(1));
    let mut triples: Vec<Triple> = Vec::with_capacity(nt);
    while triples.len() < nt {
        let s = rng.random_range(0..ne);
        let o = rng.random_range(0..ne);
        if s == o {
            continue;
        }
        let t = Triple::new(s, rng.random_range(0..nr), o);
        if triples.contains(&t) {
            // a small graph may not hold nt distinct triples
            if triples.len() >= ne * (ne - 1) * nr {
                break;
            }
            continue;
        }
        triples.push(t);
    }
    let dim = match kind {
        ScoreKind::DistMult => rng.random_range(1..=cfg.max_dim.max(1)),
        ScoreKind::ComplEx => 2 * rng.random_range(1..=(cfg.max_dim / 2).max(1)),
    };
    let mut uniform = |rows: usize| {
        let data = (0..rows * dim).map(|_| rng.random_range(-1.0..=1.0)).collect();
        Embeddings::from_vec(rows, dim, data)
    };
    let phi = uniform(ne)?;
    let psi = uniform(nr)?;
    let beta = rng.random_range(0.1..=1.0);
    Ok(Instance {
        graph: KnowledgeGraph::from_ids(ne, nr, triples)?,
        phi,
        psi,
        beta,
    })
}

/// Optimiser and regulariser settings covered by the sweep.
pub const VARIANTS: [(&str, OptimizerKind, f64); 3] = [
    ("sgd", OptimizerKind::Sgd, 0.0),
    ("sgd+n3", OptimizerKind::Sgd, 0.01),
    ("adagrad", OptimizerKind::AdaGrad { eps: 1e-8 }, 0.0),
];

#[derive(Debug, Clone, PartialEq)]
pub struct SweepReport {
    pub max_divergence: f64,
    pub runs: usize,
    /// `(graph index, scorer, variant)` of the largest divergence.
    pub worst: Option<(usize, ScoreKind, &'static str)>,
}

/// Runs `steps` layer applications against `steps` full-batch GD steps on
/// `graphs` random instances per scorer and variant, returning the largest
/// max-abs difference between the two trajectories.
pub fn equivalence_sweep(seed: u64, cfg: &SweepConfig, convention: GradConvention) -> Result<SweepReport> {
    let mut report = SweepReport {
        max_divergence: 0.0,
        runs: 0,
        worst: None,
    };
    for kind in [ScoreKind::DistMult, ScoreKind::ComplEx] {
        for i in 0..cfg.graphs {
            let label = match kind {
                ScoreKind::DistMult => "sweep-distmult",
                ScoreKind::ComplEx => "sweep-complex",
            };
            let inst = random_instance(&mut indexed_stream(seed, label, i as u64), cfg, kind)?;
            for (name, optimizer, lambda) in VARIANTS {
                let rcfg = RefactorConfig {
                    lambda,
                    ..RefactorConfig::new(kind, inst.beta)
                };
                let d = verify_gd_equivalence(&inst.graph, &inst.phi, &inst.psi, &rcfg, optimizer, convention, cfg.steps)?;
                report.runs += 1;
                if !(d <= report.max_divergence) {
                    report.max_divergence = d;
                    report.worst = Some((i, kind, name));
                }
            }
        }
    }
    Ok(report)
}
