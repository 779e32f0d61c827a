//! Training loops.
//!
//! Both modes walk the training triples in shuffled mini-batches. Per batch
//! the node states are read from the cache, updated (a gradient-descent step
//! for the factorisation model, a ReFactor layer otherwise) and written back,
//! and the relation table takes one gradient step on the batch loss computed
//! at the pre-update states. In ReFactor mode with a finite layer budget L the
//! cache is reset to the input features every L passes, so ψ is learnt for
//! L-layer message passing; [`inductive_infer`] then runs L layers on a new
//! graph.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::cache::{CacheEvent, ClearUnit, LayerBudget, NodeStateCache};
use crate::dynamics::{
    add_n3, full_gd_step, DynamicsConfig, GradConvention, OptimizerKind, OptimizerState, Scope,
};
use crate::eval::{evaluate, FilterIndex, Protocol};
use crate::graph::{init_std, DatasetBundle, KnowledgeGraph, NodeFeatures, Triple};
use crate::math::{axpy, dot, ln};
use crate::matrix::{Embeddings, NodeStates, RelationTable};
use crate::refactor::{layer_rows, RefactorConfig};
use crate::rng::{stream, StreamRng};
use crate::scoring::{accumulate_grad, object_query, softmax_in_place, CandidateSet, ScoreKind, Slot};
use crate::{EntityId, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Mode {
    /// Lookup-table factorisation model trained by gradient descent on φ.
    PureFm,
    /// ReFactor GNN: node states come from the cache, only ψ is learnt.
    #[default]
    Refactor,
}

/// What each batch's softmax normalises over.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum CandidateStrategy {
    /// Batch endpoints plus global uniform draws.
    #[default]
    InBatch,
    /// Every entity.
    Full,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub mode: Mode,
    pub kind: ScoreKind,
    pub dim: usize,
    /// Node-state learning rate β.
    pub beta: f64,
    /// Relation learning rate η; `None` uses β.
    pub eta: Option<f64>,
    pub epochs: usize,
    pub batch_size: usize,
    pub candidates: CandidateStrategy,
    /// Cap on non-gold in-batch endpoints used as negatives; `None` keeps all.
    pub in_batch_negatives: Option<usize>,
    /// Uniform global negatives drawn per positive triple.
    pub global_negatives: usize,
    pub layers: LayerBudget,
    pub clear_unit: ClearUnit,
    /// N3 strength λ, applied to node states and relations.
    pub lambda: f64,
    pub optimizer: OptimizerKind,
    pub include_global_term: bool,
    /// Gradient convention of the factorisation-model step.
    pub convention: GradConvention,
    /// Standard deviation of the ψ initialisation; `None` is 1/√K.
    pub relation_init_std: Option<f64>,
    /// Stop after this many validations without improvement.
    pub patience: Option<usize>,
    /// Validate every this many epochs (0 disables validation).
    pub valid_every: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            mode: Mode::Refactor,
            kind: ScoreKind::DistMult,
            dim: 64,
            beta: 0.1,
            eta: None,
            epochs: 20,
            batch_size: 256,
            candidates: CandidateStrategy::InBatch,
            in_batch_negatives: None,
            global_negatives: 1,
            layers: LayerBudget::Infinite,
            clear_unit: ClearUnit::Pass,
            lambda: 0.0,
            optimizer: OptimizerKind::Sgd,
            include_global_term: true,
            convention: GradConvention::PaperSubjectSlot,
            relation_init_std: None,
            patience: Some(5),
            valid_every: 1,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidConfig(msg.into()));
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if self.dim == 0 {
            return bad("dim must be >= 1");
        }
        if !(self.beta >= 0.0 && self.beta.is_finite()) {
            return bad("beta must be finite and >= 0");
        }
        if let Some(eta) = self.eta {
            if !(eta >= 0.0 && eta.is_finite()) {
                return bad("eta must be finite and >= 0");
            }
        }
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return bad("lambda must be finite and >= 0");
        }
        if let OptimizerKind::AdaGrad { eps } = self.optimizer {
            if !(eps >= 0.0 && eps.is_finite()) {
                return bad("adagrad epsilon must be finite and >= 0");
            }
        }
        self.kind.check_dim(self.dim)
    }

    pub fn eta(&self) -> f64 {
        self.eta.unwrap_or(self.beta)
    }

    pub fn refactor(&self) -> RefactorConfig {
        RefactorConfig {
            kind: self.kind,
            beta: self.beta,
            lambda: self.lambda,
            include_global_term: self.include_global_term,
        }
    }

    fn effective_budget(&self) -> LayerBudget {
        match self.mode {
            Mode::PureFm => LayerBudget::Infinite,
            Mode::Refactor => self.layers,
        }
    }
}

/// Candidates for a batch: golds, in-batch endpoints (optionally capped to a
/// random subset of `cap` non-gold ones) and the `globals`, ascending.
pub fn batch_candidates<R: Rng + ?Sized>(
    batch: &[Triple],
    cap: Option<usize>,
    globals: &[EntityId],
    rng: &mut R,
) -> Result<CandidateSet> {
    let golds: BTreeSet<EntityId> = batch.iter().map(|t| t.object).collect();
    let mut set = golds.clone();
    let mut others: Vec<EntityId> = batch
        .iter()
        .flat_map(|t| [t.subject, t.object])
        .filter(|v| !golds.contains(v))
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    if let Some(k) = cap {
        if others.len() > k {
            others.shuffle(rng);
            others.truncate(k);
        }
    }
    set.extend(others);
    set.extend(globals.iter().copied());
    CandidateSet::new(set.into_iter().collect())
}

/// One epoch of batches: a fresh shuffle of the triples cut into
/// `batch_size` chunks, each with its candidate set.
pub fn sample_batches(graph: &KnowledgeGraph, cfg: &TrainConfig, rng: &mut StreamRng) -> Result<Vec<Scope>> {
    let triples = graph.triples();
    if triples.is_empty() {
        return Err(Error::EmptyGraph);
    }
    let n = graph.num_entities();
    let mut order: Vec<usize> = (0..triples.len()).collect();
    order.shuffle(rng);
    let mut scopes = Vec::with_capacity(order.len().div_ceil(cfg.batch_size));
    for chunk in order.chunks(cfg.batch_size) {
        let batch: Vec<Triple> = chunk.iter().map(|&i| triples[i]).collect();
        let cands = match cfg.candidates {
            CandidateStrategy::Full => CandidateSet::all(n)?,
            CandidateStrategy::InBatch => {
                let globals: Vec<EntityId> = (0..batch.len() * cfg.global_negatives)
                    .map(|_| rng.random_range(0..n))
                    .collect();
                batch_candidates(&batch, cfg.in_batch_negatives, &globals, rng)?
            }
        };
        scopes.push(Scope::new(batch, cands)?);
    }
    Ok(scopes)
}

/// Mean negative log-likelihood of the scope's triples under `h` and `psi`.
pub fn batch_loss(scope: &Scope, h: &NodeStates, psi: &RelationTable, kind: ScoreKind) -> Result<f64> {
    scope.check_against(h, psi)?;
    let cands = scope.candidates();
    let mut total = 0.0;
    for t in scope.triples() {
        let q = object_query(kind, h.row(t.subject), psi.row(t.relation));
        let mut p: Vec<f64> = cands.ids().iter().map(|&u| dot(&q, h.row(u))).collect();
        let log_z = softmax_in_place(&mut p);
        total += log_z - dot(&q, h.row(t.object));
    }
    Ok(total / scope.len() as f64)
}

/// One step on the relation table from the batch-mean loss at states `h`
/// (states are constants here). Rows of relations absent from the batch are
/// untouched. Returns the new table and the batch-mean loss.
pub fn psi_step(
    scope: &Scope,
    h: &NodeStates,
    psi: &RelationTable,
    kind: ScoreKind,
    eta: f64,
    lambda: f64,
    opt: &mut OptimizerState,
) -> Result<(RelationTable, f64)> {
    scope.check_against(h, psi)?;
    kind.check_dim(h.dim())?;
    let dim = h.dim();
    let cands = scope.candidates().ids();
    let mut grads: alloc::collections::BTreeMap<usize, Vec<f64>> = Default::default();
    let mut loss = 0.0;
    let mut residual = vec![0.0; dim];
    for t in scope.triples() {
        let hs = h.row(t.subject);
        let rel = psi.row(t.relation);
        let q = object_query(kind, hs, rel);
        let mut p: Vec<f64> = cands.iter().map(|&u| dot(&q, h.row(u))).collect();
        let log_z = softmax_in_place(&mut p);
        loss += log_z - dot(&q, h.row(t.object));
        // E_u[h_u] - h_w; the relation gradient is linear in the object slot
        residual.copy_from_slice(h.row(t.object));
        residual.iter_mut().for_each(|x| *x = -*x);
        for (&u, &pu) in cands.iter().zip(&p) {
            axpy(pu, h.row(u), &mut residual);
        }
        let g = grads.entry(t.relation).or_insert_with(|| vec![0.0; dim]);
        accumulate_grad(kind, Slot::Relation, hs, rel, &residual, 1.0, g);
        if lambda != 0.0 {
            add_n3(rel, lambda, 1.0, g);
        }
    }
    let n = scope.len() as f64;
    let mut next = psi.clone();
    for (r, mut g) in grads {
        g.iter_mut().for_each(|x| *x /= n);
        opt.descend(true, r, next.row_mut(r), &g, eta);
    }
    Ok((next, loss / n))
}

/// Wall-clock source for the training log, notified after every epoch.
pub trait Monitor {
    fn seconds(&self) -> f64;

    fn on_epoch(&self, _record: &EpochRecord) {}
}

/// Monitor whose clock always reads zero.
pub struct Silent;

impl Monitor for Silent {
    fn seconds(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    pub epoch: usize,
    pub loss: f64,
    pub valid_mrr: Option<f64>,
    pub seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub relations: RelationTable,
    pub cache: NodeStateCache,
    pub config: TrainConfig,
    pub log: Vec<EpochRecord>,
    /// Epoch whose parameters were kept (the best validation epoch, or the
    /// last one without validation).
    pub kept_epoch: usize,
}

impl TrainedModel {
    /// Learnt parameters: ψ for ReFactor models; ψ and φ for factorisation
    /// models.
    pub fn trainable_parameters(&self) -> usize {
        let psi = self.relations.rows() * self.relations.dim();
        match self.config.mode {
            Mode::Refactor => psi,
            Mode::PureFm => psi + self.cache.states().rows() * self.cache.states().dim(),
        }
    }

    /// States for transductive link prediction on the training graph: the
    /// cache for L = ∞ (and factorisation models), otherwise L fresh layers
    /// from the features.
    pub fn transductive_states(&self, train: &KnowledgeGraph) -> Result<NodeStates> {
        match self.config.effective_budget().layers() {
            None => Ok(self.cache.states().clone()),
            Some(l) => run_layers(train, self.cache.initial(), &self.relations, &self.config, l),
        }
    }
}

/// Applies `layers` passes of mini-batched ReFactor layers over `graph`,
/// starting from `initial`, with frozen relations and fresh optimiser state.
fn run_layers(
    graph: &KnowledgeGraph,
    initial: &Embeddings,
    psi: &RelationTable,
    cfg: &TrainConfig,
    layers: usize,
) -> Result<NodeStates> {
    let mut h = initial.clone();
    if layers == 0 || graph.triples().is_empty() {
        return Ok(h);
    }
    let rcfg = cfg.refactor();
    let mut opt = OptimizerState::new(cfg.optimizer, h.rows(), psi.rows(), h.dim());
    let mut rng = stream(cfg.seed, "inference");
    for _ in 0..layers {
        for scope in sample_batches(graph, cfg, &mut rng)? {
            let rows = layer_rows(&scope, &h, psi, &rcfg, scope.sizes(cfg.beta), &mut opt)?;
            for (k, &v) in scope.nodes().iter().enumerate() {
                h.row_mut(v).copy_from_slice(rows.row(k));
            }
        }
    }
    Ok(h)
}

/// L layers of message passing with the trained ψ over a graph of unseen
/// entities, starting from its features.
pub fn inductive_infer(
    model: &TrainedModel,
    test: &KnowledgeGraph,
    features: &NodeFeatures,
    layers: usize,
) -> Result<NodeStates> {
    if test.num_relations() != model.relations.rows() {
        return Err(Error::RelationMismatch);
    }
    if features.matrix.rows() != test.num_entities() {
        return Err(Error::DimensionMismatch {
            expected: test.num_entities(),
            got: features.matrix.rows(),
        });
    }
    features.matrix.check_dim(model.relations.dim())?;
    run_layers(test, &features.matrix, &model.relations, &model.config, layers)
}

/// Trains on `bundle.train`, validating on `bundle.valid` (filtered full
/// ranking) and keeping the best parameters when validation is enabled.
pub fn fit(bundle: &DatasetBundle, features: &NodeFeatures, cfg: &TrainConfig, monitor: &dyn Monitor) -> Result<TrainedModel> {
    cfg.validate()?;
    let train = &bundle.train;
    if train.triples().is_empty() {
        return Err(Error::EmptyGraph);
    }
    let (n, nr, dim) = (train.num_entities(), train.num_relations(), cfg.dim);
    if features.matrix.rows() != n {
        return Err(Error::DimensionMismatch {
            expected: n,
            got: features.matrix.rows(),
        });
    }
    features.matrix.check_dim(dim)?;

    let mut psi = RelationTable::random_normal(
        nr,
        dim,
        cfg.relation_init_std.unwrap_or_else(|| init_std(dim)),
        &mut stream(cfg.seed, "relations"),
    );
    let budget = cfg.effective_budget();
    let mut cache = NodeStateCache::new(features.matrix.clone(), budget);
    let mut opt = OptimizerState::new(cfg.optimizer, n, nr, dim);
    let mut batch_rng = stream(cfg.seed, "batches");
    let rcfg = cfg.refactor();
    let reciprocal_offset = train.is_reciprocal().then(|| train.base_relations());

    let validate = cfg.valid_every > 0 && !bundle.valid.is_empty();
    let mut filter = FilterIndex::new();
    if validate {
        filter.extend(train.triples(), None);
        filter.extend(bundle.valid.iter().chain(&bundle.test), reciprocal_offset);
    }

    let start = monitor.seconds();
    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(f64, RelationTable, NodeStateCache, usize)> = None;
    let mut since_best = 0usize;

    for epoch in 1..=cfg.epochs {
        let scopes = sample_batches(train, cfg, &mut batch_rng)?;
        let mut epoch_loss = 0.0;
        for (b, scope) in scopes.iter().enumerate() {
            let h = cache.states();
            let rows = match cfg.mode {
                Mode::Refactor => layer_rows(scope, h, &psi, &rcfg, scope.sizes(cfg.beta), &mut opt)?,
                Mode::PureFm => {
                    let dcfg = DynamicsConfig {
                        convention: cfg.convention,
                        ..rcfg.dynamics(scope.sizes(cfg.beta))
                    };
                    let next = full_gd_step(scope, h, &psi, &dcfg, &mut opt)?;
                    let mut rows = Embeddings::zeros(scope.nodes().len(), dim);
                    for (k, &v) in scope.nodes().iter().enumerate() {
                        rows.row_mut(k).copy_from_slice(next.row(v));
                    }
                    rows
                }
            };
            let (next_psi, loss) = psi_step(scope, h, &psi, cfg.kind, cfg.eta(), cfg.lambda, &mut opt)?;
            if !loss.is_finite() || !rows.is_finite() || !next_psi.is_finite() {
                return Err(Error::NonFiniteLoss { epoch, batch: b });
            }
            epoch_loss += loss;
            psi = next_psi;
            cache.push(scope.nodes(), &rows)?;
            if cfg.clear_unit == ClearUnit::Batch && cache.advance_and_maybe_clear() == CacheEvent::Cleared {
                opt.reset_entities();
            }
        }
        if cfg.clear_unit == ClearUnit::Pass && cache.advance_and_maybe_clear() == CacheEvent::Cleared {
            opt.reset_entities();
        }

        let mut valid_mrr = None;
        if validate && epoch % cfg.valid_every == 0 {
            let states = match budget.layers() {
                None => cache.states().clone(),
                Some(l) => run_layers(train, cache.initial(), &psi, cfg, l)?,
            };
            let m = evaluate(
                cfg.kind,
                &states,
                &psi,
                &bundle.valid,
                reciprocal_offset,
                &Protocol::default(),
                &filter,
                cfg.seed,
            )?;
            valid_mrr = Some(m.mrr);
            if best.as_ref().is_none_or(|b| m.mrr > b.0) {
                best = Some((m.mrr, psi.clone(), cache.clone(), epoch));
                since_best = 0;
            } else {
                since_best += 1;
            }
        }
        log.push(EpochRecord {
            epoch,
            loss: epoch_loss / scopes.len() as f64,
            valid_mrr,
            seconds: monitor.seconds() - start,
        });
        monitor.on_epoch(&log[log.len() - 1]);
        if valid_mrr.is_some() && cfg.patience.is_some_and(|p| since_best >= p) {
            break;
        }
    }

    let last = log.len();
    let (relations, cache, kept_epoch) = match best {
        Some((_, psi, cache, epoch)) => (psi, cache, epoch),
        None => (psi, cache, last),
    };
    Ok(TrainedModel {
        relations,
        cache,
        config: cfg.clone(),
        log,
        kept_epoch,
    })
}

/// Loss at initialisation over the full candidate set, for sanity checks.
pub fn initial_loss(graph: &KnowledgeGraph, features: &NodeFeatures, cfg: &TrainConfig) -> Result<f64> {
    let psi = RelationTable::random_normal(
        graph.num_relations(),
        cfg.dim,
        cfg.relation_init_std.unwrap_or_else(|| init_std(cfg.dim)),
        &mut stream(cfg.seed, "relations"),
    );
    batch_loss(&Scope::full(graph)?, &features.matrix, &psi, cfg.kind)
}

/// log |C| for a candidate set, the loss of a uniform predictor.
pub fn uniform_loss(candidates: usize) -> f64 {
    ln(candidates as f64)
}

#[doc(hidden)]
pub fn describe(cfg: &TrainConfig) -> alloc::string::String {
    format!("{:?} {:?} K={} beta={} L={:?}", cfg.mode, cfg.kind, cfg.dim, cfg.beta, cfg.layers)
}
