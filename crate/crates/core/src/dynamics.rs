//! Reference optimisation dynamics of a factorisation model on its node
//! embeddings: the per-edge (edge view) updates and the full gradient-descent
//! operator over a batch of triples, with optional N3 regularisation and
//! AdaGrad rescaling.
//!
//! [`full_gd_step`] sums exact per-triple gradients term by term and is the
//! oracle the message-passing layer in [`crate::refactor`] is checked against.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use crate::graph::{KnowledgeGraph, Triple};
use crate::math::sqrt;
use crate::matrix::{Embeddings, NodeStates, RelationTable};
use crate::scoring::{accumulate_grad, score_unchecked, softmax_in_place, CandidateSet, ScoreKind, Slot};
use crate::{EntityId, Error, Result};

/// β is the learning rate; α = β/|B| weighs per-triple terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepSizes {
    pub alpha: f64,
    pub beta: f64,
}

impl StepSizes {
    pub fn for_batch(beta: f64, batch_len: usize) -> Self {
        Self {
            alpha: beta / batch_len as f64,
            beta,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub enum OptimizerKind {
    #[default]
    Sgd,
    AdaGrad {
        eps: f64,
    },
}

/// Running sums of squared gradients for entity rows and relation rows.
/// Unused (and empty) under SGD.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub kind: OptimizerKind,
    pub entity: Embeddings,
    pub relation: Embeddings,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, num_entities: usize, num_relations: usize, dim: usize) -> Self {
        let (ne, nr) = match kind {
            OptimizerKind::Sgd => (0, 0),
            OptimizerKind::AdaGrad { .. } => (num_entities, num_relations),
        };
        Self {
            kind,
            entity: Embeddings::zeros(ne, dim),
            relation: Embeddings::zeros(nr, dim),
        }
    }

    pub fn sgd() -> Self {
        Self::new(OptimizerKind::Sgd, 0, 0, 0)
    }

    pub fn reset_entities(&mut self) {
        self.entity.fill(0.0);
    }

    /// Applies a descent step to `row` given the gradient of the batch-mean
    /// loss. SGD: `row -= lr * grad`. AdaGrad: `row -= lr * rescaled`, with the
    /// accumulator row `index` of `entity` or `relation` updated first.
    pub(crate) fn descend(&mut self, relation: bool, index: usize, row: &mut [f64], mean_grad: &[f64], lr: f64) {
        match self.kind {
            OptimizerKind::Sgd => {
                for (x, g) in row.iter_mut().zip(mean_grad) {
                    *x -= lr * g;
                }
            }
            OptimizerKind::AdaGrad { eps } => {
                let accum = if relation {
                    self.relation.row_mut(index)
                } else {
                    self.entity.row_mut(index)
                };
                for ((x, g), s) in row.iter_mut().zip(mean_grad).zip(accum.iter_mut()) {
                    let (step, acc) = adagrad_element(*g, *s, eps);
                    *s = acc;
                    *x -= lr * step;
                }
            }
        }
    }

    pub(crate) fn check_shape(&self, num_entities: usize, num_relations: usize, dim: usize) -> Result<()> {
        if let OptimizerKind::AdaGrad { eps } = self.kind {
            if !(eps >= 0.0) {
                return Err(Error::InvalidConfig("AdaGrad epsilon must be >= 0".into()));
            }
            for (m, rows) in [(&self.entity, num_entities), (&self.relation, num_relations)] {
                if m.rows() != rows || m.dim() != dim {
                    return Err(Error::DimensionMismatch {
                        expected: rows * dim,
                        got: m.rows() * m.dim(),
                    });
                }
            }
        }
        Ok(())
    }
}

/// How ∂Γ(v, r, u)/∂φ[v] is taken for the candidate u = v in the softmax
/// normaliser of a query with subject v.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum GradConvention {
    /// Gradient flows through the subject slot only, as in the node-view
    /// derivation; the message-passing layer matches this exactly.
    #[default]
    PaperSubjectSlot,
    /// Full calculus: Γ(v, r, v) is quadratic in φ[v], so the object slot
    /// contributes too.
    StrictAutograd,
}

/// A batch of triples, the candidates its softmaxes normalise over, and the
/// nodes it touches (endpoints ∪ candidates, ascending).
#[derive(Debug, Clone, PartialEq)]
pub struct Scope {
    triples: Vec<Triple>,
    candidates: CandidateSet,
    nodes: Vec<EntityId>,
}

impl Scope {
    pub fn new(triples: Vec<Triple>, candidates: CandidateSet) -> Result<Self> {
        if triples.is_empty() {
            return Err(Error::EmptyScope);
        }
        let mut nodes: BTreeSet<EntityId> = candidates.ids().iter().copied().collect();
        for t in &triples {
            if t.subject == t.object {
                return Err(Error::SelfLoopInScope(t.subject));
            }
            if candidates.position(t.object).is_none() {
                return Err(Error::GoldNotCandidate(t.object));
            }
            nodes.insert(t.subject);
            nodes.insert(t.object);
        }
        Ok(Self {
            triples,
            candidates,
            nodes: nodes.into_iter().collect(),
        })
    }

    /// All triples of `graph`, normalising over every entity.
    pub fn full(graph: &KnowledgeGraph) -> Result<Self> {
        if graph.num_entities() == 0 {
            return Err(Error::EmptyScope);
        }
        Self::new(graph.triples().to_vec(), CandidateSet::all(graph.num_entities())?)
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn candidates(&self) -> &CandidateSet {
        &self.candidates
    }

    pub fn nodes(&self) -> &[EntityId] {
        &self.nodes
    }

    pub fn len(&self) -> usize {
        self.triples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.triples.is_empty()
    }

    pub fn sizes(&self, beta: f64) -> StepSizes {
        StepSizes::for_batch(beta, self.len())
    }

    pub(crate) fn check_against(&self, states: &NodeStates, relations: &RelationTable) -> Result<()> {
        if states.dim() != relations.dim() {
            return Err(Error::DimensionMismatch {
                expected: states.dim(),
                got: relations.dim(),
            });
        }
        if let Some(&v) = self.nodes.last() {
            if v >= states.rows() {
                return Err(Error::OutOfRange {
                    kind: "entity",
                    id: v,
                    len: states.rows(),
                });
            }
        }
        if let Some(t) = self.triples.iter().find(|t| t.relation >= relations.rows()) {
            return Err(Error::OutOfRange {
                kind: "relation",
                id: t.relation,
                len: relations.rows(),
            });
        }
        Ok(())
    }
}

/// Settings shared by the gradient-descent operator and its edge view.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DynamicsConfig {
    pub kind: ScoreKind,
    pub sizes: StepSizes,
    /// N3 strength λ.
    pub lambda: f64,
    pub convention: GradConvention,
}

/// Role of the updated node with respect to one edge.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EdgeRole {
    Subject,
    Object,
    /// A candidate `u` that is neither endpoint.
    Nonparticipant(EntityId),
}

/// The contribution of a single edge `(v, r, w)` to one node: returns that
/// node's row after applying α times its log-likelihood gradient.
///
/// `probs` are P(u | v, r) over `cands`, in candidate order.
pub fn edge_update(
    kind: ScoreKind,
    role: EdgeRole,
    triple: Triple,
    phi: &NodeStates,
    rel: &[f64],
    cands: &CandidateSet,
    probs: &[f64],
    sizes: StepSizes,
) -> Result<Vec<f64>> {
    if probs.len() != cands.len() {
        return Err(Error::DimensionMismatch {
            expected: cands.len(),
            got: probs.len(),
        });
    }
    let total: f64 = probs.iter().sum();
    if (total - 1.0).abs() > 1e-9 {
        return Err(Error::NotNormalised(total));
    }
    kind.check_dim(phi.dim())?;
    let (v, w) = (triple.subject, triple.object);
    let hv = phi.row(v);
    let hw = phi.row(w);
    let alpha = sizes.alpha;
    let prob_of = |u: EntityId| cands.position(u).map_or(0.0, |p| probs[p]);
    let mut out;
    match role {
        EdgeRole::Subject => {
            out = hv.to_vec();
            accumulate_grad(kind, Slot::Subject, hv, rel, hw, alpha, &mut out);
            for (&u, &p) in cands.ids().iter().zip(probs) {
                accumulate_grad(kind, Slot::Subject, hv, rel, phi.row(u), -alpha * p, &mut out);
            }
        }
        EdgeRole::Object => {
            out = hw.to_vec();
            accumulate_grad(kind, Slot::Object, hv, rel, hw, alpha * (1.0 - prob_of(w)), &mut out);
        }
        EdgeRole::Nonparticipant(u) => {
            if u == v || u == w {
                return Err(Error::InvalidConfig("nonparticipant must not be an endpoint".into()));
            }
            let hu = phi.row(u);
            out = hu.to_vec();
            accumulate_grad(kind, Slot::Object, hv, rel, hu, -alpha * prob_of(u), &mut out);
        }
    }
    Ok(out)
}

/// N3 regulariser gradient λ·sign(x)·x², elementwise.
pub fn n3_gradient(row: &[f64], lambda: f64) -> Vec<f64> {
    row.iter().map(|&x| lambda * x * x.abs()).collect()
}

pub(crate) fn add_n3(row: &[f64], lambda: f64, scale: f64, out: &mut [f64]) {
    for (o, &x) in out.iter_mut().zip(row) {
        *o += scale * lambda * x * x.abs();
    }
}

#[inline]
fn adagrad_element(g: f64, accum: f64, eps: f64) -> (f64, f64) {
    if g == 0.0 {
        return (0.0, accum);
    }
    let acc = accum + g * g;
    (g / (sqrt(acc) + eps), acc)
}

/// Accumulate-then-rescale AdaGrad: returns `(grad / (√(accum + grad²) + ε),
/// accum + grad²)`.
pub fn adagrad_rescale(grad: &[f64], accum: &[f64], eps: f64) -> (Vec<f64>, Vec<f64>) {
    grad.iter()
        .zip(accum)
        .map(|(&g, &s)| adagrad_element(g, s, eps))
        .unzip()
}

/// One gradient-descent step on the node embeddings over `scope`:
/// φ′ = φ − α Σ_{(v,r,w)∈B} ∇_φ[−log P(w|v,r)] (plus N3), with AdaGrad
/// rescaling of the batch-mean gradient when `opt` says so.
///
/// Every per-triple, per-candidate gradient term is evaluated separately from
/// the score's slot gradients; nothing is factored.
pub fn full_gd_step(
    scope: &Scope,
    phi: &NodeStates,
    psi: &RelationTable,
    cfg: &DynamicsConfig,
    opt: &mut OptimizerState,
) -> Result<NodeStates> {
    let grad = batch_gradient_sum(scope, phi, psi, cfg)?;
    opt.check_shape(phi.rows(), psi.rows(), phi.dim())?;
    let mut next = phi.clone();
    match opt.kind {
        OptimizerKind::Sgd => {
            for v in 0..phi.rows() {
                crate::math::axpy(-cfg.sizes.alpha, grad.row(v), next.row_mut(v));
            }
        }
        OptimizerKind::AdaGrad { .. } => {
            let n = scope.len() as f64;
            let mut mean = vec![0.0; phi.dim()];
            for v in 0..phi.rows() {
                for (m, g) in mean.iter_mut().zip(grad.row(v)) {
                    *m = g / n;
                }
                opt.descend(false, v, next.row_mut(v), &mean, cfg.sizes.beta);
            }
        }
    }
    Ok(next)
}

/// Σ over the batch of ∇_φ[−log P(w|v,r)] (+ N3 per endpoint occurrence).
pub fn batch_gradient_sum(
    scope: &Scope,
    phi: &NodeStates,
    psi: &RelationTable,
    cfg: &DynamicsConfig,
) -> Result<Embeddings> {
    scope.check_against(phi, psi)?;
    cfg.kind.check_dim(phi.dim())?;
    let mut grad = Embeddings::zeros(phi.rows(), phi.dim());
    let cands = scope.candidates().ids();
    let mut probs = vec![0.0; cands.len()];
    for t in scope.triples() {
        let (s, o) = (t.subject, t.object);
        let hs = phi.row(s);
        let rel = psi.row(t.relation);
        for (p, &u) in probs.iter_mut().zip(cands) {
            *p = score_unchecked(cfg.kind, hs, rel, phi.row(u));
        }
        softmax_in_place(&mut probs);

        accumulate_grad(cfg.kind, Slot::Subject, hs, rel, phi.row(o), -1.0, grad.row_mut(s));
        for (&u, &p) in cands.iter().zip(&probs) {
            accumulate_grad(cfg.kind, Slot::Subject, hs, rel, phi.row(u), p, grad.row_mut(s));
        }
        accumulate_grad(cfg.kind, Slot::Object, hs, rel, phi.row(o), -1.0, grad.row_mut(o));
        for (&u, &p) in cands.iter().zip(&probs) {
            if u == s && cfg.convention == GradConvention::PaperSubjectSlot {
                continue;
            }
            accumulate_grad(cfg.kind, Slot::Object, hs, rel, phi.row(u), p, grad.row_mut(u));
        }
        if cfg.lambda != 0.0 {
            add_n3(phi.row(s), cfg.lambda, 1.0, grad.row_mut(s));
            add_n3(phi.row(o), cfg.lambda, 1.0, grad.row_mut(o));
        }
    }
    Ok(grad)
}
