//! The ReFactor message-passing layer.
//!
//! For every node v touched by a scope (a batch of triples and its candidate
//! set) the layer computes
//!
//! ```text
//! h′[v] = h[v] + α Σ_{(r,w) ∈ N¹[v]} q_M(h[v], r, h[w]) − β n[v]
//! ```
//!
//! where outgoing neighbours send ∇_v Γ(v, r, w), incoming neighbours send
//! (1 − P(v | w, r)) ∇_v Γ(w, r, v), and the global term n[v] collects the
//! softmax-normaliser contributions of nodes outside the 1-hop neighbourhood.
//! Neighbourhoods, softmaxes and |B| are those of the scope. All terms read
//! the pre-layer states.
//!
//! One layer over the full graph is exactly one gradient-descent step of the
//! factorisation model ([`crate::dynamics::full_gd_step`] under
//! [`GradConvention::PaperSubjectSlot`]); [`verify_gd_equivalence`] measures
//! that.

use alloc::vec;
use alloc::vec::Vec;

use crate::dynamics::{
    add_n3, full_gd_step, DynamicsConfig, GradConvention, OptimizerKind, OptimizerState, Scope, StepSizes,
};
use crate::graph::KnowledgeGraph;
use crate::math::{axpy, dot};
use crate::matrix::{Embeddings, NodeStates, RelationTable};
use crate::scoring::{accumulate_grad, object_query, softmax_in_place, ScoreKind, Slot};
use crate::{EntityId, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RefactorConfig {
    pub kind: ScoreKind,
    /// Learning rate β; α = β/|B| per scope.
    pub beta: f64,
    /// N3 strength λ.
    pub lambda: f64,
    /// Keep the global term n[v]; `false` is the ablation.
    pub include_global_term: bool,
}

impl RefactorConfig {
    pub fn new(kind: ScoreKind, beta: f64) -> Self {
        Self {
            kind,
            beta,
            lambda: 0.0,
            include_global_term: true,
        }
    }

    pub fn dynamics(&self, sizes: StepSizes) -> DynamicsConfig {
        DynamicsConfig {
            kind: self.kind,
            sizes,
            lambda: self.lambda,
            convention: GradConvention::PaperSubjectSlot,
        }
    }
}

/// Which side of v the neighbour w sits on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Direction {
    /// `(v, r, w)`: w is an object neighbour of v.
    Outgoing,
    /// `(w, r, v)`: w is a subject neighbour of v.
    Incoming,
}

/// q_M(h_v, r, h_w). `p_incoming` is P(v | w, r) and is only read for
/// incoming edges.
pub fn message(
    kind: ScoreKind,
    h_v: &[f64],
    rel: &[f64],
    h_w: &[f64],
    direction: Direction,
    p_incoming: f64,
) -> Result<Vec<f64>> {
    if !(0.0..=1.0).contains(&p_incoming) {
        return Err(Error::ProbabilityOutOfRange(p_incoming));
    }
    let grad = match direction {
        Direction::Outgoing => crate::scoring::grad_score(kind, Slot::Subject, h_v, rel, h_w)?,
        Direction::Incoming => {
            let mut g = crate::scoring::grad_score(kind, Slot::Object, h_w, rel, h_v)?;
            g.iter_mut().for_each(|x| *x *= 1.0 - p_incoming);
            g
        }
    };
    Ok(grad)
}

/// Per-scope quantities read by every node update.
struct ScopeView {
    /// P_t(·) over the scope's candidates, per triple.
    probs: Vec<Vec<f64>>,
    /// ∇_obj Γ(s_t, r_t, ·), per triple; also the scoring query vector.
    object_grads: Vec<Vec<f64>>,
    /// Candidate position of each entity.
    position: Vec<Option<usize>>,
    /// Triple indices with v as subject / object.
    outgoing: Vec<Vec<usize>>,
    incoming: Vec<Vec<usize>>,
}

impl ScopeView {
    fn build(scope: &Scope, h: &NodeStates, psi: &RelationTable, kind: ScoreKind) -> Result<Self> {
        scope.check_against(h, psi)?;
        kind.check_dim(h.dim())?;
        let n = h.rows();
        let cands = scope.candidates().ids();
        let mut outgoing = vec![Vec::new(); n];
        let mut incoming = vec![Vec::new(); n];
        let mut probs = Vec::with_capacity(scope.len());
        let mut object_grads = Vec::with_capacity(scope.len());
        for (i, t) in scope.triples().iter().enumerate() {
            outgoing[t.subject].push(i);
            incoming[t.object].push(i);
            let q = object_query(kind, h.row(t.subject), psi.row(t.relation));
            let mut p: Vec<f64> = cands.iter().map(|&u| dot(&q, h.row(u))).collect();
            softmax_in_place(&mut p);
            probs.push(p);
            object_grads.push(q);
        }
        Ok(Self {
            probs,
            object_grads,
            position: scope.candidates().position_table(n),
            outgoing,
            incoming,
        })
    }

    fn prob(&self, triple: usize, v: EntityId) -> f64 {
        self.position[v].map_or(0.0, |p| self.probs[triple][p])
    }

    /// Σ_{(r,w) ∈ N¹[v]} q_M (+ one N3 term per incident edge).
    fn aggregate(&self, scope: &Scope, h: &NodeStates, psi: &RelationTable, cfg: &RefactorConfig, v: EntityId) -> Vec<f64> {
        let hv = h.row(v);
        let mut z = vec![0.0; h.dim()];
        for &i in &self.outgoing[v] {
            let t = scope.triples()[i];
            accumulate_grad(cfg.kind, Slot::Subject, hv, psi.row(t.relation), h.row(t.object), 1.0, &mut z);
        }
        for &i in &self.incoming[v] {
            let t = scope.triples()[i];
            let weight = 1.0 - self.prob(i, v);
            accumulate_grad(cfg.kind, Slot::Object, h.row(t.subject), psi.row(t.relation), hv, weight, &mut z);
        }
        if cfg.lambda != 0.0 {
            let degree = (self.outgoing[v].len() + self.incoming[v].len()) as f64;
            add_n3(hv, cfg.lambda, -degree, &mut z);
        }
        z
    }

    /// n[v] as exact finite sums over the scope.
    fn global(&self, scope: &Scope, h: &NodeStates, psi: &RelationTable, kind: ScoreKind, v: EntityId) -> Vec<f64> {
        let dim = h.dim();
        let mut n = vec![0.0; dim];
        let cands = scope.candidates().ids();
        let mut expected = vec![0.0; dim];
        for &i in &self.outgoing[v] {
            // Σ_u P(u|v,r) ∇_v Γ(v,r,u) = ∇_v Γ(v, r, Σ_u P(u|v,r) h[u]) by linearity
            expected.iter_mut().for_each(|x| *x = 0.0);
            for (&u, &p) in cands.iter().zip(&self.probs[i]) {
                axpy(p, h.row(u), &mut expected);
            }
            let t = scope.triples()[i];
            accumulate_grad(kind, Slot::Subject, h.row(v), psi.row(t.relation), &expected, 1.0, &mut n);
        }
        if self.position[v].is_some() {
            for (i, t) in scope.triples().iter().enumerate() {
                if t.contains(v) {
                    continue;
                }
                let p = self.prob(i, v);
                if p != 0.0 {
                    axpy(p, &self.object_grads[i], &mut n);
                }
            }
        }
        let inv = 1.0 / scope.len() as f64;
        n.iter_mut().for_each(|x| *x *= inv);
        n
    }
}

/// n[v] for one node:
/// (1/|B|) [Σ_{(v,r,w)∈B} E_{u~P(·|v,r)} ∇_v Γ(v,r,u) + Σ_{(s,r,o)∈B, v∉{s,o}} P(v|s,r) ∇_v Γ(s,r,v)].
pub fn global_term(
    scope: &Scope,
    h: &NodeStates,
    psi: &RelationTable,
    kind: ScoreKind,
    v: EntityId,
) -> Result<Vec<f64>> {
    let view = ScopeView::build(scope, h, psi, kind)?;
    if v >= h.rows() {
        return Err(Error::OutOfRange {
            kind: "entity",
            id: v,
            len: h.rows(),
        });
    }
    Ok(view.global(scope, h, psi, kind, v))
}

/// Updated rows for the scope's nodes, in `scope.nodes()` order.
pub(crate) fn layer_rows(
    scope: &Scope,
    h: &NodeStates,
    psi: &RelationTable,
    cfg: &RefactorConfig,
    sizes: StepSizes,
    opt: &mut OptimizerState,
) -> Result<Embeddings> {
    let view = ScopeView::build(scope, h, psi, cfg.kind)?;
    opt.check_shape(h.rows(), psi.rows(), h.dim())?;
    let nodes = scope.nodes();
    let mut rows = Embeddings::zeros(nodes.len(), h.dim());
    let batch = scope.len() as f64;
    for (k, &v) in nodes.iter().enumerate() {
        let z = view.aggregate(scope, h, psi, cfg, v);
        let n = if cfg.include_global_term {
            view.global(scope, h, psi, cfg.kind, v)
        } else {
            vec![0.0; h.dim()]
        };
        let row = rows.row_mut(k);
        row.copy_from_slice(h.row(v));
        match opt.kind {
            OptimizerKind::Sgd => {
                axpy(sizes.alpha, &z, row);
                axpy(-sizes.beta, &n, row);
            }
            OptimizerKind::AdaGrad { .. } => {
                let mean_grad: Vec<f64> = n.iter().zip(&z).map(|(n, z)| n - z / batch).collect();
                opt.descend(false, v, row, &mean_grad, sizes.beta);
            }
        }
    }
    Ok(rows)
}

/// One ReFactor layer over `scope` with α = β/|B|. Nodes outside the scope
/// keep their state.
pub fn layer_apply(
    scope: &Scope,
    h: &NodeStates,
    psi: &RelationTable,
    cfg: &RefactorConfig,
    opt: &mut OptimizerState,
) -> Result<NodeStates> {
    layer_apply_with_sizes(scope, h, psi, cfg, scope.sizes(cfg.beta), opt)
}

/// [`layer_apply`] with explicit α and β.
pub fn layer_apply_with_sizes(
    scope: &Scope,
    h: &NodeStates,
    psi: &RelationTable,
    cfg: &RefactorConfig,
    sizes: StepSizes,
    opt: &mut OptimizerState,
) -> Result<NodeStates> {
    let rows = layer_rows(scope, h, psi, cfg, sizes, opt)?;
    let mut next = h.clone();
    for (k, &v) in scope.nodes().iter().enumerate() {
        next.row_mut(v).copy_from_slice(rows.row(k));
    }
    Ok(next)
}

/// Runs `steps` full-graph ReFactor layers and `steps` gradient-descent steps
/// from the same initial states (each path keeps its own optimiser state) and
/// returns the largest elementwise |difference| seen after any step.
pub fn verify_gd_equivalence(
    graph: &KnowledgeGraph,
    phi: &NodeStates,
    psi: &RelationTable,
    cfg: &RefactorConfig,
    optimizer: OptimizerKind,
    convention: GradConvention,
    steps: usize,
) -> Result<f64> {
    let scope = Scope::full(graph)?;
    let sizes = scope.sizes(cfg.beta);
    let dyn_cfg = DynamicsConfig {
        convention,
        ..cfg.dynamics(sizes)
    };
    let mut layer_opt = OptimizerState::new(optimizer, phi.rows(), psi.rows(), phi.dim());
    let mut gd_opt = layer_opt.clone();
    let mut h = phi.clone();
    let mut g = phi.clone();
    let mut worst: f64 = 0.0;
    for _ in 0..steps {
        h = layer_apply(&scope, &h, psi, cfg, &mut layer_opt)?;
        g = full_gd_step(&scope, &g, psi, &dyn_cfg, &mut gd_opt)?;
        worst = worst.max(h.max_abs_diff(&g));
    }
    Ok(worst)
}
