//! Score functions Γ(v, r, w), their gradients, and the softmax likelihood over
//! a candidate set.
//!
//! ComplEx rows are laid out as `[real | imaginary]`, each half `K/2` long.
//! Both scores are multilinear, so the gradient with respect to any slot does
//! not depend on that slot's own argument.

use alloc::collections::BTreeSet;
use alloc::vec;
use alloc::vec::Vec;

use crate::math::{dot, exp, ln};
use crate::matrix::NodeStates;
use crate::{EntityId, Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ScoreKind {
    #[default]
    DistMult,
    ComplEx,
}

impl ScoreKind {
    pub fn check_dim(self, dim: usize) -> Result<()> {
        match self {
            ScoreKind::ComplEx if !dim.is_multiple_of(2) => Err(Error::OddDimension(dim)),
            _ => Ok(()),
        }
    }
}

/// Argument position of Γ(subject, relation, object).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Slot {
    Subject,
    Object,
    Relation,
}

fn check_lengths(kind: ScoreKind, hv: &[f64], rel: &[f64], hw: &[f64]) -> Result<()> {
    let k = hv.len();
    for len in [rel.len(), hw.len()] {
        if len != k {
            return Err(Error::DimensionMismatch {
                expected: k,
                got: len,
            });
        }
    }
    kind.check_dim(k)
}

pub(crate) fn score_unchecked(kind: ScoreKind, hv: &[f64], rel: &[f64], hw: &[f64]) -> f64 {
    match kind {
        ScoreKind::DistMult => hv
            .iter()
            .zip(rel)
            .zip(hw)
            .map(|((a, b), c)| a * b * c)
            .sum(),
        ScoreKind::ComplEx => {
            let d = hv.len() / 2;
            let (vre, vim) = hv.split_at(d);
            let (rre, rim) = rel.split_at(d);
            let (wre, wim) = hw.split_at(d);
            (0..d)
                .map(|i| {
                    rre[i] * vre[i] * wre[i] + rre[i] * vim[i] * wim[i] + rim[i] * vre[i] * wim[i]
                        - rim[i] * vim[i] * wre[i]
                })
                .sum()
        }
    }
}

/// Γ(v, r, w) for DistMult (⟨h_v, ψ_r, h_w⟩) or ComplEx.
pub fn score(kind: ScoreKind, hv: &[f64], rel: &[f64], hw: &[f64]) -> Result<f64> {
    check_lengths(kind, hv, rel, hw)?;
    Ok(score_unchecked(kind, hv, rel, hw))
}

/// `out += scale * ∂Γ(v, r, w)/∂slot`.
pub(crate) fn accumulate_grad(
    kind: ScoreKind,
    slot: Slot,
    hv: &[f64],
    rel: &[f64],
    hw: &[f64],
    scale: f64,
    out: &mut [f64],
) {
    match kind {
        ScoreKind::DistMult => {
            let (a, b) = match slot {
                Slot::Subject => (rel, hw),
                Slot::Object => (rel, hv),
                Slot::Relation => (hv, hw),
            };
            for ((o, x), y) in out.iter_mut().zip(a).zip(b) {
                *o += scale * x * y;
            }
        }
        ScoreKind::ComplEx => {
            let d = hv.len() / 2;
            let (vre, vim) = hv.split_at(d);
            let (rre, rim) = rel.split_at(d);
            let (wre, wim) = hw.split_at(d);
            let (ore, oim) = out.split_at_mut(d);
            for i in 0..d {
                let (gre, gim) = match slot {
                    Slot::Subject => (
                        rre[i] * wre[i] + rim[i] * wim[i],
                        rre[i] * wim[i] - rim[i] * wre[i],
                    ),
                    Slot::Object => (
                        rre[i] * vre[i] - rim[i] * vim[i],
                        rre[i] * vim[i] + rim[i] * vre[i],
                    ),
                    Slot::Relation => (
                        vre[i] * wre[i] + vim[i] * wim[i],
                        vre[i] * wim[i] - vim[i] * wre[i],
                    ),
                };
                ore[i] += scale * gre;
                oim[i] += scale * gim;
            }
        }
    }
}

/// ∂Γ(v, r, w) with respect to the vector in `slot`.
pub fn grad_score(kind: ScoreKind, slot: Slot, hv: &[f64], rel: &[f64], hw: &[f64]) -> Result<Vec<f64>> {
    check_lengths(kind, hv, rel, hw)?;
    let mut out = vec![0.0; hv.len()];
    accumulate_grad(kind, slot, hv, rel, hw, 1.0, &mut out);
    Ok(out)
}

/// Object-slot query vector q with Γ(v, r, u) = ⟨q, h_u⟩ for every u.
pub(crate) fn object_query(kind: ScoreKind, hv: &[f64], rel: &[f64]) -> Vec<f64> {
    let mut q = vec![0.0; hv.len()];
    // the object-slot gradient ignores its own argument
    accumulate_grad(kind, Slot::Object, hv, rel, hv, 1.0, &mut q);
    q
}

/// Ordered, duplicate-free entity ids a softmax normalises over.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSet {
    ids: Vec<EntityId>,
}

impl CandidateSet {
    pub fn new(ids: Vec<EntityId>) -> Result<Self> {
        if ids.is_empty() {
            return Err(Error::EmptyCandidates);
        }
        let mut seen = BTreeSet::new();
        for &id in &ids {
            if !seen.insert(id) {
                return Err(Error::DuplicateId(id));
            }
        }
        Ok(Self { ids })
    }

    /// Every entity `0..n`.
    pub fn all(n: usize) -> Result<Self> {
        Self::new((0..n).collect())
    }

    pub fn ids(&self) -> &[EntityId] {
        &self.ids
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn position(&self, id: EntityId) -> Option<usize> {
        self.ids.iter().position(|&u| u == id)
    }

    /// Entity → candidate position table for entities `0..n`.
    pub(crate) fn position_table(&self, n: usize) -> Vec<Option<usize>> {
        let mut table = vec![None; n];
        for (p, &id) in self.ids.iter().enumerate() {
            if id < n {
                table[id] = Some(p);
            }
        }
        table
    }
}

/// Scores of `(v, r, u)` for each candidate u, in candidate order.
pub fn score_all(
    kind: ScoreKind,
    hv: &[f64],
    rel: &[f64],
    states: &NodeStates,
    cands: &CandidateSet,
) -> Result<Vec<f64>> {
    if cands.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    check_lengths(kind, hv, rel, hv)?;
    states.check_dim(hv.len())?;
    if let Some(&bad) = cands.ids().iter().find(|&&u| u >= states.rows()) {
        return Err(Error::OutOfRange {
            kind: "entity",
            id: bad,
            len: states.rows(),
        });
    }
    Ok(score_all_unchecked(kind, hv, rel, states, cands))
}

pub(crate) fn score_all_unchecked(
    kind: ScoreKind,
    hv: &[f64],
    rel: &[f64],
    states: &NodeStates,
    cands: &CandidateSet,
) -> Vec<f64> {
    let q = object_query(kind, hv, rel);
    cands.ids().iter().map(|&u| dot(&q, states.row(u))).collect()
}

/// Normalises `scores` in place into probabilities (max-shifted) and returns
/// log Σ exp(scores).
pub(crate) fn softmax_in_place(scores: &mut [f64]) -> f64 {
    let max = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut total = 0.0;
    for s in scores.iter_mut() {
        *s = exp(*s - max);
        total += *s;
    }
    for s in scores.iter_mut() {
        *s /= total;
    }
    max + ln(total)
}

/// Softmax probabilities and the negative log-likelihood of `gold_index`.
pub fn softmax_nll(scores: &[f64], gold_index: usize) -> Result<(Vec<f64>, f64)> {
    if scores.is_empty() {
        return Err(Error::EmptyCandidates);
    }
    if gold_index >= scores.len() {
        return Err(Error::OutOfRange {
            kind: "candidate",
            id: gold_index,
            len: scores.len(),
        });
    }
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::NonFinite("scores"));
    }
    let gold = scores[gold_index];
    let mut probs = scores.to_vec();
    let log_z = softmax_in_place(&mut probs);
    Ok((probs, log_z - gold))
}
