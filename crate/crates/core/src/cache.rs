//! External memory holding the latest node states between layer applications.
//!
//! States start at the input features X. Every L advances the cache is reset
//! to X, so a model trained against it learns to predict from L layers of
//! message passing; with an infinite budget the cache is never cleared and
//! behaves like a factorisation model's embedding table.

use alloc::collections::BTreeSet;
use alloc::vec::Vec;
use core::num::NonZeroUsize;

use crate::matrix::{Embeddings, NodeStates};
use crate::{EntityId, Error, Result};

/// Number of layers between cache resets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LayerBudget {
    Finite(NonZeroUsize),
    Infinite,
}

impl LayerBudget {
    pub fn finite(layers: usize) -> Option<Self> {
        NonZeroUsize::new(layers).map(Self::Finite)
    }

    /// Layers applied at inference; `None` for the infinite budget, whose
    /// states only exist in the cache.
    pub fn layers(self) -> Option<usize> {
        match self {
            Self::Finite(l) => Some(l.get()),
            Self::Infinite => None,
        }
    }
}

/// What one advance counts: a full pass over the training triples or a
/// single mini-batch.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum ClearUnit {
    #[default]
    Pass,
    Batch,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CacheEvent {
    Cleared,
    Kept,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NodeStateCache {
    states: NodeStates,
    initial: Embeddings,
    step: u64,
    budget: LayerBudget,
}

impl NodeStateCache {
    pub fn new(initial: Embeddings, budget: LayerBudget) -> Self {
        Self {
            states: initial.clone(),
            initial,
            step: 0,
            budget,
        }
    }

    /// Restores a cache from saved states (e.g. a snapshot file).
    pub fn with_states(initial: Embeddings, states: NodeStates, budget: LayerBudget, step: u64) -> Result<Self> {
        if states.rows() != initial.rows() || states.dim() != initial.dim() {
            return Err(Error::DimensionMismatch {
                expected: initial.rows() * initial.dim(),
                got: states.rows() * states.dim(),
            });
        }
        Ok(Self {
            states,
            initial,
            step,
            budget,
        })
    }

    pub fn states(&self) -> &NodeStates {
        &self.states
    }

    pub fn initial(&self) -> &Embeddings {
        &self.initial
    }

    pub fn step(&self) -> u64 {
        self.step
    }

    pub fn budget(&self) -> LayerBudget {
        self.budget
    }

    fn check_ids(&self, ids: &[EntityId]) -> Result<()> {
        let n = self.states.rows();
        if let Some(&id) = ids.iter().find(|&&id| id >= n) {
            return Err(Error::OutOfRange {
                kind: "entity",
                id,
                len: n,
            });
        }
        Ok(())
    }

    pub fn pull(&self, ids: &[EntityId]) -> Result<Embeddings> {
        self.check_ids(ids)?;
        let mut out = Embeddings::zeros(ids.len(), self.states.dim());
        for (k, &id) in ids.iter().enumerate() {
            out.row_mut(k).copy_from_slice(self.states.row(id));
        }
        Ok(out)
    }

    /// Replaces the rows of `ids` with the rows of `rows`, in order.
    pub fn push(&mut self, ids: &[EntityId], rows: &Embeddings) -> Result<()> {
        self.check_ids(ids)?;
        if rows.rows() != ids.len() {
            return Err(Error::DimensionMismatch {
                expected: ids.len(),
                got: rows.rows(),
            });
        }
        if ids.is_empty() {
            return Ok(());
        }
        rows.check_dim(self.states.dim())?;
        if !rows.is_finite() {
            return Err(Error::NonFinite("pushed node states"));
        }
        let mut seen = BTreeSet::new();
        if let Some(&dup) = ids.iter().find(|&&id| !seen.insert(id)) {
            return Err(Error::DuplicateId(dup));
        }
        for (k, &id) in ids.iter().enumerate() {
            self.states.row_mut(id).copy_from_slice(rows.row(k));
        }
        Ok(())
    }

    /// Counts one completed unit; resets the states to X when the count
    /// reaches a multiple of a finite budget.
    pub fn advance_and_maybe_clear(&mut self) -> CacheEvent {
        self.step += 1;
        match self.budget {
            LayerBudget::Finite(l) if self.step.is_multiple_of(l.get() as u64) => {
                self.states.as_mut_slice().copy_from_slice(self.initial.as_slice());
                CacheEvent::Cleared
            }
            _ => CacheEvent::Kept,
        }
    }

    pub fn into_states(self) -> NodeStates {
        self.states
    }
}

/// Ids whose rows differ between two state matrices of the same shape.
pub fn changed_rows(a: &NodeStates, b: &NodeStates) -> Vec<EntityId> {
    (0..a.rows().min(b.rows())).filter(|&i| a.row(i) != b.row(i)).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn features() -> Embeddings {
        Embeddings::from_rows(&[[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]]).unwrap()
    }

    #[test]
    fn fresh_cache_returns_features() {
        let cache = NodeStateCache::new(features(), LayerBudget::Infinite);
        assert_eq!(cache.pull(&[2]).unwrap().row(0), &[5.0, 6.0]);
        assert_eq!(&cache.pull(&[0, 1, 2]).unwrap(), cache.states());
        assert!(cache.pull(&[3]).is_err());
    }

    #[test]
    fn push_pull_round_trip() {
        let mut cache = NodeStateCache::new(features(), LayerBudget::Infinite);
        let rows = Embeddings::from_rows(&[[9.0, 9.5]]).unwrap();
        cache.push(&[1], &rows).unwrap();
        assert_eq!(cache.pull(&[1]).unwrap(), rows);
        assert_eq!(cache.step(), 0);

        let before = cache.clone();
        cache.push(&[], &Embeddings::zeros(0, 2)).unwrap();
        assert_eq!(cache, before);

        let bad = Embeddings::from_rows(&[[1.0, 2.0, 3.0]]).unwrap();
        assert!(matches!(cache.push(&[0], &bad), Err(Error::DimensionMismatch { .. })));
        let two = Embeddings::from_rows(&[[1.0, 2.0], [3.0, 4.0]]).unwrap();
        assert_eq!(cache.push(&[0, 0], &two), Err(Error::DuplicateId(0)));
    }

    #[test]
    fn budget_three_clears_on_third_call() {
        let mut cache = NodeStateCache::new(features(), LayerBudget::finite(3).unwrap());
        cache.push(&[0], &Embeddings::from_rows(&[[0.0, 0.0]]).unwrap()).unwrap();
        assert_eq!(cache.advance_and_maybe_clear(), CacheEvent::Kept);
        assert_eq!(cache.advance_and_maybe_clear(), CacheEvent::Kept);
        assert_ne!(cache.states(), &features());
        assert_eq!(cache.advance_and_maybe_clear(), CacheEvent::Cleared);
        assert_eq!(cache.states(), &features());
        assert_eq!(cache.step(), 3);
    }

    #[test]
    fn infinite_budget_never_clears() {
        let mut cache = NodeStateCache::new(features(), LayerBudget::Infinite);
        for _ in 0..10_000 {
            assert_eq!(cache.advance_and_maybe_clear(), CacheEvent::Kept);
        }
    }

    #[test]
    fn budget_one_always_clears() {
        let mut cache = NodeStateCache::new(features(), LayerBudget::finite(1).unwrap());
        for _ in 0..5 {
            assert_eq!(cache.advance_and_maybe_clear(), CacheEvent::Cleared);
        }
        assert_eq!(LayerBudget::finite(0), None);
        assert_eq!(changed_rows(&features(), &features()), vec![]);
    }
}
