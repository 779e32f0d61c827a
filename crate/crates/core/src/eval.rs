//! Link-prediction ranking: full and partial protocols, filtering, MRR and
//! Hits@K.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng;

use crate::graph::Triple;
use crate::matrix::{NodeStates, RelationTable};
use crate::rng::indexed_stream;
use crate::scoring::{score_all_unchecked, CandidateSet, ScoreKind};
use crate::{EntityId, Error, RelationId, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RankMode {
    /// Rank the gold against every entity.
    Full,
    /// Rank the gold against `negatives` uniformly drawn other entities.
    Partial { negatives: usize },
}

/// Ranking protocol. Ties count half (mean-rank rule).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Protocol {
    pub mode: RankMode,
    pub filtered: bool,
}

impl Default for Protocol {
    fn default() -> Self {
        Self {
            mode: RankMode::Full,
            filtered: true,
        }
    }
}

impl Protocol {
    pub fn partial(negatives: usize) -> Self {
        Self {
            mode: RankMode::Partial { negatives },
            filtered: true,
        }
    }

    pub fn label(&self) -> String {
        match self.mode {
            RankMode::Full => "full".into(),
            RankMode::Partial { negatives } => format!("partial-{negatives}"),
        }
    }
}

/// Known-true objects per `(subject, relation)`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FilterIndex {
    known: BTreeMap<(EntityId, RelationId), BTreeSet<EntityId>>,
}

impl FilterIndex {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, t: Triple) {
        self.known.entry((t.subject, t.relation)).or_default().insert(t.object);
    }

    /// Inserts each triple and, when `reciprocal_offset` is set, its mirror
    /// `(o, r + offset, s)`.
    pub fn extend<'a, I: IntoIterator<Item = &'a Triple>>(&mut self, triples: I, reciprocal_offset: Option<usize>) {
        for &t in triples {
            self.insert(t);
            if let Some(off) = reciprocal_offset {
                self.insert(Triple::new(t.object, t.relation + off, t.subject));
            }
        }
    }

    pub fn contains(&self, subject: EntityId, relation: RelationId, object: EntityId) -> bool {
        self.known
            .get(&(subject, relation))
            .is_some_and(|s| s.contains(&object))
    }
}

/// `(subject, relation, ?)` with the expected answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Query {
    pub subject: EntityId,
    pub relation: RelationId,
    pub gold: EntityId,
}

/// Tail queries for every triple, plus head queries phrased through the
/// reciprocal relation `r + offset` when `reciprocal_offset` is set.
pub fn queries(triples: &[Triple], reciprocal_offset: Option<usize>) -> Vec<Query> {
    let mut out = Vec::with_capacity(triples.len() * 2);
    for t in triples {
        out.push(Query {
            subject: t.subject,
            relation: t.relation,
            gold: t.object,
        });
        if let Some(off) = reciprocal_offset {
            out.push(Query {
                subject: t.object,
                relation: t.relation + off,
                gold: t.subject,
            });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Metrics {
    pub mrr: f64,
    pub hits1: f64,
    pub hits3: f64,
    pub hits10: f64,
    pub n_queries: usize,
}

/// Rank of `query.gold`: 1 + #(higher scores) + #(other ties)/2 over the
/// protocol's candidate pool.
pub fn rank_query<R: Rng + ?Sized>(
    kind: ScoreKind,
    h: &NodeStates,
    psi: &RelationTable,
    query: Query,
    protocol: &Protocol,
    filter: &FilterIndex,
    rng: &mut R,
) -> Result<f64> {
    let n = h.rows();
    for (kind_name, id, len) in [
        ("entity", query.subject, n),
        ("entity", query.gold, n),
        ("relation", query.relation, psi.rows()),
    ] {
        if id >= len {
            return Err(Error::OutOfRange { kind: kind_name, id, len });
        }
    }
    let mut pool: Vec<EntityId> = match protocol.mode {
        RankMode::Full => (0..n).collect(),
        RankMode::Partial { negatives } => {
            let k = negatives.min(n - 1);
            let mut ids: Vec<EntityId> = rand::seq::index::sample(rng, n - 1, k)
                .into_iter()
                .map(|i| if i >= query.gold { i + 1 } else { i })
                .collect();
            ids.push(query.gold);
            ids
        }
    };
    if protocol.filtered {
        pool.retain(|&u| u == query.gold || !filter.contains(query.subject, query.relation, u));
    }
    let cands = CandidateSet::new(pool)?;
    let gold_pos = cands.position(query.gold).ok_or(Error::GoldNotCandidate(query.gold))?;
    let scores = score_all_unchecked(kind, h.row(query.subject), psi.row(query.relation), h, &cands);
    let gold = scores[gold_pos];
    if !gold.is_finite() {
        return Err(Error::NonFinite("scores"));
    }
    let (mut higher, mut ties) = (0usize, 0usize);
    for (i, &s) in scores.iter().enumerate() {
        if i == gold_pos {
            continue;
        }
        if s > gold {
            higher += 1;
        } else if s == gold {
            ties += 1;
        }
    }
    Ok(1.0 + higher as f64 + ties as f64 / 2.0)
}

pub fn metrics_from_ranks(ranks: &[f64]) -> Result<Metrics> {
    if ranks.is_empty() {
        return Err(Error::EmptyRanks);
    }
    if let Some(&bad) = ranks.iter().find(|&&r| !(r >= 1.0)) {
        return Err(Error::InvalidRank(bad));
    }
    let n = ranks.len() as f64;
    let hits = |k: f64| ranks.iter().filter(|&&r| r <= k).count() as f64 / n;
    Ok(Metrics {
        mrr: ranks.iter().map(|r| 1.0 / r).sum::<f64>() / n,
        hits1: hits(1.0),
        hits3: hits(3.0),
        hits10: hits(10.0),
        n_queries: ranks.len(),
    })
}

/// Ranks every query generated from `triples` and aggregates. Query `i`
/// draws its partial-ranking negatives from a stream derived from
/// `(seed, i)`, so results do not depend on evaluation order.
pub fn evaluate(
    kind: ScoreKind,
    h: &NodeStates,
    psi: &RelationTable,
    triples: &[Triple],
    reciprocal_offset: Option<usize>,
    protocol: &Protocol,
    filter: &FilterIndex,
    seed: u64,
) -> Result<Metrics> {
    let qs = queries(triples, reciprocal_offset);
    let rank = |(i, q): (usize, &Query)| {
        let mut rng = indexed_stream(seed, "eval-query", i as u64);
        rank_query(kind, h, psi, *q, protocol, filter, &mut rng)
    };
    #[cfg(feature = "parallel")]
    let ranks: Result<Vec<f64>> = {
        use rayon::prelude::*;
        qs.par_iter().enumerate().map(rank).collect()
    };
    #[cfg(not(feature = "parallel"))]
    let ranks: Result<Vec<f64>> = qs.iter().enumerate().map(rank).collect();
    metrics_from_ranks(&ranks?)
}
