//! Exhaustive ranking: the gold's expected position over every ordering of
//! the pool that sorts scores in descending order.

/// Every permutation of `0..n`, via Heap's algorithm.
fn permutations(n: usize) -> Vec<Vec<usize>> {
    let mut a: Vec<usize> = (0..n).collect();
    let mut c = vec![0; n];
    let mut out = vec![a.clone()];
    let mut i = 0;
    while i < n {
        if c[i] < i {
            if i % 2 == 0 {
                a.swap(0, i);
            } else {
                a.swap(c[i], i);
            }
            out.push(a.clone());
            c[i] += 1;
            i = 0;
        } else {
            c[i] = 0;
            i += 1;
        }
    }
    out
}

/// Mean 1-based position of `pool[gold]` over all score-sorted orderings.
pub fn brute_force_rank(scores: &[f64], gold: usize) -> f64 {
    let (mut total, mut count) = (0usize, 0usize);
    for perm in permutations(scores.len()) {
        if perm.windows(2).all(|w| scores[w[0]] >= scores[w[1]]) {
            total += perm.iter().position(|&i| i == gold).unwrap() + 1;
            count += 1;
        }
    }
    total as f64 / count as f64
}

pub fn brute_force_mrr(ranks: &[f64]) -> f64 {
    ranks.iter().map(|r| 1.0 / r).sum::<f64>() / ranks.len() as f64
}

pub fn brute_force_hits(ranks: &[f64], k: f64) -> f64 {
    ranks.iter().filter(|&&r| r <= k).count() as f64 / ranks.len() as f64
}

use rand::Rng;
use rfgn_core::eval::{metrics_from_ranks, rank_query, FilterIndex, Protocol, Query, RankMode};
use rfgn_core::graph::Triple;
use rfgn_core::rng::indexed_stream;
use rfgn_core::scoring::ScoreKind;
use rfgn_core::{Embeddings, NodeStates, RelationTable};

fn distmult(h: &NodeStates, psi: &RelationTable, s: usize, r: usize, o: usize) -> f64 {
    let mut total = 0.0;
    for k in 0..h.dim() {
        total += h.row(s)[k] * psi.row(r)[k] * h.row(o)[k];
    }
    total
}

/// Checks rank_query and metrics_from_ranks against exhaustive enumeration
/// on `draws` random graphs (|E| ≤ 8) with small-integer states, so ties are
/// common. Alternates raw and filtered full ranking. Returns the number of
/// queries compared, or a description of the first mismatch.
pub fn oracle_sweep(seed: u64, draws: usize) -> Result<usize, String> {
    let mut compared = 0;
    for d in 0..draws {
        let mut rng = indexed_stream(seed, "ranking-oracle", d as u64);
        let ne = rng.random_range(2..=8);
        let nr = rng.random_range(1..=3);
        let dim = rng.random_range(1..=3);
        let mut triples = Vec::new();
        for _ in 0..rng.random_range(1..=12) {
            let (s, o) = (rng.random_range(0..ne), rng.random_range(0..ne));
            if s != o {
                triples.push(Triple::new(s, rng.random_range(0..nr), o));
            }
        }
        if triples.is_empty() {
            triples.push(Triple::new(0, 0, 1));
        }
        let mut small = |rows: usize| {
            let data = (0..rows * dim).map(|_| rng.random_range(-2i32..=2) as f64).collect();
            Embeddings::from_vec(rows, dim, data).unwrap()
        };
        let h = small(ne);
        let psi = small(nr);
        let filtered = d % 2 == 1;
        let mut filter = FilterIndex::new();
        filter.extend(&triples, None);
        let protocol = Protocol {
            mode: RankMode::Full,
            filtered,
        };

        let (mut ours, mut theirs) = (Vec::new(), Vec::new());
        for t in &triples {
            let pool: Vec<usize> = (0..ne)
                .filter(|&u| !filtered || u == t.object || !triples.contains(&Triple::new(t.subject, t.relation, u)))
                .collect();
            let scores: Vec<f64> = pool.iter().map(|&u| distmult(&h, &psi, t.subject, t.relation, u)).collect();
            let gold = pool.iter().position(|&u| u == t.object).unwrap();
            let expected = brute_force_rank(&scores, gold);
            let query = Query {
                subject: t.subject,
                relation: t.relation,
                gold: t.object,
            };
            let got = rank_query(ScoreKind::DistMult, &h, &psi, query, &protocol, &filter, &mut rng)
                .map_err(|e| e.to_string())?;
            if got != expected {
                return Err(format!("draw {d}, triple {t:?}: rank {got} vs brute force {expected}"));
            }
            ours.push(got);
            theirs.push(expected);
        }
        let m = metrics_from_ranks(&ours).map_err(|e| e.to_string())?;
        let want = (
            brute_force_mrr(&theirs),
            brute_force_hits(&theirs, 1.0),
            brute_force_hits(&theirs, 3.0),
            brute_force_hits(&theirs, 10.0),
        );
        if (m.mrr, m.hits1, m.hits3, m.hits10) != want || m.n_queries != theirs.len() {
            return Err(format!("draw {d}: metrics {m:?} vs brute force {want:?}"));
        }
        compared += ours.len();
    }
    Ok(compared)
}
