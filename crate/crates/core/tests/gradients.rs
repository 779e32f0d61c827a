use proptest::prelude::*;
use rand::Rng;
use rfgn_core::dynamics::{batch_gradient_sum, n3_gradient, DynamicsConfig, GradConvention, Scope, StepSizes};
use rfgn_core::graph::Triple;
use rfgn_core::rng::indexed_stream;
use rfgn_core::scoring::{grad_score, score, softmax_nll, CandidateSet, ScoreKind, Slot};
use rfgn_core::train::batch_loss;
use rfgn_core::{Embeddings, NodeStates, RelationTable};

const STEP: f64 = 1e-5;
const TOL: f64 = 1e-6;

fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    let diff: f64 = a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt();
    let scale: f64 = a.iter().chain(b).map(|x| x * x).sum::<f64>().sqrt();
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

fn central<F: Fn(&[f64]) -> f64>(x: &[f64], f: F) -> Vec<f64> {
    let mut y = x.to_vec();
    (0..x.len())
        .map(|i| {
            y[i] = x[i] + STEP;
            let up = f(&y);
            y[i] = x[i] - STEP;
            let down = f(&y);
            y[i] = x[i];
            (up - down) / (2.0 * STEP)
        })
        .collect()
}

fn n3_value(row: &[f64], lambda: f64) -> f64 {
    row.iter().map(|x| lambda * x.abs().powi(3) / 3.0).sum()
}

fn vec_strategy(len: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(-2.0..2.0f64, len)
}

fn slot_case() -> impl Strategy<Value = (ScoreKind, Vec<f64>, Vec<f64>, Vec<f64>)> {
    (prop_oneof![Just(ScoreKind::DistMult), Just(ScoreKind::ComplEx)], 1usize..5).prop_flat_map(|(kind, half)| {
        let dim = 2 * half;
        (Just(kind), vec_strategy(dim), vec_strategy(dim), vec_strategy(dim))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(300))]

    #[test]
    fn slot_gradients_match_finite_differences((kind, hv, rel, hw) in slot_case()) {
        let fd_sub = central(&hv, |x| score(kind, x, &rel, &hw).unwrap());
        let fd_obj = central(&hw, |x| score(kind, &hv, &rel, x).unwrap());
        let fd_rel = central(&rel, |x| score(kind, &hv, x, &hw).unwrap());
        for (slot, fd) in [(Slot::Subject, fd_sub), (Slot::Object, fd_obj), (Slot::Relation, fd_rel)] {
            let an = grad_score(kind, slot, &hv, &rel, &hw).unwrap();
            prop_assert!(rel_err(&an, &fd) <= TOL, "{kind:?} {slot:?}: {an:?} vs {fd:?}");
        }
    }

    #[test]
    fn n3_gradient_matches_finite_differences(row in vec_strategy(6), lambda in 0.0..1.0f64) {
        let fd = central(&row, |x| n3_value(x, lambda));
        prop_assert!(rel_err(&n3_gradient(&row, lambda), &fd) <= TOL);
    }

    #[test]
    fn softmax_is_shift_invariant(scores in proptest::collection::vec(-20.0..20.0f64, 1..10), c in -100.0..100.0f64) {
        let gold = scores.len() / 2;
        let (p, l) = softmax_nll(&scores, gold).unwrap();
        let shifted: Vec<f64> = scores.iter().map(|s| s + c).collect();
        let (q, m) = softmax_nll(&shifted, gold).unwrap();
        for (a, b) in p.iter().zip(&q) {
            prop_assert!((a - b).abs() <= 1e-12);
        }
        prop_assert!((l - m).abs() <= 1e-9);
        prop_assert!((p.iter().sum::<f64>() - 1.0).abs() <= 1e-12);
    }
}

#[test]
fn complex_with_zero_imaginary_parts_is_distmult() {
    let mut rng = indexed_stream(11, "complex-real", 0);
    for _ in 0..100 {
        let d = 3;
        let mut pad = |_: ()| -> (Vec<f64>, Vec<f64>) {
            let re: Vec<f64> = (0..d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut full = re.clone();
            full.extend(std::iter::repeat_n(0.0, d));
            (re, full)
        };
        let (v, vc) = pad(());
        let (r, rc) = pad(());
        let (w, wc) = pad(());
        let a = score(ScoreKind::DistMult, &v, &r, &w).unwrap();
        let b = score(ScoreKind::ComplEx, &vc, &rc, &wc).unwrap();
        assert!((a - b).abs() <= 1e-12);
    }
}

struct Problem {
    scope: Scope,
    phi: NodeStates,
    psi: RelationTable,
    kind: ScoreKind,
}

fn problem(seed: u64) -> Problem {
    let mut rng = indexed_stream(seed, "fd-problem", 0);
    let kind = if seed.is_multiple_of(2) { ScoreKind::DistMult } else { ScoreKind::ComplEx };
    let (ne, nr, dim) = (6, 2, 4);
    let mut triples = Vec::new();
    while triples.len() < 5 {
        let (s, o) = (rng.random_range(0..ne), rng.random_range(0..ne));
        let t = Triple::new(s, rng.random_range(0..nr), o);
        if s != o && !triples.contains(&t) {
            triples.push(t);
        }
    }
    let cands = CandidateSet::new(vec![0, 1, 2, 3, 4, 5]).unwrap();
    let mut matrix = |rows: usize| {
        Embeddings::from_vec(rows, dim, (0..rows * dim).map(|_| rng.random_range(-1.0..1.0)).collect()).unwrap()
    };
    Problem {
        phi: matrix(ne),
        psi: matrix(nr),
        scope: Scope::new(triples, cands).unwrap(),
        kind,
    }
}

/// Σ_t −log P_t plus λ/3 Σ|x|³ per endpoint occurrence.
fn total_loss(p: &Problem, phi: &NodeStates, lambda: f64) -> f64 {
    let mut l = batch_loss(&p.scope, phi, &p.psi, p.kind).unwrap() * p.scope.len() as f64;
    for t in p.scope.triples() {
        l += n3_value(phi.row(t.subject), lambda) + n3_value(phi.row(t.object), lambda);
    }
    l
}

fn dyn_cfg(kind: ScoreKind, lambda: f64, convention: GradConvention) -> DynamicsConfig {
    DynamicsConfig {
        kind,
        sizes: StepSizes::for_batch(0.5, 5),
        lambda,
        convention,
    }
}

#[test]
fn strict_gradient_is_the_loss_gradient() {
    for seed in 0..20 {
        let p = problem(seed);
        let lambda = 0.05;
        let an = batch_gradient_sum(&p.scope, &p.phi, &p.psi, &dyn_cfg(p.kind, lambda, GradConvention::StrictAutograd))
            .unwrap();
        let fd = central(p.phi.as_slice(), |x| {
            let phi = Embeddings::from_vec(p.phi.rows(), p.phi.dim(), x.to_vec()).unwrap();
            total_loss(&p, &phi, lambda)
        });
        assert!(rel_err(an.as_slice(), &fd) <= TOL, "seed {seed}");
    }
}

/// The default convention drops, for each triple, the subject's own
/// object-slot candidate term P_t(s)·∇obj Γ(s, r, s).
#[test]
fn default_convention_detaches_the_subject_as_candidate() {
    for seed in 0..20 {
        let p = problem(seed);
        let strict = batch_gradient_sum(&p.scope, &p.phi, &p.psi, &dyn_cfg(p.kind, 0.0, GradConvention::StrictAutograd))
            .unwrap();
        let detached =
            batch_gradient_sum(&p.scope, &p.phi, &p.psi, &dyn_cfg(p.kind, 0.0, GradConvention::PaperSubjectSlot))
                .unwrap();
        let mut expected = strict.clone();
        for t in p.scope.triples() {
            let hs = p.phi.row(t.subject);
            let rel = p.psi.row(t.relation);
            let ids = p.scope.candidates().ids();
            let scores: Vec<f64> = ids.iter().map(|&u| score(p.kind, hs, rel, p.phi.row(u)).unwrap()).collect();
            let pos = p.scope.candidates().position(t.subject).unwrap();
            let (probs, _) = softmax_nll(&scores, pos).unwrap();
            let g = grad_score(p.kind, Slot::Object, hs, rel, hs).unwrap();
            for (e, gi) in expected.row_mut(t.subject).iter_mut().zip(&g) {
                *e -= probs[pos] * gi;
            }
        }
        assert!(expected.max_abs_diff(&detached) <= 1e-12, "seed {seed}");
        assert!(strict.max_abs_diff(&detached) > 0.0);
    }
}
