//! Multi-relational graphs: vocabularies, triple sets, neighbourhood indices,
//! reciprocal augmentation, node features and dataset bundles.
//!
//! Parsing works on text that has already been read; the `rfgn` crate does the
//! file IO.

use alloc::collections::{BTreeMap, BTreeSet};
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::matrix::Embeddings;
use crate::{rng, EntityId, Error, RelationId, Result};

/// Suffix appended to a relation label to name its reciprocal.
pub const INVERSE_SUFFIX: &str = "_inv";

/// Ordered label list with a reverse index. Ids are positions.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Labels {
    labels: Vec<String>,
    index: BTreeMap<String, usize>,
}

impl Labels {
    pub fn from_labels<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let mut out = Self::default();
        for label in labels {
            let label = label.into();
            if out.index.contains_key(&label) {
                return Err(Error::InvalidConfig(format!("duplicate label `{label}`")));
            }
            out.intern(&label);
        }
        Ok(out)
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn id(&self, label: &str) -> Option<usize> {
        self.index.get(label).copied()
    }

    pub fn label(&self, id: usize) -> Option<&str> {
        self.labels.get(id).map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.labels.iter().map(String::as_str)
    }

    fn intern(&mut self, label: &str) -> usize {
        if let Some(&id) = self.index.get(label) {
            return id;
        }
        let id = self.labels.len();
        self.labels.push(label.to_string());
        self.index.insert(label.to_string(), id);
        id
    }
}

/// Entity and relation label↔id bijections, ids in first-seen order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Vocabulary {
    pub entities: Labels,
    pub relations: Labels,
}

impl Vocabulary {
    pub fn new() -> Self {
        Self::default()
    }

    /// Vocabulary with a given relation list and no entities; the starting
    /// point for loading an inductive test graph.
    pub fn with_relations(relations: Labels) -> Self {
        Self {
            entities: Labels::default(),
            relations,
        }
    }

    pub fn num_entities(&self) -> usize {
        self.entities.len()
    }

    pub fn num_relations(&self) -> usize {
        self.relations.len()
    }
}

/// Which halves of a vocabulary may grow while parsing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VocabPolicy {
    pub freeze_entities: bool,
    pub freeze_relations: bool,
}

impl VocabPolicy {
    pub const GROW: Self = Self {
        freeze_entities: false,
        freeze_relations: false,
    };
    pub const FROZEN: Self = Self {
        freeze_entities: true,
        freeze_relations: true,
    };
    /// New entities, known relations: how inductive test graphs are read.
    pub const FROZEN_RELATIONS: Self = Self {
        freeze_entities: false,
        freeze_relations: true,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Triple {
    pub subject: EntityId,
    pub relation: RelationId,
    pub object: EntityId,
}

impl Triple {
    pub const fn new(subject: EntityId, relation: RelationId, object: EntityId) -> Self {
        Self {
            subject,
            relation,
            object,
        }
    }

    pub fn contains(&self, v: EntityId) -> bool {
        self.subject == v || self.object == v
    }
}

/// Parses tab-separated `subject relation object` lines into triples,
/// extending `vocab` as `policy` allows. Blank lines are skipped; CRLF is
/// accepted. Duplicates are kept here; callers deduplicate.
pub fn parse_triple_lines(
    text: &str,
    vocab: &mut Vocabulary,
    policy: VocabPolicy,
) -> Result<Vec<Triple>> {
    let mut triples = Vec::new();
    for (i, raw) in text.split('\n').enumerate() {
        let line_no = i + 1;
        let line = raw.strip_suffix('\r').unwrap_or(raw);
        if line.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = line.split('\t').collect();
        if fields.len() != 3 {
            return Err(Error::MalformedLine {
                line: line_no,
                reason: format!("expected 3 tab-separated fields, found {}", fields.len()),
            });
        }
        let (s, r, o) = (fields[0], fields[1], fields[2]);
        if s.is_empty() || r.is_empty() || o.is_empty() {
            return Err(Error::MalformedLine {
                line: line_no,
                reason: "empty field".into(),
            });
        }
        if s == o {
            return Err(Error::SelfLoop {
                line: line_no,
                label: s.to_string(),
            });
        }
        let lookup = |labels: &mut Labels, label: &str, frozen: bool, kind| {
            if frozen {
                labels.id(label).ok_or_else(|| Error::UnknownLabel {
                    line: line_no,
                    kind,
                    label: label.to_string(),
                })
            } else {
                Ok(labels.intern(label))
            }
        };
        let subject = lookup(&mut vocab.entities, s, policy.freeze_entities, "entity")?;
        let relation = lookup(&mut vocab.relations, r, policy.freeze_relations, "relation")?;
        let object = lookup(&mut vocab.entities, o, policy.freeze_entities, "entity")?;
        triples.push(Triple::new(subject, relation, object));
    }
    Ok(triples)
}

fn dedup_in_order(triples: Vec<Triple>) -> Vec<Triple> {
    let mut seen = BTreeSet::new();
    triples.into_iter().filter(|t| seen.insert(*t)).collect()
}

/// A triple set with its vocabulary and per-entity neighbourhood indices.
#[derive(Debug, Clone, PartialEq)]
pub struct KnowledgeGraph {
    vocab: Vocabulary,
    triples: Vec<Triple>,
    /// N¹₊[v]: `(relation, object)` for every `(v, relation, object)`.
    out_nbrs: Vec<Vec<(RelationId, EntityId)>>,
    /// N¹₋[v]: `(relation, subject)` for every `(subject, relation, v)`.
    in_nbrs: Vec<Vec<(RelationId, EntityId)>>,
    reciprocal: bool,
    base_relations: usize,
}

impl KnowledgeGraph {
    /// Parses a triple file into a fresh vocabulary.
    pub fn parse(text: &str) -> Result<Self> {
        Self::parse_with(text, Vocabulary::new(), VocabPolicy::GROW)
    }

    /// Parses a triple file, starting from `vocab` and growing it per `policy`.
    pub fn parse_with(text: &str, mut vocab: Vocabulary, policy: VocabPolicy) -> Result<Self> {
        let triples = parse_triple_lines(text, &mut vocab, policy)?;
        Self::from_parts(vocab, dedup_in_order(triples))
    }

    /// Builds a graph over `num_entities` entities and `num_relations`
    /// relations with generated labels `e<i>` / `r<i>`.
    pub fn from_ids(num_entities: usize, num_relations: usize, triples: Vec<Triple>) -> Result<Self> {
        let vocab = Vocabulary {
            entities: Labels::from_labels((0..num_entities).map(|i| format!("e{i}")))?,
            relations: Labels::from_labels((0..num_relations).map(|i| format!("r{i}")))?,
        };
        Self::from_parts(vocab, dedup_in_order(triples))
    }

    fn from_parts(vocab: Vocabulary, triples: Vec<Triple>) -> Result<Self> {
        let n = vocab.num_entities();
        let nr = vocab.num_relations();
        let mut out_nbrs = alloc::vec![Vec::new(); n];
        let mut in_nbrs = alloc::vec![Vec::new(); n];
        for t in &triples {
            for (kind, id, len) in [
                ("entity", t.subject, n),
                ("entity", t.object, n),
                ("relation", t.relation, nr),
            ] {
                if id >= len {
                    return Err(Error::OutOfRange { kind, id, len });
                }
            }
            if t.subject == t.object {
                return Err(Error::SelfLoopInScope(t.subject));
            }
            out_nbrs[t.subject].push((t.relation, t.object));
            in_nbrs[t.object].push((t.relation, t.subject));
        }
        Ok(Self {
            vocab,
            triples,
            out_nbrs,
            in_nbrs,
            reciprocal: false,
            base_relations: nr,
        })
    }

    /// Adds `(w, r + |R|, v)` for every `(v, r, w)`; relation labels get the
    /// `_inv` suffix.
    pub fn add_reciprocals(self) -> Result<Self> {
        if self.reciprocal {
            return Err(Error::ReciprocalsAlreadyAdded);
        }
        let nr = self.vocab.num_relations();
        let mut vocab = self.vocab;
        let inverse: Vec<String> = vocab
            .relations
            .iter()
            .map(|l| format!("{l}{INVERSE_SUFFIX}"))
            .collect();
        for l in &inverse {
            if vocab.relations.id(l).is_some() {
                return Err(Error::InvalidConfig(format!(
                    "relation `{l}` already exists; cannot add reciprocals"
                )));
            }
            vocab.relations.intern(l);
        }
        let mut triples = self.triples;
        let extra: Vec<Triple> = triples
            .iter()
            .map(|t| Triple::new(t.object, t.relation + nr, t.subject))
            .collect();
        triples.extend(extra);
        let mut g = Self::from_parts(vocab, triples)?;
        g.reciprocal = true;
        g.base_relations = nr;
        Ok(g)
    }

    pub fn vocab(&self) -> &Vocabulary {
        &self.vocab
    }

    pub fn triples(&self) -> &[Triple] {
        &self.triples
    }

    pub fn num_entities(&self) -> usize {
        self.vocab.num_entities()
    }

    pub fn num_relations(&self) -> usize {
        self.vocab.num_relations()
    }

    pub fn is_reciprocal(&self) -> bool {
        self.reciprocal
    }

    /// Relation count before reciprocal augmentation.
    pub fn base_relations(&self) -> usize {
        self.base_relations
    }

    /// Relation labels before augmentation; what a test graph must share.
    pub fn base_relation_labels(&self) -> Labels {
        Labels::from_labels(self.vocab.relations.iter().take(self.base_relations))
            .expect("labels are already unique")
    }

    /// `(N¹₊[v], N¹₋[v])`.
    pub fn neighborhoods(
        &self,
        v: EntityId,
    ) -> Result<(&[(RelationId, EntityId)], &[(RelationId, EntityId)])> {
        if v >= self.num_entities() {
            return Err(Error::OutOfRange {
                kind: "entity",
                id: v,
                len: self.num_entities(),
            });
        }
        Ok((&self.out_nbrs[v], &self.in_nbrs[v]))
    }

    /// Triples as tab-separated text, in stored order.
    pub fn to_tsv(&self) -> String {
        let mut out = String::new();
        for t in &self.triples {
            let s = self.vocab.entities.label(t.subject).unwrap_or_default();
            let r = self.vocab.relations.label(t.relation).unwrap_or_default();
            let o = self.vocab.entities.label(t.object).unwrap_or_default();
            out.push_str(s);
            out.push('\t');
            out.push_str(r);
            out.push('\t');
            out.push_str(o);
            out.push('\n');
        }
        out
    }

    /// Parses an evaluation split against this graph's frozen vocabulary.
    pub fn parse_split(&self, text: &str) -> Result<Vec<Triple>> {
        let mut vocab = self.vocab.clone();
        let triples = parse_triple_lines(text, &mut vocab, VocabPolicy::FROZEN)?;
        Ok(dedup_in_order(triples))
    }
}

/// Where a feature matrix came from.
#[derive(Debug, Clone, PartialEq)]
pub enum FeatureSource {
    RandomFrozen { seed: u64 },
    FileLoaded { origin: String, fill_seed: Option<u64> },
}

/// Input node features X, one row per entity in vocabulary order.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFeatures {
    pub matrix: Embeddings,
    pub source: FeatureSource,
}

/// Standard deviation used for random node features and relation tables.
pub fn init_std(dim: usize) -> f64 {
    1.0 / crate::math::sqrt(dim as f64)
}

impl NodeFeatures {
    /// Frozen `Normal(0, 1/√K)` features.
    pub fn random(num_entities: usize, dim: usize, seed: u64) -> Self {
        Self::random_scaled(num_entities, dim, seed, init_std(dim))
    }

    pub fn random_scaled(num_entities: usize, dim: usize, seed: u64, std: f64) -> Self {
        let mut rng = rng::stream(seed, "features");
        Self {
            matrix: Embeddings::random_normal(num_entities, dim, std, &mut rng),
            source: FeatureSource::RandomFrozen { seed },
        }
    }

    /// Parses header-free `label,f1,...,fK` lines. Entities missing from the
    /// text are an error unless `fill_seed` is given, in which case they get
    /// frozen random rows from that seed.
    pub fn parse(
        text: &str,
        vocab: &Vocabulary,
        dim: usize,
        origin: &str,
        fill_seed: Option<u64>,
    ) -> Result<Self> {
        let n = vocab.num_entities();
        let mut matrix = Embeddings::zeros(n, dim);
        let mut seen = alloc::vec![false; n];
        for (i, raw) in text.split('\n').enumerate() {
            let line_no = i + 1;
            let line = raw.strip_suffix('\r').unwrap_or(raw);
            if line.trim().is_empty() {
                continue;
            }
            let mut fields = line.split(',');
            let label = fields.next().unwrap_or_default().trim();
            let id = vocab.entities.id(label).ok_or_else(|| Error::UnknownLabel {
                line: line_no,
                kind: "entity",
                label: label.to_string(),
            })?;
            let values = fields
                .map(|f| {
                    f.trim().parse::<f64>().map_err(|e| Error::MalformedLine {
                        line: line_no,
                        reason: format!("bad float `{f}`: {e}"),
                    })
                })
                .collect::<Result<Vec<f64>>>()?;
            if values.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: values.len(),
                });
            }
            if values.iter().any(|x| !x.is_finite()) {
                return Err(Error::NonFinite("feature file"));
            }
            matrix.row_mut(id).copy_from_slice(&values);
            seen[id] = true;
        }
        if let Some(missing) = seen.iter().position(|s| !s) {
            match fill_seed {
                None => {
                    let label = vocab.entities.label(missing).unwrap_or_default();
                    return Err(Error::MissingFeatures(label.to_string()));
                }
                Some(seed) => {
                    let fill = Self::random(n, dim, seed);
                    for (id, _) in seen.iter().enumerate().filter(|(_, s)| !**s) {
                        matrix.row_mut(id).copy_from_slice(fill.matrix.row(id));
                    }
                }
            }
        }
        Ok(Self {
            matrix,
            source: FeatureSource::FileLoaded {
                origin: origin.to_string(),
                fill_seed,
            },
        })
    }
}

/// A graph with fresh entities and the training relation vocabulary, plus
/// the query splits evaluated on it.
#[derive(Debug, Clone, PartialEq)]
pub struct InductiveTest {
    pub graph: KnowledgeGraph,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DatasetBundle {
    pub train: KnowledgeGraph,
    pub valid: Vec<Triple>,
    pub test: Vec<Triple>,
    pub inductive: Option<InductiveTest>,
}

impl DatasetBundle {
    pub fn transductive(train: KnowledgeGraph, valid: Vec<Triple>, test: Vec<Triple>) -> Result<Self> {
        let n = train.num_entities();
        let nr = train.base_relations();
        for t in valid.iter().chain(&test) {
            if t.subject >= n || t.object >= n {
                return Err(Error::OutOfRange {
                    kind: "entity",
                    id: t.subject.max(t.object),
                    len: n,
                });
            }
            if t.relation >= nr {
                return Err(Error::OutOfRange {
                    kind: "relation",
                    id: t.relation,
                    len: nr,
                });
            }
        }
        Ok(Self {
            train,
            valid,
            test,
            inductive: None,
        })
    }

    /// Attaches an inductive test graph after checking that it shares the
    /// training relation vocabulary and no entity labels.
    pub fn with_inductive(mut self, test: InductiveTest) -> Result<Self> {
        check_inductive_pair(&self.train, &test.graph)?;
        self.inductive = Some(test);
        Ok(self)
    }
}

fn check_inductive_pair(train: &KnowledgeGraph, test: &KnowledgeGraph) -> Result<()> {
    let base = |g: &KnowledgeGraph| -> Vec<String> {
        g.vocab()
            .relations
            .iter()
            .take(g.base_relations())
            .map(ToString::to_string)
            .collect()
    };
    if base(train) != base(test) || train.is_reciprocal() != test.is_reciprocal() {
        return Err(Error::RelationMismatch);
    }
    if let Some(label) = test
        .vocab()
        .entities
        .iter()
        .find(|l| train.vocab().entities.id(l).is_some())
    {
        return Err(Error::EntityOverlap(label.to_string()));
    }
    Ok(())
}

/// Pairs a training graph with an inductive test graph (no query splits).
pub fn bind_inductive(train: KnowledgeGraph, test: KnowledgeGraph) -> Result<DatasetBundle> {
    DatasetBundle::transductive(train, Vec::new(), Vec::new())?.with_inductive(InductiveTest {
        graph: test,
        valid: Vec::new(),
        test: Vec::new(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn parses_two_triples() {
        let g = KnowledgeGraph::parse("a\tr1\tb\nb\tr2\tc").unwrap();
        assert_eq!(g.num_entities(), 3);
        assert_eq!(g.num_relations(), 2);
        assert_eq!(g.triples().len(), 2);
        let (out, inc) = g.neighborhoods(0).unwrap();
        assert_eq!(out, &[(0, 1)]);
        assert!(inc.is_empty());
    }

    #[test]
    fn empty_text_is_empty_graph() {
        let g = KnowledgeGraph::parse("").unwrap();
        assert_eq!(g.triples().len(), 0);
        assert_eq!(g.num_entities(), 0);
    }

    #[test]
    fn self_loop_is_rejected() {
        let err = KnowledgeGraph::parse("a\tr\ta").unwrap_err();
        assert!(matches!(err, Error::SelfLoop { line: 1, .. }));
    }

    #[test]
    fn malformed_line_reports_line_number() {
        let err = KnowledgeGraph::parse("a\tr\tb\n\na\tb\n").unwrap_err();
        assert!(matches!(err, Error::MalformedLine { line: 3, .. }));
    }

    #[test]
    fn crlf_and_duplicates() {
        let g = KnowledgeGraph::parse("a\tr\tb\r\na\tr\tb\r\nb\tr\tc\r\n").unwrap();
        assert_eq!(g.triples().len(), 2);
        assert_eq!(g.vocab().entities.label(2), Some("c"));
    }

    #[test]
    fn frozen_vocab_rejects_unknown_labels() {
        let g = KnowledgeGraph::parse("a\tr\tb").unwrap();
        let err = g.parse_split("a\tq\tb").unwrap_err();
        assert!(matches!(err, Error::UnknownLabel { kind: "relation", .. }));
        let err = g.parse_split("a\tr\tz").unwrap_err();
        assert!(matches!(err, Error::UnknownLabel { kind: "entity", .. }));
    }

    #[test]
    fn reciprocals_mirror_triples() {
        let g = KnowledgeGraph::from_ids(3, 2, vec![Triple::new(0, 1, 2)]).unwrap();
        let g = g.add_reciprocals().unwrap();
        assert_eq!(g.triples(), &[Triple::new(0, 1, 2), Triple::new(2, 3, 0)]);
        assert_eq!(g.num_relations(), 4);
        assert_eq!(g.vocab().relations.label(3), Some("r1_inv"));
        assert_eq!(g.base_relations(), 2);
    }

    #[test]
    fn reciprocals_twice_is_an_error() {
        let g = KnowledgeGraph::parse("").unwrap().add_reciprocals().unwrap();
        assert_eq!(g.num_relations(), 0);
        assert_eq!(g.add_reciprocals().unwrap_err(), Error::ReciprocalsAlreadyAdded);
    }

    #[test]
    fn neighborhood_examples() {
        let g = KnowledgeGraph::from_ids(3, 1, vec![Triple::new(0, 0, 1), Triple::new(2, 0, 0)])
            .unwrap();
        let (out, inc) = g.neighborhoods(0).unwrap();
        assert_eq!(out, &[(0, 1)]);
        assert_eq!(inc, &[(0, 2)]);
        assert!(g.neighborhoods(3).is_err());

        let iso = KnowledgeGraph::from_ids(3, 1, vec![Triple::new(0, 0, 1)]).unwrap();
        let (out, inc) = iso.neighborhoods(2).unwrap();
        assert!(out.is_empty() && inc.is_empty());

        let rec = KnowledgeGraph::from_ids(2, 1, vec![Triple::new(0, 0, 1)])
            .unwrap()
            .add_reciprocals()
            .unwrap();
        let (out, inc) = rec.neighborhoods(0).unwrap();
        assert_eq!(out, &[(0, 1)]);
        assert_eq!(inc, &[(1, 1)]);
    }

    #[test]
    fn features_parse_and_fill() {
        let g = KnowledgeGraph::parse("a\tr\tb\nb\tr\tc").unwrap();
        let f = NodeFeatures::parse("a,1,2\nb,3,4\nc,5,6\n", g.vocab(), 2, "x.csv", None).unwrap();
        assert_eq!(f.matrix.rows(), 3);
        assert_eq!(f.matrix.row(2), &[5.0, 6.0]);

        let err = NodeFeatures::parse("a,1,2\nc,5,6\n", g.vocab(), 2, "x.csv", None).unwrap_err();
        assert_eq!(err, Error::MissingFeatures("b".into()));

        let f1 = NodeFeatures::parse("a,1,2\n", g.vocab(), 2, "x.csv", Some(9)).unwrap();
        let f2 = NodeFeatures::parse("a,1,2\n", g.vocab(), 2, "x.csv", Some(9)).unwrap();
        assert_eq!(f1, f2);
        assert_eq!(f1.matrix.row(0), &[1.0, 2.0]);

        let err = NodeFeatures::parse("a,1\n", g.vocab(), 2, "x.csv", Some(1)).unwrap_err();
        assert!(matches!(err, Error::DimensionMismatch { .. }));
        let err = NodeFeatures::parse("zz,1,2\n", g.vocab(), 2, "x.csv", Some(1)).unwrap_err();
        assert!(matches!(err, Error::UnknownLabel { .. }));
        let err = NodeFeatures::parse("a,1,NaN\n", g.vocab(), 2, "x.csv", Some(1)).unwrap_err();
        assert_eq!(err, Error::NonFinite("feature file"));
    }

    #[test]
    fn inductive_binding() {
        let train = KnowledgeGraph::parse("a\tr\tb\nb\tq\tc").unwrap();
        let vocab = Vocabulary::with_relations(train.base_relation_labels());
        let test =
            KnowledgeGraph::parse_with("x\tq\ty\ny\tr\tz", vocab, VocabPolicy::FROZEN_RELATIONS)
                .unwrap();
        assert!(bind_inductive(train.clone(), test).is_ok());

        let err = bind_inductive(train.clone(), train.clone()).unwrap_err();
        assert_eq!(err, Error::EntityOverlap("a".into()));

        let other = KnowledgeGraph::parse("x\tr\ty\ny\tnew\tz").unwrap();
        assert_eq!(bind_inductive(train.clone(), other).unwrap_err(), Error::RelationMismatch);

        let vocab = Vocabulary::with_relations(train.base_relation_labels());
        let err = KnowledgeGraph::parse_with("x\tnew\ty", vocab, VocabPolicy::FROZEN_RELATIONS)
            .unwrap_err();
        assert!(matches!(err, Error::UnknownLabel { kind: "relation", .. }));
    }
}
