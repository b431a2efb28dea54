//! Seeded synthetic corpus generator.
//!
//! Stands in for proprietary curated data with a corpus whose structure is
//! controlled and learnable. Concepts are arranged in clusters; each
//! concept has a canonical two-word query (`qa{i} qb{i}`) and a canonical
//! passage built from disjoint passage-side words (`g{cluster} pa{i}
//! pb{i}` plus filler). Because query-side and passage-side vocabularies
//! never overlap, an untrained encoder ranks candidates at chance; the
//! association is learnable only from co-occurrence in training triplets.
//! Hard negatives come from the query's own cluster, random negatives from
//! foreign clusters. The note corpus reuses the same clusters, one
//! clinical category per cluster, so note retrieval quality tracks
//! training quality.

use std::collections::BTreeSet;

use rand::seq::{IndexedRandom, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use treble_rag::{ClinicalCategory, NoteRecord, RagQuery};

use crate::dataset::{render_kg, DatasetRecord, TextLine};
use crate::error::CliError;

/// Relations used for knowledge-graph statements, cycled deterministically.
const PREDICATES: [&str; 5] = [
    "anatomically_part_of",
    "functionally_connected_to",
    "projects_to",
    "regulates_activity_of",
    "adjacent_to",
];

/// Negatives per triplet.
const NEGATIVES: usize = 5;

/// Clusters (hence categories) assigned to each synthetic patient, capped
/// by the cluster count.
const RAG_WINDOW: usize = 5;

/// Knobs of the synthetic corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    /// Distinct retrievable concepts.
    pub concepts: usize,
    /// Concept clusters; hard negatives stay within a cluster.
    pub clusters: usize,
    /// Total word budget: concept and cluster words plus shared filler.
    pub vocab_size: usize,
    /// Master seed; every artifact derives from it.
    pub seed: u64,
    /// Fraction of each triplet's negatives drawn from the query's own
    /// cluster (rounded to a count out of 5).
    pub hard_negative_fraction: f64,
    /// Training triplet count.
    pub train_triplets: usize,
    /// Held-out evaluation triplet count; disjoint from training.
    pub test_triplets: usize,
    /// Distillation text count (definitions and KG statements).
    pub distill_texts: usize,
    /// Patients in the synthetic note corpus.
    pub rag_patients: usize,
    /// Note-retrieval query count.
    pub rag_queries: usize,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            concepts: 200,
            clusters: 20,
            vocab_size: 1000,
            seed: 42,
            hard_negative_fraction: 0.6,
            train_triplets: 500,
            test_triplets: 100,
            distill_texts: 600,
            rag_patients: 10,
            rag_queries: 50,
        }
    }
}

impl SyntheticSpec {
    /// Hard negatives per triplet implied by the fraction.
    pub fn hard_per_triplet(&self) -> usize {
        (self.hard_negative_fraction * NEGATIVES as f64).round() as usize
    }

    /// Reject infeasible shapes before generating anything.
    pub fn validate(&self) -> Result<(), CliError> {
        let err = |msg: String| Err(CliError::Usage(format!("infeasible synthetic spec: {msg}")));
        if self.concepts < NEGATIVES + 1 {
            return err(format!(
                "need at least {} concepts for a positive and {NEGATIVES} negatives, got {}",
                NEGATIVES + 1,
                self.concepts
            ));
        }
        if self.clusters == 0 || self.clusters > self.concepts {
            return err(format!(
                "clusters must be in 1..={}, got {}",
                self.concepts, self.clusters
            ));
        }
        if !self.hard_negative_fraction.is_finite()
            || !(0.0..=1.0).contains(&self.hard_negative_fraction)
        {
            return err(format!(
                "hard-negative fraction must lie in [0, 1], got {}",
                self.hard_negative_fraction
            ));
        }
        let hard = self.hard_per_triplet();
        let min_cluster = self.concepts / self.clusters;
        let max_cluster = self.concepts.div_ceil(self.clusters);
        if min_cluster - 1 < hard {
            return err(format!(
                "cluster of {min_cluster} concepts is too small for {hard} hard negatives"
            ));
        }
        if self.concepts - max_cluster < NEGATIVES - hard {
            return err(format!(
                "{} foreign concepts cannot supply {} random negatives",
                self.concepts - max_cluster,
                NEGATIVES - hard
            ));
        }
        let base_words = 4 * self.concepts + self.clusters;
        if self.vocab_size < base_words {
            return err(format!(
                "vocab_size {} is below the {base_words} concept and cluster words",
                self.vocab_size
            ));
        }
        for (name, value) in [
            ("train_triplets", self.train_triplets),
            ("test_triplets", self.test_triplets),
            ("distill_texts", self.distill_texts),
            ("rag_patients", self.rag_patients),
            ("rag_queries", self.rag_queries),
        ] {
            if value == 0 {
                return err(format!("{name} must be positive"));
            }
        }
        Ok(())
    }
}

/// Everything one seed produces.
#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedCorpus {
    /// Training triplets, stratified by cluster.
    pub train: Vec<DatasetRecord>,
    /// Held-out triplets, disjoint from training.
    pub test: Vec<DatasetRecord>,
    /// Distillation curriculum records.
    pub distill: Vec<DatasetRecord>,
    /// Canonical passage per concept (id = concept index).
    pub passages: Vec<TextLine>,
    /// Canonical query per concept (id = concept index).
    pub queries: Vec<TextLine>,
    /// Category-tagged synthetic progress notes.
    pub notes: Vec<NoteRecord>,
    /// Note-retrieval queries with gold category sets.
    pub rag_queries: Vec<RagQuery>,
}

fn cluster_of(concept: usize, clusters: usize) -> usize {
    concept % clusters
}

fn category_of(cluster: usize) -> ClinicalCategory {
    ClinicalCategory::ALL[cluster % ClinicalCategory::ALL.len()]
}

/// Generate the full corpus for `spec`. Identical specs yield identical
/// corpora, byte for byte.
pub fn gen_synthetic(spec: &SyntheticSpec) -> Result<GeneratedCorpus, CliError> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let c = spec.concepts;
    let k = spec.clusters;
    let filler: Vec<String> = (0..spec.vocab_size - (4 * c + k))
        .map(|j| format!("f{j}"))
        .collect();

    // Canonical surfaces. Passage-side words never appear in queries.
    let mut passages = Vec::with_capacity(c);
    for i in 0..c {
        let mut words = vec![
            format!("g{}", cluster_of(i, k)),
            format!("pa{i}"),
            format!("pb{i}"),
        ];
        if !filler.is_empty() {
            for _ in 0..2 {
                words.push(filler.choose(&mut rng).unwrap().clone());
            }
        }
        passages.push(words.join(" "));
    }
    let queries: Vec<String> = (0..c).map(|i| format!("qa{i} qb{i}")).collect();

    // Triplets. Hard negatives share the query's cluster; the rest come
    // from foreign clusters; a signature set keeps train and test disjoint.
    let hard = spec.hard_per_triplet();
    let mut seen = BTreeSet::new();
    let draw_triplet =
        |concept: usize, rng: &mut ChaCha8Rng| -> (Vec<usize>, Vec<usize>) {
            let own = cluster_of(concept, k);
            let same: Vec<usize> = (0..c)
                .filter(|&j| j != concept && cluster_of(j, k) == own)
                .collect();
            let foreign: Vec<usize> = (0..c).filter(|&j| cluster_of(j, k) != own).collect();
            let mut negatives: Vec<usize> = same
                .choose_multiple(rng, hard)
                .chain(foreign.choose_multiple(rng, NEGATIVES - hard))
                .copied()
                .collect();
            negatives.shuffle(rng);
            let mut signature = negatives.clone();
            signature.sort_unstable();
            (negatives, signature)
        };

    let mut train = Vec::with_capacity(spec.train_triplets);
    for t in 0..spec.train_triplets {
        let concept = t % c;
        let (negatives, signature) = draw_triplet(concept, &mut rng);
        seen.insert((concept, signature));
        train.push(triplet_record(concept, &negatives, &queries, &passages, k));
    }
    let mut test = Vec::with_capacity(spec.test_triplets);
    for t in 0..spec.test_triplets {
        let concept = t % c;
        let mut drawn = None;
        for _ in 0..1000 {
            let (negatives, signature) = draw_triplet(concept, &mut rng);
            if seen.insert((concept, signature)) {
                drawn = Some(negatives);
                break;
            }
        }
        let negatives = drawn.ok_or_else(|| {
            CliError::Usage(
                "infeasible synthetic spec: cannot draw test triplets disjoint from training"
                    .into(),
            )
        })?;
        test.push(triplet_record(concept, &negatives, &queries, &passages, k));
    }

    // Distillation curriculum: every third record is a KG statement, the
    // rest are definitions.
    let mut distill = Vec::with_capacity(spec.distill_texts);
    for d in 0..spec.distill_texts {
        let i = d % c;
        if d % 3 == 0 {
            let subject = format!("pa{i}");
            let predicate = PREDICATES[(d / 3) % PREDICATES.len()].to_string();
            let object = format!("g{}", cluster_of(i, k));
            let rendered = render_kg(&subject, &predicate, &object)?;
            distill.push(DatasetRecord::Kg {
                subject,
                predicate,
                object,
                rendered_text: Some(rendered),
            });
        } else {
            distill.push(DatasetRecord::Definition {
                term: format!("qa{i}"),
                definition: passages[i].clone(),
            });
        }
    }

    // Notes: each patient covers a rotating window of clusters, one
    // category per cluster; two shuffled passes over the cluster's
    // passages make each note span multiple chunks at desk-scale caps.
    let window = RAG_WINDOW.min(k);
    let mut notes = Vec::new();
    for p in 0..spec.rag_patients {
        for j in 0..window {
            let cluster = (3 * p + j) % k;
            let members: Vec<usize> = (0..c).filter(|&i| cluster_of(i, k) == cluster).collect();
            let mut sentences = Vec::with_capacity(2 * members.len());
            for _ in 0..2 {
                let mut order = members.clone();
                order.shuffle(&mut rng);
                sentences.extend(order.into_iter().map(|i| passages[i].clone()));
            }
            notes.push(NoteRecord {
                patient_id: format!("patient{p:02}"),
                category: category_of(cluster),
                text: sentences.join(". "),
            });
        }
    }

    let mut rag_queries = Vec::with_capacity(spec.rag_queries);
    for q in 0..spec.rag_queries {
        let p = q % spec.rag_patients;
        let j = rng.random_range(0..window);
        let cluster = (3 * p + j) % k;
        let members: Vec<usize> = (0..c).filter(|&i| cluster_of(i, k) == cluster).collect();
        let concept = *members.choose(&mut rng).unwrap();
        let mut text = queries[concept].clone();
        let mut gold: BTreeSet<ClinicalCategory> = [category_of(cluster)].into_iter().collect();
        if window > 1 && rng.random_bool(0.3) {
            let j2 = (j + rng.random_range(1..window)) % window;
            let cluster2 = (3 * p + j2) % k;
            let members2: Vec<usize> =
                (0..c).filter(|&i| cluster_of(i, k) == cluster2).collect();
            let concept2 = *members2.choose(&mut rng).unwrap();
            text.push(' ');
            text.push_str(&queries[concept2]);
            gold.insert(category_of(cluster2));
        }
        rag_queries.push(RagQuery {
            query: text,
            patient_id: format!("patient{p:02}"),
            gold,
        });
    }

    Ok(GeneratedCorpus {
        train,
        test,
        distill,
        passages: id_lines(&passages),
        queries: id_lines(&queries),
        notes,
        rag_queries,
    })
}

fn triplet_record(
    concept: usize,
    negatives: &[usize],
    queries: &[String],
    passages: &[String],
    clusters: usize,
) -> DatasetRecord {
    DatasetRecord::Triplet {
        query: queries[concept].clone(),
        positive: passages[concept].clone(),
        negatives: negatives.iter().map(|&j| passages[j].clone()).collect(),
        stratum: Some(format!("cluster{:02}", cluster_of(concept, clusters))),
    }
}

fn id_lines(texts: &[String]) -> Vec<TextLine> {
    texts
        .iter()
        .enumerate()
        .map(|(i, t)| TextLine {
            id: i as u32,
            text: t.clone(),
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeMap;

    fn small_spec() -> SyntheticSpec {
        SyntheticSpec {
            concepts: 24,
            clusters: 4,
            vocab_size: 120,
            seed: 7,
            hard_negative_fraction: 0.6,
            train_triplets: 72,
            test_triplets: 24,
            distill_texts: 30,
            rag_patients: 4,
            rag_queries: 12,
        }
    }

    /// Concept index of a passage, recovered from its `pa{i}` word.
    fn passage_concept(text: &str) -> usize {
        text.split_whitespace()
            .find_map(|w| w.strip_prefix("pa"))
            .unwrap()
            .parse()
            .unwrap()
    }

    /// Concept index of a query, from its first `qa{i}` word.
    fn query_concept(text: &str) -> usize {
        text.split_whitespace()
            .find_map(|w| w.strip_prefix("qa"))
            .unwrap()
            .parse()
            .unwrap()
    }

    fn triplet_parts(record: &DatasetRecord) -> (&str, &str, &[String]) {
        match record {
            DatasetRecord::Triplet {
                query,
                positive,
                negatives,
                ..
            } => (query, positive, negatives),
            other => panic!("expected triplet, got {other:?}"),
        }
    }

    #[test]
    fn defaults_validate_and_generate() {
        let spec = SyntheticSpec::default();
        assert_eq!(spec.hard_per_triplet(), 3);
        let corpus = gen_synthetic(&spec).unwrap();
        assert_eq!(corpus.train.len(), 500);
        assert_eq!(corpus.test.len(), 100);
        assert_eq!(corpus.distill.len(), 600);
        assert_eq!(corpus.passages.len(), 200);
        assert_eq!(corpus.notes.len(), 50);
        assert_eq!(corpus.rag_queries.len(), 50);
    }

    #[test]
    fn identical_seeds_reproduce_identical_corpora() {
        let a = gen_synthetic(&small_spec()).unwrap();
        let b = gen_synthetic(&small_spec()).unwrap();
        assert_eq!(a, b);
        let other = gen_synthetic(&SyntheticSpec {
            seed: 8,
            ..small_spec()
        })
        .unwrap();
        assert_ne!(a, other);
    }

    #[test]
    fn query_and_passage_vocabularies_are_disjoint() {
        let corpus = gen_synthetic(&small_spec()).unwrap();
        let qwords: BTreeSet<&str> = corpus
            .queries
            .iter()
            .flat_map(|l| l.text.split_whitespace())
            .collect();
        let pwords: BTreeSet<&str> = corpus
            .passages
            .iter()
            .flat_map(|l| l.text.split_whitespace())
            .collect();
        assert!(qwords.is_disjoint(&pwords));
    }

    #[test]
    fn hard_negatives_respect_the_fraction() {
        let corpus = gen_synthetic(&small_spec()).unwrap();
        let spec = small_spec();
        for record in corpus.train.iter().chain(&corpus.test) {
            let (query, positive, negatives) = triplet_parts(record);
            let own = cluster_of(query_concept(query), spec.clusters);
            assert_eq!(cluster_of(passage_concept(positive), spec.clusters), own);
            assert_eq!(negatives.len(), NEGATIVES);
            let hard = negatives
                .iter()
                .filter(|n| cluster_of(passage_concept(n), spec.clusters) == own)
                .count();
            assert_eq!(hard, spec.hard_per_triplet());
            // Negatives are distinct and never the positive.
            let ids: BTreeSet<usize> = negatives.iter().map(|n| passage_concept(n)).collect();
            assert_eq!(ids.len(), NEGATIVES);
            assert!(!ids.contains(&passage_concept(positive)));
        }
    }

    #[test]
    fn fraction_zero_draws_only_foreign_negatives() {
        let spec = SyntheticSpec {
            hard_negative_fraction: 0.0,
            ..small_spec()
        };
        let corpus = gen_synthetic(&spec).unwrap();
        for record in &corpus.train {
            let (query, _, negatives) = triplet_parts(record);
            let own = cluster_of(query_concept(query), spec.clusters);
            for n in negatives {
                assert_ne!(cluster_of(passage_concept(n), spec.clusters), own);
            }
        }
    }

    #[test]
    fn train_and_test_triplets_are_disjoint() {
        let corpus = gen_synthetic(&small_spec()).unwrap();
        let signature = |r: &DatasetRecord| {
            let (query, _, negatives) = triplet_parts(r);
            let mut negs: Vec<usize> = negatives.iter().map(|n| passage_concept(n)).collect();
            negs.sort_unstable();
            (query_concept(query), negs)
        };
        let train: BTreeSet<_> = corpus.train.iter().map(signature).collect();
        for record in &corpus.test {
            assert!(!train.contains(&signature(record)));
        }
    }

    #[test]
    fn infeasible_specs_are_rejected() {
        // Cluster too small for the hard-negative count.
        let tiny_clusters = SyntheticSpec {
            concepts: 8,
            clusters: 4,
            hard_negative_fraction: 1.0,
            vocab_size: 200,
            ..small_spec()
        };
        assert_eq!(gen_synthetic(&tiny_clusters).unwrap_err().exit_code(), 1);
        // A single cluster cannot supply foreign negatives.
        let one_cluster = SyntheticSpec {
            clusters: 1,
            hard_negative_fraction: 0.0,
            ..small_spec()
        };
        assert!(gen_synthetic(&one_cluster).is_err());
        // Word budget below the required concept words.
        let tiny_vocab = SyntheticSpec {
            vocab_size: 10,
            ..small_spec()
        };
        assert!(gen_synthetic(&tiny_vocab).is_err());
        assert!(SyntheticSpec::default().validate().is_ok());
    }

    #[test]
    fn distill_records_alternate_kinds_and_render() {
        let corpus = gen_synthetic(&small_spec()).unwrap();
        for (d, record) in corpus.distill.iter().enumerate() {
            match record {
                DatasetRecord::Kg { rendered_text, .. } => {
                    assert_eq!(d % 3, 0);
                    let text = rendered_text.as_ref().unwrap();
                    assert!(text.starts_with("The pa"), "{text}");
                }
                DatasetRecord::Definition { term, .. } => {
                    assert_ne!(d % 3, 0);
                    assert!(term.starts_with("qa"));
                }
                DatasetRecord::Triplet { .. } => panic!("triplet in distill set"),
            }
        }
    }

    #[test]
    fn notes_cover_each_patient_with_distinct_categories() {
        let spec = small_spec();
        let corpus = gen_synthetic(&spec).unwrap();
        let mut by_patient: BTreeMap<&str, BTreeSet<ClinicalCategory>> = BTreeMap::new();
        for note in &corpus.notes {
            assert!(note.validate().is_ok());
            by_patient
                .entry(note.patient_id.as_str())
                .or_default()
                .insert(note.category);
        }
        assert_eq!(by_patient.len(), spec.rag_patients);
        for query in &corpus.rag_queries {
            let categories = &by_patient[query.patient_id.as_str()];
            assert!(query.gold.iter().all(|g| categories.contains(g)));
            assert!(query.validate().is_ok());
        }
    }

    /// Bag-of-words nearest-centroid oracle: for every test triplet, build
    /// the centroid of the train positives whose query matches, then rank
    /// the six candidates by cosine. The corpus must be separable enough
    /// for this oracle to place the positive first at least 90% of the
    /// time.
    #[test]
    fn testset_is_linearly_separable_for_a_centroid_oracle() {
        let corpus = gen_synthetic(&SyntheticSpec::default()).unwrap();

        fn bag(text: &str) -> BTreeMap<&str, f64> {
            let mut b = BTreeMap::new();
            for w in text.split_whitespace() {
                *b.entry(w).or_insert(0.0) += 1.0;
            }
            b
        }
        fn cosine(a: &BTreeMap<&str, f64>, b: &BTreeMap<&str, f64>) -> f64 {
            let dot: f64 = a
                .iter()
                .filter_map(|(w, x)| b.get(w).map(|y| x * y))
                .sum();
            let na: f64 = a.values().map(|x| x * x).sum::<f64>().sqrt();
            let nb: f64 = b.values().map(|x| x * x).sum::<f64>().sqrt();
            if na == 0.0 || nb == 0.0 {
                0.0
            } else {
                dot / (na * nb)
            }
        }

        // query text -> centroid of its train positives.
        let mut sums: BTreeMap<&str, (BTreeMap<&str, f64>, f64)> = BTreeMap::new();
        for record in &corpus.train {
            let (query, positive, _) = match record {
                DatasetRecord::Triplet {
                    query,
                    positive,
                    negatives,
                    ..
                } => (query.as_str(), positive.as_str(), negatives),
                _ => unreachable!(),
            };
            let entry = sums.entry(query).or_default();
            for (w, x) in bag(positive) {
                *entry.0.entry(w).or_insert(0.0) += x;
            }
            entry.1 += 1.0;
        }

        let mut top1 = 0;
        let mut total = 0;
        for record in &corpus.test {
            let (query, positive, negatives) = match record {
                DatasetRecord::Triplet {
                    query,
                    positive,
                    negatives,
                    ..
                } => (query.as_str(), positive.as_str(), negatives),
                _ => unreachable!(),
            };
            let (sum, n) = &sums[query];
            let centroid: BTreeMap<&str, f64> =
                sum.iter().map(|(w, x)| (*w, x / n)).collect();
            let positive_score = cosine(&bag(positive), &centroid);
            let beaten = negatives
                .iter()
                .filter(|neg| cosine(&bag(neg), &centroid) >= positive_score)
                .count();
            total += 1;
            if beaten == 0 {
                top1 += 1;
            }
        }
        let recall = top1 as f64 / total as f64;
        assert!(recall >= 0.9, "centroid oracle recall@1 = {recall}");
    }
}
