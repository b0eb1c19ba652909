mod common;

use blockscene::arranger::{complete_constraints, gather_constraints, place_object, ArrangeError, ArrangerOptions, PlacementTask, RoughRelation};
use blockscene::backend::{BackendError, BackendRequest, PlannerBackend, CONSTRAINT_COMPLETION};
use blockscene::constraint::ConstraintKind;
use blockscene::geometry::{ObjectId, Vec3};
use blockscene::graph::{ConstraintBudget, DocumentError, GraphError, SceneGraph, Strength};
use blockscene::solver::GaConfig;
use common::{corrupted_documents, fuzz_relation_graph, random_store};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

#[test]
fn snapshots_round_trip_byte_identical() {
    for seed in 0..100 {
        let store = random_store(seed);
        let first = store.to_json();
        let loaded = SceneGraph::from_json(&first).unwrap();
        assert_eq!(loaded.to_json(), first, "seed {seed}");
        for node in store.nodes() {
            let id = node.id().as_str();
            assert_eq!(loaded.object(id), store.object(id));
            assert_eq!(loaded.creation_order(id), store.creation_order(id));
            assert_eq!(loaded.neighbors(id), store.neighbors(id));
            assert_eq!(loaded.strong_reference(id), store.strong_reference(id));
        }
        assert_eq!(loaded.edges().collect::<Vec<_>>(), store.edges().collect::<Vec<_>>());
    }
}

#[test]
fn corrupted_documents_name_the_field() {
    let docs = corrupted_documents();
    assert_eq!(docs.len(), 20);
    for (label, text) in docs {
        let err = SceneGraph::from_json(&text).expect_err(label);
        match &err {
            DocumentError::Syntax { path, line, .. } => assert!(*line > 0 && !path.is_empty(), "{label}: {err}"),
            DocumentError::Invalid { field, .. } => assert!(!field.is_empty(), "{label}: {err}"),
        }
    }
    let missing = SceneGraph::from_json(&corrupted_documents()[1].1).unwrap_err().to_string();
    assert!(missing.contains("edges[0].to") && missing.contains("ghost"), "{missing}");
}

#[derive(Debug, Clone)]
enum Op {
    Add(u8),
    Relate(u8, u8, u8, bool),
    Move(u8, [i8; 3]),
    Query(u8),
}

fn op() -> impl Strategy<Value = Op> {
    prop_oneof![
        (0u8..10).prop_map(Op::Add),
        (0u8..10, 0u8..10, 0u8..22, any::<bool>()).prop_map(|(a, b, k, s)| Op::Relate(a, b, k, s)),
        (0u8..10, any::<[i8; 3]>()).prop_map(|(a, v)| Op::Move(a, v)),
        (0u8..10).prop_map(Op::Query),
    ]
}

fn cube(i: u8) -> blockscene::graph::SceneNode {
    use blockscene::geometry::{Block, ObjectInstance};
    let id = format!("o{i}");
    blockscene::graph::SceneNode::new(ObjectInstance::new(id.as_str(), id.as_str(), vec![Block::from_arrays([i as f64, 0.0, 0.0], [1.0; 3]).unwrap()]).unwrap(), "p")
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn random_operations_keep_integrity(ops in prop::collection::vec(op(), 0..60)) {
        let mut g = SceneGraph::new();
        for op in ops {
            let before = g.revision();
            let ok = match op {
                Op::Add(i) => g.add_object(cube(i)).is_ok(),
                Op::Relate(a, b, k, strong) => {
                    let kind = ConstraintKind::ALL[k as usize];
                    let strength = if strong { Strength::Strong } else { Strength::Weak };
                    g.add_relation(blockscene::graph::RelationEdge::new(format!("o{a}"), format!("o{b}"), kind, 0.0, strength)).is_ok()
                }
                Op::Move(i, v) => g.update_placement(&format!("o{i}"), Vec3::new(v[0] as f64, v[1] as f64, v[2] as f64)).is_ok(),
                Op::Query(i) => {
                    let _ = g.strong_reference(&format!("o{i}"));
                    let _ = g.neighbors(&format!("o{i}"));
                    prop_assert_eq!(g.revision(), before);
                    continue;
                }
            };
            prop_assert_eq!(g.revision(), before + ok as u64);
            for e in g.edges() {
                prop_assert!(g.contains(e.from.as_str()) && g.contains(e.to.as_str()));
                prop_assert!(e.from != e.to);
            }
        }
        let text = g.to_json();
        prop_assert_eq!(SceneGraph::from_json(&text).unwrap().to_json(), text);
    }
}

/// Proposes a random pile of additions, many of them invalid.
struct Noisy(u64);

impl PlannerBackend for Noisy {
    fn exchange(&self, request: &BackendRequest) -> Result<Value, BackendError> {
        assert_eq!(request.schema, CONSTRAINT_COMPLETION);
        let mut rng = ChaCha8Rng::seed_from_u64(self.0);
        let additions: Vec<Value> = (0..rng.random_range(0..8))
            .map(|_| json!({"reference": format!("n{}", rng.random_range(0..9)), "kind": ConstraintKind::ALL[rng.random_range(0..22)].name()}))
            .collect();
        Ok(json!({"schema": CONSTRAINT_COMPLETION, "additions": additions}))
    }
}

fn check_budget(constraints: &[blockscene::constraint::Constraint], strong: &ObjectId, store: &SceneGraph, budget: &ConstraintBudget) {
    let mut per_ref = std::collections::BTreeMap::<&ObjectId, usize>::new();
    for c in constraints {
        assert!(store.contains(c.reference.as_str()));
        *per_ref.entry(&c.reference).or_default() += 1;
    }
    for (r, n) in per_ref {
        let max = if r == strong { budget.strong_max } else { budget.weak_max };
        assert!(n <= max, "{r} supplies {n}");
    }
}

#[test]
fn budgets_hold_or_fail_typed() {
    let budget = ConstraintBudget::default();
    let tiny = ArrangerOptions {
        ga: GaConfig { population_size: 8, max_generations: 3, ..GaConfig::default() },
        placement_ceiling: f64::MAX,
        ..ArrangerOptions::default()
    };
    let (mut ok, mut typed) = (0, 0);
    for seed in 0..1000 {
        let graph = fuzz_relation_graph(seed);
        for node in graph.nodes() {
            let task = PlacementTask {
                movable: node.id().clone(),
                proposed_position: Vec3::ZERO,
                rough_relations: vec![RoughRelation { reference: node.id().clone(), kind: ConstraintKind::Above, distance: None }],
            };
            match gather_constraints(&graph, &task, &budget) {
                Ok(g) => {
                    assert!(g.respects(&budget));
                    let done = complete_constraints(&graph, &task, &g, &Noisy(seed), &budget).unwrap();
                    assert!(done.constraints.respects(&budget));
                    check_budget(&done.constraints.constraints(), &g.strong.0, &graph, &budget);
                    let mut work = graph.clone();
                    let placed = place_object(&mut work, &task, &Noisy(seed), &tiny).unwrap();
                    check_budget(&placed.constraints, &g.strong.0, &graph, &budget);
                    ok += 1;
                }
                Err(ArrangeError::Graph(GraphError::Budget { count, max, min, .. })) => {
                    assert!(count > max || count < min);
                    typed += 1;
                }
                Err(ArrangeError::Graph(GraphError::NoStrongReference(_))) => typed += 1,
                Err(other) => panic!("seed {seed}: untyped failure {other}"),
            }
        }
    }
    assert!(ok > 100 && typed > 100, "{ok} ok, {typed} typed");
}
