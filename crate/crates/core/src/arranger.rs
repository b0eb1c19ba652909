//! Placement of one object against the scene graph.
//!
//! `place_object` gathers the strong and weak reference constraints recorded
//! in the graph, asks the planner backend (once) for missing constraints,
//! validates every suggestion against the catalog and the budgets, solves the
//! motion with the GA and writes the new placement back as a single mutation.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::backend::{BackendError, PlannerBackend, CONSTRAINT_COMPLETION};
use crate::constraint::{validate_distance, Constraint, ConstraintKind, ConstraintSet, GapMode};
use crate::exec::Execution;
use crate::geometry::{Aabb, ObjectId, Vec3};
use crate::graph::{ConstraintBudget, GraphError, SceneGraph, Strength};
use crate::solver::{GaConfig, GaSolver, SolveError, SolveResult};

/// Placements whose final error exceeds this (scene units squared) are rejected.
pub const DEFAULT_PLACEMENT_CEILING: f64 = 1e-2;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ArrangeError {
    #[error("invalid placement task: {0}")]
    InvalidTask(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error("constraint completion failed: {0}")]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error("placement of `{movable}` rejected: final error {:.6e} exceeds ceiling {ceiling:e}\n{}", result.final_error, residual_table(constraints, &result.residuals.residuals))]
    Rejected {
        movable: ObjectId,
        ceiling: f64,
        constraints: Vec<Constraint>,
        result: Box<SolveResult>,
    },
}

impl ArrangeError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ArrangeError::Backend(e) if e.is_retryable())
    }
}

/// One row per constraint: kind, reference, distance, residual.
pub fn residual_table(constraints: &[Constraint], residuals: &[f64]) -> String {
    let mut out = format!("{:<16} {:<16} {:>10} {:>14}", "kind", "reference", "distance", "residual");
    for (c, e) in constraints.iter().zip(residuals) {
        out.push_str(&format!("\n{:<16} {:<16} {:>10.4} {:>14.6e}", c.kind.name(), c.reference.as_str(), c.distance, e));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoughRelation {
    pub reference: ObjectId,
    pub kind: ConstraintKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub distance: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementTask {
    pub movable: ObjectId,
    pub proposed_position: Vec3,
    pub rough_relations: Vec<RoughRelation>,
}

impl PlacementTask {
    fn validate(&self, store: &SceneGraph) -> Result<(), ArrangeError> {
        if !store.contains(self.movable.as_str()) {
            return Err(ArrangeError::Graph(GraphError::UnknownObject(self.movable.clone())));
        }
        if self.rough_relations.is_empty() {
            return Err(ArrangeError::InvalidTask(format!("no rough relations for `{}`", self.movable)));
        }
        if !self.proposed_position.is_finite() {
            return Err(ArrangeError::InvalidTask("proposed position is not finite".into()));
        }
        Ok(())
    }
}

/// Constraints for one movable object, grouped by the reference supplying them.
#[derive(Debug, Clone, PartialEq)]
pub struct GatheredConstraints {
    pub movable: ObjectId,
    pub strong: (ObjectId, Vec<Constraint>),
    pub weak: Vec<(ObjectId, Vec<Constraint>)>,
}

impl GatheredConstraints {
    pub fn len(&self) -> usize {
        self.strong.1.len() + self.weak.iter().map(|(_, c)| c.len()).sum::<usize>()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Strong constraints first, then weak references in id order.
    pub fn constraints(&self) -> Vec<Constraint> {
        let mut out = self.strong.1.clone();
        for (_, cs) in &self.weak {
            out.extend(cs.iter().cloned());
        }
        out
    }

    pub fn to_set(&self) -> ConstraintSet {
        ConstraintSet::new(self.movable.clone(), self.constraints()).expect("gathered constraints share one movable")
    }

    pub fn respects(&self, budget: &ConstraintBudget) -> bool {
        let strong = self.strong.1.len();
        (budget.strong_min..=budget.strong_max).contains(&strong)
            && self.weak.iter().all(|(_, cs)| (budget.weak_min..=budget.weak_max).contains(&cs.len()))
    }
}

pub fn gather_constraints(
    store: &SceneGraph,
    task: &PlacementTask,
    budget: &ConstraintBudget,
) -> Result<GatheredConstraints, ArrangeError> {
    task.validate(store)?;
    let movable = task.movable.as_str();
    let strong = store.strong_reference_with(movable, budget)?;
    let weak = store.weak_references_with(strong.0.as_str(), movable, budget)?;
    Ok(GatheredConstraints { movable: task.movable.clone(), strong, weak })
}

#[derive(Debug, Deserialize)]
struct CompletionResponse {
    schema: String,
    additions: Vec<Value>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct Addition {
    reference: ObjectId,
    kind: String,
    #[serde(default)]
    distance: f64,
    #[serde(default)]
    gap: GapMode,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Completion {
    pub constraints: GatheredConstraints,
    pub diagnostics: Vec<String>,
}

fn bounds_json(b: &Aabb) -> Value {
    json!({ "center": b.center(), "extents": b.extents() })
}

fn completion_payload(store: &SceneGraph, task: &PlacementTask, gathered: &GatheredConstraints) -> Value {
    let mut references: BTreeSet<&ObjectId> = store.neighbors(gathered.strong.0.as_str());
    references.insert(&gathered.strong.0);
    references.remove(&task.movable);
    let references: BTreeMap<&str, Value> = references
        .into_iter()
        .filter_map(|id| store.object(id.as_str()).map(|o| (id.as_str(), bounds_json(&o.bounds()))))
        .collect();
    json!({
        "movable": task.movable,
        "movable_bounds": store.object(task.movable.as_str()).map(|o| bounds_json(&o.bounds())),
        "proposed_position": task.proposed_position,
        "rough_relations": task.rough_relations,
        "strong_reference": gathered.strong.0,
        "constraints": gathered.constraints(),
        "references": references,
        "catalog": ConstraintKind::ALL.iter().map(|k| k.name()).collect::<Vec<_>>(),
    })
}

/// Ask the backend once for additional constraints and merge the valid ones.
///
/// Suggestions that name an unknown kind or object, break a budget, duplicate
/// an existing constraint or come from a reference not adjacent to the strong
/// reference are dropped, each with a diagnostic. Only transport failures are
/// errors.
pub fn complete_constraints(
    store: &SceneGraph,
    task: &PlacementTask,
    gathered: &GatheredConstraints,
    backend: &dyn PlannerBackend,
    budget: &ConstraintBudget,
) -> Result<Completion, ArrangeError> {
    let raw = backend.complete(task.movable.as_str(), completion_payload(store, task, gathered))?;
    let mut out = gathered.clone();
    let mut diagnostics = Vec::new();
    let mut drop = |msg: String| {
        log::warn!("completion for `{}`: {msg}", task.movable);
        diagnostics.push(msg);
    };

    let response = match serde_json::from_value::<CompletionResponse>(raw.clone()) {
        Ok(r) if r.schema == CONSTRAINT_COMPLETION => r,
        Ok(r) => {
            drop(format!("response has schema `{}`, expected `{CONSTRAINT_COMPLETION}`; ignored", r.schema));
            return Ok(Completion { constraints: out, diagnostics });
        }
        Err(e) => {
            drop(format!("malformed completion response ({e}); ignored: {raw}"));
            return Ok(Completion { constraints: out, diagnostics });
        }
    };

    let strong_id = out.strong.0.clone();
    let adjacent = store.neighbors(strong_id.as_str()).into_iter().cloned().collect::<BTreeSet<_>>();
    for (i, value) in response.additions.into_iter().enumerate() {
        let add: Addition = match serde_json::from_value(value.clone()) {
            Ok(a) => a,
            Err(e) => {
                drop(format!("additions[{i}] dropped: {e}"));
                continue;
            }
        };
        let kind = match ConstraintKind::parse(&add.kind) {
            Ok(k) => k,
            Err(e) => {
                drop(format!("additions[{i}] dropped: {e}"));
                continue;
            }
        };
        if add.reference == task.movable || !store.contains(add.reference.as_str()) {
            drop(format!("additions[{i}] dropped: invalid reference `{}`", add.reference));
            continue;
        }
        if let Err(e) = validate_distance(kind, add.distance) {
            drop(format!("additions[{i}] dropped: {e}"));
            continue;
        }
        let constraint = Constraint {
            kind,
            reference: add.reference.clone(),
            movable: task.movable.clone(),
            distance: add.distance,
            gap: add.gap,
        };
        let group: &mut Vec<Constraint> = if add.reference == strong_id {
            if out.strong.1.len() >= budget.strong_max {
                drop(format!("additions[{i}] dropped: strong budget of {} is full", budget.strong_max));
                continue;
            }
            &mut out.strong.1
        } else if adjacent.contains(&add.reference) {
            let slot = match out.weak.iter().position(|(id, _)| *id == add.reference) {
                Some(p) => p,
                None => {
                    let p = out.weak.partition_point(|(id, _)| *id < add.reference);
                    out.weak.insert(p, (add.reference.clone(), Vec::new()));
                    p
                }
            };
            if out.weak[slot].1.len() >= budget.weak_max {
                drop(format!("additions[{i}] dropped: weak budget of {} for `{}` is full", budget.weak_max, add.reference));
                if out.weak[slot].1.is_empty() {
                    out.weak.remove(slot);
                }
                continue;
            }
            &mut out.weak[slot].1
        } else {
            drop(format!("additions[{i}] dropped: `{}` is not associated with strong reference `{strong_id}`", add.reference));
            continue;
        };
        if group.iter().any(|c| c.kind == kind) {
            drop(format!("additions[{i}] dropped: duplicate {kind} on `{}`", add.reference));
            continue;
        }
        group.push(constraint);
    }
    debug_assert!(out.respects(budget) || !gathered.respects(budget));
    Ok(Completion { constraints: out, diagnostics })
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArrangerOptions {
    pub budget: ConstraintBudget,
    pub placement_ceiling: f64,
    pub ga: GaConfig,
    pub execution: Execution,
}

impl Default for ArrangerOptions {
    fn default() -> Self {
        Self {
            budget: ConstraintBudget::default(),
            placement_ceiling: DEFAULT_PLACEMENT_CEILING,
            ga: GaConfig::default(),
            execution: Execution::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Placement {
    pub result: SolveResult,
    pub constraints: Vec<Constraint>,
    pub diagnostics: Vec<String>,
    pub revision: u64,
}

/// Gather, complete, solve and apply. The store is changed by exactly one
/// `update_placement` on success and left untouched on any error.
pub fn place_object(
    store: &mut SceneGraph,
    task: &PlacementTask,
    backend: &dyn PlannerBackend,
    options: &ArrangerOptions,
) -> Result<Placement, ArrangeError> {
    let gathered = gather_constraints(store, task, &options.budget)?;
    let Completion { constraints, diagnostics } = complete_constraints(store, task, &gathered, backend, &options.budget)?;
    if !constraints.respects(&options.budget) {
        return Err(ArrangeError::InvalidTask(format!("constraint budget violated for `{}`", task.movable)));
    }
    let set = constraints.to_set();
    let movable = store.object(task.movable.as_str()).expect("validated above");
    let solver = GaSolver::new(options.ga.clone()).with_execution(options.execution);
    let result = solver.solve(&set, &store.bounds_map(), movable)?;
    let constraints = set.constraints().to_vec();
    if result.final_error > options.placement_ceiling {
        return Err(ArrangeError::Rejected {
            movable: task.movable.clone(),
            ceiling: options.placement_ceiling,
            constraints,
            result: Box::new(result),
        });
    }
    if result.final_error > options.ga.convergence_epsilon {
        log::warn!(
            "best-effort placement of `{}`: final error {:e} above convergence threshold",
            task.movable,
            result.final_error
        );
    }
    let revision = store.update_placement(task.movable.as_str(), result.best_motion)?;
    Ok(Placement { result, constraints, diagnostics, revision })
}

#[derive(Debug, Clone, PartialEq, Error)]
#[error("strong relations form a cycle through: {}", .0.iter().map(ObjectId::as_str).collect::<Vec<_>>().join(", "))]
pub struct CycleError(pub Vec<ObjectId>);

/// Topological order of `objects` under `(reference, movable)` strong edges;
/// among ready objects the earliest in `objects` goes first. Edges naming
/// objects outside the list are ignored.
pub fn construction_order(objects: &[ObjectId], strong_edges: &[(ObjectId, ObjectId)]) -> Result<Vec<ObjectId>, CycleError> {
    let index: BTreeMap<&ObjectId, usize> = objects.iter().enumerate().map(|(i, id)| (id, i)).collect();
    let mut indegree = vec![0usize; objects.len()];
    let mut successors: Vec<BTreeSet<usize>> = vec![BTreeSet::new(); objects.len()];
    for (from, to) in strong_edges {
        if let (Some(&f), Some(&t)) = (index.get(from), index.get(to)) {
            if f != t && successors[f].insert(t) {
                indegree[t] += 1;
            }
        }
    }
    let mut ready: BTreeSet<usize> = (0..objects.len()).filter(|&i| indegree[i] == 0).collect();
    let mut order = Vec::with_capacity(objects.len());
    while let Some(i) = ready.pop_first() {
        order.push(objects[i].clone());
        for &j in &successors[i] {
            indegree[j] -= 1;
            if indegree[j] == 0 {
                ready.insert(j);
            }
        }
    }
    if order.len() < objects.len() {
        let stuck = (0..objects.len()).filter(|&i| indegree[i] > 0).map(|i| objects[i].clone()).collect();
        return Err(CycleError(stuck));
    }
    Ok(order)
}

/// [`construction_order`] over every object of the store, by creation order.
pub fn store_construction_order(store: &SceneGraph) -> Result<Vec<ObjectId>, CycleError> {
    let mut objects: Vec<ObjectId> = store.nodes().map(|n| n.id().clone()).collect();
    objects.sort_by_key(|id| store.creation_order(id.as_str()));
    let edges: Vec<(ObjectId, ObjectId)> = store
        .edges()
        .filter(|e| e.strength == Strength::Strong)
        .map(|e| (e.from.clone(), e.to.clone()))
        .collect();
    construction_order(&objects, &edges)
}
