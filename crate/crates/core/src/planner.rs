//! The upstream planning stages: scenery designer, object designer and object
//! manufacturer, each one backend round trip followed by validation, and the
//! pipeline that chains them with the arranger.
//!
//! Nothing a backend returns reaches the store without passing the checks in
//! this module.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::arranger::{place_object, store_construction_order, ArrangeError, ArrangerOptions, Placement, PlacementTask, RoughRelation};
use crate::backend::{BackendError, PlannerBackend, MANUFACTURE, OBJECT_DESIGN, SCENE_PLAN};
use crate::constraint::{validate_distance, Constraint, ConstraintKind, GapMode};
use crate::geometry::{Aabb, Axis, Block, Extents, ObjectId, ObjectInstance, Vec3};
use crate::graph::{GraphError, RelationEdge, SceneGraph, SceneNode, Strength};

/// Relative per-axis deviation allowed between designed and manufactured extents.
pub const EXTENT_BAND: f64 = 0.2;
/// Proposed positions must lie within this many largest-extents of the strong reference's center.
pub const PROXIMITY_FACTOR: f64 = 2.0;
/// Tolerance for the intra-object part relations of a design.
pub const PART_TOLERANCE: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum Stage {
    Scene,
    Object,
    Manufacture,
    Arrange,
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Stage::Scene => "scene",
            Stage::Object => "object",
            Stage::Manufacture => "manufacture",
            Stage::Arrange => "arrange",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StageError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("response does not match {schema}: {message}\nraw response: {raw}")]
    Schema { schema: &'static str, message: String, raw: Value },
    #[error("{0}")]
    Invalid(String),
    #[error(transparent)]
    Graph(#[from] GraphError),
    #[error(transparent)]
    Arrange(#[from] ArrangeError),
}

impl StageError {
    pub fn is_retryable(&self) -> bool {
        match self {
            StageError::Backend(e) => e.is_retryable(),
            StageError::Arrange(e) => e.is_retryable(),
            _ => false,
        }
    }

    /// The offending backend response, when the failure was a schema mismatch.
    pub fn raw_response(&self) -> Option<&Value> {
        match self {
            StageError::Schema { raw, .. } => Some(raw),
            _ => None,
        }
    }
}

fn invalid(msg: impl Into<String>) -> StageError {
    StageError::Invalid(msg.into())
}

fn decode<T: DeserializeOwned>(raw: Value, schema: &'static str) -> Result<T, StageError> {
    let mismatch = |message: String, raw: Value| StageError::Schema { schema, message, raw };
    match raw.get("schema").and_then(Value::as_str) {
        Some(s) if s == schema => {}
        Some(s) => return Err(mismatch(format!("schema is `{s}`"), raw)),
        None => return Err(mismatch("missing field `schema`".into(), raw)),
    }
    serde_json::from_value(raw.clone()).map_err(|e| mismatch(e.to_string(), raw))
}

fn parse_kind(name: &str, field: &str) -> Result<ConstraintKind, StageError> {
    ConstraintKind::parse(name).map_err(|e| invalid(format!("{field}: {e}")))
}

fn positive_extents(e: [f64; 3], field: &str) -> Result<Extents, StageError> {
    Extents::try_from(e).map_err(|_| invalid(format!("{field}: non-positive extent {e:?}")))
}

/// Lowercased, whitespace-collapsed request text; the scene stage's fixture key.
pub fn normalize_request(text: &str) -> String {
    text.split_whitespace().map(str::to_lowercase).collect::<Vec<_>>().join(" ")
}

// ---------------------------------------------------------------- scene plan

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedObject {
    pub name: ObjectId,
    #[serde(default)]
    pub description: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PlannedRelation {
    pub movable: ObjectId,
    pub kind: ConstraintKind,
    pub reference: ObjectId,
    pub distance: f64,
    pub strength: Strength,
    #[serde(skip_serializing_if = "GapMode::is_exact")]
    pub gap: GapMode,
}

impl PlannedRelation {
    pub fn edge(&self) -> RelationEdge {
        RelationEdge { gap: self.gap, ..RelationEdge::new(self.reference.clone(), self.movable.clone(), self.kind, self.distance, self.strength) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SceneryPlan {
    pub scene_name: String,
    pub objects: Vec<PlannedObject>,
    pub relations: Vec<PlannedRelation>,
}

impl SceneryPlan {
    pub fn object(&self, name: &str) -> Option<&PlannedObject> {
        self.objects.iter().find(|o| o.name.as_str() == name)
    }

    pub fn relations_of<'a>(&'a self, movable: &'a str) -> impl Iterator<Item = &'a PlannedRelation> + 'a {
        self.relations.iter().filter(move |r| r.movable.as_str() == movable)
    }

    /// Planned objects in placement order: strong references before their dependents.
    pub fn construction_order(&self) -> Result<Vec<ObjectId>, StageError> {
        let ids: Vec<ObjectId> = self.objects.iter().map(|o| o.name.clone()).collect();
        let edges: Vec<(ObjectId, ObjectId)> = self
            .relations
            .iter()
            .filter(|r| r.strength == Strength::Strong)
            .map(|r| (r.reference.clone(), r.movable.clone()))
            .collect();
        crate::arranger::construction_order(&ids, &edges).map_err(|e| invalid(e.to_string()))
    }
}

#[derive(Deserialize)]
struct ScenePlanDoc {
    scene_name: String,
    objects: Vec<PlannedObject>,
    #[serde(default)]
    relations: Vec<RelationDoc>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct RelationDoc {
    movable: ObjectId,
    kind: String,
    reference: ObjectId,
    #[serde(default)]
    distance: f64,
    #[serde(default)]
    strength: Option<Strength>,
    #[serde(default)]
    gap: GapMode,
}

/// Check a scene plan against itself and the existing store.
pub fn validate_plan(doc: Value, store: &SceneGraph) -> Result<SceneryPlan, StageError> {
    let doc: ScenePlanDoc = decode(doc, SCENE_PLAN)?;
    if doc.objects.is_empty() {
        return Err(invalid("plan has no objects"));
    }
    let mut names = BTreeSet::new();
    for (i, o) in doc.objects.iter().enumerate() {
        if o.name.as_str().trim().is_empty() {
            return Err(invalid(format!("objects[{i}].name is empty")));
        }
        if !names.insert(o.name.as_str()) {
            return Err(invalid(format!("duplicate object in plan: {}", o.name)));
        }
        if store.contains(o.name.as_str()) {
            return Err(invalid(format!("plan rebuilds existing object: {}", o.name)));
        }
    }
    let mut relations = Vec::with_capacity(doc.relations.len());
    for (i, r) in doc.relations.into_iter().enumerate() {
        let kind = parse_kind(&r.kind, &format!("relations[{i}].kind"))?;
        if !names.contains(r.movable.as_str()) {
            return Err(invalid(format!("relations[{i}].movable: `{}` is not a planned object", r.movable)));
        }
        if !names.contains(r.reference.as_str()) && !store.contains(r.reference.as_str()) {
            return Err(invalid(format!("relations[{i}].reference: unknown object `{}`", r.reference)));
        }
        if r.movable == r.reference {
            return Err(invalid(format!("relations[{i}]: `{}` relates to itself", r.movable)));
        }
        validate_distance(kind, r.distance).map_err(|e| invalid(format!("relations[{i}].distance: {e}")))?;
        relations.push(PlannedRelation {
            movable: r.movable,
            kind,
            reference: r.reference,
            distance: r.distance,
            strength: r.strength.unwrap_or(Strength::Strong),
            gap: r.gap,
        });
    }
    let plan = SceneryPlan { scene_name: doc.scene_name, objects: doc.objects, relations };
    plan.construction_order()?;
    Ok(plan)
}

pub fn design_scene(request: &str, store: &SceneGraph, backend: &dyn PlannerBackend) -> Result<SceneryPlan, StageError> {
    let payload = json!({ "request": request, "scene": store.snapshot() });
    let raw = backend.scene(&normalize_request(request), payload)?;
    validate_plan(raw, store)
}

// ------------------------------------------------------------ object design

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartRelation {
    pub kind: ConstraintKind,
    pub reference: String,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartDesign {
    pub name: String,
    pub extents: Extents,
    pub relations: Vec<PartRelation>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ObjectDesign {
    pub name: ObjectId,
    pub overall_extents: Extents,
    pub parts: Vec<PartDesign>,
}

#[derive(Deserialize)]
struct ObjectDesignDoc {
    name: ObjectId,
    overall_extents: [f64; 3],
    parts: Vec<PartDoc>,
}

#[derive(Deserialize)]
struct PartDoc {
    name: String,
    extents: [f64; 3],
    #[serde(default)]
    relations: Vec<PartRelationDoc>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct PartRelationDoc {
    kind: String,
    reference: String,
    #[serde(default)]
    distance: f64,
}

pub fn validate_design(doc: Value, expected_name: &str) -> Result<ObjectDesign, StageError> {
    let doc: ObjectDesignDoc = decode(doc, OBJECT_DESIGN)?;
    if doc.name.as_str() != expected_name {
        return Err(invalid(format!("design is for `{}`, expected `{expected_name}`", doc.name)));
    }
    let overall_extents = positive_extents(doc.overall_extents, "overall_extents")?;
    if doc.parts.is_empty() {
        return Err(invalid("design has no parts"));
    }
    let mut declared = BTreeSet::new();
    for (i, p) in doc.parts.iter().enumerate() {
        if !declared.insert(p.name.as_str()) {
            return Err(invalid(format!("parts[{i}]: duplicate part `{}`", p.name)));
        }
    }
    let mut parts = Vec::with_capacity(doc.parts.len());
    for (i, p) in doc.parts.iter().enumerate() {
        let extents = positive_extents(p.extents, &format!("parts[{i}].extents"))?;
        let mut relations = Vec::new();
        for (j, r) in p.relations.iter().enumerate() {
            let field = format!("parts[{i}].relations[{j}]");
            let kind = parse_kind(&r.kind, &format!("{field}.kind"))?;
            if !declared.contains(r.reference.as_str()) || r.reference == p.name {
                return Err(invalid(format!("{field}.reference: undeclared part `{}`", r.reference)));
            }
            validate_distance(kind, r.distance).map_err(|e| invalid(format!("{field}.distance: {e}")))?;
            relations.push(PartRelation { kind, reference: r.reference.clone(), distance: r.distance });
        }
        parts.push(PartDesign { name: p.name.clone(), extents, relations });
    }
    Ok(ObjectDesign { name: doc.name, overall_extents, parts })
}

fn reference_context(store: &SceneGraph, plan: &SceneryPlan, name: &str) -> BTreeMap<String, Value> {
    plan.relations_of(name)
        .filter_map(|r| store.object(r.reference.as_str()))
        .map(|o| {
            let b = o.bounds();
            (o.id().as_str().to_string(), json!({ "center": b.center(), "extents": b.extents() }))
        })
        .collect()
}

pub fn design_object(name: &str, plan: &SceneryPlan, store: &SceneGraph, backend: &dyn PlannerBackend) -> Result<ObjectDesign, StageError> {
    let planned = plan.object(name).ok_or_else(|| invalid(format!("`{name}` is not in the plan")))?;
    let payload = json!({
        "name": planned.name,
        "description": planned.description,
        "scene_name": plan.scene_name,
        "relations": plan.relations_of(name).collect::<Vec<_>>(),
        "references": reference_context(store, plan, name),
        "scene": store.snapshot(),
    });
    validate_design(backend.object(name, payload)?, name)
}

// -------------------------------------------------------------- manufacture

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PartViolation {
    pub part: String,
    pub kind: ConstraintKind,
    pub reference: String,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ManufactureResult {
    /// Blocks already translated to the proposed position.
    pub object: ObjectInstance,
    pub proposed_position: Vec3,
    pub part_violations: Vec<PartViolation>,
}

#[derive(Deserialize)]
struct ManufactureDoc {
    name: ObjectId,
    proposed_position: [f64; 3],
    blocks: Vec<BlockDoc>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct BlockDoc {
    part: String,
    centroid: [f64; 3],
    extents: [f64; 3],
}

fn band_violations(designed: &Extents, built: Vec3) -> Vec<Axis> {
    let d = designed.as_vec();
    Axis::ALL
        .into_iter()
        .filter(|&a| (built[a] - d[a]).abs() > EXTENT_BAND * d[a] * (1.0 + 1e-12))
        .collect()
}

fn axes(list: &[Axis]) -> String {
    list.iter().map(|a| format!("{a:?}").to_lowercase()).collect::<Vec<_>>().join(", ")
}

/// Validate manufactured blocks against the design. `strong_reference` is the
/// bounds of the object's strong reference, if it has one.
pub fn validate_manufacture(
    doc: Value,
    design: &ObjectDesign,
    strong_reference: Option<&Aabb>,
) -> Result<ManufactureResult, StageError> {
    let doc: ManufactureDoc = decode(doc, MANUFACTURE)?;
    if doc.name != design.name {
        return Err(invalid(format!("blocks are for `{}`, expected `{}`", doc.name, design.name)));
    }
    let position = Vec3::from(doc.proposed_position);
    if !position.is_finite() {
        return Err(invalid("proposed_position is not finite"));
    }
    if doc.blocks.is_empty() {
        return Err(invalid("no blocks"));
    }
    let mut by_part: BTreeMap<&str, Aabb> = BTreeMap::new();
    let mut blocks = Vec::with_capacity(doc.blocks.len());
    for (i, b) in doc.blocks.iter().enumerate() {
        let Some(part) = design.parts.iter().find(|p| p.name == b.part) else {
            return Err(invalid(format!("blocks[{i}].part: undeclared part `{}`", b.part)));
        };
        let extents = positive_extents(b.extents, &format!("blocks[{i}].extents"))?;
        let bad = band_violations(&part.extents, extents.as_vec());
        if !bad.is_empty() {
            return Err(invalid(format!(
                "blocks[{i}] (part `{}`) deviates more than 20% from the design extents on axes: {}",
                part.name,
                axes(&bad)
            )));
        }
        let block = Block::new(b.centroid.into(), extents).map_err(|e| invalid(format!("blocks[{i}]: {e}")))?;
        by_part.entry(b.part.as_str()).and_modify(|a| *a = a.union(&block.aabb())).or_insert(block.aabb());
        blocks.push(block.translated(position));
    }
    if let Some(part) = design.parts.iter().find(|p| !by_part.contains_key(p.name.as_str())) {
        return Err(invalid(format!("part `{}` has no blocks", part.name)));
    }
    let object = ObjectInstance::new(design.name.clone(), design.name.as_str(), blocks).map_err(|e| invalid(e.to_string()))?;
    let bad = band_violations(&design.overall_extents, object.bounds().extents());
    if !bad.is_empty() {
        return Err(invalid(format!("overall bounds deviate more than 20% from the design extents on axes: {}", axes(&bad))));
    }
    if let Some(r) = strong_reference {
        let reach = PROXIMITY_FACTOR * r.extents().max_component();
        let gap = (position - r.center()).norm();
        if gap > reach {
            return Err(invalid(format!(
                "proposed_position is {gap:.3} from its strong reference's center, more than {PROXIMITY_FACTOR} x its largest extent ({reach:.3})"
            )));
        }
    }

    let mut part_violations = Vec::new();
    for part in &design.parts {
        for rel in &part.relations {
            let (Some(m), Some(r)) = (by_part.get(part.name.as_str()), by_part.get(rel.reference.as_str())) else { continue };
            let c = Constraint {
                kind: rel.kind,
                reference: ObjectId::new(rel.reference.as_str()),
                movable: ObjectId::new(part.name.as_str()),
                distance: rel.distance,
                gap: GapMode::Exact,
            };
            let residual = c.residual(r, m);
            if !c.satisfied(r, m, PART_TOLERANCE) {
                log::warn!("{}: part relation {} {} {} off by {residual:.4}", design.name, part.name, rel.kind, rel.reference);
                part_violations.push(PartViolation { part: part.name.clone(), kind: rel.kind, reference: rel.reference.clone(), residual });
            }
        }
    }
    Ok(ManufactureResult { object, proposed_position: position, part_violations })
}

pub fn manufacture_object(
    design: &ObjectDesign,
    strong_reference: Option<&ObjectId>,
    store: &SceneGraph,
    backend: &dyn PlannerBackend,
) -> Result<ManufactureResult, StageError> {
    let reference = match strong_reference {
        Some(id) => Some(store.object(id.as_str()).ok_or_else(|| GraphError::UnknownObject(id.clone()))?.bounds()),
        None => None,
    };
    let payload = json!({
        "design": design,
        "strong_reference": strong_reference.map(|id| json!({
            "id": id,
            "center": reference.map(|b| b.center()),
            "extents": reference.map(|b| b.extents()),
        })),
    });
    let raw = backend.manufacture(design.name.as_str(), payload)?;
    validate_manufacture(raw, design, reference.as_ref())
}

// ----------------------------------------------------------------- pipeline

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOptions {
    pub arranger: ArrangerOptions,
    /// Extra attempts per stage after a retryable failure.
    pub stage_retries: usize,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self { arranger: ArrangerOptions::default(), stage_retries: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub struct PipelineError {
    pub stage: Stage,
    pub object: Option<ObjectId>,
    pub source: StageError,
}

impl fmt::Display for PipelineError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match &self.object {
            Some(o) => write!(f, "{} stage failed for `{o}`: {}", self.stage, self.source),
            None => write!(f, "{} stage failed: {}", self.stage, self.source),
        }
    }
}

impl PipelineError {
    pub fn is_retryable(&self) -> bool {
        self.source.is_retryable()
    }

    pub fn is_rejection(&self) -> bool {
        matches!(self.source, StageError::Arrange(ArrangeError::Rejected { .. }))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ObjectReport {
    pub name: ObjectId,
    pub strong_reference: Option<ObjectId>,
    pub part_violations: Vec<PartViolation>,
    /// None for root objects, which stay where the manufacturer put them.
    pub placement: Option<Placement>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineReport {
    pub plan: SceneryPlan,
    pub objects: Vec<ObjectReport>,
}

fn fail(stage: Stage, object: Option<&ObjectId>) -> impl FnOnce(StageError) -> PipelineError + '_ {
    move |source| PipelineError { stage, object: object.cloned(), source }
}

fn with_retries<T>(retries: usize, mut f: impl FnMut() -> Result<T, StageError>) -> Result<T, StageError> {
    let mut attempt = 0;
    loop {
        match f() {
            Err(e) if e.is_retryable() && attempt < retries => {
                attempt += 1;
                log::warn!("retrying after: {e}");
            }
            other => return other,
        }
    }
}

/// Run every stage for `request`. Objects are committed to `store` one at a
/// time, so on failure the store holds exactly the objects finished before it.
pub fn run_pipeline(
    request: &str,
    store: &mut SceneGraph,
    backend: &dyn PlannerBackend,
    options: &PipelineOptions,
) -> Result<PipelineReport, PipelineError> {
    let retries = options.stage_retries;

    let plan = with_retries(retries, || design_scene(request, store, backend)).map_err(fail(Stage::Scene, None))?;
    let order = plan.construction_order().map_err(fail(Stage::Scene, None))?;
    let mut reports = Vec::with_capacity(order.len());

    for (index, name) in order.iter().enumerate() {
        let design = with_retries(retries, || design_object(name.as_str(), &plan, store, backend)).map_err(fail(Stage::Object, Some(name)))?;

        // Stage the node and its edges on a copy to learn the strong reference.
        let mut work = store.clone();
        let related: Vec<&PlannedRelation> = plan
            .relations
            .iter()
            .filter(|r| (r.movable == *name && work.contains(r.reference.as_str())) || (r.reference == *name && work.contains(r.movable.as_str())))
            .collect();
        let placeholder = ObjectInstance::new(name.clone(), name.as_str(), vec![Block::new(Vec3::ZERO, design.overall_extents).expect("finite")])
            .expect("non-empty");
        let placeholder_graph = {
            let mut g = work.clone();
            g.add_object(SceneNode::new(placeholder, "planner")).map_err(|e| fail(Stage::Manufacture, Some(name))(StageError::from(e)))?;
            for r in &related {
                g.add_relation(r.edge()).map_err(|e| fail(Stage::Manufacture, Some(name))(StageError::from(e)))?;
            }
            g
        };
        let is_root = plan.relations_of(name.as_str()).next().is_none();
        let strong = if is_root {
            None
        } else {
            let (id, _) = placeholder_graph
                .strong_reference_with(name.as_str(), &options.arranger.budget)
                .map_err(|e| fail(Stage::Arrange, Some(name))(StageError::from(e)))?;
            Some(id)
        };

        let made = with_retries(retries, || manufacture_object(&design, strong.as_ref(), store, backend))
            .map_err(fail(Stage::Manufacture, Some(name)))?;

        let mut node = SceneNode::new(made.object.clone(), "planner");
        if !plan.scene_name.is_empty() {
            node = node.with_tags([plan.scene_name.clone()]);
        }
        work.add_object(node).map_err(|e| fail(Stage::Manufacture, Some(name))(StageError::from(e)))?;
        for r in &related {
            work.add_relation(r.edge()).map_err(|e| fail(Stage::Arrange, Some(name))(StageError::from(e)))?;
        }

        let placement = if is_root {
            None
        } else {
            let task = PlacementTask {
                movable: name.clone(),
                proposed_position: made.proposed_position,
                rough_relations: plan
                    .relations_of(name.as_str())
                    .map(|r| RoughRelation { reference: r.reference.clone(), kind: r.kind, distance: Some(r.distance) })
                    .collect(),
            };
            let mut arranger = options.arranger.clone();
            let seed = arranger.ga.seed.wrapping_add(index as u64);
            arranger.ga = arranger.ga.with_seed(seed);
            let placed = with_retries(retries, || place_object(&mut work, &task, backend, &arranger).map_err(StageError::from))
                .map_err(fail(Stage::Arrange, Some(name)))?;
            Some(placed)
        };

        *store = work;
        reports.push(ObjectReport { name: name.clone(), strong_reference: strong, part_violations: made.part_violations, placement });
    }
    debug_assert!(store_construction_order(store).is_ok());
    Ok(PipelineReport { plan, objects: reports })
}
