//! Seeded synthetic workloads: feasible placement problems with a known
//! solution, and random block scenes. Used by the benchmarks and the
//! acceptance suite.

use std::collections::BTreeMap;

use rand::seq::IndexedRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::constraint::{Constraint, ConstraintKind, ConstraintSet, KindFamily};
use crate::geometry::{Aabb, Axis, Block, Face, ObjectId, ObjectInstance, Vec3};
use crate::graph::{SceneGraph, SceneNode};

/// A placement problem whose constraints all hold at `ground_truth`.
#[derive(Debug, Clone)]
pub struct FeasibleTask {
    pub constraints: ConstraintSet,
    pub reference_bounds: BTreeMap<ObjectId, Aabb>,
    /// Movable object at its proposed (perturbed) position.
    pub movable: ObjectInstance,
    /// Motion that satisfies every constraint exactly.
    pub ground_truth: Vec3,
}

fn random_box(rng: &mut ChaCha8Rng, spread: f64) -> Aabb {
    let c = Vec3::new(
        rng.random_range(-spread..spread),
        rng.random_range(-spread..spread),
        rng.random_range(-spread..spread),
    );
    let e = Vec3::new(rng.random_range(0.3..2.0), rng.random_range(0.3..2.0), rng.random_range(0.3..2.0));
    Aabb::from_center_extents(c, e).expect("finite sampled box")
}

fn axis_kinds(axis: Axis) -> [ConstraintKind; 7] {
    use ConstraintKind::*;
    match axis {
        Axis::X => [XAligned, Front, Back, CoplanarFront, CoplanarBack, Front, Back],
        Axis::Y => [YAligned, Left, Right, CoplanarLeft, CoplanarRight, Left, Right],
        Axis::Z => [ZAligned, Above, Below, CoplanarTop, CoplanarBottom, Above, Below],
    }
}

/// Movable-box center coordinate along the kind's axis that satisfies it exactly.
fn solve_axis(kind: ConstraintKind, r: &Aabb, half: f64, d: f64) -> f64 {
    use ConstraintKind::*;
    match kind {
        XAligned | YAligned | ZAligned => r.center()[axis_of(kind)],
        Front => r.face(Face::Front) + d + half,
        Back => r.face(Face::Back) - d - half,
        Right => r.face(Face::Right) + d + half,
        Left => r.face(Face::Left) - d - half,
        Above => r.face(Face::Top) + d + half,
        Below => r.face(Face::Bottom) - d - half,
        CoplanarFront | CoplanarRight | CoplanarTop => r.max()[axis_of(kind)] - half,
        CoplanarBack | CoplanarLeft | CoplanarBottom => r.min()[axis_of(kind)] + half,
        _ => unreachable!("not a single-axis equality kind: {kind}"),
    }
}

fn axis_of(kind: ConstraintKind) -> Axis {
    use ConstraintKind::*;
    match kind {
        XAligned | Front | Back | CoplanarFront | CoplanarBack | FrontHalf | BackHalf => Axis::X,
        YAligned | Left | Right | CoplanarLeft | CoplanarRight | LeftHalf | RightHalf => Axis::Y,
        _ => Axis::Z,
    }
}

/// A feasible problem with 1–5 constraints over 1–3 reference objects.
///
/// Equality relations each pin one axis of the ground-truth position
/// (concentric pins all three); half-side relations are added only in the
/// direction that holds at the ground truth. The movable object starts
/// displaced from the ground truth by up to one search-scale unit per axis.
pub fn feasible_task(seed: u64) -> FeasibleTask {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n_refs = rng.random_range(1..=3usize);
    let refs: Vec<(ObjectId, Aabb)> = (0..n_refs)
        .map(|i| (ObjectId::new(format!("ref{i}")), random_box(&mut rng, 3.0)))
        .collect();
    let extents = Vec3::new(rng.random_range(0.2..1.5), rng.random_range(0.2..1.5), rng.random_range(0.2..1.5));
    let target_count = rng.random_range(1..=5usize);

    let mut center = random_box(&mut rng, 3.0).center();
    let mut constraints: Vec<Constraint> = Vec::new();

    if rng.random_bool(0.15) {
        let (id, r) = refs.choose(&mut rng).unwrap();
        center = r.center();
        constraints.push(Constraint::new(ConstraintKind::Concentric, id.clone(), "mov", 0.0).unwrap());
    } else {
        let mut axes = Axis::ALL.to_vec();
        let pinned = rng.random_range(1..=3usize).min(target_count);
        for _ in 0..pinned {
            let axis = axes.swap_remove(rng.random_range(0..axes.len()));
            let kind = *axis_kinds(axis).choose(&mut rng).unwrap();
            let (id, r) = refs.choose(&mut rng).unwrap();
            let d = if kind.uses_distance() { rng.random_range(0.0..0.5) } else { 0.0 };
            center.set(axis, solve_axis(kind, r, extents[axis] * 0.5, d));
            constraints.push(Constraint::new(kind, id.clone(), "mov", d).unwrap());
        }
    }

    while constraints.len() < target_count {
        let (id, r) = refs.choose(&mut rng).unwrap();
        let axis = Axis::ALL[rng.random_range(0..3)];
        let ahead = center[axis] >= r.center()[axis];
        use ConstraintKind::*;
        let kind = match (axis, ahead) {
            (Axis::X, true) => FrontHalf,
            (Axis::X, false) => BackHalf,
            (Axis::Y, true) => RightHalf,
            (Axis::Y, false) => LeftHalf,
            (Axis::Z, true) => UpperHalf,
            (Axis::Z, false) => LowerHalf,
        };
        debug_assert_eq!(kind.family(), KindFamily::HalfSide);
        constraints.push(Constraint::new(kind, id.clone(), "mov", 0.0).unwrap());
    }

    let spread = extents * 0.5 + Vec3::splat(0.5);
    let offset = Vec3::new(
        rng.random_range(-spread.x..spread.x),
        rng.random_range(-spread.y..spread.y),
        rng.random_range(-spread.z..spread.z),
    );
    let start = center - offset;
    let movable = ObjectInstance::new(
        "mov",
        "movable",
        vec![Block::new(start, extents.try_into().unwrap()).unwrap()],
    )
    .unwrap();
    FeasibleTask {
        constraints: ConstraintSet::new("mov", constraints).unwrap(),
        reference_bounds: refs.into_iter().collect(),
        movable,
        ground_truth: offset,
    }
}

/// A scene of `blocks` unit-ish blocks spread over a few objects, dense enough
/// to produce both overlaps and contacts.
pub fn random_scene(seed: u64, blocks: usize) -> SceneGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let objects = rng.random_range(1..=blocks.clamp(1, 5));
    let mut grouped: Vec<Vec<Block>> = vec![Vec::new(); objects];
    for i in 0..blocks {
        let c = Vec3::new(rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0), rng.random_range(-2.0..2.0));
        let e = [rng.random_range(0.4..2.0), rng.random_range(0.4..2.0), rng.random_range(0.4..2.0)];
        let block = Block::from_arrays(c.into(), e).unwrap();
        grouped[if i < objects { i } else { rng.random_range(0..objects) }].push(block);
    }
    let mut graph = SceneGraph::new();
    for (i, blocks) in grouped.into_iter().enumerate() {
        let id = format!("obj{i:02}");
        let object = ObjectInstance::new(id.as_str(), id.as_str(), blocks).unwrap();
        graph.add_object(SceneNode::new(object, "synth")).unwrap();
    }
    graph
}
