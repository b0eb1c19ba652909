//! Independent oracles shared by the integration and acceptance tests.
//!
//! Nothing here calls the library's residual, overlap or contact code. Boxes
//! are handled as plain `[lo, hi]` arrays so the oracles can't inherit a bug
//! from `Aabb`.

#![allow(dead_code)]

use blockscene::constraint::{ConstraintKind, GapMode};
use blockscene::geometry::{Aabb, Block, ObjectInstance, Vec3};
use blockscene::graph::{SceneGraph, SceneNode};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// `[[min x, min y, min z], [max x, max y, max z]]`
pub type RawBox = [[f64; 3]; 2];

pub fn raw(b: &Aabb) -> RawBox {
    let (lo, hi) = (b.min(), b.max());
    [[lo.x, lo.y, lo.z], [hi.x, hi.y, hi.z]]
}

fn mid(b: &RawBox, axis: usize) -> f64 {
    (b[0][axis] + b[1][axis]) / 2.0
}

/// Direct transcription of each relation's defining condition.
///
/// Frame: x runs back (low) to front (high), y left to right, z bottom to top.
/// Half-side relations place the movable center relative to the reference
/// center; directional relations put the movable box on that side of the
/// reference at gap `d`.
pub fn predicate(kind: ConstraintKind, d: f64, gap: GapMode, r: &RawBox, m: &RawBox, tol: f64) -> bool {
    use ConstraintKind::*;
    let eq = |a: f64, b: f64| (a - b).abs() <= tol;
    let gap_ok = |measured: f64| match gap {
        GapMode::Exact => (measured - d).abs() <= tol,
        GapMode::AtLeast => measured >= d - tol,
    };
    let (rl, rh, ml, mh) = (r[0], r[1], m[0], m[1]);
    match kind {
        Concentric => {
            let dx = mid(m, 0) - mid(r, 0);
            let dy = mid(m, 1) - mid(r, 1);
            let dz = mid(m, 2) - mid(r, 2);
            (dx * dx + dy * dy + dz * dz).sqrt() <= tol
        }
        XAligned => eq(mid(m, 0), mid(r, 0)),
        YAligned => eq(mid(m, 1), mid(r, 1)),
        ZAligned => eq(mid(m, 2), mid(r, 2)),
        FrontHalf => mid(m, 0) >= mid(r, 0) - tol,
        BackHalf => mid(m, 0) <= mid(r, 0) + tol,
        RightHalf => mid(m, 1) >= mid(r, 1) - tol,
        LeftHalf => mid(m, 1) <= mid(r, 1) + tol,
        UpperHalf => mid(m, 2) >= mid(r, 2) - tol,
        LowerHalf => mid(m, 2) <= mid(r, 2) + tol,
        Front => gap_ok(ml[0] - rh[0]),
        Back => gap_ok(rl[0] - mh[0]),
        Right => gap_ok(ml[1] - rh[1]),
        Left => gap_ok(rl[1] - mh[1]),
        Above => gap_ok(ml[2] - rh[2]),
        Below => gap_ok(rl[2] - mh[2]),
        CoplanarFront => eq(mh[0], rh[0]),
        CoplanarBack => eq(ml[0], rl[0]),
        CoplanarRight => eq(mh[1], rh[1]),
        CoplanarLeft => eq(ml[1], rl[1]),
        CoplanarTop => eq(mh[2], rh[2]),
        CoplanarBottom => eq(ml[2], rl[2]),
    }
}

/// A box with dyadic coordinates (multiples of 1/8 in [-4, 4]), so sums and
/// differences are exact in f64. Small ranges make coincidences common.
pub fn dyadic_box(rng: &mut ChaCha8Rng) -> Aabb {
    let mut lo = [0.0; 3];
    let mut hi = [0.0; 3];
    for a in 0..3 {
        let l = rng.random_range(-16i32..16) as f64 / 8.0;
        let len = rng.random_range(1i32..=12) as f64 / 8.0;
        lo[a] = l;
        hi[a] = l + len;
    }
    Aabb::new(lo.into(), hi.into()).unwrap()
}

/// A pair built so that roughly half of the pairs satisfy `kind` exactly.
pub fn dyadic_pair(kind: ConstraintKind, rng: &mut ChaCha8Rng) -> (Aabb, Aabb, f64) {
    use ConstraintKind::*;
    let r = dyadic_box(rng);
    let mut m = dyadic_box(rng);
    let d = if kind.uses_distance() { rng.random_range(0i32..4) as f64 / 8.0 } else { 0.0 };
    if rng.random_bool(0.5) {
        let (rl, rh, ml, mh) = (r.min(), r.max(), m.min(), m.max());
        let shift = match kind {
            Concentric => r.center() - m.center(),
            XAligned => Vec3::new(r.center().x - m.center().x, 0.0, 0.0),
            YAligned => Vec3::new(0.0, r.center().y - m.center().y, 0.0),
            ZAligned => Vec3::new(0.0, 0.0, r.center().z - m.center().z),
            Front => Vec3::new(rh.x + d - ml.x, 0.0, 0.0),
            Back => Vec3::new(rl.x - d - mh.x, 0.0, 0.0),
            Right => Vec3::new(0.0, rh.y + d - ml.y, 0.0),
            Left => Vec3::new(0.0, rl.y - d - mh.y, 0.0),
            Above => Vec3::new(0.0, 0.0, rh.z + d - ml.z),
            Below => Vec3::new(0.0, 0.0, rl.z - d - mh.z),
            CoplanarFront => Vec3::new(rh.x - mh.x, 0.0, 0.0),
            CoplanarBack => Vec3::new(rl.x - ml.x, 0.0, 0.0),
            CoplanarRight => Vec3::new(0.0, rh.y - mh.y, 0.0),
            CoplanarLeft => Vec3::new(0.0, rl.y - ml.y, 0.0),
            CoplanarTop => Vec3::new(0.0, 0.0, rh.z - mh.z),
            CoplanarBottom => Vec3::new(0.0, 0.0, rl.z - ml.z),
            // half-side kinds hold on half of random pairs already
            _ => Vec3::ZERO,
        };
        m = m.translated(shift);
    }
    (r, m, d)
}

// ------------------------------------------------------------------ scenes

/// 5 to 15 blocks in 1 to 5 objects packed into a small region.
pub fn random_block_scene(seed: u64) -> SceneGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(5..=15usize);
    let objects = rng.random_range(1..=5usize).min(n);
    let mut groups: Vec<Vec<Block>> = vec![Vec::new(); objects];
    for i in 0..n {
        let c = [rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5), rng.random_range(-1.5..1.5)];
        let e = [rng.random_range(0.3..1.6), rng.random_range(0.3..1.6), rng.random_range(0.3..1.6)];
        let owner = if i < objects { i } else { rng.random_range(0..objects) };
        groups[owner].push(Block::from_arrays(c, e).unwrap());
    }
    scene_of(groups)
}

/// Blocks on a coarse dyadic lattice: exact face contacts occur often.
pub fn lattice_block_scene(seed: u64) -> SceneGraph {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=14usize);
    let objects = rng.random_range(1..=4usize).min(n);
    let mut groups: Vec<Vec<Block>> = vec![Vec::new(); objects];
    for i in 0..n {
        let lo: [f64; 3] = std::array::from_fn(|_| rng.random_range(0i32..8) as f64 * 0.5);
        let len: [f64; 3] = std::array::from_fn(|_| rng.random_range(1i32..=3) as f64 * 0.5);
        let c = std::array::from_fn(|a| lo[a] + len[a] / 2.0);
        let owner = if i < objects { i } else { rng.random_range(0..objects) };
        groups[owner].push(Block::from_arrays(c, len).unwrap());
    }
    scene_of(groups)
}

pub fn scene_of(groups: Vec<Vec<Block>>) -> SceneGraph {
    let mut g = SceneGraph::new();
    for (i, blocks) in groups.into_iter().enumerate() {
        let id = format!("o{i}");
        g.add_object(SceneNode::new(ObjectInstance::new(id.as_str(), id.as_str(), blocks).unwrap(), "oracle")).unwrap();
    }
    g
}

/// (object index, raw box) for every block, in node-id then block order.
pub fn flat_blocks(scene: &SceneGraph) -> Vec<(usize, RawBox)> {
    scene
        .nodes()
        .enumerate()
        .flat_map(|(i, n)| n.object.blocks().iter().map(move |b| (i, raw(&b.aabb()))).collect::<Vec<_>>())
        .collect()
}

// ------------------------------------------------------------------- voxels

struct Grid {
    origin: [f64; 3],
    cell: [f64; 3],
    n: usize,
}

impl Grid {
    fn over(blocks: &[(usize, RawBox)], n: usize) -> Grid {
        let mut lo = [f64::INFINITY; 3];
        let mut hi = [f64::NEG_INFINITY; 3];
        for (_, b) in blocks {
            for a in 0..3 {
                lo[a] = lo[a].min(b[0][a]);
                hi[a] = hi[a].max(b[1][a]);
            }
        }
        Grid { origin: lo, cell: std::array::from_fn(|a| (hi[a] - lo[a]) / n as f64), n }
    }

    /// Cells along `axis` whose centers fall inside `[lo, hi)`.
    fn count(&self, axis: usize, lo: f64, hi: f64) -> usize {
        (0..self.n)
            .filter(|&k| {
                let c = self.origin[axis] + (k as f64 + 0.5) * self.cell[axis];
                c >= lo && c < hi
            })
            .count()
    }

    fn center(&self, idx: [usize; 3]) -> [f64; 3] {
        std::array::from_fn(|a| self.origin[a] + (idx[a] as f64 + 0.5) * self.cell[a])
    }
}

fn inside(b: &RawBox, p: [f64; 3]) -> bool {
    (0..3).all(|a| p[a] >= b[0][a] && p[a] < b[1][a])
}

/// Overlap score by voxel counting on an `n`-per-axis grid over the scene
/// bounds. Per pair of blocks from different objects, cells inside both are
/// counted axis by axis (a box's cell set is a product of per-axis runs).
pub fn voxel_overlap(scene: &SceneGraph, n: usize) -> f64 {
    let blocks = flat_blocks(scene);
    let grid = Grid::over(&blocks, n);
    let cells = |lo: [f64; 3], hi: [f64; 3]| -> usize { (0..3).map(|a| grid.count(a, lo[a], hi[a])).product() };
    let mut shared = 0usize;
    let mut total = 0usize;
    for (i, (oi, bi)) in blocks.iter().enumerate() {
        total += cells(bi[0], bi[1]);
        for (oj, bj) in &blocks[i + 1..] {
            if oi != oj {
                let lo = std::array::from_fn(|a| bi[0][a].max(bj[0][a]));
                let hi = std::array::from_fn(|a| bi[1][a].min(bj[1][a]));
                if (0..3).all(|a| lo[a] < hi[a]) {
                    shared += cells(lo, hi);
                }
            }
        }
    }
    (shared as f64 / total as f64).min(1.0)
}

/// The same score by testing every cell center against every block.
pub fn dense_voxel_overlap(scene: &SceneGraph, n: usize) -> f64 {
    let blocks = flat_blocks(scene);
    let grid = Grid::over(&blocks, n);
    let mut shared = 0usize;
    let mut total = 0usize;
    for i in 0..n {
        for j in 0..n {
            for k in 0..n {
                let p = grid.center([i, j, k]);
                let hits: Vec<usize> = blocks.iter().filter(|(_, b)| inside(b, p)).map(|(o, _)| *o).collect();
                total += hits.len();
                for (x, a) in hits.iter().enumerate() {
                    shared += hits[x + 1..].iter().filter(|b| *b != a).count();
                }
            }
        }
    }
    (shared as f64 / total as f64).min(1.0)
}

// ---------------------------------------------------------------- contacts

/// Indices of blocks whose ε-grown box touches no other block, by double loop.
pub fn brute_isolated(scene: &SceneGraph, eps: f64) -> Vec<usize> {
    let blocks = flat_blocks(scene);
    let touches = |a: &RawBox, b: &RawBox| (0..3).all(|k| a[0][k] - eps <= b[1][k] && b[0][k] <= a[1][k] + eps);
    (0..blocks.len())
        .filter(|&i| (0..blocks.len()).all(|j| i == j || !touches(&blocks[i].1, &blocks[j].1)))
        .collect()
}

// ------------------------------------------------------------------ solver

/// Smallest total error over a cubic grid of motions `[-reach, reach]^3`.
pub fn grid_min_error(f: impl Fn(Vec3) -> f64, reach: f64, steps: usize) -> f64 {
    let at = |k: usize| -reach + 2.0 * reach * k as f64 / steps as f64;
    let mut best = f64::INFINITY;
    for i in 0..=steps {
        for j in 0..=steps {
            for k in 0..=steps {
                best = best.min(f(Vec3::new(at(i), at(j), at(k))));
            }
        }
    }
    best
}

// ------------------------------------------------------------------- graphs

const NAMES: [&str; 8] = ["desk", "lamp", "chair", "wall", "rug", "shelf", "büro", "table 2"];

/// A store built through the public mutation API: objects, relations of both
/// strengths and gap modes, and a few placement updates.
pub fn random_store(seed: u64) -> SceneGraph {
    use blockscene::graph::{RelationEdge, Strength};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut g = SceneGraph::new();
    let n = rng.random_range(0..=NAMES.len());
    for name in &NAMES[..n] {
        let blocks = (0..rng.random_range(1..=4))
            .map(|_| {
                let c = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(0.0..3.0)];
                let e = [rng.random_range(0.01..2.0), rng.random_range(0.01..2.0), rng.random_range(0.01..2.0)];
                Block::from_arrays(c, e).unwrap()
            })
            .collect();
        let node = SceneNode::new(ObjectInstance::new(*name, name.to_uppercase(), blocks).unwrap(), "fuzz")
            .with_tags((0..rng.random_range(0..3)).map(|t| format!("tag{t}")));
        g.add_object(node).unwrap();
    }
    if n >= 2 {
        for _ in 0..rng.random_range(0..12) {
            let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
            if a == b {
                continue;
            }
            let kind = ConstraintKind::ALL[rng.random_range(0..22)];
            let d = if kind.uses_distance() { rng.random_range(0.0..1.0) } else { 0.0 };
            let strength = if rng.random_bool(0.5) { Strength::Strong } else { Strength::Weak };
            let mut edge = RelationEdge::new(NAMES[a], NAMES[b], kind, d, strength);
            if kind.uses_distance() && rng.random_bool(0.3) {
                edge.gap = GapMode::AtLeast;
            }
            g.add_relation(edge).unwrap();
        }
        for _ in 0..rng.random_range(0..4) {
            let v = Vec3::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0));
            g.update_placement(NAMES[rng.random_range(0..n)], v).unwrap();
        }
    }
    g
}

/// Unit cubes `n0..` with random relation edges; budgets are often broken.
pub fn fuzz_relation_graph(seed: u64) -> SceneGraph {
    use blockscene::graph::{RelationEdge, Strength};
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = rng.random_range(2..=7usize);
    let mut g = SceneGraph::new();
    for i in 0..n {
        let c = [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)];
        let id = format!("n{i}");
        g.add_object(SceneNode::new(ObjectInstance::new(id.as_str(), id.as_str(), vec![Block::from_arrays(c, [1.0; 3]).unwrap()]).unwrap(), "fuzz"))
            .unwrap();
    }
    for _ in 0..rng.random_range(0..=24) {
        let (a, b) = (rng.random_range(0..n), rng.random_range(0..n));
        if a == b {
            continue;
        }
        let kind = ConstraintKind::ALL[rng.random_range(0..22)];
        let d = if kind.uses_distance() { rng.random_range(0.0..0.5) } else { 0.0 };
        let strength = if rng.random_bool(0.6) { Strength::Strong } else { Strength::Weak };
        g.add_relation(RelationEdge::new(format!("n{a}"), format!("n{b}"), kind, d, strength)).unwrap();
    }
    g
}

/// Hand-corrupted variants of a valid scene document, each with a label.
pub fn corrupted_documents() -> Vec<(&'static str, String)> {
    let valid = r#"{
  "version": 1,
  "nodes": [
    {"id": "desk", "name": "Desk", "tags": [], "created_by": "t", "blocks": [{"centroid": [0.0, 0.0, 0.5], "extents": [1.0, 1.0, 1.0]}]},
    {"id": "lamp", "name": "Lamp", "tags": [], "created_by": "t", "blocks": [{"centroid": [0.0, 0.0, 1.5], "extents": [0.2, 0.2, 1.0]}]}
  ],
  "edges": [
    {"from": "desk", "to": "lamp", "kind": "above", "distance": 0.0, "strength": "strong"}
  ]
}"#;
    let sub = |from: &str, to: &str| {
        assert!(valid.contains(from), "{from}");
        valid.replacen(from, to, 1)
    };
    vec![
        ("truncated", valid[..valid.len() / 2].to_owned()),
        ("edge to missing node", sub(r#""to": "lamp""#, r#""to": "ghost""#)),
        ("edge from missing node", sub(r#""from": "desk""#, r#""from": "ghost""#)),
        ("unknown kind", sub(r#""kind": "above""#, r#""kind": "hovering""#)),
        ("negative distance", sub(r#""distance": 0.0"#, r#""distance": -1.0"#)),
        ("distance on aligned kind", sub(r#""kind": "above", "distance": 0.0"#, r#""kind": "x_aligned", "distance": 0.5"#)),
        ("duplicate node id", sub(r#""id": "lamp""#, r#""id": "desk""#)),
        ("zero extent", sub("[1.0, 1.0, 1.0]", "[1.0, 0.0, 1.0]")),
        ("negative extent", sub("[0.2, 0.2, 1.0]", "[0.2, -0.2, 1.0]")),
        ("missing blocks", sub(r#", "blocks": [{"centroid": [0.0, 0.0, 1.5], "extents": [0.2, 0.2, 1.0]}]"#, "")),
        ("empty blocks", sub(r#"[{"centroid": [0.0, 0.0, 1.5], "extents": [0.2, 0.2, 1.0]}]"#, "[]")),
        ("wrong version", sub(r#""version": 1"#, r#""version": 2"#)),
        ("unknown top-level field", sub(r#""version": 1,"#, r#""version": 1, "extra": true,"#)),
        ("unknown strength", sub(r#""strength": "strong""#, r#""strength": "medium""#)),
        ("self edge", sub(r#""to": "lamp""#, r#""to": "desk""#)),
        ("short centroid", sub("[0.0, 0.0, 0.5]", "[0.0, 0.5]")),
        ("string coordinate", sub("[0.0, 0.0, 0.5]", r#"[0.0, "zero", 0.5]"#)),
        ("empty id", sub(r#""id": "desk""#, r#""id": """#)),
        ("nodes not an array", sub(r#""nodes": ["#, r#""nodes": {"x": "#).replacen("\n  ],\n  \"edges\"", "\n  },\n  \"edges\"", 1)),
        ("missing kind", sub(r#""kind": "above", "#, "")),
    ]
}
