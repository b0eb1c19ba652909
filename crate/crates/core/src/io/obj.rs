//! Wavefront OBJ export: one `o` group per object, eight vertices and twelve
//! outward-facing triangles per block.

use std::fmt::Write;

use crate::graph::SceneGraph;

pub const OBJ_HEADER: &str = "# blockscene export: one group per object, 8 vertices and 12 triangles per block\n";

/// Triangles over [`crate::geometry::Aabb::corners`] indices, counter-clockwise seen from outside.
pub const BLOCK_FACES: [[usize; 3]; 12] = [
    [0, 4, 6],
    [0, 6, 2],
    [1, 3, 7],
    [1, 7, 5],
    [0, 1, 5],
    [0, 5, 4],
    [2, 6, 7],
    [2, 7, 3],
    [0, 2, 3],
    [0, 3, 1],
    [4, 5, 7],
    [4, 7, 6],
];

// -0.0 prints as "-0"
fn num(x: f64) -> f64 {
    x + 0.0
}

pub fn scene_to_obj(scene: &SceneGraph) -> String {
    let mut out = String::from(OBJ_HEADER);
    let mut base = 1usize;
    for node in scene.nodes() {
        let _ = writeln!(out, "o {}", node.id());
        for block in node.object.blocks() {
            for c in block.aabb().corners() {
                let _ = writeln!(out, "v {} {} {}", num(c.x), num(c.y), num(c.z));
            }
            for [a, b, c] in BLOCK_FACES {
                let _ = writeln!(out, "f {} {} {}", base + a, base + b, base + c);
            }
            base += 8;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::geometry::{Block, ObjectInstance, Vec3};
    use crate::graph::SceneNode;

    fn scene(objects: &[(&str, Vec<[f64; 3]>)]) -> SceneGraph {
        let mut g = SceneGraph::new();
        for (id, centers) in objects {
            let blocks = centers.iter().map(|c| Block::from_arrays(*c, [1.0, 2.0, 0.5]).unwrap()).collect();
            g.add_object(SceneNode::new(ObjectInstance::new(*id, *id, blocks).unwrap(), "t")).unwrap();
        }
        g
    }

    #[test]
    fn empty_scene_is_header_only() {
        assert_eq!(scene_to_obj(&SceneGraph::new()), OBJ_HEADER);
    }

    #[test]
    fn unit_cube_counts() {
        let text = scene_to_obj(&scene(&[("cube", vec![[0.0; 3]])]));
        assert_eq!(text.lines().filter(|l| l.starts_with("v ")).count(), 8);
        assert_eq!(text.lines().filter(|l| l.starts_with("f ")).count(), 12);
    }

    #[test]
    fn groups_in_id_order() {
        let text = scene_to_obj(&scene(&[("zeta", vec![[0.0; 3]]), ("alpha", vec![[3.0, 0.0, 0.0], [5.0, 0.0, 0.0]]), ("mid", vec![[0.0; 3]])]));
        let groups: Vec<_> = text.lines().filter_map(|l| l.strip_prefix("o ")).collect();
        assert_eq!(groups, ["alpha", "mid", "zeta"]);
        let last_face = text.lines().rfind(|l| l.starts_with("f ")).unwrap();
        assert!(last_face.split(' ').skip(1).all(|i| i.parse::<usize>().unwrap() <= 32));
    }

    #[test]
    fn triangles_are_closed_and_outward() {
        // every directed edge appears once and its reverse once
        let mut edges = BTreeMap::new();
        for [a, b, c] in BLOCK_FACES {
            for (p, q) in [(a, b), (b, c), (c, a)] {
                *edges.entry((p, q)).or_insert(0) += 1;
            }
        }
        assert_eq!(edges.len(), 36);
        assert!(edges.iter().all(|(&(p, q), &n)| n == 1 && edges.get(&(q, p)) == Some(&1)));

        let corners = Block::from_arrays([0.0; 3], [2.0, 2.0, 2.0]).unwrap().aabb().corners();
        for [a, b, c] in BLOCK_FACES {
            let (u, v) = (corners[b] - corners[a], corners[c] - corners[a]);
            let n = Vec3::new(u.y * v.z - u.z * v.y, u.z * v.x - u.x * v.z, u.x * v.y - u.y * v.x);
            let centroid = (corners[a] + corners[b] + corners[c]) * (1.0 / 3.0);
            assert!(n.x * centroid.x + n.y * centroid.y + n.z * centroid.z > 0.0);
        }
    }
}
