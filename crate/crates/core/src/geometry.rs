//! Spatial primitives: vectors, cuboid blocks, block compositions and their
//! axis-aligned bounds.
//!
//! World frame: `x` runs back → front, `y` runs left → right and `z` runs
//! bottom → top. Every face of an [`Aabb`] therefore maps to one bound of one
//! axis:
//!
//! | face   | coordinate |
//! |--------|------------|
//! | front  | `max.x`    |
//! | back   | `min.x`    |
//! | right  | `max.y`    |
//! | left   | `min.y`    |
//! | top    | `max.z`    |
//! | bottom | `min.z`    |

use std::fmt;
use std::ops::{Add, AddAssign, Index, Mul, Neg, Sub};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("non-finite coordinate in {0}")]
    NonFinite(&'static str),
    #[error("non-positive extent on {axis} axis: {value}")]
    NonPositiveExtent { axis: Axis, value: f64 },
    #[error("inverted bounds on {0} axis")]
    Inverted(Axis),
    #[error("object `{0}` has no blocks")]
    EmptyObject(String),
    #[error("object id must not be empty")]
    EmptyId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Axis {
    X,
    Y,
    Z,
}

impl Axis {
    pub const ALL: [Axis; 3] = [Axis::X, Axis::Y, Axis::Z];
}

impl fmt::Display for Axis {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Axis::X => "x",
            Axis::Y => "y",
            Axis::Z => "z",
        })
    }
}

/// A point or displacement in scene units. Serialized as `[x, y, z]`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(from = "[f64; 3]", into = "[f64; 3]")]
pub struct Vec3 {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl Vec3 {
    pub const ZERO: Vec3 = Vec3 { x: 0.0, y: 0.0, z: 0.0 };

    pub const fn new(x: f64, y: f64, z: f64) -> Self {
        Self { x, y, z }
    }

    pub const fn splat(v: f64) -> Self {
        Self { x: v, y: v, z: v }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.z.is_finite()
    }

    pub fn get(&self, axis: Axis) -> f64 {
        match axis {
            Axis::X => self.x,
            Axis::Y => self.y,
            Axis::Z => self.z,
        }
    }

    pub fn set(&mut self, axis: Axis, value: f64) {
        match axis {
            Axis::X => self.x = value,
            Axis::Y => self.y = value,
            Axis::Z => self.z = value,
        }
    }

    pub fn min(self, other: Vec3) -> Vec3 {
        Vec3::new(self.x.min(other.x), self.y.min(other.y), self.z.min(other.z))
    }

    pub fn max(self, other: Vec3) -> Vec3 {
        Vec3::new(self.x.max(other.x), self.y.max(other.y), self.z.max(other.z))
    }

    pub fn norm(self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    pub fn norm_l1(self) -> f64 {
        self.x.abs() + self.y.abs() + self.z.abs()
    }

    pub fn max_component(self) -> f64 {
        self.x.max(self.y).max(self.z)
    }

    pub fn map(self, f: impl Fn(f64) -> f64) -> Vec3 {
        Vec3::new(f(self.x), f(self.y), f(self.z))
    }
}

impl From<[f64; 3]> for Vec3 {
    fn from([x, y, z]: [f64; 3]) -> Self {
        Vec3::new(x, y, z)
    }
}

impl From<Vec3> for [f64; 3] {
    fn from(v: Vec3) -> Self {
        [v.x, v.y, v.z]
    }
}

impl Index<Axis> for Vec3 {
    type Output = f64;

    fn index(&self, axis: Axis) -> &f64 {
        match axis {
            Axis::X => &self.x,
            Axis::Y => &self.y,
            Axis::Z => &self.z,
        }
    }
}

impl Add for Vec3 {
    type Output = Vec3;
    fn add(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x + rhs.x, self.y + rhs.y, self.z + rhs.z)
    }
}

impl AddAssign for Vec3 {
    fn add_assign(&mut self, rhs: Vec3) {
        *self = *self + rhs;
    }
}

impl Sub for Vec3 {
    type Output = Vec3;
    fn sub(self, rhs: Vec3) -> Vec3 {
        Vec3::new(self.x - rhs.x, self.y - rhs.y, self.z - rhs.z)
    }
}

impl Neg for Vec3 {
    type Output = Vec3;
    fn neg(self) -> Vec3 {
        Vec3::new(-self.x, -self.y, -self.z)
    }
}

impl Mul<f64> for Vec3 {
    type Output = Vec3;
    fn mul(self, s: f64) -> Vec3 {
        Vec3::new(self.x * s, self.y * s, self.z * s)
    }
}

impl fmt::Display for Vec3 {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "({}, {}, {})", self.x, self.y, self.z)
    }
}

/// Full side lengths of a cuboid (not half-extents). Strictly positive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 3]", into = "[f64; 3]")]
pub struct Extents(Vec3);

impl Extents {
    pub fn new(dx: f64, dy: f64, dz: f64) -> Result<Self, GeometryError> {
        Self::try_from(Vec3::new(dx, dy, dz))
    }

    pub fn dx(&self) -> f64 {
        self.0.x
    }

    pub fn dy(&self) -> f64 {
        self.0.y
    }

    pub fn dz(&self) -> f64 {
        self.0.z
    }

    pub fn as_vec(&self) -> Vec3 {
        self.0
    }

    pub fn half(&self) -> Vec3 {
        self.0 * 0.5
    }

    pub fn volume(&self) -> f64 {
        self.0.x * self.0.y * self.0.z
    }
}

impl TryFrom<Vec3> for Extents {
    type Error = GeometryError;

    fn try_from(v: Vec3) -> Result<Self, GeometryError> {
        for axis in Axis::ALL {
            let value = v[axis];
            if !value.is_finite() {
                return Err(GeometryError::NonFinite("extents"));
            }
            if value <= 0.0 {
                return Err(GeometryError::NonPositiveExtent { axis, value });
            }
        }
        Ok(Extents(v))
    }
}

impl TryFrom<[f64; 3]> for Extents {
    type Error = GeometryError;

    fn try_from(a: [f64; 3]) -> Result<Self, GeometryError> {
        Self::try_from(Vec3::from(a))
    }
}

impl From<Extents> for [f64; 3] {
    fn from(e: Extents) -> Self {
        e.0.into()
    }
}

/// One axis-aligned cuboid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawBlock", into = "RawBlock")]
pub struct Block {
    centroid: Vec3,
    extents: Extents,
}

#[derive(Serialize, Deserialize)]
struct RawBlock {
    centroid: Vec3,
    extents: Extents,
}

impl TryFrom<RawBlock> for Block {
    type Error = GeometryError;
    fn try_from(raw: RawBlock) -> Result<Self, GeometryError> {
        Block::new(raw.centroid, raw.extents)
    }
}

impl From<Block> for RawBlock {
    fn from(b: Block) -> Self {
        RawBlock { centroid: b.centroid, extents: b.extents }
    }
}

impl Block {
    pub fn new(centroid: Vec3, extents: Extents) -> Result<Self, GeometryError> {
        if !centroid.is_finite() {
            return Err(GeometryError::NonFinite("centroid"));
        }
        Ok(Self { centroid, extents })
    }

    /// Convenience constructor for a block from plain arrays.
    pub fn from_arrays(centroid: [f64; 3], extents: [f64; 3]) -> Result<Self, GeometryError> {
        Self::new(centroid.into(), Extents::try_from(extents)?)
    }

    pub fn centroid(&self) -> Vec3 {
        self.centroid
    }

    pub fn extents(&self) -> Extents {
        self.extents
    }

    pub fn volume(&self) -> f64 {
        self.extents.volume()
    }

    pub fn aabb(&self) -> Aabb {
        let half = self.extents.half();
        Aabb { min: self.centroid - half, max: self.centroid + half }
    }

    pub fn translated(&self, v: Vec3) -> Block {
        Block { centroid: self.centroid + v, extents: self.extents }
    }
}

/// Axis-aligned bounding box with finite corners and `min <= max` per axis.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Aabb {
    min: Vec3,
    max: Vec3,
}

impl Aabb {
    pub fn new(min: Vec3, max: Vec3) -> Result<Self, GeometryError> {
        if !min.is_finite() || !max.is_finite() {
            return Err(GeometryError::NonFinite("bounds"));
        }
        for axis in Axis::ALL {
            if min[axis] > max[axis] {
                return Err(GeometryError::Inverted(axis));
            }
        }
        Ok(Self { min, max })
    }

    pub fn from_center_extents(center: Vec3, extents: Vec3) -> Result<Self, GeometryError> {
        let half = extents * 0.5;
        Self::new(center - half, center + half)
    }

    pub fn min(&self) -> Vec3 {
        self.min
    }

    pub fn max(&self) -> Vec3 {
        self.max
    }

    pub fn center(&self) -> Vec3 {
        (self.min + self.max) * 0.5
    }

    pub fn extents(&self) -> Vec3 {
        self.max - self.min
    }

    pub fn volume(&self) -> f64 {
        let e = self.extents();
        e.x * e.y * e.z
    }

    pub fn translated(&self, v: Vec3) -> Aabb {
        Aabb { min: self.min + v, max: self.max + v }
    }

    /// Uniform scaling about the world origin. `factor` must be positive.
    pub fn scaled(&self, factor: f64) -> Aabb {
        debug_assert!(factor > 0.0);
        Aabb { min: self.min * factor, max: self.max * factor }
    }

    pub fn union(&self, other: &Aabb) -> Aabb {
        Aabb { min: self.min.min(other.min), max: self.max.max(other.max) }
    }

    /// Grow every face outward by `margin`.
    pub fn expanded(&self, margin: f64) -> Aabb {
        let m = Vec3::splat(margin);
        Aabb { min: self.min - m, max: self.max + m }
    }

    pub fn contains(&self, other: &Aabb) -> bool {
        Axis::ALL
            .iter()
            .all(|&a| self.min[a] <= other.min[a] && other.max[a] <= self.max[a])
    }

    pub fn contains_point(&self, p: Vec3) -> bool {
        Axis::ALL.iter().all(|&a| self.min[a] <= p[a] && p[a] <= self.max[a])
    }

    /// Closed-interval test: boxes that merely touch count as intersecting.
    pub fn intersects(&self, other: &Aabb) -> bool {
        Axis::ALL
            .iter()
            .all(|&a| self.min[a] <= other.max[a] && other.min[a] <= self.max[a])
    }

    /// Volume of the overlap region, zero when disjoint or merely touching.
    pub fn intersection_volume(&self, other: &Aabb) -> f64 {
        let mut volume = 1.0;
        for axis in Axis::ALL {
            let lo = self.min[axis].max(other.min[axis]);
            let hi = self.max[axis].min(other.max[axis]);
            volume *= (hi - lo).max(0.0);
        }
        volume
    }

    pub fn face(&self, face: Face) -> f64 {
        let (axis, upper) = face.axis_side();
        if upper {
            self.max[axis]
        } else {
            self.min[axis]
        }
    }

    /// The eight corners, ordered by the bit pattern `(x, y, z)` of
    /// upper-vs-lower bound: index `i` uses `max` on x if `i & 1`, on y if
    /// `i & 2`, on z if `i & 4`.
    pub fn corners(&self) -> [Vec3; 8] {
        let mut out = [Vec3::ZERO; 8];
        for (i, corner) in out.iter_mut().enumerate() {
            *corner = Vec3::new(
                if i & 1 != 0 { self.max.x } else { self.min.x },
                if i & 2 != 0 { self.max.y } else { self.min.y },
                if i & 4 != 0 { self.max.z } else { self.min.z },
            );
        }
        out
    }
}

/// Named face of a box under the fixed world frame (see module docs).
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Face {
    Front,
    Back,
    Top,
    Bottom,
    Left,
    Right,
}

impl Face {
    pub const ALL: [Face; 6] = [Face::Front, Face::Back, Face::Top, Face::Bottom, Face::Left, Face::Right];

    /// The axis the face is perpendicular to, and whether it is the upper bound.
    pub fn axis_side(self) -> (Axis, bool) {
        match self {
            Face::Front => (Axis::X, true),
            Face::Back => (Axis::X, false),
            Face::Right => (Axis::Y, true),
            Face::Left => (Axis::Y, false),
            Face::Top => (Axis::Z, true),
            Face::Bottom => (Axis::Z, false),
        }
    }

    pub fn opposite(self) -> Face {
        match self {
            Face::Front => Face::Back,
            Face::Back => Face::Front,
            Face::Right => Face::Left,
            Face::Left => Face::Right,
            Face::Top => Face::Bottom,
            Face::Bottom => Face::Top,
        }
    }
}

/// Identifier of an object within a scene.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ObjectId(String);

impl ObjectId {
    pub fn new(id: impl Into<String>) -> Self {
        ObjectId(id.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for ObjectId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for ObjectId {
    fn from(s: &str) -> Self {
        ObjectId(s.to_owned())
    }
}

impl From<String> for ObjectId {
    fn from(s: String) -> Self {
        ObjectId(s)
    }
}

impl std::borrow::Borrow<str> for ObjectId {
    fn borrow(&self) -> &str {
        &self.0
    }
}

/// A named composition of one or more blocks.
///
/// For constraint evaluation an object is abstracted to its bounding box
/// ([`ObjectInstance::bounds`]): the box center plays the role of the object
/// centroid and the box extents its overall size.
#[derive(Debug, Clone, PartialEq)]
pub struct ObjectInstance {
    id: ObjectId,
    name: String,
    blocks: Vec<Block>,
}

impl ObjectInstance {
    pub fn new(id: impl Into<ObjectId>, name: impl Into<String>, blocks: Vec<Block>) -> Result<Self, GeometryError> {
        let id = id.into();
        if id.as_str().is_empty() {
            return Err(GeometryError::EmptyId);
        }
        if blocks.is_empty() {
            return Err(GeometryError::EmptyObject(id.0));
        }
        Ok(Self { id, name: name.into(), blocks })
    }

    pub fn id(&self) -> &ObjectId {
        &self.id
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    pub fn bounds(&self) -> Aabb {
        let first = self.blocks[0].aabb();
        self.blocks[1..].iter().fold(first, |acc, b| acc.union(&b.aabb()))
    }

    pub fn translated(&self, v: Vec3) -> ObjectInstance {
        ObjectInstance {
            id: self.id.clone(),
            name: self.name.clone(),
            blocks: self.blocks.iter().map(|b| b.translated(v)).collect(),
        }
    }

    pub fn volume(&self) -> f64 {
        self.blocks.iter().map(Block::volume).sum()
    }
}
