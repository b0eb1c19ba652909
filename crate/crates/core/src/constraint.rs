//! The spatial relation catalog and its residual functions.
//!
//! Every relation constrains a *movable* object relative to a *reference*
//! object, both abstracted to their bounding boxes. A residual is the
//! non-negative violation magnitude of the relation's defining predicate: it
//! vanishes exactly on the feasible set and grows continuously (1-Lipschitz per
//! axis) as the movable object drifts away from it.
//!
//! Relation levels:
//!
//! * center: `concentric` (Euclidean distance of the centers);
//! * axis: `x/y/z_aligned` (center deviation along one axis) and the six
//!   half-side relations (`upper_half`: movable center not below the reference
//!   center, hinge residual);
//! * surface: six directional relations with a gap `d` (`above`: movable bottom
//!   sits `d` above the reference top) and six coplanar relations (same face
//!   coordinate on both boxes).

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

use crate::geometry::{Aabb, Axis, Face, ObjectId};

/// Satisfaction tolerance in scene units.
pub const DEFAULT_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConstraintError {
    #[error("unknown constraint kind `{name}`; valid kinds: {}", ConstraintKind::valid_names())]
    UnknownKind { name: String },
    #[error("constraint references object `{0}` as both reference and movable")]
    SelfReference(ObjectId),
    #[error("invalid distance {distance} for `{kind}`: {reason}")]
    InvalidDistance { kind: ConstraintKind, distance: f64, reason: &'static str },
    #[error("missing bounds for reference object `{0}`")]
    MissingReference(ObjectId),
    #[error("constraint set mixes movable objects `{expected}` and `{found}`")]
    MixedMovable { expected: ObjectId, found: ObjectId },
}

/// Coarse grouping of the catalog, used for trimming priorities.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum KindFamily {
    Concentric,
    Aligned,
    HalfSide,
    Directional,
    Coplanar,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ConstraintKind {
    Concentric,
    XAligned,
    YAligned,
    ZAligned,
    LeftHalf,
    RightHalf,
    UpperHalf,
    LowerHalf,
    FrontHalf,
    BackHalf,
    Left,
    Right,
    Above,
    Below,
    Front,
    Back,
    CoplanarTop,
    CoplanarBottom,
    CoplanarLeft,
    CoplanarRight,
    CoplanarFront,
    CoplanarBack,
}

impl ConstraintKind {
    pub const ALL: [ConstraintKind; 22] = [
        ConstraintKind::Concentric,
        ConstraintKind::XAligned,
        ConstraintKind::YAligned,
        ConstraintKind::ZAligned,
        ConstraintKind::LeftHalf,
        ConstraintKind::RightHalf,
        ConstraintKind::UpperHalf,
        ConstraintKind::LowerHalf,
        ConstraintKind::FrontHalf,
        ConstraintKind::BackHalf,
        ConstraintKind::Left,
        ConstraintKind::Right,
        ConstraintKind::Above,
        ConstraintKind::Below,
        ConstraintKind::Front,
        ConstraintKind::Back,
        ConstraintKind::CoplanarTop,
        ConstraintKind::CoplanarBottom,
        ConstraintKind::CoplanarLeft,
        ConstraintKind::CoplanarRight,
        ConstraintKind::CoplanarFront,
        ConstraintKind::CoplanarBack,
    ];

    /// Canonical lower_snake_case name.
    pub fn name(self) -> &'static str {
        use ConstraintKind::*;
        match self {
            Concentric => "concentric",
            XAligned => "x_aligned",
            YAligned => "y_aligned",
            ZAligned => "z_aligned",
            LeftHalf => "left_half",
            RightHalf => "right_half",
            UpperHalf => "upper_half",
            LowerHalf => "lower_half",
            FrontHalf => "front_half",
            BackHalf => "back_half",
            Left => "left",
            Right => "right",
            Above => "above",
            Below => "below",
            Front => "front",
            Back => "back",
            CoplanarTop => "coplanar_top",
            CoplanarBottom => "coplanar_bottom",
            CoplanarLeft => "coplanar_left",
            CoplanarRight => "coplanar_right",
            CoplanarFront => "coplanar_front",
            CoplanarBack => "coplanar_back",
        }
    }

    pub fn valid_names() -> String {
        Self::ALL.iter().map(|k| k.name()).collect::<Vec<_>>().join(", ")
    }

    /// Case-insensitive; spaces, hyphens and underscores are interchangeable.
    pub fn parse(name: &str) -> Result<Self, ConstraintError> {
        let normalized: String = name
            .trim()
            .split(|c: char| c.is_whitespace() || c == '_' || c == '-')
            .filter(|s| !s.is_empty())
            .map(str::to_ascii_lowercase)
            .collect::<Vec<_>>()
            .join("_");
        Self::ALL
            .iter()
            .copied()
            .find(|k| k.name() == normalized)
            .ok_or_else(|| ConstraintError::UnknownKind { name: name.to_owned() })
    }

    pub fn family(self) -> KindFamily {
        use ConstraintKind::*;
        match self {
            Concentric => KindFamily::Concentric,
            XAligned | YAligned | ZAligned => KindFamily::Aligned,
            LeftHalf | RightHalf | UpperHalf | LowerHalf | FrontHalf | BackHalf => KindFamily::HalfSide,
            Left | Right | Above | Below | Front | Back => KindFamily::Directional,
            _ => KindFamily::Coplanar,
        }
    }

    /// Whether the gap distance `d` participates in the residual.
    pub fn uses_distance(self) -> bool {
        self.family() == KindFamily::Directional
    }

    /// Lower is kept first when a weak reference offers too many constraints:
    /// coplanar, directional, aligned, half-side, concentric.
    pub fn trim_priority(self) -> u8 {
        match self.family() {
            KindFamily::Coplanar => 0,
            KindFamily::Directional => 1,
            KindFamily::Aligned => 2,
            KindFamily::HalfSide => 3,
            KindFamily::Concentric => 4,
        }
    }
}

impl fmt::Display for ConstraintKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ConstraintKind {
    type Err = ConstraintError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Self::parse(s)
    }
}

impl Serialize for ConstraintKind {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(self.name())
    }
}

impl<'de> Deserialize<'de> for ConstraintKind {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let name = String::deserialize(d)?;
        Self::parse(&name).map_err(serde::de::Error::custom)
    }
}

/// How a directional relation treats its gap `d`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GapMode {
    /// The gap must equal `d`; residual `|gap - d|`.
    #[default]
    Exact,
    /// The gap must be at least `d`; residual `max(0, d - gap)`.
    AtLeast,
}

impl GapMode {
    pub fn is_exact(&self) -> bool {
        *self == GapMode::Exact
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Constraint {
    pub kind: ConstraintKind,
    pub reference: ObjectId,
    pub movable: ObjectId,
    #[serde(default)]
    pub distance: f64,
    #[serde(default, skip_serializing_if = "GapMode::is_exact")]
    pub gap: GapMode,
}

impl Constraint {
    pub fn new(
        kind: ConstraintKind,
        reference: impl Into<ObjectId>,
        movable: impl Into<ObjectId>,
        distance: f64,
    ) -> Result<Self, ConstraintError> {
        let c = Constraint {
            kind,
            reference: reference.into(),
            movable: movable.into(),
            distance,
            gap: GapMode::Exact,
        };
        c.validate()?;
        Ok(c)
    }

    pub fn with_gap(mut self, gap: GapMode) -> Self {
        self.gap = gap;
        self
    }

    pub fn validate(&self) -> Result<(), ConstraintError> {
        if self.reference == self.movable {
            return Err(ConstraintError::SelfReference(self.reference.clone()));
        }
        validate_distance(self.kind, self.distance)
    }

    pub fn residual(&self, reference: &Aabb, movable: &Aabb) -> f64 {
        residual_of(self.kind, self.distance, self.gap, reference, movable)
    }

    pub fn satisfied(&self, reference: &Aabb, movable: &Aabb, tol: f64) -> bool {
        self.residual(reference, movable) <= tol
    }
}

pub(crate) fn validate_distance(kind: ConstraintKind, distance: f64) -> Result<(), ConstraintError> {
    let reason = if !distance.is_finite() {
        Some("must be finite")
    } else if distance < 0.0 {
        Some("must be non-negative")
    } else if !kind.uses_distance() && distance != 0.0 {
        Some("only directional relations take a distance")
    } else {
        None
    };
    match reason {
        Some(reason) => Err(ConstraintError::InvalidDistance { kind, distance, reason }),
        None => Ok(()),
    }
}

/// Violation magnitude of one relation between a reference box and a movable box.
pub fn residual_of(kind: ConstraintKind, distance: f64, gap_mode: GapMode, r: &Aabb, m: &Aabb) -> f64 {
    use ConstraintKind::*;
    let rc = r.center();
    let mc = m.center();
    // Hinge on "movable center at or beyond reference center" along an axis.
    let not_below = |axis: Axis| (rc[axis] - mc[axis]).max(0.0);
    let not_above = |axis: Axis| (mc[axis] - rc[axis]).max(0.0);
    let gap = |g: f64| match gap_mode {
        GapMode::Exact => (g - distance).abs(),
        GapMode::AtLeast => (distance - g).max(0.0),
    };
    let coplanar = |face: Face| (r.face(face) - m.face(face)).abs();
    match kind {
        Concentric => (mc - rc).norm(),
        XAligned => (mc.x - rc.x).abs(),
        YAligned => (mc.y - rc.y).abs(),
        ZAligned => (mc.z - rc.z).abs(),
        FrontHalf => not_below(Axis::X),
        BackHalf => not_above(Axis::X),
        RightHalf => not_below(Axis::Y),
        LeftHalf => not_above(Axis::Y),
        UpperHalf => not_below(Axis::Z),
        LowerHalf => not_above(Axis::Z),
        Front => gap(m.face(Face::Back) - r.face(Face::Front)),
        Back => gap(r.face(Face::Back) - m.face(Face::Front)),
        Right => gap(m.face(Face::Left) - r.face(Face::Right)),
        Left => gap(r.face(Face::Left) - m.face(Face::Right)),
        Above => gap(m.face(Face::Bottom) - r.face(Face::Top)),
        Below => gap(r.face(Face::Bottom) - m.face(Face::Top)),
        CoplanarTop => coplanar(Face::Top),
        CoplanarBottom => coplanar(Face::Bottom),
        CoplanarLeft => coplanar(Face::Left),
        CoplanarRight => coplanar(Face::Right),
        CoplanarFront => coplanar(Face::Front),
        CoplanarBack => coplanar(Face::Back),
    }
}

/// Ordered constraints acting on a single movable object.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConstraintSet {
    movable: ObjectId,
    constraints: Vec<Constraint>,
}

impl ConstraintSet {
    pub fn new(movable: impl Into<ObjectId>, constraints: Vec<Constraint>) -> Result<Self, ConstraintError> {
        let movable = movable.into();
        for c in &constraints {
            c.validate()?;
            if c.movable != movable {
                return Err(ConstraintError::MixedMovable { expected: movable, found: c.movable.clone() });
            }
        }
        Ok(Self { movable, constraints })
    }

    pub fn movable(&self) -> &ObjectId {
        &self.movable
    }

    pub fn constraints(&self) -> &[Constraint] {
        &self.constraints
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    pub fn push(&mut self, c: Constraint) -> Result<(), ConstraintError> {
        c.validate()?;
        if c.movable != self.movable {
            return Err(ConstraintError::MixedMovable { expected: self.movable.clone(), found: c.movable });
        }
        self.constraints.push(c);
        Ok(())
    }

    /// Resolve every reference id to its bounds once, for repeated evaluation.
    pub fn compile(&self, reference_bounds: &BTreeMap<ObjectId, Aabb>) -> Result<CompiledSet, ConstraintError> {
        let terms = self
            .constraints
            .iter()
            .map(|c| {
                reference_bounds
                    .get(&c.reference)
                    .map(|b| CompiledTerm { kind: c.kind, distance: c.distance, gap: c.gap, reference: *b })
                    .ok_or_else(|| ConstraintError::MissingReference(c.reference.clone()))
            })
            .collect::<Result<Vec<_>, _>>()?;
        Ok(CompiledSet { terms })
    }
}

#[derive(Debug, Clone, Copy)]
struct CompiledTerm {
    kind: ConstraintKind,
    distance: f64,
    gap: GapMode,
    reference: Aabb,
}

/// A constraint set with its reference boxes resolved.
#[derive(Debug, Clone)]
pub struct CompiledSet {
    terms: Vec<CompiledTerm>,
}

impl CompiledSet {
    pub fn residuals(&self, movable: &Aabb) -> Vec<f64> {
        self.terms
            .iter()
            .map(|t| residual_of(t.kind, t.distance, t.gap, &t.reference, movable))
            .collect()
    }

    /// `E = Σ e_i²` without allocating.
    pub fn total_error(&self, movable: &Aabb) -> f64 {
        self.terms
            .iter()
            .map(|t| {
                let e = residual_of(t.kind, t.distance, t.gap, &t.reference, movable);
                e * e
            })
            .sum()
    }

    pub fn report(&self, movable: &Aabb) -> ResidualReport {
        ResidualReport::from_residuals(self.residuals(movable))
    }

    /// Bounds of the first term's reference: the strong reference when the
    /// set came out of the arranger.
    pub fn primary_reference(&self) -> Option<&Aabb> {
        self.terms.first().map(|t| &t.reference)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResidualReport {
    pub residuals: Vec<f64>,
    pub total_error: f64,
}

impl ResidualReport {
    pub fn from_residuals(residuals: Vec<f64>) -> Self {
        let total_error = residuals.iter().map(|e| e * e).sum();
        Self { residuals, total_error }
    }

    pub fn all_within(&self, tol: f64) -> bool {
        self.residuals.iter().all(|&e| e <= tol)
    }
}

/// Residuals of `set` with the movable object at `movable`, in constraint order.
pub fn total_error(
    set: &ConstraintSet,
    reference_bounds: &BTreeMap<ObjectId, Aabb>,
    movable: &Aabb,
) -> Result<ResidualReport, ConstraintError> {
    Ok(set.compile(reference_bounds)?.report(movable))
}
