//! Ego-centric scene graphs built from per-frame object annotations.
//!
//! Each frame becomes a directed multigraph with an ego node, three lane
//! nodes and one node per annotated object within the visible range. Edges
//! carry one of fourteen relation types: five proximity bands, eight
//! directional sectors and lane membership.

mod bev;
mod encode;
mod extract;

use std::fmt;

use serde::{Deserialize, Serialize};

pub use bev::BevCalibration;
pub use encode::{to_relation_tensors, RelationTensors};
pub use extract::{directional_relation, extract_scene_graph, lane_assignment, proximity_relation, LaneSet};

use crate::error::{Error, Result};

pub const EGO_CLASS: &str = "ego_car";
pub const LANE_CLASSES: [&str; 3] = ["left_lane", "middle_lane", "right_lane"];

/// Stable list of entity class names. The position of a name is its
/// one-hot column.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Vocabulary(Vec<String>);

impl Default for Vocabulary {
    fn default() -> Self {
        Self(
            [
                "ego_car",
                "car",
                "truck",
                "motorcycle",
                "bicycle",
                "pedestrian",
                "left_lane",
                "middle_lane",
                "right_lane",
                "obstacle",
            ]
            .iter()
            .map(|s| s.to_string())
            .collect(),
        )
    }
}

impl Vocabulary {
    /// Builds a vocabulary; it must contain the ego and the three lane
    /// classes and have no duplicates.
    pub fn new(names: Vec<String>) -> Result<Self> {
        for (i, n) in names.iter().enumerate() {
            if names[..i].contains(n) {
                return Err(Error::Schema(format!("duplicate class {n:?} in vocabulary")));
            }
        }
        for required in std::iter::once(EGO_CLASS).chain(LANE_CLASSES) {
            if !names.iter().any(|n| n == required) {
                return Err(Error::Schema(format!("vocabulary lacks required class {required:?}")));
            }
        }
        Ok(Self(names))
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.0
    }

    pub fn index_of(&self, class: &str) -> Option<usize> {
        self.0.iter().position(|n| n == class)
    }

    pub fn contains(&self, class: &str) -> bool {
        self.index_of(class).is_some()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProximityBand {
    NearCollision,
    SuperNear,
    VeryNear,
    Near,
    Visible,
}

impl ProximityBand {
    pub const ALL: [ProximityBand; 5] = [
        ProximityBand::NearCollision,
        ProximityBand::SuperNear,
        ProximityBand::VeryNear,
        ProximityBand::Near,
        ProximityBand::Visible,
    ];

    /// Inclusive upper distance bound in feet.
    pub fn threshold_ft(self) -> f64 {
        match self {
            ProximityBand::NearCollision => 4.0,
            ProximityBand::SuperNear => 7.0,
            ProximityBand::VeryNear => 10.0,
            ProximityBand::Near => 16.0,
            ProximityBand::Visible => 25.0,
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            ProximityBand::NearCollision => "Near_Collision",
            ProximityBand::SuperNear => "Super_Near",
            ProximityBand::VeryNear => "Very_Near",
            ProximityBand::Near => "Near",
            ProximityBand::Visible => "Visible",
        }
    }
}

/// Objects farther than this from the ego are not part of the graph.
pub const VISIBLE_RANGE_FT: f64 = 25.0;
/// Directional relations exist only up to this distance.
pub const DIRECTIONAL_RANGE_FT: f64 = 16.0;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Sector {
    FrontLeft,
    LeftFront,
    LeftRear,
    RearLeft,
    RearRight,
    RightRear,
    RightFront,
    FrontRight,
}

impl Sector {
    pub const ALL: [Sector; 8] = [
        Sector::FrontLeft,
        Sector::LeftFront,
        Sector::LeftRear,
        Sector::RearLeft,
        Sector::RearRight,
        Sector::RightRear,
        Sector::RightFront,
        Sector::FrontRight,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Sector::FrontLeft => "Front_Left",
            Sector::LeftFront => "Left_Front",
            Sector::LeftRear => "Left_Rear",
            Sector::RearLeft => "Rear_Left",
            Sector::RearRight => "Rear_Right",
            Sector::RightRear => "Right_Rear",
            Sector::RightFront => "Right_Front",
            Sector::FrontRight => "Front_Right",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum RelationType {
    Proximity(ProximityBand),
    Directional(Sector),
    IsIn,
}

impl RelationType {
    pub const COUNT: usize = 14;

    /// All relation types in their global, dataset-independent order.
    pub fn all() -> [RelationType; Self::COUNT] {
        let mut out = [RelationType::IsIn; Self::COUNT];
        for (i, b) in ProximityBand::ALL.iter().enumerate() {
            out[i] = RelationType::Proximity(*b);
        }
        for (i, s) in Sector::ALL.iter().enumerate() {
            out[5 + i] = RelationType::Directional(*s);
        }
        out
    }

    pub fn index(self) -> usize {
        match self {
            RelationType::Proximity(b) => b as usize,
            RelationType::Directional(s) => 5 + s as usize,
            RelationType::IsIn => 13,
        }
    }

    pub fn from_index(i: usize) -> Option<Self> {
        Self::all().get(i).copied()
    }

    pub fn name(self) -> &'static str {
        match self {
            RelationType::Proximity(b) => b.name(),
            RelationType::Directional(s) => s.name(),
            RelationType::IsIn => "isIn",
        }
    }

    pub fn from_name(name: &str) -> Option<Self> {
        Self::all().into_iter().find(|r| r.name() == name)
    }
}

impl fmt::Display for RelationType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl From<RelationType> for String {
    fn from(r: RelationType) -> Self {
        r.name().to_string()
    }
}

impl TryFrom<String> for RelationType {
    type Error = String;

    fn try_from(s: String) -> Result<Self, String> {
        RelationType::from_name(&s).ok_or_else(|| format!("unknown relation {s:?}"))
    }
}

/// One annotated object in ego-relative ground coordinates (feet; x to the
/// right, y forward).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ObjectAnnotation {
    pub id: String,
    pub class: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FrameObjects {
    pub clip_id: String,
    pub frame_index: u64,
    pub objects: Vec<ObjectAnnotation>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneNode {
    pub name: String,
    pub class: String,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SceneEdge {
    pub src: usize,
    pub dst: usize,
    pub relation: RelationType,
}

/// Scene graph of one frame. Node 0 is the ego, nodes 1..=3 the left,
/// middle and right lanes; objects follow sorted by id.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct SceneGraph {
    pub nodes: Vec<SceneNode>,
    pub edges: Vec<SceneEdge>,
}

impl SceneGraph {
    pub const EGO: usize = 0;

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn edges_of(&self, relation: RelationType) -> impl Iterator<Item = &SceneEdge> {
        self.edges.iter().filter(move |e| e.relation == relation)
    }
}

/// Thresholds and vocabulary used by extraction.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionConfig {
    pub lane_width_ft: f64,
    pub vehicle_half_width_ft: f64,
    /// Also emit proximity relations between every pair of objects.
    pub all_pairs_proximity: bool,
    pub vocabulary: Vocabulary,
    /// Classes that get lane membership and directional relations.
    pub vehicle_classes: Vec<String>,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        Self {
            lane_width_ft: 12.0,
            vehicle_half_width_ft: 3.0,
            all_pairs_proximity: false,
            vocabulary: Vocabulary::default(),
            vehicle_classes: ["car", "truck", "motorcycle", "bicycle"]
                .iter()
                .map(|s| s.to_string())
                .collect(),
        }
    }
}

impl ExtractionConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lane_width_ft > 0.0) {
            return Err(Error::Config(format!("lane width must be positive, got {}", self.lane_width_ft)));
        }
        if !(self.vehicle_half_width_ft >= 0.0) {
            return Err(Error::Config("vehicle half-width must be non-negative".into()));
        }
        Vocabulary::new(self.vocabulary.0.clone())?;
        if let Some(v) = self.vehicle_classes.iter().find(|v| !self.vocabulary.contains(v)) {
            return Err(Error::Config(format!("vehicle class {v:?} is not in the vocabulary")));
        }
        Ok(())
    }

    pub fn is_vehicle(&self, class: &str) -> bool {
        self.vehicle_classes.iter().any(|v| v == class)
    }
}
