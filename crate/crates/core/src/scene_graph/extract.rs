use std::collections::HashSet;

use super::{
    ExtractionConfig, FrameObjects, ProximityBand, RelationType, SceneEdge, SceneGraph, SceneNode, Sector,
    DIRECTIONAL_RANGE_FT, EGO_CLASS, LANE_CLASSES, VISIBLE_RANGE_FT,
};
use crate::error::{Error, Result};

/// Tightest proximity band whose threshold is at least `dist`, or `None`
/// beyond the visible range.
pub fn proximity_relation(dist: f64) -> Result<Option<ProximityBand>> {
    if !(dist >= 0.0) {
        return Err(Error::Contract(format!("distance must be non-negative, got {dist}")));
    }
    Ok(ProximityBand::ALL.into_iter().find(|b| dist <= b.threshold_ft()))
}

/// Octant of the object at `(x, y)` as seen from the ego, or `None` beyond
/// the directional range.
///
/// Angles are measured clockwise from the forward axis, `θ = atan2(x, y)`.
/// The comparisons below are the exact equivalents of the 45° boundaries
/// so that points on a diagonal never depend on rounding in `atan2`.
pub fn directional_relation(x: f64, y: f64) -> Result<Option<Sector>> {
    if !x.is_finite() || !y.is_finite() {
        return Err(Error::Contract(format!("non-finite position ({x}, {y})")));
    }
    if x == 0.0 && y == 0.0 {
        return Err(Error::Contract("object coincides with the ego".into()));
    }
    if x.hypot(y) > DIRECTIONAL_RANGE_FT {
        return Ok(None);
    }
    let (ax, ay) = (x.abs(), y.abs());
    let sector = if x >= 0.0 {
        // θ ∈ [0°, 180°]
        if y > 0.0 && ax < y {
            Sector::FrontRight
        } else if y > 0.0 {
            Sector::RightFront
        } else if ax > ay {
            Sector::RightRear
        } else {
            Sector::RearRight
        }
    } else if y > 0.0 && ax < y {
        // θ ∈ (−45°, 0°)
        Sector::FrontLeft
    } else if y > 0.0 {
        Sector::LeftFront
    } else if ax > ay {
        Sector::LeftRear
    } else {
        Sector::RearLeft
    };
    Ok(Some(sector))
}

/// Lanes touched by a vehicle's lateral footprint.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct LaneSet {
    pub left: bool,
    pub middle: bool,
    pub right: bool,
}

impl LaneSet {
    /// Lane node indices (1 = left, 2 = middle, 3 = right).
    pub fn node_indices(self) -> impl Iterator<Item = usize> {
        [self.left, self.middle, self.right]
            .into_iter()
            .enumerate()
            .filter_map(|(i, on)| on.then_some(i + 1))
    }

    pub fn count(self) -> usize {
        self.node_indices().count()
    }
}

/// Lane membership of a footprint `[x − half_width, x + half_width]` against
/// ego-lane boundaries at `±lane_width / 2`. All lanes beyond a boundary
/// collapse into the left or right lane node; a footprint strictly crossing
/// a boundary belongs to both sides.
pub fn lane_assignment(x: f64, vehicle_half_width: f64, lane_width: f64) -> LaneSet {
    let (lo, hi) = (x - vehicle_half_width, x + vehicle_half_width);
    let edge = lane_width / 2.0;
    LaneSet {
        left: lo < -edge,
        middle: lo < edge && hi > -edge,
        right: hi > edge,
    }
}

fn validate_frame(frame: &FrameObjects, config: &ExtractionConfig) -> Result<()> {
    let mut seen = HashSet::new();
    for o in &frame.objects {
        if !config.vocabulary.contains(&o.class) {
            return Err(Error::Schema(format!(
                "unknown class {:?} (object {} in clip {} frame {})",
                o.class, o.id, frame.clip_id, frame.frame_index
            )));
        }
        if o.class == EGO_CLASS || LANE_CLASSES.contains(&o.class.as_str()) {
            return Err(Error::Schema(format!(
                "object {} uses reserved class {:?}",
                o.id, o.class
            )));
        }
        if !seen.insert(o.id.as_str()) {
            return Err(Error::Schema(format!(
                "duplicate object id {:?} in clip {} frame {}",
                o.id, frame.clip_id, frame.frame_index
            )));
        }
        if !o.x.is_finite() || !o.y.is_finite() {
            return Err(Error::Schema(format!("object {} has non-finite coordinates", o.id)));
        }
    }
    Ok(())
}

/// Builds the scene graph of one frame.
pub fn extract_scene_graph(frame: &FrameObjects, config: &ExtractionConfig) -> Result<SceneGraph> {
    validate_frame(frame, config)?;

    let mut nodes = vec![SceneNode {
        name: "ego".into(),
        class: EGO_CLASS.into(),
    }];
    nodes.extend(LANE_CLASSES.iter().map(|l| SceneNode {
        name: l.to_string(),
        class: l.to_string(),
    }));

    let mut visible: Vec<_> = frame
        .objects
        .iter()
        .filter(|o| o.x.hypot(o.y) <= VISIBLE_RANGE_FT)
        .collect();
    visible.sort_by(|a, b| a.id.cmp(&b.id));

    let mut edges = Vec::new();
    let ego = SceneGraph::EGO;
    for lane in lane_assignment(0.0, config.vehicle_half_width_ft, config.lane_width_ft).node_indices() {
        edges.push(SceneEdge {
            src: ego,
            dst: lane,
            relation: RelationType::IsIn,
        });
    }

    let base = nodes.len();
    for (k, o) in visible.iter().enumerate() {
        let v = base + k;
        nodes.push(SceneNode {
            name: o.id.clone(),
            class: o.class.clone(),
        });
        let dist = o.x.hypot(o.y);
        if let Some(band) = proximity_relation(dist)? {
            let relation = RelationType::Proximity(band);
            edges.push(SceneEdge { src: ego, dst: v, relation });
            edges.push(SceneEdge { src: v, dst: ego, relation });
        }
        if config.is_vehicle(&o.class) {
            // An object exactly at the ego position has no orientation.
            if dist > 0.0 {
                if let Some(sector) = directional_relation(o.x, o.y)? {
                    edges.push(SceneEdge {
                        src: ego,
                        dst: v,
                        relation: RelationType::Directional(sector),
                    });
                }
            }
            for lane in lane_assignment(o.x, config.vehicle_half_width_ft, config.lane_width_ft).node_indices() {
                edges.push(SceneEdge {
                    src: v,
                    dst: lane,
                    relation: RelationType::IsIn,
                });
            }
        }
    }

    if config.all_pairs_proximity {
        for i in 0..visible.len() {
            for j in i + 1..visible.len() {
                let d = (visible[i].x - visible[j].x).hypot(visible[i].y - visible[j].y);
                if let Some(band) = proximity_relation(d)? {
                    let relation = RelationType::Proximity(band);
                    edges.push(SceneEdge { src: base + i, dst: base + j, relation });
                    edges.push(SceneEdge { src: base + j, dst: base + i, relation });
                }
            }
        }
    }

    edges.sort_by_key(|e| (e.src, e.dst, e.relation.index()));
    edges.dedup();
    Ok(SceneGraph { nodes, edges })
}
