use std::collections::BTreeMap;

use super::{Confidence, DetectionFrame, PerceptionError, StackObservation};
use crate::ids::{BlockId, TagId};
use crate::world_model::config::{StackBase, TaskConfig};

/// Static scene knowledge: which tag is on which block and where stacks stand.
#[derive(Debug, Clone, PartialEq)]
pub struct SceneModel {
    pub tags: BTreeMap<TagId, BlockId>,
    pub bases: Vec<StackBase>,
    pub block_height_m: f64,
    pub assignment_radius_m: f64,
    pub history_depth: usize,
}

impl SceneModel {
    pub fn from_config(config: &TaskConfig) -> SceneModel {
        SceneModel {
            tags: config.blocks.iter().map(|b| (b.tag_id, b.id.clone())).collect(),
            bases: config.geometry.bases(&config.participants),
            block_height_m: config.geometry.block_height_m,
            assignment_radius_m: config.geometry.assignment_radius_m,
            history_depth: config.geometry.history_depth,
        }
    }

    pub fn base(&self, owner: &crate::ids::ParticipantId) -> Option<&StackBase> {
        self.bases.iter().find(|b| &b.owner == owner)
    }
}

fn planar_distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2)).sqrt()
}

/// Groups detections by stack base and orders them into slots.
///
/// A detection belongs to the base within the assignment radius (planar
/// distance). Its slot is its height above the base in block heights,
/// rounded, so noise under half a block height never changes the order.
/// Detections near no base (a block in a hand or gripper) are ignored.
pub fn infer_stacks(frame: &DetectionFrame, scene: &SceneModel) -> Result<Vec<StackObservation>, PerceptionError> {
    let mut slots: Vec<BTreeMap<usize, BlockId>> = vec![BTreeMap::new(); scene.bases.len()];
    for d in &frame.detections {
        let block = scene.tags.get(&d.tag_id).ok_or(PerceptionError::UnknownTag(d.tag_id))?;
        let mut near = scene.bases.iter().enumerate().filter(|(_, b)| {
            b.station_id == d.station_id && planar_distance(&b.position, &d.position) <= scene.assignment_radius_m
        });
        let Some((idx, base)) = near.next() else {
            continue;
        };
        if near.next().is_some() {
            return Err(PerceptionError::AmbiguousAssignment(d.tag_id));
        }
        let level = (d.position[2] - base.position[2]) / scene.block_height_m;
        if level < -0.5 {
            continue;
        }
        let slot = level.round().max(0.0) as usize;
        if slots[idx].insert(slot, block.clone()).is_some() {
            return Err(PerceptionError::SlotConflict {
                owner: base.owner.clone(),
                slot,
            });
        }
    }
    Ok(scene
        .bases
        .iter()
        .zip(slots)
        .map(|(base, seen)| {
            let height = seen.keys().next_back().map_or(0, |top| top + 1);
            let slots: Vec<Option<BlockId>> = (0..height).map(|i| seen.get(&i).cloned()).collect();
            let confidence = if slots.iter().all(Option::is_some) {
                Confidence::Full
            } else {
                Confidence::HistoryAssisted
            };
            StackObservation {
                station_id: base.station_id.clone(),
                owner: base.owner.clone(),
                slots,
                confidence,
            }
        })
        .collect())
}
