//! State observer: turns fiducial detections into stack configurations and
//! reconciles them with the authoritative world state, filling occluded slots
//! from recent history.

mod infer;
mod reconcile;
pub mod synthetic;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use infer::{infer_stacks, SceneModel};
pub use reconcile::{reconcile, Finding, MismatchReport, ObservationHistory};

use crate::ids::{BlockId, ParticipantId, TagId};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Detection {
    pub tag_id: TagId,
    /// Meters, table frame.
    pub position: [f64; 3],
    pub station_id: String,
}

/// Every tag seen by the camera at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionFrame {
    pub ts_ms: u64,
    pub detections: Vec<Detection>,
}

impl DetectionFrame {
    pub fn validate(&self) -> Result<(), String> {
        let mut seen = std::collections::BTreeSet::new();
        for d in &self.detections {
            if !seen.insert(d.tag_id) {
                return Err(format!("{} detected twice in one frame", d.tag_id));
            }
            if !d.position.iter().all(|v| v.is_finite()) {
                return Err(format!("{} has a non-finite position", d.tag_id));
            }
            if d.position[2] < 0.0 {
                return Err(format!("{} is below the table", d.tag_id));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Confidence {
    Full,
    HistoryAssisted,
}

/// One stack as seen in a single frame, bottom to top. `None` marks a slot
/// below a visible block where no tag was seen.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StackObservation {
    pub station_id: String,
    pub owner: ParticipantId,
    pub slots: Vec<Option<BlockId>>,
    pub confidence: Confidence,
}

impl StackObservation {
    pub fn occluded(&self) -> impl Iterator<Item = usize> + '_ {
        self.slots
            .iter()
            .enumerate()
            .filter(|(_, s)| s.is_none())
            .map(|(i, _)| i)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum PerceptionError {
    #[error("tag {0} is not in the block catalog")]
    UnknownTag(TagId),
    #[error("tag {0} lies within the assignment radius of more than one stack base")]
    AmbiguousAssignment(TagId),
    #[error("two tags resolve to slot {slot} of {owner}'s stack")]
    SlotConflict { owner: ParticipantId, slot: usize },
    #[error("history and current frame disagree for {owner}'s stack: {detail}")]
    InconsistentHistory { owner: ParticipantId, detail: String },
}
