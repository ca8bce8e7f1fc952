use std::collections::{BTreeMap, BTreeSet, VecDeque};

use serde::{Deserialize, Serialize};

use super::{PerceptionError, StackObservation};
use crate::ids::{BlockId, Color, ParticipantId};
use crate::world_model::{ManipulationState, WorldState};

/// The last `depth` raw observations of every stack.
#[derive(Debug, Clone, Default)]
pub struct ObservationHistory {
    depth: usize,
    frames: BTreeMap<ParticipantId, VecDeque<Vec<Option<BlockId>>>>,
    reported: BTreeSet<(ParticipantId, usize, Option<BlockId>)>,
}

impl ObservationHistory {
    pub fn new(depth: usize) -> Self {
        ObservationHistory {
            depth: depth.max(1),
            ..Default::default()
        }
    }

    pub fn depth(&self) -> usize {
        self.depth
    }

    pub fn len(&self, owner: &ParticipantId) -> usize {
        self.frames.get(owner).map_or(0, VecDeque::len)
    }

    fn push(&mut self, owner: &ParticipantId, slots: Vec<Option<BlockId>>) {
        let q = self.frames.entry(owner.clone()).or_default();
        q.push_front(slots);
        q.truncate(self.depth);
    }

    /// Most recent block seen at `slot` of `owner`'s stack, newest first.
    fn recall(&self, owner: &ParticipantId, slot: usize) -> Option<&BlockId> {
        self.frames
            .get(owner)?
            .iter()
            .find_map(|f| f.get(slot).and_then(Option::as_ref))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct MismatchReport {
    pub owner: ParticipantId,
    pub slot: usize,
    pub block_id: Option<BlockId>,
    pub expected: Option<Color>,
    pub detail: String,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Finding {
    /// A Working block now sits at the next slot of its stack with the right color.
    Placed {
        block_id: BlockId,
        owner: ParticipantId,
        slot: usize,
    },
    Mismatch(MismatchReport),
}

/// Merges one frame's observations with history and the current state.
///
/// Occluded slots are filled from the newest history frame that saw them.
/// A `Placed` finding is produced for each newly visible block at the next
/// free slot that is Working, destined for that stack and of the color the
/// pattern expects there; anything contradicting the pattern or the recorded
/// stack yields a mismatch report, once per distinct contradiction.
pub fn reconcile(
    prev: &WorldState,
    observations: &[StackObservation],
    history: &mut ObservationHistory,
) -> Result<Vec<Finding>, PerceptionError> {
    let mut findings = Vec::new();
    for obs in observations {
        let Some(stack) = prev.stacks.get(&obs.owner) else {
            continue;
        };
        let filled: Vec<Option<BlockId>> = obs
            .slots
            .iter()
            .enumerate()
            .map(|(i, s)| s.clone().or_else(|| history.recall(&obs.owner, i).cloned()))
            .collect();
        let mut seen = BTreeSet::new();
        for b in filled.iter().flatten() {
            if !seen.insert(b) {
                return Err(PerceptionError::InconsistentHistory {
                    owner: obs.owner.clone(),
                    detail: format!("{b} resolves to two slots"),
                });
            }
        }
        history.push(&obs.owner, obs.slots.clone());

        let report = |history: &mut ObservationHistory, findings: &mut Vec<Finding>, m: MismatchReport| {
            let key = (m.owner.clone(), m.slot, m.block_id.clone());
            if history.reported.insert(key) {
                findings.push(Finding::Mismatch(m));
            }
        };

        for (slot, placed) in stack.placed.iter().enumerate() {
            if let Some(Some(seen)) = filled.get(slot) {
                if seen != placed {
                    report(
                        history,
                        &mut findings,
                        MismatchReport {
                            owner: obs.owner.clone(),
                            slot,
                            block_id: Some(seen.clone()),
                            expected: Some(stack.pattern[slot]),
                            detail: format!("slot {slot} holds {placed} but {seen} was observed"),
                        },
                    );
                }
            }
        }

        let mut next = stack.placed.len();
        while let Some(Some(block)) = filled.get(next) {
            let expected = stack.pattern.get(next).copied();
            let verdict = match (prev.block(block), expected) {
                (None, _) => Err(format!("{block} is not in the catalog")),
                (Some(_), None) => Err(format!("{block} sits above a complete stack")),
                (Some(rec), Some(want)) => {
                    if prev.serves(block) != Some(&obs.owner) {
                        Err(format!("{block} belongs to another stack"))
                    } else if rec.state != ManipulationState::Working {
                        Err(format!("{block} was placed while {:?}", rec.state))
                    } else if rec.color != want {
                        Err(format!("{block} is {} but slot {next} needs {want}", rec.color))
                    } else {
                        Ok(())
                    }
                }
            };
            match verdict {
                Ok(()) => {
                    findings.push(Finding::Placed {
                        block_id: block.clone(),
                        owner: obs.owner.clone(),
                        slot: next,
                    });
                    next += 1;
                }
                Err(detail) => {
                    report(
                        history,
                        &mut findings,
                        MismatchReport {
                            owner: obs.owner.clone(),
                            slot: next,
                            block_id: Some(block.clone()),
                            expected,
                            detail,
                        },
                    );
                    break;
                }
            }
        }
    }
    Ok(findings)
}
