use serde::{Deserialize, Serialize};

use crate::ids::{BlockId, ParticipantId};
use crate::world_model::WorldState;

/// Abstract pick-and-place motion: fetch, lift, transfer above the stack, place.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WaypointPlan {
    pub block_id: BlockId,
    pub beneficiary: ParticipantId,
    /// Stack length the plan was computed for.
    pub stack_len: usize,
    pub fetch: [f64; 3],
    pub lift: [f64; 3],
    pub transfer: [f64; 3],
    pub place: [f64; 3],
}

impl WaypointPlan {
    pub fn waypoints(&self) -> [[f64; 3]; 4] {
        [self.fetch, self.lift, self.transfer, self.place]
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum PlanError {
    #[error("stack of {owner} has {actual} blocks, plan expected {expected}")]
    StaleState {
        owner: ParticipantId,
        expected: usize,
        actual: usize,
    },
    #[error("unknown block {0}")]
    UnknownBlock(BlockId),
    #[error("no stack base for {0}")]
    UnknownStack(ParticipantId),
}

/// Plans the motion for stacking `block` on `beneficiary`'s stack, which is
/// expected to hold `expected_len` blocks.
pub fn plan_waypoints(
    world: &WorldState,
    beneficiary: &ParticipantId,
    block: &BlockId,
    expected_len: usize,
) -> Result<WaypointPlan, PlanError> {
    let rec = world
        .block(block)
        .ok_or_else(|| PlanError::UnknownBlock(block.clone()))?;
    let stack = world
        .stacks
        .get(beneficiary)
        .ok_or_else(|| PlanError::UnknownStack(beneficiary.clone()))?;
    if stack.placed.len() != expected_len {
        return Err(PlanError::StaleState {
            owner: beneficiary.clone(),
            expected: expected_len,
            actual: stack.placed.len(),
        });
    }
    let geometry = &world.config.geometry;
    let base = geometry
        .bases(&world.config.participants)
        .into_iter()
        .find(|b| b.owner == *beneficiary)
        .ok_or_else(|| PlanError::UnknownStack(beneficiary.clone()))?;
    let fetch = world
        .config
        .inventory(&rec.inventory)
        .map(|i| i.position)
        .unwrap_or([0.0; 3]);
    let h = geometry.block_height_m;
    let up = geometry.transfer_height_m;
    let place = [
        base.position[0],
        base.position[1],
        base.position[2] + expected_len as f64 * h,
    ];
    Ok(WaypointPlan {
        block_id: block.clone(),
        beneficiary: beneficiary.clone(),
        stack_len: expected_len,
        fetch,
        lift: [fetch[0], fetch[1], fetch[2] + up],
        transfer: [place[0], place[1], place[2] + up],
        place,
    })
}
