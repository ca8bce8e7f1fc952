//! Ground-truth stacks and a synthetic camera that renders them as noisy,
//! partially occluded detection frames.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};

use super::{Detection, DetectionFrame, SceneModel};
use crate::ids::{BlockId, ParticipantId, TagId};

/// Where every block physically is on the stacks.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct GroundTruth {
    stacks: BTreeMap<ParticipantId, Vec<BlockId>>,
}

impl GroundTruth {
    pub fn place(&mut self, owner: &ParticipantId, block: BlockId) {
        self.stacks.entry(owner.clone()).or_default().push(block);
    }

    pub fn stack(&self, owner: &ParticipantId) -> &[BlockId] {
        self.stacks.get(owner).map_or(&[], Vec::as_slice)
    }
}

#[derive(Debug, Clone)]
pub struct SyntheticCamera {
    scene: SceneModel,
    tag_of: BTreeMap<BlockId, TagId>,
    noise: Normal<f64>,
    pub max_occluded: usize,
}

impl SyntheticCamera {
    pub fn new(scene: SceneModel, noise_sigma_m: f64, max_occluded: usize) -> Self {
        let tag_of = scene.tags.iter().map(|(t, b)| (b.clone(), *t)).collect();
        SyntheticCamera {
            scene,
            tag_of,
            noise: Normal::new(0.0, noise_sigma_m.max(0.0)).expect("finite sigma"),
            max_occluded,
        }
    }

    pub fn scene(&self) -> &SceneModel {
        &self.scene
    }

    /// Renders every stack; up to `max_occluded` non-top blocks per stack are hidden.
    /// Returns the frame and the hidden blocks.
    pub fn render<R: Rng>(&self, truth: &GroundTruth, ts_ms: u64, rng: &mut R) -> (DetectionFrame, BTreeSet<BlockId>) {
        let mut detections = Vec::new();
        let mut hidden = BTreeSet::new();
        for base in &self.scene.bases {
            let stack = truth.stack(&base.owner);
            let below_top = stack.len().saturating_sub(1);
            let k = rng.gen_range(0..=self.max_occluded.min(below_top));
            let hide: BTreeSet<usize> = sample(rng, below_top.max(1), k).into_iter().collect();
            for (slot, block) in stack.iter().enumerate() {
                if hide.contains(&slot) {
                    hidden.insert(block.clone());
                    continue;
                }
                let Some(tag) = self.tag_of.get(block) else {
                    continue;
                };
                let z = base.position[2] + slot as f64 * self.scene.block_height_m + self.noise.sample(rng);
                detections.push(Detection {
                    tag_id: *tag,
                    position: [
                        base.position[0] + self.noise.sample(rng),
                        base.position[1] + self.noise.sample(rng),
                        z.max(0.0),
                    ],
                    station_id: base.station_id.clone(),
                });
            }
        }
        (DetectionFrame { ts_ms, detections }, hidden)
    }
}
