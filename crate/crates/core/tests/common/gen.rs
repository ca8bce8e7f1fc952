//! Proptest strategies for protocol messages.

use cohrt_core::ids::{AgentId, BlockId, ParticipantId, PieceId, TagId};
use cohrt_core::perception::{Detection, DetectionFrame};
use cohrt_core::protocol::{
    ActionEnd, ActionStart, AllocationRequest, AllocationResponse, ClientRole, ConfigPush, ErrorBody, Heartbeat, Hello,
    Message, Payload, PuzzleMove, ReleaseBlock, RobotStop, SessionEnd, StartTask, StateUpdate,
};
use cohrt_core::world_model::{
    minimal_config, reference_config, ActionKind, ActionOutcome, DenyReason, PieceSource, ReleaseCause, Timing,
};
use proptest::collection::{btree_map, vec};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::walk::random_state;

pub fn arb_text() -> impl Strategy<Value = String> {
    prop_oneof!["[A-Za-z0-9_-]{1,12}", "\\PC{1,10}", "(?s).{0,24}",]
}

pub fn arb_name() -> impl Strategy<Value = String> {
    prop_oneof!["[A-Za-z0-9_-]{1,12}", "\\PC{1,10}"]
}

pub fn arb_participant() -> impl Strategy<Value = ParticipantId> {
    arb_name().prop_map(ParticipantId)
}

pub fn arb_block() -> impl Strategy<Value = BlockId> {
    arb_name().prop_map(BlockId)
}

pub fn arb_agent() -> impl Strategy<Value = AgentId> {
    prop_oneof![Just(AgentId::Robot), arb_participant().prop_map(AgentId::Human)]
}

pub fn arb_role() -> impl Strategy<Value = ClientRole> {
    prop_oneof![
        Just(ClientRole::Robot),
        arb_participant().prop_map(|participant| ClientRole::Human { participant }),
        Just(ClientRole::Perception),
        Just(ClientRole::Observer),
    ]
}

pub fn arb_deny() -> impl Strategy<Value = DenyReason> {
    prop_oneof![
        Just(DenyReason::AlreadyClaimed),
        Just(DenyReason::NotTopmost),
        Just(DenyReason::WrongPhase),
        Just(DenyReason::UnknownBlock),
        Just(DenyReason::NotPermitted),
    ]
}

pub fn arb_cause() -> impl Strategy<Value = ReleaseCause> {
    prop_oneof![
        Just(ReleaseCause::Explicit),
        Just(ReleaseCause::Timeout),
        Just(ReleaseCause::ClientLost),
        Just(ReleaseCause::Fault),
    ]
}

pub fn arb_action() -> impl Strategy<Value = ActionKind> {
    prop_oneof![Just(ActionKind::PickPlace), Just(ActionKind::FetchPlace)]
}

pub fn arb_outcome() -> impl Strategy<Value = ActionOutcome> {
    prop_oneof![
        Just(ActionOutcome::Completed),
        Just(ActionOutcome::Faulted),
        Just(ActionOutcome::Aborted),
    ]
}

fn arb_coord() -> impl Strategy<Value = f64> {
    prop_oneof![
        -5.0f64..5.0,
        proptest::num::f64::NORMAL | proptest::num::f64::SUBNORMAL | proptest::num::f64::ZERO,
    ]
}

pub fn arb_detection_frame() -> impl Strategy<Value = DetectionFrame> {
    (
        any::<u64>(),
        btree_map(any::<u32>(), (arb_coord(), arb_coord(), arb_coord(), arb_name()), 0..8),
    )
        .prop_map(|(ts_ms, tags)| DetectionFrame {
            ts_ms,
            detections: tags
                .into_iter()
                .map(|(tag, (x, y, z, station_id))| Detection {
                    tag_id: TagId(tag),
                    position: [x, y, z.abs()],
                    station_id,
                })
                .collect(),
        })
}

pub fn arb_config_push() -> impl Strategy<Value = ConfigPush> {
    (any::<u64>(), any::<bool>(), 0u64..100_000, 0u64..100_000).prop_map(|(seed, minimal, pick, place)| {
        let mut config = if minimal {
            minimal_config(seed)
        } else {
            reference_config(seed)
        };
        config.timing = Timing {
            robot_pick_ms: pick,
            robot_place_ms: place,
        };
        ConfigPush { config }
    })
}

pub fn arb_state_update() -> impl Strategy<Value = StateUpdate> {
    (any::<u64>(), 0usize..80).prop_map(|(seed, steps)| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let s = random_state(&mut rng, &reference_config(seed), steps);
        StateUpdate { state: s.snapshot() }
    })
}

pub fn arb_piece_source() -> impl Strategy<Value = PieceSource> {
    prop_oneof![
        arb_name().prop_map(|p| PieceSource::Tray { piece: PieceId(p) }),
        any::<u32>().prop_map(|i| PieceSource::Slot { index: i as usize }),
    ]
}

pub fn arb_payload() -> impl Strategy<Value = Payload> {
    prop_oneof![
        (any::<u32>(), arb_role()).prop_map(|(version, role)| Payload::Hello(Hello { version, role })),
        arb_config_push().prop_map(Payload::ConfigPush),
        arb_participant().prop_map(|participant| Payload::StartTask(StartTask { participant })),
        (arb_agent(), arb_block())
            .prop_map(|(requester, block_id)| Payload::AllocationRequest(AllocationRequest { requester, block_id })),
        (arb_agent(), arb_block(), proptest::option::of(arb_deny()), any::<u64>()).prop_map(
            |(requester, block_id, reason, receipt)| {
                Payload::AllocationResponse(AllocationResponse {
                    requester,
                    block_id,
                    granted: reason.is_none(),
                    reason,
                    receipt,
                })
            }
        ),
        (arb_agent(), arb_block(), proptest::option::of(arb_cause()))
            .prop_map(|(agent, block_id, cause)| Payload::ReleaseBlock(ReleaseBlock { agent, block_id, cause })),
        (arb_participant(), arb_piece_source(), any::<u32>()).prop_map(|(participant, from, to)| {
            Payload::PuzzleMove(PuzzleMove {
                participant,
                from,
                to_slot: to as usize,
            })
        }),
        arb_state_update().prop_map(Payload::StateUpdate),
        arb_detection_frame().prop_map(Payload::DetectionFrame),
        (arb_agent(), arb_action(), proptest::option::of(arb_block())).prop_map(|(agent, action, block_id)| {
            Payload::ActionStart(ActionStart {
                agent,
                action,
                block_id,
            })
        }),
        (
            arb_agent(),
            arb_action(),
            proptest::option::of(arb_block()),
            arb_outcome(),
            proptest::option::of(arb_participant())
        )
            .prop_map(|(agent, action, block_id, outcome, placed_on)| {
                Payload::ActionEnd(ActionEnd {
                    agent,
                    action,
                    block_id,
                    outcome,
                    placed_on,
                })
            }),
        (any::<bool>(), arb_text()).prop_map(|(done, reason)| Payload::SessionEnd(SessionEnd { done, reason })),
        (arb_name(), arb_text()).prop_map(|(code, message)| Payload::Error(ErrorBody { code, message })),
        Just(Payload::Heartbeat(Heartbeat {})),
        (arb_text(), btree_map(arb_participant(), any::<u32>(), 0..4))
            .prop_map(|(reason, contributed)| Payload::RobotStop(RobotStop { reason, contributed })),
    ]
}

pub fn arb_message() -> impl Strategy<Value = Message> {
    (any::<u64>(), any::<u64>(), arb_payload()).prop_map(|(seq, ts, payload)| Message::new(seq, ts, payload))
}

/// A batch of generated messages, deterministic for a given seed.
pub fn sample_messages(n: usize, seed: u64) -> Vec<Message> {
    use proptest::strategy::ValueTree;
    use proptest::test_runner::{Config, RngAlgorithm, TestRng, TestRunner};
    let mut bytes = [0u8; 32];
    bytes[..8].copy_from_slice(&seed.to_le_bytes());
    let rng = TestRng::from_seed(RngAlgorithm::ChaCha, &bytes);
    let mut runner = TestRunner::new_with_rng(Config::default(), rng);
    let strat = arb_message();
    (0..n)
        .map(|_| strat.new_tree(&mut runner).expect("generate").current())
        .collect()
}

/// Vectors of messages for stream tests.
pub fn arb_messages() -> impl Strategy<Value = Vec<Message>> {
    vec(arb_message(), 0..6)
}
