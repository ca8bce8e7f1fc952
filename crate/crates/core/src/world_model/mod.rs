//! Authoritative task state: block, stack and puzzle records, the legal
//! transitions between them, and the completion predicate.
//!
//! Blocks move `Unstacked -> Working -> Stacked`, with `Working -> Unstacked`
//! as the release edge. Only the topmost unstacked block of a pile can be
//! claimed, and a participant stacks only after their puzzle is solved.

pub mod config;
pub mod event;
pub mod state;
pub mod transition;

pub use config::{
    minimal_config, reference_config, CatalogEntry, ConfigError, Geometry, InventoryAccess, InventorySpec, PuzzleSpec,
    SessionOptions, StackBase, StackSpec, TaskConfig, Timing,
};
pub use event::{ActionKind, ActionOutcome, DenyReason, EventBody, PieceSource, ReleaseCause, SessionEvent};
pub use state::{
    is_session_done, new_session, new_session_shared, topmost_unstacked, BlockRecord, ManipulationState, Phase,
    PuzzleRecord, StackRecord, StackState, StateSnapshot, WorldState,
};
pub use transition::{apply_transition, check_allocation, move_piece, MoveError, TransitionError};
