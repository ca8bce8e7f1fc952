//! Messages exchanged between the server, the robot agent, human clients and
//! perception sources, and their line-delimited JSON codec.

pub mod frame;
pub mod message;

pub use frame::{DecodeError, EncodeError};
pub use message::{
    decode_message, decode_stream, encode_message, ActionEnd, ActionStart, AllocationRequest, AllocationResponse,
    ClientRole, ConfigPush, ErrorBody, Heartbeat, Hello, Message, MessageKind, Payload, PuzzleMove, ReleaseBlock,
    RobotStop, SeqTracker, Sequencer, SessionEnd, StartTask, StateUpdate, PROTOCOL_VERSION,
};
