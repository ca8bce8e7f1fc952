//! Coordination server: arbitration, broadcast, session logging and the
//! network front ends (raw TCP and WebSocket) that feed it.

mod coordinator;
pub mod log;
pub mod net;

pub use coordinator::{ConnId, Coordinator, Outbound, SessionOutcome};
pub use log::{decode_event, digest_hex, encode_event, state_digest, LoadedLog, LogError, SessionLog};

use crate::protocol::encode_message;

/// Somewhere encoded frames can be delivered.
pub trait Transport {
    fn send_frame(&mut self, to: ConnId, frame: &[u8]) -> Result<(), String>;
}

#[derive(Debug, Default, Clone, PartialEq, Eq)]
pub struct DispatchReport {
    pub delivered: usize,
    pub failures: Vec<(ConnId, String)>,
}

/// Delivers every outbound message. A failing client is logged and skipped so
/// the remaining clients still receive their frames.
pub fn dispatch(outbounds: Vec<Outbound>, transport: &mut dyn Transport) -> DispatchReport {
    let mut report = DispatchReport::default();
    for ob in outbounds {
        let frame = match encode_message(&ob.msg) {
            Ok(f) => f,
            Err(e) => {
                tracing::error!(conn = ob.to, "failed to encode {}: {e}", ob.msg.kind().as_str());
                report.failures.push((ob.to, e.to_string()));
                continue;
            }
        };
        match transport.send_frame(ob.to, &frame) {
            Ok(()) => report.delivered += 1,
            Err(e) => {
                tracing::warn!(conn = ob.to, "send failed: {e}");
                report.failures.push((ob.to, e));
            }
        }
    }
    report
}
