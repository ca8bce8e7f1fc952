//! Drives an `Agent` over a real TCP connection in wall-clock time.

use std::collections::BTreeMap;
use std::time::Duration;

use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::TcpStream;
use tokio::time::Instant;

use super::{Agent, AgentCtx};
use crate::protocol::{decode_message, encode_message, DecodeError, EncodeError, Sequencer};

#[derive(Debug, thiserror::Error)]
pub enum LiveError {
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("server sent an invalid frame: {0}")]
    Decode(#[from] DecodeError),
    #[error("could not encode an outgoing frame: {0}")]
    Encode(#[from] EncodeError),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LiveOutcome {
    SessionEnded,
    ServerClosed,
}

/// Connects to `addr` and runs `agent` until the session ends or the server
/// closes the connection.
pub async fn run_live<A: Agent>(agent: &mut A, addr: &str) -> Result<LiveOutcome, LiveError> {
    let stream = TcpStream::connect(addr).await?;
    let (read, mut write) = stream.into_split();
    let mut reader = BufReader::new(read);
    let start = Instant::now();
    let now_ms = || start.elapsed().as_millis() as u64;
    let mut seq = Sequencer::new();
    let mut timers: BTreeMap<(Instant, u64), u64> = BTreeMap::new();
    let mut timer_ids = 0u64;

    let mut ctx = AgentCtx::new(now_ms());
    agent.on_connect(&mut ctx);
    let mut line = Vec::new();
    loop {
        for payload in ctx.outbox.drain(..) {
            let frame = encode_message(&seq.stamp(ctx.now, payload))?;
            write.write_all(&frame).await?;
        }
        for (delay, token) in ctx.timers.drain(..) {
            timer_ids += 1;
            timers.insert((Instant::now() + Duration::from_millis(delay), timer_ids), token);
        }
        for effect in ctx.effects.drain(..) {
            tracing::debug!(?effect, "physical effect");
        }
        if agent.finished() {
            return Ok(LiveOutcome::SessionEnded);
        }
        let next_timer = timers.keys().next().copied();
        tokio::select! {
            read = reader.read_until(b'\n', &mut line) => {
                if read? == 0 {
                    return Ok(LiveOutcome::ServerClosed);
                }
                if line.last() != Some(&b'\n') {
                    return Ok(LiveOutcome::ServerClosed);
                }
                let msg = decode_message(&line);
                line.clear();
                let msg = msg?;
                ctx = AgentCtx::new(now_ms());
                agent.on_message(&msg, &mut ctx);
            }
            _ = async {
                match next_timer {
                    Some((at, _)) => tokio::time::sleep_until(at).await,
                    None => std::future::pending::<()>().await,
                }
            } => {
                let key = next_timer.expect("timer fired");
                let token = timers.remove(&key).expect("timer present");
                ctx = AgentCtx::new(now_ms());
                agent.on_timer(token, &mut ctx);
            }
        }
    }
}
