//! Async front ends. A single task owns the `Coordinator`; connection tasks
//! only decode and encode frames and forward them over channels.

use std::collections::BTreeMap;
use std::net::SocketAddr;
use std::path::PathBuf;
use std::time::{Duration, Instant};

use futures_util::{SinkExt, StreamExt};
use tokio::io::{AsyncBufReadExt, AsyncReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};
use tokio::sync::{mpsc, oneshot};
use tokio::task::JoinHandle;
use tokio_tungstenite::tungstenite::handshake::server::{ErrorResponse, Request, Response};
use tokio_tungstenite::tungstenite::http::StatusCode;
use tokio_tungstenite::tungstenite::Message as WsMessage;

use super::{dispatch, ConnId, Coordinator, SessionLog, SessionOutcome, Transport};
use crate::protocol::{decode_message, DecodeError, Message};
use crate::world_model::{ConfigError, TaskConfig};

pub const DEFAULT_TCP_PORT: u16 = 7450;
pub const DEFAULT_WS_PORT: u16 = 7451;
pub const WS_PATH: &str = "/ws";
const MAX_LINE_BYTES: usize = 1 << 20;

#[derive(Debug, Clone)]
pub struct ServerOptions {
    pub tcp_addr: SocketAddr,
    pub ws_addr: SocketAddr,
    pub tick_ms: u64,
    /// Period of the built-in synthetic camera, if enabled.
    pub synthetic_perception_ms: Option<u64>,
    pub log_out: Option<PathBuf>,
}

impl Default for ServerOptions {
    fn default() -> Self {
        ServerOptions {
            tcp_addr: SocketAddr::from(([0, 0, 0, 0], DEFAULT_TCP_PORT)),
            ws_addr: SocketAddr::from(([0, 0, 0, 0], DEFAULT_WS_PORT)),
            tick_ms: 50,
            synthetic_perception_ms: None,
            log_out: None,
        }
    }
}

#[derive(Debug, thiserror::Error)]
pub enum ServerError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("server task failed: {0}")]
    Join(String),
}

#[derive(Debug)]
pub struct ServerSummary {
    pub outcome: SessionOutcome,
    pub log: SessionLog,
}

enum Event {
    Open(ConnId, mpsc::UnboundedSender<Vec<u8>>),
    Frame(ConnId, Box<Result<Message, DecodeError>>),
    Closed(ConnId),
    Shutdown(String),
}

struct Senders(BTreeMap<ConnId, mpsc::UnboundedSender<Vec<u8>>>);

impl Transport for Senders {
    fn send_frame(&mut self, to: ConnId, frame: &[u8]) -> Result<(), String> {
        let tx = self.0.get(&to).ok_or_else(|| format!("unknown connection {to}"))?;
        tx.send(frame.to_vec()).map_err(|_| format!("connection {to} closed"))
    }
}

pub struct ServerHandle {
    pub tcp_addr: SocketAddr,
    pub ws_addr: SocketAddr,
    events: mpsc::UnboundedSender<Event>,
    done: Option<oneshot::Receiver<ServerSummary>>,
    tasks: Vec<JoinHandle<()>>,
}

impl ServerHandle {
    /// Ends the session early; it is logged as stopped.
    pub fn shutdown(&self, reason: &str) {
        let _ = self.events.send(Event::Shutdown(reason.to_owned()));
    }

    /// Stops the session with reason `interrupted` when the process receives Ctrl-C.
    pub fn shutdown_on_ctrl_c(&self) {
        let events = self.events.clone();
        tokio::spawn(async move {
            if tokio::signal::ctrl_c().await.is_ok() {
                let _ = events.send(Event::Shutdown("interrupted".to_owned()));
            }
        });
    }

    /// Waits for the session to end and returns its outcome and log.
    pub async fn wait(mut self) -> Result<ServerSummary, ServerError> {
        let done = self.done.take().expect("wait called once");
        let summary = done.await.map_err(|e| ServerError::Join(e.to_string()));
        for t in &self.tasks {
            t.abort();
        }
        summary
    }
}

/// Binds both listeners and starts the session.
pub async fn start_server(config: TaskConfig, opts: ServerOptions) -> Result<ServerHandle, ServerError> {
    let mut coord = Coordinator::new(config, 0)?;
    if let Some(period) = opts.synthetic_perception_ms {
        coord.enable_synthetic_perception(period, 0.002);
    }
    let tcp = TcpListener::bind(opts.tcp_addr).await?;
    let ws = TcpListener::bind(opts.ws_addr).await?;
    let tcp_addr = tcp.local_addr()?;
    let ws_addr = ws.local_addr()?;
    tracing::info!(%tcp_addr, %ws_addr, "listening");

    let (tx, rx) = mpsc::unbounded_channel();
    let (done_tx, done_rx) = oneshot::channel();
    let ids = std::sync::Arc::new(std::sync::atomic::AtomicU64::new(1));
    let tasks = vec![
        tokio::spawn(accept_tcp(tcp, tx.clone(), ids.clone())),
        tokio::spawn(accept_ws(ws, tx.clone(), ids)),
        tokio::spawn(async move {
            let summary = run_coordinator(coord, rx, opts.tick_ms, opts.log_out).await;
            let _ = done_tx.send(summary);
        }),
    ];
    Ok(ServerHandle {
        tcp_addr,
        ws_addr,
        events: tx,
        done: Some(done_rx),
        tasks,
    })
}

async fn run_coordinator(
    mut coord: Coordinator,
    mut rx: mpsc::UnboundedReceiver<Event>,
    tick_ms: u64,
    log_out: Option<PathBuf>,
) -> ServerSummary {
    let start = Instant::now();
    let mut senders = Senders(BTreeMap::new());
    let mut ticker = tokio::time::interval(Duration::from_millis(tick_ms.max(1)));
    ticker.set_missed_tick_behavior(tokio::time::MissedTickBehavior::Delay);
    while !coord.is_finished() {
        let outs = tokio::select! {
            ev = rx.recv() => {
                let now = start.elapsed().as_millis() as u64;
                match ev {
                    Some(Event::Open(conn, tx)) => {
                        senders.0.insert(conn, tx);
                        coord.connect(conn);
                        Vec::new()
                    }
                    Some(Event::Frame(conn, frame)) => match *frame {
                        Ok(msg) => coord.handle(conn, msg, now),
                        Err(e) => {
                            tracing::warn!(conn, "bad frame: {e}");
                            coord.reject(conn, "decode_error", e.to_string())
                        }
                    },
                    Some(Event::Closed(conn)) => {
                        senders.0.remove(&conn);
                        coord.disconnect(conn, now)
                    }
                    Some(Event::Shutdown(reason)) => {
                        coord.finish(SessionOutcome::Stopped(reason.clone()), &reason)
                    }
                    None => coord.finish(SessionOutcome::Stopped("listeners closed".into()), "listeners closed"),
                }
            }
            _ = ticker.tick() => coord.tick(start.elapsed().as_millis() as u64),
        };
        dispatch(outs, &mut senders);
    }
    let outcome = coord
        .outcome()
        .cloned()
        .unwrap_or(SessionOutcome::Stopped("unknown".into()));
    let log = coord.into_log();
    if let Some(path) = log_out {
        match log.write_to(&path) {
            Ok(()) => tracing::info!(path = %path.display(), "session log written"),
            Err(e) => tracing::error!(path = %path.display(), "failed to write session log: {e}"),
        }
    }
    tracing::info!(?outcome, "session ended");
    ServerSummary { outcome, log }
}

async fn accept_tcp(
    listener: TcpListener,
    events: mpsc::UnboundedSender<Event>,
    ids: std::sync::Arc<std::sync::atomic::AtomicU64>,
) {
    loop {
        let Ok((stream, peer)) = listener.accept().await else {
            continue;
        };
        let conn = ids.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        tracing::debug!(conn, %peer, "tcp client connected");
        tokio::spawn(serve_tcp(conn, stream, events.clone()));
    }
}

async fn serve_tcp(conn: ConnId, stream: TcpStream, events: mpsc::UnboundedSender<Event>) {
    let (read, mut write) = stream.into_split();
    let (tx, mut rx) = mpsc::unbounded_channel::<Vec<u8>>();
    if events.send(Event::Open(conn, tx)).is_err() {
        return;
    }
    let writer = tokio::spawn(async move {
        while let Some(frame) = rx.recv().await {
            if write.write_all(&frame).await.is_err() {
                break;
            }
        }
        let _ = write.shutdown().await;
    });
    let mut reader = BufReader::new(read);
    let mut line = Vec::new();
    loop {
        line.clear();
        match (&mut reader)
            .take(MAX_LINE_BYTES as u64)
            .read_until(b'\n', &mut line)
            .await
        {
            Ok(0) => break,
            Ok(_) => {
                if line.last() != Some(&b'\n') && line.len() >= MAX_LINE_BYTES {
                    let _ = events.send(Event::Frame(conn, Box::new(Err(DecodeError::Truncated))));
                    break;
                }
                let decoded = decode_message(&line);
                let eof = line.last() != Some(&b'\n');
                if events.send(Event::Frame(conn, Box::new(decoded))).is_err() || eof {
                    break;
                }
            }
            Err(_) => break,
        }
    }
    let _ = events.send(Event::Closed(conn));
    let _ = writer.await;
}

async fn accept_ws(
    listener: TcpListener,
    events: mpsc::UnboundedSender<Event>,
    ids: std::sync::Arc<std::sync::atomic::AtomicU64>,
) {
    loop {
        let Ok((stream, peer)) = listener.accept().await else {
            continue;
        };
        let conn = ids.fetch_add(1, std::sync::atomic::Ordering::Relaxed);
        tracing::debug!(conn, %peer, "websocket client connected");
        tokio::spawn(serve_ws(conn, stream, events.clone()));
    }
}

#[allow(clippy::result_large_err)]
fn check_path(req: &Request, resp: Response) -> Result<Response, ErrorResponse> {
    if req.uri().path() == WS_PATH {
        Ok(resp)
    } else {
        let mut err = ErrorResponse::new(Some(format!("no endpoint at {}", req.uri().path())));
        *err.status_mut() = StatusCode::NOT_FOUND;
        Err(err)
    }
}

async fn serve_ws(conn: ConnId, stream: TcpStream, events: mpsc::UnboundedSender<Event>) {
    let ws = match tokio_tungstenite::accept_hdr_async(stream, check_path).await {
        Ok(ws) => ws,
        Err(e) => {
            tracing::debug!(conn, "websocket handshake failed: {e}");
            return;
        }
    };
    let (mut sink, mut source) = ws.split();
    let (tx, mut rx) = mpsc::unbounded_channel::<Vec<u8>>();
    if events.send(Event::Open(conn, tx)).is_err() {
        return;
    }
    let writer = tokio::spawn(async move {
        while let Some(frame) = rx.recv().await {
            let text = String::from_utf8_lossy(&frame).into_owned();
            if sink.send(WsMessage::Text(text)).await.is_err() {
                break;
            }
        }
        let _ = sink.close().await;
    });
    while let Some(item) = source.next().await {
        let bytes = match item {
            Ok(WsMessage::Text(t)) => t.into_bytes(),
            Ok(WsMessage::Binary(b)) => b,
            Ok(WsMessage::Close(_)) | Err(_) => break,
            Ok(_) => continue,
        };
        let mut bytes = bytes;
        if bytes.last() != Some(&b'\n') {
            bytes.push(b'\n');
        }
        if events
            .send(Event::Frame(conn, Box::new(decode_message(&bytes))))
            .is_err()
        {
            break;
        }
    }
    let _ = events.send(Event::Closed(conn));
    let _ = writer.await;
}
