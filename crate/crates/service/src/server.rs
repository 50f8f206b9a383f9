//! Socket front ends. TCP carries newline-delimited JSON; the WebSocket
//! route carries one JSON message per text frame. Both share one
//! connection loop.

use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;
use std::time::Duration;

use axum::extract::ws::{Message, WebSocket, WebSocketUpgrade};
use axum::extract::State;
use axum::response::Response;
use axum::routing::get;
use axum::Router;
use futures::{Sink, SinkExt, Stream, StreamExt};
use tokio::io::{AsyncBufReadExt, AsyncWriteExt, BufReader};
use tokio::net::{TcpListener, TcpStream};
use tokio::time::MissedTickBehavior;
use waggle_core::controllers::IlcGains;

use crate::error::{Result, ServiceError};
use crate::protocol::{encode, parse_client, ClientMessage, ServerMessage};
use crate::session::{Session, SessionArchive, SessionConfig, Status};

/// State shared by all connections.
#[derive(Debug, Default)]
pub struct Hub {
    next_id: AtomicU64,
    /// Closed sessions are archived to `<archive_dir>/session_<id>`.
    pub archive_dir: Option<PathBuf>,
}

impl Hub {
    pub fn new(archive_dir: Option<PathBuf>) -> Arc<Self> {
        Arc::new(Self {
            next_id: AtomicU64::new(1),
            archive_dir,
        })
    }

    fn next_id(&self) -> u64 {
        self.next_id.fetch_add(1, Ordering::Relaxed)
    }
}

async fn send<W>(out: &mut W, msg: &ServerMessage) -> Result<()>
where
    W: Sink<String> + Unpin,
{
    out.send(encode(msg)).await.map_err(|_| ServiceError::Closed)
}

async fn fault<W>(out: &mut W, err: &ServiceError, t: Option<f64>) -> Result<()>
where
    W: Sink<String> + Unpin,
{
    send(out, &ServerMessage::fault(err.code(), err.to_string(), t)).await
}

/// Drives one client. The first line must be `hello`. The session ticks on
/// its own clock until `bye` or end of input, then it is archived.
///
/// Returns `None` when the handshake failed.
pub async fn run_connection<R, W>(hub: Arc<Hub>, mut input: R, mut out: W) -> Result<Option<SessionArchive>>
where
    R: Stream<Item = std::io::Result<String>> + Unpin,
    W: Sink<String> + Unpin,
{
    let first = match input.next().await {
        Some(line) => line?,
        None => return Ok(None),
    };
    let cfg = match parse_client(&first) {
        Ok(ClientMessage::Hello { config }) => SessionConfig::from_wire(&config),
        Ok(other) => Err(ServiceError::Protocol(format!("expected hello, got {other:?}"))),
        Err(e) => Err(e),
    };
    let cfg = match cfg {
        Ok(c) => c,
        Err(e) => {
            fault(&mut out, &e, None).await?;
            return Ok(None);
        }
    };
    let id = hub.next_id();
    let mut session = Session::open(id, cfg)?;
    let dt = session.config().dt_tick;
    send(&mut out, &ServerMessage::Welcome { session_id: id, dt_tick: dt }).await?;
    log::info!("session {id} opened, dt_tick = {dt}");

    let mut clock = tokio::time::interval(Duration::from_secs_f64(dt));
    clock.set_missed_tick_behavior(MissedTickBehavior::Burst);
    loop {
        tokio::select! {
            line = input.next() => {
                let line = match line {
                    None => break,
                    Some(l) => l?,
                };
                if line.trim().is_empty() {
                    continue;
                }
                let t = session.ticks() as f64 * dt;
                let res = match parse_client(&line) {
                    Ok(ClientMessage::Bye) => break,
                    Ok(ClientMessage::Hp { t, x, y }) => session.ingest(t, x, y).map(|_| ()),
                    Ok(ClientMessage::SetGains { kp, kv, ks }) => {
                        IlcGains::new(kp, kv, ks).map_err(ServiceError::from).and_then(|g| session.set_gains(g))
                    }
                    Ok(ClientMessage::SoloUpload { samples }) => session.upload_solo(&samples),
                    Ok(ClientMessage::Hello { .. }) => Err(ServiceError::Protocol("session already open".into())),
                    Err(e) => Err(e),
                };
                if let Err(e) = res {
                    fault(&mut out, &e, Some(t)).await?;
                }
            }
            _ = clock.tick(), if *session.status() == Status::Open => {
                match session.tick() {
                    Ok(o) => {
                        send(&mut out, &o.vp_message()).await?;
                        send(&mut out, &o.metrics.to_message()).await?;
                    }
                    Err(e) => {
                        let t = match session.status() {
                            Status::Faulted(f) => f.t,
                            _ => None,
                        };
                        fault(&mut out, &e, t).await?;
                    }
                }
            }
        }
    }
    let archive = session.close()?;
    if let Some(dir) = &hub.archive_dir {
        archive.save(&dir.join(format!("session_{id}")))?;
    }
    log::info!("session {id} closed after {} ticks", archive.ticks);
    Ok(Some(archive))
}

/// Serves one TCP client.
pub async fn handle_tcp(hub: Arc<Hub>, stream: TcpStream) -> Result<Option<SessionArchive>> {
    let (rd, wr) = stream.into_split();
    let lines = BufReader::new(rd).lines();
    let input = Box::pin(futures::stream::unfold(lines, |mut l| async move {
        match l.next_line().await {
            Ok(Some(s)) => Some((Ok(s), l)),
            Ok(None) => None,
            Err(e) => Some((Err(e), l)),
        }
    }));
    let out = Box::pin(futures::sink::unfold(wr, |mut w, msg: String| async move {
        w.write_all(msg.as_bytes()).await?;
        w.write_all(b"\n").await?;
        w.flush().await?;
        Ok::<_, std::io::Error>(w)
    }));
    run_connection(hub, input, out).await
}

pub async fn serve_tcp(listener: TcpListener, hub: Arc<Hub>) -> Result<()> {
    loop {
        let (stream, peer) = listener.accept().await?;
        let hub = hub.clone();
        tokio::spawn(async move {
            if let Err(e) = handle_tcp(hub, stream).await {
                log::warn!("connection from {peer} ended: {e}");
            }
        });
    }
}

async fn handle_ws(hub: Arc<Hub>, socket: WebSocket) {
    let (tx, rx) = socket.split();
    let input = rx.filter_map(|m| async move {
        match m {
            Ok(Message::Text(t)) => Some(Ok(t.as_str().to_string())),
            Ok(Message::Close(_)) => None,
            Ok(_) => None,
            Err(e) => Some(Err(std::io::Error::other(e))),
        }
    });
    let out = tx.with(|s: String| async move { Ok::<_, axum::Error>(Message::text(s)) });
    if let Err(e) = run_connection(hub, Box::pin(input), Box::pin(out)).await {
        log::warn!("websocket session ended: {e}");
    }
}

async fn ws_route(State(hub): State<Arc<Hub>>, ws: WebSocketUpgrade) -> Response {
    ws.on_upgrade(move |socket| handle_ws(hub, socket))
}

/// Router with the WebSocket endpoint at `/ws`.
pub fn router(hub: Arc<Hub>) -> Router {
    Router::new().route("/ws", get(ws_route)).with_state(hub)
}

pub async fn serve_ws(listener: TcpListener, hub: Arc<Hub>) -> Result<()> {
    axum::serve(listener, router(hub)).await?;
    Ok(())
}
